use std::path::{Path, PathBuf};
use std::process::Command;

use knotgp::synth::{generate, SynthSpec};
use knotgp::{fic_predict, FicState, LikelihoodKind};
use knotgp_cli::artifact::Artifact;
use knotgp_cli::experiment::{ExperimentResults, Status};
use knotgp_cli::table::{read_dataset, write_dataset};
use proptest::prelude::*;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_knotgp"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_csv(dir: &Path, n: usize) -> PathBuf {
    let p = dir.join("data.csv");
    write_dataset(&p, &generate(&SynthSpec::gaussian_1d(n, 1)).unwrap().data).unwrap();
    p
}

const QUICK: &str = r#"
[params]
signal_variance = 1.0
lengthscales = [1.0]
noise_variance = 0.5
mean = 0.0

[oat]
initial_knots = 3
max_knots = 6
t_min = 4
t_max = 8

[convergence]
max_iters = 150
"#;

#[test]
fn help_and_usage_exit_codes() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["fit"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["synth", "--kind", "nope", "--out", "/dev/null"]).0, 1);
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[data]\npath = \"absent.csv\"\n");
    let (code, _, err) = run(&["fit", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(code, 3, "{err}");
    let (code, _, _) = run(&["fit", "--config", s(&dir.path().join("absent.toml"))]);
    assert_eq!(code, 3);
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[data]\nsynth = { kind = \"gaussian_1d\", n = 20 }\nsplit = 2.0\n");
    assert_eq!(run(&["experiment", "--config", s(&cfg)]).0, 1);
}

#[test]
fn fixed_knots_fit_keeps_grid_and_refits_identically() {
    let dir = tempfile::tempdir().unwrap();
    synth_csv(dir.path(), 60);
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("models = [\"fixed_knots\"]\n[fixed_knots]\nk = 6\n[data]\npath = \"data.csv\"\n{QUICK}"),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["fit", "--config", s(&cfg), "--out", s(&a)]).0, 0);
    assert_eq!(run(&["fit", "--config", s(&cfg), "--out", s(&b)]).0, 0);
    let art = Artifact::load(&a.join("model.json")).unwrap();
    assert_eq!(art.knots, art.initial_knots);
    assert_eq!(art.knots.as_ref().unwrap().len(), 6);
    let bytes_a = std::fs::read(a.join("model.json")).unwrap();
    let bytes_b = std::fs::read(b.join("model.json")).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert!(a.join("model.timing.json").exists());
}

#[test]
fn predict_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    synth_csv(dir.path(), 60);
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("models = [\"oat_bo\"]\n[data]\npath = \"data.csv\"\n{QUICK}"),
    );
    assert_eq!(run(&["fit", "--config", s(&cfg), "--out", s(dir.path())]).0, 0);
    let input = write(dir.path(), "new.csv", "x1,y\n-1.0,0\n4.25,0\n30.0,0\n");
    let (code, stdout, err) = run(&[
        "predict",
        "--artifact",
        s(&dir.path().join("model.json")),
        "--input",
        s(&input),
    ]);
    assert_eq!(code, 0, "{err}");
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("mean,latent_sd,lower95,upper95"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);

    let art = Artifact::load(&dir.path().join("model.json")).unwrap();
    let x = knotgp::Points::from_scalars(&[-1.0, 4.25, 30.0]);
    let state = FicState::fit(&art.data, art.knots.as_ref().unwrap(), &art.params, &art.mean).unwrap();
    let want = fic_predict(&state, &x).unwrap();
    for (i, r) in rows.iter().enumerate() {
        assert!((r[0] - want.mean[i]).abs() < 1e-12);
        assert!((r[1] - want.latent_variance[i].sqrt()).abs() < 1e-12);
        assert!(r[2] < r[0] && r[0] < r[3]);
    }
    // far from the data the prediction falls back to the prior
    assert!((rows[2][0] - art.mean.value).abs() < 1e-6);
}

#[test]
fn poisson_bands_are_asymmetric() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.csv");
    let latent = dir.path().join("f.csv");
    let (code, _, err) = run(&[
        "synth", "--kind", "poisson_lgcp_1d", "--n", "40", "--seed", "2", "--out", s(&data), "--latent", s(&latent),
    ]);
    assert_eq!(code, 0, "{err}");
    let ds = read_dataset(&data, LikelihoodKind::Poisson).unwrap();
    assert!(ds.offsets.is_some());
    let cfg = write(
        dir.path(),
        "c.toml",
        "models = [\"oat_rs\"]\n[data]\npath = \"p.csv\"\nlikelihood = \"poisson\"\n[oat]\ninitial_knots = 3\nmax_knots = 5\nt_min = 3\nt_max = 5\n[convergence]\nmax_iters = 100\n",
    );
    assert_eq!(run(&["fit", "--config", s(&cfg), "--out", s(dir.path())]).0, 0);
    let out = dir.path().join("pred.csv");
    let (code, _, err) = run(&[
        "predict",
        "--artifact",
        s(&dir.path().join("model.json")),
        "--input",
        s(&data),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(out).unwrap();
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        assert!(v[2] > 0.0);
        // exp is convex, so the upper arm is the longer one
        assert!(v[3] - v[0] > v[0] - v[2]);
    }
}

#[test]
fn experiment_records_failures_and_self_aukl() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!(
            "models = [\"full\", \"simultaneous\", \"fixed_knots\"]\nsplit = 0.75\n[simultaneous]\nk = 0\n[fixed_knots]\nk = 5\n[data]\nsynth = {{ kind = \"gaussian_1d\", n = 48 }}\n{QUICK}"
        ),
    );
    let out = dir.path().join("run");
    let (code, _, err) = run(&["experiment", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code, 0, "{err}");
    let r: ExperimentResults = serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!((r.n_train, r.n_test), (36, 12));
    assert_eq!(r.config_hash.len(), 64);
    assert_eq!(r.models.len(), 3);
    let full = &r.models[0];
    assert_eq!(full.status, Status::Ok);
    assert_eq!(full.metrics.as_ref().unwrap().aukl, Some(0.0));
    let sim = &r.models[1];
    assert_eq!(sim.status, Status::Failed);
    assert!(sim.error.as_ref().unwrap().contains("knot"));
    let fixed = &r.models[2];
    assert_eq!(fixed.status, Status::Ok);
    assert!(fixed.metrics.as_ref().unwrap().aukl.unwrap() >= 0.0);
    for f in [
        "runtimes.json",
        "train.csv",
        "test.csv",
        "bands_full.csv",
        "bands_fixed_knots.csv",
        "knots_fixed_knots_initial.csv",
        "knots_fixed_knots_final.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!std::fs::read_to_string(out.join("results.json")).unwrap().contains("seconds"));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("models = [\"full\", \"oat_bo\"]\n[data]\nsynth = {{ kind = \"gaussian_1d\", n = 40 }}\n{QUICK}"),
    );
    let out = dir.path().join("run");
    let (code, _, err) = run(&[
        "experiment", "--config", s(&cfg), "--out", s(&out), "--model", "oat_bo", "--kmax", "3", "--seed", "11",
    ]);
    assert_eq!(code, 0, "{err}");
    let r: ExperimentResults = serde_json::from_str(&std::fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(r.seeds.root, 11);
    assert_eq!(r.models.len(), 1);
    assert_eq!(r.models[0].k, Some(3));
    assert!(!r.held_out);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dataset_csv_roundtrip_is_lossless(
        rows in prop::collection::vec((-1e6f64..1e6, -1e-6f64..1e-6, any::<i32>(), 1e-9f64..1e9), 1..30)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let x = knotgp::Points::from_rows(&rows.iter().map(|r| vec![r.0, r.1]).collect::<Vec<_>>()).unwrap();
        let y = rows.iter().map(|r| (r.2 as f64).abs()).collect();
        let a = rows.iter().map(|r| r.3).collect();
        let ds = knotgp::Dataset::new(x, y, Some(a), LikelihoodKind::Poisson).unwrap();
        let p1 = dir.path().join("one.csv");
        let p2 = dir.path().join("two.csv");
        write_dataset(&p1, &ds).unwrap();
        let back = read_dataset(&p1, LikelihoodKind::Poisson).unwrap();
        prop_assert_eq!(&back, &ds);
        write_dataset(&p2, &back).unwrap();
        prop_assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }
}
