//! Initial knot placement.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Points;
use crate::error::{GpError, Result};

pub const KMEANS_RESTARTS: usize = 25;
pub const KMEANS_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Kmeans,
    RandomSubset,
    /// Evenly spaced over the bounding box of the inputs; 1-D and 2-D only.
    UniformGrid,
    Explicit(Vec<Vec<f64>>),
}

/// Places `k` knots according to `strategy`. `Explicit` ignores `k` only if
/// it matches the number of given rows; otherwise it is an input error.
pub fn init_knots<R: Rng>(x: &Points, strategy: &InitStrategy, k: usize, rng: &mut R) -> Result<Points> {
    if k == 0 {
        return Err(GpError::input("at least one initial knot is required"));
    }
    if x.is_empty() {
        return Err(GpError::input("cannot place knots without inputs"));
    }
    match strategy {
        InitStrategy::Kmeans => kmeans(x, k, KMEANS_RESTARTS, KMEANS_ITERS, rng),
        InitStrategy::RandomSubset => {
            if k > x.len() {
                return Err(GpError::input(format!(
                    "cannot draw {k} distinct rows from {} inputs",
                    x.len()
                )));
            }
            Ok(x.select(&sample(rng, x.len(), k).into_vec()))
        }
        InitStrategy::UniformGrid => uniform_grid(&x.bounds(), k),
        InitStrategy::Explicit(rows) => {
            let pts = Points::from_rows(rows)?;
            if pts.len() != k {
                return Err(GpError::input(format!(
                    "{} explicit knots given but {k} requested",
                    pts.len()
                )));
            }
            if pts.dim() != x.dim() {
                return Err(GpError::input("explicit knots have the wrong dimension"));
            }
            Ok(pts)
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// In 2-D the grid has `ceil(sqrt(k))` columns and as many rows as needed;
/// when `k` does not fill the last row, the remaining points are dropped
/// from the end.
pub fn uniform_grid(bounds: &[(f64, f64)], k: usize) -> Result<Points> {
    match bounds {
        [(lo, hi)] => Ok(Points::from_scalars(&linspace(*lo, *hi, k))),
        [(lo1, hi1), (lo2, hi2)] => {
            let nx = (k as f64).sqrt().ceil() as usize;
            let ny = k.div_ceil(nx);
            let gx = linspace(*lo1, *hi1, nx);
            let gy = linspace(*lo2, *hi2, ny);
            let mut pts = Points::empty(2);
            'outer: for y in &gy {
                for x in &gx {
                    if pts.len() == k {
                        break 'outer;
                    }
                    pts.push(&[*x, *y])?;
                }
            }
            Ok(pts)
        }
        _ => Err(GpError::input("uniform grid initialization supports 1-D and 2-D inputs only")),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from `restarts` random starts; the lowest
/// within-cluster sum of squares wins (earliest restart on ties).
pub fn kmeans<R: Rng>(x: &Points, k: usize, restarts: usize, iters: usize, rng: &mut R) -> Result<Points> {
    let n = x.len();
    if k > n {
        return Err(GpError::input(format!("cannot form {k} clusters from {n} inputs")));
    }
    let d = x.dim();
    let mut best: Option<(f64, Points)> = None;
    for _ in 0..restarts.max(1) {
        let mut centers = x.select(&sample(rng, n, k).into_vec());
        let mut assign = vec![usize::MAX; n];
        for _ in 0..iters {
            let mut changed = false;
            for (slot, xi) in assign.iter_mut().zip(x.rows()) {
                let mut arg = 0;
                let mut bd = f64::INFINITY;
                for c in 0..k {
                    let dist = sq_dist(xi, centers.row(c));
                    if dist < bd {
                        bd = dist;
                        arg = c;
                    }
                }
                if *slot != arg {
                    *slot = arg;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = vec![0.0; k * d];
            let mut counts = vec![0usize; k];
            for i in 0..n {
                counts[assign[i]] += 1;
                for (s, v) in sums[assign[i] * d..(assign[i] + 1) * d].iter_mut().zip(x.row(i)) {
                    *s += v;
                }
            }
            for c in 0..k {
                if counts[c] == 0 {
                    // reseed an empty cluster at the worst-served point
                    let far = (0..n)
                        .max_by(|&a, &b| {
                            let da = sq_dist(x.row(a), centers.row(assign[a]));
                            let db = sq_dist(x.row(b), centers.row(assign[b]));
                            da.total_cmp(&db).then(b.cmp(&a))
                        })
                        .unwrap_or(0);
                    centers.row_mut(c).copy_from_slice(x.row(far));
                    assign[far] = c;
                } else {
                    for (dst, s) in centers.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                        *dst = s / counts[c] as f64;
                    }
                }
            }
        }
        let sse: f64 = (0..n)
            .map(|i| {
                (0..k)
                    .map(|c| sq_dist(x.row(i), centers.row(c)))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, centers));
        }
    }
    Ok(best.expect("at least one restart").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cluster_is_the_column_mean() {
        let x = Points::from_rows(&[vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = init_knots(&x, &InitStrategy::Kmeans, 1, &mut rng).unwrap();
        assert!((c.row(0)[0] - 2.0).abs() < 1e-12);
        assert!((c.row(0)[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_separates_obvious_clusters() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.01]);
            rows.push(vec![10.0 + i as f64 * 0.01]);
        }
        let x = Points::from_rows(&rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = init_knots(&x, &InitStrategy::Kmeans, 2, &mut rng).unwrap();
        let mut v = [c.row(0)[0], c.row(1)[0]];
        v.sort_by(f64::total_cmp);
        assert!((v[0] - 0.045).abs() < 1e-12 && (v[1] - 10.045).abs() < 1e-12);
    }

    #[test]
    fn full_random_subset_is_a_permutation() {
        let x = Points::from_scalars(&[3.0, 1.0, 4.0, 1.5, 9.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = init_knots(&x, &InitStrategy::RandomSubset, 5, &mut rng).unwrap();
        let mut a = s.as_slice().to_vec();
        let mut b = x.as_slice().to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn one_dimensional_grid() {
        let x = Points::from_scalars(&[0.0, 2.0, 10.0, 7.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = init_knots(&x, &InitStrategy::UniformGrid, 3, &mut rng).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 5.0, 10.0]);
    }

    #[test]
    fn two_dimensional_grid_covers_corners() {
        let g = uniform_grid(&[(0.0, 1.0), (0.0, 2.0)], 9).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(8), &[1.0, 2.0]);
        assert_eq!(uniform_grid(&[(0.0, 1.0), (0.0, 1.0)], 7).unwrap().len(), 7);
        assert!(uniform_grid(&[(0.0, 1.0); 3], 4).is_err());
    }

    #[test]
    fn seeded_initialization_replays() {
        let x = Points::from_scalars(&(0..50).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        let a = init_knots(&x, &InitStrategy::Kmeans, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = init_knots(&x, &InitStrategy::Kmeans, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
