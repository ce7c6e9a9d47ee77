//! Headered CSV files: datasets use columns `x1..xd`, `y` and an optional
//! offset column `a`.

use std::path::Path;

use knotgp::{Dataset, LikelihoodKind, Points};

use crate::error::{CliError, Result};

struct Columns {
    x: Vec<usize>,
    y: Option<usize>,
    a: Option<usize>,
}

fn columns(headers: &csv::StringRecord, path: &Path) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut x = Vec::new();
    while let Some(i) = find(&format!("x{}", x.len() + 1)) {
        x.push(i);
    }
    if x.is_empty() {
        return Err(CliError::io(path.display(), "no x1 column"));
    }
    Ok(Columns {
        x,
        y: find("y"),
        a: find("a"),
    })
}

fn field(rec: &csv::StringRecord, i: usize, line: usize, path: &Path) -> Result<f64> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse::<f64>()
        .map_err(|_| CliError::io(path.display(), format!("line {line}: cannot parse '{raw}' as a number")))
}

struct Parsed {
    x: Points,
    y: Option<Vec<f64>>,
    a: Option<Vec<f64>>,
}

fn parse(path: &Path) -> Result<Parsed> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::io(path.display(), e))?;
    let headers = rdr.headers().map_err(|e| CliError::io(path.display(), e))?.clone();
    let cols = columns(&headers, path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut offs = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path.display(), e))?;
        let line = k + 2;
        for &i in &cols.x {
            xs.push(field(&rec, i, line, path)?);
        }
        if let Some(i) = cols.y {
            ys.push(field(&rec, i, line, path)?);
        }
        if let Some(i) = cols.a {
            offs.push(field(&rec, i, line, path)?);
        }
    }
    Ok(Parsed {
        x: Points::new(cols.x.len(), xs)?,
        y: cols.y.map(|_| ys),
        a: cols.a.map(|_| offs),
    })
}

pub fn read_dataset(path: &Path, likelihood: LikelihoodKind) -> Result<Dataset> {
    let p = parse(path)?;
    let y = p.y.ok_or_else(|| CliError::io(path.display(), "no y column"))?;
    Ok(Dataset::new(p.x, y, p.a, likelihood)?)
}

/// Prediction inputs; a `y` column, if present, is ignored.
pub fn read_inputs(path: &Path) -> Result<(Points, Option<Vec<f64>>)> {
    let p = parse(path)?;
    Ok((p.x, p.a))
}

fn x_headers(dim: usize) -> Vec<String> {
    (1..=dim).map(|j| format!("x{j}")).collect()
}

pub fn write_rows(path: &Path, headers: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path.display(), e))?;
    w.write_record(headers).map_err(|e| CliError::io(path.display(), e))?;
    for row in rows {
        // Display for f64 prints the shortest string that parses back exactly
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| CliError::io(path.display(), e))?;
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut headers = x_headers(data.dim());
    headers.push("y".into());
    if data.offsets.is_some() {
        headers.push("a".into());
    }
    let rows = (0..data.len()).map(|i| {
        let mut r = data.x.row(i).to_vec();
        r.push(data.y[i]);
        if let Some(a) = &data.offsets {
            r.push(a[i]);
        }
        r
    });
    write_rows(path, &headers, rows)
}

pub fn write_points(path: &Path, pts: &Points) -> Result<()> {
    write_rows(path, &x_headers(pts.dim()), pts.rows().map(|r| r.to_vec()))
}

/// Inputs followed by the given named columns.
pub fn write_with_inputs(path: &Path, x: &Points, names: &[&str], cols: &[&[f64]]) -> Result<()> {
    let mut headers = x_headers(x.dim());
    headers.extend(names.iter().map(|s| s.to_string()));
    let rows = (0..x.len()).map(|i| {
        let mut r = x.row(i).to_vec();
        r.extend(cols.iter().map(|c| c[i]));
        r
    });
    write_rows(path, &headers, rows)
}
