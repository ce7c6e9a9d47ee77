//! Input point sets and observation datasets.

use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};

/// A set of points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(GpError::input("points must have dimension >= 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(GpError::input(format!(
                "flat buffer of length {} is not a multiple of dimension {}",
                data.len(),
                dim
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| GpError::input("cannot infer dimension from zero rows"))?;
        let mut out = Self::empty(dim.max(1));
        for r in rows {
            out.push(r)?;
        }
        Ok(out)
    }

    /// One-dimensional points from scalars.
    pub fn from_scalars(xs: &[f64]) -> Self {
        Self {
            dim: 1,
            data: xs.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(GpError::input(format!(
                "row has {} coordinates, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            data,
        }
    }

    /// `self` followed by the rows of `other`.
    pub fn concat(&self, other: &Points) -> Result<Self> {
        if other.dim != self.dim {
            return Err(GpError::input("dimension mismatch in concat"));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Self {
            dim: self.dim,
            data,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Per-dimension (min, max) over all rows.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|d| {
                self.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[d]), hi.max(r[d]))
                })
            })
            .collect()
    }

    pub fn contains_row(&self, row: &[f64]) -> bool {
        self.rows().any(|r| r == row)
    }
}

/// Observation model attached to a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodKind {
    Gaussian,
    Bernoulli,
    Poisson,
}

impl std::fmt::Display for LikelihoodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LikelihoodKind::Gaussian => "gaussian",
            LikelihoodKind::Bernoulli => "bernoulli",
            LikelihoodKind::Poisson => "poisson",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for LikelihoodKind {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(LikelihoodKind::Gaussian),
            "bernoulli" | "binary" => Ok(LikelihoodKind::Bernoulli),
            "poisson" | "count" => Ok(LikelihoodKind::Poisson),
            other => Err(GpError::input(format!("unknown likelihood '{other}'"))),
        }
    }
}

/// Inputs, targets and (for Poisson data) exposure offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Points,
    pub y: Vec<f64>,
    pub offsets: Option<Vec<f64>>,
    pub likelihood: LikelihoodKind,
}

impl Dataset {
    pub fn new(
        x: Points,
        y: Vec<f64>,
        offsets: Option<Vec<f64>>,
        likelihood: LikelihoodKind,
    ) -> Result<Self> {
        let ds = Self {
            x,
            y,
            offsets,
            likelihood,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn gaussian(x: Points, y: Vec<f64>) -> Result<Self> {
        Self::new(x, y, None, LikelihoodKind::Gaussian)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(GpError::input(format!(
                "{} input rows but {} targets",
                self.x.len(),
                self.y.len()
            )));
        }
        if self.x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(GpError::input("inputs contain missing or non-finite values"));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(GpError::input("targets contain missing or non-finite values"));
        }
        match (self.likelihood, &self.offsets) {
            (LikelihoodKind::Poisson, Some(a)) => {
                if a.len() != self.y.len() {
                    return Err(GpError::input("offset count does not match target count"));
                }
                if a.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(GpError::input("offsets must be positive and finite"));
                }
                if self.y.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                    return Err(GpError::input("poisson targets must be nonnegative integers"));
                }
            }
            (LikelihoodKind::Poisson, None) => {
                return Err(GpError::input("poisson data requires offsets"));
            }
            (_, Some(_)) => {
                return Err(GpError::input("offsets are only allowed for poisson data"));
            }
            (LikelihoodKind::Bernoulli, None) => {
                if self.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(GpError::input("bernoulli targets must be 0 or 1"));
                }
            }
            (LikelihoodKind::Gaussian, None) => {}
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    /// Exposure for row `i`; 1 when the dataset carries no offsets.
    pub fn offset(&self, i: usize) -> f64 {
        self.offsets.as_ref().map_or(1.0, |a| a[i])
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            offsets: self
                .offsets
                .as_ref()
                .map(|a| indices.iter().map(|&i| a[i]).collect()),
            likelihood: self.likelihood,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_requires_offsets() {
        let x = Points::from_scalars(&[0.0, 1.0]);
        let err = Dataset::new(x.clone(), vec![1.0, 2.0], None, LikelihoodKind::Poisson);
        assert!(err.is_err());
        let ok = Dataset::new(x, vec![1.0, 2.0], Some(vec![0.5, 0.5]), LikelihoodKind::Poisson);
        assert!(ok.is_ok());
    }

    #[test]
    fn bernoulli_targets_checked() {
        let x = Points::from_scalars(&[0.0, 1.0]);
        assert!(Dataset::new(x.clone(), vec![0.0, 2.0], None, LikelihoodKind::Bernoulli).is_err());
        assert!(Dataset::new(x, vec![0.0, 1.0], None, LikelihoodKind::Bernoulli).is_ok());
    }

    #[test]
    fn rejects_nan_and_ragged() {
        assert!(Points::new(2, vec![1.0, 2.0, 3.0]).is_err());
        let x = Points::from_scalars(&[0.0, f64::NAN]);
        assert!(Dataset::gaussian(x, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn select_and_concat() {
        let p = Points::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, 5.0]]).unwrap();
        let s = p.select(&[2, 0]);
        assert_eq!(s.row(0), &[4.0, 5.0]);
        let c = s.concat(&p).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(p.bounds(), vec![(0.0, 4.0), (1.0, 5.0)]);
    }
}
