//! Replicated panel data: `G` units observed under `J` replicates.
//!
//! Column `j` of the covariate matrix holds `X_{gj}` and column `j` of the
//! response matrix holds `Y_{gj}`. Storage is replicate-major so each
//! replicate's covariate vector is a contiguous slice.

use serde::{Deserialize, Serialize};

use crate::error::{AddfitError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelData {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

impl PanelData {
    /// Builds a panel from per-replicate covariate and response columns.
    pub fn new(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> Result<Self> {
        if x.is_empty() {
            return Err(AddfitError::InvalidPanel("no replicates".into()));
        }
        if x.len() != y.len() {
            return Err(AddfitError::InvalidPanel(format!(
                "{} covariate columns but {} response columns",
                x.len(),
                y.len()
            )));
        }
        let g = x[0].len();
        if g < 2 {
            return Err(AddfitError::InvalidPanel(format!("need at least 2 units, found {g}")));
        }
        for (j, (xc, yc)) in x.iter().zip(&y).enumerate() {
            if xc.len() != g || yc.len() != g {
                return Err(AddfitError::InvalidPanel(format!(
                    "replicate {j} has {} covariates and {} responses, expected {g}",
                    xc.len(),
                    yc.len()
                )));
            }
            if let Some(bad) = xc.iter().chain(yc).position(|v| !v.is_finite()) {
                return Err(AddfitError::InvalidPanel(format!(
                    "replicate {j} has a non-finite value at position {}",
                    bad % g
                )));
            }
        }
        Ok(Self { x, y })
    }

    /// Number of units `G`.
    pub fn units(&self) -> usize {
        self.x[0].len()
    }

    /// Number of replicates `J`.
    pub fn replicates(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self, j: usize) -> &[f64] {
        &self.x[j]
    }

    pub fn y(&self, j: usize) -> &[f64] {
        &self.y[j]
    }

    pub fn x_columns(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn y_columns(&self) -> &[Vec<f64>] {
        &self.y
    }

    /// All covariates of all replicates in one vector.
    pub fn pooled_x(&self) -> Vec<f64> {
        self.x.iter().flatten().copied().collect()
    }

    /// Returns a copy with `effects[g]` added to every response of unit `g`.
    pub fn with_unit_effects(&self, effects: &[f64]) -> Result<Self> {
        if effects.len() != self.units() {
            return Err(AddfitError::LengthMismatch {
                expected: self.units(),
                found: effects.len(),
            });
        }
        let y = self
            .y
            .iter()
            .map(|col| col.iter().zip(effects).map(|(v, a)| v + a).collect())
            .collect();
        Self::new(self.x.clone(), y)
    }

    /// Returns a copy with replicates reordered so that new replicate `i` is
    /// old replicate `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let j = self.replicates();
        let mut seen = vec![false; j];
        if order.len() != j || order.iter().any(|&o| o >= j || std::mem::replace(&mut seen[o], true)) {
            return Err(AddfitError::InvalidConfig(format!(
                "{order:?} is not a permutation of 0..{j}"
            )));
        }
        Self::new(
            order.iter().map(|&o| self.x[o].clone()).collect(),
            order.iter().map(|&o| self.y[o].clone()).collect(),
        )
    }
}

/// Sample mean; zero for an empty slice.
pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation with the `n - 1` divisor.
pub fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (v.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_columns() {
        let err = PanelData::new(vec![vec![1.0, 2.0], vec![1.0]], vec![vec![0.0; 2]; 2]);
        assert!(matches!(err, Err(AddfitError::InvalidPanel(_))));
    }

    #[test]
    fn rejects_non_finite() {
        let err = PanelData::new(vec![vec![1.0, f64::NAN]], vec![vec![0.0; 2]]);
        assert!(matches!(err, Err(AddfitError::InvalidPanel(_))));
    }

    #[test]
    fn unit_effects_shift_every_replicate() {
        let p = PanelData::new(vec![vec![0.0, 1.0]; 2], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let q = p.with_unit_effects(&[10.0, 20.0]).unwrap();
        assert_eq!(q.y(0), &[11.0, 22.0]);
        assert_eq!(q.y(1), &[13.0, 24.0]);
    }

    #[test]
    fn permutation_must_be_valid() {
        let p = PanelData::new(vec![vec![0.0, 1.0]; 3], vec![vec![0.0, 1.0]; 3]).unwrap();
        assert!(p.permuted(&[0, 0, 1]).is_err());
        assert!(p.permuted(&[2, 0, 1]).is_ok());
    }
}
