use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

/// A model domain with closed-form Dirichlet eigenpairs: `(0, L)` or
/// `(0, L1) × (0, L2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub side_lengths: Vec<f64>,
}

impl DomainSpec {
    pub fn interval(length: f64) -> Self {
        Self {
            kind: DomainKind::Interval,
            side_lengths: vec![length],
        }
    }

    pub fn rectangle(lx: f64, ly: f64) -> Self {
        Self {
            kind: DomainKind::Rectangle,
            side_lengths: vec![lx, ly],
        }
    }

    pub fn unit_interval() -> Self {
        Self::interval(1.0)
    }

    pub fn unit_square() -> Self {
        Self::rectangle(1.0, 1.0)
    }

    /// Ambient dimension N.
    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Interval => 1,
            DomainKind::Rectangle => 2,
        }
    }

    pub fn measure(&self) -> f64 {
        self.side_lengths.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.side_lengths.len() != self.dim() {
            return Err(Error::InvalidDomain(format!(
                "{:?} needs {} side length(s), got {}",
                self.kind,
                self.dim(),
                self.side_lengths.len()
            )));
        }
        if let Some(bad) = self.side_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidDomain(format!("side length {bad} is not positive")));
        }
        Ok(())
    }

    /// Half-Laplacian eigenvalue of the mode with the given multi-index
    /// (the square root of the Dirichlet Laplacian eigenvalue).
    pub fn eigenvalue(&self, index: &[usize]) -> f64 {
        let s: f64 = index
            .iter()
            .zip(&self.side_lengths)
            .map(|(&m, &l)| {
                let k = m as f64 / l;
                k * k
            })
            .sum();
        PI * s.sqrt()
    }

    /// L²-normalised Dirichlet eigenfunction evaluated at `x`.
    pub fn eigenfunction(&self, index: &[usize], x: &[f64]) -> f64 {
        index
            .iter()
            .zip(&self.side_lengths)
            .zip(x)
            .map(|((&m, &l), &xi)| (2.0 / l).sqrt() * (m as f64 * PI * xi / l).sin())
            .product()
    }

    /// The `k_max` lowest modes, sorted by eigenvalue with lexicographic
    /// multi-index tie-break.
    pub fn lowest_modes(&self, k_max: usize) -> Vec<(Vec<usize>, f64)> {
        let mut modes: Vec<(Vec<usize>, f64)> = match self.kind {
            DomainKind::Interval => (1..=k_max).map(|m| (vec![m], self.eigenvalue(&[m]))).collect(),
            DomainKind::Rectangle => {
                // k_max modes always fit in the first k_max indices of each direction.
                let mut v = Vec::with_capacity(k_max * k_max);
                for m in 1..=k_max {
                    for n in 1..=k_max {
                        v.push((vec![m, n], self.eigenvalue(&[m, n])));
                    }
                }
                v
            }
        };
        modes.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        modes.truncate(k_max);
        modes
    }
}
