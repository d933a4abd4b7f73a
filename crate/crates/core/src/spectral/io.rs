use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{DomainSpec, Mode, SpectralBasis, DEFAULT_QUAD_TOL};
use crate::error::{Error, Result};

/// Exported form of a basis. Eigenfunction values are not stored; they are
/// recomputed from the closed form at the stored points on import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDocument {
    pub domain: DomainSpec,
    #[serde(rename = "K_max")]
    pub k_max: usize,
    pub modes: Vec<ModeEntry>,
    pub quad: QuadEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub index: Vec<usize>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadEntry {
    pub order: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SpectralBasis {
    pub fn to_document(&self) -> BasisDocument {
        BasisDocument {
            domain: self.domain.clone(),
            k_max: self.len(),
            modes: self
                .modes
                .iter()
                .map(|m| ModeEntry {
                    index: m.index.clone(),
                    lambda: m.lambda,
                })
                .collect(),
            quad: QuadEntry {
                order: self.quad_order,
                points: (0..self.num_quad()).map(|q| self.point(q).to_vec()).collect(),
                weights: self.weights.clone(),
            },
        }
    }

    /// Rebuilds a basis from a document, checking the eigenvalues against the
    /// closed form and the orthonormality of the stored grid.
    pub fn from_document(doc: &BasisDocument) -> Result<Self> {
        doc.domain.validate()?;
        if doc.modes.len() != doc.k_max || doc.k_max == 0 {
            return Err(Error::InvalidParameter(format!(
                "document lists {} modes for K_max = {}",
                doc.modes.len(),
                doc.k_max
            )));
        }
        let dim = doc.domain.dim();
        let mut modes = Vec::with_capacity(doc.k_max);
        for m in &doc.modes {
            if m.index.len() != dim || m.index.contains(&0) {
                return Err(Error::InvalidParameter(format!("bad multi-index {:?}", m.index)));
            }
            let exact = doc.domain.eigenvalue(&m.index);
            if (exact - m.lambda).abs() > 1e-12 * exact {
                return Err(Error::InvalidParameter(format!(
                    "mode {:?}: stored eigenvalue {} differs from {exact}",
                    m.index, m.lambda
                )));
            }
            modes.push(Mode {
                index: m.index.clone(),
                lambda: exact,
            });
        }
        if modes.windows(2).any(|w| w[0].lambda > w[1].lambda) {
            return Err(Error::InvalidParameter("modes are not sorted by eigenvalue".into()));
        }
        if doc.quad.points.len() != doc.quad.weights.len() || doc.quad.points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidParameter("quadrature points and weights are inconsistent".into()));
        }
        let points = doc.quad.points.concat();
        let basis = SpectralBasis::assemble(doc.domain.clone(), modes, doc.quad.order, points, doc.quad.weights.clone());
        basis.check_orthonormal(DEFAULT_QUAD_TOL)?;
        Ok(basis)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        crate::json::to_writer(w, &self.to_document())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let doc: BasisDocument = serde_json::from_reader(r)?;
        Self::from_document(&doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, default_quad_order};

    #[test]
    fn round_trip_is_exact() {
        let d = DomainSpec::unit_square();
        let b = build_basis(&d, 10, default_quad_order(&d, 10)).unwrap();
        let mut buf = Vec::new();
        b.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"K_max\": 10"));
        let back = SpectralBasis::read_json(buf.as_slice()).unwrap();
        assert_eq!(back.lambdas(), b.lambdas());
        assert_eq!(back.weights(), b.weights());
        assert_eq!(back.phi(), b.phi());
    }

    #[test]
    fn tampered_eigenvalue_is_rejected() {
        let d = DomainSpec::unit_interval();
        let b = build_basis(&d, 8, default_quad_order(&d, 8)).unwrap();
        let mut doc = b.to_document();
        doc.modes[2].lambda *= 1.001;
        assert!(SpectralBasis::from_document(&doc).is_err());
    }
}
