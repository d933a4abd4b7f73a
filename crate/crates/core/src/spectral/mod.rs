//! Dirichlet eigen-decomposition of the half-Laplacian on model domains.
//!
//! Functions are represented by coefficients in the L²-orthonormal
//! eigenbasis `φ_k`. The extension norm is `‖u‖² = Σ λ_k a_k²`, where `λ_k`
//! is the half-Laplacian eigenvalue (square root of the Laplacian one).

mod domain;
mod io;

pub use domain::{DomainKind, DomainSpec};
pub use io::{BasisDocument, ModeEntry, QuadEntry};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_on, pairwise_sum_by};

/// Default Gram-matrix tolerance for the orthonormality check.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
/// Default relative tolerance for eigenvalue clustering.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Multi-index (one positive frequency per direction).
    pub index: Vec<usize>,
    pub lambda: f64,
}

/// Truncated eigenbasis with a tensor Gauss–Legendre grid and cached
/// eigenfunction values. Immutable once built.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    domain: DomainSpec,
    modes: Vec<Mode>,
    quad_order: usize,
    /// Flattened quadrature points, `dim` coordinates each.
    points: Vec<f64>,
    weights: Vec<f64>,
    /// `phi[(k, q)] = φ_k(x_q)`.
    phi: DMatrix<f64>,
    lambdas: Vec<f64>,
}

/// Twice the highest angular wavenumber `m·π/L` present, rounded up, plus 8.
pub fn default_quad_order(domain: &DomainSpec, k_max: usize) -> usize {
    let max_freq = domain
        .lowest_modes(k_max)
        .iter()
        .flat_map(|(idx, _)| idx.iter().zip(&domain.side_lengths).map(|(&m, &l)| m as f64 * PI / l))
        .fold(PI, f64::max);
    2 * max_freq.ceil() as usize + 8
}

/// Builds the basis and verifies L²-orthonormality on the quadrature grid.
pub fn build_basis(domain: &DomainSpec, k_max: usize, quad_order: usize) -> Result<SpectralBasis> {
    build_basis_with_tol(domain, k_max, quad_order, DEFAULT_QUAD_TOL)
}

pub fn build_basis_with_tol(
    domain: &DomainSpec,
    k_max: usize,
    quad_order: usize,
    quad_tol: f64,
) -> Result<SpectralBasis> {
    domain.validate()?;
    if k_max == 0 {
        return Err(Error::InvalidParameter("K_max must be at least 1".into()));
    }
    if quad_order == 0 {
        return Err(Error::InvalidParameter("quad_order must be at least 1".into()));
    }
    let modes: Vec<Mode> = domain
        .lowest_modes(k_max)
        .into_iter()
        .map(|(index, lambda)| Mode { index, lambda })
        .collect();

    let rules: Vec<(Vec<f64>, Vec<f64>)> = domain
        .side_lengths
        .iter()
        .map(|&l| gauss_legendre_on(quad_order, 0.0, l))
        .collect();
    let (points, weights) = tensor_grid(&rules);
    let basis = SpectralBasis::assemble(domain.clone(), modes, quad_order, points, weights);
    basis.check_orthonormal(quad_tol)?;
    Ok(basis)
}

fn tensor_grid(rules: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    match rules {
        [(x, w)] => (x.clone(), w.clone()),
        [(x, wx), (y, wy)] => {
            let mut points = Vec::with_capacity(2 * x.len() * y.len());
            let mut weights = Vec::with_capacity(x.len() * y.len());
            for (xi, wi) in x.iter().zip(wx) {
                for (yj, wj) in y.iter().zip(wy) {
                    points.push(*xi);
                    points.push(*yj);
                    weights.push(wi * wj);
                }
            }
            (points, weights)
        }
        _ => unreachable!("domains are one- or two-dimensional"),
    }
}

impl SpectralBasis {
    fn assemble(domain: DomainSpec, modes: Vec<Mode>, quad_order: usize, points: Vec<f64>, weights: Vec<f64>) -> Self {
        let dim = domain.dim();
        let nq = weights.len();
        let phi = DMatrix::from_fn(modes.len(), nq, |k, q| {
            domain.eigenfunction(&modes[k].index, &points[q * dim..(q + 1) * dim])
        });
        let lambdas = modes.iter().map(|m| m.lambda).collect();
        Self {
            domain,
            modes,
            quad_order,
            points,
            weights,
            phi,
            lambdas,
        }
    }

    /// Largest deviation of the quadrature Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let weighted = DMatrix::from_fn(self.len(), self.num_quad(), |k, q| self.phi[(k, q)] * self.weights[q]);
        let gram = &weighted * self.phi.transpose();
        let mut worst: f64 = 0.0;
        for k in 0..self.len() {
            for l in 0..self.len() {
                let target = if k == l { 1.0 } else { 0.0 };
                worst = worst.max((gram[(k, l)] - target).abs());
            }
        }
        worst
    }

    fn check_orthonormal(&self, tol: f64) -> Result<()> {
        let deviation = self.gram_deviation();
        if !(deviation <= tol) {
            return Err(Error::Underresolved { deviation, tol });
        }
        Ok(())
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Truncation count K_max.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn num_quad(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, q: usize) -> &[f64] {
        let d = self.dim();
        &self.points[q * d..(q + 1) * d]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// Half-Laplacian eigenvalues in basis order.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Eigenvalue with one-based index, as in `λ_1 ≤ λ_2 ≤ …`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambdas[k - 1]
    }

    pub fn zeros(&self) -> CoefVec {
        CoefVec::zeros(self.len())
    }

    /// `φ_k` with one-based `k`.
    pub fn mode_vec(&self, k: usize) -> CoefVec {
        CoefVec::unit(self.len(), k - 1)
    }

    /// `e_k = φ_k / √λ_k`, unit vector in the extension norm.
    pub fn unit_mode(&self, k: usize) -> CoefVec {
        CoefVec::unit(self.len(), k - 1).scaled(1.0 / self.lambda(k).sqrt())
    }

    pub fn check(&self, u: &CoefVec) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: u.len(),
            });
        }
        if !u.is_finite() {
            return Err(Error::NonFinite("coefficient vector".into()));
        }
        Ok(())
    }

    /// Values of `u = Σ a_k φ_k` at the quadrature points.
    pub fn eval(&self, u: &CoefVec) -> Vec<f64> {
        self.phi.tr_mul(&**u).data.into()
    }

    /// `⟨f, φ_k⟩_{L²}` for all k, from values of f at the quadrature points.
    pub fn project_values(&self, values: &[f64]) -> CoefVec {
        let wv = nalgebra::DVector::from_iterator(values.len(), values.iter().zip(&self.weights).map(|(v, w)| v * w));
        CoefVec::from(&self.phi * wv)
    }

    /// Quadrature of a pointwise integrand, pairwise-summed.
    pub fn integrate<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        pairwise_sum_by(self.num_quad(), &|q| self.weights[q] * f(q))
    }

    /// `‖u‖² = Σ λ_k a_k²` (extension norm).
    pub fn h_norm_sq(&self, u: &CoefVec) -> f64 {
        u.iter().zip(&self.lambdas).map(|(a, l)| l * a * a).sum()
    }

    pub fn h_norm(&self, u: &CoefVec) -> f64 {
        self.h_norm_sq(u).sqrt()
    }

    pub fn h_inner(&self, u: &CoefVec, v: &CoefVec) -> f64 {
        u.iter().zip(v.iter()).zip(&self.lambdas).map(|((a, b), l)| l * a * b).sum()
    }

    pub fn h_dist(&self, u: &CoefVec, v: &CoefVec) -> f64 {
        u.iter()
            .zip(v.iter())
            .zip(&self.lambdas)
            .map(|((a, b), l)| l * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖u‖²_{L²} = Σ a_k²` by orthonormality.
    pub fn l2_norm_sq(&self, u: &CoefVec) -> f64 {
        u.norm_squared()
    }

    /// `(∫ |u|^p)^{1/p}` by quadrature.
    pub fn lp_norm(&self, u: &CoefVec, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidParameter(format!("L^p exponent must be >= 1, got {p}")));
        }
        let vals = self.eval(u);
        let s = self.integrate(|q| vals[q].abs().powf(p));
        Ok(s.powf(1.0 / p))
    }

    /// Maximal clusters of equal eigenvalues, with `|λ_a − λ_b| ≤ rel_tol·λ_b`
    /// between consecutive members.
    pub fn group_eigenvalues(&self, rel_tol: f64) -> Result<Vec<SubspaceSplit>> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-6) {
            return Err(Error::InvalidParameter(format!("cluster tolerance must lie in (0, 1e-6], got {rel_tol}")));
        }
        let mut clusters = Vec::new();
        let mut start = 1;
        for k in 2..=self.len() {
            let (a, b) = (self.lambda(k - 1), self.lambda(k));
            if (b - a).abs() > rel_tol * b {
                clusters.push(SubspaceSplit { i: start, j: k - 1 });
                start = k;
            }
        }
        clusters.push(SubspaceSplit { i: start, j: self.len() });
        Ok(clusters)
    }

    /// The cluster containing the one-based index `k`.
    pub fn cluster_of(&self, k: usize) -> Result<SubspaceSplit> {
        self.group_eigenvalues(DEFAULT_CLUSTER_TOL)?
            .into_iter()
            .find(|c| c.i <= k && k <= c.j)
            .ok_or_else(|| Error::InvalidParameter(format!("mode index {k} outside 1..={}", self.len())))
    }
}

/// Index block `i..=j` (one-based) delimiting `H_{i−1}`, `span(e_i..e_j)` and
/// `H_j^⊥` inside the truncated space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceSplit {
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    /// Modes `1..i`, i.e. `H_{i−1}`.
    Low,
    /// Modes `i..=j`.
    Mid,
    /// Modes above `j`, i.e. `H_j^⊥` truncated.
    High,
}

impl SubspaceSplit {
    /// Checks `1 ≤ i ≤ j < K_max` and the strict gaps `λ_{i−1} < λ_i`,
    /// `λ_j < λ_{j+1}` (relative to the clustering tolerance).
    pub fn new(basis: &SpectralBasis, i: usize, j: usize) -> Result<Self> {
        if !(1 <= i && i <= j && j < basis.len()) {
            return Err(Error::InvalidParameter(format!(
                "split (i={i}, j={j}) needs 1 <= i <= j < K_max = {}",
                basis.len()
            )));
        }
        let separated = |a: f64, b: f64| b - a > DEFAULT_CLUSTER_TOL * b;
        if i > 1 && !separated(basis.lambda(i - 1), basis.lambda(i)) {
            return Err(Error::InvalidParameter(format!("λ_{} = λ_{i}: split must start a cluster", i - 1)));
        }
        if !separated(basis.lambda(j), basis.lambda(j + 1)) {
            return Err(Error::InvalidParameter(format!("λ_{j} = λ_{}: split must end a cluster", j + 1)));
        }
        Ok(Self { i, j })
    }

    /// Zero-based coefficient range of a part, for a basis of `len` modes.
    pub fn range(&self, part: Part, len: usize) -> std::ops::Range<usize> {
        match part {
            Part::Low => 0..self.i - 1,
            Part::Mid => self.i - 1..self.j,
            Part::High => self.j..len,
        }
    }

    pub fn part_of(&self, k: usize) -> Part {
        if k < self.i {
            Part::Low
        } else if k <= self.j {
            Part::Mid
        } else {
            Part::High
        }
    }
}

/// Keeps the coefficients of one block and zeroes the rest.
pub fn project(u: &CoefVec, split: &SubspaceSplit, part: Part) -> CoefVec {
    let keep = split.range(part, u.len());
    let mut out = CoefVec::zeros(u.len());
    for k in keep {
        out[k] = u[k];
    }
    out
}

/// Orthogonal projection onto the span of modes `1..=j` (that is `H_j`).
pub fn project_onto_hj(u: &CoefVec, j: usize) -> CoefVec {
    let mut out = CoefVec::zeros(u.len());
    for k in 0..j.min(u.len()) {
        out[k] = u[k];
    }
    out
}
