//! The energy `f_λ(u) = ½‖u‖² − (λ/2)‖u‖²_{L²} − ∫ G(x, u)` on the truncated
//! eigenspace, its extension-norm gradient and Hessian action.

mod hypotheses;
mod nonlinearity;

pub use hypotheses::{validate_hypotheses, HypothesisCheck, HypothesisReport, SampleSpec};
pub use nonlinearity::{Nonlinearity, NonlinearitySpec};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Spectral shift λ.
    pub lambda: f64,
}

/// `K(b)`: the Neumann-to-trace map in spectral coordinates, `c_k = b_k / λ_k`.
pub fn apply_k(basis: &SpectralBasis, b: &CoefVec) -> CoefVec {
    let mut c = b.clone();
    for (ck, l) in c.iter_mut().zip(basis.lambdas()) {
        *ck /= l;
    }
    c
}

/// Extension norm of the part of `K b` on modes above `cutoff`.
pub fn k_tail_norm(basis: &SpectralBasis, b: &CoefVec, cutoff: usize) -> f64 {
    let c = apply_k(basis, b);
    c.iter()
        .zip(basis.lambdas())
        .skip(cutoff)
        .map(|(ck, l)| l * ck * ck)
        .sum::<f64>()
        .sqrt()
}

/// `f_λ` bound to a basis and nonlinearity.
#[derive(Debug, Clone, Copy)]
pub struct Functional<'a> {
    basis: &'a SpectralBasis,
    nl: &'a Nonlinearity,
    lambda: f64,
    fd_fallback: bool,
}

impl<'a> Functional<'a> {
    pub fn new(basis: &'a SpectralBasis, nl: &'a Nonlinearity, params: ProblemParams) -> Self {
        Self {
            basis,
            nl,
            lambda: params.lambda,
            fd_fallback: true,
        }
    }

    /// Enables or disables the finite-difference Hessian used when the
    /// nonlinearity has no analytic `∂g/∂t`.
    pub fn with_fd_fallback(mut self, enabled: bool) -> Self {
        self.fd_fallback = enabled;
        self
    }

    pub fn basis(&self) -> &'a SpectralBasis {
        self.basis
    }

    pub fn nonlinearity(&self) -> &'a Nonlinearity {
        self.nl
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn params(&self) -> ProblemParams {
        ProblemParams { lambda: self.lambda }
    }

    /// Same functional at another λ.
    pub fn at_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    /// `f_λ(u)`; NaN propagates when the integrand overflows.
    pub fn energy(&self, u: &CoefVec) -> f64 {
        let b = self.basis;
        let quadratic: f64 = u
            .iter()
            .zip(b.lambdas())
            .map(|(a, l)| 0.5 * (l - self.lambda) * a * a)
            .sum();
        let vals = b.eval(u);
        let potential = b.integrate(|q| self.nl.big_g(b.point(q), vals[q]));
        quadratic - potential
    }

    /// `f_λ(u)` with validation of the input and of the result.
    pub fn try_energy(&self, u: &CoefVec) -> Result<f64> {
        self.basis.check(u)?;
        let e = self.energy(u);
        if !e.is_finite() {
            return Err(Error::NonFinite("energy integrand".into()));
        }
        Ok(e)
    }

    /// Returns `(f_λ(u), ∇f_λ(u))` from one evaluation of u on the grid.
    pub fn energy_and_gradient(&self, u: &CoefVec) -> (f64, CoefVec) {
        let b = self.basis;
        let vals = b.eval(u);
        let potential = b.integrate(|q| self.nl.big_g(b.point(q), vals[q]));
        let quadratic: f64 = u
            .iter()
            .zip(b.lambdas())
            .map(|(a, l)| 0.5 * (l - self.lambda) * a * a)
            .sum();
        (quadratic - potential, self.gradient_from_values(u, &vals))
    }

    /// Gradient in the extension metric, `∇f_λ(u) = u − K(λu + g(·, u))`:
    /// `(∇f)_k = a_k − (λ a_k + ⟨g(·,u), φ_k⟩) / λ_k`.
    ///
    /// The same vector is the coefficient residual driven to zero by Newton.
    pub fn gradient(&self, u: &CoefVec) -> CoefVec {
        let vals = self.basis.eval(u);
        self.gradient_from_values(u, &vals)
    }

    fn gradient_from_values(&self, u: &CoefVec, vals: &[f64]) -> CoefVec {
        let b = self.basis;
        let gv: Vec<f64> = (0..b.num_quad()).map(|q| self.nl.g(b.point(q), vals[q])).collect();
        let proj = b.project_values(&gv);
        let mut out = u.clone();
        for k in 0..u.len() {
            out[k] = u[k] - (self.lambda * u[k] + proj[k]) / b.lambdas()[k];
        }
        out
    }

    /// Euclidean coefficient gradient `∂f/∂a_k = λ_k (∇f)_k`.
    pub fn coefficient_gradient(&self, u: &CoefVec) -> CoefVec {
        let mut g = self.gradient(u);
        for (gk, l) in g.iter_mut().zip(self.basis.lambdas()) {
            *gk *= l;
        }
        g
    }

    /// `‖∇f_λ(u)‖` in the extension norm.
    pub fn residual(&self, u: &CoefVec) -> f64 {
        self.basis.h_norm(&self.gradient(u))
    }

    /// Action of the Hessian (in the extension metric) on `w`:
    /// `w − K(λ w + g_t(·, u) w)`.
    pub fn hessian_apply(&self, u: &CoefVec, w: &CoefVec) -> Result<CoefVec> {
        let b = self.basis;
        let vals = b.eval(u);
        let probe = vals.first().map(|&t| self.nl.g_t(b.point(0), t));
        if let Some(None) = probe {
            if !self.fd_fallback {
                return Err(Error::MissingDerivative);
            }
            let h = 1e-6 * (1.0 + b.h_norm(u));
            let gp = self.gradient(&u.axpy(h, w));
            let gm = self.gradient(&u.axpy(-h, w));
            return Ok((&gp - &gm).scaled(0.5 / h));
        }
        let wv = b.eval(w);
        let prod: Vec<f64> = (0..b.num_quad())
            .map(|q| self.nl.g_t(b.point(q), vals[q]).unwrap_or(0.0) * wv[q])
            .collect();
        let proj = b.project_values(&prod);
        let mut out = w.clone();
        for k in 0..w.len() {
            out[k] = w[k] - (self.lambda * w[k] + proj[k]) / b.lambdas()[k];
        }
        Ok(out)
    }

    /// Jacobian of the coefficient residual, `J_kl = ∂(∇f)_k / ∂a_l`.
    pub fn jacobian(&self, u: &CoefVec) -> Result<DMatrix<f64>> {
        let b = self.basis;
        let n = b.len();
        let vals = b.eval(u);
        let mut weights = Vec::with_capacity(b.num_quad());
        for q in 0..b.num_quad() {
            match self.nl.g_t(b.point(q), vals[q]) {
                Some(d) => weights.push(d * b.weights()[q]),
                None => return self.jacobian_fd(u),
            }
        }
        // ∫ g_t(u) φ_k φ_l
        let phi = b.phi();
        let scaled = DMatrix::from_fn(n, b.num_quad(), |k, q| phi[(k, q)] * weights[q]);
        let coupling = &scaled * phi.transpose();
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let lk = b.lambdas()[k];
            for l in 0..n {
                let diag = if k == l { 1.0 - self.lambda / lk } else { 0.0 };
                jac[(k, l)] = diag - coupling[(k, l)] / lk;
            }
        }
        Ok(jac)
    }

    fn jacobian_fd(&self, u: &CoefVec) -> Result<DMatrix<f64>> {
        if !self.fd_fallback {
            return Err(Error::MissingDerivative);
        }
        let n = self.basis.len();
        let mut jac = DMatrix::zeros(n, n);
        for l in 0..n {
            let col = self.hessian_apply(u, &CoefVec::unit(n, l))?;
            jac.set_column(l, &*col);
        }
        Ok(jac)
    }

    /// Symmetric second-derivative matrix `∂²f/∂a_k∂a_l = λ_k J_kl`.
    pub fn hessian_matrix(&self, u: &CoefVec) -> Result<DMatrix<f64>> {
        let mut h = self.jacobian(u)?;
        for k in 0..h.nrows() {
            let lk = self.basis.lambdas()[k];
            for l in 0..h.ncols() {
                h[(k, l)] *= lk;
            }
        }
        let ht = h.transpose();
        Ok((h + ht) * 0.5)
    }

    /// Number of negative eigenvalues of the Hessian at `u`.
    pub fn morse_index(&self, u: &CoefVec) -> Result<usize> {
        let h = self.hessian_matrix(u)?;
        let eig = SymmetricEigen::new(h);
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(eig.eigenvalues.iter().filter(|&&v| v < -1e-10 * scale.max(1.0)).count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_basis, default_quad_order, DomainSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const CUBE_INTEGRAL: f64 = 1.2004217548761408; // 8√2/(3π)

    fn setup(k: usize) -> (SpectralBasis, Nonlinearity) {
        let d = DomainSpec::unit_interval();
        (build_basis(&d, k, default_quad_order(&d, k)).unwrap(), Nonlinearity::power(3.0).unwrap())
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CoefVec {
        CoefVec::from_vec((0..n).map(|k| scale * rng.random_range(-1.0..1.0) / (1.0 + k as f64)).collect())
    }

    #[test]
    fn zero_is_trivial() {
        let (b, nl) = setup(16);
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 2.0 });
        assert_eq!(f.energy(&b.zeros()), 0.0);
        assert!(f.gradient(&b.zeros()).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn energy_on_first_mode_ray() {
        let (b, nl) = setup(16);
        assert_relative_eq!(CUBE_INTEGRAL, 8.0 * 2f64.sqrt() / (3.0 * PI), max_relative = 1e-15);
        for t in [0.3, 1.0, 2.5] {
            let u = b.mode_vec(1).scaled(t);
            let f0 = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
            let expected = 0.5 * PI * t * t - t.powi(3) / 3.0 * CUBE_INTEGRAL;
            assert_relative_eq!(f0.energy(&u), expected, max_relative = 1e-12);
            let fpi = f0.at_lambda(PI);
            let expected = -t.powi(3) / 3.0 * CUBE_INTEGRAL;
            assert_relative_eq!(fpi.energy(&u), expected, max_relative = 1e-12);
            assert!(fpi.energy(&u) < 0.0);
        }
    }

    #[test]
    fn k_operator() {
        let (b, _) = setup(16);
        for k in 1..=16 {
            let c = apply_k(&b, &b.mode_vec(k));
            assert_eq!(c[k - 1], 1.0 / b.lambda(k));
        }
        assert!(apply_k(&b, &b.zeros()).iter().all(|&x| x == 0.0));
        let ones = CoefVec::from_vec(vec![1.0; 16]);
        let c = apply_k(&b, &ones);
        assert_relative_eq!(c[0], 1.0 / PI);
        assert_relative_eq!(c[1], 1.0 / (2.0 * PI));
    }

    #[test]
    fn k_operator_norm_bound() {
        let (b, _) = setup(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = random_vec(&mut rng, 16, 3.0);
            let kv = apply_k(&b, &v);
            assert!(b.h_norm_sq(&kv) <= b.l2_norm_sq(&v) / b.lambda(1) * (1.0 + 1e-14));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (b, nl) = setup(24);
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 1.7 });
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = random_vec(&mut rng, 24, 2.0);
            let w = random_vec(&mut rng, 24, 1.0);
            let h = 1e-5;
            let fd = (f.energy(&u.axpy(h, &w)) - f.energy(&u.axpy(-h, &w))) / (2.0 * h);
            let an = b.h_inner(&f.gradient(&u), &w);
            assert!((an - fd).abs() <= 1e-6 * (1.0 + f.energy(&u).abs()), "{an} vs {fd}");
        }
    }

    #[test]
    fn ray_stationarity_of_first_mode() {
        // πt = t²·∫φ₁³ has root t* = π / 1.20042 ≈ 2.61707.
        let (b, nl) = setup(32);
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        let t_star = PI / CUBE_INTEGRAL;
        assert!((t_star - 2.61707).abs() < 1e-5);
        let g = f.gradient(&b.mode_vec(1).scaled(t_star));
        assert!(g[0].abs() < 1e-12, "{}", g[0]);
        // Even modes decouple by symmetry about x = 1/2; odd ones do not.
        assert!(g[1].abs() < 1e-12);
        assert!(g[2].abs() > 1e-3);
    }

    #[test]
    fn hessian_at_zero_is_diagonal_shift() {
        let (b, nl) = setup(12);
        let lambda = 4.0;
        let f = Functional::new(&b, &nl, ProblemParams { lambda });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_vec(&mut rng, 12, 1.0);
        let hw = f.hessian_apply(&b.zeros(), &w).unwrap();
        for k in 0..12 {
            assert_relative_eq!(hw[k], (1.0 - lambda / b.lambdas()[k]) * w[k], max_relative = 1e-14);
        }
        let u = random_vec(&mut rng, 12, 1.0);
        assert!(f.hessian_apply(&u, &b.zeros()).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hessian_is_self_adjoint_and_matches_jacobian() {
        let (b, nl) = setup(16);
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 5.0 });
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_vec(&mut rng, 16, 3.0);
        let jac = f.jacobian(&u).unwrap();
        for _ in 0..10 {
            let w = random_vec(&mut rng, 16, 1.0);
            let z = random_vec(&mut rng, 16, 1.0);
            let hw = f.hessian_apply(&u, &w).unwrap();
            let hz = f.hessian_apply(&u, &z).unwrap();
            assert!((b.h_inner(&hw, &z) - b.h_inner(&hz, &w)).abs() < 1e-8);
            let jw = &jac * &*w;
            assert!((jw - &*hw).amax() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_hessian_for_tables() {
        let (b, _) = setup(12);
        let t: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
        let g: Vec<f64> = t.iter().map(|&x: &f64| x.abs() * x).collect();
        let spec = NonlinearitySpec::CustomTable { p: 3.0, t, g, c1: None };
        let nl = Nonlinearity::from_spec(&spec).unwrap();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        let u = b.mode_vec(1).scaled(0.7);
        let hw = f.hessian_apply(&u, &b.mode_vec(2)).unwrap();
        assert!(hw.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn ambrosetti_rabinowitz_identity() {
        let (b, nl) = setup(24);
        let lambda = 2.3;
        let f = Functional::new(&b, &nl, ProblemParams { lambda });
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = nl.p();
        for _ in 0..20 {
            let u = random_vec(&mut rng, 24, 2.0);
            let k: f64 = rng.random_range(2.05..2.95);
            let fu = f.energy(&u);
            let dfu = b.h_inner(&f.gradient(&u), &u);
            let vals = b.eval(&u);
            let int_g = b.integrate(|q| nl.big_g(b.point(q), vals[q]));
            let lhs = k * fu - dfu;
            let rhs = (k / 2.0 - 1.0) * b.h_norm_sq(&u) - lambda * (k / 2.0 - 1.0) * b.l2_norm_sq(&u) + (p - k) * int_g;
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn morse_index_at_zero_counts_modes_below_lambda() {
        let (b, nl) = setup(12);
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 1.5 * PI });
        assert_eq!(f.morse_index(&b.zeros()).unwrap(), 1);
    }
}
