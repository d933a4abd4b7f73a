use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;

/// Smallest dyadic `t = 2^k` with `f(t·d) < −1`.
pub fn find_far_endpoint(f: &Functional, direction: &CoefVec) -> Result<f64> {
    for k in -30..=60 {
        let t = 2f64.powi(k);
        if f.energy(&direction.scaled(t)) < -1.0 {
            return Ok(t);
        }
    }
    Err(Error::NoFarEndpoint)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayMax {
    pub t_star: f64,
    pub value: f64,
    pub t_far: f64,
}

const GRID: usize = 64;

/// Maximizes `t ↦ f(t·d)` over `[0, t_far]` by a coarse scan followed by
/// golden-section search. Returns `(0, 0)` when the ray never rises above 0.
pub fn ray_max(f: &Functional, direction: &CoefVec) -> Result<RayMax> {
    f.basis().check(direction)?;
    if direction.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroDirection);
    }
    let t_far = find_far_endpoint(f, direction).unwrap_or(2f64.powi(60));
    let phi = |t: f64| f.energy(&direction.scaled(t));

    let mut hi = t_far;
    while hi > t_far * 1e-12 {
        let values: Vec<f64> = (0..=GRID).map(|m| phi(hi * m as f64 / GRID as f64)).collect();
        let mut best = 0;
        for (m, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = m;
            }
        }
        if best == 0 {
            hi /= GRID as f64;
            continue;
        }
        let h = hi / GRID as f64;
        let lo_t = h * (best - 1) as f64;
        let hi_t = (h * (best + 1) as f64).min(hi);
        let golden = golden_max(&phi, lo_t, hi_t, 1e-12 * hi);
        let golden_value = phi(golden);
        let (t_star, value) = if golden_value >= values[best] {
            (golden, golden_value)
        } else {
            (h * best as f64, values[best])
        };
        if value <= 0.0 {
            break;
        }
        return Ok(RayMax { t_star, value, t_far });
    }
    Ok(RayMax {
        t_star: 0.0,
        value: 0.0,
        t_far,
    })
}

pub(crate) fn golden_max<F: Fn(f64) -> f64>(phi: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d);
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSup {
    pub value: f64,
    pub argmax: CoefVec,
    pub restarts: usize,
    pub nonconverged: usize,
}

/// `sup f_λ(H_j)` by multi-start trust-region maximization over the span of
/// the first `j` modes. Starts are the ray maxima along `±e_k` (k ≤ j) and
/// along `j + 1` random directions.
pub fn sup_on_subspace(f: &Functional, j: usize, rng_seed: u64) -> Result<SubspaceSup> {
    let basis = f.basis();
    if j == 0 || j > basis.len() {
        return Err(Error::InvalidParameter(format!("subspace index j = {j} outside 1..={}", basis.len())));
    }
    if f.lambda() >= basis.lambda(j) {
        // f ≤ 0 on H_j: quadratic part is nonpositive and G ≥ 0.
        return Ok(SubspaceSup {
            value: 0.0,
            argmax: basis.zeros(),
            restarts: 0,
            nonconverged: 0,
        });
    }
    let mut directions = Vec::new();
    for k in 1..=j {
        let e = basis.unit_mode(k);
        directions.push(e.clone());
        directions.push(-&e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..=j {
        let mut d = basis.zeros();
        for k in 0..j {
            let z: f64 = StandardNormal.sample(&mut rng);
            d[k] = z / basis.lambdas()[k].sqrt();
        }
        directions.push(d);
    }

    let mut best = SubspaceSup {
        value: 0.0,
        argmax: basis.zeros(),
        restarts: directions.len(),
        nonconverged: 0,
    };
    for d in &directions {
        let ray = ray_max(f, d)?;
        let start = d.scaled(ray.t_star);
        let (point, value, converged) = trust_region_max(f, j, &start);
        if !converged {
            best.nonconverged += 1;
        }
        if value > best.value {
            best.value = value;
            best.argmax = point;
        }
    }
    Ok(best)
}

/// Trust-region Newton maximization of `f` over the span of the first `j`
/// modes, in extension-orthonormal coordinates `c_k = √λ_k a_k`.
fn trust_region_max(f: &Functional, j: usize, start: &CoefVec) -> (CoefVec, f64, bool) {
    let basis = f.basis();
    let sq: Vec<f64> = basis.lambdas()[..j].iter().map(|l| l.sqrt()).collect();
    let to_u = |c: &DVector<f64>| {
        let mut u = basis.zeros();
        for k in 0..j {
            u[k] = c[k] / sq[k];
        }
        u
    };
    // Work with φ = −f so the step minimizes a model.
    let phi = |c: &DVector<f64>| -f.energy(&to_u(c));
    let grad = |c: &DVector<f64>| {
        let g = f.gradient(&to_u(c));
        DVector::from_fn(j, |k, _| -sq[k] * g[k])
    };
    let hess = |c: &DVector<f64>| -> Option<DMatrix<f64>> {
        let h = f.hessian_matrix(&to_u(c)).ok()?;
        Some(DMatrix::from_fn(j, j, |k, l| -h[(k, l)] / (sq[k] * sq[l])))
    };

    let mut c = DVector::from_fn(j, |k, _| start[k] * sq[k]);
    let mut val = phi(&c);
    let mut radius = (c.norm() * 0.5).max(1e-3);
    let mut converged = false;
    for _ in 0..300 {
        let g = grad(&c);
        if g.norm() <= 1e-11 * (1.0 + val.abs()) {
            converged = true;
            break;
        }
        let Some(h) = hess(&c) else { break };
        let s = trust_region_step(&h, &g, radius);
        let predicted = -(g.dot(&s) + 0.5 * s.dot(&(&h * &s)));
        let trial = &c + &s;
        let tv = phi(&trial);
        let actual = val - tv;
        let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };
        if rho < 0.25 {
            radius *= 0.25;
        } else if rho > 0.75 && s.norm() >= 0.99 * radius {
            radius *= 2.0;
        }
        if rho > 1e-4 {
            c = trial;
            val = tv;
        }
        if radius < 1e-15 * (1.0 + c.norm()) {
            converged = grad(&c).norm() <= 1e-8 * (1.0 + val.abs());
            break;
        }
    }
    (to_u(&c), -val, converged)
}

/// Solves `min gᵀs + ½ sᵀHs` subject to `‖s‖ ≤ radius` through the
/// eigendecomposition of `H` and bisection on the shift.
fn trust_region_step(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let gq = q.transpose() * g;
    let step_norm = |mu: f64| -> f64 { gq.iter().zip(lam.iter()).map(|(gi, li)| (gi / (li + mu)).powi(2)).sum::<f64>().sqrt() };
    let step = |mu: f64| -> DVector<f64> {
        let coeffs = DVector::from_fn(gq.len(), |i, _| -gq[i] / (lam[i] + mu));
        q * coeffs
    };
    let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    if lmin > 0.0 && step_norm(0.0) <= radius {
        return step(0.0);
    }
    let mut lo = (-lmin).max(0.0);
    let lo_eps = lo + 1e-14 * (1.0 + lo.abs());
    if step_norm(lo_eps) < radius {
        // hard case: pad along the lowest eigenvector
        let s = step(lo_eps);
        let imin = (0..lam.len()).min_by(|&a, &b| lam[a].total_cmp(&lam[b])).unwrap();
        let v = q.column(imin).into_owned();
        let tau = (radius * radius - s.norm_squared()).max(0.0).sqrt();
        return s + v * tau;
    }
    lo = lo_eps;
    let mut hi = lo + g.norm() / radius + 1.0;
    while step_norm(hi) > radius {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if step_norm(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    step(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Nonlinearity, ProblemParams};
    use crate::spectral::{build_basis, default_quad_order, DomainSpec, SpectralBasis};
    use std::f64::consts::PI;

    fn setup() -> (SpectralBasis, Nonlinearity) {
        let d = DomainSpec::unit_interval();
        (build_basis(&d, 32, default_quad_order(&d, 32)).unwrap(), Nonlinearity::power(3.0).unwrap())
    }

    // Oracle: f(tφ₁) = ½πt² − c t³/3 with c = 8√2/(3π); stationary at t = π/c,
    // maximum π t²/6.
    fn closed_form_ray() -> (f64, f64) {
        let c = 8.0 * 2f64.sqrt() / (3.0 * PI);
        let t = PI / c;
        (t, PI * t * t / 6.0)
    }

    #[test]
    fn ray_max_on_first_mode() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        let r = ray_max(&f, &b.mode_vec(1)).unwrap();
        let (t, v) = closed_form_ray();
        assert!((t - 2.61707).abs() < 1e-5 && (v - 3.5860).abs() < 5e-4);
        assert!((r.t_star - t).abs() < 1e-7, "{} vs {t}", r.t_star);
        assert!((r.value - v).abs() < 1e-11);
        assert!(f.energy(&b.mode_vec(1).scaled(r.t_far)) < -1.0);
        assert!(f.energy(&b.mode_vec(1).scaled(r.t_far / 2.0)) >= -1.0);
    }

    #[test]
    fn ray_max_vanishes_above_first_eigenvalue() {
        let (b, nl) = setup();
        for lambda in [PI, 4.0, 10.0] {
            let f = Functional::new(&b, &nl, ProblemParams { lambda });
            let r = ray_max(&f, &b.mode_vec(1)).unwrap();
            assert_eq!((r.t_star, r.value), (0.0, 0.0));
            // sign analysis on sampled t
            for k in 1..50 {
                assert!(f.energy(&b.mode_vec(1).scaled(k as f64 * 0.2)) <= 0.0);
            }
        }
    }

    #[test]
    fn ray_max_is_reparametrization_invariant() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 1.0 });
        let d = &b.mode_vec(1) + &b.mode_vec(2).scaled(0.3);
        let r1 = ray_max(&f, &d).unwrap();
        let r2 = ray_max(&f, &d.scaled(2.0)).unwrap();
        assert!((r1.value - r2.value).abs() <= 1e-12 * r1.value);
        assert!((r1.t_star - 2.0 * r2.t_star).abs() <= 1e-7 * r1.t_star);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        assert!(matches!(ray_max(&f, &b.zeros()), Err(Error::ZeroDirection)));
    }

    #[test]
    fn sup_on_one_dimensional_subspace_equals_ray_max() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        let s = sup_on_subspace(&f, 1, 42).unwrap();
        let (t, v) = closed_form_ray();
        assert!((s.value - v).abs() < 1e-11);
        assert!((s.argmax[0].abs() - t).abs() < 1e-7);
        assert!(s.restarts >= 3);
        assert_eq!(s.nonconverged, 0);
    }

    #[test]
    fn sup_vanishes_at_and_above_lambda_j() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 2.0 * PI });
        let s = sup_on_subspace(&f, 2, 42).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(s.argmax.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sup_decreases_with_lambda() {
        let (b, nl) = setup();
        let mut last = f64::INFINITY;
        for lambda in [0.0, 1.0, 2.0, 3.0, 4.0, 5.0] {
            let f = Functional::new(&b, &nl, ProblemParams { lambda });
            let s = sup_on_subspace(&f, 2, 7).unwrap();
            assert!(s.value <= last);
            last = s.value;
        }
    }

    #[test]
    fn trust_region_step_respects_radius() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let s = trust_region_step(&h, &g, 0.5);
        assert!((s.norm() - 0.5).abs() < 1e-10);
        let h = DMatrix::identity(2, 2);
        let s = trust_region_step(&h, &g, 10.0);
        assert!((s + &g).norm() < 1e-14);
    }
}
