//! Small first-order optimizers in the extension metric, restricted to a
//! block of modes: Armijo steepest descent on spheres and balls.

use std::ops::Range;

use crate::coef::CoefVec;
use crate::spectral::SpectralBasis;

/// Armijo backtracking parameters shared by every descent flow.
#[derive(Debug, Clone, Copy)]
pub struct LineSearch {
    pub c: f64,
    pub max_halvings: usize,
    pub initial_step: f64,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            c: 1e-4,
            max_halvings: 40,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalOpt {
    pub value: f64,
    pub point: CoefVec,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Zeroes every coefficient outside `support`.
pub fn restrict(v: &mut CoefVec, support: &Range<usize>) {
    for k in 0..v.len() {
        if !support.contains(&k) {
            v[k] = 0.0;
        }
    }
}

/// Gradient size below which Armijo decrease is lost in rounding of `f`.
fn roundoff_floor(value: f64, ls: LineSearch) -> f64 {
    (4.0 * f64::EPSILON * (1.0 + value.abs()) / ls.c).sqrt()
}

/// Minimizes `obj` (value and extension-metric gradient) over the sphere of
/// radius `radius` inside the span of `support`, by Riemannian steepest
/// descent with normalisation as retraction.
pub fn minimize_on_sphere<F>(
    basis: &SpectralBasis,
    obj: &F,
    start: &CoefVec,
    radius: f64,
    support: &Range<usize>,
    ls: LineSearch,
    max_iter: usize,
    tol: f64,
) -> LocalOpt
where
    F: Fn(&CoefVec) -> (f64, CoefVec),
{
    let to_sphere = |v: &CoefVec| {
        let mut w = v.clone();
        restrict(&mut w, support);
        let n = basis.h_norm(&w);
        w.scaled(radius / n)
    };
    let mut u = to_sphere(start);
    let (mut val, mut grad) = obj(&u);
    let mut step = ls.initial_step;
    let mut gnorm = f64::INFINITY;
    for it in 0..max_iter {
        restrict(&mut grad, support);
        let radial = basis.h_inner(&grad, &u) / (radius * radius);
        let tangent = grad.axpy(-radial, &u);
        gnorm = basis.h_norm(&tangent);
        if gnorm <= tol {
            return LocalOpt {
                value: val,
                point: u,
                grad_norm: gnorm,
                iterations: it,
                converged: true,
            };
        }
        let mut s = (2.0 * step).min(ls.initial_step * 16.0);
        let mut accepted = None;
        for _ in 0..=ls.max_halvings {
            let trial = to_sphere(&u.axpy(-s, &tangent));
            let (tv, tg) = obj(&trial);
            if tv <= val - ls.c * s * gnorm * gnorm {
                accepted = Some((trial, tv, tg));
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some((nu, nv, ng)) => {
                u = nu;
                val = nv;
                grad = ng;
                step = s;
            }
            None => {
                return LocalOpt {
                    value: val,
                    point: u,
                    grad_norm: gnorm,
                    iterations: it,
                    converged: gnorm <= roundoff_floor(val, ls),
                }
            }
        }
    }
    LocalOpt {
        value: val,
        point: u,
        grad_norm: gnorm,
        iterations: max_iter,
        converged: false,
    }
}

/// Minimizes over the closed ball of radius `radius` in the span of
/// `support`, by projected steepest descent.
pub fn minimize_on_ball<F>(
    basis: &SpectralBasis,
    obj: &F,
    start: &CoefVec,
    radius: f64,
    support: &Range<usize>,
    ls: LineSearch,
    max_iter: usize,
    tol: f64,
) -> LocalOpt
where
    F: Fn(&CoefVec) -> (f64, CoefVec),
{
    let to_ball = |v: &CoefVec| {
        let mut w = v.clone();
        restrict(&mut w, support);
        let n = basis.h_norm(&w);
        if n > radius {
            w.scaled(radius / n)
        } else {
            w
        }
    };
    let mut u = to_ball(start);
    let (mut val, mut grad) = obj(&u);
    let mut step = ls.initial_step;
    let mut gnorm = f64::INFINITY;
    for it in 0..max_iter {
        restrict(&mut grad, support);
        // projected-gradient stationarity measure
        let probe = to_ball(&u.axpy(-1.0, &grad));
        gnorm = basis.h_dist(&probe, &u);
        if gnorm <= tol {
            return LocalOpt {
                value: val,
                point: u,
                grad_norm: gnorm,
                iterations: it,
                converged: true,
            };
        }
        let mut s = (2.0 * step).min(ls.initial_step * 16.0);
        let mut accepted = None;
        for _ in 0..=ls.max_halvings {
            let trial = to_ball(&u.axpy(-s, &grad));
            let (tv, tg) = obj(&trial);
            let moved = basis.h_dist(&trial, &u);
            if tv <= val - ls.c * moved * moved / s.max(f64::MIN_POSITIVE) {
                accepted = Some((trial, tv, tg));
                break;
            }
            s *= 0.5;
        }
        match accepted {
            Some((nu, nv, ng)) => {
                u = nu;
                val = nv;
                grad = ng;
                step = s;
            }
            None => {
                return LocalOpt {
                    value: val,
                    point: u,
                    grad_norm: gnorm,
                    iterations: it,
                    converged: gnorm <= roundoff_floor(val, ls),
                }
            }
        }
    }
    LocalOpt {
        value: val,
        point: u,
        grad_norm: gnorm,
        iterations: max_iter,
        converged: false,
    }
}

/// Deterministic start directions inside `support`: `±e_k` for the first
/// `n_single` modes and `±(e_a ± e_b)/√2` for pairs among the first
/// `n_pair` modes (unit extension norm).
pub fn structured_starts(basis: &SpectralBasis, support: &Range<usize>, n_single: usize, n_pair: usize) -> Vec<CoefVec> {
    let idx: Vec<usize> = support.clone().collect();
    let unit = |k: usize| basis.unit_mode(k + 1);
    let mut out = Vec::new();
    for &k in idx.iter().take(n_single) {
        out.push(unit(k));
        out.push(-&unit(k));
    }
    let m = idx.len().min(n_pair);
    for a in 0..m {
        for b in (a + 1)..m {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let (ua, ub) = (unit(idx[a]), unit(idx[b]));
            out.push((&ua + &ub).scaled(s));
            out.push((&ua - &ub).scaled(s));
            out.push((&ub - &ua).scaled(s));
            out.push((-&(&ua + &ub)).scaled(s));
        }
    }
    out
}

/// Multi-start [`minimize_on_sphere`]: structured starts inside `support`
/// plus `extra` caller-supplied ones. Returns the lowest local minimum and
/// the number of starts that did not converge.
pub fn min_on_sphere_multistart<F>(
    basis: &SpectralBasis,
    obj: &F,
    radius: f64,
    support: &Range<usize>,
    extra: &[CoefVec],
    ls: LineSearch,
) -> (LocalOpt, usize)
where
    F: Fn(&CoefVec) -> (f64, CoefVec),
{
    let width = support.len();
    let mut starts = structured_starts(basis, support, width.min(8), width.min(4));
    starts.extend(extra.iter().cloned());
    let mut best: Option<LocalOpt> = None;
    let mut nonconverged = 0;
    for s in &starts {
        let mut probe = s.clone();
        restrict(&mut probe, support);
        if basis.h_norm(&probe) == 0.0 {
            continue;
        }
        let r = minimize_on_sphere(basis, obj, &probe, radius, support, ls, 2000, 1e-10);
        if !r.converged {
            nonconverged += 1;
        }
        if best.as_ref().map_or(true, |b| r.value < b.value) {
            best = Some(r);
        }
    }
    (best.expect("support is nonempty"), nonconverged)
}
