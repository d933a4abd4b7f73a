use nalgebra::DVector;

use super::{certify, CriticalPoint, Method, SolverOptions};
use crate::coef::CoefVec;
use crate::error::Result;
use crate::functional::Functional;
use crate::spectral::SpectralBasis;

/// Shifted inverse-distance deflation `M(u) = Π_r (‖u − r‖^{-2} + 1)`.
struct Deflation<'a> {
    basis: &'a SpectralBasis,
    roots: Vec<CoefVec>,
}

impl Deflation<'_> {
    fn factor(&self, u: &CoefVec) -> f64 {
        self.roots
            .iter()
            .map(|r| {
                let d2 = self.basis.h_dist(u, r).powi(2);
                1.0 / d2 + 1.0
            })
            .product()
    }

    /// Euclidean coefficient gradient of `ln M`.
    fn log_gradient(&self, u: &CoefVec) -> CoefVec {
        let mut out = CoefVec::zeros(u.len());
        for r in &self.roots {
            let diff = u - r;
            let q = self.basis.h_norm_sq(&diff);
            let coeff = -2.0 / (q + q * q);
            for k in 0..u.len() {
                out[k] += coeff * self.basis.lambdas()[k] * diff[k];
            }
        }
        out
    }
}

enum Outcome {
    Converged(CoefVec),
    Failed,
}

/// Damped Newton on the deflated residual `M(u)·∇f(u)` from one seed.
fn deflated_newton_run(f: &Functional, seed: &CoefVec, deflation: &Deflation, opts: &SolverOptions) -> Outcome {
    let basis = f.basis();
    let mut u = seed.clone();
    let merit = |u: &CoefVec| -> (f64, CoefVec) {
        let r = f.gradient(u);
        let m = deflation.factor(u);
        (m * m * basis.h_norm_sq(&r), r)
    };
    let (mut phi, mut res) = merit(&u);
    for _ in 0..opts.newton_max_iter {
        if !phi.is_finite() {
            return Outcome::Failed;
        }
        if basis.h_norm(&res) <= opts.residual_tol {
            return Outcome::Converged(u);
        }
        if basis.h_norm(&u) > opts.norm_cap {
            return Outcome::Failed;
        }
        let Ok(jac) = f.jacobian(&u) else { return Outcome::Failed };
        let rhs = -DVector::from_column_slice(res.as_slice());
        let newton = jac.clone().lu().solve(&rhs).filter(|d| d.iter().all(|x| x.is_finite()));
        let direction = match newton {
            Some(d) => {
                let d = CoefVec::from(d);
                if deflation.roots.is_empty() {
                    d
                } else {
                    // Sherman–Morrison: the deflated Newton step is a rescaled
                    // undeflated one.
                    let denom = 1.0 - deflation.log_gradient(&u).dot(&d);
                    if denom.abs() < 1e-14 {
                        gradient_direction(f, &jac, &res)
                    } else {
                        d.scaled(1.0 / denom)
                    }
                }
            }
            None => gradient_direction(f, &jac, &res),
        };

        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = u.axpy(s, &direction);
            let (tphi, tres) = merit(&trial);
            if tphi.is_finite() && tphi <= (1.0 - 2.0 * opts.armijo_c * s) * phi {
                u = trial;
                phi = tphi;
                res = tres;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return if basis.h_norm(&res) <= opts.residual_tol {
                Outcome::Converged(u)
            } else {
                Outcome::Failed
            };
        }
    }
    if basis.h_norm(&res) <= opts.residual_tol {
        Outcome::Converged(u)
    } else {
        Outcome::Failed
    }
}

/// Steepest descent direction for `½‖∇f‖²`, used when the Newton system is
/// singular.
fn gradient_direction(f: &Functional, jac: &nalgebra::DMatrix<f64>, res: &CoefVec) -> CoefVec {
    let mut weighted = res.clone();
    for (w, l) in weighted.iter_mut().zip(f.basis().lambdas()) {
        *w *= l;
    }
    let g = jac.transpose() * &*weighted;
    let g = CoefVec::from(g);
    // scale to the size of the residual so the unit step is meaningful
    let n = f.basis().h_norm(&g);
    if n > 0.0 {
        g.scaled(-f.basis().h_norm(res) / n)
    } else {
        g
    }
}

/// Runs deflated Newton from each seed in order, deflating `known` points and
/// every point found so far. Returns the new certified points; seeds that do
/// not converge are skipped.
pub fn newton_deflated(
    f: &Functional,
    seeds: &[CoefVec],
    known: &[CriticalPoint],
    opts: &SolverOptions,
) -> Result<Vec<CriticalPoint>> {
    newton_deflated_labeled(f, seeds.iter().enumerate().map(|(k, s)| (format!("seed {k}"), s.clone())), known, opts)
}

pub(crate) fn newton_deflated_labeled<I>(
    f: &Functional,
    seeds: I,
    known: &[CriticalPoint],
    opts: &SolverOptions,
) -> Result<Vec<CriticalPoint>>
where
    I: IntoIterator<Item = (String, CoefVec)>,
{
    let basis = f.basis();
    let mut deflation = Deflation {
        basis,
        roots: known.iter().map(|p| p.u.clone()).collect(),
    };
    let mut found: Vec<CriticalPoint> = Vec::new();
    for (label, seed) in seeds {
        basis.check(&seed)?;
        let Outcome::Converged(u) = deflated_newton_run(f, &seed, &deflation, opts) else {
            continue;
        };
        let too_close = deflation.roots.iter().any(|r| basis.h_dist(&u, r) <= opts.dedup_tol);
        if too_close {
            continue;
        }
        if let Some(cp) = certify(f, u, Method::NewtonDeflated, label, opts.residual_tol)? {
            deflation.roots.push(cp.u.clone());
            found.push(cp);
        }
    }
    Ok(found)
}

/// Undeflated Newton polish of a near-critical point.
pub fn refine(f: &Functional, u: &CoefVec, opts: &SolverOptions) -> Option<CoefVec> {
    let none = Deflation {
        basis: f.basis(),
        roots: Vec::new(),
    };
    match deflated_newton_run(f, u, &none, opts) {
        Outcome::Converged(v) => Some(v),
        Outcome::Failed => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Nonlinearity, ProblemParams};
    use crate::spectral::{build_basis, default_quad_order, DomainSpec};
    use std::f64::consts::PI;

    fn setup() -> (SpectralBasis, Nonlinearity) {
        let d = DomainSpec::unit_interval();
        (build_basis(&d, 24, default_quad_order(&d, 24)).unwrap(), Nonlinearity::power(3.0).unwrap())
    }

    #[test]
    fn zero_seed_converges_to_trivial_solution() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        let pts = newton_deflated(&f, &[b.zeros()], &[], &SolverOptions::default()).unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(b.h_norm(&pts[0].u), 0.0);
    }

    #[test]
    fn ray_seed_converges_to_positive_solution() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        let t = PI / (8.0 * 2f64.sqrt() / (3.0 * PI));
        let opts = SolverOptions::default();
        let pts = newton_deflated(&f, &[b.mode_vec(1).scaled(t)], &[], &opts).unwrap();
        assert_eq!(pts.len(), 1);
        let p = &pts[0];
        assert!(p.residual <= 1e-8);
        assert!(p.level > 0.0 && p.level <= PI * t * t / 6.0);
        assert_eq!(p.morse_estimate, Some(1));
        // positive profile: nodal values all > 0
        assert!(b.eval(&p.u).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn deflating_symmetric_pair_repels() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
        let opts = SolverOptions::default();
        let seed = b.mode_vec(1).scaled(2.6);
        let first = newton_deflated(&f, &[seed.clone()], &[], &opts).unwrap();
        let u = first[0].clone();
        let mut neg = u.clone();
        neg.u = -&u.u;
        let zero = CriticalPoint {
            u: b.zeros(),
            ..u.clone()
        };
        let known = vec![u.clone(), neg.clone(), zero];
        let second = newton_deflated(&f, &[seed], &known, &opts).unwrap();
        for p in &second {
            for k in &known {
                assert!(b.h_dist(&p.u, &k.u) > opts.dedup_tol);
            }
        }
    }

    #[test]
    fn refine_is_idempotent_at_solutions() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 1.0 });
        let opts = SolverOptions::default();
        let u = refine(&f, &b.mode_vec(1).scaled(2.0), &opts).unwrap();
        let v = refine(&f, &u, &opts).unwrap();
        assert!(b.h_dist(&u, &v) < 1e-8);
    }
}
