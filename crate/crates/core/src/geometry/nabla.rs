use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::spectral::{project, Part, SpectralBasis, SubspaceSplit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NablaCheckParams {
    /// `M = H_{i−1} ⊕ H_j^⊥`.
    pub split: SubspaceSplit,
    pub eps_lo: f64,
    pub eps_hi: f64,
    /// Bound on the distance `‖P_mid u‖` to `M`.
    pub gamma: f64,
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl NablaCheckParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.eps_lo && self.eps_lo < self.eps_hi && self.eps_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < eps_lo < eps_hi, got [{}, {}]", self.eps_lo, self.eps_hi)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma = {} must be positive", self.gamma)));
        }
        if self.sample_count < 1000 {
            return Err(Error::InvalidParameter(format!("sample_count = {} < 1000", self.sample_count)));
        }
        Ok(())
    }
}

/// Distance band small enough that the near-`M` saddles of `f` restricted
/// to `M + n`, at level about `½(1 − λ/λ_i)‖n‖²`, stay below `eps_lo`:
/// half of `√(2 eps_lo / (1 − λ/λ_i))`. Requires `λ < λ_i`.
pub fn admissible_gamma(basis: &SpectralBasis, lambda: f64, split: &SubspaceSplit, eps_lo: f64) -> Result<f64> {
    let li = basis.lambda(split.i);
    if !(lambda < li && eps_lo > 0.0) {
        return Err(Error::InvalidParameter(format!("need lambda < lambda_i = {li} and eps_lo > 0")));
    }
    Ok(0.5 * (2.0 * eps_lo / (1.0 - lambda / li)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NablaEstimate {
    /// Smallest `‖P_M ∇f(u)‖` found with `f(u)` in the window and
    /// `d(u, M) ≤ γ`.
    pub inf_estimate: f64,
    pub witness: CoefVec,
    pub witness_level: f64,
    pub witness_distance: f64,
    pub samples_in_window: usize,
    pub sample_count: usize,
    pub rng_seed: u64,
    /// Range of sampled energies, before level targeting.
    pub sampled_min: f64,
    pub sampled_max: f64,
}

const POLISH_COUNT: usize = 8;
const POLISH_ITER: usize = 200;

struct Sample {
    u: Option<CoefVec>,
    lo: f64,
    hi: f64,
}

fn projected_gradient(f: &Functional, split: &SubspaceSplit, u: &CoefVec) -> CoefVec {
    let g = f.gradient(u);
    &project(&g, split, Part::Low) + &project(&g, split, Part::High)
}

fn gaussian_on(basis: &SpectralBasis, range: std::ops::Range<usize>, rng: &mut ChaCha8Rng) -> CoefVec {
    let mut u = basis.zeros();
    for k in range {
        let z: f64 = StandardNormal.sample(rng);
        u[k] = z / basis.lambdas()[k].sqrt();
    }
    u
}

/// One sample `t·m + n`: a random unit direction `m` in `M`, a random `n`
/// in the mid block with `‖n‖ ≤ γ`, and `t` chosen so that `f` hits a
/// random target level in the window when the ray crosses it.
fn draw(f: &Functional, chk: &NablaCheckParams, index: usize) -> Sample {
    let basis = f.basis();
    let n_modes = basis.len();
    let split = &chk.split;
    let mut rng = ChaCha8Rng::seed_from_u64(chk.rng_seed);
    rng.set_stream(index as u64);

    let mut m = &gaussian_on(basis, split.range(Part::Low, n_modes), &mut rng)
        + &gaussian_on(basis, split.range(Part::High, n_modes), &mut rng);
    let mn = basis.h_norm(&m);
    if mn > 0.0 {
        m = m.scaled(1.0 / mn);
    }
    let mid = split.range(Part::Mid, n_modes);
    let mut n = gaussian_on(basis, mid.clone(), &mut rng);
    let radius = chk.gamma * rng.random::<f64>().powf(1.0 / mid.len() as f64);
    let nn = basis.h_norm(&n);
    if nn > 0.0 {
        n = n.scaled(radius / nn);
    }
    let target = rng.random_range(chk.eps_lo..chk.eps_hi);

    let at = |t: f64| f.energy(&n.axpy(t, &m));
    let mut lo = at(0.0);
    let mut hi = lo;
    let mut prev = (0.0, lo - target);
    let mut bracket = None;
    for k in -12..=8 {
        let t = 2f64.powi(k);
        let v = at(t);
        lo = lo.min(v);
        hi = hi.max(v);
        if (v - target).signum() != prev.1.signum() {
            bracket = Some((prev.0, t, prev.1));
            break;
        }
        prev = (t, v - target);
    }
    let u = bracket.map(|(mut a, mut b, fa)| {
        for _ in 0..60 {
            let c = 0.5 * (a + b);
            if ((at(c) - target) > 0.0) == (fa > 0.0) {
                a = c;
            } else {
                b = c;
            }
        }
        n.axpy(0.5 * (a + b), &m)
    });
    Sample { u, lo, hi }
}

/// Sampling plus local descent estimate of
/// `inf { ‖P_M ∇f(u)‖ : eps_lo ≤ f(u) ≤ eps_hi, d(u, M) ≤ γ }`.
/// A positive value is evidence, not proof, of the condition.
pub fn nabla_condition_estimate(f: &Functional, chk: &NablaCheckParams) -> Result<NablaEstimate> {
    chk.validate()?;
    let basis = f.basis();
    let split = chk.split;
    let n_modes = basis.len();
    if !(1 <= split.i && split.i <= split.j && split.j < n_modes) {
        return Err(Error::InvalidParameter(format!("split (i={}, j={}) outside the basis", split.i, split.j)));
    }
    let samples: Vec<Sample> = (0..chk.sample_count).into_par_iter().map(|s| draw(f, chk, s)).collect();
    let sampled_min = samples.iter().map(|s| s.lo).fold(f64::INFINITY, f64::min);
    let sampled_max = samples.iter().map(|s| s.hi).fold(f64::NEG_INFINITY, f64::max);

    let in_window = |u: &CoefVec| {
        let v = f.energy(u);
        let d = basis.h_norm(&project(u, &split, Part::Mid));
        (chk.eps_lo <= v && v <= chk.eps_hi && d <= chk.gamma).then_some((v, d))
    };
    let mut scored: Vec<(f64, CoefVec)> = samples
        .into_iter()
        .filter_map(|s| s.u)
        .filter(|u| in_window(u).is_some())
        .map(|u| (basis.h_norm(&projected_gradient(f, &split, &u)), u))
        .collect();
    if scored.is_empty() {
        return Err(Error::EmptyLevelWindow {
            lo: chk.eps_lo,
            hi: chk.eps_hi,
            min: sampled_min,
            max: sampled_max,
        });
    }
    let samples_in_window = scored.len();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.truncate(POLISH_COUNT);

    let polished: Vec<(f64, CoefVec)> = scored
        .into_par_iter()
        .map(|(value, u)| polish(f, &split, u, value, &in_window))
        .collect();
    let (inf_estimate, witness) = polished
        .into_iter()
        .fold(None, |best: Option<(f64, CoefVec)>, x| match best {
            Some(b) if b.0 <= x.0 => Some(b),
            _ => Some(x),
        })
        .expect("at least one sample in window");
    let (witness_level, witness_distance) = in_window(&witness).expect("polish keeps the witness admissible");
    Ok(NablaEstimate {
        inf_estimate,
        witness,
        witness_level,
        witness_distance,
        samples_in_window,
        sample_count: chk.sample_count,
        rng_seed: chk.rng_seed,
        sampled_min,
        sampled_max,
    })
}

/// Armijo descent on `½‖P_M ∇f‖²`, whose extension-metric gradient is
/// `Hess f(u) · P_M ∇f(u)`, rejecting steps that leave the admissible set.
fn polish<W>(f: &Functional, split: &SubspaceSplit, mut u: CoefVec, mut value: f64, admissible: &W) -> (f64, CoefVec)
where
    W: Fn(&CoefVec) -> Option<(f64, f64)>,
{
    let basis = f.basis();
    let mut step: f64 = 1.0;
    for _ in 0..POLISH_ITER {
        let q = projected_gradient(f, split, &u);
        let Ok(dir) = f.hessian_apply(&u, &q) else { break };
        let slope = basis.h_norm_sq(&dir);
        if slope == 0.0 {
            break;
        }
        let phi = 0.5 * value * value;
        let mut s = (2.0 * step).min(16.0);
        let mut accepted = None;
        for _ in 0..40 {
            let trial = u.axpy(-s, &dir);
            if admissible(&trial).is_some() {
                let tv = basis.h_norm(&projected_gradient(f, split, &trial));
                if 0.5 * tv * tv <= phi - 1e-4 * s * slope {
                    accepted = Some((trial, tv));
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((nu, nv)) => {
                u = nu;
                value = nv;
                step = s;
            }
            None => break,
        }
    }
    (value, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Nonlinearity, ProblemParams};
    use crate::spectral::{build_basis, default_quad_order, DomainSpec};

    fn setup() -> (SpectralBasis, Nonlinearity) {
        let d = DomainSpec::unit_square();
        (build_basis(&d, 12, default_quad_order(&d, 12)).unwrap(), Nonlinearity::power(3.0).unwrap())
    }

    fn params(b: &SpectralBasis, lo: f64, hi: f64) -> NablaCheckParams {
        NablaCheckParams {
            split: SubspaceSplit::new(b, 2, 3).unwrap(),
            eps_lo: lo,
            eps_hi: hi,
            gamma: 0.1,
            sample_count: 1000,
            rng_seed: 42,
        }
    }

    #[test]
    fn positive_between_clusters() {
        let (b, nl) = setup();
        let lambda = 0.5 * (b.lambda(1) + b.lambda(2));
        let f = Functional::new(&b, &nl, ProblemParams { lambda });
        let est = nabla_condition_estimate(&f, &params(&b, 0.05, 0.5)).unwrap();
        assert!(est.inf_estimate > 0.0, "{est:?}");
        assert!(est.samples_in_window > 0);
        assert!(est.witness_distance <= 0.1 && (0.05..=0.5).contains(&est.witness_level));
        // deterministic under parallel sampling
        let again = nabla_condition_estimate(&f, &params(&b, 0.05, 0.5)).unwrap();
        assert_eq!(est.inf_estimate, again.inf_estimate);
    }

    #[test]
    fn empty_window_is_reported() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 5.0 });
        let err = nabla_condition_estimate(&f, &params(&b, 1e6, 2e6)).unwrap_err();
        assert!(matches!(err, Error::EmptyLevelWindow { .. }));
    }

    #[test]
    fn rejects_bad_params() {
        let (b, nl) = setup();
        let f = Functional::new(&b, &nl, ProblemParams { lambda: 5.0 });
        let mut p = params(&b, 0.5, 0.05);
        assert!(nabla_condition_estimate(&f, &p).is_err());
        p = params(&b, 0.05, 0.5);
        p.sample_count = 10;
        assert!(nabla_condition_estimate(&f, &p).is_err());
    }
}
