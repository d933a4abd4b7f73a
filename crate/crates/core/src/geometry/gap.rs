use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::minimax::LinkingGeometry;
use crate::optim::{min_on_sphere_multistart, minimize_on_ball, minimize_on_sphere, structured_starts, LineSearch};
use crate::spectral::{SpectralBasis, SubspaceSplit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    /// Random starts added to the structured ones on every piece.
    pub random_starts: usize,
    pub rng_seed: u64,
    /// `certified` requires `gap > margin`.
    pub margin: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            random_starts: 8,
            rng_seed: 42,
            margin: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rho: f64,
    #[serde(rename = "R")]
    pub r_big: f64,
    #[serde(rename = "sup_T")]
    pub sup_t: f64,
    /// Sup over the `R`-sphere of `H_j`.
    pub sup_t_sphere: f64,
    /// Sup over the `R`-ball of `H_{i−1}` (0 when `i = 1`).
    pub sup_t_ball: f64,
    #[serde(rename = "inf_S")]
    pub inf_s: f64,
    pub gap: f64,
    pub certified: bool,
    pub margin: f64,
    pub starts: usize,
    pub rng_seed: u64,
    pub nonconverged: usize,
}

fn random_starts(basis: &SpectralBasis, support: &Range<usize>, count: usize, rng: &mut ChaCha8Rng) -> Vec<CoefVec> {
    (0..count)
        .map(|_| {
            let mut u = basis.zeros();
            for k in support.clone() {
                let z: f64 = StandardNormal.sample(rng);
                u[k] = z / basis.lambdas()[k].sqrt();
            }
            u
        })
        .collect()
}

struct PieceSup {
    value: f64,
    starts: usize,
    nonconverged: usize,
}

/// `sup f` over the `radius`-sphere in the span of `support`.
fn sup_on_sphere(f: &Functional, radius: f64, support: &Range<usize>, extra: &[CoefVec]) -> PieceSup {
    let neg = |u: &CoefVec| {
        let (v, g) = f.energy_and_gradient(u);
        (-v, -&g)
    };
    let (best, nonconverged) = min_on_sphere_multistart(f.basis(), &neg, radius, support, extra, LineSearch::default());
    let width = support.len();
    PieceSup {
        value: -best.value,
        starts: structured_starts(f.basis(), support, width.min(8), width.min(4)).len() + extra.len(),
        nonconverged,
    }
}

/// `sup f` over the closed `radius`-ball in the span of `support`.
fn sup_on_ball(f: &Functional, radius: f64, support: &Range<usize>, extra: &[CoefVec]) -> PieceSup {
    let basis = f.basis();
    if support.is_empty() {
        return PieceSup {
            value: 0.0,
            starts: 0,
            nonconverged: 0,
        };
    }
    let neg = |u: &CoefVec| {
        let (v, g) = f.energy_and_gradient(u);
        (-v, -&g)
    };
    let width = support.len();
    let mut starts: Vec<CoefVec> = structured_starts(basis, support, width.min(8), width.min(4))
        .into_iter()
        .flat_map(|u| [u.scaled(0.5 * radius), u.scaled(radius)])
        .collect();
    starts.extend(extra.iter().cloned());
    let mut out = PieceSup {
        value: 0.0,
        starts: starts.len() + 1,
        nonconverged: 0,
    };
    for s in &starts {
        let r = minimize_on_ball(basis, &neg, s, radius, support, LineSearch::default(), 2000, 1e-10);
        if !r.converged {
            out.nonconverged += 1;
        }
        out.value = out.value.max(-r.value);
    }
    out
}

/// Estimates `sup f(T)` and `inf f(S)` for the sets of the linking lemma:
/// `T` is the `R`-sphere of `H_j` together with the `R`-ball of `H_{i−1}`,
/// `S` is the `ρ`-sphere of `H_{i−1}^⊥`.
pub fn linking_gap(f: &Functional, geom: &LinkingGeometry, sampler: &SamplerOptions) -> Result<GapReport> {
    let basis = f.basis();
    let (rho, r_big) = (geom.rho, geom.r_big);
    if !(rho > 0.0 && r_big > rho && r_big.is_finite()) {
        return Err(Error::InvalidParameter(format!("need 0 < rho < R, got rho = {rho}, R = {r_big}")));
    }
    let SubspaceSplit { i, j } = geom.split;
    if !(1 <= i && i <= j && j < basis.len()) {
        return Err(Error::InvalidParameter(format!("split (i={i}, j={j}) outside the basis")));
    }
    let n = basis.len();
    let (low, hj, high) = (0..i - 1, 0..j, i - 1..n);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.rng_seed);
    let extra_hj = random_starts(basis, &hj, sampler.random_starts, &mut rng);
    let extra_low = random_starts(basis, &low, if low.is_empty() { 0 } else { sampler.random_starts }, &mut rng);
    let extra_high = random_starts(basis, &high, sampler.random_starts, &mut rng);

    let sphere = sup_on_sphere(f, r_big, &hj, &extra_hj);
    let ball = sup_on_ball(f, r_big, &low, &extra_low);
    let obj = |u: &CoefVec| f.energy_and_gradient(u);
    let (inf, inf_nonconverged) = min_on_sphere_multistart(basis, &obj, rho, &high, &extra_high, LineSearch::default());

    let sup_t = sphere.value.max(ball.value);
    let gap = inf.value - sup_t;
    let width = high.len();
    Ok(GapReport {
        rho,
        r_big,
        sup_t,
        sup_t_sphere: sphere.value,
        sup_t_ball: ball.value,
        inf_s: inf.value,
        gap,
        certified: gap > sampler.margin,
        margin: sampler.margin,
        starts: sphere.starts
            + ball.starts
            + structured_starts(basis, &high, width.min(8), width.min(4)).len()
            + extra_high.len(),
        rng_seed: sampler.rng_seed,
        nonconverged: sphere.nonconverged + ball.nonconverged + inf_nonconverged,
    })
}

/// Selection-grade `inf f` on a sphere: starts `±e_k` on the first four
/// modes of `support` plus `extra`. The chosen radius is re-estimated with
/// the full start set afterwards.
fn coarse_inf_on_sphere(f: &Functional, radius: f64, support: &Range<usize>, extra: &[CoefVec]) -> f64 {
    let basis = f.basis();
    let obj = |u: &CoefVec| f.energy_and_gradient(u);
    structured_starts(basis, support, 4, 0)
        .iter()
        .chain(extra)
        .map(|s| minimize_on_sphere(basis, &obj, s, radius, support, LineSearch::default(), 500, 1e-8).value)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusScan {
    /// `(ρ, inf f(S_ρ))` along the log grid.
    pub rho_grid: Vec<(f64, f64)>,
    pub rho: f64,
    #[serde(rename = "R")]
    pub r_big: f64,
    pub inf_s: f64,
    /// `sup f` on the `R`-sphere of `H_j` at the chosen `R`.
    pub sup_sphere: f64,
}

const RHO_POINTS: usize = 13;
const MAX_DYADIC: i32 = 30;

/// Line scan for the linking radii: `ρ` maximizes `inf f(S_ρ)` over a log
/// grid in `[1e−3, 1]`, `R` is the smallest power of two above `ρ` with
/// `sup f` negative on the `R`-sphere of `H_j`.
pub fn scan_linking_radii(f: &Functional, split: SubspaceSplit, sampler: &SamplerOptions) -> Result<RadiusScan> {
    let basis = f.basis();
    let n = basis.len();
    let high = split.i - 1..n;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.rng_seed);
    let extra = random_starts(basis, &high, sampler.random_starts, &mut rng);
    let rho_grid: Vec<(f64, f64)> = (0..RHO_POINTS)
        .into_par_iter()
        .map(|m| {
            let rho = 10f64.powf(-3.0 + 3.0 * m as f64 / (RHO_POINTS - 1) as f64);
            (rho, coarse_inf_on_sphere(f, rho, &high, &extra))
        })
        .collect();
    // first maximizer on ties
    let (rho, inf_s) = rho_grid.iter().copied().fold((f64::NAN, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });

    let hj = 0..split.j;
    let extra_hj = random_starts(basis, &hj, sampler.random_starts, &mut rng);
    let mut k = rho.log2().floor() as i32 + 1;
    while k <= MAX_DYADIC {
        let r_big = 2f64.powi(k);
        let sup = sup_on_sphere(f, r_big, &hj, &extra_hj).value;
        if sup < 0.0 {
            return Ok(RadiusScan {
                rho_grid,
                rho,
                r_big,
                inf_s,
                sup_sphere: sup,
            });
        }
        k += 1;
    }
    Err(Error::InvalidParameter(format!(
        "no dyadic R <= 2^{MAX_DYADIC} makes f negative on the R-sphere of H_{}",
        split.j
    )))
}
