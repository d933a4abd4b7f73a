//! Desk-scale checks of the geometric lemmas: Poincaré inequalities on the
//! spectral subspaces, the linking gap, the projected-gradient condition,
//! the vanishing of `sup f_λ(H_j)` and the level ordering of solutions.

mod gap;
mod nabla;

pub use gap::{linking_gap, scan_linking_radii, GapReport, RadiusScan, SamplerOptions};
pub use nabla::{admissible_gamma, nabla_condition_estimate, NablaCheckParams, NablaEstimate};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::minimax::{inf_on_high_sphere, sup_on_subspace, CriticalPoint};
use crate::spectral::{SpectralBasis, SubspaceSplit};

const POINCARE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    /// Index `i` of the inequalities: low vectors live on modes `1..=i`,
    /// high vectors on `i+1..`.
    pub index: usize,
    pub trials: usize,
    pub low_violations: usize,
    pub high_violations: usize,
    /// `max ‖u‖² / (λ_i ‖u‖²_{L²})` over the low samples; at most 1.
    pub worst_low_ratio: f64,
    /// `min ‖u‖² / (λ_{i+1} ‖u‖²_{L²})` over the high samples; at least 1.
    pub worst_high_ratio: f64,
    /// Both ratios at the single modes `φ_i`, `φ_{i+1}` (equality cases).
    pub equality_low: f64,
    pub equality_high: f64,
    pub failures: Vec<String>,
    pub passed: bool,
}

/// Random low- and high-part vectors against `‖u‖² ≤ λ_i ‖u‖²_{L²}` on
/// `H_i` and `‖u‖² ≥ λ_{i+1} ‖u‖²_{L²}` on `H_i^⊥`, with `i = split.j`.
pub fn check_poincare(basis: &SpectralBasis, split: &SubspaceSplit, trials: usize, rng_seed: u64) -> Result<PoincareReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let i = split.j;
    let n = basis.len();
    let (lam_lo, lam_hi) = (basis.lambda(i), basis.lambda(i + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut report = PoincareReport {
        index: i,
        trials,
        low_violations: 0,
        high_violations: 0,
        worst_low_ratio: 0.0,
        worst_high_ratio: f64::INFINITY,
        equality_low: basis.h_norm_sq(&basis.mode_vec(i)) / (lam_lo * basis.l2_norm_sq(&basis.mode_vec(i))),
        equality_high: basis.h_norm_sq(&basis.mode_vec(i + 1)) / (lam_hi * basis.l2_norm_sq(&basis.mode_vec(i + 1))),
        failures: Vec::new(),
        passed: true,
    };
    for trial in 0..trials {
        let low = random_supported(&mut rng, n, 0..i);
        let high = random_supported(&mut rng, n, i..n);
        let r_lo = basis.h_norm_sq(&low) / (lam_lo * basis.l2_norm_sq(&low));
        let r_hi = basis.h_norm_sq(&high) / (lam_hi * basis.l2_norm_sq(&high));
        report.worst_low_ratio = report.worst_low_ratio.max(r_lo);
        report.worst_high_ratio = report.worst_high_ratio.min(r_hi);
        if r_lo > 1.0 + POINCARE_SLACK {
            report.low_violations += 1;
            report.failures.push(format!("trial {trial}: low ratio {r_lo:.17e} > 1"));
        }
        if r_hi < 1.0 - POINCARE_SLACK {
            report.high_violations += 1;
            report.failures.push(format!("trial {trial}: high ratio {r_hi:.17e} < 1"));
        }
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}

/// Gaussian coefficients on a random nonempty subset of `support`, with
/// magnitudes spread over six decades.
fn random_supported(rng: &mut ChaCha8Rng, n: usize, support: std::ops::Range<usize>) -> CoefVec {
    let mut u = CoefVec::zeros(n);
    let idx: Vec<usize> = support.collect();
    loop {
        for &k in &idx {
            if rng.random_bool(0.5) {
                let z: f64 = StandardNormal.sample(rng);
                u[k] = z * 10f64.powf(rng.random_range(-3.0..3.0));
            }
        }
        if idx.iter().any(|&k| u[k] != 0.0) {
            return u;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    /// `λ_j − λ`.
    pub lambda_gap: f64,
    pub sup_value: f64,
    pub nonconverged_restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub j: usize,
    pub lambda_j: f64,
    pub rows: Vec<SweepRow>,
    /// `sup` nonincreasing along increasing `λ`, compared exactly.
    pub nonincreasing: bool,
    pub final_value: Option<f64>,
}

/// `sup f_λ(H_j)` for each `λ` in an increasing list, computed in parallel
/// and reported in input order.
pub fn sup_hj_sweep(f: &Functional, j: usize, lambdas: &[f64], rng_seed: u64) -> Result<SweepTable> {
    let basis = f.basis();
    if j == 0 || j > basis.len() {
        return Err(Error::InvalidParameter(format!("j = {j} outside 1..={}", basis.len())));
    }
    if lambdas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("lambda list must be strictly increasing".into()));
    }
    let lambda_j = basis.lambda(j);
    let rows = lambdas
        .par_iter()
        .map(|&lambda| {
            let sup = sup_on_subspace(&f.at_lambda(lambda), j, rng_seed)?;
            Ok(SweepRow {
                lambda,
                lambda_gap: lambda_j - lambda,
                sup_value: sup.value,
                nonconverged_restarts: sup.nonconverged,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let nonincreasing = rows.windows(2).all(|w| w[1].sup_value <= w[0].sup_value);
    let final_value = rows.last().map(|r| r.sup_value);
    Ok(SweepTable {
        j,
        lambda_j,
        rows,
        nonincreasing,
        final_value,
    })
}

/// `½(1 − λ/λ_{j+1} − τ)ρ₁²` with `τ = 0.1(1 − λ_j/λ_{j+1})`.
pub fn high_band_threshold(basis: &SpectralBasis, lambda: f64, split: &SubspaceSplit, rho1: f64) -> f64 {
    let (lj, lj1) = (basis.lambda(split.j), basis.lambda(split.j + 1));
    let tau = 0.1 * (1.0 - lj / lj1);
    0.5 * (1.0 - lambda / lj1 - tau) * rho1 * rho1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rho1Selection {
    pub rho1: f64,
    /// `Cρ₁²`.
    pub threshold: f64,
    /// `inf f` over the `ρ₁`-sphere of `H_j^⊥`.
    pub inf_sphere: f64,
}

/// First `ρ₁` on a log grid over `[1e−3, 10]` with `Cρ₁² > sup_hj` and
/// `inf f(S_j^+(ρ₁)) ≥ Cρ₁²`, if any.
pub fn select_rho1(f: &Functional, split: &SubspaceSplit, sup_hj: f64) -> Option<Rho1Selection> {
    let basis = f.basis();
    const POINTS: usize = 81;
    for m in 0..POINTS {
        let rho = 10f64.powf(-3.0 + 4.0 * m as f64 / (POINTS - 1) as f64);
        let threshold = high_band_threshold(basis, f.lambda(), split, rho);
        if threshold <= sup_hj {
            continue;
        }
        let inf_sphere = inf_on_high_sphere(f, split.j, rho);
        if inf_sphere >= threshold {
            return Some(Rho1Selection {
                rho1: rho,
                threshold,
                inf_sphere,
            });
        }
        // past the first admissible radius the cubic term only widens the deficit
        break;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    High,
    Between,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPoint {
    /// Position in the input list.
    pub index: usize,
    pub level: f64,
    pub norm: f64,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub sup_hj: f64,
    pub threshold: f64,
    pub trivial_excluded: usize,
    pub points: Vec<ClassifiedPoint>,
    pub low_count: usize,
    pub high_count: usize,
    /// Smallest H-distance between two nontrivial points.
    pub min_pairwise_distance: Option<f64>,
    pub passed: bool,
    pub reasons: Vec<String>,
}

/// Nontrivial norm cutoff and minimum separation between distinct points.
pub const DISTINCT_TOL: f64 = 1e-4;

/// Sorts nontrivial points into the bands `level ≤ sup_hj` and
/// `level ≥ threshold`; passes with at least two low and one high point.
pub fn classify_solutions(basis: &SpectralBasis, points: &[CriticalPoint], sup_hj: f64, threshold: f64) -> Classification {
    let mut out = Vec::new();
    let mut trivial = 0;
    for (index, p) in points.iter().enumerate() {
        let norm = basis.h_norm(&p.u);
        if norm <= DISTINCT_TOL {
            trivial += 1;
            continue;
        }
        let band = if p.level <= sup_hj {
            Band::Low
        } else if p.level >= threshold {
            Band::High
        } else {
            Band::Between
        };
        out.push(ClassifiedPoint {
            index,
            level: p.level,
            norm,
            band,
        });
    }
    let mut min_dist: Option<f64> = None;
    for a in 0..out.len() {
        for b in (a + 1)..out.len() {
            let d = basis.h_dist(&points[out[a].index].u, &points[out[b].index].u);
            min_dist = Some(min_dist.map_or(d, |m| m.min(d)));
        }
    }
    let low_count = out.iter().filter(|p| p.band == Band::Low).count();
    let high_count = out.iter().filter(|p| p.band == Band::High).count();
    let mut reasons = Vec::new();
    if !(sup_hj < threshold) {
        reasons.push(format!("band thresholds overlap: sup f(H_j) = {sup_hj:e} >= C rho1^2 = {threshold:e}"));
    }
    if low_count < 2 {
        reasons.push(format!("only {low_count} solution(s) at level <= sup f(H_j)"));
    }
    if high_count < 1 {
        reasons.push("missing third solution".into());
    }
    if min_dist.is_some_and(|d| d <= DISTINCT_TOL) {
        reasons.push("two points closer than the distinctness tolerance".into());
    }
    Classification {
        sup_hj,
        threshold,
        trivial_excluded: trivial,
        points: out,
        low_count,
        high_count,
        min_pairwise_distance: min_dist,
        passed: reasons.is_empty(),
        reasons,
    }
}
