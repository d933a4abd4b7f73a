use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{merge_distinct, ray_seeds, MAX_LINKING_DIM};
use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::geometry::{
    admissible_gamma, classify_solutions, linking_gap, nabla_condition_estimate, scan_linking_radii, select_rho1,
    Classification, GapReport, NablaCheckParams, NablaEstimate, Rho1Selection, SamplerOptions,
};
use crate::minimax::{linking_solve, newton_deflated_labeled, ray_max, sup_on_subspace, CriticalPoint, LinkingGeometry, SolverOptions};
use crate::spectral::{SpectralBasis, SubspaceSplit};

/// Level window `[ε′, ε″]` of the projected-gradient check, as fractions of
/// `sup f(H_j)`.
pub const NABLA_WINDOW: (f64, f64) = (0.05, 0.5);
const HIGH_SEED_MODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiplicityOptions {
    /// First index `i` of the cluster; `λ = λ_i − δ`.
    pub eigen_index: usize,
    pub deltas: Vec<f64>,
    /// Extra bisection rows used to locate the edge of the passing window.
    pub bisection_steps: usize,
    /// Samples for the projected-gradient check at the largest passing `δ`;
    /// 0 skips it.
    pub nabla_samples: usize,
    pub solver: SolverOptions,
    pub sampler: SamplerOptions,
}

impl Default for MultiplicityOptions {
    fn default() -> Self {
        Self {
            eigen_index: 2,
            deltas: vec![0.5, 0.2, 0.1, 0.05],
            bisection_steps: 3,
            nabla_samples: 0,
            solver: SolverOptions::default(),
            sampler: SamplerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    pub lambda: f64,
    /// Added by the window bisection rather than requested.
    pub bisection: bool,
    pub gap: Option<GapReport>,
    pub sup_hj: f64,
    pub rho1: Option<Rho1Selection>,
    /// Level bracket `[min, max]` of the low band.
    pub low_levels: Option<(f64, f64)>,
    pub points: Vec<CriticalPoint>,
    pub classification: Option<Classification>,
    pub passed: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub eigen_index: usize,
    pub split: Option<SubspaceSplit>,
    pub lambda_i: Option<f64>,
    pub rows: Vec<DeltaRow>,
    /// Largest passing `δ`.
    pub achieved_delta: Option<f64>,
    /// Smallest failing `δ` above it, if any was tried.
    pub failed_delta_above: Option<f64>,
    pub nabla: Option<NablaEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nabla_error: Option<String>,
}

/// The cluster starting at `i`, rejecting `i = 1`.
fn cluster_at(basis: &SpectralBasis, i: usize) -> Result<SubspaceSplit> {
    if i < 2 {
        return Err(Error::InvalidParameter(format!("eigen_index = {i}: the three-solution scan needs i >= 2")));
    }
    let split = basis.cluster_of(i)?;
    if split.i != i {
        return Err(Error::InvalidParameter(format!("eigen_index {i} does not start a cluster (cluster starts at {})", split.i)));
    }
    if split.j >= basis.len() {
        return Err(Error::InvalidParameter(format!("cluster {}..={} reaches K_max", split.i, split.j)));
    }
    Ok(split)
}

/// Unit directions in the cluster block: `±e_k` and `±(e_a ± e_b)/√2`.
fn cluster_directions(basis: &SpectralBasis, split: &SubspaceSplit) -> Vec<(String, CoefVec)> {
    let mut out = Vec::new();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for a in split.i..=split.j {
        let ea = basis.unit_mode(a);
        out.push((format!("+e_{a}"), ea.clone()));
        out.push((format!("-e_{a}"), -&ea));
        for b in (a + 1)..=split.j {
            let eb = basis.unit_mode(b);
            out.push((format!("+(e_{a}+e_{b})"), (&ea + &eb).scaled(s)));
            out.push((format!("+(e_{a}-e_{b})"), (&ea - &eb).scaled(s)));
            out.push((format!("-(e_{a}+e_{b})"), (&ea + &eb).scaled(-s)));
            out.push((format!("-(e_{a}-e_{b})"), (&eb - &ea).scaled(s)));
        }
    }
    out
}

/// One `δ`: gap scan, `sup f(H_j)`, `ρ₁`, small solutions from ray maxima in
/// the cluster, the third solution by linking over `H_j ⊕ e_{j+1}` and
/// Newton from higher modes, then classification.
fn run_delta(f0: &Functional, split: SubspaceSplit, delta: f64, bisection: bool, opts: &MultiplicityOptions) -> Result<DeltaRow> {
    let basis = f0.basis();
    let lambda = basis.lambda(split.i) - delta;
    let f = f0.at_lambda(lambda);
    let sopts = &opts.solver;
    let mut reasons = Vec::new();
    info!("multiplicity: δ = {delta}, λ = {lambda}");

    let gap = match scan_linking_radii(&f, split, &opts.sampler) {
        Ok(scan) => Some(linking_gap(&f, &LinkingGeometry::new(split, scan.rho, scan.r_big), &opts.sampler)?),
        Err(e) => {
            reasons.push(format!("radius scan failed: {e}"));
            None
        }
    };
    if let Some(g) = &gap {
        if !g.certified {
            reasons.push(format!("linking gap not certified: inf S = {:e}, sup T = {:e}", g.inf_s, g.sup_t));
        }
    }

    let sup = sup_on_subspace(&f, split.j, sopts.rng_seed)?;
    let rho1 = select_rho1(&f, &split, sup.value);

    let mut seeds = Vec::new();
    for (label, dir) in cluster_directions(basis, &split) {
        let r = ray_max(&f, &dir)?;
        if r.t_star > 0.0 {
            seeds.push((format!("ray max along {label}"), dir.scaled(r.t_star)));
        }
    }
    if basis.h_norm(&sup.argmax) > 0.0 {
        seeds.push(("argmax of f on H_j".to_string(), sup.argmax.clone()));
    }
    let mut points = newton_deflated_labeled(&f, seeds, &[], sopts)?;

    if let Some(sel) = &rho1 {
        if split.j + 1 <= MAX_LINKING_DIM {
            for k in 1..=6 {
                let r_big = 2f64.powi(k);
                if r_big <= sel.rho1 {
                    continue;
                }
                let mut geom = LinkingGeometry::new(split, sel.rho1, r_big);
                geom.rho1 = Some(sel.rho1);
                match linking_solve(&f, &geom, sopts) {
                    Ok(m) => {
                        merge_distinct(basis, &mut points, m.points, sopts.dedup_tol);
                        break;
                    }
                    Err(Error::GapNotVerified { .. }) => continue,
                    Err(e) => {
                        info!("third-solution linking at R = {r_big} failed: {e}");
                        break;
                    }
                }
            }
        }
    }
    let high_modes = (split.j + 1)..=(split.j + HIGH_SEED_MODES).min(basis.len());
    let found = newton_deflated_labeled(&f, ray_seeds(&f, high_modes)?, &points, sopts)?;
    merge_distinct(basis, &mut points, found, sopts.dedup_tol);

    let classification = rho1.as_ref().map(|sel| classify_solutions(basis, &points, sup.value, sel.threshold));
    match (&rho1, &classification) {
        (None, _) => reasons.push("no rho1 separates the high band from sup f(H_j)".into()),
        (_, Some(c)) => reasons.extend(c.reasons.iter().cloned()),
        _ => {}
    }
    let low_levels = classification.as_ref().and_then(|c| {
        let lows: Vec<f64> = c.points.iter().filter(|p| p.band == crate::geometry::Band::Low).map(|p| p.level).collect();
        (!lows.is_empty()).then(|| (lows.iter().copied().fold(f64::INFINITY, f64::min), lows.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
    });
    Ok(DeltaRow {
        delta,
        lambda,
        bisection,
        gap,
        sup_hj: sup.value,
        rho1,
        low_levels,
        points,
        classification,
        passed: reasons.is_empty(),
        reasons,
    })
}

fn window(rows: &[DeltaRow]) -> (Option<f64>, Option<f64>) {
    let pass = rows.iter().filter(|r| r.passed).map(|r| r.delta).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let fail = rows
        .iter()
        .filter(|r| !r.passed && pass.is_none_or(|p| r.delta > p))
        .map(|r| r.delta)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))));
    (pass, fail)
}

/// Runs the three-solution pipeline at `λ = λ_i − δ` for each requested `δ`,
/// then bisects toward the edge of the passing window: between the largest
/// pass and the next failure, or by halving when nothing passed yet.
pub fn multiplicity(f: &Functional, opts: &MultiplicityOptions) -> Result<MultiplicityReport> {
    let basis = f.basis();
    let split = cluster_at(basis, opts.eigen_index)?;
    if let Some(d) = opts.deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::InvalidParameter(format!("delta = {d} must be positive")));
    }
    let mut report = MultiplicityReport {
        eigen_index: opts.eigen_index,
        split: Some(split),
        lambda_i: Some(basis.lambda(split.i)),
        rows: Vec::new(),
        achieved_delta: None,
        failed_delta_above: None,
        nabla: None,
        nabla_error: None,
    };
    if opts.deltas.is_empty() {
        return Ok(report);
    }
    report.rows = opts
        .deltas
        .par_iter()
        .map(|&d| run_delta(f, split, d, false, opts))
        .collect::<Result<Vec<_>>>()?;

    for _ in 0..opts.bisection_steps {
        let next = match window(&report.rows) {
            (Some(p), Some(q)) if q - p > 1e-3 * p => 0.5 * (p + q),
            (Some(_), _) => break,
            (None, _) => 0.5 * report.rows.iter().map(|r| r.delta).fold(f64::INFINITY, f64::min),
        };
        report.rows.push(run_delta(f, split, next, true, opts)?);
    }
    (report.achieved_delta, report.failed_delta_above) = window(&report.rows);

    if opts.nabla_samples > 0 {
        if let Some(row) = report.rows.iter().filter(|r| r.passed).max_by(|a, b| a.delta.total_cmp(&b.delta)) {
            let fr = f.at_lambda(row.lambda);
            let (lo, hi) = (NABLA_WINDOW.0 * row.sup_hj, NABLA_WINDOW.1 * row.sup_hj);
            let est = admissible_gamma(basis, row.lambda, &split, lo).and_then(|gamma| {
                nabla_condition_estimate(
                    &fr,
                    &NablaCheckParams {
                        split,
                        eps_lo: lo,
                        eps_hi: hi,
                        gamma,
                        sample_count: opts.nabla_samples,
                        rng_seed: opts.sampler.rng_seed,
                    },
                )
            });
            match est {
                Ok(e) => report.nabla = Some(e),
                Err(e) => report.nabla_error = Some(e.to_string()),
            }
        }
    }
    Ok(report)
}
