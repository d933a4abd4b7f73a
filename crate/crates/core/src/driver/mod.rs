//! Batch pipelines on top of the solvers: existence runs, the three-solution
//! scan below a cluster, and the verification suite.

mod multiplicity;
mod verify;

pub use multiplicity::{multiplicity, DeltaRow, MultiplicityOptions, MultiplicityReport};
pub use verify::{verify, CheckRow, VerifyOptions, VerifyReport};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::minimax::{
    inf_on_high_sphere, linking_solve, mountain_pass, newton_deflated_labeled, ray_max, CriticalPoint, LinkingGeometry, Method,
    MinimaxResult, SolverOptions,
};
use crate::spectral::{SpectralBasis, SubspaceSplit};

/// Largest mesh dimension `j + 1` the linking solver is run on.
pub const MAX_LINKING_DIM: usize = 4;
const RAY_SEED_MODES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAttempt {
    pub method: Method,
    pub succeeded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_sup: Option<f64>,
    pub iterations: usize,
    pub points_found: usize,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<LinkingGeometry>,
}

impl MethodAttempt {
    fn from_result(method: Method, r: &Result<MinimaxResult>, geometry: Option<LinkingGeometry>) -> Self {
        match r {
            Ok(m) => Self {
                method,
                succeeded: !m.points.is_empty(),
                error: None,
                beta: Some(m.beta),
                initial_sup: Some(m.initial_sup),
                iterations: m.iterations,
                points_found: m.points.len(),
                warnings: m.warnings.clone(),
                geometry,
            },
            Err(e) => Self::failed(method, e, geometry),
        }
    }

    fn failed(method: Method, e: &Error, geometry: Option<LinkingGeometry>) -> Self {
        Self {
            method,
            succeeded: false,
            error: Some(e.to_string()),
            beta: None,
            initial_sup: None,
            iterations: 0,
            points_found: 0,
            warnings: Vec::new(),
            geometry,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub lambda: f64,
    /// Minimax method picked by the position of `λ` in the spectrum.
    pub dispatch: Method,
    pub attempts: Vec<MethodAttempt>,
    pub points: Vec<CriticalPoint>,
    pub nontrivial: usize,
}

/// Index `k` with `λ_k ≤ λ < λ_{k+1}`, or 0 below the spectrum.
pub fn spectral_position(basis: &SpectralBasis, lambda: f64) -> usize {
    basis.lambdas().partition_point(|&l| l <= lambda)
}

/// Ray maxima along `±e_k` for the given one-based modes, skipping rays on
/// which `f` never rises above 0.
pub fn ray_seeds(f: &Functional, modes: impl IntoIterator<Item = usize>) -> Result<Vec<(String, CoefVec)>> {
    let basis = f.basis();
    let mut out = Vec::new();
    for k in modes {
        for (sign, label) in [(1.0, "+"), (-1.0, "-")] {
            let dir = basis.unit_mode(k).scaled(sign);
            let r = ray_max(f, &dir)?;
            if r.t_star > 0.0 {
                out.push((format!("ray max along {label}e_{k}"), dir.scaled(r.t_star)));
            }
        }
    }
    Ok(out)
}

/// Appends the points of `new` that are farther than `tol` from every kept
/// point.
pub fn merge_distinct(basis: &SpectralBasis, kept: &mut Vec<CriticalPoint>, new: Vec<CriticalPoint>, tol: f64) {
    for p in new {
        if kept.iter().all(|q| basis.h_dist(&p.u, &q.u) > tol) {
            kept.push(p);
        }
    }
}

/// Linking for `λ ∈ [λ_j, λ_{j+1})` on the cluster ending at `j`: `ρ` from a
/// short log grid maximizing `inf f` on the sphere of `H_j^⊥`, then dyadic
/// `R` until the gap check accepts.
pub fn linking_auto(f: &Functional, split: SubspaceSplit, opts: &SolverOptions) -> (Result<MinimaxResult>, Option<LinkingGeometry>) {
    let rho = (0..7)
        .map(|m| 10f64.powf(-3.0 + 0.5 * m as f64))
        .map(|rho| (rho, inf_on_high_sphere(f, split.j, rho)))
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
        .0;
    let mut last = None;
    let mut k = (rho.log2().floor() as i32 + 1).max(1);
    while k <= 6 {
        let geom = LinkingGeometry::new(split, rho, 2f64.powi(k));
        let r = linking_solve(f, &geom, opts);
        let gap_failed = matches!(r, Err(Error::GapNotVerified { .. }));
        last = Some((r, geom));
        if !gap_failed {
            break;
        }
        k += 1;
    }
    match last {
        Some((r, g)) => (r, Some(g)),
        None => (Err(Error::InvalidParameter("no linking radius tried".into())), None),
    }
}

/// Existence run: mountain pass below `λ₁`, linking on the cluster at or
/// below `λ` otherwise, and in every case deflated Newton from ray maxima.
pub fn solve(f: &Functional, opts: &SolverOptions) -> Result<SolveReport> {
    let basis = f.basis();
    let lambda = f.lambda();
    let mut attempts = Vec::new();
    let mut points = Vec::new();
    let position = spectral_position(basis, lambda);
    let dispatch = if position == 0 { Method::MountainPass } else { Method::Linking };
    info!("solve: λ = {lambda}, dispatch {dispatch:?}");

    if position == 0 {
        let r = mountain_pass(f, &basis.unit_mode(1), opts);
        attempts.push(MethodAttempt::from_result(Method::MountainPass, &r, None));
        if let Ok(m) = r {
            merge_distinct(basis, &mut points, m.points, opts.dedup_tol);
        }
    } else {
        let split = basis.cluster_of(position)?;
        if split.j >= basis.len() {
            let e = Error::InvalidParameter(format!("λ = {lambda} lies above the truncated spectrum"));
            attempts.push(MethodAttempt::failed(Method::Linking, &e, None));
        } else if split.j + 1 > MAX_LINKING_DIM {
            let e = Error::InvalidParameter(format!("linking mesh dimension {} exceeds {MAX_LINKING_DIM}", split.j + 1));
            attempts.push(MethodAttempt::failed(Method::Linking, &e, None));
        } else {
            let (r, geom) = linking_auto(f, split, opts);
            attempts.push(MethodAttempt::from_result(Method::Linking, &r, geom));
            if let Ok(m) = r {
                merge_distinct(basis, &mut points, m.points, opts.dedup_tol);
            }
        }
    }

    let seeds = ray_seeds(f, 1..=basis.len().min(RAY_SEED_MODES))?;
    let newton = newton_deflated_labeled(f, seeds, &points, opts);
    match newton {
        Ok(found) => {
            attempts.push(MethodAttempt {
                method: Method::NewtonDeflated,
                succeeded: !found.is_empty(),
                error: None,
                beta: None,
                initial_sup: None,
                iterations: 0,
                points_found: found.len(),
                warnings: Vec::new(),
                geometry: None,
            });
            merge_distinct(basis, &mut points, found, opts.dedup_tol);
        }
        Err(e) => {
            warn!("deflated Newton failed: {e}");
            attempts.push(MethodAttempt::failed(Method::NewtonDeflated, &e, None));
        }
    }
    let nontrivial = points.iter().filter(|p| basis.h_norm(&p.u) > opts.dedup_tol).count();
    Ok(SolveReport {
        lambda,
        dispatch,
        attempts,
        points,
        nontrivial,
    })
}
