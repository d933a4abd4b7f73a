use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::multiplicity::NABLA_WINDOW;
use crate::coef::CoefVec;
use crate::error::Result;
use crate::functional::{apply_k, k_tail_norm, validate_hypotheses, Functional, SampleSpec};
use crate::geometry::{
    admissible_gamma, check_poincare, linking_gap, nabla_condition_estimate, scan_linking_radii, sup_hj_sweep, GapReport,
    NablaCheckParams, NablaEstimate, SamplerOptions, SweepTable,
};
use crate::minimax::{sup_on_subspace, LinkingGeometry};
use crate::spectral::SpectralBasis;

/// Step of the central difference in the gradient check.
pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;
pub const SWEEP_FINAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub poincare: bool,
    pub gradient_fd: bool,
    pub hypotheses: bool,
    pub k_decay: bool,
    pub sweep: bool,
    pub gap: bool,
    pub nabla: bool,
    pub poincare_trials: usize,
    pub fd_pairs: usize,
    /// Cluster start `i` used by the Poincaré, gap and projected-gradient
    /// checks.
    pub eigen_index: usize,
    /// `λ = λ_i − gap_delta` for the gap check.
    pub gap_delta: f64,
    /// `λ = λ_i − nabla_delta` for the projected-gradient check.
    pub nabla_delta: f64,
    pub nabla_samples: usize,
    /// Subspace index of the sweep; `λ` runs over these fractions of `λ_j`.
    pub sweep_j: usize,
    pub sweep_fractions: Vec<f64>,
    pub rng_seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            poincare: true,
            gradient_fd: true,
            hypotheses: true,
            k_decay: true,
            sweep: true,
            gap: true,
            nabla: true,
            poincare_trials: 1000,
            fd_pairs: 100,
            eigen_index: 2,
            gap_delta: 0.1,
            nabla_delta: 0.25,
            nabla_samples: 1000,
            sweep_j: 1,
            sweep_fractions: vec![0.0, 0.5, 0.9, 0.99, 0.999],
            rng_seed: 42,
        }
    }
}

impl VerifyOptions {
    pub fn all_off() -> Self {
        Self {
            poincare: false,
            gradient_fd: false,
            hypotheses: false,
            k_decay: false,
            sweep: false,
            gap: false,
            nabla: false,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub parameters: BTreeMap<String, f64>,
    pub measured: BTreeMap<String, f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckRow {
    fn new(name: &str, parameters: &[(&str, f64)], measured: &[(&str, f64)], passed: bool) -> Self {
        Self {
            name: name.into(),
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            measured: measured.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            passed,
            detail: None,
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    fn error(name: &str, parameters: &[(&str, f64)], e: impl std::fmt::Display) -> Self {
        Self::new(name, parameters, &[], false).with_detail(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
    pub all_passed: bool,
    pub sweep: Option<SweepTable>,
    pub gap: Option<GapReport>,
    pub nabla: Option<NablaEstimate>,
}

/// Smooth random coefficients `z_k / λ_k`.
pub fn random_smooth(basis: &SpectralBasis, rng: &mut ChaCha8Rng) -> CoefVec {
    let mut u = basis.zeros();
    for k in 0..basis.len() {
        let z: f64 = StandardNormal.sample(rng);
        u[k] = z / basis.lambdas()[k];
    }
    u
}

/// Largest `|⟨∇f(u), w⟩ − FD| / (1 + |f(u)|)` over random pairs.
pub fn gradient_fd_error(f: &Functional, pairs: usize, rng_seed: u64) -> f64 {
    let basis = f.basis();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = random_smooth(basis, &mut rng);
        let w = random_smooth(basis, &mut rng);
        let (fu, g) = f.energy_and_gradient(&u);
        let analytic = basis.h_inner(&g, &w);
        let fd = (f.energy(&u.axpy(FD_STEP, &w)) - f.energy(&u.axpy(-FD_STEP, &w))) / (2.0 * FD_STEP);
        worst = worst.max((analytic - fd).abs() / (1.0 + fu.abs()));
    }
    worst
}

/// Runs the enabled checks in a fixed order.
pub fn verify(f: &Functional, opts: &VerifyOptions) -> Result<VerifyReport> {
    let basis = f.basis();
    let n = basis.len();
    let mut rows = Vec::new();
    let mut report_sweep = None;
    let mut report_gap = None;
    let mut report_nabla = None;
    let i = opts.eigen_index;
    let split = basis.cluster_of(i.max(1)).ok().filter(|s| s.i == i && s.j < n);

    if opts.poincare {
        let params = [("i", i as f64), ("trials", opts.poincare_trials as f64)];
        match split.map(|s| check_poincare(basis, &s, opts.poincare_trials, opts.rng_seed)) {
            Some(Ok(r)) => rows.push(CheckRow::new(
                "poincare",
                &params,
                &[
                    ("low_violations", r.low_violations as f64),
                    ("high_violations", r.high_violations as f64),
                    ("worst_low_ratio", r.worst_low_ratio),
                    ("worst_high_ratio", r.worst_high_ratio),
                ],
                r.passed,
            )),
            Some(Err(e)) => rows.push(CheckRow::error("poincare", &params, e)),
            None => rows.push(CheckRow::error("poincare", &params, format!("no cluster starts at {i} below K_max"))),
        }
    }

    if opts.gradient_fd {
        let err = gradient_fd_error(f, opts.fd_pairs, opts.rng_seed);
        rows.push(CheckRow::new(
            "gradient_fd",
            &[("lambda", f.lambda()), ("pairs", opts.fd_pairs as f64), ("h", FD_STEP)],
            &[("max_error", err)],
            err < FD_TOL,
        ));
    }

    if opts.hypotheses {
        let r = validate_hypotheses(f.nonlinearity(), &SampleSpec::default());
        for c in &r.checks {
            rows.push(
                CheckRow::new(
                    &format!("hypothesis {}", c.name),
                    &[("p", r.p), ("c1", r.c1)],
                    &[("worst_margin", c.worst_margin), ("worst_t", c.worst_t)],
                    c.passed,
                )
                .with_detail(c.detail.clone()),
            );
        }
    }

    if opts.k_decay {
        let exact = (1..=n).all(|k| {
            let c = apply_k(basis, &CoefVec::unit(n, k - 1));
            c[k - 1] == 1.0 / basis.lambda(k) && c.iter().enumerate().all(|(m, &v)| m == k - 1 || v == 0.0)
        });
        let ones = CoefVec::from_vec(vec![1.0; n]);
        let cutoffs: Vec<usize> = [n / 8, n / 4, n / 2].into_iter().filter(|&c| c > 0).collect();
        let tails: Vec<f64> = cutoffs.iter().map(|&c| k_tail_norm(basis, &ones, c)).collect();
        let decreasing = tails.windows(2).all(|w| w[1] < w[0]);
        let mut measured: Vec<(String, f64)> = cutoffs.iter().zip(&tails).map(|(c, t)| (format!("tail_after_{c}"), *t)).collect();
        measured.push(("unit_modes_exact".into(), if exact { 1.0 } else { 0.0 }));
        let measured: Vec<(&str, f64)> = measured.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        rows.push(CheckRow::new("k_decay", &[("K_max", n as f64)], &measured, exact && decreasing));
    }

    if opts.sweep {
        let j = opts.sweep_j;
        let params = [("j", j as f64)];
        if j == 0 || j > n {
            rows.push(CheckRow::error("sup_hj_sweep", &params, format!("j = {j} outside 1..={n}")));
        } else {
            let lambdas: Vec<f64> = opts.sweep_fractions.iter().map(|s| s * basis.lambda(j)).collect();
            match sup_hj_sweep(f, j, &lambdas, opts.rng_seed) {
                Ok(t) => {
                    let strict = t.rows.windows(2).all(|w| w[1].sup_value < w[0].sup_value);
                    let fin = t.final_value.unwrap_or(0.0);
                    rows.push(CheckRow::new(
                        "sup_hj_sweep",
                        &params,
                        &[("final_value", fin), ("strictly_decreasing", if strict { 1.0 } else { 0.0 })],
                        strict && fin < SWEEP_FINAL_TOL,
                    ));
                    report_sweep = Some(t);
                }
                Err(e) => rows.push(CheckRow::error("sup_hj_sweep", &params, e)),
            }
        }
    }

    if opts.gap {
        let lambda = basis.lambda(i.clamp(1, n)) - opts.gap_delta;
        let params = [("i", i as f64), ("lambda", lambda)];
        let fl = f.at_lambda(lambda);
        let sampler = SamplerOptions {
            rng_seed: opts.rng_seed,
            ..Default::default()
        };
        let result = split
            .ok_or_else(|| crate::Error::InvalidParameter(format!("no cluster starts at {i} below K_max")))
            .and_then(|s| {
                let scan = scan_linking_radii(&fl, s, &sampler)?;
                linking_gap(&fl, &LinkingGeometry::new(s, scan.rho, scan.r_big), &sampler)
            });
        match result {
            Ok(g) => {
                rows.push(CheckRow::new(
                    "linking_gap",
                    &[("i", i as f64), ("lambda", lambda), ("rho", g.rho), ("R", g.r_big)],
                    &[("sup_T", g.sup_t), ("inf_S", g.inf_s), ("gap", g.gap)],
                    g.certified,
                ));
                report_gap = Some(g);
            }
            Err(e) => rows.push(CheckRow::error("linking_gap", &params, e)),
        }
    }

    if opts.nabla {
        let lambda = basis.lambda(i.clamp(1, n)) - opts.nabla_delta;
        let params = [("i", i as f64), ("lambda", lambda), ("samples", opts.nabla_samples as f64)];
        let fl = f.at_lambda(lambda);
        let result = split
            .ok_or_else(|| crate::Error::InvalidParameter(format!("no cluster starts at {i} below K_max")))
            .and_then(|s| {
                let sup = sup_on_subspace(&fl, s.j, opts.rng_seed)?.value;
                let (lo, hi) = (NABLA_WINDOW.0 * sup, NABLA_WINDOW.1 * sup);
                let gamma = admissible_gamma(basis, lambda, &s, lo)?;
                let chk = NablaCheckParams {
                    split: s,
                    eps_lo: lo,
                    eps_hi: hi,
                    gamma,
                    sample_count: opts.nabla_samples,
                    rng_seed: opts.rng_seed,
                };
                Ok((nabla_condition_estimate(&fl, &chk)?, chk))
            });
        match result {
            Ok((e, chk)) => {
                rows.push(CheckRow::new(
                    "nabla_condition",
                    &[
                        ("i", i as f64),
                        ("lambda", lambda),
                        ("eps_lo", chk.eps_lo),
                        ("eps_hi", chk.eps_hi),
                        ("gamma", chk.gamma),
                        ("samples", chk.sample_count as f64),
                    ],
                    &[("inf_estimate", e.inf_estimate), ("samples_in_window", e.samples_in_window as f64)],
                    e.inf_estimate > 0.0,
                ));
                report_nabla = Some(e);
            }
            Err(e) => rows.push(CheckRow::error("nabla_condition", &params, e)),
        }
    }

    let all_passed = rows.iter().all(|r| r.passed);
    Ok(VerifyReport {
        rows,
        all_passed,
        sweep: report_sweep,
        gap: report_gap,
        nabla: report_nabla,
    })
}
