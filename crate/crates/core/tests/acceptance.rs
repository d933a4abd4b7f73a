//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Run with `cargo test -p fraclink-core --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use fraclink::driver::{self, MultiplicityOptions, MultiplicityReport};
use fraclink::functional::{apply_k, k_tail_norm};
use fraclink::geometry::{
    check_poincare, linking_gap, scan_linking_radii, sup_hj_sweep, GapReport, RadiusScan, SamplerOptions,
};
use fraclink::json::to_string;
use fraclink::minimax::{mountain_pass, newton_deflated, CriticalPoint, LinkingGeometry, SolverOptions};
use fraclink::spectral::default_quad_order;
use fraclink::{build_basis, CoefVec, DomainSpec, Functional, Nonlinearity, ProblemParams, SpectralBasis, SubspaceSplit};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

// Pinned tolerances.
const SPECTRUM_REL_TOL: f64 = 1e-12;
const FD_ORACLE_REL_TOL: f64 = 1e-3;
const POINCARE_TRIALS: usize = 1000;
const GRAD_PAIRS: usize = 100;
const GRAD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-6;
const AGREE_TOL: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-8;
const RAY_BOUND: f64 = 3.5860;
const RAY_BOUND_SLACK: f64 = 1e-3;
const SWEEP_FINAL: f64 = 1e-3;
const SEED_SPREAD_TOL: f64 = 1e-6;
const DISTINCT_TOL: f64 = 1e-4;
const NABLA_SAMPLES: usize = 10_000;

const INTERVAL_K: usize = 16;
const RECT_K: usize = 16;
const GAP_SEEDS: [u64; 3] = [42, 7, 2024];
const DELTAS: [f64; 4] = [0.5, 0.2, 0.1, 0.05];

fn report(n: u32, passed: bool, elapsed: Duration, detail: String) {
    println!(
        "criterion {n:>2}: {} ({:.1} s) {detail}",
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(passed, "criterion {n} failed: {detail}");
}

fn basis(domain: DomainSpec, k: usize) -> SpectralBasis {
    let order = default_quad_order(&domain, k);
    build_basis(&domain, k, order).unwrap()
}

fn interval() -> SpectralBasis {
    basis(DomainSpec::interval(1.0), INTERVAL_K)
}

fn square() -> SpectralBasis {
    basis(DomainSpec::unit_square(), RECT_K)
}

fn cubic() -> Nonlinearity {
    Nonlinearity::power(3.0).unwrap()
}

/// Eigenvalues of the second-difference Dirichlet matrix on `(0, 1)`.
fn fd_eigenvalues_1d(n: usize) -> Vec<f64> {
    let m = n - 1;
    let h2 = 1.0 / (n * n) as f64;
    let a = DMatrix::from_fn(m, m, |r, c| match r.abs_diff(c) {
        0 => 2.0 / h2,
        1 => -1.0 / h2,
        _ => 0.0,
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn criterion_01_spectrum() {
    let t = Instant::now();
    let b = basis(DomainSpec::unit_square(), 8);
    let closed = [2.0, 5.0, 5.0, 8.0, 10.0, 10.0].map(|s: f64| PI * s.sqrt());
    let worst_closed = closed
        .iter()
        .zip(b.lambdas())
        .map(|(want, got)| ((got - want) / want).abs())
        .fold(0.0, f64::max);

    // Five-point Laplacian on a 200×200 grid separates into 1D spectra.
    let ev = fd_eigenvalues_1d(200);
    let mut sums: Vec<f64> = (0..4).flat_map(|m| (0..4).map(move |n| (m, n))).map(|(m, n)| ev[m] + ev[n]).collect();
    sums.sort_by(f64::total_cmp);
    let worst_fd = sums
        .iter()
        .take(3)
        .zip(b.lambdas())
        .map(|(mu, got)| ((got - mu.sqrt()) / mu.sqrt()).abs())
        .fold(0.0, f64::max);

    let passed = worst_closed <= SPECTRUM_REL_TOL && worst_fd <= FD_ORACLE_REL_TOL;
    report(1, passed, t.elapsed(), format!("closed-form rel err {worst_closed:.2e}, FD oracle rel err {worst_fd:.2e}"));
}

#[test]
fn criterion_02_poincare() {
    let t = Instant::now();
    let mut detail = Vec::new();
    let mut passed = true;
    for (name, b) in [("interval", interval()), ("square", square())] {
        for split in b.group_eigenvalues(1e-9).unwrap().into_iter().filter(|s| s.j < b.len()).take(3) {
            let r = check_poincare(&b, &split, POINCARE_TRIALS, 42).unwrap();
            passed &= r.passed && r.low_violations == 0 && r.high_violations == 0 && r.trials == POINCARE_TRIALS;
            detail.push(format!("{name} i={}: {}+{}", r.index, r.low_violations, r.high_violations));
        }
    }
    report(2, passed, t.elapsed(), format!("violations {}", detail.join(", ")));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]
    #[test]
    fn poincare_holds_for_arbitrary_coefficients(coeffs in prop::collection::vec(-10.0f64..10.0, INTERVAL_K), cut in 1usize..INTERVAL_K) {
        let b = interval();
        let lam = b.lambdas();
        let mut low = CoefVec::zeros(b.len());
        let mut high = CoefVec::zeros(b.len());
        for (k, c) in coeffs.iter().enumerate() {
            if k < cut { low[k] = *c } else { high[k] = *c }
        }
        let slack = 1e-12;
        prop_assert!(b.h_norm_sq(&low) <= lam[cut - 1] * b.l2_norm_sq(&low) * (1.0 + slack) + 1e-300);
        prop_assert!(b.h_norm_sq(&high) * (1.0 + slack) + 1e-300 >= lam[cut] * b.l2_norm_sq(&high));
    }
}

#[test]
fn criterion_03_gradient() {
    let t = Instant::now();
    let b = square();
    let nl = cubic();
    let f = Functional::new(&b, &nl, ProblemParams { lambda: 5.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rand_vec = |rng: &mut ChaCha8Rng| {
        CoefVec::from_vec((0..b.len()).map(|k| rng.random_range(-1.0..1.0) / b.lambda(k + 1)).collect())
    };
    let mut worst: f64 = 0.0;
    for _ in 0..GRAD_PAIRS {
        let u = rand_vec(&mut rng).scaled(4.0);
        let w = rand_vec(&mut rng);
        let analytic = b.h_inner(&f.gradient(&u), &w);
        let fd = (f.energy(&u.axpy(GRAD_STEP, &w)) - f.energy(&u.axpy(-GRAD_STEP, &w))) / (2.0 * GRAD_STEP);
        worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0));
    }
    report(3, worst < GRAD_REL_TOL, t.elapsed(), format!("max rel err {worst:.2e} over {GRAD_PAIRS} pairs"));
}

#[test]
fn criterion_04_k_operator() {
    let t = Instant::now();
    let b = interval();
    let exact = (1..=b.len()).all(|k| {
        let c = apply_k(&b, &b.mode_vec(k));
        (0..b.len()).all(|m| c[m] == if m + 1 == k { 1.0 / b.lambda(k) } else { 0.0 })
    });
    let ones = CoefVec::from_vec(vec![1.0; b.len()]);
    let tails: Vec<f64> = (0..b.len()).map(|cut| k_tail_norm(&b, &ones, cut)).collect();
    let oracle: Vec<f64> = (0..b.len()).map(|cut| (cut + 1..=b.len()).map(|k| 1.0 / b.lambda(k)).sum::<f64>().sqrt()).collect();
    let matches = tails.iter().zip(&oracle).all(|(a, o)| (a - o).abs() <= 1e-12 * o.max(1.0));
    let decreasing = tails.windows(2).all(|w| w[1] < w[0]);
    report(
        4,
        exact && matches && decreasing,
        t.elapsed(),
        format!("unit modes exact {exact}, tail matches oracle {matches}, strictly decreasing {decreasing}"),
    );
}

#[derive(Serialize)]
struct ExistenceReport {
    mountain_pass: CriticalPoint,
    newton: CriticalPoint,
    distance: f64,
}

fn run_criterion_5() -> ExistenceReport {
    let b = interval();
    let nl = cubic();
    let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
    let opts = SolverOptions::default();
    let mp = mountain_pass(&f, &b.unit_mode(1), &opts).unwrap();
    // Ray maximum of t ↦ ½πt² − t³∫φ₁³/3 with ∫φ₁³ = 8√2/(3π).
    let c3 = 8.0 * 2f64.sqrt() / (3.0 * PI);
    let t_star = PI / c3;
    let nt = newton_deflated(&f, &[b.unit_mode(1).scaled(t_star)], &[], &opts).unwrap();
    let mp = mp.points.into_iter().next().expect("mountain pass produced no point");
    let nt = nt.into_iter().next().expect("Newton produced no point");
    let distance = b.h_dist(&mp.u, &nt.u);
    ExistenceReport {
        mountain_pass: mp,
        newton: nt,
        distance,
    }
}

#[test]
fn criterion_05_mountain_pass() {
    let t = Instant::now();
    let r = cached_5();
    let c3 = 8.0 * 2f64.sqrt() / (3.0 * PI);
    let t_star = PI / c3;
    let ray_max = 0.5 * PI * t_star * t_star - t_star.powi(3) * c3 / 3.0;
    let in_band = |p: &CriticalPoint| p.level > 0.0 && p.level <= RAY_BOUND + RAY_BOUND_SLACK;
    let passed = r.distance < AGREE_TOL
        && r.mountain_pass.residual < RESIDUAL_TOL
        && r.newton.residual < RESIDUAL_TOL
        && in_band(&r.mountain_pass)
        && in_band(&r.newton)
        && (ray_max - RAY_BOUND).abs() < 1e-3;
    report(
        5,
        passed,
        t.elapsed(),
        format!(
            "levels {:.8} / {:.8} (ray max {ray_max:.5}), distance {:.2e}, residuals {:.1e} / {:.1e}",
            r.mountain_pass.level, r.newton.level, r.distance, r.mountain_pass.residual, r.newton.residual
        ),
    );
}

#[derive(Serialize)]
struct LinkingReport {
    geometry: LinkingGeometry,
    linking: CriticalPoint,
    newton: CriticalPoint,
    distance: f64,
}

fn run_criterion_6() -> LinkingReport {
    let b = interval();
    let nl = cubic();
    let f = Functional::new(&b, &nl, ProblemParams { lambda: 1.5 * PI });
    let opts = SolverOptions::default();
    let split = b.cluster_of(driver::spectral_position(&b, f.lambda())).unwrap();
    let (res, geometry) = driver::linking_auto(&f, split, &opts);
    let linking = res.unwrap().points.into_iter().next().expect("linking produced no point");
    let newton = newton_deflated(&f, &[linking.u.clone()], &[], &opts).unwrap().into_iter().next().expect("Newton did not confirm");
    let distance = b.h_dist(&linking.u, &newton.u);
    LinkingReport {
        geometry: geometry.unwrap(),
        linking,
        newton,
        distance,
    }
}

#[test]
fn criterion_06_linking() {
    let t = Instant::now();
    let r = cached_6();
    let passed = r.linking.level > 0.0
        && r.linking.residual < RESIDUAL_TOL
        && r.newton.residual < RESIDUAL_TOL
        && r.distance < AGREE_TOL
        && r.geometry.split == SubspaceSplit { i: 1, j: 1 };
    report(
        6,
        passed,
        t.elapsed(),
        format!("level {:.8}, residual {:.1e}, Newton distance {:.2e}", r.linking.level, r.linking.residual, r.distance),
    );
}

fn run_criterion_7() -> fraclink::geometry::SweepTable {
    let b = interval();
    let nl = cubic();
    let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
    let lambdas = [0.0, 0.5 * PI, 0.9 * PI, 0.99 * PI, 0.999 * PI];
    sup_hj_sweep(&f, 1, &lambdas, 42).unwrap()
}

#[test]
fn criterion_07_sweep() {
    let t = Instant::now();
    let table = cached_7();
    let values: Vec<f64> = table.rows.iter().map(|r| r.sup_value).collect();
    let strictly = values.windows(2).all(|w| w[1] < w[0]);
    let passed = strictly && values.len() == 5 && table.final_value.is_some_and(|v| v < SWEEP_FINAL);
    report(7, passed, t.elapsed(), format!("sup values [{}]", values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")));
}

#[derive(Serialize)]
struct GapRun {
    scan: RadiusScan,
    reports: Vec<GapReport>,
}

fn run_criterion_8() -> GapRun {
    let b = square();
    let nl = cubic();
    let split = SubspaceSplit::new(&b, 2, 3).unwrap();
    let f = Functional::new(&b, &nl, ProblemParams { lambda: b.lambda(2) - 0.1 });
    let scan = scan_linking_radii(&f, split, &SamplerOptions::default()).unwrap();
    let geom = LinkingGeometry::new(split, scan.rho, scan.r_big);
    let reports = GAP_SEEDS
        .iter()
        .map(|&seed| linking_gap(&f, &geom, &SamplerOptions { rng_seed: seed, ..Default::default() }).unwrap())
        .collect();
    GapRun { scan, reports }
}

#[test]
fn criterion_08_linking_gap() {
    let t = Instant::now();
    let run = cached_8();
    let r0 = &run.reports[0];
    let spread = run
        .reports
        .iter()
        .map(|r| (r.sup_t - r0.sup_t).abs().max((r.inf_s - r0.inf_s).abs()))
        .fold(0.0, f64::max);
    let passed = run.reports.iter().all(|r| r.certified && r.gap > 0.0) && spread <= SEED_SPREAD_TOL;
    report(
        8,
        passed,
        t.elapsed(),
        format!(
            "rho {:.4}, R {}, gap {:.4e} (inf_S {:.4e}, sup_T {:.4e}), seed spread {spread:.1e}",
            run.scan.rho, run.scan.r_big, r0.gap, r0.inf_s, r0.sup_t
        ),
    );
}

fn run_criteria_9_10() -> MultiplicityReport {
    let b = square();
    let nl = cubic();
    let f = Functional::new(&b, &nl, ProblemParams { lambda: 0.0 });
    let opts = MultiplicityOptions {
        eigen_index: 2,
        deltas: DELTAS.to_vec(),
        nabla_samples: NABLA_SAMPLES,
        ..Default::default()
    };
    driver::multiplicity(&f, &opts).unwrap()
}

#[test]
fn criterion_09_multiplicity() {
    let t = Instant::now();
    let r = cached_9_10();
    let mut ok_rows = Vec::new();
    for row in r.rows.iter().filter(|row| row.passed) {
        let Some(c) = &row.classification else { continue };
        let low = c.points.iter().filter(|p| p.level <= c.sup_hj).count();
        let high = c.points.iter().filter(|p| p.level >= c.threshold).count();
        let ordered = c.sup_hj < c.threshold;
        let residuals = row.points.iter().all(|p| p.residual < RESIDUAL_TOL);
        if low >= 2 && high >= 1 && ordered && residuals && c.min_pairwise_distance.is_some_and(|d| d > DISTINCT_TOL) {
            ok_rows.push(format!("delta {}: sup f(H_j) {:.4}, threshold {:.4}", row.delta, c.sup_hj, c.threshold));
        }
    }
    let summary: Vec<String> = r.rows.iter().map(|row| format!("{}:{}", row.delta, if row.passed { "pass" } else { "fail" })).collect();
    report(
        9,
        !ok_rows.is_empty(),
        t.elapsed(),
        format!("rows [{}], window {:?}; {}", summary.join(" "), r.achieved_delta, ok_rows.first().cloned().unwrap_or_default()),
    );
}

#[test]
fn criterion_10_nabla() {
    let t = Instant::now();
    let r = cached_9_10();
    let passed = match &r.nabla {
        Some(n) => {
            let witness_json = to_string(&n.witness).unwrap();
            n.inf_estimate > 0.0 && n.sample_count == NABLA_SAMPLES && witness_json.len() > 2
        }
        None => false,
    };
    let detail = match (&r.nabla, &r.nabla_error) {
        (Some(n), _) => format!(
            "inf estimate {:.4e} at witness level {:.4e}, {} of {} samples in window",
            n.inf_estimate, n.witness_level, n.samples_in_window, n.sample_count
        ),
        (None, Some(e)) => e.clone(),
        (None, None) => "no passing delta".into(),
    };
    report(10, passed, t.elapsed(), detail);
}

#[derive(Serialize)]
struct AllReports<'a> {
    existence: &'a ExistenceReport,
    linking: &'a LinkingReport,
    sweep: &'a fraclink::geometry::SweepTable,
    gap: &'a GapRun,
    multiplicity: &'a MultiplicityReport,
}

fn all_json(a: AllReports) -> String {
    to_string(&a).unwrap()
}

#[test]
fn criterion_11_determinism() {
    let t = Instant::now();
    let first = all_json(AllReports {
        existence: cached_5(),
        linking: cached_6(),
        sweep: cached_7(),
        gap: cached_8(),
        multiplicity: cached_9_10(),
    });
    let second = all_json(AllReports {
        existence: &run_criterion_5(),
        linking: &run_criterion_6(),
        sweep: &run_criterion_7(),
        gap: &run_criterion_8(),
        multiplicity: &run_criteria_9_10(),
    });
    report(11, first == second, t.elapsed(), format!("{} report bytes compared", first.len()));
}

macro_rules! cached {
    ($name:ident, $ty:ty, $run:ident) => {
        fn $name() -> &'static $ty {
            static CELL: OnceLock<$ty> = OnceLock::new();
            CELL.get_or_init($run)
        }
    };
}

cached!(cached_5, ExistenceReport, run_criterion_5);
cached!(cached_6, LinkingReport, run_criterion_6);
cached!(cached_7, fraclink::geometry::SweepTable, run_criterion_7);
cached!(cached_8, GapRun, run_criterion_8);
cached!(cached_9_10, MultiplicityReport, run_criteria_9_10);
