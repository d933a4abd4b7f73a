use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use fraclink::driver::{self, MultiplicityOptions, SolveReport};
use fraclink::json::{format_f64, to_string};
use fraclink::minimax::CriticalPoint;
use fraclink::{Functional, ProblemParams, SpectralBasis};
use log::{error, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Loaded, RunConfig};
use crate::{EXIT_NO_SOLUTION, EXIT_VERIFY};

pub const SCHEMA: &str = "fraclink/1";

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema: &'static str,
    command: &'static str,
    config: &'a RunConfig,
    warnings: &'a [String],
    result: T,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_report<T: Serialize>(loaded: &Loaded, command: &'static str, warnings: &[String], result: T) -> Result<()> {
    let report = Report {
        schema: SCHEMA,
        command,
        config: &loaded.config,
        warnings,
        result,
    };
    write(&loaded.config.output_dir, "report.json", &to_string(&report)?)
}

/// Drops points whose residual fails an independent recomputation.
fn reverified(f: &Functional, points: Vec<CriticalPoint>, tol: f64) -> Vec<CriticalPoint> {
    points
        .into_iter()
        .filter(|p| {
            let r = f.residual(&p.u);
            let ok = r <= tol;
            if !ok {
                error!("dropping point from {:?}: residual {r:e} on recheck", p.method);
            }
            ok
        })
        .collect()
}

fn spectrum_csv(basis: &SpectralBasis) -> Result<String> {
    let clusters = basis.group_eigenvalues(1e-12)?;
    let mut out = String::from("k,multi_index,lambda,laplacian_eigenvalue,cluster\n");
    for (k, m) in basis.modes().iter().enumerate() {
        let cluster = clusters.iter().position(|c| c.i <= k + 1 && k + 1 <= c.j).map_or(0, |c| c + 1);
        let idx: Vec<String> = m.index.iter().map(|i| i.to_string()).collect();
        writeln!(out, "{},{},{},{},{}", k + 1, idx.join(" "), format_f64(m.lambda), format_f64(m.lambda * m.lambda), cluster)?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct EigSummary {
    k_max: usize,
    quad_order: usize,
    gram_deviation: f64,
    first_eigenvalues: Vec<f64>,
    clusters: Vec<(usize, usize)>,
}

pub fn eig(loaded: &Loaded, quiet: bool) -> Result<u8> {
    let (basis, _, warnings) = loaded.validate()?;
    let dir = &loaded.config.output_dir;
    let mut buf = Vec::new();
    basis.write_json(&mut buf)?;
    buf.push(b'\n');
    std::fs::write(dir.join("basis.json"), buf).context("writing basis.json")?;
    write(dir, "spectrum.csv", &spectrum_csv(&basis)?)?;
    let clusters: Vec<(usize, usize)> = basis.group_eigenvalues(1e-12)?.iter().map(|c| (c.i, c.j)).collect();
    let first: Vec<f64> = basis.lambdas().iter().take(10).copied().collect();
    if !quiet {
        for (k, l) in first.iter().enumerate() {
            println!("lambda_{:<2} = {l:.12}", k + 1);
        }
        let shown: Vec<String> = clusters.iter().filter(|c| c.0 <= 10).map(|(i, j)| format!("{{{i}..{j}}}")).collect();
        println!("clusters: {}", shown.join(" "));
    }
    write_report(
        loaded,
        "eig",
        &warnings,
        EigSummary {
            k_max: basis.len(),
            quad_order: basis.quad_order(),
            gram_deviation: basis.gram_deviation(),
            first_eigenvalues: first,
            clusters,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct SolutionSet<'a> {
    lambda: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    points: &'a [CriticalPoint],
}

pub fn solve(loaded: &Loaded, quiet: bool) -> Result<u8> {
    let (basis, nl, warnings) = loaded.validate()?;
    let lambdas = loaded.solve_lambdas()?;
    let opts = &loaded.config.solver;
    let reports: Vec<SolveReport> = lambdas
        .par_iter()
        .map(|&lambda| {
            let f = Functional::new(&basis, &nl, ProblemParams { lambda });
            let mut r = driver::solve(&f, opts)?;
            r.points = reverified(&f, r.points, opts.residual_tol);
            r.nontrivial = r.points.iter().filter(|p| basis.h_norm(&p.u) > opts.dedup_tol).count();
            Ok(r)
        })
        .collect::<fraclink::Result<_>>()?;
    let sets: Vec<SolutionSet> = reports
        .iter()
        .map(|r| SolutionSet {
            lambda: r.lambda,
            delta: None,
            points: &r.points,
        })
        .collect();
    write(&loaded.config.output_dir, "solutions.json", &to_string(&sets)?)?;
    write_report(loaded, "solve", &warnings, &reports)?;
    let total: usize = reports.iter().map(|r| r.nontrivial).sum();
    if !quiet {
        for r in &reports {
            println!("lambda = {:.6}: {:?}, {} nontrivial point(s)", r.lambda, r.dispatch, r.nontrivial);
            for p in &r.points {
                println!("  level {:.10e}  residual {:.2e}  morse {:?}  {:?}", p.level, p.residual, p.morse_estimate, p.method);
            }
        }
    }
    if total == 0 {
        warn!("no nontrivial critical point found");
        return Ok(EXIT_NO_SOLUTION);
    }
    Ok(0)
}

pub fn multiplicity(loaded: &Loaded, quiet: bool) -> Result<u8> {
    let (basis, nl, warnings) = loaded.validate()?;
    let (eigen_index, deltas) = loaded.deltas()?;
    let c = &loaded.config;
    let opts = MultiplicityOptions {
        eigen_index,
        deltas,
        bisection_steps: c.multiplicity.bisection_steps,
        nabla_samples: c.multiplicity.nabla_samples,
        solver: c.solver.clone(),
        sampler: c.multiplicity.sampler.clone(),
    };
    let f = Functional::new(&basis, &nl, ProblemParams { lambda: 0.0 });
    let mut report = driver::multiplicity(&f, &opts).map_err(|e| match e {
        fraclink::Error::InvalidParameter(m) => anyhow::Error::new(loaded.error("eigen_index", m)),
        other => other.into(),
    })?;
    for row in &mut report.rows {
        let fr = f.at_lambda(row.lambda);
        row.points = reverified(&fr, std::mem::take(&mut row.points), c.solver.residual_tol);
    }
    let sets: Vec<SolutionSet> = report
        .rows
        .iter()
        .map(|r| SolutionSet {
            lambda: r.lambda,
            delta: Some(r.delta),
            points: &r.points,
        })
        .collect();
    write(&c.output_dir, "solutions.json", &to_string(&sets)?)?;
    write_report(loaded, "multiplicity", &warnings, &report)?;
    if !quiet {
        for r in &report.rows {
            let status = if r.passed { "PASS" } else { "FAIL" };
            println!("delta = {:<10} lambda = {:.8}  {status}  {} point(s)  {}", r.delta, r.lambda, r.points.len(), r.reasons.join("; "));
        }
        println!("achieved delta window: {:?}", report.achieved_delta);
    }
    if !report.rows.is_empty() && report.achieved_delta.is_none() {
        return Ok(EXIT_NO_SOLUTION);
    }
    Ok(0)
}

fn join_map(m: &std::collections::BTreeMap<String, f64>) -> String {
    m.iter().map(|(k, v)| format!("{k}={}", format_f64(*v))).collect::<Vec<_>>().join(";")
}

pub fn verify(loaded: &Loaded, quiet: bool) -> Result<u8> {
    let (basis, nl, warnings) = loaded.validate()?;
    let c = &loaded.config;
    let f = Functional::new(&basis, &nl, ProblemParams { lambda: c.lambda.unwrap_or(0.0) });
    let report = driver::verify(&f, &c.verify)?;

    let mut csv = String::from("name,parameters,measured,passed\n");
    for r in &report.rows {
        writeln!(csv, "{},{},{},{}", r.name, join_map(&r.parameters), join_map(&r.measured), r.passed)?;
    }
    write(&c.output_dir, "checks.csv", &csv)?;
    if let Some(t) = &report.sweep {
        let mut sweep = String::from("lambda_gap,sup_value\n");
        for row in &t.rows {
            writeln!(sweep, "{},{}", format_f64(row.lambda_gap), format_f64(row.sup_value))?;
        }
        write(&c.output_dir, "sweep.csv", &sweep)?;
    }
    write_report(loaded, "verify", &warnings, &report)?;
    if !quiet {
        for r in &report.rows {
            println!("{:<5} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
        }
    }
    Ok(if report.all_passed { 0 } else { EXIT_VERIFY })
}
