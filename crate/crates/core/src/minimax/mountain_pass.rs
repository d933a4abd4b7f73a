use log::{debug, warn};

use super::flow::update_node;
use super::newton::refine;
use super::ray::{find_far_endpoint, ray_max};
use super::{certify, FlowRecord, Method, MinimaxResult, SolverOptions};
use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;

const HISTORY_STRIDE: usize = 25;

/// Deforms the segment from 0 to `t_far·direction` by moving its highest
/// interior node, then polishes that node with Newton.
pub fn mountain_pass(f: &Functional, direction: &CoefVec, opts: &SolverOptions) -> Result<MinimaxResult> {
    let basis = f.basis();
    basis.check(direction)?;
    if !direction.is_finite() {
        return Err(Error::NonFinite("mountain-pass direction".into()));
    }
    if direction.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroDirection);
    }
    if opts.path_nodes < 3 {
        return Err(Error::InvalidParameter(format!("path_nodes = {} < 3", opts.path_nodes)));
    }
    let mut warnings = Vec::new();
    if f.lambda() >= basis.lambda(1) {
        let msg = format!(
            "λ = {} ≥ λ₁ = {}: mountain-pass geometry not guaranteed, running as heuristic",
            f.lambda(),
            basis.lambda(1)
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let t_far = find_far_endpoint(f, direction)?;
    let n = opts.path_nodes;
    let mut nodes: Vec<CoefVec> = (0..n).map(|m| direction.scaled(t_far * m as f64 / (n - 1) as f64)).collect();
    let mut values: Vec<f64> = nodes.iter().map(|u| f.energy(u)).collect();
    let initial_sup = max_interior(&values).1.max(ray_max(f, direction)?.value);

    let ls = opts.line_search();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;
    let mut stalled = 0;
    let mut m = 1;
    while iterations < opts.flow_max_iter {
        m = max_interior(&values).0;
        let tangent = (&nodes[m + 1] - &nodes[m - 1]).scaled(0.5);
        let step = update_node(f, &nodes[m], &[tangent], ls);
        last_residual = step.residual;
        if iterations % HISTORY_STRIDE == 0 {
            history.push(FlowRecord {
                iteration: iterations,
                max_level: values[m],
                max_node: m,
                residual: step.residual,
            });
        }
        iterations += 1;
        if step.residual <= opts.flow_tol || step.transverse <= 0.1 * opts.flow_tol {
            break;
        }
        let norm = basis.h_norm(&step.point);
        if norm > opts.norm_cap {
            return Err(Error::Unbounded { norm, cap: opts.norm_cap });
        }
        if step.value <= 0.0 || norm < opts.dedup_tol {
            return Err(Error::PathCollapse { norm });
        }
        nodes[m] = step.point;
        values[m] = step.value;
        stalled = if step.moved { 0 } else { stalled + 1 };
        if stalled >= 3 {
            break;
        }
    }
    let beta = max_interior(&values).1;
    history.push(FlowRecord {
        iteration: iterations,
        max_level: beta,
        max_node: m,
        residual: last_residual,
    });
    debug!("mountain pass: {iterations} flow iterations, β ≈ {beta}, residual {last_residual:e}");

    let start = nodes[max_interior(&values).0].clone();
    let refined = refine(f, &start, opts).ok_or(Error::IterationCap {
        iterations,
        residual: last_residual,
    })?;
    let norm = basis.h_norm(&refined);
    if norm <= opts.dedup_tol {
        return Err(Error::PathCollapse { norm });
    }
    let seed = format!("mountain pass, t_far = {t_far}");
    let points = certify(f, refined, Method::MountainPass, seed, opts.residual_tol)?.into_iter().collect();
    Ok(MinimaxResult {
        points,
        beta,
        initial_sup,
        iterations,
        history,
        warnings,
    })
}

/// Index and value of the highest interior node; ties go to the lowest index.
fn max_interior(values: &[f64]) -> (usize, f64) {
    let mut best = 1;
    for k in 2..values.len() - 1 {
        if values[k] > values[best] {
            best = k;
        }
    }
    (best, values[best])
}
