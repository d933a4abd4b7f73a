use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::flow::update_node;
use super::newton::refine;
use super::ray::golden_max;
use super::{certify, FlowRecord, Method, MinimaxResult, SolverOptions};
use crate::coef::CoefVec;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::optim::min_on_sphere_multistart;
use crate::spectral::{SpectralBasis, SubspaceSplit};

/// Radii and subspaces of a linking configuration. The mesh lives in
/// `H_j ⊕ [0, R]·e` with `e = linking_direction`; the linked sphere is the
/// `ρ`-sphere of `H_j^⊥`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkingGeometry {
    pub split: SubspaceSplit,
    pub rho: f64,
    #[serde(rename = "R")]
    pub r_big: f64,
    #[serde(default)]
    pub rho1: Option<f64>,
    #[serde(default)]
    pub rho_lo: Option<f64>,
    #[serde(default)]
    pub rho_hi: Option<f64>,
    /// One-based mode index, above `split.j`.
    pub linking_direction: usize,
}

impl LinkingGeometry {
    pub fn new(split: SubspaceSplit, rho: f64, r_big: f64) -> Self {
        Self {
            split,
            rho,
            r_big,
            rho1: None,
            rho_lo: None,
            rho_hi: None,
            linking_direction: split.j + 1,
        }
    }

    pub fn validate(&self, basis: &SpectralBasis) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < self.r_big && self.r_big.is_finite()) {
            return Err(Error::InvalidParameter(format!("need 0 < rho < R, got rho = {}, R = {}", self.rho, self.r_big)));
        }
        if let (Some(lo), Some(hi)) = (self.rho_lo, self.rho_hi) {
            if !(0.0 <= lo && lo < self.rho && self.rho < hi) {
                return Err(Error::InvalidParameter(format!("need 0 <= rho_lo < rho < rho_hi, got {lo}, {}, {hi}", self.rho)));
            }
        }
        if let Some(r1) = self.rho1 {
            if !(r1 > 0.0) {
                return Err(Error::InvalidParameter(format!("rho1 = {r1} must be positive")));
            }
        }
        if self.linking_direction <= self.split.j || self.linking_direction > basis.len() {
            return Err(Error::InvalidParameter(format!(
                "linking direction {} must lie in {}..={}",
                self.linking_direction,
                self.split.j + 1,
                basis.len()
            )));
        }
        SubspaceSplit::new(basis, self.split.i, self.split.j).map(|_| ())
    }
}

/// `inf f` over the `ρ`-sphere of `H_j^⊥`.
pub fn inf_on_high_sphere(f: &Functional, j: usize, rho: f64) -> f64 {
    let basis = f.basis();
    let obj = |u: &CoefVec| f.energy_and_gradient(u);
    let (best, _) = min_on_sphere_multistart(basis, &obj, rho, &(j..basis.len()), &[], Default::default());
    best.value
}

/// Tensor mesh of the box `[−R, R]^j × [0, R]` in extension-orthonormal
/// coordinates.
struct Mesh {
    dims: usize,
    per_dim: usize,
    nodes: Vec<CoefVec>,
    values: Vec<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

impl Mesh {
    fn build(f: &Functional, geom: &LinkingGeometry, subdivisions: usize) -> Self {
        let basis = f.basis();
        let j = geom.split.j;
        let dims = j + 1;
        let per_dim = subdivisions + 1;
        let total = per_dim.pow(dims as u32);
        let r = geom.r_big;
        let axes: Vec<CoefVec> = (1..=j).map(|k| basis.unit_mode(k)).chain([basis.unit_mode(geom.linking_direction)]).collect();
        let mut nodes = Vec::with_capacity(total);
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for idx in 0..total {
            let multi = Self::unravel(idx, dims, per_dim);
            let mut u = basis.zeros();
            for (d, &m) in multi.iter().enumerate() {
                let s = m as f64 / subdivisions as f64;
                let c = if d < j { r * (2.0 * s - 1.0) } else { r * s };
                u = u.axpy(c, &axes[d]);
            }
            nodes.push(u);
            if multi.iter().all(|&m| m > 0 && m < subdivisions) {
                interior.push(idx);
            } else {
                boundary.push(idx);
            }
        }
        let values = nodes.iter().map(|u| f.energy(u)).collect();
        Self {
            dims,
            per_dim,
            nodes,
            values,
            interior,
            boundary,
        }
    }

    fn unravel(mut idx: usize, dims: usize, per_dim: usize) -> Vec<usize> {
        let mut out = vec![0; dims];
        for slot in out.iter_mut() {
            *slot = idx % per_dim;
            idx /= per_dim;
        }
        out
    }

    fn stride(&self, d: usize) -> usize {
        self.per_dim.pow(d as u32)
    }

    fn max_interior(&self) -> usize {
        let mut best = self.interior[0];
        for &k in &self.interior[1..] {
            if self.values[k] > self.values[best] {
                best = k;
            }
        }
        best
    }

    fn tangents(&self, idx: usize) -> Vec<CoefVec> {
        (0..self.dims)
            .map(|d| {
                let s = self.stride(d);
                (&self.nodes[idx + s] - &self.nodes[idx - s]).scaled(0.5)
            })
            .collect()
    }

    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.dims).flat_map(move |d| {
            let s = self.stride(d);
            [idx - s, idx + s]
        })
    }
}

/// `sup f` over the continuous box, by coordinate-wise golden-section
/// ascent from the best mesh node.
fn box_sup(f: &Functional, geom: &LinkingGeometry, mesh: &Mesh, subdivisions: usize) -> f64 {
    let basis = f.basis();
    let j = geom.split.j;
    let r = geom.r_big;
    let axes: Vec<CoefVec> = (1..=j).map(|k| basis.unit_mode(k)).chain([basis.unit_mode(geom.linking_direction)]).collect();
    let bounds = |d: usize| if d < j { (-r, r) } else { (0.0, r) };
    let point = |c: &[f64]| c.iter().zip(&axes).fold(basis.zeros(), |u, (&ci, e)| u.axpy(ci, e));
    let best = (0..mesh.values.len()).fold(0, |b, k| if mesh.values[k] > mesh.values[b] { k } else { b });
    let mut c: Vec<f64> = Mesh::unravel(best, mesh.dims, mesh.per_dim)
        .iter()
        .enumerate()
        .map(|(d, &m)| {
            let (lo, hi) = bounds(d);
            lo + (hi - lo) * m as f64 / subdivisions as f64
        })
        .collect();
    let mut value = mesh.values[best];
    for _ in 0..50 {
        let before = value;
        for d in 0..mesh.dims {
            let (lo, hi) = bounds(d);
            let h = (hi - lo) / subdivisions as f64;
            let (a, b) = ((c[d] - h).max(lo), (c[d] + h).min(hi));
            let phi = |s: f64| {
                let mut trial = c.clone();
                trial[d] = s;
                f.energy(&point(&trial))
            };
            let s = golden_max(&phi, a, b, 1e-12 * r);
            let v = phi(s);
            if v > value {
                c[d] = s;
                value = v;
            }
        }
        if value - before <= 1e-15 * value.abs().max(1.0) {
            break;
        }
    }
    value
}

/// Linking algorithm: mesh the box over `H_j ⊕ e`, freeze its boundary,
/// descend the highest interior node until it stalls at a saddle, then
/// Newton-polish it.
pub fn linking_solve(f: &Functional, geom: &LinkingGeometry, opts: &SolverOptions) -> Result<MinimaxResult> {
    let basis = f.basis();
    geom.validate(basis)?;
    if opts.mesh_subdivisions < 2 {
        return Err(Error::InvalidParameter(format!("mesh_subdivisions = {} < 2", opts.mesh_subdivisions)));
    }
    let j = geom.split.j;
    let mut warnings = Vec::new();
    let lam = f.lambda();
    if !(basis.lambda(j) <= lam && lam < basis.lambda(j + 1)) {
        let msg = format!(
            "λ = {lam} outside [λ_{j}, λ_{}) = [{}, {}): linking geometry not guaranteed, running as heuristic",
            j + 1,
            basis.lambda(j),
            basis.lambda(j + 1)
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let mut mesh = Mesh::build(f, geom, opts.mesh_subdivisions);
    let sup_boundary = mesh.boundary.iter().map(|&k| mesh.values[k]).fold(f64::NEG_INFINITY, f64::max);
    let inf_sphere = inf_on_high_sphere(f, j, geom.rho);
    debug!("linking gap: inf S = {inf_sphere:e}, sup boundary = {sup_boundary:e}");
    if !(inf_sphere > sup_boundary && inf_sphere > 0.0) {
        return Err(Error::GapNotVerified { sup_boundary, inf_sphere });
    }
    let initial_sup = box_sup(f, geom, &mesh, opts.mesh_subdivisions);

    let ls = opts.line_search();
    let spacing = geom.r_big / opts.mesh_subdivisions as f64;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;
    let mut stalled = 0;
    let mut m = mesh.max_interior();
    while iterations < opts.flow_max_iter {
        m = mesh.max_interior();
        let step = update_node(f, &mesh.nodes[m], &mesh.tangents(m), ls);
        last_residual = step.residual;
        if iterations % 25 == 0 {
            history.push(FlowRecord {
                iteration: iterations,
                max_level: mesh.values[m],
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
        for nb in mesh.neighbours(m) {
            let distance = basis.h_dist(&step.point, &mesh.nodes[nb]);
            if distance < 1e-9 * spacing {
                return Err(Error::MeshDegenerate { node: m, distance });
            }
        }
        mesh.nodes[m] = step.point;
        mesh.values[m] = step.value;
        stalled = if step.moved { 0 } else { stalled + 1 };
        if stalled >= 3 {
            break;
        }
    }
    let beta = mesh.values[mesh.max_interior()];
    history.push(FlowRecord {
        iteration: iterations,
        max_level: beta,
        max_node: m,
        residual: last_residual,
    });
    debug!("linking: {iterations} flow iterations, β ≈ {beta}, residual {last_residual:e}");

    let start = mesh.nodes[mesh.max_interior()].clone();
    let refined = refine(f, &start, opts).ok_or(Error::IterationCap {
        iterations,
        residual: last_residual,
    })?;
    let norm = basis.h_norm(&refined);
    if norm <= opts.dedup_tol {
        return Err(Error::PathCollapse { norm });
    }
    let seed = format!("linking mesh on H_{j} + e_{}, R = {}", geom.linking_direction, geom.r_big);
    let points = certify(f, refined, Method::Linking, seed, opts.residual_tol)?.into_iter().collect();
    Ok(MinimaxResult {
        points,
        beta,
        initial_sup,
        iterations,
        history,
        warnings,
    })
}
