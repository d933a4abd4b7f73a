//! Critical point search: mountain-pass path deformation, linking over a
//! mesh of `Δ_R`, and deflated Newton.

mod flow;
mod linking;
mod mountain_pass;
mod newton;
mod ray;

pub use linking::{inf_on_high_sphere, linking_solve, LinkingGeometry};
pub use mountain_pass::mountain_pass;
pub use newton::{newton_deflated, refine};
pub(crate) use newton::newton_deflated_labeled;
pub use ray::{find_far_endpoint, ray_max, sup_on_subspace, RayMax, SubspaceSup};

use serde::{Deserialize, Serialize};

use crate::coef::CoefVec;
use crate::error::Result;
use crate::functional::Functional;
use crate::optim::LineSearch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Nodes on the mountain-pass path, endpoints included.
    pub path_nodes: usize,
    /// Subdivisions per dimension of the linking mesh.
    pub mesh_subdivisions: usize,
    pub armijo_c: f64,
    pub max_halvings: usize,
    /// Certification threshold on `‖∇f‖`.
    pub residual_tol: f64,
    /// Max-node residual at which a descent flow hands over to Newton.
    pub flow_tol: f64,
    pub flow_max_iter: usize,
    pub newton_max_iter: usize,
    /// Minimum extension-norm distance between distinct critical points.
    pub dedup_tol: f64,
    /// Boundedness cap on iterate norms along every flow.
    pub norm_cap: f64,
    pub rng_seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            path_nodes: 65,
            mesh_subdivisions: 16,
            armijo_c: 1e-4,
            max_halvings: 40,
            residual_tol: 1e-8,
            flow_tol: 1e-4,
            flow_max_iter: 10_000,
            newton_max_iter: 200,
            dedup_tol: 1e-4,
            norm_cap: 1e6,
            rng_seed: 42,
        }
    }
}

impl SolverOptions {
    pub fn line_search(&self) -> LineSearch {
        LineSearch {
            c: self.armijo_c,
            max_halvings: self.max_halvings,
            initial_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MountainPass,
    Linking,
    NewtonDeflated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub u: CoefVec,
    /// `f_λ(u)`.
    pub level: f64,
    /// `‖∇f_λ(u)‖`, recomputed independently at certification.
    pub residual: f64,
    pub method: Method,
    /// Number of negative Hessian eigenvalues, when computable.
    pub morse_estimate: Option<usize>,
    /// Where the search that produced this point started.
    pub seed: String,
}

impl CriticalPoint {
    pub fn norm(&self, f: &Functional) -> f64 {
        f.basis().h_norm(&self.u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub iteration: usize,
    pub max_level: f64,
    pub max_node: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxResult {
    pub points: Vec<CriticalPoint>,
    /// Minimax level estimate (max over the deformed path or mesh).
    pub beta: f64,
    /// Max over the initial path or mesh, the a-priori upper bound on β.
    pub initial_sup: f64,
    pub iterations: usize,
    pub history: Vec<FlowRecord>,
    pub warnings: Vec<String>,
}

/// Re-evaluates the gradient at `u` and packages it as a critical point if
/// the residual is within tolerance.
pub fn certify(f: &Functional, u: CoefVec, method: Method, seed: impl Into<String>, tol: f64) -> Result<Option<CriticalPoint>> {
    let level = f.try_energy(&u)?;
    let residual = f.residual(&u);
    if !(residual <= tol) {
        return Ok(None);
    }
    let morse_estimate = f.morse_index(&u).ok();
    Ok(Some(CriticalPoint {
        u,
        level,
        residual,
        method,
        morse_estimate,
        seed: seed.into(),
    }))
}
