//! Spectral-Galerkin discretization of `(−Δ)^{1/2} u = λu + g(x, u)` with
//! Dirichlet data on an interval or rectangle, and minimax searches for its
//! critical points.

pub mod coef;
pub mod driver;
pub mod error;
pub mod functional;
pub mod geometry;
pub mod json;
pub mod minimax;
pub mod optim;
pub mod quadrature;
pub mod spectral;

pub use coef::CoefVec;
pub use error::{Error, Result};
pub use functional::{Functional, Nonlinearity, NonlinearitySpec, ProblemParams};
pub use spectral::{build_basis, DomainSpec, SpectralBasis, SubspaceSplit};
