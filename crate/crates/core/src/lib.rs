//! Numerical calculus for quasilinear elliptic inclusions
//! `-div A(x, grad u) ∋ f` with integrable data and Musielak-Orlicz growth.
//!
//! The library is organized around the regularization route for such
//! problems: represent the maximal monotone flux law `A`, mollify it into a
//! single-valued map, truncate the datum, solve the smooth problems on a
//! finite-element mesh along a continuation schedule, and check the
//! quantitative structure that makes the route work — coercivity margins,
//! truncation energy estimates, decay of the flux through level bands,
//! cross-scheme agreement, and the explicit rearrangement-based supremum
//! bound.
//!
//! Modules:
//! - [`scalar`]: piecewise-linear convex calculus (hulls, exact Legendre
//!   transforms, inverses).
//! - [`nfunc`]: N-functions `M(x, xi)` — conjugation, stability envelopes,
//!   doubling checks, modulars, Luxemburg norms.
//! - [`monotone`]: maximal monotone graphs — selections, resolvents and the
//!   Minty transform, mollified approximations, coercivity checking.
//! - [`rearrange`]: distribution functions, decreasing/maximal
//!   rearrangements, symmetral pipelines, and the supremum bound evaluator.
//! - [`fem`]: meshes, piecewise-linear functions with zero trace,
//!   truncation, residual/Jacobian assembly.
//! - [`solver`]: the continuation driver and its diagnostics.

pub mod error;
pub mod expr;
pub mod fem;
pub mod monotone;
pub mod nfunc;
pub mod quad;
pub mod rearrange;
pub mod scalar;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
