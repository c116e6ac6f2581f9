//! Piecewise-linear solution paths for the support vector machine dual.
//!
//! The dual problem of a soft-margin SVM,
//!
//! ```text
//!     maximize    -1/2 a' Q a + 1' a
//!     subject to  y' a = 0,   0 <= a <= c,
//! ```
//!
//! has a solution that is a piecewise-linear function of the regularization
//! vector when that vector moves along a line `c = c0 + theta * d`.  This
//! crate traces that path: exactly, or within user-controlled optimality
//! tolerances that skip over densely packed breakpoints while keeping every
//! emitted iterate certifiably close to optimal.
//!
//! # Modules
//!
//! - [`dataset`]: input parsing, feature scaling, kernel evaluation, and
//!   assembly of the jittered `Q` matrix.
//! - [`partition`]: the index-set triple `(O, M, I)` and exact/relaxed
//!   optimality checks.
//! - [`linsys`]: the bordered margin-set linear system, its incremental
//!   factorization updates, and segment direction solves.
//! - [`tracer`]: the main path-following loop over `theta`.
//! - [`degeneracy`]: breakpoint resolution — boundary sets, the auxiliary
//!   partition QP, and the non-cycling partition update.
//! - [`oracle`]: reference solvers used for initialization and ground truth.
//! - [`perturb`]: perturbation certificates and optimality-gap bounds for
//!   suboptimal iterates.
//! - [`metrics`]: path summaries and path-to-path comparison reports.

pub mod dataset;
pub mod degeneracy;
pub mod error;
pub mod linsys;
pub mod metrics;
pub mod oracle;
pub mod partition;
pub mod perturb;
pub mod tol;
pub mod tracer;

pub use error::PathError;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, PathError>;
