//! Centralized numeric tolerances.
//!
//! Every comparison threshold used by the path machinery is defined here
//! with its rationale, so that no module carries ad-hoc magic numbers.
//!
//! Three different kinds of quantity appear:
//!
//! - **slacks** absorb floating-point noise in comparisons that are exact in
//!   real arithmetic (set-membership tests, complementarity products);
//! - **residual budgets** bound the error of linear solves and incremental
//!   updates relative to a fresh dense factorization;
//! - **structural thresholds** (pivot floors, iteration caps) decide when an
//!   algorithm must give up rather than produce garbage.

/// Default slack applied to optimality-condition comparisons.
///
/// Path updates accumulate rounding at the scale of a few ulps per
/// breakpoint; 1e-9 sits far above that accumulation for desk-scale runs
/// while staying six orders of magnitude below the smallest meaningful
/// tolerance the diagonal jitter (1e-6) can support.
pub const KKT_SLACK: f64 = 1e-9;

/// Absolute window within which equal step-length candidates are treated as
/// a tie and all owners enter the boundary-set construction together.
///
/// Ties that matter are exact in real arithmetic (several indices hitting
/// bounds at the same breakpoint); 1e-12 catches their rounded images
/// without merging genuinely distinct breakpoints.
pub const TIE_SLACK: f64 = 1e-12;

/// Relative pivot floor for the bordered margin-set factorization: a pivot
/// below `SINGULARITY_RELATIVE * norm_inf(M)` signals singularity.
///
/// The diagonal jitter keeps well-posed systems at least ~1e-6 above zero,
/// so 1e-12 separates "ill-posed" from "merely small" by six orders.
pub const SINGULARITY_RELATIVE: f64 = 1e-12;

/// Relative residual budget for direction solves and incremental-vs-fresh
/// factorization agreement.
pub const DIRECTION_RESIDUAL: f64 = 1e-8;

/// Relative objective budget for the partition QP at its optimum (the
/// optimum is exactly zero in real arithmetic).
pub const QP_OBJECTIVE_REL: f64 = 1e-10;

/// Absolute constraint-violation budget for the partition QP solution.
pub const QP_CONSTRAINT_SLACK: f64 = 1e-9;

/// Incremental updates to the margin-system factorization are replaced by a
/// fresh build after this many rank-one changes, bounding drift.
pub const REFRESH_INTERVAL: usize = 64;

/// The cached output vector `y_i f_i` is recomputed from scratch every this
/// many breakpoints and checked against its incrementally maintained value.
pub const YF_RECOMPUTE_INTERVAL: usize = 50;

/// Relative drift allowed between the incrementally maintained outputs and a
/// full recomputation.
pub const YF_DRIFT_REL: f64 = 1e-7;

/// Breakpoint budget per traced path, as a multiple of the point count.
/// Exceeding it aborts the trace with a suspected-cycling error.
pub const CYCLE_CAP_FACTOR: usize = 50;

/// Iteration cap for the inner active-set solver of the partition QP, as an
/// affine function of the variable count: `cap = QP_ITER_BASE + QP_ITER_PER_VAR * m`.
pub const QP_ITER_BASE: usize = 100;

/// See [`QP_ITER_BASE`].
pub const QP_ITER_PER_VAR: usize = 100;
