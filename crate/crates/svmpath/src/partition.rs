//! The index-set triple `(O, M, I)` and optimality-condition checks.
//!
//! Every point lives in exactly one of three sets at any position on the
//! path:
//!
//! - `O` (outside the margin): `y_i f_i >= 1` and `alpha_i = 0`;
//! - `M` (on the margin): `y_i f_i = 1` and `0 <= alpha_i <= C_i`;
//! - `I` (inside the margin or misclassified): `y_i f_i <= 1` and
//!   `alpha_i = C_i`.
//!
//! The relaxed variants widen the output conditions by `eps1` and the
//! multiplier conditions by `eps2`; at `(0, 0)` they reduce to the exact
//! conditions above.

use crate::error::PathError;
use crate::tol;
use crate::tracer::PathState;
use crate::Result;

/// Which of the three sets an index belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SetKind {
    /// Outside the margin: `alpha = 0`.
    Outside,
    /// On the margin: `y f = 1`.
    Margin,
    /// Inside the margin: `alpha = C`.
    Inside,
}

/// A disjoint, exhaustive assignment of `{0..n}` to the three sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assign: Vec<SetKind>,
}

impl Partition {
    /// Build from an explicit per-index assignment.
    pub fn from_assignment(assign: Vec<SetKind>) -> Self {
        Partition { assign }
    }

    /// Build from three index sets; rejects overlap, out-of-range indices,
    /// and incomplete coverage.
    pub fn from_sets(n: usize, o: &[usize], m: &[usize], i: &[usize]) -> Result<Self> {
        let mut assign = vec![None; n];
        for (kind, set) in [
            (SetKind::Outside, o),
            (SetKind::Margin, m),
            (SetKind::Inside, i),
        ] {
            for &idx in set {
                if idx >= n {
                    return Err(PathError::InvalidData(format!(
                        "index {idx} out of range for n = {n}"
                    )));
                }
                if assign[idx].is_some() {
                    return Err(PathError::InvalidData(format!(
                        "index {idx} assigned to two sets"
                    )));
                }
                assign[idx] = Some(kind);
            }
        }
        let assign = assign
            .into_iter()
            .enumerate()
            .map(|(idx, a)| a.ok_or_else(|| PathError::InvalidData(format!("index {idx} unassigned"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Partition { assign })
    }

    /// Number of points.
    pub fn n(&self) -> usize {
        self.assign.len()
    }

    /// The set containing index `i`.
    pub fn kind_of(&self, i: usize) -> SetKind {
        self.assign[i]
    }

    /// Reassign one index (used by the breakpoint update).
    pub fn set_kind(&mut self, i: usize, kind: SetKind) {
        self.assign[i] = kind;
    }

    /// Ascending indices belonging to `kind`.
    pub fn members(&self, kind: SetKind) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assign[i] == kind).collect()
    }

    /// Ascending indices of the outside set `O`.
    pub fn outside(&self) -> Vec<usize> {
        self.members(SetKind::Outside)
    }

    /// Ascending indices of the margin set `M`.
    pub fn margin(&self) -> Vec<usize> {
        self.members(SetKind::Margin)
    }

    /// Ascending indices of the inside set `I`.
    pub fn inside(&self) -> Vec<usize> {
        self.members(SetKind::Inside)
    }

    /// Set sizes `(|O|, |M|, |I|)`.
    pub fn sizes(&self) -> (usize, usize, usize) {
        let mut s = (0, 0, 0);
        for &k in &self.assign {
            match k {
                SetKind::Outside => s.0 += 1,
                SetKind::Margin => s.1 += 1,
                SetKind::Inside => s.2 += 1,
            }
        }
        s
    }
}

/// Optimality tolerances: `eps1` widens output conditions, `eps2` widens
/// multiplier (box) conditions. `(0, 0)` selects exact optimality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub eps1: f64,
    pub eps2: f64,
}

impl Tolerances {
    /// Validated constructor.
    pub fn new(eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 >= 0.0 && eps2 >= 0.0) {
            return Err(PathError::InvalidData(format!(
                "tolerances must be nonnegative, got ({eps1}, {eps2})"
            )));
        }
        Ok(Tolerances { eps1, eps2 })
    }

    /// Exact mode: both tolerances zero.
    pub fn exact() -> Self {
        Tolerances {
            eps1: 0.0,
            eps2: 0.0,
        }
    }

    /// Whether this is exact mode.
    pub fn is_exact(&self) -> bool {
        self.eps1 == 0.0 && self.eps2 == 0.0
    }
}

/// Result of an optimality check. Reported violations have the numeric
/// slack already subtracted (`max(0, raw - slack)`), so a pass is simply
/// "all reported violations are zero". The report never aborts; callers
/// decide policy.
#[derive(Debug, Clone)]
pub struct KktReport {
    /// Per-index violation of the output condition for the index's set.
    pub output_violation: Vec<f64>,
    /// Per-index violation of the multiplier (box) condition.
    pub multiplier_violation: Vec<f64>,
    /// Worst output violation over all indices.
    pub worst_output: f64,
    /// Worst multiplier violation over all indices.
    pub worst_multiplier: f64,
    /// `|y' alpha|`, the equality-constraint residual (raw, no slack).
    pub equality_residual: f64,
    /// True iff every reported violation is zero and the equality residual
    /// is within its scaled budget.
    pub pass: bool,
    /// The numeric slack that was subtracted from raw violations.
    pub slack: f64,
}

fn raw_violations(
    state: &PathState,
    pi: &Partition,
    eps1: f64,
    eps2: f64,
    i: usize,
) -> (f64, f64) {
    let yf = state.yf[i];
    let a = state.alpha[i];
    let c = state.c[i];
    match pi.kind_of(i) {
        SetKind::Outside => {
            let out = (1.0 - eps1) - yf;
            let mult = (-eps2 - a).max(a);
            (out.max(0.0), mult.max(0.0))
        }
        SetKind::Margin => {
            let out = (yf - 1.0).abs() - eps1;
            let mult = (-eps2 - a).max(a - c - eps2);
            (out.max(0.0), mult.max(0.0))
        }
        SetKind::Inside => {
            let out = yf - (1.0 + eps1);
            let mult = (c - a).max(a - c - eps2);
            (out.max(0.0), mult.max(0.0))
        }
    }
}

fn check_with(state: &PathState, pi: &Partition, eps1: f64, eps2: f64, slack: f64) -> KktReport {
    let n = pi.n();
    let mut output_violation = vec![0.0; n];
    let mut multiplier_violation = vec![0.0; n];
    let mut worst_output = 0.0f64;
    let mut worst_multiplier = 0.0f64;
    for i in 0..n {
        let (out, mult) = raw_violations(state, pi, eps1, eps2, i);
        let out = (out - slack).max(0.0);
        let mult = (mult - slack).max(0.0);
        output_violation[i] = out;
        multiplier_violation[i] = mult;
        worst_output = worst_output.max(out);
        worst_multiplier = worst_multiplier.max(mult);
    }
    let equality_residual = state
        .alpha
        .iter()
        .zip(state.y.iter())
        .map(|(a, y)| a * y)
        .sum::<f64>()
        .abs();
    let alpha_l1: f64 = state.alpha.iter().map(|a| a.abs()).sum();
    // The equality constraint is preserved by construction along the path;
    // its residual budget scales with the live magnitude of alpha.
    let equality_ok = equality_residual <= slack * (1.0 + alpha_l1);
    let pass = worst_output == 0.0 && worst_multiplier == 0.0 && equality_ok;
    KktReport {
        output_violation,
        multiplier_violation,
        worst_output,
        worst_multiplier,
        equality_residual,
        pass,
        slack,
    }
}

/// Check the exact optimality conditions (`eps1 = eps2 = 0`) under the
/// default numeric slack.
pub fn check_exact(state: &PathState, pi: &Partition) -> KktReport {
    check_with(state, pi, 0.0, 0.0, tol::KKT_SLACK)
}

/// Check the relaxed optimality conditions under the default numeric slack.
pub fn check_relaxed(state: &PathState, pi: &Partition, t: &Tolerances) -> KktReport {
    check_with(state, pi, t.eps1, t.eps2, tol::KKT_SLACK)
}

/// [`check_relaxed`] with an explicit numeric slack, for callers that need
/// to widen (or tighten) the float-noise allowance.
pub fn check_relaxed_with_slack(
    state: &PathState,
    pi: &Partition,
    t: &Tolerances,
    slack: f64,
) -> KktReport {
    check_with(state, pi, t.eps1, t.eps2, slack)
}

/// Fraction of indices assigned to different sets by the two partitions.
/// A metric with values in `{0, 1/n, ..., 1}`.
pub fn partition_difference(a: &Partition, b: &Partition) -> Result<f64> {
    if a.n() != b.n() {
        return Err(PathError::DimensionMismatch(format!(
            "partitions over {} and {} points",
            a.n(),
            b.n()
        )));
    }
    let differing = (0..a.n()).filter(|&i| a.kind_of(i) != b.kind_of(i)).count();
    Ok(differing as f64 / a.n() as f64)
}
