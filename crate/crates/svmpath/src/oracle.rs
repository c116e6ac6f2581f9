//! Reference solvers for the dual problem at a fixed regularization
//! vector.
//!
//! Two independent routes to ground truth:
//!
//! * [`solve_dual_reference`] — working-pair coordinate ascent over the
//!   equality constraint (maximal-violating-pair selection), then a
//!   snap-and-repair polish: bound variables are set exactly onto their
//!   bounds, the margin block is re-solved through the bordered system,
//!   and misclassified indices are reassigned until the exact optimality
//!   conditions hold to machine precision.
//! * [`enumerate_partitions_exact`] — brute force over all 3^n
//!   partitions for tiny instances; the strongest ground truth.
//!
//! The path tracer uses [`initialize_path`] to obtain its starting
//! optimum at theta = 0.

use crate::dataset::QMatrix;
use crate::error::PathError;
use crate::linsys::MarginSystem;
use crate::metrics::dual_objective;
use crate::partition::{check_exact, Partition, SetKind};
use crate::tol;
use crate::tracer::{PathProblem, PathState};
use crate::Result;

/// An exact reference solution of the dual at one regularization vector.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub alpha: Vec<f64>,
    pub alpha0: f64,
    pub partition: Partition,
    /// Dual objective value `-1/2 alpha' Q alpha + 1' alpha`.
    pub objective: f64,
    /// The regularization vector this solution was computed for (used to
    /// detect mismatched comparisons).
    pub c: Vec<f64>,
}

fn validate_inputs(q: &QMatrix, y: &[f64], c: &[f64]) -> Result<usize> {
    let n = q.n();
    if y.len() != n || c.len() != n {
        return Err(PathError::DimensionMismatch(format!(
            "Q is {n}x{n} but |y| = {}, |c| = {}",
            y.len(),
            c.len()
        )));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(PathError::InvalidData(
            "both classes must be present".into(),
        ));
    }
    for (i, &ci) in c.iter().enumerate() {
        if !(ci > 0.0 && ci.is_finite()) {
            return Err(PathError::InvalidData(format!(
                "regularization bound {i} must be positive and finite, got {ci}"
            )));
        }
    }
    Ok(n)
}

/// Deterministic choice from a feasible bias interval (mirrors the
/// multiplier-interval rule of the partition QP).
fn pick_from_interval(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// Maximal-violating-pair coordinate ascent on the dual. Returns `alpha`
/// and the final bias estimate (midpoint of the optimal-bias interval).
fn smo_max_violating_pair(q: &QMatrix, y: &[f64], c: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = q.n();
    let mut alpha = vec![0.0; n];
    // grad_i = (Q alpha)_i - 1, the gradient of the negated objective.
    let mut grad = vec![-1.0; n];
    let cap = 200_000usize.max(500 * n * n);

    for _ in 0..cap {
        // Selection: i maximizes -y grad over coordinates free to increase
        // along +y, j minimizes it over those free to decrease.
        let mut m_val = f64::NEG_INFINITY;
        let mut m_idx = usize::MAX;
        let mut w_val = f64::INFINITY;
        let mut w_idx = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c[t]) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] < 0.0 && alpha[t] < c[t]) || (y[t] > 0.0 && alpha[t] > 0.0);
            if up && v > m_val {
                m_val = v;
                m_idx = t;
            }
            if low && v < w_val {
                w_val = v;
                w_idx = t;
            }
        }
        if m_idx == usize::MAX || w_idx == usize::MAX {
            // One selection side is empty: every coordinate is saturated in
            // that direction, so the current point is box-optimal. The bias
            // lies in [max_up, min_low] with the empty side unbounded.
            let lo = if m_idx == usize::MAX { f64::NEG_INFINITY } else { m_val };
            let hi = if w_idx == usize::MAX { f64::INFINITY } else { w_val };
            return Ok((alpha, pick_from_interval(lo, hi)));
        }
        let gap = m_val - w_val;
        if gap <= 1e-10 * (1.0 + m_val.abs() + w_val.abs()) {
            return Ok((alpha, 0.5 * (m_val + w_val)));
        }

        let (i, j) = (m_idx, w_idx);
        // Ascent along u = y_i e_i - y_j e_j (preserves y' alpha).
        let curv = q.get(i, i) + q.get(j, j) - 2.0 * y[i] * y[j] * q.get(i, j);
        let mut step = if curv > 0.0 { gap / curv } else { f64::INFINITY };
        // Box limits for alpha_i moving by +y_i step, alpha_j by -y_j step.
        let lim_i = if y[i] > 0.0 { c[i] - alpha[i] } else { alpha[i] };
        let lim_j = if y[j] > 0.0 { alpha[j] } else { c[j] - alpha[j] };
        step = step.min(lim_i).min(lim_j);
        if !(step > 0.0) {
            return Err(PathError::NonConvergence(
                "working-pair solver stalled with zero step".into(),
            ));
        }
        alpha[i] += y[i] * step;
        alpha[j] -= y[j] * step;
        alpha[i] = alpha[i].clamp(0.0, c[i]);
        alpha[j] = alpha[j].clamp(0.0, c[j]);
        for t in 0..n {
            grad[t] += q.get(t, i) * y[i] * step - q.get(t, j) * y[j] * step;
        }
    }
    Err(PathError::NonConvergence(format!(
        "working-pair solver did not reach its tolerance within {cap} iterations"
    )))
}

/// Solve the margin block for a candidate assignment: bound variables are
/// pinned exactly, `(alpha0, alpha_M)` come from the bordered system (or
/// the feasible-bias interval when the margin set is empty). Returns
/// `(alpha, alpha0, yf)`.
fn snapped_solve(
    assign: &[SetKind],
    q: &QMatrix,
    y: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, f64, Vec<f64>)> {
    let n = assign.len();
    let members: Vec<usize> = (0..n).filter(|&i| assign[i] == SetKind::Margin).collect();
    let mut alpha = vec![0.0; n];
    for i in 0..n {
        if assign[i] == SetKind::Inside {
            alpha[i] = c[i];
        }
    }
    let alpha0;
    if members.is_empty() {
        // Feasible bias interval from the output conditions of the pinned
        // variables: yf_i = (Q alpha)_i + y_i alpha0 must be >= 1 on O and
        // <= 1 on I.
        let qa = q.mul_vec(&alpha);
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..n {
            let bound = y[i] * (1.0 - qa[i]);
            match (assign[i], y[i] > 0.0) {
                (SetKind::Outside, true) | (SetKind::Inside, false) => lo = lo.max(bound),
                (SetKind::Outside, false) | (SetKind::Inside, true) => hi = hi.min(bound),
                _ => unreachable!("margin handled above"),
            }
        }
        // An empty interval (lo > hi) means this assignment is not optimal;
        // the midpoint still yields finite outputs so the caller's
        // optimality checks can locate the violation.
        alpha0 = pick_from_interval(lo, hi);
    } else {
        let sys = MarginSystem::build_from_members(members.clone(), q, y)?;
        // Right-hand side: y_M' a_M = -y' alpha_pinned; Q_MM a_M + y_M a0 =
        // 1 - (Q alpha_pinned)_M.
        let qa_pinned = q.mul_vec(&alpha);
        let ya_pinned: f64 = alpha.iter().zip(y.iter()).map(|(a, yi)| a * yi).sum();
        let mut rhs = vec![0.0; members.len() + 1];
        rhs[0] = -ya_pinned;
        for (r, &i) in members.iter().enumerate() {
            rhs[r + 1] = 1.0 - qa_pinned[i];
        }
        let sol = sys.solve(&rhs);
        alpha0 = sol[0];
        for (r, &i) in members.iter().enumerate() {
            alpha[i] = sol[r + 1];
        }
    }
    let mut yf = q.mul_vec(&alpha);
    for i in 0..n {
        yf[i] += y[i] * alpha0;
    }
    Ok((alpha, alpha0, yf))
}

/// The worst exact-optimality violation of a snapped solve, as
/// `(normalized magnitude, index, corrected set)`, or `None` when clean.
/// Box violations are normalized by the regularization scale so they are
/// comparable with output violations.
fn worst_violation(
    assign: &[SetKind],
    alpha: &[f64],
    yf: &[f64],
    c: &[f64],
) -> Option<(f64, usize, SetKind)> {
    let cmax = c.iter().fold(0.0f64, |m, &v| m.max(v));
    let bound_slack = tol::KKT_SLACK * (1.0 + cmax);
    let mut worst: Option<(f64, usize, SetKind)> = None;
    let mut push = |mag: f64, i: usize, kind: SetKind| {
        if worst.map(|(m, _, _)| mag > m).unwrap_or(true) {
            worst = Some((mag, i, kind));
        }
    };
    for i in 0..assign.len() {
        match assign[i] {
            SetKind::Margin => {
                if -alpha[i] > bound_slack {
                    push(-alpha[i] / (1.0 + cmax), i, SetKind::Outside);
                } else if alpha[i] - c[i] > bound_slack {
                    push((alpha[i] - c[i]) / (1.0 + cmax), i, SetKind::Inside);
                }
            }
            SetKind::Outside => {
                if 1.0 - yf[i] > tol::KKT_SLACK {
                    push(1.0 - yf[i], i, SetKind::Margin);
                }
            }
            SetKind::Inside => {
                if yf[i] - 1.0 > tol::KKT_SLACK {
                    push(yf[i] - 1.0, i, SetKind::Margin);
                }
            }
        }
    }
    worst
}

/// Polish a near-optimal multiplier vector to machine precision: classify
/// by thresholding, snap-solve, then repair the classification one worst
/// violator at a time.
fn snap_and_repair(
    q: &QMatrix,
    y: &[f64],
    c: &[f64],
    alpha_in: &[f64],
    alpha0_in: f64,
) -> Result<OracleSolution> {
    let n = alpha_in.len();
    let cmax = c.iter().fold(0.0f64, |m, &v| m.max(v));
    let snap_tol = 1e-7 * (1.0 + cmax);
    let mut yf_est = q.mul_vec(alpha_in);
    for i in 0..n {
        yf_est[i] += y[i] * alpha0_in;
    }
    let mut assign: Vec<SetKind> = (0..n)
        .map(|i| {
            let at_lower = alpha_in[i] <= snap_tol;
            let at_upper = alpha_in[i] >= c[i] - snap_tol;
            let on_margin = (yf_est[i] - 1.0).abs() <= 1e-7;
            if (at_lower || at_upper) && !on_margin {
                // When both bounds are within the snap window (tiny box),
                // pick the nearer one.
                if at_lower && (!at_upper || 2.0 * alpha_in[i] <= c[i]) {
                    SetKind::Outside
                } else {
                    SetKind::Inside
                }
            } else {
                SetKind::Margin
            }
        })
        .collect();

    let cap = 8 * n + 16;
    let bound_slack = tol::KKT_SLACK * (1.0 + cmax);
    for _ in 0..cap {
        let (alpha, alpha0, yf) = snapped_solve(&assign, q, y, c)?;
        // With an empty margin set nothing enforces the equality
        // constraint; absorb any pinning drift by promoting one index
        // whose multiplier can take the whole residual.
        if assign.iter().all(|&k| k != SetKind::Margin) {
            let residual: f64 = alpha.iter().zip(y.iter()).map(|(a, yi)| a * yi).sum();
            let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
            if residual.abs() > tol::KKT_SLACK * (1.0 + l1) {
                let fits = (0..n).find(|&i| {
                    let target = match assign[i] {
                        SetKind::Outside => -y[i] * residual,
                        SetKind::Inside => c[i] - y[i] * residual,
                        SetKind::Margin => unreachable!("margin set is empty"),
                    };
                    (-bound_slack..=c[i] + bound_slack).contains(&target)
                });
                match fits {
                    Some(i) => {
                        assign[i] = SetKind::Margin;
                        continue;
                    }
                    None => {
                        return Err(PathError::NonConvergence(format!(
                            "cannot absorb an equality residual of {residual:.3e} with every multiplier at a bound"
                        )));
                    }
                }
            }
        }
        match worst_violation(&assign, &alpha, &yf, c) {
            None => {
                let partition = Partition::from_assignment(assign);
                let objective = dual_objective(&alpha, q);
                let state = PathState {
                    theta: 0.0,
                    alpha0,
                    alpha: alpha.clone(),
                    c: c.to_vec(),
                    yf,
                    y: y.to_vec(),
                };
                let report = check_exact(&state, &partition);
                if !report.pass {
                    return Err(PathError::NonConvergence(format!(
                        "polished solution still violates exact optimality (worst output {:.3e}, worst multiplier {:.3e}); a larger diagonal jitter may be needed",
                        report.worst_output, report.worst_multiplier
                    )));
                }
                return Ok(OracleSolution {
                    alpha,
                    alpha0,
                    partition,
                    objective,
                    c: c.to_vec(),
                });
            }
            Some((_, i, target)) => assign[i] = target,
        }
    }
    Err(PathError::NonConvergence(format!(
        "classification repair did not settle within {cap} rounds; a larger diagonal jitter may be needed"
    )))
}

/// Solve the dual to machine precision at one regularization vector.
pub fn solve_dual_reference(q: &QMatrix, y: &[f64], c: &[f64]) -> Result<OracleSolution> {
    validate_inputs(q, y, c)?;
    let (alpha, alpha0) = smo_max_violating_pair(q, y, c)?;
    snap_and_repair(q, y, c, &alpha, alpha0)
}

/// Brute-force ground truth: try every partition of the indices into
/// (O, M, I) in a fixed base-3 order and return the first whose snapped
/// solve satisfies all exact optimality conditions.
pub fn enumerate_partitions_exact(q: &QMatrix, y: &[f64], c: &[f64]) -> Result<OracleSolution> {
    let n = validate_inputs(q, y, c)?;
    if n > 12 {
        return Err(PathError::Precondition(format!(
            "partition enumeration is limited to 12 points, got {n}"
        )));
    }
    let cmax = c.iter().fold(0.0f64, |m, &v| m.max(v));
    let bound_slack = tol::KKT_SLACK * (1.0 + cmax);
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut assign = Vec::with_capacity(n);
        let mut rest = code;
        for _ in 0..n {
            assign.push(match rest % 3 {
                0 => SetKind::Outside,
                1 => SetKind::Margin,
                _ => SetKind::Inside,
            });
            rest /= 3;
        }
        let Ok((alpha, alpha0, yf)) = snapped_solve(&assign, q, y, c) else {
            continue;
        };
        // The pinned values must satisfy the equality constraint themselves
        // when the margin set is empty (the bordered solve enforces it
        // otherwise).
        let residual: f64 = alpha.iter().zip(y.iter()).map(|(a, yi)| a * yi).sum();
        let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
        if residual.abs() > tol::KKT_SLACK * (1.0 + l1) {
            continue;
        }
        let mut ok = true;
        for i in 0..n {
            let fine = match assign[i] {
                SetKind::Outside => yf[i] >= 1.0 - tol::KKT_SLACK,
                SetKind::Inside => yf[i] <= 1.0 + tol::KKT_SLACK,
                SetKind::Margin => {
                    alpha[i] >= -bound_slack && alpha[i] <= c[i] + bound_slack
                }
            };
            if !fine {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let partition = Partition::from_assignment(assign);
        return Ok(OracleSolution {
            objective: dual_objective(&alpha, q),
            alpha0,
            alpha,
            partition,
            c: c.to_vec(),
        });
    }
    Err(PathError::NonConvergence(
        "no partition satisfies the exact optimality conditions; the instance is numerically degenerate".into(),
    ))
}

/// Exact optimum and partition at theta = 0 for a path problem; the
/// returned pair is a valid starting point for the tracer.
pub fn initialize_path(problem: &PathProblem) -> Result<(PathState, Partition)> {
    let sol = solve_dual_reference(&problem.q, &problem.y, &problem.c0)?;
    let state = PathState::at_start(problem, sol.alpha, sol.alpha0)?;
    let report = check_exact(&state, &sol.partition);
    if !report.pass {
        return Err(PathError::NonConvergence(format!(
            "initialization failed the exact optimality check (worst output {:.3e}, worst multiplier {:.3e}); a larger diagonal jitter may be needed",
            report.worst_output, report.worst_multiplier
        )));
    }
    Ok((state, sol.partition))
}
