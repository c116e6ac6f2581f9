//! Breakpoint degeneracy resolution.
//!
//! At a breakpoint several indices may sit on the boundary between two
//! index sets at once. Picking their new memberships one at a time can
//! cycle; instead, the boundary indices enter an auxiliary convex QP whose
//! optimal objective is exactly zero and whose solution both certifies a
//! non-cycling partition update and doubles as the next segment's
//! direction.
//!
//! The QP is solved in reduced form: with a nonempty residual margin set
//! the pinned and margin variables are eliminated through the bordered
//! margin system (a Schur complement in the boundary variables remains);
//! with an empty residual margin set the bias rate stays a variable and
//! the equality constraint is kept explicitly.

use nalgebra::DMatrix;

use crate::dataset::QMatrix;
use crate::error::PathError;
use crate::linsys::{solve_direction, MarginSystem, StepDirection};
use crate::partition::{Partition, SetKind};
use crate::tol;
use crate::tracer::PathState;
use crate::Result;

/// Indices on set boundaries at a breakpoint, split by which side they
/// approach: `b_o` lean toward the outside set, `b_i` toward the inside
/// set. `dropped` holds indices cut by the processing cap; they keep their
/// old membership and re-trigger at the next breakpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySets {
    pub b_o: Vec<usize>,
    pub b_i: Vec<usize>,
    pub truncated: bool,
    pub dropped: Vec<usize>,
}

impl BoundarySets {
    /// Number of kept boundary indices.
    pub fn len(&self) -> usize {
        self.b_o.len() + self.b_i.len()
    }

    /// True when both kept sets are empty.
    pub fn is_empty(&self) -> bool {
        self.b_o.is_empty() && self.b_i.is_empty()
    }

    /// Kept indices with their side, ascending by index.
    pub fn positions(&self) -> Vec<(usize, BoundarySide)> {
        let mut v: Vec<(usize, BoundarySide)> = self
            .b_o
            .iter()
            .map(|&i| (i, BoundarySide::TowardOutside))
            .chain(self.b_i.iter().map(|&i| (i, BoundarySide::TowardInside)))
            .collect();
        v.sort_by_key(|&(i, _)| i);
        v
    }
}

/// Which bound a boundary index is sitting on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    /// Lower bound (`alpha = 0` side): candidate for the outside set.
    TowardOutside,
    /// Upper bound (`alpha = C` side): candidate for the inside set.
    TowardInside,
}

/// Solution of the partition QP. `beta` and `g` span all indices (pinned
/// components included), so the solution is simultaneously the direction
/// of the next segment.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub g: Vec<f64>,
    /// The QP objective at the solution; zero in exact arithmetic.
    pub objective: f64,
}

impl QpSolution {
    /// The solution reinterpreted as a segment direction.
    pub fn as_direction(&self) -> StepDirection {
        StepDirection {
            beta0: self.beta0,
            beta: self.beta.clone(),
            g: self.g.clone(),
        }
    }
}

/// Build the boundary sets at the current state (which must be at a
/// breakpoint) from the incoming segment direction.
///
/// State comparisons (`alpha <= 0`, `yf <= 1`, ...) carry the numeric
/// slack; the direction sign guards (`beta < 0`, `g > 0`, ...) are exact so
/// that every index that achieved the step length is collected.
pub fn collect_boundary_sets(
    state: &PathState,
    dir: &StepDirection,
    pi: &Partition,
    d: &[f64],
) -> BoundarySets {
    let slack = tol::KKT_SLACK;
    let mut b_o = Vec::new();
    let mut b_i = Vec::new();
    for i in 0..pi.n() {
        match pi.kind_of(i) {
            SetKind::Margin => {
                if state.alpha[i] <= slack && dir.beta[i] < 0.0 {
                    b_o.push(i);
                } else if state.alpha[i] >= state.c[i] - slack && dir.beta[i] > d[i] {
                    b_i.push(i);
                }
            }
            SetKind::Outside => {
                if state.yf[i] <= 1.0 + slack && dir.g[i] < 0.0 {
                    b_o.push(i);
                }
            }
            SetKind::Inside => {
                if state.yf[i] >= 1.0 - slack && dir.g[i] > 0.0 {
                    b_i.push(i);
                }
            }
        }
    }
    BoundarySets {
        b_o,
        b_i,
        truncated: false,
        dropped: Vec::new(),
    }
}

/// Keep at most `b_cap` boundary indices, smallest step-length candidate
/// first, ties broken by ascending index. `candidates[i]` is index `i`'s
/// own step-length candidate computed at the segment start; the caller
/// substitutes the achieved step length for indices that were already
/// parked on their bound (infinities sort last as a defensive fallback).
pub fn cap_boundary_sets(b: BoundarySets, candidates: &[f64], b_cap: usize) -> BoundarySets {
    if b.len() <= b_cap {
        return b;
    }
    let key = |i: usize| candidates[i];
    let mut ranked: Vec<(usize, BoundarySide)> = b.positions();
    ranked.sort_by(|&(i, _), &(j, _)| key(i).partial_cmp(&key(j)).unwrap().then(i.cmp(&j)));
    let (kept, cut) = ranked.split_at(b_cap);
    let mut b_o: Vec<usize> = kept
        .iter()
        .filter(|(_, s)| *s == BoundarySide::TowardOutside)
        .map(|&(i, _)| i)
        .collect();
    let mut b_i: Vec<usize> = kept
        .iter()
        .filter(|(_, s)| *s == BoundarySide::TowardInside)
        .map(|&(i, _)| i)
        .collect();
    b_o.sort_unstable();
    b_i.sort_unstable();
    let mut dropped: Vec<usize> = cut.iter().map(|&(i, _)| i).collect();
    dropped.sort_unstable();
    BoundarySets {
        b_o,
        b_i,
        truncated: true,
        dropped,
    }
}

/// The index sets of the half-step partition: the old sets minus the kept
/// boundary indices.
#[derive(Debug, Clone)]
struct HalfPartition {
    m: Vec<usize>,
    i: Vec<usize>,
}

impl HalfPartition {
    fn new(pi: &Partition, b: &BoundarySets) -> Self {
        let in_b = |idx: usize| b.b_o.contains(&idx) || b.b_i.contains(&idx);
        HalfPartition {
            m: pi.margin().into_iter().filter(|&i| !in_b(i)).collect(),
            i: pi.inside().into_iter().filter(|&i| !in_b(i)).collect(),
        }
    }
}

/// `w_i = sum_{j in inside} Q_ij d_j` for every `i`, plus `y_inside' d_inside`.
fn inside_products(inside: &[usize], q: &QMatrix, y: &[f64], d: &[f64], n: usize) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for &j in inside {
            acc += q.get(i, j) * d[j];
        }
        w[i] = acc;
    }
    let ydi = inside.iter().map(|&j| y[j] * d[j]).sum();
    (w, ydi)
}

/// Scale for objective and constraint budgets of a QP solution.
fn qp_scale(g_b: &[f64], beta_b: &[f64], t: &[f64]) -> f64 {
    let gmax = g_b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = beta_b
        .iter()
        .zip(t.iter())
        .fold(0.0f64, |m, (b, ti)| m.max((b - ti).abs().max(ti.abs())));
    (1.0 + gmax) * (1.0 + bmax)
}

/// Solve the partition QP for the boundary sets `b` at the breakpoint
/// where the old partition was `pi`. Returns the full-length solution
/// `(beta0, beta, g)` and its objective value.
///
/// `warm` (typically the incoming segment direction) seeds the inner
/// active-set solver; it never changes the solution, only the iteration
/// count.
pub fn solve_partition_qp(
    pi: &Partition,
    b: &BoundarySets,
    q: &QMatrix,
    y: &[f64],
    d: &[f64],
    warm: Option<&StepDirection>,
) -> Result<QpSolution> {
    let n = pi.n();
    let half = HalfPartition::new(pi, b);
    let positions = b.positions();
    let nb = positions.len();

    // Pins and signs per boundary position: toward-outside variables sit on
    // 0 and may only rise; toward-inside variables sit on d and may only
    // fall. The substitution beta_B = t + D z (z >= 0) makes both one-sided.
    let t: Vec<f64> = positions
        .iter()
        .map(|&(i, side)| match side {
            BoundarySide::TowardOutside => 0.0,
            BoundarySide::TowardInside => d[i],
        })
        .collect();
    let s: Vec<f64> = positions
        .iter()
        .map(|&(_, side)| match side {
            BoundarySide::TowardOutside => 1.0,
            BoundarySide::TowardInside => -1.0,
        })
        .collect();

    let (w_half, ydi_half) = inside_products(&half.i, q, y, d, n);

    if nb == 0 {
        // Fully pinned: the QP degenerates to the plain direction solve.
        let dir = if half.m.is_empty() {
            crate::linsys::empty_margin_direction(pi, d, 0.0, &w_half, y)
        } else {
            let sys = MarginSystem::build_from_members(half.m.clone(), q, y)?;
            solve_direction(&sys, pi, d, q, y)?
        };
        return Ok(QpSolution {
            beta0: dir.beta0,
            beta: dir.beta,
            g: dir.g,
            objective: 0.0,
        });
    }

    let warm_z: Vec<f64> = (0..nb)
        .map(|r| {
            let (idx, _) = positions[r];
            let incoming = warm.map(|dirn| dirn.beta[idx]).unwrap_or(t[r]);
            (s[r] * (incoming - t[r])).max(0.0)
        })
        .collect();

    if half.m.is_empty() {
        solve_qp_empty_margin(pi, &half, &positions, &t, &s, &w_half, ydi_half, q, y, d, warm_z)
    } else {
        solve_qp_with_margin(pi, &half, &positions, &t, &s, &w_half, ydi_half, q, y, d, warm_z)
    }
}

/// Reduced QP when the half-step margin set is nonempty: eliminate
/// `(beta0, beta_M)` through the bordered system, leaving a strictly convex
/// problem in the boundary variables only.
#[allow(clippy::too_many_arguments)]
fn solve_qp_with_margin(
    pi: &Partition,
    half: &HalfPartition,
    positions: &[(usize, BoundarySide)],
    t: &[f64],
    s: &[f64],
    w_half: &[f64],
    ydi_half: f64,
    q: &QMatrix,
    y: &[f64],
    d: &[f64],
    warm_z: Vec<f64>,
) -> Result<QpSolution> {
    let n = pi.n();
    let nb = positions.len();
    let m = half.m.len();
    let sys = MarginSystem::build_from_members(half.m.clone(), q, y)?;

    // Base solve: (beta0, beta_M) when every boundary variable sits on 0.
    let mut rhs = vec![0.0; m + 1];
    rhs[0] = -ydi_half;
    for (r, &i) in half.m.iter().enumerate() {
        rhs[r + 1] = -w_half[i];
    }
    let u = sys.solve(&rhs);

    // Sensitivity columns: how (beta0, beta_M) react to each boundary
    // variable.
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(nb);
    for &(bi, _) in positions {
        let mut col_rhs = vec![0.0; m + 1];
        col_rhs[0] = -y[bi];
        for (r, &i) in half.m.iter().enumerate() {
            col_rhs[r + 1] = -q.get(i, bi);
        }
        cols.push(sys.solve(&col_rhs));
    }

    // v_B: boundary outputs at the base solve; Q': the Schur complement of
    // the bordered system in the boundary block.
    let border_row = |bi: usize, vec: &[f64]| -> f64 {
        let mut acc = y[bi] * vec[0];
        for (r, &i) in half.m.iter().enumerate() {
            acc += q.get(bi, i) * vec[r + 1];
        }
        acc
    };
    let mut v_b = vec![0.0; nb];
    for (r, &(bi, _)) in positions.iter().enumerate() {
        v_b[r] = border_row(bi, &u) + w_half[bi];
    }
    let mut qprime = DMatrix::zeros(nb, nb);
    for r in 0..nb {
        let (br, _) = positions[r];
        for c in 0..nb {
            let (bc, _) = positions[c];
            qprime[(r, c)] = q.get(br, bc) + border_row(br, &cols[c]);
        }
    }
    // Symmetric in exact arithmetic; average away solve rounding.
    for r in 0..nb {
        for c in (r + 1)..nb {
            let v = 0.5 * (qprime[(r, c)] + qprime[(c, r)]);
            qprime[(r, c)] = v;
            qprime[(c, r)] = v;
        }
    }

    // z-coordinates: minimize 1/2 z' Mz z + qz' z over z >= 0.
    let mut mz = DMatrix::zeros(nb, nb);
    for r in 0..nb {
        for c in 0..nb {
            mz[(r, c)] = s[r] * qprime[(r, c)] * s[c];
        }
    }
    let mut qz = vec![0.0; nb];
    for r in 0..nb {
        let mut acc = v_b[r];
        for c in 0..nb {
            acc += qprime[(r, c)] * t[c];
        }
        qz[r] = s[r] * acc;
    }

    let z = nnls_active_set(&mz, &qz, warm_z)?;

    // Reconstruct the full solution.
    let beta_b: Vec<f64> = (0..nb).map(|r| t[r] + s[r] * z[r]).collect();
    let mut head = u.clone();
    for r in 0..nb {
        for (row, h) in head.iter_mut().enumerate() {
            *h += cols[r][row] * beta_b[r];
        }
    }
    let beta0 = head[0];
    let mut beta = vec![0.0; n];
    for (r, &i) in half.m.iter().enumerate() {
        beta[i] = head[r + 1];
    }
    for &i in &half.i {
        beta[i] = d[i];
    }
    for (r, &(bi, _)) in positions.iter().enumerate() {
        beta[bi] = beta_b[r];
    }
    let mut g = vec![0.0; n];
    for i in 0..n {
        let mut acc = w_half[i] + y[i] * beta0;
        for (r, &j) in half.m.iter().enumerate() {
            acc += q.get(i, j) * head[r + 1];
        }
        for (r, &(bj, _)) in positions.iter().enumerate() {
            acc += q.get(i, bj) * beta_b[r];
        }
        g[i] = acc;
    }
    finish_solution(positions, t, s, d, beta0, beta, g)
}

/// Reduced QP when the half-step margin set is empty: the bias rate stays a
/// variable and the equality constraint is explicit.
#[allow(clippy::too_many_arguments)]
fn solve_qp_empty_margin(
    pi: &Partition,
    half: &HalfPartition,
    positions: &[(usize, BoundarySide)],
    t: &[f64],
    s: &[f64],
    w_half: &[f64],
    ydi_half: f64,
    q: &QMatrix,
    y: &[f64],
    d: &[f64],
    warm_z: Vec<f64>,
) -> Result<QpSolution> {
    let n = pi.n();
    let nb = positions.len();

    let mut h = DMatrix::zeros(nb, nb);
    for r in 0..nb {
        let (br, _) = positions[r];
        for c in 0..nb {
            let (bc, _) = positions[c];
            h[(r, c)] = s[r] * q.get(br, bc) * s[c];
        }
    }
    let mut cz = vec![0.0; nb];
    for r in 0..nb {
        let (br, _) = positions[r];
        let mut acc = w_half[br];
        for c in 0..nb {
            let (bc, _) = positions[c];
            acc += q.get(br, bc) * t[c];
        }
        cz[r] = s[r] * acc;
    }
    let a: Vec<f64> = (0..nb)
        .map(|r| {
            let (br, _) = positions[r];
            s[r] * y[br]
        })
        .collect();
    let ybt: f64 = positions
        .iter()
        .zip(t.iter())
        .map(|(&(bi, _), &ti)| y[bi] * ti)
        .sum();
    let r_eq = -(ydi_half + ybt);

    let (z, lambda) = eq_nnls_active_set(&h, &cz, &a, r_eq, warm_z)?;
    let beta0 = -lambda;
    let beta_b: Vec<f64> = (0..nb).map(|r| t[r] + s[r] * z[r]).collect();
    let mut beta = vec![0.0; n];
    for &i in &half.i {
        beta[i] = d[i];
    }
    for (r, &(bi, _)) in positions.iter().enumerate() {
        beta[bi] = beta_b[r];
    }
    let mut g = vec![0.0; n];
    for i in 0..n {
        let mut acc = w_half[i] + y[i] * beta0;
        for (r, &(bj, _)) in positions.iter().enumerate() {
            acc += q.get(i, bj) * beta_b[r];
        }
        g[i] = acc;
    }
    finish_solution(positions, t, s, d, beta0, beta, g)
}

/// Assemble the `QpSolution`, evaluating the objective and validating the
/// boundary constraints and the known zero optimum.
fn finish_solution(
    positions: &[(usize, BoundarySide)],
    t: &[f64],
    s: &[f64],
    d: &[f64],
    beta0: f64,
    beta: Vec<f64>,
    g: Vec<f64>,
) -> Result<QpSolution> {
    let nb = positions.len();
    let g_b: Vec<f64> = positions.iter().map(|&(i, _)| g[i]).collect();
    let beta_b: Vec<f64> = positions.iter().map(|&(i, _)| beta[i]).collect();
    let objective: f64 = (0..nb).map(|r| g_b[r] * (beta_b[r] - t[r])).sum();
    let scale = qp_scale(&g_b, &beta_b, t);
    let budget = tol::QP_CONSTRAINT_SLACK * scale;
    for r in 0..nb {
        let (i, side) = positions[r];
        // Sign conditions on both factors (s flips the inside-set ones into
        // the nonnegative orthant).
        let zb = s[r] * (beta_b[r] - t[r]);
        let zg = s[r] * g_b[r];
        if zb < -budget || zg < -budget {
            return Err(PathError::NonConvergence(format!(
                "partition QP constraint violated at index {i} ({side:?}): beta {} g {} (budget {budget:.3e})",
                beta_b[r], g_b[r]
            )));
        }
        let _ = d;
    }
    if objective < -tol::QP_CONSTRAINT_SLACK * scale
        || objective > tol::DIRECTION_RESIDUAL * scale
    {
        return Err(PathError::NonConvergence(format!(
            "partition QP objective {objective:.3e} outside budget (scale {scale:.3e})"
        )));
    }
    Ok(QpSolution {
        beta0,
        beta,
        g,
        objective,
    })
}

/// Strictly convex nonnegative QP: minimize `1/2 z' M z + q' z` over
/// `z >= 0` by a primal active-set sweep (Lawson-Hanson style) from a
/// feasible warm start.
fn nnls_active_set(m: &DMatrix<f64>, qv: &[f64], mut z: Vec<f64>) -> Result<Vec<f64>> {
    let nb = qv.len();
    let cap = tol::QP_ITER_BASE + tol::QP_ITER_PER_VAR * nb;
    let mut free: Vec<bool> = z.iter().map(|&zi| zi > 0.0).collect();
    let scale = qv.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let w_tol = 1e-12 * scale;

    for _ in 0..cap {
        let f: Vec<usize> = (0..nb).filter(|&i| free[i]).collect();
        let zf = if f.is_empty() {
            Vec::new()
        } else {
            let mut mff = DMatrix::zeros(f.len(), f.len());
            let mut rhs = nalgebra::DVector::zeros(f.len());
            for (r, &i) in f.iter().enumerate() {
                rhs[r] = -qv[i];
                for (c, &j) in f.iter().enumerate() {
                    mff[(r, c)] = m[(i, j)];
                }
            }
            let sol = mff.lu().solve(&rhs).ok_or_else(|| {
                PathError::NonConvergence("singular principal block in partition QP".into())
            })?;
            sol.iter().copied().collect::<Vec<f64>>()
        };

        let negative = f.iter().enumerate().any(|(r, _)| zf[r] < 0.0);
        if !negative {
            for (r, &i) in f.iter().enumerate() {
                z[i] = zf[r];
                // A variable parked on its bound belongs to the bound set;
                // leaving it free would permit zero-length blocking steps
                // that stall the exchange at a degenerate vertex. Its
                // gradient is stationary here, so it is not re-freed at once.
                if z[i] <= 1e-14 * scale {
                    z[i] = 0.0;
                    free[i] = false;
                }
            }
            // Optimality: the bound-set gradient must be nonnegative.
            let mut worst = (f64::INFINITY, usize::MAX);
            for i in 0..nb {
                if free[i] {
                    continue;
                }
                let mut w = qv[i];
                for j in 0..nb {
                    w += m[(i, j)] * z[j];
                }
                if w < worst.0 {
                    worst = (w, i);
                }
            }
            if worst.0 >= -w_tol {
                return Ok(z);
            }
            free[worst.1] = true;
            continue;
        }

        // Partial step toward the subproblem solution; block at the first
        // variable that hits zero.
        let mut step = 1.0f64;
        for (r, &i) in f.iter().enumerate() {
            if zf[r] < 0.0 {
                let ratio = z[i] / (z[i] - zf[r]);
                step = step.min(ratio);
            }
        }
        for (r, &i) in f.iter().enumerate() {
            z[i] += step * (zf[r] - z[i]);
        }
        for (r, &i) in f.iter().enumerate() {
            if zf[r] < 0.0 && z[i] <= 1e-14 * scale {
                z[i] = 0.0;
                free[i] = false;
            }
        }
    }
    Err(PathError::NonConvergence(format!(
        "partition QP active set did not settle within {cap} iterations; last iterate {z:?}"
    )))
}

/// Strictly convex nonnegative QP with one equality constraint:
/// minimize `1/2 z' H z + c' z` over `z >= 0`, `a' z = r` (entries of `a`
/// are +-1). Returns the solution and the equality multiplier.
fn eq_nnls_active_set(
    h: &DMatrix<f64>,
    cv: &[f64],
    a: &[f64],
    r_eq: f64,
    mut z: Vec<f64>,
) -> Result<(Vec<f64>, f64)> {
    let nb = cv.len();
    let cap = tol::QP_ITER_BASE + tol::QP_ITER_PER_VAR * nb;
    let scale = cv
        .iter()
        .fold(r_eq.abs(), |acc, v| acc.max(v.abs()))
        .max(1.0);
    let w_tol = 1e-12 * scale;
    let feas_tol = 1e-12 * scale;

    // Make the warm start feasible for the equality constraint: put the
    // residual on the lowest-index coordinate that can absorb it while
    // staying nonnegative.
    let mut resid = r_eq - a.iter().zip(z.iter()).map(|(ai, zi)| ai * zi).sum::<f64>();
    if resid.abs() > feas_tol {
        let mut absorbed = false;
        for i in 0..nb {
            if a[i] * resid > 0.0 {
                z[i] += resid / a[i];
                absorbed = true;
                break;
            }
        }
        if !absorbed {
            for i in 0..nb {
                if a[i] * resid < 0.0 && z[i] >= -resid / a[i] {
                    z[i] += resid / a[i];
                    absorbed = true;
                    break;
                }
            }
        }
        if !absorbed {
            return Err(PathError::NonConvergence(
                "partition QP equality constraint infeasible from the warm start".into(),
            ));
        }
        resid = r_eq - a.iter().zip(z.iter()).map(|(ai, zi)| ai * zi).sum::<f64>();
        if resid.abs() > 1e-9 * scale {
            return Err(PathError::NonConvergence(format!(
                "partition QP equality residual {resid:.3e} after warm-start repair"
            )));
        }
    }

    let mut free: Vec<bool> = z.iter().map(|&zi| zi > 0.0).collect();
    for _ in 0..cap {
        let f: Vec<usize> = (0..nb).filter(|&i| free[i]).collect();
        if f.is_empty() {
            // z = 0: feasible only when r is zero; lambda comes from the
            // interval of multipliers keeping every bound gradient
            // nonnegative.
            if r_eq.abs() > 1e-9 * scale {
                return Err(PathError::NonConvergence(
                    "partition QP equality constraint cannot hold with all variables bound".into(),
                ));
            }
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..nb {
                let w0 = cv[i] + (0..nb).map(|j| h[(i, j)] * z[j]).sum::<f64>();
                // w_i = w0 - lambda a_i >= 0
                if a[i] > 0.0 {
                    hi = hi.min(w0);
                } else {
                    lo = lo.max(-w0);
                }
            }
            if lo <= hi + w_tol {
                let lambda = pick_lambda(lo, hi);
                return Ok((z, lambda));
            }
            // No multiplier fits, so z = 0 is not optimal. A single freed
            // coordinate stays pinned at zero by the equality row, so
            // escaping the origin needs a coordinated pair; lo > hi
            // certifies a descent pair with opposite constraint signs. Free
            // the worst violator on each side (the multiplier shift is
            // constant within a sign class, so the per-class argmin does not
            // depend on lambda).
            let mut worst_pos = (f64::INFINITY, usize::MAX);
            let mut worst_neg = (f64::INFINITY, usize::MAX);
            for i in 0..nb {
                let w0 = cv[i] + (0..nb).map(|j| h[(i, j)] * z[j]).sum::<f64>();
                let slot = if a[i] > 0.0 {
                    &mut worst_pos
                } else {
                    &mut worst_neg
                };
                if w0 < slot.0 {
                    *slot = (w0, i);
                }
            }
            if worst_pos.1 != usize::MAX {
                free[worst_pos.1] = true;
            }
            if worst_neg.1 != usize::MAX {
                free[worst_neg.1] = true;
            }
            continue;
        }

        // Solve the equality-constrained subproblem on the free set:
        //   [ H_FF  -a_F ] [ z_F    ]   [ -c_F ]
        //   [ a_F'   0   ] [ lambda ] = [  r   ]
        let k = f.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = nalgebra::DVector::zeros(k + 1);
        for (rr, &i) in f.iter().enumerate() {
            rhs[rr] = -cv[i];
            for (cc, &j) in f.iter().enumerate() {
                kkt[(rr, cc)] = h[(i, j)];
            }
            kkt[(rr, k)] = -a[i];
            kkt[(k, rr)] = a[i];
        }
        rhs[k] = r_eq;
        let sol = kkt.lu().solve(&rhs).ok_or_else(|| {
            PathError::NonConvergence("singular equality block in partition QP".into())
        })?;
        let zf: Vec<f64> = (0..k).map(|r| sol[r]).collect();
        let lambda = sol[k];

        let negative = zf.iter().any(|&v| v < 0.0);
        if !negative {
            for (r, &i) in f.iter().enumerate() {
                z[i] = zf[r];
                // Keep the free set strictly interior (see the inequality
                // solver above): a variable accepted on its bound is bound.
                if z[i] <= 1e-14 * scale {
                    z[i] = 0.0;
                    free[i] = false;
                }
            }
            let mut worst = (f64::INFINITY, usize::MAX);
            for i in 0..nb {
                if free[i] {
                    continue;
                }
                let mut w = cv[i] - lambda * a[i];
                for j in 0..nb {
                    w += h[(i, j)] * z[j];
                }
                if w < worst.0 {
                    worst = (w, i);
                }
            }
            if worst.0 >= -w_tol {
                return Ok((z, lambda));
            }
            free[worst.1] = true;
            continue;
        }

        let mut step = 1.0f64;
        for (r, &i) in f.iter().enumerate() {
            if zf[r] < 0.0 {
                step = step.min(z[i] / (z[i] - zf[r]));
            }
        }
        for (r, &i) in f.iter().enumerate() {
            z[i] += step * (zf[r] - z[i]);
        }
        for (r, &i) in f.iter().enumerate() {
            if zf[r] < 0.0 && z[i] <= 1e-14 * scale {
                z[i] = 0.0;
                free[i] = false;
            }
        }
    }
    Err(PathError::NonConvergence(format!(
        "partition QP (equality form) did not settle within {cap} iterations; last iterate {z:?}"
    )))
}

/// Deterministic choice from a multiplier interval: the midpoint when both
/// ends are finite, the finite end of a half-line, zero when unconstrained.
fn pick_lambda(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

/// Apply the partition update rule to the QP solution: each kept boundary
/// index joins the margin set when its variable moved strictly off its pin
/// (with stationary output), and otherwise falls back toward the bound it
/// was sitting on. Dropped indices keep their old membership.
pub fn update_partition(
    pi: &Partition,
    b: &BoundarySets,
    sol: &QpSolution,
    d: &[f64],
) -> Result<Partition> {
    let positions = b.positions();
    let g_b_max = positions
        .iter()
        .fold(0.0f64, |m, &(i, _)| m.max(sol.g[i].abs()));
    let sg = tol::QP_CONSTRAINT_SLACK * (1.0 + g_b_max);
    let mut out = pi.clone();
    for (i, side) in positions {
        let beta = sol.beta[i];
        let g = sol.g[i];
        match side {
            BoundarySide::TowardOutside => {
                let sb = tol::QP_CONSTRAINT_SLACK;
                if beta < -sb {
                    return Err(PathError::Numerical {
                        k: 0,
                        theta: f64::NAN,
                        message: format!(
                            "boundary index {i}: infeasible beta {beta:.3e} below its pin"
                        ),
                    });
                }
                if beta <= sb && g >= -sg {
                    out.set_kind(i, SetKind::Outside);
                } else if beta > sb && g.abs() <= sg {
                    out.set_kind(i, SetKind::Margin);
                } else {
                    return Err(PathError::Numerical {
                        k: 0,
                        theta: f64::NAN,
                        message: format!(
                            "boundary index {i}: no update clause applies (beta {beta:.3e}, g {g:.3e})"
                        ),
                    });
                }
            }
            BoundarySide::TowardInside => {
                let sb = tol::QP_CONSTRAINT_SLACK * (1.0 + d[i].abs());
                if beta > d[i] + sb {
                    return Err(PathError::Numerical {
                        k: 0,
                        theta: f64::NAN,
                        message: format!(
                            "boundary index {i}: infeasible beta {beta:.3e} above its pin {}",
                            d[i]
                        ),
                    });
                }
                if beta >= d[i] - sb && g <= sg {
                    out.set_kind(i, SetKind::Inside);
                } else if beta < d[i] - sb && g.abs() <= sg {
                    out.set_kind(i, SetKind::Margin);
                } else {
                    return Err(PathError::Numerical {
                        k: 0,
                        theta: f64::NAN,
                        message: format!(
                            "boundary index {i}: no update clause applies (beta {beta:.3e}, g {g:.3e})"
                        ),
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::solve_direction;
    use crate::tracer::PathState;
    use nalgebra::DMatrix;

    fn qmat(entries: &[f64], n: usize) -> QMatrix {
        QMatrix::from_matrix(DMatrix::from_row_slice(n, n, entries), 0.0).unwrap()
    }

    fn state_of(alpha: Vec<f64>, yf: Vec<f64>, c: Vec<f64>, y: Vec<f64>) -> PathState {
        PathState {
            theta: 0.5,
            alpha0: 0.0,
            alpha,
            c,
            yf,
            y,
        }
    }

    fn dir_of(beta: Vec<f64>, g: Vec<f64>) -> StepDirection {
        StepDirection {
            beta0: 0.0,
            beta,
            g,
        }
    }

    #[test]
    fn collect_empty_at_smooth_terminal() {
        let pi = Partition::from_sets(3, &[0], &[1], &[2]).unwrap();
        let st = state_of(
            vec![0.0, 0.4, 1.0],
            vec![1.4, 1.0, 0.6],
            vec![1.0, 1.0, 1.0],
            vec![1.0, -1.0, 1.0],
        );
        let dir = dir_of(vec![0.0, 0.1, 1.0], vec![0.2, 0.0, -0.3]);
        let b = collect_boundary_sets(&st, &dir, &pi, &[1.0, 1.0, 1.0]);
        assert!(b.is_empty());
        assert!(!b.truncated);
    }

    #[test]
    fn collect_margin_index_at_lower_bound() {
        let pi = Partition::from_sets(2, &[], &[0], &[1]).unwrap();
        let st = state_of(
            vec![0.0, 1.0],
            vec![1.0, 0.9],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
        );
        let dir = dir_of(vec![-0.3, 1.0], vec![0.0, 0.1]);
        let b = collect_boundary_sets(&st, &dir, &pi, &[1.0, 1.0]);
        assert_eq!(b.b_o, vec![0]);
        assert!(b.b_i.is_empty());
    }

    #[test]
    fn collect_inside_index_touching_margin() {
        let pi = Partition::from_sets(2, &[0], &[], &[1]).unwrap();
        let st = state_of(
            vec![0.0, 1.0],
            vec![1.4, 1.0],
            vec![1.0, 1.0],
            vec![1.0, -1.0],
        );
        let dir = dir_of(vec![0.0, 1.0], vec![0.1, 0.2]);
        let b = collect_boundary_sets(&st, &dir, &pi, &[1.0, 1.0]);
        assert_eq!(b.b_i, vec![1]);
        assert!(b.b_o.is_empty());
    }

    #[test]
    fn cap_under_limit_is_identity() {
        let b = BoundarySets {
            b_o: vec![0, 2],
            b_i: vec![5],
            truncated: false,
            dropped: vec![],
        };
        let cands = vec![0.1; 6];
        let capped = cap_boundary_sets(b.clone(), &cands, 3);
        assert_eq!(capped, b);
    }

    #[test]
    fn cap_one_keeps_smallest_candidate() {
        let b = BoundarySets {
            b_o: vec![0, 2],
            b_i: vec![1],
            truncated: false,
            dropped: vec![],
        };
        let mut cands = vec![f64::INFINITY; 3];
        cands[0] = 0.5;
        cands[1] = 0.2;
        cands[2] = 0.9;
        let capped = cap_boundary_sets(b, &cands, 1);
        assert!(capped.b_o.is_empty());
        assert_eq!(capped.b_i, vec![1]);
        assert_eq!(capped.dropped, vec![0, 2]);
        assert!(capped.truncated);
    }

    #[test]
    fn cap_ties_break_by_ascending_index() {
        let b = BoundarySets {
            b_o: vec![3, 1],
            b_i: vec![2],
            truncated: false,
            dropped: vec![],
        };
        let cands = vec![0.4; 4];
        let capped = cap_boundary_sets(b, &cands, 2);
        assert_eq!(capped.b_o, vec![1]);
        assert_eq!(capped.b_i, vec![2]);
        assert_eq!(capped.dropped, vec![3]);
    }

    #[test]
    fn empty_boundary_qp_equals_direction_solve() {
        let q = qmat(
            &[
                1.5, 0.3, 0.1, 0.3, 1.2, -0.2, 0.1, -0.2, 1.8,
            ],
            3,
        );
        let y = vec![1.0, -1.0, 1.0];
        let pi = Partition::from_sets(3, &[0], &[1], &[2]).unwrap();
        let d = vec![1.0, 1.0, 1.0];
        let b = BoundarySets {
            b_o: vec![],
            b_i: vec![],
            truncated: false,
            dropped: vec![],
        };
        let sol = solve_partition_qp(&pi, &b, &q, &y, &d, None).unwrap();
        let sys = MarginSystem::build(&pi, &q, &y).unwrap();
        let dir = solve_direction(&sys, &pi, &d, &q, &y).unwrap();
        assert!((sol.beta0 - dir.beta0).abs() < 1e-12);
        for i in 0..3 {
            assert!((sol.beta[i] - dir.beta[i]).abs() < 1e-12);
            assert!((sol.g[i] - dir.g[i]).abs() < 1e-12);
        }
        assert_eq!(sol.objective, 0.0);
    }

    /// Exhaustive cross-check of the single-boundary-index case: the QP must
    /// agree with whichever of the two candidate partitions admits a
    /// consistent direction solve.
    #[test]
    fn single_index_qp_matches_two_case_enumeration() {
        // Margin point 1 sits at its lower bound and is moving down; either
        // it leaves to the outside set (pinned, with nonnegative output
        // rate) or it stays on the margin (free, with zero output rate).
        let q = qmat(
            &[
                1.6, 0.4, 0.2, 0.4, 1.3, -0.1, 0.2, -0.1, 1.9,
            ],
            3,
        );
        let y = vec![1.0, -1.0, 1.0];
        let pi = Partition::from_sets(3, &[], &[0, 1], &[2]).unwrap();
        let d = vec![1.0, 1.0, 1.0];
        let b = BoundarySets {
            b_o: vec![1],
            b_i: vec![],
            truncated: false,
            dropped: vec![],
        };
        let sol = solve_partition_qp(&pi, &b, &q, &y, &d, None).unwrap();

        // Case A: index 1 leaves to O; direction solved on M = {0}.
        let pi_a = Partition::from_sets(3, &[1], &[0], &[2]).unwrap();
        let sys_a = MarginSystem::build(&pi_a, &q, &y).unwrap();
        let dir_a = solve_direction(&sys_a, &pi_a, &d, &q, &y).unwrap();
        // Case B: index 1 stays in M; direction solved on M = {0, 1}.
        let sys_b = MarginSystem::build(&pi, &q, &y).unwrap();
        let dir_b = solve_direction(&sys_b, &pi, &d, &q, &y).unwrap();

        let a_valid = dir_a.g[1] >= -1e-9;
        let b_valid = dir_b.beta[1] >= -1e-9;
        assert!(a_valid != b_valid, "exactly one case should be consistent");
        let expect = if a_valid { &dir_a } else { &dir_b };
        assert!((sol.beta0 - expect.beta0).abs() < 1e-8);
        for i in 0..3 {
            assert!(
                (sol.beta[i] - expect.beta[i]).abs() < 1e-8,
                "beta[{i}]: {} vs {}",
                sol.beta[i],
                expect.beta[i]
            );
        }
        assert!(sol.objective.abs() < 1e-8);
    }

    #[test]
    fn update_sends_released_variable_to_margin() {
        let pi = Partition::from_sets(3, &[], &[0, 1], &[2]).unwrap();
        let b = BoundarySets {
            b_o: vec![1],
            b_i: vec![],
            truncated: false,
            dropped: vec![],
        };
        let sol = QpSolution {
            beta0: 0.0,
            beta: vec![0.1, 0.4, 1.0],
            g: vec![0.0, 0.0, -0.2],
            objective: 0.0,
        };
        let d = vec![1.0, 1.0, 1.0];
        let out = update_partition(&pi, &b, &sol, &d).unwrap();
        assert_eq!(out.kind_of(1), SetKind::Margin);
    }

    #[test]
    fn update_doubly_degenerate_falls_back_to_outside() {
        let pi = Partition::from_sets(2, &[], &[0], &[1]).unwrap();
        let b = BoundarySets {
            b_o: vec![0],
            b_i: vec![],
            truncated: false,
            dropped: vec![],
        };
        let sol = QpSolution {
            beta0: 0.0,
            beta: vec![0.0, 1.0],
            g: vec![0.0, 0.3],
            objective: 0.0,
        };
        let out = update_partition(&pi, &b, &sol, &[1.0, 1.0]).unwrap();
        assert_eq!(out.kind_of(0), SetKind::Outside);
    }

    #[test]
    fn update_sends_bound_rider_inside() {
        let pi = Partition::from_sets(2, &[0], &[], &[1]).unwrap();
        let b = BoundarySets {
            b_o: vec![],
            b_i: vec![1],
            truncated: false,
            dropped: vec![],
        };
        let d = vec![1.0, 2.5];
        let sol = QpSolution {
            beta0: 0.0,
            beta: vec![0.0, 2.5],
            g: vec![0.4, -0.1],
            objective: 0.0,
        };
        let out = update_partition(&pi, &b, &sol, &d).unwrap();
        assert_eq!(out.kind_of(1), SetKind::Inside);
    }

    #[test]
    fn update_rejects_ambiguous_solution() {
        let pi = Partition::from_sets(2, &[], &[0], &[1]).unwrap();
        let b = BoundarySets {
            b_o: vec![0],
            b_i: vec![],
            truncated: false,
            dropped: vec![],
        };
        let sol = QpSolution {
            beta0: 0.0,
            beta: vec![0.5, 1.0],
            g: vec![0.7, 0.0],
            objective: 0.35,
        };
        assert!(update_partition(&pi, &b, &sol, &[1.0, 1.0]).is_err());
    }
}
