//! The path-following main loop.
//!
//! A trace starts from an optimal (or relaxed-optimal) state at theta = 0
//! and walks the piecewise-linear solution path of
//!
//! ```text
//!   max_alpha  -1/2 alpha' Q alpha + 1' alpha
//!   s.t.       y' alpha = 0,   0 <= alpha <= c(theta),
//! ```
//!
//! as `c(theta) = c0 + theta d` moves along a line. On each segment the
//! active partition is fixed and `(alpha0, alpha)` move linearly with the
//! rates from the margin-system solve; the four step-length families
//! determine where the segment ends; the degeneracy QP decides the next
//! partition without cycling.
//!
//! Per breakpoint the loop does O(n |M|) work (the inside-set products and
//! the bordered system are maintained incrementally) plus the partition QP
//! on at most `b_cap` variables.

use crate::dataset::QMatrix;
use crate::degeneracy::{
    cap_boundary_sets, collect_boundary_sets, solve_partition_qp, update_partition, BoundarySets,
    BoundarySide, QpSolution,
};
use crate::error::PathError;
use crate::linsys::{
    empty_margin_direction, solve_direction, solve_direction_cached, MarginSystem, StepDirection,
};
use crate::partition::{check_relaxed, Partition, SetKind, Tolerances};
use crate::tol;
use crate::Result;

/// A path-tracing problem: the fixed quadratic form, labels, and the line
/// `c(theta) = c0 + theta d` through regularization space.
#[derive(Debug, Clone)]
pub struct PathProblem {
    pub q: QMatrix,
    pub y: Vec<f64>,
    pub c0: Vec<f64>,
    pub d: Vec<f64>,
    pub theta_max: f64,
}

impl PathProblem {
    /// Validated constructor. `c(theta)` must stay componentwise positive
    /// on the whole interval; since it is linear, checking both endpoints
    /// suffices.
    pub fn new(q: QMatrix, y: Vec<f64>, c0: Vec<f64>, d: Vec<f64>, theta_max: f64) -> Result<Self> {
        let n = q.n();
        if y.len() != n || c0.len() != n || d.len() != n {
            return Err(PathError::DimensionMismatch(format!(
                "Q is {n}x{n} but |y| = {}, |c0| = {}, |d| = {}",
                y.len(),
                c0.len(),
                d.len()
            )));
        }
        if !(theta_max > 0.0 && theta_max.is_finite()) {
            return Err(PathError::InvalidData(format!(
                "theta_max must be positive and finite, got {theta_max}"
            )));
        }
        for i in 0..n {
            let end = c0[i] + theta_max * d[i];
            if !(c0[i] > 0.0 && end > 0.0) {
                return Err(PathError::InvalidData(format!(
                    "regularization bound {i} is not positive over the path: c0 = {}, c(theta_max) = {end}",
                    c0[i]
                )));
            }
        }
        Ok(PathProblem {
            q,
            y,
            c0,
            d,
            theta_max,
        })
    }

    /// Number of data points.
    pub fn n(&self) -> usize {
        self.q.n()
    }

    /// The regularization vector at a given theta.
    pub fn c_at(&self, theta: f64) -> Vec<f64> {
        self.c0
            .iter()
            .zip(self.d.iter())
            .map(|(c, d)| c + theta * d)
            .collect()
    }
}

/// The live state of a trace: position on the path plus the cached
/// quantities the loop maintains incrementally.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub theta: f64,
    pub alpha0: f64,
    pub alpha: Vec<f64>,
    /// `c0 + theta d`, cached.
    pub c: Vec<f64>,
    /// `y_i f_i = (Q alpha)_i + y_i alpha0`, maintained incrementally and
    /// periodically recomputed in full.
    pub yf: Vec<f64>,
    /// Labels, carried so optimality checks need no extra context.
    pub y: Vec<f64>,
}

impl PathState {
    /// State at theta = 0 for a given multiplier vector, with `yf` computed
    /// in full.
    pub fn at_start(problem: &PathProblem, alpha: Vec<f64>, alpha0: f64) -> Result<Self> {
        let n = problem.n();
        if alpha.len() != n {
            return Err(PathError::DimensionMismatch(format!(
                "alpha has length {} but the problem has {n} points",
                alpha.len()
            )));
        }
        let mut yf = problem.q.mul_vec(&alpha);
        for i in 0..n {
            yf[i] += problem.y[i] * alpha0;
        }
        Ok(PathState {
            theta: 0.0,
            alpha0,
            alpha,
            c: problem.c0.clone(),
            yf,
            y: problem.y.clone(),
        })
    }

    /// Largest regularization bound at the current theta (sets the
    /// multiplier tolerance scale).
    pub fn c_max(&self) -> f64 {
        self.c.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// Full O(n^2) recomputation of `yf` from `alpha`.
    pub fn recompute_yf(&self, q: &QMatrix) -> Vec<f64> {
        let mut yf = q.mul_vec(&self.alpha);
        for i in 0..yf.len() {
            yf[i] += self.y[i] * self.alpha0;
        }
        yf
    }
}

/// Move the state `delta` along the segment direction: every tracked
/// quantity is linear in theta.
pub fn advance(state: &mut PathState, dir: &StepDirection, delta: f64, d: &[f64]) {
    state.theta += delta;
    state.alpha0 += delta * dir.beta0;
    for i in 0..state.alpha.len() {
        state.alpha[i] += delta * dir.beta[i];
        state.c[i] += delta * d[i];
        state.yf[i] += delta * dir.g[i];
    }
}

/// Which step-length family produced a breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitingCategory {
    /// An outside-set output reached the lower margin band.
    ThetaO,
    /// A margin-set multiplier reached its lower bound.
    ThetaMLower,
    /// A margin-set multiplier reached its upper bound.
    ThetaMUpper,
    /// An inside-set output reached the upper margin band.
    ThetaI,
    /// No constraint: the path ran to theta_max.
    Terminal,
}

impl std::fmt::Display for LimitingCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LimitingCategory::ThetaO => "theta_O",
            LimitingCategory::ThetaMLower => "theta_M_lower",
            LimitingCategory::ThetaMUpper => "theta_M_upper",
            LimitingCategory::ThetaI => "theta_I",
            LimitingCategory::Terminal => "terminal",
        };
        f.write_str(s)
    }
}

/// One row of the breakpoint log.
#[derive(Debug, Clone)]
pub struct BreakpointRecord {
    /// Breakpoint ordinal (0-based; the terminal record is last).
    pub k: usize,
    pub theta: f64,
    /// Step length of the segment that ended here.
    pub delta_theta: f64,
    pub b_o_size: usize,
    pub b_i_size: usize,
    /// True when the processing cap dropped boundary indices.
    pub truncated: bool,
    /// Sizes (|O|, |M|, |I|) of the partition in force AFTER this
    /// breakpoint.
    pub o_size: usize,
    pub m_size: usize,
    pub i_size: usize,
    pub limiting: LimitingCategory,
}

/// The four candidate families, each a list of (owning index, clamped
/// candidate step length).
#[derive(Debug, Clone, Default)]
pub struct ThetaCandidates {
    pub outside: Vec<(usize, f64)>,
    pub margin_lower: Vec<(usize, f64)>,
    pub margin_upper: Vec<(usize, f64)>,
    pub inside: Vec<(usize, f64)>,
}

impl ThetaCandidates {
    /// The overall minimum candidate: smallest value, ties broken by the
    /// family order (outside, margin-lower, margin-upper, inside) and then
    /// by ascending index. `None` when every family is empty.
    pub fn min_candidate(&self) -> Option<(usize, f64, LimitingCategory)> {
        let families = [
            (&self.outside, LimitingCategory::ThetaO),
            (&self.margin_lower, LimitingCategory::ThetaMLower),
            (&self.margin_upper, LimitingCategory::ThetaMUpper),
            (&self.inside, LimitingCategory::ThetaI),
        ];
        let mut best: Option<(usize, f64, LimitingCategory)> = None;
        for (list, cat) in families {
            for &(i, v) in list.iter() {
                let better = match best {
                    None => true,
                    Some((bi, bv, _)) => v < bv || (v == bv && i < bi),
                };
                if better {
                    best = Some((i, v, cat));
                }
            }
        }
        best
    }

    /// Drop every candidate owned by an index flagged as riding its bound:
    /// the index grazed the bound earlier in the segment, the membership
    /// resolution changed nothing, and the rounding-level rate that fired
    /// the trigger would otherwise fire it again forever.
    pub fn drop_riding(&mut self, riding: &[bool]) {
        for list in [
            &mut self.outside,
            &mut self.margin_lower,
            &mut self.margin_upper,
            &mut self.inside,
        ] {
            list.retain(|&(i, _)| !riding[i]);
        }
    }

    /// Per-index minimum candidate, `fallback` where an index has none
    /// (used to rank boundary indices for the processing cap).
    pub fn per_index_min(&self, n: usize, fallback: f64) -> Vec<f64> {
        let mut out = vec![fallback; n];
        let mut seen = vec![false; n];
        for list in [
            &self.outside,
            &self.margin_lower,
            &self.margin_upper,
            &self.inside,
        ] {
            for &(i, v) in list.iter() {
                if !seen[i] || v < out[i] {
                    out[i] = v;
                    seen[i] = true;
                }
            }
        }
        out
    }
}

/// Build the four step-length families for the current segment.
///
/// Only indices whose tracked quantity is actually moving toward its bound
/// contribute; candidates are clamped below at zero (a state sitting
/// marginally past a bound yields an immediate breakpoint, not a negative
/// step).
pub fn theta_sets(
    state: &PathState,
    dir: &StepDirection,
    pi: &Partition,
    tolr: &Tolerances,
    d: &[f64],
) -> ThetaCandidates {
    let mut cands = ThetaCandidates::default();
    for i in 0..pi.n() {
        match pi.kind_of(i) {
            SetKind::Outside => {
                if dir.g[i] < 0.0 {
                    let v = (1.0 - tolr.eps1 - state.yf[i]) / dir.g[i];
                    cands.outside.push((i, v.max(0.0)));
                }
            }
            SetKind::Margin => {
                if dir.beta[i] < 0.0 {
                    let v = -(state.alpha[i] + tolr.eps2) / dir.beta[i];
                    cands.margin_lower.push((i, v.max(0.0)));
                }
                if dir.beta[i] > d[i] {
                    let v = (state.c[i] + tolr.eps2 - state.alpha[i]) / (dir.beta[i] - d[i]);
                    cands.margin_upper.push((i, v.max(0.0)));
                }
            }
            SetKind::Inside => {
                if dir.g[i] > 0.0 {
                    let v = (1.0 + tolr.eps1 - state.yf[i]) / dir.g[i];
                    cands.inside.push((i, v.max(0.0)));
                }
            }
        }
    }
    cands
}

/// Everything an observer may inspect at a breakpoint. References stay
/// valid only for the duration of the callback.
pub struct BreakpointContext<'a> {
    pub record: &'a BreakpointRecord,
    /// State at the breakpoint (after advancing).
    pub state: &'a PathState,
    /// Direction of the segment that just ended.
    pub direction: &'a StepDirection,
    pub partition_before: &'a Partition,
    pub partition_after: &'a Partition,
    /// Boundary sets; `None` at the terminal record.
    pub boundary: Option<&'a BoundarySets>,
    /// Partition QP solution; `None` at the terminal record.
    pub qp: Option<&'a QpSolution>,
    /// Tolerances in force on the segment that ended.
    pub tol: &'a Tolerances,
    /// Tolerances in force on the next segment.
    pub tol_next: &'a Tolerances,
}

/// Observer hooks called synchronously by [`trace`]. All methods default
/// to no-ops.
pub trait TraceObserver {
    /// Called once before the first segment, with the validated initial
    /// state and the first segment's direction and tolerances.
    fn on_start(
        &mut self,
        _state: &PathState,
        _partition: &Partition,
        _tol: &Tolerances,
        _direction: &StepDirection,
    ) {
    }

    /// Called at every breakpoint including the terminal one.
    fn on_breakpoint(&mut self, _ctx: &BreakpointContext<'_>) {}
}

/// Observer that ignores everything.
pub struct NullObserver;

impl TraceObserver for NullObserver {}

/// One fully-described path segment.
#[derive(Debug, Clone)]
pub struct SegmentLog {
    pub theta_start: f64,
    pub theta_end: f64,
    pub alpha_start: Vec<f64>,
    pub alpha0_start: f64,
    pub direction: StepDirection,
    pub partition: Partition,
    pub tol: Tolerances,
}

/// Everything recorded at one breakpoint.
#[derive(Debug, Clone)]
pub struct BreakpointLog {
    pub record: BreakpointRecord,
    pub state: PathState,
    pub partition_after: Partition,
    pub boundary: Option<BoundarySets>,
    pub qp: Option<QpSolution>,
    pub tol_next: Tolerances,
}

/// A complete recorded path, reconstructible at any theta.
#[derive(Debug, Clone)]
pub struct PathTrace {
    pub initial_state: PathState,
    pub initial_partition: Partition,
    pub segments: Vec<SegmentLog>,
    pub breakpoints: Vec<BreakpointLog>,
    pub final_state: PathState,
    pub final_partition: Partition,
    pub theta_max: f64,
}

impl PathTrace {
    /// Index of the first segment containing theta.
    pub fn segment_index(&self, theta: f64) -> Option<usize> {
        self.segments
            .iter()
            .position(|s| s.theta_start <= theta && theta <= s.theta_end)
    }

    /// The exact path point at theta: linear interpolation along the
    /// containing segment (exact on a piecewise-linear path).
    pub fn sample(&self, theta: f64) -> Option<(Vec<f64>, f64, &SegmentLog)> {
        let idx = self.segment_index(theta)?;
        let seg = &self.segments[idx];
        let dt = theta - seg.theta_start;
        let alpha = seg
            .alpha_start
            .iter()
            .zip(seg.direction.beta.iter())
            .map(|(a, b)| a + dt * b)
            .collect();
        let alpha0 = seg.alpha0_start + dt * seg.direction.beta0;
        Some((alpha, alpha0, seg))
    }
}

/// Observer that records the whole path.
pub struct CollectingObserver {
    initial: Option<(PathState, Partition)>,
    prev: Option<(PathState, Partition, Tolerances)>,
    segments: Vec<SegmentLog>,
    breakpoints: Vec<BreakpointLog>,
}

impl CollectingObserver {
    pub fn new() -> Self {
        CollectingObserver {
            initial: None,
            prev: None,
            segments: Vec::new(),
            breakpoints: Vec::new(),
        }
    }

    /// Consume the observer after a successful trace.
    pub fn into_trace(self, theta_max: f64) -> PathTrace {
        let (initial_state, initial_partition) =
            self.initial.expect("trace never started");
        let (final_state, final_partition, _) = self
            .prev
            .expect("trace recorded no breakpoints");
        PathTrace {
            initial_state,
            initial_partition,
            segments: self.segments,
            breakpoints: self.breakpoints,
            final_state,
            final_partition,
            theta_max,
        }
    }
}

impl Default for CollectingObserver {
    fn default() -> Self {
        Self::new()
    }
}

impl TraceObserver for CollectingObserver {
    fn on_start(
        &mut self,
        state: &PathState,
        partition: &Partition,
        tolr: &Tolerances,
        _direction: &StepDirection,
    ) {
        self.initial = Some((state.clone(), partition.clone()));
        self.prev = Some((state.clone(), partition.clone(), *tolr));
    }

    fn on_breakpoint(&mut self, ctx: &BreakpointContext<'_>) {
        let (prev_state, _, prev_tol) = self
            .prev
            .as_ref()
            .expect("on_breakpoint before on_start")
            .clone();
        self.segments.push(SegmentLog {
            theta_start: prev_state.theta,
            theta_end: ctx.record.theta,
            alpha_start: prev_state.alpha.clone(),
            alpha0_start: prev_state.alpha0,
            direction: ctx.direction.clone(),
            partition: ctx.partition_before.clone(),
            tol: prev_tol,
        });
        self.breakpoints.push(BreakpointLog {
            record: ctx.record.clone(),
            state: ctx.state.clone(),
            partition_after: ctx.partition_after.clone(),
            boundary: ctx.boundary.cloned(),
            qp: ctx.qp.cloned(),
            tol_next: *ctx.tol_next,
        });
        self.prev = Some((
            ctx.state.clone(),
            ctx.partition_after.clone(),
            *ctx.tol_next,
        ));
    }
}

/// Result of a completed trace.
#[derive(Debug, Clone)]
pub struct TraceOutcome {
    pub records: Vec<BreakpointRecord>,
    pub final_state: PathState,
    pub final_partition: Partition,
}

/// Incrementally maintained inside-set products: `w = Q_{:,I} d_I` and
/// `ydi = y_I' d_I`.
struct InsideProducts {
    w: Vec<f64>,
    ydi: f64,
}

impl InsideProducts {
    fn fresh(pi: &Partition, q: &QMatrix, y: &[f64], d: &[f64]) -> Self {
        let n = pi.n();
        let inside = pi.inside();
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for &j in &inside {
                acc += q.get(i, j) * d[j];
            }
            w[i] = acc;
        }
        let ydi = inside.iter().map(|&j| y[j] * d[j]).sum();
        InsideProducts { w, ydi }
    }

    /// Apply an inside-set membership diff in O(n * |diff|).
    fn apply_diff(&mut self, old: &Partition, new: &Partition, q: &QMatrix, y: &[f64], d: &[f64]) {
        let n = old.n();
        for j in 0..n {
            let was = old.kind_of(j) == SetKind::Inside;
            let is = new.kind_of(j) == SetKind::Inside;
            if was == is {
                continue;
            }
            let sign = if is { 1.0 } else { -1.0 };
            for i in 0..n {
                self.w[i] += sign * q.get(i, j) * d[j];
            }
            self.ydi += sign * y[j] * d[j];
        }
    }
}

/// Current segment direction from the maintained pieces.
fn segment_direction(
    sys: &Option<MarginSystem>,
    pi: &Partition,
    d: &[f64],
    prods: &InsideProducts,
    q: &QMatrix,
    y: &[f64],
    empty_beta0: f64,
) -> Result<StepDirection> {
    match sys {
        Some(s) => solve_direction_cached(s, pi, d, &prods.w, prods.ydi, q, y),
        None => Ok(empty_margin_direction(pi, d, empty_beta0, &prods.w, y)),
    }
}

/// Bring the margin system in line with a new partition, preferring the
/// incremental rank-one update path and falling back to a fresh build.
fn reconcile_margin_system(
    sys: &mut Option<MarginSystem>,
    pi_new: &Partition,
    q: &QMatrix,
    y: &[f64],
) -> Result<()> {
    let target = pi_new.margin();
    if target.is_empty() {
        *sys = None;
        return Ok(());
    }
    if let Some(s) = sys {
        let current: Vec<usize> = s.members().to_vec();
        let added: Vec<usize> = target
            .iter()
            .copied()
            .filter(|i| !current.contains(i))
            .collect();
        let removed: Vec<usize> = current
            .iter()
            .copied()
            .filter(|i| !target.contains(i))
            .collect();
        if added.is_empty() && removed.is_empty() {
            return Ok(());
        }
        if s.update_members(&added, &removed, q, y).is_ok() {
            return Ok(());
        }
        // Fall through to a fresh factorization; propagate only its error.
    }
    *sys = Some(MarginSystem::build_from_members(target, q, y)?);
    Ok(())
}

/// When a partition update empties the margin set, promote the
/// best-qualified boundary rider (stationary output, smallest step-length
/// candidate, then smallest index) into the margin set.
///
/// A rider has `beta` pinned and `g = 0`, so the bordered solve on the
/// singleton margin set reproduces the QP direction exactly; making the
/// membership explicit prevents zero-length flip-flops between alternating
/// riders whose outputs are only coincidentally stationary.
fn promote_margin_rider(
    pi_new: &mut Partition,
    b: &BoundarySets,
    qp: &QpSolution,
    candidates: &[f64],
) -> Option<usize> {
    let g_scale = b
        .positions()
        .iter()
        .fold(0.0f64, |m, &(i, _)| m.max(qp.g[i].abs()));
    let slack = tol::QP_CONSTRAINT_SLACK * (1.0 + g_scale);
    let mut best: Option<(f64, usize)> = None;
    for (i, _) in b.positions() {
        if qp.g[i].abs() <= slack {
            let key = (candidates[i], i);
            if best.map(|(v, j)| key < (v, j)).unwrap_or(true) {
                best = Some(key);
            }
        }
    }
    let (_, idx) = best?;
    pi_new.set_kind(idx, SetKind::Margin);
    Some(idx)
}

/// With every margin member frozen at a box face (no free margin rows left
/// for the partition QP), decide whether nonnegative boundary multipliers
/// can still hold the equality constraint `y' beta = 0` against the pinned
/// inside rates. Infeasibility here is structural, not numerical: no
/// direction over the collected boundary indices alone can continue the
/// path, and the bias has to be reseated first.
fn pinned_equality_feasible(pi: &Partition, b: &BoundarySets, y: &[f64], d: &[f64]) -> bool {
    let positions = b.positions();
    let mut in_b = vec![false; pi.n()];
    for &(i, _) in &positions {
        in_b[i] = true;
    }
    let mut rate = 0.0;
    let mut scale = 1.0;
    for i in pi.inside() {
        if !in_b[i] {
            rate += y[i] * d[i];
            scale += d[i].abs();
        }
    }
    for &(i, side) in &positions {
        if side == BoundarySide::TowardInside {
            rate += y[i] * d[i];
            scale += d[i].abs();
        }
    }
    // Boundary freedom: beta_i = t_i + s_i z_i with z_i >= 0, so the
    // equality reads sum_i s_i y_i z_i = -rate. Feasible over z >= 0 iff
    // the residual vanishes or some coefficient matches its sign.
    let r_eq = -rate;
    if r_eq.abs() <= 1e-10 * scale {
        return true;
    }
    positions.iter().any(|&(i, side)| {
        let s = match side {
            BoundarySide::TowardOutside => 1.0,
            BoundarySide::TowardInside => -1.0,
        };
        s * y[i] * r_eq > 0.0
    })
}

/// Reposition the bias within its optimal interval at a breakpoint where
/// the margin set empties and the pinned rates cannot hold the equality
/// constraint.
///
/// With every alpha component frozen at a box face, any bias keeping all
/// outputs inside their bands is optimal, so the iterate may jump (alpha
/// unchanged, hence still piecewise linear) to the interval endpoint where
/// some output reaches its band edge; that index seeds the margin set of
/// the next segment and restores the degree of freedom the equality
/// constraint needs. Both endpoints are tried in a fixed order; a
/// candidate is accepted when the repositioned state passes the relaxed
/// optimality check and the seeded direction does not immediately push the
/// new margin member out of its box face.
fn reseat_empty_margin(
    state: &PathState,
    pi: &Partition,
    tol_next: &Tolerances,
    q: &QMatrix,
    y: &[f64],
    d: &[f64],
) -> Result<(PathState, Partition)> {
    let n = pi.n();
    let eps1 = tol_next.eps1;
    // Box face of each frozen component: false = lower, true = upper.
    let upper: Vec<bool> = (0..n).map(|i| 2.0 * state.alpha[i] > state.c[i]).collect();
    // Bias interval induced by the output bands at frozen alpha: lower-face
    // components need yf >= 1 - eps1, upper-face components yf <= 1 + eps1.
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut lo_binder: Option<usize> = None;
    let mut hi_binder: Option<usize> = None;
    for i in 0..n {
        let qa = state.yf[i] - y[i] * state.alpha0;
        let rhs = if upper[i] { (1.0 + eps1) - qa } else { (1.0 - eps1) - qa };
        let value = rhs * y[i];
        let to_lo = upper[i] != (y[i] > 0.0);
        if to_lo {
            if value > lo {
                lo = value;
                lo_binder = Some(i);
            }
        } else if value < hi {
            hi = value;
            hi_binder = Some(i);
        }
    }

    let slide_floor = 1e-14 * (1.0 + state.alpha0.abs());
    let mut reasons: Vec<String> = Vec::new();
    for (endpoint, binder) in [(lo, lo_binder), (hi, hi_binder)] {
        let Some(bi) = binder else { continue };
        if !endpoint.is_finite() {
            continue;
        }
        let delta = endpoint - state.alpha0;
        if delta.abs() <= slide_floor {
            // Zero-length slide reproduces the configuration that just
            // failed; the other endpoint must carry the resolution.
            continue;
        }
        let mut cand_state = state.clone();
        cand_state.alpha0 = endpoint;
        for i in 0..n {
            cand_state.yf[i] += y[i] * delta;
        }
        let mut cand_pi = pi.clone();
        for m in pi.margin() {
            let kind = if upper[m] { SetKind::Inside } else { SetKind::Outside };
            cand_pi.set_kind(m, kind);
        }
        cand_pi.set_kind(bi, SetKind::Margin);
        let report = check_relaxed(&cand_state, &cand_pi, tol_next);
        if !report.pass {
            reasons.push(format!(
                "endpoint {endpoint:.6e} fails the optimality check (output {:.3e}, multiplier {:.3e})",
                report.worst_output, report.worst_multiplier
            ));
            continue;
        }
        let sys = MarginSystem::build_from_members(vec![bi], q, y)?;
        let dir = solve_direction(&sys, &cand_pi, d, q, y)?;
        let rate_slack = 1e-9 * (1.0 + d[bi].abs());
        let rate_ok = if upper[bi] {
            dir.beta[bi] <= d[bi] + rate_slack
        } else {
            dir.beta[bi] >= -rate_slack
        };
        if !rate_ok {
            reasons.push(format!(
                "endpoint {endpoint:.6e} seeds margin member {bi} whose rate {:.3e} exits its box face",
                dir.beta[bi]
            ));
            continue;
        }
        return Ok((cand_state, cand_pi));
    }
    Err(PathError::NonConvergence(format!(
        "no bias interval endpoint admits a new margin member (interval [{lo:.6e}, {hi:.6e}]{})",
        if reasons.is_empty() {
            String::new()
        } else {
            format!("; {}", reasons.join("; "))
        }
    )))
}

/// Trace the solution path from a relaxed-optimal initial state at
/// theta = 0 up to `problem.theta_max`.
///
/// `tolr` carries the suboptimality level: `eps1` is held constant along
/// the path while the multiplier tolerance is rescaled at every breakpoint
/// to `eps2 = eps1 * max_i c_i(theta_k)` (the caller supplies the initial
/// `eps2`, normally `eps1 * max_i c_i(0)`). Exact tracing is `(0, 0)`.
///
/// `b_cap` bounds how many boundary indices one breakpoint may process;
/// the rest are deferred to follow-up (possibly zero-length) steps.
///
/// Every emitted breakpoint re-validates the relaxed optimality conditions
/// for the updated partition; a failure aborts the trace rather than
/// emitting an invalid path.
pub fn trace(
    problem: &PathProblem,
    init_state: PathState,
    init_partition: Partition,
    tolr: Tolerances,
    b_cap: usize,
    observer: &mut dyn TraceObserver,
) -> Result<TraceOutcome> {
    let n = problem.n();
    let q = &problem.q;
    let y = &problem.y;
    let d = &problem.d;
    if init_partition.n() != n || init_state.alpha.len() != n {
        return Err(PathError::DimensionMismatch(format!(
            "initial state/partition sized for {} points but the problem has {n}",
            init_state.alpha.len()
        )));
    }
    if b_cap == 0 {
        return Err(PathError::InvalidData(
            "b_cap must be at least 1".into(),
        ));
    }

    let mut state = init_state;
    let mut pi = init_partition;
    let mut tol_seg = tolr;

    let report = check_relaxed(&state, &pi, &tol_seg);
    if !report.pass {
        return Err(PathError::Precondition(format!(
            "initial state violates the relaxed optimality conditions: worst output violation {:.3e}, worst multiplier violation {:.3e}, equality residual {:.3e}",
            report.worst_output, report.worst_multiplier, report.equality_residual
        )));
    }

    let mut prods = InsideProducts::fresh(&pi, q, y, d);
    let mut sys: Option<MarginSystem> = if pi.margin().is_empty() {
        None
    } else {
        Some(MarginSystem::build(&pi, q, y)?)
    };
    // Bias rate on empty-margin segments: neutral before the first
    // breakpoint, thereafter the partition QP's equality multiplier.
    let mut empty_beta0 = 0.0;
    let mut dir = segment_direction(&sys, &pi, d, &prods, q, y, empty_beta0)?;
    observer.on_start(&state, &pi, &tol_seg, &dir);

    let cap = tol::CYCLE_CAP_FACTOR * n;
    let mut records: Vec<BreakpointRecord> = Vec::new();
    // Indices whose bound trigger resolved to "no membership change" on the
    // current segment. A tracked quantity can sit exactly on its bound with
    // a rate that matches the pinned rate up to rounding; the stray sign of
    // that rounding fires a zero-length trigger that resolves to the same
    // configuration, forever. Such indices ride their bound until the next
    // real breakpoint changes the direction.
    let mut riding = vec![false; n];
    let mut iterations = 0usize;

    loop {
        iterations += 1;
        if records.len() > cap || iterations > 4 * cap + 8 {
            return Err(PathError::SuspectedCycling(records.len()));
        }
        let mut cands = theta_sets(&state, &dir, &pi, &tol_seg, d);
        cands.drop_riding(&riding);
        let minimum = cands.min_candidate();
        let remaining = problem.theta_max - state.theta;
        let (delta, limiting, terminal) = match minimum {
            Some((_, v, cat)) if v < remaining => (v, cat, false),
            _ => (remaining.max(0.0), LimitingCategory::Terminal, true),
        };
        let cand_map = cands.per_index_min(n, delta);

        advance(&mut state, &dir, delta, d);
        let k = records.len();
        if !terminal && (k + 1) % tol::YF_RECOMPUTE_INTERVAL == 0 {
            let fresh = state.recompute_yf(q);
            let scale = 1.0 + fresh.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let drift = state
                .yf
                .iter()
                .zip(fresh.iter())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if drift > tol::YF_DRIFT_REL * scale {
                return Err(PathError::Numerical {
                    k,
                    theta: state.theta,
                    message: format!(
                        "incremental yf drifted {drift:.3e} from full recomputation (budget {:.3e})",
                        tol::YF_DRIFT_REL * scale
                    ),
                });
            }
            state.yf = fresh;
        }

        if terminal {
            state.theta = problem.theta_max;
            let (o_size, m_size, i_size) = pi.sizes();
            let record = BreakpointRecord {
                k,
                theta: state.theta,
                delta_theta: delta,
                b_o_size: 0,
                b_i_size: 0,
                truncated: false,
                o_size,
                m_size,
                i_size,
                limiting,
            };
            let report = check_relaxed(&state, &pi, &tol_seg);
            if !report.pass {
                return Err(PathError::Numerical {
                    k,
                    theta: state.theta,
                    message: format!(
                        "relaxed optimality violated at theta_max: worst output {:.3e}, worst multiplier {:.3e}",
                        report.worst_output, report.worst_multiplier
                    ),
                });
            }
            observer.on_breakpoint(&BreakpointContext {
                record: &record,
                state: &state,
                direction: &dir,
                partition_before: &pi,
                partition_after: &pi,
                boundary: None,
                qp: None,
                tol: &tol_seg,
                tol_next: &tol_seg,
            });
            records.push(record);
            return Ok(TraceOutcome {
                records,
                final_state: state,
                final_partition: pi,
            });
        }

        // Breakpoint: resolve the degenerate membership changes.
        let mut b_full = collect_boundary_sets(&state, &dir, &pi, d);
        b_full.b_o.retain(|&i| !riding[i]);
        b_full.b_i.retain(|&i| !riding[i]);
        let b = cap_boundary_sets(b_full, &cand_map, b_cap);
        if b.is_empty() {
            return Err(PathError::Numerical {
                k,
                theta: state.theta,
                message: format!(
                    "step limited by {limiting} but no boundary index was collected"
                ),
            });
        }
        let tol_next = Tolerances::new(tol_seg.eps1, tol_seg.eps1 * state.c_max())?;
        let margin_half_empty = {
            let mut in_b = vec![false; n];
            for (i, _) in b.positions() {
                in_b[i] = true;
            }
            pi.margin().iter().all(|&m| in_b[m])
        };
        let mut qp_opt: Option<QpSolution> = None;
        let pi_new = if margin_half_empty && !pinned_equality_feasible(&pi, &b, y, d) {
            // Every margin member froze at a box face and the pinned rates
            // alone cannot keep y'alpha constant: the partition QP is
            // structurally infeasible. The bias jumps within its optimal
            // interval to recruit a fresh margin member, then the path
            // continues from the repositioned state.
            let (reseated, pi_r) =
                reseat_empty_margin(&state, &pi, &tol_next, q, y, d).map_err(|e| {
                    PathError::Numerical {
                        k,
                        theta: state.theta,
                        message: format!("empty-margin bias reseat failed: {e}"),
                    }
                })?;
            state = reseated;
            pi_r
        } else {
            let qp = solve_partition_qp(&pi, &b, q, y, d, Some(&dir)).map_err(|e| {
                PathError::Numerical {
                    k,
                    theta: state.theta,
                    message: format!("partition QP failed: {e}"),
                }
            })?;
            let mut pi_qp = update_partition(&pi, &b, &qp, d).map_err(|e| PathError::Numerical {
                k,
                theta: state.theta,
                message: format!("partition update failed: {e}"),
            })?;
            if pi_qp.margin().is_empty() {
                promote_margin_rider(&mut pi_qp, &b, &qp, &cand_map);
            }
            if pi_qp == pi {
                // Every collected index kept its membership, so the margin
                // set -- and with it the segment direction -- is unchanged.
                // The trigger was a rounding artifact of a quantity riding
                // its bound: ignore those indices for the rest of the
                // segment rather than emit an empty breakpoint.
                for (i, _) in b.positions() {
                    riding[i] = true;
                }
                continue;
            }
            empty_beta0 = qp.beta0;
            qp_opt = Some(qp);
            pi_qp
        };
        let report = check_relaxed(&state, &pi_new, &tol_next);
        if !report.pass {
            return Err(PathError::Numerical {
                k,
                theta: state.theta,
                message: format!(
                    "relaxed optimality violated after partition update: worst output {:.3e}, worst multiplier {:.3e}, equality residual {:.3e}",
                    report.worst_output, report.worst_multiplier, report.equality_residual
                ),
            });
        }

        let (o_size, m_size, i_size) = pi_new.sizes();
        let record = BreakpointRecord {
            k,
            theta: state.theta,
            delta_theta: delta,
            b_o_size: b.b_o.len(),
            b_i_size: b.b_i.len(),
            truncated: b.truncated,
            o_size,
            m_size,
            i_size,
            limiting,
        };
        observer.on_breakpoint(&BreakpointContext {
            record: &record,
            state: &state,
            direction: &dir,
            partition_before: &pi,
            partition_after: &pi_new,
            boundary: Some(&b),
            qp: qp_opt.as_ref(),
            tol: &tol_seg,
            tol_next: &tol_next,
        });
        records.push(record);

        // Maintain the cached pieces for the next segment.
        prods.apply_diff(&pi, &pi_new, q, y, d);
        reconcile_margin_system(&mut sys, &pi_new, q, y).map_err(|e| PathError::Numerical {
            k,
            theta: state.theta,
            message: format!("margin system update failed: {e}"),
        })?;
        pi = pi_new;
        tol_seg = tol_next;
        for r in riding.iter_mut() {
            *r = false;
        }
        dir = match qp_opt.as_ref() {
            // The QP solution doubles as the next segment direction: its
            // clamped rates satisfy the very sign conditions the membership
            // update enforced, so the indices just processed cannot
            // re-trigger on the rounding a fresh solve would reintroduce.
            Some(qp) => qp.as_direction(),
            None => {
                segment_direction(&sys, &pi, d, &prods, q, y, empty_beta0).map_err(|e| {
                    PathError::Numerical {
                        k,
                        theta: state.theta,
                        message: format!("direction solve failed: {e}"),
                    }
                })?
            }
        };
    }
}
