//! An independently coded one-index-at-a-time exact path tracer — the
//! oracle for the cap-one reduction — plus finite-difference linearity
//! checks on traced segments.
//!
//! Nothing here shares code with the production tracer: every segment
//! direction comes from a fresh dense bordered solve, outputs are fully
//! recomputed each iteration, and the breakpoint resolution moves exactly
//! one index per event using local sign tests.

use nalgebra::{DMatrix, DVector};
use svmpath::dataset::QMatrix;
use svmpath::partition::{Partition, SetKind};
use svmpath::tracer::PathTrace;
use svmpath::{PathError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Outside,
    Margin,
    Inside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    /// An outside output fell to the margin.
    OutputFromAbove,
    /// An inside output rose to the margin.
    OutputFromBelow,
    /// A margin coefficient hit its lower box face.
    LowerFace,
    /// A margin coefficient hit its upper box face.
    UpperFace,
}

/// Result of a conventional exact trace.
#[derive(Debug, Clone)]
pub struct ConventionalOutcome {
    /// Interior breakpoint parameter values in order (terminal excluded).
    pub thetas: Vec<f64>,
    pub final_alpha: Vec<f64>,
    pub final_alpha0: f64,
}

/// Trace the exact path one index exchange at a time from an optimal
/// initial state, recording every breakpoint parameter value.
pub fn trace_conventional_exact(
    q: &QMatrix,
    y: &[f64],
    c0: &[f64],
    d: &[f64],
    theta_max: f64,
    init_alpha: &[f64],
    init_alpha0: f64,
    init_pi: &Partition,
) -> Result<ConventionalOutcome> {
    let n = q.n();
    if y.len() != n || c0.len() != n || d.len() != n || init_alpha.len() != n {
        return Err(PathError::DimensionMismatch(
            "conventional tracer inputs must share one dimension".into(),
        ));
    }
    let mut kind: Vec<Kind> = (0..n)
        .map(|i| match init_pi.kind_of(i) {
            SetKind::Outside => Kind::Outside,
            SetKind::Margin => Kind::Margin,
            SetKind::Inside => Kind::Inside,
        })
        .collect();
    let mut alpha = init_alpha.to_vec();
    let mut alpha0 = init_alpha0;
    let mut theta = 0.0;
    let mut thetas = Vec::new();
    // Indices riding a box face: their rate matches the face rate up to
    // rounding, so the face trigger can re-fire at zero length without
    // anything changing. Ignored until the next real exchange.
    let mut riding = vec![false; n];
    let cap = 200 * n + 50;

    for _ in 0..cap {
        let (beta0, beta) = direction(q, y, d, &kind)?;
        let yf = outputs(q, y, &alpha, alpha0);
        let g: Vec<f64> = {
            let qb = mul(q, &beta);
            (0..n).map(|i| qb[i] + y[i] * beta0).collect()
        };

        // Step-length candidates, exact bands.
        let mut best: Option<(f64, usize, Event)> = None;
        let mut offer = |v: f64, i: usize, e: Event| {
            let v = v.max(0.0);
            if !v.is_finite() {
                return;
            }
            if best.map(|(bv, bi, _)| (v, i) < (bv, bi)).unwrap_or(true) {
                best = Some((v, i, e));
            }
        };
        for i in 0..n {
            if riding[i] {
                continue;
            }
            let ci = c0[i] + theta * d[i];
            match kind[i] {
                Kind::Outside => {
                    if g[i] < 0.0 {
                        offer((1.0 - yf[i]) / g[i], i, Event::OutputFromAbove);
                    }
                }
                Kind::Inside => {
                    if g[i] > 0.0 {
                        offer((1.0 - yf[i]) / g[i], i, Event::OutputFromBelow);
                    }
                }
                Kind::Margin => {
                    if beta[i] < 0.0 {
                        offer(-alpha[i] / beta[i], i, Event::LowerFace);
                    }
                    if beta[i] > d[i] {
                        offer((ci - alpha[i]) / (beta[i] - d[i]), i, Event::UpperFace);
                    }
                }
            }
        }

        let remaining = theta_max - theta;
        let Some((step, mover, event)) = best.filter(|&(v, _, _)| v < remaining) else {
            // Terminal: ride the current segment to the end of the interval.
            let step = remaining.max(0.0);
            for i in 0..n {
                alpha[i] += step * beta[i];
            }
            alpha0 += step * beta0;
            return Ok(ConventionalOutcome {
                thetas,
                final_alpha: alpha,
                final_alpha0: alpha0,
            });
        };

        for i in 0..n {
            alpha[i] += step * beta[i];
        }
        alpha0 += step * beta0;
        theta += step;

        // Resolve the single exchange. A resolution that changes nothing is
        // not an exchange: it is a face trigger fired by solve rounding, and
        // recording it would emit the same empty breakpoint forever.
        let mut exchanged = true;
        match event {
            Event::OutputFromAbove | Event::OutputFromBelow => {
                kind[mover] = Kind::Margin;
            }
            Event::LowerFace | Event::UpperFace => {
                let margin_size = kind.iter().filter(|&&k| k == Kind::Margin).count();
                if margin_size >= 2 {
                    kind[mover] = if event == Event::LowerFace {
                        Kind::Outside
                    } else {
                        Kind::Inside
                    };
                } else {
                    // The mover is the only margin member. Frozen at its
                    // face, the equality constraint forces its rate; it
                    // stays on the margin as a rider when that rate keeps
                    // it inside the box, otherwise the bias must be
                    // reseated to recruit a replacement first.
                    let r: f64 = (0..n)
                        .filter(|&j| kind[j] == Kind::Inside)
                        .map(|j| y[j] * d[j])
                        .sum();
                    let forced = -y[mover] * r;
                    let tol_rate = 1e-9 * (1.0 + d[mover].abs());
                    let stays = match event {
                        Event::LowerFace => forced >= -tol_rate,
                        _ => forced <= d[mover] + tol_rate,
                    };
                    if stays {
                        riding[mover] = true;
                        exchanged = false;
                    } else {
                        reseat(
                            q,
                            y,
                            c0,
                            d,
                            theta,
                            &mut alpha0,
                            &alpha,
                            &mut kind,
                            mover,
                            event,
                        )?;
                    }
                }
            }
        }
        if exchanged {
            thetas.push(theta);
            riding.fill(false);
        }
    }
    Err(PathError::SuspectedCycling(thetas.len()))
}

/// Bias repositioning for the structurally stuck singleton-margin case:
/// slide the bias to the endpoint of its optimal interval where another
/// output reaches the margin, make that index the margin set, and send the
/// stuck index to the face it froze on.
#[allow(clippy::too_many_arguments)]
fn reseat(
    q: &QMatrix,
    y: &[f64],
    c0: &[f64],
    d: &[f64],
    theta: f64,
    alpha0: &mut f64,
    alpha: &[f64],
    kind: &mut [Kind],
    mover: usize,
    event: Event,
) -> Result<()> {
    let n = q.n();
    let qa = mul(q, alpha);
    let upper: Vec<bool> = (0..n)
        .map(|i| 2.0 * alpha[i] > c0[i] + theta * d[i])
        .collect();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut lo_binder = None;
    let mut hi_binder = None;
    for i in 0..n {
        // Lower faces need yf_i >= 1, upper faces yf_i <= 1, with
        // yf_i = qa_i + y_i * alpha0.
        let value = (1.0 - qa[i]) * y[i];
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
    for (endpoint, binder) in [(lo, lo_binder), (hi, hi_binder)] {
        let Some(bi) = binder else { continue };
        if !endpoint.is_finite() || (endpoint - *alpha0).abs() <= 1e-14 * (1.0 + alpha0.abs()) {
            continue;
        }
        // Every face condition must hold at the repositioned bias; the
        // binder sits exactly at 1 and passes either sign.
        let mut ok = true;
        for i in 0..n {
            let yf = qa[i] + y[i] * endpoint;
            let viol = if upper[i] { yf - 1.0 } else { 1.0 - yf };
            if viol > 1e-9 * (1.0 + yf.abs()) {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        // The seeded singleton direction must keep the binder on its face
        // side of the box.
        let mut trial: Vec<Kind> = kind.to_vec();
        trial[mover] = if event == Event::LowerFace {
            Kind::Outside
        } else {
            Kind::Inside
        };
        trial[bi] = Kind::Margin;
        let (_, beta) = direction(q, y, d, &trial)?;
        let tol_rate = 1e-9 * (1.0 + d[bi].abs());
        let rate_ok = if upper[bi] {
            beta[bi] <= d[bi] + tol_rate
        } else {
            beta[bi] >= -tol_rate
        };
        if !rate_ok {
            continue;
        }
        *alpha0 = endpoint;
        kind.copy_from_slice(&trial);
        return Ok(());
    }
    Err(PathError::NonConvergence(
        "conventional tracer: no bias interval endpoint admits a new margin member".into(),
    ))
}

/// Fresh dense direction solve: margin rates and the bias rate from the
/// bordered system, inside rates pinned to d, outside rates zero.
fn direction(q: &QMatrix, y: &[f64], d: &[f64], kind: &[Kind]) -> Result<(f64, Vec<f64>)> {
    let n = q.n();
    let members: Vec<usize> = (0..n).filter(|&i| kind[i] == Kind::Margin).collect();
    let mut beta = vec![0.0; n];
    for i in 0..n {
        if kind[i] == Kind::Inside {
            beta[i] = d[i];
        }
    }
    if members.is_empty() {
        return Ok((0.0, beta));
    }
    let k = members.len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (r, &i) in members.iter().enumerate() {
        a[(0, r + 1)] = y[i];
        a[(r + 1, 0)] = y[i];
        for (c, &j) in members.iter().enumerate() {
            a[(r + 1, c + 1)] = q.get(i, j);
        }
    }
    let mut eq = 0.0;
    for i in 0..n {
        eq += y[i] * beta[i];
    }
    rhs[0] = -eq;
    for (r, &i) in members.iter().enumerate() {
        let mut acc = 0.0;
        for j in 0..n {
            acc += q.get(i, j) * beta[j];
        }
        rhs[r + 1] = -acc;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| PathError::NonConvergence("singular conventional margin system".into()))?;
    for (r, &i) in members.iter().enumerate() {
        beta[i] = sol[r + 1];
    }
    Ok((sol[0], beta))
}

fn outputs(q: &QMatrix, y: &[f64], alpha: &[f64], alpha0: f64) -> Vec<f64> {
    let qa = mul(q, alpha);
    (0..alpha.len()).map(|i| qa[i] + y[i] * alpha0).collect()
}

fn mul(q: &QMatrix, v: &[f64]) -> Vec<f64> {
    let n = q.n();
    (0..n)
        .map(|i| (0..n).map(|j| q.get(i, j) * v[j]).sum())
        .collect()
}

/// Per-segment linearity and output-consistency report.
#[derive(Debug, Clone)]
pub struct FiniteDifferenceReport {
    pub segments_checked: usize,
    /// Worst gap between alpha reconstructed from the rate vector at the
    /// segment midpoint and the average of the segment endpoints.
    pub worst_alpha_linearity: f64,
    /// Worst gap between the advanced outputs at the midpoint and a full
    /// recomputation from the midpoint iterate.
    pub worst_yf_mismatch: f64,
    pub alpha_tolerance: f64,
    pub yf_tolerance: f64,
    pub pass: bool,
}

/// Check every traced segment for exact linearity of alpha and for
/// consistency of the advanced outputs with full recomputation.
pub fn finite_difference_path_check(trace: &PathTrace, q: &QMatrix) -> FiniteDifferenceReport {
    let alpha_tolerance = 1e-9;
    let yf_tolerance = 1e-7;
    let y = &trace.initial_state.y;
    let n = y.len();
    let mut worst_alpha = 0.0f64;
    let mut worst_yf = 0.0f64;
    let mut checked = 0;
    for (seg, bp) in trace.segments.iter().zip(trace.breakpoints.iter()) {
        let h = seg.theta_end - seg.theta_start;
        let end = &bp.state;
        checked += 1;
        // alpha at the midpoint from the rate vector vs the endpoint
        // average; exact piecewise linearity makes these coincide.
        for i in 0..n {
            let from_rate = seg.alpha_start[i] + 0.5 * h * seg.direction.beta[i];
            let from_avg = 0.5 * (seg.alpha_start[i] + end.alpha[i]);
            worst_alpha = worst_alpha.max((from_rate - from_avg).abs());
        }
        // Advanced outputs at the midpoint vs a full recomputation.
        let alpha_mid: Vec<f64> = (0..n)
            .map(|i| seg.alpha_start[i] + 0.5 * h * seg.direction.beta[i])
            .collect();
        let alpha0_mid = seg.alpha0_start + 0.5 * h * seg.direction.beta0;
        let qa_start = mul(q, &seg.alpha_start);
        let qa_mid = mul(q, &alpha_mid);
        for i in 0..n {
            let advanced =
                qa_start[i] + y[i] * seg.alpha0_start + 0.5 * h * seg.direction.g[i];
            let recomputed = qa_mid[i] + y[i] * alpha0_mid;
            worst_yf = worst_yf.max((advanced - recomputed).abs());
        }
    }
    FiniteDifferenceReport {
        segments_checked: checked,
        worst_alpha_linearity: worst_alpha,
        worst_yf_mismatch: worst_yf,
        alpha_tolerance,
        yf_tolerance,
        pass: worst_alpha <= alpha_tolerance && worst_yf <= yf_tolerance,
    }
}
