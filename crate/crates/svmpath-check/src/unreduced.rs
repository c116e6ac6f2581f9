//! The boundary QP in its full-variable form, solved by complementarity
//! pattern enumeration — an independent oracle for the production reduced
//! solver.
//!
//! The QP minimizes `sum_{B_O} g_i b_i + sum_{B_I} g_i (b_i - d_i)` over
//! the rate vector `b` and bias rate `b0`, subject to the pins
//! `b_{O'} = 0`, `b_{I'} = d`, the stationarity rows `g_{M'} = 0`, the
//! equality `y' b = 0`, and the one-sided boundary conditions
//! `g_i >= 0, b_i >= 0` on `B_O` and `g_i <= 0, b_i <= d_i` on `B_I`,
//! where `g = Q b + y b0`. Every objective term is a product of same-sign
//! factors, and the optimal value is zero, so at any optimum each boundary
//! index is either stationary (margin-like) or pinned at its originating
//! face. Enumerating the `2^|B|` patterns with a plain dense bordered
//! solve per pattern therefore finds the optimum without touching the
//! production solver's Schur-complement reduction.

use nalgebra::{DMatrix, DVector};
use svmpath::dataset::QMatrix;
use svmpath::degeneracy::{BoundarySets, BoundarySide, QpSolution};
use svmpath::partition::Partition;
use svmpath::{PathError, Result};

/// Relative slack for the sign and complementarity acceptance tests.
const PATTERN_SLACK: f64 = 1e-9;

/// Solve the boundary QP at a breakpoint with old partition `pi` and
/// boundary sets `b` by enumerating complementarity patterns. Small
/// instances only.
pub fn solve_partition_qp_unreduced(
    pi: &Partition,
    b: &BoundarySets,
    q: &QMatrix,
    y: &[f64],
    d: &[f64],
) -> Result<QpSolution> {
    let n = pi.n();
    if n > 30 {
        return Err(PathError::Precondition(format!(
            "the enumeration oracle is limited to 30 points, got {n}"
        )));
    }
    let positions = b.positions();
    let nb = positions.len();
    if nb > 20 {
        return Err(PathError::Precondition(format!(
            "the enumeration oracle is limited to 20 boundary indices, got {nb}"
        )));
    }
    let mut in_b = vec![false; n];
    for &(i, _) in &positions {
        in_b[i] = true;
    }
    let m_half: Vec<usize> = pi.margin().into_iter().filter(|&i| !in_b[i]).collect();
    let i_half: Vec<usize> = pi.inside().into_iter().filter(|&i| !in_b[i]).collect();

    let pin = |r: usize| -> f64 {
        let (i, side) = positions[r];
        match side {
            BoundarySide::TowardOutside => 0.0,
            BoundarySide::TowardInside => d[i],
        }
    };
    let sgn = |r: usize| -> f64 {
        match positions[r].1 {
            BoundarySide::TowardOutside => 1.0,
            BoundarySide::TowardInside => -1.0,
        }
    };

    for mask in 0..(1u64 << nb) {
        let free = |r: usize| mask & (1 << r) != 0;

        // Pinned part of the rate vector for this pattern.
        let mut beta = vec![0.0; n];
        for &i in &i_half {
            beta[i] = d[i];
        }
        for r in 0..nb {
            if !free(r) {
                beta[positions[r].0] = pin(r);
            }
        }
        // Stationary members: surviving margin plus the free boundary
        // indices of this pattern.
        let mut members = m_half.clone();
        for r in 0..nb {
            if free(r) {
                members.push(positions[r].0);
            }
        }
        members.sort_unstable();

        let k = members.len();
        let beta0;
        if k == 0 {
            // Everything is pinned: the equality must already hold and the
            // bias rate is only constrained to an interval by the boundary
            // sign conditions; take its canonical representative.
            let resid: f64 = (0..n).map(|i| y[i] * beta[i]).sum();
            let scale = 1.0 + (0..n).map(|i| (y[i] * beta[i]).abs()).sum::<f64>();
            if resid.abs() > 1e-9 * scale {
                continue;
            }
            let qb = dense_mul(q, &beta, n);
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for r in 0..nb {
                let (i, side) = positions[r];
                // g_i = qb_i + y_i b0, constrained one-sided by the set the
                // index is falling back toward.
                let bound = -qb[i] * y[i];
                match (side, y[i] > 0.0) {
                    (BoundarySide::TowardOutside, true) => lo = lo.max(bound),
                    (BoundarySide::TowardOutside, false) => hi = hi.min(bound),
                    (BoundarySide::TowardInside, true) => hi = hi.min(bound),
                    (BoundarySide::TowardInside, false) => lo = lo.max(bound),
                }
            }
            let width_slack = PATTERN_SLACK * (1.0 + qb.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            if lo > hi + width_slack {
                continue;
            }
            beta0 = pick_canonical(lo, hi);
        } else {
            // Bordered dense solve for (b0, b_members): equality plus the
            // stationarity rows of the members.
            let mut a = DMatrix::zeros(k + 1, k + 1);
            let mut rhs = DVector::zeros(k + 1);
            for (r, &i) in members.iter().enumerate() {
                a[(0, r + 1)] = y[i];
                a[(r + 1, 0)] = y[i];
                for (c, &j) in members.iter().enumerate() {
                    a[(r + 1, c + 1)] = q.get(i, j);
                }
            }
            let mut pinned_eq = 0.0;
            for i in 0..n {
                if !members.contains(&i) {
                    pinned_eq += y[i] * beta[i];
                }
            }
            rhs[0] = -pinned_eq;
            for (r, &i) in members.iter().enumerate() {
                let mut acc = 0.0;
                for j in 0..n {
                    if !members.contains(&j) {
                        acc += q.get(i, j) * beta[j];
                    }
                }
                rhs[r + 1] = -acc;
            }
            let lu = a.lu();
            let Some(sol) = lu.solve(&rhs) else {
                continue;
            };
            if sol.iter().any(|v| !v.is_finite()) {
                continue;
            }
            beta0 = sol[0];
            for (r, &i) in members.iter().enumerate() {
                beta[i] = sol[r + 1];
            }
        }

        // Full gradient, objective, and the pattern's sign conditions.
        let qb = dense_mul(q, &beta, n);
        let g: Vec<f64> = (0..n).map(|i| qb[i] + y[i] * beta0).collect();
        let g_scale = positions
            .iter()
            .fold(0.0f64, |m, &(i, _)| m.max(g[i].abs()));
        let b_scale = positions.iter().enumerate().fold(0.0f64, |m, (r, &(i, _))| {
            m.max((beta[i] - pin(r)).abs()).max(pin(r).abs())
        });
        let slack = PATTERN_SLACK * (1.0 + g_scale) * (1.0 + b_scale);
        let mut ok = true;
        for r in 0..nb {
            let (i, _) = positions[r];
            let zb = sgn(r) * (beta[i] - pin(r));
            let zg = sgn(r) * g[i];
            // Both one-sided conditions must hold; the free factor of each
            // pattern is exactly zero by construction, so these checks are
            // what distinguishes the right pattern.
            if zb < -slack || zg < -slack {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let objective: f64 = (0..nb)
            .map(|r| {
                let (i, _) = positions[r];
                g[i] * (beta[i] - pin(r))
            })
            .sum();
        return Ok(QpSolution {
            beta0,
            beta,
            g,
            objective,
        });
    }
    Err(PathError::NonConvergence(
        "no complementarity pattern satisfies the boundary QP conditions".into(),
    ))
}

/// Canonical representative of an interval: midpoint when both ends are
/// finite, the finite end when one-sided, zero when unconstrained.
fn pick_canonical(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

fn dense_mul(q: &QMatrix, v: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (0..n).map(|j| q.get(i, j) * v[j]).sum())
        .collect()
}
