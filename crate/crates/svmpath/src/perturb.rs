//! Perturbation certificates for suboptimal iterates.
//!
//! Every iterate produced under relaxed tolerances is the *exact* optimum
//! of a nearby problem in which the linear term is tilted by `p` and the
//! box is widened by `q`. [`extract_certificate`] constructs the smallest
//! such perturbation together with the multipliers that witness
//! optimality, and [`gap_bound`] evaluates a computable bound on how far
//! the iterate's objective can sit from the true optimum at the same
//! regularization vector.

use crate::dataset::QMatrix;
use crate::error::PathError;
use crate::oracle::OracleSolution;
use crate::partition::{check_relaxed, Partition, SetKind, Tolerances};
use crate::tol;
use crate::tracer::PathState;
use crate::Result;

/// Witness that an iterate is optimal for a perturbed problem.
///
/// The perturbed problem tilts the dual's linear term from `1` to `1 + p`
/// and widens the box from `[0, C]` to `[-q, C + q]`; `xi_minus` and
/// `xi_plus` are the bound multipliers and `kappa` the equality
/// multiplier of that problem's optimality system.
#[derive(Debug, Clone)]
pub struct PerturbationCertificate {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
    pub kappa: f64,
}

/// Evaluation of the dual-gap bound between a certified iterate and an
/// exact optimum at the same regularization vector.
#[derive(Debug, Clone)]
pub struct GapBoundReport {
    /// The computable bound: `sum_margin_inside + sum_clean + sum_mixed`.
    pub bound: f64,
    /// Exact dual optimum `D(alpha*)`.
    pub d_star: f64,
    /// Perturbed dual value of the iterate, `D~(alpha~)`.
    pub d_tilde: f64,
    /// `sum over M* and I* of |p_i| C_i`.
    pub sum_margin_inside: f64,
    /// `sum over I~ and O~ of |xi*_i + p_i| q_i`.
    pub sum_clean: f64,
    /// `sum over M~ of |p_i| (C_i + q_i)`.
    pub sum_mixed: f64,
    /// Size of `I~ = {i in I* : xi*_i + p_i >= 0}`.
    pub i_clean: usize,
    /// Size of `O~ = {i in O* : xi*_i + p_i <= 0}`.
    pub o_clean: usize,
    /// Size of the complement `M~` of the two sets above.
    pub m_mixed: usize,
}

/// Construct the minimal perturbation certificate for a relaxed iterate.
///
/// Requires the iterate to pass the relaxed optimality check for `pi`
/// under `tolr`; the construction then guarantees `|p|_inf <= eps1` and
/// `0 <= q_i <= eps2` exactly, nonnegative multipliers, and exact
/// complementarity; the stationarity residual is bounded by the
/// optimality check's slack.
pub fn extract_certificate(
    state: &PathState,
    pi: &Partition,
    tolr: &Tolerances,
) -> Result<PerturbationCertificate> {
    let report = check_relaxed(state, pi, tolr);
    if !report.pass {
        return Err(PathError::Precondition(format!(
            "iterate fails the relaxed optimality check (worst output {:.3e}, worst multiplier {:.3e}, equality residual {:.3e}); no certificate within the tolerances exists",
            report.worst_output, report.worst_multiplier, report.equality_residual
        )));
    }
    let n = state.alpha.len();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut xi_plus = vec![0.0; n];
    let mut xi_minus = vec![0.0; n];
    for i in 0..n {
        // Clamping at the tolerance caps keeps the norm guarantees exact;
        // whatever rounding-level residue the clamp cuts off (at most the
        // optimality check's slack) moves into the stationarity residual,
        // which downstream verification measures with a wider budget. In
        // particular an exact iterate (eps1 = eps2 = 0) certifies with
        // identically zero perturbations.
        let excess = state.yf[i] - 1.0;
        match pi.kind_of(i) {
            SetKind::Margin => {
                p[i] = excess.clamp(-tolr.eps1, tolr.eps1);
            }
            SetKind::Outside => {
                p[i] = excess.clamp(-tolr.eps1, tolr.eps1);
                xi_minus[i] = (excess - p[i]).max(0.0);
            }
            SetKind::Inside => {
                p[i] = excess.clamp(-tolr.eps1, tolr.eps1);
                xi_plus[i] = (p[i] - excess).max(0.0);
            }
        }
        q[i] = (-state.alpha[i])
            .max(state.alpha[i] - state.c[i])
            .max(0.0)
            .min(tolr.eps2);
    }
    Ok(PerturbationCertificate {
        p,
        q,
        xi_plus,
        xi_minus,
        kappa: -state.alpha0,
    })
}

/// Dual objective of the perturbed problem:
/// `-1/2 alpha' Q alpha + (1 + p)' alpha`.
pub fn perturbed_dual_objective(alpha: &[f64], p: &[f64], qm: &QMatrix) -> f64 {
    let linear: f64 = alpha.iter().zip(p.iter()).map(|(a, pi)| (1.0 + pi) * a).sum();
    -0.5 * qm.quad_form(alpha) + linear
}

/// Primal objective of the perturbed problem at the iterate:
/// `1/2 alpha' Q alpha + sum loss(1 + p_i - y_i f_i)` with the two-branch
/// loss `loss(s) = (C_i + q_i) s` for `s >= 0` and `-q_i s` otherwise.
pub fn perturbed_primal_objective(
    state: &PathState,
    cert: &PerturbationCertificate,
    qm: &QMatrix,
) -> f64 {
    let mut loss = 0.0;
    for i in 0..state.alpha.len() {
        let s = 1.0 + cert.p[i] - state.yf[i];
        loss += if s >= 0.0 {
            (state.c[i] + cert.q[i]) * s
        } else {
            -cert.q[i] * s
        };
    }
    0.5 * qm.quad_form(&state.alpha) + loss
}

/// Bound the gap between the iterate's perturbed dual value and the exact
/// optimum at the same regularization vector.
///
/// The index split is taken from the oracle's exact partition: with
/// `xi*_i = 1 - y_i f*_i`, the clean sets are
/// `I~ = {i in I* : xi*_i + p_i >= 0}` and
/// `O~ = {i in O* : xi*_i + p_i <= 0}`; the remainder `M~` pays the mixed
/// rate `|p_i| (C_i + q_i)`.
pub fn gap_bound(
    state: &PathState,
    cert: &PerturbationCertificate,
    oracle: &OracleSolution,
    qm: &QMatrix,
) -> Result<GapBoundReport> {
    let n = state.alpha.len();
    if oracle.c.len() != n || oracle.alpha.len() != n {
        return Err(PathError::DimensionMismatch(format!(
            "oracle solution has {} points, iterate has {n}",
            oracle.c.len()
        )));
    }
    let cmax = state.c.iter().fold(0.0f64, |m, &v| m.max(v));
    for i in 0..n {
        if (oracle.c[i] - state.c[i]).abs() > tol::KKT_SLACK * (1.0 + cmax) {
            return Err(PathError::InvalidData(format!(
                "oracle was solved at a different regularization vector (component {i}: {} vs {})",
                oracle.c[i], state.c[i]
            )));
        }
    }

    // xi*_i = -(Q alpha*)_i - y_i alpha0* + 1 = 1 - y_i f*_i.
    let qa = qm.mul_vec(&oracle.alpha);
    let xi_star: Vec<f64> = (0..n)
        .map(|i| 1.0 - qa[i] - state.y[i] * oracle.alpha0)
        .collect();

    let mut sum_margin_inside = 0.0;
    let mut sum_clean = 0.0;
    let mut sum_mixed = 0.0;
    let mut i_clean = 0usize;
    let mut o_clean = 0usize;
    for i in 0..n {
        let kind = oracle.partition.kind_of(i);
        if kind != SetKind::Outside {
            sum_margin_inside += cert.p[i].abs() * state.c[i];
        }
        let shifted = xi_star[i] + cert.p[i];
        let clean = match kind {
            SetKind::Inside if shifted >= 0.0 => {
                i_clean += 1;
                true
            }
            SetKind::Outside if shifted <= 0.0 => {
                o_clean += 1;
                true
            }
            _ => false,
        };
        if clean {
            sum_clean += shifted.abs() * cert.q[i];
        } else {
            sum_mixed += cert.p[i].abs() * (state.c[i] + cert.q[i]);
        }
    }
    Ok(GapBoundReport {
        bound: sum_margin_inside + sum_clean + sum_mixed,
        d_star: oracle.objective,
        d_tilde: perturbed_dual_objective(&state.alpha, &cert.p, qm),
        sum_margin_inside,
        sum_clean,
        sum_mixed,
        i_clean,
        o_clean,
        m_mixed: n - i_clean - o_clean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dual_objective;
    use crate::oracle::solve_dual_reference;
    use nalgebra::DMatrix;

    fn qmat(entries: &[f64], n: usize) -> QMatrix {
        QMatrix::from_matrix(DMatrix::from_row_slice(n, n, entries), 0.0).unwrap()
    }

    fn two_point_q() -> QMatrix {
        qmat(&[1.0, -0.3, -0.3, 1.0], 2)
    }

    /// A hand-built relaxed iterate on the two-point problem: index 0 sits
    /// on the margin with output 0.95, index 1 is inside at its bound.
    fn relaxed_state() -> (QMatrix, PathState, Partition, Tolerances) {
        let qm = two_point_q();
        let alpha = vec![0.5, 0.5];
        let alpha0 = 0.6;
        let y = vec![1.0, -1.0];
        let qa = qm.mul_vec(&alpha);
        let yf: Vec<f64> = (0..2).map(|i| qa[i] + y[i] * alpha0).collect();
        assert!((yf[0] - 0.95).abs() < 1e-15);
        assert!((yf[1] + 0.25).abs() < 1e-15);
        let state = PathState {
            theta: 0.0,
            alpha0,
            alpha,
            c: vec![1.0, 0.5],
            yf,
            y,
        };
        let pi = Partition::from_sets(2, &[], &[0], &[1]).unwrap();
        let tolr = Tolerances::new(0.1, 0.05).unwrap();
        (qm, state, pi, tolr)
    }

    fn exact_state(qm: &QMatrix, c: &[f64]) -> (PathState, Partition) {
        let y = vec![1.0, -1.0];
        let sol = solve_dual_reference(qm, &y, c).unwrap();
        let qa = qm.mul_vec(&sol.alpha);
        let yf: Vec<f64> = (0..2).map(|i| qa[i] + y[i] * sol.alpha0).collect();
        (
            PathState {
                theta: 0.0,
                alpha0: sol.alpha0,
                alpha: sol.alpha.clone(),
                c: c.to_vec(),
                yf,
                y,
            },
            sol.partition.clone(),
        )
    }

    #[test]
    fn exact_iterate_yields_zero_perturbation() {
        let qm = two_point_q();
        let (state, pi) = exact_state(&qm, &[2.0, 2.0]);
        let cert = extract_certificate(&state, &pi, &Tolerances::exact()).unwrap();
        for i in 0..2 {
            assert!(cert.p[i].abs() <= 1e-12, "p {:?}", cert.p);
            assert!(cert.q[i].abs() <= 1e-12, "q {:?}", cert.q);
            assert!(cert.xi_plus[i] >= 0.0 && cert.xi_minus[i] >= 0.0);
        }
        assert!((cert.kappa + state.alpha0).abs() < 1e-15);
        let primal = perturbed_primal_objective(&state, &cert, &qm);
        let dual = perturbed_dual_objective(&state.alpha, &cert.p, &qm);
        assert!((primal - dual).abs() < 1e-10);
    }

    #[test]
    fn outside_member_output_example() {
        // yf = 0.95 on an outside member with eps1 = 0.1: the tilt absorbs
        // the whole shortfall and the multiplier stays zero.
        let y = vec![1.0, -1.0];
        let state = PathState {
            theta: 0.0,
            alpha0: 0.0,
            alpha: vec![0.0, 0.0],
            c: vec![1.0, 1.0],
            yf: vec![0.95, 1.0],
            y,
        };
        let pi = Partition::from_sets(2, &[0], &[1], &[]).unwrap();
        let tolr = Tolerances::new(0.1, 0.05).unwrap();
        let cert = extract_certificate(&state, &pi, &tolr).unwrap();
        assert!((cert.p[0] + 0.05).abs() < 1e-15);
        assert_eq!(cert.xi_minus[0], 0.0);
        assert_eq!(cert.xi_plus[0], 0.0);
    }

    #[test]
    fn negative_alpha_gives_box_perturbation() {
        let y = vec![1.0, -1.0];
        let state = PathState {
            theta: 0.0,
            alpha0: 0.0,
            alpha: vec![-0.02, -0.02],
            c: vec![1.0, 1.0],
            yf: vec![1.2, 1.05],
            y,
        };
        let pi = Partition::from_sets(2, &[0, 1], &[], &[]).unwrap();
        let tolr = Tolerances::new(0.3, 0.05).unwrap();
        let cert = extract_certificate(&state, &pi, &tolr).unwrap();
        assert!((cert.q[0] - 0.02).abs() < 1e-15);
        assert!((cert.q[1] - 0.02).abs() < 1e-15);
        // Complementarity is exact: alpha + q = 0 on these indices.
        for i in 0..2 {
            assert_eq!(cert.xi_minus[i] * (state.alpha[i] + cert.q[i]), 0.0);
        }
    }

    #[test]
    fn rejects_iterate_outside_tolerances() {
        let y = vec![1.0, -1.0];
        let state = PathState {
            theta: 0.0,
            alpha0: 0.0,
            alpha: vec![0.0, 0.0],
            c: vec![1.0, 1.0],
            yf: vec![0.5, 1.0],
            y,
        };
        let pi = Partition::from_sets(2, &[0], &[1], &[]).unwrap();
        let tolr = Tolerances::new(0.1, 0.05).unwrap();
        assert!(extract_certificate(&state, &pi, &tolr).is_err());
    }

    #[test]
    fn perturbed_dual_is_tilted_dual() {
        let qm = two_point_q();
        let alpha = vec![0.4, 0.7];
        let p = vec![0.03, -0.08];
        let expect = dual_objective(&alpha, &qm) + p[0] * alpha[0] + p[1] * alpha[1];
        let got = perturbed_dual_objective(&alpha, &p, &qm);
        assert!((got - expect).abs() < 1e-14);
        assert_eq!(perturbed_dual_objective(&[0.0, 0.0], &p, &qm), 0.0);
    }

    #[test]
    fn strong_duality_holds_at_certificate() {
        let (qm, state, pi, tolr) = relaxed_state();
        let cert = extract_certificate(&state, &pi, &tolr).unwrap();
        // The certificate's multipliers witness exact optimality for the
        // perturbed problem, so its primal and dual values coincide.
        assert!((cert.p[0] + 0.05).abs() < 1e-12);
        assert!((cert.p[1] + 0.1).abs() < 1e-12);
        assert!((cert.xi_plus[1] - 1.15).abs() < 1e-12);
        let primal = perturbed_primal_objective(&state, &cert, &qm);
        let dual = perturbed_dual_objective(&state.alpha, &cert.p, &qm);
        assert!((primal - 0.75).abs() < 1e-12, "primal {primal}");
        assert!((primal - dual).abs() < 1e-12);
    }

    #[test]
    fn gap_bound_dominates_true_gap() {
        let (qm, state, pi, tolr) = relaxed_state();
        let cert = extract_certificate(&state, &pi, &tolr).unwrap();
        let oracle = solve_dual_reference(&qm, &state.y, &state.c).unwrap();
        let report = gap_bound(&state, &cert, &oracle, &qm).unwrap();
        assert!(report.bound >= 0.0);
        let scale = 1.0 + report.d_star.abs();
        assert!(
            (report.d_tilde - report.d_star).abs() <= report.bound + 1e-9 * scale,
            "gap {} vs bound {}",
            (report.d_tilde - report.d_star).abs(),
            report.bound
        );
        assert_eq!(report.i_clean + report.o_clean + report.m_mixed, 2);
        let parts = report.sum_margin_inside + report.sum_clean + report.sum_mixed;
        assert!((parts - report.bound).abs() < 1e-15);
    }

    #[test]
    fn gap_bound_is_zero_at_the_optimum() {
        let qm = two_point_q();
        let c = vec![2.0, 2.0];
        let (state, pi) = exact_state(&qm, &c);
        let cert = extract_certificate(&state, &pi, &Tolerances::exact()).unwrap();
        let oracle = solve_dual_reference(&qm, &state.y, &c).unwrap();
        let report = gap_bound(&state, &cert, &oracle, &qm).unwrap();
        assert!(report.bound.abs() < 1e-10, "bound {}", report.bound);
        assert!((report.d_tilde - report.d_star).abs() < 1e-10);
    }

    #[test]
    fn gap_bound_rejects_mismatched_regularization() {
        let (qm, state, pi, tolr) = relaxed_state();
        let cert = extract_certificate(&state, &pi, &tolr).unwrap();
        let oracle = solve_dual_reference(&qm, &state.y, &[3.0, 3.0]).unwrap();
        assert!(gap_bound(&state, &cert, &oracle, &qm).is_err());
    }
}
