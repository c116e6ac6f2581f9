//! The bordered margin-set linear system and segment direction solves.
//!
//! Along a path segment the margin set `M` is fixed and the segment
//! direction `(beta0, beta_M)` solves
//!
//! ```text
//!     [ 0     y_M' ] [ beta0  ]     [ y_I' d_I    ]
//!     [ y_M   Q_M  ] [ beta_M ] = - [ Q_{M,I} d_I ]
//! ```
//!
//! with `beta_O = 0` and `beta_I = d_I` pinned. The bordered matrix is
//! symmetric with exactly one negative eigenvalue when `Q_M` is positive
//! definite, and changes by a few rows/columns per breakpoint, so this
//! module maintains its explicit inverse under rank-one member additions
//! and removals (cost `O(|M|^2)` per change) with periodic fresh rebuilds
//! to bound drift.

use nalgebra::DMatrix;

use crate::dataset::QMatrix;
use crate::error::PathError;
use crate::partition::{Partition, SetKind};
use crate::tol;
use crate::Result;

/// Direction of the solution along one path segment.
///
/// `beta` is the rate of change of `alpha`, `beta0` of the bias, and
/// `g = Q beta + y beta0` the rate of change of the outputs `y_i f_i`.
/// By construction `beta_O = 0` and `beta_I = d_I` exactly (copied, never
/// solved), and `g_M = 0` up to solve residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDirection {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub g: Vec<f64>,
}

/// Factorization (maintained explicit inverse) of the bordered margin
/// matrix for an ascending member list.
#[derive(Debug, Clone)]
pub struct MarginSystem {
    /// Margin indices, ascending.
    members: Vec<usize>,
    /// The bordered matrix itself (border row/column first).
    a: DMatrix<f64>,
    /// Maintained inverse of `a`.
    inv: DMatrix<f64>,
    /// Smallest pivot magnitude observed (build pivots and update pivots).
    min_pivot: f64,
    /// Rank-one changes applied since the last fresh factorization.
    updates_since_refresh: usize,
}

fn bordered_matrix(members: &[usize], q: &QMatrix, y: &[f64]) -> DMatrix<f64> {
    let m = members.len();
    let mut a = DMatrix::zeros(m + 1, m + 1);
    for (r, &i) in members.iter().enumerate() {
        a[(0, r + 1)] = y[i];
        a[(r + 1, 0)] = y[i];
        for (s, &j) in members.iter().enumerate() {
            a[(r + 1, s + 1)] = q.get(i, j);
        }
    }
    a
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        let sum: f64 = (0..a.ncols()).map(|c| a[(r, c)].abs()).sum();
        worst = worst.max(sum);
    }
    worst
}

impl MarginSystem {
    /// Fresh factorization for the margin set of `pi`.
    pub fn build(pi: &Partition, q: &QMatrix, y: &[f64]) -> Result<Self> {
        Self::build_from_members(pi.margin(), q, y)
    }

    /// Fresh factorization for an explicit ascending member list.
    pub fn build_from_members(members: Vec<usize>, q: &QMatrix, y: &[f64]) -> Result<Self> {
        if members.is_empty() {
            return Err(PathError::Precondition(
                "margin system requires at least one member; the empty case is handled by the partition QP".into(),
            ));
        }
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PathError::Precondition(
                "margin members must be strictly ascending".into(),
            ));
        }
        let a = bordered_matrix(&members, q, y);
        let threshold = tol::SINGULARITY_RELATIVE * inf_norm(&a).max(1.0);
        let lu = a.clone().full_piv_lu();
        let mut min_pivot = f64::INFINITY;
        for k in 0..a.nrows() {
            min_pivot = min_pivot.min(lu.u()[(k, k)].abs());
        }
        if min_pivot < threshold {
            return Err(PathError::SingularSystem {
                pivot: min_pivot,
                threshold,
            });
        }
        let inv = lu
            .try_inverse()
            .ok_or(PathError::SingularSystem {
                pivot: min_pivot,
                threshold,
            })?;
        Ok(MarginSystem {
            members,
            a,
            inv,
            min_pivot,
            updates_since_refresh: 0,
        })
    }

    /// The ascending margin member list.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Smallest pivot magnitude seen by factorizations and updates so far.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// `||A * inv(A) - I||_inf`, the on-demand reconstruction check.
    pub fn reconstruction_error(&self) -> f64 {
        let s = self.a.nrows();
        let prod = &self.a * &self.inv;
        let mut worst = 0.0f64;
        for r in 0..s {
            for c in 0..s {
                let expect = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((prod[(r, c)] - expect).abs());
            }
        }
        worst
    }

    fn threshold(&self) -> f64 {
        tol::SINGULARITY_RELATIVE * inf_norm(&self.a).max(1.0)
    }

    /// Solve `A x = rhs` via the maintained inverse plus one pass of
    /// iterative refinement against the stored matrix.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let s = self.a.nrows();
        assert_eq!(rhs.len(), s, "rhs length must be |M| + 1");
        let mut x = vec![0.0; s];
        for r in 0..s {
            let mut acc = 0.0;
            for c in 0..s {
                acc += self.inv[(r, c)] * rhs[c];
            }
            x[r] = acc;
        }
        // One refinement pass: x += inv(A) * (rhs - A x).
        let mut resid = vec![0.0; s];
        for r in 0..s {
            let mut acc = rhs[r];
            for c in 0..s {
                acc -= self.a[(r, c)] * x[c];
            }
            resid[r] = acc;
        }
        for r in 0..s {
            let mut acc = 0.0;
            for c in 0..s {
                acc += self.inv[(r, c)] * resid[c];
            }
            x[r] += acc;
        }
        x
    }

    /// Add one member, keeping the member list ascending. `O(|M|^2)`.
    fn add_member(&mut self, j: usize, q: &QMatrix, y: &[f64]) -> Result<()> {
        if self.members.contains(&j) {
            return Err(PathError::Precondition(format!(
                "index {j} is already a margin member"
            )));
        }
        let s = self.a.nrows();
        // Border column of the new member in the current coordinate order.
        let mut col = vec![0.0; s];
        col[0] = y[j];
        for (r, &i) in self.members.iter().enumerate() {
            col[r + 1] = q.get(i, j);
        }
        let qjj = q.get(j, j);
        // Schur complement of the new diagonal entry; must be positive to
        // preserve the bordered matrix's single negative eigenvalue.
        let mut ra = vec![0.0; s];
        for r in 0..s {
            let mut acc = 0.0;
            for c in 0..s {
                acc += self.inv[(r, c)] * col[c];
            }
            ra[r] = acc;
        }
        let schur = qjj - col.iter().zip(ra.iter()).map(|(a, b)| a * b).sum::<f64>();
        let threshold = self.threshold();
        if schur <= threshold {
            return Err(PathError::SingularSystem {
                pivot: schur,
                threshold,
            });
        }
        self.min_pivot = self.min_pivot.min(schur);

        // Blockwise inverse with the new member appended last.
        let mut grown = DMatrix::zeros(s + 1, s + 1);
        for r in 0..s {
            for c in 0..s {
                grown[(r, c)] = self.inv[(r, c)] + ra[r] * ra[c] / schur;
            }
            grown[(r, s)] = -ra[r] / schur;
            grown[(s, r)] = -ra[r] / schur;
        }
        grown[(s, s)] = 1.0 / schur;

        // Permute so the member list stays ascending: target order is
        // [border, old members < j, j, old members > j].
        let rank = self.members.partition_point(|&m| m < j);
        let mut perm = vec![0usize; s + 1];
        for (t, slot) in perm.iter_mut().enumerate().skip(1) {
            *slot = if t <= rank {
                t
            } else if t == rank + 1 {
                s
            } else {
                t - 1
            };
        }
        let mut inv = DMatrix::zeros(s + 1, s + 1);
        for r in 0..=s {
            for c in 0..=s {
                inv[(r, c)] = grown[(perm[r], perm[c])];
            }
        }
        self.inv = inv;
        self.members.insert(rank, j);
        self.a = bordered_matrix(&self.members, q, y);
        self.updates_since_refresh += 1;
        Ok(())
    }

    /// Remove one member. `O(|M|^2)`.
    fn remove_member(&mut self, j: usize, q: &QMatrix, y: &[f64]) -> Result<()> {
        let rank = self
            .members
            .iter()
            .position(|&m| m == j)
            .ok_or_else(|| PathError::Precondition(format!("index {j} is not a margin member")))?;
        if self.members.len() == 1 {
            return Err(PathError::Precondition(
                "cannot remove the last margin member; the empty case is handled by the partition QP".into(),
            ));
        }
        let s = self.a.nrows();
        let t = rank + 1;
        // The inverse's diagonal entry at the removed position is the
        // reciprocal Schur complement; it must be positive for the reduced
        // system to keep its single negative eigenvalue.
        let pivot = self.inv[(t, t)];
        let threshold = self.threshold();
        if pivot <= threshold {
            return Err(PathError::SingularSystem {
                pivot,
                threshold,
            });
        }
        self.min_pivot = self.min_pivot.min(pivot);
        let mut inv = DMatrix::zeros(s - 1, s - 1);
        let keep: Vec<usize> = (0..s).filter(|&r| r != t).collect();
        for (nr, &r) in keep.iter().enumerate() {
            for (nc, &c) in keep.iter().enumerate() {
                inv[(nr, nc)] = self.inv[(r, c)] - self.inv[(r, t)] * self.inv[(t, c)] / pivot;
            }
        }
        self.inv = inv;
        self.members.remove(rank);
        self.a = bordered_matrix(&self.members, q, y);
        self.updates_since_refresh += 1;
        Ok(())
    }

    /// Apply a batch of removals and additions incrementally, refreshing
    /// with a fresh factorization once enough rank-one changes accumulate.
    ///
    /// On a singularity error the system is left in a valid state for its
    /// previous member set only if no change was applied yet; callers are
    /// expected to fall back to a fresh [`MarginSystem::build`] on the
    /// target member set and propagate the error only if that also fails.
    pub fn update_members(
        &mut self,
        added: &[usize],
        removed: &[usize],
        q: &QMatrix,
        y: &[f64],
    ) -> Result<()> {
        for &j in removed {
            if !self.members.contains(&j) {
                return Err(PathError::Precondition(format!(
                    "cannot remove non-member {j}"
                )));
            }
        }
        for &j in added {
            if self.members.contains(&j) {
                return Err(PathError::Precondition(format!(
                    "cannot add existing member {j}"
                )));
            }
        }
        if self.members.len() + added.len() == removed.len() {
            return Err(PathError::Precondition(
                "update would empty the margin set".into(),
            ));
        }
        // Additions first so the set never empties mid-batch.
        for &j in added {
            self.add_member(j, q, y)?;
        }
        for &j in removed {
            self.remove_member(j, q, y)?;
        }
        if self.updates_since_refresh >= tol::REFRESH_INTERVAL {
            *self = Self::build_from_members(std::mem::take(&mut self.members), q, y)?;
        }
        Ok(())
    }
}

/// Segment direction for partition `pi` and parameter direction `d`,
/// using a prebuilt margin system.
///
/// `beta_O = 0` and `beta_I = d_I` are copied exactly; `(beta0, beta_M)`
/// come from the bordered solve; `g = Q beta + y beta0` is evaluated on all
/// indices.
pub fn solve_direction(
    sys: &MarginSystem,
    pi: &Partition,
    d: &[f64],
    q: &QMatrix,
    y: &[f64],
) -> Result<StepDirection> {
    let n = pi.n();
    // w_i = sum_{j in I} Q_ij d_j, plus the border entry y_I' d_I.
    let inside = pi.inside();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for &j in &inside {
            acc += q.get(i, j) * d[j];
        }
        w[i] = acc;
    }
    let ydi: f64 = inside.iter().map(|&j| y[j] * d[j]).sum();
    solve_direction_cached(sys, pi, d, &w, ydi, q, y)
}

/// [`solve_direction`] with the inside-set products `w = Q_{:,I} d_I` and
/// `ydi = y_I' d_I` supplied by the caller (the tracer maintains them
/// incrementally so each segment costs `O(n |M|)`).
pub fn solve_direction_cached(
    sys: &MarginSystem,
    pi: &Partition,
    d: &[f64],
    w: &[f64],
    ydi: f64,
    q: &QMatrix,
    y: &[f64],
) -> Result<StepDirection> {
    let n = pi.n();
    let members = sys.members();
    let mut rhs = vec![0.0; members.len() + 1];
    rhs[0] = -ydi;
    for (r, &i) in members.iter().enumerate() {
        rhs[r + 1] = -w[i];
    }
    let sol = sys.solve(&rhs);
    let beta0 = sol[0];
    let mut beta = vec![0.0; n];
    for (r, &i) in members.iter().enumerate() {
        beta[i] = sol[r + 1];
    }
    for i in 0..n {
        if pi.kind_of(i) == SetKind::Inside {
            beta[i] = d[i];
        }
    }
    // g = Q beta + y beta0 = Q_{:,M} beta_M + w + y beta0.
    let mut g = vec![0.0; n];
    for i in 0..n {
        let mut acc = w[i] + y[i] * beta0;
        for (r, &j) in members.iter().enumerate() {
            acc += q.get(i, j) * sol[r + 1];
        }
        g[i] = acc;
    }
    Ok(StepDirection { beta0, beta, g })
}

/// Segment direction when the margin set is empty: every multiplier is
/// pinned (`beta_O = 0`, `beta_I = d_I`) and the bias rate is whatever the
/// caller determined (zero before the first breakpoint, the partition QP's
/// equality multiplier afterwards).
pub fn empty_margin_direction(
    pi: &Partition,
    d: &[f64],
    beta0: f64,
    w: &[f64],
    y: &[f64],
) -> StepDirection {
    let n = pi.n();
    let mut beta = vec![0.0; n];
    for i in 0..n {
        if pi.kind_of(i) == SetKind::Inside {
            beta[i] = d[i];
        }
    }
    let g = (0..n).map(|i| w[i] + y[i] * beta0).collect();
    StepDirection { beta0, beta, g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn qmat(entries: &[f64], n: usize, jitter: f64) -> QMatrix {
        QMatrix::from_matrix(DMatrix::from_row_slice(n, n, entries), jitter).unwrap()
    }

    #[test]
    fn single_member_bordered_system() {
        let q = qmat(&[2.0, 0.5, 0.5, 1.0], 2, 0.0);
        let y = vec![1.0, -1.0];
        let pi = Partition::from_sets(2, &[], &[0], &[1]).unwrap();
        let sys = MarginSystem::build(&pi, &q, &y).unwrap();
        assert_eq!(sys.members(), &[0]);
        // A = [[0, 1], [1, 2]]; A^{-1} = [[-2, 1], [1, 0]].
        let x = sys.solve(&[1.0, 0.0]);
        assert!((x[0] - -2.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_without_jitter_are_singular() {
        // Two identical same-label points: Q has two identical rows, so the
        // bordered 3x3 matrix is rank deficient.
        let q = qmat(&[1.0, 1.0, 1.0, 1.0], 2, 0.0);
        let y = vec![1.0, 1.0];
        let err = MarginSystem::build_from_members(vec![0, 1], &q, &y).unwrap_err();
        assert!(matches!(err, PathError::SingularSystem { .. }));
    }

    #[test]
    fn jitter_rescues_duplicate_points() {
        let j = 1e-6;
        let q = qmat(&[1.0 + j, 1.0, 1.0, 1.0 + j], 2, j);
        let y = vec![1.0, 1.0];
        let sys = MarginSystem::build_from_members(vec![0, 1], &q, &y).unwrap();
        assert!(sys.reconstruction_error() < 1e-6);
    }

    #[test]
    fn two_point_direction_matches_dense_solve() {
        let q = qmat(&[1.3, -0.4, -0.4, 0.9], 2, 0.0);
        let y = vec![1.0, -1.0];
        let pi = Partition::from_sets(2, &[], &[0], &[1]).unwrap();
        let d = vec![1.0, 1.0];
        let sys = MarginSystem::build(&pi, &q, &y).unwrap();
        let dir = solve_direction(&sys, &pi, &d, &q, &y).unwrap();

        // Independent dense solve of the same bordered system.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, y[0], y[0], q.get(0, 0)]);
        let rhs = nalgebra::DVector::from_row_slice(&[-(y[1] * d[1]), -(q.get(0, 1) * d[1])]);
        let sol = a.lu().solve(&rhs).unwrap();
        assert!((dir.beta0 - sol[0]).abs() < 1e-12);
        assert!((dir.beta[0] - sol[1]).abs() < 1e-12);
        assert_eq!(dir.beta[1], d[1]);
        // Margin output is stationary.
        assert!(dir.g[0].abs() < 1e-12);
    }

    #[test]
    fn empty_inside_set_gives_zero_direction() {
        let q = qmat(&[1.5, 0.2, 0.2, 1.1], 2, 0.0);
        let y = vec![1.0, -1.0];
        let pi = Partition::from_sets(2, &[1], &[0], &[]).unwrap();
        let sys = MarginSystem::build(&pi, &q, &y).unwrap();
        let dir = solve_direction(&sys, &pi, &[3.0, 7.0], &q, &y).unwrap();
        assert_eq!(dir.beta0, 0.0);
        assert!(dir.beta.iter().all(|&b| b == 0.0));
        assert!(dir.g.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn pinned_components_are_bit_exact() {
        let q = qmat(
            &[
                1.2, 0.1, -0.3, 0.1, 1.4, 0.2, -0.3, 0.2, 1.6,
            ],
            3,
            0.0,
        );
        let y = vec![1.0, -1.0, 1.0];
        let pi = Partition::from_sets(3, &[0], &[1], &[2]).unwrap();
        let d = vec![0.123456789, 0.987654321, 0.555555555];
        let sys = MarginSystem::build(&pi, &q, &y).unwrap();
        let dir = solve_direction(&sys, &pi, &d, &q, &y).unwrap();
        assert_eq!(dir.beta[0], 0.0);
        assert_eq!(dir.beta[2], d[2]);
    }

    #[test]
    fn add_then_remove_restores_solves() {
        let q = qmat(
            &[
                1.5, 0.3, 0.1, 0.2, 0.3, 1.2, -0.2, 0.1, 0.1, -0.2, 1.8, 0.4, 0.2, 0.1, 0.4, 1.1,
            ],
            4,
            0.0,
        );
        let y = vec![1.0, -1.0, 1.0, -1.0];
        let before = MarginSystem::build_from_members(vec![0, 2], &q, &y).unwrap();
        let mut sys = before.clone();
        sys.update_members(&[1], &[], &q, &y).unwrap();
        assert_eq!(sys.members(), &[0, 1, 2]);
        sys.update_members(&[], &[1], &q, &y).unwrap();
        assert_eq!(sys.members(), &[0, 2]);
        let rhs = vec![0.3, -1.1, 0.7];
        let a = before.solve(&rhs);
        let b = sys.solve(&rhs);
        for (ai, bi) in a.iter().zip(b.iter()) {
            assert!((ai - bi).abs() <= 1e-10 * (1.0 + ai.abs()), "{ai} vs {bi}");
        }
    }

    #[test]
    fn removing_all_members_errors() {
        let q = qmat(&[1.0, 0.0, 0.0, 1.0], 2, 0.0);
        let y = vec![1.0, -1.0];
        let mut sys = MarginSystem::build_from_members(vec![0], &q, &y).unwrap();
        let err = sys.update_members(&[], &[0], &q, &y).unwrap_err();
        assert!(matches!(err, PathError::Precondition(_)));
    }

    #[test]
    fn update_checks_membership_preconditions() {
        let q = qmat(&[1.0, 0.0, 0.0, 1.0], 2, 0.0);
        let y = vec![1.0, -1.0];
        let mut sys = MarginSystem::build_from_members(vec![0], &q, &y).unwrap();
        assert!(sys.update_members(&[0], &[], &q, &y).is_err());
        assert!(sys.update_members(&[], &[1], &q, &y).is_err());
    }
}
