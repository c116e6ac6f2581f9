//! Deterministic randomized instances for the verification harness:
//! jittered RBF Q matrices on synthetic Gaussian clusters, plus random
//! partition/boundary configurations for the QP equivalence sweep.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use svmpath::dataset::{build_q, Dataset, KernelKind, KernelSpec, QMatrix};
use svmpath::degeneracy::{BoundarySets, BoundarySide};
use svmpath::partition::Partition;

/// Seeded generator shared by all instance constructors.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two Gaussian clusters at +/-mu in the plane, labels by cluster, RBF
/// kernel with the given width and diagonal jitter. Both classes are
/// always present (the first half is +1).
pub fn rbf_cluster_q(n: usize, gamma: f64, jitter: f64, rg: &mut ChaCha8Rng) -> (QMatrix, Vec<f64>) {
    assert!(n >= 2, "need at least one point per class");
    let spread = Normal::new(0.0, 0.6).expect("valid normal");
    let half = n / 2;
    let mut x = DMatrix::zeros(n, 2);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let center = if i < half { 0.8 } else { -0.8 };
        y[i] = if i < half { 1.0 } else { -1.0 };
        x[(i, 0)] = center + spread.sample(rg);
        x[(i, 1)] = -center + spread.sample(rg);
    }
    let data = Dataset::new(x, y.clone()).expect("both classes present by construction");
    let spec = KernelSpec::new(KernelKind::Rbf { gamma }, jitter).expect("valid kernel spec");
    let q = build_q(&data, &spec).expect("kernel build");
    (q, y)
}

/// One randomized configuration for the partition QP: the quadratic data,
/// a partition, boundary sets drawn from realistic origins (toward-outside
/// from O or M, toward-inside from I or M), and a positive rate vector.
pub struct QpInstance {
    pub q: QMatrix,
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub pi: Partition,
    pub b: BoundarySets,
}

/// Whether the equality constraint of the boundary QP admits a solution
/// when every remaining margin member is frozen: the pinned rates must be
/// absorbable by sign-matched nonnegative boundary multipliers. Written
/// from the constraint alone so instance filtering never consults the
/// solvers under test.
pub fn empty_margin_feasible(pi: &Partition, b: &BoundarySets, y: &[f64], d: &[f64]) -> bool {
    let positions = b.positions();
    let mut in_b = vec![false; pi.n()];
    for &(i, _) in &positions {
        in_b[i] = true;
    }
    let mut rate = 0.0;
    for i in pi.inside() {
        if !in_b[i] {
            rate += y[i] * d[i];
        }
    }
    let mut scale = 1.0;
    for &(i, side) in &positions {
        if side == BoundarySide::TowardInside {
            rate += y[i] * d[i];
            scale += d[i].abs();
        }
    }
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

/// Draw one partition-QP configuration. `force_empty_margin` selects the
/// reduced branch: when true, every margin member is placed into the
/// boundary sets (so the half-step margin set is empty) and the draw is
/// rejected until the equality constraint is feasible; when false at least
/// one margin member stays out of the boundary sets.
pub fn random_qp_instance(seed: u64, force_empty_margin: bool) -> QpInstance {
    let mut rg = rng(seed);
    let n = rg.random_range(4..=9usize);
    let (q, y) = rbf_cluster_q(n, 0.5, 1e-6, &mut rg);
    loop {
        let d: Vec<f64> = (0..n).map(|_| rg.random_range(0.05..1.0)).collect();
        // Membership draw. Outside / margin / inside with margin kept small
        // enough that emptying it stays realistic.
        let mut o = Vec::new();
        let mut m = Vec::new();
        let mut i_set = Vec::new();
        for idx in 0..n {
            match rg.random_range(0..10u32) {
                0..=2 => o.push(idx),
                3..=5 => m.push(idx),
                _ => i_set.push(idx),
            }
        }
        if m.is_empty() && force_empty_margin {
            // An already-empty margin set is a valid empty-branch case as
            // long as some boundary indices exist; fall through.
        }
        // Boundary draw.
        let mut b_o = Vec::new();
        let mut b_i = Vec::new();
        for &idx in &m {
            let keep_in_margin = !force_empty_margin && rg.random_bool(0.5);
            if keep_in_margin {
                continue;
            }
            if rg.random_bool(0.5) {
                b_o.push(idx);
            } else {
                b_i.push(idx);
            }
        }
        for &idx in &o {
            if rg.random_bool(0.3) {
                b_o.push(idx);
            }
        }
        for &idx in &i_set {
            if rg.random_bool(0.3) {
                b_i.push(idx);
            }
        }
        b_o.sort_unstable();
        b_i.sort_unstable();
        if b_o.is_empty() && b_i.is_empty() {
            continue;
        }
        let pi = Partition::from_sets(n, &o, &m, &i_set).expect("sets partition 0..n");
        let b = BoundarySets {
            b_o,
            b_i,
            truncated: false,
            dropped: Vec::new(),
        };
        let margin_kept = pi
            .margin()
            .iter()
            .any(|&idx| !b.b_o.contains(&idx) && !b.b_i.contains(&idx));
        if force_empty_margin {
            if margin_kept {
                continue;
            }
            if !empty_margin_feasible(&pi, &b, &y, &d) {
                continue;
            }
        } else if !margin_kept {
            continue;
        }
        return QpInstance { q, y, d, pi, b };
    }
}
