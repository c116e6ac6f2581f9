//! Shared helpers for the integration suites: seeded random instances and
//! fully traced paths.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svmpath::dataset::QMatrix;
use svmpath::partition::{Partition, Tolerances};
use svmpath::tracer::{trace, CollectingObserver, PathProblem, PathState, PathTrace};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random symmetric positive-definite matrix shaped like a jittered
/// kernel matrix: unit-scale diagonal, moderate off-diagonal mass.
pub fn random_spd_q(n: usize, rng: &mut ChaCha8Rng) -> QMatrix {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut q = (a.transpose() * &a) / n as f64;
    for i in 0..n {
        q[(i, i)] += 0.5;
    }
    // Exact symmetry despite float products.
    let qs = (&q + q.transpose()) * 0.5;
    QMatrix::from_matrix(qs, 0.0).unwrap()
}

/// Random labels with both classes guaranteed present.
pub fn random_labels(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    assert!(n >= 2);
    let mut y: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    y[0] = 1.0;
    y[1] = -1.0;
    y
}

/// A random path problem with `c` componentwise positive on the whole
/// interval and mixed-sign parameter directions.
pub fn random_problem(n: usize, rng: &mut ChaCha8Rng) -> PathProblem {
    let q = random_spd_q(n, rng);
    let y = random_labels(n, rng);
    let theta_max = 1.0;
    let c0: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.5)).collect();
    let d: Vec<f64> = c0
        .iter()
        .map(|&c| {
            let raw: f64 = rng.random_range(-0.3..1.2);
            // Keep the endpoint bound comfortably positive.
            raw.max((0.01 - c) / theta_max)
        })
        .collect();
    PathProblem::new(q, y, c0, d, theta_max).unwrap()
}

/// Trace a problem from the oracle initialization and return the full log.
pub fn traced(problem: &PathProblem, tolr: Tolerances, b_cap: usize) -> PathTrace {
    let (state, pi) = svmpath::oracle::initialize_path(problem).unwrap();
    let mut obs = CollectingObserver::new();
    trace(problem, state, pi, tolr, b_cap, &mut obs).unwrap();
    obs.into_trace(problem.theta_max)
}

/// Rebuild a consistent state (fresh outputs included) at an arbitrary
/// sampled theta of a trace, together with the segment's partition and
/// tolerances.
pub fn state_at(
    trace: &PathTrace,
    problem: &PathProblem,
    theta: f64,
) -> (PathState, Partition, Tolerances) {
    let (alpha, alpha0, seg) = trace.sample(theta).unwrap();
    let mut state = PathState {
        theta,
        alpha0,
        alpha,
        c: problem.c_at(theta),
        yf: Vec::new(),
        y: problem.y.clone(),
    };
    state.yf = state.recompute_yf(&problem.q);
    (state, seg.partition.clone(), seg.tol)
}

/// Relaxed tolerances at level `e` anchored to the instance's starting
/// bound scale.
pub fn tol_at(problem: &PathProblem, e: f64) -> Tolerances {
    if e == 0.0 {
        return Tolerances::exact();
    }
    let cmax = problem.c0.iter().fold(0.0f64, |m, &v| m.max(v));
    Tolerances::new(e, e * cmax).unwrap()
}
