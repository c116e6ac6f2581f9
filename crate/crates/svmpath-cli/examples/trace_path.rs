//! Trace the exact solution path on a small synthetic problem and print
//! its breakpoints. Mirrors the library sketch in the top-level README.

use svmpath::dataset::{build_q, KernelKind, KernelSpec};
use svmpath::oracle::initialize_path;
use svmpath::partition::Tolerances;
use svmpath::tracer::{trace, CollectingObserver, PathProblem};
use svmpath_cli::synthetic::generate_synthetic;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_synthetic(24, 2, 42)?;
    let spec = KernelSpec::new(KernelKind::Rbf { gamma: 0.5 }, 1e-6)?;
    let q = build_q(&data, &spec)?;
    let n = data.n;
    let (c_lo, c_hi) = (0.1 / n as f64, 1e6 / n as f64);

    // c(theta) = c0 + theta * d, traced over [0, theta_max].
    let problem = PathProblem::new(
        q,
        data.y.clone(),
        vec![c_lo; n],
        vec![c_hi - c_lo; n],
        1.0,
    )?;
    let (state, pi) = initialize_path(&problem)?;

    let mut obs = CollectingObserver::new();
    trace(&problem, state, pi, Tolerances::exact(), 10, &mut obs)?;
    let path = obs.into_trace(problem.theta_max);

    for bp in &path.breakpoints {
        println!("theta = {:.6e}", bp.record.theta);
    }
    let (alpha, alpha0, _segment) = path.sample(0.5).expect("0.5 lies inside [0, theta_max]");
    println!(
        "midpoint: alpha0 = {alpha0:.6e}, max alpha = {:.6e}",
        alpha.iter().fold(0.0f64, |m, &v| m.max(v))
    );
    Ok(())
}
