//! End-to-end run orchestration: load data, trace every requested path
//! concurrently, and write the CSV reports.

use std::path::PathBuf;
use std::time::Instant;

use svmpath::dataset::{build_q, parse_libsvm, scale_features, Dataset, KernelKind, KernelSpec, QMatrix};
use svmpath::metrics::{compare_paths, summarize, theta_grid_geometric, PathSummary};
use svmpath::oracle::{initialize_path, solve_dual_reference};
use svmpath::partition::{Partition, Tolerances};
use svmpath::perturb::{extract_certificate, gap_bound};
use svmpath::tracer::{trace, CollectingObserver, PathProblem, PathState, PathTrace, TraceOutcome};
use svmpath::{PathError, Result};

use crate::config::{DataSource, KernelChoice, Mode, RunConfig};
use crate::output::{
    artifact_path, write_breakpoints, write_certificates, write_compare, write_path,
    CertificateRow,
};
use crate::synthetic::generate_synthetic;

/// What a completed run produced, for callers that inspect the artifacts.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub labels: Vec<String>,
    /// Interior breakpoint count per label, in `labels` order.
    pub breakpoint_counts: Vec<usize>,
    /// Every file written, absolute or relative to the caller's cwd.
    pub files: Vec<PathBuf>,
}

struct TraceRun {
    label: String,
    outcome: TraceOutcome,
    tracelog: PathTrace,
    wall: f64,
}

/// Map an error to the process exit code contract: configuration and data
/// problems are 1, numerical failures are 2.
pub fn exit_code_for(err: &PathError) -> i32 {
    match err {
        PathError::Parse { .. }
        | PathError::InvalidData(_)
        | PathError::DimensionMismatch(_)
        | PathError::Precondition(_) => 1,
        PathError::SingularSystem { .. }
        | PathError::NonConvergence(_)
        | PathError::Numerical { .. }
        | PathError::SuspectedCycling(_) => 2,
    }
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                PathError::InvalidData(format!("cannot read {}: {e}", path.display()))
            })?;
            let raw = parse_libsvm(&text)?;
            Ok(scale_features(&raw))
        }
        DataSource::Synthetic { n, p } => generate_synthetic(*n, *p, cfg.seed),
    }
}

fn run_one(
    problem: &PathProblem,
    init_state: &PathState,
    init_pi: &Partition,
    tolr: Tolerances,
    b_cap: usize,
    label: &str,
) -> Result<TraceRun> {
    let started = Instant::now();
    let mut obs = CollectingObserver::new();
    let outcome = trace(
        problem,
        init_state.clone(),
        init_pi.clone(),
        tolr,
        b_cap,
        &mut obs,
    )?;
    let wall = started.elapsed().as_secs_f64();
    Ok(TraceRun {
        label: label.to_string(),
        outcome,
        tracelog: obs.into_trace(problem.theta_max),
        wall,
    })
}

fn certificate_rows(
    tracelog: &PathTrace,
    q: &QMatrix,
    c_of_theta: &impl Fn(f64) -> f64,
    with_oracle: bool,
) -> Result<Vec<CertificateRow>> {
    let mut rows = Vec::with_capacity(tracelog.breakpoints.len());
    for bp in &tracelog.breakpoints {
        let st = &bp.state;
        let cert = extract_certificate(st, &bp.partition_after, &bp.tol_next)?;
        let n = st.alpha.len();
        let qa = q.mul_vec(&st.alpha);
        let mut stationarity = 0.0f64;
        let mut compl_lower = 0.0f64;
        let mut compl_upper = 0.0f64;
        let mut equality = 0.0f64;
        for i in 0..n {
            let r = -qa[i] + 1.0 + cert.p[i] + cert.xi_minus[i] - cert.xi_plus[i]
                + cert.kappa * st.y[i];
            stationarity = stationarity.max(r.abs());
            compl_lower = compl_lower.max((cert.xi_minus[i] * (st.alpha[i] + cert.q[i])).abs());
            compl_upper = compl_upper
                .max((cert.xi_plus[i] * (st.c[i] + cert.q[i] - st.alpha[i])).abs());
            equality += st.y[i] * st.alpha[i];
        }
        let gap = if with_oracle {
            let oracle = solve_dual_reference(q, &st.y, &st.c)?;
            let rep = gap_bound(st, &cert, &oracle, q)?;
            Some((rep.bound, rep.d_tilde, rep.d_star))
        } else {
            None
        };
        rows.push(CertificateRow {
            k: bp.record.k,
            theta: bp.record.theta,
            c: c_of_theta(bp.record.theta),
            p_inf: cert.p.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            q_inf: cert.q.iter().fold(0.0f64, |m, &v| m.max(v)),
            stationarity,
            compl_lower,
            compl_upper,
            equality: equality.abs(),
            gap,
        });
    }
    Ok(rows)
}

/// Execute a full configured run: trace, then write
/// `breakpoints_{label}.csv`, `path_{label}.csv`,
/// `certificates_{label}.csv` per trace plus `compare.csv` in both-mode.
/// Per-trace wall times go to stdout only, never into files.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let n = data.n;
    let kind = match cfg.kernel {
        KernelChoice::Rbf => KernelKind::Rbf {
            gamma: cfg.gamma.unwrap_or(1.0 / data.p as f64),
        },
        KernelChoice::Linear => KernelKind::Linear,
    };
    let spec = KernelSpec::new(kind, cfg.jitter)?;
    let q = build_q(&data, &spec)?;
    let (c_lo, c_hi) = cfg.c_interval(n);
    if !(c_lo < c_hi && c_lo > 0.0 && c_hi.is_finite()) {
        return Err(PathError::InvalidData(format!(
            "resolved regularization interval is invalid: [{c_lo}, {c_hi}]"
        )));
    }
    let theta_max = 1.0;
    let problem = PathProblem::new(
        q,
        data.y.clone(),
        vec![c_lo; n],
        vec![c_hi - c_lo; n],
        theta_max,
    )?;
    let grid = theta_grid_geometric(c_lo, c_hi, theta_max, cfg.samples)?;
    let c_of_theta = move |theta: f64| c_lo + theta * (c_hi - c_lo);
    let (init_state, init_pi) = initialize_path(&problem)?;

    // One labeled trace per requested tolerance level.
    let mut plan: Vec<(String, Tolerances)> = Vec::new();
    if matches!(cfg.mode, Mode::Exact | Mode::Both) {
        plan.push(("exact".to_string(), Tolerances::exact()));
    }
    if matches!(cfg.mode, Mode::Suboptimal | Mode::Both) {
        for &e in &cfg.e_values {
            plan.push((format!("e{e}"), Tolerances::new(e, e * c_lo)?));
        }
    }

    // Independent concurrent traces over the shared problem.
    let mut slots: Vec<Option<Result<TraceRun>>> = (0..plan.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, (label, tolr)) in slots.iter_mut().zip(plan.iter()) {
            let problem = &problem;
            let init_state = &init_state;
            let init_pi = &init_pi;
            scope.spawn(move || {
                *slot = Some(run_one(problem, init_state, init_pi, *tolr, cfg.b_cap, label));
            });
        }
    });

    std::fs::create_dir_all(&cfg.outdir).map_err(|e| {
        PathError::InvalidData(format!("cannot create {}: {e}", cfg.outdir.display()))
    })?;
    let alpha_cols = n.min(8);
    let mut labels = Vec::new();
    let mut counts = Vec::new();
    let mut files = Vec::new();
    let mut summaries: Vec<PathSummary> = Vec::new();
    for slot in slots {
        let run = slot.expect("every planned trace runs")?;
        let mut summary = summarize(&run.tracelog, &grid, &problem.q)?;
        summary.wall_seconds = run.wall;

        let bp_path = artifact_path(&cfg.outdir, "breakpoints", &run.label);
        write_breakpoints(&bp_path, &run.outcome.records, c_of_theta)?;
        let path_path = artifact_path(&cfg.outdir, "path", &run.label);
        write_path(&path_path, &summary, alpha_cols, c_of_theta)?;
        let cert_path = artifact_path(&cfg.outdir, "certificates", &run.label);
        let rows = certificate_rows(&run.tracelog, &problem.q, &c_of_theta, cfg.gap_oracle)?;
        write_certificates(&cert_path, &rows)?;

        println!(
            "trace {}: {} breakpoints, {:.3}s",
            run.label, summary.breakpoint_count, summary.wall_seconds
        );
        labels.push(run.label);
        counts.push(summary.breakpoint_count);
        files.extend([bp_path, path_path, cert_path]);
        summaries.push(summary);
    }

    if cfg.mode == Mode::Both && summaries.len() > 1 {
        let mut blocks = Vec::new();
        for k in 1..summaries.len() {
            let rep = compare_paths(&summaries[0], &summaries[k])?;
            println!(
                "compare {} vs exact: max partition difference {:.6}, max alpha gap {:.3e}",
                labels[k], rep.max_partition_difference, rep.max_alpha_sup_gap
            );
            blocks.push((labels[k].clone(), rep));
        }
        let cmp_path = cfg.outdir.join("compare.csv");
        write_compare(&cmp_path, &blocks, c_of_theta)?;
        files.push(cmp_path);
    }

    Ok(RunArtifacts {
        labels,
        breakpoint_counts: counts,
        files,
    })
}
