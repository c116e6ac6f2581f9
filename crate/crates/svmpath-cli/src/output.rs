//! CSV report writers.
//!
//! Every float is written with 17 significant digits so files round-trip
//! exactly and reruns with the same configuration and seed are
//! byte-identical.

use std::path::{Path, PathBuf};

use svmpath::metrics::{ComparisonReport, PathSummary};
use svmpath::tracer::BreakpointRecord;
use svmpath::{PathError, Result};

/// Round-trippable float formatting shared by all writers.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PathError {
    PathError::InvalidData(format!("cannot write {}: {e}", path.display()))
}

/// One certificate row of `certificates_{label}.csv`.
#[derive(Debug, Clone)]
pub struct CertificateRow {
    pub k: usize,
    pub theta: f64,
    pub c: f64,
    pub p_inf: f64,
    pub q_inf: f64,
    pub stationarity: f64,
    pub compl_lower: f64,
    pub compl_upper: f64,
    pub equality: f64,
    /// `(bound, d_tilde, d_star)`; present only when the reference oracle
    /// was enabled for the run.
    pub gap: Option<(f64, f64, f64)>,
}

/// Write `breakpoints_{label}.csv`: one row per recorded breakpoint, the
/// terminal record included.
pub fn write_breakpoints(
    path: &Path,
    records: &[BreakpointRecord],
    c_of_theta: impl Fn(f64) -> f64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "k",
        "theta",
        "c",
        "delta_theta",
        "o_size",
        "m_size",
        "i_size",
        "b_o_size",
        "b_i_size",
        "truncated",
        "limiting",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            fmt(r.theta),
            fmt(c_of_theta(r.theta)),
            fmt(r.delta_theta),
            r.o_size.to_string(),
            r.m_size.to_string(),
            r.i_size.to_string(),
            r.b_o_size.to_string(),
            r.b_i_size.to_string(),
            r.truncated.to_string(),
            r.limiting.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Write `path_{label}.csv`: the sampled trajectory with the bias, the
/// dual objective, and the first `alpha_cols` multiplier columns.
pub fn write_path(
    path: &Path,
    summary: &PathSummary,
    alpha_cols: usize,
    c_of_theta: impl Fn(f64) -> f64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let mut header = vec![
        "theta".to_string(),
        "c".to_string(),
        "alpha0".to_string(),
        "objective".to_string(),
    ];
    for j in 0..alpha_cols {
        header.push(format!("alpha_{j}"));
    }
    w.write_record(&header).map_err(|e| io_err(path, e))?;
    for (k, &theta) in summary.thetas.iter().enumerate() {
        let mut row = vec![
            fmt(theta),
            fmt(c_of_theta(theta)),
            fmt(summary.alpha0s[k]),
            fmt(summary.objectives[k]),
        ];
        for j in 0..alpha_cols {
            row.push(fmt(summary.alphas[k][j]));
        }
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Write `certificates_{label}.csv`. Gap columns are left empty when the
/// reference oracle was not enabled.
pub fn write_certificates(path: &Path, rows: &[CertificateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "k",
        "theta",
        "c",
        "p_inf",
        "q_inf",
        "stationarity",
        "compl_lower",
        "compl_upper",
        "equality",
        "gap_bound",
        "d_tilde",
        "d_star",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in rows {
        let (gb, dt, ds) = match r.gap {
            Some((b, t, s)) => (fmt(b), fmt(t), fmt(s)),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            r.k.to_string(),
            fmt(r.theta),
            fmt(r.c),
            fmt(r.p_inf),
            fmt(r.q_inf),
            fmt(r.stationarity),
            fmt(r.compl_lower),
            fmt(r.compl_upper),
            fmt(r.equality),
            gb,
            dt,
            ds,
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Write `compare.csv`: per-grid-point differences of each relaxed trace
/// against the exact one, labeled by the relaxed trace.
pub fn write_compare(
    path: &Path,
    blocks: &[(String, ComparisonReport)],
    c_of_theta: impl Fn(f64) -> f64,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record([
        "label",
        "theta",
        "c",
        "partition_difference",
        "alpha_sup_gap",
        "breakpoint_ratio",
    ])
    .map_err(|e| io_err(path, e))?;
    for (label, rep) in blocks {
        for (k, &theta) in rep.thetas.iter().enumerate() {
            w.write_record([
                label.clone(),
                fmt(theta),
                fmt(c_of_theta(theta)),
                fmt(rep.partition_difference[k]),
                fmt(rep.alpha_sup_gap[k]),
                fmt(rep.breakpoint_ratio),
            ])
            .map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Join `outdir` with a per-trace file name.
pub fn artifact_path(outdir: &Path, stem: &str, label: &str) -> PathBuf {
    outdir.join(format!("{stem}_{label}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_the_formatter() {
        for v in [
            0.0,
            1.0,
            -0.3333333333333333,
            1.2345678901234567e-8,
            9.87654321e12,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }
}
