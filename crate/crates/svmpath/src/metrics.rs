//! Path-comparison analytics: breakpoint counts, sampled index-set
//! sizes, dual-objective traces, and partition-difference series between
//! an exact path and a relaxed one.

use crate::dataset::QMatrix;
use crate::error::PathError;
use crate::partition::{partition_difference, Partition};
use crate::tracer::{LimitingCategory, PathTrace};
use crate::Result;

/// The dual objective `-1/2 alpha' Q alpha + 1' alpha`.
pub fn dual_objective(alpha: &[f64], qm: &QMatrix) -> f64 {
    let linear: f64 = alpha.iter().sum();
    -0.5 * qm.quad_form(alpha) + linear
}

/// A traced path reduced to comparable series on a fixed theta grid.
#[derive(Debug, Clone)]
pub struct PathSummary {
    /// Number of interior breakpoints (the terminal record is excluded).
    pub breakpoint_count: usize,
    /// The sampling grid.
    pub thetas: Vec<f64>,
    /// `(|O|, |M|, |I|)` of the segment partition at each grid point.
    pub set_sizes: Vec<(usize, usize, usize)>,
    /// Multiplier snapshot at each grid point.
    pub alphas: Vec<Vec<f64>>,
    pub alpha0s: Vec<f64>,
    /// Segment partition at each grid point.
    pub partitions: Vec<Partition>,
    /// Dual objective at each grid point.
    pub objectives: Vec<f64>,
    /// Step lengths of all recorded segments, terminal stretch included
    /// (so the values sum to theta_max).
    pub delta_thetas: Vec<f64>,
    /// Wall-clock seconds for the trace; informational only, set by the
    /// caller (defaults to zero) and never part of comparisons.
    pub wall_seconds: f64,
}

/// Geometrically spaced grid: `samples` values of the scalar bound
/// between `c_start` and `c_end` (log-uniform, endpoints exact), mapped
/// to theta via the linear relation `theta = theta_max (C - c_start) /
/// (c_end - c_start)`.
pub fn theta_grid_geometric(
    c_start: f64,
    c_end: f64,
    theta_max: f64,
    samples: usize,
) -> Result<Vec<f64>> {
    if !(c_start > 0.0 && c_end > c_start && c_start.is_finite() && c_end.is_finite()) {
        return Err(PathError::InvalidData(format!(
            "need 0 < c_start < c_end, got [{c_start}, {c_end}]"
        )));
    }
    if !(theta_max > 0.0 && theta_max.is_finite()) {
        return Err(PathError::InvalidData(format!(
            "theta_max must be positive and finite, got {theta_max}"
        )));
    }
    if samples < 2 {
        return Err(PathError::InvalidData(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    let ratio = c_end / c_start;
    let span = c_end - c_start;
    let mut grid = Vec::with_capacity(samples);
    for k in 0..samples {
        let theta = if k == 0 {
            0.0
        } else if k == samples - 1 {
            theta_max
        } else {
            let c = c_start * ratio.powf(k as f64 / (samples - 1) as f64);
            theta_max * (c - c_start) / span
        };
        grid.push(theta);
    }
    Ok(grid)
}

/// Sample a recorded trace on a grid. Every grid point must lie in
/// `[0, theta_max]`.
pub fn summarize(trace: &PathTrace, grid: &[f64], qm: &QMatrix) -> Result<PathSummary> {
    let mut set_sizes = Vec::with_capacity(grid.len());
    let mut alphas = Vec::with_capacity(grid.len());
    let mut alpha0s = Vec::with_capacity(grid.len());
    let mut partitions = Vec::with_capacity(grid.len());
    let mut objectives = Vec::with_capacity(grid.len());
    for &theta in grid {
        let (alpha, alpha0, seg) = trace.sample(theta).ok_or_else(|| {
            PathError::InvalidData(format!(
                "grid point {theta} lies outside the traced range [0, {}]",
                trace.theta_max
            ))
        })?;
        set_sizes.push(seg.partition.sizes());
        partitions.push(seg.partition.clone());
        objectives.push(dual_objective(&alpha, qm));
        alphas.push(alpha);
        alpha0s.push(alpha0);
    }
    Ok(PathSummary {
        breakpoint_count: trace
            .breakpoints
            .iter()
            .filter(|b| b.record.limiting != LimitingCategory::Terminal)
            .count(),
        thetas: grid.to_vec(),
        set_sizes,
        alphas,
        alpha0s,
        partitions,
        objectives,
        delta_thetas: trace
            .breakpoints
            .iter()
            .map(|b| b.record.delta_theta)
            .collect(),
        wall_seconds: 0.0,
    })
}

/// Pointwise comparison of two summaries on the same grid.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub thetas: Vec<f64>,
    /// Fraction of indices assigned differently at each grid point.
    pub partition_difference: Vec<f64>,
    /// `max_i |alpha_a,i - alpha_b,i|` at each grid point.
    pub alpha_sup_gap: Vec<f64>,
    pub max_partition_difference: f64,
    pub max_alpha_sup_gap: f64,
    /// `b`'s interior-breakpoint count over `a`'s (1 when both are zero).
    pub breakpoint_ratio: f64,
}

/// Compare two summaries sampled on the identical grid.
pub fn compare_paths(a: &PathSummary, b: &PathSummary) -> Result<ComparisonReport> {
    if a.thetas != b.thetas {
        return Err(PathError::DimensionMismatch(
            "summaries were sampled on different theta grids".into(),
        ));
    }
    let mut pd = Vec::with_capacity(a.thetas.len());
    let mut gap = Vec::with_capacity(a.thetas.len());
    for k in 0..a.thetas.len() {
        pd.push(partition_difference(&a.partitions[k], &b.partitions[k])?);
        let g = a.alphas[k]
            .iter()
            .zip(b.alphas[k].iter())
            .fold(0.0f64, |m, (x, z)| m.max((x - z).abs()));
        gap.push(g);
    }
    let ratio = if a.breakpoint_count == 0 {
        if b.breakpoint_count == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        b.breakpoint_count as f64 / a.breakpoint_count as f64
    };
    Ok(ComparisonReport {
        max_partition_difference: pd.iter().fold(0.0f64, |m, &v| m.max(v)),
        max_alpha_sup_gap: gap.iter().fold(0.0f64, |m, &v| m.max(v)),
        thetas: a.thetas.clone(),
        partition_difference: pd,
        alpha_sup_gap: gap,
        breakpoint_ratio: ratio,
    })
}
