//! Training data ingestion, feature scaling, kernels, and the `Q` matrix.
//!
//! The dual problem is posed entirely in terms of the symmetric matrix
//! `Q_ij = y_i y_j K(x_i, x_j)` (plus a small diagonal jitter), so this
//! module is the only place feature vectors are touched; everything
//! downstream sees `Q` and the labels.

use nalgebra::DMatrix;

use crate::error::PathError;
use crate::Result;

/// A labeled training set in dense form.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Number of points.
    pub n: usize,
    /// Feature dimension.
    pub p: usize,
    /// Row-per-point feature matrix, `n x p`.
    pub x: DMatrix<f64>,
    /// Labels, each exactly `-1.0` or `+1.0`.
    pub y: Vec<f64>,
}

impl Dataset {
    /// Build a dataset from parts, validating the structural invariants:
    /// labels in {-1, +1}, at least two points, both classes present, and
    /// matching dimensions.
    pub fn new(x: DMatrix<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if y.len() != n {
            return Err(PathError::DimensionMismatch(format!(
                "{} feature rows but {} labels",
                n,
                y.len()
            )));
        }
        if n < 2 {
            return Err(PathError::InvalidData(format!(
                "need at least 2 points, got {n}"
            )));
        }
        for (i, &yi) in y.iter().enumerate() {
            if yi != 1.0 && yi != -1.0 {
                return Err(PathError::InvalidData(format!(
                    "label at point {i} is {yi}, expected -1 or +1"
                )));
            }
        }
        if !(y.contains(&1.0) && y.contains(&-1.0)) {
            return Err(PathError::InvalidData(
                "single class: the equality constraint forces the zero solution".into(),
            ));
        }
        Ok(Dataset { n, p, x, y })
    }

    /// Feature row `i` as a slice-backed view.
    pub fn point(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }
}

/// Kernel function selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `exp(-gamma * ||xi - xj||^2)` with `gamma > 0`.
    Rbf { gamma: f64 },
    /// Plain dot product.
    Linear,
}

/// Kernel choice plus the diagonal jitter added to `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Nonnegative constant added to every diagonal entry of `Q` to keep
    /// margin-set systems nonsingular along the path.
    pub jitter: f64,
}

/// Default jitter applied to the `Q` diagonal.
pub const DEFAULT_JITTER: f64 = 1e-6;

impl KernelSpec {
    /// Validated constructor.
    pub fn new(kind: KernelKind, jitter: f64) -> Result<Self> {
        if let KernelKind::Rbf { gamma } = kind {
            if !(gamma > 0.0) {
                return Err(PathError::InvalidData(format!(
                    "RBF gamma must be positive, got {gamma}"
                )));
            }
        }
        if !(jitter >= 0.0) {
            return Err(PathError::InvalidData(format!(
                "jitter must be nonnegative, got {jitter}"
            )));
        }
        Ok(KernelSpec { kind, jitter })
    }

    /// The conventional default for a `p`-dimensional dataset: RBF with
    /// `gamma = 1/p` (computed after scaling) and jitter 1e-6.
    pub fn default_for(p: usize) -> Self {
        KernelSpec {
            kind: KernelKind::Rbf {
                gamma: 1.0 / p as f64,
            },
            jitter: DEFAULT_JITTER,
        }
    }
}

/// The jittered dual matrix `Q_ij = y_i y_j K(x_i, x_j) + jitter * [i = j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    q: DMatrix<f64>,
    jitter: f64,
}

impl QMatrix {
    /// Wrap a prebuilt matrix. Intended for tests and synthetic problems;
    /// regular construction goes through [`build_q`].
    pub fn from_matrix(q: DMatrix<f64>, jitter: f64) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(PathError::DimensionMismatch(format!(
                "Q must be square, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q != q.transpose() {
            return Err(PathError::InvalidData("Q must be exactly symmetric".into()));
        }
        Ok(QMatrix { q, jitter })
    }

    /// Matrix order `n`.
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    /// The jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Entry accessor.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    /// Borrow the underlying dense matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// `Q * v` for a dense vector.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(v.len(), n, "vector length must match Q order");
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.q[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Quadratic form `v' Q v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let qv = self.mul_vec(v);
        v.iter().zip(qv.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Parse the LIBSVM sparse text format: one point per line,
/// `<label> <index>:<value> ...` with 1-based strictly increasing indices.
///
/// Any positive label maps to `+1`, everything else to `-1`. Feature indices
/// never mentioned on a line are zero; the feature dimension is the largest
/// index seen anywhere in the stream.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().ok_or_else(|| PathError::Parse {
            line: lineno,
            message: "missing label".into(),
        })?;
        let label: f64 = label_tok.parse().map_err(|_| PathError::Parse {
            line: lineno,
            message: format!("bad label `{label_tok}`"),
        })?;
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });

        let mut features: Vec<(usize, f64)> = Vec::new();
        let mut prev_index = 0usize;
        for tok in parts {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| PathError::Parse {
                line: lineno,
                message: format!("expected `index:value`, got `{tok}`"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| PathError::Parse {
                line: lineno,
                message: format!("bad feature index `{idx_s}`"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| PathError::Parse {
                line: lineno,
                message: format!("bad feature value `{val_s}`"),
            })?;
            if idx == 0 {
                return Err(PathError::Parse {
                    line: lineno,
                    message: "feature indices are 1-based".into(),
                });
            }
            if idx <= prev_index {
                return Err(PathError::Parse {
                    line: lineno,
                    message: format!("feature indices must be strictly increasing, got {idx} after {prev_index}"),
                });
            }
            prev_index = idx;
            max_index = max_index.max(idx);
            features.push((idx, val));
        }
        rows.push(features);
    }

    if rows.is_empty() {
        return Err(PathError::InvalidData("no data points".into()));
    }
    let n = rows.len();
    let p = max_index;
    let mut x = DMatrix::zeros(n, p);
    for (i, feats) in rows.iter().enumerate() {
        for &(idx, val) in feats {
            x[(i, idx - 1)] = val;
        }
    }
    Dataset::new(x, labels)
}

/// Affinely rescale every feature column onto `[0, 1]` (min to 0, max to 1).
/// Constant columns map to 0.
pub fn scale_features(d: &Dataset) -> Dataset {
    let mut x = d.x.clone();
    for j in 0..d.p {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..d.n {
            lo = lo.min(x[(i, j)]);
            hi = hi.max(x[(i, j)]);
        }
        let range = hi - lo;
        for i in 0..d.n {
            x[(i, j)] = if range > 0.0 {
                (x[(i, j)] - lo) / range
            } else {
                0.0
            };
        }
    }
    Dataset {
        n: d.n,
        p: d.p,
        x,
        y: d.y.clone(),
    }
}

/// Evaluate the kernel on two feature vectors.
pub fn kernel(xi: &[f64], xj: &[f64], spec: &KernelSpec) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(PathError::DimensionMismatch(format!(
            "kernel arguments have lengths {} and {}",
            xi.len(),
            xj.len()
        )));
    }
    Ok(match spec.kind {
        KernelKind::Rbf { gamma } => {
            let sq: f64 = xi
                .iter()
                .zip(xj.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (-gamma * sq).exp()
        }
        KernelKind::Linear => xi.iter().zip(xj.iter()).map(|(a, b)| a * b).sum(),
    })
}

/// Assemble the jittered `Q` matrix.
///
/// Each off-diagonal entry is computed once and mirrored, so the result is
/// symmetric bit-for-bit, and identical inputs always produce identical
/// bytes.
pub fn build_q(d: &Dataset, spec: &KernelSpec) -> Result<QMatrix> {
    let n = d.n;
    let mut q = DMatrix::zeros(n, n);
    let rows: Vec<Vec<f64>> = (0..n).map(|i| d.point(i)).collect();
    for i in 0..n {
        for j in i..n {
            let k = kernel(&rows[i], &rows[j], spec)?;
            let v = d.y[i] * d.y[j] * k;
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
        q[(i, i)] += spec.jitter;
    }
    Ok(QMatrix {
        q,
        jitter: spec.jitter,
    })
}
