//! Validated run configuration shared by the binary and the tests.

use std::path::PathBuf;

use svmpath::{PathError, Result};

/// Which traces a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Suboptimal,
    Both,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "suboptimal" => Ok(Mode::Suboptimal),
            "both" => Ok(Mode::Both),
            other => Err(format!(
                "mode must be exact, suboptimal, or both, got {other:?}"
            )),
        }
    }
}

/// Kernel selector exposed on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Rbf,
    Linear,
}

impl std::str::FromStr for KernelChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rbf" => Ok(KernelChoice::Rbf),
            "linear" => Ok(KernelChoice::Linear),
            other => Err(format!("kernel must be rbf or linear, got {other:?}")),
        }
    }
}

/// Where the training data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// A file in the sparse `label index:value` text format.
    File(PathBuf),
    /// A generated two-cluster dataset of `n` points in `p` dimensions.
    Synthetic { n: usize, p: usize },
}

/// Full description of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data: DataSource,
    pub kernel: KernelChoice,
    /// RBF width override; `None` means `1/p`.
    pub gamma: Option<f64>,
    /// Diagonal stabilizer added to `Q`.
    pub jitter: f64,
    /// Scalar lower end of the regularization interval; `None` means
    /// `0.1 / n`.
    pub c_start: Option<f64>,
    /// Scalar upper end; `None` means `1e6 / n`.
    pub c_end: Option<f64>,
    /// Suboptimality levels traced in suboptimal/both modes.
    pub e_values: Vec<f64>,
    /// Breakpoint processing cap.
    pub b_cap: usize,
    pub mode: Mode,
    /// Sample count of the reporting grid.
    pub samples: usize,
    pub outdir: PathBuf,
    /// Seed for synthetic data generation.
    pub seed: u64,
    /// Solve a reference optimum at every breakpoint and report the
    /// dual-gap bound in certificates.csv (slow on long paths).
    pub gap_oracle: bool,
}

impl RunConfig {
    /// Structural validation that does not need the dataset size.
    pub fn validate(&self) -> Result<()> {
        if let (Some(a), Some(b)) = (self.c_start, self.c_end) {
            if !(a < b) {
                return Err(PathError::InvalidData(format!(
                    "c_start must be below c_end, got [{a}, {b}]"
                )));
            }
        }
        if let Some(a) = self.c_start {
            if !(a > 0.0 && a.is_finite()) {
                return Err(PathError::InvalidData(format!(
                    "c_start must be positive and finite, got {a}"
                )));
            }
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(PathError::InvalidData(format!(
                    "gamma must be positive and finite, got {g}"
                )));
            }
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(PathError::InvalidData(format!(
                "jitter must be nonnegative and finite, got {}",
                self.jitter
            )));
        }
        for &e in &self.e_values {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(PathError::InvalidData(format!(
                    "suboptimality levels must be nonnegative, got {e}"
                )));
            }
        }
        if self.e_values.is_empty() && self.mode != Mode::Exact {
            return Err(PathError::InvalidData(
                "suboptimal and both modes need at least one e value".into(),
            ));
        }
        if self.b_cap < 1 {
            return Err(PathError::InvalidData(
                "the breakpoint processing cap must be at least 1".into(),
            ));
        }
        if self.samples < 2 {
            return Err(PathError::InvalidData(format!(
                "need at least 2 grid samples, got {}",
                self.samples
            )));
        }
        Ok(())
    }

    /// Resolved scalar regularization interval for a dataset of `n` points.
    pub fn c_interval(&self, n: usize) -> (f64, f64) {
        let lo = self.c_start.unwrap_or(0.1 / n as f64);
        let hi = self.c_end.unwrap_or(1e6 / n as f64);
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        RunConfig {
            data: DataSource::Synthetic { n: 12, p: 2 },
            kernel: KernelChoice::Rbf,
            gamma: None,
            jitter: 1e-6,
            c_start: None,
            c_end: None,
            e_values: vec![0.001, 0.01, 0.1, 0.5],
            b_cap: 10,
            mode: Mode::Both,
            samples: 100,
            outdir: PathBuf::from("out"),
            seed: 42,
            gap_oracle: false,
        }
    }

    #[test]
    fn defaults_validate_and_resolve() {
        let cfg = base();
        cfg.validate().unwrap();
        let (lo, hi) = cfg.c_interval(50);
        assert!((lo - 0.002).abs() < 1e-15);
        assert!((hi - 20000.0).abs() < 1e-9);
    }

    #[test]
    fn inverted_interval_is_rejected() {
        let mut cfg = base();
        cfg.c_start = Some(5.0);
        cfg.c_end = Some(1.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn negative_relaxation_is_rejected() {
        let mut cfg = base();
        cfg.e_values = vec![0.1, -0.2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_cap_is_rejected() {
        let mut cfg = base();
        cfg.b_cap = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mode_and_kernel_parse() {
        assert_eq!("both".parse::<Mode>().unwrap(), Mode::Both);
        assert!("quick".parse::<Mode>().is_err());
        assert_eq!("rbf".parse::<KernelChoice>().unwrap(), KernelChoice::Rbf);
        assert!("poly".parse::<KernelChoice>().is_err());
    }
}
