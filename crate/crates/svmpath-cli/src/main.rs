//! `svmpath` binary: parse flags, build a [`RunConfig`], run, and map
//! errors to the documented exit codes (1 = configuration or data error,
//! 2 = numerical failure).

use std::path::PathBuf;

use clap::Parser;
use svmpath_cli::{exit_code_for, run, DataSource, KernelChoice, Mode, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "svmpath",
    about = "Trace exact or relaxed solution paths of the two-class SVM dual over a regularization interval and write CSV reports"
)]
struct Cli {
    /// Input data file with sparse `label index:value` rows; a synthetic
    /// two-cluster dataset is generated when omitted.
    #[arg(long)]
    data: Option<PathBuf>,

    /// Synthetic dataset size (even, at least 4).
    #[arg(long, default_value_t = 60)]
    synthetic_n: usize,

    /// Synthetic dataset feature dimension.
    #[arg(long, default_value_t = 2)]
    synthetic_p: usize,

    /// Kernel: rbf or linear.
    #[arg(long, default_value = "rbf")]
    kernel: KernelChoice,

    /// RBF width; defaults to 1/p.
    #[arg(long)]
    gamma: Option<f64>,

    /// Diagonal stabilizer added to Q.
    #[arg(long, default_value_t = 1e-6)]
    jitter: f64,

    /// Scalar lower end of the regularization interval; defaults to 0.1/n.
    #[arg(long)]
    c_start: Option<f64>,

    /// Scalar upper end of the regularization interval; defaults to 1e6/n.
    #[arg(long)]
    c_end: Option<f64>,

    /// Suboptimality levels for relaxed traces, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.001, 0.01, 0.1, 0.5])]
    e: Vec<f64>,

    /// Breakpoint processing cap (at least 1).
    #[arg(long, default_value_t = 10)]
    b_cap: usize,

    /// Which traces to run: exact, suboptimal, or both.
    #[arg(long, default_value = "both")]
    mode: Mode,

    /// Number of reporting grid samples.
    #[arg(long, default_value_t = 100)]
    samples: usize,

    /// Output directory for the CSV reports.
    #[arg(long, default_value = "svmpath-out")]
    outdir: PathBuf,

    /// Seed for synthetic data generation.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Solve a reference optimum at every breakpoint and fill the
    /// gap-bound columns of certificates.csv (slow on long paths).
    #[arg(long, default_value_t = false)]
    gap_oracle: bool,
}

impl Cli {
    fn into_config(self) -> RunConfig {
        let data = match self.data {
            Some(path) => DataSource::File(path),
            None => DataSource::Synthetic {
                n: self.synthetic_n,
                p: self.synthetic_p,
            },
        };
        RunConfig {
            data,
            kernel: self.kernel,
            gamma: self.gamma,
            jitter: self.jitter,
            c_start: self.c_start,
            c_end: self.c_end,
            e_values: self.e,
            b_cap: self.b_cap,
            mode: self.mode,
            samples: self.samples,
            outdir: self.outdir,
            seed: self.seed,
            gap_oracle: self.gap_oracle,
        }
    }
}

fn main() {
    let cfg = Cli::parse().into_config();
    match run(&cfg) {
        Ok(arts) => {
            println!(
                "wrote {} files to {}",
                arts.files.len(),
                cfg.outdir.display()
            );
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code_for(&e));
        }
    }
}
