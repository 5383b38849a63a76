//! Command-line surface. Every subcommand's arguments derive `Serialize` /
//! `Deserialize` so a run's exact configuration can be snapshotted into its
//! manifest and replayed later by `rerun`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "icox",
    version,
    about = "Sparse neural Cox proportional-hazards models for interval-censored survival data",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a synthetic interval-censored study (data CSV + truth JSON).
    Simulate(SimulateArgs),
    /// Fit one model at a fixed penalty and persist it as JSON.
    Fit(FitArgs),
    /// Fit a warm-started penalty path, select by validation IBS, and write
    /// the path CSV plus the selected model.
    Path(PathArgs),
    /// Evaluate survival curves of a persisted model on a covariate CSV.
    Predict(PredictArgs),
    /// Replicate a simulation benchmark and aggregate IBS, L2, R2, TP, TN.
    Benchmark(BenchmarkArgs),
    /// Replay a recorded run from its manifest and verify that every
    /// artifact reproduces byte-identically.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ModelArg {
    M1,
    M2,
    Null,
}

impl From<ModelArg> for icox::simgen::RiskModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::M1 => icox::simgen::RiskModel::M1,
            ModelArg::M2 => icox::simgen::RiskModel::M2,
            ModelArg::Null => icox::simgen::RiskModel::Null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ActivationArg {
    Relu,
    Tanh,
}

impl From<ActivationArg> for icox::risknet::Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => icox::risknet::Activation::Relu,
            ActivationArg::Tanh => icox::risknet::Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum WeightingArg {
    /// Integrand t * BS(t) / t2 over the window.
    Paper,
    /// Plain average of BS over the window.
    Uniform,
}

impl From<WeightingArg> for icox::metrics::Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Paper => icox::metrics::Weighting::Paper,
            WeightingArg::Uniform => icox::metrics::Weighting::Uniform,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Risk model generating the event times.
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Number of subjects.
    #[arg(long)]
    pub n: usize,
    /// Covariate dimension.
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Uniform inspection visits per subject.
    #[arg(long, default_value_t = 2)]
    pub inspections: usize,
    /// Inspection horizon; estimated from the event-time distribution when
    /// omitted.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Gompertz baseline shape (hazard scale * exp(shape * t)).
    #[arg(long, default_value_t = 5.0)]
    pub gompertz_shape: f64,
    /// Gompertz baseline scale.
    #[arg(long, default_value_t = 1.0)]
    pub gompertz_scale: f64,
    /// Output directory for data.csv, truth.json and manifest.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Input data CSV (columns u, v, delta1, delta2, z1..zd).
    #[arg(long)]
    pub data: PathBuf,
    /// L1 penalty on the linear (skip) coefficients.
    #[arg(long)]
    pub lambda: f64,
    /// Hierarchy multiplier M: first-layer weights obey |W_ij| <= M |theta_j|.
    #[arg(long, default_value_t = 10.0)]
    pub hierarchy_m: f64,
    /// Gradient/proximal epochs per outer iteration.
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Outer iterations; each ends with one baseline profile update.
    #[arg(long, default_value_t = 20)]
    pub outer_iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Seed for network initialization (and any internal splits).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Explicit covariate column names, in order; defaults to the contiguous
    /// z1..zd columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Extra input columns to skip instead of rejecting.
    #[arg(long, value_delimiter = ',')]
    pub ignore_columns: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PathArgs {
    /// Input data CSV (columns u, v, delta1, delta2, z1..zd).
    #[arg(long)]
    pub data: PathBuf,
    /// Geometric step between consecutive penalties.
    #[arg(long, default_value_t = 1.05)]
    pub multiplier: f64,
    /// Starting penalty as a fraction of the largest initial skip gradient.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_start_factor: f64,
    /// Fraction of samples held out for validation scoring.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Hard cap on the number of path points.
    #[arg(long, default_value_t = 200)]
    pub max_len: usize,
    /// Evaluation times for the validation Brier curve.
    #[arg(long, default_value_t = 100)]
    pub brier_grid: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Paper)]
    pub weighting: WeightingArg,
    #[arg(long, default_value_t = 10.0)]
    pub hierarchy_m: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub outer_iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub ignore_columns: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Persisted model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Covariate CSV; structural columns (u, v, delta1, delta2) are ignored
    /// so a simulated data file works directly. An optional `id` column
    /// labels the output rows.
    #[arg(long)]
    pub data: PathBuf,
    /// Explicit evaluation times, comma separated; overrides the grid flags.
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub t_start: f64,
    /// Grid end; defaults to the model's last baseline jump time.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Number of grid points between t-start and t-end.
    #[arg(long, default_value_t = 50)]
    pub t_points: usize,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub ignore_columns: Vec<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Sample sizes, comma separated (one benchmark block per value).
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Independent replicates per sample size.
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    /// Base seed; replicate j of the i-th sample size uses
    /// seed + i * replicates + j.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub inspections: usize,
    /// Geometric penalty step; the default is the calibrated benchmark
    /// setting (coarser than the `path` command's exploratory default).
    #[arg(long, default_value_t = 1.25)]
    pub multiplier: f64,
    #[arg(long, default_value_t = 200)]
    pub max_len: usize,
    #[arg(long, default_value_t = 100)]
    pub brier_grid: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Paper)]
    pub weighting: WeightingArg,
    #[arg(long, default_value_t = 10.0)]
    pub hierarchy_m: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub outer_iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub learning_rate: f64,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    pub activation: ActivationArg,
    /// Window start for the baseline L2 recovery error.
    #[arg(long, default_value_t = 0.05)]
    pub l2_lo: f64,
    /// Window end for the baseline L2 recovery error.
    #[arg(long, default_value_t = 0.5)]
    pub l2_hi: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    /// manifest.json of a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fresh directory for the replayed artifacts.
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Path(_) => "path",
            Command::Predict(_) => "predict",
            Command::Benchmark(_) => "benchmark",
            Command::Rerun(_) => "rerun",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate(a) => Some(a.seed),
            Command::Fit(a) => Some(a.seed),
            Command::Path(a) => Some(a.seed),
            Command::Predict(_) => None,
            Command::Benchmark(a) => Some(a.seed),
            Command::Rerun(_) => None,
        }
    }

    pub fn out_dir(&self) -> &Path {
        match self {
            Command::Simulate(a) => &a.out_dir,
            Command::Fit(a) => &a.out_dir,
            Command::Path(a) => &a.out_dir,
            Command::Predict(a) => &a.out_dir,
            Command::Benchmark(a) => &a.out_dir,
            Command::Rerun(a) => &a.out_dir,
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Simulate(a) => a.out_dir = dir,
            Command::Fit(a) => a.out_dir = dir,
            Command::Path(a) => a.out_dir = dir,
            Command::Predict(a) => a.out_dir = dir,
            Command::Benchmark(a) => a.out_dir = dir,
            Command::Rerun(a) => a.out_dir = dir,
        }
    }

    /// The configuration snapshot stored in the manifest.
    pub fn args_value(&self) -> Result<serde_json::Value, CliError> {
        let v = match self {
            Command::Simulate(a) => serde_json::to_value(a),
            Command::Fit(a) => serde_json::to_value(a),
            Command::Path(a) => serde_json::to_value(a),
            Command::Predict(a) => serde_json::to_value(a),
            Command::Benchmark(a) => serde_json::to_value(a),
            Command::Rerun(a) => serde_json::to_value(a),
        };
        v.map_err(|e| CliError::Data(format!("cannot snapshot arguments: {e}")))
    }

    /// Rebuild a command from a manifest's (command, args) pair.
    pub fn from_manifest(name: &str, args: serde_json::Value) -> Result<Self, CliError> {
        let bad = |e: serde_json::Error| {
            CliError::Data(format!("manifest args do not match command '{name}': {e}"))
        };
        Ok(match name {
            "simulate" => Command::Simulate(serde_json::from_value(args).map_err(bad)?),
            "fit" => Command::Fit(serde_json::from_value(args).map_err(bad)?),
            "path" => Command::Path(serde_json::from_value(args).map_err(bad)?),
            "predict" => Command::Predict(serde_json::from_value(args).map_err(bad)?),
            "benchmark" => Command::Benchmark(serde_json::from_value(args).map_err(bad)?),
            "rerun" => {
                return Err(CliError::Data(
                    "a rerun manifest cannot be replayed; point --manifest at the original run"
                        .into(),
                ))
            }
            other => return Err(CliError::Data(format!("unknown command '{other}' in manifest"))),
        })
    }
}
