use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gdp_core::accountant::{AccountantQuery, Duration, Sampling, Target};

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "gdp", version, about = "Gaussian differential privacy accounting for noisy SGD")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report μ and (ε, δ) under the CLT and moments accountants.
    Account(AccountArgs),
    /// Find the noise multiplier that meets a target (ε, δ).
    Calibrate(CalibrateArgs),
    /// Write trade-off curves as CSV.
    TradeoffCsv(CsvArgs),
    /// Check the CLT against numerical composition and the gap bound.
    Verify(VerifyArgs),
    /// Train logistic regression privately and report the guarantee.
    TrainDemo(TrainArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    /// Dataset size; use with --batch.
    #[arg(long)]
    pub n: Option<u64>,
    /// Expected batch size; p = batch/n.
    #[arg(long)]
    pub batch: Option<u64>,
    /// Sampling probability.
    #[arg(long, conflicts_with_all = ["n", "batch"])]
    pub p: Option<f64>,
}

impl SamplingArgs {
    pub fn sampling(&self) -> Result<Sampling> {
        match (self.p, self.n, self.batch) {
            (Some(p), None, None) => Ok(Sampling::Rate { p }),
            (None, Some(n), Some(batch)) => Ok(Sampling::Batch { n, batch }),
            _ => Err(CliError::Usage("give either --p or both --n and --batch".into())),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DurationArgs {
    /// Passes over the data; T = round(epochs/p).
    #[arg(long)]
    pub epochs: Option<f64>,
    /// Number of steps.
    #[arg(long = "T", alias = "steps", conflicts_with = "epochs")]
    pub steps: Option<u64>,
}

impl DurationArgs {
    pub fn duration(&self) -> Result<Duration> {
        match (self.epochs, self.steps) {
            (Some(epochs), None) => Ok(Duration::Epochs { epochs }),
            (None, Some(steps)) => Ok(Duration::Steps { steps }),
            _ => Err(CliError::Usage("give either --epochs or --T".into())),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub duration: DurationArgs,
    /// Noise multiplier.
    #[arg(long)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, conflicts_with = "delta")]
    pub eps: Option<f64>,
}

impl TargetArgs {
    pub fn target(&self) -> Result<Target> {
        match (self.delta, self.eps) {
            (Some(delta), None) => Ok(Target::Delta { delta }),
            (None, Some(eps)) => Ok(Target::Eps { eps }),
            _ => Err(CliError::Usage("give either --delta or --eps".into())),
        }
    }
}

impl RunArgs {
    pub fn query(&self, target: Target) -> Result<AccountantQuery> {
        Ok(AccountantQuery::new(
            self.sigma,
            self.sampling.sampling()?,
            self.duration.duration()?,
            target,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LambdaModeArg {
    Grid,
    Continuous,
}

impl From<LambdaModeArg> for gdp_core::moments::LambdaMode {
    fn from(m: LambdaModeArg) -> Self {
        match m {
            LambdaModeArg::Grid => Self::Grid,
            LambdaModeArg::Continuous => Self::Continuous,
        }
    }
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Optimization over Rényi orders in the moments accountant.
    #[arg(long, value_enum, default_value = "continuous")]
    pub lambda_mode: LambdaModeArg,
    /// Also run numerical composition of the privacy loss distribution.
    #[arg(long)]
    pub oracle: bool,
    /// Loss grid spacing for --oracle.
    #[arg(long, default_value_t = gdp_core::pld::DEFAULT_SPACING)]
    pub spacing: f64,
    /// Write the report as JSON.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub duration: DurationArgs,
    #[arg(long)]
    pub eps: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveKind {
    Clt,
    MaPoint,
    MaEnvelope,
    Oracle,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::Clt => "clt",
            CurveKind::MaPoint => "ma-point",
            CurveKind::MaEnvelope => "ma-envelope",
            CurveKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Args)]
pub struct CsvArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// δ of the moments-accountant point curve.
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    /// Curves to emit.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "clt,ma-point")]
    pub curve: Vec<CurveKind>,
    #[arg(long, default_value_t = gdp_core::pld::DEFAULT_SPACING)]
    pub spacing: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckKind {
    /// Numerical composition against the CLT at p = ν/√T.
    CltOracle,
    /// Numerical composition of the unsubsampled Gaussian mechanism.
    Gaussian,
    /// Moments-accountant gap at large T.
    Gap,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Checks to run; all by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub check: Vec<CheckKind>,
    #[arg(long, default_value_t = 1.1)]
    pub sigma: f64,
    /// Steps of the CLT and Gaussian checks.
    #[arg(long = "T", default_value_t = 234)]
    pub steps: u64,
    /// p√T of the CLT check.
    #[arg(long, default_value_t = 0.5028)]
    pub nu: f64,
    /// Largest allowed sup-norm gap of the CLT check.
    #[arg(long, default_value_t = 0.01)]
    pub tolerance: f64,
    #[arg(long, default_value_t = gdp_core::pld::DEFAULT_SPACING)]
    pub spacing: f64,
    /// Steps of the gap check.
    #[arg(long, default_value_t = 100_000)]
    pub gap_steps: u64,
    /// ε values of the gap check.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    pub gap_eps: Vec<f64>,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Delimited numeric file, label in the last column; synthetic data
    /// when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Size of the synthetic dataset.
    #[arg(long, default_value_t = 200)]
    pub examples: usize,
    /// Feature count of the synthetic dataset, intercept included.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "sgd")]
    pub algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 1.1)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub p: f64,
    #[arg(long = "T", default_value_t = 400)]
    pub steps: u64,
    #[arg(long, default_value_t = 0.5)]
    pub eta: f64,
    /// Per-example gradient norm bound.
    #[arg(long, default_value_t = 1.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    /// Print the training loss every this many steps.
    #[arg(long, default_value_t = 50)]
    pub log_every: u64,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}
