use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leakqkd_core::{Method, SolverMode, SweptParameter, ThetaMode};

#[derive(Debug, Parser)]
#[command(name = "leakqkd", version, about = "Key rates for QKD with flawed and leaky sources")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate at a single loss value.
    Rate(RateArgs),
    /// Key rate over a range of losses.
    Sweep(SweepArgs),
    /// Phase-flaw magnitude at which both estimators give the same rate.
    Crossover(CrossoverArgs),
    /// Azuma deviation and count interval.
    Azuma(AzumaArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DeviceArgs {
    /// Phase-modulation flaw in radians.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Polarization mode-dependency magnitude in radians.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, value_enum)]
    pub theta_mode: Option<ThetaModeArg>,
    /// Mean photon number of the back-reflected Trojan-horse light.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ChannelArgs {
    /// Dark-count probability per detector per gate.
    #[arg(long = "pd")]
    pub p_d: Option<f64>,
    /// Error-correction inefficiency.
    #[arg(long)]
    pub f_ec: Option<f64>,
    /// Probability that Alice picks the Z basis.
    #[arg(long)]
    pub pza: Option<f64>,
    /// Probability that Bob picks the Z basis.
    #[arg(long)]
    pub pzb: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[command(flatten)]
    pub device: DeviceArgs,
    #[command(flatten)]
    pub channel: ChannelArgs,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// JSON file with default values; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Overall system loss in dB.
    #[arg(long)]
    pub loss: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Loss grid as start:stop:step in dB.
    #[arg(long, value_parser = parse_loss_range)]
    pub loss_range: Option<(f64, f64, f64)>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct CrossoverArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parameter varied across the grid; the other one stays fixed.
    #[arg(long, value_enum)]
    pub sweep: Option<SweptArg>,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Loss in dB at which the two rates are compared.
    #[arg(long)]
    pub compare_loss: Option<f64>,
    /// Search interval for the phase flaw as min:max.
    #[arg(long, value_parser = parse_delta_range)]
    pub delta_range: Option<(f64, f64)>,
    /// Bisection tolerance on the phase flaw.
    #[arg(long)]
    pub delta_tol: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct AzumaArgs {
    /// Number of trials.
    #[arg(long)]
    pub n: u64,
    /// Failure probability of the upper deviation.
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
    /// Failure probability of the lower deviation.
    #[arg(long)]
    pub eps_hat: Option<f64>,
    /// Observed count to turn into an interval.
    #[arg(long)]
    pub observed: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ThetaModeArg {
    Independent,
    Dependent,
}

impl From<ThetaModeArg> for ThetaMode {
    fn from(v: ThetaModeArg) -> Self {
        match v {
            ThetaModeArg::Independent => ThetaMode::Independent,
            ThetaModeArg::Dependent => ThetaMode::Dependent,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SolverArg {
    Paper,
    VertexLp,
}

impl From<SolverArg> for SolverMode {
    fn from(v: SolverArg) -> Self {
        match v {
            SolverArg::Paper => SolverMode::PaperFaithful,
            SolverArg::VertexLp => SolverMode::VertexLp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Lt,
    Lp,
    Both,
}

impl MethodArg {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Lt => vec![Method::Lt],
            MethodArg::Lp => vec![Method::Lp],
            MethodArg::Both => vec![Method::Lt, Method::Lp],
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweptArg {
    Mu,
    Theta,
}

impl From<SweptArg> for SweptParameter {
    fn from(v: SweptArg) -> Self {
        match v {
            SweptArg::Mu => SweptParameter::Mu,
            SweptArg::Theta => SweptParameter::Theta,
        }
    }
}

fn parse_floats(s: &str, n: usize, shape: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != n {
        return Err(format!("expected {shape}, got `{s}`"));
    }
    parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect()
}

fn parse_loss_range(s: &str) -> Result<(f64, f64, f64), String> {
    let v = parse_floats(s, 3, "start:stop:step")?;
    Ok((v[0], v[1], v[2]))
}

fn parse_delta_range(s: &str) -> Result<(f64, f64), String> {
    let v = parse_floats(s, 2, "min:max")?;
    Ok((v[0], v[1]))
}
