mod args;
mod config;
mod output;

use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use leakqkd_core::{
    azuma_deviation, count_interval, find_crossover, run_sweep, AzumaBudget, CrossoverConfig, SweepConfig,
    SweptParameter,
};
use thiserror::Error;

use args::{AzumaArgs, Cli, Command, CrossoverArgs, RateArgs, SweepArgs};
use config::FileConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] leakqkd_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{failed} of {total} rows failed")]
    RowsFailed { failed: usize, total: usize },
    #[error("output: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) | CliError::Config(_) => 2,
            CliError::RowsFailed { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = match cli.command {
        Command::Rate(a) => rate(a, &mut out),
        Command::Sweep(a) => sweep(a, &mut out),
        Command::Crossover(a) => crossover(a, &mut out),
        Command::Azuma(a) => azuma(a, &mut out),
    };
    let result = result.and_then(|()| out.flush().map_err(CliError::from));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn emit_rows(out: &mut impl Write, rows: &[leakqkd_core::SweepRow], format: args::Format) -> Result<(), CliError> {
    output::write_rows(out, rows, format)?;
    let failed: Vec<_> = rows.iter().filter_map(|r| r.result.as_ref().err().map(|e| (r, e))).collect();
    for (r, e) in &failed {
        eprintln!("warning: {} at {} dB: {e}", r.method, r.loss_db);
    }
    if let Some((_, e)) = failed.first() {
        if failed.len() == rows.len() && !e.is_numerical() {
            return Err(CliError::Core((*e).clone()));
        }
        return Err(CliError::RowsFailed { failed: failed.len(), total: rows.len() });
    }
    Ok(())
}

fn sweep_config(file: &FileConfig, a: &args::CommonArgs, method: Option<args::MethodArg>) -> Result<SweepConfig, CliError> {
    Ok(SweepConfig {
        device: file.device(&a.device)?,
        p_d: file.p_d(&a.channel),
        f_ec: file.f_ec(&a.channel),
        probs: file.probs(&a.channel)?,
        methods: method
            .map(|m| m.methods())
            .or_else(|| file.methods.clone())
            .unwrap_or_else(|| args::MethodArg::Both.methods()),
        solver: file.solver(a),
        ..SweepConfig::default()
    })
}

fn rate(a: RateArgs, out: &mut impl Write) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let loss = a.loss.or(file.loss_db).unwrap_or(0.0);
    let config = SweepConfig {
        loss_start: loss,
        loss_stop: loss,
        loss_step: 1.0,
        ..sweep_config(&file, &a.common, a.method)?
    };
    let rows = run_sweep(&config, 1)?;
    emit_rows(out, &rows, a.common.format)
}

fn sweep(a: SweepArgs, out: &mut impl Write) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let defaults = SweepConfig::default();
    let (start, stop, step) = a.loss_range.unwrap_or((
        file.loss_start.unwrap_or(defaults.loss_start),
        file.loss_stop.unwrap_or(defaults.loss_stop),
        file.loss_step.unwrap_or(defaults.loss_step),
    ));
    let config = SweepConfig {
        loss_start: start,
        loss_stop: stop,
        loss_step: step,
        ..sweep_config(&file, &a.common, a.method)?
    };
    let rows = run_sweep(&config, a.jobs)?;
    emit_rows(out, &rows, a.common.format)
}

fn crossover(a: CrossoverArgs, out: &mut impl Write) -> Result<(), CliError> {
    let file = FileConfig::load(a.common.config.as_deref())?;
    let swept = a.sweep.map(SweptParameter::from).or(file.swept).unwrap_or(SweptParameter::Mu);
    let grid = a
        .grid
        .clone()
        .or_else(|| file.grid.clone())
        .ok_or_else(|| CliError::Config("a crossover grid is required (--grid or `grid`)".into()))?;
    let mut config = CrossoverConfig::new(file.device(&a.common.device)?, swept, grid);
    config.p_d = file.p_d(&a.common.channel);
    config.f_ec = file.f_ec(&a.common.channel);
    config.probs = file.probs(&a.common.channel)?;
    config.solver = file.solver(&a.common);
    config.compare_loss_db = a.compare_loss.or(file.compare_loss_db).unwrap_or(config.compare_loss_db);
    let (lo, hi) = a.delta_range.unwrap_or((
        file.delta_min.unwrap_or(config.delta_min),
        file.delta_max.unwrap_or(config.delta_max),
    ));
    config.delta_min = lo;
    config.delta_max = hi;
    config.delta_tol = a.delta_tol.or(file.delta_tol).unwrap_or(config.delta_tol);
    config.scan_points = file.scan_points.unwrap_or(config.scan_points);

    let points = find_crossover(&config, a.jobs)?;
    output::write_crossover(out, &points, swept, config.compare_loss_db, a.common.format)?;
    let failed = points
        .iter()
        .filter(|p| matches!(p.outcome, leakqkd_core::CrossoverOutcome::Failed(_)))
        .count();
    if failed > 0 {
        return Err(CliError::RowsFailed { failed, total: points.len() });
    }
    Ok(())
}

fn azuma(a: AzumaArgs, out: &mut impl Write) -> Result<(), CliError> {
    let eps_hat = a.eps_hat.unwrap_or(a.eps);
    let budget = AzumaBudget::new(a.n, a.eps, eps_hat)?;
    let n = a.n as f64;
    let interval = match a.observed {
        Some(obs) => {
            let (lo, hi) = count_interval(obs, &budget)?;
            Some((obs, lo, hi))
        }
        None => None,
    };
    let report = output::AzumaReport {
        n: a.n,
        eps: a.eps,
        eps_hat,
        f_eps: azuma_deviation(n, a.eps)?,
        f_eps_hat: azuma_deviation(n, eps_hat)?,
        interval,
    };
    output::write_azuma(out, &report, a.format)?;
    Ok(())
}
