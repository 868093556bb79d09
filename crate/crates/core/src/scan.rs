//! Loss sweeps and LT/LP crossover search.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{system_efficiency, ChannelModel, KeyRatePoint, Method, ProtocolProbabilities};
use crate::error::{Error, Result};
use crate::lp::key_rate_lp;
use crate::lt::{key_rate_lt, SolverMode};
use crate::qstates::DeviceModel;

fn default_p_d() -> f64 {
    1e-7
}

fn default_f_ec() -> f64 {
    1.16
}

fn default_methods() -> Vec<Method> {
    vec![Method::Lt, Method::Lp]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub device: DeviceModel,
    #[serde(default = "default_p_d")]
    pub p_d: f64,
    #[serde(default = "default_f_ec")]
    pub f_ec: f64,
    #[serde(default)]
    pub probs: ProtocolProbabilities,
    pub loss_start: f64,
    pub loss_stop: f64,
    pub loss_step: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub solver: SolverMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            device: DeviceModel::ideal(),
            p_d: default_p_d(),
            f_ec: default_f_ec(),
            probs: ProtocolProbabilities::default(),
            loss_start: 0.0,
            loss_stop: 70.0,
            loss_step: 0.5,
            methods: default_methods(),
            solver: SolverMode::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.probs.validate()?;
        ChannelModel::new(self.loss_start.max(0.0), self.p_d, self.f_ec)?;
        if !(self.loss_start.is_finite() && self.loss_stop.is_finite() && self.loss_start >= 0.0) {
            return Err(Error::invalid("loss range must be finite and start at >= 0 dB"));
        }
        if self.loss_start > self.loss_stop {
            return Err(Error::invalid(format!(
                "loss range start {} exceeds stop {}",
                self.loss_start, self.loss_stop
            )));
        }
        if !(self.loss_step > 0.0) {
            return Err(Error::invalid(format!("loss step must be > 0, got {}", self.loss_step)));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        let n = ((self.loss_stop - self.loss_start) / self.loss_step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.loss_start + i as f64 * self.loss_step).collect()
    }
}

/// One sweep row; a failed estimate keeps its place with the error attached.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub loss_db: f64,
    pub eta: f64,
    pub method: Method,
    pub result: Result<KeyRatePoint>,
}

pub fn key_rate(
    method: Method,
    device: &DeviceModel,
    channel: &ChannelModel,
    probs: &ProtocolProbabilities,
    solver: SolverMode,
) -> Result<KeyRatePoint> {
    match method {
        Method::Lt => key_rate_lt(device, channel, probs, solver),
        Method::Lp => key_rate_lp(device, channel, probs),
    }
}

fn run_with_jobs<T: Send, F: FnOnce() -> T + Send>(jobs: usize, f: F) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Evaluates every (loss, method) pair, rows ordered by loss then method in
/// the configured order. `jobs = 0` uses the global rayon pool, `jobs = 1`
/// runs on the calling thread.
pub fn run_sweep(config: &SweepConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let tasks: Vec<(f64, Method)> = config
        .losses()
        .into_iter()
        .flat_map(|l| config.methods.iter().map(move |m| (l, *m)))
        .collect();
    let eval = |&(loss_db, method): &(f64, Method)| {
        let channel = ChannelModel { loss_db, p_d: config.p_d, f_ec: config.f_ec };
        SweepRow {
            loss_db,
            eta: system_efficiency(&channel),
            method,
            result: key_rate(method, &config.device, &channel, &config.probs, config.solver),
        }
    };
    if jobs == 1 {
        return Ok(tasks.iter().map(eval).collect());
    }
    run_with_jobs(jobs, || tasks.par_iter().map(eval).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweptParameter {
    Mu,
    Theta,
}

impl fmt::Display for SweptParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweptParameter::Mu => "mu",
            SweptParameter::Theta => "theta",
        })
    }
}

impl FromStr for SweptParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mu" => Ok(SweptParameter::Mu),
            "theta" => Ok(SweptParameter::Theta),
            other => Err(Error::invalid(format!("unknown swept parameter `{other}`"))),
        }
    }
}

fn default_compare_loss() -> f64 {
    20.0
}

fn default_delta_max() -> f64 {
    0.5
}

fn default_delta_tol() -> f64 {
    1e-9
}

fn default_scan_points() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverConfig {
    /// Fixed device parameters; `delta` is ignored and the swept one overridden.
    #[serde(default)]
    pub device: DeviceModel,
    pub swept: SweptParameter,
    pub grid: Vec<f64>,
    #[serde(default = "default_compare_loss")]
    pub compare_loss_db: f64,
    #[serde(default = "default_p_d")]
    pub p_d: f64,
    #[serde(default = "default_f_ec")]
    pub f_ec: f64,
    #[serde(default)]
    pub probs: ProtocolProbabilities,
    #[serde(default)]
    pub solver: SolverMode,
    #[serde(default)]
    pub delta_min: f64,
    #[serde(default = "default_delta_max")]
    pub delta_max: f64,
    /// Bisection stops once the bracket on delta is narrower than this.
    #[serde(default = "default_delta_tol")]
    pub delta_tol: f64,
    /// Coarse grid used to locate the first sign change.
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
}

impl CrossoverConfig {
    pub fn new(device: DeviceModel, swept: SweptParameter, grid: Vec<f64>) -> Self {
        CrossoverConfig {
            device,
            swept,
            grid,
            compare_loss_db: default_compare_loss(),
            p_d: default_p_d(),
            f_ec: default_f_ec(),
            probs: ProtocolProbabilities::default(),
            solver: SolverMode::default(),
            delta_min: 0.0,
            delta_max: default_delta_max(),
            delta_tol: default_delta_tol(),
            scan_points: default_scan_points(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("crossover grid is empty"));
        }
        if !(self.delta_tol > 0.0) {
            return Err(Error::invalid(format!("delta tolerance must be > 0, got {}", self.delta_tol)));
        }
        if !(self.delta_min >= 0.0 && self.delta_min < self.delta_max) {
            return Err(Error::invalid("delta search interval must satisfy 0 <= min < max"));
        }
        if self.scan_points < 2 {
            return Err(Error::invalid("at least two scan points are required"));
        }
        self.probs.validate()?;
        ChannelModel::new(self.compare_loss_db, self.p_d, self.f_ec)?;
        for &v in &self.grid {
            self.device_at(v, self.delta_min)?;
            self.device_at(v, self.delta_max)?;
        }
        Ok(())
    }

    fn device_at(&self, swept_value: f64, delta: f64) -> Result<DeviceModel> {
        let mut d = self.device.with_delta(delta);
        match self.swept {
            SweptParameter::Mu => d.mu = swept_value,
            SweptParameter::Theta => d.theta_hat = swept_value,
        }
        d.validate()?;
        Ok(d)
    }

    fn channel(&self) -> ChannelModel {
        ChannelModel { loss_db: self.compare_loss_db, p_d: self.p_d, f_ec: self.f_ec }
    }

    /// Clamped `R_LT - R_LP` at the comparison loss.
    pub fn rate_gap(&self, swept_value: f64, delta: f64) -> Result<(f64, f64)> {
        let d = self.device_at(swept_value, delta)?;
        let c = self.channel();
        let lt = key_rate_lt(&d, &c, &self.probs, self.solver)?.rate;
        let lp = key_rate_lp(&d, &c, &self.probs)?.rate;
        Ok((lt, lp))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CrossoverOutcome {
    Found { delta_star: f64, rate_lt: f64, rate_lp: f64 },
    /// No sign change on the search interval; `dominant` is the method with
    /// the higher rate throughout, `None` when both rates vanish everywhere.
    NoCrossover { dominant: Option<Method> },
    Failed(Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossoverPoint {
    pub swept_value: f64,
    pub outcome: CrossoverOutcome,
}

fn crossover_at(config: &CrossoverConfig, v: f64) -> Result<CrossoverOutcome> {
    let n = config.scan_points;
    let step = (config.delta_max - config.delta_min) / (n - 1) as f64;
    let gap = |delta: f64| config.rate_gap(v, delta).map(|(lt, lp)| (lt - lp, lt, lp));

    let mut prev = (config.delta_min, gap(config.delta_min)?);
    let (mut lt_wins, mut lp_wins) = (false, false);
    for i in 0..n {
        let delta = if i + 1 == n { config.delta_max } else { config.delta_min + i as f64 * step };
        let cur = if i == 0 { prev.1 } else { gap(delta)? };
        lt_wins |= cur.0 > 0.0;
        lp_wins |= cur.0 < 0.0;
        if cur.0 == 0.0 && cur.1 > 0.0 {
            return Ok(CrossoverOutcome::Found { delta_star: delta, rate_lt: cur.1, rate_lp: cur.2 });
        }
        if i > 0 && prev.1 .0 * cur.0 < 0.0 {
            let (mut lo, mut hi) = (prev.0, delta);
            let lo_sign = prev.1 .0.signum();
            while hi - lo > config.delta_tol {
                let mid = 0.5 * (lo + hi);
                let g = gap(mid)?;
                if g.0 == 0.0 {
                    return Ok(CrossoverOutcome::Found { delta_star: mid, rate_lt: g.1, rate_lp: g.2 });
                }
                if g.0.signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mid = 0.5 * (lo + hi);
            let g = gap(mid)?;
            return Ok(CrossoverOutcome::Found { delta_star: mid, rate_lt: g.1, rate_lp: g.2 });
        }
        prev = (delta, cur);
    }
    let dominant = match (lt_wins, lp_wins) {
        (true, false) => Some(Method::Lt),
        (false, true) => Some(Method::Lp),
        _ => None,
    };
    Ok(CrossoverOutcome::NoCrossover { dominant })
}

/// For each grid value, the flaw magnitude delta* at which both methods give
/// the same clamped key rate at the comparison loss (first crossing found).
pub fn find_crossover(config: &CrossoverConfig, jobs: usize) -> Result<Vec<CrossoverPoint>> {
    config.validate()?;
    let eval = |&v: &f64| CrossoverPoint {
        swept_value: v,
        outcome: crossover_at(config, v).unwrap_or_else(CrossoverOutcome::Failed),
    };
    if jobs == 1 {
        return Ok(config.grid.iter().map(eval).collect());
    }
    run_with_jobs(jobs, || config.grid.par_iter().map(eval).collect())
}
