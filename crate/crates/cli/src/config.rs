//! JSON config files. Field names mirror the core sweep and crossover
//! configs; every field is optional and command-line flags win.

use std::path::Path;

use leakqkd_core::{DeviceModel, Method, ProtocolProbabilities, SolverMode, SweptParameter, ThetaMode};
use serde::Deserialize;

use crate::args::{ChannelArgs, CommonArgs, DeviceArgs};
use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileDevice {
    pub delta: Option<f64>,
    pub theta_hat: Option<f64>,
    pub theta_mode: Option<ThetaMode>,
    pub mu: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileProbs {
    pub p_za: Option<f64>,
    pub p_zb: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub device: FileDevice,
    pub p_d: Option<f64>,
    pub f_ec: Option<f64>,
    #[serde(default)]
    pub probs: FileProbs,
    pub solver: Option<SolverMode>,
    pub loss_db: Option<f64>,
    pub loss_start: Option<f64>,
    pub loss_stop: Option<f64>,
    pub loss_step: Option<f64>,
    pub methods: Option<Vec<Method>>,
    pub swept: Option<SweptParameter>,
    pub grid: Option<Vec<f64>>,
    pub compare_loss_db: Option<f64>,
    pub delta_min: Option<f64>,
    pub delta_max: Option<f64>,
    pub delta_tol: Option<f64>,
    pub scan_points: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn device(&self, flags: &DeviceArgs) -> Result<DeviceModel, CliError> {
        let d = DeviceModel::new(
            flags.delta.or(self.device.delta).unwrap_or(0.0),
            flags.theta.or(self.device.theta_hat).unwrap_or(0.0),
            flags.theta_mode.map(Into::into).or(self.device.theta_mode).unwrap_or_default(),
            flags.mu.or(self.device.mu).unwrap_or(0.0),
        )?;
        Ok(d)
    }

    pub fn probs(&self, flags: &ChannelArgs) -> Result<ProtocolProbabilities, CliError> {
        Ok(ProtocolProbabilities::new(
            flags.pza.or(self.probs.p_za).unwrap_or(0.5),
            flags.pzb.or(self.probs.p_zb).unwrap_or(0.5),
        )?)
    }

    pub fn p_d(&self, flags: &ChannelArgs) -> f64 {
        flags.p_d.or(self.p_d).unwrap_or(1e-7)
    }

    pub fn f_ec(&self, flags: &ChannelArgs) -> f64 {
        flags.f_ec.or(self.f_ec).unwrap_or(1.16)
    }

    pub fn solver(&self, common: &CommonArgs) -> SolverMode {
        common.solver.map(Into::into).or(self.solver).unwrap_or_default()
    }
}
