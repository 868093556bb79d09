//! Quantum-coin phase-error bound for basis-dependent sources.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use crate::channel::{assemble_rate, bit_error_rate, detection_probability, ChannelModel, KeyRatePoint, Method, ProtocolProbabilities};
use crate::error::{Error, Result};
use crate::qstates::{full_overlap, DeviceModel, Setting};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoinImbalance {
    pub delta_coin: f64,
    /// Imbalance after post-selection on detection, capped at 1/2.
    pub delta_prime: f64,
}

/// Real part of the overlap between the Z- and X-basis source purifications,
/// with the global phase of the `1X` state chosen to maximize it.
pub fn basis_overlap(device: &DeviceModel) -> f64 {
    let o = |a, b| full_overlap(a, b, device);
    let (z0, z1, x0, x1) = (Setting::Z0, Setting::Z1, Setting::X0, Setting::X1);
    let common = o(z0, x0) + o(z1, x0);
    let flip = o(z0, x1) - o(z1, x1);
    (common + flip.abs()) / (2.0 * SQRT_2)
}

/// Basis dependence of the source.
pub fn coin_imbalance(device: &DeviceModel) -> Result<f64> {
    device.validate()?;
    Ok((0.5 * (1.0 - basis_overlap(device))).clamp(0.0, 0.5))
}

/// Imbalance enhanced by loss: Eve can discard the rounds that look balanced.
pub fn delta_prime(delta_coin: f64, channel: &ChannelModel) -> Result<f64> {
    if !(0.0..=0.5).contains(&delta_coin) {
        return Err(Error::invalid(format!("coin imbalance must lie in [0, 1/2], got {delta_coin}")));
    }
    channel.validate()?;
    let y_det = detection_probability(channel);
    if !(y_det > 0.0) {
        return Err(Error::NoDetection);
    }
    Ok((delta_coin / y_det.min(1.0)).min(0.5))
}

pub fn coin(device: &DeviceModel, channel: &ChannelModel) -> Result<CoinImbalance> {
    let delta_coin = coin_imbalance(device)?;
    Ok(CoinImbalance { delta_coin, delta_prime: delta_prime(delta_coin, channel)? })
}

pub fn lp_phase_error_bound(e_z: f64, delta_prime: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&e_z) {
        return Err(Error::invalid(format!("bit error rate must lie in [0, 1/2], got {e_z}")));
    }
    if !(0.0..=0.5).contains(&delta_prime) {
        return Err(Error::invalid(format!("enhanced imbalance must lie in [0, 1/2], got {delta_prime}")));
    }
    let d = delta_prime;
    // the bound is sin^2(a + b) with sin^2 a = e_Z and sin^2 b = 4d(1-d);
    // past a + b = pi/2 it carries no information
    if (1.0 - e_z).sqrt() * (1.0 - 2.0 * d) <= 2.0 * (e_z * d * (1.0 - d)).sqrt() {
        return Ok(1.0);
    }
    let e = e_z + 4.0 * d * (1.0 - d) * (1.0 - 2.0 * e_z)
        + 4.0 * (1.0 - 2.0 * d) * (d * (1.0 - d) * e_z * (1.0 - e_z)).sqrt();
    Ok(e.min(1.0))
}

pub fn key_rate_lp(device: &DeviceModel, channel: &ChannelModel, probs: &ProtocolProbabilities) -> Result<KeyRatePoint> {
    probs.validate()?;
    let e_z = bit_error_rate(device, channel)?;
    let c = coin(device, channel)?;
    let e_x = lp_phase_error_bound(e_z.clamp(0.0, 0.5), c.delta_prime)?;
    Ok(assemble_rate(Method::Lp, channel, probs, e_z, e_x))
}
