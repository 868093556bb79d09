//! Lossy fiber and threshold-detector simulation producing the observed
//! yields, the bit error rate and the sifted Z-basis yield, plus the
//! asymptotic rate arithmetic shared by both estimators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstates::{Basis, DeviceModel, Setting};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Overall system loss in dB, fiber plus receiver.
    pub loss_db: f64,
    /// Dark-count probability per detector per gate.
    pub p_d: f64,
    /// Error-correction inefficiency.
    pub f_ec: f64,
}

impl ChannelModel {
    pub fn new(loss_db: f64, p_d: f64, f_ec: f64) -> Result<Self> {
        let channel = ChannelModel { loss_db, p_d, f_ec };
        channel.validate()?;
        Ok(channel)
    }

    /// Builds the loss budget from a fiber length, its attenuation and the
    /// receiver-side loss.
    pub fn from_distance(
        distance_km: f64,
        alpha_db_per_km: f64,
        receiver_loss_db: f64,
        p_d: f64,
        f_ec: f64,
    ) -> Result<Self> {
        if !(distance_km >= 0.0 && alpha_db_per_km >= 0.0 && receiver_loss_db >= 0.0) {
            return Err(Error::invalid("distance, attenuation and receiver loss must be >= 0"));
        }
        Self::new(distance_km * alpha_db_per_km + receiver_loss_db, p_d, f_ec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db.is_finite() && self.loss_db >= 0.0) {
            return Err(Error::invalid(format!("loss must be a finite value >= 0 dB, got {}", self.loss_db)));
        }
        if !(self.p_d >= 0.0 && self.p_d < 1.0) {
            return Err(Error::invalid(format!("dark-count probability must lie in [0, 1), got {}", self.p_d)));
        }
        if !(self.f_ec.is_finite() && self.f_ec >= 1.0) {
            return Err(Error::invalid(format!("error-correction inefficiency must be >= 1, got {}", self.f_ec)));
        }
        Ok(())
    }

    pub fn with_loss(mut self, loss_db: f64) -> Self {
        self.loss_db = loss_db;
        self
    }
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel { loss_db: 0.0, p_d: 1e-7, f_ec: 1.16 }
    }
}

/// Basis-selection probabilities of Alice and Bob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolProbabilities {
    pub p_za: f64,
    pub p_zb: f64,
}

impl ProtocolProbabilities {
    pub fn new(p_za: f64, p_zb: f64) -> Result<Self> {
        let probs = ProtocolProbabilities { p_za, p_zb };
        probs.validate()?;
        Ok(probs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_za", self.p_za), ("p_zb", self.p_zb)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {p}")));
            }
        }
        Ok(())
    }

    pub fn p_0z(&self) -> f64 {
        0.5 * self.p_za
    }

    pub fn p_1z(&self) -> f64 {
        0.5 * self.p_za
    }

    pub fn p_0x(&self) -> f64 {
        1.0 - self.p_za
    }

    pub fn p_xb(&self) -> f64 {
        1.0 - self.p_zb
    }

    /// Emission probability of a three-state setting; `1X` is never sent.
    pub fn p_setting(&self, setting: Setting) -> f64 {
        match (setting.bit(), setting.basis()) {
            (0, Basis::Z) => self.p_0z(),
            (1, Basis::Z) => self.p_1z(),
            (0, Basis::X) => self.p_0x(),
            _ => 0.0,
        }
    }

    pub fn p_bob(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Z => self.p_zb,
            Basis::X => self.p_xb(),
        }
    }
}

impl Default for ProtocolProbabilities {
    fn default() -> Self {
        ProtocolProbabilities { p_za: 0.5, p_zb: 0.5 }
    }
}

/// Joint probabilities that Alice sends a setting, both parties pick their
/// bases and Bob records a given outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldTable {
    entries: Vec<(Setting, Setting, f64)>,
}

impl YieldTable {
    /// Yield for Bob's outcome `outcome` (bit and measurement basis) given
    /// Alice sent `sent`. `None` for combinations the channel model omits.
    pub fn get(&self, outcome: Setting, sent: Setting) -> Option<f64> {
        self.entries.iter().find(|(o, s, _)| *o == outcome && *s == sent).map(|e| e.2)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Setting, Setting, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of the four Z-basis sifted yields.
    pub fn z_detection_sum(&self) -> f64 {
        self.iter()
            .filter(|(o, s, _)| o.basis() == Basis::Z && s.basis() == Basis::Z)
            .map(|e| e.2)
            .sum()
    }
}

pub fn system_efficiency(channel: &ChannelModel) -> f64 {
    10f64.powf(-channel.loss_db / 10.0)
}

/// Probability that at least one detector clicks in a given basis, to first
/// order in the dark-count probability.
pub fn detection_probability(channel: &ChannelModel) -> f64 {
    let eta = system_efficiency(channel);
    4.0 * (1.0 - 0.5 * eta) * channel.p_d + eta
}

/// The two outcome yields for a state whose Bloch vector makes `cos` with the
/// axis of the first outcome, `prefactor` being the setting and basis probability.
fn outcome_pair(prefactor: f64, cos: f64, eta: f64, p_d: f64) -> (f64, f64) {
    let dark = (1.0 - 0.5 * eta) * p_d;
    let aligned = prefactor * (dark + 0.25 * eta * (1.0 + cos) * (1.0 - 0.5 * p_d) + 0.125 * eta * (1.0 - cos) * p_d);
    let opposite = prefactor * (dark + 0.125 * eta * (1.0 + cos) * p_d + 0.25 * eta * (1.0 - cos) * (1.0 - 0.5 * p_d));
    (aligned, opposite)
}

/// The ten observed yields. Mode dependency and THA do not enter: the
/// channel acts on the flawed qubit states only, and `p_d^2` terms are dropped.
pub fn actual_yields(device: &DeviceModel, channel: &ChannelModel, probs: &ProtocolProbabilities) -> Result<YieldTable> {
    device.validate()?;
    channel.validate()?;
    probs.validate()?;
    let eta = system_efficiency(channel);
    let (p_d, d) = (channel.p_d, device.delta);
    let (pzb, pxb) = (probs.p_zb, probs.p_xb());
    let (z0, z1, x0, x1) = (Setting::Z0, Setting::Z1, Setting::X0, Setting::X1);

    let mut entries = Vec::with_capacity(10);
    let (a, b) = outcome_pair(probs.p_0z() * pxb, (0.5 * d).sin(), eta, p_d);
    entries.extend([(x0, z0, a), (x1, z0, b)]);
    let (a, b) = outcome_pair(probs.p_0z() * pzb, d.cos(), eta, p_d);
    entries.extend([(z0, z0, a), (z1, z0, b)]);
    let (a, b) = outcome_pair(probs.p_1z() * pxb, (1.5 * d).sin(), eta, p_d);
    entries.extend([(x1, z1, a), (x0, z1, b)]);
    let (a, b) = outcome_pair(probs.p_1z() * pzb, (2.0 * d).cos(), eta, p_d);
    entries.extend([(z1, z1, a), (z0, z1, b)]);
    let (a, b) = outcome_pair(probs.p_0x() * pxb, d.cos(), eta, p_d);
    entries.extend([(x0, x0, a), (x1, x0, b)]);
    Ok(YieldTable { entries })
}

/// Z-basis bit error rate.
pub fn bit_error_rate(device: &DeviceModel, channel: &ChannelModel) -> Result<f64> {
    device.validate()?;
    channel.validate()?;
    let eta = system_efficiency(channel);
    let denom = detection_probability(channel);
    if !(denom > 0.0) {
        return Err(Error::NoDetection);
    }
    let d = device.delta;
    let numer = 2.0 * (1.0 - 0.5 * eta) * channel.p_d
        + 0.5 * eta
        + 0.25 * eta * ((2.0 * d).cos() + d.cos()) * (channel.p_d - 1.0);
    Ok(numer / denom)
}

/// Sifted Z-basis yield in closed form.
pub fn z_basis_yield(channel: &ChannelModel, probs: &ProtocolProbabilities) -> f64 {
    probs.p_za * probs.p_zb * detection_probability(channel)
}

pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("entropy argument must lie in [0, 1], got {x}")));
    }
    Ok(entropy_unchecked(x))
}

fn entropy_unchecked(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Which phase-error estimator produced a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lt,
    Lp,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lt => "lt",
            Method::Lp => "lp",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lt" => Ok(Method::Lt),
            "lp" => Ok(Method::Lp),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Key rate at one loss value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeyRatePoint {
    pub loss_db: f64,
    pub eta: f64,
    pub method: Method,
    pub e_z: f64,
    pub e_x: f64,
    /// Bits per pulse before clamping; negative when no key can be distilled.
    pub rate_raw: f64,
    pub rate: f64,
}

/// Asymptotic rate `Y_Z [1 - h(e_X) - f h(e_Z)]`. Error rates past 1/2 are
/// charged a full bit, since a flipped key is as good as a correct one.
pub(crate) fn assemble_rate(
    method: Method,
    channel: &ChannelModel,
    probs: &ProtocolProbabilities,
    e_z: f64,
    e_x: f64,
) -> KeyRatePoint {
    let h = |e: f64| entropy_unchecked(e.clamp(0.0, 0.5));
    let y_z = z_basis_yield(channel, probs);
    let rate_raw = y_z * (1.0 - h(e_x) - channel.f_ec * h(e_z));
    KeyRatePoint {
        loss_db: channel.loss_db,
        eta: system_efficiency(channel),
        method,
        e_z,
        e_x,
        rate_raw,
        rate: rate_raw.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstates::ThetaMode;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn chan(loss: f64, p_d: f64) -> ChannelModel {
        ChannelModel::new(loss, p_d, 1.16).unwrap()
    }

    fn flawed(delta: f64) -> DeviceModel {
        DeviceModel::new(delta, 0.0, ThetaMode::Dependent, 0.0).unwrap()
    }

    // literal transcription of the printed yield formulas, one line per entry
    fn literal_yields(d: f64, eta: f64, pd: f64, pza: f64, pzb: f64) -> Vec<(&'static str, &'static str, f64)> {
        let (p0z, p1z, p0x, pxb) = (pza / 2.0, pza / 2.0, 1.0 - pza, 1.0 - pzb);
        let k = (1.0 - eta / 2.0) * pd;
        let s2 = (d / 2.0).sin();
        let s32 = (3.0 * d / 2.0).sin();
        vec![
            ("0X", "0Z", p0z * pxb * (k + eta / 4.0 * (1.0 + s2) * (1.0 - pd / 2.0) + eta / 8.0 * (1.0 - s2) * pd)),
            ("1X", "0Z", p0z * pxb * (k + eta / 8.0 * (1.0 + s2) * pd + eta / 4.0 * (1.0 - s2) * (1.0 - pd / 2.0))),
            ("0Z", "0Z", p0z * pzb * (k + eta / 4.0 * (1.0 + d.cos()) * (1.0 - pd / 2.0) + eta / 8.0 * (1.0 - d.cos()) * pd)),
            ("1Z", "0Z", p0z * pzb * (k + eta / 8.0 * (1.0 + d.cos()) * pd + eta / 4.0 * (1.0 - d.cos()) * (1.0 - pd / 2.0))),
            ("1X", "1Z", p1z * pxb * (k + eta / 4.0 * (1.0 + s32) * (1.0 - pd / 2.0) + eta / 8.0 * (1.0 - s32) * pd)),
            ("0X", "1Z", p1z * pxb * (k + eta / 8.0 * (1.0 + s32) * pd + eta / 4.0 * (1.0 - s32) * (1.0 - pd / 2.0))),
            ("1Z", "1Z", p1z * pzb * (k + eta / 4.0 * (1.0 + (2.0 * d).cos()) * (1.0 - pd / 2.0) + eta / 8.0 * (1.0 - (2.0 * d).cos()) * pd)),
            ("0Z", "1Z", p1z * pzb * (k + eta / 8.0 * (1.0 + (2.0 * d).cos()) * pd + eta / 4.0 * (1.0 - (2.0 * d).cos()) * (1.0 - pd / 2.0))),
            ("0X", "0X", p0x * pxb * (k + eta / 4.0 * (1.0 + d.cos()) * (1.0 - pd / 2.0) + eta / 8.0 * (1.0 - d.cos()) * pd)),
            ("1X", "0X", p0x * pxb * (k + eta / 8.0 * (1.0 + d.cos()) * pd + eta / 4.0 * (1.0 - d.cos()) * (1.0 - pd / 2.0))),
        ]
    }

    #[test]
    fn efficiency_examples() {
        assert_eq!(system_efficiency(&chan(0.0, 0.0)), 1.0);
        assert_relative_eq!(system_efficiency(&chan(20.0, 0.0)), 0.01, max_relative = 1e-14);
        let c = ChannelModel::from_distance(50.0, 0.2, 0.0, 0.0, 1.16).unwrap();
        assert_relative_eq!(system_efficiency(&c), 0.1, max_relative = 1e-14);
        assert!(ChannelModel::from_distance(-1.0, 0.2, 0.0, 0.0, 1.16).is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelModel::new(-1.0, 0.0, 1.16).is_err());
        assert!(ChannelModel::new(0.0, 1.0, 1.16).is_err());
        assert!(ChannelModel::new(0.0, 0.0, 0.9).is_err());
        assert!(ProtocolProbabilities::new(0.0, 0.5).is_err());
        assert!(ProtocolProbabilities::new(0.5, 1.0).is_err());
    }

    #[test]
    fn yield_examples() {
        let probs = ProtocolProbabilities::default();
        let c = chan(13.0, 0.0);
        let eta = system_efficiency(&c);
        let y = actual_yields(&DeviceModel::ideal(), &c, &probs).unwrap();
        assert_eq!(y.len(), 10);
        assert_abs_diff_eq!(y.get(Setting::X1, Setting::X0).unwrap(), 0.0);
        assert_relative_eq!(y.get(Setting::Z0, Setting::Z0).unwrap(), eta / 16.0, max_relative = 1e-14);
        assert!(y.get(Setting::Z0, Setting::X1).is_none());
    }

    #[test]
    fn yields_match_literal_transcription() {
        for &(pza, pzb) in &[(0.5, 0.5), (0.8, 0.3)] {
            let probs = ProtocolProbabilities::new(pza, pzb).unwrap();
            let y = actual_yields(&flawed(0.126), &chan(20.0, 1e-7), &probs).unwrap();
            for (o, s, v) in literal_yields(0.126, 0.01, 1e-7, pza, pzb) {
                let got = y.get(o.parse().unwrap(), s.parse().unwrap()).unwrap();
                assert_relative_eq!(got, v, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn z_sum_is_half_the_closed_form() {
        let probs = ProtocolProbabilities::default();
        for loss in [0.0, 7.0, 33.0] {
            let c = chan(loss, 1e-6);
            let y = actual_yields(&flawed(0.3), &c, &probs).unwrap();
            assert_relative_eq!(2.0 * y.z_detection_sum(), z_basis_yield(&c, &probs), max_relative = 1e-12);
        }
    }

    #[test]
    fn bit_error_examples() {
        assert_eq!(bit_error_rate(&DeviceModel::ideal(), &chan(10.0, 0.0)).unwrap(), 0.0);
        let e = bit_error_rate(&DeviceModel::ideal(), &chan(400.0, 1e-6)).unwrap();
        assert_abs_diff_eq!(e, 0.5, epsilon = 1e-9);
        let e = bit_error_rate(&flawed(0.126), &chan(3.0, 0.0)).unwrap();
        assert_abs_diff_eq!(e, 0.5 - ((0.252f64).cos() + (0.126f64).cos()) / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e, 9.878e-3, epsilon = 1e-6);
    }

    #[test]
    fn no_detection_is_an_error() {
        let c = ChannelModel { loss_db: f64::INFINITY, p_d: 0.0, f_ec: 1.16 };
        assert!(bit_error_rate(&DeviceModel::ideal(), &c).is_err());
        let c = ChannelModel { loss_db: 5000.0, p_d: 0.0, f_ec: 1.16 };
        assert_eq!(bit_error_rate(&DeviceModel::ideal(), &c), Err(Error::NoDetection));
    }

    #[test]
    fn z_yield_examples() {
        let probs = ProtocolProbabilities::default();
        assert_relative_eq!(z_basis_yield(&chan(10.0, 0.0), &probs), 0.025, max_relative = 1e-14);
        assert_abs_diff_eq!(z_basis_yield(&chan(0.0, 0.0), &probs), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(z_basis_yield(&chan(20.0, 1e-7), &probs), 2.50010e-3, epsilon = 1e-8);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(0.11).unwrap(), 0.49991, epsilon = 1e-5);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn rate_charges_a_full_bit_past_one_half() {
        let probs = ProtocolProbabilities::default();
        let c = chan(0.0, 0.0);
        let p = assemble_rate(Method::Lt, &c, &probs, 0.0, 0.9);
        assert_abs_diff_eq!(p.rate_raw, 0.0, epsilon = 1e-15);
        let p = assemble_rate(Method::Lt, &c, &probs, 0.3, 0.0);
        assert!(p.rate_raw < 0.0 && p.rate == 0.0);
    }

    #[test]
    fn method_parse() {
        assert_eq!("LT".parse::<Method>().unwrap(), Method::Lt);
        assert_eq!(Method::Lp.to_string(), "lp");
        assert!("both".parse::<Method>().is_err());
    }

    proptest! {
        #[test]
        fn error_rate_grows_with_loss(delta in 0.0..1.0f64, lo in 0.0..60.0f64, step in 0.0..20.0f64, log_pd in -9.0..-3.0f64) {
            let p_d = 10f64.powf(log_pd);
            let d = flawed(delta);
            let a = bit_error_rate(&d, &chan(lo, p_d)).unwrap();
            let b = bit_error_rate(&d, &chan(lo + step, p_d)).unwrap();
            prop_assert!(b >= a - 1e-15);
        }

        #[test]
        fn yields_bounded_by_prefactor(delta in 0.0..3.0f64, loss in 0.0..80.0f64, log_pd in -9.0..-2.0f64,
                                       pza in 0.05..0.95f64, pzb in 0.05..0.95f64) {
            let probs = ProtocolProbabilities::new(pza, pzb).unwrap();
            let y = actual_yields(&flawed(delta), &chan(loss, 10f64.powf(log_pd)), &probs).unwrap();
            for (o, s, v) in y.iter() {
                let cap = probs.p_setting(s) * probs.p_bob(o.basis());
                prop_assert!(v >= 0.0 && v <= cap + 1e-15);
            }
        }

        #[test]
        fn x_outcomes_balanced_on_z_state_without_flaw(loss in 0.0..80.0f64, log_pd in -9.0..-2.0f64) {
            let y = actual_yields(&DeviceModel::ideal(), &chan(loss, 10f64.powf(log_pd)), &ProtocolProbabilities::default()).unwrap();
            let a = y.get(Setting::X0, Setting::Z0).unwrap();
            let b = y.get(Setting::X1, Setting::Z0).unwrap();
            prop_assert!((a - b).abs() <= 1e-15);
        }

        #[test]
        fn entropy_symmetric_and_concave(x in 0.0..1.0f64, y in 0.0..1.0f64) {
            let h = |v: f64| binary_entropy(v).unwrap();
            prop_assert!((h(x) - h(1.0 - x)).abs() <= 1e-12);
            prop_assert!(h(0.5 * (x + y)) + 1e-12 >= 0.5 * (h(x) + h(y)));
        }
    }
}
