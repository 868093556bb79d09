//! Source states: the flawed qubit encodings, the polarization/Trojan-horse
//! device model, and the split of each emitted state into a single-mode qubit
//! part plus an orthogonal side-channel part.
//!
//! Every amplitude here is real. The encoding phase rotates states in the X-Z
//! plane of the Bloch sphere, so the Y component of every Bloch vector is zero
//! by choice of axes and is not stored.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// Alice's bit and basis choice, written `0Z`, `1Z`, `0X`, `1X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Setting {
    bit: u8,
    basis: Basis,
}

impl Setting {
    pub const Z0: Setting = Setting { bit: 0, basis: Basis::Z };
    pub const Z1: Setting = Setting { bit: 1, basis: Basis::Z };
    pub const X0: Setting = Setting { bit: 0, basis: Basis::X };
    pub const X1: Setting = Setting { bit: 1, basis: Basis::X };

    /// The states emitted by the three-state loss-tolerant protocol, in
    /// coefficient-matrix column order.
    pub const THREE_STATE: [Setting; 3] = [Self::Z0, Self::Z1, Self::X0];
    pub const ALL: [Setting; 4] = [Self::Z0, Self::Z1, Self::X0, Self::X1];

    pub fn new(bit: u8, basis: Basis) -> Result<Self> {
        if bit > 1 {
            return Err(Error::invalid(format!("bit value must be 0 or 1, got {bit}")));
        }
        Ok(Setting { bit, basis })
    }

    pub fn bit(self) -> u8 {
        self.bit
    }

    pub fn basis(self) -> Basis {
        self.basis
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = match self.basis {
            Basis::Z => 'Z',
            Basis::X => 'X',
        };
        write!(f, "{}{}", self.bit, b)
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        let (Some(bit), Some(basis), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(Error::invalid(format!("unknown setting `{s}`")));
        };
        let bit = match bit {
            '0' => 0,
            '1' => 1,
            _ => return Err(Error::invalid(format!("unknown setting `{s}`"))),
        };
        let basis = match basis.to_ascii_uppercase() {
            'Z' => Basis::Z,
            'X' => Basis::X,
            _ => return Err(Error::invalid(format!("unknown setting `{s}`"))),
        };
        Setting::new(bit, basis)
    }
}

/// How the polarization misalignment angle depends on the encoded setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaMode {
    /// Every setting is emitted with the same angle `theta_hat`.
    Independent,
    /// The angle grows with the encoded phase: 0, pi, pi/2, 3pi/2 times `theta_hat`.
    #[default]
    Dependent,
}

impl FromStr for ThetaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "independent" => Ok(ThetaMode::Independent),
            "dependent" => Ok(ThetaMode::Dependent),
            other => Err(Error::invalid(format!("unknown theta mode `{other}`"))),
        }
    }
}

/// Source imperfections: phase-modulation flaw, polarization mode dependency
/// and the mean photon number of back-reflected Trojan-horse light.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    /// Phase modulation deviation (radians), in `[0, pi)`.
    pub delta: f64,
    /// Mode-dependency magnitude (radians), in `[0, pi/2)`.
    pub theta_hat: f64,
    pub theta_mode: ThetaMode,
    /// Intensity of the back-reflected Trojan-horse light.
    pub mu: f64,
}

impl DeviceModel {
    pub fn new(delta: f64, theta_hat: f64, theta_mode: ThetaMode, mu: f64) -> Result<Self> {
        let device = DeviceModel { delta, theta_hat, theta_mode, mu };
        device.validate()?;
        Ok(device)
    }

    /// A flawless, perfectly isolated source.
    pub fn ideal() -> Self {
        DeviceModel { delta: 0.0, theta_hat: 0.0, theta_mode: ThetaMode::Dependent, mu: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && (0.0..PI).contains(&self.delta)) {
            return Err(Error::invalid(format!("delta must lie in [0, pi), got {}", self.delta)));
        }
        if !(self.theta_hat.is_finite() && (0.0..FRAC_PI_2).contains(&self.theta_hat)) {
            return Err(Error::invalid(format!(
                "theta_hat must lie in [0, pi/2), got {}",
                self.theta_hat
            )));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::invalid(format!("mu must be a finite value >= 0, got {}", self.mu)));
        }
        Ok(())
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_theta(mut self, theta_hat: f64, theta_mode: ThetaMode) -> Self {
        self.theta_hat = theta_hat;
        self.theta_mode = theta_mode;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }
}

impl Default for DeviceModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// Real qubit amplitudes on `|0_Z>` and `|1_Z>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitKet {
    pub c0: f64,
    pub c1: f64,
}

impl QubitKet {
    pub fn norm_sqr(&self) -> f64 {
        self.c0 * self.c0 + self.c1 * self.c1
    }

    pub fn inner(&self, other: &QubitKet) -> f64 {
        self.c0 * other.c0 + self.c1 * other.c1
    }
}

/// X and Z Bloch components; Y is identically zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlochVector {
    pub px: f64,
    pub pz: f64,
}

impl BlochVector {
    pub fn norm_sqr(&self) -> f64 {
        self.px * self.px + self.pz * self.pz
    }
}

/// One emitted (or virtual) state split into qubit and side-channel parts,
/// together with the eigenvalue bounds of the side-channel contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateDecomposition {
    /// Weight of the single-mode qubit part.
    pub qubit_weight: f64,
    /// Weight of the part outside the qubit space.
    pub side_weight: f64,
    /// Magnitude of the qubit/side cross coefficient.
    pub cross_mag: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub bloch: BlochVector,
}

/// Eigenvalues of `[[side, cross], [cross, 0]]`, largest first.
pub(crate) fn side_eigenvalues(side: f64, cross_mag: f64) -> (f64, f64) {
    let disc = (side * side + 4.0 * cross_mag * cross_mag).sqrt();
    let lambda_max = 0.5 * (side + disc);
    // product form avoids cancellation when the cross term is small
    let lambda_min = if lambda_max > 0.0 { -(cross_mag * cross_mag) / lambda_max } else { 0.0 };
    (lambda_max, lambda_min)
}

/// Amplitudes of the qubit state emitted for `setting` with phase flaw `delta`.
pub fn qubit_state(setting: Setting, delta: f64) -> QubitKet {
    let (c0, c1) = match (setting.bit, setting.basis) {
        (0, Basis::Z) => (1.0, 0.0),
        (1, Basis::Z) => (-(0.5 * delta).sin(), (0.5 * delta).cos()),
        (0, Basis::X) => {
            let a = FRAC_PI_4 + 0.25 * delta;
            (a.cos(), a.sin())
        }
        (1, Basis::X) => {
            let a = 3.0 * FRAC_PI_4 + 0.75 * delta;
            (a.cos(), a.sin())
        }
        _ => unreachable!("Setting::new rejects bits other than 0 and 1"),
    };
    QubitKet { c0, c1 }
}

pub fn bloch_vector(ket: QubitKet) -> Result<BlochVector> {
    let n = ket.norm_sqr();
    if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
        return Err(Error::invalid(format!("ket is not normalized (norm^2 = {n})")));
    }
    Ok(BlochVector { px: 2.0 * ket.c0 * ket.c1, pz: ket.c0 * ket.c0 - ket.c1 * ket.c1 })
}

/// Polarization angle of each setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeAngles {
    pub z0: f64,
    pub z1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl ModeAngles {
    pub fn get(&self, setting: Setting) -> f64 {
        match (setting.bit, setting.basis) {
            (0, Basis::Z) => self.z0,
            (1, Basis::Z) => self.z1,
            (0, Basis::X) => self.x0,
            _ => self.x1,
        }
    }
}

pub fn mode_angles(device: &DeviceModel) -> ModeAngles {
    let t = device.theta_hat;
    match device.theta_mode {
        ThetaMode::Independent => ModeAngles { z0: t, z1: t, x0: t, x1: t },
        ThetaMode::Dependent => ModeAngles { z0: 0.0, z1: PI * t, x0: FRAC_PI_2 * t, x1: 1.5 * PI * t },
    }
}

/// Setting-independent and setting-dependent amplitudes `(C_I, C_D)` of the
/// back-reflected coherent state.
pub fn tha_coefficients(mu: f64) -> Result<(f64, f64)> {
    if !(mu.is_finite() && mu >= 0.0) {
        return Err(Error::invalid(format!("mu must be a finite value >= 0, got {mu}")));
    }
    Ok(((-0.5 * mu).exp(), (-(-mu).exp_m1()).sqrt()))
}

/// `C_I^2` and `C_D^2 = 1 - C_I^2`, the latter without cancellation.
fn tha_weights(mu: f64) -> (f64, f64) {
    ((-mu).exp(), -(-mu).exp_m1())
}

/// Decomposition of the actual emitted state for `setting`.
///
/// The qubit part is the horizontally polarized, THA-insensitive component,
/// with weight `E = C_I^2 cos^2(theta)`. Everything else is side channel.
pub fn actual_decomposition(setting: Setting, device: &DeviceModel) -> Result<StateDecomposition> {
    device.validate()?;
    let theta = mode_angles(device).get(setting);
    let (ci2, cd2) = tha_weights(device.mu);
    let (sin_t, cos_t) = theta.sin_cos();
    let qubit_weight = ci2 * cos_t * cos_t;
    let side_weight = cd2 + ci2 * sin_t * sin_t;
    let cross_mag = (qubit_weight * side_weight).sqrt();
    let (lambda_max, lambda_min) = side_eigenvalues(side_weight, cross_mag);
    let bloch = bloch_vector(qubit_state(setting, device.delta))?;
    Ok(StateDecomposition { qubit_weight, side_weight, cross_mag, lambda_max, lambda_min, bloch })
}

/// Known structure of the side-channel states, as lower bounds on their overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SideChannelOverlap {
    /// Lower bound on `<e_0Z|e_1Z>` for the setting-dependent THA states, in `[0, 1]`.
    pub tha: f64,
}

/// Decomposition of the unnormalized virtual state `jX` that Alice sends when
/// she measures her half of the Z-basis entangled source in the X basis.
/// Side-channel states are taken in their worst case (mutually orthogonal).
pub fn virtual_decomposition(j: u8, device: &DeviceModel) -> Result<StateDecomposition> {
    virtual_decomposition_with(j, device, SideChannelOverlap::default())
}

/// As [`virtual_decomposition`], but exploiting a known lower bound on the
/// overlap of the setting-dependent THA states.
pub fn virtual_decomposition_with(
    j: u8,
    device: &DeviceModel,
    overlap: SideChannelOverlap,
) -> Result<StateDecomposition> {
    if j > 1 {
        return Err(Error::invalid(format!("virtual state index must be 0 or 1, got {j}")));
    }
    if !(0.0..=1.0).contains(&overlap.tha) {
        return Err(Error::invalid(format!("THA overlap must lie in [0, 1], got {}", overlap.tha)));
    }
    device.validate()?;
    let angles = mode_angles(device);
    let (s0, c0) = angles.z0.sin_cos();
    let (s1, c1) = angles.z1.sin_cos();
    let (ci2, cd2) = tha_weights(device.mu);
    let (sd, cd) = (0.5 * device.delta).sin_cos();
    let sign = if j == 0 { 1.0 } else { -1.0 };

    // squared norm of c0|w_0Z> + (-1)^j c1|w_1Z>, using <w_0Z|w_1Z> = -sin(delta/2)
    let qubit_norm = c0 * c0 - sign * 2.0 * c0 * c1 * sd + c1 * c1;
    let qubit_weight = 0.25 * ci2 * qubit_norm;
    if !(qubit_weight > 0.0) {
        return Err(Error::DegenerateState { j });
    }

    // side parts overlap through the V-polarized vacuum term and, when known,
    // through the THA states carried by the H component
    let side_cross = -sd * (s0 * s1 * (ci2 + cd2 * overlap.tha) + c0 * c1 * cd2 * overlap.tha);
    let side_0 = cd2 * c0 * c0 + s0 * s0;
    let side_1 = cd2 * c1 * c1 + s1 * s1;
    let side_weight = (0.25 * (side_0 + side_1 + sign * 2.0 * side_cross)).max(0.0);

    let cross_mag = (qubit_weight * side_weight).sqrt();
    let (lambda_max, lambda_min) = side_eigenvalues(side_weight, cross_mag);

    let px = (sign * 2.0 * c0 * c1 * cd - 2.0 * c1 * c1 * cd * sd) / qubit_norm;
    let pz = (c0 * c0 - sign * 2.0 * c0 * c1 * sd + c1 * c1 * (1.0 - 2.0 * cd * cd)) / qubit_norm;

    Ok(StateDecomposition {
        qubit_weight,
        side_weight,
        cross_mag,
        lambda_max,
        lambda_min,
        bloch: BlochVector { px, pz },
    })
}

/// Inner product of two full emitted states. Cross-polarized terms and the
/// (worst-case orthogonal) setting-dependent THA states contribute nothing.
pub fn full_overlap(s1: Setting, s2: Setting, device: &DeviceModel) -> f64 {
    let angles = mode_angles(device);
    let (ci2, _) = tha_weights(device.mu);
    let inner = qubit_state(s1, device.delta).inner(&qubit_state(s2, device.delta));
    angles.get(s1).cos() * angles.get(s2).cos() * ci2 * inner
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix2;
    use proptest::prelude::*;

    fn dev(delta: f64, theta: f64, mode: ThetaMode, mu: f64) -> DeviceModel {
        DeviceModel::new(delta, theta, mode, mu).unwrap()
    }

    // eigenvalues of [[side, cross], [cross, 0]] by a general symmetric solver
    fn eig_oracle(side: f64, cross: f64) -> (f64, f64) {
        let m = Matrix2::new(side, cross, cross, 0.0);
        let e = m.symmetric_eigen().eigenvalues;
        (e.max(), e.min())
    }

    #[test]
    fn setting_parse_and_display() {
        for s in Setting::ALL {
            assert_eq!(s.to_string().parse::<Setting>().unwrap(), s);
        }
        assert!("2Z".parse::<Setting>().is_err());
        assert!("0Y".parse::<Setting>().is_err());
        assert!("0ZZ".parse::<Setting>().is_err());
        assert!(Setting::new(2, Basis::X).is_err());
    }

    #[test]
    fn qubit_state_examples() {
        let k = qubit_state(Setting::Z0, 0.7);
        assert_eq!((k.c0, k.c1), (1.0, 0.0));
        let k = qubit_state(Setting::Z1, 0.0);
        assert_abs_diff_eq!(k.c0, 0.0);
        assert_abs_diff_eq!(k.c1, 1.0);
        let k = qubit_state(Setting::X0, 0.126);
        let a = std::f64::consts::FRAC_PI_4 + 0.126 / 4.0;
        assert_abs_diff_eq!(k.c0, a.cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.c1, a.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.c0, 0.6845, epsilon = 1e-4);
        assert_abs_diff_eq!(k.c1, 0.7290, epsilon = 1e-4);
    }

    #[test]
    fn bloch_examples() {
        let b = bloch_vector(QubitKet { c0: 1.0, c1: 0.0 }).unwrap();
        assert_eq!((b.px, b.pz), (0.0, 1.0));
        let b = bloch_vector(qubit_state(Setting::Z1, 0.126)).unwrap();
        assert_abs_diff_eq!(b.px, -(0.126f64).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.pz, -(0.126f64).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.px, -0.12567, epsilon = 1e-5);
        assert_abs_diff_eq!(b.pz, -0.99207, epsilon = 1e-5);
        let b = bloch_vector(qubit_state(Setting::X0, 0.0)).unwrap();
        assert_abs_diff_eq!(b.px, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.pz, 0.0, epsilon = 1e-15);
        assert!(bloch_vector(QubitKet { c0: 1.0, c1: 0.1 }).is_err());
    }

    #[test]
    fn mode_angle_examples() {
        let a = mode_angles(&dev(0.0, 1e-3, ThetaMode::Dependent, 0.0));
        assert_eq!(a.z0, 0.0);
        assert_abs_diff_eq!(a.z1, PI * 1e-3);
        assert_abs_diff_eq!(a.x0, FRAC_PI_2 * 1e-3);
        assert_abs_diff_eq!(a.x1, 1.5 * PI * 1e-3);
        let a = mode_angles(&dev(0.0, 0.02, ThetaMode::Independent, 0.0));
        for s in Setting::ALL {
            assert_eq!(a.get(s), 0.02);
        }
        let a = mode_angles(&DeviceModel::ideal());
        for s in Setting::ALL {
            assert_eq!(a.get(s), 0.0);
        }
    }

    #[test]
    fn tha_examples() {
        assert_eq!(tha_coefficients(0.0).unwrap(), (1.0, 0.0));
        let (ci, cd) = tha_coefficients(1e-6).unwrap();
        assert_abs_diff_eq!(ci, 0.9999995, epsilon = 1e-12);
        assert_abs_diff_eq!(cd, 1.0e-3, epsilon = 1e-9);
        let (ci, cd) = tha_coefficients(0.37).unwrap();
        assert_abs_diff_eq!(ci * ci + cd * cd, 1.0, epsilon = 1e-15);
        assert!(tha_coefficients(-1e-9).is_err());
        assert!(tha_coefficients(f64::NAN).is_err());
    }

    #[test]
    fn device_validation() {
        assert!(DeviceModel::new(PI, 0.0, ThetaMode::Dependent, 0.0).is_err());
        assert!(DeviceModel::new(-0.1, 0.0, ThetaMode::Dependent, 0.0).is_err());
        assert!(DeviceModel::new(0.0, FRAC_PI_2, ThetaMode::Dependent, 0.0).is_err());
        assert!(DeviceModel::new(0.0, 0.0, ThetaMode::Dependent, -1.0).is_err());
        assert!(DeviceModel::new(0.1, 0.1, ThetaMode::Independent, 0.1).is_ok());
    }

    #[test]
    fn actual_decomposition_ideal() {
        let d = actual_decomposition(Setting::Z0, &DeviceModel::ideal()).unwrap();
        assert_eq!(d.qubit_weight, 1.0);
        assert_eq!(d.side_weight, 0.0);
        assert_eq!((d.lambda_max, d.lambda_min), (0.0, 0.0));
        assert_eq!((d.bloch.px, d.bloch.pz), (0.0, 1.0));
    }

    #[test]
    fn actual_decomposition_tha_matches_eigen_oracle() {
        let d = actual_decomposition(Setting::Z0, &dev(0.0, 0.0, ThetaMode::Dependent, 1e-3)).unwrap();
        assert_abs_diff_eq!(d.qubit_weight, (-1e-3f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.qubit_weight, 0.9990005, epsilon = 1e-7);
        let (max, min) = eig_oracle(d.side_weight, d.cross_mag);
        assert_abs_diff_eq!(d.lambda_max, max, epsilon = 1e-14);
        assert_abs_diff_eq!(d.lambda_min, min, epsilon = 1e-14);
        assert_abs_diff_eq!(d.lambda_max, 0.03211, epsilon = 1e-5);
    }

    #[test]
    fn actual_decomposition_mode_dependency() {
        let d = actual_decomposition(Setting::Z1, &dev(0.0, 1e-3, ThetaMode::Dependent, 0.0)).unwrap();
        assert_abs_diff_eq!(d.qubit_weight, (PI * 1e-3).cos().powi(2), epsilon = 1e-15);
        assert_abs_diff_eq!(d.qubit_weight, 0.99999013, epsilon = 1e-8);
        let (max, _) = eig_oracle(d.side_weight, d.cross_mag);
        assert_abs_diff_eq!(d.lambda_max, max, epsilon = 1e-14);
        assert_abs_diff_eq!(d.lambda_max, 3.146e-3, epsilon = 1e-6);
    }

    #[test]
    fn virtual_decomposition_examples() {
        let v0 = virtual_decomposition(0, &DeviceModel::ideal()).unwrap();
        assert_abs_diff_eq!(v0.qubit_weight, 0.5, epsilon = 1e-15);
        assert_eq!((v0.cross_mag, v0.side_weight), (0.0, 0.0));
        assert_abs_diff_eq!(v0.bloch.px, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v0.bloch.pz, 0.0, epsilon = 1e-15);
        let v1 = virtual_decomposition(1, &DeviceModel::ideal()).unwrap();
        assert_abs_diff_eq!(v1.qubit_weight, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v1.bloch.px, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v1.bloch.pz, 0.0, epsilon = 1e-15);

        let v0 = virtual_decomposition(0, &dev(0.126, 0.0, ThetaMode::Dependent, 0.0)).unwrap();
        assert_abs_diff_eq!(v0.qubit_weight, 0.5 * (1.0 - (0.063f64).sin()), epsilon = 1e-15);
        assert_abs_diff_eq!(v0.qubit_weight, 0.468521, epsilon = 1e-6);
        assert!(virtual_decomposition(2, &DeviceModel::ideal()).is_err());
    }

    // the virtual qubit part is proportional to c0|w_0Z> + (-1)^j c1|w_1Z>;
    // build it from kets and compare its Bloch vector and weight
    #[test]
    fn virtual_bloch_matches_ket_construction() {
        for &(delta, theta, mode, mu) in &[
            (0.126, 1e-3, ThetaMode::Dependent, 1e-6),
            (0.3, 0.2, ThetaMode::Dependent, 0.01),
            (0.063, 0.05, ThetaMode::Independent, 0.0),
            (1.0, 0.4, ThetaMode::Dependent, 0.5),
        ] {
            let d = dev(delta, theta, mode, mu);
            let a = mode_angles(&d);
            let w0 = qubit_state(Setting::Z0, delta);
            let w1 = qubit_state(Setting::Z1, delta);
            for j in 0..2u8 {
                let sign = if j == 0 { 1.0 } else { -1.0 };
                let ci = (-0.5 * mu).exp();
                let raw = QubitKet {
                    c0: 0.5 * ci * (a.z0.cos() * w0.c0 + sign * a.z1.cos() * w1.c0),
                    c1: 0.5 * ci * (a.z0.cos() * w0.c1 + sign * a.z1.cos() * w1.c1),
                };
                let n = raw.norm_sqr();
                let unit = QubitKet { c0: raw.c0 / n.sqrt(), c1: raw.c1 / n.sqrt() };
                let b = bloch_vector(unit).unwrap();
                let v = virtual_decomposition(j, &d).unwrap();
                assert_abs_diff_eq!(v.qubit_weight, n, epsilon = 1e-14);
                assert_abs_diff_eq!(v.bloch.px, b.px, epsilon = 1e-12);
                assert_abs_diff_eq!(v.bloch.pz, b.pz, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn virtual_side_weight_matches_closed_form() {
        let d = dev(0.2, 0.03, ThetaMode::Dependent, 1e-3);
        let a = mode_angles(&d);
        let (ci2, cd2) = ((-d.mu).exp(), 1.0 - (-d.mu).exp());
        let (s0, s1, sd) = (a.z0.sin(), a.z1.sin(), (0.5 * d.delta).sin());
        for j in 0..2u8 {
            let sign = if j == 0 { 1.0 } else { -1.0 };
            let expected = 0.25 * (ci2 * (s0 * s0 - sign * 2.0 * s0 * s1 * sd + s1 * s1) + 2.0 * cd2);
            let v = virtual_decomposition(j, &d).unwrap();
            assert_abs_diff_eq!(v.side_weight, expected, epsilon = 1e-14);
            assert_abs_diff_eq!(v.cross_mag, (v.qubit_weight * v.side_weight).sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn known_tha_overlap_shrinks_virtual_side_weight() {
        let d = dev(0.2, 0.0, ThetaMode::Dependent, 1e-2);
        let worst = virtual_decomposition(0, &d).unwrap();
        let known = virtual_decomposition_with(0, &d, SideChannelOverlap { tha: 0.5 }).unwrap();
        assert!(known.side_weight < worst.side_weight);
        assert!(virtual_decomposition_with(0, &d, SideChannelOverlap { tha: 1.5 }).is_err());
        let v1 = virtual_decomposition_with(1, &d, SideChannelOverlap { tha: 0.5 }).unwrap();
        assert_abs_diff_eq!(
            v1.qubit_weight + known.qubit_weight + v1.side_weight + known.side_weight,
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn full_overlap_examples() {
        let ideal = DeviceModel::ideal();
        assert_abs_diff_eq!(full_overlap(Setting::Z0, Setting::Z1, &ideal), 0.0, epsilon = 1e-16);
        let d = dev(0.126, 0.0, ThetaMode::Dependent, 0.0);
        assert_abs_diff_eq!(full_overlap(Setting::Z0, Setting::Z1, &d), -(0.063f64).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(full_overlap(Setting::Z0, Setting::Z1, &d), -0.06296, epsilon = 1e-5);
        let d = dev(0.126, 1e-3, ThetaMode::Dependent, 1e-6);
        let expected = (PI * 1e-3).cos() * (-1e-6f64).exp() * -(0.063f64).sin();
        assert_abs_diff_eq!(full_overlap(Setting::Z0, Setting::Z1, &d), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(full_overlap(Setting::Z0, Setting::Z1, &d), -0.062957, epsilon = 2e-6);
    }

    #[test]
    fn ideal_limit_collapse() {
        let ideal = DeviceModel::ideal();
        let expected = [(0.0, 1.0), (0.0, -1.0), (1.0, 0.0)];
        for (s, (px, pz)) in Setting::THREE_STATE.into_iter().zip(expected) {
            let d = actual_decomposition(s, &ideal).unwrap();
            assert_eq!(d.side_weight, 0.0);
            assert_abs_diff_eq!(d.bloch.px, px, epsilon = 1e-15);
            assert_abs_diff_eq!(d.bloch.pz, pz, epsilon = 1e-15);
        }
    }

    fn any_device() -> impl Strategy<Value = DeviceModel> {
        (0.0..3.0f64, 0.0..0.45f64, any::<bool>(), -12.0..1.0f64).prop_map(|(delta, theta, indep, log_mu)| {
            let mode = if indep { ThetaMode::Independent } else { ThetaMode::Dependent };
            DeviceModel::new(delta, theta, mode, 10f64.powf(log_mu)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn actual_weights_partition(d in any_device()) {
            for s in Setting::ALL {
                let dec = actual_decomposition(s, &d).unwrap();
                prop_assert!((dec.qubit_weight + dec.side_weight - 1.0).abs() <= 1e-12);
                prop_assert!(dec.lambda_min <= 0.0 && dec.lambda_max >= 0.0);
                prop_assert!((dec.lambda_max + dec.lambda_min - dec.side_weight).abs() <= 1e-12);
                prop_assert!((dec.lambda_max * dec.lambda_min + dec.cross_mag.powi(2)).abs() <= 1e-12);
                prop_assert!((dec.bloch.norm_sqr() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn virtual_weights_close(d in any_device()) {
            let v0 = virtual_decomposition(0, &d).unwrap();
            let v1 = virtual_decomposition(1, &d).unwrap();
            let total = v0.qubit_weight + v1.qubit_weight + v0.side_weight + v1.side_weight;
            prop_assert!((total - 1.0).abs() <= 1e-12);
            for v in [v0, v1] {
                prop_assert!((v.bloch.norm_sqr() - 1.0).abs() <= 1e-12);
                prop_assert!(v.lambda_min <= 0.0 && v.lambda_max >= 0.0);
                prop_assert!((v.lambda_max * v.lambda_min + v.cross_mag.powi(2)).abs() <= 1e-12);
            }
        }

        #[test]
        fn overlap_is_symmetric(d in any_device(), i in 0usize..4, k in 0usize..4) {
            let (a, b) = (Setting::ALL[i], Setting::ALL[k]);
            prop_assert_eq!(full_overlap(a, b, &d), full_overlap(b, a, &d));
        }
    }
}
