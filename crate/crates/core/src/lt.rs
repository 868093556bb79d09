//! Generalized loss-tolerant phase-error estimation.
//!
//! The channel and Bob's X measurement are summarized by transmission rates
//! `q = (q_Id, q_x, q_z)`, the response of outcome `sX` to the identity and
//! Pauli components of a qubit input. Observed yields of the three actual
//! states pin `q` down up to the side-channel eigenvalue slack; the worst
//! admissible `q` then bounds the virtual yields that define `e_X`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::channel::{
    actual_yields, assemble_rate, bit_error_rate, KeyRatePoint, Method, ProtocolProbabilities, YieldTable,
};
use crate::channel::ChannelModel;
use crate::error::{Error, Result};
use crate::qstates::{actual_decomposition, virtual_decomposition, Basis, DeviceModel, Setting, StateDecomposition};

const SINGULAR_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-14;
const FEAS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SolverMode {
    /// Multiply the eigenvalue-shifted yields through the inverse coefficient
    /// matrix and take the componentwise envelope of the two products.
    #[default]
    #[serde(rename = "paper")]
    PaperFaithful,
    /// Exact extrema over the polytope cut out by the yield inequalities and
    /// linear physicality constraints, found by vertex enumeration.
    #[serde(rename = "vertex-lp")]
    VertexLp,
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMode::PaperFaithful => "paper",
            SolverMode::VertexLp => "vertex-lp",
        })
    }
}

impl FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" | "paper-faithful" => Ok(SolverMode::PaperFaithful),
            "vertex-lp" | "vertex" => Ok(SolverMode::VertexLp),
            other => Err(Error::invalid(format!("unknown solver `{other}`"))),
        }
    }
}

/// Matrix whose column `k` is `E_k (1, P_x, P_z)` for the `k`-th of 0Z, 1Z, 0X.
pub fn coefficient_matrix(device: &DeviceModel) -> Result<Matrix3<f64>> {
    let decs = three_state_decompositions(device)?;
    let m = matrix_from(&decs);
    let det = m.determinant();
    if !(det.abs() >= SINGULAR_TOL) {
        return Err(Error::SingularSystem { det });
    }
    Ok(m)
}

fn three_state_decompositions(device: &DeviceModel) -> Result<[StateDecomposition; 3]> {
    let [a, b, c] = Setting::THREE_STATE;
    Ok([actual_decomposition(a, device)?, actual_decomposition(b, device)?, actual_decomposition(c, device)?])
}

fn matrix_from(decs: &[StateDecomposition; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| {
        let d = &decs[c];
        d.qubit_weight * [1.0, d.bloch.px, d.bloch.pz][r]
    })
}

/// The yield inequalities `y_k - lambda_max_k <= col_k . q <= y_k - lambda_min_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldConstraints {
    pub matrix: Matrix3<f64>,
    /// Observed yields divided by their setting and basis probabilities.
    pub y: [f64; 3],
    pub lambda_max: [f64; 3],
    pub lambda_min: [f64; 3],
}

impl YieldConstraints {
    /// Largest violation of the six yield inequalities at `q` (0 when feasible).
    pub fn violation(&self, q: [f64; 3]) -> f64 {
        let q = Vector3::from(q);
        (0..3)
            .map(|k| {
                let v = self.matrix.column(k).dot(&q);
                let lo = self.y[k] - self.lambda_max[k] - v;
                let hi = v - (self.y[k] - self.lambda_min[k]);
                lo.max(hi).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRateBounds {
    /// Bob's X outcome these rates describe.
    pub s: u8,
    pub mode: SolverMode,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    /// Vertices of the feasible polytope; empty in paper-faithful mode.
    pub vertices: Vec<[f64; 3]>,
    pub constraints: YieldConstraints,
}

impl TransmissionRateBounds {
    /// Maximizes `c . q` over the admissible rates. Paper-faithful mode uses
    /// the box corner; vertex mode searches the polytope vertices.
    pub fn maximize(&self, c: [f64; 3]) -> ([f64; 3], f64) {
        let dot = |q: &[f64; 3]| c[0] * q[0] + c[1] * q[1] + c[2] * q[2];
        match self.mode {
            SolverMode::PaperFaithful => {
                let q: [f64; 3] = std::array::from_fn(|i| if c[i] >= 0.0 { self.upper[i] } else { self.lower[i] });
                (q, dot(&q))
            }
            SolverMode::VertexLp => self
                .vertices
                .iter()
                .map(|q| (*q, dot(q)))
                .fold(([f64::NAN; 3], f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best }),
        }
    }
}

pub fn transmission_rate_bounds(
    s: u8,
    yields: &YieldTable,
    device: &DeviceModel,
    probs: &ProtocolProbabilities,
    mode: SolverMode,
) -> Result<TransmissionRateBounds> {
    if s > 1 {
        return Err(Error::invalid(format!("outcome index must be 0 or 1, got {s}")));
    }
    probs.validate()?;
    let decs = three_state_decompositions(device)?;
    let matrix = coefficient_matrix(device)?;
    let outcome = Setting::new(s, Basis::X)?;
    let mut y = [0.0; 3];
    for (k, sent) in Setting::THREE_STATE.into_iter().enumerate() {
        let observed = yields
            .get(outcome, sent)
            .ok_or_else(|| Error::invalid(format!("yield table lacks the {outcome}|{sent} entry")))?;
        y[k] = observed / (probs.p_setting(sent) * probs.p_xb());
    }
    let constraints = YieldConstraints {
        matrix,
        y,
        lambda_max: decs.map(|d| d.lambda_max),
        lambda_min: decs.map(|d| d.lambda_min),
    };

    let (lower, upper, vertices) = match mode {
        SolverMode::PaperFaithful => {
            let inv_t = matrix
                .try_inverse()
                .ok_or(Error::SingularSystem { det: matrix.determinant() })?
                .transpose();
            let shifted = |lam: &[f64; 3]| inv_t * Vector3::from(std::array::from_fn::<f64, 3, _>(|k| y[k] - lam[k]));
            let u = shifted(&constraints.lambda_max);
            let w = shifted(&constraints.lambda_min);
            let lower = std::array::from_fn(|i| u[i].min(w[i]));
            let upper = std::array::from_fn(|i| u[i].max(w[i]));
            (lower, upper, Vec::new())
        }
        SolverMode::VertexLp => {
            let vertices = enumerate_vertices(&constraints);
            if vertices.is_empty() {
                return Err(Error::InfeasibleStatistics);
            }
            let mut lower = [f64::INFINITY; 3];
            let mut upper = [f64::NEG_INFINITY; 3];
            for v in &vertices {
                for i in 0..3 {
                    lower[i] = lower[i].min(v[i]);
                    upper[i] = upper[i].max(v[i]);
                }
            }
            (lower, upper, vertices)
        }
    };
    Ok(TransmissionRateBounds { s, mode, lower, upper, vertices, constraints })
}

/// All half-spaces `a . q <= b`: the six yield inequalities, then
/// `0 <= q_Id <= 1` and `|q_i| <= min(q_Id, 1 - q_Id)` for the Pauli rates.
fn half_spaces(c: &YieldConstraints) -> Vec<([f64; 3], f64)> {
    let mut rows = Vec::with_capacity(16);
    for k in 0..3 {
        let col: [f64; 3] = std::array::from_fn(|r| c.matrix[(r, k)]);
        rows.push((col, c.y[k] - c.lambda_min[k]));
        rows.push((col.map(|x| -x), -(c.y[k] - c.lambda_max[k])));
    }
    rows.push(([-1.0, 0.0, 0.0], 0.0));
    rows.push(([1.0, 0.0, 0.0], 1.0));
    for i in 1..3 {
        for (sign_i, sign_id, b) in [(1.0, -1.0, 0.0), (-1.0, -1.0, 0.0), (1.0, 1.0, 1.0), (-1.0, 1.0, 1.0)] {
            let mut a = [sign_id, 0.0, 0.0];
            a[i] = sign_i;
            rows.push((a, b));
        }
    }
    rows
}

fn enumerate_vertices(c: &YieldConstraints) -> Vec<[f64; 3]> {
    let rows = half_spaces(c);
    let n = rows.len();
    let feasible = |q: &Vector3<f64>| {
        rows.iter()
            .all(|(a, b)| a[0] * q[0] + a[1] * q[1] + a[2] * q[2] <= b + FEAS_TOL * (1.0 + b.abs()))
    };
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = Matrix3::from_rows(&[
                    Vector3::from(rows[i].0).transpose(),
                    Vector3::from(rows[j].0).transpose(),
                    Vector3::from(rows[k].0).transpose(),
                ]);
                if m.determinant().abs() < PIVOT_TOL {
                    continue;
                }
                let Some(q) = m.lu().solve(&Vector3::new(rows[i].1, rows[j].1, rows[k].1)) else {
                    continue;
                };
                if feasible(&q) {
                    out.push([q[0], q[1], q[2]]);
                }
            }
        }
    }
    out
}

/// Upper bound on the virtual yield for Bob outcome `sX` given virtual state
/// `jX`, clamped at zero.
pub fn virtual_yield_upper(
    s: u8,
    j: u8,
    bounds: &TransmissionRateBounds,
    device: &DeviceModel,
    probs: &ProtocolProbabilities,
) -> Result<f64> {
    if s != bounds.s {
        return Err(Error::invalid(format!("bounds describe outcome {}X, not {s}X", bounds.s)));
    }
    let v = virtual_decomposition(j, device)?;
    let (_, best) = bounds.maximize([1.0, v.bloch.px, v.bloch.pz]);
    let value = probs.p_za * probs.p_zb * (v.qubit_weight * best + v.lambda_max);
    Ok(value.max(0.0))
}

pub fn phase_error_rate_lt(
    device: &DeviceModel,
    channel: &ChannelModel,
    probs: &ProtocolProbabilities,
    mode: SolverMode,
) -> Result<f64> {
    let yields = actual_yields(device, channel, probs)?;
    let denom = yields.z_detection_sum();
    if !(denom > 0.0) {
        return Err(Error::NoDetection);
    }
    let mut numer = 0.0;
    for (s, j) in [(0u8, 1u8), (1, 0)] {
        let bounds = transmission_rate_bounds(s, &yields, device, probs, mode)?;
        numer += virtual_yield_upper(s, j, &bounds, device, probs)?;
    }
    Ok((numer / denom).clamp(0.0, 1.0))
}

pub fn key_rate_lt(
    device: &DeviceModel,
    channel: &ChannelModel,
    probs: &ProtocolProbabilities,
    mode: SolverMode,
) -> Result<KeyRatePoint> {
    let e_z = bit_error_rate(device, channel)?;
    let e_x = phase_error_rate_lt(device, channel, probs, mode)?;
    Ok(assemble_rate(Method::Lt, channel, probs, e_z, e_x))
}
