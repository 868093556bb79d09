//! Secret key rates for three- and four-state QKD with flawed, leaky sources.
//!
//! Two phase-error estimators share one device and channel model:
//! the generalized loss-tolerant analysis ([`lt`]) and the quantum-coin
//! analysis ([`lp`]). [`scan`] runs loss sweeps and locates where the
//! two estimators give equal rates.

// `!(x > 0.0)` is used deliberately so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod finite;
pub mod lp;
pub mod lt;
pub mod qstates;
pub mod scan;

pub use channel::{
    actual_yields, binary_entropy, bit_error_rate, detection_probability, system_efficiency, z_basis_yield,
    ChannelModel, KeyRatePoint, Method, ProtocolProbabilities, YieldTable,
};
pub use error::{Error, Result};
pub use finite::{azuma_deviation, count_interval, AzumaBudget};
pub use lp::{coin_imbalance, delta_prime, key_rate_lp, lp_phase_error_bound, CoinImbalance};
pub use lt::{
    coefficient_matrix, key_rate_lt, phase_error_rate_lt, transmission_rate_bounds, virtual_yield_upper,
    SolverMode, TransmissionRateBounds,
};
pub use qstates::{
    actual_decomposition, bloch_vector, full_overlap, mode_angles, qubit_state, tha_coefficients,
    virtual_decomposition, Basis, BlochVector, DeviceModel, QubitKet, Setting, StateDecomposition, ThetaMode,
};
pub use scan::{
    find_crossover, key_rate, run_sweep, CrossoverConfig, CrossoverOutcome, CrossoverPoint, SweepConfig, SweepRow,
    SweptParameter,
};
