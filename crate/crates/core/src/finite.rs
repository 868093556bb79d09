//! Azuma-inequality deviations linking sums of conditional probabilities to
//! observed counts. Standalone: the asymptotic rate pipeline does not use them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzumaBudget {
    pub n_trials: u64,
    /// Failure probability of the upper deviation.
    pub epsilon: f64,
    /// Failure probability of the lower deviation.
    pub epsilon_hat: f64,
}

impl AzumaBudget {
    pub fn new(n_trials: u64, epsilon: f64, epsilon_hat: f64) -> Result<Self> {
        check_eps(epsilon)?;
        check_eps(epsilon_hat)?;
        Ok(AzumaBudget { n_trials, epsilon, epsilon_hat })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("failure probability must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

/// `sqrt(2 n ln(1/eps))`.
pub fn azuma_deviation(n: f64, eps: f64) -> Result<f64> {
    if !(n.is_finite() && n >= 0.0) {
        return Err(Error::invalid(format!("trial count must be a finite value >= 0, got {n}")));
    }
    check_eps(eps)?;
    Ok((2.0 * n * (1.0 / eps).ln()).sqrt())
}

/// Interval for the sum of conditional probabilities given the observed count,
/// clipped to `[0, N]`.
pub fn count_interval(observed: f64, budget: &AzumaBudget) -> Result<(f64, f64)> {
    let n = budget.n_trials as f64;
    if !(0.0..=n).contains(&observed) {
        return Err(Error::invalid(format!("observed count {observed} is outside [0, {n}]")));
    }
    let low = observed - azuma_deviation(n, budget.epsilon_hat)?;
    let high = observed + azuma_deviation(n, budget.epsilon)?;
    Ok((low.max(0.0), high.min(n)))
}
