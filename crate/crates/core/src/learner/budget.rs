//! Sample-count bounds for the scenario program.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("{name} must lie in (0, 1), got {p}")));
    }
    Ok(())
}

/// Smallest sample count `K` with
/// `K >= (2/ε) (ln(1/η) + 2 T_p (N+1) + 1)`.
pub fn required_samples(epsilon: f64, eta: f64, t_past: usize, n_agents_total: usize) -> Result<u64> {
    check_probability("epsilon", epsilon)?;
    check_probability("eta", eta)?;
    if t_past == 0 || n_agents_total == 0 {
        return Err(Error::invalid("t_past and the agent count must be at least 1"));
    }
    let dim = 2.0 * t_past as f64 * n_agents_total as f64 + 1.0;
    let bound = 2.0 / epsilon * ((1.0 / eta).ln() + dim);
    if !bound.is_finite() || bound >= u64::MAX as f64 {
        return Err(Error::invalid("sample bound overflows"));
    }
    Ok(bound.ceil() as u64)
}

/// Largest key-feature count `⌊ε T₂ / 2 − ln(1/η) − 1⌋` for a phase-2
/// budget of `t2` samples.
pub fn max_key_features(epsilon: f64, eta: f64, t2: usize) -> Result<usize> {
    check_probability("epsilon", epsilon)?;
    check_probability("eta", eta)?;
    let k = (epsilon * t2 as f64 / 2.0 - (1.0 / eta).ln() - 1.0).floor();
    if k < 1.0 {
        let need = (2.0 * ((1.0 / eta).ln() + 2.0) / epsilon).ceil();
        return Err(Error::Budget(format!(
            "t2 = {t2} admits no key features at epsilon = {epsilon}, eta = {eta}; use t2 >= {need}"
        )));
    }
    Ok(k as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacBudget {
    pub epsilon: f64,
    pub eta: f64,
    pub t1: usize,
    pub t2: usize,
    /// Key-feature count, bias slot included.
    pub k_features: usize,
}

impl PacBudget {
    /// Budget with the largest admissible key-feature count for `t2`.
    pub fn with_max_features(epsilon: f64, eta: f64, t1: usize, t2: usize) -> Result<Self> {
        let b = Self {
            epsilon,
            eta,
            t1,
            t2,
            k_features: max_key_features(epsilon, eta, t2)?,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("epsilon", self.epsilon)?;
        check_probability("eta", self.eta)?;
        if self.t1 == 0 || self.t2 == 0 {
            return Err(Error::invalid("t1 and t2 must be at least 1"));
        }
        let cap = max_key_features(self.epsilon, self.eta, self.t2)?;
        if self.k_features == 0 || self.k_features > cap {
            return Err(Error::Budget(format!(
                "k_features = {} must lie in 1..={cap} for t2 = {}",
                self.k_features, self.t2
            )));
        }
        Ok(())
    }
}
