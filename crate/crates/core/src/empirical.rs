//! Empirical estimators built from the error-free solutions.
//!
//! Drift: the `N - 1` ratios `(t_{n+1} - t_1) / (delta_{n+1} - delta_1)` are
//! combined with their ML weights. Delay: average of the per-reply solutions.
//! Offset: average of the per-reply solutions (`gamma11`) or the direct
//! TOA-based solution (`gamma12`).

use crate::error::{Error, Result};
use crate::model::NoiseModel;
use crate::numerics::{alpha1_weights, delay_offsets, dot};
use crate::protocol::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalEstimate {
    pub alpha1: f64,
    /// Predicted variance `1 / A`.
    pub alpha1_var: f64,
    pub tau1: f64,
    /// `None` when the TOA was not reported.
    pub gamma11: Option<f64>,
    pub gamma12: Option<f64>,
}

/// Weighted drift estimate and its variance `1 / A`.
pub fn estimate_alpha1(obs: &ObservationSet, noise: &NoiseModel) -> Result<(f64, f64)> {
    let d = delay_offsets(obs.delays());
    let (weights, total) = alpha1_weights(&d, noise.sigma_r())?;
    Ok((weighted_alpha(obs, &d, &weights, total), 1.0 / total))
}

pub(crate) fn weighted_alpha(obs: &ObservationSet, d: &[f64], weights: &[f64], total: f64) -> f64 {
    let t1 = obs.t_r_hat[0];
    let ratios: Vec<f64> = obs.t_r_hat[1..].iter().zip(d).map(|(t, dn)| (t - t1) / dn).collect();
    dot(weights, &ratios) / total
}

/// Mean of the per-reply delay solutions `(t_r_hat_n - t'_D - alpha1 delta_n) / (2 alpha1)`.
pub fn estimate_tau1(obs: &ObservationSet, alpha1: f64) -> Result<f64> {
    if !(alpha1 > 0.0) {
        return Err(Error::NonPositiveDrift { alpha: alpha1 });
    }
    let sum: f64 = obs
        .t_r_hat
        .iter()
        .zip(obs.delays())
        .map(|(t, delta)| (t - obs.t_d_prime() - alpha1 * delta) / (2.0 * alpha1))
        .sum();
    Ok(sum / obs.n() as f64)
}

/// `(gamma11, gamma12)` from a drift and delay estimate.
pub fn estimate_gamma_empirical(obs: &ObservationSet, alpha1: f64, tau1: f64) -> Result<(f64, f64)> {
    offset_estimates(obs, alpha1, tau1)
}

/// Averaged per-reply offsets `t_r_hat_n - alpha (t_a_hat + delta_n + tau)`
/// and the direct form `t'_D - alpha (t_a_hat - tau)`.
pub(crate) fn offset_estimates(obs: &ObservationSet, alpha: f64, tau: f64) -> Result<(f64, f64)> {
    let t_a = obs.t_a_hat.ok_or(Error::MissingToa)?;
    let sum: f64 = obs
        .t_r_hat
        .iter()
        .zip(obs.delays())
        .map(|(t, delta)| t - alpha * (t_a + delta + tau))
        .sum();
    let averaged = sum / obs.n() as f64;
    let direct = obs.t_d_prime() - alpha * (t_a - tau);
    Ok((averaged, direct))
}

/// All empirical estimates. Offsets are `None` when the TOA is missing.
pub fn estimate_empirical(obs: &ObservationSet, noise: &NoiseModel) -> Result<EmpiricalEstimate> {
    let (alpha1, alpha1_var) = estimate_alpha1(obs, noise)?;
    let tau1 = estimate_tau1(obs, alpha1)?;
    let (gamma11, gamma12) = match estimate_gamma_empirical(obs, alpha1, tau1) {
        Ok((g11, g12)) => (Some(g11), Some(g12)),
        Err(Error::MissingToa) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(EmpiricalEstimate {
        alpha1,
        alpha1_var,
        tau1,
        gamma11,
        gamma12,
    })
}
