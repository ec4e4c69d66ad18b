//! Joint maximum-likelihood estimation of drift and delay from the TOR vector,
//! with offset estimators that plug the ML estimates into the per-reply and
//! direct offset solutions.
//!
//! Setting the likelihood gradient to zero gives
//! `C - 2 a t B - a D = 0` and `E - 2 a t D - a F = 0`, solved by
//! `alpha2 = (BE - CD) / (BF - D^2)` and `tau2 = (CF - DE) / (2 (BE - CD))`.
//!
//! [`MleSolver`] evaluates the same root in a better conditioned order. The
//! drift is `g' X` with `g' 1 = 0`, so `X` may be shifted by any constant
//! first. The delay then follows from the first stationarity equation as
//! `tau2 = 1' W (X - alpha2 delta) / (2 alpha2 B)`, with the residual formed
//! element by element. [`solve_stationarity`] keeps the direct formulas.

use crate::crlb::crlb_from_weights;
use crate::empirical::offset_estimates;
use crate::error::{Error, Result};
use crate::model::NoiseModel;
use crate::numerics::{CovX, DelayWeights, QuadForms};
use crate::protocol::ObservationSet;

/// `|BE - CD|` below this fraction of `|CF - DE|` leaves `tau2` undefined.
pub const DEGENERATE_RATIO: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleEstimate {
    pub alpha2: f64,
    pub tau2: f64,
    /// Predicted variance of `alpha2`, equal to `c_alpha`.
    pub alpha2_var: f64,
    /// First-order variance of `tau2`: `c_tau` evaluated at the estimates.
    pub tau2_var: f64,
    pub gamma21: Option<f64>,
    pub gamma22: Option<f64>,
}

/// Precomputed likelihood weights for one delay schedule and noise model.
/// Reused across Monte Carlo trials.
#[derive(Debug, Clone)]
pub struct MleSolver {
    weights: DelayWeights,
    delays: Vec<f64>,
}

impl MleSolver {
    pub fn new(delta: &[f64], noise: &NoiseModel) -> Result<Self> {
        let cov = CovX::from_noise(noise, delta.len())?;
        let weights = DelayWeights::new(&cov, delta)?;
        let det = weights.information_det();
        if !(det > 0.0) {
            return Err(Error::SingularInformation { det });
        }
        Ok(Self {
            weights,
            delays: delta.to_vec(),
        })
    }

    pub fn weights(&self) -> &DelayWeights {
        &self.weights
    }

    /// `(alpha2, tau2)` from the centered returns `X`.
    pub fn solve(&self, x: &[f64]) -> Result<(f64, f64)> {
        let w = &self.weights;
        if x.len() != w.w_ones().len() {
            return Err(Error::DimensionMismatch {
                expected: w.w_ones().len(),
                actual: x.len(),
            });
        }
        let x0 = x[0];
        let alpha2: f64 = w.drift_gain().iter().zip(x).map(|(g, xi)| g * (xi - x0)).sum();
        let delta = self.delays();
        // C - alpha2 D, which equals B (CF - DE) / (BF - D^2)
        let intercept: f64 = w
            .w_ones()
            .iter()
            .zip(x.iter().zip(delta))
            .map(|(w1, (xi, d))| w1 * (xi - alpha2 * d))
            .sum();
        // |BE - CD| <= r |CF - DE|  <=>  |alpha2| B <= r |C - alpha2 D|
        if alpha2 == 0.0 || (alpha2 * w.b()).abs() <= DEGENERATE_RATIO * intercept.abs() {
            return Err(Error::DegenerateDrift { alpha2 });
        }
        Ok((alpha2, intercept / (2.0 * alpha2 * w.b())))
    }

    fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn estimate(&self, obs: &ObservationSet) -> Result<MleEstimate> {
        let (alpha2, tau2) = self.solve(&obs.centered_returns())?;
        let report = crlb_from_weights(&self.weights, alpha2, tau2)?;
        let (gamma21, gamma22) = match offset_estimates(obs, alpha2, tau2) {
            Ok((g21, g22)) => (Some(g21), Some(g22)),
            Err(Error::MissingToa) => (None, None),
            Err(e) => return Err(e),
        };
        Ok(MleEstimate {
            alpha2,
            tau2,
            alpha2_var: report.c_alpha,
            tau2_var: report.c_tau,
            gamma21,
            gamma22,
        })
    }
}

/// Closed-form root of the two stationarity equations.
pub fn solve_stationarity(q: &QuadForms) -> Result<(f64, f64)> {
    let det = q.information_det();
    if !(det > 0.0) {
        return Err(Error::SingularInformation { det });
    }
    let drift_num = q.b * q.e - q.c * q.d;
    let delay_num = q.c * q.f - q.d * q.e;
    let alpha2 = drift_num / det;
    if drift_num.abs() <= DEGENERATE_RATIO * delay_num.abs() || drift_num == 0.0 {
        return Err(Error::DegenerateDrift { alpha2 });
    }
    Ok((alpha2, delay_num / (2.0 * drift_num)))
}

/// Residuals of `C - 2 a t B - a D` and `E - 2 a t D - a F`.
pub fn stationarity_residuals(q: &QuadForms, alpha: f64, tau: f64) -> (f64, f64) {
    (
        q.c - 2.0 * alpha * tau * q.b - alpha * q.d,
        q.e - 2.0 * alpha * tau * q.d - alpha * q.f,
    )
}

/// Joint ML estimate of `(alpha, tau)` plus the two plug-in offset estimates.
pub fn estimate_mle(obs: &ObservationSet, noise: &NoiseModel) -> Result<MleEstimate> {
    MleSolver::new(obs.delays(), noise)?.estimate(obs)
}

/// `(c_alpha, c_tau)` evaluated at the given drift and delay.
pub fn predicted_variances(delta: &[f64], noise: &NoiseModel, alpha_hat: f64, tau_hat: f64) -> Result<(f64, f64)> {
    let r = crate::crlb::crlb_alpha_tau(alpha_hat, tau_hat, delta, noise)?;
    Ok((r.c_alpha, r.c_tau))
}

/// `(gamma21, gamma22)` from the ML drift and delay.
pub fn estimate_gamma_mle(obs: &ObservationSet, alpha2: f64, tau2: f64) -> Result<(f64, f64)> {
    offset_estimates(obs, alpha2, tau2)
}
