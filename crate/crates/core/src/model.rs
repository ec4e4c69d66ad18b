//! Clock model and the parameter types shared by simulation and estimation.
//!
//! The imperfect clock relates its local time `t'` to the true time `t` by
//! `t' = alpha * t + gamma`, with `alpha = 1 + nu` the drift factor and `gamma`
//! the offset in seconds. All times are `f64` seconds.

use std::sync::Arc;

use crate::error::{invalid, Result};

/// Drift and offset of the imperfect clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockParams {
    alpha: f64,
    nu_ppm: f64,
    gamma: f64,
}

impl ClockParams {
    /// Builds the clock from a drift in parts-per-million and an offset in seconds.
    ///
    /// `nu_ppm` may be negative; only `alpha = 1 + nu_ppm * 1e-6 > 0` is required.
    pub fn from_ppm(nu_ppm: f64, gamma: f64) -> Result<Self> {
        if !nu_ppm.is_finite() {
            return Err(invalid("nu_ppm", "must be finite"));
        }
        if !gamma.is_finite() {
            return Err(invalid("gamma", "must be finite"));
        }
        let alpha = 1.0 + nu_ppm * 1e-6;
        if alpha <= 0.0 {
            return Err(invalid(
                "nu_ppm",
                format!("drift factor 1 + nu must be > 0, got {alpha}"),
            ));
        }
        Ok(Self { alpha, nu_ppm, gamma })
    }

    /// A perfect clock: `alpha = 1`, `gamma = 0`.
    pub fn ideal() -> Self {
        Self {
            alpha: 1.0,
            nu_ppm: 0.0,
            gamma: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Drift coefficient `nu = alpha - 1`.
    pub fn nu(&self) -> f64 {
        self.nu_ppm * 1e-6
    }

    pub fn nu_ppm(&self) -> f64 {
        self.nu_ppm
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Local reading of the imperfect clock at true time `t`.
    pub fn local_from_true(&self, t: f64) -> f64 {
        self.alpha * t + self.gamma
    }

    /// True time at which the imperfect clock reads `t_prime`.
    pub fn true_from_local(&self, t_prime: f64) -> f64 {
        (t_prime - self.gamma) / self.alpha
    }
}

/// Protocol timing: local departure time, reply waits and the true one-way delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    t_d_prime: f64,
    delays: Arc<[f64]>,
    tau: f64,
}

impl ProtocolConfig {
    /// `delays` must hold at least two strictly increasing positive waits.
    pub fn new(t_d_prime: f64, delays: Vec<f64>, tau: f64) -> Result<Self> {
        if !t_d_prime.is_finite() {
            return Err(invalid("t_d_prime", "must be finite"));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(invalid("tau", format!("must be finite and >= 0, got {tau}")));
        }
        if delays.len() < 2 {
            return Err(invalid(
                "delays",
                format!("at least two replies are required, got {}", delays.len()),
            ));
        }
        if let Some(bad) = delays.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(invalid(
                "delays",
                format!("every delay must be finite and > 0, got {bad}"),
            ));
        }
        if let Some(i) = delays.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(
                "delays",
                format!(
                    "delays must be strictly increasing (delta_{} = {} >= delta_{} = {})",
                    i + 1,
                    delays[i],
                    i + 2,
                    delays[i + 1]
                ),
            ));
        }
        Ok(Self {
            t_d_prime,
            delays: delays.into(),
            tau,
        })
    }

    pub fn t_d_prime(&self) -> f64 {
        self.t_d_prime
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub(crate) fn delays_shared(&self) -> Arc<[f64]> {
        Arc::clone(&self.delays)
    }

    /// Number of replies `N`.
    pub fn n(&self) -> usize {
        self.delays.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.t_d_prime, self.delays.to_vec(), tau)
    }

    pub fn with_delays(&self, delays: Vec<f64>) -> Result<Self> {
        Self::new(self.t_d_prime, delays, self.tau)
    }
}

/// Standard deviations of the TOA error at the perfect-clock side (`sigma_a`)
/// and the TOR errors at the imperfect-clock side (`sigma_r`), in seconds.
///
/// Both may be zero for noise-free simulation. Anything that inverts the
/// observation covariance additionally needs `sigma_r > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma_a: f64,
    sigma_r: f64,
}

impl NoiseModel {
    pub fn new(sigma_a: f64, sigma_r: f64) -> Result<Self> {
        if !(sigma_a.is_finite() && sigma_a >= 0.0) {
            return Err(invalid("sigma_a", format!("must be finite and >= 0, got {sigma_a}")));
        }
        if !(sigma_r.is_finite() && sigma_r >= 0.0) {
            return Err(invalid("sigma_r", format!("must be finite and >= 0, got {sigma_r}")));
        }
        Ok(Self { sigma_a, sigma_r })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma_a: 0.0,
            sigma_r: 0.0,
        }
    }

    pub fn sigma_a(&self) -> f64 {
        self.sigma_a
    }

    pub fn sigma_r(&self) -> f64 {
        self.sigma_r
    }

    pub fn sigma_a2(&self) -> f64 {
        self.sigma_a * self.sigma_a
    }

    pub fn sigma_r2(&self) -> f64 {
        self.sigma_r * self.sigma_r
    }

    /// TOR error variance in the imperfect timebase, `alpha^2 sigma_r^2`.
    pub fn sigma_r_prime2(&self, alpha: f64) -> f64 {
        alpha * alpha * self.sigma_r2()
    }
}
