//! Simulation of the two-way exchange.
//!
//! 1. Tr' transmits at local time `t'_D`; the signal reaches Tr at true time
//!    `t_A = (t'_D - gamma) / alpha + tau`.
//! 2. Tr estimates the arrival: `t_a_hat = t_A + eps_A`.
//! 3. Tr waits `delta_n` from `t_a_hat` and replies `N` times.
//! 4. Tr' timestamps each return in its own timebase:
//!    `t_r_hat_n = t'_D + alpha (2 tau + delta_n) + alpha eps_A + eps_R_n`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::model::{ClockParams, NoiseModel, ProtocolConfig};

/// What Tr' holds after one exchange: the reported TOA (when Tr includes it in
/// its replies) and its own TOR estimates, plus the protocol constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub t_a_hat: Option<f64>,
    pub t_r_hat: Vec<f64>,
    t_d_prime: f64,
    delays: Arc<[f64]>,
}

impl ObservationSet {
    /// Assembles an observation set from externally recorded timestamps.
    pub fn new(config: &ProtocolConfig, t_a_hat: Option<f64>, t_r_hat: Vec<f64>) -> Result<Self> {
        if t_r_hat.len() != config.n() {
            return Err(Error::DimensionMismatch {
                expected: config.n(),
                actual: t_r_hat.len(),
            });
        }
        Ok(Self {
            t_a_hat,
            t_r_hat,
            t_d_prime: config.t_d_prime(),
            delays: config.delays_shared(),
        })
    }

    pub fn n(&self) -> usize {
        self.t_r_hat.len()
    }

    pub fn t_d_prime(&self) -> f64 {
        self.t_d_prime
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// `X = t_r_hat - t'_D 1`.
    pub fn centered_returns(&self) -> Vec<f64> {
        self.t_r_hat.iter().map(|t| t - self.t_d_prime).collect()
    }

    /// Drops the TOA, as when Tr does not echo it back.
    pub fn without_toa(mut self) -> Self {
        self.t_a_hat = None;
        self
    }
}

/// Seed of the counter-based noise source. Each `(point, trial)` pair maps to
/// its own ChaCha stream, so draws do not depend on execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub seed: u64,
    /// Grid point discriminator used by sweeps; 0 for single scenarios.
    pub point: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, point: 0 }
    }

    pub fn at_point(self, point: u64) -> Self {
        Self { point, ..self }
    }

    /// Generator for one trial. Draw 0 is `eps_A`, draws `1..=N` are the TOR errors.
    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.point.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(trial);
        rng
    }
}

/// Noise-free observations.
pub fn ideal_observations(config: &ProtocolConfig, clock: &ClockParams) -> ObservationSet {
    assemble(config, clock, 0.0, |_| 0.0)
}

/// One noisy exchange. `eps_A ~ N(0, sigma_a^2)` is shared by all returns;
/// each `eps_R_n ~ N(0, alpha^2 sigma_r^2)` is independent.
pub fn run_exchange(
    config: &ProtocolConfig,
    clock: &ClockParams,
    noise: &NoiseModel,
    rng: &RngSpec,
    trial: u64,
) -> ObservationSet {
    let mut gen = rng.trial_rng(trial);
    let mut draw = || -> f64 { StandardNormal.sample(&mut gen) };
    let eps_a = noise.sigma_a() * draw();
    let sigma_r_prime = clock.alpha() * noise.sigma_r();
    let eps_r: Vec<f64> = (0..config.n()).map(|_| sigma_r_prime * draw()).collect();
    assemble(config, clock, eps_a, |n| eps_r[n])
}

fn assemble(config: &ProtocolConfig, clock: &ClockParams, eps_a: f64, eps_r: impl Fn(usize) -> f64) -> ObservationSet {
    let alpha = clock.alpha();
    let tau = config.tau();
    let t_d_prime = config.t_d_prime();
    let t_a = clock.true_from_local(t_d_prime) + tau;
    let t_a_hat = t_a + eps_a;
    let t_r_hat = config
        .delays()
        .iter()
        .enumerate()
        .map(|(n, delta)| t_d_prime + alpha * (2.0 * tau + delta) + alpha * eps_a + eps_r(n))
        .collect();
    ObservationSet {
        t_a_hat: Some(t_a_hat),
        t_r_hat,
        t_d_prime,
        delays: config.delays_shared(),
    }
}

/// Linear reply schedule `delta_k = k * delta_max / n`, `k = 1..=n`.
pub fn linear_delays(n: usize, delta_max: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid("n", format!("at least two replies are required, got {n}")));
    }
    if !(delta_max.is_finite() && delta_max > 0.0) {
        return Err(invalid("delta_max", format!("must be finite and > 0, got {delta_max}")));
    }
    Ok((1..=n).map(|k| delta_max * (k as f64 / n as f64)).collect())
}
