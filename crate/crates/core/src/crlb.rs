//! Fisher information and Cramer-Rao bounds for drift and delay from the TOR
//! vector, plus the TOA accuracy bound `c_T = 1 / (rho beta^2)`.
//!
//! With mean `alpha (2 tau 1 + delta)` the mean derivatives are
//! `d/d alpha = 2 tau 1 + delta` and `d/d tau = 2 alpha 1`, giving
//! `f_aa = 4 tau^2 B + 4 tau D + F`, `f_tt = 4 alpha^2 B`, `f_at = 2 alpha (2 tau B + D)`.

use crate::error::{invalid, Error, Result};
use crate::model::NoiseModel;
use crate::numerics::{CovX, DelayWeights};

/// Symmetric 2x2 Fisher information for `(alpha, tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fim {
    pub alpha_alpha: f64,
    pub alpha_tau: f64,
    pub tau_tau: f64,
}

impl Fim {
    pub fn determinant(&self) -> f64 {
        self.alpha_alpha * self.tau_tau - self.alpha_tau * self.alpha_tau
    }

    /// Inverse as `(inv_aa, inv_at, inv_tt)`.
    pub fn inverse(&self) -> Result<(f64, f64, f64)> {
        let det = self.determinant();
        if !(det > 0.0) {
            return Err(Error::SingularInformation { det });
        }
        Ok((self.tau_tau / det, -self.alpha_tau / det, self.alpha_alpha / det))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrlbReport {
    /// Drift variance bound (dimensionless squared).
    pub c_alpha: f64,
    /// Delay variance bound, s^2.
    pub c_tau: f64,
    pub fim: Fim,
}

pub(crate) fn fim_from_weights(w: &DelayWeights, alpha: f64, tau: f64) -> Fim {
    let (b, d, f) = (w.b(), w.d(), w.f());
    Fim {
        alpha_alpha: 4.0 * tau * tau * b + 4.0 * tau * d + f,
        alpha_tau: 2.0 * alpha * (2.0 * tau * b + d),
        tau_tau: 4.0 * alpha * alpha * b,
    }
}

/// Bounds from precomputed `B, D, F`: `c_alpha = B / (BF - D^2)`,
/// `c_tau = (4 tau^2 B + 4 tau D + F) / (4 alpha^2 (BF - D^2))`.
///
/// `B / (BF - D^2)` is evaluated with the common factor `1 / (sigma_r^2 +
/// N sigma_a^2)` cancelled, i.e. as `sigma_r^2 / sum((delta - mean)^2)`, so the
/// drift bound carries no rounding dependence on `sigma_a`.
pub(crate) fn crlb_from_weights(w: &DelayWeights, alpha: f64, tau: f64) -> Result<CrlbReport> {
    let det = w.information_det();
    if !(det > 0.0) {
        return Err(Error::SingularInformation { det });
    }
    let fim = fim_from_weights(w, alpha, tau);
    Ok(CrlbReport {
        c_alpha: w.cov().sigma_r2() / w.spread(),
        c_tau: fim.alpha_alpha / (4.0 * alpha * alpha * det),
        fim,
    })
}

pub fn fim(alpha: f64, tau: f64, delta: &[f64], noise: &NoiseModel) -> Result<Fim> {
    let cov = CovX::from_noise(noise, delta.len())?;
    Ok(fim_from_weights(&DelayWeights::new(&cov, delta)?, alpha, tau))
}

pub fn crlb_alpha_tau(alpha: f64, tau: f64, delta: &[f64], noise: &NoiseModel) -> Result<CrlbReport> {
    let cov = CovX::from_noise(noise, delta.len())?;
    crlb_from_weights(&DelayWeights::new(&cov, delta)?, alpha, tau)
}

/// TOA variance bound `1 / (snr * beta^2)` for linear SNR and effective bandwidth `beta`.
pub fn toa_crlb(snr: f64, beta: f64) -> Result<f64> {
    if !(snr.is_finite() && snr > 0.0) {
        return Err(invalid("snr", format!("must be finite and > 0, got {snr}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid("beta", format!("must be finite and > 0, got {beta}")));
    }
    Ok(1.0 / (snr * beta * beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::population_variance;
    use crate::protocol::{linear_delays, RngSpec};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    const ALPHA: f64 = 1.00002;
    const TAU: f64 = 1e-7;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn default_noise() -> NoiseModel {
        NoiseModel::new(1e-10, 1e-10).unwrap()
    }

    #[test]
    fn zero_delay_fim_entries() {
        let delta = linear_delays(4, 1e-3).unwrap();
        let f = fim(ALPHA, 0.0, &delta, &default_noise()).unwrap();
        assert!(rel(f.alpha_alpha, 6.25e13) < 1e-12);
        assert!(rel(f.alpha_tau, 2.0 * ALPHA * 5e16) < 1e-12);
    }

    #[test]
    fn default_fim_and_bounds() {
        let delta = linear_delays(4, 1e-3).unwrap();
        let r = crlb_alpha_tau(ALPHA, TAU, &delta, &default_noise()).unwrap();
        // B = 8e19, D = 5e16, F = 6.25e13, BF - D^2 = 2.5e33
        assert!(rel(r.fim.tau_tau, 4.0 * ALPHA * ALPHA * 8e19) < 1e-12);
        assert!(rel(r.fim.tau_tau, 3.20013e20) < 1e-5);
        assert!(rel(r.c_alpha, 3.2e-14) < 1e-10);
        let num = 4.0 * TAU * TAU * 8e19 + 4.0 * TAU * 5e16 + 6.25e13;
        let c_tau = num / (4.0 * ALPHA * ALPHA * 2.5e33);
        assert!(rel(r.c_tau, c_tau) < 1e-10);
        assert!((r.c_tau.sqrt() - 79.06e-12).abs() < 0.02e-12);
    }

    #[test]
    fn constant_delays_have_singular_information() {
        let err = crlb_alpha_tau(ALPHA, TAU, &[1e-3; 4], &default_noise()).unwrap_err();
        assert!(matches!(err, Error::SingularInformation { .. }));
    }

    #[test]
    fn doubling_span_quarters_drift_bound() {
        let noise = default_noise();
        let c1 = crlb_alpha_tau(ALPHA, TAU, &linear_delays(4, 1e-3).unwrap(), &noise).unwrap();
        let c2 = crlb_alpha_tau(ALPHA, TAU, &linear_delays(4, 2e-3).unwrap(), &noise).unwrap();
        assert!(rel(c2.c_alpha, c1.c_alpha / 4.0) < 1e-10);
    }

    #[test]
    fn negligible_delay_terms_at_defaults() {
        let cov = CovX::from_noise(&default_noise(), 4).unwrap();
        let w = DelayWeights::new(&cov, &linear_delays(4, 1e-3).unwrap()).unwrap();
        let extra = 4.0 * TAU * TAU * w.b() + 4.0 * TAU * w.d();
        assert!(extra / w.f() <= 1e-3);
    }

    #[test]
    fn toa_bound_anchor_values() {
        let beta = 45.14e9;
        let ten_db = toa_crlb(10.0, beta).unwrap().sqrt();
        assert!((ten_db - 7.0e-12).abs() <= 0.1e-12, "{ten_db}");
        let thirty_db = toa_crlb(1000.0, beta).unwrap().sqrt();
        assert!((thirty_db - 0.70e-12).abs() <= 0.01e-12, "{thirty_db}");
        let quad = toa_crlb(40.0, beta).unwrap().sqrt();
        assert!(rel(quad, ten_db / 2.0) < 1e-14);
        assert!(toa_crlb(0.0, beta).is_err());
        assert!(toa_crlb(1.0, -1.0).is_err());
    }

    #[test]
    fn shared_noise_leaves_drift_bound_unchanged() {
        let delta = linear_delays(4, 1e-3).unwrap();
        let with = crlb_alpha_tau(ALPHA, TAU, &delta, &default_noise()).unwrap();
        let without = crlb_alpha_tau(ALPHA, TAU, &delta, &NoiseModel::new(0.0, 1e-10).unwrap()).unwrap();
        assert!(rel(with.c_alpha, without.c_alpha) < 1e-12);
    }

    /// Log-likelihood of the TOR vector up to a constant, by dense evaluation.
    fn log_likelihood(x: &[f64], alpha: f64, tau: f64, delta: &[f64], cov: &CovX) -> f64 {
        let r: Vec<f64> = x
            .iter()
            .zip(delta)
            .map(|(xi, d)| xi - alpha * (2.0 * tau + d))
            .collect();
        let w = cov.inv_apply(&r).unwrap();
        -0.5 * r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
    }

    #[test]
    fn fim_matches_expected_negative_hessian() {
        let noise = default_noise();
        let delta = linear_delays(4, 1e-3).unwrap();
        let cov = CovX::from_noise(&noise, 4).unwrap();
        let mu: Vec<f64> = delta.iter().map(|d| ALPHA * (2.0 * TAU + d)).collect();
        let (ha, ht) = (1e-7, 1e-11);
        let rng = RngSpec::new(5);
        let trials = 100_000u64;
        let (mut aa, mut at, mut tt) = (0.0, 0.0, 0.0);
        for trial in 0..trials {
            let mut gen = rng.trial_rng(trial);
            let eps_a: f64 = StandardNormal.sample(&mut gen);
            let x: Vec<f64> = mu
                .iter()
                .map(|m| {
                    let e: f64 = StandardNormal.sample(&mut gen);
                    m + noise.sigma_a() * eps_a + noise.sigma_r() * e
                })
                .collect();
            let ll = |a: f64, t: f64| log_likelihood(&x, a, t, &delta, &cov);
            let l0 = ll(ALPHA, TAU);
            aa -= (ll(ALPHA + ha, TAU) - 2.0 * l0 + ll(ALPHA - ha, TAU)) / (ha * ha);
            tt -= (ll(ALPHA, TAU + ht) - 2.0 * l0 + ll(ALPHA, TAU - ht)) / (ht * ht);
            at -= (ll(ALPHA + ha, TAU + ht) - ll(ALPHA + ha, TAU - ht) - ll(ALPHA - ha, TAU + ht)
                + ll(ALPHA - ha, TAU - ht))
                / (4.0 * ha * ht);
        }
        let n = trials as f64;
        let f = fim(ALPHA, TAU, &delta, &noise).unwrap();
        assert!(rel(aa / n, f.alpha_alpha) < 0.01, "{} vs {}", aa / n, f.alpha_alpha);
        assert!(rel(at / n, f.alpha_tau) < 0.01, "{} vs {}", at / n, f.alpha_tau);
        assert!(rel(tt / n, f.tau_tau) < 0.01, "{} vs {}", tt / n, f.tau_tau);
    }

    fn cumulative(steps: Vec<f64>) -> Vec<f64> {
        let mut acc = 0.0;
        steps
            .into_iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn drift_bound_closed_form(
            sa in 1e-12f64..1e-9,
            sr in 1e-12f64..1e-9,
            nu in -100.0f64..100.0,
            tau in 0.0f64..1e-5,
            steps in proptest::collection::vec(1e-5f64..1e-3, 2..32),
        ) {
            let delta = cumulative(steps);
            let noise = NoiseModel::new(sa, sr).unwrap();
            let alpha = 1.0 + nu * 1e-6;
            let r = crlb_alpha_tau(alpha, tau, &delta, &noise).unwrap();
            let closed = sr * sr / (delta.len() as f64 * population_variance(&delta));
            prop_assert!(rel(r.c_alpha, closed) <= 1e-9);

            let (inv_aa, _, inv_tt) = r.fim.inverse().unwrap();
            prop_assert!(rel(inv_aa, r.c_alpha) <= 1e-10);
            prop_assert!(rel(inv_tt, r.c_tau) <= 1e-10);
            prop_assert!(r.c_alpha * r.fim.alpha_alpha >= 1.0 - 1e-12);
            prop_assert!(r.c_tau * r.fim.tau_tau >= 1.0 - 1e-12);
        }

        #[test]
        fn bounds_monotone_in_noise(
            sa in 1e-12f64..1e-9,
            sr in 1e-12f64..1e-9,
            bump in 1.01f64..10.0,
        ) {
            let delta = linear_delays(4, 1e-3).unwrap();
            let base = crlb_alpha_tau(ALPHA, TAU, &delta, &NoiseModel::new(sa, sr).unwrap()).unwrap();
            let more_a = crlb_alpha_tau(ALPHA, TAU, &delta, &NoiseModel::new(sa * bump, sr).unwrap()).unwrap();
            let more_r = crlb_alpha_tau(ALPHA, TAU, &delta, &NoiseModel::new(sa, sr * bump).unwrap()).unwrap();
            prop_assert!(more_a.c_tau > base.c_tau);
            prop_assert!(more_r.c_tau > base.c_tau);
            prop_assert!(rel(more_a.c_alpha, base.c_alpha) <= 1e-10);
        }
    }

    #[test]
    fn bounds_decrease_with_more_replies() {
        let noise = default_noise();
        let mut prev: Option<CrlbReport> = None;
        for n in [2, 3, 4, 8, 16, 32] {
            let r = crlb_alpha_tau(ALPHA, TAU, &linear_delays(n, 1e-3).unwrap(), &noise).unwrap();
            if let Some(p) = prev {
                assert!(r.c_alpha < p.c_alpha);
                assert!(r.c_tau < p.c_tau);
            }
            prev = Some(r);
        }
    }
}
