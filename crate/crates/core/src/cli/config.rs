//! Run configuration file: a TOML document with sections `clock`, `protocol`,
//! `noise`, `run` and an optional `sweep`. Missing values take the reference
//! scenario defaults; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::crlb::toa_crlb;
use crate::error::{Error, Result};
use crate::model::{ClockParams, NoiseModel, ProtocolConfig};
use crate::montecarlo::{Scenario, SweepAxis, SweepSpec};
use crate::protocol::{linear_delays, RngSpec};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub clock: ClockSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    #[serde(default = "default_nu_ppm")]
    pub nu_ppm: f64,
    #[serde(default = "default_gamma")]
    pub gamma_s: f64,
}

impl Default for ClockSection {
    fn default() -> Self {
        Self {
            nu_ppm: default_nu_ppm(),
            gamma_s: default_gamma(),
        }
    }
}

/// Reply delays are given either explicitly (`delays_s`) or as a schedule
/// (`n`, `delta_max_s`, `schedule = "linear"`). Without either, the linear
/// schedule with four replies up to 1 ms is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default = "default_tau")]
    pub tau_s: f64,
    #[serde(default)]
    pub t_d_prime_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            tau_s: default_tau(),
            t_d_prime_s: 0.0,
            delays_s: None,
            n: None,
            delta_max_s: None,
            schedule: None,
        }
    }
}

/// Each noise role takes either a direct standard deviation or an
/// `(snr_db, beta_hz)` pair mapped through the TOA bound. Unset roles default
/// to 0.1 ns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_a_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_r_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_a_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_a_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_r_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_r_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    pub values: Vec<f64>,
}

fn default_nu_ppm() -> f64 {
    20.0
}

fn default_gamma() -> f64 {
    1e-6
}

fn default_tau() -> f64 {
    1e-7
}

fn default_trials() -> u64 {
    10_000
}

fn default_seed() -> u64 {
    1
}

const DEFAULT_SIGMA: f64 = 1e-10;

fn key_error(key: &str, err: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {err}"))
}

/// `10^(db / 10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks every section without building a scenario.
    pub fn validate(&self) -> Result<()> {
        self.clock()?;
        self.protocol()?;
        self.noise()?;
        if self.run.trials < 1 {
            return Err(Error::Config("run.trials must be ≥ 1".into()));
        }
        if let Some(sweep) = &self.sweep {
            sweep.axis.parse::<SweepAxis>()?;
            if sweep.values.is_empty() {
                return Err(Error::Config("sweep.values must not be empty".into()));
            }
        }
        Ok(())
    }

    pub fn clock(&self) -> Result<ClockParams> {
        ClockParams::from_ppm(self.clock.nu_ppm, self.clock.gamma_s).map_err(|e| key_error("clock", e))
    }

    pub fn delays(&self) -> Result<Vec<f64>> {
        let p = &self.protocol;
        let schedule_given = p.n.is_some() || p.delta_max_s.is_some() || p.schedule.is_some();
        match (&p.delays_s, schedule_given) {
            (Some(_), true) => Err(Error::Config(
                "protocol.delays_s: give either delays_s or the schedule form (n, delta_max_s, schedule), not both"
                    .into(),
            )),
            (Some(d), false) => Ok(d.clone()),
            (None, _) => {
                if let Some(kind) = &p.schedule {
                    if kind != "linear" {
                        return Err(Error::Config(format!(
                            "protocol.schedule: unsupported schedule `{kind}`; expected `linear`"
                        )));
                    }
                }
                let n = p.n.unwrap_or(4);
                let delta_max = p.delta_max_s.unwrap_or(1e-3);
                linear_delays(n, delta_max).map_err(|e| key_error("protocol", e))
            }
        }
    }

    pub fn protocol(&self) -> Result<ProtocolConfig> {
        ProtocolConfig::new(self.protocol.t_d_prime_s, self.delays()?, self.protocol.tau_s)
            .map_err(|e| key_error("protocol", e))
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        let n = &self.noise;
        let sigma_a = role_sigma("a", n.sigma_a_s, n.snr_a_db, n.beta_a_hz)?;
        let sigma_r = role_sigma("r", n.sigma_r_s, n.snr_r_db, n.beta_r_hz)?;
        NoiseModel::new(sigma_a, sigma_r).map_err(|e| key_error("noise", e))
    }

    pub fn rng(&self, seed_override: Option<u64>) -> RngSpec {
        RngSpec::new(seed_override.unwrap_or(self.run.seed))
    }

    pub fn scenario(&self, seed_override: Option<u64>) -> Result<Scenario> {
        if self.run.trials < 2 {
            return Err(Error::Config(
                "run.trials must be ≥ 2 for Monte Carlo statistics".into(),
            ));
        }
        Scenario::new(
            self.clock()?,
            self.protocol()?,
            self.noise()?,
            self.run.trials,
            self.rng(seed_override),
        )
        .map_err(|e| key_error("run", e))
    }

    pub fn sweep_spec(&self, seed_override: Option<u64>) -> Result<SweepSpec> {
        let sweep = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("sweep: section missing (needs axis and values)".into()))?;
        let axis: SweepAxis = sweep.axis.parse()?;
        SweepSpec::new(axis, sweep.values.clone(), self.scenario(seed_override)?)
            .map_err(|e| key_error("sweep.values", e))
    }
}

fn role_sigma(role: &str, sigma: Option<f64>, snr_db: Option<f64>, beta: Option<f64>) -> Result<f64> {
    match (sigma, snr_db, beta) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(Error::Config(format!(
            "noise.sigma_{role}_s: give either sigma_{role}_s or (snr_{role}_db, beta_{role}_hz), not both"
        ))),
        (Some(s), None, None) => Ok(s),
        (None, Some(db), Some(b)) => toa_crlb(db_to_linear(db), b)
            .map(f64::sqrt)
            .map_err(|e| Error::Config(format!("noise.snr_{role}_db / noise.beta_{role}_hz: {e}"))),
        (None, Some(_), None) => Err(Error::Config(format!(
            "noise.beta_{role}_hz: required with snr_{role}_db"
        ))),
        (None, None, Some(_)) => Err(Error::Config(format!(
            "noise.snr_{role}_db: required with beta_{role}_hz"
        ))),
        (None, None, None) => Ok(DEFAULT_SIGMA),
    }
}
