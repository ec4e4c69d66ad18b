//! The four subcommands as pure functions from configuration to output text.
//! File handling lives in the binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::crlb::crlb_alpha_tau;
use crate::empirical::estimate_empirical;
use crate::error::{Error, Result};
use crate::mle::MleSolver;
use crate::montecarlo::{run_sweep, Estimator};
use crate::numerics::{alpha1_weights, delay_offsets};
use crate::protocol::{run_exchange, ObservationSet};

use super::config::RunConfig;

pub const OBSERVATION_HEADER: &str = "trial,t_a_hat_s,r_index,t_r_hat_s";
pub const ESTIMATE_HEADER: &str =
    "trial,alpha1,alpha2,tau1_s,tau2_s,gamma11_s,gamma12_s,gamma21_s,gamma22_s,degenerate";
pub const SWEEP_HEADER: &str = "axis,value,estimator,std_sim,std_pred,bias,failures,trials,seed";

/// 17 significant digits, enough to reproduce any `f64` exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => fmt17(v),
        _ => String::new(),
    }
}

/// Simulated exchanges, one row per `(trial, reply)`; replies are numbered from 1.
pub fn simulate(cfg: &RunConfig, seed: Option<u64>) -> Result<String> {
    cfg.validate()?;
    let clock = cfg.clock()?;
    let config = cfg.protocol()?;
    let noise = cfg.noise()?;
    let rng = cfg.rng(seed);
    let mut out = String::new();
    writeln!(out, "{OBSERVATION_HEADER}").unwrap();
    for trial in 0..cfg.run.trials {
        let obs = run_exchange(&config, &clock, &noise, &rng, trial);
        write_observation(&mut out, trial, &obs);
    }
    Ok(out)
}

fn write_observation(out: &mut String, trial: u64, obs: &ObservationSet) {
    let t_a = fmt_opt(obs.t_a_hat);
    for (r, t) in obs.t_r_hat.iter().enumerate() {
        writeln!(out, "{trial},{t_a},{},{}", r + 1, fmt17(*t)).unwrap();
    }
}

/// Output of [`estimate`]: the CSV and any diagnostics for stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutput {
    pub csv: String,
    pub warnings: Vec<String>,
}

/// Per-trial estimates, either for recorded observations (CSV text in the
/// [`OBSERVATION_HEADER`] layout) or for exchanges simulated from the config.
pub fn estimate(cfg: &RunConfig, observations: Option<&str>, seed: Option<u64>) -> Result<EstimateOutput> {
    cfg.validate()?;
    let config = cfg.protocol()?;
    let noise = cfg.noise()?;
    if !(noise.sigma_r() > 0.0) {
        return Err(Error::Config("noise.sigma_r_s must be > 0 for estimation".into()));
    }
    let mut warnings = Vec::new();
    let sets: Vec<(u64, ObservationSet)> = match observations {
        Some(text) => {
            let (sets, toa_present) = parse_observations(text, &config)?;
            if !toa_present {
                warnings
                    .push("observations have no t_a_hat_s column; offset estimates (gamma*) left empty".to_string());
            }
            sets
        }
        None => {
            let clock = cfg.clock()?;
            let rng = cfg.rng(seed);
            (0..cfg.run.trials)
                .map(|t| (t, run_exchange(&config, &clock, &noise, &rng, t)))
                .collect()
        }
    };

    let solver = MleSolver::new(config.delays(), &noise)?;
    let mut csv = String::new();
    writeln!(csv, "{ESTIMATE_HEADER}").unwrap();
    for (trial, obs) in &sets {
        let emp = estimate_empirical(obs, &noise).ok();
        let (mle, degenerate) = match solver.estimate(obs) {
            Ok(m) => (Some(m), false),
            Err(Error::DegenerateDrift { .. }) => (None, true),
            Err(e) => return Err(e),
        };
        let alpha2 = match (&mle, degenerate) {
            (Some(m), _) => Some(m.alpha2),
            (None, true) => solver
                .weights()
                .forms(&obs.centered_returns())
                .ok()
                .map(|q| (q.b * q.e - q.c * q.d) / q.information_det()),
            _ => None,
        };
        writeln!(
            csv,
            "{trial},{},{},{},{},{},{},{},{},{}",
            fmt_opt(emp.map(|e| e.alpha1)),
            fmt_opt(alpha2),
            fmt_opt(emp.map(|e| e.tau1)),
            fmt_opt(mle.map(|m| m.tau2)),
            fmt_opt(emp.and_then(|e| e.gamma11)),
            fmt_opt(emp.and_then(|e| e.gamma12)),
            fmt_opt(mle.and_then(|m| m.gamma21)),
            fmt_opt(mle.and_then(|m| m.gamma22)),
            u8::from(degenerate),
        )
        .unwrap();
    }
    Ok(EstimateOutput { csv, warnings })
}

/// TOA (if any) and `(r_index, t_r_hat)` pairs of one trial.
type TrialRows = (Option<f64>, Vec<(usize, f64)>);

/// Parses an observation CSV. Returns the per-trial sets in trial order and
/// whether a `t_a_hat_s` column was present.
pub fn parse_observations(
    text: &str,
    config: &crate::model::ProtocolConfig,
) -> Result<(Vec<(u64, ObservationSet)>, bool)> {
    let bad = |msg: String| Error::Observations(msg);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let trial_col = column("trial").ok_or_else(|| bad("missing column `trial`".into()))?;
    let r_col = column("r_index").ok_or_else(|| bad("missing column `r_index`".into()))?;
    let t_col = column("t_r_hat_s").ok_or_else(|| bad("missing column `t_r_hat_s`".into()))?;
    let a_col = column("t_a_hat_s");

    let mut trials: BTreeMap<u64, TrialRows> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let row = line + 2;
        let trial: u64 = field(trial_col)
            .parse()
            .map_err(|_| bad(format!("row {row}: invalid trial `{}`", field(trial_col))))?;
        let r: usize = field(r_col)
            .parse()
            .map_err(|_| bad(format!("row {row}: invalid r_index `{}`", field(r_col))))?;
        let t: f64 = field(t_col)
            .parse()
            .map_err(|_| bad(format!("row {row}: invalid t_r_hat_s `{}`", field(t_col))))?;
        let t_a = match a_col.map(field) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse::<f64>()
                    .map_err(|_| bad(format!("row {row}: invalid t_a_hat_s `{s}`")))?,
            ),
        };
        let entry = trials.entry(trial).or_insert((None, Vec::new()));
        if entry.0.is_none() {
            entry.0 = t_a;
        }
        entry.1.push((r, t));
    }

    let n = config.n();
    let mut sets = Vec::with_capacity(trials.len());
    for (trial, (t_a, mut replies)) in trials {
        replies.sort_by_key(|(r, _)| *r);
        let indices: Vec<usize> = replies.iter().map(|(r, _)| *r).collect();
        if replies.len() != n {
            return Err(bad(format!(
                "trial {trial}: expected N = {n} replies (from config), got {}",
                replies.len()
            )));
        }
        if indices != (1..=n).collect::<Vec<_>>() {
            return Err(bad(format!("trial {trial}: r_index must cover 1..={n} exactly once")));
        }
        let t_r = replies.into_iter().map(|(_, t)| t).collect();
        sets.push((trial, ObservationSet::new(config, t_a, t_r)?));
    }
    Ok((sets, a_col.is_some()))
}

/// Bound summary as `key=value` lines.
pub fn crlb(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let clock = cfg.clock()?;
    let config = cfg.protocol()?;
    let noise = cfg.noise()?;
    let report = crlb_alpha_tau(clock.alpha(), config.tau(), config.delays(), &noise)?;
    let (_, a_total) = alpha1_weights(&delay_offsets(config.delays()), noise.sigma_r())?;

    let mut out = String::new();
    let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
    kv("alpha", fmt17(clock.alpha()));
    kv("tau_s", fmt17(config.tau()));
    kv("n", config.n().to_string());
    kv("sigma_a_s", fmt17(noise.sigma_a()));
    kv("sigma_r_s", fmt17(noise.sigma_r()));
    kv("c_alpha", fmt17(report.c_alpha));
    kv("sqrt_c_alpha", fmt17(report.c_alpha.sqrt()));
    kv("c_tau_s2", fmt17(report.c_tau));
    kv("sqrt_c_tau_s", fmt17(report.c_tau.sqrt()));
    kv("alpha1_var", fmt17(1.0 / a_total));
    kv("fim_alpha_alpha", fmt17(report.fim.alpha_alpha));
    kv("fim_alpha_tau", fmt17(report.fim.alpha_tau));
    kv("fim_tau_tau", fmt17(report.fim.tau_tau));
    Ok(out)
}

/// Output of [`sweep`]: CSV of the completed grid points and the failures.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub csv: String,
    pub failures: Vec<String>,
}

pub fn sweep(cfg: &RunConfig, seed: Option<u64>) -> Result<SweepOutput> {
    cfg.validate()?;
    let spec = cfg.sweep_spec(seed)?;
    let table = run_sweep(&spec);
    let mut csv = String::new();
    writeln!(csv, "{SWEEP_HEADER}").unwrap();
    let mut failures = Vec::new();
    for row in &table.rows {
        let stats = match &row.result {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("{}={}: {e}", table.axis, row.value));
                continue;
            }
        };
        for e in Estimator::ALL {
            let st = stats.get(e);
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                table.axis,
                fmt17(row.value),
                e,
                fmt_opt(Some(st.std)),
                fmt_opt(stats.predicted_std(e)),
                fmt_opt(Some(st.bias)),
                st.failures,
                stats.trials,
                table.seed,
            )
            .unwrap();
        }
        if stats.low_snr {
            failures.push(format!(
                "{}={}: low SNR, more than 1% of delay estimates degenerate",
                table.axis, row.value
            ));
        }
    }
    Ok(SweepOutput { csv, failures })
}
