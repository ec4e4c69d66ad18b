//! Monte Carlo trial engine and one-axis parameter sweeps.
//!
//! Every trial draws from its own ChaCha stream and is evaluated
//! independently; per-trial outcomes are collected in trial order and reduced
//! sequentially, so parallel and sequential runs give identical bits.

use std::fmt;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::empirical::{estimate_tau1, offset_estimates, weighted_alpha};
use crate::error::{invalid, Error, Result};
use crate::mle::MleSolver;
use crate::model::{ClockParams, NoiseModel, ProtocolConfig};
use crate::numerics::{alpha1_weights, delay_offsets};
use crate::protocol::{linear_delays, run_exchange, ObservationSet, RngSpec};

/// Fraction of degenerate delay estimates above which a scenario is flagged low-SNR.
pub const LOW_SNR_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub clock: ClockParams,
    pub config: ProtocolConfig,
    /// Noise injected by the simulation.
    pub noise: NoiseModel,
    /// Noise model assumed by the estimators and the predicted variances.
    /// Equal to `noise` unless overridden, e.g. for noise-free runs where the
    /// true covariance is singular.
    pub estimator_noise: NoiseModel,
    pub trials: u64,
    pub rng: RngSpec,
}

impl Scenario {
    pub fn new(
        clock: ClockParams,
        config: ProtocolConfig,
        noise: NoiseModel,
        trials: u64,
        rng: RngSpec,
    ) -> Result<Self> {
        if trials < 2 {
            return Err(invalid(
                "trials",
                format!("at least two trials are required, got {trials}"),
            ));
        }
        Ok(Self {
            clock,
            config,
            noise,
            estimator_noise: noise,
            trials,
            rng,
        })
    }

    /// The reference scenario: 20 ppm drift, 1 us offset, 100 ns delay,
    /// sigma_A = sigma_R = 0.1 ns, four replies spread linearly up to 1 ms,
    /// 10^4 trials.
    pub fn reference(seed: u64) -> Self {
        let clock = ClockParams::from_ppm(20.0, 1e-6).expect("valid clock");
        let delays = linear_delays(4, 1e-3).expect("valid schedule");
        let config = ProtocolConfig::new(0.0, delays, 1e-7).expect("valid protocol");
        let noise = NoiseModel::new(1e-10, 1e-10).expect("valid noise");
        Self::new(clock, config, noise, 10_000, RngSpec::new(seed)).expect("valid scenario")
    }

    pub fn with_estimator_noise(mut self, noise: NoiseModel) -> Self {
        self.estimator_noise = noise;
        self
    }
}

/// The eight estimators, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Alpha1,
    Alpha2,
    Tau1,
    Tau2,
    Gamma11,
    Gamma12,
    Gamma21,
    Gamma22,
}

impl Estimator {
    pub const ALL: [Estimator; 8] = [
        Estimator::Alpha1,
        Estimator::Alpha2,
        Estimator::Tau1,
        Estimator::Tau2,
        Estimator::Gamma11,
        Estimator::Gamma12,
        Estimator::Gamma21,
        Estimator::Gamma22,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Alpha1 => "alpha1",
            Estimator::Alpha2 => "alpha2",
            Estimator::Tau1 => "tau1",
            Estimator::Tau2 => "tau2",
            Estimator::Gamma11 => "gamma11",
            Estimator::Gamma12 => "gamma12",
            Estimator::Gamma21 => "gamma21",
            Estimator::Gamma22 => "gamma22",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn truth(self, s: &Scenario) -> f64 {
        match self {
            Estimator::Alpha1 | Estimator::Alpha2 => s.clock.alpha(),
            Estimator::Tau1 | Estimator::Tau2 => s.config.tau(),
            _ => s.clock.gamma(),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sample statistics of one estimator over the successful trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub mean: f64,
    pub bias: f64,
    /// Divisor `M - 1` over successful trials.
    pub std: f64,
    pub successes: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStats {
    pub trials: u64,
    per_estimator: [SampleStats; 8],
    /// `sqrt(1 / A)`.
    pub kappa_alpha1: f64,
    /// `sqrt(c_alpha)`.
    pub kappa_alpha2: f64,
    /// `sqrt(c_tau)` at the true parameters.
    pub kappa_tau2: f64,
    pub low_snr: bool,
}

impl EstimatorStats {
    pub fn get(&self, e: Estimator) -> &SampleStats {
        &self.per_estimator[e.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Estimator, &SampleStats)> {
        Estimator::ALL.iter().map(move |e| (*e, self.get(*e)))
    }

    /// Predicted standard deviation, where one exists.
    pub fn predicted_std(&self, e: Estimator) -> Option<f64> {
        match e {
            Estimator::Alpha1 => Some(self.kappa_alpha1),
            Estimator::Alpha2 => Some(self.kappa_alpha2),
            Estimator::Tau2 => Some(self.kappa_tau2),
            _ => None,
        }
    }
}

/// Estimator values of one trial; `None` marks a failed estimate.
pub type TrialOutcome = [Option<f64>; 8];

/// Per-scenario quantities shared by every trial.
struct TrialContext<'a> {
    scenario: &'a Scenario,
    offsets: Vec<f64>,
    alpha_weights: Vec<f64>,
    alpha_total: f64,
    mle: MleSolver,
}

impl<'a> TrialContext<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self> {
        let delays = scenario.config.delays();
        let offsets = delay_offsets(delays);
        let (alpha_weights, alpha_total) = alpha1_weights(&offsets, scenario.estimator_noise.sigma_r())?;
        let mle = MleSolver::new(delays, &scenario.estimator_noise)?;
        Ok(Self {
            scenario,
            offsets,
            alpha_weights,
            alpha_total,
            mle,
        })
    }

    fn evaluate(&self, obs: &ObservationSet) -> TrialOutcome {
        let mut out = [None; 8];
        let alpha1 = weighted_alpha(obs, &self.offsets, &self.alpha_weights, self.alpha_total);
        out[Estimator::Alpha1.index()] = Some(alpha1);
        if let Ok(tau1) = estimate_tau1(obs, alpha1) {
            out[Estimator::Tau1.index()] = Some(tau1);
            if let Ok((g11, g12)) = offset_estimates(obs, alpha1, tau1) {
                out[Estimator::Gamma11.index()] = Some(g11);
                out[Estimator::Gamma12.index()] = Some(g12);
            }
        }
        match self.mle.solve(&obs.centered_returns()) {
            Ok((alpha2, tau2)) => {
                out[Estimator::Alpha2.index()] = Some(alpha2);
                out[Estimator::Tau2.index()] = Some(tau2);
                if let Ok((g21, g22)) = offset_estimates(obs, alpha2, tau2) {
                    out[Estimator::Gamma21.index()] = Some(g21);
                    out[Estimator::Gamma22.index()] = Some(g22);
                }
            }
            Err(Error::DegenerateDrift { alpha2 }) => {
                out[Estimator::Alpha2.index()] = Some(alpha2);
            }
            Err(_) => {}
        }
        out
    }

    fn trial(&self, index: u64) -> TrialOutcome {
        let s = self.scenario;
        let obs = run_exchange(&s.config, &s.clock, &s.noise, &s.rng, index);
        self.evaluate(&obs)
    }
}

/// How trials are dispatched. Both modes produce identical results; without
/// the `parallel` feature `Parallel` runs sequentially.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Runs every trial of the scenario and reduces them in trial order.
pub fn run_trials(s: &Scenario) -> Result<EstimatorStats> {
    run_trials_with(s, Execution::default())
}

pub fn run_trials_with(s: &Scenario, exec: Execution) -> Result<EstimatorStats> {
    if s.trials < 2 {
        return Err(invalid(
            "trials",
            format!("at least two trials are required, got {}", s.trials),
        ));
    }
    let ctx = TrialContext::new(s)?;
    let outcomes = collect_outcomes(&ctx, exec);
    summarize(s, &ctx, &outcomes)
}

fn collect_outcomes(ctx: &TrialContext<'_>, exec: Execution) -> Vec<TrialOutcome> {
    let m = ctx.scenario.trials;
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => (0..m).into_par_iter().map(|i| ctx.trial(i)).collect(),
        _ => (0..m).map(|i| ctx.trial(i)).collect(),
    }
}

fn summarize(s: &Scenario, ctx: &TrialContext<'_>, outcomes: &[TrialOutcome]) -> Result<EstimatorStats> {
    let per_estimator = Estimator::ALL.map(|e| {
        let values: Vec<f64> = outcomes.iter().filter_map(|o| o[e.index()]).collect();
        sample_stats(&values, e.truth(s), outcomes.len() as u64)
    });
    let report = crate::crlb::crlb_from_weights(ctx.mle.weights(), s.clock.alpha(), s.config.tau())?;
    let tau2_failures = per_estimator[Estimator::Tau2.index()].failures;
    Ok(EstimatorStats {
        trials: s.trials,
        per_estimator,
        kappa_alpha1: (1.0 / ctx.alpha_total).sqrt(),
        kappa_alpha2: report.c_alpha.sqrt(),
        kappa_tau2: report.c_tau.sqrt(),
        low_snr: tau2_failures as f64 > LOW_SNR_FAILURE_FRACTION * s.trials as f64,
    })
}

fn sample_stats(values: &[f64], truth: f64, total: u64) -> SampleStats {
    let k = values.len();
    let (mean, std) = match k {
        0 => (f64::NAN, f64::NAN),
        1 => (values[0], 0.0),
        _ => {
            let mean = values.iter().sum::<f64>() / k as f64;
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (mean, (ss / (k - 1) as f64).sqrt())
        }
    };
    SampleStats {
        mean,
        bias: mean - truth,
        std,
        successes: k as u64,
        failures: total - k as u64,
    }
}

/// Sweepable scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    SigmaA,
    SigmaR,
    /// Largest reply delay under the linear schedule, keeping `N`.
    DeltaNMax,
    /// Number of replies under the linear schedule, keeping the largest delay.
    NReplies,
}

impl SweepAxis {
    pub const NAMES: [&'static str; 4] = ["sigma_a", "sigma_r", "delta_n_max", "n_replies"];

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SigmaA => "sigma_a",
            SweepAxis::SigmaR => "sigma_r",
            SweepAxis::DeltaNMax => "delta_n_max",
            SweepAxis::NReplies => "n_replies",
        }
    }

    /// Scenario at grid value `value`. The estimator noise follows the injected noise.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = base.clone();
        match self {
            SweepAxis::SigmaA => {
                s.noise = NoiseModel::new(value, base.noise.sigma_r())?;
                s.estimator_noise = NoiseModel::new(value, base.estimator_noise.sigma_r())?;
            }
            SweepAxis::SigmaR => {
                s.noise = NoiseModel::new(base.noise.sigma_a(), value)?;
                s.estimator_noise = NoiseModel::new(base.estimator_noise.sigma_a(), value)?;
            }
            SweepAxis::DeltaNMax => {
                s.config = base.config.with_delays(linear_delays(base.config.n(), value)?)?;
            }
            SweepAxis::NReplies => {
                if !(value.fract() == 0.0 && value >= 2.0 && value <= u32::MAX as f64) {
                    return Err(invalid("n_replies", format!("must be an integer >= 2, got {value}")));
                }
                let delta_max = *base.config.delays().last().expect("N >= 2");
                s.config = base.config.with_delays(linear_delays(value as usize, delta_max)?)?;
            }
        }
        Ok(s)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma_a" => Ok(SweepAxis::SigmaA),
            "sigma_r" => Ok(SweepAxis::SigmaR),
            "delta_n_max" => Ok(SweepAxis::DeltaNMax),
            "n_replies" => Ok(SweepAxis::NReplies),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}`; expected one of: {}",
                SweepAxis::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub base: Scenario,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, grid: Vec<f64>, base: Scenario) -> Result<Self> {
        if grid.is_empty() {
            return Err(invalid("grid", "at least one value is required"));
        }
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid", "values must be finite"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid", "values must be strictly increasing"));
        }
        Ok(Self { axis, grid, base })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub result: Result<EstimatorStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> impl Iterator<Item = (f64, &Error)> {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r.value, e)))
    }

    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.result.is_ok())
    }
}

/// One [`EstimatorStats`] per grid value. Point `k` uses substream point `k`
/// of the base seed. A failing point is recorded and the sweep continues.
pub fn run_sweep(spec: &SweepSpec) -> SweepTable {
    run_sweep_with(spec, Execution::default())
}

pub fn run_sweep_with(spec: &SweepSpec, exec: Execution) -> SweepTable {
    let rows = spec
        .grid
        .iter()
        .enumerate()
        .map(|(k, &value)| {
            let result = spec.axis.apply(&spec.base, value).and_then(|mut s| {
                s.rng = spec.base.rng.at_point(k as u64);
                run_trials_with(&s, exec)
            });
            SweepRow { value, result }
        })
        .collect();
    SweepTable {
        axis: spec.axis,
        seed: spec.base.rng.seed,
        rows,
    }
}
