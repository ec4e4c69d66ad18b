//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line with the
//! measured quantity; the test fails if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see the report.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twr_core::cli::{self, RunConfig};
use twr_core::crlb::{crlb_alpha_tau, toa_crlb};
use twr_core::empirical::estimate_empirical;
use twr_core::mle::estimate_mle;
use twr_core::montecarlo::{run_sweep, run_trials, Estimator, EstimatorStats, Scenario, SweepAxis, SweepSpec};
use twr_core::numerics::{alpha1_weights, delay_offsets, generic_spd_inverse, CovX};
use twr_core::protocol::{ideal_observations, linear_delays};
use twr_core::{ClockParams, NoiseModel, ProtocolConfig};

const SEED: u64 = 20_240_601;
const RANDOM_CONFIGS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target.abs()
}

fn config_rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SEED ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Increasing delays ending at `delta_max`: either the linear schedule or
/// random positive steps.
fn random_delays(rng: &mut ChaCha8Rng, n: usize, delta_max: f64) -> Vec<f64> {
    if rng.random_bool(0.5) {
        return linear_delays(n, delta_max).unwrap();
    }
    let steps: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = steps.iter().sum();
    let mut acc = 0.0;
    steps
        .iter()
        .map(|s| {
            acc += s;
            delta_max * acc / total
        })
        .collect()
}

fn c1_toa_anchor() -> Outcome {
    let beta = 45.14e9;
    let ten = toa_crlb(10.0, beta).unwrap().sqrt();
    let thirty = toa_crlb(1000.0, beta).unwrap().sqrt();
    let pass = within(ten, 7.0e-12, 0.02) && within(thirty, 0.70e-12, 0.02);
    Outcome::new(
        pass,
        format!(
            "sqrt(c_T) = {:.4} ps at 10 dB, {:.4} ps at 30 dB",
            ten * 1e12,
            thirty * 1e12
        ),
    )
}

fn c2_error_free() -> Outcome {
    let mut rng = config_rng(2);
    let noise = NoiseModel::new(1e-10, 1e-10).unwrap();
    let (mut worst_rel, mut worst_gamma) = (0.0f64, 0.0f64);
    for _ in 0..RANDOM_CONFIGS {
        let clock = ClockParams::from_ppm(rng.random_range(-50.0..50.0), rng.random_range(-1e-3..1e-3)).unwrap();
        let n = rng.random_range(2..=16);
        // Timestamps near delta_N carry an absolute rounding of about
        // eps * delta_N, so delay accuracy is capped near eps * delta_N / tau.
        let tau = 10f64.powf(rng.random_range(-7.0..-6.0));
        let delta_max = tau * 10f64.powf(rng.random_range(1.0..3.0));
        let delays = random_delays(&mut rng, n, delta_max);
        let config = ProtocolConfig::new(rng.random_range(-1e-3..1e-3), delays, tau).unwrap();
        let obs = ideal_observations(&config, &clock);
        let emp = estimate_empirical(&obs, &noise).unwrap();
        let mle = estimate_mle(&obs, &noise).unwrap();
        for a in [emp.alpha1, mle.alpha2] {
            worst_rel = worst_rel.max(rel(a, clock.alpha()));
        }
        for t in [emp.tau1, mle.tau2] {
            worst_rel = worst_rel.max(rel(t, tau));
        }
        for g in [emp.gamma11, emp.gamma12, mle.gamma21, mle.gamma22] {
            worst_gamma = worst_gamma.max((g.unwrap() - clock.gamma()).abs());
        }
    }
    Outcome::new(
        worst_rel <= 1e-12 && worst_gamma <= 1e-15,
        format!("worst relative error {worst_rel:.2e} (alpha, tau), worst |gamma error| {worst_gamma:.2e} s"),
    )
}

fn c3_c4_mle_efficiency(stats: &EstimatorStats) -> (Outcome, Outcome) {
    let std_a = stats.get(Estimator::Alpha2).std;
    let std_t = stats.get(Estimator::Tau2).std;
    let a = Outcome::new(
        within(std_a, 1.78885e-7, 0.07),
        format!(
            "std(alpha2) = {std_a:.5e}, bound {:.5e}, ratio {:.4}",
            1.78885e-7,
            std_a / 1.78885e-7
        ),
    );
    let t = Outcome::new(
        within(std_t, 79.06e-12, 0.07),
        format!(
            "std(tau2) = {:.3} ps, bound 79.06 ps, ratio {:.4}",
            std_t * 1e12,
            std_t / 79.06e-12
        ),
    );
    (a, t)
}

fn c5_empirical_equals_optimal() -> Outcome {
    let mut rng = config_rng(5);
    let mut worst = 0.0f64;
    for _ in 0..RANDOM_CONFIGS {
        let n = rng.random_range(2..=32);
        let delta_max = rng.random_range(1e-4..1e-3);
        let delays = random_delays(&mut rng, n, delta_max);
        let noise = NoiseModel::new(rng.random_range(1e-12..1e-9), rng.random_range(1e-12..1e-9)).unwrap();
        let (_, a_total) = alpha1_weights(&delay_offsets(&delays), noise.sigma_r()).unwrap();
        let bound = crlb_alpha_tau(
            rng.random_range(0.9999..1.0001),
            rng.random_range(1e-8..1e-6),
            &delays,
            &noise,
        )
        .unwrap()
        .c_alpha;
        worst = worst.max(rel(1.0 / a_total, bound));
    }
    Outcome::new(
        worst <= 1e-9,
        format!("worst relative gap between 1/A and c_alpha {worst:.2e}"),
    )
}

fn c6_downdate_oracle() -> Outcome {
    let mut rng = config_rng(6);
    let mut worst = 0.0f64;
    for _ in 0..RANDOM_CONFIGS {
        let n = rng.random_range(1..=64);
        let sigma_r = 10f64.powf(rng.random_range(-12.0..-9.0));
        let sigma_a = sigma_r * rng.random_range(0.0..10.0);
        let cov = CovX::new(sigma_a * sigma_a, sigma_r * sigma_r, n).unwrap();
        let dense = generic_spd_inverse(&cov.to_dense()).unwrap();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = cov.inv_apply(&e).unwrap();
            for (i, v) in col.iter().enumerate() {
                worst = worst.max(rel(*v, dense.get(i, j)));
            }
        }
    }
    Outcome::new(
        worst <= 1e-10,
        format!("worst elementwise relative difference {worst:.2e}"),
    )
}

fn sweep(axis: SweepAxis, grid: &[f64], point_seed: u64) -> Vec<EstimatorStats> {
    let spec = SweepSpec::new(axis, grid.to_vec(), Scenario::reference(point_seed)).unwrap();
    run_sweep(&spec)
        .rows
        .into_iter()
        .map(|row| row.result.expect("sweep point failed"))
        .collect()
}

fn stds(points: &[EstimatorStats], e: Estimator) -> Vec<f64> {
    points.iter().map(|p| p.get(e).std).collect()
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn fmt_ps(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{:.2}", x * 1e12))
        .collect::<Vec<_>>()
        .join(" < ")
}

const SIGMA_GRID: [f64; 3] = [1e-11, 1e-10, 1e-9];

fn c7_sigma_a_independence(points: &[EstimatorStats]) -> Outcome {
    let bits: Vec<u64> = points.iter().map(|p| p.kappa_alpha2.to_bits()).collect();
    let identical = bits.windows(2).all(|w| w[0] == w[1]);
    let kappa = points[0].kappa_alpha2;
    let mut ratios = Vec::new();
    for p in points {
        for e in [Estimator::Alpha1, Estimator::Alpha2] {
            ratios.push(p.get(e).std / kappa);
        }
    }
    let within_band = ratios.iter().all(|r| (0.93..=1.07).contains(r));
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.4}")).collect();
    Outcome::new(
        identical && within_band,
        format!(
            "c_alpha bit-identical: {identical}; std/sqrt(c_alpha) = [{}]",
            shown.join(", ")
        ),
    )
}

fn c8_trends(sigma_a_points: &[EstimatorStats]) -> Outcome {
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    // (i) offset and delay spreads grow with sigma_a
    for e in [
        Estimator::Tau1,
        Estimator::Tau2,
        Estimator::Gamma11,
        Estimator::Gamma12,
        Estimator::Gamma21,
        Estimator::Gamma22,
    ] {
        let s = stds(sigma_a_points, e);
        if !strictly_increasing(&s) {
            failures.push(format!("(i) {e}: {}", fmt_ps(&s)));
        }
    }

    // (ii) drift spreads grow with sigma_r
    let sigma_r_points = sweep(SweepAxis::SigmaR, &SIGMA_GRID, SEED + 82);
    for e in [Estimator::Alpha1, Estimator::Alpha2] {
        let s = stds(&sigma_r_points, e);
        if !strictly_increasing(&s) {
            failures.push(format!("(ii) {e}: {s:?}"));
        }
    }

    // (iii) kappa_alpha2 ~ 1/delta_N
    let span_grid = [2.5e-4, 5e-4, 1e-3, 2e-3, 4e-3];
    let span_points = sweep(SweepAxis::DeltaNMax, &span_grid, SEED + 83);
    let xs: Vec<f64> = span_grid.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = span_points.iter().map(|p| p.kappa_alpha2.ln()).collect();
    let slope = ls_slope(&xs, &ys);
    notes.push(format!("slope {slope:.6}"));
    if (slope + 1.0).abs() > 0.02 {
        failures.push(format!("(iii) log-log slope {slope}"));
    }

    // (iv) every spread shrinks as replies are added
    let n_points = sweep(SweepAxis::NReplies, &[2.0, 4.0, 8.0, 16.0], SEED + 84);
    for e in Estimator::ALL {
        let s = stds(&n_points, e);
        if !non_increasing(&s) {
            failures.push(format!("(iv) {e}: {s:?}"));
        }
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!("(i)-(iv) hold; {}", notes.join(", "))
    } else {
        failures.join("; ")
    };
    Outcome::new(pass, detail)
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn c9_unbiasedness(stats: &EstimatorStats) -> Outcome {
    let m = stats.trials as f64;
    let mut worst = 0.0f64;
    let mut offenders = Vec::new();
    for (e, s) in stats.iter() {
        let score = s.bias.abs() / (s.std / m.sqrt());
        worst = worst.max(score);
        if score > 3.0 {
            offenders.push(format!("{e} ({score:.2})"));
        }
    }
    Outcome::new(
        offenders.is_empty(),
        if offenders.is_empty() {
            format!("largest |bias| / (std / sqrt(M)) = {worst:.3}")
        } else {
            format!("biased: {}", offenders.join(", "))
        },
    )
}

fn c10_determinism() -> Outcome {
    let text = "[protocol]\nn = 4\ndelta_max_s = 1e-3\nschedule = \"linear\"\n\n[run]\ntrials = 200\nseed = 7\n\n[sweep]\naxis = \"sigma_a\"\nvalues = [1e-11, 1e-10, 1e-9]\n";
    let cfg = RunConfig::parse(text).unwrap();
    let mut failures = Vec::new();

    let lib_runs = |f: &dyn Fn() -> String, name: &str, failures: &mut Vec<String>| {
        if f() != f() {
            failures.push(format!("library {name}"));
        }
    };
    lib_runs(&|| cli::simulate(&cfg, None).unwrap(), "simulate", &mut failures);
    lib_runs(
        &|| cli::estimate(&cfg, None, None).unwrap().csv,
        "estimate",
        &mut failures,
    );
    lib_runs(&|| cli::crlb(&cfg).unwrap(), "crlb", &mut failures);
    lib_runs(&|| cli::sweep(&cfg, None).unwrap().csv, "sweep", &mut failures);
    let observations = cli::simulate(&cfg, None).unwrap();
    lib_runs(
        &|| cli::estimate(&cfg, Some(&observations), None).unwrap().csv,
        "estimate --observations",
        &mut failures,
    );

    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, text).unwrap();
    let obs_path = dir.path().join("obs.csv");
    for cmd in ["simulate", "estimate", "crlb", "sweep", "estimate-from-file"] {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out = dir.path().join(format!("{cmd}-{attempt}.out"));
            let mut args = vec![
                cmd.trim_end_matches("-from-file").to_string(),
                "--config".into(),
                config_path.display().to_string(),
                "--out".into(),
                out.display().to_string(),
                "--seed".into(),
                "11".into(),
            ];
            if cmd == "estimate-from-file" {
                args.push("--observations".into());
                args.push(obs_path.display().to_string());
            }
            let status = Command::new(binary()).args(&args).status().unwrap();
            if !status.success() {
                failures.push(format!("binary {cmd} exited with {status}"));
            }
            outputs.push(std::fs::read(&out).unwrap_or_default());
        }
        if cmd == "simulate" {
            std::fs::write(&obs_path, &outputs[0]).unwrap();
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            failures.push(format!("binary {cmd}"));
        }
    }
    Outcome::new(
        failures.is_empty(),
        if failures.is_empty() {
            "simulate, estimate, crlb, sweep: byte-identical repeats (library and binary)".to_string()
        } else {
            format!("differs: {}", failures.join(", "))
        },
    )
}

fn binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_twr"))
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();

    results.push((1, "TOA bound anchor", c1_toa_anchor()));
    results.push((2, "error-free exactness", c2_error_free()));

    let reference = run_trials(&Scenario::reference(SEED)).unwrap();
    let (c3, c4) = c3_c4_mle_efficiency(&reference);
    results.push((3, "MLE drift efficiency", c3));
    results.push((4, "MLE delay efficiency", c4));

    results.push((5, "empirical drift equals bound", c5_empirical_equals_optimal()));
    results.push((6, "downdate vs dense inverse", c6_downdate_oracle()));

    let trend_start = Instant::now();
    let sigma_a_points = sweep(SweepAxis::SigmaA, &SIGMA_GRID, SEED + 7);
    results.push((
        7,
        "drift bound independent of sigma_a",
        c7_sigma_a_independence(&sigma_a_points),
    ));
    let c8 = c8_trends(&sigma_a_points);
    let trend_secs = trend_start.elapsed().as_secs_f64();
    let c8 = if trend_secs < 120.0 {
        c8
    } else {
        Outcome::new(false, format!("{}; took {trend_secs:.1} s", c8.detail))
    };
    results.push((8, "trend suite", c8));

    results.push((9, "unbiasedness at defaults", c9_unbiasedness(&reference)));
    results.push((10, "determinism", c10_determinism()));

    let mut all = true;
    for (id, name, outcome) in &results {
        all &= outcome.pass;
        println!(
            "[{}] {id:>2} {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("acceptance finished in {:.1} s", started.elapsed().as_secs_f64());
    assert!(all, "one or more acceptance criteria failed");
}
