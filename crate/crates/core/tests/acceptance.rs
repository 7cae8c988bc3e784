//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use coalesce_core::analysis::{envelope_check, kernel_bounds, monotonicity_scan, pmf_bounds, EmpiricalDist, NegBinom, ProbBounds};
use coalesce_core::dynamics::{
    default_step_cap, init_population, monte_carlo, monte_carlo_with_workers, InitConfig, PairPolicy, TrialConfig,
    TrialResult, DEFAULT_STEP_CAP_FACTOR,
};
use coalesce_core::game::{build_game, closed_form_ne, solve_ne_2x2, utility, MixedProfile};
use coalesce_core::payoff::PayoffSpec;
use coalesce_core::report::write_trial_summary;
use coalesce_core::streams::{init_stream, stream};
use coalesce_core::{compare, p_hat};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SEED: u64 = 20_240_601;
const TRIALS: u64 = 20_000;
const TV_THRESHOLD: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn plane_config(c: f64, spec: Option<PayoffSpec>) -> TrialConfig {
    let spec = spec.unwrap_or_else(|| PayoffSpec::power_law(0.8, 1.0, c).unwrap());
    let initial = init_population(20, 2, &InitConfig::uniform_box(0.0, 10.0), &mut init_stream(SEED)).unwrap();
    let bounds = kernel_bounds(&spec, initial.xi_min(), initial.xi_max()).unwrap();
    TrialConfig {
        step_cap: default_step_cap(20, bounds.p_low, DEFAULT_STEP_CAP_FACTOR),
        spec,
        initial,
        policy: PairPolicy::Uniform,
        record_events: false,
    }
}

fn k_stars(results: &[TrialResult]) -> EmpiricalDist {
    EmpiricalDist::from_samples(results.iter().map(|r| r.k_star))
}

fn capped(results: &[TrialResult]) -> usize {
    results.iter().filter(|r| r.cap_exceeded).count()
}

/// Equilibrium correctness over random power-law games.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(SEED, 1);
    let mut worst_match = 0.0f64;
    let mut worst_indiff = 0.0f64;
    let mut failures = Vec::new();
    for case in 0..1000 {
        let theta = rng.random_range(0.1..=10.0);
        let lambda = rng.random_range(0.25..=4.0);
        let c = rng.random_range(0.05..=0.95);
        let xi = rng.random_range(0.01..=100.0);
        let spec = PayoffSpec::power_law(theta, lambda, c).unwrap();
        let game = build_game(&spec, xi).unwrap();
        let closed = closed_form_ne(&spec, xi).unwrap();
        let set = solve_ne_2x2(&game.payoff_a, &game.payoff_b);

        let matching: Vec<&MixedProfile> = set
            .profiles
            .iter()
            .filter(|m| (m.p - closed.p).abs() <= 1e-9 && (m.q - closed.q).abs() <= 1e-9)
            .collect();
        // the other two are the asymmetric pure profiles (C,D) and (D,C)
        let pure_ok = set.len() == 3
            && set.profiles.contains(&MixedProfile { p: 1.0, q: 0.0 })
            && set.profiles.contains(&MixedProfile { p: 0.0, q: 1.0 });
        if matching.len() != 1 || !pure_ok || set.degenerate {
            failures.push(format!("case {case}: {set:?} vs {closed:?}"));
            continue;
        }
        let m = matching[0];
        worst_match = worst_match.max((m.p - closed.p).abs()).max((m.q - closed.q).abs());

        let scale = game.payoff_a.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let (on_c, _) = utility(&game, MixedProfile { p: 1.0, q: closed.q });
        let (on_d, _) = utility(&game, MixedProfile { p: 0.0, q: closed.q });
        let gap = (on_c - on_d).abs() / scale;
        worst_indiff = worst_indiff.max(gap);
        if gap > 1e-12 {
            failures.push(format!("case {case}: indifference gap {gap:e}"));
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "1000 games, max |solver - closed form| = {worst_match:e}, max relative indifference gap = {worst_indiff:e}, {} failures, {elapsed:?}{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

struct Reproduction {
    dist: EmpiricalDist,
    capped: usize,
}

fn reproduce(c: f64) -> Reproduction {
    let cfg = plane_config(c, None);
    let results = monte_carlo(&cfg, TRIALS, SEED).unwrap();
    Reproduction {
        dist: k_stars(&results),
        capped: capped(&results),
    }
}

/// Reproduction of the n = 20, c = 0.75 experiment.
fn criterion_2(run: &Reproduction, elapsed: Duration) -> Outcome {
    let theory = NegBinom::new(20, p_hat(1.0, 0.75).unwrap()).unwrap();
    let fit = compare(&run.dist, &theory).unwrap();
    let mean_ok = (fit.empirical_mean - 29.6875).abs() <= 3.0 * fit.empirical_mean_se;
    let var_target = 19.0 * 0.36 / (0.64 * 0.64);
    let var_ok = (fit.empirical_var - var_target).abs() <= 0.10 * var_target;
    let tv_ok = fit.tv_distance <= TV_THRESHOLD;
    let time_ok = elapsed < Duration::from_secs(60);
    outcome(
        mean_ok && var_ok && tv_ok && time_ok && run.capped == 0,
        format!(
            "mean {:.4} (target 29.6875, 3 SE = {:.4}), var {:.3} (target {var_target:.3} ± 10%), TV {:.4} (<= {TV_THRESHOLD}), mean_z {:.2}, capped {}, {elapsed:?}",
            fit.empirical_mean,
            3.0 * fit.empirical_mean_se,
            fit.empirical_var,
            fit.tv_distance,
            fit.mean_z,
            run.capped
        ),
    )
}

/// Reproduction at c = 0.625 and ordering against c = 0.75.
fn criterion_3(low: &Reproduction, high: &Reproduction) -> Outcome {
    let target = 19.0 * 121.0 / 96.0;
    let mean = low.dist.mean();
    let se = low.dist.mean_se();
    let mean_ok = (mean - target).abs() <= 3.0 * se;
    let combined = (se * se + high.dist.mean_se().powi(2)).sqrt();
    let gap = high.dist.mean() - mean;
    let earlier = gap > 3.0 * combined;
    outcome(
        mean_ok && earlier && low.capped == 0,
        format!(
            "mean {mean:.4} (target {target:.4}, 3 SE = {:.4}); c=0.75 mean exceeds it by {gap:.3} (3 combined SE = {:.3})",
            3.0 * se,
            3.0 * combined
        ),
    )
}

/// Mean coalescence time strictly increasing in c.
fn criterion_4() -> Outcome {
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut violations = 0;
    let mut means = Vec::new();
    for lambda in [0.5, 1.0, 2.0] {
        let report = monotonicity_scan(lambda, &grid, 20).unwrap();
        violations += report.violations.len();
        means.push(format!(
            "λ={lambda}: E[K*] {:.2} → {:.2}",
            report.rows[0].mean,
            report.rows.last().unwrap().mean
        ));
    }
    outcome(violations == 0, format!("{violations} violations; {}", means.join(", ")))
}

/// Every trial terminates below the step cap over random configurations.
fn criterion_5() -> Outcome {
    let mut rng = stream(SEED, 5);
    let mut total = 0u64;
    let mut capped_total = 0usize;
    let mut longest = 0.0f64;
    let mut kinds = (0, 0);
    for config in 0..20u64 {
        let n = rng.random_range(2..=30usize);
        let m = rng.random_range(1..=3usize);
        let spec = if config % 2 == 0 {
            kinds.0 += 1;
            PayoffSpec::power_law(
                rng.random_range(0.1..10.0),
                rng.random_range(0.25..4.0),
                rng.random_range(0.05..0.95),
            )
            .unwrap()
        } else {
            kinds.1 += 1;
            let a1: f64 = rng.random_range(0.1..2.0);
            let a2: f64 = rng.random_range(0.0..1.0);
            let b1 = a1 * rng.random_range(0.05..0.95);
            let b2 = a2 * rng.random_range(0.0..0.95);
            PayoffSpec::polynomial(vec![0.0, a1, a2], vec![0.0, b1, b2]).unwrap()
        };
        let initial = init_population(n, m, &InitConfig::uniform_box(-5.0, 5.0), &mut stream(SEED + config, u64::MAX)).unwrap();
        let bounds = kernel_bounds(&spec, initial.xi_min(), initial.xi_max()).unwrap();
        let cap = default_step_cap(n as u64, bounds.p_low, DEFAULT_STEP_CAP_FACTOR);
        let cfg = TrialConfig {
            spec,
            initial,
            policy: if config % 3 == 0 { PairPolicy::SizeWeighted } else { PairPolicy::Uniform },
            step_cap: cap,
            record_events: false,
        };
        let results = monte_carlo(&cfg, 500, SEED + config).unwrap();
        total += results.len() as u64;
        capped_total += capped(&results);
        let worst = results.iter().map(|r| r.k_star).max().unwrap_or(0);
        longest = longest.max(worst as f64 / cap as f64);
    }
    outcome(
        capped_total == 0 && total == 10_000,
        format!(
            "{total} trials over 20 configs ({} power-law, {} polynomial), {capped_total} cap hits, longest run used {:.1}% of its cap",
            kinds.0,
            kinds.1,
            100.0 * longest
        ),
    )
}

/// Probability that i.i.d. Bernoulli(p) merge indicators reach their second
/// success exactly at step `t`, by enumerating all outcome sequences.
fn enumerated_pmf_n3(p: f64, t: u32) -> f64 {
    let q = 1.0 - p;
    (0u32..1 << t)
        .filter(|seq| seq.count_ones() == 2 && seq & (1 << (t - 1)) != 0)
        .map(|seq| p.powi(seq.count_ones() as i32) * q.powi((t - seq.count_ones()) as i32))
        .sum()
}

/// Small-instance oracle: n = 3 against exact enumeration.
fn criterion_6() -> Outcome {
    let p = 0.64;
    let q = 1.0 - p;
    // enumeration agrees with (T−1) p² q^{T−2}; beyond 20 steps use the formula
    let mut oracle: Vec<f64> = vec![0.0; 2];
    let mut enum_err = 0.0f64;
    for t in 2..=20u32 {
        let e = enumerated_pmf_n3(p, t);
        let formula = (t - 1) as f64 * p * p * q.powi(t as i32 - 2);
        enum_err = enum_err.max((e - formula).abs());
        oracle.push(e);
    }
    for t in 21..=200u32 {
        oracle.push((t - 1) as f64 * p * p * q.powi(t as i32 - 2));
    }

    let spec = PayoffSpec::power_law(1.0, 1.0, 0.75).unwrap();
    let initial = init_population(3, 2, &InitConfig::uniform_box(0.0, 10.0), &mut init_stream(SEED)).unwrap();
    let cfg = TrialConfig {
        spec,
        initial,
        policy: PairPolicy::Uniform,
        step_cap: default_step_cap(3, p, DEFAULT_STEP_CAP_FACTOR),
        record_events: false,
    };
    let trials = 50_000u64;
    let results = monte_carlo(&cfg, trials, SEED + 6).unwrap();
    let dist = k_stars(&results);

    // bins of expected count >= 5, tail merged
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for t in 2..oracle.len() {
        obs += dist.count(t as u64) as f64;
        exp += trials as f64 * oracle[t];
        let rest: f64 = oracle[t + 1..].iter().sum::<f64>() * trials as f64;
        if exp >= 5.0 && rest >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    let beyond: f64 = dist.counts.range(oracle.len() as u64..).map(|(_, &c)| c as f64).sum();
    bins.push((obs + beyond, exp));
    let chi2: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64).unwrap().sf(chi2);
    outcome(
        p_value > 0.001 && enum_err < 1e-15 && capped(&results) == 0,
        format!("chi-square {chi2:.2} on {dof} dof, p = {p_value:.4}; enumeration vs formula max error {enum_err:e}"),
    )
}

/// Bound envelope: collapse to the pmf, and containment for a non-power spec.
fn criterion_7() -> Outcome {
    let mut collapse_err = 0.0f64;
    for (n, p) in [(2, 0.3), (3, 0.64), (20, 0.64), (20, 96.0 / 121.0), (30, 0.9)] {
        let theory = NegBinom::new(n, p).unwrap();
        let bounds = ProbBounds::from_probabilities(p, p).unwrap();
        for t in 0..=theory.quantile(1.0 - 1e-8) {
            let (lo, up) = pmf_bounds(n, t, &bounds);
            collapse_err = collapse_err.max((lo - theory.pmf(t)).abs()).max((up - theory.pmf(t)).abs());
        }
    }

    let spec = PayoffSpec::polynomial(vec![0.0, 1.0, 1.0], vec![0.0, 0.5]).unwrap();
    let cfg = plane_config(0.0, Some(spec.clone()));
    let bounds = kernel_bounds(&spec, cfg.initial.xi_min(), cfg.initial.xi_max()).unwrap();
    let results = monte_carlo(&cfg, TRIALS, SEED + 7).unwrap();
    let dist = k_stars(&results);
    let envelope = envelope_check(&dist, 20, &bounds, 3.0);
    let monitored = results.iter().filter(|r| r.below_initial_min > 0).count();
    let min_xi = results.iter().map(|r| r.min_xi).fold(f64::INFINITY, f64::min);
    let excursion_ts: Vec<u64> = envelope.rows.iter().filter(|r| !r.inside).map(|r| r.t).collect();
    outcome(
        collapse_err <= 1e-12 && envelope.excursions == 0 && capped(&results) == 0,
        format!(
            "collapse error {collapse_err:e}; p_low {:.4}, p_up {:.6}; {} checked T, excursions at {excursion_ts:?}; monitor: {monitored} trials went below ξ_min = {:.4} (smallest ξ {min_xi:.4})",
            bounds.p_low,
            bounds.p_up,
            envelope.rows.len(),
            cfg.initial.xi_min()
        ),
    )
}

/// Byte-identical summaries across repeated runs and worker counts.
fn criterion_8() -> Outcome {
    let cfg = plane_config(0.75, None);
    let csv = |results: &[TrialResult]| {
        let mut buf = Vec::new();
        write_trial_summary(&mut buf, results).unwrap();
        buf
    };
    let first = csv(&monte_carlo(&cfg, TRIALS, SEED).unwrap());
    let second = csv(&monte_carlo(&cfg, TRIALS, SEED).unwrap());
    let single = csv(&monte_carlo_with_workers(&cfg, TRIALS, SEED, 1).unwrap());
    let many = csv(&monte_carlo_with_workers(&cfg, TRIALS, SEED, 8).unwrap());
    let pass = first == second && first == single && first == many;
    outcome(
        pass,
        format!(
            "{} bytes; repeat identical: {}, 1 worker identical: {}, 8 workers identical: {}",
            first.len(),
            first == second,
            first == single,
            first == many
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let run_075 = reproduce(0.75);
    let elapsed_075 = start.elapsed();
    let run_0625 = reproduce(0.625);

    let results = [
        ("1 equilibrium correctness", criterion_1()),
        ("2 reproduction c=0.75", criterion_2(&run_075, elapsed_075)),
        ("3 reproduction c=0.625", criterion_3(&run_0625, &run_075)),
        ("4 monotonicity in c", criterion_4()),
        ("5 termination below step cap", criterion_5()),
        ("6 n=3 exact oracle", criterion_6()),
        ("7 bound envelope", criterion_7()),
        ("8 determinism", criterion_8()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("[{}] criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
