use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use coalesce_core::analysis::{
    compare, distribution_table, envelope_check, kernel_bounds, p_hat, EmpiricalDist, NegBinom, ProbBounds,
};
use coalesce_core::dynamics::{
    default_step_cap, init_population, monte_carlo, monte_carlo_with_workers, Population, TrialConfig, TrialResult,
};
use coalesce_core::payoff::PayoffSpec;
use coalesce_core::report::{read_trial_summary, write_distribution, write_event_log, write_trial_summary};
use coalesce_core::streams::init_stream;

use crate::config::{ExperimentConfig, PayoffConfig};

/// Mass of the theory distribution covered by distribution reports.
const THEORY_MASS: f64 = 1.0 - 1e-8;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration, or unusable paths (exit 2).
    Usage(String),
    /// A statistical gate failed (exit 1).
    Gate(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Gate(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Gate(m) => write!(f, "gate failed: {m}"),
        }
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Usage(format!("config {e}"))
    }
}

impl From<coalesce_core::Error> for CliError {
    fn from(e: coalesce_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

/// Everything derived from a validated config.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub spec: PayoffSpec,
    pub initial: Population,
    pub bounds: ProbBounds,
    pub step_cap: u64,
}

impl Experiment {
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let seed = cfg.master_seed.expect("validated");
        let spec = cfg.payoff_spec()?;
        let initial = init_population(cfg.n, cfg.m, &cfg.init, &mut init_stream(seed))?;
        let bounds = kernel_bounds(&spec, initial.xi_min(), initial.xi_max())?;
        let step_cap = default_step_cap(cfg.n as u64, bounds.p_low, cfg.step_cap_factor);
        info!(
            "xi range [{}, {}], p_low {}, p_up {}, step cap {step_cap}",
            initial.xi_min(),
            initial.xi_max(),
            bounds.p_low,
            bounds.p_up
        );
        Ok(Self {
            cfg,
            seed,
            spec,
            initial,
            bounds,
            step_cap,
        })
    }

    fn n(&self) -> u64 {
        self.cfg.n as u64
    }

    /// The negative binomial law, available for power-law payoffs only.
    pub fn theory(&self) -> Option<NegBinom> {
        match self.cfg.payoff {
            PayoffConfig::PowerLaw { lambda, c, .. } => {
                Some(NegBinom::new(self.n(), p_hat(lambda, c).expect("validated")).expect("validated"))
            }
            PayoffConfig::Polynomial { .. } => None,
        }
    }

    fn trial_config(&self, record_events: bool) -> TrialConfig {
        TrialConfig {
            spec: self.spec.clone(),
            initial: self.initial.clone(),
            policy: self.cfg.pair_policy,
            step_cap: self.step_cap,
            record_events,
        }
    }

    fn run(&self, spec: Option<PayoffSpec>, trials: u64, record_events: bool) -> Result<Vec<TrialResult>, CliError> {
        let mut trial_cfg = self.trial_config(record_events);
        if let Some(spec) = spec {
            trial_cfg.step_cap = default_step_cap(
                self.n(),
                kernel_bounds(&spec, self.initial.xi_min(), self.initial.xi_max())?.p_low,
                self.cfg.step_cap_factor,
            );
            trial_cfg.spec = spec;
        }
        let results = if self.cfg.workers == 0 {
            monte_carlo(&trial_cfg, trials, self.seed)?
        } else {
            monte_carlo_with_workers(&trial_cfg, trials, self.seed, self.cfg.workers)?
        };
        Ok(results)
    }

    /// Largest `T` reported by distribution tables.
    fn horizon(&self) -> u64 {
        match self.theory() {
            Some(d) => d.quantile(THEORY_MASS),
            // slowest law compatible with the bounds
            None => NegBinom::new(self.n(), self.bounds.p_low)
                .expect("bounds lie in (0, 1)")
                .quantile(THEORY_MASS),
        }
    }

    fn output_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.cfg.output_dir.clone();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join("config.txt");
        fs::write(&path, self.cfg.to_text()).map_err(io_err(&path))?;
        Ok(dir)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(io_err(path))
}

fn summarize(results: &[TrialResult]) -> (EmpiricalDist, usize) {
    let dist = EmpiricalDist::from_samples(results.iter().map(|r| r.k_star));
    let capped = results.iter().filter(|r| r.cap_exceeded).count();
    (dist, capped)
}

fn cap_gate(capped: usize, step_cap: u64) -> Result<(), CliError> {
    if capped > 0 {
        return Err(CliError::Gate(format!("{capped} trials exceeded the step cap of {step_cap}")));
    }
    Ok(())
}

pub fn simulate(exp: &Experiment) -> Result<(), CliError> {
    let dir = exp.output_dir()?;
    let results = exp.run(None, exp.cfg.trials, exp.cfg.record_events)?;

    let path = dir.join("trials.csv");
    let mut w = create(&path)?;
    write_trial_summary(&mut w, &results)?;
    finish(w, &path)?;
    if exp.cfg.record_events {
        let path = dir.join("events.csv");
        let mut w = create(&path)?;
        write_event_log(&mut w, &results)?;
        finish(w, &path)?;
    }

    let (dist, capped) = summarize(&results);
    let below: usize = results.iter().filter(|r| r.below_initial_min > 0).count();
    if below > 0 {
        info!("{below} trials played a pair closer than the initial minimum distance");
    }
    println!("trials: {}", dist.trials);
    println!("mean K*: {:.6} (se {:.6})", dist.mean(), dist.mean_se());
    println!("var K*: {:.6}", dist.variance());
    println!("min K*: {}", dist.min().unwrap_or(0));
    println!("max K*: {}", dist.max().unwrap_or(0));
    println!("cap exceeded: {capped}");
    if let Some(theory) = exp.theory() {
        println!("theory mean: {:.6}, theory var: {:.6}", theory.mean(), theory.variance());
    }
    cap_gate(capped, exp.step_cap)
}

pub fn theory(exp: &Experiment) -> Result<(), CliError> {
    let dir = exp.output_dir()?;
    let theory = exp.theory();
    let rows = distribution_table(exp.n(), exp.horizon(), None, theory.as_ref(), Some(&exp.bounds));
    let path = dir.join("distribution.csv");
    let mut w = create(&path)?;
    write_distribution(&mut w, &rows)?;
    finish(w, &path)?;
    match theory {
        Some(d) => println!("p_hat: {}, mean: {}, var: {}", d.p_hat, d.mean(), d.variance()),
        None => println!("p_low: {}, p_up: {}", exp.bounds.p_low, exp.bounds.p_up),
    }
    println!("rows: {} (T = {}..={})", rows.len(), exp.n() - 1, exp.horizon());
    Ok(())
}

fn load_summary(path: &Path) -> Result<EmpiricalDist, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    let rows = read_trial_summary(file).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{}: no trials", path.display())));
    }
    Ok(EmpiricalDist::from_samples(rows.into_iter().map(|(_, k)| k)))
}

pub fn compare_cmd(exp: &Experiment, summary: Option<&Path>) -> Result<(), CliError> {
    let dir = exp.output_dir()?;
    let (dist, capped) = match summary {
        Some(path) => (load_summary(path)?, 0),
        None => summarize(&exp.run(None, exp.cfg.trials, false)?),
    };
    if let Some(first) = dist.min() {
        if first < exp.n() - 1 {
            return Err(CliError::Usage(format!(
                "schema error: coalescence time {first} is impossible for n = {}; summary belongs to another configuration",
                exp.n()
            )));
        }
    }
    let theory = exp.theory();
    let horizon = exp.horizon().max(dist.max().unwrap_or(0));
    let rows = distribution_table(exp.n(), horizon, Some(&dist), theory.as_ref(), Some(&exp.bounds));
    let path = dir.join("comparison.csv");
    let mut w = create(&path)?;
    write_distribution(&mut w, &rows)?;
    finish(w, &path)?;

    match theory {
        Some(theory) => {
            let fit = compare(&dist, &theory)?;
            let path = dir.join("fit.json");
            fs::write(&path, fit.to_json() + "\n").map_err(io_err(&path))?;
            println!("{}", fit.to_json());
            cap_gate(capped, exp.step_cap)?;
            if fit.tv_distance > exp.cfg.threshold {
                return Err(CliError::Gate(format!(
                    "TV distance {} exceeds threshold {}",
                    fit.tv_distance, exp.cfg.threshold
                )));
            }
        }
        None => {
            let envelope = envelope_check(&dist, exp.n(), &exp.bounds, 3.0);
            let json = serde_json::to_string_pretty(&envelope).expect("envelope serializes");
            let path = dir.join("envelope.json");
            fs::write(&path, json + "\n").map_err(io_err(&path))?;
            println!("envelope rows checked: {}, excursions: {}", envelope.rows.len(), envelope.excursions);
            cap_gate(capped, exp.step_cap)?;
            if envelope.excursions > 0 {
                return Err(CliError::Gate(format!("{} envelope excursions", envelope.excursions)));
            }
        }
    }
    Ok(())
}

pub fn sweep(exp: &Experiment, c_values: &[f64], trials: u64) -> Result<(), CliError> {
    let (theta, lambda) = match exp.cfg.payoff {
        PayoffConfig::PowerLaw { theta, lambda, .. } => (theta, lambda),
        PayoffConfig::Polynomial { .. } => {
            return Err(CliError::Usage("sweep needs payoff.kind = power_law".into()));
        }
    };
    if c_values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one c value".into()));
    }
    if c_values.iter().any(|&c| !(c > 0.0 && c < 1.0)) || c_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("c values must be strictly increasing in (0, 1)".into()));
    }
    let dir = exp.output_dir()?;
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let header = ["c", "p_hat", "theory_mean", "empirical_mean", "empirical_se", "inversion"];
    w.write_record(header).map_err(|e| CliError::Usage(e.to_string()))?;

    let mut previous: Option<(f64, f64)> = None;
    let mut inversions = 0;
    let mut capped_total = 0;
    for &c in c_values {
        let p = p_hat(lambda, c)?;
        let theory_mean = (exp.n() - 1) as f64 / p;
        let mut row = vec![c.to_string(), p.to_string(), theory_mean.to_string()];
        if trials > 0 {
            let spec = PayoffSpec::power_law(theta, lambda, c)?;
            let (dist, capped) = summarize(&exp.run(Some(spec), trials, false)?);
            capped_total += capped;
            let (mean, se) = (dist.mean(), dist.mean_se());
            let inverted = previous.is_some_and(|(pm, pse)| pm - mean > 3.0 * (pse * pse + se * se).sqrt());
            if inverted {
                warn!("empirical mean at c = {c} falls below the previous grid point");
                inversions += 1;
            }
            previous = Some((mean, se));
            row.extend([mean.to_string(), se.to_string(), (inverted as u8).to_string()]);
        } else {
            row.extend([String::new(), String::new(), String::new()]);
        }
        println!("{}", row.join(","));
        w.write_record(&row).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    w.flush().map_err(io_err(&path))?;
    cap_gate(capped_total, exp.step_cap)?;
    if inversions > 0 {
        return Err(CliError::Gate(format!("{inversions} empirical inversions")));
    }
    Ok(())
}
