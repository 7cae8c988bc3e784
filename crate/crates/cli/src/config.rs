//! Flat key-value experiment configuration.
//!
//! ```text
//! # twenty agents in the plane
//! n = 20
//! m = 2
//! payoff.kind = power_law
//! payoff.theta = 0.8
//! payoff.lambda = 1
//! payoff.c = 0.75
//! master_seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use coalesce_core::dynamics::{InitConfig, InitialStates, PairPolicy, DEFAULT_MIN_SEPARATION, DEFAULT_STEP_CAP_FACTOR};
use coalesce_core::payoff::{PayoffForm, PayoffSpec, DEFAULT_GRID_POINTS};

#[derive(Debug, Clone, PartialEq)]
pub enum PayoffConfig {
    PowerLaw { theta: f64, lambda: f64, c: f64 },
    Polynomial { profit: Vec<f64>, cost: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub payoff: PayoffConfig,
    pub init: InitConfig,
    pub pair_policy: PairPolicy,
    pub trials: u64,
    pub master_seed: Option<u64>,
    pub step_cap_factor: f64,
    pub output_dir: PathBuf,
    pub threshold: f64,
    pub workers: usize,
    pub record_events: bool,
    pub sweep_c_values: Vec<f64>,
    pub sweep_trials: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 20,
            m: 2,
            payoff: PayoffConfig::PowerLaw {
                theta: 0.8,
                lambda: 1.0,
                c: 0.75,
            },
            init: InitConfig::uniform_box(0.0, 10.0),
            pair_policy: PairPolicy::Uniform,
            trials: 20_000,
            master_seed: None,
            step_cap_factor: DEFAULT_STEP_CAP_FACTOR,
            output_dir: PathBuf::from("out"),
            threshold: 0.02,
            workers: 0,
            record_events: true,
            sweep_c_values: vec![0.5, 0.625, 0.75],
            sweep_trials: 0,
        }
    }
}

/// A field-level configuration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| ConfigError::new(key, format!("cannot parse {raw:?}")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>, ConfigError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// `"x1, y1; x2, y2"` into one vector per agent.
fn parse_states(key: &str, raw: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_list(key, s))
        .collect()
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn read_pairs(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(&format!("line {}", lineno + 1), "expected `key = value`"))?;
        let key = key.trim().to_string();
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError::new(&key, "duplicate key"));
        }
    }
    Ok(pairs)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = read_pairs(text)?;
        let mut cfg = Self::default();
        let mut take = |key: &str| pairs.remove(key);

        if let Some(v) = take("n") {
            cfg.n = parse_value("n", &v)?;
        }
        if let Some(v) = take("m") {
            cfg.m = parse_value("m", &v)?;
        }

        let kind = take("payoff.kind").unwrap_or_else(|| "power_law".into());
        let theta = take("payoff.theta");
        let lambda = take("payoff.lambda");
        let c = take("payoff.c");
        let profit = take("payoff.profit");
        let cost = take("payoff.cost");
        cfg.payoff = match kind.as_str() {
            "power_law" => {
                if profit.is_some() || cost.is_some() {
                    return Err(ConfigError::new("payoff.profit", "only valid with payoff.kind = polynomial"));
                }
                PayoffConfig::PowerLaw {
                    theta: theta.map(|v| parse_value("payoff.theta", &v)).transpose()?.unwrap_or(0.8),
                    lambda: lambda.map(|v| parse_value("payoff.lambda", &v)).transpose()?.unwrap_or(1.0),
                    c: c.map(|v| parse_value("payoff.c", &v)).transpose()?.unwrap_or(0.75),
                }
            }
            "polynomial" => {
                if theta.is_some() || lambda.is_some() || c.is_some() {
                    return Err(ConfigError::new("payoff.kind", "theta/lambda/c only valid with power_law"));
                }
                PayoffConfig::Polynomial {
                    profit: parse_list("payoff.profit", &profit.ok_or_else(|| ConfigError::new("payoff.profit", "required"))?)?,
                    cost: parse_list("payoff.cost", &cost.ok_or_else(|| ConfigError::new("payoff.cost", "required"))?)?,
                }
            }
            other => {
                return Err(ConfigError::new(
                    "payoff.kind",
                    format!("unknown kind {other:?} (expected power_law or polynomial)"),
                ))
            }
        };

        let init_kind = take("init.kind").unwrap_or_else(|| "box".into());
        let lo = take("init.lo");
        let hi = take("init.hi");
        let states = take("init.states");
        let rule = match init_kind.as_str() {
            "box" => {
                if states.is_some() {
                    return Err(ConfigError::new("init.states", "only valid with init.kind = explicit"));
                }
                InitialStates::UniformBox {
                    lo: lo.map(|v| parse_value("init.lo", &v)).transpose()?.unwrap_or(0.0),
                    hi: hi.map(|v| parse_value("init.hi", &v)).transpose()?.unwrap_or(10.0),
                }
            }
            "explicit" => {
                if lo.is_some() || hi.is_some() {
                    return Err(ConfigError::new("init.lo", "only valid with init.kind = box"));
                }
                let raw = states.ok_or_else(|| ConfigError::new("init.states", "required"))?;
                InitialStates::Explicit(parse_states("init.states", &raw)?)
            }
            other => return Err(ConfigError::new("init.kind", format!("unknown kind {other:?}"))),
        };
        let min_separation = take("init.min_separation")
            .map(|v| parse_value("init.min_separation", &v))
            .transpose()?
            .unwrap_or(DEFAULT_MIN_SEPARATION);
        cfg.init = InitConfig { rule, min_separation };

        if let Some(v) = take("pair_policy") {
            cfg.pair_policy = match v.as_str() {
                "uniform" => PairPolicy::Uniform,
                "size_weighted" => PairPolicy::SizeWeighted,
                other => return Err(ConfigError::new("pair_policy", format!("unknown policy {other:?}"))),
            };
        }
        if let Some(v) = take("trials") {
            cfg.trials = parse_value("trials", &v)?;
        }
        if let Some(v) = take("master_seed") {
            cfg.master_seed = Some(parse_value("master_seed", &v)?);
        }
        if let Some(v) = take("step_cap_factor") {
            cfg.step_cap_factor = parse_value("step_cap_factor", &v)?;
        }
        if let Some(v) = take("output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = take("threshold") {
            cfg.threshold = parse_value("threshold", &v)?;
        }
        if let Some(v) = take("workers") {
            cfg.workers = parse_value("workers", &v)?;
        }
        if let Some(v) = take("record_events") {
            cfg.record_events = parse_value("record_events", &v)?;
        }
        if let Some(v) = take("sweep.c_values") {
            cfg.sweep_c_values = parse_list("sweep.c_values", &v)?;
        }
        if let Some(v) = take("sweep.trials") {
            cfg.sweep_trials = parse_value("sweep.trials", &v)?;
        }

        if let Some(key) = pairs.keys().next() {
            return Err(ConfigError::new(key, "unknown key"));
        }
        Ok(cfg)
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "m = {}", self.m);
        match &self.payoff {
            PayoffConfig::PowerLaw { theta, lambda, c } => {
                let _ = writeln!(s, "payoff.kind = power_law");
                let _ = writeln!(s, "payoff.theta = {theta}");
                let _ = writeln!(s, "payoff.lambda = {lambda}");
                let _ = writeln!(s, "payoff.c = {c}");
            }
            PayoffConfig::Polynomial { profit, cost } => {
                let _ = writeln!(s, "payoff.kind = polynomial");
                let _ = writeln!(s, "payoff.profit = {}", join(profit));
                let _ = writeln!(s, "payoff.cost = {}", join(cost));
            }
        }
        match &self.init.rule {
            InitialStates::UniformBox { lo, hi } => {
                let _ = writeln!(s, "init.kind = box");
                let _ = writeln!(s, "init.lo = {lo}");
                let _ = writeln!(s, "init.hi = {hi}");
            }
            InitialStates::Explicit(states) => {
                let _ = writeln!(s, "init.kind = explicit");
                let rows: Vec<String> = states.iter().map(|v| join(v)).collect();
                let _ = writeln!(s, "init.states = {}", rows.join("; "));
            }
        }
        let _ = writeln!(s, "init.min_separation = {}", self.init.min_separation);
        let policy = match self.pair_policy {
            PairPolicy::Uniform => "uniform",
            PairPolicy::SizeWeighted => "size_weighted",
        };
        let _ = writeln!(s, "pair_policy = {policy}");
        let _ = writeln!(s, "trials = {}", self.trials);
        if let Some(seed) = self.master_seed {
            let _ = writeln!(s, "master_seed = {seed}");
        }
        let _ = writeln!(s, "step_cap_factor = {}", self.step_cap_factor);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(s, "threshold = {}", self.threshold);
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "record_events = {}", self.record_events);
        let _ = writeln!(s, "sweep.c_values = {}", join(&self.sweep_c_values));
        let _ = writeln!(s, "sweep.trials = {}", self.sweep_trials);
        s
    }

    pub fn payoff_spec(&self) -> Result<PayoffSpec, ConfigError> {
        let spec = match &self.payoff {
            PayoffConfig::PowerLaw { theta, lambda, c } => PayoffSpec::power_law(*theta, *lambda, *c),
            PayoffConfig::Polynomial { profit, cost } => PayoffSpec::polynomial(profit.clone(), cost.clone()),
        };
        spec.map_err(|e| ConfigError::new("payoff", e.to_string()))
    }

    /// Checks every field before any trial runs.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n < 2 {
            return Err(ConfigError::new("n", "must be >= 2"));
        }
        if self.m < 1 {
            return Err(ConfigError::new("m", "must be >= 1"));
        }
        let spec = self.payoff_spec()?;
        if let PayoffForm::Polynomial { .. } = spec.form() {
            let report = spec
                .validate(DEFAULT_GRID_POINTS)
                .map_err(|e| ConfigError::new("payoff", e.to_string()))?;
            if let Some(v) = report.violations.first() {
                return Err(ConfigError::new(
                    "payoff",
                    format!("{:?} fails at ξ = {}: {}", v.invariant, v.xi, v.detail),
                ));
            }
        }
        match &self.init.rule {
            InitialStates::UniformBox { lo, hi } if !(lo < hi) => {
                return Err(ConfigError::new("init.hi", "must exceed init.lo"));
            }
            InitialStates::Explicit(states) => {
                if states.len() != self.n {
                    return Err(ConfigError::new("init.states", format!("expected {} states, got {}", self.n, states.len())));
                }
                if states.iter().any(|s| s.len() != self.m) {
                    return Err(ConfigError::new("init.states", format!("every state needs {} coordinates", self.m)));
                }
            }
            _ => {}
        }
        if !(self.init.min_separation >= 0.0) {
            return Err(ConfigError::new("init.min_separation", "must be >= 0"));
        }
        if self.trials < 1 {
            return Err(ConfigError::new("trials", "must be >= 1"));
        }
        if !(self.step_cap_factor > 0.0 && self.step_cap_factor.is_finite()) {
            return Err(ConfigError::new("step_cap_factor", "must be a positive number"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(ConfigError::new("threshold", "must lie in (0, 1]"));
        }
        if self.master_seed.is_none() {
            return Err(ConfigError::new("master_seed", "required (set it in the config or pass --seed)"));
        }
        Ok(())
    }
}
