//! Discrete-time coalescence process.
//!
//! At every step two groups are drawn, play the stage game at equilibrium,
//! and either merge or keep their states. A trial ends when one group holds
//! all `n` agents; the time of the last merge is the coalescence time `K*`.

use log::debug;
use rand::Rng;
use rayon::prelude::*;

use crate::analysis::xi_range;
use crate::error::{Error, Result};
use crate::game::{cooperation_prob, Strategy};
use crate::payoff::PayoffSpec;
use crate::streams::{trial_stream, StreamRng};

/// Distances below this are treated as already coalesced.
pub const EPS_XI: f64 = 1e-12;

pub const DEFAULT_MIN_SEPARATION: f64 = 1e-6;

pub const DEFAULT_STEP_CAP_FACTOR: f64 = 50.0;

const MAX_INIT_RETRIES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: u64,
    pub size: u64,
    pub state: Vec<f64>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    groups: Vec<Group>,
    time: u64,
    next_id: u64,
    agents: u64,
    xi_min: f64,
    xi_max: f64,
}

impl Population {
    /// `n` singleton groups at the given states. States must be pairwise at
    /// least `min_separation` apart.
    pub fn from_states(states: Vec<Vec<f64>>, min_separation: f64) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::Initialization(format!(
                "need at least 2 agents, got {}",
                states.len()
            )));
        }
        let m = states[0].len();
        if m == 0 {
            return Err(Error::Initialization("state dimension must be >= 1".into()));
        }
        if let Some(bad) = states.iter().find(|s| s.len() != m) {
            return Err(Error::Initialization(format!(
                "state {bad:?} has dimension {}, expected {m}",
                bad.len()
            )));
        }
        if states.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Initialization("states must be finite".into()));
        }
        for i in 0..states.len() {
            for j in 0..i {
                let d = distance(&states[i], &states[j]);
                if d < min_separation.max(EPS_XI) {
                    return Err(Error::Initialization(format!(
                        "agents {j} and {i} are {d} apart, below separation {min_separation}"
                    )));
                }
            }
        }
        let (xi_min, xi_max) = xi_range(&states)?;
        let groups: Vec<Group> = states
            .into_iter()
            .enumerate()
            .map(|(i, state)| Group {
                id: i as u64,
                size: 1,
                state,
            })
            .collect();
        let agents = groups.len() as u64;
        Ok(Self {
            next_id: agents,
            groups,
            time: 0,
            agents,
            xi_min,
            xi_max,
        })
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, id: u64) -> Option<&Group> {
        self.groups.iter().find(|g| g.id == id)
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    /// Number of agents `n`.
    pub fn agents(&self) -> u64 {
        self.agents
    }

    pub fn dimension(&self) -> usize {
        self.groups[0].state.len()
    }

    /// Smallest pairwise distance of the initial configuration.
    pub fn xi_min(&self) -> f64 {
        self.xi_min
    }

    /// Largest pairwise distance of the initial configuration.
    pub fn xi_max(&self) -> f64 {
        self.xi_max
    }

    pub fn is_coalesced(&self) -> bool {
        self.groups.len() == 1
    }

    fn index_of(&self, id: u64) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.id == id)
            .ok_or(Error::UnknownGroup(id))
    }
}

/// How initial states are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStates {
    /// Uniform in the axis-aligned box `[lo, hi]^m`.
    UniformBox { lo: f64, hi: f64 },
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub rule: InitialStates,
    pub min_separation: f64,
}

impl InitConfig {
    pub fn uniform_box(lo: f64, hi: f64) -> Self {
        Self {
            rule: InitialStates::UniformBox { lo, hi },
            min_separation: DEFAULT_MIN_SEPARATION,
        }
    }

    pub fn explicit(states: Vec<Vec<f64>>) -> Self {
        Self {
            rule: InitialStates::Explicit(states),
            min_separation: DEFAULT_MIN_SEPARATION,
        }
    }
}

/// `n` singleton groups with distinct states in `ℝ^m`.
pub fn init_population(n: usize, m: usize, init: &InitConfig, rng: &mut StreamRng) -> Result<Population> {
    if n < 2 {
        return Err(Error::Initialization(format!("n must be >= 2, got {n}")));
    }
    if m < 1 {
        return Err(Error::Initialization(format!("m must be >= 1, got {m}")));
    }
    match &init.rule {
        InitialStates::Explicit(states) => {
            if states.len() != n {
                return Err(Error::Initialization(format!(
                    "expected {n} explicit states, got {}",
                    states.len()
                )));
            }
            if states.iter().any(|s| s.len() != m) {
                return Err(Error::Initialization(format!("explicit states must have dimension {m}")));
            }
            Population::from_states(states.clone(), init.min_separation)
        }
        &InitialStates::UniformBox { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Initialization(format!("invalid box [{lo}, {hi}]")));
            }
            let sep = init.min_separation.max(EPS_XI);
            let mut states: Vec<Vec<f64>> = Vec::with_capacity(n);
            for i in 0..n {
                let mut placed = false;
                for _ in 0..MAX_INIT_RETRIES {
                    let cand: Vec<f64> = (0..m).map(|_| rng.random_range(lo..hi)).collect();
                    if states.iter().all(|s| distance(s, &cand) >= sep) {
                        states.push(cand);
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(Error::Initialization(format!(
                        "could not place agent {i} at separation {sep} after {MAX_INIT_RETRIES} tries"
                    )));
                }
            }
            Population::from_states(states, init.min_separation)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairPolicy {
    /// Uniform over unordered pairs of groups.
    #[default]
    Uniform,
    /// Pair `{i, j}` drawn with weight `s_i · s_j`.
    SizeWeighted,
}

/// Draws two distinct groups; the first id plays the row role.
pub fn select_pair(population: &Population, policy: PairPolicy, rng: &mut StreamRng) -> Result<(u64, u64)> {
    let groups = &population.groups;
    let count = groups.len();
    if count < 2 {
        return Err(Error::Terminal);
    }
    let (i, j) = match policy {
        PairPolicy::Uniform => {
            let i = rng.random_range(0..count);
            let mut j = rng.random_range(0..count - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        }
        PairPolicy::SizeWeighted => {
            let total: u64 = groups.iter().map(|g| g.size).sum();
            let squares: u64 = groups.iter().map(|g| g.size * g.size).sum();
            let weight = ((total * total - squares) / 2) as f64;
            let mut target = rng.random::<f64>() * weight;
            let mut chosen = (count - 2, count - 1);
            'scan: for a in 0..count {
                for b in a + 1..count {
                    let w = (groups[a].size * groups[b].size) as f64;
                    if target < w {
                        chosen = (a, b);
                        break 'scan;
                    }
                    target -= w;
                }
            }
            chosen
        }
    };
    Ok((groups[i].id, groups[j].id))
}

/// One step of the process.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEvent {
    pub time: u64,
    pub pair: (u64, u64),
    pub sizes: (u64, u64),
    pub xi: f64,
    /// Equilibrium probability of `C` used by both groups.
    pub p_star: f64,
    pub strategies: (Strategy, Strategy),
    pub merged: bool,
    /// Id of the merged group, if any.
    pub new_id: Option<u64>,
    /// Set when the groups were already at a common state.
    pub degenerate: bool,
}

impl StepEvent {
    /// Merge indicator: 1 when the groups coalesced this step.
    pub fn delta(&self) -> u8 {
        self.merged as u8
    }
}

fn draw_strategy(p_star: f64, rng: &mut StreamRng) -> Strategy {
    if rng.random::<f64>() < p_star {
        Strategy::Cooperate
    } else {
        Strategy::Defect
    }
}

/// Plays the stage game between `pair` and applies the outcome.
pub fn play_round(
    population: &mut Population,
    pair: (u64, u64),
    spec: &PayoffSpec,
    rng: &mut StreamRng,
) -> Result<StepEvent> {
    let (a, b) = pair;
    if a == b {
        return Err(Error::Domain(format!("pair must be two distinct groups, got ({a}, {b})")));
    }
    let ia = population.index_of(a)?;
    let ib = population.index_of(b)?;
    let xi = distance(&population.groups[ia].state, &population.groups[ib].state);
    let sizes = (population.groups[ia].size, population.groups[ib].size);
    population.time += 1;

    let degenerate = xi < EPS_XI;
    let (p_star, strategies) = if degenerate {
        debug!("groups {a} and {b} share a state (xi = {xi:e}); merging");
        (1.0, (Strategy::Cooperate, Strategy::Cooperate))
    } else {
        let p_star = cooperation_prob(spec, xi)?;
        let row = draw_strategy(p_star, rng);
        let col = draw_strategy(p_star, rng);
        (p_star, (row, col))
    };

    let merged_state = match strategies {
        (Strategy::Cooperate, Strategy::Cooperate) => Some(
            population.groups[ia]
                .state
                .iter()
                .zip(&population.groups[ib].state)
                .map(|(x, y)| 0.5 * (x + y))
                .collect::<Vec<f64>>(),
        ),
        (Strategy::Cooperate, Strategy::Defect) => Some(population.groups[ib].state.clone()),
        (Strategy::Defect, Strategy::Cooperate) => Some(population.groups[ia].state.clone()),
        (Strategy::Defect, Strategy::Defect) => None,
    };

    let new_id = merged_state.map(|state| {
        let id = population.next_id;
        population.next_id += 1;
        let (hi, lo) = if ia > ib { (ia, ib) } else { (ib, ia) };
        population.groups.remove(hi);
        population.groups.remove(lo);
        population.groups.push(Group {
            id,
            size: sizes.0 + sizes.1,
            state,
        });
        id
    });

    Ok(StepEvent {
        time: population.time,
        pair,
        sizes,
        xi,
        p_star,
        strategies,
        merged: new_id.is_some(),
        new_id,
        degenerate,
    })
}

/// `⌈factor · (n − 1) / p_low⌉`.
pub fn default_step_cap(n: u64, p_low: f64, factor: f64) -> u64 {
    (factor * (n.saturating_sub(1)) as f64 / p_low).ceil() as u64
}

/// Everything a trial needs besides its random stream.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub spec: PayoffSpec,
    /// Shared initial population; every trial starts from a copy.
    pub initial: Population,
    pub policy: PairPolicy,
    pub step_cap: u64,
    pub record_events: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Coalescence time, or the step at which the trial was aborted.
    pub k_star: u64,
    pub cap_exceeded: bool,
    pub merges: u64,
    /// Steps whose pair distance fell below the initial minimum distance.
    pub below_initial_min: u64,
    /// Smallest pair distance played during the trial.
    pub min_xi: f64,
    /// Largest pair distance played during the trial.
    pub max_xi: f64,
    /// Empty unless event recording was requested.
    pub events: Vec<StepEvent>,
    pub final_state: Vec<f64>,
}

/// Runs one trial until full coalescence or the step cap.
pub fn run_trial(config: &TrialConfig, rng: &mut StreamRng) -> Result<TrialResult> {
    let mut population = config.initial.clone();
    let xi_floor = population.xi_min;
    let mut result = TrialResult {
        k_star: 0,
        cap_exceeded: false,
        merges: 0,
        below_initial_min: 0,
        min_xi: f64::INFINITY,
        max_xi: 0.0,
        events: Vec::new(),
        final_state: Vec::new(),
    };
    while !population.is_coalesced() {
        if population.time >= config.step_cap {
            result.cap_exceeded = true;
            break;
        }
        let pair = select_pair(&population, config.policy, rng)?;
        let event = play_round(&mut population, pair, &config.spec, rng)?;
        result.min_xi = result.min_xi.min(event.xi);
        result.max_xi = result.max_xi.max(event.xi);
        if event.xi < xi_floor {
            result.below_initial_min += 1;
            debug!(
                "step {}: xi = {} below initial minimum {}",
                event.time, event.xi, xi_floor
            );
        }
        if event.merged {
            result.merges += 1;
        }
        if config.record_events {
            result.events.push(event);
        }
    }
    result.k_star = population.time;
    result.final_state = population.groups[0].state.clone();
    Ok(result)
}

/// Runs `trials` independent trials from the same initial states. Trial `i`
/// draws from the stream `(master_seed, i)`, so the output does not depend on
/// scheduling.
pub fn monte_carlo(config: &TrialConfig, trials: u64, master_seed: u64) -> Result<Vec<TrialResult>> {
    if trials == 0 {
        return Err(Error::Domain("trials must be >= 1".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| run_trial(config, &mut trial_stream(master_seed, i)))
        .collect()
}

/// As [`monte_carlo`] on a dedicated pool of `workers` threads.
pub fn monte_carlo_with_workers(
    config: &TrialConfig,
    trials: u64,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<TrialResult>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Domain(format!("cannot build worker pool: {e}")))?;
    pool.install(|| monte_carlo(config, trials, master_seed))
}
