//! Coalescence of rational agents through repeated 2×2 stage games.
//!
//! Two groups at distance `ξ` play a symmetric bimatrix game whose mixed
//! equilibrium decides whether they merge. The [`dynamics`] module runs the
//! process to full coalescence; [`analysis`] holds the closed-form law of the
//! coalescence time and the tools to compare simulations against it.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod optimize;
pub mod payoff;
pub mod report;
pub mod streams;

pub use analysis::{
    compare, expectation_bounds, kernel_bounds, monotonicity_scan, p_hat, pmf_bounds, xi_range, EmpiricalDist,
    FitReport, NegBinom, ProbBounds,
};
pub use dynamics::{
    init_population, monte_carlo, play_round, run_trial, select_pair, InitConfig, PairPolicy, Population, StepEvent,
    TrialConfig, TrialResult,
};
pub use error::{Error, Result};
pub use game::{
    aggregate_payoff, build_game, closed_form_ne, coalescence_prob, solve_ne_2x2, utility, MixedProfile, StageGame,
    Strategy,
};
pub use payoff::{OperatingRange, PayoffSpec, PowerLawSpec};
