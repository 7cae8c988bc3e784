//! The 2×2 stage game played by two groups at distance `ξ`.
//!
//! Strategies are ordered `C` (cooperate: move to coalesce) then `D` (defect:
//! keep state). The row player's payoff matrix is
//!
//! ```text
//!          C                  D
//! C   g(ξ) − f(ξ/2)      g(ξ) − f(ξ)
//! D   g(ξ)               0
//! ```
//!
//! and the column player's matrix is its transpose.

use crate::error::{Error, Result};
use crate::payoff::PayoffSpec;

/// Stability tolerance for equilibrium verification.
pub const STABILITY_TOL: f64 = 1e-9;

pub type Matrix2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Cooperate,
    Defect,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Cooperate => "C",
            Strategy::Defect => "D",
        }
    }

    fn index(self) -> usize {
        match self {
            Strategy::Cooperate => 0,
            Strategy::Defect => 1,
        }
    }
}

/// Probabilities of playing `C` for the row (`p`) and column (`q`) player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedProfile {
    pub p: f64,
    pub q: f64,
}

impl MixedProfile {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("probabilities must lie in [0, 1], got ({p}, {q})")));
        }
        Ok(Self { p, q })
    }

    pub fn pure(row: Strategy, col: Strategy) -> Self {
        let prob = |s: Strategy| if s == Strategy::Cooperate { 1.0 } else { 0.0 };
        Self { p: prob(row), q: prob(col) }
    }

    fn close_to(&self, other: &MixedProfile, tol: f64) -> bool {
        (self.p - other.p).abs() <= tol && (self.q - other.q).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageGame {
    pub xi: f64,
    pub payoff_a: Matrix2,
    pub payoff_b: Matrix2,
}

impl StageGame {
    pub fn payoff(&self, row: Strategy, col: Strategy) -> (f64, f64) {
        let (i, j) = (row.index(), col.index());
        (self.payoff_a[i][j], self.payoff_b[i][j])
    }
}

fn transpose(m: &Matrix2) -> Matrix2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Builds the stage game at distance `xi`.
pub fn build_game(spec: &PayoffSpec, xi: f64) -> Result<StageGame> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::Domain(format!("stage game needs xi > 0, got {xi}")));
    }
    let g = spec.eval_profit(xi)?;
    let f = spec.eval_cost(xi)?;
    let f_half = spec.eval_cost(xi / 2.0)?;
    let a = [[g - f_half, g - f], [g, 0.0]];
    Ok(StageGame {
        xi,
        payoff_a: a,
        payoff_b: transpose(&a),
    })
}

fn bilinear(m: &Matrix2, p: f64, q: f64) -> f64 {
    p * (m[0][0] * q + m[0][1] * (1.0 - q)) + (1.0 - p) * (m[1][0] * q + m[1][1] * (1.0 - q))
}

/// Expected payoffs `(αᵀAβ, αᵀBβ)` with `α = [p, 1−p]`, `β = [q, 1−q]`.
pub fn utility(game: &StageGame, profile: MixedProfile) -> (f64, f64) {
    utility_of(&game.payoff_a, &game.payoff_b, profile)
}

fn utility_of(a: &Matrix2, b: &Matrix2, profile: MixedProfile) -> (f64, f64) {
    (bilinear(a, profile.p, profile.q), bilinear(b, profile.p, profile.q))
}

struct EquilibriumTerms {
    g: f64,
    gain: f64,
    half_cost: f64,
}

fn equilibrium_terms(spec: &PayoffSpec, xi: f64) -> Result<EquilibriumTerms> {
    if !(xi.is_finite() && xi > 0.0) {
        return Err(Error::Domain(format!("equilibrium needs xi > 0, got {xi}")));
    }
    let g = spec.eval_profit(xi)?;
    let f = spec.eval_cost(xi)?;
    let half_cost = spec.eval_cost(xi / 2.0)?;
    let gain = g - f;
    if !(gain > 0.0 && half_cost > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "need g(ξ) > f(ξ) and f(ξ/2) > 0 at ξ = {xi}: g = {g}, f = {f}, f(ξ/2) = {half_cost}"
        )));
    }
    Ok(EquilibriumTerms { g, gain, half_cost })
}

/// Probability of `C` at the symmetric mixed equilibrium,
/// `(g(ξ) − f(ξ)) / (g(ξ) − f(ξ) + f(ξ/2))`.
pub fn cooperation_prob(spec: &PayoffSpec, xi: f64) -> Result<f64> {
    let t = equilibrium_terms(spec, xi)?;
    Ok(t.gain / (t.gain + t.half_cost))
}

/// Probability of `D` at the mixed equilibrium, `f(ξ/2) / (g(ξ) − f(ξ) + f(ξ/2))`.
pub fn defection_kernel(spec: &PayoffSpec, xi: f64) -> Result<f64> {
    let t = equilibrium_terms(spec, xi)?;
    Ok(t.half_cost / (t.gain + t.half_cost))
}

/// The unique completely mixed equilibrium of the stage game.
pub fn closed_form_ne(spec: &PayoffSpec, xi: f64) -> Result<MixedProfile> {
    let p = cooperation_prob(spec, xi)?;
    Ok(MixedProfile { p, q: p })
}

/// Probability that the two groups merge under equilibrium play, i.e. that
/// the outcome is anything other than `(D, D)`.
pub fn coalescence_prob(spec: &PayoffSpec, xi: f64) -> Result<f64> {
    let h = defection_kernel(spec, xi)?;
    Ok(1.0 - h * h)
}

/// Size-weighted expected equilibrium payoff of two groups of sizes `s1`, `s2`.
pub fn aggregate_payoff(spec: &PayoffSpec, xi: f64, s1: u64, s2: u64) -> Result<f64> {
    if s1 == 0 || s2 == 0 {
        return Err(Error::Domain("group sizes must be >= 1".into()));
    }
    let t = equilibrium_terms(spec, xi)?;
    Ok((s1 + s2) as f64 * t.gain * t.g / (t.gain + t.half_cost))
}

/// Equilibria of a 2×2 bimatrix game found by support enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSet {
    pub profiles: Vec<MixedProfile>,
    /// Set when some player is indifferent over a continuum of profiles; the
    /// profiles listed are then representatives.
    pub degenerate: bool,
}

impl EquilibriumSet {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Profiles with both probabilities strictly inside (0, 1).
    pub fn completely_mixed(&self) -> impl Iterator<Item = &MixedProfile> {
        self.profiles
            .iter()
            .filter(|m| m.p > 0.0 && m.p < 1.0 && m.q > 0.0 && m.q < 1.0)
    }
}

/// Largest gain available to either player from a unilateral deviation.
/// Utilities are linear in the deviator's own mix, so pure deviations suffice.
pub fn max_deviation_gain(a: &Matrix2, b: &Matrix2, profile: MixedProfile) -> f64 {
    let (u1, u2) = utility_of(a, b, profile);
    let row_best = bilinear(a, 1.0, profile.q).max(bilinear(a, 0.0, profile.q));
    let col_best = bilinear(b, profile.p, 1.0).max(bilinear(b, profile.p, 0.0));
    (row_best - u1).max(col_best - u2)
}

/// Indifference solution for one player's opponent mix.
enum Indifference {
    /// The opponent mix that makes the player indifferent.
    At(f64),
    /// Indifferent for every opponent mix.
    Everywhere,
    None,
}

/// Solves `m[0][0] x + m[0][1] (1−x) = m[1][0] x + m[1][1] (1−x)` for `x`.
fn indifference(m: &Matrix2, scale: f64) -> Indifference {
    let denom = m[0][0] - m[0][1] - m[1][0] + m[1][1];
    let numer = m[1][1] - m[0][1];
    let eps = 1e-12 * scale;
    if denom.abs() <= eps {
        if numer.abs() <= eps {
            Indifference::Everywhere
        } else {
            Indifference::None
        }
    } else {
        Indifference::At(numer / denom)
    }
}

/// Midpoint of the open sub-interval of (0, 1) on which
/// `intercept + slope·x >= 0`.
fn feasible_midpoint(intercept: f64, slope: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if slope > 0.0 {
        lo = lo.max(-intercept / slope);
    } else if slope < 0.0 {
        hi = hi.min(-intercept / slope);
    } else if intercept < 0.0 {
        return None;
    }
    (lo < hi).then(|| 0.5 * (lo + hi))
}

/// All equilibria of the bimatrix game `(a, b)` by support enumeration over
/// the nine support pairs. Every returned profile has deviation gain at most
/// [`STABILITY_TOL`] times the largest payoff magnitude (or 1, if larger).
pub fn solve_ne_2x2(a: &Matrix2, b: &Matrix2) -> EquilibriumSet {
    let scale = a
        .iter()
        .chain(b.iter())
        .flatten()
        .fold(1.0f64, |acc, x| acc.max(x.abs()));
    let mut candidates = Vec::new();
    let mut degenerate = false;

    // pure supports
    for i in 0..2 {
        for j in 0..2 {
            if a[i][j] >= a[1 - i][j] && b[i][j] >= b[i][1 - j] {
                let p = if i == 0 { 1.0 } else { 0.0 };
                let q = if j == 0 { 1.0 } else { 0.0 };
                candidates.push(MixedProfile { p, q });
            }
        }
    }

    // row pure, column mixed: column indifferent given the row strategy, and
    // the row strategy a best response to the column mix
    for i in 0..2 {
        if (b[i][0] - b[i][1]).abs() <= 1e-12 * scale {
            // row i payoff minus the alternative, as a function of q
            let intercept = a[i][1] - a[1 - i][1];
            let slope = (a[i][0] - a[1 - i][0]) - intercept;
            if let Some(q) = feasible_midpoint(intercept, slope) {
                degenerate = true;
                let p = if i == 0 { 1.0 } else { 0.0 };
                candidates.push(MixedProfile { p, q });
            }
        }
    }
    // column pure, row mixed
    for j in 0..2 {
        if (a[0][j] - a[1][j]).abs() <= 1e-12 * scale {
            let intercept = b[1][j] - b[1][1 - j];
            let slope = (b[0][j] - b[0][1 - j]) - intercept;
            if let Some(p) = feasible_midpoint(intercept, slope) {
                degenerate = true;
                let q = if j == 0 { 1.0 } else { 0.0 };
                candidates.push(MixedProfile { p, q });
            }
        }
    }

    // both mixed: each player's mix makes the other indifferent
    let q_star = indifference(a, scale);
    let p_star = indifference(&transpose(b), scale);
    match (p_star, q_star) {
        (Indifference::At(p), Indifference::At(q)) => {
            if p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0 {
                candidates.push(MixedProfile { p, q });
            }
        }
        (Indifference::Everywhere, Indifference::At(q)) if q > 0.0 && q < 1.0 => {
            degenerate = true;
            candidates.push(MixedProfile { p: 0.5, q });
        }
        (Indifference::At(p), Indifference::Everywhere) if p > 0.0 && p < 1.0 => {
            degenerate = true;
            candidates.push(MixedProfile { p, q: 0.5 });
        }
        (Indifference::Everywhere, Indifference::Everywhere) => {
            degenerate = true;
            candidates.push(MixedProfile { p: 0.5, q: 0.5 });
        }
        _ => {}
    }

    let mut profiles: Vec<MixedProfile> = Vec::new();
    for cand in candidates {
        if max_deviation_gain(a, b, cand) > STABILITY_TOL * scale {
            continue;
        }
        if !profiles.iter().any(|m| m.close_to(&cand, STABILITY_TOL)) {
            profiles.push(cand);
        }
    }
    EquilibriumSet { profiles, degenerate }
}
