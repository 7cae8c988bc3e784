//! Closed-form results on the coalescence time `K*` and empirical comparison.
//!
//! For general payoffs the per-step merge probability is sandwiched between
//! `p_low` and `p_up`, which bounds both the pmf and the mean of `K*`. For
//! power-law payoffs the merge indicators are i.i.d. Bernoulli(`p̂`) and `K*`
//! is the negative binomial hitting time of the `(n−1)`-th success.

use std::collections::BTreeMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::beta::beta_reg;
use statrs::function::factorial::{binomial, ln_binomial};

use crate::error::{Error, Result};
use crate::game::defection_kernel;
use crate::optimize::{golden_section_max, golden_section_min};
use crate::payoff::PayoffSpec;

pub const DEFAULT_KERNEL_GRID: usize = 4096;
pub const KERNEL_REFINE_TOL: f64 = 1e-10;

/// Minimum and maximum pairwise Euclidean distance.
pub fn xi_range(states: &[Vec<f64>]) -> Result<(f64, f64)> {
    if states.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 states, got {}", states.len())));
    }
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..states.len() {
        for j in 0..i {
            let d = states[i]
                .iter()
                .zip(&states[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    Ok((lo, hi))
}

/// Extremes of the defection kernel and the merge-probability bounds they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbBounds {
    pub xi_min: f64,
    pub xi_max: f64,
    pub nu: f64,
    pub mu: f64,
    pub p_low: f64,
    pub p_up: f64,
}

impl ProbBounds {
    /// Bounds given directly as merge probabilities.
    pub fn from_probabilities(p_low: f64, p_up: f64) -> Result<Self> {
        if !(p_low > 0.0 && p_low <= p_up && p_up < 1.0) {
            return Err(Error::Domain(format!("need 0 < p_low <= p_up < 1, got ({p_low}, {p_up})")));
        }
        Ok(Self {
            xi_min: f64::NAN,
            xi_max: f64::NAN,
            nu: (1.0 - p_up).sqrt(),
            mu: (1.0 - p_low).sqrt(),
            p_low,
            p_up,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.p_low == self.p_up
    }
}

/// Kernel extremes over `[xi_min, xi_max]` with the default grid.
pub fn kernel_bounds(spec: &PayoffSpec, xi_min: f64, xi_max: f64) -> Result<ProbBounds> {
    kernel_bounds_with(spec, xi_min, xi_max, DEFAULT_KERNEL_GRID)
}

/// Grid scan of `h(ξ) = f(ξ/2) / (g(ξ) − f(ξ) + f(ξ/2))` followed by
/// golden-section refinement around the grid extrema.
pub fn kernel_bounds_with(spec: &PayoffSpec, xi_min: f64, xi_max: f64, grid_points: usize) -> Result<ProbBounds> {
    if !(xi_min > 0.0 && xi_min <= xi_max && xi_max.is_finite()) {
        return Err(Error::Domain(format!("need 0 < xi_min <= xi_max, got [{xi_min}, {xi_max}]")));
    }
    let points = if xi_min == xi_max { 1 } else { grid_points.max(2) };
    let step = if points > 1 { (xi_max - xi_min) / (points - 1) as f64 } else { 0.0 };
    let at = |i: usize| if i + 1 == points { xi_max } else { xi_min + step * i as f64 };

    let mut values = Vec::with_capacity(points);
    for i in 0..points {
        let xi = at(i);
        let h = defection_kernel(spec, xi)?;
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidSpec(format!("defection kernel {h} outside (0, 1) at ξ = {xi}")));
        }
        values.push(h);
    }
    let (i_min, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let (i_max, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });

    let mut nu = values[i_min];
    let mut mu = values[i_max];
    if points > 1 {
        // the kernel is well defined on the whole interval once the grid passed
        let h = |xi: f64| defection_kernel(spec, xi).unwrap_or(f64::NAN);
        let bracket = |i: usize| (at(i.saturating_sub(1)), at((i + 1).min(points - 1)));
        let (a, b) = bracket(i_min);
        let (_, refined) = golden_section_min(h, a, b, KERNEL_REFINE_TOL);
        if refined.is_finite() {
            nu = nu.min(refined);
        }
        let (a, b) = bracket(i_max);
        let (_, refined) = golden_section_max(h, a, b, KERNEL_REFINE_TOL);
        if refined.is_finite() {
            mu = mu.max(refined);
        }
    }
    Ok(ProbBounds {
        xi_min,
        xi_max,
        nu,
        mu,
        p_low: 1.0 - mu * mu,
        p_up: 1.0 - nu * nu,
    })
}

/// Envelope on `ℙ(K* = t)` from the merge-probability bounds, evaluated in
/// log space. Zero for impossible times `t < n − 1`.
pub fn pmf_bounds(n: u64, t: u64, bounds: &ProbBounds) -> (f64, f64) {
    if n < 2 || t < n - 1 {
        return (0.0, 0.0);
    }
    let ln_c = ln_binomial(t - 1, n - 2);
    let waits = (t + 1 - n) as f64;
    let merges = (n - 1) as f64;
    let lower = ln_c + waits * (-bounds.p_up).ln_1p() + merges * bounds.p_low.ln();
    let upper = ln_c + waits * (-bounds.p_low).ln_1p() + merges * bounds.p_up.ln();
    (lower.exp(), upper.exp())
}

/// `((n−1) p_low^{n−1} / p_up^n, (n−1) p_up^{n−1} / p_low^n)`.
pub fn expectation_bounds(n: u64, bounds: &ProbBounds) -> (f64, f64) {
    let k = (n - 1) as f64;
    let lower = k * (k * bounds.p_low.ln() - n as f64 * bounds.p_up.ln()).exp();
    let upper = k * (k * bounds.p_up.ln() - n as f64 * bounds.p_low.ln()).exp();
    (lower, upper)
}

/// Per-step merge probability for power-law payoffs,
/// `1 − (c / (2^λ (1 − c) + c))²`. Independent of `θ`.
pub fn p_hat(lambda: f64, c: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::Domain(format!("c must lie in (0, 1), got {c}")));
    }
    let h = c / (lambda.exp2() * (1.0 - c) + c);
    Ok(1.0 - h * h)
}

/// Law of the time of the `(n−1)`-th success in i.i.d. Bernoulli(`p̂`) trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NegBinom {
    pub n: u64,
    pub p_hat: f64,
}

impl NegBinom {
    pub fn new(n: u64, p_hat: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("n must be >= 2, got {n}")));
        }
        if !(p_hat > 0.0 && p_hat < 1.0) {
            return Err(Error::Domain(format!("p_hat must lie in (0, 1), got {p_hat}")));
        }
        Ok(Self { n, p_hat })
    }

    pub fn q_hat(&self) -> f64 {
        1.0 - self.p_hat
    }

    /// First time with positive mass, `n − 1`.
    pub fn min_support(&self) -> u64 {
        self.n - 1
    }

    /// `C(t−1, n−2) p̂^{n−1} q̂^{t−(n−1)}`.
    pub fn pmf(&self, t: u64) -> f64 {
        if t < self.n - 1 {
            return 0.0;
        }
        let k = self.n - 1;
        let waits = t - k;
        let coef = binomial(t - 1, self.n - 2);
        let direct = coef * self.p_hat.powi(k as i32) * self.q_hat().powi(waits as i32);
        if coef.is_finite() && direct.is_normal() && waits <= i32::MAX as u64 {
            direct
        } else {
            (ln_binomial(t - 1, self.n - 2) + k as f64 * self.p_hat.ln() + waits as f64 * self.q_hat().ln()).exp()
        }
    }

    /// `ℙ(K* > t)`: fewer than `n − 1` successes in the first `t` trials.
    pub fn survival(&self, t: u64) -> f64 {
        if t < self.n - 1 {
            return 1.0;
        }
        // ℙ(Bin(t, p̂) ≤ n − 2) = I_{q̂}(t − n + 2, n − 1)
        beta_reg((t + 2 - self.n) as f64, (self.n - 1) as f64, self.q_hat())
    }

    pub fn cdf(&self, t: u64) -> f64 {
        1.0 - self.survival(t)
    }

    /// Smallest `t` with `ℙ(K* ≤ t) ≥ mass`.
    pub fn quantile(&self, mass: f64) -> u64 {
        let tail = 1.0 - mass;
        let mut t = self.n - 1;
        let mut cumulative = 0.0;
        loop {
            cumulative += self.pmf(t);
            if cumulative >= mass || self.survival(t) <= tail {
                return t;
            }
            t += 1;
        }
    }

    pub fn mean(&self) -> f64 {
        (self.n - 1) as f64 / self.p_hat
    }

    pub fn variance(&self) -> f64 {
        (self.n - 1) as f64 * self.q_hat() / (self.p_hat * self.p_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityRow {
    pub c: f64,
    pub p_hat: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub lambda: f64,
    pub n: u64,
    pub rows: Vec<MonotonicityRow>,
    /// Index `i` such that rows `i − 1` and `i` break strict monotonicity.
    pub violations: Vec<usize>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.violations.first().copied()
    }
}

/// Evaluates `p̂` and `E[K*] = (n−1)/p̂` over an increasing grid of `c` and
/// flags any step where `p̂` fails to decrease or the mean fails to increase.
pub fn monotonicity_scan(lambda: f64, c_grid: &[f64], n: u64) -> Result<MonotonicityReport> {
    if n < 2 {
        return Err(Error::Domain(format!("n must be >= 2, got {n}")));
    }
    if c_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("c grid must be strictly increasing".into()));
    }
    let rows = c_grid
        .iter()
        .map(|&c| {
            let p = p_hat(lambda, c)?;
            Ok(MonotonicityRow {
                c,
                p_hat: p,
                mean: (n - 1) as f64 / p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = (1..rows.len())
        .filter(|&i| !(rows[i].p_hat < rows[i - 1].p_hat && rows[i].mean > rows[i - 1].mean))
        .collect();
    Ok(MonotonicityReport {
        lambda,
        n,
        rows,
        violations,
    })
}

/// Histogram of observed coalescence times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmpiricalDist {
    pub counts: BTreeMap<u64, u64>,
    pub trials: u64,
}

impl EmpiricalDist {
    pub fn from_samples<I: IntoIterator<Item = u64>>(samples: I) -> Self {
        let mut dist = Self::default();
        for t in samples {
            dist.add(t);
        }
        dist
    }

    pub fn add(&mut self, t: u64) {
        *self.counts.entry(t).or_insert(0) += 1;
        self.trials += 1;
    }

    /// Combines two histograms; order does not matter.
    pub fn merge(mut self, other: &EmpiricalDist) -> Self {
        for (&t, &c) in &other.counts {
            *self.counts.entry(t).or_insert(0) += c;
        }
        self.trials += other.trials;
        self
    }

    pub fn count(&self, t: u64) -> u64 {
        self.counts.get(&t).copied().unwrap_or(0)
    }

    pub fn freq(&self, t: u64) -> f64 {
        self.count(t) as f64 / self.trials as f64
    }

    pub fn min(&self) -> Option<u64> {
        self.counts.keys().next().copied()
    }

    pub fn max(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn mean(&self) -> f64 {
        let total: f64 = self.counts.iter().map(|(&t, &c)| t as f64 * c as f64).sum();
        total / self.trials as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.trials < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let ss: f64 = self
            .counts
            .iter()
            .map(|(&t, &c)| c as f64 * (t as f64 - mean).powi(2))
            .sum();
        ss / (self.trials - 1) as f64
    }

    pub fn mean_se(&self) -> f64 {
        (self.variance() / self.trials as f64).sqrt()
    }
}

/// Goodness of fit of an empirical histogram to the negative binomial law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub trials: u64,
    pub tv_distance: f64,
    pub chi_square: f64,
    pub dof: u64,
    pub chi_square_p_value: f64,
    pub empirical_mean: f64,
    pub empirical_mean_se: f64,
    pub empirical_var: f64,
    pub theory_mean: f64,
    pub theory_var: f64,
    pub mean_z: f64,
    /// Observations at impossible times `t < n − 1`.
    pub below_support: u64,
}

impl FitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit report serializes")
    }
}

const EXPECTED_MIN: f64 = 5.0;

/// Total-variation distance, tail-merged chi-square, and moment z-score.
pub fn compare(empirical: &EmpiricalDist, theory: &NegBinom) -> Result<FitReport> {
    if empirical.trials == 0 {
        return Err(Error::Domain("empirical distribution is empty".into()));
    }
    let trials = empirical.trials as f64;
    let first = theory.min_support();
    let last = empirical
        .max()
        .unwrap_or(first)
        .max(theory.quantile(1.0 - 1e-12))
        .max(first);

    let below_support: u64 = empirical.counts.range(..first).map(|(_, &c)| c).sum();
    let mut l1 = below_support as f64 / trials;
    for t in first..=last {
        l1 += (empirical.freq(t) - theory.pmf(t)).abs();
    }
    // theory mass past `last`; the empirical histogram has none there
    l1 += theory.survival(last);
    let tv_distance = 0.5 * l1;

    // Bins over t >= n−1 closed once their expected count reaches the
    // threshold; the final bin absorbs the infinite tail.
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut observed = below_support as f64;
    let mut expected = 0.0;
    let emp_max = empirical.max().unwrap_or(first);
    let mut t = first;
    loop {
        observed += empirical.count(t) as f64;
        expected += trials * theory.pmf(t);
        let rest = trials * theory.survival(t);
        if expected >= EXPECTED_MIN && rest >= EXPECTED_MIN {
            bins.push((observed, expected));
            observed = 0.0;
            expected = 0.0;
        } else if rest < EXPECTED_MIN && t >= emp_max {
            let tail_obs: f64 = empirical.counts.range(t + 1..).map(|(_, &c)| c as f64).sum();
            bins.push((observed + tail_obs, expected + rest));
            break;
        }
        t += 1;
    }
    if bins.len() > 1 && bins.last().map(|b| b.1 < EXPECTED_MIN).unwrap_or(false) {
        let (o, e) = bins.pop().unwrap();
        let prev = bins.last_mut().unwrap();
        prev.0 += o;
        prev.1 += e;
    }
    let chi_square: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len().saturating_sub(1) as u64;
    let chi_square_p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sf(chi_square)
    };

    let theory_mean = theory.mean();
    let theory_var = theory.variance();
    let empirical_mean = empirical.mean();
    Ok(FitReport {
        trials: empirical.trials,
        tv_distance,
        chi_square,
        dof,
        chi_square_p_value,
        empirical_mean,
        empirical_mean_se: empirical.mean_se(),
        empirical_var: empirical.variance(),
        theory_mean,
        theory_var,
        mean_z: (empirical_mean - theory_mean) / (theory_var / trials).sqrt(),
        below_support,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub t: u64,
    pub freq: f64,
    pub lower: f64,
    pub upper: f64,
    /// Lower bound minus the sampling allowance.
    pub lower_tol: f64,
    /// Upper bound plus the sampling allowance.
    pub upper_tol: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub rows: Vec<EnvelopeRow>,
    pub excursions: usize,
}

/// Checks the empirical pmf against the bound envelope widened by `sigmas`
/// binomial standard errors, at every `t` whose expected count under the
/// upper bound is at least 5.
pub fn envelope_check(empirical: &EmpiricalDist, n: u64, bounds: &ProbBounds, sigmas: f64) -> EnvelopeReport {
    let trials = empirical.trials as f64;
    let se = |p: f64| {
        let p = p.clamp(0.0, 1.0);
        (p * (1.0 - p) / trials).sqrt()
    };
    let last = empirical.max().unwrap_or(n - 1).max(n - 1);
    let mut rows = Vec::new();
    let mut t = n - 1;
    loop {
        let (lower, upper) = pmf_bounds(n, t, bounds);
        if trials * upper.min(1.0) >= EXPECTED_MIN {
            let freq = empirical.freq(t);
            let lower_tol = lower - sigmas * se(lower);
            let upper_tol = upper + sigmas * se(upper);
            rows.push(EnvelopeRow {
                t,
                freq,
                lower,
                upper,
                lower_tol,
                upper_tol,
                inside: freq >= lower_tol && freq <= upper_tol,
            });
        } else if t > last {
            break;
        }
        t += 1;
    }
    let excursions = rows.iter().filter(|r| !r.inside).count();
    EnvelopeReport { rows, excursions }
}

/// One row of the distribution report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionRow {
    pub t: u64,
    pub empirical_freq: Option<f64>,
    pub theory_pmf: Option<f64>,
    pub bound_lower: Option<f64>,
    pub bound_upper: Option<f64>,
}

/// Rows for `t = n − 1 ..= t_max` combining whichever sources are present.
pub fn distribution_table(
    n: u64,
    t_max: u64,
    empirical: Option<&EmpiricalDist>,
    theory: Option<&NegBinom>,
    bounds: Option<&ProbBounds>,
) -> Vec<DistributionRow> {
    (n - 1..=t_max.max(n - 1))
        .map(|t| {
            let envelope = bounds.map(|b| pmf_bounds(n, t, b));
            DistributionRow {
                t,
                empirical_freq: empirical.map(|e| e.freq(t)),
                theory_pmf: theory.map(|d| d.pmf(t)),
                bound_lower: envelope.map(|e| e.0),
                bound_upper: envelope.map(|e| e.1),
            }
        })
        .collect()
}
