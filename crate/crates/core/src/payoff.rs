//! Cost-of-change `f` and profit-of-coalescence `g` functions.
//!
//! Every stage game is parameterized by a [`PayoffSpec`]. Three forms are
//! supported: the power-law family `g(ξ) = θ ξ^λ`, `f = c g`; polynomial
//! pairs; and arbitrary closures certified on an explicit operating range.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default resolution of the validation grid.
pub const DEFAULT_GRID_POINTS: usize = 1024;

/// Tolerance for `f(0) = g(0) = 0`.
pub const ZERO_TOL: f64 = 1e-12;

/// Parameters of the power-law payoff family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawSpec {
    theta: f64,
    lambda: f64,
    c: f64,
}

impl PowerLawSpec {
    pub fn new(theta: f64, lambda: f64, c: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidSpec(format!("theta must be > 0, got {theta}")));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidSpec(format!("lambda must be > 0, got {lambda}")));
        }
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidSpec(format!("c must lie in (0, 1), got {c}")));
        }
        Ok(Self { theta, lambda, c })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    fn profit(&self, xi: f64) -> f64 {
        if xi == 0.0 {
            0.0
        } else {
            self.theta * xi.powf(self.lambda)
        }
    }
}

/// Polynomial with coefficients in ascending order of degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidSpec("polynomial needs at least one coefficient".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec("polynomial coefficients must be finite".into()));
        }
        Ok(Self(coefficients))
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }
}

/// A real function shared between trial workers.
pub type PayoffFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PayoffForm {
    PowerLaw(PowerLawSpec),
    Polynomial { profit: Polynomial, cost: Polynomial },
    /// Arbitrary functions, only trusted on the operating range.
    Custom { profit: PayoffFn, cost: PayoffFn },
}

impl fmt::Debug for PayoffForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffForm::PowerLaw(p) => f.debug_tuple("PowerLaw").field(p).finish(),
            PayoffForm::Polynomial { profit, cost } => f
                .debug_struct("Polynomial")
                .field("profit", profit)
                .field("cost", cost)
                .finish(),
            PayoffForm::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// Closed interval of distances `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingRange {
    pub lo: f64,
    pub hi: f64,
}

impl OperatingRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
            return Err(Error::Domain(format!("invalid operating range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, xi: f64) -> bool {
        xi >= self.lo && xi <= self.hi
    }

    /// `points` evenly spaced values from `lo` to `hi` inclusive.
    pub fn grid(&self, points: usize) -> impl Iterator<Item = f64> + '_ {
        let step = (self.hi - self.lo) / (points - 1) as f64;
        (0..points).map(move |i| {
            if i + 1 == points {
                self.hi
            } else {
                self.lo + step * i as f64
            }
        })
    }
}

impl Default for OperatingRange {
    fn default() -> Self {
        Self { lo: 1e-3, hi: 1e3 }
    }
}

/// The payoff pair `(f, g)` with the range over which it is certified.
#[derive(Debug, Clone)]
pub struct PayoffSpec {
    form: PayoffForm,
    range: OperatingRange,
}

impl PayoffSpec {
    pub fn power_law(theta: f64, lambda: f64, c: f64) -> Result<Self> {
        Ok(Self::from(PowerLawSpec::new(theta, lambda, c)?))
    }

    pub fn polynomial(profit: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        Ok(Self {
            form: PayoffForm::Polynomial {
                profit: Polynomial::new(profit)?,
                cost: Polynomial::new(cost)?,
            },
            range: OperatingRange::default(),
        })
    }

    /// Arbitrary `g` and `f`; evaluation outside `range` (other than at 0) is
    /// a range error.
    pub fn custom<G, F>(profit: G, cost: F, range: OperatingRange) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            form: PayoffForm::Custom {
                profit: Arc::new(profit),
                cost: Arc::new(cost),
            },
            range,
        }
    }

    pub fn with_operating_range(mut self, range: OperatingRange) -> Self {
        self.range = range;
        self
    }

    pub fn form(&self) -> &PayoffForm {
        &self.form
    }

    pub fn operating_range(&self) -> OperatingRange {
        self.range
    }

    pub fn as_power_law(&self) -> Option<&PowerLawSpec> {
        match &self.form {
            PayoffForm::PowerLaw(p) => Some(p),
            _ => None,
        }
    }

    fn check_xi(&self, xi: f64) -> Result<()> {
        if xi.is_nan() || xi < 0.0 {
            return Err(Error::Domain(format!("distance must be >= 0, got {xi}")));
        }
        if let PayoffForm::Custom { .. } = self.form {
            if xi != 0.0 && !self.range.contains(xi) {
                return Err(Error::Range {
                    xi,
                    lo: self.range.lo,
                    hi: self.range.hi,
                });
            }
        }
        Ok(())
    }

    /// Profit of coalescence `g(ξ)`.
    pub fn eval_profit(&self, xi: f64) -> Result<f64> {
        self.check_xi(xi)?;
        Ok(match &self.form {
            PayoffForm::PowerLaw(p) => p.profit(xi),
            PayoffForm::Polynomial { profit, .. } => profit.eval(xi),
            PayoffForm::Custom { profit, .. } => profit(xi),
        })
    }

    /// Cost of state change `f(ξ)`.
    pub fn eval_cost(&self, xi: f64) -> Result<f64> {
        self.check_xi(xi)?;
        Ok(match &self.form {
            PayoffForm::PowerLaw(p) => p.c * p.profit(xi),
            PayoffForm::Polynomial { cost, .. } => cost.eval(xi),
            PayoffForm::Custom { cost, .. } => cost(xi),
        })
    }

    /// Checks the payoff invariants on an evenly spaced grid over the
    /// operating range. Violations are reported, not raised.
    pub fn validate(&self, grid_points: usize) -> Result<ValidationReport> {
        if grid_points < 2 {
            return Err(Error::Domain(format!("grid_points must be >= 2, got {grid_points}")));
        }
        let mut report = ValidationReport {
            grid_points,
            range: self.range,
            violations: Vec::new(),
        };

        let g0 = self.eval_profit(0.0)?;
        let f0 = self.eval_cost(0.0)?;
        if g0.abs() > ZERO_TOL || f0.abs() > ZERO_TOL {
            report.violations.push(Violation {
                invariant: Invariant::ZeroAtOrigin,
                xi: 0.0,
                detail: format!("g(0) = {g0}, f(0) = {f0}"),
            });
        }

        let mut prev: Option<(f64, f64, f64)> = None;
        let mut profit_bad = false;
        let mut cost_bad = false;
        let mut dominance_bad = false;
        for xi in self.range.grid(grid_points) {
            let g = self.eval_profit(xi)?;
            let f = self.eval_cost(xi)?;
            if !g.is_finite() || !f.is_finite() {
                report.violations.push(Violation {
                    invariant: Invariant::Finite,
                    xi,
                    detail: format!("g = {g}, f = {f}"),
                });
                break;
            }
            if let Some((xa, ga, fa)) = prev {
                if !profit_bad && ga >= g {
                    profit_bad = true;
                    report.violations.push(Violation {
                        invariant: Invariant::ProfitIncreasing,
                        xi,
                        detail: format!("g({xa}) = {ga} >= g({xi}) = {g}"),
                    });
                }
                if !cost_bad && fa >= f {
                    cost_bad = true;
                    report.violations.push(Violation {
                        invariant: Invariant::CostIncreasing,
                        xi,
                        detail: format!("f({xa}) = {fa} >= f({xi}) = {f}"),
                    });
                }
            }
            if !dominance_bad && xi > 0.0 && f >= g {
                dominance_bad = true;
                report.violations.push(Violation {
                    invariant: Invariant::CostBelowProfit,
                    xi,
                    detail: format!("f = {f} >= g = {g}"),
                });
            }
            prev = Some((xi, g, f));
        }
        Ok(report)
    }
}

impl From<PowerLawSpec> for PayoffSpec {
    fn from(p: PowerLawSpec) -> Self {
        Self {
            form: PayoffForm::PowerLaw(p),
            range: OperatingRange::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Invariant {
    ZeroAtOrigin,
    Finite,
    ProfitIncreasing,
    CostIncreasing,
    CostBelowProfit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: Invariant,
    /// First grid point at which the invariant fails.
    pub xi: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub grid_points: usize,
    pub range: OperatingRange,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violation(&self, invariant: Invariant) -> Option<&Violation> {
        self.violations.iter().find(|v| v.invariant == invariant)
    }
}
