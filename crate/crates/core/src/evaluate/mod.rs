//! Payoff functionals: discounted payoffs of a strategy, long-run averages
//! (Monte Carlo and exact on the finite product chain of a controller), and
//! estimates of the discounted and asymptotic values.
//!
//! Every routine evaluates payoffs relative to the midpoint of the payoff
//! range and adds it back at the end, so a constant payoff comes out exact.

mod average;
mod belief;
mod chain;
mod discounted;
mod grid;

pub use average::{longrun_average_exact_fsc, longrun_average_mc, LIMINF_WINDOW};
pub use belief::{
    asymptotic_value_estimate, belief_update, discounted_value_estimate, initial_beliefs,
    BeliefState, DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION, DEFAULT_SWEEPS,
};
pub use discounted::{discounted_payoff, DiscountMethod};
pub use grid::SimplexGrid;

use crate::model::PomdpModel;

/// How an estimate was obtained and how far it may be from the target.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimateMode {
    Exact,
    /// Enumeration cut at a horizon; `bound` caps the omitted mass.
    Truncated { bound: f64 },
    MonteCarlo { std_error: f64, samples: usize },
    /// Certified bracket `lower ≤ target ≤ upper + stopping_bound`.
    Approximate {
        lower: f64,
        upper: f64,
        stopping_bound: f64,
    },
}

impl EstimateMode {
    pub fn name(&self) -> &'static str {
        match self {
            EstimateMode::Exact => "exact",
            EstimateMode::Truncated { .. } => "truncated",
            EstimateMode::MonteCarlo { .. } => "monte_carlo",
            EstimateMode::Approximate { .. } => "approximate",
        }
    }

    /// Size of the reported error: bound, standard error or bracket width.
    pub fn diagnostic(&self) -> f64 {
        match *self {
            EstimateMode::Exact => 0.0,
            EstimateMode::Truncated { bound } => bound,
            EstimateMode::MonteCarlo { std_error, .. } => std_error,
            EstimateMode::Approximate {
                lower,
                upper,
                stopping_bound,
            } => (upper - lower).max(0.0) + stopping_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffEstimate {
    pub value: f64,
    pub mode: EstimateMode,
    pub lambda: Option<f64>,
    pub horizon: Option<usize>,
    /// Trailing-window minimum of logged Cesàro means.
    pub liminf_proxy: Option<f64>,
    /// `V(λ_last) − V(λ_prev)` along a λ grid.
    pub trend: Option<f64>,
}

impl PayoffEstimate {
    pub fn new(value: f64, mode: EstimateMode) -> Self {
        PayoffEstimate {
            value,
            mode,
            lambda: None,
            horizon: None,
            liminf_proxy: None,
            trend: None,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, EstimateMode::Exact)
    }

    /// Mode diagnostic plus the magnitude of any λ trend.
    pub fn diagnostic(&self) -> f64 {
        self.mode.diagnostic() + self.trend.map_or(0.0, f64::abs)
    }

    /// Short `key=value` rendering of the diagnostics.
    pub fn diag_string(&self) -> String {
        let mut parts = Vec::new();
        match self.mode {
            EstimateMode::Exact => {}
            EstimateMode::Truncated { bound } => parts.push(format!("bound={bound:e}")),
            EstimateMode::MonteCarlo { std_error, samples } => {
                parts.push(format!("se={std_error:e}"));
                parts.push(format!("n={samples}"));
            }
            EstimateMode::Approximate {
                lower,
                upper,
                stopping_bound,
            } => {
                parts.push(format!("lower={lower}"));
                parts.push(format!("upper={upper}"));
                parts.push(format!("stop={stopping_bound:e}"));
            }
        }
        if let Some(t) = self.trend {
            parts.push(format!("trend={t}"));
        }
        if let Some(l) = self.liminf_proxy {
            parts.push(format!("liminf={l}"));
        }
        parts.join(";")
    }
}

/// Midpoint of the payoff range and the largest deviation from it.
pub(crate) fn payoff_center(m: &PomdpModel) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in 0..m.n_states() {
        for a in 0..m.n_actions() {
            lo = lo.min(m.payoff(w, a));
            hi = hi.max(m.payoff(w, a));
        }
    }
    if lo == hi {
        return (lo, 0.0);
    }
    let c = lo + (hi - lo) / 2.0;
    (c, (hi - c).max(c - lo))
}

pub(crate) fn check_lambda(lambda: f64) -> crate::error::Result<()> {
    if lambda.is_finite() && lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(crate::error::Error::InvalidArgument(format!(
            "discount λ must lie in (0, 1], got {lambda}"
        )))
    }
}
