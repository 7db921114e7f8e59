use rayon::prelude::*;

use super::chain::controller_chain;
use super::{check_lambda, payoff_center, EstimateMode, PayoffEstimate};
use crate::epoch::{sample_index, worker_rng};
use crate::error::{Error, Result};
use crate::model::{stage_duration_transform, PomdpModel, StageDuration};
use crate::strategy::{propagate, HistoryTracker, Strategy, DEFAULT_BUDGET};

/// Tail mass targeted when no horizon is given.
const DEFAULT_TAIL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DiscountMethod {
    /// Enumerate observed histories of `G_h` up to `horizon` stages.
    Enumerate {
        horizon: Option<usize>,
        budget: usize,
    },
    /// Solve the linear system on the product chain of the strategy's
    /// finite-state controller.
    Controller,
    MonteCarlo {
        n_traj: usize,
        horizon: Option<usize>,
        seed: u64,
    },
}

impl Default for DiscountMethod {
    fn default() -> Self {
        DiscountMethod::Enumerate {
            horizon: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

fn tail_horizon(spread: f64, gamma: f64, tail: f64) -> usize {
    if spread == 0.0 || gamma == 0.0 {
        return 1;
    }
    let t = ((tail / spread).ln() / gamma.ln()).ceil();
    (t.max(1.0)) as usize
}

/// Expected payoff of `σ` in `G_h` under weights `λh·(1 − λh)^{i−1}`.
pub fn discounted_payoff(
    m: &PomdpModel,
    sigma: &dyn Strategy,
    lambda: f64,
    h: StageDuration,
    method: &DiscountMethod,
) -> Result<PayoffEstimate> {
    check_lambda(lambda)?;
    let beta = lambda * h.value();
    let gamma = 1.0 - beta;
    let gh = stage_duration_transform(m, h);
    let (center, spread) = payoff_center(m);
    let mut est = match *method {
        DiscountMethod::Enumerate { horizon, budget } => {
            let horizon = horizon.unwrap_or_else(|| tail_horizon(spread, gamma, DEFAULT_TAIL));
            let mut e = Enumeration {
                model: &gh,
                center,
                beta,
                gamma,
                horizon,
                budget,
                nodes: 0,
                sum: 0.0,
            };
            let mut tracker = sigma.tracker();
            for s in 0..gh.n_signals() {
                let w: Vec<f64> = (0..gh.n_states())
                    .map(|x| if gh.signal_of(x) == s { gh.init()[x] } else { 0.0 })
                    .collect();
                if w.iter().any(|p| *p > 0.0) {
                    tracker.reset(s);
                    e.visit(tracker.as_mut(), &w, 1)?;
                }
            }
            let bound = spread * gamma.powi(horizon as i32);
            let mode = if bound == 0.0 {
                EstimateMode::Exact
            } else {
                EstimateMode::Truncated { bound }
            };
            let mut est = PayoffEstimate::new(center + e.sum, mode);
            est.horizon = Some(horizon);
            est
        }
        DiscountMethod::Controller => {
            let fsc = sigma.to_controller(m.n_signals()).ok_or_else(|| {
                Error::InvalidArgument("strategy has no finite-state controller form".into())
            })?;
            fsc.check_compatible(m)?;
            let chain = controller_chain(&gh, &fsc, center);
            let v = chain.discounted(beta, gamma)?;
            PayoffEstimate::exact(center + chain.expect(&v))
        }
        DiscountMethod::MonteCarlo {
            n_traj,
            horizon,
            seed,
        } => {
            if n_traj < 2 {
                return Err(Error::InvalidArgument("Monte Carlo needs at least 2 trajectories".into()));
            }
            let horizon = horizon.unwrap_or_else(|| tail_horizon(spread, gamma, 1e-6));
            let samples: Vec<f64> = (0..n_traj)
                .into_par_iter()
                .map(|i| {
                    let mut rng = worker_rng(seed, i as u64);
                    let mut tracker = sigma.tracker();
                    let mut state = sample_index(gh.init(), &mut rng);
                    tracker.reset(gh.signal_of(state));
                    let mut weight = beta;
                    let mut total = 0.0;
                    for _ in 0..horizon {
                        let a = sample_index(tracker.act().weights(), &mut rng);
                        total += weight * (gh.payoff(state, a) - center);
                        weight *= gamma;
                        state = sample_index(gh.transition_row(state, a), &mut rng);
                        tracker.push(a, gh.signal_of(state));
                    }
                    total
                })
                .collect();
            let (mean, se) = mean_se(&samples);
            let mut est = PayoffEstimate::new(
                center + mean,
                EstimateMode::MonteCarlo {
                    std_error: se,
                    samples: n_traj,
                },
            );
            est.horizon = Some(horizon);
            est
        }
    };
    est.lambda = Some(lambda);
    Ok(est)
}

pub(crate) fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct Enumeration<'a> {
    model: &'a PomdpModel,
    center: f64,
    beta: f64,
    gamma: f64,
    horizon: usize,
    budget: usize,
    nodes: usize,
    sum: f64,
}

impl Enumeration<'_> {
    fn visit(&mut self, tracker: &mut dyn HistoryTracker, w: &[f64], t: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded {
                depth: t,
                budget: self.budget,
            });
        }
        let m = self.model;
        let mu = tracker.act();
        let weight = self.beta * self.gamma.powi(t as i32 - 1);
        for (a, pa) in mu.support() {
            let stage: f64 = w
                .iter()
                .enumerate()
                .map(|(x, p)| p * (m.payoff(x, a) - self.center))
                .sum();
            self.sum += weight * pa * stage;
            if t == self.horizon {
                continue;
            }
            for s in 0..m.n_signals() {
                let next = propagate(m, w, a, pa, Some(s));
                if next.iter().all(|p| *p == 0.0) {
                    continue;
                }
                tracker.push(a, s);
                let r = self.visit(tracker, &next, t + 1);
                tracker.pop();
                r?;
            }
        }
        Ok(())
    }
}
