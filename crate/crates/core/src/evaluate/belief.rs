use rayon::prelude::*;

use nalgebra::DMatrix;

use super::chain::MarkovChain;
use super::grid::SimplexGrid;
use super::{check_lambda, payoff_center, EstimateMode, PayoffEstimate};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{is_fully_observed, stage_duration_transform, PomdpModel, StageDuration, PROB_TOL};
use crate::strategy::propagate;

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.1, 0.05, 0.02, 0.01, 0.005];
pub const DEFAULT_RESOLUTION: usize = 24;
pub const DEFAULT_SWEEPS: usize = 200;

/// A distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState(Vec<f64>);

impl BeliefState {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidArgument(format!("belief sums to {sum}")));
        }
        Ok(BeliefState(probs))
    }

    pub fn delta(n_states: usize, state: usize) -> Self {
        let mut v = vec![0.0; n_states];
        v[state] = 1.0;
        BeliefState(v)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// Bayes update through `P` of `m` and the deterministic signal.
pub fn belief_update(m: &PomdpModel, b: &BeliefState, action: usize, signal: usize) -> Result<BeliefState> {
    let mut next = propagate(m, b.probs(), action, 1.0, Some(signal));
    let z: f64 = next.iter().sum();
    if !(z > 0.0) {
        return Err(Error::ImpossibleObservation);
    }
    next.iter_mut().for_each(|p| *p /= z);
    Ok(BeliefState(next))
}

/// Initial belief after observing each possible first signal, with the
/// signal's probability.
pub fn initial_beliefs(m: &PomdpModel) -> Vec<(usize, f64, BeliefState)> {
    (0..m.n_signals())
        .filter_map(|s| {
            let w: Vec<f64> = (0..m.n_states())
                .map(|x| if m.signal_of(x) == s { m.init()[x] } else { 0.0 })
                .collect();
            let z: f64 = w.iter().sum();
            (z > 0.0).then(|| (s, z, BeliefState(w.into_iter().map(|p| p / z).collect())))
        })
        .collect()
}

/// Finite MDP with rewards `reward[s·na + a]` and sparse rows `trans[s·na + a]`.
struct FiniteMdp {
    n: usize,
    na: usize,
    reward: Vec<f64>,
    trans: Vec<Vec<(usize, f64)>>,
}

struct MdpSolution {
    value: Vec<f64>,
    policy: Vec<usize>,
    /// Bellman residual `‖T V − V‖∞` of the returned value.
    residual: f64,
}

impl FiniteMdp {
    fn q(&self, v: &[f64], s: usize, a: usize, beta: f64, gamma: f64) -> f64 {
        let i = s * self.na + a;
        beta * self.reward[i] + gamma * self.trans[i].iter().map(|&(j, p)| p * v[j]).sum::<f64>()
    }

    fn evaluate(&self, policy: &[usize], beta: f64, gamma: f64) -> Result<Vec<f64>> {
        let n = self.n;
        let mut a = DMatrix::identity(n, n);
        let mut b = DMatrix::zeros(n, 1);
        for s in 0..n {
            let i = s * self.na + policy[s];
            b[(s, 0)] = beta * self.reward[i];
            for &(j, p) in &self.trans[i] {
                a[(s, j)] -= gamma * p;
            }
        }
        let x = linalg::solve(&a, &b, 1e-10)?;
        Ok(x.iter().copied().collect())
    }

    /// Policy iteration; each iteration counts as one sweep of the budget.
    fn solve(&self, beta: f64, gamma: f64, sweeps: usize) -> Result<MdpSolution> {
        let mut policy: Vec<usize> = (0..self.n)
            .map(|s| {
                (0..self.na)
                    .max_by(|&a, &b| self.reward[s * self.na + a].total_cmp(&self.reward[s * self.na + b]))
                    .expect("actions")
            })
            .collect();
        let mut residual = f64::INFINITY;
        for _ in 0..sweeps.max(1) {
            let value = self.evaluate(&policy, beta, gamma)?;
            let mut changed = false;
            residual = 0.0;
            for s in 0..self.n {
                let current = self.q(&value, s, policy[s], beta, gamma);
                let mut best = (policy[s], current);
                for a in 0..self.na {
                    let q = self.q(&value, s, a, beta, gamma);
                    if q > best.1 + 1e-13 * (1.0 + q.abs()) {
                        best = (a, q);
                    }
                }
                residual = f64::max(residual, (best.1 - value[s]).abs());
                if best.0 != policy[s] {
                    policy[s] = best.0;
                    changed = true;
                }
            }
            if !changed {
                return Ok(MdpSolution {
                    value,
                    policy,
                    residual,
                });
            }
        }
        Err(Error::NotConverged { sweeps, residual })
    }
}

/// Estimate of `V_λ(h) = sup_σ E^h_σ[λh·Σ (1 − λh)^{i−1} g]`.
///
/// Fully observed models are solved exactly as a finite MDP. Otherwise the
/// belief MDP of `G_h` is approximated on a simplex lattice of resolution
/// `grid_resolution`: piecewise-linear interpolation of the lattice values
/// gives an upper bound (the value function is convex), and the greedy
/// lattice-memory controller, evaluated exactly, gives a lower bound. The
/// reported value is the upper bound.
pub fn discounted_value_estimate(
    m: &PomdpModel,
    lambda: f64,
    h: StageDuration,
    grid_resolution: usize,
    sweeps: usize,
) -> Result<PayoffEstimate> {
    check_lambda(lambda)?;
    if grid_resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be at least 2".into()));
    }
    let beta = lambda * h.value();
    let gamma = 1.0 - beta;
    let gh = stage_duration_transform(m, h);
    let (center, _) = payoff_center(m);
    let na = m.n_actions();
    let ns = m.n_states();

    let mut est = if is_fully_observed(m) {
        let mdp = FiniteMdp {
            n: ns,
            na,
            reward: (0..ns * na).map(|i| gh.payoff(i / na, i % na) - center).collect(),
            trans: (0..ns * na)
                .map(|i| {
                    gh.transition_row(i / na, i % na)
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p > 0.0)
                        .map(|(j, &p)| (j, p))
                        .collect()
                })
                .collect(),
        };
        let sol = mdp.solve(beta, gamma, sweeps)?;
        let v: f64 = m.init().iter().zip(&sol.value).map(|(p, v)| p * v).sum();
        PayoffEstimate::exact(center + v)
    } else {
        grid_estimate(&gh, center, beta, gamma, grid_resolution, sweeps)?
    };
    est.lambda = Some(lambda);
    Ok(est)
}

fn grid_estimate(
    gh: &PomdpModel,
    center: f64,
    beta: f64,
    gamma: f64,
    resolution: usize,
    sweeps: usize,
) -> Result<PayoffEstimate> {
    let grid = SimplexGrid::new(gh.n_states(), resolution)?;
    let na = gh.n_actions();
    let rows: Vec<(f64, Vec<(usize, f64)>)> = (0..grid.len() * na)
        .into_par_iter()
        .map(|i| {
            let b = grid.point(i / na);
            let a = i % na;
            let r: f64 = b.iter().enumerate().map(|(x, p)| p * (gh.payoff(x, a) - center)).sum();
            let mut row: Vec<(usize, f64)> = Vec::new();
            for s in 0..gh.n_signals() {
                let u = propagate(gh, &b, a, 1.0, Some(s));
                let z: f64 = u.iter().sum();
                if z <= 0.0 {
                    continue;
                }
                let post: Vec<f64> = u.iter().map(|p| p / z).collect();
                for (j, w) in grid.interpolate(&post) {
                    match row.iter_mut().find(|(k, _)| *k == j) {
                        Some(e) => e.1 += z * w,
                        None => row.push((j, z * w)),
                    }
                }
            }
            (r, row)
        })
        .collect();
    let (reward, trans) = rows.into_iter().unzip();
    let mdp = FiniteMdp {
        n: grid.len(),
        na,
        reward,
        trans,
    };
    let sol = mdp.solve(beta, gamma, sweeps)?;
    let stopping_bound = sol.residual / beta;

    let starts = initial_beliefs(gh);
    let upper: f64 = starts
        .iter()
        .map(|(_, z, b)| z * grid.interpolate(b.probs()).iter().map(|&(j, w)| w * sol.value[j]).sum::<f64>())
        .sum();

    // greedy controller whose memory is a lattice point
    let next_memory = |j: usize, s: usize| -> usize {
        let b = grid.point(j);
        let u = propagate(gh, &b, sol.policy[j], 1.0, Some(s));
        let z: f64 = u.iter().sum();
        if z > 0.0 {
            grid.nearest(&u.iter().map(|p| p / z).collect::<Vec<_>>())
        } else {
            j
        }
    };
    let mut chain_starts = Vec::new();
    for (s, _, b) in &starts {
        let q0 = grid.nearest(b.probs());
        for (x, &p) in gh.init().iter().enumerate() {
            if gh.signal_of(x) == *s && p > 0.0 {
                chain_starts.push(((x, q0), p));
            }
        }
    }
    let mut memo: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
    let chain = MarkovChain::explore(chain_starts, |&(x, j)| {
        let a = sol.policy[j];
        let succ = gh
            .transition_row(x, a)
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(x2, &p)| {
                let s = gh.signal_of(x2);
                let j2 = *memo.entry((j, s)).or_insert_with(|| next_memory(j, s));
                ((x2, j2), p)
            })
            .collect();
        (gh.payoff(x, a) - center, succ)
    });
    let lower = chain.expect(&chain.discounted(beta, gamma)?);

    Ok(PayoffEstimate::new(
        center + upper + stopping_bound,
        EstimateMode::Approximate {
            lower: center + lower,
            upper: center + upper,
            stopping_bound,
        },
    ))
}

/// Runs [`discounted_value_estimate`] along a strictly decreasing λ grid and
/// reports the last value with the trend `V(λ_last) − V(λ_prev)`.
pub fn asymptotic_value_estimate(
    m: &PomdpModel,
    h: StageDuration,
    lambda_grid: &[f64],
    grid_resolution: usize,
    sweeps: usize,
) -> Result<PayoffEstimate> {
    if lambda_grid.is_empty()
        || lambda_grid.iter().any(|l| !(*l > 0.0))
        || lambda_grid.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(Error::InvalidArgument("λ grid must be positive and strictly decreasing".into()));
    }
    let values: Vec<PayoffEstimate> = lambda_grid
        .iter()
        .map(|&l| discounted_value_estimate(m, l, h, grid_resolution, sweeps))
        .collect::<Result<_>>()?;
    let n = values.len();
    let mut last = values[n - 1].clone();
    last.trend = Some(if n >= 2 { last.value - values[n - 2].value } else { 0.0 });
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, RawModel};

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn update_follows_deterministic_move() {
        let mut raw = RawModel::with_names(names(&["x", "y"]), names(&["a"]), names(&["s", "t"]));
        raw.signal_map = vec![Some(0), Some(1)];
        raw.transition = vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]];
        raw.init = vec![1.0, 0.0];
        let m = validate_model(raw).unwrap();
        let b = belief_update(&m, &BeliefState::delta(2, 0), 0, 1).unwrap();
        assert_eq!(b.probs(), &[0.0, 1.0]);
        assert_eq!(belief_update(&m, &BeliefState::delta(2, 0), 0, 0), Err(Error::ImpossibleObservation));
    }

    #[test]
    fn single_state_value_is_best_payoff() {
        let mut raw = RawModel::with_names(names(&["x"]), names(&["a", "b"]), names(&["s"]));
        raw.signal_map = vec![Some(0)];
        raw.payoff = vec![vec![0.25, 0.75]];
        raw.transition = vec![vec![vec![1.0], vec![1.0]]];
        raw.init = vec![1.0];
        let m = validate_model(raw).unwrap();
        for h in [1.0, 0.4] {
            let v = discounted_value_estimate(&m, 0.1, StageDuration::new(h).unwrap(), 4, 50).unwrap();
            assert!((v.value - 0.75).abs() < 1e-12);
        }
    }
}
