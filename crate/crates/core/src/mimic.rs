//! The mimicking strategy σ̂: a strategy for the base model that plays, at
//! its `k`-th stage, the conditional law of the action `σ` takes in `G_h`
//! at the `k`-th epoch boundary `T_k`, given the filtered history
//! `(s'₁, a'_{T₁}, s'_{T₁+1}, …, a'_{T_{k−1}}, s'_{T_{k−1}+1})`.
//!
//! Two exact routes are provided:
//!
//! * [`truncated_joint_law`] enumerates every `G_h` history compatible with
//!   a filtered history, with each epoch cut at `N_max` stages. It works for
//!   any strategy but branches on every action in the support, so it is
//!   only practical for pure or nearly pure sources.
//! * [`controller_joint_law`] and [`mimic_controller`] handle finite-state
//!   controllers without truncation: within an epoch the state and signal
//!   are frozen, so memory evolves by a fixed kernel `K_s` and the epoch
//!   integrates it to `h·(I − (1 − h)K_s)^{-1}`.
//!
//! [`mimic_action_mc`] estimates the same conditional law by rejection
//! sampling on the extended space.

use std::collections::HashMap;
use std::sync::{Mutex, RwLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::epoch::{epoch_memory_operator, worker_rng, ExtendedTrajectory, GhSimulator};
use crate::error::{Error, Result};
use crate::model::{MixedAction, PomdpModel, StageDuration};
use crate::strategy::{
    propagate, FiniteStateController, History, HistoryKey, HistoryTracker, Strategy, DEFAULT_BUDGET,
};

/// Per-epoch tail mass targeted by [`default_truncation`].
pub const DEFAULT_EPOCH_TAIL: f64 = 1e-9;

/// Monte Carlo samples are processed in chunks of this size, one random
/// stream per chunk, so results do not depend on the thread count.
const MC_CHUNK: usize = 4096;

/// Filtered history `(s'₁, a'_{T₁}, s'_{T₁+1}, …)`; same shape as a history.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FilteredHistory(pub History);

/// Extracts the filtered history of length `k` from a simulated trajectory.
pub fn filter_trajectory(traj: &ExtendedTrajectory, k: usize) -> Result<FilteredHistory> {
    if k == 0 || traj.is_empty() {
        return Err(Error::InvalidArgument("k and the trajectory must be nonempty".into()));
    }
    // a boundary T_i is usable only if stage T_i + 1 exists
    let usable: Vec<usize> = traj
        .boundaries()
        .into_iter()
        .filter(|&t| t < traj.len())
        .take(k - 1)
        .collect();
    if usable.len() < k - 1 {
        return Err(Error::InsufficientEpochs {
            needed: k - 1,
            found: usable.len(),
        });
    }
    let mut h = History::new(traj.signals[0]);
    for t in usable {
        h.push(traj.actions[t - 1], traj.signals[t]);
    }
    Ok(FilteredHistory(h))
}

/// Smallest `N_max` with `(1 − h)^{N_max} ≤ 1e-9`; `1` when `h = 1`.
pub fn default_truncation(h: StageDuration) -> usize {
    if h.is_one() {
        return 1;
    }
    let n = (DEFAULT_EPOCH_TAIL.ln() / (1.0 - h.value()).ln()).ceil();
    (n as usize).max(1)
}

/// Reported total-variation bound `2k·(1 − h)^{N_max}` for a truncated law.
pub fn truncation_bound(h: StageDuration, k: usize, n_max: usize) -> f64 {
    2.0 * k as f64 * (1.0 - h.value()).powi(n_max as i32)
}

/// Joint law `P^h_σ(H^fil_k = η, ω'_{T_k} = ω, a'_{T_k} = a)` for one `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochJointLaw {
    n_actions: usize,
    joint: Vec<f64>,
    /// Upper bound on the mass missing because of truncation.
    pub bound: f64,
}

impl EpochJointLaw {
    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.joint[state * self.n_actions + action]
    }

    /// `P(H^fil_k = η)`.
    pub fn mass(&self) -> f64 {
        self.joint.iter().sum()
    }

    /// Unnormalized weight of each action at `T_k`.
    pub fn action_masses(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_actions];
        for (i, p) in self.joint.iter().enumerate() {
            w[i % self.n_actions] += p;
        }
        w
    }

    pub fn entries(&self) -> &[f64] {
        &self.joint
    }
}

struct Enumerator<'a> {
    model: &'a PomdpModel,
    h: f64,
    eta: &'a History,
    n_max: usize,
    budget: usize,
    nodes: usize,
    joint: Vec<f64>,
    tracker: Box<dyn HistoryTracker + 'a>,
}

impl Enumerator<'_> {
    /// One stage of epoch `epoch` (zero-based), `len` stages into it, with
    /// `w(ω)` the joint mass of the path so far and the frozen state.
    fn visit(&mut self, w: &[f64], epoch: usize, len: usize) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded {
                depth: self.eta.len(),
                budget: self.budget,
            });
        }
        let k = self.eta.len();
        let na = self.model.n_actions();
        let current = self.eta.signal(epoch);
        let mu = self.tracker.act();
        for (a, pa) in mu.support() {
            // X = 1: the epoch ends at this stage
            if epoch + 1 == k {
                let c = pa * self.h;
                for (x, &mass) in w.iter().enumerate() {
                    self.joint[x * na + a] += mass * c;
                }
            } else if a == self.eta.action(epoch) {
                let next_signal = self.eta.signal(epoch + 1);
                let next = propagate(self.model, w, a, pa * self.h, Some(next_signal));
                if next.iter().any(|p| *p > 0.0) {
                    self.tracker.push(a, next_signal);
                    let r = self.visit(&next, epoch + 1, 1);
                    self.tracker.pop();
                    r?;
                }
            }
            // X = 0: the state and its signal repeat
            if self.h < 1.0 && len < self.n_max {
                let c = pa * (1.0 - self.h);
                let frozen: Vec<f64> = w.iter().map(|m| m * c).collect();
                self.tracker.push(a, current);
                let r = self.visit(&frozen, epoch, len + 1);
                self.tracker.pop();
                r?;
            }
        }
        Ok(())
    }
}

/// Joint law at the `k`-th epoch boundary for `k = η.len()`, enumerating all
/// `G_h` histories compatible with `η` with every epoch cut at `n_max`.
pub fn truncated_joint_law(
    m: &PomdpModel,
    source: &dyn Strategy,
    h: StageDuration,
    eta: &History,
    n_max: usize,
    budget: usize,
) -> Result<EpochJointLaw> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("N_max must be at least 1".into()));
    }
    let ns = m.n_states();
    let na = m.n_actions();
    let s1 = eta.first_signal();
    let w: Vec<f64> = (0..ns)
        .map(|x| if m.signal_of(x) == s1 { m.init()[x] } else { 0.0 })
        .collect();
    let mut en = Enumerator {
        model: m,
        h: h.value(),
        eta,
        n_max,
        budget,
        nodes: 0,
        joint: vec![0.0; ns * na],
        tracker: source.tracker(),
    };
    if w.iter().any(|p| *p > 0.0) {
        en.tracker.reset(s1);
        en.visit(&w, 0, 1)?;
    }
    Ok(EpochJointLaw {
        n_actions: na,
        joint: en.joint,
        bound: if h.is_one() {
            0.0
        } else {
            truncation_bound(h, eta.len(), n_max)
        },
    })
}

/// σ̂(η) with the diagnostics of its computation.
#[derive(Debug, Clone, PartialEq)]
pub struct MimicAction {
    pub action: MixedAction,
    /// Bound on the unnormalized total-variation error.
    pub bound: f64,
    /// `P(H^fil_k = η)` as computed.
    pub conditioning_mass: f64,
    /// False when the conditioning mass is below ten times the bound.
    pub reliable: bool,
    /// True when the event had zero computed mass and the fallback was used.
    pub fallback: bool,
}

impl MimicAction {
    fn from_law(law: &EpochJointLaw, n_actions: usize) -> Self {
        let mass = law.mass();
        let reliable = law.bound == 0.0 || mass >= 10.0 * law.bound;
        match MixedAction::normalized(law.action_masses()) {
            Some(action) => MimicAction {
                action,
                bound: law.bound,
                conditioning_mass: mass,
                reliable,
                fallback: false,
            },
            None => MimicAction {
                action: MixedAction::uniform(n_actions),
                bound: law.bound,
                conditioning_mass: 0.0,
                reliable: law.bound == 0.0,
                fallback: true,
            },
        }
    }

    /// Rejects results whose conditioning mass is dominated by truncation.
    pub fn require_reliable(self) -> Result<Self> {
        if self.reliable {
            Ok(self)
        } else {
            Err(Error::TruncationDominates {
                mass: self.conditioning_mass,
                bound: self.bound,
            })
        }
    }
}

/// σ̂(η) by truncated enumeration; null events map to the uniform action.
pub fn mimic_action_exact(
    m: &PomdpModel,
    source: &dyn Strategy,
    h: StageDuration,
    eta: &History,
    n_max: usize,
) -> Result<MimicAction> {
    let law = truncated_joint_law(m, source, h, eta, n_max, DEFAULT_BUDGET)?;
    Ok(MimicAction::from_law(&law, m.n_actions()))
}

/// Rejection-sampling estimate of σ̂(η).
#[derive(Debug, Clone, PartialEq)]
pub struct MimicEstimate {
    pub weights: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub accepted: usize,
    pub samples: usize,
}

impl MimicEstimate {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.samples as f64
    }
}

/// Simulates `G_h` until the `k`-th mark; returns `a'_{T_k}` if the filtered
/// history matches `η`.
fn sample_boundary_action<R: rand::Rng + ?Sized>(
    m: &PomdpModel,
    source: &dyn Strategy,
    h: StageDuration,
    eta: &History,
    rng: &mut R,
) -> Option<usize> {
    let mut sim = GhSimulator::new(m, source, h, rng);
    if sim.signal() != eta.first_signal() {
        return None;
    }
    let k = eta.len();
    let mut epoch = 0;
    loop {
        let r = sim.step(rng);
        if !r.mark {
            continue;
        }
        if epoch + 1 == k {
            return Some(r.action);
        }
        if r.action != eta.action(epoch) || m.signal_of(r.next_state) != eta.signal(epoch + 1) {
            return None;
        }
        epoch += 1;
    }
}

pub fn mimic_action_mc(
    m: &PomdpModel,
    source: &dyn Strategy,
    h: StageDuration,
    eta: &History,
    n_samples: usize,
    seed: u64,
) -> Result<MimicEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let na = m.n_actions();
    let chunks = n_samples.div_ceil(MC_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = worker_rng(seed, c as u64);
            let n = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut counts = vec![0usize; na];
            for _ in 0..n {
                if let Some(a) = sample_boundary_action(m, source, h, eta, &mut rng) {
                    counts[a] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0usize; na],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let accepted: usize = counts.iter().sum();
    if accepted == 0 {
        return Err(Error::NoAcceptedSamples);
    }
    let n = accepted as f64;
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let std_errors = weights.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(MimicEstimate {
        weights,
        std_errors,
        accepted,
        samples: n_samples,
    })
}

/// σ̂ as a lazily evaluated, memoized strategy on the base model (truncated
/// route). Enumeration failures fall back to the uniform action and are kept
/// for inspection through [`MimicStrategy::take_error`].
pub struct MimicStrategy<'a> {
    model: &'a PomdpModel,
    source: &'a dyn Strategy,
    h: StageDuration,
    n_max: usize,
    budget: usize,
    memo: RwLock<HashMap<HistoryKey, MimicAction>>,
    error: Mutex<Option<Error>>,
}

pub fn build_mimic_strategy<'a>(
    m: &'a PomdpModel,
    source: &'a dyn Strategy,
    h: StageDuration,
    n_max: usize,
) -> MimicStrategy<'a> {
    MimicStrategy {
        model: m,
        source,
        h,
        n_max,
        budget: DEFAULT_BUDGET,
        memo: RwLock::new(HashMap::new()),
        error: Mutex::new(None),
    }
}

impl MimicStrategy<'_> {
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn h(&self) -> StageDuration {
        self.h
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// σ̂(η) with diagnostics, memoized by the canonical history key.
    pub fn try_act(&self, eta: &History) -> Result<MimicAction> {
        let key = eta.key(self.model.n_actions(), self.model.n_signals());
        if let Some(key) = key {
            if let Some(hit) = self.memo.read().expect("memo lock").get(&key) {
                return Ok(hit.clone());
            }
        }
        let law = truncated_joint_law(self.model, self.source, self.h, eta, self.n_max, self.budget)?;
        let out = MimicAction::from_law(&law, self.model.n_actions());
        if let Some(key) = key {
            let mut memo = self.memo.write().expect("memo lock");
            if memo.len() < self.budget {
                memo.insert(key, out.clone());
            }
        }
        Ok(out)
    }

    /// First enumeration error seen by [`Strategy::act`], if any.
    pub fn take_error(&self) -> Option<Error> {
        self.error.lock().expect("error lock").take()
    }
}

impl Strategy for MimicStrategy<'_> {
    fn act(&self, history: &History) -> MixedAction {
        match self.try_act(history) {
            Ok(r) => r.action,
            Err(e) => {
                self.error.lock().expect("error lock").get_or_insert(e);
                MixedAction::uniform(self.model.n_actions())
            }
        }
    }
}

/// Memory kernel during an epoch with frozen signal `s`:
/// `K_s(q, q') = Σ_a π(a|q)·u(q'|q, a, s)`.
fn frozen_memory_kernel(fsc: &FiniteStateController, signal: usize) -> DMatrix<f64> {
    let n = fsc.n_memory();
    let mut k = DMatrix::zeros(n, n);
    for q in 0..n {
        for (a, &pa) in fsc.action_row(q).iter().enumerate() {
            if pa > 0.0 {
                for (q2, &u) in fsc.update_row(q, a, signal).iter().enumerate() {
                    k[(q, q2)] += pa * u;
                }
            }
        }
    }
    k
}

/// `E_s = h·(I − (1 − h)K_s)^{-1}` for every signal.
pub fn epoch_operators(fsc: &FiniteStateController, h: StageDuration) -> Result<Vec<DMatrix<f64>>> {
    (0..fsc.n_signals())
        .map(|s| epoch_memory_operator(&frozen_memory_kernel(fsc, s), h))
        .collect()
}

fn row_times(row: &[f64], mat: &DMatrix<f64>) -> Vec<f64> {
    let n = mat.ncols();
    let mut out = vec![0.0; n];
    for (i, &r) in row.iter().enumerate() {
        if r != 0.0 {
            for (j, o) in out.iter_mut().enumerate() {
                *o += r * mat[(i, j)];
            }
        }
    }
    out
}

/// Exact joint law at `T_k` for a finite-state controller source, with no
/// truncation.
pub fn controller_joint_law(
    m: &PomdpModel,
    fsc: &FiniteStateController,
    h: StageDuration,
    eta: &History,
) -> Result<EpochJointLaw> {
    fsc.check_compatible(m)?;
    let ops = epoch_operators(fsc, h)?;
    controller_joint_law_with(m, fsc, &ops, eta)
}

pub(crate) fn controller_joint_law_with(
    m: &PomdpModel,
    fsc: &FiniteStateController,
    ops: &[DMatrix<f64>],
    eta: &History,
) -> Result<EpochJointLaw> {
    let ns = m.n_states();
    let na = m.n_actions();
    let nq = fsc.n_memory();
    let s1 = eta.first_signal();
    // phi[ω][q]: mass at the start of the current epoch
    let mut phi: Vec<Vec<f64>> = (0..ns)
        .map(|x| {
            if m.signal_of(x) == s1 && m.init()[x] > 0.0 {
                fsc.init_row(s1).iter().map(|p| p * m.init()[x]).collect()
            } else {
                vec![0.0; nq]
            }
        })
        .collect();
    let k = eta.len();
    let mut joint = vec![0.0; ns * na];
    for epoch in 0..k {
        let op = &ops[eta.signal(epoch)];
        let psi: Vec<Vec<f64>> = phi.iter().map(|row| row_times(row, op)).collect();
        if epoch + 1 == k {
            for (x, row) in psi.iter().enumerate() {
                for (q, &mass) in row.iter().enumerate() {
                    if mass != 0.0 {
                        for (a, &pa) in fsc.action_row(q).iter().enumerate() {
                            joint[x * na + a] += mass * pa;
                        }
                    }
                }
            }
            break;
        }
        let a = eta.action(epoch);
        let s_next = eta.signal(epoch + 1);
        let mut next = vec![vec![0.0; nq]; ns];
        for (x, row) in psi.iter().enumerate() {
            for (q, &mass) in row.iter().enumerate() {
                let c = mass * fsc.action_row(q)[a];
                if c == 0.0 {
                    continue;
                }
                let upd = fsc.update_row(q, a, s_next);
                for (x2, &p) in m.transition_row(x, a).iter().enumerate() {
                    if p == 0.0 || m.signal_of(x2) != s_next {
                        continue;
                    }
                    for (q2, &u) in upd.iter().enumerate() {
                        next[x2][q2] += c * p * u;
                    }
                }
            }
        }
        phi = next;
    }
    Ok(EpochJointLaw {
        n_actions: na,
        joint,
        bound: 0.0,
    })
}

/// σ̂ for a controller source, itself a finite-state controller on the base
/// model. Its memory is the source's memory at the moment `T_k` an epoch
/// ends: `init'(s) = init(s)·E_s` and `update'(q, a, s) = update(q, a, s)·E_s`,
/// with the same action rule.
pub fn mimic_controller(
    m: &PomdpModel,
    fsc: &FiniteStateController,
    h: StageDuration,
) -> Result<FiniteStateController> {
    fsc.check_compatible(m)?;
    if h.is_one() {
        return Ok(fsc.clone());
    }
    let ops = epoch_operators(fsc, h)?;
    let clean = |mut v: Vec<f64>| {
        v.iter_mut().for_each(|p| *p = p.max(0.0));
        let sum: f64 = v.iter().sum();
        v.iter_mut().for_each(|p| *p /= sum);
        v
    };
    FiniteStateController::from_fn_with_tolerance(
        fsc.n_memory(),
        fsc.n_actions(),
        fsc.n_signals(),
        |s| clean(row_times(fsc.init_row(s), &ops[s])),
        |q| fsc.action_row(q).to_vec(),
        |q, a, s| clean(row_times(fsc.update_row(q, a, s), &ops[s])),
        1e-9,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epoch::ExtendedTrajectory;

    #[test]
    fn filter_takes_boundary_coordinates() {
        // N = (2, 1): T1 = 2, T2 = 3
        let traj = ExtendedTrajectory {
            states: vec![0, 0, 1, 2],
            actions: vec![0, 1, 0, 1],
            signals: vec![0, 0, 1, 0],
            marks: vec![false, true, true, false],
        };
        let f = filter_trajectory(&traj, 1).unwrap();
        assert_eq!(f.0, History::new(0));
        let f = filter_trajectory(&traj, 3).unwrap();
        assert_eq!(f.0, History::from_parts(vec![0, 1, 0], vec![1, 0]).unwrap());
        assert_eq!(
            filter_trajectory(&traj, 4),
            Err(Error::InsufficientEpochs { needed: 3, found: 2 })
        );
    }

    #[test]
    fn filter_is_identity_when_every_stage_is_marked() {
        let traj = ExtendedTrajectory {
            states: vec![0, 1, 0, 1],
            actions: vec![1, 0, 1, 1],
            signals: vec![0, 1, 0, 1],
            marks: vec![true; 4],
        };
        let f = filter_trajectory(&traj, 4).unwrap();
        assert_eq!(f.0, History::from_parts(vec![0, 1, 0, 1], vec![1, 0, 1]).unwrap());
    }

    #[test]
    fn truncation_defaults() {
        assert_eq!(default_truncation(StageDuration::ONE), 1);
        let h = StageDuration::new(0.5).unwrap();
        let n = default_truncation(h);
        assert_eq!(n, 30);
        assert!((0.5f64).powi(n as i32) <= DEFAULT_EPOCH_TAIL);
        assert!((0.5f64).powi(n as i32 - 1) > DEFAULT_EPOCH_TAIL);
    }
}
