//! The auxiliary processes behind a stage-duration model: Bernoulli marks
//! `X_j`, epoch boundaries `T_i` and geometric epoch lengths `N_i`, plus
//! simulation of `G_h` on the extended space that records the marks.
//!
//! Random streams: a run has one master seed; worker `i` draws from
//! ChaCha8 seeded with the master seed on stream `i` (see [`worker_rng`]).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{PomdpModel, StageDuration};
use crate::strategy::{HistoryTracker, Strategy};

/// Independent random stream `stream` derived from `master_seed`.
pub fn worker_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Geometric(h) on `{1, 2, …}` by inversion: `⌈ln U / ln(1 − h)⌉`, `U ∈ (0, 1]`.
pub fn sample_geometric<R: Rng + ?Sized>(h: StageDuration, rng: &mut R) -> usize {
    if h.is_one() {
        return 1;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    let n = (u.ln() / (1.0 - h.value()).ln()).ceil();
    if n < 1.0 {
        1
    } else {
        n as usize
    }
}

/// `P(N ≥ m) = (1 − h)^{m−1}`.
pub fn geometric_tail(h: StageDuration, m: usize) -> f64 {
    assert!(m >= 1, "geometric_tail needs m >= 1");
    (1.0 - h.value()).powi(m as i32 - 1)
}

/// Draw from a finite distribution given by nonnegative weights.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

/// Epoch lengths `N₁..N_k` and boundaries `T₀ = 0, T_i = Σ_{j≤i} N_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSample {
    pub lengths: Vec<usize>,
    pub boundaries: Vec<usize>,
}

impl EpochSample {
    pub fn from_lengths(lengths: Vec<usize>) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(Error::InvalidArgument("epoch lengths must be positive".into()));
        }
        let mut boundaries = Vec::with_capacity(lengths.len() + 1);
        boundaries.push(0);
        let mut t = 0;
        for &n in &lengths {
            t += n;
            boundaries.push(t);
        }
        Ok(EpochSample {
            lengths,
            boundaries,
        })
    }
}

/// `k` i.i.d. geometric(h) epoch lengths, reproducible from the seed.
pub fn sample_epochs(h: StageDuration, k: usize, seed: u64) -> EpochSample {
    let mut rng = worker_rng(seed, 0);
    let lengths = (0..k).map(|_| sample_geometric(h, &mut rng)).collect();
    EpochSample::from_lengths(lengths).expect("geometric draws are positive")
}

/// A simulated play of `G_h` with the transition marks.
///
/// Stage `j` (zero-based here) has state `states[j]`, signal
/// `signals[j] = f(states[j])`, action `actions[j]` and mark `marks[j]`;
/// `marks[j] = false` forces `states[j + 1] = states[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedTrajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub signals: Vec<usize>,
    pub marks: Vec<bool>,
}

impl ExtendedTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// One-based stages `T_i` at which the mark is set.
    pub fn boundaries(&self) -> Vec<usize> {
        self.marks
            .iter()
            .enumerate()
            .filter(|(_, x)| **x)
            .map(|(j, _)| j + 1)
            .collect()
    }

    pub fn payoffs(&self, m: &PomdpModel) -> Vec<f64> {
        self.states
            .iter()
            .zip(&self.actions)
            .map(|(&w, &a)| m.payoff(w, a))
            .collect()
    }
}

/// Outcome of one simulated stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRecord {
    pub state: usize,
    pub signal: usize,
    pub action: usize,
    pub mark: bool,
    pub payoff: f64,
    pub next_state: usize,
}

/// Stage-by-stage simulator of `G_h` built from the base model: at the end
/// of each stage a Bernoulli(h) mark decides whether the state moves by `P`
/// or stays put.
pub struct GhSimulator<'a> {
    model: &'a PomdpModel,
    tracker: Box<dyn HistoryTracker + 'a>,
    h: StageDuration,
    state: usize,
}

impl<'a> GhSimulator<'a> {
    pub fn new<R: Rng + ?Sized>(
        model: &'a PomdpModel,
        strategy: &'a dyn Strategy,
        h: StageDuration,
        rng: &mut R,
    ) -> Self {
        let state = sample_index(model.init(), rng);
        let mut tracker = strategy.tracker();
        tracker.reset(model.signal_of(state));
        GhSimulator {
            model,
            tracker,
            h,
            state,
        }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn signal(&self) -> usize {
        self.model.signal_of(self.state)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StageRecord {
        let state = self.state;
        let mu = self.tracker.act();
        let action = sample_index(mu.weights(), rng);
        let mark = self.h.is_one() || rng.random::<f64>() < self.h.value();
        let next_state = if mark {
            sample_index(self.model.transition_row(state, action), rng)
        } else {
            state
        };
        self.tracker.push(action, self.model.signal_of(next_state));
        self.state = next_state;
        StageRecord {
            state,
            signal: self.model.signal_of(state),
            action,
            mark,
            payoff: self.model.payoff(state, action),
            next_state,
        }
    }
}

/// Simulates `horizon` stages of `G_h` on the extended space.
pub fn simulate_gh(
    m: &PomdpModel,
    strategy: &dyn Strategy,
    h: StageDuration,
    horizon: usize,
    seed: u64,
) -> ExtendedTrajectory {
    let mut rng = worker_rng(seed, 0);
    simulate_gh_with(m, strategy, h, horizon, &mut rng)
}

pub fn simulate_gh_with<R: Rng + ?Sized>(
    m: &PomdpModel,
    strategy: &dyn Strategy,
    h: StageDuration,
    horizon: usize,
    rng: &mut R,
) -> ExtendedTrajectory {
    let mut sim = GhSimulator::new(m, strategy, h, rng);
    let mut traj = ExtendedTrajectory {
        states: Vec::with_capacity(horizon),
        actions: Vec::with_capacity(horizon),
        signals: Vec::with_capacity(horizon),
        marks: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let r = sim.step(rng);
        traj.states.push(r.state);
        traj.actions.push(r.action);
        traj.signals.push(r.signal);
        traj.marks.push(r.mark);
    }
    traj
}

/// `E[M^{N−1}]` for `N ~ geometric(h)`, in closed form `h·(I − (1 − h)·M)^{-1}`.
pub fn epoch_memory_operator(m: &DMatrix<f64>, h: StageDuration) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Shape("epoch operator needs a square matrix".into()));
    }
    if h.is_one() {
        return Ok(DMatrix::identity(n, n));
    }
    let a = DMatrix::identity(n, n) - m * (1.0 - h.value());
    let rhs = DMatrix::identity(n, n) * h.value();
    let out = linalg::solve(&a, &rhs, 1e-10)?;
    let err = linalg::row_sum_error(&out);
    if err > 1e-10 {
        return Err(Error::SingularSystem(format!("epoch operator rows off by {err:e}")));
    }
    Ok(out)
}
