//! Behavior strategies and the exact finite-depth law they induce.
//!
//! A strategy maps an observed history `(s₁, a₁, s₂, …, s_t)` to a mixed
//! action. Three concrete forms are provided: a cyclic action sequence that
//! ignores signals, a finite-state controller, and a depth-bounded lookup
//! table. Enumeration and simulation walk histories one step at a time, so
//! every strategy also hands out a [`HistoryTracker`] that can be pushed and
//! popped along a history without re-reading it from the start.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{MixedAction, PomdpModel, PROB_TOL};

/// Default cap on the number of joint entries an exact enumeration may touch.
pub const DEFAULT_BUDGET: usize = 10_000_000;

/// Alternating record `(s₁, a₁, s₂, …, a_{t−1}, s_t)` of length `t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct History {
    signals: Vec<usize>,
    actions: Vec<usize>,
}

/// Canonical integer encoding of a history: the length plus the base-`|A||S|`
/// digits of its steps after the leading signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HistoryKey {
    pub len: u32,
    pub code: u128,
}

impl History {
    pub fn new(first_signal: usize) -> Self {
        History {
            signals: vec![first_signal],
            actions: Vec::new(),
        }
    }

    /// Builds a history from its signals and the actions between them.
    pub fn from_parts(signals: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if signals.is_empty() || signals.len() != actions.len() + 1 {
            return Err(Error::InvalidArgument(
                "a history needs exactly one more signal than actions".into(),
            ));
        }
        Ok(History { signals, actions })
    }

    pub fn push(&mut self, action: usize, signal: usize) {
        self.actions.push(action);
        self.signals.push(signal);
    }

    pub fn pop(&mut self) -> Option<(usize, usize)> {
        if self.actions.is_empty() {
            return None;
        }
        let a = self.actions.pop()?;
        let s = self.signals.pop()?;
        Some((a, s))
    }

    /// Length `t` (number of signals).
    #[inline]
    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first_signal(&self) -> usize {
        self.signals[0]
    }

    pub fn last_signal(&self) -> usize {
        self.signals[self.signals.len() - 1]
    }

    /// Signal `s_{i+1}` (zero-based).
    pub fn signal(&self, i: usize) -> usize {
        self.signals[i]
    }

    /// Action `a_{i+1}` (zero-based).
    pub fn action(&self, i: usize) -> usize {
        self.actions[i]
    }

    pub fn signals(&self) -> &[usize] {
        &self.signals
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// `(a_i, s_{i+1})` pairs in order.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.actions.iter().copied().zip(self.signals[1..].iter().copied())
    }

    /// Prefix of length `t`.
    pub fn prefix(&self, t: usize) -> History {
        History {
            signals: self.signals[..t].to_vec(),
            actions: self.actions[..t - 1].to_vec(),
        }
    }

    pub fn key(&self, n_actions: usize, n_signals: usize) -> Option<HistoryKey> {
        let radix = (n_actions * n_signals) as u128;
        let mut code = self.signals[0] as u128;
        for (a, s) in self.steps() {
            code = code
                .checked_mul(radix)?
                .checked_add((a * n_signals + s) as u128)?;
        }
        Some(HistoryKey {
            len: self.len() as u32,
            code,
        })
    }

    /// All histories of length `len` over the given alphabets, in
    /// lexicographic order.
    pub fn enumerate(n_actions: usize, n_signals: usize, len: usize) -> Vec<History> {
        let mut out: Vec<History> = (0..n_signals).map(History::new).collect();
        for _ in 1..len {
            let mut next = Vec::with_capacity(out.len() * n_actions * n_signals);
            for h in &out {
                for a in 0..n_actions {
                    for s in 0..n_signals {
                        let mut e = h.clone();
                        e.push(a, s);
                        next.push(e);
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Space-separated rendering with model names, e.g. `s1 a s1 b s1`.
    pub fn display(&self, m: &PomdpModel) -> String {
        let mut out = m.signal_names()[self.signals[0]].clone();
        for (a, s) in self.steps() {
            out.push(' ');
            out.push_str(&m.action_names()[a]);
            out.push(' ');
            out.push_str(&m.signal_names()[s]);
        }
        out
    }

    /// Parses alternating signal/action names separated by spaces or commas.
    pub fn parse(m: &PomdpModel, text: &str) -> Result<History> {
        let tokens: Vec<&str> = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.len() % 2 == 0 {
            return Err(Error::InvalidArgument(
                "history must alternate signal, action, …, signal".into(),
            ));
        }
        let signal = |t: &str| {
            m.signal_index(t)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown signal '{t}'")))
        };
        let mut h = History::new(signal(tokens[0])?);
        for pair in tokens[1..].chunks(2) {
            let a = m
                .action_index(pair[0])
                .ok_or_else(|| Error::InvalidArgument(format!("unknown action '{}'", pair[0])))?;
            h.push(a, signal(pair[1])?);
        }
        Ok(h)
    }
}

/// A behavior strategy. Implementations must be pure functions of the
/// history and safe to share between threads.
pub trait Strategy: Send + Sync {
    fn act(&self, history: &History) -> MixedAction;

    /// Incremental evaluator along a growing history.
    fn tracker(&self) -> Box<dyn HistoryTracker + '_> {
        Box::new(GenericTracker::new(self))
    }

    /// Equivalent finite-state controller, when one exists.
    fn to_controller(&self, _n_signals: usize) -> Option<FiniteStateController> {
        None
    }
}

/// Push/pop cursor over histories for one strategy.
pub trait HistoryTracker {
    /// Starts a new history `(s₁)`.
    fn reset(&mut self, first_signal: usize);
    fn push(&mut self, action: usize, signal: usize);
    fn pop(&mut self);
    /// Mixed action at the current history.
    fn act(&mut self) -> MixedAction;
}

/// Tracker that keeps the full history and calls [`Strategy::act`].
pub struct GenericTracker<'a, S: Strategy + ?Sized> {
    strategy: &'a S,
    history: History,
}

impl<'a, S: Strategy + ?Sized> GenericTracker<'a, S> {
    pub fn new(strategy: &'a S) -> Self {
        GenericTracker {
            strategy,
            history: History::new(0),
        }
    }
}

impl<S: Strategy + ?Sized> HistoryTracker for GenericTracker<'_, S> {
    fn reset(&mut self, first_signal: usize) {
        self.history = History::new(first_signal);
    }

    fn push(&mut self, action: usize, signal: usize) {
        self.history.push(action, signal);
    }

    fn pop(&mut self) {
        self.history.pop();
    }

    fn act(&mut self) -> MixedAction {
        self.strategy.act(&self.history)
    }
}

/// Cyclic sequence of mixed actions; stage `t` plays entry `(t − 1) mod n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStrategy {
    actions: Vec<MixedAction>,
}

impl SequenceStrategy {
    pub fn new(actions: Vec<MixedAction>) -> Result<Self> {
        let Some(first) = actions.first() else {
            return Err(Error::InvalidArgument("empty action sequence".into()));
        };
        if actions.iter().any(|a| a.len() != first.len()) {
            return Err(Error::InvalidArgument(
                "sequence entries have different action counts".into(),
            ));
        }
        Ok(SequenceStrategy { actions })
    }

    /// Cyclic sequence of pure actions.
    pub fn pure(n_actions: usize, cycle: &[usize]) -> Result<Self> {
        if cycle.iter().any(|&a| a >= n_actions) {
            return Err(Error::InvalidArgument("action index out of range".into()));
        }
        Self::new(cycle.iter().map(|&a| MixedAction::pure(n_actions, a)).collect())
    }

    pub fn at_stage(&self, t: usize) -> &MixedAction {
        &self.actions[(t - 1) % self.actions.len()]
    }

    pub fn period(&self) -> usize {
        self.actions.len()
    }
}

struct SequenceTracker<'a> {
    seq: &'a SequenceStrategy,
    len: usize,
}

impl HistoryTracker for SequenceTracker<'_> {
    fn reset(&mut self, _first_signal: usize) {
        self.len = 1;
    }

    fn push(&mut self, _action: usize, _signal: usize) {
        self.len += 1;
    }

    fn pop(&mut self) {
        self.len -= 1;
    }

    fn act(&mut self) -> MixedAction {
        self.seq.at_stage(self.len).clone()
    }
}

impl Strategy for SequenceStrategy {
    fn act(&self, history: &History) -> MixedAction {
        self.at_stage(history.len()).clone()
    }

    fn tracker(&self) -> Box<dyn HistoryTracker + '_> {
        Box::new(SequenceTracker { seq: self, len: 1 })
    }

    /// Memory is the position in the cycle.
    fn to_controller(&self, n_signals: usize) -> Option<FiniteStateController> {
        let n = self.period();
        let na = self.actions[0].len();
        FiniteStateController::from_fn(
            n,
            na,
            n_signals,
            |_| unit(n, 0),
            |q| self.actions[q].weights().to_vec(),
            |q, _, _| unit(n, (q + 1) % n),
        )
        .ok()
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Strategy with finite memory `Q`.
///
/// Memory starts from `init(s₁) ∈ Δ(Q)`, the action is drawn from
/// `action_rule(q)`, and after playing `a` and observing the next signal `s`
/// memory moves according to `update(q, a, s) ∈ Δ(Q)`. As a behavior
/// strategy it plays the posterior mixture of `action_rule` given the
/// observed history.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteStateController {
    n_memory: usize,
    n_actions: usize,
    n_signals: usize,
    init: Vec<f64>,
    action_rule: Vec<f64>,
    update: Vec<f64>,
    memory_names: Vec<String>,
}

impl FiniteStateController {
    pub fn from_fn(
        n_memory: usize,
        n_actions: usize,
        n_signals: usize,
        init: impl Fn(usize) -> Vec<f64>,
        action_rule: impl Fn(usize) -> Vec<f64>,
        update: impl Fn(usize, usize, usize) -> Vec<f64>,
    ) -> Result<Self> {
        Self::from_fn_with_tolerance(n_memory, n_actions, n_signals, init, action_rule, update, PROB_TOL)
    }

    pub(crate) fn from_fn_with_tolerance(
        n_memory: usize,
        n_actions: usize,
        n_signals: usize,
        init: impl Fn(usize) -> Vec<f64>,
        action_rule: impl Fn(usize) -> Vec<f64>,
        update: impl Fn(usize, usize, usize) -> Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        if n_memory == 0 || n_actions == 0 || n_signals == 0 {
            return Err(Error::Shape("controller dimensions must be positive".into()));
        }
        let check = |what: String, row: Vec<f64>, len: usize| -> Result<Vec<f64>> {
            if row.len() != len {
                return Err(Error::Shape(format!("{what}: expected {len} entries")));
            }
            if let Some(p) = row.iter().find(|p| !(**p >= 0.0)) {
                return Err(Error::NegativeProbability {
                    location: what,
                    value: *p,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidArgument(format!("{what} sums to {sum}")));
            }
            Ok(row)
        };
        let mut init_flat = Vec::with_capacity(n_signals * n_memory);
        for s in 0..n_signals {
            init_flat.extend(check(format!("controller init for signal {s}"), init(s), n_memory)?);
        }
        let mut action_flat = Vec::with_capacity(n_memory * n_actions);
        for q in 0..n_memory {
            action_flat.extend(check(format!("controller action rule at memory {q}"), action_rule(q), n_actions)?);
        }
        let mut update_flat = Vec::with_capacity(n_memory * n_actions * n_signals * n_memory);
        for q in 0..n_memory {
            for a in 0..n_actions {
                for s in 0..n_signals {
                    update_flat.extend(check(
                        format!("controller update ({q}, {a}, {s})"),
                        update(q, a, s),
                        n_memory,
                    )?);
                }
            }
        }
        Ok(FiniteStateController {
            n_memory,
            n_actions,
            n_signals,
            init: init_flat,
            action_rule: action_flat,
            update: update_flat,
            memory_names: (0..n_memory).map(|q| format!("q{q}")).collect(),
        })
    }

    /// Controller with deterministic memory.
    pub fn deterministic(
        n_memory: usize,
        n_actions: usize,
        n_signals: usize,
        init: impl Fn(usize) -> usize,
        action_rule: impl Fn(usize) -> Vec<f64>,
        update: impl Fn(usize, usize, usize) -> usize,
    ) -> Result<Self> {
        Self::from_fn(
            n_memory,
            n_actions,
            n_signals,
            |s| unit(n_memory, init(s)),
            action_rule,
            |q, a, s| unit(n_memory, update(q, a, s)),
        )
    }

    pub fn with_memory_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_memory {
            return Err(Error::Shape("memory name count mismatch".into()));
        }
        self.memory_names = names;
        Ok(self)
    }

    pub fn n_memory(&self) -> usize {
        self.n_memory
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_signals(&self) -> usize {
        self.n_signals
    }

    pub fn memory_names(&self) -> &[String] {
        &self.memory_names
    }

    /// `init(s) ∈ Δ(Q)`.
    pub fn init_row(&self, signal: usize) -> &[f64] {
        &self.init[signal * self.n_memory..(signal + 1) * self.n_memory]
    }

    /// `action_rule(q) ∈ Δ(A)`.
    pub fn action_row(&self, q: usize) -> &[f64] {
        &self.action_rule[q * self.n_actions..(q + 1) * self.n_actions]
    }

    /// `update(q, a, s) ∈ Δ(Q)`.
    pub fn update_row(&self, q: usize, action: usize, signal: usize) -> &[f64] {
        let start = ((q * self.n_actions + action) * self.n_signals + signal) * self.n_memory;
        &self.update[start..start + self.n_memory]
    }

    /// Whether every action rule and memory move is deterministic.
    pub fn is_pure(&self) -> bool {
        let det = |row: &[f64]| row.iter().filter(|p| **p > 0.0).count() == 1;
        (0..self.n_signals).all(|s| det(self.init_row(s)))
            && (0..self.n_memory).all(|q| det(self.action_row(q)))
            && self.update.chunks(self.n_memory).all(det)
    }

    /// Checks that the controller's alphabets match the model.
    pub fn check_compatible(&self, m: &PomdpModel) -> Result<()> {
        if self.n_actions != m.n_actions() || self.n_signals != m.n_signals() {
            return Err(Error::Shape(format!(
                "controller has {} actions and {} signals, model has {} and {}",
                self.n_actions,
                self.n_signals,
                m.n_actions(),
                m.n_signals()
            )));
        }
        Ok(())
    }

    /// Posterior over memory after one more observed step. A step the
    /// controller would never take still moves memory by `update`, so the
    /// strategy stays defined on every history.
    fn advance(&self, belief: &[f64], action: usize, signal: usize) -> Option<Vec<f64>> {
        let mut next = vec![0.0; self.n_memory];
        for (q, &bq) in belief.iter().enumerate() {
            let w = bq * self.action_row(q)[action];
            if w > 0.0 {
                for (n, p) in next.iter_mut().zip(self.update_row(q, action, signal)) {
                    *n += w * p;
                }
            }
        }
        if normalize_in_place(&mut next) {
            return Some(next);
        }
        for (q, &bq) in belief.iter().enumerate() {
            if bq > 0.0 {
                for (n, p) in next.iter_mut().zip(self.update_row(q, action, signal)) {
                    *n += bq * p;
                }
            }
        }
        normalize_in_place(&mut next).then_some(next)
    }

    fn mix(&self, belief: &[f64]) -> MixedAction {
        let mut w = vec![0.0; self.n_actions];
        for (q, &bq) in belief.iter().enumerate() {
            if bq > 0.0 {
                for (wa, pa) in w.iter_mut().zip(self.action_row(q)) {
                    *wa += bq * pa;
                }
            }
        }
        MixedAction::normalized(w).unwrap_or_else(|| MixedAction::uniform(self.n_actions))
    }

    /// Memory posterior at a history; `None` off the controller's path.
    pub fn memory_belief(&self, history: &History) -> Option<Vec<f64>> {
        let mut belief = self.init_row(history.first_signal()).to_vec();
        for (a, s) in history.steps() {
            belief = self.advance(&belief, a, s)?;
        }
        Some(belief)
    }
}

fn normalize_in_place(v: &mut [f64]) -> bool {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
        true
    } else {
        false
    }
}

struct ControllerTracker<'a> {
    fsc: &'a FiniteStateController,
    // `None` marks a history the controller never produces
    stack: Vec<Option<Vec<f64>>>,
}

impl HistoryTracker for ControllerTracker<'_> {
    fn reset(&mut self, first_signal: usize) {
        self.stack.clear();
        self.stack.push(Some(self.fsc.init_row(first_signal).to_vec()));
    }

    fn push(&mut self, action: usize, signal: usize) {
        let next = match self.stack.last() {
            Some(Some(b)) => self.fsc.advance(b, action, signal),
            _ => None,
        };
        self.stack.push(next);
    }

    fn pop(&mut self) {
        self.stack.pop();
    }

    fn act(&mut self) -> MixedAction {
        match self.stack.last() {
            Some(Some(b)) => self.fsc.mix(b),
            _ => MixedAction::uniform(self.fsc.n_actions),
        }
    }
}

impl Strategy for FiniteStateController {
    /// Histories the memory dynamics cannot reach get the uniform mixed action.
    fn act(&self, history: &History) -> MixedAction {
        match self.memory_belief(history) {
            Some(b) => self.mix(&b),
            None => MixedAction::uniform(self.n_actions),
        }
    }

    fn tracker(&self) -> Box<dyn HistoryTracker + '_> {
        Box::new(ControllerTracker {
            fsc: self,
            stack: Vec::new(),
        })
    }

    fn to_controller(&self, _n_signals: usize) -> Option<FiniteStateController> {
        Some(self.clone())
    }
}

/// Lookup table for histories up to `depth`, with a default beyond it (and
/// for histories missing from the table).
#[derive(Debug, Clone, PartialEq)]
pub struct TableStrategy {
    n_actions: usize,
    n_signals: usize,
    depth: usize,
    table: HashMap<History, MixedAction>,
    default: MixedAction,
}

impl TableStrategy {
    pub fn new(n_actions: usize, n_signals: usize, depth: usize, default: MixedAction) -> Result<Self> {
        if default.len() != n_actions {
            return Err(Error::Shape("default action has the wrong length".into()));
        }
        Ok(TableStrategy {
            n_actions,
            n_signals,
            depth,
            table: HashMap::new(),
            default,
        })
    }

    pub fn insert(&mut self, history: History, action: MixedAction) -> Result<()> {
        if history.len() > self.depth {
            return Err(Error::InvalidArgument("history deeper than the table".into()));
        }
        if action.len() != self.n_actions {
            return Err(Error::Shape("table entry has the wrong length".into()));
        }
        self.table.insert(history, action);
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

impl Strategy for TableStrategy {
    fn act(&self, history: &History) -> MixedAction {
        if history.len() > self.depth {
            return self.default.clone();
        }
        self.table
            .get(history)
            .cloned()
            .unwrap_or_else(|| self.default.clone())
    }

    /// Memory is a node of the history tree up to `depth`, plus one sink
    /// state that plays the default.
    fn to_controller(&self, n_signals: usize) -> Option<FiniteStateController> {
        if n_signals != self.n_signals || self.depth == 0 {
            return None;
        }
        let mut nodes: Vec<History> = Vec::new();
        for len in 1..=self.depth {
            nodes.extend(History::enumerate(self.n_actions, self.n_signals, len));
        }
        let index: HashMap<&History, usize> = nodes.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let sink = nodes.len();
        let n = nodes.len() + 1;
        let node_of = |h: &History| index.get(h).copied().unwrap_or(sink);
        FiniteStateController::from_fn(
            n,
            self.n_actions,
            self.n_signals,
            |s| unit(n, node_of(&History::new(s))),
            |q| {
                if q == sink {
                    self.default.weights().to_vec()
                } else {
                    self.act(&nodes[q]).weights().to_vec()
                }
            },
            |q, a, s| {
                if q == sink {
                    return unit(n, sink);
                }
                let mut child = nodes[q].clone();
                child.push(a, s);
                unit(n, node_of(&child))
            },
        )
        .ok()
    }
}

/// Exact joint law of `(history of length depth, current state)`.
#[derive(Debug, Clone)]
pub struct HistoryDistribution {
    depth: usize,
    entries: Vec<(History, Vec<f64>)>,
    index: HashMap<History, usize>,
}

impl HistoryDistribution {
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Histories with positive probability, each with its per-state mass.
    pub fn entries(&self) -> &[(History, Vec<f64>)] {
        &self.entries
    }

    pub fn state_masses(&self, history: &History) -> Option<&[f64]> {
        self.index.get(history).map(|&i| self.entries[i].1.as_slice())
    }

    pub fn prob(&self, history: &History, state: usize) -> f64 {
        self.state_masses(history).map_or(0.0, |w| w[state])
    }

    /// `P(H_t = η)`.
    pub fn history_prob(&self, history: &History) -> f64 {
        self.state_masses(history).map_or(0.0, |w| w.iter().sum())
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().flat_map(|(_, w)| w.iter()).sum()
    }
}

/// Enumerates every history of length `depth` with the joint probability of
/// each current state.
pub fn exact_history_distribution(
    m: &PomdpModel,
    strategy: &dyn Strategy,
    depth: usize,
    budget: usize,
) -> Result<HistoryDistribution> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let size = (m.n_actions() * m.n_signals()) as f64;
    let needed = m.n_states() as f64 * size.powi(depth as i32 - 1);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded { depth, budget });
    }

    let mut tracker = strategy.tracker();
    let mut entries = Vec::new();
    for s in 0..m.n_signals() {
        let w: Vec<f64> = (0..m.n_states())
            .map(|x| if m.signal_of(x) == s { m.init()[x] } else { 0.0 })
            .collect();
        if w.iter().all(|p| *p == 0.0) {
            continue;
        }
        tracker.reset(s);
        let mut history = History::new(s);
        extend(m, tracker.as_mut(), &mut history, w, depth, &mut entries);
    }
    let index = entries.iter().enumerate().map(|(i, (h, _))| (h.clone(), i)).collect();
    Ok(HistoryDistribution {
        depth,
        entries,
        index,
    })
}

fn extend(
    m: &PomdpModel,
    tracker: &mut dyn HistoryTracker,
    history: &mut History,
    weights: Vec<f64>,
    depth: usize,
    out: &mut Vec<(History, Vec<f64>)>,
) {
    if history.len() == depth {
        out.push((history.clone(), weights));
        return;
    }
    let mu = tracker.act();
    for (a, pa) in mu.support() {
        for s in 0..m.n_signals() {
            let next = propagate(m, &weights, a, pa, Some(s));
            if next.iter().all(|p| *p == 0.0) {
                continue;
            }
            tracker.push(a, s);
            history.push(a, s);
            extend(m, tracker, history, next, depth, out);
            history.pop();
            tracker.pop();
        }
    }
}

/// `w'(ω') = Σ_ω w(ω)·scale·P(ω'|ω,a)·1{f(ω') = s}`; `signal = None` keeps
/// every successor.
pub(crate) fn propagate(
    m: &PomdpModel,
    weights: &[f64],
    action: usize,
    scale: f64,
    signal: Option<usize>,
) -> Vec<f64> {
    let ns = m.n_states();
    let mut next = vec![0.0; ns];
    for (w, &mass) in weights.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let c = mass * scale;
        for (x, p) in m.transition_row(w, action).iter().enumerate() {
            if *p > 0.0 {
                next[x] += c * p;
            }
        }
    }
    if let Some(s) = signal {
        for (x, v) in next.iter_mut().enumerate() {
            if m.signal_of(x) != s {
                *v = 0.0;
            }
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating() -> SequenceStrategy {
        SequenceStrategy::pure(2, &[0, 1]).unwrap()
    }

    #[test]
    fn sequence_ignores_signals() {
        let seq = alternating();
        let mut h = History::new(0);
        h.push(0, 0);
        h.push(1, 0);
        assert_eq!(seq.act(&h), MixedAction::pure(2, 0));
        h.push(0, 0);
        assert_eq!(seq.act(&h), MixedAction::pure(2, 1));
    }

    #[test]
    fn constant_controller_is_uniform() {
        let fsc = FiniteStateController::deterministic(1, 2, 3, |_| 0, |_| vec![0.5, 0.5], |_, _, _| 0).unwrap();
        for h in History::enumerate(2, 3, 3) {
            assert_eq!(fsc.act(&h), MixedAction::uniform(2));
        }
    }

    #[test]
    fn table_falls_back_past_depth() {
        let mut t = TableStrategy::new(2, 1, 2, MixedAction::pure(2, 1)).unwrap();
        let mut h = History::new(0);
        t.insert(h.clone(), MixedAction::pure(2, 0)).unwrap();
        assert_eq!(t.act(&h), MixedAction::pure(2, 0));
        h.push(0, 0);
        h.push(0, 0);
        assert_eq!(t.act(&h), MixedAction::pure(2, 1));
        assert!(t.insert(h, MixedAction::pure(2, 0)).is_err());
    }

    #[test]
    fn controllers_match_their_sources() {
        let mut table = TableStrategy::new(2, 2, 2, MixedAction::uniform(2)).unwrap();
        table.insert(History::new(1), MixedAction::new(vec![0.3, 0.7]).unwrap()).unwrap();
        let mut h = History::new(0);
        h.push(1, 1);
        table.insert(h, MixedAction::pure(2, 0)).unwrap();
        let seq = SequenceStrategy::new(vec![MixedAction::new(vec![0.2, 0.8]).unwrap(), MixedAction::pure(2, 1)]).unwrap();

        let fsc_table = table.to_controller(2).unwrap();
        let fsc_seq = seq.to_controller(2).unwrap();
        for len in 1..=4 {
            for h in History::enumerate(2, 2, len) {
                assert_eq!(fsc_table.act(&h), table.act(&h), "{h:?}");
                assert!(fsc_seq.act(&h).max_abs_diff(&seq.act(&h)) < 1e-15);
            }
        }
    }

    #[test]
    fn tracker_agrees_with_act() {
        let fsc = FiniteStateController::from_fn(
            2,
            2,
            2,
            |s| if s == 0 { vec![1.0, 0.0] } else { vec![0.5, 0.5] },
            |q| if q == 0 { vec![0.9, 0.1] } else { vec![0.2, 0.8] },
            |q, a, s| if (q + a + s) % 2 == 0 { vec![0.7, 0.3] } else { vec![0.0, 1.0] },
        )
        .unwrap();
        let mut tr = fsc.tracker();
        for h in History::enumerate(2, 2, 4) {
            tr.reset(h.first_signal());
            for (a, s) in h.steps() {
                tr.push(a, s);
            }
            assert!(tr.act().max_abs_diff(&fsc.act(&h)) < 1e-15);
        }
    }

    #[test]
    fn history_key_is_injective_on_small_sets() {
        let mut seen = std::collections::HashSet::new();
        for len in 1..=4 {
            for h in History::enumerate(2, 3, len) {
                assert!(seen.insert(h.key(2, 3).unwrap()));
            }
        }
    }
}
