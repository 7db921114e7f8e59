//! The POMDP model `(Ω, A, S, f, g, P, p₁)`, its validation, and the
//! stage-duration transform `P_h = h·P + (1 − h)·δ_ω`.
//!
//! States, actions and signals keep their user-facing names, but every
//! numeric routine addresses them through dense indices. Transition
//! probabilities live in one flat row-major buffer indexed by
//! `(state, action, next_state)`.

use crate::error::{Error, Result};

/// Tolerance used when checking that a probability vector sums to one.
pub const PROB_TOL: f64 = 1e-12;

/// Stage duration `h ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct StageDuration(f64);

impl StageDuration {
    pub const ONE: StageDuration = StageDuration(1.0);

    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 && h <= 1.0 {
            Ok(StageDuration(h))
        } else {
            Err(Error::InvalidStageDuration(h))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_one(self) -> bool {
        self.0 == 1.0
    }
}

impl std::fmt::Display for StageDuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A probability distribution over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedAction(Vec<f64>);

impl MixedAction {
    /// Validates nonnegativity and unit mass within [`PROB_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(weights, PROB_TOL)
    }

    pub fn with_tolerance(weights: Vec<f64>, tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMixedAction("no actions".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMixedAction(format!("weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidMixedAction(format!("weights sum to {sum}")));
        }
        Ok(MixedAction(weights))
    }

    /// Rescales nonnegative weights to unit mass; `None` when the mass is zero.
    pub fn normalized(weights: Vec<f64>) -> Option<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return None;
        }
        Some(MixedAction(weights.into_iter().map(|w| w / sum).collect()))
    }

    pub fn pure(n_actions: usize, action: usize) -> Self {
        let mut w = vec![0.0; n_actions];
        w[action] = 1.0;
        MixedAction(w)
    }

    pub fn uniform(n_actions: usize) -> Self {
        MixedAction(vec![1.0 / n_actions as f64; n_actions])
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    #[inline]
    pub fn weight(&self, action: usize) -> f64 {
        self.0[action]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Actions with positive weight, paired with their weight.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w > 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.support().count() == 1
    }

    /// Largest coordinate-wise difference.
    pub fn max_abs_diff(&self, other: &MixedAction) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Unvalidated model description, as assembled by a parser or by hand.
///
/// `payoff[ω][a]`, `transition[ω][a][ω']`; `signal_map[ω]` is `None` for
/// states whose signal was never given.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModel {
    pub state_names: Vec<String>,
    pub action_names: Vec<String>,
    pub signal_names: Vec<String>,
    pub signal_map: Vec<Option<usize>>,
    pub payoff: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub init: Vec<f64>,
}

impl RawModel {
    /// Empty tensors sized for the given name lists.
    pub fn with_names(
        state_names: Vec<String>,
        action_names: Vec<String>,
        signal_names: Vec<String>,
    ) -> Self {
        let ns = state_names.len();
        let na = action_names.len();
        RawModel {
            signal_map: vec![None; ns],
            payoff: vec![vec![0.0; na]; ns],
            transition: vec![vec![vec![0.0; ns]; na]; ns],
            init: vec![0.0; ns],
            state_names,
            action_names,
            signal_names,
        }
    }

    /// Rescales every transition row and the initial distribution to unit
    /// mass. Rows with zero mass are left untouched so validation still
    /// reports them.
    pub fn normalize(&mut self) {
        fn rescale(row: &mut [f64]) {
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|p| *p /= sum);
            }
        }
        for rows in &mut self.transition {
            for row in rows {
                rescale(row);
            }
        }
        rescale(&mut self.init);
    }
}

/// A validated POMDP. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    state_names: Vec<String>,
    action_names: Vec<String>,
    signal_names: Vec<String>,
    signal_map: Vec<usize>,
    payoff: Vec<f64>,
    transition: Vec<f64>,
    init: Vec<f64>,
    payoff_bound: f64,
}

/// Checks every model invariant and builds the dense representation.
pub fn validate_model(raw: RawModel) -> Result<PomdpModel> {
    let ns = raw.state_names.len();
    let na = raw.action_names.len();
    let nsig = raw.signal_names.len();
    if ns == 0 || na == 0 || nsig == 0 {
        return Err(Error::Shape(
            "states, actions and signals must be nonempty".into(),
        ));
    }
    if raw.signal_map.len() != ns
        || raw.payoff.len() != ns
        || raw.transition.len() != ns
        || raw.init.len() != ns
    {
        return Err(Error::Shape("per-state tables do not match the state count".into()));
    }

    let mut signal_map = Vec::with_capacity(ns);
    for (w, sig) in raw.signal_map.iter().enumerate() {
        match sig {
            Some(s) if *s < nsig => signal_map.push(*s),
            Some(s) => return Err(Error::Shape(format!("signal index {s} out of range"))),
            None => {
                return Err(Error::MissingSignal {
                    state: raw.state_names[w].clone(),
                })
            }
        }
    }

    let mut payoff = Vec::with_capacity(ns * na);
    for (w, row) in raw.payoff.iter().enumerate() {
        if row.len() != na {
            return Err(Error::Shape("payoff row has the wrong length".into()));
        }
        for (a, &g) in row.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFinitePayoff {
                    state: raw.state_names[w].clone(),
                    action: raw.action_names[a].clone(),
                });
            }
            payoff.push(g);
        }
    }

    let mut transition = Vec::with_capacity(ns * na * ns);
    for (w, rows) in raw.transition.iter().enumerate() {
        if rows.len() != na {
            return Err(Error::Shape("transition block has the wrong action count".into()));
        }
        for (a, row) in rows.iter().enumerate() {
            if row.len() != ns {
                return Err(Error::Shape("transition row has the wrong length".into()));
            }
            for (next, &p) in row.iter().enumerate() {
                if p.is_nan() || p < 0.0 {
                    return Err(Error::NegativeProbability {
                        location: format!(
                            "transition ({}, {}, {})",
                            raw.state_names[w], raw.action_names[a], raw.state_names[next]
                        ),
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROB_TOL) {
                return Err(Error::RowNotStochastic {
                    state: raw.state_names[w].clone(),
                    action: raw.action_names[a].clone(),
                    sum,
                });
            }
            transition.extend_from_slice(row);
        }
    }

    for (w, &p) in raw.init.iter().enumerate() {
        if p.is_nan() || p < 0.0 {
            return Err(Error::NegativeProbability {
                location: format!("init {}", raw.state_names[w]),
                value: p,
            });
        }
    }
    let init_sum: f64 = raw.init.iter().sum();
    if !((init_sum - 1.0).abs() <= PROB_TOL) {
        return Err(Error::InitNotStochastic { sum: init_sum });
    }

    let payoff_bound = payoff.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    Ok(PomdpModel {
        state_names: raw.state_names,
        action_names: raw.action_names,
        signal_names: raw.signal_names,
        signal_map,
        payoff,
        transition,
        init: raw.init,
        payoff_bound,
    })
}

impl PomdpModel {
    #[inline]
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    #[inline]
    pub fn n_signals(&self) -> usize {
        self.signal_names.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_names.iter().position(|n| n == name)
    }

    pub fn signal_index(&self, name: &str) -> Option<usize> {
        self.signal_names.iter().position(|n| n == name)
    }

    /// The deterministic signal `f(ω)`.
    #[inline]
    pub fn signal_of(&self, state: usize) -> usize {
        self.signal_map[state]
    }

    pub fn signal_map(&self) -> &[usize] {
        &self.signal_map
    }

    #[inline]
    pub fn payoff(&self, state: usize, action: usize) -> f64 {
        self.payoff[state * self.n_actions() + action]
    }

    /// `P(· | ω, a)`.
    #[inline]
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let ns = self.n_states();
        let start = (state * self.n_actions() + action) * ns;
        &self.transition[start..start + ns]
    }

    #[inline]
    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition_row(state, action)[next]
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    /// `M = max |g|`, computed once at validation.
    #[inline]
    pub fn payoff_bound(&self) -> f64 {
        self.payoff_bound
    }

    /// Whether every payoff equals the same constant.
    pub fn constant_payoff(&self) -> Option<f64> {
        let first = self.payoff[0];
        self.payoff.iter().all(|g| *g == first).then_some(first)
    }

    /// Largest entrywise difference between two transition tensors of the
    /// same shape.
    pub fn max_transition_diff(&self, other: &PomdpModel) -> f64 {
        self.transition
            .iter()
            .zip(&other.transition)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_raw(&self) -> RawModel {
        let ns = self.n_states();
        let na = self.n_actions();
        RawModel {
            state_names: self.state_names.clone(),
            action_names: self.action_names.clone(),
            signal_names: self.signal_names.clone(),
            signal_map: self.signal_map.iter().map(|s| Some(*s)).collect(),
            payoff: (0..ns)
                .map(|w| (0..na).map(|a| self.payoff(w, a)).collect())
                .collect(),
            transition: (0..ns)
                .map(|w| (0..na).map(|a| self.transition_row(w, a).to_vec()).collect())
                .collect(),
            init: self.init.clone(),
        }
    }

    /// Same model with the payoff table replaced.
    pub fn with_payoff(&self, payoff: impl Fn(usize, usize) -> f64) -> Result<PomdpModel> {
        let mut raw = self.to_raw();
        for (w, row) in raw.payoff.iter_mut().enumerate() {
            for (a, g) in row.iter_mut().enumerate() {
                *g = payoff(w, a);
            }
        }
        validate_model(raw)
    }

    fn map_transition(&self, f: impl Fn(usize, usize, usize, f64) -> f64) -> PomdpModel {
        let ns = self.n_states();
        let na = self.n_actions();
        let mut transition = self.transition.clone();
        for w in 0..ns {
            for a in 0..na {
                for next in 0..ns {
                    let idx = (w * na + a) * ns + next;
                    transition[idx] = f(w, a, next, self.transition[idx]);
                }
            }
        }
        PomdpModel {
            transition,
            ..self.clone()
        }
    }
}

/// Builds `G_h`: every row becomes `h·P(·|ω,a) + (1 − h)·δ_ω`. At `h = 1`
/// the model is returned unchanged, bit for bit.
pub fn stage_duration_transform(m: &PomdpModel, h: StageDuration) -> PomdpModel {
    if h.is_one() {
        return m.clone();
    }
    let h = h.value();
    m.map_transition(|w, _, next, p| {
        if w == next {
            h * p + (1.0 - h)
        } else {
            h * p
        }
    })
}

/// A model together with the stage duration it carries relative to its base.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedModel {
    pub model: PomdpModel,
    pub h: StageDuration,
}

impl StagedModel {
    pub fn from_base(base: &PomdpModel, h: StageDuration) -> Self {
        StagedModel {
            model: stage_duration_transform(base, h),
            h,
        }
    }
}

/// Re-expresses `G_{h1}` as a model with stage duration `h1/h2` relative to
/// `G_{h2}`. Returns `G_{h2}` (recovered from the `G_{h1}` tensor through
/// `P_{h2} = (1 − h2/h1)·Id + (h2/h1)·P_{h1}`) and the relative duration.
pub fn rescale_stage_duration(
    staged: &StagedModel,
    h2: StageDuration,
) -> Result<(StagedModel, StageDuration)> {
    let h1 = staged.h.value();
    if h1 >= h2.value() {
        return Err(Error::BadOrder {
            h1,
            h2: h2.value(),
        });
    }
    let up = h2.value() / h1;
    let recovered = staged.model.map_transition(|w, _, next, p| {
        let q = if w == next { (1.0 - up) + up * p } else { up * p };
        // un-mixing can leave roundoff-sized negatives on the diagonal
        if q < 0.0 && q > -1e-13 {
            0.0
        } else {
            q
        }
    });
    let relative = StageDuration::new(h1 / h2.value())?;
    Ok((
        StagedModel {
            model: recovered,
            h: h2,
        },
        relative,
    ))
}

/// True iff the signal map is injective.
pub fn is_fully_observed(m: &PomdpModel) -> bool {
    let mut seen = vec![false; m.n_signals()];
    m.signal_map.iter().all(|&s| !std::mem::replace(&mut seen[s], true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn chain(ns: usize) -> RawModel {
        let mut raw = RawModel::with_names(names("w", ns), names("a", 1), names("s", 1));
        for w in 0..ns {
            raw.signal_map[w] = Some(0);
            raw.transition[w][0][(w + 1) % ns] = 1.0;
        }
        raw.init[0] = 1.0;
        raw
    }

    #[test]
    fn rejects_short_row() {
        let mut raw = chain(2);
        raw.transition[0][0][1] = 0.999;
        assert!(matches!(
            validate_model(raw),
            Err(Error::RowNotStochastic { sum, .. }) if (sum - 0.999).abs() < 1e-15
        ));
    }

    #[test]
    fn rejects_negative_and_missing_signal() {
        let mut raw = chain(2);
        raw.transition[0][0] = vec![-0.5, 1.5];
        assert!(matches!(validate_model(raw), Err(Error::NegativeProbability { .. })));

        let mut raw = chain(2);
        raw.signal_map[1] = None;
        assert_eq!(
            validate_model(raw),
            Err(Error::MissingSignal { state: "w2".into() })
        );

        let mut raw = chain(2);
        raw.init = vec![0.5, 0.4];
        assert!(matches!(validate_model(raw), Err(Error::InitNotStochastic { .. })));
    }

    #[test]
    fn normalize_is_explicit() {
        let mut raw = chain(2);
        raw.transition[0][0] = vec![1.0, 3.0];
        assert!(validate_model(raw.clone()).is_err());
        raw.normalize();
        let m = validate_model(raw).unwrap();
        assert_eq!(m.transition_row(0, 0), &[0.25, 0.75]);
    }

    #[test]
    fn transform_examples() {
        let m = validate_model(chain(2)).unwrap();
        assert_eq!(stage_duration_transform(&m, StageDuration::ONE), m);

        let half = stage_duration_transform(&m, StageDuration::new(0.5).unwrap());
        assert_eq!(half.transition_row(0, 0), &[0.5, 0.5]);

        let mut raw = chain(2);
        raw.transition[0][0] = vec![1.0, 0.0];
        let m = validate_model(raw).unwrap();
        let t = stage_duration_transform(&m, StageDuration::new(0.3).unwrap());
        assert_eq!(t.transition_row(0, 0), &[1.0, 0.0]);
    }

    #[test]
    fn rescale_deterministic() {
        let m = validate_model(chain(3)).unwrap();
        let staged = StagedModel::from_base(&m, StageDuration::new(0.2).unwrap());
        let (base, rel) = rescale_stage_duration(&staged, StageDuration::new(0.4).unwrap()).unwrap();
        assert!((rel.value() - 0.5).abs() < 1e-15);
        let rebuilt = stage_duration_transform(&base.model, rel);
        assert!(rebuilt.max_transition_diff(&staged.model) < 1e-12);
        assert!((rebuilt.prob(0, 0, 1) - 0.2).abs() < 1e-15);

        assert!(matches!(
            rescale_stage_duration(&staged, StageDuration::new(0.2).unwrap()),
            Err(Error::BadOrder { .. })
        ));
    }

    #[test]
    fn rescale_to_one_recovers_base() {
        let m = validate_model(chain(3)).unwrap();
        let h = StageDuration::new(0.35).unwrap();
        let staged = StagedModel::from_base(&m, h);
        let (base, rel) = rescale_stage_duration(&staged, StageDuration::ONE).unwrap();
        assert_eq!(rel, h);
        assert!(base.model.max_transition_diff(&m) < 1e-12);
    }

    #[test]
    fn observability() {
        let m = validate_model(chain(3)).unwrap();
        assert!(!is_fully_observed(&m));
        let mut raw = chain(2);
        raw.signal_names = names("s", 2);
        raw.signal_map = vec![Some(1), Some(0)];
        assert!(is_fully_observed(&validate_model(raw).unwrap()));
    }

    #[test]
    fn stage_duration_bounds() {
        assert!(StageDuration::new(0.0).is_err());
        assert!(StageDuration::new(1.0 + 1e-12).is_err());
        assert!(StageDuration::new(f64::NAN).is_err());
        assert!(StageDuration::new(1.0).unwrap().is_one());
    }
}
