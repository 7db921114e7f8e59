//! Built-in models and controllers used by the verification suite.

use rand::Rng;

use crate::epoch::worker_rng;
use crate::model::{validate_model, PomdpModel, RawModel};
use crate::strategy::FiniteStateController;

/// Seed of the bundled fully observed model.
pub const MDP_SEED: u64 = 0x5eed_0001;
/// Seed of the bundled partially observed model.
pub const POMDP_SEED: u64 = 0x5eed_0002;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Three states, actions `a` and `b`, one signal. Playing `a` in `w1` or
/// `b` in `w2` swaps the two; any other move falls into the absorbing `w3`.
/// Payoff is 1 in `w1` and `w2`, 0 in `w3`; the play starts in `w1`.
pub fn figure1_model() -> PomdpModel {
    let mut raw = RawModel::with_names(
        names("w", 3),
        vec!["a".into(), "b".into()],
        vec!["s1".into()],
    );
    raw.signal_map = vec![Some(0); 3];
    raw.payoff = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]];
    let to = |j: usize| {
        let mut v = vec![0.0; 3];
        v[j] = 1.0;
        v
    };
    raw.transition = vec![vec![to(1), to(2)], vec![to(2), to(0)], vec![to(2), to(2)]];
    raw.init = vec![1.0, 0.0, 0.0];
    validate_model(raw).expect("built-in model is valid")
}

fn random_row<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    // a fraction of zero entries keeps the chains from being trivially mixing
    let mut v: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.25 { 0.0 } else { rng.random::<f64>() })
        .collect();
    if v.iter().all(|p| *p == 0.0) {
        v[rng.random_range(0..n)] = 1.0;
    }
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= sum);
    v
}

/// Seeded random model. State `i` emits signal `i mod n_signals`; payoffs
/// are uniform on `[0, 1)`.
pub fn random_model(n_states: usize, n_actions: usize, n_signals: usize, seed: u64) -> PomdpModel {
    assert!(n_signals >= 1 && n_signals <= n_states, "need 1 ≤ n_signals ≤ n_states");
    let mut rng = worker_rng(seed, 0);
    let mut raw = RawModel::with_names(names("w", n_states), names("a", n_actions), names("s", n_signals));
    raw.signal_map = (0..n_states).map(|i| Some(i % n_signals)).collect();
    for w in 0..n_states {
        for a in 0..n_actions {
            raw.payoff[w][a] = rng.random::<f64>();
            raw.transition[w][a] = random_row(n_states, &mut rng);
        }
    }
    raw.init = random_row(n_states, &mut rng);
    validate_model(raw).expect("random rows are stochastic")
}

/// Seeded random model whose signal identifies the state.
pub fn random_mdp(n_states: usize, n_actions: usize, seed: u64) -> PomdpModel {
    random_model(n_states, n_actions, n_states, seed)
}

/// The bundled model set: `figure1`, a fully observed `mdp3` and a
/// partially observed `pomdp3` with two signals.
pub fn bundled_models() -> Vec<(&'static str, PomdpModel)> {
    vec![
        ("figure1", figure1_model()),
        ("mdp3", random_mdp(3, 2, MDP_SEED)),
        ("pomdp3", random_model(3, 2, 2, POMDP_SEED)),
    ]
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn random_controller(n_memory: usize, n_actions: usize, n_signals: usize, seed: u64) -> FiniteStateController {
    let mut rng = worker_rng(seed, 0);
    let init: Vec<Vec<f64>> = (0..n_signals).map(|_| random_row(n_memory, &mut rng)).collect();
    let action: Vec<Vec<f64>> = (0..n_memory).map(|_| random_row(n_actions, &mut rng)).collect();
    let update: Vec<Vec<f64>> = (0..n_memory * n_actions * n_signals)
        .map(|_| random_row(n_memory, &mut rng))
        .collect();
    FiniteStateController::from_fn(
        n_memory,
        n_actions,
        n_signals,
        |s| init[s].clone(),
        |q| action[q].clone(),
        |q, a, s| update[(q * n_actions + a) * n_signals + s].clone(),
    )
    .expect("random rows are stochastic")
}

/// Memory-two controller alternating `a, b, a, b, …`.
pub fn alternating_controller() -> FiniteStateController {
    FiniteStateController::deterministic(2, 2, 1, |_| 0, |q| unit(2, q), |q, _, _| 1 - q)
        .expect("valid")
        .with_memory_names(vec!["play_a".into(), "play_b".into()])
        .expect("two names")
}

/// Controllers bundled with each model of [`bundled_models`].
pub fn bundled_controllers(model: &str) -> Vec<(&'static str, FiniteStateController)> {
    match model {
        "figure1" => vec![
            ("alternate", alternating_controller()),
            (
                "always_a",
                FiniteStateController::deterministic(1, 2, 1, |_| 0, |_| unit(2, 0), |_, _, _| 0).expect("valid"),
            ),
            (
                "mixed",
                FiniteStateController::from_fn(
                    2,
                    2,
                    1,
                    |_| vec![1.0, 0.0],
                    |q| if q == 0 { vec![0.9, 0.1] } else { vec![0.2, 0.8] },
                    |q, a, _| if q == a { vec![0.1, 0.9] } else { vec![0.7, 0.3] },
                )
                .expect("valid"),
            ),
        ],
        "mdp3" => vec![
            (
                "reactive",
                FiniteStateController::deterministic(3, 2, 3, |s| s, |q| unit(2, q % 2), |_, _, s| s)
                    .expect("valid"),
            ),
            ("mixed", random_controller(2, 2, 3, MDP_SEED + 10)),
        ],
        "pomdp3" => vec![
            (
                "reactive",
                FiniteStateController::deterministic(2, 2, 2, |s| s, |q| unit(2, q), |_, _, s| s).expect("valid"),
            ),
            ("mixed", random_controller(2, 2, 2, POMDP_SEED + 10)),
        ],
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_fully_observed;

    #[test]
    fn figure1_shape() {
        let m = figure1_model();
        assert_eq!((m.n_states(), m.n_actions(), m.n_signals()), (3, 2, 1));
        assert!(!is_fully_observed(&m));
        assert_eq!(m.prob(0, 0, 1), 1.0);
        assert_eq!(m.prob(1, 1, 0), 1.0);
        assert_eq!(m.prob(0, 1, 2), 1.0);
        assert_eq!(m.prob(1, 0, 2), 1.0);
    }

    #[test]
    fn bundles_are_compatible() {
        let models = bundled_models();
        assert!(is_fully_observed(&models[1].1));
        assert!(!is_fully_observed(&models[2].1));
        for (name, m) in &models {
            let ctrls = bundled_controllers(name);
            assert!(!ctrls.is_empty());
            for (_, c) in ctrls {
                c.check_compatible(m).unwrap();
            }
        }
    }

    #[test]
    fn seeded_models_repeat() {
        assert_eq!(random_model(4, 2, 2, 9), random_model(4, 2, 2, 9));
        assert_ne!(random_model(4, 2, 2, 9), random_model(4, 2, 2, 10));
    }
}
