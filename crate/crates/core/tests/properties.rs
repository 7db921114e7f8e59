use nalgebra::DMatrix;
use proptest::prelude::*;

use stagedur::evaluate::{
    discounted_payoff, longrun_average_exact_fsc, DiscountMethod, SimplexGrid,
};
use stagedur::io::{parse_pomdp, serialize_controller, serialize_pomdp, parse_controller};
use stagedur::mimic::{build_mimic_strategy, default_truncation, mimic_controller};
use stagedur::model::{rescale_stage_duration, stage_duration_transform};
use stagedur::verify::{check_liminf_subsequence, random_model, CheckReport, Comparison};
use stagedur::epoch::epoch_memory_operator;
use stagedur::{
    FiniteStateController, History, MixedAction, SequenceStrategy, StageDuration, StagedModel, Strategy,
};

fn sd(h: f64) -> StageDuration {
    StageDuration::new(h).unwrap()
}

fn stochastic(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = row[..row.len() - 1].iter().sum();
    *row.last_mut().unwrap() = (1.0 - head).max(0.0);
    row
}

/// Random controller with two memory states for a model with the given shape.
fn random_controller(n_actions: usize, n_signals: usize, raw: &[f64]) -> FiniteStateController {
    let mut it = raw.iter().copied().cycle();
    let mut take = |n: usize| stochastic(&(0..n).map(|_| it.next().unwrap()).collect::<Vec<_>>());
    let init: Vec<Vec<f64>> = (0..n_signals).map(|_| take(2)).collect();
    let rule: Vec<Vec<f64>> = (0..2).map(|_| take(n_actions)).collect();
    let upd: Vec<Vec<f64>> = (0..2 * n_actions * n_signals).map(|_| take(2)).collect();
    FiniteStateController::from_fn(
        2,
        n_actions,
        n_signals,
        |s| init[s].clone(),
        |q| rule[q].clone(),
        |q, a, s| upd[(q * n_actions + a) * n_signals + s].clone(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_composes(seed in any::<u64>(), h1 in 0.01f64..1.0, h2 in 0.01f64..1.0) {
        let m = random_model(4, 2, 2, seed);
        let (lo, hi) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        let direct = stage_duration_transform(&m, sd(lo));
        let nested = stage_duration_transform(&stage_duration_transform(&m, sd(hi)), sd(lo / hi));
        prop_assert!(direct.max_transition_diff(&nested) <= 1e-12);
        prop_assert_eq!(stage_duration_transform(&m, StageDuration::ONE), m);
    }

    #[test]
    fn rescale_recovers_coarser_model(seed in any::<u64>(), h1 in 0.05f64..0.9, up in 1.05f64..5.0) {
        let m = random_model(3, 2, 1, seed);
        let h2 = (h1 * up).min(1.0);
        prop_assume!(h1 < h2);
        let staged = StagedModel::from_base(&m, sd(h1));
        let (coarse, rel) = rescale_stage_duration(&staged, sd(h2)).unwrap();
        prop_assert!(coarse.model.max_transition_diff(&stage_duration_transform(&m, sd(h2))) <= 1e-12);
        let back = stage_duration_transform(&coarse.model, rel);
        prop_assert!(back.max_transition_diff(&staged.model) <= 1e-12);
    }

    #[test]
    fn serialization_round_trips_bit_for_bit(seed in any::<u64>(), h in 0.01f64..=1.0, ns in 1usize..5, na in 1usize..4) {
        let m = stage_duration_transform(&random_model(ns, na, ns.min(2), seed), sd(h));
        let text = serialize_pomdp(&m);
        let back = parse_pomdp(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(serialize_pomdp(&back), text);
    }

    #[test]
    fn controller_files_round_trip(raw in prop::collection::vec(0.01f64..1.0, 40), seed in any::<u64>()) {
        let m = random_model(3, 2, 2, seed);
        let fsc = random_controller(2, 2, &raw);
        let back = parse_controller(&serialize_controller(&fsc, &m), &m).unwrap();
        prop_assert_eq!(back, fsc);
    }

    #[test]
    fn mimic_controller_rows_are_stochastic(raw in prop::collection::vec(0.01f64..1.0, 40), h in 0.05f64..=1.0) {
        let fsc = random_controller(2, 2, &raw);
        let m = random_model(3, 2, 2, 7);
        let mimic = mimic_controller(&m, &fsc, sd(h)).unwrap();
        for depth in 0..3 {
            for eta in History::enumerate(2, 2, depth) {
                let a = mimic.act(&eta);
                prop_assert!((a.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(a.weights().iter().all(|w| *w >= 0.0));
            }
        }
    }

    #[test]
    fn mimic_actions_sum_to_one(seed in any::<u64>(), h in 0.4f64..=1.0, cycle in prop::collection::vec(0usize..2, 1..4)) {
        let m = random_model(3, 2, 2, seed);
        let source = SequenceStrategy::pure(2, &cycle).unwrap();
        let h = sd(h);
        let mimic = build_mimic_strategy(&m, &source, h, default_truncation(h));
        for depth in 0..2 {
            for eta in History::enumerate(2, 2, depth) {
                let a = mimic.act(&eta);
                prop_assert!((a.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
        prop_assert!(mimic.take_error().is_none());
    }

    #[test]
    fn epoch_operator_is_stochastic(raw in prop::collection::vec(0.0f64..1.0, 9), h in 0.01f64..=1.0) {
        let rows: Vec<Vec<f64>> = raw.chunks(3).map(|c| stochastic(&[c[0] + 1e-3, c[1], c[2]])).collect();
        let k = DMatrix::from_fn(3, 3, |i, j| rows[i][j]);
        let e = epoch_memory_operator(&k, sd(h)).unwrap();
        for i in 0..3 {
            prop_assert!((e.row(i).sum() - 1.0).abs() <= 1e-10);
            prop_assert!(e.row(i).iter().all(|x| *x >= -1e-12));
        }
    }

    #[test]
    fn constant_payoff_evaluates_exactly(seed in any::<u64>(), c in -5.0f64..5.0, h in 0.05f64..=1.0, lambda in 0.01f64..1.0) {
        let m = random_model(3, 2, 2, seed).with_payoff(|_, _| c).unwrap();
        let sigma = SequenceStrategy::new(vec![MixedAction::uniform(2)]).unwrap();
        let d = discounted_payoff(&m, &sigma, lambda, sd(h), &DiscountMethod::Controller).unwrap();
        prop_assert_eq!(d.value, c);
        let fsc = sigma.to_controller(2).unwrap();
        prop_assert_eq!(longrun_average_exact_fsc(&m, &fsc, sd(h)).unwrap().value, c);
    }

    #[test]
    fn reports_recompute_their_verdict(
        q in prop::collection::vec(-10.0f64..10.0, 2..6),
        tol in 0.0f64..5.0,
        which in 0usize..5,
    ) {
        let cmp = [
            Comparison::TwoSided,
            Comparison::AtMost,
            Comparison::AtLeast,
            Comparison::Nondecreasing,
            Comparison::Constant,
        ][which];
        let quantities = q.iter().enumerate().map(|(i, v)| (format!("q{i}"), *v)).collect();
        let r = CheckReport::new("r", quantities, cmp, tol);
        prop_assert_eq!(r.passed, r.recompute());
        prop_assert_eq!(r.passed, r.difference <= tol);
    }

    #[test]
    fn interpolation_reproduces_the_belief(raw in prop::collection::vec(0.0f64..1.0, 4), res in 1usize..12) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let b = stochastic(&raw);
        let grid = SimplexGrid::new(4, res).unwrap();
        let weights = grid.interpolate(&b);
        prop_assert!((weights.iter().map(|(_, w)| w).sum::<f64>() - 1.0).abs() <= 1e-12);
        let mut rebuilt = [0.0; 4];
        for (i, w) in &weights {
            prop_assert!(*w > 0.0);
            for (x, p) in rebuilt.iter_mut().zip(grid.point(*i)) {
                *x += w * p;
            }
        }
        for (x, y) in rebuilt.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        let nearest = grid.point(grid.nearest(&b));
        prop_assert!(nearest.iter().zip(&b).all(|(p, x)| (p - x).abs() <= 1.0 / res as f64 + 1e-12));
    }

    #[test]
    fn liminf_agrees_along_bounded_gap_subsequences(
        level in -1.0f64..1.0,
        amp in 0.1f64..2.0,
        freq in 2.0f64..4.0,
        power in 0.5f64..0.7,
        gaps in prop::collection::vec(1usize..=4, 64),
    ) {
        let n = 20_000;
        let seq: Vec<f64> = (1..=n).map(|i| level + amp * (freq * (i as f64).powf(power)).sin()).collect();
        let mut idx = vec![0usize];
        let mut g = gaps.iter().cycle();
        loop {
            let next = idx.last().unwrap() + g.next().unwrap();
            if next >= n {
                break;
            }
            idx.push(next);
        }
        let step = seq[n / 2..].windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        let r = check_liminf_subsequence(&seq, &idx, 4, 0.5, 4.0 * step).unwrap();
        prop_assert!(r.passed, "{}", r);
    }

    #[test]
    fn liminf_rejects_gaps_over_the_bound(extra in 1usize..5) {
        let seq = vec![0.0; 100];
        let idx = [0, 2, 4 + 2 + extra];
        prop_assert!(check_liminf_subsequence(&seq, &idx, 2 + extra, 0.5, 0.1).is_err());
    }
}
