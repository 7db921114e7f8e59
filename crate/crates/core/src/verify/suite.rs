use rayon::prelude::*;

use super::*;
use crate::evaluate::{DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION};
use crate::mimic::default_truncation;
use crate::strategy::SequenceStrategy;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Theorem,
    Lemmas,
    Example,
    FullyObserved,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Suite::All),
            "theorem" => Ok(Suite::Theorem),
            "lemmas" => Ok(Suite::Lemmas),
            "example" => Ok(Suite::Example),
            "fully-observed" => Ok(Suite::FullyObserved),
            other => Err(Error::InvalidArgument(format!("unknown suite '{other}'"))),
        }
    }
}

type Job = Box<dyn Fn() -> Result<CheckReport> + Send + Sync>;

fn sd(h: f64) -> StageDuration {
    StageDuration::new(h).expect("grid values lie in (0, 1]")
}

fn theorem_jobs(jobs: &mut Vec<(String, Job)>) {
    for (name, m) in bundled_models() {
        for (cname, fsc) in bundled_controllers(name) {
            for h in [0.25, 0.5] {
                let (m, fsc) = (m.clone(), fsc.clone());
                jobs.push((
                    format!("theorem_main[{name}/{cname},h={h}]"),
                    Box::new(move || check_theorem_main(&m, &fsc, sd(h))),
                ));
            }
            let (m, fsc) = (m.clone(), fsc.clone());
            jobs.push((
                format!("corollary_rescale[{name}/{cname},h1=0.25,h2=0.5]"),
                Box::new(move || check_corollary_rescale(&m, &fsc, sd(0.25), sd(0.5))),
            ));
        }
    }
}

fn lemma_jobs(jobs: &mut Vec<(String, Job)>, seed: u64) {
    let fig = figure1_model();
    for h in [0.3, 0.5, 0.7] {
        for k in 1..=3 {
            let m = fig.clone();
            jobs.push((
                format!("marginal_lemma[figure1/alternate-seq,h={h},k={k}]"),
                Box::new(move || {
                    let s = SequenceStrategy::pure(2, &[0, 1])?;
                    check_marginal_lemma(&m, &s, sd(h), k, default_truncation(sd(h)))
                }),
            ));
            for (name, m) in bundled_models() {
                for (cname, fsc) in bundled_controllers(name) {
                    let m = m.clone();
                    jobs.push((
                        format!("marginal_lemma_controller[{name}/{cname},h={h},k={k}]"),
                        Box::new(move || check_marginal_lemma_controller(&m, &fsc, sd(h), k)),
                    ));
                }
            }
        }
        for (name, m) in bundled_models() {
            let fsc = bundled_controllers(name).swap_remove(0).1;
            for k in 1..=3 {
                let m = m.clone();
                let fsc = fsc.clone();
                jobs.push((
                    format!("epoch_sum_lemma[{name},h={h},k={k}]"),
                    Box::new(move || check_epoch_sum_lemma(&m, &fsc, sd(h), k, 10_000, seed)),
                ));
            }
        }
    }
    let m = fig.clone();
    jobs.push((
        "cesaro_alignment[figure1,h=0.5,K=400]".into(),
        Box::new(move || check_cesaro_alignment(&m, &alternating_controller(), sd(0.5), 400, 2_000, seed)),
    ));
    for (name, m) in bundled_models().into_iter().filter(|(n, _)| *n != "figure1") {
        let fsc = bundled_controllers(name).swap_remove(0).1;
        jobs.push((
            format!("cesaro_alignment[{name},h=0.5,K=400]"),
            Box::new(move || check_cesaro_alignment(&m, &fsc, sd(0.5), 400, 2_000, seed)),
        ));
    }
    jobs.push((
        "liminf_subsequence[sin(sqrt n),n_k=2k]".into(),
        Box::new(|| {
            let seq: Vec<f64> = (1..=100_000).map(|n| (n as f64).sqrt().sin()).collect();
            let idx: Vec<usize> = (1..50_000).map(|k| 2 * k - 1).collect();
            check_liminf_subsequence(&seq, &idx, 2, 0.2, 0.05)
        }),
    ));
}

fn example_jobs(jobs: &mut Vec<(String, Job)>) {
    jobs.push((
        "example.average[h=1]".into(),
        Box::new(|| {
            let v = longrun_average_exact_fsc(&figure1_model(), &alternating_controller(), StageDuration::ONE)?;
            Ok(CheckReport::new(
                "",
                vec![("R_alternate".into(), v.value), ("target".into(), 0.999)],
                Comparison::AtLeast,
                0.0,
            ))
        }),
    ));
    jobs.push((
        "example.best_average[h=0.5]".into(),
        Box::new(|| {
            let m = figure1_model();
            let best = bundled_controllers("figure1")
                .iter()
                .map(|(_, c)| longrun_average_exact_fsc(&m, c, sd(0.5)).map(|e| e.value))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(CheckReport::two_sided("", ("best_R", best), ("zero", 0.0), 1e-9))
        }),
    ));
    for (h, bound, cmp) in [(1.0, 0.99, Comparison::AtLeast), (0.5, 0.1, Comparison::AtMost)] {
        jobs.push((
            format!("example.value[h={h}]"),
            Box::new(move || {
                let v = asymptotic_value_estimate(
                    &figure1_model(),
                    sd(h),
                    &DEFAULT_LAMBDA_GRID,
                    DEFAULT_RESOLUTION,
                    DEFAULT_SWEEPS,
                )?;
                Ok(CheckReport::new("", vec![("V".into(), v.value), ("bound".into(), bound)], cmp, 0.0)
                    .with_meta("diag", v.diag_string()))
            }),
        ));
    }
    jobs.push((
        "example.monotonicity[figure1]".into(),
        Box::new(|| {
            check_monotonicity(&figure1_model(), &[0.25, 0.5, 0.75, 1.0], &DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION)
        }),
    ));
}

fn fully_observed_jobs(jobs: &mut Vec<(String, Job)>) {
    let mdp = random_mdp(3, 2, MDP_SEED);
    for lambda in [0.1, 0.01] {
        for h in [0.3, 0.7] {
            let m = mdp.clone();
            jobs.push((
                format!("fully_observed_identity[mdp3,lambda={lambda},h={h}]"),
                Box::new(move || check_fully_observed_identity(&m, lambda, sd(h))),
            ));
        }
    }
    let grid = [0.25, 0.5, 0.75, 1.0];
    let m = mdp.clone();
    jobs.push((
        "fully_observed.monotonicity[mdp3]".into(),
        Box::new(move || {
            let est = value_sweep(&m, &grid, &DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION)?;
            Ok(monotonicity_report(&grid, &est))
        }),
    ));
    jobs.push((
        "fully_observed.constancy[mdp3]".into(),
        Box::new(move || {
            let est = value_sweep(&mdp, &grid, &DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION)?;
            Ok(constancy_report(&grid, &est))
        }),
    ));
}

/// Runs the selected checks concurrently and returns the reports sorted by
/// name. A check that errors is reported as failed with the error message.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckReport> {
    let mut jobs: Vec<(String, Job)> = Vec::new();
    if matches!(suite, Suite::All | Suite::Theorem) {
        theorem_jobs(&mut jobs);
    }
    if matches!(suite, Suite::All | Suite::Lemmas) {
        lemma_jobs(&mut jobs, seed);
    }
    if matches!(suite, Suite::All | Suite::Example) {
        example_jobs(&mut jobs);
    }
    if matches!(suite, Suite::All | Suite::FullyObserved) {
        fully_observed_jobs(&mut jobs);
    }
    let mut reports: Vec<CheckReport> = jobs
        .par_iter()
        .map(|(name, job)| match job() {
            Ok(mut r) => {
                r.name = name.clone();
                r
            }
            Err(e) => {
                let mut r = CheckReport::bounded(name.clone(), "error", f64::INFINITY, 0.0);
                r.metadata.push(("error".into(), e.to_string()));
                r
            }
        })
        .collect();
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    reports
}
