//! Acceptance gate: one check per criterion, each printing a PASS/FAIL line.
//! Runs without the test harness so the lines always reach standard output.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;

use stagedur::epoch::{epoch_memory_operator, sample_geometric, worker_rng};
use stagedur::evaluate::{
    asymptotic_value_estimate, longrun_average_exact_fsc, DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION, DEFAULT_SWEEPS,
};
use stagedur::io::{parse_pomdp, serialize_pomdp};
use stagedur::mimic::{default_truncation, mimic_action_exact, mimic_action_mc};
use stagedur::model::stage_duration_transform;
use stagedur::verify::{
    alternating_controller, bundled_controllers, bundled_models, check_cesaro_alignment, check_epoch_sum_lemma,
    check_fully_observed_identity, check_liminf_subsequence, check_marginal_lemma, check_marginal_lemma_controller,
    check_mimic_identity, check_theorem_main, constancy_report, figure1_model, monotonicity_report, random_mdp,
    random_model, value_sweep, CheckReport, DEFAULT_SEED, MDP_SEED,
};
use stagedur::{History, MixedAction, SequenceStrategy, StageDuration, Strategy, TableStrategy};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Outcome {
            passed,
            detail: detail.into(),
        }
    }

    /// Folds a list of reports into one outcome, naming the worst failure.
    fn from_reports(reports: &[CheckReport]) -> Self {
        let failed: Vec<&CheckReport> = reports.iter().filter(|r| !r.passed).collect();
        let detail = match failed.first() {
            Some(r) => format!("{} of {} checks failed; first: {r}", failed.len(), reports.len()),
            None => format!("{} checks passed", reports.len()),
        };
        Outcome::new(failed.is_empty(), detail)
    }
}

fn sd(h: f64) -> StageDuration {
    StageDuration::new(h).unwrap()
}

fn criterion(number: usize, title: &str, limit: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let passed = out.passed && in_time;
    println!(
        "{} criterion {number:>2} ({title}): {} [runtime {:.2}s, limit {}s{}]",
        if passed { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", exceeded" },
    );
    passed
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn stage_duration_algebra() -> Outcome {
    let mut rng = worker_rng(DEFAULT_SEED, 1);
    let mut worst: f64 = 0.0;
    let mut identity = true;
    for i in 0..100 {
        let m = random_model(4, 2, 2, 1000 + i);
        let x: f64 = 1.0 - rng.random::<f64>();
        let y: f64 = 1.0 - rng.random::<f64>();
        let (h1, h2) = if x <= y { (x, y) } else { (y, x) };
        let direct = stage_duration_transform(&m, sd(h1));
        let nested = stage_duration_transform(&stage_duration_transform(&m, sd(h2)), sd(h1 / h2));
        worst = worst.max(direct.max_transition_diff(&nested));
        identity &= stage_duration_transform(&m, StageDuration::ONE) == m;
    }
    Outcome::new(
        worst <= 1e-12 && identity,
        format!("max entry gap {worst:e} (tol 1e-12), h=1 identity exact: {identity}"),
    )
}

fn epoch_moments() -> Outcome {
    let n = 100_000usize;
    let mut ok = true;
    let mut parts = Vec::new();
    for (j, h) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let mut rng = worker_rng(DEFAULT_SEED, 100 + j as u64);
        let xs: Vec<f64> = (0..n).map(|_| sample_geometric(sd(h), &mut rng) as f64).collect();
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let c2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
        let c4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
        let var = c2 * nf / (nf - 1.0);
        let se_mean = (var / nf).sqrt();
        let se_var = ((c4 - c2 * c2) / nf).sqrt();
        let tail = xs.iter().filter(|x| **x >= 3.0).count() as f64 / nf;
        let tail_exact = (1.0 - h) * (1.0 - h);
        let se_tail = (tail_exact * (1.0 - tail_exact) / nf).sqrt();
        let dm = (mean - 1.0 / h).abs() / se_mean;
        let dv = (var - (1.0 - h) / (h * h)).abs() / se_var;
        let dt = (tail - tail_exact).abs() / se_tail;
        ok &= dm <= 3.0 && dv <= 3.0 && dt <= 3.0;
        parts.push(format!("h={h}: mean {mean:.4} ({dm:.2} SE), var {var:.4} ({dv:.2} SE), P(N>=3) {tail:.4} ({dt:.2} SE)"));
    }
    Outcome::new(ok, parts.join("; "))
}

fn epoch_operator() -> Outcome {
    let mut rng = worker_rng(DEFAULT_SEED, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 4;
        let mut k = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>());
        for mut row in k.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        for h in [0.3, 0.7] {
            let closed = epoch_memory_operator(&k, sd(h)).unwrap();
            // h·Σ_{n≥0} ((1−h)K)^n until the remaining tail is below 1e-15
            let mut series = DMatrix::zeros(n, n);
            let mut term = DMatrix::identity(n, n) * h;
            let mut tail = h;
            while tail > 1e-15 {
                series += &term;
                term = &term * &k * (1.0 - h);
                tail *= 1.0 - h;
            }
            worst = worst.max((closed - series).abs().max());
        }
    }
    Outcome::new(worst <= 1e-9, format!("max entry gap {worst:e} over 50 matrices x 2 durations (tol 1e-9)"))
}

/// Table strategy with deterministic pseudo-random mixed actions up to
/// depth 2 and a fixed default beyond it.
fn table_source(n_actions: usize, n_signals: usize, seed: u64) -> TableStrategy {
    let mut rng = worker_rng(seed, 0);
    let default = MixedAction::pure(n_actions, 0);
    let mut table = TableStrategy::new(n_actions, n_signals, 2, default).unwrap();
    for len in 0..=2 {
        for eta in History::enumerate(n_actions, n_signals, len) {
            let w: Vec<f64> = (0..n_actions).map(|_| rng.random::<f64>() + 0.05).collect();
            table.insert(eta, MixedAction::normalized(w).unwrap()).unwrap();
        }
    }
    table
}

fn mimic_identity() -> Outcome {
    let mut reports = Vec::new();
    for (i, (name, m)) in bundled_models().into_iter().enumerate() {
        let na = m.n_actions();
        let mut sources: Vec<(String, Box<dyn Strategy>)> = vec![
            ("seq".into(), Box::new(SequenceStrategy::pure(na, &[0, 1, 1]).unwrap())),
            (
                "mixed_seq".into(),
                Box::new(
                    SequenceStrategy::new(vec![
                        MixedAction::new(vec![0.3, 0.7]).unwrap(),
                        MixedAction::pure(na, 1),
                    ])
                    .unwrap(),
                ),
            ),
            ("table".into(), Box::new(table_source(na, m.n_signals(), 77 + i as u64))),
        ];
        for (cname, fsc) in bundled_controllers(name) {
            sources.push((cname.into(), Box::new(fsc)));
        }
        for (sname, s) in &sources {
            let mut r = check_mimic_identity(&m, s.as_ref(), 4).unwrap();
            r.name = format!("{name}/{sname}");
            reports.push(r);
        }
    }
    let worst = reports.iter().map(|r| r.difference).fold(0.0, f64::max);
    let mut out = Outcome::from_reports(&reports);
    out.detail = format!("{}; max gap {worst:e} (tol 1e-12)", out.detail);
    out
}

fn state_blind_closed_form() -> Outcome {
    let m = figure1_model();
    let h = sd(0.5);
    let sigma = SequenceStrategy::pure(2, &[0, 1]).unwrap();
    let eta = History::new(0);
    // a is played at T_1 = N iff N is odd
    let oracle: f64 = (1..=200)
        .filter(|n| n % 2 == 1)
        .map(|n| 0.5 * 0.5f64.powi(n - 1))
        .sum();
    let exact = mimic_action_exact(&m, &sigma, h, &eta, default_truncation(h)).unwrap();
    let exact_gap = (exact.action.weight(0) - oracle).abs();
    let mc = mimic_action_mc(&m, &sigma, h, &eta, 100_000, DEFAULT_SEED).unwrap();
    let mc_gap = (mc.weights[0] - oracle).abs();
    let se = mc.std_errors[0];
    let closed_gap = (oracle - 2.0 / 3.0).abs();
    Outcome::new(
        exact_gap <= 1e-9 && mc_gap <= 3.0 * se && closed_gap <= 1e-12,
        format!(
            "oracle {oracle}, exact {} (gap {exact_gap:e}, tol 1e-9), mc {} (gap {mc_gap:e}, 3 SE = {:e})",
            exact.action.weight(0),
            mc.weights[0],
            3.0 * se
        ),
    )
}

fn marginal_lemma() -> Outcome {
    let mut reports = Vec::new();
    for (name, m) in bundled_models() {
        let controllers = bundled_controllers(name);
        for h in [0.3, 0.5, 0.7] {
            let h = sd(h);
            for k in 1..=3 {
                let seq = SequenceStrategy::pure(m.n_actions(), &[0, 1]).unwrap();
                reports.push(check_marginal_lemma(&m, &seq, h, k, default_truncation(h)).unwrap());
                for (_, fsc) in &controllers {
                    if fsc.is_pure() {
                        reports.push(check_marginal_lemma(&m, fsc, h, k, default_truncation(h)).unwrap());
                    }
                    reports.push(check_marginal_lemma_controller(&m, fsc, h, k).unwrap());
                }
            }
        }
    }
    Outcome::from_reports(&reports)
}

fn epoch_sum_lemma() -> Outcome {
    let mut reports = Vec::new();
    for (name, m) in bundled_models() {
        for (_, fsc) in bundled_controllers(name) {
            for h in [0.3, 0.5, 0.7] {
                for k in 1..=3 {
                    reports.push(check_epoch_sum_lemma(&m, &fsc, sd(h), k, 10_000, DEFAULT_SEED).unwrap());
                }
            }
        }
    }
    Outcome::from_reports(&reports)
}

fn cesaro_alignment() -> Outcome {
    let r = check_cesaro_alignment(&figure1_model(), &alternating_controller(), sd(0.5), 400, 2_000, DEFAULT_SEED)
        .unwrap();
    Outcome::new(r.passed, r.to_string())
}

fn theorem_end_to_end() -> Outcome {
    let mut reports = Vec::new();
    for (name, m) in bundled_models() {
        if name == "mdp3" {
            continue;
        }
        for (_, fsc) in bundled_controllers(name) {
            for h in [0.25, 0.5] {
                reports.push(check_theorem_main(&m, &fsc, sd(h)).unwrap());
            }
        }
    }
    let worst = reports.iter().map(|r| r.difference).fold(0.0, f64::max);
    let mut out = Outcome::from_reports(&reports);
    out.detail = format!("{}; max gap {worst:e} (tol 1e-6)", out.detail);
    out
}

fn fully_observed_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for i in 0..20 {
        let m = random_mdp(3, 2, 500 + i);
        for lambda in [0.1, 0.01] {
            for h in [0.3, 0.7] {
                let r = check_fully_observed_identity(&m, lambda, sd(h)).unwrap();
                worst = worst.max(r.difference);
                count += 1;
            }
        }
    }
    Outcome::new(worst <= 1e-8, format!("{count} cases, max gap {worst:e} (tol 1e-8)"))
}

fn figure1_discontinuity() -> Outcome {
    let m = figure1_model();
    let alt = longrun_average_exact_fsc(&m, &alternating_controller(), StageDuration::ONE).unwrap().value;
    let value = asymptotic_value_estimate(&m, sd(0.5), &DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION, DEFAULT_SWEEPS)
        .unwrap();
    let best = bundled_controllers("figure1")
        .iter()
        .map(|(_, c)| longrun_average_exact_fsc(&m, c, sd(0.5)).unwrap().value)
        .fold(f64::NEG_INFINITY, f64::max);
    Outcome::new(
        alt >= 0.999 && value.value <= 0.1 && best.abs() <= 1e-9,
        format!(
            "R(alternate, h=1) = {alt}, V(0.5) estimate = {} [{}], best bundled R(h=0.5) = {best}",
            value.value,
            value.diag_string()
        ),
    )
}

fn monotonicity_sweep() -> Outcome {
    let grid = [0.25, 0.5, 0.75, 1.0];
    let fig = value_sweep(&figure1_model(), &grid, &DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION).unwrap();
    let mdp = value_sweep(&random_mdp(3, 2, MDP_SEED), &grid, &DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION).unwrap();
    let reports = [
        monotonicity_report(&grid, &fig),
        monotonicity_report(&grid, &mdp),
        constancy_report(&grid, &mdp),
    ];
    let mut out = Outcome::from_reports(&reports);
    for r in &reports {
        out.detail.push_str(&format!("; {r}"));
    }
    out
}

fn corpus_files(kind: &str) -> Vec<std::path::PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(kind);
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "pomdp"))
        .collect();
    files.sort();
    files
}

fn parser_corpus() -> Outcome {
    let valid = corpus_files("valid");
    let invalid = corpus_files("invalid");
    let mut problems = Vec::new();
    for path in &valid {
        let text = fs::read_to_string(path).unwrap();
        match parse_pomdp(&text) {
            Ok(m) => {
                let canon = serialize_pomdp(&m);
                if parse_pomdp(&canon).as_ref() != Ok(&m) {
                    problems.push(format!("{} does not round-trip", path.display()));
                }
            }
            Err(e) => problems.push(format!("{}: {e}", path.display())),
        }
    }
    for path in &invalid {
        let text = fs::read_to_string(path).unwrap();
        let golden = fs::read_to_string(path.with_extension("err")).unwrap_or_default();
        match parse_pomdp(&text) {
            Ok(_) => problems.push(format!("{} parsed", path.display())),
            Err(e) if format!("{e}\n") != golden => problems.push(format!("{}: got '{e}'", path.display())),
            Err(_) => {}
        }
    }
    let figure1 = corpus_files("valid")
        .iter()
        .find(|p| p.file_name().is_some_and(|n| n == "figure1.pomdp"))
        .map(|p| parse_pomdp(&fs::read_to_string(p).unwrap()).ok() == Some(figure1_model()))
        .unwrap_or(false);
    if !figure1 {
        problems.push("figure1.pomdp does not match the built-in model".into());
    }
    Outcome::new(
        valid.len() >= 10 && invalid.len() >= 10 && problems.is_empty(),
        format!(
            "{} valid, {} invalid files; {}",
            valid.len(),
            invalid.len(),
            if problems.is_empty() { "all match".to_string() } else { problems.join("; ") }
        ),
    )
}

fn liminf_subsequence() -> Outcome {
    let mut rng = worker_rng(DEFAULT_SEED, 14);
    let n = 20_000;
    let mut worst_ratio: f64 = 0.0;
    let mut failures = 0;
    let cases = 200;
    for _ in 0..cases {
        let level = rng.random_range(-1.0..1.0);
        let amp = rng.random_range(0.1..2.0);
        let freq = rng.random_range(2.0..4.0);
        let power = rng.random_range(0.5..0.7);
        let max_gap = rng.random_range(1..=4usize);
        let seq: Vec<f64> = (1..=n)
            .map(|i| level + amp * (freq * (i as f64).powf(power)).sin() + 1.0 / i as f64)
            .collect();
        let mut idx = vec![rng.random_range(0..max_gap)];
        loop {
            let next = idx.last().unwrap() + rng.random_range(1..=max_gap);
            if next >= n {
                break;
            }
            idx.push(next);
        }
        // declared tolerance: gap times the largest step in the trailing half
        let step = seq[n / 2..].windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        let tol = max_gap as f64 * step;
        let r = check_liminf_subsequence(&seq, &idx, max_gap, 0.5, tol).unwrap();
        if !r.passed {
            failures += 1;
        }
        worst_ratio = worst_ratio.max(r.difference / tol);
    }
    Outcome::new(
        failures == 0,
        format!("{cases} synthetic sequences, {failures} failures, worst gap/tolerance {worst_ratio:.3}"),
    )
}

fn main() {
    let results = [
        criterion(1, "stage-duration algebra", secs(1), stage_duration_algebra),
        criterion(2, "epoch-process moments", secs(5), epoch_moments),
        criterion(3, "epoch operator", secs(1), epoch_operator),
        criterion(4, "mimic identity at h=1", secs(60), mimic_identity),
        criterion(5, "state-blind closed form", secs(5), state_blind_closed_form),
        criterion(6, "marginal-matching lemma", secs(30), marginal_lemma),
        criterion(7, "epoch-sum lemma", secs(30), epoch_sum_lemma),
        criterion(8, "Cesaro alignment", secs(30), cesaro_alignment),
        criterion(9, "payoff equality end to end", secs(120), theorem_end_to_end),
        criterion(10, "fully observed identity", secs(10), fully_observed_identity),
        criterion(11, "figure1 model discontinuity", secs(60), figure1_discontinuity),
        criterion(12, "monotonicity sweep", secs(300), monotonicity_sweep),
        criterion(13, "parser and serializer corpus", secs(60), parser_corpus),
        criterion(14, "liminf along subsequences", secs(60), liminf_subsequence),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all 14 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
