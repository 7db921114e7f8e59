//! Numerical checks of the stage-duration results: the marginal-matching,
//! epoch-sum, Cesàro-alignment and liminf-subsequence lemmas, the
//! equality of long-run averages under mimicking, its rescaled form,
//! monotonicity of the estimated value in `h`, and the fully observed
//! discount identity.
//!
//! Every check returns a [`CheckReport`] whose pass flag can be recomputed
//! from the stored quantities.

mod bundle;
mod suite;

use std::fmt;

use rayon::prelude::*;

pub use bundle::{
    alternating_controller, bundled_controllers, bundled_models, figure1_model, random_mdp,
    random_model, MDP_SEED, POMDP_SEED,
};
pub use suite::{run_suite, Suite, DEFAULT_SEED};

use crate::epoch::{worker_rng, GhSimulator};
use crate::error::{Error, Result};
use crate::evaluate::{
    asymptotic_value_estimate, discounted_value_estimate, longrun_average_exact_fsc,
    longrun_average_mc, PayoffEstimate, DEFAULT_SWEEPS,
};
use crate::mimic::{
    build_mimic_strategy, controller_joint_law, mimic_controller, truncated_joint_law,
    truncation_bound,
};
use crate::model::{is_fully_observed, rescale_stage_duration, PomdpModel, StageDuration, StagedModel};
use crate::strategy::{
    exact_history_distribution, FiniteStateController, History, Strategy, DEFAULT_BUDGET,
};

/// How the stored quantities decide the check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `|q₀ − q₁| ≤ tol`.
    TwoSided,
    /// `q₀ ≤ q₁ + tol`.
    AtMost,
    /// `q₀ ≥ q₁ − tol`.
    AtLeast,
    /// `max_{i<j} (q_i − q_j) ≤ tol`.
    Nondecreasing,
    /// `max q − min q ≤ tol`.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub quantities: Vec<(String, f64)>,
    pub comparison: Comparison,
    pub tolerance: f64,
    /// Statistic compared against the tolerance.
    pub difference: f64,
    pub passed: bool,
    pub metadata: Vec<(String, String)>,
}

fn statistic(comparison: Comparison, q: &[f64]) -> f64 {
    match comparison {
        Comparison::TwoSided => (q[0] - q[1]).abs(),
        Comparison::AtMost => q[0] - q[1],
        Comparison::AtLeast => q[1] - q[0],
        Comparison::Nondecreasing => {
            let mut worst = f64::NEG_INFINITY;
            let mut running_max = f64::NEG_INFINITY;
            for &x in q {
                worst = worst.max(running_max - x);
                running_max = running_max.max(x);
            }
            if q.len() < 2 {
                0.0
            } else {
                worst
            }
        }
        Comparison::Constant => {
            let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        }
    }
}

impl CheckReport {
    pub fn new(
        name: impl Into<String>,
        quantities: Vec<(String, f64)>,
        comparison: Comparison,
        tolerance: f64,
    ) -> Self {
        let values: Vec<f64> = quantities.iter().map(|(_, v)| *v).collect();
        let difference = statistic(comparison, &values);
        CheckReport {
            name: name.into(),
            quantities,
            comparison,
            tolerance,
            difference,
            passed: difference <= tolerance,
            metadata: Vec::new(),
        }
    }

    /// Two labeled quantities compared with `|lhs − rhs| ≤ tol`.
    pub fn two_sided(name: impl Into<String>, lhs: (&str, f64), rhs: (&str, f64), tol: f64) -> Self {
        Self::new(
            name,
            vec![(lhs.0.into(), lhs.1), (rhs.0.into(), rhs.1)],
            Comparison::TwoSided,
            tol,
        )
    }

    /// Precomputed statistic (for example a maximum over many entries),
    /// stored as the single quantity and compared with `stat ≤ tol`.
    pub fn bounded(name: impl Into<String>, label: &str, stat: f64, tol: f64) -> Self {
        Self::new(
            name,
            vec![(label.into(), stat), ("zero".into(), 0.0)],
            Comparison::AtMost,
            tol,
        )
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    /// Adds a quantity that takes no part in the comparison.
    pub fn with_info(mut self, label: &str, value: f64) -> Self {
        self.metadata.push((label.into(), format!("{value}")));
        self
    }

    /// Recomputes the pass flag from the stored quantities.
    pub fn recompute(&self) -> bool {
        let values: Vec<f64> = self.quantities.iter().map(|(_, v)| *v).collect();
        statistic(self.comparison, &values) <= self.tolerance
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}:", self.name)?;
        for (k, v) in &self.quantities {
            write!(f, " {k}={v}")?;
        }
        write!(f, " diff={:e} tol={:e}", self.difference, self.tolerance)?;
        for (k, v) in &self.metadata {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Minimum over the trailing `window_fraction` of the sequence (at least
/// one element).
pub fn liminf_trailing(seq: &[f64], window_fraction: f64) -> f64 {
    assert!(!seq.is_empty(), "liminf proxy of an empty sequence");
    let w = ((seq.len() as f64 * window_fraction).ceil() as usize).clamp(1, seq.len());
    seq[seq.len() - w..].iter().copied().fold(f64::INFINITY, f64::min)
}

/// Compares the trailing liminf proxies of `seq` and of `seq` along the
/// strictly increasing zero-based `indices`, whose consecutive gaps must
/// not exceed `max_gap`.
pub fn check_liminf_subsequence(
    seq: &[f64],
    indices: &[usize],
    max_gap: usize,
    window_fraction: f64,
    tolerance: f64,
) -> Result<CheckReport> {
    if seq.is_empty() || indices.is_empty() {
        return Err(Error::InvalidArgument("sequence and indices must be nonempty".into()));
    }
    for (i, w) in indices.windows(2).enumerate() {
        if w[1] <= w[0] || w[1] - w[0] > max_gap {
            return Err(Error::GapBoundViolated {
                position: i + 1,
                gap: w[1].saturating_sub(w[0]),
                bound: max_gap,
            });
        }
    }
    if *indices.last().expect("nonempty") >= seq.len() {
        return Err(Error::InvalidArgument("subsequence index out of range".into()));
    }
    let sub: Vec<f64> = indices.iter().map(|&i| seq[i]).collect();
    Ok(CheckReport::two_sided(
        "liminf_subsequence",
        ("full", liminf_trailing(seq, window_fraction)),
        ("subsequence", liminf_trailing(&sub, window_fraction)),
        tolerance,
    )
    .with_meta("terms", seq.len())
    .with_meta("max_gap", max_gap))
}

/// Largest entrywise gap between `P¹_σ̂(η, ω_k, a_k)` and
/// `P^h_σ(H^fil_k = η, ω'_{T_k}, a'_{T_k})` over all `η` of length `k`,
/// both computed exactly (the right side by truncated enumeration).
pub fn check_marginal_lemma(
    m: &PomdpModel,
    sigma: &dyn Strategy,
    h: StageDuration,
    k: usize,
    n_max: usize,
) -> Result<CheckReport> {
    let mimic = build_mimic_strategy(m, sigma, h, n_max);
    let left = exact_history_distribution(m, &mimic, k, DEFAULT_BUDGET)?;
    if let Some(e) = mimic.take_error() {
        return Err(e);
    }
    let mut worst: f64 = 0.0;
    let mut lhs_payoff = 0.0;
    let mut rhs_payoff = 0.0;
    for eta in History::enumerate(m.n_actions(), m.n_signals(), k) {
        let right = truncated_joint_law(m, sigma, h, &eta, n_max, DEFAULT_BUDGET)?;
        let act = mimic.try_act(&eta)?.action;
        for w in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let l = left.prob(&eta, w) * act.weight(a);
                let r = right.prob(w, a);
                worst = worst.max((l - r).abs());
                lhs_payoff += l * m.payoff(w, a);
                rhs_payoff += r * m.payoff(w, a);
            }
        }
    }
    let bound = truncation_bound(h, k, n_max);
    Ok(CheckReport::bounded("marginal_lemma", "max_gap", worst, bound + 1e-9)
        .with_info("lhs_payoff", lhs_payoff)
        .with_info("rhs_payoff", rhs_payoff)
        .with_meta("h", h)
        .with_meta("k", k)
        .with_meta("n_max", n_max)
        .with_meta("truncation_bound", format!("{bound:e}")))
}

/// Same comparison for a controller source, without truncation: the left
/// side uses the mimic controller, the right side the epoch operators.
pub fn check_marginal_lemma_controller(
    m: &PomdpModel,
    fsc: &FiniteStateController,
    h: StageDuration,
    k: usize,
) -> Result<CheckReport> {
    let mimic = mimic_controller(m, fsc, h)?;
    let left = exact_history_distribution(m, &mimic, k, DEFAULT_BUDGET)?;
    let mut worst: f64 = 0.0;
    let mut lhs_payoff = 0.0;
    let mut rhs_payoff = 0.0;
    for eta in History::enumerate(m.n_actions(), m.n_signals(), k) {
        let right = controller_joint_law(m, fsc, h, &eta)?;
        let act = mimic.act(&eta);
        for w in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let l = left.prob(&eta, w) * act.weight(a);
                let r = right.prob(w, a);
                worst = worst.max((l - r).abs());
                lhs_payoff += l * m.payoff(w, a);
                rhs_payoff += r * m.payoff(w, a);
            }
        }
    }
    Ok(CheckReport::bounded("marginal_lemma_controller", "max_gap", worst, 1e-9)
        .with_info("lhs_payoff", lhs_payoff)
        .with_info("rhs_payoff", rhs_payoff)
        .with_meta("h", h)
        .with_meta("k", k))
}

/// Stream offset separating independent estimators within one check.
const SECOND_STREAM: u64 = 1 << 40;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Simulates `G_h` until the `k`-th mark; returns the payoff summed over
/// the `k`-th epoch and the payoff at its last stage.
fn epoch_payoffs(
    m: &PomdpModel,
    sigma: &dyn Strategy,
    h: StageDuration,
    k: usize,
    seed: u64,
    stream: u64,
) -> (f64, f64) {
    let mut rng = worker_rng(seed, stream);
    let mut sim = GhSimulator::new(m, sigma, h, &mut rng);
    let mut marks = 0;
    let mut sum = 0.0;
    loop {
        let r = sim.step(&mut rng);
        if marks + 1 == k {
            sum += r.payoff;
        }
        if r.mark {
            marks += 1;
            if marks == k {
                return (sum, r.payoff);
            }
        }
    }
}

/// Monte Carlo check of `E[Σ_{T_{k−1} < j ≤ T_k} g] = (1/h)·E[g at T_k]`
/// with independent streams for the two sides.
pub fn check_epoch_sum_lemma(
    m: &PomdpModel,
    sigma: &dyn Strategy,
    h: StageDuration,
    k: usize,
    n_traj: usize,
    seed: u64,
) -> Result<CheckReport> {
    if k == 0 || n_traj < 2 {
        return Err(Error::InvalidArgument("need k ≥ 1 and at least 2 trajectories".into()));
    }
    let lhs: Vec<f64> = (0..n_traj)
        .into_par_iter()
        .map(|i| epoch_payoffs(m, sigma, h, k, seed, i as u64).0)
        .collect();
    let rhs: Vec<f64> = (0..n_traj)
        .into_par_iter()
        .map(|i| epoch_payoffs(m, sigma, h, k, seed, SECOND_STREAM + i as u64).1 / h.value())
        .collect();
    let (ml, vl) = mean_var(&lhs);
    let (mr, vr) = mean_var(&rhs);
    let se = ((vl + vr) / n_traj as f64).sqrt();
    Ok(
        CheckReport::two_sided("epoch_sum_lemma", ("epoch_sum", ml), ("scaled_boundary", mr), 3.0 * se)
            .with_info("combined_se", se)
            .with_meta("h", h)
            .with_meta("k", k)
            .with_meta("n_traj", n_traj)
            .with_meta("seed", seed),
    )
}

/// Compares `x = E[(1/t_K)·Σ_{j≤t_K} g]`, `t_K = ⌊K/h⌋`, with
/// `y = E[(h/K)·Σ_{j≤T_K} g]` through paired trajectories.
pub fn check_cesaro_alignment(
    m: &PomdpModel,
    sigma: &dyn Strategy,
    h: StageDuration,
    big_k: usize,
    n_traj: usize,
    seed: u64,
) -> Result<CheckReport> {
    if big_k < 10 || n_traj < 2 {
        return Err(Error::InvalidArgument("need K ≥ 10 and at least 2 trajectories".into()));
    }
    let t_k = (big_k as f64 / h.value()).floor() as usize;
    let pairs: Vec<(f64, f64)> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = worker_rng(seed, i as u64);
            let mut sim = GhSimulator::new(m, sigma, h, &mut rng);
            let (mut sum_t, mut sum_marks) = (0.0, 0.0);
            let mut marks = 0;
            let mut t = 0;
            while t < t_k || marks < big_k {
                let r = sim.step(&mut rng);
                t += 1;
                if t <= t_k {
                    sum_t += r.payoff;
                }
                if marks < big_k {
                    sum_marks += r.payoff;
                }
                if r.mark {
                    marks += 1;
                }
            }
            (sum_t / t_k as f64, h.value() * sum_marks / big_k as f64)
        })
        .collect();
    let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let d: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let (mx, _) = mean_var(&x);
    let (my, _) = mean_var(&y);
    let (_, vd) = mean_var(&d);
    let se = (vd / n_traj as f64).sqrt();
    let kf = big_k as f64;
    let rate = m.payoff_bound() * (((1.0 - h.value()) / kf).sqrt() + h.value() / kf);
    Ok(CheckReport::two_sided("cesaro_alignment", ("x_tK", mx), ("y_K", my), rate + 3.0 * se)
        .with_info("paired_se", se)
        .with_info("rate_bound", rate)
        .with_meta("h", h)
        .with_meta("K", big_k)
        .with_meta("t_K", t_k)
        .with_meta("n_traj", n_traj)
        .with_meta("seed", seed))
}

/// `R(σ, h)` on `G_h` against `R(σ̂, 1)` for the mimic controller, both on
/// the exact product-chain path.
pub fn check_theorem_main(m: &PomdpModel, fsc: &FiniteStateController, h: StageDuration) -> Result<CheckReport> {
    let lhs = longrun_average_exact_fsc(m, fsc, h)?;
    let mimic = mimic_controller(m, fsc, h)?;
    let rhs = longrun_average_exact_fsc(m, &mimic, StageDuration::ONE)?;
    Ok(
        CheckReport::two_sided("theorem_main", ("R_sigma_h", lhs.value), ("R_mimic_1", rhs.value), 1e-6)
            .with_meta("h", h)
            .with_meta("path", "exact"),
    )
}

/// Monte Carlo form of [`check_theorem_main`]: both averages simulated at
/// `horizon` with independent streams; pass within three combined SE.
pub fn check_theorem_main_mc(
    m: &PomdpModel,
    fsc: &FiniteStateController,
    h: StageDuration,
    horizon: usize,
    n_traj: usize,
    seed: u64,
) -> Result<CheckReport> {
    let lhs = longrun_average_mc(m, fsc, h, horizon, n_traj, seed)?;
    let mimic = mimic_controller(m, fsc, h)?;
    let rhs = longrun_average_mc(m, &mimic, StageDuration::ONE, horizon, n_traj, seed ^ SECOND_STREAM)?;
    let se = (lhs.mode.diagnostic().powi(2) + rhs.mode.diagnostic().powi(2)).sqrt();
    Ok(
        CheckReport::two_sided("theorem_main_mc", ("R_sigma_h", lhs.value), ("R_mimic_1", rhs.value), 3.0 * se)
            .with_info("combined_se", se)
            .with_meta("h", h)
            .with_meta("horizon", horizon)
            .with_meta("n_traj", n_traj)
            .with_meta("seed", seed)
            .with_meta("path", "monte_carlo"),
    )
}

/// `R(σ, h1) = R(σ̂, h2)`: rebases `G_{h1}` on `G_{h2}` with relative
/// duration `h1/h2` and runs the theorem check there.
pub fn check_corollary_rescale(
    m: &PomdpModel,
    fsc: &FiniteStateController,
    h1: StageDuration,
    h2: StageDuration,
) -> Result<CheckReport> {
    let staged = StagedModel::from_base(m, h1);
    let (rebased, relative) = rescale_stage_duration(&staged, h2)?;
    let mut report = check_theorem_main(&rebased.model, fsc, relative)?;
    let direct = longrun_average_exact_fsc(m, fsc, h1)?;
    report.name = "corollary_rescale".into();
    Ok(report
        .with_info("R_sigma_h1_direct", direct.value)
        .with_meta("h1", h1)
        .with_meta("h2", h2))
}

/// `asymptotic_value_estimate` at every `h` of the grid.
pub fn value_sweep(
    m: &PomdpModel,
    h_grid: &[f64],
    lambda_grid: &[f64],
    grid_resolution: usize,
) -> Result<Vec<PayoffEstimate>> {
    h_grid
        .par_iter()
        .map(|&h| {
            asymptotic_value_estimate(m, StageDuration::new(h)?, lambda_grid, grid_resolution, DEFAULT_SWEEPS)
        })
        .collect()
}

/// Slack for sweep comparisons: the estimates' own diagnostics plus 1e-3.
pub fn sweep_slack(estimates: &[PayoffEstimate]) -> f64 {
    estimates.iter().map(PayoffEstimate::diagnostic).sum::<f64>() + 1e-3
}

fn sweep_quantities(h_grid: &[f64], estimates: &[PayoffEstimate]) -> Vec<(String, f64)> {
    h_grid
        .iter()
        .zip(estimates)
        .map(|(h, e)| (format!("V(h={h})"), e.value))
        .collect()
}

pub fn monotonicity_report(h_grid: &[f64], estimates: &[PayoffEstimate]) -> CheckReport {
    CheckReport::new(
        "monotonicity",
        sweep_quantities(h_grid, estimates),
        Comparison::Nondecreasing,
        sweep_slack(estimates),
    )
}

pub fn constancy_report(h_grid: &[f64], estimates: &[PayoffEstimate]) -> CheckReport {
    CheckReport::new(
        "constancy",
        sweep_quantities(h_grid, estimates),
        Comparison::Constant,
        sweep_slack(estimates),
    )
}

/// Estimated `V(h)` must be nondecreasing along the increasing `h_grid`.
pub fn check_monotonicity(
    m: &PomdpModel,
    h_grid: &[f64],
    lambda_grid: &[f64],
    grid_resolution: usize,
) -> Result<CheckReport> {
    if h_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("h grid must be increasing".into()));
    }
    let est = value_sweep(m, h_grid, lambda_grid, grid_resolution)?;
    Ok(monotonicity_report(h_grid, &est))
}

/// Stopping tolerance of the exact tabular solver used for the identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

/// `V_λ(h) = V_{λ/(1+λ−λh)}(1)` for a fully observed model.
pub fn check_fully_observed_identity(m: &PomdpModel, lambda: f64, h: StageDuration) -> Result<CheckReport> {
    if !is_fully_observed(m) {
        return Err(Error::NotFullyObserved);
    }
    let lhs = discounted_value_estimate(m, lambda, h, 2, DEFAULT_SWEEPS)?;
    let lambda1 = lambda / (1.0 + lambda - lambda * h.value());
    let rhs = discounted_value_estimate(m, lambda1, StageDuration::ONE, 2, DEFAULT_SWEEPS)?;
    Ok(CheckReport::two_sided(
        "fully_observed_identity",
        ("V_lambda_h", lhs.value),
        ("V_lambda1_1", rhs.value),
        2.0 * IDENTITY_TOLERANCE,
    )
    .with_meta("lambda", lambda)
    .with_meta("h", h)
    .with_meta("lambda1", lambda1))
}

/// At `h = 1` the mimic strategy must reproduce `σ` on every history of
/// positive probability up to `depth`; null histories must get the uniform
/// fallback.
pub fn check_mimic_identity(m: &PomdpModel, sigma: &dyn Strategy, depth: usize) -> Result<CheckReport> {
    let mimic = build_mimic_strategy(m, sigma, StageDuration::ONE, 1);
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    let mut fallbacks = 0usize;
    for len in 1..=depth {
        let dist = exact_history_distribution(m, sigma, len, DEFAULT_BUDGET)?;
        for eta in History::enumerate(m.n_actions(), m.n_signals(), len) {
            let got = mimic.try_act(&eta)?;
            if dist.history_prob(&eta) > 0.0 {
                worst = worst.max(got.action.max_abs_diff(&sigma.act(&eta)));
                compared += 1;
            } else {
                let uniform = crate::model::MixedAction::uniform(m.n_actions());
                worst = worst.max(got.action.max_abs_diff(&uniform));
                fallbacks += 1;
            }
        }
    }
    Ok(CheckReport::bounded("mimic_identity", "max_gap", worst, 1e-12)
        .with_meta("depth", depth)
        .with_meta("compared", compared)
        .with_meta("null_histories", fallbacks))
}
