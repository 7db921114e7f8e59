use rayon::prelude::*;

use super::chain::controller_chain;
use super::discounted::mean_se;
use super::{payoff_center, EstimateMode, PayoffEstimate};
use crate::epoch::{worker_rng, GhSimulator};
use crate::error::{Error, Result};
use crate::model::{stage_duration_transform, PomdpModel, StageDuration};
use crate::strategy::{FiniteStateController, Strategy};

/// Fraction of logged checkpoints used by the liminf proxy.
pub const LIMINF_WINDOW: f64 = 0.2;

/// Number of evenly spaced checkpoints at which Cesàro means are logged.
const CHECKPOINTS: usize = 100;

/// Monte Carlo estimate of `E[(1/T)·Σ_{t≤T} g(ω_t, a_t)]` in `G_h`.
///
/// The liminf proxy is the smallest mean Cesàro average over the trailing
/// 20% of logged checkpoints.
pub fn longrun_average_mc(
    m: &PomdpModel,
    sigma: &dyn Strategy,
    h: StageDuration,
    horizon: usize,
    n_traj: usize,
    seed: u64,
) -> Result<PayoffEstimate> {
    if horizon == 0 || n_traj == 0 {
        return Err(Error::InvalidArgument("horizon and trajectory count must be positive".into()));
    }
    let (center, _) = payoff_center(m);
    let n_checks = CHECKPOINTS.min(horizon);
    let checks: Vec<usize> = (1..=n_checks).map(|i| i * horizon / n_checks).collect();
    let per_traj: Vec<Vec<f64>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = worker_rng(seed, i as u64);
            let mut sim = GhSimulator::new(m, sigma, h, &mut rng);
            let mut sum = 0.0;
            let mut out = Vec::with_capacity(n_checks);
            let mut next = 0;
            for t in 1..=horizon {
                sum += sim.step(&mut rng).payoff - center;
                if t == checks[next] {
                    out.push(sum / t as f64);
                    next += 1;
                }
            }
            out
        })
        .collect();
    let finals: Vec<f64> = per_traj.iter().map(|v| v[n_checks - 1]).collect();
    let (mean, se) = mean_se(&finals);
    let means: Vec<f64> = (0..n_checks)
        .map(|c| per_traj.iter().map(|v| v[c]).sum::<f64>() / n_traj as f64)
        .collect();
    let mut est = PayoffEstimate::new(
        center + mean,
        EstimateMode::MonteCarlo {
            std_error: se,
            samples: n_traj,
        },
    );
    est.horizon = Some(horizon);
    est.liminf_proxy = Some(center + crate::verify::liminf_trailing(&means, LIMINF_WINDOW));
    Ok(est)
}

/// Exact long-run average of a controller in `G_h` via the product chain
/// on `Ω × Q`.
pub fn longrun_average_exact_fsc(
    m: &PomdpModel,
    controller: &FiniteStateController,
    h: StageDuration,
) -> Result<PayoffEstimate> {
    controller.check_compatible(m)?;
    let (center, _) = payoff_center(m);
    let gh = stage_duration_transform(m, h);
    let chain = controller_chain(&gh, controller, center);
    let gain = chain.average()?;
    Ok(PayoffEstimate::exact(center + chain.expect(&gain)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, RawModel};

    fn two_cycle() -> PomdpModel {
        let names = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect();
        let mut raw = RawModel::with_names(names(&["x", "y"]), names(&["go"]), names(&["s"]));
        raw.signal_map = vec![Some(0), Some(0)];
        raw.payoff = vec![vec![1.0], vec![0.0]];
        raw.transition = vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]];
        raw.init = vec![1.0, 0.0];
        validate_model(raw).unwrap()
    }

    #[test]
    fn cycling_chain_averages_half() {
        let m = two_cycle();
        let fsc = crate::strategy::SequenceStrategy::pure(1, &[0]).unwrap().to_controller(1).unwrap();
        for h in [1.0, 0.3] {
            let v = longrun_average_exact_fsc(&m, &fsc, StageDuration::new(h).unwrap()).unwrap();
            assert!((v.value - 0.5).abs() < 1e-12);
        }
        let mc = longrun_average_mc(&m, &fsc, StageDuration::ONE, 1000, 4, 1).unwrap();
        assert_eq!(mc.value, 0.5);
    }

    #[test]
    fn constant_payoff() {
        let m = two_cycle().with_payoff(|_, _| 0.7).unwrap();
        let fsc = crate::strategy::SequenceStrategy::pure(1, &[0]).unwrap();
        let mc = longrun_average_mc(&m, &fsc, StageDuration::new(0.5).unwrap(), 333, 3, 9).unwrap();
        assert_eq!(mc.value, 0.7);
        assert_eq!(mc.liminf_proxy, Some(0.7));
    }
}
