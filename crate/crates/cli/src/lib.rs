//! Command-line front end. [`run_cli`] parses arguments, runs one
//! subcommand and returns the process exit code: 0 on success, 1 when a
//! verification check fails, 2 on usage, input or numerical errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use stagedur::evaluate::{
    asymptotic_value_estimate, discounted_payoff, longrun_average_exact_fsc, longrun_average_mc,
    DiscountMethod, DEFAULT_LAMBDA_GRID, DEFAULT_RESOLUTION, DEFAULT_SWEEPS,
};
use stagedur::io::{parse_controller, parse_pomdp, serialize_pomdp, write_sweep_csv, SweepRow};
use stagedur::mimic::{controller_joint_law, default_truncation, mimic_action_exact, mimic_action_mc};
use stagedur::model::stage_duration_transform;
use stagedur::verify::{figure1_model, run_suite, Suite, DEFAULT_SEED};
use stagedur::{FiniteStateController, History, MixedAction, PomdpModel, SequenceStrategy, StageDuration, Strategy};

#[derive(Debug, Parser)]
#[command(name = "stagedur", version, about = "POMDPs with a stage duration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a model file.
    Validate { file: PathBuf },
    /// Write the model with stage duration h.
    Transform {
        file: PathBuf,
        #[arg(long)]
        h: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the mimicking strategy's mixed action at a filtered history.
    Mimic {
        file: PathBuf,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        strategy: StrategyArg,
        /// Alternating signal and action names, e.g. "s1 a s1".
        #[arg(long)]
        history: String,
        /// Epoch truncation; defaults to a per-epoch tail of 1e-9.
        #[arg(long)]
        n_max: Option<usize>,
        /// Estimate by rejection sampling with this many samples instead.
        #[arg(long)]
        mc: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a strategy's discounted or long-run average payoff.
    Evaluate {
        file: PathBuf,
        #[arg(long)]
        h: f64,
        #[command(flatten)]
        strategy: StrategyArg,
        #[arg(long, conflicts_with = "average", required_unless_present = "average")]
        lambda: Option<f64>,
        #[arg(long)]
        average: bool,
        /// Monte Carlo with this many trajectories instead of the exact path.
        #[arg(long)]
        mc: Option<usize>,
        #[arg(long, requires = "mc")]
        horizon: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the asymptotic value along a grid of stage durations.
    Sweep {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        h_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the verification suite; exits with 1 if any check fails.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a built-in example model.
    Example {
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct StrategyArg {
    /// `seq:a,b,…` (cyclic), `fsc:<file>` or `uniform`.
    #[arg(long = "strategy")]
    spec: String,
}

/// Strategy resolved against a model; every supported form has a
/// finite-state controller.
struct Resolved {
    strategy: Box<dyn Strategy>,
    controller: FiniteStateController,
    from_file: bool,
}

fn resolve_strategy(spec: &str, m: &PomdpModel) -> anyhow::Result<Resolved> {
    let (strategy, from_file): (Box<dyn Strategy>, bool) = if spec == "uniform" {
        (Box::new(SequenceStrategy::new(vec![MixedAction::uniform(m.n_actions())])?), false)
    } else if let Some(list) = spec.strip_prefix("seq:") {
        let actions = list
            .split(',')
            .map(|a| {
                m.action_index(a.trim())
                    .ok_or_else(|| anyhow!("unknown action '{}' in strategy", a.trim()))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        (Box::new(SequenceStrategy::pure(m.n_actions(), &actions)?), false)
    } else if let Some(path) = spec.strip_prefix("fsc:") {
        let text = read(Path::new(path))?;
        let fsc = parse_controller(&text, m).with_context(|| format!("{path}"))?;
        fsc.check_compatible(m)?;
        (Box::new(fsc), true)
    } else {
        bail!("unknown strategy '{spec}' (expected seq:…, fsc:<file> or uniform)");
    };
    let controller = strategy
        .to_controller(m.n_signals())
        .ok_or_else(|| anyhow!("strategy has no controller form"))?;
    Ok(Resolved {
        strategy,
        controller,
        from_file,
    })
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<PomdpModel> {
    let text = read(path)?;
    parse_pomdp(&text).with_context(|| format!("{}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => out.write_all(text.as_bytes()).context("cannot write output"),
    }
}

fn seed_or_default(seed: Option<u64>) -> u64 {
    seed.unwrap_or(DEFAULT_SEED)
}

enum Outcome {
    Ok,
    ChecksFailed,
}

fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Validate { file } => {
            let m = load_model(&file)?;
            writeln!(
                out,
                "ok: {} states, {} actions, {} signals",
                m.n_states(),
                m.n_actions(),
                m.n_signals()
            )?;
        }
        Command::Transform { file, h, output } => {
            let m = load_model(&file)?;
            let gh = stage_duration_transform(&m, StageDuration::new(h)?);
            write_output(output.as_deref(), &serialize_pomdp(&gh), out)?;
        }
        Command::Mimic {
            file,
            h,
            strategy,
            history,
            n_max,
            mc,
            seed,
        } => {
            let m = load_model(&file)?;
            let h = StageDuration::new(h)?;
            let r = resolve_strategy(&strategy.spec, &m)?;
            let eta = History::parse(&m, &history)?;
            let names = m.action_names();
            if let Some(n) = mc {
                let seed = seed_or_default(seed);
                writeln!(out, "seed: {seed}")?;
                let est = mimic_action_mc(&m, r.strategy.as_ref(), h, &eta, n, seed)?;
                for (a, name) in names.iter().enumerate() {
                    writeln!(out, "{name} {} se={}", est.weights[a], est.std_errors[a])?;
                }
                writeln!(out, "acceptance: {}", est.acceptance_rate())?;
            } else if r.from_file && n_max.is_none() {
                let law = controller_joint_law(&m, &r.controller, h, &eta)?;
                let action = MixedAction::normalized(law.action_masses())
                    .unwrap_or_else(|| MixedAction::uniform(m.n_actions()));
                for (a, name) in names.iter().enumerate() {
                    writeln!(out, "{name} {}", action.weight(a))?;
                }
                writeln!(out, "bound: 0")?;
                writeln!(out, "mass: {}", law.mass())?;
            } else {
                let n_max = n_max.unwrap_or_else(|| default_truncation(h));
                let res = mimic_action_exact(&m, r.strategy.as_ref(), h, &eta, n_max)?;
                for (a, name) in names.iter().enumerate() {
                    writeln!(out, "{name} {}", res.action.weight(a))?;
                }
                writeln!(out, "bound: {:e}", res.bound)?;
                writeln!(out, "mass: {}", res.conditioning_mass)?;
                if !res.reliable {
                    writeln!(out, "warning: conditioning mass is dominated by the truncation bound")?;
                }
                if res.fallback {
                    writeln!(out, "note: null history, uniform fallback")?;
                }
            }
        }
        Command::Evaluate {
            file,
            h,
            strategy,
            lambda,
            average,
            mc,
            horizon,
            seed,
        } => {
            let m = load_model(&file)?;
            let h = StageDuration::new(h)?;
            let r = resolve_strategy(&strategy.spec, &m)?;
            let est = match (average, mc) {
                (true, None) => longrun_average_exact_fsc(&m, &r.controller, h)?,
                (true, Some(n)) => {
                    let seed = seed_or_default(seed);
                    writeln!(out, "seed: {seed}")?;
                    longrun_average_mc(&m, r.strategy.as_ref(), h, horizon.unwrap_or(10_000), n, seed)?
                }
                (false, mc) => {
                    let lambda = lambda.ok_or_else(|| anyhow!("--lambda or --average is required"))?;
                    let method = match mc {
                        None => DiscountMethod::Controller,
                        Some(n) => {
                            let seed = seed_or_default(seed);
                            writeln!(out, "seed: {seed}")?;
                            DiscountMethod::MonteCarlo {
                                n_traj: n,
                                horizon,
                                seed,
                            }
                        }
                    };
                    discounted_payoff(&m, r.strategy.as_ref(), lambda, h, &method)?
                }
            };
            writeln!(out, "value: {}", est.value)?;
            writeln!(out, "mode: {}", est.mode.name())?;
            let diag = est.diag_string();
            if !diag.is_empty() {
                writeln!(out, "diag: {diag}")?;
            }
        }
        Command::Sweep {
            file,
            h_grid,
            lambda_grid,
            resolution,
            csv,
        } => {
            let m = load_model(&file)?;
            let lambdas = lambda_grid.unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
            let mut rows = Vec::with_capacity(h_grid.len());
            for &h in &h_grid {
                let est = asymptotic_value_estimate(&m, StageDuration::new(h)?, &lambdas, resolution, DEFAULT_SWEEPS)?;
                rows.push(SweepRow {
                    h,
                    lambda: est.lambda,
                    value: est.value,
                    mode: est.mode.name().into(),
                    diag: est.diag_string(),
                    seed: None,
                });
            }
            match csv {
                Some(path) => {
                    let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
                    write_sweep_csv(file, &rows)?;
                    writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
                }
                None => write_sweep_csv(&mut *out, &rows)?,
            }
        }
        Command::Verify { suite, seed } => {
            let suite: Suite = suite.parse()?;
            let seed = seed_or_default(seed);
            writeln!(out, "seed: {seed}")?;
            let reports = run_suite(suite, seed);
            let failed = reports.iter().filter(|r| !r.passed).count();
            for r in &reports {
                writeln!(out, "{r}")?;
            }
            writeln!(out, "{} checks, {} failed", reports.len(), failed)?;
            if failed > 0 {
                return Ok(Outcome::ChecksFailed);
            }
        }
        Command::Example { name, output } => {
            let m = match name.as_str() {
                "fig1" | "figure1" => figure1_model(),
                other => bail!("unknown example '{other}' (available: fig1)"),
            };
            write_output(output.as_deref(), &serialize_pomdp(&m), out)?;
        }
    }
    Ok(Outcome::Ok)
}

/// Runs the CLI on `argv` (including the program name) with the given
/// output streams and returns the exit code.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                return 2;
            }
            let _ = out.write_all(text.as_bytes());
            return 0;
        }
    };
    match run(cli, out) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::ChecksFailed) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

/// [`run_cli_with`] on the process's standard streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    code
}
