//! Command-line front end: experiment runs, invariant checks and the
//! momentum schedule calculator.

pub mod config;
pub mod experiment;
pub mod svg;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cubic_momentum::checks::{self, Failure, Solver, Suite};
use cubic_momentum::cubic::solve_cubic;
use cubic_momentum::estimators::{bias_condition, make_schedule, ScheduleSource};
use cubic_momentum::problems::ProblemConstants;

use crate::config::{ExperimentSpec, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "cubic-momentum",
    version,
    about = "Stochastic cubic Newton with momentum"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment over methods and seeds.
    Run(RunArgs),
    /// Run a randomized invariant suite.
    Check(CheckArgs),
    /// Compute momentum parameters from problem constants.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Seed list such as `1,2,5..8`; overrides the file.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory; overrides the file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write `loss.svg` and `grad_norm.svg`.
    #[arg(long)]
    pub svg: bool,
    /// Extra `key=value` override, applied after the file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Cubic,
    Step,
    Estimators,
    All,
}

impl SuiteArg {
    fn suites(self) -> Vec<Suite> {
        match self {
            SuiteArg::Cubic => vec![Suite::Cubic],
            SuiteArg::Step => vec![Suite::Step],
            SuiteArg::Estimators => vec![Suite::Estimators],
            SuiteArg::All => Suite::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, value_enum, required_unless_present = "replay")]
    pub suite: Option<SuiteArg>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for replay files of failing instances.
    #[arg(long, default_value = ".")]
    pub replay_dir: PathBuf,
    /// Re-run the failures stored in a replay file.
    #[arg(long, conflicts_with = "suite")]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Hessian Lipschitz constant.
    #[arg(long = "L")]
    pub l: f64,
    /// Gradient Lipschitz constant.
    #[arg(long = "Lg", default_value_t = 1.0)]
    pub l_grad: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_g: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_h: f64,
    /// Defaults to `sigma_h`.
    #[arg(long)]
    pub delta_h: Option<f64>,
    /// Initial gradient noise relative to `sigma_g`.
    #[arg(long, default_value_t = 1.0)]
    pub a_g: f64,
    /// Initial Hessian noise relative to `sigma_h`.
    #[arg(long, default_value_t = 1.0)]
    pub a_h: f64,
    /// Horizon.
    #[arg(long = "T")]
    pub horizon: usize,
    /// Cubic regularization.
    #[arg(long = "M")]
    pub m: f64,
    #[arg(long, default_value = "main_it")]
    pub source: String,
}

/// Dispatches a parsed command line and returns the process exit code.
/// Errors are reported on `err`.
pub fn run_cli(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Check(args) => match &args.replay {
            Some(path) => cmd_replay(path, &solve_cubic, out),
            None => cmd_check(&args, &solve_cubic, out),
        },
        Command::Schedule(args) => cmd_schedule(&args, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

/// Resolves the configuration file plus command-line overrides.
pub fn load_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut settings =
        Settings::parse(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    for o in &args.overrides {
        settings.apply_override(o)?;
    }
    if let Some(s) = &args.seeds {
        settings.set("seeds", s);
    }
    if let Some(o) = &args.out {
        settings.set("out", &o.to_string_lossy());
    }
    if args.svg {
        settings.set("svg", "true");
    }
    Ok(ExperimentSpec::from_settings(&settings)?)
}

/// Exit 0 iff every run finished.
pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = load_spec(args)?;
    let problem = experiment::build_problem(&spec)?;
    experiment::validate(&spec, &problem)?;
    let threads = experiment::thread_budget()?;
    let outcomes = experiment::execute(&spec, &problem, threads);
    let summary = experiment::write_outputs(&spec, &problem, &outcomes)?;
    for (label, f, g) in &summary.finals {
        let show = |v: &Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        writeln!(
            out,
            "{label}: median final f = {}, median final grad norm = {}",
            show(f),
            show(g)
        )?;
    }
    for (label, seed, msg) in &summary.aborted {
        writeln!(out, "aborted {label} seed {seed}: {msg}")?;
    }
    writeln!(
        out,
        "wrote {} files to {}",
        summary.written.len(),
        spec.out_dir.display()
    )?;
    Ok(if summary.aborted.is_empty() { 0 } else { 1 })
}

pub fn replay_path(dir: &Path, suite: Suite, seed: u64) -> PathBuf {
    dir.join(format!("replay_{}_seed{seed}.json", suite.name()))
}

/// Exit 0 iff every property holds on every trial.
pub fn cmd_check(args: &CheckArgs, solver: Solver, out: &mut dyn Write) -> Result<i32> {
    if args.trials == 0 {
        bail!("--trials must be >= 1");
    }
    let suite = args.suite.context("--suite is required")?;
    let mut code = 0;
    for s in suite.suites() {
        let report = checks::run_suite_with(s, args.trials, args.seed, solver);
        writeln!(out, "[{}]", s.name())?;
        for line in report.summary_lines() {
            writeln!(out, "{line}")?;
        }
        if !report.all_passed() {
            code = 1;
            fs::create_dir_all(&args.replay_dir)?;
            let path = replay_path(&args.replay_dir, s, args.seed);
            fs::write(&path, serde_json::to_string_pretty(&report.failures)?)
                .with_context(|| format!("writing {}", path.display()))?;
            let first = &report.failures[0];
            writeln!(
                out,
                "{} failure(s); first: {} trial {}: {}",
                report.failures.len(),
                first.property,
                first.trial,
                first.message
            )?;
            writeln!(out, "replay file: {}", path.display())?;
        }
    }
    Ok(code)
}

/// Re-runs stored failures; exit 0 iff all of them now pass.
pub fn cmd_replay(path: &Path, solver: Solver, out: &mut dyn Write) -> Result<i32> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let failures: Vec<Failure> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut code = 0;
    for f in &failures {
        let report = checks::replay_failure(f, solver);
        let verdict = if report.all_passed() { "pass" } else { "FAIL" };
        if !report.all_passed() {
            code = 1;
        }
        writeln!(
            out,
            "{} seed {} trial {} ({}): {verdict}",
            f.suite.name(),
            f.seed,
            f.trial,
            f.property
        )?;
        for failure in &report.failures {
            writeln!(out, "  {}: {}", failure.property, failure.message)?;
        }
    }
    Ok(code)
}

/// Exit 1 when the schedule is rejected, or when the main schedule
/// violates the bias condition.
pub fn cmd_schedule(args: &ScheduleArgs, out: &mut dyn Write) -> Result<i32> {
    let source: ScheduleSource = args.source.parse()?;
    let mut k = ProblemConstants::new(
        args.l,
        args.l_grad,
        args.sigma_g,
        args.sigma_h,
        args.delta_h.unwrap_or(args.sigma_h),
    );
    k.sigma_g0 = args.a_g * args.sigma_g;
    k.sigma_h0 = args.a_h * args.sigma_h;
    let schedule = match make_schedule(&k, args.horizon, args.m, source) {
        Ok(s) => s,
        Err(e) => {
            writeln!(out, "error: {e}")?;
            return Ok(1);
        }
    };
    let lhs = bias_condition(args.l, args.m, schedule.alpha, schedule.beta);
    writeln!(out, "source = {}", source.name())?;
    writeln!(out, "alpha = {:.6e}", schedule.alpha)?;
    writeln!(out, "beta = {:.6e}", schedule.beta)?;
    writeln!(out, "a_g = {:.6e}", schedule.a_g)?;
    writeln!(out, "a_h = {:.6e}", schedule.a_h)?;
    let holds = lhs <= 0.0;
    writeln!(
        out,
        "bias condition lhs = {lhs:.6e} ({})",
        if holds { "holds" } else { "violated" }
    )?;
    Ok(if source == ScheduleSource::MainIt && !holds {
        1
    } else {
        0
    })
}
