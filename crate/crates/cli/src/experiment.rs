//! Runs every (method, seed) pair of an experiment and writes per-run
//! traces, per-method medians, charts and metadata.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use cubic_momentum::dataio::{read_libsvm_file, subsample, synth_logistic, Dataset};
use cubic_momentum::engine::{
    run, EngineError, Method, Momentum, OutputSet, RunConfig, RunTrace, CSV_HEADER,
};
use cubic_momentum::problems::Problem;

use crate::config::{DataSource, ExperimentSpec, ProblemKind};
use crate::svg::{self, Chart, Series};

/// Caps the number of worker threads; `0` runs everything on the caller.
pub const THREADS_ENV: &str = "CUBIC_MOMENTUM_THREADS";

pub fn load_dataset(data: &DataSource) -> Result<Dataset> {
    match data {
        DataSource::Synthetic { n, d, seed, noise } => {
            synth_logistic(*n, *d, *seed, *noise).context("generating synthetic data")
        }
        DataSource::LibSvm {
            path,
            subsample: k,
            subsample_seed,
        } => {
            let ds = read_libsvm_file(path, None)
                .with_context(|| format!("reading dataset {}", path.display()))?;
            match k {
                Some(k) if *k < ds.n() => {
                    subsample(&ds, *k, *subsample_seed).context("subsampling dataset")
                }
                _ => Ok(ds),
            }
        }
    }
}

pub fn build_problem(spec: &ExperimentSpec) -> Result<Problem> {
    let data = Arc::new(load_dataset(&spec.data)?);
    let p = match spec.problem {
        ProblemKind::LogisticNonconvex => Problem::logistic_nonconvex(data, spec.lambda_reg),
        ProblemKind::LogisticConvex => Problem::logistic_convex(data, spec.lambda_reg),
    };
    p.context("building problem")
}

#[derive(Debug)]
pub struct RunOutcome {
    pub label: String,
    pub seed: u64,
    pub result: Result<RunTrace, EngineError>,
}

/// Thread count from [`THREADS_ENV`]; defaults to the available cores.
pub fn thread_budget() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV} = `{v}` is not a non-negative integer")),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Executes all runs, in method-major then seed order in the result.
pub fn execute(spec: &ExperimentSpec, problem: &Problem, threads: usize) -> Vec<RunOutcome> {
    let jobs: Vec<(&str, &RunConfig, u64)> = spec
        .methods
        .iter()
        .flat_map(|m| {
            spec.seeds
                .iter()
                .map(move |&s| (m.label.as_str(), &m.config, s))
        })
        .collect();
    let one = |&(label, config, seed): &(&str, &RunConfig, u64)| RunOutcome {
        label: label.to_string(),
        seed,
        result: run(
            problem,
            &RunConfig {
                seed,
                ..config.clone()
            },
            spec.constants.as_ref(),
        ),
    };
    if threads <= 1 {
        return jobs.iter().map(one).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunOutcome>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.min(jobs.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let outcome = one(job);
                slots.lock().expect("no worker panicked")[k] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}

pub fn run_csv_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

pub fn aborted_csv_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}_aborted.csv")
}

pub fn median_csv_name(label: &str) -> String {
    format!("{label}_median.csv")
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Per-state medians over traces of equal length and draw accounting.
/// Columns follow [`CSV_HEADER`]; a cell is empty when no trace has it.
pub fn median_csv(traces: &[&RunTrace]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let Some(first) = traces.first() else {
        return out;
    };
    let rows = traces.iter().map(|t| t.records.len()).min().unwrap_or(0);
    for k in 0..rows {
        let base = &first.records[k];
        let _ = write!(out, "{},{}", base.t, base.oracle_draws);
        let columns: [fn(&cubic_momentum::engine::TraceRecord) -> Option<f64>; 8] = [
            |r| Some(r.f),
            |r| r.grad_norm,
            |r| r.lambda_min,
            |r| r.mu,
            |r| r.r_t,
            |r| r.eps_norm,
            |r| r.sigma_norm,
            |r| r.gamma,
        ];
        for col in columns {
            let mut vals: Vec<f64> = traces.iter().filter_map(|t| col(&t.records[k])).collect();
            out.push(',');
            if let Some(m) = median(&mut vals) {
                let _ = write!(out, "{m:e}");
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Default)]
pub struct Summary {
    pub written: Vec<PathBuf>,
    /// `(label, seed, message)` of runs that did not finish.
    pub aborted: Vec<(String, u64, String)>,
    /// `(label, median final f, median final gradient norm)`.
    pub finals: Vec<(String, Option<f64>, Option<f64>)>,
}

fn write_file(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(())
}

fn metadata(spec: &ExperimentSpec, problem: &Problem) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "problem = {}", spec.problem.name());
    let _ = writeln!(m, "lambda_reg = {}", spec.lambda_reg);
    if !spec.lambda_reg_given {
        let _ = writeln!(
            m,
            "# lambda_reg is a stand-in default, not a tuned or published value"
        );
    }
    match &spec.data {
        DataSource::Synthetic { n, d, seed, noise } => {
            let _ = writeln!(m, "data = synthetic n={n} d={d} seed={seed} noise={noise}");
        }
        DataSource::LibSvm {
            path,
            subsample,
            subsample_seed,
        } => {
            let _ = writeln!(m, "data = libsvm {}", path.display());
            if let Some(k) = subsample {
                let _ = writeln!(m, "subsample = {k} (seed {subsample_seed})");
            }
        }
    }
    let _ = writeln!(m, "# preprocessing: none, features are used as given");
    let _ = writeln!(m, "n = {}", problem.n_samples());
    let _ = writeln!(m, "dim = {}", problem.dim());
    let seeds: Vec<String> = spec.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(m, "seeds = {}", seeds.join(","));
    for method in &spec.methods {
        for (key, value) in run_settings(&method.config) {
            let _ = writeln!(m, "{}.{key} = {value}", method.label);
        }
    }
    m
}

/// Config-file keys describing one method (the seed varies per run).
fn run_settings(c: &RunConfig) -> Vec<(&'static str, String)> {
    let mut v = vec![
        ("method", c.method.name().to_string()),
        ("iterations", c.iterations.to_string()),
        ("batch_g", c.batch_g.to_string()),
        ("batch_h", c.batch_h.to_string()),
        ("initial_batch", c.initial_batch().to_string()),
        ("split_sampling", c.split_sampling.to_string()),
        ("exact_oracle", c.exact_oracle.to_string()),
        ("record_every", c.record_full_metrics_every.to_string()),
        (
            "output_set",
            match c.output_set {
                OutputSet::WithInitial => "with_initial",
                OutputSet::ExcludeInitial => "exclude_initial",
            }
            .to_string(),
        ),
    ];
    match c.method {
        Method::Sgd => v.push(("sgd_step", c.sgd_step.to_string())),
        Method::ScnPlain => v.push(("M", c.m.to_string())),
        Method::Scnm => {
            v.push(("M", c.m.to_string()));
            v.push(("grad_variant", c.grad_variant.name().to_string()));
            match c.momentum {
                Momentum::Manual { alpha, beta } => {
                    v.push(("alpha", alpha.to_string()));
                    v.push(("beta", beta.to_string()));
                }
                Momentum::Schedule(src) => v.push(("schedule", src.name().to_string())),
            }
        }
    }
    v
}

/// Writes run CSVs, medians, optional charts and `metadata.txt`.
pub fn write_outputs(
    spec: &ExperimentSpec,
    problem: &Problem,
    outcomes: &[RunOutcome],
) -> Result<Summary> {
    let dir = &spec.out_dir;
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut summary = Summary::default();
    write_file(
        dir,
        "metadata.txt",
        &metadata(spec, problem),
        &mut summary.written,
    )?;
    let mut loss = Vec::new();
    let mut grad = Vec::new();
    for method in &spec.methods {
        let mut done = Vec::new();
        for o in outcomes.iter().filter(|o| o.label == method.label) {
            match &o.result {
                Ok(trace) => {
                    write_file(
                        dir,
                        &run_csv_name(&o.label, o.seed),
                        &trace.to_csv(),
                        &mut summary.written,
                    )?;
                    done.push(trace);
                }
                Err(e) => {
                    if let EngineError::Diverged { partial, .. } = e {
                        write_file(
                            dir,
                            &aborted_csv_name(&o.label, o.seed),
                            &partial.to_csv(),
                            &mut summary.written,
                        )?;
                    }
                    summary
                        .aborted
                        .push((o.label.clone(), o.seed, e.to_string()));
                }
            }
        }
        if done.is_empty() {
            summary.finals.push((method.label.clone(), None, None));
            continue;
        }
        write_file(
            dir,
            &median_csv_name(&method.label),
            &median_csv(&done),
            &mut summary.written,
        )?;
        let rows = done.iter().map(|t| t.records.len()).min().unwrap_or(0);
        let med = |k: usize, col: &dyn Fn(&cubic_momentum::engine::TraceRecord) -> Option<f64>| {
            let mut v: Vec<f64> = done.iter().filter_map(|t| col(&t.records[k])).collect();
            median(&mut v)
        };
        let draws = |k: usize| done[0].records[k].oracle_draws as f64;
        let f_med: Vec<(f64, f64)> = (0..rows)
            .filter_map(|k| med(k, &|r| Some(r.f)).map(|v| (draws(k), v)))
            .collect();
        let g_med: Vec<(f64, f64)> = (0..rows)
            .filter_map(|k| med(k, &|r| r.grad_norm).map(|v| (draws(k), v)))
            .collect();
        summary.finals.push((
            method.label.clone(),
            med(rows - 1, &|r| Some(r.f)),
            med(rows - 1, &|r| r.grad_norm),
        ));
        loss.push(Series {
            label: method.label.clone(),
            points: f_med,
        });
        grad.push(Series {
            label: method.label.clone(),
            points: g_med,
        });
    }
    if spec.svg {
        let f_best = loss
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .fold(f64::INFINITY, f64::min);
        // the best point itself would sit at zero on the log axis
        let floor = 1e-16 * f_best.abs().max(1.0);
        for s in &mut loss {
            for p in &mut s.points {
                p.1 = (p.1 - f_best).max(floor);
            }
        }
        let loss_chart = Chart {
            title: "median f - f_best",
            x_label: "oracle draws",
            y_label: "f - f_best (log)",
            log_y: true,
        };
        let grad_chart = Chart {
            title: "median gradient norm",
            x_label: "oracle draws",
            y_label: "|grad f| (log)",
            log_y: true,
        };
        write_file(
            dir,
            "loss.svg",
            &svg::render(&loss_chart, &loss),
            &mut summary.written,
        )?;
        write_file(
            dir,
            "grad_norm.svg",
            &svg::render(&grad_chart, &grad),
            &mut summary.written,
        )?;
    }
    Ok(summary)
}

/// Validates every method against the problem before any run starts.
pub fn validate(spec: &ExperimentSpec, problem: &Problem) -> Result<()> {
    if spec.seeds.is_empty() {
        bail!("seed list is empty");
    }
    for m in &spec.methods {
        m.config
            .validate(problem.dim())
            .with_context(|| format!("method `{}`", m.label))?;
    }
    Ok(())
}
