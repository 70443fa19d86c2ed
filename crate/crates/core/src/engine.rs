//! The optimization loop (stochastic cubic Newton with momentum), its
//! baselines, trace recording, and the one-step progress checker.

use std::fmt::Write as _;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cubic::{self, CubicError, CubicModel, CubicStepResult};
use crate::estimators::{
    make_schedule, EstimatorError, GradEstimator, GradVariant, HessEstimator, MomentumRate,
    SampleOracle, Schedule, ScheduleError, ScheduleSource,
};
use crate::numkit::{self, LinalgError, SymMatrix, Vector};
use crate::problems::{estimate_constants, Batch, Problem, ProblemConstants, ProblemError};

/// Exact trace CSV header.
pub const CSV_HEADER: &str =
    "t,oracle_draws,f,grad_norm,lambda_min,mu_M,r_t,eps_norm,sigma_norm,gamma";

/// Iterates whose value exceeds `f(x_0)` by more than this abort the run.
pub const DIVERGENCE_GAP: f64 = 1e12;

/// Iterations of the full-batch run behind [`reference_minimum`].
pub const REFERENCE_ITERATIONS: usize = 500;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Cubic(#[from] CubicError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("run diverged at t = {t}: {reason}")]
    Diverged {
        t: usize,
        reason: String,
        partial: Box<RunTrace>,
    },
    #[error("reference value is not a lower bound: f(x_{t}) - f* = {gap:e}")]
    InvalidReference { t: usize, gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Cubic Newton with gradient and Hessian momentum.
    Scnm,
    /// Cubic Newton on raw mini-batch estimates (`alpha = beta = 1`).
    ScnPlain,
    /// Mini-batch SGD with a constant step.
    Sgd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Scnm => "scnm",
            Method::ScnPlain => "scn",
            Method::Sgd => "sgd",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scnm" => Ok(Method::Scnm),
            "scn" | "scn_plain" => Ok(Method::ScnPlain),
            "sgd" => Ok(Method::Sgd),
            other => Err(EngineError::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Candidate set for the returned point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputSet {
    /// `x_0, ..., x_T`.
    WithInitial,
    /// `x_1, ..., x_T` (falls back to `x_0` when `T = 0`).
    ExcludeInitial,
}

/// Where the momentum parameters come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Momentum {
    Manual {
        alpha: f64,
        beta: f64,
    },
    /// Derived from problem constants; the gradient variant follows the source.
    Schedule(ScheduleSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of steps `T`; the trace holds `T + 1` states.
    pub iterations: usize,
    /// Cubic regularization `M`.
    pub m: f64,
    pub method: Method,
    /// Gradient estimator for manual momentum.
    pub grad_variant: GradVariant,
    pub momentum: Momentum,
    pub batch_g: usize,
    pub batch_h: usize,
    /// Size of the batch behind `g_0`, `H_0`; `None` means `batch_g`.
    pub initial_batch: Option<usize>,
    /// Draw Hessian samples independently of gradient samples. When false
    /// the Hessian uses the first `batch_h` samples of the gradient batch.
    pub split_sampling: bool,
    /// Use exact full-batch derivatives instead of sampling.
    pub exact_oracle: bool,
    pub seed: u64,
    pub sgd_step: f64,
    pub record_full_metrics_every: usize,
    pub output_set: OutputSet,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            m: 1.0,
            method: Method::Scnm,
            grad_variant: GradVariant::It,
            momentum: Momentum::Manual {
                alpha: 0.1,
                beta: 0.01,
            },
            batch_g: 1,
            batch_h: 1,
            initial_batch: None,
            split_sampling: false,
            exact_oracle: false,
            seed: 0,
            sgd_step: 0.1,
            record_full_metrics_every: 1,
            output_set: OutputSet::WithInitial,
            x0: None,
        }
    }
}

impl RunConfig {
    pub fn initial_batch(&self) -> usize {
        self.initial_batch.unwrap_or(self.batch_g)
    }

    pub fn validate(&self, dim: usize) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::Config(msg));
        if self.batch_g == 0 || self.batch_h == 0 || self.initial_batch() == 0 {
            return bad("batch sizes must be >= 1".into());
        }
        if !self.split_sampling && self.batch_h > self.batch_g && !self.exact_oracle {
            return bad(format!(
                "shared sampling needs batch_h <= batch_g (got {} > {})",
                self.batch_h, self.batch_g
            ));
        }
        if self.record_full_metrics_every == 0 {
            return bad("record_full_metrics_every must be >= 1".into());
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != dim {
                return bad(format!("x0 has dimension {}, problem has {dim}", x0.len()));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return bad("x0 is not finite".into());
            }
        }
        match self.method {
            Method::Sgd => {
                if !(self.sgd_step >= 0.0 && self.sgd_step.is_finite()) {
                    return bad(format!("sgd_step = {} must be >= 0", self.sgd_step));
                }
            }
            Method::Scnm | Method::ScnPlain => {
                if !(self.m > 0.0 && self.m.is_finite()) {
                    return bad(format!("M = {} must be positive", self.m));
                }
                if let (Method::Scnm, Momentum::Manual { alpha, beta }) =
                    (self.method, self.momentum)
                {
                    for (name, v) in [("alpha", alpha), ("beta", beta)] {
                        if !(v > 0.0 && v <= 1.0) {
                            return bad(format!("{name} = {v} outside (0, 1]"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// One state of a run. Columns that are not computed for this state are
/// `None`: full-oracle metrics outside the recording stride, and step or
/// estimator quantities for the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    /// Data points consumed to produce `x_t`.
    pub oracle_draws: u64,
    pub f: f64,
    pub grad_norm: Option<f64>,
    pub lambda_min: Option<f64>,
    pub mu: Option<f64>,
    /// `|x_{t+1} - x_t|`.
    pub r_t: Option<f64>,
    /// `|g_t - grad f(x_t)|`.
    pub eps_norm: Option<f64>,
    /// Spectral norm of `H_t - hess f(x_t)`.
    pub sigma_norm: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: Method,
    pub schedule: Option<Schedule>,
    pub records: Vec<TraceRecord>,
    pub iterates: Vec<Vector>,
    pub output_index: usize,
}

impl RunTrace {
    pub fn output(&self) -> &Vector {
        &self.iterates[self.output_index]
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace holds x_0")
    }

    pub fn total_draws(&self) -> u64 {
        self.last().oracle_draws
    }

    pub fn f_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f).collect()
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_csv().as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{:e}", r.t, r.oracle_draws, r.f);
            for v in [
                r.grad_norm,
                r.lambda_min,
                r.mu,
                r.r_t,
                r.eps_norm,
                r.sigma_norm,
                r.gamma,
            ] {
                out.push(',');
                if let Some(v) = v {
                    let _ = write!(out, "{v:e}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Estimator state handed to observers after each step's estimates exist.
pub struct IterationView<'a> {
    pub t: usize,
    pub x: &'a Vector,
    pub g: &'a Vector,
    pub h: Option<&'a SymMatrix>,
    pub step: Option<&'a CubicStepResult>,
}

/// Sampling oracle owned by one run.
struct RunOracle<'a> {
    problem: &'a Problem,
    rng: ChaCha8Rng,
    exact: bool,
    size: usize,
}

impl RunOracle<'_> {
    fn draw_sized(&mut self, size: usize) -> Batch {
        if self.exact {
            Batch::all(self.problem.n_samples())
        } else {
            Batch::draw(&mut self.rng, self.problem.n_samples(), size)
        }
    }
}

impl SampleOracle for RunOracle<'_> {
    type Sample = Batch;

    fn draw(&mut self) -> Batch {
        self.draw_sized(self.size)
    }

    fn draw_cost(&self, sample: &Batch) -> usize {
        sample.len()
    }

    fn gradient(&mut self, sample: &Batch, x: &[f64]) -> Vector {
        self.problem.sample_gradient(x, sample)
    }

    fn hessian(&mut self, sample: &Batch, x: &[f64]) -> SymMatrix {
        self.problem.sample_hessian(x, sample)
    }
}

fn sampling_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for the output-point draw; independent of the sampling stream.
pub fn output_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Resolves the momentum schedule of a cubic Newton run. Missing constants
/// are estimated at `x0` with three probes; their initial noise levels assume
/// the configured initial batch.
pub fn resolve_schedule(
    problem: &Problem,
    config: &RunConfig,
    constants: Option<&ProblemConstants>,
) -> Result<(Schedule, GradVariant), EngineError> {
    let t = config.iterations.max(1);
    match (config.method, config.momentum) {
        (Method::Sgd, _) => Err(EngineError::Config("SGD has no momentum schedule".into())),
        (Method::ScnPlain, _) => Ok((Schedule::manual(1.0, 1.0, config.m, t)?, GradVariant::Hb)),
        (Method::Scnm, Momentum::Manual { alpha, beta }) => Ok((
            Schedule::manual(alpha, beta, config.m, t)?,
            config.grad_variant,
        )),
        (Method::Scnm, Momentum::Schedule(source)) => {
            let k = match constants {
                Some(k) => *k,
                None => {
                    let x0 = start_point(problem, config);
                    estimate_constants(problem, &x0, 3, config.seed)?
                        .with_initial_batch(config.initial_batch())
                }
            };
            Ok((make_schedule(&k, t, config.m, source)?, source.variant()))
        }
    }
}

fn start_point(problem: &Problem, config: &RunConfig) -> Vector {
    config
        .x0
        .clone()
        .map(Vector::from)
        .unwrap_or_else(|| Vector::zeros(problem.dim()))
}

/// Runs the configured method (`Scnm`, `ScnPlain`, or `Sgd`).
pub fn run(
    problem: &Problem,
    config: &RunConfig,
    constants: Option<&ProblemConstants>,
) -> Result<RunTrace, EngineError> {
    match config.method {
        Method::Sgd => run_sgd(problem, config),
        _ => run_scnm(problem, config, constants),
    }
}

/// Cubic Newton with momentum (or without, for [`Method::ScnPlain`]).
pub fn run_scnm(
    problem: &Problem,
    config: &RunConfig,
    constants: Option<&ProblemConstants>,
) -> Result<RunTrace, EngineError> {
    run_scnm_observed(problem, config, constants, &mut |_| {})
}

/// [`run_scnm`] calling `observer` once per step with the estimates used.
pub fn run_scnm_observed(
    problem: &Problem,
    config: &RunConfig,
    constants: Option<&ProblemConstants>,
    observer: &mut dyn FnMut(&IterationView),
) -> Result<RunTrace, EngineError> {
    if config.method == Method::Sgd {
        return Err(EngineError::Config(
            "run_scnm called with the SGD method".into(),
        ));
    }
    config.validate(problem.dim())?;
    let (schedule, variant) = resolve_schedule(problem, config, constants)?;
    let mut gest = GradEstimator::with_rate(variant, MomentumRate::constant(schedule.alpha)?);
    let mut hest = HessEstimator::with_rate(MomentumRate::constant(schedule.beta)?);
    let mut oracle = RunOracle {
        problem,
        rng: sampling_rng(config.seed),
        exact: config.exact_oracle,
        size: config.batch_g,
    };
    let mut rec = Recorder::new(problem, config, Some(schedule));
    let mut x = start_point(problem, config);
    rec.start(&x)?;

    for t in 0..config.iterations {
        let size = if t == 0 {
            config.initial_batch()
        } else {
            config.batch_g
        };
        let gsample = oracle.draw_sized(size);
        let mut cost = gsample.len();
        let hsample = if t == 0 || config.exact_oracle {
            gsample.clone()
        } else if config.split_sampling {
            let b = oracle.draw_sized(config.batch_h);
            cost += b.len();
            b
        } else {
            Batch {
                indices: gsample.indices[..config.batch_h].to_vec(),
            }
        };
        let h = hest.update_with(&x, &mut oracle, &hsample);
        let g = gest.update_with(&x, &mut oracle, &gsample, Some(&h))?;
        if !g.is_finite() || !h.is_finite() {
            return Err(rec.diverged(t, "non-finite estimate"));
        }
        let model = CubicModel::new(g.clone(), h.clone(), schedule.m)?;
        let step = cubic::solve_cubic(&model)?;
        observer(&IterationView {
            t,
            x: &x,
            g: &g,
            h: Some(&h),
            step: Some(&step),
        });
        rec.finish_step(t, &x, &g, Some(&h), &step.s, Some(step.gamma))?;
        x.axpy(1.0, &step.s);
        rec.push_state(t + 1, &x, cost as u64)?;
    }
    Ok(rec.into_trace())
}

/// Mini-batch SGD `x_{t+1} = x_t - eta * g_t` with the same trace schema.
pub fn run_sgd(problem: &Problem, config: &RunConfig) -> Result<RunTrace, EngineError> {
    config.validate(problem.dim())?;
    let mut oracle = RunOracle {
        problem,
        rng: sampling_rng(config.seed),
        exact: config.exact_oracle,
        size: config.batch_g,
    };
    let config = &RunConfig {
        method: Method::Sgd,
        ..config.clone()
    };
    let mut rec = Recorder::new(problem, config, None);
    let mut x = start_point(problem, config);
    rec.start(&x)?;
    for t in 0..config.iterations {
        let size = if t == 0 {
            config.initial_batch()
        } else {
            config.batch_g
        };
        let batch = oracle.draw_sized(size);
        let g = oracle.gradient(&batch, &x);
        if !g.is_finite() {
            return Err(rec.diverged(t, "non-finite gradient"));
        }
        let s = g.scaled(-config.sgd_step);
        rec.finish_step(t, &x, &g, None, &s, None)?;
        x.axpy(1.0, &s);
        rec.push_state(t + 1, &x, batch.len() as u64)?;
    }
    Ok(rec.into_trace())
}

/// Builds the trace as a run advances.
struct Recorder<'a> {
    problem: &'a Problem,
    config: &'a RunConfig,
    trace: RunTrace,
    f0: f64,
    draws: u64,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a Problem, config: &'a RunConfig, schedule: Option<Schedule>) -> Self {
        Self {
            problem,
            config,
            trace: RunTrace {
                method: config.method,
                schedule,
                records: Vec::with_capacity(config.iterations + 1),
                iterates: Vec::with_capacity(config.iterations + 1),
                output_index: 0,
            },
            f0: f64::NAN,
            draws: 0,
        }
    }

    fn records_full(&self, t: usize) -> bool {
        t % self.config.record_full_metrics_every == 0 || t == self.config.iterations
    }

    fn start(&mut self, x0: &Vector) -> Result<(), EngineError> {
        self.push_state(0, x0, 0)
    }

    fn push_state(&mut self, t: usize, x: &Vector, cost: u64) -> Result<(), EngineError> {
        self.draws += cost;
        let f = self.problem.full_value(x);
        if t == 0 {
            self.f0 = f;
        }
        let mut rec = TraceRecord {
            t,
            oracle_draws: self.draws,
            f,
            grad_norm: None,
            lambda_min: None,
            mu: None,
            r_t: None,
            eps_norm: None,
            sigma_norm: None,
            gamma: None,
        };
        let finite = x.is_finite() && f.is_finite();
        if finite && self.records_full(t) {
            let grad_norm = self.problem.full_gradient(x).norm();
            let (lambda_min, _) = numkit::min_eigenvalue(&self.problem.full_hessian(x))?;
            rec.grad_norm = Some(grad_norm);
            rec.lambda_min = Some(lambda_min);
            if self.config.method != Method::Sgd {
                rec.mu = Some(cubic::mu_from_parts(grad_norm, lambda_min, self.config.m));
            }
        }
        self.trace.records.push(rec);
        self.trace.iterates.push(x.clone());
        if !finite {
            return Err(self.diverged(t, "non-finite iterate"));
        }
        if f > self.f0 + DIVERGENCE_GAP {
            return Err(self.diverged(t, &format!("f = {f:e} exceeds f(x_0) + {DIVERGENCE_GAP:e}")));
        }
        Ok(())
    }

    fn finish_step(
        &mut self,
        t: usize,
        x: &Vector,
        g: &Vector,
        h: Option<&SymMatrix>,
        s: &Vector,
        gamma: Option<f64>,
    ) -> Result<(), EngineError> {
        let full = self.records_full(t);
        let rec = self.trace.records.last_mut().expect("state t was pushed");
        rec.r_t = Some(s.norm());
        rec.gamma = gamma;
        if full {
            rec.eps_norm = Some(g.sub(&self.problem.full_gradient(x)).norm());
            if let Some(h) = h {
                rec.sigma_norm = Some(h.sub(&self.problem.full_hessian(x)).spectral_norm()?);
            }
        }
        Ok(())
    }

    fn diverged(&mut self, t: usize, reason: &str) -> EngineError {
        EngineError::Diverged {
            t,
            reason: reason.to_string(),
            partial: Box::new(self.trace.clone()),
        }
    }

    fn into_trace(mut self) -> RunTrace {
        let mut rng = output_rng(self.config.seed);
        self.trace.output_index = select_output(
            self.trace.iterates.len() - 1,
            self.config.output_set,
            &mut rng,
        );
        self.trace
    }
}

/// Uniform index of the returned point among `x_0..x_T` (or `x_1..x_T`).
pub fn select_output<R: Rng + ?Sized>(horizon: usize, set: OutputSet, rng: &mut R) -> usize {
    match set {
        OutputSet::WithInitial => rng.random_range(0..=horizon),
        OutputSet::ExcludeInitial if horizon == 0 => 0,
        OutputSet::ExcludeInitial => rng.random_range(1..=horizon),
    }
}

/// Both sides of the one-step progress inequality
/// `f(x) - f(x+) >= mu_M(x+) / (1008 sqrt M) + M r^3 / 72
///                 - 4 |eps|^{3/2} / sqrt M - 73 |Sigma|^3 / M^2`
/// for the cubic step from estimates `(g, H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCheckReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
    pub step_norm: f64,
    pub eps_norm: f64,
    pub sigma_norm: f64,
}

/// Absolute tolerance of the progress check relative to `1 + |lhs|`.
pub const STEP_CHECK_TOL: f64 = 1e-9;

/// Takes the cubic step from `(g, H, M)` at `x` and evaluates the progress
/// inequality with exact derivatives of `problem`. Valid for `M >= L`.
pub fn check_one_step(
    problem: &Problem,
    x: &[f64],
    g: &Vector,
    h: &SymMatrix,
    m: f64,
) -> Result<StepCheckReport, EngineError> {
    check_one_step_with(problem, x, g, h, m, cubic::solve_cubic)
}

/// [`check_one_step`] with a caller-supplied step solver.
pub fn check_one_step_with(
    problem: &Problem,
    x: &[f64],
    g: &Vector,
    h: &SymMatrix,
    m: f64,
    solver: impl Fn(&CubicModel) -> Result<CubicStepResult, CubicError>,
) -> Result<StepCheckReport, EngineError> {
    let model = CubicModel::new(g.clone(), h.clone(), m)?;
    let step = solver(&model)?;
    let x_plus = Vector::from(x.to_vec()).add(&step.s);
    let lhs = problem.full_value(x) - problem.full_value(&x_plus);
    let eps_norm = g.sub(&problem.full_gradient(x)).norm();
    let sigma_norm = h.sub(&problem.full_hessian(x)).spectral_norm()?;
    let mu_plus = cubic::mu_measure(
        &problem.full_gradient(&x_plus),
        &problem.full_hessian(&x_plus),
        m,
    )?;
    let r = step.s.norm();
    let sm = m.sqrt();
    let rhs = mu_plus / (1008.0 * sm) + m * r.powi(3) / 72.0
        - 4.0 * eps_norm.powf(1.5) / sm
        - 73.0 * sigma_norm.powi(3) / (m * m);
    let slack = lhs - rhs;
    Ok(StepCheckReport {
        lhs,
        rhs,
        slack,
        pass: slack >= -STEP_CHECK_TOL * (1.0 + lhs.abs()),
        step_norm: r,
        eps_norm,
        sigma_norm,
    })
}

/// Optimality gaps `F_t = f(x_t) - f*` and their running minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSeries {
    pub gaps: Vec<f64>,
    pub running_min: Vec<f64>,
}

/// Gaps below `-1e-6` mean `f_star` is not a lower bound; smaller negative
/// gaps are reported as zero.
pub fn convex_gap_series(trace: &RunTrace, f_star: f64) -> Result<GapSeries, EngineError> {
    let mut gaps = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let gap = r.f - f_star;
        if gap < -1e-6 {
            return Err(EngineError::InvalidReference { t: r.t, gap });
        }
        gaps.push(gap.max(0.0));
    }
    let running_min = gaps
        .iter()
        .scan(f64::INFINITY, |m, &v| {
            *m = m.min(v);
            Some(*m)
        })
        .collect();
    Ok(GapSeries { gaps, running_min })
}

/// Reference optimal value: the best value of [`REFERENCE_ITERATIONS`]
/// exact cubic Newton steps from `x0`, minus `1e-12`.
pub fn reference_minimum(problem: &Problem, x0: &[f64], m: f64) -> Result<f64, EngineError> {
    let config = RunConfig {
        iterations: REFERENCE_ITERATIONS,
        m,
        method: Method::ScnPlain,
        exact_oracle: true,
        record_full_metrics_every: REFERENCE_ITERATIONS,
        x0: Some(x0.to_vec()),
        ..RunConfig::default()
    };
    let trace = run_scnm(problem, &config, None)?;
    let best = trace
        .records
        .iter()
        .map(|r| r.f)
        .fold(f64::INFINITY, f64::min);
    Ok(best - 1e-12)
}
