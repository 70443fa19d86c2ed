//! Randomized invariant suites for the cubic solver, the one-step progress
//! inequality, and the momentum estimators.
//!
//! Every trial draws from its own generator stream, so a failure is
//! reproduced by `(suite, seed, trial)` alone.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cubic::{self, CubicError, CubicModel, CubicStepResult};
use crate::dataio::synth_logistic;
use crate::engine::check_one_step_with;
use crate::estimators::{
    bias_condition, make_schedule, GradEstimator, GradVariant, HessEstimator, SampleOracle,
    ScheduleSource,
};
use crate::numkit::{self, SymMatrix, Vector};
use crate::problems::{estimate_constants, Problem, ProblemConstants, QuadComponent};

/// Stationarity residual bound, relative to `1 + |g|`.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Lower bound on `lambda_min(H + gamma I)`.
pub const CURVATURE_TOL: f64 = 1e-8;
/// Relative agreement of `gamma` with `M |s| / 2`.
pub const GAMMA_TOL: f64 = 1e-10;
/// Every this many cubic trials is a constructed hard case.
pub const HARD_CASE_PERIOD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Cubic,
    Step,
    Estimators,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Cubic, Suite::Step, Suite::Estimators];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Cubic => "cubic",
            Suite::Step => "step",
            Suite::Estimators => "estimators",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Suite::Cubic => 1 << 40,
            Suite::Step => 2 << 40,
            Suite::Estimators => 3 << 40,
        }
    }
}

/// Data needed to rebuild a failing trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instance {
    Cubic {
        model: CubicModel,
        hard_case: bool,
    },
    Step {
        problem: String,
        x: Vector,
        g: Vector,
        h: SymMatrix,
        m: f64,
    },
    Estimator {
        alpha: f64,
        detail: String,
    },
    Schedule {
        l: f64,
        m: f64,
        horizon: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub suite: Suite,
    pub property: String,
    pub seed: u64,
    pub trial: usize,
    pub message: String,
    pub instance: Instance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyTally {
    pub name: String,
    pub passed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub properties: Vec<PropertyTally>,
    pub failures: Vec<Failure>,
}

impl SuiteReport {
    fn new(suite: Suite, names: &[&str]) -> Self {
        Self {
            suite,
            properties: names
                .iter()
                .map(|n| PropertyTally {
                    name: n.to_string(),
                    passed: 0,
                    total: 0,
                })
                .collect(),
            failures: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failures.is_empty() && self.properties.iter().all(|p| p.passed == p.total)
    }

    /// Lines of the form `name: passed/total`.
    pub fn summary_lines(&self) -> Vec<String> {
        self.properties
            .iter()
            .map(|p| format!("{}: {}/{}", p.name, p.passed, p.total))
            .collect()
    }

    fn record(
        &mut self,
        k: usize,
        seed: u64,
        trial: usize,
        outcome: Result<(), (String, Instance)>,
    ) {
        let tally = &mut self.properties[k];
        tally.total += 1;
        match outcome {
            Ok(()) => tally.passed += 1,
            Err((message, instance)) => self.failures.push(Failure {
                suite: self.suite,
                property: tally.name.clone(),
                seed,
                trial,
                message,
                instance,
            }),
        }
    }
}

/// Step solver under test.
pub type Solver<'a> = &'a dyn Fn(&CubicModel) -> Result<CubicStepResult, CubicError>;

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> SuiteReport {
    run_suite_with(suite, trials, seed, &cubic::solve_cubic)
}

pub fn run_suite_with(suite: Suite, trials: usize, seed: u64, solver: Solver) -> SuiteReport {
    run_trials(suite, 0..trials, seed, solver)
}

/// Re-runs the single trial that produced `failure`.
pub fn replay_failure(failure: &Failure, solver: Solver) -> SuiteReport {
    run_trials(
        failure.suite,
        failure.trial..failure.trial + 1,
        failure.seed,
        solver,
    )
}

fn run_trials(suite: Suite, trials: Range<usize>, seed: u64, solver: Solver) -> SuiteReport {
    match suite {
        Suite::Cubic => cubic_suite(trials, seed, solver),
        Suite::Step => step_suite(trials, seed, solver),
        Suite::Estimators => estimator_suite(trials, seed),
    }
}

pub fn trial_rng(suite: Suite, seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite.stream() + trial as u64);
    rng
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize) -> Vector {
    (0..d).map(|_| normal(rng)).collect()
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

/// Random symmetric matrix with standard normal entries.
pub fn random_symmetric<R: Rng>(rng: &mut R, d: usize, scale: f64) -> SymMatrix {
    SymMatrix::from_upper_fn(d, |_, _| scale * normal(rng))
}

/// Columns of a random orthogonal matrix.
pub fn random_orthonormal<R: Rng>(rng: &mut R, d: usize) -> Vec<Vector> {
    let eig = numkit::sym_eig(&random_symmetric(rng, d, 1.0)).expect("finite symmetric input");
    (0..d)
        .map(|k| Vector::from(eig.vector(k).to_vec()))
        .collect()
}

/// A general cubic model: random spectrum in `[-2, 2]` times a random scale,
/// gradient of random magnitude, `M` log-uniform in `[1e-2, 1e2]`.
pub fn random_cubic_model<R: Rng>(rng: &mut R, d: usize) -> CubicModel {
    let q = random_orthonormal(rng, d);
    let scale = log_uniform(rng, -1.0, 1.0);
    let mut h = SymMatrix::zeros(d);
    for qk in &q {
        h.add_rank_one(scale * rng.random_range(-2.0..2.0), qk);
    }
    let g = normal_vec(rng, d).scaled(log_uniform(rng, -3.0, 1.0));
    CubicModel::new(g, h, log_uniform(rng, -2.0, 2.0)).expect("valid model")
}

/// A hard-case model: negative smallest eigenvalue of multiplicity 1 or 2,
/// gradient orthogonal to its eigenspace and small enough that the shifted
/// solution alone is too short.
pub fn hard_cubic_model<R: Rng>(rng: &mut R, d: usize) -> CubicModel {
    let d = d.max(2);
    let q = random_orthonormal(rng, d);
    let lambda_min = -log_uniform(rng, -1.0, 1.0);
    let mult = if d > 2 { rng.random_range(1..=2) } else { 1 };
    let m = log_uniform(rng, -1.0, 1.0);
    let mut h = SymMatrix::zeros(d);
    let mut coords = vec![0.0; d];
    let mut bar_sq = 0.0;
    for (k, qk) in q.iter().enumerate() {
        if k < mult {
            h.add_rank_one(lambda_min, qk);
        } else {
            let lam = lambda_min + rng.random_range(0.1..3.0) * lambda_min.abs().max(0.1);
            h.add_rank_one(lam, qk);
            coords[k] = normal(rng);
            bar_sq += (coords[k] / (lam - lambda_min)).powi(2);
        }
    }
    // |(H - lambda_min I)^+ g| = rho * 2 |lambda_min| / M with rho < 1
    let rho = rng.random_range(0.05..0.95);
    let target = rho * 2.0 * lambda_min.abs() / m;
    let c = if bar_sq > 0.0 {
        target / bar_sq.sqrt()
    } else {
        0.0
    };
    let mut g = Vector::zeros(d);
    for (k, qk) in q.iter().enumerate() {
        g.axpy(c * coords[k], qk);
    }
    CubicModel::new(g, h, m).expect("valid model")
}

/// `g + H s + (M / 2) |s| s`, computed without the solver's eigenbasis.
fn stationarity_residual(model: &CubicModel, s: &[f64]) -> f64 {
    let mut r = model.h.matvec(s);
    r.axpy(1.0, &model.g);
    r.axpy(0.5 * model.m * numkit::norm(s), s);
    r.norm()
}

/// Certificate of global optimality for a cubic step; `Err` names the
/// violated condition.
pub fn certify_cubic_step(model: &CubicModel, step: &CubicStepResult) -> Result<(), String> {
    if !step.s.is_finite() {
        return Err("non-finite step".into());
    }
    let res = stationarity_residual(model, &step.s);
    if res > RESIDUAL_TOL * (1.0 + model.g.norm()) {
        return Err(format!("stationarity residual {res:e}"));
    }
    let gamma = 0.5 * model.m * step.s.norm();
    if (step.gamma - gamma).abs() > GAMMA_TOL * gamma.max(f64::MIN_POSITIVE) && step.gamma != gamma
    {
        return Err(format!("gamma {} != M|s|/2 = {}", step.gamma, gamma));
    }
    let mut shifted = model.h.clone();
    shifted.add_diag(gamma);
    let (lam, _) = numkit::min_eigenvalue(&shifted).map_err(|e| e.to_string())?;
    if lam < -CURVATURE_TOL {
        return Err(format!("lambda_min(H + gamma I) = {lam:e}"));
    }
    Ok(())
}

fn cubic_suite(trials: Range<usize>, seed: u64, solver: Solver) -> SuiteReport {
    let mut report = SuiteReport::new(Suite::Cubic, &["optimality-certificate", "model-decrease"]);
    for trial in trials {
        let mut rng = trial_rng(Suite::Cubic, seed, trial);
        let d = rng.random_range(1..=20);
        let hard = trial % HARD_CASE_PERIOD == HARD_CASE_PERIOD - 1;
        let model = if hard {
            hard_cubic_model(&mut rng, d)
        } else {
            random_cubic_model(&mut rng, d)
        };
        let instance = || Instance::Cubic {
            model: model.clone(),
            hard_case: hard,
        };
        let step = match solver(&model) {
            Ok(step) => step,
            Err(e) => {
                report.record(0, seed, trial, Err((e.to_string(), instance())));
                report.record(1, seed, trial, Err((e.to_string(), instance())));
                continue;
            }
        };
        report.record(
            0,
            seed,
            trial,
            certify_cubic_step(&model, &step).map_err(|m| (m, instance())),
        );
        let value = model.value(&step.s);
        let tol = 1e-9 * (1.0 + value.abs());
        let mut decrease = if value > tol {
            Err(format!("model value {value:e} > 0"))
        } else {
            Ok(())
        };
        for _ in 0..16 {
            let radius = step.s.norm().max(1e-3) * log_uniform(&mut rng, -1.0, 1.0);
            let mut p = normal_vec(&mut rng, model.dim());
            let n = p.norm();
            if n > 0.0 {
                p.scale(radius / n);
            }
            let probe = model.value(&p);
            if decrease.is_ok() && probe < value - tol {
                decrease = Err(format!("probe value {probe:e} below step value {value:e}"));
            }
        }
        report.record(1, seed, trial, decrease.map_err(|m| (m, instance())));
    }
    report
}

/// Noise magnitudes of corrupted `(g, H)`; index 0 is the exact oracle.
pub const STEP_NOISE_SCALES: [f64; 11] =
    [0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4];

/// Regularization candidates for quadratic trials (`L = 0`).
pub const STEP_QUADRATIC_M: [f64; 3] = [0.1, 1.0, 10.0];

fn random_quadratic<R: Rng>(rng: &mut R, d: usize) -> Problem {
    let n = rng.random_range(1..=5);
    let comps = (0..n)
        .map(|_| QuadComponent {
            a: random_symmetric(rng, d, 1.0),
            b: normal_vec(rng, d),
        })
        .collect();
    Problem::quadratic_sum(comps).expect("valid components")
}

struct LogisticCase {
    problem: Problem,
    constants: ProblemConstants,
}

fn logistic_case(seed: u64, d: usize) -> LogisticCase {
    let data = synth_logistic(50, d, seed, 0.1).expect("valid synthetic data");
    let problem = Problem::logistic_nonconvex(Arc::new(data), 0.1).expect("valid problem");
    let constants = estimate_constants(&problem, &vec![0.0; d], 4, seed).expect("constants");
    LogisticCase { problem, constants }
}

fn step_suite(trials: Range<usize>, seed: u64, solver: Solver) -> SuiteReport {
    let mut report = SuiteReport::new(Suite::Step, &["progress-inequality"]);
    let logistic: Vec<LogisticCase> = (2..=6)
        .map(|d| logistic_case(seed.wrapping_add(d as u64), d))
        .collect();
    for trial in trials {
        let mut rng = trial_rng(Suite::Step, seed, trial);
        let noise = STEP_NOISE_SCALES[(trial / 2) % STEP_NOISE_SCALES.len()];
        let (problem, label, m, x) = if trial % 2 == 0 {
            let d = rng.random_range(1..=8);
            let p = random_quadratic(&mut rng, d);
            let m = STEP_QUADRATIC_M[rng.random_range(0..STEP_QUADRATIC_M.len())];
            let x = normal_vec(&mut rng, d);
            (p, format!("quadratic d={d}"), m, x)
        } else {
            let case = &logistic[rng.random_range(0..logistic.len())];
            let d = case.problem.dim();
            let m = 1.5 * case.constants.l_hess.max(1e-3);
            let x = normal_vec(&mut rng, d).scaled(rng.random_range(0.0..2.0));
            (
                case.problem.clone(),
                format!("logistic_nonconvex d={d}"),
                m,
                x,
            )
        };
        let d = problem.dim();
        let mut g = problem.full_gradient(&x);
        let mut h = problem.full_hessian(&x);
        if noise > 0.0 {
            g.axpy(noise, &normal_vec(&mut rng, d));
            h.add_scaled(noise, &random_symmetric(&mut rng, d, 1.0));
        }
        let outcome = match check_one_step_with(&problem, &x, &g, &h, m, solver) {
            Ok(rep) if rep.pass => Ok(()),
            Ok(rep) => Err(format!(
                "slack {:e} (lhs {:e}, rhs {:e}, noise {noise:e})",
                rep.slack, rep.lhs, rep.rhs
            )),
            Err(e) => Err(e.to_string()),
        };
        report.record(
            0,
            seed,
            trial,
            outcome.map_err(|msg| {
                (
                    msg,
                    Instance::Step {
                        problem: label,
                        x: x.clone(),
                        g: g.clone(),
                        h: h.clone(),
                        m,
                    },
                )
            }),
        );
    }
    report
}

/// Finite-sum quadratic oracle with a shared Hessian `A`: sample `i` has
/// gradient `A x + b_i`. Indices come from a seeded generator.
pub struct SharedQuadraticOracle {
    pub a: SymMatrix,
    pub offsets: Vec<Vector>,
    rng: ChaCha8Rng,
    pub draws: usize,
    pub gradient_evals: usize,
}

impl SharedQuadraticOracle {
    pub fn new(a: SymMatrix, offsets: Vec<Vector>, seed: u64) -> Self {
        Self {
            a,
            offsets,
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
            gradient_evals: 0,
        }
    }

    pub fn random<R: Rng>(rng: &mut R, d: usize, n: usize, seed: u64) -> Self {
        let a = random_symmetric(rng, d, 1.0);
        let offsets = (0..n).map(|_| normal_vec(rng, d)).collect();
        Self::new(a, offsets, seed)
    }
}

impl SampleOracle for SharedQuadraticOracle {
    type Sample = usize;

    fn draw(&mut self) -> usize {
        self.draws += 1;
        self.rng.random_range(0..self.offsets.len())
    }

    fn gradient(&mut self, i: &usize, x: &[f64]) -> Vector {
        self.gradient_evals += 1;
        self.a.matvec(x).add(&self.offsets[*i])
    }

    fn hessian(&mut self, _: &usize, _: &[f64]) -> SymMatrix {
        self.a.clone()
    }
}

/// Momentum values of the affine-equivalence property.
pub const AFFINE_ALPHAS: [f64; 3] = [0.1, 0.5, 0.9];

/// Runs IT, MVR and SOM (with `H_t = A`) on identical draw sequences along
/// a random path and returns the largest relative disagreement.
pub fn affine_disagreement<R: Rng>(
    rng: &mut R,
    d: usize,
    alpha: f64,
    steps: usize,
    draw_seed: u64,
) -> f64 {
    let template = SharedQuadraticOracle::random(rng, d, 8, draw_seed);
    let path: Vec<Vector> = (0..steps).map(|_| normal_vec(rng, d)).collect();
    let mut seqs = Vec::new();
    for variant in [GradVariant::It, GradVariant::Mvr, GradVariant::Som] {
        let mut oracle =
            SharedQuadraticOracle::new(template.a.clone(), template.offsets.clone(), draw_seed);
        let mut est = GradEstimator::new(variant, alpha).expect("alpha in (0, 1]");
        let a = template.a.clone();
        let seq: Vec<Vector> = path
            .iter()
            .map(|x| {
                est.update(x, &mut oracle, Some(&a))
                    .expect("estimator update")
            })
            .collect();
        seqs.push(seq);
    }
    let mut worst: f64 = 0.0;
    for t in 0..steps {
        let base = &seqs[0][t];
        for other in &seqs[1..] {
            worst = worst.max(other[t].sub(base).max_abs() / (1.0 + base.max_abs()));
        }
    }
    worst
}

fn estimator_suite(trials: Range<usize>, seed: u64) -> SuiteReport {
    let names = [
        "affine-equivalence",
        "unit-momentum-collapse",
        "oracle-draw-count",
        "hessian-spectrum-bounds",
        "schedule-condition",
    ];
    let mut report = SuiteReport::new(Suite::Estimators, &names);
    for trial in trials {
        let mut rng = trial_rng(Suite::Estimators, seed, trial);
        let d = rng.random_range(1..=6);
        let alpha = AFFINE_ALPHAS[trial % AFFINE_ALPHAS.len()];
        let draw_seed = rng.random();

        let worst = affine_disagreement(&mut rng, d, alpha, 50, draw_seed);
        let est_instance = |detail: String| Instance::Estimator { alpha, detail };
        report.record(
            0,
            seed,
            trial,
            if worst <= 1e-12 {
                Ok(())
            } else {
                Err((
                    format!("IT/MVR/SOM disagree by {worst:e}"),
                    est_instance(format!("d={d}")),
                ))
            },
        );

        // unit momentum: every variant returns the fresh sample
        let mut collapse = Ok(());
        for variant in [
            GradVariant::It,
            GradVariant::Hb,
            GradVariant::Mvr,
            GradVariant::Som,
        ] {
            let mut oracle = SharedQuadraticOracle::random(&mut rng, d, 5, draw_seed);
            let mut replay =
                SharedQuadraticOracle::new(oracle.a.clone(), oracle.offsets.clone(), draw_seed);
            let mut est = GradEstimator::new(variant, 1.0).expect("alpha = 1");
            let a = oracle.a.clone();
            for _ in 0..10 {
                let x = normal_vec(&mut rng, d);
                let g = est
                    .update(&x, &mut oracle, Some(&a))
                    .expect("estimator update");
                let i = replay.draw();
                let fresh = replay.gradient(&i, &x);
                if g.sub(&fresh).max_abs() > 1e-12 * (1.0 + fresh.max_abs()) && collapse.is_ok() {
                    collapse = Err((
                        format!("{variant:?} differs from fresh sample"),
                        est_instance(format!("d={d}")),
                    ));
                }
            }
        }
        report.record(1, seed, trial, collapse);

        let mut counts = Ok(());
        for variant in [
            GradVariant::It,
            GradVariant::Hb,
            GradVariant::Mvr,
            GradVariant::Som,
        ] {
            let mut oracle = SharedQuadraticOracle::random(&mut rng, d, 5, draw_seed);
            let mut est = GradEstimator::new(variant, alpha).expect("alpha in (0, 1]");
            let a = oracle.a.clone();
            let steps = 7;
            for _ in 0..steps {
                let x = normal_vec(&mut rng, d);
                est.update(&x, &mut oracle, Some(&a))
                    .expect("estimator update");
            }
            let evals = 1 + (steps - 1) * variant.evaluations_per_update();
            if (oracle.draws, oracle.gradient_evals) != (steps, evals) && counts.is_ok() {
                counts = Err((
                    format!(
                        "{variant:?}: {} draws / {} evaluations, expected {steps} / {evals}",
                        oracle.draws, oracle.gradient_evals
                    ),
                    est_instance(format!("d={d}")),
                ));
            }
        }
        report.record(2, seed, trial, counts);

        let (lo, hi) = (rng.random_range(-3.0..0.0), rng.random_range(0.0..3.0));
        let beta = rng.random_range(0.01..1.0);
        let mut hest = HessEstimator::new(beta).expect("beta in (0, 1]");
        struct DiagOracle<'r, R: Rng> {
            rng: &'r mut R,
            d: usize,
            lo: f64,
            hi: f64,
        }
        impl<R: Rng> SampleOracle for DiagOracle<'_, R> {
            type Sample = Vec<f64>;
            fn draw(&mut self) -> Vec<f64> {
                (0..self.d)
                    .map(|_| self.rng.random_range(self.lo..=self.hi))
                    .collect()
            }
            fn gradient(&mut self, _: &Vec<f64>, x: &[f64]) -> Vector {
                Vector::zeros(x.len())
            }
            fn hessian(&mut self, diag: &Vec<f64>, _: &[f64]) -> SymMatrix {
                SymMatrix::from_diag(diag)
            }
        }
        let mut oracle = DiagOracle {
            rng: &mut rng,
            d,
            lo,
            hi,
        };
        let x = vec![0.0; d];
        let mut spectrum = Ok(());
        for _ in 0..20 {
            let h = hest.update(&x, &mut oracle);
            let eig = numkit::sym_eig(&h).expect("finite matrix");
            let (emin, emax) = (eig.values[0], eig.values[d - 1]);
            if (emin < lo - 1e-12 || emax > hi + 1e-12) && spectrum.is_ok() {
                spectrum = Err((
                    format!("spectrum [{emin}, {emax}] outside [{lo}, {hi}]"),
                    Instance::Estimator {
                        alpha: beta,
                        detail: format!("d={d}"),
                    },
                ));
            }
        }
        report.record(3, seed, trial, spectrum);

        let l = log_uniform(&mut rng, -3.0, 3.0);
        let m = l * log_uniform(&mut rng, 2.0, 6.0);
        let horizon = rng.random_range(1..=100_000);
        let k = ProblemConstants::new(l, 1.0, 1.0, 1.0, 1.0);
        let sched = match make_schedule(&k, horizon, m, ScheduleSource::MainIt) {
            Ok(s) => Ok(s),
            Err(e) => Err(e.to_string()),
        };
        let outcome = sched.and_then(|s| {
            let lhs = bias_condition(l, m, s.alpha, s.beta);
            let in_range = s.alpha > 0.0 && s.alpha <= 1.0 && s.beta > 0.0 && s.beta <= 1.0;
            if in_range && lhs <= 0.0 {
                Ok(())
            } else {
                Err(format!(
                    "alpha {}, beta {}, condition {lhs:e}",
                    s.alpha, s.beta
                ))
            }
        });
        report.record(
            4,
            seed,
            trial,
            outcome.map_err(|msg| (msg, Instance::Schedule { l, m, horizon })),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_budgets() {
        for suite in Suite::ALL {
            let report = run_suite(suite, 20, 0);
            assert!(report.all_passed(), "{:?}: {:?}", suite, report.failures);
            assert!(report.properties.iter().all(|p| p.total == 20));
        }
    }

    #[test]
    fn hard_instances_are_hard() {
        for trial in 0..30 {
            let mut rng = trial_rng(Suite::Cubic, 9, trial);
            let d = rng.random_range(2..=20);
            let model = hard_cubic_model(&mut rng, d);
            let step = cubic::solve_cubic(&model).unwrap();
            assert!(step.hard_case, "trial {trial}");
            certify_cubic_step(&model, &step).unwrap();
        }
    }

    #[test]
    fn broken_solver_is_caught() {
        let broken = |m: &CubicModel| {
            let mut step = cubic::solve_cubic(m)?;
            step.s.scale(0.5);
            Ok(step)
        };
        let report = run_suite_with(Suite::Cubic, 10, 0, &broken);
        assert!(!report.all_passed());
        assert_eq!(report.failures[0].suite, Suite::Cubic);
        let first = &report.failures[0];
        let again = replay_failure(first, &broken);
        assert_eq!(again.failures[0], *first);
        assert!(replay_failure(first, &cubic::solve_cubic).all_passed());
    }

    #[test]
    fn summary_format() {
        let report = run_suite(Suite::Cubic, 3, 1);
        assert_eq!(report.summary_lines()[0], "optimality-certificate: 3/3");
    }
}
