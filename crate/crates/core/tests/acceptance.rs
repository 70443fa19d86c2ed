//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.
//!
//! Set `CUBIC_MOMENTUM_LIBSVM=<path>` to add a LibSVM dataset to the trend
//! comparison of criterion 7.

use std::sync::Arc;
use std::time::{Duration, Instant};

use cubic_momentum::checks::{self, Suite};
use cubic_momentum::cubic::{self, CubicModel};
use cubic_momentum::dataio::{read_libsvm_file, subsample, synth_logistic, Dataset};
use cubic_momentum::engine::{self, Method, Momentum, RunConfig, RunTrace};
use cubic_momentum::estimators::{
    make_schedule, GradEstimator, GradVariant, SampleOracle, ScheduleSource,
};
use cubic_momentum::problems::{estimate_constants, Problem, ProblemConstants};
use cubic_momentum::{SymMatrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Runs one config per seed concurrently; aborted runs yield `None`.
fn run_seeds(problem: &Problem, base: &RunConfig, seeds: &[u64]) -> Vec<Option<RunTrace>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let cfg = RunConfig {
                    seed,
                    ..base.clone()
                };
                s.spawn(move || engine::run(problem, &cfg, None).ok())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread"))
            .collect()
    })
}

// 1 -------------------------------------------------------------------------

fn cubic_certificate() -> Outcome {
    let report = checks::run_suite(Suite::Cubic, 1000, 2024);
    let hard = (0..1000)
        .filter(|t| t % checks::HARD_CASE_PERIOD == checks::HARD_CASE_PERIOD - 1)
        .count();
    let cert = &report.properties[0];
    outcome(
        cert.passed == 1000 && cert.total == 1000 && hard >= 50,
        format!(
            "{}/{} certified, {hard} constructed hard cases",
            cert.passed, cert.total
        ),
    )
}

// 2 -------------------------------------------------------------------------

const BOX: f64 = 5.0;

fn omega(g: &[f64], h: &[[f64; 2]; 2], m: f64, s: &[f64]) -> f64 {
    match s.len() {
        1 => g[0] * s[0] + 0.5 * h[0][0] * s[0] * s[0] + m / 6.0 * s[0].abs().powi(3),
        _ => {
            let r = (s[0] * s[0] + s[1] * s[1]).sqrt();
            g[0] * s[0]
                + g[1] * s[1]
                + 0.5
                    * (h[0][0] * s[0] * s[0] + 2.0 * h[0][1] * s[0] * s[1] + h[1][1] * s[1] * s[1])
                + m / 6.0 * r * r * r
        }
    }
}

/// Minimum over a 2001-point-per-axis grid on `[-5, 5]^d`, refined by
/// six nested grids shrinking tenfold around the incumbent.
fn grid_minimum(g: &[f64], h: &[[f64; 2]; 2], m: f64) -> (f64, Vec<f64>) {
    let d = g.len();
    let n = 2001;
    let step = 2.0 * BOX / (n - 1) as f64;
    let mut best = (f64::INFINITY, vec![0.0; d]);
    let scan = |center: &[f64], half: f64, pts: usize, best: &mut (f64, Vec<f64>)| {
        let h_step = 2.0 * half / (pts - 1) as f64;
        let coord = |c: f64, i: usize| c - half + i as f64 * h_step;
        if d == 1 {
            for i in 0..pts {
                let s = [coord(center[0], i)];
                let v = omega(g, h, m, &s);
                if v < best.0 {
                    *best = (v, s.to_vec());
                }
            }
        } else {
            for i in 0..pts {
                for j in 0..pts {
                    let s = [coord(center[0], i), coord(center[1], j)];
                    let v = omega(g, h, m, &s);
                    if v < best.0 {
                        *best = (v, s.to_vec());
                    }
                }
            }
        }
    };
    scan(&vec![0.0; d], BOX, n, &mut best);
    let mut half = 2.0 * step;
    for _ in 0..6 {
        let center = best.1.clone();
        scan(&center, half, 41, &mut best);
        half /= 10.0;
    }
    best
}

fn brute_force_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    let mut instances = 0;
    while instances < 100 {
        let d = 1 + instances % 2;
        let g: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let off = normal(&mut rng);
        let h = [[normal(&mut rng), off], [off, normal(&mut rng)]];
        let m = 10f64.powf(rng.random_range(-0.5..1.0));
        let hm = if d == 1 {
            SymMatrix::from_diag(&[h[0][0]])
        } else {
            SymMatrix::from_rows(&[vec![h[0][0], h[0][1]], vec![h[1][0], h[1][1]]])
        };
        let model = CubicModel::new(Vector::from(g.clone()), hm, m).expect("valid model");
        let step = cubic::solve_cubic(&model).expect("solver");
        if step.s.max_abs() > BOX - 0.5 {
            continue;
        }
        instances += 1;
        let (grid_val, grid_arg) = grid_minimum(&g, &h, m);
        let on_edge = grid_arg.iter().any(|v| v.abs() >= BOX - 1e-9);
        let gap = (step.model_value - grid_val).abs();
        worst = worst.max(gap);
        if gap <= 1e-3 && !on_edge {
            matched += 1;
        }
    }
    outcome(
        matched == 100,
        format!("{matched}/100 within 1e-3 of grid minimum (worst gap {worst:.2e})"),
    )
}

// 3 -------------------------------------------------------------------------

fn progress_inequality() -> Outcome {
    let report = checks::run_suite(Suite::Step, 200, 11);
    let p = &report.properties[0];
    let first = report
        .failures
        .first()
        .map(|f| f.message.clone())
        .unwrap_or_default();
    outcome(
        p.passed == 200 && p.total == 200,
        format!(
            "{}/{} instances satisfy the inequality {first}",
            p.passed, p.total
        ),
    )
}

// 4 -------------------------------------------------------------------------

/// `grad f_i(x) = A x + b_i` with one shared `A`.
struct AffineOracle {
    a: SymMatrix,
    b: Vec<Vector>,
    rng: ChaCha8Rng,
}

impl SampleOracle for AffineOracle {
    type Sample = usize;
    fn draw(&mut self) -> usize {
        self.rng.random_range(0..self.b.len())
    }
    fn gradient(&mut self, i: &usize, x: &[f64]) -> Vector {
        self.a.matvec(x).add(&self.b[*i])
    }
    fn hessian(&mut self, _: &usize, _: &[f64]) -> SymMatrix {
        self.a.clone()
    }
}

fn affine_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        for alpha in [0.1, 0.5, 0.9] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 5;
            let a = SymMatrix::from_upper_fn(d, |_, _| normal(&mut rng));
            let b: Vec<Vector> = (0..10)
                .map(|_| (0..d).map(|_| normal(&mut rng)).collect())
                .collect();
            let path: Vec<Vector> = (0..50)
                .map(|_| (0..d).map(|_| normal(&mut rng)).collect())
                .collect();
            let seqs: Vec<Vec<Vector>> = [GradVariant::It, GradVariant::Mvr, GradVariant::Som]
                .into_iter()
                .map(|variant| {
                    let mut oracle = AffineOracle {
                        a: a.clone(),
                        b: b.clone(),
                        rng: ChaCha8Rng::seed_from_u64(1000 + seed),
                    };
                    let mut est = GradEstimator::new(variant, alpha).expect("alpha");
                    path.iter()
                        .map(|x| est.update(x, &mut oracle, Some(&a)).expect("update"))
                        .collect()
                })
                .collect();
            for t in 0..50 {
                let scale = 1.0 + seqs[0][t].max_abs();
                for other in &seqs[1..] {
                    worst = worst.max(other[t].sub(&seqs[0][t]).max_abs() / scale);
                }
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max relative disagreement {worst:.2e} over 60 runs x 50 steps"),
    )
}

// 5 -------------------------------------------------------------------------

/// Constant gradient plus standard normal noise.
struct NoisyConstant {
    rng: ChaCha8Rng,
}

impl SampleOracle for NoisyConstant {
    type Sample = f64;
    fn draw(&mut self) -> f64 {
        normal(&mut self.rng)
    }
    fn gradient(&mut self, xi: &f64, _: &[f64]) -> Vector {
        Vector::from(vec![2.0 + xi])
    }
    fn hessian(&mut self, _: &f64, _: &[f64]) -> SymMatrix {
        SymMatrix::zeros(1)
    }
}

fn steady_state_variance() -> Outcome {
    let alpha = 0.1;
    let expected = alpha / (2.0 - alpha);
    let burn_in = 1000;
    let steps = 100_000;
    let mut details = Vec::new();
    let mut pass = true;
    for (variant, seed) in [(GradVariant::Hb, 5), (GradVariant::It, 6)] {
        let mut oracle = NoisyConstant {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let mut est = GradEstimator::new(variant, alpha).expect("alpha");
        let x = [0.0];
        let mut values = Vec::with_capacity(steps);
        for t in 0..burn_in + steps {
            let g = est.update(&x, &mut oracle, None).expect("update")[0];
            if t >= burn_in {
                values.push(g);
            }
        }
        let mean = values.iter().sum::<f64>() / steps as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (steps - 1) as f64;
        let rel = (var - expected).abs() / expected;
        pass &= rel <= 0.10;
        details.push(format!(
            "{variant:?} {var:.5} (rel. err {:.1}%)",
            100.0 * rel
        ));
    }
    outcome(
        pass,
        format!("target {expected:.5}; {}", details.join(", ")),
    )
}

// 6 -------------------------------------------------------------------------

fn condition_lhs(l: f64, m: f64, alpha: f64, beta: f64) -> f64 {
    4.0 * 3f64.sqrt() * l.powf(1.5) / alpha.powi(3)
        + 657.0 * l.powi(3) / (m.powf(1.5) * beta.powi(3))
        - m.powf(1.5) / 72.0
}

fn schedule_arithmetic() -> Outcome {
    let k = ProblemConstants::new(1.0, 1.0, 1.0, 1.0, 1.0);
    let s = make_schedule(&k, 10_000, 1e4, ScheduleSource::MainIt).expect("schedule");
    let reference_ok = (s.alpha - 0.1).abs() <= 1e-6 && (s.beta - 0.025119).abs() <= 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut satisfied = 0;
    for _ in 0..100 {
        let l = 10f64.powf(rng.random_range(-3.0..3.0));
        let m = 100.0 * l * 10f64.powf(rng.random_range(0.0..4.0));
        let t = rng.random_range(1..=1_000_000);
        let k = ProblemConstants::new(l, 1.0, 1.0, 1.0, 1.0);
        if let Ok(s) = make_schedule(&k, t, m, ScheduleSource::MainIt) {
            if condition_lhs(l, m, s.alpha, s.beta) <= 0.0 {
                satisfied += 1;
            }
        }
    }
    outcome(
        reference_ok && satisfied == 100,
        format!(
            "alpha {:.6}, beta {:.6}; condition holds on {satisfied}/100 triples",
            s.alpha, s.beta
        ),
    )
}

// 7 -------------------------------------------------------------------------

pub const TREND_T: usize = 2000;
/// Regularization of the batch-one trend experiments on the synthetic data.
pub const TREND_M: f64 = 1e6;
pub const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

fn final_values(traces: &[Option<RunTrace>]) -> (Vec<f64>, Vec<f64>) {
    let f = traces
        .iter()
        .map(|t| t.as_ref().map_or(f64::INFINITY, |t| t.last().f))
        .collect();
    let g = traces
        .iter()
        .map(|t| {
            t.as_ref()
                .and_then(|t| t.last().grad_norm)
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    (f, g)
}

fn trend_on(data: Dataset, label: &str) -> Outcome {
    let problem = Problem::logistic_nonconvex(Arc::new(data), 0.1).expect("problem");
    let base = RunConfig {
        iterations: TREND_T,
        m: TREND_M,
        batch_g: 1,
        batch_h: 1,
        record_full_metrics_every: TREND_T,
        ..RunConfig::default()
    };
    let scnm = RunConfig {
        method: Method::Scnm,
        momentum: Momentum::Manual {
            alpha: 0.1,
            beta: 0.01,
        },
        ..base.clone()
    };
    let scn = RunConfig {
        method: Method::ScnPlain,
        ..base.clone()
    };
    let (scnm_f, scnm_g) = final_values(&run_seeds(&problem, &scnm, &SEEDS));
    let (_, scn_g) = final_values(&run_seeds(&problem, &scn, &SEEDS));
    let mut best_sgd = (f64::INFINITY, 0.0);
    for eta in [0.01, 0.1, 1.0] {
        let cfg = RunConfig {
            method: Method::Sgd,
            sgd_step: eta,
            ..base.clone()
        };
        let (f, _) = final_values(&run_seeds(&problem, &cfg, &SEEDS));
        let med = median(f);
        if med < best_sgd.0 {
            best_sgd = (med, eta);
        }
    }
    let (gm, gp) = (median(scnm_g), median(scn_g));
    let fm = median(scnm_f);
    outcome(
        gm < gp && fm <= best_sgd.0,
        format!(
            "{label}: median |grad f| SCNM {gm:.4e} vs SCN {gp:.4e}; median f SCNM {fm:.6} vs SGD(eta={}) {:.6}",
            best_sgd.1, best_sgd.0
        ),
    )
}

fn trend_reproduction() -> Outcome {
    let synth = synth_logistic(2000, 50, 42, 0.1).expect("synthetic data");
    let mut out = trend_on(synth, "synthetic");
    if let Ok(path) = std::env::var("CUBIC_MOMENTUM_LIBSVM") {
        let loaded = read_libsvm_file(&path, None)
            .map_err(|e| e.to_string())
            .and_then(|ds| {
                let k = ds.n().min(2000);
                subsample(&ds, k, 0).map_err(|e| e.to_string())
            });
        match loaded {
            Ok(ds) => {
                let lib = trend_on(ds, "libsvm");
                out.pass &= lib.pass;
                out.detail = format!("{}; {}", out.detail, lib.detail);
            }
            Err(e) => {
                out.pass = false;
                out.detail = format!("{}; libsvm file unreadable: {e}", out.detail);
            }
        }
    } else {
        out.detail
            .push_str("; libsvm: skipped (CUBIC_MOMENTUM_LIBSVM unset)");
    }
    out
}

// 8 -------------------------------------------------------------------------

/// Regularization of the convex batch-one comparison.
pub const CONVEX_M: f64 = 1e5;
pub const CONVEX_RIDGE: f64 = 1e-3;

fn convex_batch_one() -> Outcome {
    let data = synth_logistic(2000, 50, 42, 0.1).expect("synthetic data");
    let problem = Problem::logistic_convex(Arc::new(data), CONVEX_RIDGE).expect("problem");
    let x0 = vec![0.0; problem.dim()];
    let k = estimate_constants(&problem, &x0, 3, 0).expect("constants");
    let f_star = engine::reference_minimum(&problem, &x0, 1.5 * k.l_hess).expect("reference");
    let base = RunConfig {
        iterations: TREND_T,
        m: CONVEX_M,
        record_full_metrics_every: TREND_T,
        ..RunConfig::default()
    };
    let scnm = run_seeds(
        &problem,
        &RunConfig {
            method: Method::Scnm,
            momentum: Momentum::Manual {
                alpha: 0.1,
                beta: 0.01,
            },
            ..base.clone()
        },
        &SEEDS,
    );
    let scn = run_seeds(
        &problem,
        &RunConfig {
            method: Method::ScnPlain,
            ..base
        },
        &SEEDS,
    );
    let mut scnm_min = Vec::new();
    for t in scnm.iter() {
        let Some(t) = t else {
            return outcome(false, "an SCNM run aborted");
        };
        match engine::convex_gap_series(t, f_star) {
            Ok(g) => scnm_min.push(*g.running_min.last().expect("non-empty")),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let mut scn_plateau = Vec::new();
    for t in scn.iter() {
        let Some(t) = t else {
            return outcome(false, "an SCN run aborted");
        };
        match engine::convex_gap_series(t, f_star) {
            Ok(g) => {
                let tail = &g.gaps[3 * TREND_T / 4..];
                scn_plateau.push(tail.iter().sum::<f64>() / tail.len() as f64);
            }
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    let (a, b) = (median(scnm_min), median(scn_plateau));
    outcome(
        a < 0.5 * b,
        format!(
            "median SCNM min gap {a:.4e} vs SCN plateau {b:.4e} (ratio {:.3})",
            a / b
        ),
    )
}

// 9 -------------------------------------------------------------------------

fn determinism() -> Outcome {
    let data = synth_logistic(300, 10, 3, 0.1).expect("synthetic data");
    let problem = Problem::logistic_nonconvex(Arc::new(data), 0.1).expect("problem");
    let mut identical = 0;
    let configs = [
        RunConfig {
            iterations: 150,
            m: 10.0,
            seed: 7,
            ..RunConfig::default()
        },
        RunConfig {
            iterations: 150,
            m: 10.0,
            seed: 7,
            method: Method::ScnPlain,
            batch_g: 4,
            batch_h: 2,
            split_sampling: true,
            ..RunConfig::default()
        },
        RunConfig {
            iterations: 150,
            seed: 7,
            method: Method::Sgd,
            sgd_step: 0.05,
            ..RunConfig::default()
        },
    ];
    for cfg in &configs {
        let a = engine::run(&problem, cfg, None).expect("run").to_csv();
        let b = engine::run(&problem, cfg, None).expect("run").to_csv();
        if a.as_bytes() == b.as_bytes() {
            identical += 1;
        }
    }
    outcome(
        identical == configs.len(),
        format!("{identical}/{} configs byte-identical", configs.len()),
    )
}

// 10 ------------------------------------------------------------------------

fn full_batch_descent() -> Outcome {
    let data = synth_logistic(2000, 50, 42, 0.1).expect("synthetic data");
    let problem = Problem::logistic_convex(Arc::new(data), CONVEX_RIDGE).expect("problem");
    let x0 = vec![0.0; problem.dim()];
    let k = estimate_constants(&problem, &x0, 3, 0).expect("constants");
    let cfg = RunConfig {
        iterations: 100,
        m: 1.5 * k.l_hess,
        method: Method::Scnm,
        momentum: Momentum::Manual {
            alpha: 1.0,
            beta: 1.0,
        },
        exact_oracle: true,
        record_full_metrics_every: 100,
        ..RunConfig::default()
    };
    let trace = engine::run(&problem, &cfg, None).expect("run");
    let f = trace.f_values();
    let worst = f
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    outcome(
        worst <= 1e-12,
        format!(
            "M = {:.4}, largest increase {worst:.2e}, f: {:.6} -> {:.6}",
            cfg.m, f[0], f[100]
        ),
    )
}

fn main() {
    let criteria: [(&str, Option<Duration>, fn() -> Outcome); 10] = [
        (
            "cubic-solver certificate",
            Some(Duration::from_secs(10)),
            cubic_certificate,
        ),
        (
            "brute-force oracle equivalence",
            Some(Duration::from_secs(30)),
            brute_force_oracle,
        ),
        (
            "one-step progress inequality",
            Some(Duration::from_secs(30)),
            progress_inequality,
        ),
        (
            "affine momentum equivalence",
            Some(Duration::from_secs(5)),
            affine_equivalence,
        ),
        (
            "steady-state variance",
            Some(Duration::from_secs(10)),
            steady_state_variance,
        ),
        ("schedule arithmetic", None, schedule_arithmetic),
        (
            "trend reproduction (batch one)",
            Some(Duration::from_secs(300)),
            trend_reproduction,
        ),
        (
            "convex batch-one convergence",
            Some(Duration::from_secs(180)),
            convex_batch_one,
        ),
        ("determinism", None, determinism),
        ("full-batch descent", None, full_batch_descent),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if let Some(f) = &filter {
            if f != &id && !name.contains(f.as_str()) {
                continue;
            }
        }
        let start = Instant::now();
        let mut out = check();
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > *b {
                out.pass = false;
                out.detail
                    .push_str(&format!("; exceeded runtime budget {b:?}"));
            }
        }
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.2} s)",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
