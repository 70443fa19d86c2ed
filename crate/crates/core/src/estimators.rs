//! Momentum estimators for gradients and Hessians, and the parameter
//! schedules that go with them.
//!
//! Gradient variants, with `n_t(x) = grad f_{xi_t}(x)`:
//!
//! | variant | update |
//! |---------|--------|
//! | IT  | `g_t = (1-a) g_{t-1} + a n_t(x_t + (1-a)/a (x_t - x_{t-1}))` |
//! | HB  | `g_t = (1-a) g_{t-1} + a n_t(x_t)` |
//! | MVR | `g_t = (1-a) (g_{t-1} + n_t(x_t) - n_t(x_{t-1})) + a n_t(x_t)` |
//! | SOM | `g_t = (1-a) (g_{t-1} + H_t (x_t - x_{t-1})) + a n_t(x_t)` |
//!
//! The Hessian estimate is always the plain moving average
//! `H_t = (1-b) H_{t-1} + b hess f_{xi_t}(x_t)`. The first update of every
//! estimator returns the raw sample.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{SymMatrix, Vector};
use crate::problems::{Batch, Problem, ProblemConstants};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("momentum parameter {0} outside (0, 1]")]
    InvalidMomentum(f64),
    #[error("oracle cannot evaluate one sample at two points")]
    ReplayUnsupported,
    #[error("second-order momentum needs the current Hessian estimate")]
    MissingHessian,
    #[error("unknown gradient variant `{0}` (expected it, hb, mvr or som)")]
    UnknownVariant(String),
}

/// Source of stochastic first- and second-order information.
///
/// `draw` fixes a sample; `gradient` and `hessian` evaluate it at any point,
/// so one draw may be evaluated several times.
pub trait SampleOracle {
    type Sample;

    fn draw(&mut self) -> Self::Sample;

    /// Number of data points a draw consumes.
    fn draw_cost(&self, _sample: &Self::Sample) -> usize {
        1
    }

    fn gradient(&mut self, sample: &Self::Sample, x: &[f64]) -> Vector;

    fn hessian(&mut self, sample: &Self::Sample, x: &[f64]) -> SymMatrix;

    fn supports_replay(&self) -> bool {
        true
    }
}

/// Uniform mini-batches (with replacement) from a finite-sum problem.
pub struct BatchOracle<'a, R> {
    problem: &'a Problem,
    rng: R,
    batch_size: usize,
}

impl<'a, R: rand::Rng> BatchOracle<'a, R> {
    pub fn new(problem: &'a Problem, rng: R, batch_size: usize) -> Self {
        assert!(batch_size >= 1, "batch size must be >= 1");
        Self {
            problem,
            rng,
            batch_size,
        }
    }

    pub fn set_batch_size(&mut self, batch_size: usize) {
        assert!(batch_size >= 1, "batch size must be >= 1");
        self.batch_size = batch_size;
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

impl<R: rand::Rng> SampleOracle for BatchOracle<'_, R> {
    type Sample = Batch;

    fn draw(&mut self) -> Batch {
        Batch::draw(&mut self.rng, self.problem.n_samples(), self.batch_size)
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

/// Exact full-batch derivatives; every draw costs `n` data points.
pub struct FullOracle<'a> {
    problem: &'a Problem,
}

impl<'a> FullOracle<'a> {
    pub fn new(problem: &'a Problem) -> Self {
        Self { problem }
    }
}

impl SampleOracle for FullOracle<'_> {
    type Sample = ();

    fn draw(&mut self) {}

    fn draw_cost(&self, _: &()) -> usize {
        self.problem.n_samples()
    }

    fn gradient(&mut self, _: &(), x: &[f64]) -> Vector {
        self.problem.full_gradient(x)
    }

    fn hessian(&mut self, _: &(), x: &[f64]) -> SymMatrix {
        self.problem.full_hessian(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradVariant {
    /// Implicit gradient transport (evaluation at the extrapolated point).
    It,
    /// Heavy ball.
    Hb,
    /// Momentum-based variance reduction.
    Mvr,
    /// Second-order momentum.
    Som,
}

impl GradVariant {
    /// Gradient evaluations per update (after initialization).
    pub fn evaluations_per_update(self) -> usize {
        match self {
            GradVariant::Mvr => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GradVariant::It => "it",
            GradVariant::Hb => "hb",
            GradVariant::Mvr => "mvr",
            GradVariant::Som => "som",
        }
    }
}

impl std::str::FromStr for GradVariant {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            GradVariant::It,
            GradVariant::Hb,
            GradVariant::Mvr,
            GradVariant::Som,
        ]
        .into_iter()
        .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
        .ok_or_else(|| EstimatorError::UnknownVariant(s.to_string()))
    }
}

/// Momentum parameter over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentumRate {
    Constant(f64),
    /// `1 / (t + 1)`: the estimate at step `t` is the running mean of all
    /// `t + 1` samples (for affine oracles).
    Harmonic,
}

impl MomentumRate {
    pub fn constant(a: f64) -> Result<Self, EstimatorError> {
        if a > 0.0 && a <= 1.0 {
            Ok(Self::Constant(a))
        } else {
            Err(EstimatorError::InvalidMomentum(a))
        }
    }

    pub fn at(self, t: usize) -> f64 {
        match self {
            MomentumRate::Constant(a) => a,
            MomentumRate::Harmonic => 1.0 / (t as f64 + 1.0),
        }
    }
}

/// Persistent state of a gradient momentum estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimator {
    variant: GradVariant,
    rate: MomentumRate,
    g_prev: Option<Vector>,
    x_prev: Option<Vector>,
    t: usize,
}

impl GradEstimator {
    pub fn new(variant: GradVariant, alpha: f64) -> Result<Self, EstimatorError> {
        Ok(Self::with_rate(variant, MomentumRate::constant(alpha)?))
    }

    pub fn with_rate(variant: GradVariant, rate: MomentumRate) -> Self {
        Self {
            variant,
            rate,
            g_prev: None,
            x_prev: None,
            t: 0,
        }
    }

    pub fn variant(&self) -> GradVariant {
        self.variant
    }

    /// Number of completed updates.
    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn estimate(&self) -> Option<&Vector> {
        self.g_prev.as_ref()
    }

    /// Seeds the state with an externally computed `g_0` at `x_0` (e.g. from
    /// a larger initial batch).
    pub fn initialize(&mut self, x0: &[f64], g0: Vector) {
        self.g_prev = Some(g0);
        self.x_prev = Some(Vector::from(x0.to_vec()));
        self.t = 1;
    }

    /// Draws one sample and updates.
    pub fn update<O: SampleOracle>(
        &mut self,
        x: &[f64],
        oracle: &mut O,
        hess: Option<&SymMatrix>,
    ) -> Result<Vector, EstimatorError> {
        let sample = oracle.draw();
        self.update_with(x, oracle, &sample, hess)
    }

    /// Updates using an already drawn sample. `hess` is required for
    /// [`GradVariant::Som`] and ignored otherwise.
    pub fn update_with<O: SampleOracle>(
        &mut self,
        x: &[f64],
        oracle: &mut O,
        sample: &O::Sample,
        hess: Option<&SymMatrix>,
    ) -> Result<Vector, EstimatorError> {
        let (Some(g_prev), Some(x_prev)) = (&self.g_prev, &self.x_prev) else {
            let g0 = oracle.gradient(sample, x);
            self.initialize(x, g0.clone());
            return Ok(g0);
        };
        let a = self.rate.at(self.t);
        if !(a > 0.0 && a <= 1.0) {
            return Err(EstimatorError::InvalidMomentum(a));
        }
        let dx = Vector::from(x.to_vec()).sub(x_prev);
        let mut g = g_prev.scaled(1.0 - a);
        match self.variant {
            GradVariant::It => {
                let mut y = Vector::from(x.to_vec());
                y.axpy((1.0 - a) / a, &dx);
                g.axpy(a, &oracle.gradient(sample, &y));
            }
            GradVariant::Hb => {
                g.axpy(a, &oracle.gradient(sample, x));
            }
            GradVariant::Mvr => {
                if !oracle.supports_replay() {
                    return Err(EstimatorError::ReplayUnsupported);
                }
                let now = oracle.gradient(sample, x);
                let before = oracle.gradient(sample, x_prev);
                g.axpy(1.0 - a, &now.sub(&before));
                g.axpy(a, &now);
            }
            GradVariant::Som => {
                let h = hess.ok_or(EstimatorError::MissingHessian)?;
                g.axpy(1.0 - a, &h.matvec(&dx));
                g.axpy(a, &oracle.gradient(sample, x));
            }
        }
        self.g_prev = Some(g.clone());
        self.x_prev = Some(Vector::from(x.to_vec()));
        self.t += 1;
        Ok(g)
    }
}

/// Persistent state of the Hessian moving average.
#[derive(Debug, Clone, PartialEq)]
pub struct HessEstimator {
    rate: MomentumRate,
    h_prev: Option<SymMatrix>,
    t: usize,
}

impl HessEstimator {
    pub fn new(beta: f64) -> Result<Self, EstimatorError> {
        Ok(Self::with_rate(MomentumRate::constant(beta)?))
    }

    pub fn with_rate(rate: MomentumRate) -> Self {
        Self {
            rate,
            h_prev: None,
            t: 0,
        }
    }

    pub fn estimate(&self) -> Option<&SymMatrix> {
        self.h_prev.as_ref()
    }

    pub fn initialize(&mut self, h0: SymMatrix) {
        self.h_prev = Some(h0);
        self.t = 1;
    }

    pub fn update<O: SampleOracle>(&mut self, x: &[f64], oracle: &mut O) -> SymMatrix {
        let sample = oracle.draw();
        self.update_with(x, oracle, &sample)
    }

    pub fn update_with<O: SampleOracle>(
        &mut self,
        x: &[f64],
        oracle: &mut O,
        sample: &O::Sample,
    ) -> SymMatrix {
        let fresh = oracle.hessian(sample, x);
        let h = match &self.h_prev {
            None => fresh,
            Some(prev) => {
                let b = self.rate.at(self.t);
                let mut h = prev.clone();
                h.scale(1.0 - b);
                h.add_scaled(b, &fresh);
                h
            }
        };
        self.h_prev = Some(h.clone());
        self.t += 1;
        h
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule requires M >= 100 L: got M = {m}, L = {l}; use M >= {required}")]
    RegularizationTooSmall { m: f64, l: f64, required: f64 },
    #[error("invalid schedule input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleSource {
    /// IT gradient momentum with HB Hessian momentum.
    MainIt,
    /// HB gradient momentum, `beta = 1`.
    AppendixHb,
    /// MVR gradient momentum, `beta = 1`, leading constant 72 * 32.
    AppendixMvr,
    /// MVR gradient momentum, `beta = 1`, with the `18 L_g^{4/5}` rate shared
    /// with [`ScheduleSource::AppendixHb`].
    AppendixMvrTheorem,
    /// Second-order gradient momentum, `beta = 1`.
    AppendixSom,
    /// Explicit `alpha`, `beta`.
    Manual,
}

impl ScheduleSource {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleSource::MainIt => "main_it",
            ScheduleSource::AppendixHb => "appendix_hb",
            ScheduleSource::AppendixMvr => "appendix_mvr",
            ScheduleSource::AppendixMvrTheorem => "appendix_mvr_theorem",
            ScheduleSource::AppendixSom => "appendix_som",
            ScheduleSource::Manual => "manual",
        }
    }

    /// Gradient estimator the schedule was derived for.
    pub fn variant(self) -> GradVariant {
        match self {
            ScheduleSource::MainIt | ScheduleSource::Manual => GradVariant::It,
            ScheduleSource::AppendixHb => GradVariant::Hb,
            ScheduleSource::AppendixMvr | ScheduleSource::AppendixMvrTheorem => GradVariant::Mvr,
            ScheduleSource::AppendixSom => GradVariant::Som,
        }
    }
}

impl std::str::FromStr for ScheduleSource {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = [
            ScheduleSource::MainIt,
            ScheduleSource::AppendixHb,
            ScheduleSource::AppendixMvr,
            ScheduleSource::AppendixMvrTheorem,
            ScheduleSource::AppendixSom,
            ScheduleSource::Manual,
        ];
        all.into_iter()
            .find(|src| src.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ScheduleError::Invalid(format!("unknown schedule source `{s}`")))
    }
}

/// Constant momentum parameters and regularization for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub alpha: f64,
    pub beta: f64,
    pub m: f64,
    pub horizon: usize,
    pub a_g: f64,
    pub a_h: f64,
    pub source: ScheduleSource,
}

impl Schedule {
    pub fn manual(alpha: f64, beta: f64, m: f64, horizon: usize) -> Result<Self, ScheduleError> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ScheduleError::Invalid(format!(
                    "{name} = {v} outside (0, 1]"
                )));
            }
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(ScheduleError::Invalid(format!("M = {m} must be positive")));
        }
        Ok(Self {
            alpha,
            beta,
            m,
            horizon,
            a_g: 1.0,
            a_h: 1.0,
            source: ScheduleSource::Manual,
        })
    }
}

/// Left-hand side of the iterate-bias condition for IT/HB momentum:
/// `4 sqrt(3) L^{3/2} / alpha^3 + 73 * 9 L^3 / (M^{3/2} beta^3) - M^{3/2} / 72`.
/// The condition holds when this is `<= 0`.
pub fn bias_condition(l: f64, m: f64, alpha: f64, beta: f64) -> f64 {
    4.0 * 3.0_f64.sqrt() * l.powf(1.5) / alpha.powi(3)
        + 657.0 * l.powi(3) / (m.powf(1.5) * beta.powi(3))
        - m.powf(1.5) / 72.0
}

/// Builds the schedule for `source` from the problem constants.
///
/// For [`ScheduleSource::MainIt`]:
/// `alpha = max(a_g^{6/7} / T^{4/7}, 10 sqrt(L/M))`,
/// `beta = max(a_h^{6/5} / T^{2/5}, 46 L / M)`, which requires `M >= 100 L`.
/// All outputs are clamped to `[1/T, 1]`.
pub fn make_schedule(
    constants: &ProblemConstants,
    horizon: usize,
    m: f64,
    source: ScheduleSource,
) -> Result<Schedule, ScheduleError> {
    if horizon == 0 {
        return Err(ScheduleError::Invalid("horizon T must be >= 1".into()));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(ScheduleError::Invalid(format!("M = {m} must be positive")));
    }
    if !constants.is_consistent() {
        return Err(ScheduleError::Invalid(format!(
            "inconsistent constants {constants:?}"
        )));
    }
    let t = horizon as f64;
    let l = constants.l_hess;
    let lg = constants.l_grad;
    let sg = constants.sigma_g;
    let sh = constants.sigma_h;
    let a_g = constants.a_g();
    let a_h = constants.a_h();

    let (alpha, beta) = match source {
        ScheduleSource::MainIt => {
            if m < 100.0 * l {
                return Err(ScheduleError::RegularizationTooSmall {
                    m,
                    l,
                    required: 100.0 * l,
                });
            }
            let alpha = (a_g.powf(6.0 / 7.0) / t.powf(4.0 / 7.0)).max(10.0 * (l / m).sqrt());
            let beta = (a_h.powf(6.0 / 5.0) / t.powf(2.0 / 5.0)).max(46.0 * l / m);
            (alpha, beta)
        }
        ScheduleSource::AppendixHb | ScheduleSource::AppendixMvrTheorem => {
            let alpha = 18.0 * lg.powf(0.8) / (m.powf(0.4) * sg.powf(0.4));
            (alpha.min(1.0), 1.0)
        }
        ScheduleSource::AppendixMvr => {
            let alpha = 2304.0 * (lg * lg / (m * sg)).powf(6.0 / 11.0);
            (alpha.min(1.0), 1.0)
        }
        ScheduleSource::AppendixSom => {
            let gamma_aux = (m / 3175.0).min(m.powf(0.6) * sh.powf(0.8) / sg.powf(0.4));
            let alpha = 3175.0 * l.max(gamma_aux) / m;
            (alpha.min(1.0), 1.0)
        }
        ScheduleSource::Manual => {
            return Err(ScheduleError::Invalid(
                "manual schedules take explicit alpha and beta; use Schedule::manual".into(),
            ))
        }
    };
    let floor = 1.0 / t;
    let clamp = |v: f64| if v.is_nan() { 1.0 } else { v.clamp(floor, 1.0) };
    Ok(Schedule {
        alpha: clamp(alpha),
        beta: clamp(beta),
        m,
        horizon,
        a_g,
        a_h,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic oracle `grad f(x) = x + noise[k]` that counts draws and
    /// evaluations; the k-th draw returns index k.
    struct Scripted {
        offsets: Vec<Vec<f64>>,
        next: usize,
        draws: usize,
        grads: usize,
        hessians: usize,
    }

    impl Scripted {
        fn new(offsets: Vec<Vec<f64>>) -> Self {
            Self {
                offsets,
                next: 0,
                draws: 0,
                grads: 0,
                hessians: 0,
            }
        }
    }

    impl SampleOracle for Scripted {
        type Sample = usize;
        fn draw(&mut self) -> usize {
            self.draws += 1;
            let k = self.next;
            self.next += 1;
            k
        }
        fn gradient(&mut self, k: &usize, x: &[f64]) -> Vector {
            self.grads += 1;
            let off = &self.offsets[k % self.offsets.len()];
            x.iter().zip(off).map(|(a, b)| a + b).collect()
        }
        fn hessian(&mut self, k: &usize, x: &[f64]) -> SymMatrix {
            self.hessians += 1;
            let off = &self.offsets[k % self.offsets.len()];
            SymMatrix::from_diag(&off.iter().map(|o| 1.0 + o + 0.0 * x[0]).collect::<Vec<_>>())
        }
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from(x.to_vec())
    }

    #[test]
    fn alpha_one_is_plain_sample() {
        for variant in [
            GradVariant::It,
            GradVariant::Hb,
            GradVariant::Mvr,
            GradVariant::Som,
        ] {
            let mut est = GradEstimator::new(variant, 1.0).unwrap();
            let mut o = Scripted::new(vec![vec![0.5, -1.0], vec![2.0, 3.0], vec![-4.0, 0.0]]);
            let h = SymMatrix::identity(2);
            est.update(&[0.0, 0.0], &mut o, Some(&h)).unwrap();
            let g = est.update(&[1.0, 2.0], &mut o, Some(&h)).unwrap();
            assert_eq!(g, v(&[3.0, 5.0]), "{variant:?}");
        }
    }

    #[test]
    fn it_evaluates_at_transported_point() {
        // deterministic grad f(x) = x: g_t equals grad f(x_t) exactly
        let mut est = GradEstimator::new(GradVariant::It, 0.5).unwrap();
        let mut o = Scripted::new(vec![vec![0.0, 0.0]]);
        est.initialize(&[0.0, 0.0], v(&[0.0, 0.0]));
        let g = est.update(&[1.0, 0.0], &mut o, None).unwrap();
        assert_eq!(g, v(&[1.0, 0.0]));
    }

    #[test]
    fn it_transport_offset() {
        // alpha = 0.5, x_t - x_{t-1} = (1, 0) => evaluation point x_t + (1, 0)
        struct Probe(Vec<Vec<f64>>);
        impl SampleOracle for Probe {
            type Sample = ();
            fn draw(&mut self) {}
            fn gradient(&mut self, _: &(), x: &[f64]) -> Vector {
                self.0.push(x.to_vec());
                Vector::zeros(x.len())
            }
            fn hessian(&mut self, _: &(), x: &[f64]) -> SymMatrix {
                SymMatrix::zeros(x.len())
            }
        }
        let mut est = GradEstimator::new(GradVariant::It, 0.5).unwrap();
        let mut o = Probe(Vec::new());
        est.initialize(&[2.0, 1.0], v(&[0.0, 0.0]));
        est.update(&[3.0, 1.0], &mut o, None).unwrap();
        assert_eq!(o.0, vec![vec![4.0, 1.0]]);
    }

    #[test]
    fn hb_convex_combination() {
        let mut est = GradEstimator::new(GradVariant::Hb, 0.25).unwrap();
        let mut o = Scripted::new(vec![vec![0.0]]);
        est.initialize(&[0.0], v(&[2.0]));
        let g = est.update(&[0.0], &mut o, None).unwrap();
        assert_eq!(g, v(&[1.5]));
    }

    #[test]
    fn hb_constant_field_is_fixed_point() {
        struct Constant;
        impl SampleOracle for Constant {
            type Sample = ();
            fn draw(&mut self) {}
            fn gradient(&mut self, _: &(), _: &[f64]) -> Vector {
                v(&[3.0, -1.0])
            }
            fn hessian(&mut self, _: &(), _: &[f64]) -> SymMatrix {
                SymMatrix::zeros(2)
            }
        }
        let mut est = GradEstimator::new(GradVariant::Hb, 0.3).unwrap();
        for k in 0..10 {
            let g = est.update(&[k as f64, 1.0], &mut Constant, None).unwrap();
            assert!((g[0] - 3.0).abs() < 1e-14 && (g[1] + 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_iterate_reduces_mvr_and_som_to_hb() {
        let offsets = vec![
            vec![1.0, -2.0],
            vec![0.5, 0.5],
            vec![-3.0, 1.0],
            vec![2.0, 2.0],
        ];
        let x = [0.7, -0.2];
        let h = SymMatrix::from_diag(&[5.0, -7.0]);
        let mut seqs = Vec::new();
        for variant in [GradVariant::Hb, GradVariant::Mvr, GradVariant::Som] {
            let mut est = GradEstimator::new(variant, 0.3).unwrap();
            let mut o = Scripted::new(offsets.clone());
            let seq: Vec<Vector> = (0..6)
                .map(|_| est.update(&x, &mut o, Some(&h)).unwrap())
                .collect();
            seqs.push(seq);
        }
        for k in 0..6 {
            for s in &seqs[1..] {
                assert!((s[k][0] - seqs[0][k][0]).abs() < 1e-14);
                assert!((s[k][1] - seqs[0][k][1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn draw_and_evaluation_counts() {
        for variant in [
            GradVariant::It,
            GradVariant::Hb,
            GradVariant::Mvr,
            GradVariant::Som,
        ] {
            let mut est = GradEstimator::new(variant, 0.4).unwrap();
            let mut o = Scripted::new(vec![vec![1.0]]);
            let h = SymMatrix::identity(1);
            est.update(&[0.0], &mut o, Some(&h)).unwrap();
            assert_eq!((o.draws, o.grads), (1, 1));
            for k in 1..=5 {
                est.update(&[k as f64], &mut o, Some(&h)).unwrap();
                assert_eq!(o.draws, 1 + k);
                assert_eq!(o.grads, 1 + k * variant.evaluations_per_update());
            }
        }
        let mut hest = HessEstimator::new(0.2).unwrap();
        let mut o = Scripted::new(vec![vec![1.0]]);
        for k in 1..=4 {
            hest.update(&[0.0], &mut o);
            assert_eq!((o.draws, o.hessians, o.grads), (k, k, 0));
        }
    }

    #[test]
    fn mvr_needs_replay() {
        struct NoReplay;
        impl SampleOracle for NoReplay {
            type Sample = ();
            fn draw(&mut self) {}
            fn gradient(&mut self, _: &(), x: &[f64]) -> Vector {
                Vector::zeros(x.len())
            }
            fn hessian(&mut self, _: &(), x: &[f64]) -> SymMatrix {
                SymMatrix::zeros(x.len())
            }
            fn supports_replay(&self) -> bool {
                false
            }
        }
        let mut est = GradEstimator::new(GradVariant::Mvr, 0.5).unwrap();
        est.update(&[0.0], &mut NoReplay, None).unwrap();
        assert_eq!(
            est.update(&[1.0], &mut NoReplay, None),
            Err(EstimatorError::ReplayUnsupported)
        );
    }

    #[test]
    fn som_needs_hessian() {
        let mut est = GradEstimator::new(GradVariant::Som, 0.5).unwrap();
        let mut o = Scripted::new(vec![vec![0.0]]);
        est.update(&[0.0], &mut o, None).unwrap();
        assert_eq!(
            est.update(&[1.0], &mut o, None),
            Err(EstimatorError::MissingHessian)
        );
    }

    #[test]
    fn invalid_momentum_rejected() {
        assert_eq!(
            GradEstimator::new(GradVariant::It, 0.0),
            Err(EstimatorError::InvalidMomentum(0.0))
        );
        assert!(GradEstimator::new(GradVariant::It, 1.5).is_err());
        assert!(HessEstimator::new(-0.1).is_err());
    }

    #[test]
    fn hessian_moving_average() {
        let mut est = HessEstimator::new(0.5).unwrap();
        est.initialize(SymMatrix::identity(2));
        struct Three;
        impl SampleOracle for Three {
            type Sample = ();
            fn draw(&mut self) {}
            fn gradient(&mut self, _: &(), x: &[f64]) -> Vector {
                Vector::zeros(x.len())
            }
            fn hessian(&mut self, _: &(), _: &[f64]) -> SymMatrix {
                let mut h = SymMatrix::identity(2);
                h.scale(3.0);
                h
            }
        }
        let h = est.update(&[0.0, 0.0], &mut Three);
        let mut expect = SymMatrix::identity(2);
        expect.scale(2.0);
        assert_eq!(h, expect);

        let mut plain = HessEstimator::new(1.0).unwrap();
        plain.initialize(SymMatrix::identity(2));
        assert_eq!(plain.update(&[0.0, 0.0], &mut Three).get(0, 0), 3.0);
    }

    #[test]
    fn harmonic_rate_is_running_mean() {
        let offsets = vec![vec![1.0], vec![2.0], vec![6.0], vec![-1.0]];
        let mut est = GradEstimator::with_rate(GradVariant::Hb, MomentumRate::Harmonic);
        let mut o = Scripted::new(offsets);
        let mut last = Vector::zeros(1);
        for _ in 0..4 {
            last = est.update(&[0.0], &mut o, None).unwrap();
        }
        assert!((last[0] - 2.0).abs() < 1e-15);
    }

    fn unit_constants() -> ProblemConstants {
        ProblemConstants::new(1.0, 1.0, 1.0, 1.0, 1.0)
    }

    #[test]
    fn main_schedule_reference_values() {
        let s = make_schedule(&unit_constants(), 10_000, 1e4, ScheduleSource::MainIt).unwrap();
        // alpha = max(10^{-16/7}, 10 * 10^{-2}); beta = max(10^{-8/5}, 46 * 10^{-4})
        assert!((s.alpha - 0.1).abs() < 1e-12);
        assert!((s.beta - 10f64.powf(-1.6)).abs() < 1e-12);
        assert!((s.beta - 0.025119).abs() < 1e-6);
        assert!(bias_condition(1.0, 1e4, s.alpha, s.beta) <= 0.0);
    }

    #[test]
    fn main_schedule_saturates_at_m_100l() {
        let s = make_schedule(&unit_constants(), 10, 100.0, ScheduleSource::MainIt).unwrap();
        assert_eq!(s.alpha, 1.0);
        assert!(bias_condition(1.0, 100.0, s.alpha, s.beta) <= 0.0);
    }

    #[test]
    fn exact_initial_gradient_leaves_floor_only() {
        let mut k = unit_constants();
        k.sigma_g0 = 0.0;
        k.sigma_h0 = 0.0;
        let s = make_schedule(&k, 1000, 1e4, ScheduleSource::MainIt).unwrap();
        assert!((s.alpha - 0.1).abs() < 1e-15);
        assert!((s.beta - 46.0 * 1e-4).abs() < 1e-15);
    }

    #[test]
    fn main_schedule_rejects_small_m() {
        let err = make_schedule(&unit_constants(), 100, 50.0, ScheduleSource::MainIt).unwrap_err();
        assert!(matches!(err, ScheduleError::RegularizationTooSmall { .. }));
        assert!(err.to_string().contains("M >= 100 L"));
    }

    #[test]
    fn appendix_schedules() {
        let k = ProblemConstants::new(1.0, 2.0, 100.0, 3.0, 4.0);
        let m = 1e6;
        let hb = make_schedule(&k, 100, m, ScheduleSource::AppendixHb).unwrap();
        let expect = 18.0 * 2f64.powf(0.8) / (m.powf(0.4) * 100f64.powf(0.4));
        assert!((hb.alpha - expect).abs() < 1e-15);
        assert_eq!(hb.beta, 1.0);

        let mvr = make_schedule(&k, 100_000, 1e12, ScheduleSource::AppendixMvr).unwrap();
        let expect = 2304.0 * (4.0 / (1e12 * 100.0_f64)).powf(6.0 / 11.0);
        assert!((mvr.alpha - expect).abs() < 1e-15 * expect.max(1.0));
        assert_eq!(mvr.beta, 1.0);

        let som = make_schedule(&k, 100, m, ScheduleSource::AppendixSom).unwrap();
        let gamma = (m / 3175.0).min(m.powf(0.6) * 3f64.powf(0.8) / 100f64.powf(0.4));
        assert!((som.alpha - (3175.0 * gamma.max(1.0) / m).min(1.0)).abs() < 1e-15);

        assert!(make_schedule(&k, 100, m, ScheduleSource::Manual).is_err());
    }

    #[test]
    fn schedule_outputs_stay_in_unit_interval() {
        let k = ProblemConstants::new(0.0, 0.0, 0.0, 0.0, 0.0);
        for src in [
            ScheduleSource::MainIt,
            ScheduleSource::AppendixHb,
            ScheduleSource::AppendixMvr,
            ScheduleSource::AppendixSom,
        ] {
            let s = make_schedule(&k, 50, 1.0, src).unwrap();
            assert!(s.alpha > 0.0 && s.alpha <= 1.0, "{src:?}");
            assert!(s.beta > 0.0 && s.beta <= 1.0, "{src:?}");
        }
    }

    #[test]
    fn source_names_round_trip() {
        for src in [
            ScheduleSource::MainIt,
            ScheduleSource::AppendixHb,
            ScheduleSource::AppendixMvr,
            ScheduleSource::AppendixMvrTheorem,
            ScheduleSource::AppendixSom,
            ScheduleSource::Manual,
        ] {
            assert_eq!(src.name().parse::<ScheduleSource>().unwrap(), src);
        }
        assert!("bogus".parse::<ScheduleSource>().is_err());
    }
}
