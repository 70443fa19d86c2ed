//! Finite-sum objectives `f(x) = (1/n) sum_i f_i(x)` with per-sample and
//! full derivatives.
//!
//! Three families are provided:
//!
//! - logistic loss plus the non-convex regularizer
//!   `Reg(x) = sum_j x_j^2 / (1 + x_j^2)` weighted by `reg_weight`,
//! - logistic loss plus a ridge term `ridge/2 |x|^2` (convex),
//! - sums of quadratics `f_i(x) = x^T A_i x / 2 + b_i^T x`.

use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::Dataset;
use crate::numkit::{self, LinalgError, SymMatrix, Vector};

/// Multiplier applied to every estimated constant.
pub const SAFETY_FACTOR: f64 = 1.5;
/// Distance of the random probe points from `x0` used for Lipschitz estimates.
pub const PROBE_RADIUS: f64 = 1.0;
/// Cap on the number of samples used for noise-level estimates.
pub const NOISE_SAMPLE_CAP: usize = 512;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    LogisticNonconvex,
    LogisticConvex,
    QuadraticSum,
}

/// One component `f_i(x) = x^T a x / 2 + b^T x` of a quadratic sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadComponent {
    pub a: SymMatrix,
    pub b: Vector,
}

#[derive(Debug, Clone)]
enum Objective {
    Logistic {
        data: Arc<Dataset>,
        reg_weight: f64,
        ridge: f64,
    },
    Quadratic {
        components: Arc<Vec<QuadComponent>>,
    },
}

/// A finite-sum objective oracle. Cheap to clone; data is shared.
#[derive(Debug, Clone)]
pub struct Problem {
    dim: usize,
    kind: ProblemKind,
    objective: Objective,
}

/// Sample indices drawn uniformly with replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, n: usize, size: usize) -> Self {
        Self {
            indices: (0..size).map(|_| rng.random_range(0..n)).collect(),
        }
    }

    /// Every sample exactly once.
    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
        }
    }

    pub fn single(i: usize) -> Self {
        Self { indices: vec![i] }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `Reg(x) = sum_j x_j^2 / (1 + x_j^2)`
pub fn nonconvex_reg(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v / (1.0 + v * v)).sum()
}

/// `d/dx_j Reg = 2 x_j / (1 + x_j^2)^2`
pub fn nonconvex_reg_grad(x: &[f64]) -> Vector {
    x.iter()
        .map(|v| {
            let q = 1.0 + v * v;
            2.0 * v / (q * q)
        })
        .collect()
}

/// Diagonal of the regularizer Hessian, `(2 - 6 x_j^2) / (1 + x_j^2)^3`.
pub fn nonconvex_reg_hess_diag(x: &[f64]) -> Vector {
    x.iter()
        .map(|v| {
            let q = 1.0 + v * v;
            (2.0 - 6.0 * v * v) / (q * q * q)
        })
        .collect()
}

impl Problem {
    pub fn logistic_nonconvex(data: Arc<Dataset>, reg_weight: f64) -> Result<Self, ProblemError> {
        if !(reg_weight >= 0.0 && reg_weight.is_finite()) {
            return Err(ProblemError::Argument(format!(
                "reg_weight {reg_weight} must be >= 0"
            )));
        }
        Ok(Self {
            dim: data.dim(),
            kind: ProblemKind::LogisticNonconvex,
            objective: Objective::Logistic {
                data,
                reg_weight,
                ridge: 0.0,
            },
        })
    }

    pub fn logistic_convex(data: Arc<Dataset>, ridge: f64) -> Result<Self, ProblemError> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(ProblemError::Argument(format!(
                "ridge {ridge} must be >= 0"
            )));
        }
        Ok(Self {
            dim: data.dim(),
            kind: ProblemKind::LogisticConvex,
            objective: Objective::Logistic {
                data,
                reg_weight: 0.0,
                ridge,
            },
        })
    }

    pub fn quadratic_sum(components: Vec<QuadComponent>) -> Result<Self, ProblemError> {
        let Some(first) = components.first() else {
            return Err(ProblemError::Argument(
                "quadratic sum needs >= 1 component".into(),
            ));
        };
        let dim = first.b.dim();
        if dim == 0
            || components.iter().any(|c| {
                c.a.dim() != dim || c.b.dim() != dim || !c.a.is_finite() || !c.b.is_finite()
            })
        {
            return Err(ProblemError::Argument(
                "quadratic components must share a dimension >= 1 and be finite".into(),
            ));
        }
        Ok(Self {
            dim,
            kind: ProblemKind::QuadraticSum,
            objective: Objective::Quadratic {
                components: Arc::new(components),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n_samples(&self) -> usize {
        match &self.objective {
            Objective::Logistic { data, .. } => data.n(),
            Objective::Quadratic { components } => components.len(),
        }
    }

    /// Weight of the non-convex regularizer (0 for the other kinds).
    pub fn reg_weight(&self) -> f64 {
        match &self.objective {
            Objective::Logistic { reg_weight, .. } => *reg_weight,
            Objective::Quadratic { .. } => 0.0,
        }
    }

    pub fn dataset(&self) -> Option<&Arc<Dataset>> {
        match &self.objective {
            Objective::Logistic { data, .. } => Some(data),
            Objective::Quadratic { .. } => None,
        }
    }

    pub fn sample_value(&self, i: usize, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Logistic {
                data,
                reg_weight,
                ridge,
            } => {
                let z = data.row(i).dot(x);
                softplus(-data.label(i) * z) + self.shared_value(*reg_weight, *ridge, x)
            }
            Objective::Quadratic { components } => {
                let c = &components[i];
                0.5 * c.a.quad_form(x) + c.b.dot(x)
            }
        }
    }

    fn shared_value(&self, reg_weight: f64, ridge: f64, x: &[f64]) -> f64 {
        let mut v = 0.0;
        if reg_weight != 0.0 {
            v += reg_weight * nonconvex_reg(x);
        }
        if ridge != 0.0 {
            v += 0.5 * ridge * numkit::dot(x, x);
        }
        v
    }

    // Loss part only; the sample-independent terms are added by callers once.
    fn accumulate_loss_gradient(&self, i: usize, x: &[f64], w: f64, out: &mut [f64]) {
        match &self.objective {
            Objective::Logistic { data, .. } => {
                let row = data.row(i);
                let y = data.label(i);
                let c = -y * sigmoid(-y * row.dot(x)) * w;
                for (&j, &v) in row.indices.iter().zip(&row.values) {
                    out[j as usize] += c * v;
                }
            }
            Objective::Quadratic { components } => {
                let comp = &components[i];
                let ax = comp.a.matvec(x);
                numkit::axpy(out, w, &ax);
                numkit::axpy(out, w, &comp.b);
            }
        }
    }

    fn accumulate_loss_hessian(&self, i: usize, x: &[f64], w: f64, out: &mut SymMatrix) {
        match &self.objective {
            Objective::Logistic { data, .. } => {
                let row = data.row(i);
                let s = sigmoid(row.dot(x));
                out.add_sparse_rank_one(w * s * (1.0 - s), &row.indices, &row.values);
            }
            Objective::Quadratic { components } => out.add_scaled(w, &components[i].a),
        }
    }

    fn add_shared_gradient(&self, x: &[f64], out: &mut [f64]) {
        if let Objective::Logistic {
            reg_weight, ridge, ..
        } = &self.objective
        {
            if *reg_weight != 0.0 {
                numkit::axpy(out, *reg_weight, &nonconvex_reg_grad(x));
            }
            if *ridge != 0.0 {
                numkit::axpy(out, *ridge, x);
            }
        }
    }

    fn add_shared_hessian(&self, x: &[f64], out: &mut SymMatrix) {
        if let Objective::Logistic {
            reg_weight, ridge, ..
        } = &self.objective
        {
            if *reg_weight != 0.0 {
                for (j, h) in nonconvex_reg_hess_diag(x).iter().enumerate() {
                    out.set(j, j, out.get(j, j) + reg_weight * h);
                }
            }
            if *ridge != 0.0 {
                out.add_diag(*ridge);
            }
        }
    }

    /// `grad f_i(x)`
    pub fn sample_gradient_at(&self, i: usize, x: &[f64]) -> Vector {
        self.sample_gradient(x, &Batch::single(i))
    }

    /// `hess f_i(x)`
    pub fn sample_hessian_at(&self, i: usize, x: &[f64]) -> SymMatrix {
        self.sample_hessian(x, &Batch::single(i))
    }

    /// Mean of the per-sample gradients over `batch`.
    pub fn sample_gradient(&self, x: &[f64], batch: &Batch) -> Vector {
        assert!(!batch.is_empty(), "empty batch");
        let mut g = Vector::zeros(self.dim);
        let w = 1.0 / batch.len() as f64;
        for &i in &batch.indices {
            self.accumulate_loss_gradient(i, x, w, &mut g);
        }
        self.add_shared_gradient(x, &mut g);
        g
    }

    /// Mean of the per-sample Hessians over `batch`.
    pub fn sample_hessian(&self, x: &[f64], batch: &Batch) -> SymMatrix {
        assert!(!batch.is_empty(), "empty batch");
        let mut h = SymMatrix::zeros(self.dim);
        let w = 1.0 / batch.len() as f64;
        for &i in &batch.indices {
            self.accumulate_loss_hessian(i, x, w, &mut h);
        }
        self.add_shared_hessian(x, &mut h);
        h
    }

    pub fn full_value(&self, x: &[f64]) -> f64 {
        let n = self.n_samples();
        match &self.objective {
            Objective::Logistic {
                data,
                reg_weight,
                ridge,
            } => {
                let loss: f64 = (0..n)
                    .map(|i| softplus(-data.label(i) * data.row(i).dot(x)))
                    .sum::<f64>()
                    / n as f64;
                loss + self.shared_value(*reg_weight, *ridge, x)
            }
            Objective::Quadratic { .. } => {
                (0..n).map(|i| self.sample_value(i, x)).sum::<f64>() / n as f64
            }
        }
    }

    pub fn full_gradient(&self, x: &[f64]) -> Vector {
        self.sample_gradient(x, &Batch::all(self.n_samples()))
    }

    pub fn full_hessian(&self, x: &[f64]) -> SymMatrix {
        self.sample_hessian(x, &Batch::all(self.n_samples()))
    }
}

/// Problem constants consumed by the parameter schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Hessian Lipschitz constant.
    pub l_hess: f64,
    /// Gradient Lipschitz constant.
    pub l_grad: f64,
    pub sigma_g: f64,
    pub sigma_h: f64,
    /// Almost-sure bound on the Hessian deviation.
    pub delta_h: f64,
    /// Gradient noise level of the initial estimate.
    pub sigma_g0: f64,
    /// Hessian noise level of the initial estimate.
    pub sigma_h0: f64,
}

impl ProblemConstants {
    /// Constants with the initial noise equal to the running noise.
    pub fn new(l_hess: f64, l_grad: f64, sigma_g: f64, sigma_h: f64, delta_h: f64) -> Self {
        Self {
            l_hess,
            l_grad,
            sigma_g,
            sigma_h,
            delta_h: delta_h.max(sigma_h),
            sigma_g0: sigma_g,
            sigma_h0: sigma_h,
        }
    }

    /// Initial noise levels implied by averaging an initial batch of `b0`
    /// independent samples.
    pub fn with_initial_batch(mut self, b0: usize) -> Self {
        let scale = 1.0 / (b0.max(1) as f64).sqrt();
        self.sigma_g0 = self.sigma_g * scale;
        self.sigma_h0 = self.sigma_h * scale;
        self
    }

    /// `sigma_g0 / sigma_g` (1 when there is no gradient noise).
    pub fn a_g(&self) -> f64 {
        ratio(self.sigma_g0, self.sigma_g)
    }

    /// `sigma_h0 / sigma_h` (1 when there is no Hessian noise).
    pub fn a_h(&self) -> f64 {
        ratio(self.sigma_h0, self.sigma_h)
    }

    pub fn is_consistent(&self) -> bool {
        let all = [
            self.l_hess,
            self.l_grad,
            self.sigma_g,
            self.sigma_h,
            self.delta_h,
            self.sigma_g0,
            self.sigma_h0,
        ];
        all.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.sigma_g0 <= self.sigma_g
            && self.sigma_h0 <= self.sigma_h
            && self.delta_h >= self.sigma_h
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).min(1.0)
    } else {
        1.0
    }
}

/// Heuristic estimates of the problem constants around `x0`.
///
/// `probes` points are used in total: `x0` itself and `probes - 1` points at
/// distance [`PROBE_RADIUS`] in random directions. The Hessian Lipschitz
/// constant is the largest spectral-norm difference quotient over all probe
/// pairs, and the gradient Lipschitz constant the largest Hessian spectral
/// norm over the probes. Noise levels are root-mean-square deviations of
/// single-sample gradients and Hessians at `x0` over all samples (or a seeded
/// subset of [`NOISE_SAMPLE_CAP`] of them); `delta_h` is the largest observed
/// Hessian deviation. Every value is multiplied by [`SAFETY_FACTOR`].
pub fn estimate_constants(
    p: &Problem,
    x0: &[f64],
    probes: usize,
    seed: u64,
) -> Result<ProblemConstants, ProblemError> {
    if probes < 2 {
        return Err(ProblemError::Argument(format!(
            "probes = {probes}, need >= 2"
        )));
    }
    if x0.len() != p.dim() {
        return Err(ProblemError::Argument("x0 has the wrong dimension".into()));
    }
    let d = p.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut points = vec![Vector::from(x0.to_vec())];
    while points.len() < probes {
        let mut u: Vector = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let un = u.norm();
        if un == 0.0 {
            continue;
        }
        u.scale(PROBE_RADIUS / un);
        points.push(u.add(x0));
    }
    let hessians: Vec<SymMatrix> = points.iter().map(|x| p.full_hessian(x)).collect();

    let mut l_hess: f64 = 0.0;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            let dist = numkit::norm(&points[a].sub(&points[b]));
            if dist > 0.0 {
                l_hess = l_hess.max(hessians[a].sub(&hessians[b]).spectral_norm()? / dist);
            }
        }
    }
    let mut l_grad: f64 = 0.0;
    for h in &hessians {
        l_grad = l_grad.max(h.spectral_norm()?);
    }

    let n = p.n_samples();
    let samples: Vec<usize> = if n <= NOISE_SAMPLE_CAP {
        (0..n).collect()
    } else {
        let mut s = index::sample(&mut rng, n, NOISE_SAMPLE_CAP).into_vec();
        s.sort_unstable();
        s
    };
    let g_full = p.full_gradient(x0);
    let h_full = &hessians[0];
    let mut g_sq = 0.0;
    let mut h_sq = 0.0;
    let mut h_max: f64 = 0.0;
    for &i in &samples {
        let dg = p.sample_gradient_at(i, x0).sub(&g_full);
        g_sq += dg.dot(&dg);
        let dh = p.sample_hessian_at(i, x0).sub(h_full).spectral_norm()?;
        h_sq += dh * dh;
        h_max = h_max.max(dh);
    }
    let m = samples.len() as f64;
    let sigma_g = (g_sq / m).sqrt();
    let sigma_h = (h_sq / m).sqrt();

    Ok(ProblemConstants::new(
        SAFETY_FACTOR * l_hess,
        SAFETY_FACTOR * l_grad,
        SAFETY_FACTOR * sigma_g,
        SAFETY_FACTOR * sigma_h,
        SAFETY_FACTOR * h_max,
    ))
}
