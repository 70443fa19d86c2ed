//! Global minimizer of the cubically regularized model
//!
//! ```text
//! Omega(s) = <g, s> + <H s, s> / 2 + (M / 6) |s|^3
//! ```
//!
//! A global minimizer is characterized by `(H + gamma I) s = -g` with
//! `gamma = M |s| / 2` and `H + gamma I` positive semidefinite. After one
//! eigendecomposition of `H`, `gamma` is the root of the scalar secular
//! function `phi(gamma) = |(H + gamma I)^{-1} g| - 2 gamma / M` on
//! `gamma > max(0, -lambda_min)`. `phi` is convex and strictly decreasing
//! there, so a Newton iteration kept inside a bisection bracket converges
//! from any start. When `g` has no component along the minimal eigenspace
//! and `phi` is already negative at the left end (the hard case), the
//! minimizer is `-(H + gamma I)^+ g + tau v_min` with `gamma = -lambda_min`.
//!
//! The root is searched in the offset `delta = gamma - max(0, -lambda_min)`
//! and denominators are formed as `(lambda_i - lambda_min) + delta`, which
//! keeps full relative precision next to the pole.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{self, sym_eig, EigDecomp, LinalgError, SymMatrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CubicError {
    #[error("cubic regularization M must be positive and finite, got {0}")]
    InvalidRegularization(f64),
    #[error("model has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: g has {g}, H has {h}")]
    DimensionMismatch { g: usize, h: usize },
    #[error("secular root not found after {iterations} iterations; bracket [{lo:e}, {hi:e}]")]
    NoConvergence { iterations: usize, lo: f64, hi: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicOptions {
    /// Root-finder iteration budget.
    pub max_iter: usize,
    /// `g` counts as orthogonal to the minimal eigenspace when its projection
    /// has norm at most `orth_tol * (1 + |g|)`.
    pub orth_tol: f64,
    /// Eigenvalues within `eig_tol * (1 + |lambda|_max)` of `lambda_min`
    /// belong to the minimal eigenspace.
    pub eig_tol: f64,
    /// Relative tolerance on the secular equation.
    pub secular_tol: f64,
}

impl Default for CubicOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            orth_tol: 1e-10,
            eig_tol: 1e-10,
            secular_tol: 1e-15,
        }
    }
}

/// The model `Omega(s) = <g, s> + <H s, s> / 2 + M |s|^3 / 6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicModel {
    pub g: Vector,
    pub h: SymMatrix,
    pub m: f64,
}

impl CubicModel {
    pub fn new(g: Vector, h: SymMatrix, m: f64) -> Result<Self, CubicError> {
        let model = Self { g, h, m };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), CubicError> {
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(CubicError::InvalidRegularization(self.m));
        }
        if self.g.dim() != self.h.dim() {
            return Err(CubicError::DimensionMismatch {
                g: self.g.dim(),
                h: self.h.dim(),
            });
        }
        if !self.g.is_finite() || !self.h.is_finite() {
            return Err(CubicError::NonFinite);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        model_value(self, s)
    }

    /// `|g + H s + (M/2) |s| s|`
    pub fn stationarity_residual(&self, s: &[f64]) -> f64 {
        let r = numkit::norm(s);
        let mut res = self.h.matvec(s);
        res.axpy(1.0, &self.g);
        res.axpy(0.5 * self.m * r, s);
        res.norm()
    }
}

/// Solution of the cubic subproblem with its optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicStepResult {
    /// Step `s = x+ - x`.
    pub s: Vector,
    /// Multiplier `gamma = M |s| / 2`.
    pub gamma: f64,
    pub model_value: f64,
    pub hard_case: bool,
    /// `|g + H s + (M/2)|s| s|`
    pub residual: f64,
    /// Smallest eigenvalue of `H`.
    pub lambda_min: f64,
    /// Root-finder iterations used.
    pub iterations: usize,
}

impl CubicStepResult {
    pub fn step_norm(&self) -> f64 {
        self.s.norm()
    }

    /// `lambda_min(H) + gamma`, nonnegative at a global minimizer.
    pub fn shifted_min_eigenvalue(&self) -> f64 {
        self.lambda_min + self.gamma
    }
}

/// `<g, s> + <H s, s> / 2 + (M / 6) |s|^3`
pub fn model_value(model: &CubicModel, s: &[f64]) -> f64 {
    let r = numkit::norm(s);
    model.g.dot(s) + 0.5 * model.h.quad_form(s) + model.m / 6.0 * r * r * r
}

/// Second-order stationarity measure
/// `max(|grad|^{3/2}, max(0, -lambda_min(hess))^3 / M^{3/2})`.
pub fn mu_measure(grad: &[f64], hess: &SymMatrix, m: f64) -> Result<f64, CubicError> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(CubicError::InvalidRegularization(m));
    }
    let (lambda_min, _) = numkit::min_eigenvalue(hess)?;
    Ok(mu_from_parts(numkit::norm(grad), lambda_min, m))
}

/// [`mu_measure`] from a gradient norm and a precomputed smallest eigenvalue.
pub fn mu_from_parts(grad_norm: f64, lambda_min: f64, m: f64) -> f64 {
    let curvature = (-lambda_min).max(0.0);
    grad_norm.powf(1.5).max(curvature.powi(3) / m.powf(1.5))
}

pub fn solve_cubic(model: &CubicModel) -> Result<CubicStepResult, CubicError> {
    solve_cubic_with(model, &CubicOptions::default())
}

pub fn solve_cubic_with(
    model: &CubicModel,
    opts: &CubicOptions,
) -> Result<CubicStepResult, CubicError> {
    model.validate()?;
    let eig = sym_eig(&model.h)?;
    solve_cubic_eig(model, &eig, opts)
}

/// Solves with a precomputed eigendecomposition of `model.h`.
pub fn solve_cubic_eig(
    model: &CubicModel,
    eig: &EigDecomp,
    opts: &CubicOptions,
) -> Result<CubicStepResult, CubicError> {
    let n = model.dim();
    let m = model.m;
    if n == 0 {
        return Ok(finish(model, Vector::zeros(0), 0.0, false, 0));
    }
    let lambda_min = eig.values[0];
    let lambda_scale = eig.values[0].abs().max(eig.values[n - 1].abs());
    let gamma_lo = (-lambda_min).max(0.0);
    // lambda_i + gamma_lo, exact zero for the smallest eigenvalue when it is negative
    let base: Vec<f64> = if lambda_min < 0.0 {
        eig.values.iter().map(|&l| l - lambda_min).collect()
    } else {
        eig.values.clone()
    };
    let mut coords = eig.to_eigenbasis(&model.g);
    let g_norm = model.g.norm();

    let min_space: Vec<usize> = (0..n)
        .take_while(|&k| eig.values[k] - lambda_min <= opts.eig_tol * (1.0 + lambda_scale))
        .collect();
    let proj_norm = min_space
        .iter()
        .map(|&k| coords[k] * coords[k])
        .sum::<f64>()
        .sqrt();
    let orthogonal = proj_norm <= opts.orth_tol * (1.0 + g_norm);

    if g_norm == 0.0 && lambda_min >= 0.0 {
        return Ok(finish(model, Vector::zeros(n), lambda_min, false, 0));
    }

    if orthogonal && lambda_min < 0.0 {
        for &k in &min_space {
            coords[k] = 0.0;
        }
        // pseudo-inverse step at the left end of the admissible interval
        let bar_norm = coords
            .iter()
            .zip(&base)
            .enumerate()
            .filter(|(k, _)| !min_space.contains(k))
            .map(|(_, (c, b))| (c / b) * (c / b))
            .sum::<f64>()
            .sqrt();
        let target = 2.0 * gamma_lo / m;
        if bar_norm <= target {
            let mut step: Vec<f64> = coords
                .iter()
                .zip(&base)
                .enumerate()
                .map(|(k, (c, b))| if min_space.contains(&k) { 0.0 } else { -c / b })
                .collect();
            let tau = (target * target - bar_norm * bar_norm).max(0.0).sqrt();
            // eigenvectors are sign-normalized, so +tau fixes the tie
            step[0] = tau;
            let s = eig.from_eigenbasis(&step);
            return Ok(finish(model, s, lambda_min, true, 0));
        }
    }

    let (delta, iterations) = secular_root(&coords, &base, gamma_lo, m, opts)?;
    let step: Vec<f64> = coords
        .iter()
        .zip(&base)
        .map(|(c, b)| if *c == 0.0 { 0.0 } else { -c / (b + delta) })
        .collect();
    let s = eig.from_eigenbasis(&step);
    Ok(finish(model, s, lambda_min, false, iterations))
}

fn finish(
    model: &CubicModel,
    s: Vector,
    lambda_min: f64,
    hard_case: bool,
    iterations: usize,
) -> CubicStepResult {
    let gamma = 0.5 * model.m * s.norm();
    CubicStepResult {
        model_value: model_value(model, &s),
        residual: model.stationarity_residual(&s),
        gamma,
        s,
        hard_case,
        lambda_min,
        iterations,
    }
}

/// `|s(delta)|` and its derivative for `s_k = -c_k / (b_k + delta)`.
fn step_norm_and_slope(coords: &[f64], base: &[f64], delta: f64) -> (f64, f64) {
    let mut sq = 0.0;
    let mut cube = 0.0;
    for (c, b) in coords.iter().zip(base) {
        if *c == 0.0 {
            continue;
        }
        let q = c / (b + delta);
        sq += q * q;
        cube += q * q / (b + delta);
    }
    let norm = sq.sqrt();
    let slope = if norm > 0.0 { -cube / norm } else { 0.0 };
    (norm, slope)
}

/// Root in `delta > 0` of `|s(delta)| - 2 (gamma_lo + delta) / M`.
fn secular_root(
    coords: &[f64],
    base: &[f64],
    gamma_lo: f64,
    m: f64,
    opts: &CubicOptions,
) -> Result<(f64, usize), CubicError> {
    let phi = |delta: f64| {
        let (norm, slope) = step_norm_and_slope(coords, base, delta);
        (norm - 2.0 * (gamma_lo + delta) / m, slope - 2.0 / m, norm)
    };

    // grow the upper end until phi < 0
    let mut hi = gamma_lo.max(1.0);
    let mut iterations = 0;
    loop {
        let (v, _, _) = phi(hi);
        if v < 0.0 {
            break;
        }
        if v == 0.0 {
            return Ok((hi, iterations));
        }
        hi *= 2.0;
        iterations += 1;
        if iterations > opts.max_iter || !hi.is_finite() {
            return Err(CubicError::NoConvergence {
                iterations,
                lo: 0.0,
                hi,
            });
        }
    }
    let mut lo = 0.0_f64;
    let mut delta = hi;
    for it in 0..opts.max_iter {
        let (v, dv, norm) = phi(delta);
        let scale = norm + 2.0 * (gamma_lo + delta) / m;
        if v.abs() <= opts.secular_tol * scale {
            return Ok((delta, iterations + it));
        }
        if v > 0.0 {
            lo = delta;
        } else {
            hi = delta;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok((delta, iterations + it));
        }
        let newton = delta - v / dv;
        if (newton - delta).abs() <= 2.0 * f64::EPSILON * delta {
            return Ok((delta, iterations + it));
        }
        delta = if newton > lo && newton < hi && dv < 0.0 {
            newton
        } else if lo > 0.0 && hi / lo > 16.0 {
            (lo * hi).sqrt()
        } else if lo == 0.0 {
            // the left end may be a pole; approach it geometrically
            hi * 1e-3
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(CubicError::NoConvergence {
        iterations: iterations + opts.max_iter,
        lo,
        hi,
    })
}
