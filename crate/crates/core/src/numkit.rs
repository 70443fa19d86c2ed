//! Dense vectors, structurally symmetric matrices and a symmetric
//! eigensolver (Householder tridiagonalization followed by implicit QL).
//!
//! Everything here is small-dimension and exact-first: matrices are stored
//! densely and every shifted solve goes through a full eigendecomposition.

use std::ops::{Deref, DerefMut, Index};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigensolver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// QL iteration budget is `sweeps_per_dim * d` in total.
    pub sweeps_per_dim: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { sweeps_per_dim: 30 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("eigensolver did not converge after {iterations} iterations (off-diagonal residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("shifted matrix is not positive definite: lambda_min + shift = {shifted_min:e}")]
    SingularShift { shifted_min: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite entry in input")]
    NonFinite,
}

/// Dense real vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    /// Unit basis vector `e_i` of dimension `n`.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[i] = 1.0;
        v
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &[f64]) {
        axpy(&mut self.0, c, other);
    }

    pub fn scale(&mut self, c: f64) {
        self.0.iter_mut().for_each(|v| *v *= c);
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }

    pub fn add(&self, other: &[f64]) -> Self {
        Self(self.0.iter().zip(other).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &[f64]) -> Self {
        Self(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    // hypot-style scaling is unnecessary at the magnitudes seen here
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

/// Dense symmetric matrix. Every mutator writes both `(i, j)` and `(j, i)`,
/// so `m[(i, j)] == m[(j, i)]` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * m.n + i] = v;
        }
        m
    }

    /// Builds the matrix from its upper triangle: `f(i, j)` is called for
    /// `i <= j` only.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Symmetrizes a row-major square matrix as `(A + A^T) / 2`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Self::from_upper_fn(n, |i, j| 0.5 * (rows[i][j] + rows[j][i]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn add_diag(&mut self, c: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += c;
        }
    }

    /// `self += c * a a^T`
    pub fn add_rank_one(&mut self, c: f64, a: &[f64]) {
        let n = self.n;
        for i in 0..n {
            let ci = c * a[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..n {
                let v = self.data[i * n + j] + ci * a[j];
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    /// `self += c * a a^T` for a sparse `a` given as parallel index/value slices.
    pub fn add_sparse_rank_one(&mut self, c: f64, idx: &[u32], val: &[f64]) {
        let n = self.n;
        for (p, &i) in idx.iter().enumerate() {
            let i = i as usize;
            let ci = c * val[p];
            for (q, &j) in idx.iter().enumerate().skip(p) {
                let j = j as usize;
                let v = self.data[i * n + j] + ci * val[q];
                self.data[i * n + j] = v;
                if i != j {
                    self.data[j * n + i] = v;
                }
            }
        }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &SymMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vector {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(&self.matvec(x), x)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Spectral norm `max |lambda_i|`.
    pub fn spectral_norm(&self) -> Result<f64, LinalgError> {
        if self.n == 0 {
            return Ok(0.0);
        }
        let eig = sym_eig(self)?;
        Ok(eig.values[0].abs().max(eig.values[self.n - 1].abs()))
    }
}

impl Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

/// Symmetric eigendecomposition `H = Q diag(values) Q^T` with ascending
/// eigenvalues and orthonormal eigenvector columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    // column-major: column k occupies vectors[k*n .. (k+1)*n]
    vectors: Vec<f64>,
}

impl EigDecomp {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Eigenvector for `values[k]`. Its first entry with magnitude above
    /// `1e-12` is positive.
    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[k * n..(k + 1) * n]
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    /// Coordinates of `x` in the eigenbasis, `Q^T x`.
    pub fn to_eigenbasis(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|k| dot(self.vector(k), x)).collect()
    }

    /// `Q c` for eigen-coordinates `c`.
    pub fn from_eigenbasis(&self, coords: &[f64]) -> Vector {
        let n = self.dim();
        let mut out = Vector::zeros(n);
        for (k, &c) in coords.iter().enumerate() {
            if c != 0.0 {
                out.axpy(c, self.vector(k));
            }
        }
        out
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim();
        let mut m = SymMatrix::zeros(n);
        for k in 0..n {
            m.add_rank_one(self.values[k], self.vector(k));
        }
        m
    }
}

/// Full symmetric eigendecomposition with the default sweep budget.
pub fn sym_eig(h: &SymMatrix) -> Result<EigDecomp, LinalgError> {
    sym_eig_with(h, &Tolerances::default())
}

pub fn sym_eig_with(h: &SymMatrix, tol: &Tolerances) -> Result<EigDecomp, LinalgError> {
    if !h.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = h.dim();
    if n == 0 {
        return Ok(EigDecomp {
            values: Vec::new(),
            vectors: Vec::new(),
        });
    }
    // v is row-major n x n; after tql2 its columns are eigenvectors.
    let mut v: Vec<f64> = h.data.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e, tol.sweeps_per_dim * n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        let dst = &mut vectors[col * n..(col + 1) * n];
        for i in 0..n {
            dst[i] = v[i * n + k];
        }
        let sign = dst
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |x| x.signum());
        if sign < 0.0 {
            dst.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(EigDecomp { values, vectors })
}

/// Smallest eigenvalue and a unit eigenvector for it.
pub fn min_eigenvalue(h: &SymMatrix) -> Result<(f64, Vector), LinalgError> {
    let eig = sym_eig(h)?;
    if eig.dim() == 0 {
        return Ok((0.0, Vector::zeros(0)));
    }
    Ok((eig.values[0], Vector::from(eig.vector(0).to_vec())))
}

/// Solves `(H + shift I) s = b` through the eigendecomposition of `H`.
pub fn solve_shifted(decomp: &EigDecomp, shift: f64, b: &[f64]) -> Result<Vector, LinalgError> {
    let n = decomp.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if n == 0 {
        return Ok(Vector::zeros(0));
    }
    let shifted_min = decomp.values[0] + shift;
    if !(shifted_min > 0.0) {
        return Err(LinalgError::SingularShift { shifted_min });
    }
    let coords: Vec<f64> = decomp
        .to_eigenbasis(b)
        .into_iter()
        .zip(&decomp.values)
        .map(|(c, &lam)| c / (lam + shift))
        .collect();
    Ok(decomp.from_eigenbasis(&coords))
}

/// [`solve_shifted`] followed by iterative refinement against the original
/// matrix `h`, which removes most of the eigendecomposition error when the
/// shifted matrix is ill-conditioned.
pub fn solve_shifted_refined(
    h: &SymMatrix,
    decomp: &EigDecomp,
    shift: f64,
    b: &[f64],
    rounds: usize,
) -> Result<Vector, LinalgError> {
    let mut s = solve_shifted(decomp, shift, b)?;
    for _ in 0..rounds {
        let mut r = Vector::from(b.to_vec());
        let hs = h.matvec(&s);
        r.axpy(-1.0, &hs);
        r.axpy(-shift, &s);
        let ds = solve_shifted(decomp, shift, &r)?;
        s.axpy(1.0, &ds);
    }
    Ok(s)
}

// Householder reduction to tridiagonal form (EISPACK tred2).
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
                v[j * n + i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j * n + i] = f;
                g = e[j] + v[j * n + j] * f;
                for k in (j + 1)..i {
                    g += v[k * n + j] * d[k];
                    e[k] += v[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1) * n + j];
                v[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for i in 0..n.saturating_sub(1) {
        v[(n - 1) * n + i] = v[i * n + i];
        v[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k * n + i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k * n + i + 1] * v[k * n + j];
                }
                for k in 0..=i {
                    v[k * n + j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k * n + i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1) * n + j];
        v[(n - 1) * n + j] = 0.0;
    }
    v[(n - 1) * n + n - 1] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (EISPACK tql2), accumulating into v.
fn tql2(
    n: usize,
    v: &mut [f64],
    d: &mut [f64],
    e: &mut [f64],
    budget: usize,
) -> Result<(), LinalgError> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    let mut total_iter = 0usize;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m == n {
            m = n - 1;
        }
        if m > l {
            loop {
                total_iter += 1;
                if total_iter > budget {
                    let residual = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                    return Err(LinalgError::NoConvergence {
                        iterations: total_iter - 1,
                        residual,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn orthonormality_error(e: &EigDecomp) -> f64 {
        let n = e.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(e.vector(i), e.vector(j)) - expect).abs());
            }
        }
        worst
    }

    #[test]
    fn identity_eigenvalues() {
        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        for v in &e.values {
            assert_close(*v, 1.0, 1e-14);
        }
        assert!(orthonormality_error(&e) <= 1e-10);
    }

    #[test]
    fn diagonal_eigenvalues_sorted() {
        let e = sym_eig(&SymMatrix::from_diag(&[-1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![-1.0, 2.0]);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        // characteristic polynomial (2-l)^2 - 1 = 0 -> l = 1, 3
        let h = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = sym_eig(&h).unwrap();
        assert_close(e.values[0], 1.0, 1e-14);
        assert_close(e.values[1], 3.0, 1e-14);
    }

    #[test]
    fn one_by_one_and_empty() {
        let e = sym_eig(&SymMatrix::from_diag(&[-4.5])).unwrap();
        assert_eq!(e.values, vec![-4.5]);
        assert_eq!(e.vector(0), &[1.0]);
        assert_eq!(sym_eig(&SymMatrix::zeros(0)).unwrap().dim(), 0);
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut h = SymMatrix::zeros(2);
        h.set(0, 1, f64::NAN);
        assert_eq!(sym_eig(&h), Err(LinalgError::NonFinite));
    }

    #[test]
    fn exhausted_budget_reports_residual() {
        let h = SymMatrix::from_upper_fn(6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let no_sweeps = Tolerances { sweeps_per_dim: 0 };
        match sym_eig_with(&h, &no_sweeps) {
            Err(LinalgError::NoConvergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 0);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        // already diagonal: no iterations needed
        assert!(sym_eig_with(&SymMatrix::from_diag(&[3.0, 1.0, 2.0]), &no_sweeps).is_ok());
    }

    #[test]
    fn shifted_solves() {
        let s =
            solve_shifted(&sym_eig(&SymMatrix::identity(2)).unwrap(), 1.0, &[2.0, 2.0]).unwrap();
        assert_close(s[0], 1.0, 1e-15);
        assert_close(s[1], 1.0, 1e-15);

        let s = solve_shifted(&sym_eig(&SymMatrix::zeros(1)).unwrap(), 2.0, &[4.0]).unwrap();
        assert_close(s[0], 2.0, 1e-15);

        // inverse of [[2,1],[1,2]] is [[2,-1],[-1,2]]/3
        let h = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let s = solve_shifted(&sym_eig(&h).unwrap(), 0.0, &[1.0, 0.0]).unwrap();
        assert_close(s[0], 2.0 / 3.0, 1e-14);
        assert_close(s[1], -1.0 / 3.0, 1e-14);
    }

    #[test]
    fn singular_shift_rejected() {
        let e = sym_eig(&SymMatrix::from_diag(&[-1.0, 3.0])).unwrap();
        assert!(matches!(
            solve_shifted(&e, 1.0, &[1.0, 1.0]),
            Err(LinalgError::SingularShift { .. })
        ));
        assert!(matches!(
            solve_shifted(&e, 2.0, &[1.0]),
            Err(LinalgError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn min_eigenvalue_examples() {
        let (lam, v) = min_eigenvalue(&SymMatrix::from_diag(&[3.0, -0.5])).unwrap();
        assert_close(lam, -0.5, 1e-15);
        assert_close(v[0].abs(), 0.0, 1e-15);
        assert_close(v[1].abs(), 1.0, 1e-15);

        let (lam, _) = min_eigenvalue(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(lam, 0.0);

        let h = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (lam, v) = min_eigenvalue(&h).unwrap();
        assert_close(lam, -1.0, 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_close(v[0], r, 1e-14);
        assert_close(v[1], -r, 1e-14);
    }

    #[test]
    fn symmetric_mutators_stay_symmetric() {
        let mut h = SymMatrix::zeros(4);
        h.add_rank_one(0.3, &[1.0, -2.0, 0.5, 7.0]);
        h.add_sparse_rank_one(1.7, &[0, 3], &[0.25, -1.5]);
        h.set(2, 1, 9.0);
        h.add_diag(0.1);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(h[(i, j)].to_bits(), h[(j, i)].to_bits());
            }
        }
        let mut dense = SymMatrix::zeros(4);
        dense.add_rank_one(1.7, &[0.25, 0.0, 0.0, -1.5]);
        let mut sparse = SymMatrix::zeros(4);
        sparse.add_sparse_rank_one(1.7, &[0, 3], &[0.25, -1.5]);
        assert_eq!(dense, sparse);
    }
}
