//! Dense linear algebra used by the solvers: Gauss–Legendre rules, a row-major
//! matrix type, unrestarted GMRES, SVD-based condition numbers and Householder
//! least squares.
//!
//! Matrix–vector products are parallel over rows. Every output entry is a
//! left-to-right sum over its row, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("quadrature order {0} outside 1..=64")]
    InvalidOrder(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("matrix is rank deficient at column {0}")]
    RankDeficient(usize),
    #[error("least squares needs rows >= cols, got {rows}x{cols}")]
    Underdetermined { rows: usize, cols: usize },
}

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule with `n` points, nodes ascending.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule, NumericsError> {
    if !(1..=64).contains(&n) {
        return Err(NumericsError::InvalidOrder(n));
    }
    if n == 1 {
        return Ok(QuadratureRule { nodes: vec![0.0], weights: vec![2.0] });
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::Empty);
        }
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite(k / cols, k % cols));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn<F: Fn(usize, usize) -> f64>(rows: usize, cols: usize, f: F) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.data[i * cols + j] = f(i, j);
            }
        }
        m
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        self.data.par_chunks(self.cols).map(|row| dot(row, x)).collect()
    }

    /// `Aᵀ x`, accumulated row by row within fixed column blocks.
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_transpose dimension mismatch");
        const BLOCK: usize = 256;
        let mut out = vec![0.0; self.cols];
        out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
            let j0 = b * BLOCK;
            for (i, &xi) in x.iter().enumerate() {
                let row = &self.data[i * self.cols + j0..i * self.cols + j0 + chunk.len()];
                for (o, &a) in chunk.iter_mut().zip(row) {
                    *o += a * xi;
                }
            }
        });
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        out.data.par_chunks_mut(other.cols).enumerate().for_each(|(i, orow)| {
            for (k, &a) in self.row(i).iter().enumerate() {
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        });
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    fn check_finite(&self) -> Result<(), NumericsError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(NumericsError::NonFinite(k / self.cols, k % self.cols)),
            None => Ok(()),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iters: usize,
    /// True relative residual `‖b − A x‖ / ‖b‖` of the returned iterate; at
    /// most the tolerance on success.
    pub residual: f64,
    /// Estimated relative residual after each iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmresError {
    #[error("GMRES breakdown at iteration {iter} with residual {}", best.residual)]
    Breakdown { iter: usize, best: GmresOutcome },
    #[error("GMRES did not reach tolerance in {} iterations (residual {})", best.iters, best.residual)]
    NotConverged { best: GmresOutcome },
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error("operator returned a vector of length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Unrestarted GMRES from a zero initial guess. Arnoldi uses modified
/// Gram–Schmidt with one reorthogonalization pass.
pub fn gmres<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<GmresOutcome, GmresError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(tol > 0.0) {
        return Err(GmresError::InvalidTolerance);
    }
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x: vec![0.0; n], iters: 0, residual: 0.0, history: vec![] });
    }
    let max_iter = max_iter.min(n).max(1);
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / bnorm).collect()];
    // Column k of the Hessenberg matrix, rotated in place.
    let mut hess: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut cs: Vec<(f64, f64)> = Vec::with_capacity(max_iter);
    let mut g = vec![bnorm];
    let mut history = Vec::new();
    let mut breakdown = false;

    for k in 0..max_iter {
        let mut w = apply(&basis[k]);
        if w.len() != n {
            return Err(GmresError::DimensionMismatch { expected: n, got: w.len() });
        }
        let wnorm0 = norm(&w);
        let mut h = vec![0.0; k + 2];
        for _pass in 0..2 {
            for (j, q) in basis.iter().enumerate() {
                let c = dot(&w, q);
                h[j] += c;
                axpy(-c, q, &mut w);
            }
        }
        let hnext = norm(&w);
        h[k + 1] = hnext;
        for (j, &(c, s)) in cs.iter().enumerate() {
            let (a, bb) = (h[j], h[j + 1]);
            h[j] = c * a + s * bb;
            h[j + 1] = -s * a + c * bb;
        }
        let (a, bb) = (h[k], h[k + 1]);
        let r = a.hypot(bb);
        if r <= 1e-14 * wnorm0 || r == 0.0 {
            // The operator is singular on the Krylov space: keep the previous iterate.
            let iters = k;
            let y = back_substitute(&hess, &g[..iters]);
            let mut x = vec![0.0; n];
            for (yj, q) in y.iter().zip(&basis) {
                axpy(*yj, q, &mut x);
            }
            let ax = apply(&x);
            let res: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let residual = norm(&res) / bnorm;
            history.push(g[k].abs() / bnorm);
            let best = GmresOutcome { x, iters: k + 1, residual, history };
            return Err(GmresError::Breakdown { iter: k + 1, best });
        }
        let (c, s) = (a / r, bb / r);
        h[k] = r;
        h[k + 1] = 0.0;
        cs.push((c, s));
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);
        hess.push(h);
        let est = g[k + 1].abs() / bnorm;
        history.push(est);

        if hnext <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE) {
            breakdown = true;
        }
        if est <= tol || breakdown || k + 1 == max_iter {
            let iters = k + 1;
            let y = back_substitute(&hess, &g[..iters]);
            let mut x = vec![0.0; n];
            for (yj, q) in y.iter().zip(&basis) {
                axpy(*yj, q, &mut x);
            }
            let ax = apply(&x);
            let res: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let residual = norm(&res) / bnorm;
            if residual <= tol {
                return Ok(GmresOutcome { x, iters, residual, history });
            }
            // The estimate can undershoot the true residual once rounding dominates.
            if est <= tol && !breakdown && k + 1 < max_iter {
                basis.push(w.iter().map(|v| v / hnext).collect());
                continue;
            }
            let out = GmresOutcome { x, iters, residual, history };
            if breakdown {
                return Err(GmresError::Breakdown { iter: iters, best: out });
            }
            return Err(GmresError::NotConverged { best: out });
        }
        basis.push(w.iter().map(|v| v / hnext).collect());
    }
    unreachable!("loop always returns on its last iteration")
}

fn back_substitute(hess: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for j in i + 1..k {
            s -= hess[j][i] * y[j];
        }
        y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
    }
    y
}

/// Singular values in descending order by one-sided Jacobi rotations.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>, NumericsError> {
    a.check_finite()?;
    let (m, n) = if a.rows >= a.cols { (a.rows, a.cols) } else { (a.cols, a.rows) };
    // Columns stored contiguously.
    let mut cols: Vec<Vec<f64>> = if a.rows >= a.cols {
        (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect()
    } else {
        (0..n).map(|j| a.row(j).to_vec()).collect()
    };
    let eps = 1e-15;
    for _sweep in 0..80 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                let alpha = dot(cp, cp);
                let beta = dot(cq, cq);
                let gamma = dot(cp, cq);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel <= eps {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (u, v) = (*x, *y);
                    *x = c * u - s * v;
                    *y = s * u + c * v;
                }
            }
        }
        if off <= eps {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// `σ_max / σ_min` from the Jacobi singular values; infinite when `σ_min < 1e-300`.
pub fn condition_jacobi(a: &DenseMatrix) -> Result<f64, NumericsError> {
    let sv = singular_values(a)?;
    Ok(ratio(sv[0], *sv.last().unwrap()))
}

fn ratio(smax: f64, smin: f64) -> f64 {
    if smin < 1e-300 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Extreme singular values of a square or tall matrix by Golub–Kahan–Lanczos
/// bidiagonalization with full reorthogonalization, started from a seeded
/// random vector. Returns `(σ_max, σ_min, steps)`.
pub fn extreme_singular_values_lanczos(
    a: &DenseMatrix,
    max_steps: usize,
    rel_tol: f64,
) -> Result<(f64, f64, usize), NumericsError> {
    a.check_finite()?;
    let n = a.cols;
    let max_steps = max_steps.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let vn = norm(&v);
    v.iter_mut().for_each(|x| *x /= vn);
    let mut vs = vec![v];
    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut stable = 0;

    let mut u = a.matvec(&vs[0]);
    for k in 0..max_steps {
        if k > 0 {
            axpy(-betas[k - 1], &us[k - 1], &mut u);
        }
        reorthogonalize(&mut u, &us);
        let alpha = norm(&u);
        alphas.push(alpha);
        if alpha <= 1e-300 {
            // Exact rank deficiency in the Krylov space.
            return Ok((bidiagonal_extremes(&alphas, &betas).0, 0.0, k + 1));
        }
        u.iter_mut().for_each(|x| *x /= alpha);
        us.push(u);

        let steps = k + 1;
        let check = steps >= 8 && (steps % 8 == 0 || steps == max_steps);
        if check {
            let (smax, smin) = bidiagonal_extremes(&alphas, &betas[..k]);
            if let Some((pmax, pmin)) = prev {
                let dmax = (smax - pmax).abs() / smax;
                let dmin = (smin - pmin).abs() / smin.max(1e-300);
                if dmax < rel_tol && dmin < rel_tol {
                    stable += 1;
                } else {
                    stable = 0;
                }
            }
            prev = Some((smax, smin));
            if stable >= 2 || steps == max_steps {
                return Ok((smax, smin, steps));
            }
        }

        let mut w = a.matvec_transpose(&us[k]);
        axpy(-alpha, &vs[k], &mut w);
        reorthogonalize(&mut w, &vs);
        let beta = norm(&w);
        if beta <= 1e-300 {
            let (smax, smin) = bidiagonal_extremes(&alphas, &betas);
            return Ok((smax, smin, steps));
        }
        betas.push(beta);
        w.iter_mut().for_each(|x| *x /= beta);
        u = a.matvec(&w);
        vs.push(w);
    }
    let (smax, smin) = bidiagonal_extremes(&alphas, &betas[..alphas.len() - 1]);
    Ok((smax, smin, alphas.len()))
}

fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _pass in 0..2 {
        for q in basis {
            let c = dot(w, q);
            axpy(-c, q, w);
        }
    }
}

/// Extreme singular values of the upper bidiagonal matrix with diagonal
/// `alphas` and superdiagonal `betas`.
fn bidiagonal_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut b = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        b[(i, i)] = alphas[i];
        if i + 1 < k && i < betas.len() {
            b[(i, i + 1)] = betas[i];
        }
    }
    let sv = b.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (smax, smin)
}

/// Dimension above which [`svd_condition`] switches from Jacobi to Lanczos.
pub const JACOBI_MAX_DIM: usize = 640;

/// Step cap for the Lanczos branch of [`svd_condition`].
pub const LANCZOS_MAX_STEPS: usize = 2000;

/// 2-norm condition number `σ_max / σ_min`. Small matrices use one-sided
/// Jacobi; larger ones use Golub–Kahan–Lanczos, which resolves the extreme
/// singular values of identity-plus-compact operators in a few dozen steps.
pub fn svd_condition(a: &DenseMatrix) -> Result<f64, NumericsError> {
    if a.rows.min(a.cols) <= JACOBI_MAX_DIM {
        condition_jacobi(a)
    } else {
        let (smax, smin, _) = extreme_singular_values_lanczos(a, LANCZOS_MAX_STEPS, 1e-9)?;
        Ok(ratio(smax, smin))
    }
}

/// Least-squares solution of `A x ≈ b` by Householder QR.
pub fn lstsq(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(NumericsError::Underdetermined { rows: m, cols: n });
    }
    if b.len() != m {
        return Err(NumericsError::DimensionMismatch(format!("rhs length {} for {m} rows", b.len())));
    }
    a.check_finite()?;
    let mut r: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut qtb = b.to_vec();
    let scale = r.iter().map(|c| norm(c)).fold(0.0, f64::max);
    for k in 0..n {
        let xnorm = norm(&r[k][k..]);
        if xnorm <= 1e-13 * scale {
            return Err(NumericsError::RankDeficient(k));
        }
        let alpha = if r[k][k] > 0.0 { -xnorm } else { xnorm };
        let mut v: Vec<f64> = r[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        for col in r.iter_mut().skip(k) {
            let c = 2.0 * dot(&v, &col[k..]) / vnorm2;
            axpy(-c, &v, &mut col[k..]);
        }
        let c = 2.0 * dot(&v, &qtb[k..]) / vnorm2;
        axpy(-c, &v, &mut qtb[k..]);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in i + 1..n {
            s -= r[j][i] * x[j];
        }
        x[i] = s / r[i][i];
    }
    Ok(x)
}
