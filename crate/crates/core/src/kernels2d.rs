//! Planar kernels: Stokeslet, Boussinesq–Cerruti half-space kernel, string
//! kernels on straight and polyline strings, their tractions, and the Kelvin
//! solution used for manufactured data.
//!
//! Matrices are indexed `(j, k)`: row `j` is the displacement (or traction)
//! component produced by a unit point force in direction `k`. Traction
//! kernels contract the target normal with the first index of the stress.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("target and source coincide")]
    Coincident,
    #[error("target lies on the branch ray of the half-space kernel")]
    OnBranchRay,
    #[error("target lies on the string")]
    OnString,
    #[error("arg2 is undefined at the origin")]
    ArgAtOrigin,
    #[error("invalid elastic parameters: {0}")]
    InvalidParams(String),
    #[error("direction must be a unit vector")]
    NotUnit,
    #[error("string needs at least two distinct vertices")]
    DegenerateString,
}

/// Lamé pair. `lambda = +inf` is the incompressible limit and gives `alpha = 1`
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    lambda: f64,
    mu: f64,
}

impl ElasticParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self, KernelError> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(KernelError::InvalidParams(format!("mu = {mu} must be positive")));
        }
        if !(lambda >= 0.0) {
            return Err(KernelError::InvalidParams(format!("lambda = {lambda} must be >= 0")));
        }
        Ok(Self { lambda, mu })
    }

    pub fn incompressible(mu: f64) -> Result<Self, KernelError> {
        Self::new(f64::INFINITY, mu)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn is_incompressible(&self) -> bool {
        self.lambda.is_infinite()
    }

    /// `(λ + μ) / (λ + 2μ)`.
    pub fn alpha(&self) -> f64 {
        if self.is_incompressible() {
            1.0
        } else {
            (self.lambda + self.mu) / (self.lambda + 2.0 * self.mu)
        }
    }

    /// `(1 − α) / α = μ / (λ + μ)`, evaluated without cancellation.
    pub fn compressibility(&self) -> f64 {
        if self.is_incompressible() {
            0.0
        } else {
            self.mu / (self.lambda + self.mu)
        }
    }
}

/// Argument of `v + i u` in `(−π, π]`.
pub fn arg2(u: f64, v: f64) -> Result<f64, KernelError> {
    if u == 0.0 && v == 0.0 {
        return Err(KernelError::ArgAtOrigin);
    }
    let a = u.atan2(v);
    Ok(if a == -PI { PI } else { a })
}

/// `(v₂, −v₁)`.
pub fn perp(v: &Vec2) -> Vec2 {
    Vec2::new(v.y, -v.x)
}

fn skew() -> Mat2 {
    Mat2::new(0.0, 1.0, -1.0, 0.0)
}

fn check_unit(v: &Vec2) -> Result<(), KernelError> {
    if (v.norm() - 1.0).abs() > 1e-10 {
        Err(KernelError::NotUnit)
    } else {
        Ok(())
    }
}

fn separation(x: &Vec2, y: &Vec2) -> Result<(Vec2, f64), KernelError> {
    let r = x - y;
    let rn = r.norm();
    if rn == 0.0 {
        Err(KernelError::Coincident)
    } else {
        Ok((r, rn))
    }
}

/// Free-space Stokeslet `(1/4πμ)[−log r I + r rᵀ/r²]`.
pub fn stokeslet2d(x: &Vec2, y: &Vec2, mu: f64) -> Result<Mat2, KernelError> {
    let (r, rn) = separation(x, y)?;
    let s = 1.0 / (4.0 * PI * mu);
    Ok((Mat2::identity() * (-rn.ln()) + r * r.transpose() / (rn * rn)) * s)
}

/// Traction at `x` (normal `n_x`) of twice the Stokeslet, which is also the
/// traction of the half-space kernel for any `λ`:
/// `T_jk = −2 (r·n) r_j r_k / (π r⁴)`.
pub fn stokeslet2d_traction(x: &Vec2, n_x: &Vec2, y: &Vec2) -> Result<Mat2, KernelError> {
    let (r, rn) = separation(x, y)?;
    let r2 = rn * rn;
    Ok(r * r.transpose() * (-2.0 * r.dot(n_x) / (PI * r2 * r2)))
}

/// Boussinesq–Cerruti kernel with ray singularity along `y + t v`, `t > 0`:
/// `2 G^S + (c/2πμ)[−log r I + θ J]` with `c = (1−α)/α`,
/// `θ = arg2(v⊥·r, −v·r)` and `J = [[0, 1], [−1, 0]]`.
pub fn boussinesq2d(x: &Vec2, y: &Vec2, v: &Vec2, params: &ElasticParams) -> Result<Mat2, KernelError> {
    check_unit(v)?;
    let (r, rn) = separation(x, y)?;
    let u = perp(v).dot(&r);
    let w = -v.dot(&r);
    if u.abs() <= 1e-12 * rn && w < 0.0 {
        return Err(KernelError::OnBranchRay);
    }
    let theta = arg2(u, w)?;
    let c = params.compressibility();
    let base = stokeslet2d(x, y, params.mu())? * 2.0;
    let coef = c / (2.0 * PI * params.mu());
    Ok(base + (Mat2::identity() * (-rn.ln()) + skew() * theta) * coef)
}

fn distance_to_segment(x: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let d = b - a;
    let t = ((x - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (x - (a + d * t)).norm()
}

fn check_string(x: &Vec2, vertices: &[Vec2]) -> Result<(), KernelError> {
    if vertices.len() < 2 {
        return Err(KernelError::DegenerateString);
    }
    for seg in vertices.windows(2) {
        let len = (seg[1] - seg[0]).norm();
        if len == 0.0 {
            return Err(KernelError::DegenerateString);
        }
        if distance_to_segment(x, &seg[0], &seg[1]) <= 1e-12 * len.max(1.0) {
            return Err(KernelError::OnString);
        }
    }
    Ok(())
}

/// Half-space kernel truncated to a string with vertices `p₀ … p_m`.
///
/// Each segment contributes `G^B(x, p_i; v_i) − G^B(x, p_{i+1}; v_i)`. The
/// non-angular parts telescope; the angular differences are taken as the
/// signed angle the segment subtends at `x`, which is continuous everywhere
/// off the segment itself.
pub fn string_kernel2d(x: &Vec2, vertices: &[Vec2], params: &ElasticParams) -> Result<Mat2, KernelError> {
    check_string(x, vertices)?;
    let mu = params.mu();
    let c = params.compressibility();
    let coef = c / (2.0 * PI * mu);
    let p0 = vertices[0];
    let pm = vertices[vertices.len() - 1];
    let smooth = |p: &Vec2| -> Result<Mat2, KernelError> {
        let rn = (x - p).norm();
        Ok(stokeslet2d(x, p, mu)? * 2.0 - Mat2::identity() * (coef * rn.ln()))
    };
    let mut out = smooth(&p0)? - smooth(&pm)?;
    if c != 0.0 {
        let mut angle = 0.0;
        for seg in vertices.windows(2) {
            let v = (seg[1] - seg[0]).normalize();
            let vp = perp(&v);
            let ra = x - seg[0];
            let rb = x - seg[1];
            // w_p = −v·r + i v⊥·r; θ_a − θ_b = arg(w_a conj(w_b)).
            let (wa_re, wa_im) = (-v.dot(&ra), vp.dot(&ra));
            let (wb_re, wb_im) = (-v.dot(&rb), vp.dot(&rb));
            let re = wa_re * wb_re + wa_im * wb_im;
            let im = wa_im * wb_re - wa_re * wb_im;
            angle += im.atan2(re);
        }
        out += skew() * (coef * angle);
    }
    Ok(out)
}

/// Traction kernel of the string kernel: `T(x, n, p₀) − T(x, n, p_m)` with
/// `T` from [`stokeslet2d_traction`]. When `x == p₀` exactly, the first term
/// is replaced by its on-curve limit `−(κ/π) τ τᵀ`, `τ` the unit tangent.
/// No elastic parameters enter.
pub fn sigma_string2d(x: &Vec2, n_x: &Vec2, curvature_x: f64, vertices: &[Vec2]) -> Result<Mat2, KernelError> {
    if vertices.len() < 2 {
        return Err(KernelError::DegenerateString);
    }
    let p0 = vertices[0];
    let pm = vertices[vertices.len() - 1];
    let head = if *x == p0 {
        let tau = Vec2::new(-n_x.y, n_x.x);
        tau * tau.transpose() * (-curvature_x / PI)
    } else {
        check_string(x, vertices)?;
        stokeslet2d_traction(x, n_x, &p0)?
    };
    Ok(head - stokeslet2d_traction(x, n_x, &pm)?)
}

/// Kelvin solution `(1/2πμ)[−(2−α) log r I + α r rᵀ/r²]`.
pub fn kelvin2d(x: &Vec2, y: &Vec2, params: &ElasticParams) -> Result<Mat2, KernelError> {
    let (r, rn) = separation(x, y)?;
    let a = params.alpha();
    let s = 1.0 / (2.0 * PI * params.mu());
    Ok((Mat2::identity() * (-(2.0 - a) * rn.ln()) + r * r.transpose() * (a / (rn * rn))) * s)
}

/// Traction of [`kelvin2d`] at `x` with normal `n_x`:
/// `(1/π)[−(1−α)((r·n)δ_jk + r_j n_k − n_j r_k)/r² − 2α (r·n) r_j r_k / r⁴]`.
pub fn kelvin2d_traction(x: &Vec2, n_x: &Vec2, y: &Vec2, params: &ElasticParams) -> Result<Mat2, KernelError> {
    let (r, rn) = separation(x, y)?;
    let a = params.alpha();
    let r2 = rn * rn;
    let rdn = r.dot(n_x);
    let odd = Mat2::identity() * rdn + r * n_x.transpose() - n_x * r.transpose();
    Ok((odd * (-(1.0 - a) / r2) + r * r.transpose() * (-2.0 * a * rdn / (r2 * r2))) / PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lambda: f64, mu: f64) -> ElasticParams {
        ElasticParams::new(lambda, mu).unwrap()
    }

    fn max_abs(m: &Mat2) -> f64 {
        m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Traction `n_i σ_ij` of each column of `field` by central differences.
    fn fd_traction<F: Fn(&Vec2) -> Mat2>(field: F, x: &Vec2, n: &Vec2, params: &ElasticParams, h: f64) -> Mat2 {
        let e = [Vec2::new(h, 0.0), Vec2::new(0.0, h)];
        // grad[i](j, k) = ∂_i u_jk
        let grad: Vec<Mat2> = e.iter().map(|d| (field(&(x + d)) - field(&(x - d))) / (2.0 * h)).collect();
        let mut t = Mat2::zeros();
        for k in 0..2 {
            let div = grad[0][(0, k)] + grad[1][(1, k)];
            for j in 0..2 {
                let mut s = 0.0;
                for i in 0..2 {
                    let lam = if i == j && !params.is_incompressible() { params.lambda() * div } else { 0.0 };
                    s += n[i] * (lam + params.mu() * (grad[i][(j, k)] + grad[j][(i, k)]));
                }
                t[(j, k)] = s;
            }
        }
        t
    }

    /// `(λ+μ)∇(∇·u) + μΔu` per column by central differences.
    fn fd_navier<F: Fn(&Vec2) -> Mat2>(field: F, x: &Vec2, params: &ElasticParams, h: f64) -> Mat2 {
        let f = |dx: f64, dy: f64| field(&(x + Vec2::new(dx, dy)));
        let u0 = f(0.0, 0.0);
        let uxx = (f(h, 0.0) - u0 * 2.0 + f(-h, 0.0)) / (h * h);
        let uyy = (f(0.0, h) - u0 * 2.0 + f(0.0, -h)) / (h * h);
        let uxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let lm = params.lambda() + params.mu();
        let mut out = (uxx + uyy) * params.mu();
        for k in 0..2 {
            out[(0, k)] += lm * (uxx[(0, k)] + uxy[(1, k)]);
            out[(1, k)] += lm * (uxy[(0, k)] + uyy[(1, k)]);
        }
        out
    }

    #[test]
    fn params_alpha_and_sentinel() {
        let q = p(10.0, 1.0);
        assert!((q.alpha() - 11.0 / 12.0).abs() < 1e-15);
        assert!((q.compressibility() - (1.0 - q.alpha()) / q.alpha()).abs() < 1e-15);
        let s = ElasticParams::incompressible(1.0).unwrap();
        assert_eq!(s.alpha(), 1.0);
        assert_eq!(s.compressibility(), 0.0);
        assert!(ElasticParams::new(1.0, 0.0).is_err());
        assert!(ElasticParams::new(-1.0, 1.0).is_err());
        assert!(ElasticParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn arg2_branch_convention() {
        assert_eq!(arg2(0.0, 1.0).unwrap(), 0.0);
        assert!((arg2(1.0, 0.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert_eq!(arg2(0.0, -1.0).unwrap(), PI);
        assert_eq!(arg2(-0.0, -1.0).unwrap(), PI);
        assert_eq!(arg2(0.0, 0.0), Err(KernelError::ArgAtOrigin));
    }

    #[test]
    fn stokeslet_examples() {
        let g = stokeslet2d(&Vec2::new(1.0, 0.0), &Vec2::zeros(), 1.0).unwrap();
        let want = Mat2::new(1.0, 0.0, 0.0, 0.0) / (4.0 * PI);
        assert!(max_abs(&(g - want)) < 1e-16);
        assert_eq!(stokeslet2d(&Vec2::zeros(), &Vec2::zeros(), 1.0), Err(KernelError::Coincident));
    }

    #[test]
    fn stokeslet_formula_oracle() {
        // r = (3, 4), μ = 2, reference entries from 40-digit evaluation.
        let g = stokeslet2d(&Vec2::new(3.0, 4.0), &Vec2::zeros(), 2.0).unwrap();
        let want = Mat2::new(
            -0.049713554962576438, 0.019098593171027440,
            0.019098593171027440, -0.038572708946143765,
        );
        assert!(max_abs(&(g - want)) < 1e-15, "{g}");
    }

    #[test]
    fn traction_vanishes_for_tangential_separation() {
        let t = stokeslet2d_traction(&Vec2::new(2.0, 0.0), &Vec2::new(0.0, 1.0), &Vec2::zeros()).unwrap();
        assert_eq!(max_abs(&t), 0.0);
    }

    #[test]
    fn stokeslet_traction_matches_fd_of_half_space_kernel() {
        let x = Vec2::new(1.0, 2.0);
        let n = Vec2::new(0.0, 1.0);
        let y = Vec2::zeros();
        let v = Vec2::new(0.6, -0.8);
        for params in [p(0.0, 1.0), p(10.0, 1.0), p(3.0, 0.25)] {
            let fd = fd_traction(|z| boussinesq2d(z, &y, &v, &params).unwrap(), &x, &n, &params, 1e-5);
            let t = stokeslet2d_traction(&x, &n, &y).unwrap();
            assert!(max_abs(&(fd - t)) < 1e-7 * max_abs(&t), "{fd} vs {t}");
        }
    }

    #[test]
    fn half_space_kernel_incompressible_limit() {
        let params = ElasticParams::incompressible(1.5).unwrap();
        let x = Vec2::new(0.3, -0.7);
        let y = Vec2::new(-0.2, 0.1);
        let g = boussinesq2d(&x, &y, &Vec2::new(0.0, 1.0), &params).unwrap();
        let s = stokeslet2d(&x, &y, 1.5).unwrap() * 2.0;
        assert_eq!(g, s);
    }

    #[test]
    fn half_space_zero_traction_on_plane() {
        let params = p(10.0, 1.0);
        let v = Vec2::new(0.0, 1.0);
        let n = Vec2::new(0.0, 1.0);
        let y = Vec2::new(0.4, 0.0);
        for xs in [-3.0, -0.5, 1.0, 7.0] {
            let x = Vec2::new(xs, 0.0);
            let fd = fd_traction(|z| boussinesq2d(z, &y, &v, &params).unwrap(), &x, &n, &params, 1e-5);
            assert!(max_abs(&fd) < 1e-8);
            assert_eq!(max_abs(&stokeslet2d_traction(&x, &n, &y).unwrap()), 0.0);
        }
    }

    #[test]
    fn antipodal_angle_vanishes() {
        let params = p(1.0, 1.0);
        let v = Vec2::new(0.0, 1.0);
        let y = Vec2::zeros();
        let x = Vec2::new(0.0, -2.0);
        let g = boussinesq2d(&x, &y, &v, &params).unwrap();
        // No skew part: off-diagonals equal (r rᵀ is diagonal here, so both are zero).
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(1, 0)], 0.0);
        assert_eq!(boussinesq2d(&Vec2::new(0.0, 3.0), &y, &v, &params), Err(KernelError::OnBranchRay));
        assert_eq!(boussinesq2d(&x, &y, &Vec2::new(0.0, 2.0), &params), Err(KernelError::NotUnit));
    }

    #[test]
    fn half_space_kernel_solves_navier() {
        let params = p(10.0, 1.0);
        let y = Vec2::new(0.1, -0.3);
        let v = Vec2::new(0.8, 0.6);
        let x = Vec2::new(-0.9, 0.7);
        let h = 1e-4;
        let res = fd_navier(|z| boussinesq2d(z, &y, &v, &params).unwrap(), &x, &params, h);
        let scale = (params.lambda() + 2.0 * params.mu()) * max_abs(&boussinesq2d(&x, &y, &v, &params).unwrap())
            / (x - y).norm_squared();
        assert!(max_abs(&res) < 1e-5 * scale, "{res}");
    }

    #[test]
    fn polyline_collapses_in_incompressible_limit() {
        let params = ElasticParams::incompressible(1.0).unwrap();
        let verts = [Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.5), Vec2::new(1.0, 1.0)];
        let x = Vec2::new(-0.7, 0.2);
        let k = string_kernel2d(&x, &verts, &params).unwrap();
        let want = (stokeslet2d(&x, &verts[0], 1.0).unwrap() - stokeslet2d(&x, &verts[2], 1.0).unwrap()) * 2.0;
        assert!(max_abs(&(k - want)) < 1e-15);
    }

    #[test]
    fn straight_string_is_difference_of_half_space_kernels() {
        let params = p(10.0, 1.0);
        let y = Vec2::new(0.2, 0.1);
        let v = Vec2::new(0.6, 0.8);
        let yh = y + v * 0.3;
        for x in [Vec2::new(-1.0, 0.5), Vec2::new(0.5, -1.0), Vec2::new(2.0, 1.0)] {
            let k = string_kernel2d(&x, &[y, yh], &params).unwrap();
            let d = boussinesq2d(&x, &y, &v, &params).unwrap() - boussinesq2d(&x, &yh, &v, &params).unwrap();
            assert!(max_abs(&(k - d)) < 1e-14, "{x}");
        }
        // Beyond the string's far end the direct difference is undefined; the
        // string kernel is continuous across that ray.
        let a = string_kernel2d(&(y + v + Vec2::new(0.8, -0.6) * 1e-9), &[y, yh], &params).unwrap();
        let b = string_kernel2d(&(y + v - Vec2::new(0.8, -0.6) * 1e-9), &[y, yh], &params).unwrap();
        assert!(max_abs(&(a - b)) < 1e-8);
        assert_eq!(string_kernel2d(&(y + v * 0.1), &[y, yh], &params), Err(KernelError::OnString));
    }

    #[test]
    fn string_kernel_solves_navier_off_string() {
        let params = p(10.0, 1.0);
        let verts = [Vec2::new(1.0, 0.0), Vec2::new(1.1, 0.0), Vec2::new(1.3, 0.4)];
        for x in [Vec2::new(0.2, 0.1), Vec2::new(1.6, 0.2), Vec2::new(1.05, 0.05)] {
            let u = |z: &Vec2| string_kernel2d(z, &verts, &params).unwrap();
            let d = verts.windows(2).map(|s| distance_to_segment(&x, &s[0], &s[1])).fold(f64::INFINITY, f64::min);
            let scale = (params.lambda() + 2.0 * params.mu()) * max_abs(&u(&x)).max(1e-2) / (d * d);
            for h in [1e-4, 1e-5] {
                let step = h * d.max(1e-2) * 10.0;
                let res = fd_navier(u, &x, &params, step);
                assert!(max_abs(&res) < 1e-5 * scale, "x={x} h={h} res={res}");
            }
        }
    }

    #[test]
    fn string_kernel_decays_like_dipole() {
        let params = p(10.0, 1.0);
        let h = 0.1;
        let verts = [Vec2::zeros(), Vec2::new(0.0, h)];
        let mut worst: f64 = 0.0;
        for d in [1.0, 2.0, 4.0, 8.0, 16.0] {
            for th in [0.3f64, 1.9, 3.5, 5.0] {
                let x = Vec2::new(th.cos(), th.sin()) * d;
                let k = max_abs(&string_kernel2d(&x, &verts, &params).unwrap());
                // Single-kernel scale is 1/(2πμα); the derivative bound gives h/d times it.
                worst = worst.max(k / (h / d / (2.0 * PI * params.mu() * params.alpha())));
            }
        }
        assert!(worst < 3.0, "{worst}");
    }

    #[test]
    fn diagonal_limit_matches_on_curve_limit() {
        // Circle of radius 2: κ = 1/2, outward normal radial.
        let rad = 2.0;
        let y = Vec2::new(rad, 0.0);
        let n = Vec2::new(1.0, 0.0);
        let kappa = 1.0 / rad;
        let tau = Vec2::new(0.0, 1.0);
        let limit = tau * tau.transpose() * (-kappa / PI);
        for eps in [1e-3f64, 1e-4, 1e-5] {
            let x = Vec2::new(rad * eps.cos(), rad * eps.sin());
            let nx = x / rad;
            let t = stokeslet2d_traction(&x, &nx, &y).unwrap();
            assert!(max_abs(&(t - limit)) < 2.0 * eps, "eps={eps}: {t} vs {limit}");
        }
        let far = [y, y + n * 0.1];
        let diag = sigma_string2d(&y, &n, kappa, &far).unwrap();
        let tail = stokeslet2d_traction(&y, &n, &far[1]).unwrap();
        assert!(max_abs(&(diag - (limit - tail))) < 1e-15);
    }

    #[test]
    fn sigma_antipodal_on_circle() {
        // Unit circle, base at (1,0) with its normal string of length 0.1; target
        // at (−1, 0) with normal −r̂ = (1, 0). Reference from 40-digit evaluation.
        let verts = [Vec2::new(1.0, 0.0), Vec2::new(1.1, 0.0)];
        let s = sigma_string2d(&Vec2::new(-1.0, 0.0), &Vec2::new(1.0, 0.0), 1.0, &verts).unwrap();
        let want = Mat2::new(0.015157613627799569, 0.0, 0.0, 0.0);
        assert!(max_abs(&(s - want)) < 1e-15, "{s}");
    }

    #[test]
    fn kelvin_examples() {
        let x = Vec2::new(0.4, -1.2);
        let y = Vec2::new(-0.3, 0.5);
        let k = kelvin2d(&x, &y, &ElasticParams::incompressible(1.0).unwrap()).unwrap();
        let s = stokeslet2d(&x, &y, 1.0).unwrap() * 2.0;
        assert!(max_abs(&(k - s)) < 1e-15);
        let k = kelvin2d(&Vec2::new(1.0, 1.0), &Vec2::zeros(), &p(10.0, 1.0)).unwrap();
        // 40-digit reference.
        let want = Mat2::new(
            0.013190540542442222, 0.072946015583785362,
            0.072946015583785362, 0.013190540542442222,
        );
        assert!(max_abs(&(k - want)) < 1e-15, "{k}");
    }

    #[test]
    fn kelvin_traction_matches_fd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let params = p(rng.gen_range(0.0..20.0), rng.gen_range(0.2..3.0));
            let x = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let y = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if (x - y).norm() < 0.2 {
                continue;
            }
            let th: f64 = rng.gen_range(0.0..2.0 * PI);
            let n = Vec2::new(th.cos(), th.sin());
            let step = 1e-5 * (x - y).norm().max(1.0);
            let fd = fd_traction(|z| kelvin2d(z, &y, &params).unwrap(), &x, &n, &params, step);
            let t = kelvin2d_traction(&x, &n, &y, &params).unwrap();
            assert!(max_abs(&(fd - t)) < 1e-7 * max_abs(&t).max(1e-3), "{fd} vs {t}");
        }
    }

    fn circle_force(center: Vec2, rad: f64, y: &Vec2, params: &ElasticParams) -> Mat2 {
        let rule = crate::numerics::gauss_legendre(32).unwrap();
        let panels = 16;
        let mut f = Mat2::zeros();
        for pnl in 0..panels {
            let a = 2.0 * PI * pnl as f64 / panels as f64;
            let b = a + 2.0 * PI / panels as f64;
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                let th = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let n = Vec2::new(th.cos(), th.sin());
                let x = center + n * rad;
                f += kelvin2d_traction(&x, &n, y, params).unwrap() * (w * 0.5 * (b - a) * rad);
            }
        }
        f
    }

    #[test]
    fn kelvin_net_force() {
        let params = p(10.0, 1.0);
        let inside = circle_force(Vec2::zeros(), 1.0, &Vec2::new(0.2, -0.1), &params);
        // This normalization carries twice the unit point force.
        assert!(max_abs(&(inside + Mat2::identity() * 2.0)) < 1e-10, "{inside}");
        let outside = circle_force(Vec2::zeros(), 1.0, &Vec2::new(2.5, 0.3), &params);
        assert!(max_abs(&outside) < 1e-10, "{outside}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stokeslet_and_kelvin_symmetric(x0 in -3.0..3.0f64, x1 in -3.0..3.0f64, lam in 0.0..100.0f64, mu in 0.1..5.0f64) {
            let x = Vec2::new(x0, x1);
            prop_assume!(x.norm() > 1e-3);
            let g = stokeslet2d(&x, &Vec2::zeros(), mu).unwrap();
            prop_assert_eq!(g[(0, 1)], g[(1, 0)]);
            let k = kelvin2d(&x, &Vec2::zeros(), &p(lam, mu)).unwrap();
            prop_assert_eq!(k[(0, 1)], k[(1, 0)]);
            let t = stokeslet2d_traction(&x, &Vec2::new(0.6, 0.8), &Vec2::zeros()).unwrap();
            prop_assert_eq!(t[(0, 1)], t[(1, 0)]);
        }

        #[test]
        fn splitting_a_segment_leaves_kernel_unchanged(
            th in 0.0..6.28f64, len in 0.01..1.0f64, split in 0.05..0.95f64,
            x0 in -2.0..2.0f64, x1 in -2.0..2.0f64, lam in 0.0..50.0f64,
        ) {
            let params = p(lam, 1.0);
            let v = Vec2::new(th.cos(), th.sin());
            let a = Vec2::new(0.1, -0.2);
            let b = a + v * len;
            let m = a + v * (len * split);
            let x = Vec2::new(x0, x1);
            prop_assume!(distance_to_segment(&x, &a, &b) > 1e-3);
            let k1 = string_kernel2d(&x, &[a, b], &params).unwrap();
            let k2 = string_kernel2d(&x, &[a, m, b], &params).unwrap();
            prop_assert!(max_abs(&(k1 - k2)) <= 1e-13 * max_abs(&k1).max(1.0));
        }

        #[test]
        fn crossing_string_jumps_only_the_skew_part(t in 0.05..0.95f64, lam in 0.0..50.0f64) {
            let params = p(lam, 1.0);
            let a = Vec2::new(0.0, 0.0);
            let b = Vec2::new(0.0, 1.0);
            let eps = 1e-9;
            let left = string_kernel2d(&Vec2::new(-eps, t), &[a, b], &params).unwrap();
            let right = string_kernel2d(&Vec2::new(eps, t), &[a, b], &params).unwrap();
            let jump = left - right;
            let expected = params.compressibility() / (2.0 * PI) * 2.0 * PI;
            prop_assert!((jump[(0, 1)].abs() - expected).abs() < 1e-6);
            prop_assert!((jump[(0, 1)] + jump[(1, 0)]).abs() < 1e-6);
            prop_assert!(jump[(0, 0)].abs() < 1e-6 && jump[(1, 1)].abs() < 1e-6);
        }
    }
}
