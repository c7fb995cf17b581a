//! Three-dimensional kernels: Stokeslet, Boussinesq–Cerruti half-space kernel
//! and its first two derivatives along the ray direction, their tractions,
//! string kernels in closed and line-integral form, and the Kelvin solution.
//!
//! Index conventions follow the planar module: entry `(j, k)` is component
//! `j` of the response to a unit force along `k`, and tractions contract the
//! target normal with the first stress index.

use crate::kernels2d::{ElasticParams, KernelError};
use crate::numerics::gauss_legendre;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Relative size of `R` below which a target counts as on the ray.
pub const RAY_TOLERANCE: f64 = 1e-12;

/// Geometry of a target relative to a source and ray direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame3 {
    pub r: Vec3,
    pub rnorm: f64,
    pub v: Vec3,
    /// `I − v vᵀ`.
    pub q_proj: Mat3,
    /// `Q r`.
    pub q: Vec3,
    /// `r · v`.
    pub s: f64,
    /// `|r| − r·v`, computed as `|Q r|² / (|r| + r·v)` when `r·v > 0`.
    pub big_r: f64,
}

impl Frame3 {
    pub fn new(x: &Vec3, y: &Vec3, v: &Vec3) -> Result<Self, KernelError> {
        if (v.norm() - 1.0).abs() > 1e-10 {
            return Err(KernelError::NotUnit);
        }
        let r = x - y;
        let rnorm = r.norm();
        if rnorm == 0.0 {
            return Err(KernelError::Coincident);
        }
        let s = r.dot(v);
        let q = r - v * s;
        let big_r = if s > 0.0 { q.norm_squared() / (rnorm + s) } else { rnorm - s };
        Ok(Self { r, rnorm, v: *v, q_proj: Mat3::identity() - v * v.transpose(), q, s, big_r })
    }

    pub fn on_ray(&self) -> bool {
        self.big_r <= RAY_TOLERANCE * self.rnorm
    }

    fn n_mat(&self) -> Mat3 {
        let (r, v) = (self.r, self.v);
        r * v.transpose() - v * r.transpose() - v * v.transpose() * self.s
    }
}

/// Derivative order along the ray direction `v` with respect to the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    Zero,
    One,
    Two,
}

/// How string kernels are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelForm {
    /// Endpoint differences plus the endpoint derivative term.
    Closed,
    /// Gauss–Legendre rule with `n` points on the second-derivative line integral.
    Quadrature(usize),
    /// Closed form when `|x − y| < 0.95 h`, quadrature otherwise.
    Auto(usize),
}

impl Default for KernelForm {
    fn default() -> Self {
        KernelForm::Auto(16)
    }
}

/// Free-space Stokeslet `(1/8πμ)[I/r + r rᵀ/r³]`.
pub fn stokeslet3d(x: &Vec3, y: &Vec3, mu: f64) -> Result<Mat3, KernelError> {
    let r = x - y;
    let rn = r.norm();
    if rn == 0.0 {
        return Err(KernelError::Coincident);
    }
    Ok((Mat3::identity() / rn + r * r.transpose() / (rn * rn * rn)) / (8.0 * PI * mu))
}

/// Traction of twice the Stokeslet: `−6 (r·n) r_j r_k / (4π r⁵)`.
pub fn stokeslet3d_traction(x: &Vec3, n_x: &Vec3, y: &Vec3) -> Result<Mat3, KernelError> {
    let r = x - y;
    let rn = r.norm();
    if rn == 0.0 {
        return Err(KernelError::Coincident);
    }
    Ok(r * r.transpose() * (-6.0 * r.dot(n_x) / (4.0 * PI * rn.powi(5))))
}

fn disp_from_frame(order: Order, f: &Frame3, params: &ElasticParams) -> Mat3 {
    let mu = params.mu();
    let c = params.compressibility();
    let (r, v, q, s, rn, big_r) = (f.r, f.v, f.q, f.s, f.rnorm, f.big_r);
    let id = Mat3::identity();
    let rr = r * r.transpose();
    let vv = v * v.transpose();
    let qq = q * q.transpose();
    let sym = v * r.transpose() + r * v.transpose();
    let r3 = rn * rn * rn;
    let r5 = r3 * rn * rn;
    let stokes = 2.0 / (8.0 * PI * mu);
    let corr = c / (4.0 * PI * mu);
    match order {
        Order::Zero => {
            let base = id / rn + rr / r3;
            if c == 0.0 {
                return base * stokes;
            }
            let d = id / big_r + f.n_mat() / (rn * big_r) - qq / (rn * big_r * big_r);
            base * stokes + d * corr
        }
        Order::One => {
            let base = id * (s / r3) - sym / r3 + rr * (3.0 * s / r5);
            if c == 0.0 {
                return base * stokes;
            }
            let d = -f.q_proj / (rn * big_r) - f.n_mat() / r3 + qq * ((2.0 * rn - s) / (r3 * big_r * big_r));
            base * stokes + d * corr
        }
        Order::Two => {
            let r7 = r5 * rn * rn;
            let base = id * (-1.0 / r3 + 3.0 * s * s / r5) + vv * (2.0 / r3) - sym * (6.0 * s / r5) - rr * (3.0 / r5)
                + rr * (15.0 * s * s / r7);
            let d = id / r3 - vv * (2.0 / r3) - qq * (3.0 / r5) - f.n_mat() * (3.0 * s / r5);
            base * stokes + d * corr
        }
    }
}

/// Half-space kernel (`Order::Zero`) and its derivatives `v·∇_y` (`One`) and
/// `(v·∇_y)²` (`Two`). Orders zero and one are singular on the ray
/// `{y + t v, t > 0}`; order two is smooth there.
pub fn disp3d(order: Order, x: &Vec3, y: &Vec3, v: &Vec3, params: &ElasticParams) -> Result<Mat3, KernelError> {
    let f = Frame3::new(x, y, v)?;
    if order != Order::Two && params.compressibility() != 0.0 && f.on_ray() {
        return Err(KernelError::OnBranchRay);
    }
    Ok(disp_from_frame(order, &f, params))
}

fn stress_from_frame(order: Order, f: &Frame3, n: &Vec3, params: &ElasticParams) -> Mat3 {
    let c = params.compressibility();
    let (r, v, q, s, rn, big_r) = (f.r, f.v, f.q, f.s, f.rnorm, f.big_r);
    let nr = n.dot(&r);
    let nv = n.dot(&v);
    let nq = n.dot(&q);
    let qn = f.q_proj * n;
    let rr = r * r.transpose();
    let r2 = rn * rn;
    let r3 = r2 * rn;
    let r5 = r3 * r2;
    let r7 = r5 * r2;
    let four_pi = 4.0 * PI;
    // n_i (Q_ik q_j + Q_jk q_i) contracted: q (Qn)ᵀ + (n·q) Q.
    let qsym = q * qn.transpose() + f.q_proj * nq;
    match order {
        Order::Zero => {
            let out = rr * (-6.0 * nr / (four_pi * r5));
            if c == 0.0 {
                return out;
            }
            let br2 = big_r * big_r;
            let br = q * r.transpose() * ((4.0 / big_r + 2.0 / rn) * nq / (r2 * br2))
                - qn * r.transpose() * (2.0 / rn * (1.0 / br2 - 1.0 / r2))
                - q * v.transpose() * (4.0 * nq / (rn * br2 * big_r))
                + qn * v.transpose() * (2.0 / br2)
                - qsym * (2.0 / (rn * br2));
            out + br * (c / four_pi)
        }
        Order::One => {
            let sym = nr * (r * v.transpose() + v * r.transpose()) + rr * nv;
            let out = sym * (-6.0 / (four_pi * r5)) + rr * (30.0 * s * nr / (four_pi * r7));
            if c == 0.0 {
                return -out;
            }
            let br2 = big_r * big_r;
            let br3 = br2 * big_r;
            let br = q * v.transpose() * (-2.0 * nq * (big_r + 2.0 * rn) / (r3 * br3))
                + q * r.transpose() * (2.0 * nq * (2.0 * r2 + 3.0 * rn * big_r + 3.0 * br2) / (r5 * br3))
                + qn * v.transpose() * (2.0 / (rn * br2))
                - (qsym + qn * r.transpose()) * (2.0 * (big_r + rn) / (r3 * br2))
                + qn * v.transpose() * (2.0 / r3)
                - qn * r.transpose() * (6.0 * s / r5);
            -(out + br * (c / four_pi))
        }
        Order::Two => {
            let r9 = r7 * r2;
            let vv = v * v.transpose();
            let sym = nr * (r * v.transpose() + v * r.transpose()) + rr * nv;
            let out = (vv * nr + (r * v.transpose() + v * r.transpose()) * nv) * (-12.0 / (four_pi * r5))
                + rr * (30.0 * nr / (four_pi * r7))
                + sym * (60.0 * s / (four_pi * r7))
                - rr * (210.0 * s * s * nr / (four_pi * r9));
            if c == 0.0 {
                return out;
            }
            let br = q * r.transpose() * (30.0 * nq / r7) - qsym * (6.0 / r5) - qn * v.transpose() * (12.0 * s / r5)
                - qn * r.transpose() * (12.0 / r5)
                + qn * r.transpose() * (30.0 * s * s / r7);
            out + br * (c / four_pi)
        }
    }
}

/// Traction at `x` with normal `n_x` of [`disp3d`] of the same order.
pub fn stress3d(
    order: Order,
    x: &Vec3,
    n_x: &Vec3,
    y: &Vec3,
    v: &Vec3,
    params: &ElasticParams,
) -> Result<Mat3, KernelError> {
    let f = Frame3::new(x, y, v)?;
    if order != Order::Two && params.compressibility() != 0.0 && f.on_ray() {
        return Err(KernelError::OnBranchRay);
    }
    Ok(stress_from_frame(order, &f, n_x, params))
}

fn check_segment(x: &Vec3, y: &Vec3, v: &Vec3, h: f64) -> Result<(), KernelError> {
    if (v.norm() - 1.0).abs() > 1e-10 {
        return Err(KernelError::NotUnit);
    }
    if !(h > 0.0) {
        return Err(KernelError::DegenerateString);
    }
    let r = x - y;
    let t = r.dot(v).clamp(0.0, h);
    let dist = (r - v * t).norm();
    if dist < 1e-12 * r.norm().max(1.0) {
        return Err(KernelError::OnString);
    }
    Ok(())
}

fn resolve_form(form: KernelForm, x: &Vec3, y: &Vec3, h: f64) -> KernelForm {
    match form {
        KernelForm::Auto(n) => {
            if (x - y).norm() < 0.95 * h {
                KernelForm::Closed
            } else {
                KernelForm::Quadrature(n)
            }
        }
        other => other,
    }
}

fn line_integral<F: Fn(&Vec3) -> Mat3>(n: usize, y: &Vec3, v: &Vec3, h: f64, f: F) -> Result<Mat3, KernelError> {
    let rule = gauss_legendre(n).map_err(|e| KernelError::InvalidParams(e.to_string()))?;
    let mut acc = Mat3::zeros();
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let tt = 0.5 * h * (t + 1.0);
        acc += f(&(y + v * tt)) * (w * tt);
    }
    Ok(acc * (0.5 * h))
}

/// Half-space kernel truncated to the segment `[y, y + h v]`.
pub fn string_kernel3d(
    x: &Vec3,
    y: &Vec3,
    v: &Vec3,
    h: f64,
    params: &ElasticParams,
    form: KernelForm,
) -> Result<Mat3, KernelError> {
    check_segment(x, y, v, h)?;
    let yh = y + v * h;
    match resolve_form(form, x, y, h) {
        KernelForm::Closed => Ok(disp3d(Order::Zero, x, y, v, params)? - disp3d(Order::Zero, x, &yh, v, params)?
            + disp3d(Order::One, x, &yh, v, params)? * h),
        KernelForm::Quadrature(n) => {
            line_integral(n, y, v, h, |p| disp_from_frame(Order::Two, &Frame3::new(x, p, v).unwrap(), params))
        }
        KernelForm::Auto(_) => unreachable!(),
    }
}

/// Traction at `x` with normal `n_x` of [`string_kernel3d`].
pub fn sigma_string3d(
    x: &Vec3,
    n_x: &Vec3,
    y: &Vec3,
    v: &Vec3,
    h: f64,
    params: &ElasticParams,
    form: KernelForm,
) -> Result<Mat3, KernelError> {
    check_segment(x, y, v, h)?;
    let yh = y + v * h;
    match resolve_form(form, x, y, h) {
        KernelForm::Closed => Ok(stress3d(Order::Zero, x, n_x, y, v, params)?
            - stress3d(Order::Zero, x, n_x, &yh, v, params)?
            + stress3d(Order::One, x, n_x, &yh, v, params)? * h),
        KernelForm::Quadrature(n) => line_integral(n, y, v, h, |p| {
            stress_from_frame(Order::Two, &Frame3::new(x, p, v).unwrap(), n_x, params)
        }),
        KernelForm::Auto(_) => unreachable!(),
    }
}

/// Kelvin solution `(1/4πμ)[(2−α)/r I + α r rᵀ/r³]`.
pub fn kelvin3d(x: &Vec3, y: &Vec3, params: &ElasticParams) -> Result<Mat3, KernelError> {
    let r = x - y;
    let rn = r.norm();
    if rn == 0.0 {
        return Err(KernelError::Coincident);
    }
    let a = params.alpha();
    Ok((Mat3::identity() * ((2.0 - a) / rn) + r * r.transpose() * (a / rn.powi(3))) / (4.0 * PI * params.mu()))
}

/// Traction of [`kelvin3d`]:
/// `(1/4π)[−2(1−α)((r·n)δ_jk + r_j n_k − n_j r_k)/r³ − 6α (r·n) r_j r_k / r⁵]`.
pub fn kelvin3d_traction(x: &Vec3, n_x: &Vec3, y: &Vec3, params: &ElasticParams) -> Result<Mat3, KernelError> {
    let r = x - y;
    let rn = r.norm();
    if rn == 0.0 {
        return Err(KernelError::Coincident);
    }
    let a = params.alpha();
    let rdn = r.dot(n_x);
    let odd = Mat3::identity() * rdn + r * n_x.transpose() - n_x * r.transpose();
    Ok((odd * (-2.0 * (1.0 - a) / rn.powi(3)) + r * r.transpose() * (-6.0 * a * rdn / rn.powi(5))) / (4.0 * PI))
}
