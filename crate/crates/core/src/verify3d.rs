//! Finite-difference verification of the 3D kernels.

use crate::kernels2d::{ElasticParams, KernelError};
use crate::kernels3d::{
    disp3d, sigma_string3d, stress3d, string_kernel3d, Frame3, KernelForm, Mat3, Order, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("finite-difference step {0} is too small")]
    StepUnderflow(f64),
    #[error("the elastostatic operator is undefined for infinite lambda")]
    Incompressible,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offender {
    pub sample: usize,
    pub error: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub samples: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Expected convergence order or scaling, when the check measures one.
    pub expected: String,
    /// Measured counterpart of `expected`.
    pub measured: Option<f64>,
    pub pass: bool,
    pub worst: Vec<Offender>,
}

/// Settings for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSettings {
    pub seed: u64,
    pub h: f64,
    pub samples: usize,
    pub stress_samples: usize,
    pub quadrature_order: usize,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        Self { seed: 2024, h: 0.25, samples: 100, stress_samples: 50, quadrature_order: 16 }
    }
}

type Field<'a> = dyn Fn(&Vec3) -> Mat3 + Sync + 'a;

fn gradient(field: &Field, x: &Vec3, step: f64) -> [Mat3; 3] {
    let mut g = [Mat3::zeros(); 3];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut e = Vec3::zeros();
        e[i] = step;
        *gi = (field(&(x + e)) - field(&(x - e))) / (2.0 * step);
    }
    g
}

/// Traction `n_i σ_ij[u_{·k}]` of each column of `field` by central differences.
pub fn fd_traction(field: &Field, x: &Vec3, n: &Vec3, params: &ElasticParams, step: f64) -> Mat3 {
    let g = gradient(field, x, step);
    let lam = if params.is_incompressible() { 0.0 } else { params.lambda() };
    let mu = params.mu();
    let mut t = Mat3::zeros();
    for k in 0..3 {
        let div = g[0][(0, k)] + g[1][(1, k)] + g[2][(2, k)];
        for j in 0..3 {
            let mut s = n[j] * lam * div;
            for i in 0..3 {
                s += n[i] * mu * (g[i][(j, k)] + g[j][(i, k)]);
            }
            t[(j, k)] = s;
        }
    }
    t
}

/// `(λ+μ)∇(∇·u) + μΔu` for each column of `field`, by central second differences.
pub fn elasto_residual(field: &Field, x: &Vec3, step: f64, params: &ElasticParams) -> Result<Mat3, VerifyError> {
    if params.is_incompressible() {
        return Err(VerifyError::Incompressible);
    }
    if !(step > 1e-8 * x.norm().max(1.0)) {
        return Err(VerifyError::StepUnderflow(step));
    }
    let at = |a: usize, sa: f64, b: usize, sb: f64| {
        let mut d = Vec3::zeros();
        d[a] += sa * step;
        d[b] += sb * step;
        field(&(x + d))
    };
    let u0 = field(x);
    // hess[a][b] = ∂_a ∂_b u
    let mut hess = [[Mat3::zeros(); 3]; 3];
    for a in 0..3 {
        hess[a][a] = (at(a, 1.0, a, 0.0) - u0 * 2.0 + at(a, -1.0, a, 0.0)) / (step * step);
        for b in a + 1..3 {
            let m = (at(a, 1.0, b, 1.0) - at(a, 1.0, b, -1.0) - at(a, -1.0, b, 1.0) + at(a, -1.0, b, -1.0))
                / (4.0 * step * step);
            hess[a][b] = m;
            hess[b][a] = m;
        }
    }
    let lm = params.lambda() + params.mu();
    let mut out = (hess[0][0] + hess[1][1] + hess[2][2]) * params.mu();
    for k in 0..3 {
        for j in 0..3 {
            let graddiv: f64 = (0..3).map(|i| hess[j][i][(i, k)]).sum();
            out[(j, k)] += lm * graddiv;
        }
    }
    Ok(out)
}

fn max_abs(m: &Mat3) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.2 && n <= 1.0 {
            return v / n;
        }
    }
}

fn distance_to_segment(x: &Vec3, y: &Vec3, v: &Vec3, len: f64) -> f64 {
    let r = x - y;
    let t = r.dot(v).clamp(0.0, len);
    (r - v * t).norm()
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    x: Vec3,
    y: Vec3,
    v: Vec3,
    n: Vec3,
}

/// Configurations with `0.5 ≤ |x − y| ≤ 2`, `R ≥ 0.1 |x − y|`, and the target
/// at least `0.1` from the string `[y, y + h v]`.
fn samples(rng: &mut ChaCha8Rng, count: usize, h: f64) -> Vec<Sample> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let y = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let x = y + unit(rng) * rng.gen_range(0.5..2.0);
        let v = unit(rng);
        let n = unit(rng);
        let f = Frame3::new(&x, &y, &v).expect("unit direction");
        if f.big_r < 0.1 * f.rnorm || distance_to_segment(&x, &y, &v, h) < 0.1 {
            continue;
        }
        out.push(Sample { x, y, v, n });
    }
    out
}

/// Distance from the target to where the kernel is singular.
fn singular_distance(kind: &str, s: &Sample, h: f64) -> f64 {
    match kind {
        "G2" => (s.x - s.y).norm(),
        "K" => distance_to_segment(&s.x, &s.y, &s.v, h),
        _ => distance_to_segment(&s.x, &s.y, &s.v, f64::INFINITY),
    }
}

fn field_for<'a>(kind: &'a str, s: Sample, h: f64, params: ElasticParams, form: KernelForm) -> Box<Field<'a>> {
    Box::new(move |z: &Vec3| -> Mat3 {
        let r = match kind {
            "G0" => disp3d(Order::Zero, z, &s.y, &s.v, &params),
            "G1" => disp3d(Order::One, z, &s.y, &s.v, &params),
            "G2" => disp3d(Order::Two, z, &s.y, &s.v, &params),
            _ => string_kernel3d(z, &s.y, &s.v, h, &params, form),
        };
        r.expect("samples stay off the singular set")
    })
}

fn worst(errors: &[(usize, f64, String)]) -> Vec<Offender> {
    let mut v: Vec<&(usize, f64, String)> = errors.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v.into_iter().take(3).map(|(i, e, d)| Offender { sample: *i, error: *e, detail: d.clone() }).collect()
}

fn label(params: &ElasticParams) -> String {
    if params.is_incompressible() {
        format!("lambda=inf,mu={}", params.mu())
    } else {
        format!("lambda={},mu={}", params.lambda(), params.mu())
    }
}

fn pde_check(params: &ElasticParams, set: &[Sample], st: &SuiteSettings) -> VerificationReport {
    let tol = 1e-5;
    let form = KernelForm::Auto(st.quadrature_order);
    let kinds = ["G0", "G1", "G2", "K"];
    let rows: Vec<(usize, f64, String, f64, f64)> = (0..set.len() * kinds.len())
        .into_par_iter()
        .map(|idx| {
            let (i, kind) = (idx / kinds.len(), kinds[idx % kinds.len()]);
            let s = set[i];
            let field = field_for(kind, s, st.h, *params, form);
            let d = singular_distance(kind, &s, st.h);
            let scale = (params.lambda() + 2.0 * params.mu()) * max_abs(&field(&s.x)) / (d * d);
            let step = 1e-4 * (s.x - s.y).norm().max(1.0) * d.min(1.0);
            let res = elasto_residual(field.as_ref(), &s.x, step, params).expect("valid step");
            let coarse = elasto_residual(field.as_ref(), &s.x, 2e-2 * d, params).expect("valid step");
            let fine = elasto_residual(field.as_ref(), &s.x, 1e-2 * d, params).expect("valid step");
            (i, max_abs(&res) / scale, kind.to_string(), max_abs(&coarse) / scale, max_abs(&fine) / scale)
        })
        .collect();
    let errors: Vec<(usize, f64, String)> = rows.iter().map(|r| (r.0, r.1, r.2.clone())).collect();
    let max_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let ratio = rows.iter().map(|r| r.3).sum::<f64>() / rows.iter().map(|r| r.4).sum::<f64>();
    VerificationReport {
        check: format!("pde_residual[{}]", label(params)),
        samples: rows.len(),
        max_error,
        tolerance: tol,
        expected: "step ratio 4 (second order)".into(),
        measured: Some(ratio),
        pass: max_error <= tol && (3.5..=4.5).contains(&ratio),
        worst: worst(&errors),
    }
}

fn stress_check(params: &ElasticParams, set: &[Sample], st: &SuiteSettings) -> VerificationReport {
    let tol = 1e-6;
    let orders = [Order::Zero, Order::One, Order::Two];
    let set = &set[..st.stress_samples.min(set.len())];
    let rows: Vec<(usize, f64, String, f64, f64)> = (0..set.len() * 3)
        .into_par_iter()
        .map(|idx| {
            let (i, order) = (idx / 3, orders[idx % 3]);
            let s = set[i];
            let kind = ["G0", "G1", "G2"][idx % 3];
            let field = field_for(kind, s, st.h, *params, KernelForm::Closed);
            let exact = stress3d(order, &s.x, &s.n, &s.y, &s.v, params).expect("off ray");
            let scale = max_abs(&exact);
            let d = singular_distance(kind, &s, st.h);
            let step = 1e-4 * (s.x - s.y).norm().max(1.0) * d.min(1.0) * 0.1;
            let err = |h: f64| max_abs(&(fd_traction(field.as_ref(), &s.x, &s.n, params, h) - exact)) / scale;
            (i, err(step), format!("{order:?}"), err(2e-2 * d), err(1e-2 * d))
        })
        .collect();
    let errors: Vec<(usize, f64, String)> = rows.iter().map(|r| (r.0, r.1, r.2.clone())).collect();
    let max_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let ratio = rows.iter().map(|r| r.3).sum::<f64>() / rows.iter().map(|r| r.4).sum::<f64>();
    VerificationReport {
        check: format!("stress_vs_fd[{}]", label(params)),
        samples: rows.len(),
        max_error,
        tolerance: tol,
        expected: "step ratio 4 (second order)".into(),
        measured: Some(ratio),
        pass: max_error <= tol && (3.5..=4.5).contains(&ratio),
        worst: worst(&errors),
    }
}

fn cross_form_check(params: &ElasticParams, rng: &mut ChaCha8Rng, st: &SuiteSettings) -> VerificationReport {
    let tol = 1e-11;
    let h = st.h;
    let n = st.quadrature_order;
    let mut errors = Vec::new();
    while errors.len() < st.samples {
        let y = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let v = unit(rng);
        let x = y + unit(rng) * rng.gen_range(2.0 * h..8.0 * h);
        let nx = unit(rng);
        let far = Frame3::new(&x, &(y + v * h), &v).expect("unit");
        if far.big_r < 0.1 * far.rnorm {
            continue;
        }
        let k_closed = string_kernel3d(&x, &y, &v, h, params, KernelForm::Closed).expect("off ray");
        let k_quad = string_kernel3d(&x, &y, &v, h, params, KernelForm::Quadrature(n)).expect("off segment");
        let s_closed = sigma_string3d(&x, &nx, &y, &v, h, params, KernelForm::Closed).expect("off ray");
        let s_quad = sigma_string3d(&x, &nx, &y, &v, h, params, KernelForm::Quadrature(n)).expect("off segment");
        let ek = max_abs(&(k_closed - k_quad)) / max_abs(&k_quad);
        let es = max_abs(&(s_closed - s_quad)) / max_abs(&s_quad);
        errors.push((errors.len(), ek.max(es), format!("|x-y|/h={:.2}", (x - y).norm() / h)));
    }
    let max_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);

    // Quadrature error against quadrature order at |x − y| = 3h.
    let y = Vec3::zeros();
    let v = Vec3::new(0.0, 0.6, 0.8);
    let x = Vec3::new(3.0 * h, 0.0, 0.0);
    let reference = string_kernel3d(&x, &y, &v, h, params, KernelForm::Closed).expect("off ray");
    let errs: Vec<f64> = [2usize, 4, 6, 8]
        .iter()
        .map(|&m| {
            let q = string_kernel3d(&x, &y, &v, h, params, KernelForm::Quadrature(m)).expect("off segment");
            max_abs(&(q - reference)) / max_abs(&reference)
        })
        .collect();
    // Mean reduction factor per added pair of nodes.
    let rate = (errs[3] / errs[0]).powf(1.0 / 3.0);
    let geometric = errs.windows(2).all(|w| w[1] < 0.5 * w[0]);
    VerificationReport {
        check: format!("closed_vs_quadrature[{}]", label(params)),
        samples: errors.len(),
        max_error,
        tolerance: tol,
        expected: "geometric decay in quadrature order".into(),
        measured: Some(rate),
        pass: max_error <= tol && geometric,
        worst: worst(&errors),
    }
}

fn lambda_for_alpha(alpha: f64, mu: f64) -> f64 {
    mu * (2.0 * alpha - 1.0) / (1.0 - alpha)
}

fn stokes_limit_check(params: &ElasticParams, rng: &mut ChaCha8Rng, st: &SuiteSettings) -> VerificationReport {
    let tol = 0.1;
    let h = st.h;
    let form = KernelForm::Auto(st.quadrature_order);
    let mu = params.mu();
    let stokes = ElasticParams::incompressible(mu).expect("mu > 0");
    let alphas = [0.9, 0.99, 0.999];
    let mut errors = Vec::new();
    let mut own_alpha_diff: f64 = 0.0;
    while errors.len() < st.samples {
        let y = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let v = unit(rng);
        let x = y + unit(rng) * rng.gen_range(0.5 * h..8.0 * h);
        let nx = unit(rng);
        let f0 = Frame3::new(&x, &y, &v).expect("unit");
        if f0.big_r < 0.1 * f0.rnorm || distance_to_segment(&x, &y, &v, h) < 0.2 * h {
            continue;
        }
        let base = sigma_string3d(&x, &nx, &y, &v, h, &stokes, form).expect("off string");
        let q: Vec<f64> = alphas
            .iter()
            .map(|&a| {
                let p = ElasticParams::new(lambda_for_alpha(a, mu), mu).expect("valid");
                let s = sigma_string3d(&x, &nx, &y, &v, h, &p, form).expect("off string");
                (s - base).norm() / (1.0 - a)
            })
            .collect();
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        let dev = q.iter().map(|v| (v - mean).abs() / mean).fold(0.0, f64::max);
        let own = sigma_string3d(&x, &nx, &y, &v, h, params, form).expect("off string");
        if params.is_incompressible() {
            own_alpha_diff = own_alpha_diff.max(max_abs(&(own - base)));
        }
        errors.push((errors.len(), dev, format!("q={q:.4?}")));
    }
    let max_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    VerificationReport {
        check: format!("stokes_limit_scaling[{}]", label(params)),
        samples: errors.len(),
        max_error,
        tolerance: tol,
        expected: "difference from the incompressible kernel proportional to (1-alpha)".into(),
        measured: Some(own_alpha_diff),
        pass: max_error <= tol && own_alpha_diff == 0.0,
        worst: worst(&errors),
    }
}

fn half_space_check(params: &ElasticParams, rng: &mut ChaCha8Rng, st: &SuiteSettings) -> VerificationReport {
    let tol = 1e-13;
    let e3 = Vec3::z();
    let mut errors = Vec::new();
    for i in 0..st.samples {
        let y = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
        let x = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0);
        if (x - y).norm() < 1e-3 {
            continue;
        }
        let t = stress3d(Order::Zero, &x, &e3, &y, &e3, params).expect("off ray");
        errors.push((i, max_abs(&t), String::new()));
    }
    let max_error = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    VerificationReport {
        check: format!("half_space_zero_traction[{}]", label(params)),
        samples: errors.len(),
        max_error,
        tolerance: tol,
        expected: "identically zero".into(),
        measured: None,
        pass: max_error <= tol,
        worst: worst(&errors),
    }
}

/// Runs the five kernel checks for every parameter set. Reports come back
/// grouped by check name, then in the order of `params`.
pub fn run_suite(settings: &SuiteSettings, params: &[ElasticParams]) -> Vec<VerificationReport> {
    let mut reports = Vec::new();
    for (pi, p) in params.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed.wrapping_add(pi as u64));
        let set = samples(&mut rng, settings.samples, settings.h);
        let mut group = Vec::new();
        if !p.is_incompressible() {
            group.push(pde_check(p, &set, settings));
            group.push(stress_check(p, &set, settings));
        }
        group.push(cross_form_check(p, &mut rng, settings));
        group.push(stokes_limit_check(p, &mut rng, settings));
        group.push(half_space_check(p, &mut rng, settings));
        reports.extend(group);
    }
    reports.sort_by_key(|r| r.check.split('[').next().map(str::to_owned));
    reports
}
