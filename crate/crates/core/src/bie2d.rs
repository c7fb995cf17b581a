//! Planar second-kind traction integral equation `ρ + Σρ = f` on string
//! kernels: Nyström assembly, rigid-body deflation, GMRES solve, interior
//! displacement evaluation and rigid-body-fitted error metrics.

use crate::geometry2d::{string_at, validate_strings, Location, Panelization, StringSpec};
use crate::kernels2d::{kelvin2d, kelvin2d_traction, sigma_string2d, string_kernel2d, ElasticParams, KernelError, Mat2, Vec2};
use crate::numerics::{
    extreme_singular_values_lanczos, gmres, lstsq, svd_condition, DenseMatrix, GmresError, GmresOutcome, NumericsError,
    LANCZOS_MAX_STEPS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Relative net force and torque allowed in [`TractionData`].
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Samples per string segment used when assembly validates strings.
pub const VALIDATION_SAMPLES: usize = 16;

/// A sub-panel is integrated directly once the target is at least this many
/// sub-panel lengths away from it.
const NEAR_RATIO: f64 = 1.0;
const MAX_DEPTH: usize = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BieError {
    #[error("strings at nodes {0:?} intersect the closed domain")]
    InvalidStrings(Vec<usize>),
    #[error("kernel evaluation failed: {0}")]
    Kernel(#[from] KernelError),
    #[error("numerics: {0}")]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Gmres(#[from] GmresError),
    #[error("traction data is incompatible: net force {force:e}, net torque {torque:e}")]
    Incompatible { force: f64, torque: f64 },
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("source {0} is not strictly outside the domain")]
    InteriorSource(usize),
    #[error("target {0} is not inside the domain away from the boundary")]
    TargetNotInterior(usize),
    #[error("rigid-body fit needs at least 3 non-collinear targets")]
    DegenerateTargets,
    #[error("offset {delta:e} outside (1e-8, {max:e})")]
    InvalidDelta { delta: f64, max: f64 },
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("non-finite values")]
    NonFinite,
}

/// Density `ρ`, node-major `[ρ₁(x₀), ρ₂(x₀), ρ₁(x₁), …]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDensity {
    values: Vec<f64>,
}

impl BoundaryDensity {
    pub fn new(values: Vec<f64>) -> Result<Self, BieError> {
        if values.len() % 2 != 0 {
            return Err(BieError::DimensionMismatch { expected: values.len() + 1, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BieError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn zeros(nodes: usize) -> Self {
        Self { values: vec![0.0; 2 * nodes] }
    }

    pub fn from_fn(pan: &Panelization, f: impl Fn(usize) -> Vec2) -> Self {
        let values = (0..pan.len()).flat_map(|i| {
            let v = f(i);
            [v.x, v.y]
        });
        Self { values: values.collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize) -> Vec2 {
        Vec2::new(self.values[2 * i], self.values[2 * i + 1])
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / 2
    }
}

/// Traction `f`, node-major, checked for zero net force and torque.
#[derive(Debug, Clone, PartialEq)]
pub struct TractionData {
    values: Vec<f64>,
}

/// Discrete net force `Σ w f` and torque `Σ w (x − x_c)^⊥·f`.
pub fn net_force_torque(pan: &Panelization, values: &[f64]) -> (Vec2, f64) {
    let xc = pan.centroid();
    let mut force = Vec2::zeros();
    let mut torque = 0.0;
    for (i, n) in pan.nodes().iter().enumerate() {
        let f = Vec2::new(values[2 * i], values[2 * i + 1]);
        force += f * n.weight;
        torque += rot90(&(n.position - xc)).dot(&f) * n.weight;
    }
    (force, torque)
}

impl TractionData {
    /// Accepts `values` when `|Σ w f| ≤ tol Σ w |f|` and
    /// `|Σ w (x − x_c)^⊥·f| ≤ tol Σ w |x − x_c| |f|`.
    pub fn new(pan: &Panelization, values: Vec<f64>, tol: f64) -> Result<Self, BieError> {
        if values.len() != 2 * pan.len() {
            return Err(BieError::DimensionMismatch { expected: 2 * pan.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BieError::NonFinite);
        }
        let xc = pan.centroid();
        let (force, torque) = net_force_torque(pan, &values);
        let mut fscale = 0.0;
        let mut tscale = 0.0;
        for (i, n) in pan.nodes().iter().enumerate() {
            let f = Vec2::new(values[2 * i], values[2 * i + 1]).norm() * n.weight;
            fscale += f;
            tscale += f * (n.position - xc).norm();
        }
        if force.norm() > tol * fscale || torque.abs() > tol * tscale {
            return Err(BieError::Incompatible { force: force.norm() / fscale, torque: torque.abs() / tscale });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Counter-clockwise quarter turn `(x, y) ↦ (−y, x)`.
pub fn rot90(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// `2N × 2N` Nyström matrix with its weights and rigid-body basis.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    matrix: DenseMatrix,
    /// Arclength weight of each node.
    weights: Vec<f64>,
    /// W-orthonormal rigid fields: two translations and one rotation.
    basis: [Vec<f64>; 3],
    deflated: bool,
    scaled: bool,
}

impl DenseSystem {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis(&self) -> &[Vec<f64>; 3] {
        &self.basis
    }

    pub fn is_deflated(&self) -> bool {
        self.deflated
    }

    pub fn is_scaled(&self) -> bool {
        self.scaled
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Weight of scalar unknown `a`.
    fn unknown_weight(&self, a: usize) -> f64 {
        self.weights[a / 2]
    }

    /// `⟨u, v⟩_W`.
    pub fn inner_w(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).enumerate().map(|(a, (x, y))| x * y * self.unknown_weight(a)).sum()
    }

    /// 2-norm condition number of the current matrix.
    pub fn condition(&self) -> Result<f64, BieError> {
        Ok(svd_condition(&self.matrix)?)
    }

    /// Largest and smallest singular values of the current matrix.
    pub fn extreme_singular_values(&self) -> Result<(f64, f64), BieError> {
        let (smax, smin, _) = extreme_singular_values_lanczos(&self.matrix, LANCZOS_MAX_STEPS, 1e-9)?;
        Ok((smax, smin))
    }
}

fn rigid_basis(pan: &Panelization) -> [Vec<f64>; 3] {
    let xc = pan.centroid();
    let n = pan.len();
    let w: Vec<f64> = pan.nodes().iter().flat_map(|n| [n.weight, n.weight]).collect();
    let raw: [Vec<f64>; 3] = [
        (0..n).flat_map(|_| [1.0, 0.0]).collect(),
        (0..n).flat_map(|_| [0.0, 1.0]).collect(),
        pan.nodes()
            .iter()
            .flat_map(|n| {
                let r = rot90(&(n.position - xc));
                [r.x, r.y]
            })
            .collect(),
    ];
    let inner = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).zip(&w).map(|((a, b), c)| a * b * c).sum() };
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(3);
    for mut v in raw {
        // Two Gram–Schmidt passes.
        for _ in 0..2 {
            for q in &out {
                let c = inner(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let nv = inner(&v, &v).sqrt();
        v.iter_mut().for_each(|a| *a /= nv);
        out.push(v);
    }
    let [a, b, c]: [Vec<f64>; 3] = out.try_into().expect("three fields");
    [a, b, c]
}

/// Nyström matrix `δ_ij I + w_j Σ(x_i, n_i; string_j)`, with the curvature
/// limit on diagonal blocks. Refuses strings that touch the closed domain.
pub fn assemble(pan: &Panelization, strings: &[StringSpec]) -> Result<DenseSystem, BieError> {
    let n = pan.len();
    if strings.len() != n {
        return Err(BieError::DimensionMismatch { expected: n, got: strings.len() });
    }
    let report = validate_strings(pan, strings, VALIDATION_SAMPLES);
    if !report.is_valid() {
        return Err(BieError::InvalidStrings(report.violations));
    }
    let nodes = pan.nodes();
    let dim = 2 * n;
    let mut data = vec![0.0; dim * dim];
    data.par_chunks_mut(2 * dim).enumerate().try_for_each(|(i, rows)| -> Result<(), BieError> {
        let xi = &nodes[i];
        let (r0, r1) = rows.split_at_mut(dim);
        for (j, (yj, sj)) in nodes.iter().zip(strings).enumerate() {
            let mut k = sigma_string2d(&xi.position, &xi.normal, xi.curvature, sj.vertices())? * yj.weight;
            if i == j {
                k += Mat2::identity();
            }
            r0[2 * j] = k[(0, 0)];
            r0[2 * j + 1] = k[(0, 1)];
            r1[2 * j] = k[(1, 0)];
            r1[2 * j + 1] = k[(1, 1)];
        }
        Ok(())
    })?;
    let matrix = DenseMatrix::new(dim, dim, data)?;
    Ok(DenseSystem { matrix, weights: pan.weights(), basis: rigid_basis(pan), deflated: false, scaled: false })
}

/// Adds `Σ_k ψ_k ψ_kᵀ W`, expressed in the current (possibly scaled)
/// coordinates. Deflating twice is a no-op.
pub fn deflate(mut system: DenseSystem) -> DenseSystem {
    if system.deflated {
        return system;
    }
    let dim = system.dim();
    let s: Vec<f64> =
        (0..dim).map(|a| if system.scaled { system.unknown_weight(a).sqrt() } else { 1.0 }).collect();
    let w: Vec<f64> = (0..dim).map(|a| system.unknown_weight(a)).collect();
    let basis = system.basis.clone();
    system.matrix.as_mut_slice().par_chunks_mut(dim).enumerate().for_each(|(a, row)| {
        for (b, entry) in row.iter_mut().enumerate() {
            let shift: f64 = basis.iter().map(|psi| psi[a] * psi[b]).sum();
            *entry += shift * w[b] * s[a] / s[b];
        }
    });
    system.deflated = true;
    system
}

/// Similarity transform `D^{1/2} A D^{−1/2}`, `D` the weight of each scalar
/// unknown. Scaling twice is a no-op.
pub fn l2_scale(mut system: DenseSystem) -> DenseSystem {
    if system.scaled {
        return system;
    }
    let dim = system.dim();
    let s: Vec<f64> = (0..dim).map(|a| system.unknown_weight(a).sqrt()).collect();
    system.matrix.as_mut_slice().par_chunks_mut(dim).enumerate().for_each(|(a, row)| {
        for (b, entry) in row.iter_mut().enumerate() {
            *entry *= s[a] / s[b];
        }
    });
    system.scaled = true;
    system
}

/// Outcome of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub density: BoundaryDensity,
    pub iters: usize,
    /// Relative residual of the solved linear system.
    pub residual: f64,
    pub history: Vec<f64>,
}

/// GMRES on the system, undoing the `ℓ²` scaling if present.
pub fn solve(system: &DenseSystem, f: &TractionData, tol: f64) -> Result<SolveOutcome, BieError> {
    let dim = system.dim();
    if f.values.len() != dim {
        return Err(BieError::DimensionMismatch { expected: dim, got: f.values.len() });
    }
    let s: Vec<f64> =
        (0..dim).map(|a| if system.scaled { system.unknown_weight(a).sqrt() } else { 1.0 }).collect();
    let b: Vec<f64> = f.values.iter().zip(&s).map(|(v, s)| v * s).collect();
    let max_iter = dim.min(500);
    let unscale = |out: GmresOutcome| SolveOutcome {
        density: BoundaryDensity { values: out.x.iter().zip(&s).map(|(v, s)| v / s).collect() },
        iters: out.iters,
        residual: out.residual,
        history: out.history,
    };
    match gmres(|x| system.matrix.matvec(x), &b, tol, max_iter) {
        Ok(out) => Ok(unscale(out)),
        Err(e) => Err(e.into()),
    }
}

/// Kelvin point forces `(location, strength)` and the data they induce.
#[derive(Debug, Clone)]
pub struct Manufactured {
    pub traction: TractionData,
    sources: Vec<(Vec2, Vec2)>,
    params: ElasticParams,
}

impl Manufactured {
    /// `u_exact(x) = Σ_j G(x, y_j) σ_j`.
    pub fn exact(&self, x: &Vec2) -> Result<Vec2, BieError> {
        let mut u = Vec2::zeros();
        for (y, s) in &self.sources {
            u += kelvin2d(x, y, &self.params)? * s;
        }
        Ok(u)
    }

    pub fn sources(&self) -> &[(Vec2, Vec2)] {
        &self.sources
    }

    pub fn params(&self) -> &ElasticParams {
        &self.params
    }
}

/// Traction data of a superposition of exterior Kelvin solutions.
pub fn manufacture(pan: &Panelization, sources: &[(Vec2, Vec2)], params: &ElasticParams) -> Result<Manufactured, BieError> {
    for (k, (y, _)) in sources.iter().enumerate() {
        if pan.point_in_domain(y) != Location::Outside {
            return Err(BieError::InteriorSource(k));
        }
    }
    let mut values = Vec::with_capacity(2 * pan.len());
    for node in pan.nodes() {
        let mut f = Vec2::zeros();
        for (y, s) in sources {
            f += kelvin2d_traction(&node.position, &node.normal, y, params)? * s;
        }
        values.extend([f.x, f.y]);
    }
    let traction = TractionData::new(pan, values, COMPATIBILITY_TOL)?;
    Ok(Manufactured { traction, sources: sources.to_vec(), params: *params })
}

fn uniform_strength(rng: &mut ChaCha8Rng) -> Vec2 {
    Vec2::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
}

/// Three sources at `2 γ(t_j)`, `t_j ∈ {0, 2π/3, 4π/3}`, strengths uniform in
/// `[−0.5, 0.5]²`.
pub fn default_sources(pan: &Panelization, seed: u64) -> Vec<(Vec2, Vec2)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / 3.0;
            (pan.curve().eval(t).point * 2.0, uniform_strength(&mut rng))
        })
        .collect()
}

/// `count` sources at uniform random angles with radii uniform in
/// `[1.2, 2] R`, `R` the largest node radius; strengths uniform in
/// `[−0.5, 0.5]²`.
pub fn annulus_sources(pan: &Panelization, count: usize, seed: u64) -> Vec<(Vec2, Vec2)> {
    let rmax = pan.nodes().iter().map(|n| n.position.norm()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(0.0..2.0 * PI);
            let r = rmax * rng.gen_range(1.2..2.0);
            (Vec2::new(t.cos(), t.sin()) * r, uniform_strength(&mut rng))
        })
        .collect()
}

/// A quadrature point produced by panel refinement.
struct SubNode {
    weight: f64,
    density: Vec2,
    string: Vec<Vec2>,
}

/// Barycentric Lagrange weights for the panel's reference nodes.
fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| 1.0 / (0..nodes.len()).filter(|&k| k != j).map(|k| nodes[j] - nodes[k]).product::<f64>())
        .collect()
}

fn interpolate(nodes: &[f64], bw: &[f64], values: &[Vec2], s: f64) -> Vec2 {
    let mut num = Vec2::zeros();
    let mut den = 0.0;
    for ((x, w), v) in nodes.iter().zip(bw).zip(values) {
        let d = s - x;
        if d == 0.0 {
            return *v;
        }
        let c = w / d;
        num += v * c;
        den += c;
    }
    num / den
}

/// Near-singular panel quadrature. Panels far from the target use the
/// Nyström nodes unchanged; nearby panels are bisected in parameter until
/// every piece is at least its own length away, and integrated with the
/// panel rule on each piece using interpolated density and regenerated
/// strings.
struct Integrator<'a> {
    pan: &'a Panelization,
    strings: &'a [StringSpec],
    density: &'a BoundaryDensity,
    bary: Vec<f64>,
}

impl<'a> Integrator<'a> {
    fn new(pan: &'a Panelization, strings: &'a [StringSpec], density: &'a BoundaryDensity) -> Self {
        let bary = barycentric_weights(&pan.rule().nodes);
        Self { pan, strings, density, bary }
    }

    fn point(&self, p: usize, s: f64) -> Vec2 {
        let (t0, t1) = self.pan.panel_interval(p);
        self.pan.curve().derivatives(t0 + 0.5 * (t1 - t0) * (s + 1.0)).0
    }

    fn is_far(&self, p: usize, a: f64, b: f64, x: &Vec2) -> bool {
        let pa = self.point(p, a);
        let pm = self.point(p, 0.5 * (a + b));
        let pb = self.point(p, b);
        let len = (pm - pa).norm() + (pb - pm).norm();
        let d = (pa - x).norm().min((pm - x).norm()).min((pb - x).norm());
        d >= NEAR_RATIO * len
    }

    /// Calls `f` on each quadrature point for panel `p`.
    fn for_each_point(&self, p: usize, x: &Vec2, f: &mut dyn FnMut(&SubNode) -> Result<(), BieError>) -> Result<(), BieError> {
        let order = self.pan.order();
        let first = p * order;
        if self.is_far(p, -1.0, 1.0, x) {
            for i in first..first + order {
                let n = &self.pan.nodes()[i];
                f(&SubNode {
                    weight: n.weight,
                    density: self.density.at(i),
                    string: self.strings[i].vertices().to_vec(),
                })?;
            }
            return Ok(());
        }
        let values: Vec<Vec2> = (first..first + order).map(|i| self.density.at(i)).collect();
        let mode = self.strings[first].mode().clone();
        let verts = self.strings[first].vertices();
        let h = (verts[1] - verts[0]).norm();
        let (t0, t1) = self.pan.panel_interval(p);
        let mut stack = vec![(-1.0f64, 1.0f64, 0usize)];
        while let Some((a, b, depth)) = stack.pop() {
            if depth < MAX_DEPTH && !self.is_far(p, a, b, x) {
                let m = 0.5 * (a + b);
                stack.push((m, b, depth + 1));
                stack.push((a, m, depth + 1));
                continue;
            }
            for (sn, sw) in self.pan.rule().nodes.iter().zip(&self.pan.rule().weights) {
                let s = a + 0.5 * (b - a) * (sn + 1.0);
                let t = t0 + 0.5 * (t1 - t0) * (s + 1.0);
                let cp = self.pan.curve().eval(t);
                let string = string_at(&mode, &cp.point, &cp.normal, h).map_err(|_| KernelError::DegenerateString)?;
                f(&SubNode {
                    weight: sw * cp.speed * 0.25 * (t1 - t0) * (b - a),
                    density: interpolate(&self.pan.rule().nodes, &self.bary, &values, s),
                    string,
                })?;
            }
        }
        Ok(())
    }

    fn integrate(&self, x: &Vec2, kernel: &dyn Fn(&SubNode) -> Result<Mat2, BieError>) -> Result<Vec2, BieError> {
        let mut acc = Vec2::zeros();
        for p in 0..self.pan.n_panels() {
            self.for_each_point(p, x, &mut |node| {
                acc += kernel(node)? * node.density * node.weight;
                Ok(())
            })?;
        }
        Ok(acc)
    }
}

/// `u(x) = ∫ K(x, y; string(y)) ρ(y) dS(y)` at interior targets.
pub fn eval_displacement(
    density: &BoundaryDensity,
    pan: &Panelization,
    strings: &[StringSpec],
    params: &ElasticParams,
    targets: &[Vec2],
) -> Result<Vec<Vec2>, BieError> {
    if density.nodes() != pan.len() {
        return Err(BieError::DimensionMismatch { expected: 2 * pan.len(), got: density.values.len() });
    }
    for (k, x) in targets.iter().enumerate() {
        if pan.point_in_domain(x) != Location::Inside {
            return Err(BieError::TargetNotInterior(k));
        }
    }
    let quad = Integrator::new(pan, strings, density);
    targets
        .par_iter()
        .map(|x| quad.integrate(x, &|node| Ok(string_kernel2d(x, &node.string, params)?)))
        .collect()
}

/// `n̂(x)·σ` of the represented field at `x − δ n̂(x)` for boundary node `x`.
/// The traction kernel is independent of the elastic parameters.
pub fn offsurface_traction(
    density: &BoundaryDensity,
    pan: &Panelization,
    strings: &[StringSpec],
    node: usize,
    delta: f64,
) -> Result<Vec2, BieError> {
    let nd = *pan.nodes().get(node).ok_or(BieError::NodeOutOfRange(node))?;
    let max = pan.panel_length(nd.panel);
    if !(delta > 1e-8 && delta < max) {
        return Err(BieError::InvalidDelta { delta, max });
    }
    let x = nd.position - nd.normal * delta;
    Integrator::new(pan, strings, density)
        .integrate(&x, &|sub| Ok(sigma_string2d(&x, &nd.normal, nd.curvature, &sub.string)?))
}

/// Least-squares rigid motion `v₀ + ω (x − x_c)^⊥` matching `u_exact − u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidFit {
    pub v0: [f64; 2],
    pub omega: f64,
    /// `|u_exact − u − v₀ − ω (x − x_c)^⊥| / rms(u_exact)` per target.
    pub residuals: Vec<f64>,
}

impl RigidFit {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

pub fn rigid_body_fit(u_exact: &[Vec2], u: &[Vec2], targets: &[Vec2], x_c: &Vec2) -> Result<RigidFit, BieError> {
    let m = targets.len();
    if u_exact.len() != m || u.len() != m {
        return Err(BieError::DimensionMismatch { expected: m, got: u_exact.len().min(u.len()) });
    }
    if m < 3 {
        return Err(BieError::DegenerateTargets);
    }
    let mut a = DenseMatrix::zeros(2 * m, 3);
    let mut rhs = Vec::with_capacity(2 * m);
    for (i, x) in targets.iter().enumerate() {
        let r = rot90(&(x - x_c));
        a.set(2 * i, 0, 1.0);
        a.set(2 * i, 2, r.x);
        a.set(2 * i + 1, 1, 1.0);
        a.set(2 * i + 1, 2, r.y);
        let e = u_exact[i] - u[i];
        rhs.extend([e.x, e.y]);
    }
    let sol = match lstsq(&a, &rhs) {
        Ok(s) => s,
        Err(NumericsError::RankDeficient(_)) => return Err(BieError::DegenerateTargets),
        Err(e) => return Err(e.into()),
    };
    let v0 = Vec2::new(sol[0], sol[1]);
    let omega = sol[2];
    let rms = (u_exact.iter().map(|v| v.norm_squared()).sum::<f64>() / m as f64).sqrt();
    let residuals = targets
        .iter()
        .enumerate()
        .map(|(i, x)| (u_exact[i] - u[i] - v0 - rot90(&(x - x_c)) * omega).norm() / rms)
        .collect();
    Ok(RigidFit { v0: [v0.x, v0.y], omega, residuals })
}

/// Interior grid holding at least `min_count` targets.
pub fn interior_targets(pan: &Panelization, min_count: usize) -> Vec<Vec2> {
    let mut request = min_count.max(1);
    loop {
        let pts = pan.interior_grid(request);
        if pts.len() >= min_count {
            return pts;
        }
        request = request * 3 / 2 + 1;
    }
}

/// Full manufactured-solution run: assemble, deflate, scale, solve,
/// evaluate and fit.
#[derive(Debug, Clone)]
pub struct ManufacturedReport {
    pub iters: usize,
    pub gmres_residual: f64,
    pub targets: Vec<Vec2>,
    pub u: Vec<Vec2>,
    pub u_exact: Vec<Vec2>,
    pub fit: RigidFit,
    pub density: BoundaryDensity,
}

pub fn run_manufactured(
    pan: &Panelization,
    strings: &[StringSpec],
    data: &Manufactured,
    tol: f64,
    targets: &[Vec2],
) -> Result<ManufacturedReport, BieError> {
    let system = l2_scale(deflate(assemble(pan, strings)?));
    let sol = solve(&system, &data.traction, tol)?;
    let u = eval_displacement(&sol.density, pan, strings, data.params(), targets)?;
    let u_exact = targets.iter().map(|x| data.exact(x)).collect::<Result<Vec<_>, _>>()?;
    let fit = rigid_body_fit(&u_exact, &u, targets, &pan.centroid())?;
    Ok(ManufacturedReport {
        iters: sol.iters,
        gmres_residual: sol.residual,
        targets: targets.to_vec(),
        u,
        u_exact,
        fit,
        density: sol.density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry2d::{build_panels, make_strings, ParametricCurve, StringMode};
    use proptest::prelude::*;

    fn star(panels: usize, order: usize) -> (Panelization, Vec<StringSpec>) {
        let pan = build_panels(&ParametricCurve::star(), panels, order).unwrap();
        let strings = make_strings(&pan, &StringMode::Normal, 0.1).unwrap();
        (pan, strings)
    }

    fn params() -> ElasticParams {
        ElasticParams::new(10.0, 1.0).unwrap()
    }

    #[test]
    fn diagonal_block_is_continuous() {
        let (pan, strings) = star(60, 16);
        let sys = assemble(&pan, &strings).unwrap();
        for i in [0, 77, 500] {
            let n = pan.nodes()[i];
            let cp = pan.curve().eval(n.t + 1e-6);
            let shifted = string_at(&StringMode::Normal, &cp.point, &cp.normal, 0.1).unwrap();
            let k = sigma_string2d(&n.position, &n.normal, n.curvature, &shifted).unwrap() * n.weight + Mat2::identity();
            for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let d = (k[(a, b)] - sys.matrix().get(2 * i + a, 2 * i + b)).abs();
                assert!(d <= 1e-5, "{i} ({a},{b}): {d}");
            }
        }
    }

    #[test]
    fn normal_density_on_circle_matches_refined_quadrature() {
        const PANELS: usize = 32;
        let c = ParametricCurve::circle(1.0).unwrap();
        let coarse = build_panels(&c, PANELS, 16).unwrap();
        let fine = build_panels(&c, 10 * PANELS, 16).unwrap();
        let sc = make_strings(&coarse, &StringMode::Normal, 0.1).unwrap();
        let sf = make_strings(&fine, &StringMode::Normal, 0.1).unwrap();
        let rho = BoundaryDensity::from_fn(&coarse, |i| coarse.nodes()[i].normal);
        let got = assemble(&coarse, &sc).unwrap().matrix().matvec(rho.values());
        for (i, x) in coarse.nodes().iter().enumerate() {
            let mut want = x.normal;
            for (y, s) in fine.nodes().iter().zip(&sf) {
                want += sigma_string2d(&x.position, &x.normal, x.curvature, s.vertices()).unwrap() * y.normal * y.weight;
            }
            assert!((Vec2::new(got[2 * i], got[2 * i + 1]) - want).norm() < 1e-10, "{i}");
        }
    }

    #[test]
    fn assembly_refuses_invalid_strings() {
        let pan = build_panels(&ParametricCurve::cavity_default(), 32, 8).unwrap();
        let strings = make_strings(&pan, &StringMode::Normal, 5.0).unwrap();
        assert!(matches!(assemble(&pan, &strings), Err(BieError::InvalidStrings(v)) if !v.is_empty()));
    }

    #[test]
    fn rigid_basis_is_w_orthonormal() {
        let (pan, strings) = star(20, 8);
        let sys = assemble(&pan, &strings).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let g = sys.inner_w(&sys.basis()[i], &sys.basis()[j]);
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deflation_lifts_smallest_singular_value() {
        let (pan, strings) = star(60, 16);
        let raw = assemble(&pan, &strings).unwrap();
        let (_, before) = l2_scale(raw.clone()).extreme_singular_values().unwrap();
        let (_, after) = l2_scale(deflate(raw)).extreme_singular_values().unwrap();
        assert!(after >= 10.0 * before, "{before} -> {after}");
    }

    #[test]
    fn deflated_operator_acts_on_rigid_fields() {
        let (pan, strings) = star(20, 8);
        let raw = assemble(&pan, &strings).unwrap();
        let defl = deflate(raw.clone());
        let psi = &raw.basis()[0];
        let a = raw.matrix().matvec(psi);
        let b = defl.matrix().matvec(psi);
        // ⟨ψ₁, ψ₁⟩_W = 1, so the shift adds ψ₁ itself.
        for k in 0..psi.len() {
            assert!((b[k] - a[k] - psi[k]).abs() < 1e-12);
        }
        assert!(crate::numerics::norm(&b) > 0.1);
    }

    #[test]
    fn scaling_and_deflation_commute() {
        let (pan, strings) = star(10, 8);
        let raw = assemble(&pan, &strings).unwrap();
        let a = l2_scale(deflate(raw.clone()));
        let b = deflate(l2_scale(raw));
        for (x, y) in a.matrix().as_slice().iter().zip(b.matrix().as_slice()) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn scaling_is_a_similarity() {
        let (pan, strings) = star(20, 8);
        let raw = deflate(assemble(&pan, &strings).unwrap());
        let t = raw.matrix().trace();
        let scaled = l2_scale(raw);
        assert!((scaled.matrix().trace() - t).abs() < 1e-12 * t.abs());
        assert!(scaled.is_scaled() && scaled.is_deflated());
    }

    #[test]
    fn uniform_weights_leave_matrix_unchanged() {
        let pan = build_panels(&ParametricCurve::circle(1.0).unwrap(), 8, 8).unwrap();
        let strings = make_strings(&pan, &StringMode::Normal, 0.2).unwrap();
        let mut sys = assemble(&pan, &strings).unwrap();
        sys.weights.iter_mut().for_each(|w| *w = 0.3);
        let before = sys.matrix().clone();
        let after = l2_scale(sys);
        for (x, y) in before.as_slice().iter().zip(after.matrix().as_slice()) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn circle_condition_number_settles() {
        let c = ParametricCurve::circle(1.0).unwrap();
        let cond = |panels| {
            let pan = build_panels(&c, panels, 16).unwrap();
            let strings = make_strings(&pan, &StringMode::Normal, 0.1).unwrap();
            l2_scale(deflate(assemble(&pan, &strings).unwrap())).condition().unwrap()
        };
        let (a, b) = (cond(32), cond(64));
        assert!((a / b - 1.0).abs() < 0.05, "{a} vs {b}");
    }

    #[test]
    fn manufactured_data_is_in_equilibrium() {
        let (pan, _) = star(60, 16);
        let p = params();
        for y in [Vec2::new(2.6, 0.0), Vec2::new(-1.0, 2.1)] {
            let m = manufacture(&pan, &[(y, Vec2::new(0.3, -0.2))], &p).unwrap();
            let (force, torque) = net_force_torque(&pan, m.traction.values());
            assert!(force.norm() < 1e-10);
            assert!(torque.abs() < 1e-10);
        }
        let srcs = default_sources(&pan, 1);
        assert!(srcs.iter().all(|(y, s)| y.norm() > 1.69 && s.x.abs() <= 0.5 && s.y.abs() <= 0.5));
        assert!(manufacture(&pan, &srcs, &p).is_ok());
        assert_eq!(
            manufacture(&pan, &[(Vec2::new(0.1, 0.0), Vec2::new(1.0, 0.0))], &p).unwrap_err(),
            BieError::InteriorSource(0)
        );
    }

    #[test]
    fn incompatible_traction_rejected() {
        let (pan, _) = star(10, 8);
        let vals = (0..pan.len()).flat_map(|_| [1.0, 0.0]).collect();
        assert!(matches!(TractionData::new(&pan, vals, COMPATIBILITY_TOL), Err(BieError::Incompatible { .. })));
        assert!(TractionData::new(&pan, vec![0.0; 2 * pan.len()], COMPATIBILITY_TOL).is_ok());
    }

    #[test]
    fn zero_data_gives_zero_density() {
        let (pan, strings) = star(10, 8);
        let sys = l2_scale(deflate(assemble(&pan, &strings).unwrap()));
        let f = TractionData::new(&pan, vec![0.0; 2 * pan.len()], 1e-8).unwrap();
        let out = solve(&sys, &f, 1e-10).unwrap();
        assert_eq!(out.iters, 0);
        assert!(out.density.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn star_solve_converges_mesh_independently() {
        let p = params();
        let mut iters = Vec::new();
        for panels in [60, 120] {
            let (pan, strings) = star(panels, 16);
            let data = manufacture(&pan, &default_sources(&pan, 7), &p).unwrap();
            let sys = l2_scale(deflate(assemble(&pan, &strings).unwrap()));
            let out = solve(&sys, &data.traction, 1e-10).unwrap();
            assert!(out.residual <= 1e-10);
            let raw = assemble(&pan, &strings).unwrap();
            let r: Vec<f64> = raw.matrix().matvec(out.density.values());
            let rr: Vec<f64> = r.iter().zip(data.traction.values()).map(|(a, b)| a - b).collect();
            assert!(crate::numerics::norm(&rr) < 1e-8 * crate::numerics::norm(data.traction.values()));
            for psi in raw.basis() {
                assert!(raw.inner_w(psi, out.density.values()).abs() <= 1e-8 * crate::numerics::norm(out.density.values()));
            }
            iters.push(out.iters as i64);
        }
        assert!((iters[0] - iters[1]).abs() <= 2, "{iters:?}");
    }

    #[test]
    fn evaluation_is_linear_and_refinement_stable() {
        let p = params();
        let (pan, strings) = star(60, 16);
        let targets = vec![pan.centroid(), Vec2::new(0.3, 0.2), Vec2::new(0.9, 0.0)];
        let zero = eval_displacement(&BoundaryDensity::zeros(pan.len()), &pan, &strings, &p, &targets).unwrap();
        assert!(zero.iter().all(|u| *u == Vec2::zeros()));

        let r1 = BoundaryDensity::from_fn(&pan, |i| pan.nodes()[i].normal);
        let r2 = BoundaryDensity::from_fn(&pan, |i| Vec2::new(pan.nodes()[i].t.sin(), 0.5));
        let sum = BoundaryDensity::new(r1.values().iter().zip(r2.values()).map(|(a, b)| a + b).collect()).unwrap();
        let u1 = eval_displacement(&r1, &pan, &strings, &p, &targets).unwrap();
        let u2 = eval_displacement(&r2, &pan, &strings, &p, &targets).unwrap();
        let us = eval_displacement(&sum, &pan, &strings, &p, &targets).unwrap();
        for k in 0..targets.len() {
            assert!((us[k] - u1[k] - u2[k]).norm() < 1e-13 * us[k].norm().max(1.0));
        }

        let centroid_u = |panels| {
            let (pan, strings) = star(panels, 16);
            let data = manufacture(&pan, &default_sources(&pan, 3), &p).unwrap();
            let sys = l2_scale(deflate(assemble(&pan, &strings).unwrap()));
            let sol = solve(&sys, &data.traction, 1e-10).unwrap();
            let grid = interior_targets(&pan, 50);
            let mut pts = vec![Vec2::new(0.0, 0.0)];
            pts.extend(grid);
            let u = eval_displacement(&sol.density, &pan, &strings, &p, &pts).unwrap();
            let ue: Vec<Vec2> = pts.iter().map(|x| data.exact(x).unwrap()).collect();
            // Remove the rigid motion so both runs share the same gauge.
            let fit = rigid_body_fit(&ue, &u, &pts, &Vec2::zeros()).unwrap();
            u[0] + Vec2::new(fit.v0[0], fit.v0[1])
        };
        let (a, b) = (centroid_u(60), centroid_u(120));
        assert!((a - b).norm() <= 1e-9 * b.norm(), "{a} vs {b}");
    }

    #[test]
    fn near_boundary_targets_rejected() {
        let (pan, strings) = star(20, 8);
        let rho = BoundaryDensity::zeros(pan.len());
        let bad = vec![Vec2::zeros(), pan.nodes()[3].position * 0.999];
        assert_eq!(eval_displacement(&rho, &pan, &strings, &params(), &bad).unwrap_err(), BieError::TargetNotInterior(1));
    }

    #[test]
    fn manufactured_star_meets_interior_tolerance() {
        let (pan, strings) = star(60, 16);
        let data = manufacture(&pan, &default_sources(&pan, 11), &params()).unwrap();
        let targets = interior_targets(&pan, 200);
        let rep = run_manufactured(&pan, &strings, &data, 1e-10, &targets).unwrap();
        assert!(rep.fit.max_residual() <= 1e-8, "{}", rep.fit.max_residual());
    }

    #[test]
    fn rigid_fit_recovers_rigid_motions() {
        let targets = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(0.5, 0.7)];
        let xc = Vec2::new(0.2, 0.1);
        let ue: Vec<Vec2> = targets.iter().map(|x| Vec2::new(x.x * x.y, x.x - x.y * x.y)).collect();
        let same = rigid_body_fit(&ue, &ue, &targets, &xc).unwrap();
        assert!(same.v0 == [0.0, 0.0] && same.omega == 0.0 && same.max_residual() == 0.0);

        let u: Vec<Vec2> = ue.iter().zip(&targets).map(|(e, x)| e - Vec2::new(1.0, 2.0) - rot90(&(x - xc)) * 0.5).collect();
        let fit = rigid_body_fit(&ue, &u, &targets, &xc).unwrap();
        assert!((fit.v0[0] - 1.0).abs() < 1e-13 && (fit.v0[1] - 2.0).abs() < 1e-13);
        assert!((fit.omega - 0.5).abs() < 1e-13);
        assert!(fit.max_residual() <= 1e-13);

        let line = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0), Vec2::new(2.0, 2.0)];
        let v = vec![Vec2::new(1.0, 0.0); 3];
        assert_eq!(rigid_body_fit(&v, &v, &line[..2], &xc).unwrap_err(), BieError::DimensionMismatch { expected: 2, got: 3 });
        assert_eq!(rigid_body_fit(&v[..2], &v[..2], &line[..2], &xc).unwrap_err(), BieError::DegenerateTargets);
    }

    fn jump_errors(pan: &Panelization, strings: &[StringSpec], rho: &BoundaryDensity, node: usize) -> Vec<f64> {
        let on = assemble(pan, strings).unwrap().matrix().matvec(rho.values());
        let on = Vec2::new(on[2 * node], on[2 * node + 1]);
        [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&d| (offsurface_traction(rho, pan, strings, node, d).unwrap() - on).norm())
            .collect()
    }

    #[test]
    fn offsurface_traction_converges_to_on_surface_value() {
        let (pan, strings) = star(60, 16);
        let rho = BoundaryDensity::from_fn(&pan, |i| {
            let t = pan.nodes()[i].t;
            Vec2::new((2.0 * t).cos() + 0.3, (3.0 * t).sin())
        });
        for node in [5, 250, 611] {
            let e = jump_errors(&pan, &strings, &rho, node);
            assert!(e[1] < e[0] && e[2] < e[1], "{e:?}");
            let order = (e[0] / e[2]).log10() / 2.0;
            assert!(order >= 0.9, "{node}: {e:?}");
        }
        // Translation density.
        let psi = BoundaryDensity::from_fn(&pan, |_| Vec2::new(1.0, 0.0));
        let e = jump_errors(&pan, &strings, &psi, 100);
        assert!((e[0] / e[2]).log10() / 2.0 >= 0.9, "{e:?}");

        let zero = BoundaryDensity::zeros(pan.len());
        assert_eq!(offsurface_traction(&zero, &pan, &strings, 3, 1e-3).unwrap(), Vec2::zeros());
        assert!(matches!(offsurface_traction(&zero, &pan, &strings, 3, 1e-9), Err(BieError::InvalidDelta { .. })));
        assert!(matches!(offsurface_traction(&zero, &pan, &strings, 3, 1.0), Err(BieError::InvalidDelta { .. })));
    }

    #[test]
    fn matrix_is_lambda_free() {
        let (pan, strings) = star(12, 8);
        let a = assemble(&pan, &strings).unwrap();
        let b = assemble(&pan, &strings).unwrap();
        assert_eq!(a.matrix().as_slice(), b.matrix().as_slice());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]

        #[test]
        fn deflated_solution_is_w_orthogonal_to_rigid_fields(seed in 0u64..1000) {
            let (pan, strings) = star(60, 16);
            let data = manufacture(&pan, &annulus_sources(&pan, 4, seed), &params()).unwrap();
            let sys = l2_scale(deflate(assemble(&pan, &strings).unwrap()));
            let out = solve(&sys, &data.traction, 1e-10).unwrap();
            let n = crate::numerics::norm(out.density.values());
            for psi in sys.basis() {
                prop_assert!(sys.inner_w(psi, out.density.values()).abs() <= 1e-8 * n);
            }
        }

        #[test]
        fn rigid_fit_is_exact_on_rigid_family(vx in -2.0..2.0f64, vy in -2.0..2.0f64, w in -1.0..1.0f64) {
            let targets: Vec<Vec2> = (0..10).map(|k| Vec2::new((k as f64).cos(), (1.7 * k as f64).sin())).collect();
            let ue: Vec<Vec2> = targets.iter().map(|x| Vec2::new(x.y.exp(), x.x)).collect();
            let u: Vec<Vec2> = ue.iter().zip(&targets).map(|(e, x)| e + Vec2::new(vx, vy) + rot90(x) * w).collect();
            let fit = rigid_body_fit(&ue, &u, &targets, &Vec2::zeros()).unwrap();
            prop_assert!((fit.v0[0] + vx).abs() < 1e-12 && (fit.v0[1] + vy).abs() < 1e-12);
            prop_assert!((fit.omega + w).abs() < 1e-12);
        }

        #[test]
        fn scaling_preserves_trace(panels in 4usize..12) {
            let (pan, strings) = star(panels, 8);
            let raw = assemble(&pan, &strings).unwrap();
            let t = raw.matrix().trace();
            prop_assert!((l2_scale(raw).matrix().trace() - t).abs() < 1e-12 * t.abs());
        }
    }
}
