//! Closed parametric curves, Gauss–Legendre panel discretization, and the
//! strings that carry each boundary node's kernel singularity.

use crate::kernels2d::Vec2;
use crate::numerics::{gauss_legendre, QuadratureRule};
use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid curve parameters: {0}")]
    InvalidParameters(String),
    #[error("curve is not simple")]
    SelfIntersecting,
    #[error("curve is not positively oriented")]
    NegativeOrientation,
    #[error("curve has a singular point near t = {0}")]
    Singular(f64),
    #[error("random star rejected {0} draws in a row")]
    RejectionLimit(usize),
    #[error("need at least 4 panels, got {0}")]
    TooFewPanels(usize),
    #[error("panel order {0} outside 4..=32")]
    InvalidOrder(usize),
    #[error("string length must be positive, got {0}")]
    InvalidLength(f64),
    #[error("degenerate string direction at node {0}")]
    DegenerateDirection(usize),
}

/// Serializable curve description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveSpec {
    Circle {
        radius: f64,
    },
    Star {
        #[serde(default = "default_lobes")]
        lobes: u32,
        #[serde(default = "default_star_amplitude")]
        amplitude: f64,
    },
    Cavity {
        #[serde(default = "default_cavity_a")]
        a: f64,
        #[serde(default = "default_cavity_b")]
        b: f64,
        #[serde(default = "default_cavity_zeta")]
        zeta: f64,
    },
    RandomStar {
        seed: u64,
        #[serde(default = "default_random_m")]
        m: usize,
        #[serde(default = "default_random_amplitude")]
        amplitude: f64,
    },
    /// Radial Fourier series `r(t) = cos[0] + Σ_i cos[i] cos(i t) + sin[i-1] sin(i t)`.
    Fourier {
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

fn default_lobes() -> u32 {
    5
}
fn default_star_amplitude() -> f64 {
    0.3
}
fn default_cavity_a() -> f64 {
    0.397
}
fn default_cavity_b() -> f64 {
    8.02
}
fn default_cavity_zeta() -> f64 {
    3.965
}
fn default_random_m() -> usize {
    25
}
fn default_random_amplitude() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Circle { radius: f64 },
    /// `r(t) = c₀ + Σ c_i cos(i t) + s_i sin(i t)` times `(cos t, sin t)`.
    Radial { cos: Vec<f64>, sin: Vec<f64> },
    Cavity { a: f64, b: f64, power: f64, scale: f64 },
}

/// A smooth, simple, positively oriented closed curve on `t ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricCurve {
    shape: Shape,
    spec: CurveSpec,
}

/// Point and local frame on a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub point: Vec2,
    pub tangent: Vec2,
    /// Outward normal, the tangent rotated by −π/2.
    pub normal: Vec2,
    pub speed: f64,
    pub curvature: f64,
}

/// Draws rejected before [`ParametricCurve::random_star`] gives up.
pub const RANDOM_STAR_MAX_DRAWS: usize = 1000;

impl ParametricCurve {
    pub fn circle(radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidParameters(format!("radius {radius}")));
        }
        Self::validated(Shape::Circle { radius }, CurveSpec::Circle { radius })
    }

    /// `(1 + 0.3 cos 5t)(cos t, sin t)`.
    pub fn star() -> Self {
        Self::star_with(5, 0.3).expect("reference star is valid")
    }

    pub fn star_with(lobes: u32, amplitude: f64) -> Result<Self, GeometryError> {
        if lobes == 0 || !(amplitude.abs() < 1.0) {
            return Err(GeometryError::InvalidParameters(format!("lobes {lobes}, amplitude {amplitude}")));
        }
        let mut cos = vec![0.0; lobes as usize + 1];
        cos[0] = 1.0;
        cos[lobes as usize] = amplitude;
        Self::validated(Shape::Radial { cos, sin: vec![0.0; lobes as usize] }, CurveSpec::Star { lobes, amplitude })
    }

    /// Image of the ellipse `z = 20 + a cos t + i b sin t` under
    /// `z ↦ z^{2ζ} / max|z|^{2ζ}` with the principal power.
    pub fn cavity(a: f64, b: f64, zeta: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0 && b > 0.0 && zeta > 0.0 && a < 20.0) {
            return Err(GeometryError::InvalidParameters(format!("a {a}, b {b}, zeta {zeta}")));
        }
        let power = 2.0 * zeta;
        // |z|² = 400 + b² + 40 a c + (a² − b²) c² with c = cos t.
        let f = |c: f64| 400.0 + b * b + 40.0 * a * c + (a * a - b * b) * c * c;
        let mut best = f(1.0).max(f(-1.0));
        if a != b {
            let c = (20.0 * a / (b * b - a * a)).clamp(-1.0, 1.0);
            best = best.max(f(c));
        }
        let scale = best.powf(0.5 * power);
        Self::validated(Shape::Cavity { a, b, power, scale }, CurveSpec::Cavity { a, b, zeta })
    }

    pub fn cavity_default() -> Self {
        Self::cavity(default_cavity_a(), default_cavity_b(), default_cavity_zeta()).expect("reference cavity is valid")
    }

    /// Random star `r(t) = 1 + (amplitude/m) Σ_{i=1}^{m} (a_i cos it + b_i sin it)`
    /// with `a_i, b_i` standard normal. Draws whose radius drops to 0.05 or
    /// below are discarded and redrawn from the same stream.
    pub fn random_star(seed: u64, m: usize, amplitude: f64) -> Result<Self, GeometryError> {
        if m == 0 || !amplitude.is_finite() || amplitude < 0.0 {
            return Err(GeometryError::InvalidParameters(format!("m {m}, amplitude {amplitude}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = amplitude / m as f64;
        for _ in 0..RANDOM_STAR_MAX_DRAWS {
            let mut cos = vec![1.0];
            let mut sin = Vec::with_capacity(m);
            for _ in 0..m {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                cos.push(scale * a);
                sin.push(scale * b);
            }
            let shape = Shape::Radial { cos, sin };
            if min_radius(&shape) > 0.05 {
                return Self::validated(shape, CurveSpec::RandomStar { seed, m, amplitude });
            }
        }
        Err(GeometryError::RejectionLimit(RANDOM_STAR_MAX_DRAWS))
    }

    pub fn fourier(cos: Vec<f64>, sin: Vec<f64>) -> Result<Self, GeometryError> {
        if cos.is_empty() || cos.iter().chain(&sin).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidParameters("fourier coefficients".into()));
        }
        let spec = CurveSpec::Fourier { cos: cos.clone(), sin: sin.clone() };
        let shape = Shape::Radial { cos, sin };
        if min_radius(&shape) <= 0.0 {
            return Err(GeometryError::InvalidParameters("radius must stay positive".into()));
        }
        Self::validated(shape, spec)
    }

    pub fn from_spec(spec: &CurveSpec) -> Result<Self, GeometryError> {
        match spec {
            CurveSpec::Circle { radius } => Self::circle(*radius),
            CurveSpec::Star { lobes, amplitude } => Self::star_with(*lobes, *amplitude),
            CurveSpec::Cavity { a, b, zeta } => Self::cavity(*a, *b, *zeta),
            CurveSpec::RandomStar { seed, m, amplitude } => Self::random_star(*seed, *m, *amplitude),
            CurveSpec::Fourier { cos, sin } => Self::fourier(cos.clone(), sin.clone()),
        }
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }

    /// Radial Fourier coefficients for radial curves.
    pub fn radial_coefficients(&self) -> Option<(&[f64], &[f64])> {
        match &self.shape {
            Shape::Radial { cos, sin } => Some((cos, sin)),
            _ => None,
        }
    }

    fn validated(shape: Shape, spec: CurveSpec) -> Result<Self, GeometryError> {
        let curve = Self { shape, spec };
        curve.check()?;
        Ok(curve)
    }

    fn check(&self) -> Result<(), GeometryError> {
        let n = 2048;
        let pts: Vec<Vec2> = (0..n).map(|i| self.derivatives(2.0 * PI * i as f64 / n as f64).0).collect();
        for i in 0..n {
            let t = 2.0 * PI * i as f64 / n as f64;
            let (_, d1, _) = self.derivatives(t);
            if !(d1.norm() > 1e-12) {
                return Err(GeometryError::Singular(t));
            }
        }
        let area: f64 = (0..n).map(|i| cross(&pts[i], &pts[(i + 1) % n])).sum::<f64>() * 0.5;
        if area <= 0.0 {
            return Err(GeometryError::NegativeOrientation);
        }
        if polygon_self_intersects(&pts) {
            return Err(GeometryError::SelfIntersecting);
        }
        Ok(())
    }

    /// `(γ, γ', γ'')` at `t`.
    pub fn derivatives(&self, t: f64) -> (Vec2, Vec2, Vec2) {
        match &self.shape {
            Shape::Circle { radius } => {
                let (s, c) = t.sin_cos();
                (Vec2::new(c, s) * *radius, Vec2::new(-s, c) * *radius, Vec2::new(-c, -s) * *radius)
            }
            Shape::Radial { cos, sin } => {
                let (r, r1, r2) = radial(cos, sin, t);
                let (s, c) = t.sin_cos();
                let e = Vec2::new(c, s);
                let ep = Vec2::new(-s, c);
                (e * r, e * r1 + ep * r, e * (r2 - r) + ep * (2.0 * r1))
            }
            Shape::Cavity { a, b, power, scale } => {
                let (s, c) = t.sin_cos();
                let z = Complex::new(20.0 + a * c, b * s);
                let z1 = Complex::new(-a * s, b * c);
                let z2 = Complex::new(-a * c, -b * s);
                let w = (z.ln() * *power).exp() / *scale;
                let ratio = z1 / z;
                let w1 = w * ratio * *power;
                let w2 = w * *power * (ratio * ratio * (*power - 1.0) + z2 / z);
                (Vec2::new(w.re, w.im), Vec2::new(w1.re, w1.im), Vec2::new(w2.re, w2.im))
            }
        }
    }

    pub fn eval(&self, t: f64) -> CurvePoint {
        let (p, d1, d2) = self.derivatives(t);
        let speed = d1.norm();
        let tangent = d1 / speed;
        CurvePoint {
            point: p,
            tangent,
            normal: Vec2::new(tangent.y, -tangent.x),
            speed,
            curvature: cross(&d1, &d2) / (speed * speed * speed),
        }
    }
}

fn radial(cos: &[f64], sin: &[f64], t: f64) -> (f64, f64, f64) {
    let mut r = cos[0];
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    let terms = (cos.len() - 1).max(sin.len());
    for i in 1..=terms {
        let a = cos.get(i).copied().unwrap_or(0.0);
        let b = sin.get(i - 1).copied().unwrap_or(0.0);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let k = i as f64;
        let (s, c) = (k * t).sin_cos();
        r += a * c + b * s;
        r1 += k * (-a * s + b * c);
        r2 -= k * k * (a * c + b * s);
    }
    (r, r1, r2)
}

fn min_radius(shape: &Shape) -> f64 {
    match shape {
        Shape::Radial { cos, sin } => {
            let n = 4096;
            (0..n).map(|i| radial(cos, sin, 2.0 * PI * i as f64 / n as f64).0).fold(f64::INFINITY, f64::min)
        }
        _ => f64::INFINITY,
    }
}

fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_intersect(a: &Vec2, b: &Vec2, c: &Vec2, d: &Vec2) -> bool {
    let d1 = cross(&(b - a), &(c - a));
    let d2 = cross(&(b - a), &(d - a));
    let d3 = cross(&(d - c), &(a - c));
    let d4 = cross(&(d - c), &(b - c));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

/// Whether a closed polygon has two non-adjacent crossing edges. Uses a
/// sort-and-sweep on edge bounding boxes in x.
fn polygon_self_intersects(pts: &[Vec2]) -> bool {
    let n = pts.len();
    let mut edges: Vec<(f64, f64, usize)> = (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            (a.x.min(b.x), a.x.max(b.x), i)
        })
        .collect();
    edges.sort_by(|p, q| p.0.total_cmp(&q.0));
    for (k, &(_, hi, i)) in edges.iter().enumerate() {
        for &(lo2, _, j) in &edges[k + 1..] {
            if lo2 > hi {
                break;
            }
            let adjacent = i == j || (i + 1) % n == j || (j + 1) % n == i;
            if !adjacent && segments_intersect(&pts[i], &pts[(i + 1) % n], &pts[j], &pts[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// One Nyström node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub position: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
    /// Arclength quadrature weight.
    pub weight: f64,
    pub panel: usize,
    pub t: f64,
}

/// Equal-parameter panels, each carrying `order` Gauss–Legendre nodes.
#[derive(Debug, Clone)]
pub struct Panelization {
    curve: ParametricCurve,
    nodes: Vec<Node>,
    n_panels: usize,
    order: usize,
    rule: QuadratureRule,
    panel_lengths: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Inside,
    Outside,
    NearBoundary,
}

pub fn build_panels(curve: &ParametricCurve, n_panels: usize, order: usize) -> Result<Panelization, GeometryError> {
    if n_panels < 4 {
        return Err(GeometryError::TooFewPanels(n_panels));
    }
    if !(4..=32).contains(&order) {
        return Err(GeometryError::InvalidOrder(order));
    }
    let rule = gauss_legendre(order).map_err(|_| GeometryError::InvalidOrder(order))?;
    let dt = 2.0 * PI / n_panels as f64;
    let mut nodes = Vec::with_capacity(n_panels * order);
    let mut panel_lengths = Vec::with_capacity(n_panels);
    for p in 0..n_panels {
        let t0 = dt * p as f64;
        let mut len = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let t = t0 + 0.5 * dt * (x + 1.0);
            let cp = curve.eval(t);
            let weight = w * cp.speed * 0.5 * dt;
            len += weight;
            nodes.push(Node {
                position: cp.point,
                tangent: cp.tangent,
                normal: cp.normal,
                curvature: cp.curvature,
                weight,
                panel: p,
                t,
            });
        }
        panel_lengths.push(len);
    }
    Ok(Panelization { curve: curve.clone(), nodes, n_panels, order, rule, panel_lengths })
}

impl Panelization {
    pub fn curve(&self) -> &ParametricCurve {
        &self.curve
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_panels(&self) -> usize {
        self.n_panels
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn panel_length(&self, p: usize) -> f64 {
        self.panel_lengths[p]
    }

    /// Parameter interval `[t0, t1)` of panel `p`.
    pub fn panel_interval(&self, p: usize) -> (f64, f64) {
        let dt = 2.0 * PI / self.n_panels as f64;
        (dt * p as f64, dt * (p + 1) as f64)
    }

    pub fn perimeter(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    /// Mean node spacing on the panel containing node `i`.
    pub fn local_spacing(&self, i: usize) -> f64 {
        self.panel_lengths[self.nodes[i].panel] / self.order as f64
    }

    /// Weight-normalized boundary average of the node positions.
    pub fn centroid(&self) -> Vec2 {
        let w: f64 = self.perimeter();
        self.nodes.iter().fold(Vec2::zeros(), |acc, n| acc + n.position * n.weight) / w
    }

    /// Index of the nearest node and its distance.
    pub fn nearest_node(&self, x: &Vec2) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n.position - x).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Winding number of the node polygon around `x`.
    pub fn winding_number(&self, x: &Vec2) -> i32 {
        let n = self.nodes.len();
        let mut wn = 0;
        for i in 0..n {
            let a = self.nodes[i].position;
            let b = self.nodes[(i + 1) % n].position;
            if a.y <= x.y {
                if b.y > x.y && cross(&(b - a), &(x - a)) > 0.0 {
                    wn += 1;
                }
            } else if b.y <= x.y && cross(&(b - a), &(x - a)) < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    /// Inside or outside by winding number; `NearBoundary` when closer to a node
    /// than twice that node's local spacing.
    pub fn point_in_domain(&self, x: &Vec2) -> Location {
        let (i, d) = self.nearest_node(x);
        if d < 2.0 * self.local_spacing(i) {
            return Location::NearBoundary;
        }
        if self.winding_number(x) != 0 {
            Location::Inside
        } else {
            Location::Outside
        }
    }

    /// Uniform grid of points classified `Inside`, with spacing chosen so the
    /// bounding box holds about `approx_count / fill` candidates.
    pub fn interior_grid(&self, approx_count: usize) -> Vec<Vec2> {
        let (lo, hi) = self.bounding_box();
        let area = self.area();
        let pitch = (area / approx_count as f64).sqrt();
        let nx = ((hi.x - lo.x) / pitch).ceil() as usize + 1;
        let ny = ((hi.y - lo.y) / pitch).ceil() as usize + 1;
        let mut out = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let p = Vec2::new(lo.x + (i as f64 + 0.5) * pitch, lo.y + (j as f64 + 0.5) * pitch);
                if self.point_in_domain(&p) == Location::Inside {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for n in &self.nodes {
            lo = lo.inf(&n.position);
            hi = hi.sup(&n.position);
        }
        (lo, hi)
    }

    /// `½ ∮ x·n dS`.
    pub fn area(&self) -> f64 {
        0.5 * self.nodes.iter().map(|n| n.position.dot(&n.normal) * n.weight).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StringMode {
    Normal,
    Radial,
    /// Node → node + h·n̂ → target.
    PolylineTo { x: f64, y: f64 },
}

/// Vertex list `p₀ … p_m` with `p₀` the boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct StringSpec {
    vertices: Vec<Vec2>,
    mode: StringMode,
    length: f64,
}

impl StringSpec {
    pub fn new(vertices: Vec<Vec2>, mode: StringMode) -> Result<Self, GeometryError> {
        if vertices.len() < 2 || vertices.windows(2).any(|w| w[0] == w[1]) {
            return Err(GeometryError::InvalidParameters("string vertices must be distinct, m >= 1".into()));
        }
        let length = vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        Ok(Self { vertices, mode, length })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn mode(&self) -> &StringMode {
        &self.mode
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn base(&self) -> Vec2 {
        self.vertices[0]
    }

    pub fn end(&self) -> Vec2 {
        self.vertices[self.vertices.len() - 1]
    }
}

/// String rule applied at an arbitrary boundary point; used when panels are
/// subdivided for near-boundary quadrature.
pub fn string_at(mode: &StringMode, point: &Vec2, normal: &Vec2, h: f64) -> Result<Vec<Vec2>, GeometryError> {
    match mode {
        StringMode::Normal => Ok(vec![*point, point + normal * h]),
        StringMode::Radial => {
            let r = point.norm();
            if r == 0.0 {
                return Err(GeometryError::DegenerateDirection(0));
            }
            Ok(vec![*point, point + point * (h / r)])
        }
        StringMode::PolylineTo { x, y } => {
            let mid = point + normal * h;
            let target = Vec2::new(*x, *y);
            if target == mid {
                Ok(vec![*point, mid])
            } else {
                Ok(vec![*point, mid, target])
            }
        }
    }
}

pub fn make_strings(pan: &Panelization, mode: &StringMode, h: f64) -> Result<Vec<StringSpec>, GeometryError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(GeometryError::InvalidLength(h));
    }
    pan.nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let verts = string_at(mode, &n.position, &n.normal, h).map_err(|_| GeometryError::DegenerateDirection(i))?;
            StringSpec::new(verts, mode.clone())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringReport {
    /// Node indices whose strings touch the closed domain away from their base.
    pub violations: Vec<usize>,
    /// Smallest distance from a string's far end to the boundary nodes.
    pub min_clearance: f64,
}

impl StringReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples every segment and checks that all samples except the base are
/// outside, and that no segment crosses the node polygon away from the base.
pub fn validate_strings(pan: &Panelization, strings: &[StringSpec], samples_per_segment: usize) -> StringReport {
    let samples = samples_per_segment.max(8);
    let n = pan.nodes.len();
    let mut violations = Vec::new();
    let mut min_clearance = f64::INFINITY;
    for (i, s) in strings.iter().enumerate() {
        let mut bad = false;
        for seg in s.vertices.windows(2) {
            for k in 1..=samples {
                let p = seg[0] + (seg[1] - seg[0]) * (k as f64 / samples as f64);
                if pan.winding_number(&p) != 0 {
                    bad = true;
                    break;
                }
            }
            if bad {
                break;
            }
        }
        if !bad {
            'edges: for e in 0..n {
                let f = (e + 1) % n;
                if e == i || f == i {
                    continue;
                }
                let (a, b) = (pan.nodes[e].position, pan.nodes[f].position);
                for seg in s.vertices.windows(2) {
                    if segments_intersect(&seg[0], &seg[1], &a, &b) {
                        bad = true;
                        break 'edges;
                    }
                }
            }
        }
        if bad {
            violations.push(i);
        }
        min_clearance = min_clearance.min(pan.nearest_node(&s.end()).1);
    }
    StringReport { violations, min_clearance }
}

/// CSV rows `x,y,nx,ny,kappa,w,string` with string vertices flattened as
/// `x0;y0;x1;y1;…`.
pub fn export_csv(pan: &Panelization, strings: &[StringSpec]) -> String {
    let mut out = String::from("x,y,nx,ny,kappa,w,string\n");
    for (n, s) in pan.nodes.iter().zip(strings) {
        let verts: Vec<String> = s.vertices.iter().flat_map(|v| [format!("{:e}", v.x), format!("{:e}", v.y)]).collect();
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{}",
            n.position.x,
            n.position.y,
            n.normal.x,
            n.normal.y,
            n.curvature,
            n.weight,
            verts.join(";")
        );
    }
    out
}
