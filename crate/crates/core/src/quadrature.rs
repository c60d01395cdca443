//! Quadrature on flat triangles.
//!
//! * [`gauss_triangle`]: symmetric rules with positive weights.
//! * [`integrate_point_kernel`]: ∫_T ψ_a(Q) K(Q) dΣ_Q for an off-element
//!   target, with adaptive subdivision when the target is close.
//! * [`integrate_point_kernel_polar`]: polar coordinates about the target's
//!   foot point with a sinh radial map, for targets hovering just above the
//!   element.
//! * [`galerkin_pair_integral`]: ∫_P ∫_Q ψ_a(P) ψ_b(Q) K(Q, P) for element
//!   pairs, using the Sauter–Schwab relative-coordinate transforms when the
//!   elements touch.

use std::ops::{Add, Mul};
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};

use crate::error::QuadratureError;
use crate::kernels::Tensor3;

pub type Point = Vector3<f64>;

/// Values a kernel may produce: anything that forms a vector space and has a
/// size for convergence checks.
pub trait KernelValue: Copy + Add<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl KernelValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl KernelValue for Vector3<f64> {
    fn zero() -> Self {
        Self::zeros()
    }
    fn magnitude(&self) -> f64 {
        self.amax()
    }
    fn is_finite_value(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl KernelValue for Matrix3<f64> {
    fn zero() -> Self {
        Self::zeros()
    }
    fn magnitude(&self) -> f64 {
        self.amax()
    }
    fn is_finite_value(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl KernelValue for Tensor3 {
    fn zero() -> Self {
        Tensor3::zeros()
    }
    fn magnitude(&self) -> f64 {
        self.max_abs()
    }
    fn is_finite_value(&self) -> bool {
        self.0.iter().flatten().flatten().all(|v| v.is_finite())
    }
}

/// Two kernel values integrated together over the same quadrature points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair<A, B>(pub A, pub B);

impl<A: Add<Output = A>, B: Add<Output = B>> Add for Pair<A, B> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Pair(self.0 + rhs.0, self.1 + rhs.1)
    }
}

impl<A: Mul<f64, Output = A>, B: Mul<f64, Output = B>> Mul<f64> for Pair<A, B> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Pair(self.0 * rhs, self.1 * rhs)
    }
}

impl<A: KernelValue, B: KernelValue> KernelValue for Pair<A, B> {
    fn zero() -> Self {
        Pair(A::zero(), B::zero())
    }
    fn magnitude(&self) -> f64 {
        self.0.magnitude().max(self.1.magnitude())
    }
    fn is_finite_value(&self) -> bool {
        self.0.is_finite_value() && self.1.is_finite_value()
    }
}

fn zero3<T: KernelValue>() -> [T; 3] {
    [T::zero(); 3]
}

fn add3<T: KernelValue>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn gap3<T: KernelValue>(a: &[T; 3], b: &[T; 3]) -> f64 {
    (0..3)
        .map(|i| (a[i] + b[i] * -1.0).magnitude())
        .fold(0.0, f64::max)
}

fn size3<T: KernelValue>(a: &[T; 3]) -> f64 {
    a.iter().map(|v| v.magnitude()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// 1D Gauss–Legendre

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn cached_gauss(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (1..=40).map(gauss_legendre).collect());
    &cache[n.clamp(1, 40) - 1]
}

// ---------------------------------------------------------------------------
// Triangle rules

/// Quadrature rule on the reference triangle in barycentric coordinates.
/// Weights sum to one, so ∫_T f = area · Σ w_i f(x_i).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub degree: u32,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ∫ over the reference triangle (0,0), (1,0), (0,1) of f(x, y).
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        0.5 * self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * f(b[1], b[2]))
            .sum::<f64>()
    }

    fn from_orbits(degree: u32, orbits: &[(f64, &[f64])]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, coords) in orbits {
            match coords.len() {
                0 => {
                    points.push([1.0 / 3.0; 3]);
                    weights.push(w);
                }
                1 => {
                    let a = coords[0];
                    let b = (1.0 - a) / 2.0;
                    for p in [[a, b, b], [b, a, b], [b, b, a]] {
                        points.push(p);
                        weights.push(w);
                    }
                }
                _ => {
                    let (a, b) = (coords[0], coords[1]);
                    let c = 1.0 - a - b;
                    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                        points.push(p);
                        weights.push(w);
                    }
                }
            }
        }
        Self {
            degree,
            points,
            weights,
        }
    }

    /// Collapsed tensor Gauss rule; exact to degree `2n − 2` at least.
    fn conical(degree: u32) -> Self {
        let n = (degree as usize + 2).div_ceil(2) + 1;
        let (x, wx) = cached_gauss(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (u, wu) in x.iter().zip(wx) {
            for (v, wv) in x.iter().zip(wx) {
                // (u, v) in the square -> (s, t) = (u, v(1-u)) in the triangle
                let s = *u;
                let t = v * (1.0 - u);
                points.push([1.0 - s - t, s, t]);
                weights.push(2.0 * wu * wv * (1.0 - u));
            }
        }
        Self {
            degree,
            points,
            weights,
        }
    }
}

/// Rule exact for polynomials up to `degree` (at least 1).
pub fn gauss_triangle(degree: u32) -> Result<TriangleRule, QuadratureError> {
    Ok(match degree {
        0 | 1 => TriangleRule::from_orbits(1, &[(1.0, &[])]),
        2 => TriangleRule::from_orbits(2, &[(1.0 / 3.0, &[2.0 / 3.0])]),
        3 | 4 => TriangleRule::from_orbits(
            4,
            &[
                (0.223381589678011, &[0.108103018168070]),
                (0.109951743655322, &[0.816847572980459]),
            ],
        ),
        5 => TriangleRule::from_orbits(
            5,
            &[
                (0.225, &[]),
                (0.132394152788506, &[0.059715871789770]),
                (0.125939180544827, &[0.797426985353087]),
            ],
        ),
        6 => TriangleRule::from_orbits(
            6,
            &[
                (0.116786275726379, &[0.501426509658179]),
                (0.050844906370207, &[0.873821971016996]),
                (0.082851075618374, &[0.053145049844817, 0.310352451033784]),
            ],
        ),
        7 | 8 => TriangleRule::from_orbits(
            8,
            &[
                (0.144315607677787, &[]),
                (0.095091634267285, &[0.081414823414554]),
                (0.103217370534718, &[0.658861384496480]),
                (0.032458497623198, &[0.898905543365938]),
                (0.027230314174435, &[0.008394777409958, 0.263112829634638]),
            ],
        ),
        9..=40 => TriangleRule::conical(degree),
        _ => return Err(QuadratureError::UnsupportedDegree(degree)),
    })
}

fn cached_rule(degree: u32) -> &'static TriangleRule {
    static CACHE: OnceLock<Vec<TriangleRule>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=30).map(|d| gauss_triangle(d).expect("rule")).collect());
    &cache[degree.min(30) as usize]
}

// ---------------------------------------------------------------------------
// Geometry helpers

/// Closest point on triangle `tri` to `x`.
pub fn closest_point_on_triangle(tri: &[Point; 3], x: &Point) -> Point {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = x - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = x - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = x - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

pub fn distance_to_triangle(tri: &[Point; 3], x: &Point) -> f64 {
    (closest_point_on_triangle(tri, x) - x).norm()
}

pub fn triangle_diameter(tri: &[Point; 3]) -> f64 {
    let [a, b, c] = *tri;
    (b - a).norm().max((c - b).norm()).max((a - c).norm())
}

fn triangle_area(tri: &[Point; 3]) -> f64 {
    0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm()
}

// ---------------------------------------------------------------------------
// Point-to-element integration

/// Settings for [`integrate_point_kernel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointQuadrature {
    /// Rule used on each subtriangle during adaptive subdivision.
    pub degree: u32,
    /// Single rule for targets between `near_factor` and `far_factor` diameters away.
    pub mid_degree: u32,
    /// Single rule for targets farther than `far_factor` diameters.
    pub far_degree: u32,
    pub far_factor: f64,
    /// Adaptive subdivision is used below `near_factor` diameters.
    pub near_factor: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for PointQuadrature {
    fn default() -> Self {
        Self {
            degree: 5,
            mid_degree: 6,
            far_degree: 4,
            far_factor: 8.0,
            near_factor: 3.0,
            abs_tol: 1e-8,
            rel_tol: 1e-8,
            max_depth: 14,
        }
    }
}

/// A sub-triangle tracked by its corners in physical space and in the
/// barycentric coordinates of the parent element.
#[derive(Clone, Copy)]
struct SubTriangle {
    corners: [Point; 3],
    bary: [[f64; 3]; 3],
}

impl SubTriangle {
    fn root(tri: &[Point; 3]) -> Self {
        Self {
            corners: *tri,
            bary: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    fn children(&self) -> [SubTriangle; 4] {
        let mid = |i: usize, j: usize| {
            (
                (self.corners[i] + self.corners[j]) * 0.5,
                std::array::from_fn(|k| 0.5 * (self.bary[i][k] + self.bary[j][k])),
            )
        };
        let (p01, b01) = mid(0, 1);
        let (p12, b12) = mid(1, 2);
        let (p20, b20) = mid(2, 0);
        let [p0, p1, p2] = self.corners;
        let [b0, b1, b2] = self.bary;
        [
            SubTriangle {
                corners: [p0, p01, p20],
                bary: [b0, b01, b20],
            },
            SubTriangle {
                corners: [p01, p1, p12],
                bary: [b01, b1, b12],
            },
            SubTriangle {
                corners: [p20, p12, p2],
                bary: [b20, b12, b2],
            },
            SubTriangle {
                corners: [p12, p20, p01],
                bary: [b12, b20, b01],
            },
        ]
    }

    fn apply<T: KernelValue>(&self, rule: &TriangleRule, kernel: &impl Fn(&Point) -> T) -> [T; 3] {
        let area = triangle_area(&self.corners);
        let mut acc = zero3::<T>();
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let q = self.corners[0] * l[0] + self.corners[1] * l[1] + self.corners[2] * l[2];
            let psi: [f64; 3] =
                std::array::from_fn(|k| l[0] * self.bary[0][k] + l[1] * self.bary[1][k] + l[2] * self.bary[2][k]);
            let value = kernel(&q) * (w * area);
            for a in 0..3 {
                acc[a] = acc[a] + value * psi[a];
            }
        }
        acc
    }
}

/// ∫_T ψ_a(Q) K(Q) dΣ_Q for the three linear shape functions of `tri`
/// (ordered like its corners). `target` is the point where `kernel` is
/// singular; it only steers the quadrature and must lie off the element.
pub fn integrate_point_kernel<T: KernelValue>(
    tri: &[Point; 3],
    kernel: impl Fn(&Point) -> T,
    target: &Point,
    opts: &PointQuadrature,
) -> Result<[T; 3], QuadratureError> {
    let distance = distance_to_triangle(tri, target);
    let diam = triangle_diameter(tri);
    if distance <= 1e-14 * diam {
        return Err(QuadratureError::TargetOnElement(distance));
    }
    let root = SubTriangle::root(tri);
    if distance > opts.far_factor * diam {
        return Ok(root.apply(cached_rule(opts.far_degree), &kernel));
    }
    if distance > opts.near_factor * diam {
        return Ok(root.apply(cached_rule(opts.mid_degree), &kernel));
    }
    let rule = cached_rule(opts.degree);
    let coarse = root.apply(rule, &kernel);
    adaptive(&root, coarse, rule, &kernel, opts.abs_tol, opts, 0)
}

fn adaptive<T: KernelValue>(
    tri: &SubTriangle,
    coarse: [T; 3],
    rule: &TriangleRule,
    kernel: &impl Fn(&Point) -> T,
    abs_tol: f64,
    opts: &PointQuadrature,
    depth: u32,
) -> Result<[T; 3], QuadratureError> {
    let children = tri.children();
    let parts = children.map(|c| c.apply(rule, kernel));
    let fine = parts.iter().fold(zero3::<T>(), |acc, p| add3(acc, *p));
    let gap = gap3(&fine, &coarse);
    let scale = size3(&fine);
    if !scale.is_finite() {
        return Err(QuadratureError::NotConverged {
            depth,
            estimate: scale,
            gap,
        });
    }
    if gap <= abs_tol.max(opts.rel_tol * scale) {
        return Ok(fine);
    }
    if depth >= opts.max_depth {
        return Err(QuadratureError::NotConverged {
            depth,
            estimate: scale,
            gap,
        });
    }
    let mut total = zero3::<T>();
    for (child, part) in children.iter().zip(parts) {
        let sub = adaptive(child, part, rule, kernel, 0.5 * abs_tol, opts, depth + 1)?;
        total = add3(total, sub);
    }
    Ok(total)
}

/// Settings for [`integrate_point_kernel_polar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarQuadrature {
    /// Gauss points along each sub-triangle's far edge.
    pub angular: usize,
    /// Gauss points in the sinh-mapped radial variable.
    pub radial: usize,
}

impl Default for PolarQuadrature {
    fn default() -> Self {
        Self {
            angular: 12,
            radial: 16,
        }
    }
}

/// ∫_T ψ_a(Q) K(Q) dΣ_Q for a target at height `d > 0` above the plane of
/// `tri`. The triangle is split into three signed sub-triangles meeting at
/// the target's foot point; each is integrated in polar coordinates with the
/// radial map ρ = d sinh(s), which absorbs the near-singular peak.
pub fn integrate_point_kernel_polar<T: KernelValue>(
    tri: &[Point; 3],
    kernel: impl Fn(&Point) -> T,
    target: &Point,
    opts: &PolarQuadrature,
) -> Result<[T; 3], QuadratureError> {
    let [a, b, c] = *tri;
    let cross = (b - a).cross(&(c - a));
    let twice_area = cross.norm();
    let n = cross / twice_area;
    let height = (target - a).dot(&n);
    let d = height.abs();
    if d <= 1e-14 * triangle_diameter(tri) {
        return Err(QuadratureError::TargetOnElement(d));
    }
    let foot = target - n * height;
    let bary_of = |q: &Point| -> [f64; 3] {
        [
            (c - b).cross(&(q - b)).dot(&n) / twice_area,
            (a - c).cross(&(q - c)).dot(&n) / twice_area,
            (b - a).cross(&(q - a)).dot(&n) / twice_area,
        ]
    };
    let (tn, tw) = cached_gauss(opts.angular);
    let (sn, sw) = cached_gauss(opts.radial);

    let mut acc = zero3::<T>();
    for e in 0..3 {
        let v1 = tri[e];
        let v2 = tri[(e + 1) % 3];
        let edge = v2 - v1;
        let len = edge.norm();
        // signed distance from the foot point to the edge line, positive inside
        let h_signed = edge.cross(&(foot - v1)).dot(&n) / len;
        if h_signed.abs() <= 1e-15 * len {
            continue;
        }
        for (t, wt) in tn.iter().zip(tw) {
            let s_pt = v1 + edge * *t;
            let ray = s_pt - foot;
            let rho_max = ray.norm();
            let dir = ray / rho_max;
            // dθ = h L / |S − foot|² dt (signed)
            let dtheta = h_signed * len / (rho_max * rho_max) * wt;
            let s_max = (rho_max / d).asinh();
            for (s, ws) in sn.iter().zip(sw) {
                let sv = s * s_max;
                let rho = d * sv.sinh();
                let drho = d * sv.cosh() * s_max * ws;
                let q = foot + dir * rho;
                let psi = bary_of(&q);
                let value = kernel(&q) * (rho * drho * dtheta);
                for k in 0..3 {
                    acc[k] = acc[k] + value * psi[k];
                }
            }
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Element pairs

/// How two elements touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    Separated,
    VertexAdjacent,
    EdgeAdjacent,
    Coincident,
}

impl PairKind {
    pub fn shared_vertices(self) -> usize {
        match self {
            PairKind::Separated => 0,
            PairKind::VertexAdjacent => 1,
            PairKind::EdgeAdjacent => 2,
            PairKind::Coincident => 3,
        }
    }
}

/// Pair classification plus local vertex orderings that place the shared
/// vertices first, in matching order, on both elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairConfiguration {
    pub kind: PairKind,
    pub order_p: [usize; 3],
    pub order_q: [usize; 3],
}

/// Classifies the pair of triangles given by global vertex indices.
pub fn classify_pair(tri_p: &[usize; 3], tri_q: &[usize; 3]) -> PairConfiguration {
    let mut shared = Vec::with_capacity(3);
    for (i, v) in tri_p.iter().enumerate() {
        if let Some(j) = tri_q.iter().position(|w| w == v) {
            shared.push((i, j));
        }
    }
    // ordering by global index makes (P, Q) and (Q, P) use mirrored rules
    shared.sort_by_key(|s| tri_p[s.0]);
    let kind = match shared.len() {
        0 => PairKind::Separated,
        1 => PairKind::VertexAdjacent,
        2 => PairKind::EdgeAdjacent,
        _ => PairKind::Coincident,
    };
    let complete = |mut order: Vec<usize>| -> [usize; 3] {
        for i in 0..3 {
            if !order.contains(&i) {
                order.push(i);
            }
        }
        [order[0], order[1], order[2]]
    };
    let (order_p, order_q) = match kind {
        PairKind::Separated => ([0, 1, 2], [0, 1, 2]),
        PairKind::Coincident => {
            // keep P's order; Q follows it vertex by vertex
            let q: Vec<usize> = (0..3)
                .map(|i| tri_q.iter().position(|w| *w == tri_p[i]).unwrap())
                .collect();
            ([0, 1, 2], [q[0], q[1], q[2]])
        }
        _ => (
            complete(shared.iter().map(|s| s.0).collect()),
            complete(shared.iter().map(|s| s.1).collect()),
        ),
    };
    PairConfiguration {
        kind,
        order_p,
        order_q,
    }
}

/// Settings for element-pair integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairQuadrature {
    /// Gauss points per dimension of the 4D singular transforms.
    pub singular_order: usize,
    /// Triangle rule for well-separated pairs.
    pub regular_degree: u32,
    /// Triangle rule for pairs closer than `near_ratio` diameters.
    pub near_degree: u32,
    pub near_ratio: f64,
    /// Triangle rule for pairs farther than `far_ratio` diameters.
    pub far_degree: u32,
    pub far_ratio: f64,
}

impl Default for PairQuadrature {
    fn default() -> Self {
        Self {
            singular_order: 5,
            regular_degree: 5,
            near_degree: 8,
            near_ratio: 1.0,
            far_degree: 2,
            far_ratio: 4.0,
        }
    }
}

/// One node of a 4D rule: reference coordinates on both elements
/// (`{0 ≤ x₂ ≤ x₁ ≤ 1}`) and the weight including the transform Jacobian.
#[derive(Debug, Clone, Copy)]
struct PairNode {
    x: [f64; 2],
    y: [f64; 2],
    w: f64,
}

/// Precomputed Sauter–Schwab rules for one Gauss order.
#[derive(Debug, Clone)]
pub struct SingularRules {
    order: usize,
    coincident: Vec<PairNode>,
    edge: Vec<PairNode>,
    vertex: Vec<PairNode>,
}

impl SingularRules {
    pub fn new(order: usize) -> Self {
        let (g, gw) = gauss_legendre(order);
        let mut coincident = Vec::new();
        let mut edge = Vec::new();
        let mut vertex = Vec::new();
        for (i0, &xi) in g.iter().enumerate() {
            for (i1, &e1) in g.iter().enumerate() {
                for (i2, &e2) in g.iter().enumerate() {
                    for (i3, &e3) in g.iter().enumerate() {
                        let w = gw[i0] * gw[i1] * gw[i2] * gw[i3];
                        let push = |v: &mut Vec<PairNode>, x: [f64; 2], y: [f64; 2], jac: f64| {
                            v.push(PairNode { x, y, w: w * jac });
                        };

                        // identical elements
                        let jc = xi.powi(3) * e1 * e1 * e2;
                        let c = &mut coincident;
                        push(c, [xi, xi * (1.0 - e1 + e1 * e2)], [xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)], jc);
                        push(c, [xi * (1.0 - e1 * e2 * e3), xi * (1.0 - e1)], [xi, xi * (1.0 - e1 + e1 * e2)], jc);
                        push(c, [xi, xi * e1 * (1.0 - e2 + e2 * e3)], [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)], jc);
                        push(c, [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)], [xi, xi * e1 * (1.0 - e2 + e2 * e3)], jc);
                        push(c, [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)], [xi, xi * e1 * (1.0 - e2)], jc);
                        push(c, [xi, xi * e1 * (1.0 - e2)], [xi * (1.0 - e1 * e2 * e3), xi * e1 * (1.0 - e2 * e3)], jc);

                        // common edge (0,0)-(1,0)
                        let j1 = xi.powi(3) * e1 * e1;
                        let j2 = j1 * e2;
                        let ed = &mut edge;
                        push(ed, [xi, xi * e1 * e3], [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)], j1);
                        push(ed, [xi, xi * e1], [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)], j2);
                        push(ed, [xi * (1.0 - e1 * e2), xi * e1 * (1.0 - e2)], [xi, xi * e1 * e3], j1);
                        push(ed, [xi * (1.0 - e1 * e2 * e3), xi * e1 * e2 * (1.0 - e3)], [xi, xi * e1], j2);

                        // common vertex (0,0)
                        let jv = xi.powi(3) * e2;
                        let v = &mut vertex;
                        push(v, [xi, xi * e1], [xi * e2, xi * e2 * e3], jv);
                        push(v, [xi * e2, xi * e2 * e3], [xi, xi * e1], jv);
                    }
                }
            }
        }
        Self {
            order,
            coincident,
            edge,
            vertex,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Maps reference coordinates `{0 ≤ x₂ ≤ x₁ ≤ 1}` onto a triangle given in
/// the configured local order. Returns the point and barycentrics in that
/// order.
#[inline]
fn reference_map(corners: &[Point; 3], x: &[f64; 2]) -> (Point, [f64; 3]) {
    let l = [1.0 - x[0], x[0] - x[1], x[1]];
    (corners[0] * l[0] + corners[1] * l[1] + corners[2] * l[2], l)
}

/// Precomputed rules for [`galerkin_pair_integral`].
#[derive(Debug, Clone)]
pub struct PairIntegrator {
    pub settings: PairQuadrature,
    singular: SingularRules,
}

impl PairIntegrator {
    pub fn new(settings: PairQuadrature) -> Self {
        Self {
            settings,
            singular: SingularRules::new(settings.singular_order),
        }
    }
}

impl Default for PairIntegrator {
    fn default() -> Self {
        Self::new(PairQuadrature::default())
    }
}

/// Full description of one element for pair integration.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; 3],
    pub corners: [Point; 3],
}

/// ∫_P ∫_Q ψ_a(P) ψ_b(Q) K(Q, P) dΣ_Q dΣ_P for all nine shape pairs; the
/// result is indexed `[a][b]` in the elements' own vertex order.
pub fn galerkin_pair_integral<T: KernelValue>(
    integrator: &PairIntegrator,
    elem_p: &Element,
    elem_q: &Element,
    kernel: impl Fn(&Point, &Point) -> T,
    config: &PairConfiguration,
) -> Result<[[T; 3]; 3], QuadratureError> {
    let actual = classify_pair(&elem_p.nodes, &elem_q.nodes).kind;
    if actual != config.kind {
        return Err(QuadratureError::ConfigurationMismatch {
            claimed: config.kind,
            shared: actual.shared_vertices(),
        });
    }
    let mut block = [[T::zero(); 3]; 3];
    match config.kind {
        PairKind::Separated => {
            let s = &integrator.settings;
            let dp = triangle_diameter(&elem_p.corners);
            let dq = triangle_diameter(&elem_q.corners);
            let cp = (elem_p.corners[0] + elem_p.corners[1] + elem_p.corners[2]) / 3.0;
            let cq = (elem_q.corners[0] + elem_q.corners[1] + elem_q.corners[2]) / 3.0;
            let ratio = (cp - cq).norm() / dp.max(dq);
            let degree = if ratio < s.near_ratio {
                s.near_degree
            } else if ratio > s.far_ratio {
                s.far_degree
            } else {
                s.regular_degree
            };
            let rule = cached_rule(degree);
            let ap = triangle_area(&elem_p.corners);
            let aq = triangle_area(&elem_q.corners);
            let qs: Vec<Point> = rule
                .points
                .iter()
                .map(|l| elem_q.corners[0] * l[0] + elem_q.corners[1] * l[1] + elem_q.corners[2] * l[2])
                .collect();
            for (lp, wp) in rule.points.iter().zip(&rule.weights) {
                let p = elem_p.corners[0] * lp[0] + elem_p.corners[1] * lp[1] + elem_p.corners[2] * lp[2];
                for ((lq, wq), q) in rule.points.iter().zip(&rule.weights).zip(&qs) {
                    let value = kernel(q, &p) * (wp * wq * ap * aq);
                    for a in 0..3 {
                        let va = value * lp[a];
                        for b in 0..3 {
                            block[a][b] = block[a][b] + va * lq[b];
                        }
                    }
                }
            }
        }
        kind => {
            let nodes = match kind {
                PairKind::Coincident => &integrator.singular.coincident,
                PairKind::EdgeAdjacent => &integrator.singular.edge,
                _ => &integrator.singular.vertex,
            };
            let cp = config.order_p.map(|i| elem_p.corners[i]);
            let cq = config.order_q.map(|i| elem_q.corners[i]);
            // reference triangle has area 1/2
            let jac = 4.0 * triangle_area(&elem_p.corners) * triangle_area(&elem_q.corners);
            let mut local = [[T::zero(); 3]; 3];
            for node in nodes {
                let (p, lp) = reference_map(&cp, &node.x);
                let (q, lq) = reference_map(&cq, &node.y);
                let value = kernel(&q, &p) * (node.w * jac);
                for a in 0..3 {
                    let va = value * lp[a];
                    for b in 0..3 {
                        local[a][b] = local[a][b] + va * lq[b];
                    }
                }
            }
            for a in 0..3 {
                for b in 0..3 {
                    block[config.order_p[a]][config.order_q[b]] = local[a][b];
                }
            }
        }
    }
    if block.iter().flatten().any(|v| !v.is_finite_value()) {
        return Err(QuadratureError::NonFinite(elem_p.nodes[0], elem_q.nodes[0]));
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::raw;
    use approx::assert_relative_eq;

    fn monomial_exact(a: i32, b: i32) -> f64 {
        // ∫ x^a y^b over the reference triangle = a! b! / (a + b + 2)!
        let fact = |n: i32| (1..=n).map(|k| k as f64).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn gauss_legendre_is_exact() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for p in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert_relative_eq!(approx, 1.0 / (p as f64 + 1.0), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn triangle_rules_exact_to_degree() {
        for degree in 1..=14 {
            let rule = gauss_triangle(degree).unwrap();
            assert!(rule.weights.iter().all(|w| *w > 0.0), "degree {degree}");
            assert_relative_eq!(rule.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            for a in 0..=degree as i32 {
                for b in 0..=(degree as i32 - a) {
                    let approx = rule.integrate_reference(|x, y| x.powi(a) * y.powi(b));
                    assert_relative_eq!(approx, monomial_exact(a, b), epsilon = 1e-13, max_relative = 1e-11);
                }
            }
        }
    }

    #[test]
    fn named_rule_examples() {
        assert_relative_eq!(gauss_triangle(1).unwrap().integrate_reference(|_, _| 1.0), 0.5);
        assert_relative_eq!(gauss_triangle(2).unwrap().integrate_reference(|x, _| x), 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(
            gauss_triangle(5).unwrap().integrate_reference(|x, y| x * x * y),
            1.0 / 60.0,
            epsilon = 1e-14
        );
    }

    fn sample_triangle() -> [Point; 3] {
        [
            Point::new(0.1, -0.2, 0.05),
            Point::new(0.9, 0.1, -0.1),
            Point::new(0.3, 0.7, 0.2),
        ]
    }

    #[test]
    fn closest_point_cases() {
        let tri = [Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)];
        let above = Point::new(0.2, 0.2, 0.5);
        assert_relative_eq!(distance_to_triangle(&tri, &above), 0.5, epsilon = 1e-15);
        let beyond = Point::new(2.0, -1.0, 0.0);
        assert_relative_eq!(closest_point_on_triangle(&tri, &beyond), tri[1]);
        let edge = Point::new(0.5, -1.0, 0.0);
        assert_relative_eq!(distance_to_triangle(&tri, &edge), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn point_kernel_constant() {
        let tri = sample_triangle();
        let area = triangle_area(&tri);
        let target = Point::new(0.4, 0.2, 0.3);
        let r = integrate_point_kernel(&tri, |_| 1.0, &target, &PointQuadrature::default()).unwrap();
        for v in r {
            assert_relative_eq!(v, area / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn point_kernel_far_field() {
        let tri = sample_triangle();
        let area = triangle_area(&tri);
        let centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
        let x = Point::new(30.0, -20.0, 45.0);
        let r = integrate_point_kernel(&tri, |q| raw::stokeslet(&(q - x), 1.0), &x, &PointQuadrature::default())
            .unwrap();
        let approx = raw::stokeslet(&(centroid - x), 1.0) * (area / 3.0);
        for v in r {
            assert!((v - approx).amax() <= 0.01 * approx.amax());
        }
    }

    #[test]
    fn point_kernel_near_converges() {
        let tri = sample_triangle();
        let centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        let x = centroid + n * (0.01 * triangle_diameter(&tri));
        let k = |q: &Point| raw::stokeslet(&(q - x), 1.0);
        let mut opts = PointQuadrature::default();
        let a = integrate_point_kernel(&tri, k, &x, &opts).unwrap();
        opts.abs_tol = 1e-11;
        let b = integrate_point_kernel(&tri, k, &x, &opts).unwrap();
        for i in 0..3 {
            assert!((a[i] - b[i]).amax() <= 1e-8, "{}", (a[i] - b[i]).amax());
        }
        // the polar rule agrees with adaptive subdivision
        let c = integrate_point_kernel_polar(&tri, k, &x, &PolarQuadrature { angular: 24, radial: 32 }).unwrap();
        for i in 0..3 {
            assert!((c[i] - b[i]).amax() <= 1e-10, "{}", (c[i] - b[i]).amax());
        }
    }

    #[test]
    fn polar_rule_with_foot_outside() {
        let tri = sample_triangle();
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        let x = tri[1] + (tri[1] - tri[0]) * 0.2 + n * 0.05;
        let k = |q: &Point| raw::laplace_green(&(q - x));
        let opts = PointQuadrature {
            abs_tol: 1e-12,
            ..Default::default()
        };
        let a = integrate_point_kernel(&tri, k, &x, &opts).unwrap();
        let b = integrate_point_kernel_polar(&tri, k, &x, &PolarQuadrature { angular: 24, radial: 24 }).unwrap();
        for i in 0..3 {
            assert_relative_eq!(a[i], b[i], max_relative = 1e-8);
        }
    }

    #[test]
    fn target_on_element_rejected() {
        let tri = sample_triangle();
        let c = (tri[0] + tri[1] + tri[2]) / 3.0;
        assert!(matches!(
            integrate_point_kernel(&tri, |_| 1.0, &c, &PointQuadrature::default()),
            Err(QuadratureError::TargetOnElement(_))
        ));
    }

    #[test]
    fn pair_classification() {
        assert_eq!(classify_pair(&[0, 1, 2], &[3, 4, 5]).kind, PairKind::Separated);
        let v = classify_pair(&[0, 1, 2], &[5, 2, 4]);
        assert_eq!(v.kind, PairKind::VertexAdjacent);
        assert_eq!(v.order_p[0], 2);
        assert_eq!(v.order_q[0], 1);
        let e = classify_pair(&[0, 1, 2], &[2, 1, 7]);
        assert_eq!(e.kind, PairKind::EdgeAdjacent);
        let tp = [0, 1, 2];
        let tq = [2, 1, 7];
        assert_eq!(tp[e.order_p[0]], tq[e.order_q[0]]);
        assert_eq!(tp[e.order_p[1]], tq[e.order_q[1]]);
        let c = classify_pair(&[0, 1, 2], &[1, 2, 0]);
        assert_eq!(c.kind, PairKind::Coincident);
        for i in 0..3 {
            assert_eq!(tp[c.order_p[i]], [1, 2, 0][c.order_q[i]]);
        }
    }

    fn element(nodes: [usize; 3], corners: [Point; 3]) -> Element {
        Element { nodes, corners }
    }

    /// Two triangles sharing an edge, and a third sharing one vertex.
    fn pair_geometry() -> (Element, Element, Element) {
        let a = Point::new(0.0, 0.0, 0.0);
        let b = Point::new(1.0, 0.1, 0.0);
        let c = Point::new(0.3, 0.8, 0.1);
        let d = Point::new(0.8, -0.7, 0.3);
        let e = Point::new(-0.6, -0.5, -0.2);
        let f = Point::new(-0.4, 0.3, 0.5);
        (
            element([0, 1, 2], [a, b, c]),
            element([1, 0, 3], [b, a, d]),
            element([0, 4, 5], [a, e, f]),
        )
    }

    fn brute_force_smooth(p: &Element, q: &Element, kernel: impl Fn(&Point, &Point) -> f64) -> [[f64; 3]; 3] {
        let rule = gauss_triangle(16).unwrap();
        let ap = triangle_area(&p.corners);
        let aq = triangle_area(&q.corners);
        let mut out = [[0.0; 3]; 3];
        for (lp, wp) in rule.points.iter().zip(&rule.weights) {
            let xp = p.corners[0] * lp[0] + p.corners[1] * lp[1] + p.corners[2] * lp[2];
            for (lq, wq) in rule.points.iter().zip(&rule.weights) {
                let xq = q.corners[0] * lq[0] + q.corners[1] * lq[1] + q.corners[2] * lq[2];
                let v = kernel(&xq, &xp) * wp * wq * ap * aq;
                for a in 0..3 {
                    for b in 0..3 {
                        out[a][b] += v * lp[a] * lq[b];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn singular_transforms_cover_the_pair_domain() {
        // a smooth kernel is integrated exactly by tensor rules, so each
        // relative-coordinate transform must reproduce the brute-force value
        let (p, q_edge, q_vertex) = pair_geometry();
        let smooth = |x: &Point, y: &Point| (-(x - y).norm_squared()).exp() * (1.0 + x[0] * y[1]);
        let integrator = PairIntegrator::new(PairQuadrature {
            singular_order: 8,
            ..Default::default()
        });
        for q in [&p, &q_edge, &q_vertex] {
            let config = classify_pair(&p.nodes, &q.nodes);
            let got = galerkin_pair_integral(&integrator, &p, q, smooth, &config).unwrap();
            let want = brute_force_smooth(&p, q, smooth);
            for a in 0..3 {
                for b in 0..3 {
                    assert_relative_eq!(got[a][b], want[a][b], max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn constant_kernel_coincident_sums_to_area_squared() {
        let (p, _, _) = pair_geometry();
        let area = triangle_area(&p.corners);
        let config = classify_pair(&p.nodes, &p.nodes);
        let block = galerkin_pair_integral(&PairIntegrator::default(), &p, &p, |_, _| 1.0, &config).unwrap();
        let total: f64 = block.iter().flatten().sum();
        assert_relative_eq!(total, area * area, max_relative = 1e-13);
        // ∫ψ_a ∫ψ_b = (A/3)²
        assert_relative_eq!(block[0][1], area * area / 9.0, max_relative = 1e-13);
    }

    #[test]
    fn configuration_mismatch_is_reported() {
        let (p, q, _) = pair_geometry();
        let mut config = classify_pair(&p.nodes, &q.nodes);
        config.kind = PairKind::Coincident;
        let err = galerkin_pair_integral(&PairIntegrator::default(), &p, &q, |_, _| 1.0, &config).unwrap_err();
        assert!(matches!(err, QuadratureError::ConfigurationMismatch { shared: 2, .. }));
    }

    /// Independent reference for ∫_T 1/|x − y| dA_y with x in the plane of T:
    /// Σ_edges h_e [asinh(t₂/h_e) − asinh(t₁/h_e)].
    fn in_plane_inverse_distance(tri: &[Point; 3], x: &Point) -> f64 {
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
        let mut total = 0.0;
        for e in 0..3 {
            let v1 = tri[e];
            let v2 = tri[(e + 1) % 3];
            let len = (v2 - v1).norm();
            let t_hat = (v2 - v1) / len;
            let h = (v2 - v1).cross(&(x - v1)).dot(&n) / len;
            if h.abs() < 1e-15 {
                continue;
            }
            let t1 = (v1 - x).dot(&t_hat);
            let t2 = (v2 - x).dot(&t_hat);
            total += h * ((t2 / h.abs()).asinh() - (t1 / h.abs()).asinh()) * h.signum();
        }
        total
    }

    #[test]
    fn coincident_inverse_distance_matches_semi_analytic() {
        let tri = [Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0)];
        let p = element([0, 1, 2], tri);
        // adaptive 2D quadrature (absolute error ~1e-12) of the analytic inner
        // integral over the outer triangle
        let reference = 1.003_065_884_773_182;
        // the polar rule reproduces the analytic inner integral from just above the plane
        let foot = Point::new(0.25, 0.3, 0.0);
        let above = foot + Point::new(0.0, 0.0, 1e-10);
        let polar = integrate_point_kernel_polar(
            &tri,
            |q| 1.0 / (q - above).norm(),
            &above,
            &PolarQuadrature { angular: 24, radial: 32 },
        )
        .unwrap();
        assert_relative_eq!(polar.iter().sum::<f64>(), in_plane_inverse_distance(&tri, &foot), max_relative = 1e-8);
        let config = classify_pair(&p.nodes, &p.nodes);
        for order in [8, 12] {
            let integrator = PairIntegrator::new(PairQuadrature {
                singular_order: order,
                ..Default::default()
            });
            let block =
                galerkin_pair_integral(&integrator, &p, &p, |q, x| 1.0 / (q - x).norm(), &config).unwrap();
            let total: f64 = block.iter().flatten().sum();
            assert_relative_eq!(total, reference, max_relative = 2e-7);
        }
    }

    #[test]
    fn singular_results_invariant_under_relabeling() {
        let (p, q, _) = pair_geometry();
        let kernel = |x: &Point, y: &Point| raw::stokeslet(&(x - y), 1.0);
        let integrator = PairIntegrator::new(PairQuadrature {
            singular_order: 10,
            ..Default::default()
        });
        let base_cfg = classify_pair(&p.nodes, &q.nodes);
        let base = galerkin_pair_integral(&integrator, &p, &q, kernel, &base_cfg).unwrap();
        // rotate P's local vertex order
        let rot = element(
            [p.nodes[1], p.nodes[2], p.nodes[0]],
            [p.corners[1], p.corners[2], p.corners[0]],
        );
        let cfg = classify_pair(&rot.nodes, &q.nodes);
        let other = galerkin_pair_integral(&integrator, &rot, &q, kernel, &cfg).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let diff = (other[a][b] - base[(a + 1) % 3][b]).amax();
                assert!(diff <= 1e-10 * base[(a + 1) % 3][b].amax(), "{diff}");
            }
        }
    }
}
