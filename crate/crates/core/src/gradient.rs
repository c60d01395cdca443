//! Boundary velocity gradients from the interior/exterior limit difference.
//!
//! With `I(X) = −∫_Σ [T_ijk,m(Q,X) u_i n_j − U_kj,m(Q,X) τ_j] dΣ_Q` the
//! gradient on Σ is `u_k,m(P) = I(P − εn) − I(P + εn)` as ε → 0, `n` pointing
//! out of the fluid. Every contribution that is continuous across Σ at P
//! cancels in the difference: the volume integral and all elements that do
//! not contain P. The remaining coincident-element difference is evaluated
//! at a few offsets and extrapolated to ε = 0, Galerkin weighted, and
//! recovered through one factorization of the boundary mass matrix.

use nalgebra::DMatrix;
use nalgebra_sparse::factorization::CscCholesky;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::galerkin::BoundarySolution;
use crate::harmonic::HarmonicExtension;
use crate::kernels::{raw, Mat3, Vec3};
use crate::mesh::{mass_matrix, Point, SurfaceMesh};
use crate::quadrature::{
    gauss_triangle, integrate_point_kernel, integrate_point_kernel_polar, PointQuadrature, PolarQuadrature,
};
use crate::volumegrid::GridField;

/// Nodal velocity gradients, `values[a][(k, m)] = u_k,m` at node `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub values: Vec<Mat3>,
}

impl GradientField {
    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    /// Nodal values of one component `u_k,m`.
    pub fn component(&self, k: usize, m: usize) -> Vec<f64> {
        self.values.iter().map(|g| g[(k, m)]).collect()
    }

    /// Nodal `Σ_k u_k,k`.
    pub fn divergence(&self) -> Vec<f64> {
        self.values.iter().map(|g| g.trace()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Offsets as multiples of each element's mean edge length, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule(Vec<f64>);

impl EpsilonSchedule {
    pub fn new(factors: Vec<f64>) -> Result<Self, SolveError> {
        if factors.len() < 2 {
            return Err(SolveError::InvalidParameter("ε schedule needs at least two offsets".into()));
        }
        if factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(SolveError::InvalidParameter("ε offsets must be positive".into()));
        }
        if factors.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SolveError::InvalidParameter("ε schedule must be strictly decreasing".into()));
        }
        Ok(Self(factors))
    }

    pub fn factors(&self) -> &[f64] {
        &self.0
    }

    /// Every offset multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, SolveError> {
        Self::new(self.0.iter().map(|f| f * factor).collect())
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self(vec![0.01, 0.005, 0.0025, 0.00125])
    }
}

/// Settings for [`limit_difference_rhs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSettings {
    pub schedule: EpsilonSchedule,
    /// Degree of the outer (test-function side) triangle rule.
    pub outer_degree: u32,
    /// Inner rule for the coincident element.
    pub angular: usize,
    pub radial: usize,
    /// Also include the elements sharing a vertex with the coincident one.
    /// Their difference vanishes in the limit, so this only exercises the
    /// extrapolation.
    pub include_neighbours: bool,
    /// A node fails when its extrapolation gap exceeds this fraction of the
    /// larger of its own RHS norm and the mean RHS norm.
    pub extrapolation_tol: f64,
}

impl Default for GradientSettings {
    fn default() -> Self {
        Self {
            schedule: EpsilonSchedule::default(),
            outer_degree: 2,
            angular: 40,
            radial: 32,
            include_neighbours: false,
            extrapolation_tol: 0.05,
        }
    }
}

/// Galerkin vectors `∫ ψ_a u_k,m dΣ` for all nine components, with the
/// per-node extrapolation gaps that bound their reliability.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRhs {
    pub values: Vec<Mat3>,
    pub gaps: Vec<f64>,
}

impl GradientRhs {
    pub fn max_gap(&self) -> f64 {
        self.gaps.iter().cloned().fold(0.0, f64::max)
    }
}

/// Extra term added to `I(X)` at every offset point, e.g. an explicit
/// volume-integral derivative.
pub type OffsetTerm<'a> = dyn Fn(&Point) -> Result<Mat3, SolveError> + Sync + 'a;

/// Neville extrapolation of `values[i]` taken at `eps[i]` to ε = 0.
pub fn extrapolate_to_zero(eps: &[f64], values: &[Mat3]) -> Mat3 {
    let mut p = values.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (x0, x1) = (eps[i], eps[i + level]);
            p[i] = (p[i + 1] * x0 - p[i] * x1) / (x0 - x1);
        }
    }
    p[0]
}

fn limit_difference_at(
    solution: &BoundarySolution,
    settings: &GradientSettings,
    elements: &[usize],
    x: &Point,
    extra: Option<&OffsetTerm>,
) -> Result<Mat3, SolveError> {
    let mesh = solution.mesh();
    let mu = solution.operators().mu();
    let polar = PolarQuadrature {
        angular: settings.angular,
        radial: settings.radial,
    };
    let point = PointQuadrature::default();
    let mut acc = Mat3::zeros();
    for (i, &t) in elements.iter().enumerate() {
        let n = mesh.normal(t);
        let tri = mesh.corners(t);
        let nodes = mesh.triangles()[t];
        let u = nodes.map(|b| solution.velocity[b]);
        let tau = nodes.map(|b| solution.traction[b]);
        let kernel = |q: &Point| {
            let r = q - x;
            let l = barycentric(&tri, q);
            let uq = u[0] * l[0] + u[1] * l[1] + u[2] * l[2];
            let tq = tau[0] * l[0] + tau[1] * l[1] + tau[2] * l[2];
            raw::stokeslet_grad_contracted(&r, &tq, mu) - raw::stresslet_grad_contracted(&r, &uq, &n)
        };
        let parts = if i == 0 {
            integrate_point_kernel_polar(&tri, kernel, x, &polar)?
        } else {
            integrate_point_kernel(&tri, kernel, x, &point)?
        };
        acc += parts[0] + parts[1] + parts[2];
    }
    if let Some(term) = extra {
        acc += term(x)?;
    }
    Ok(acc)
}

fn barycentric(tri: &[Point; 3], q: &Point) -> [f64; 3] {
    let [a, b, c] = *tri;
    let cross = (b - a).cross(&(c - a));
    let inv = 1.0 / cross.norm_squared();
    let l1 = (q - a).cross(&(c - a)).dot(&cross) * inv;
    let l2 = (b - a).cross(&(q - a)).dot(&cross) * inv;
    [1.0 - l1 - l2, l1, l2]
}

/// Elements containing each element's vertices, the element itself first.
fn patches(mesh: &SurfaceMesh, include_neighbours: bool) -> Vec<Vec<usize>> {
    let by_vertex = mesh.vertex_triangles();
    (0..mesh.element_count())
        .map(|t| {
            let mut patch = vec![t];
            if include_neighbours {
                for &v in &mesh.triangles()[t] {
                    for &s in &by_vertex[v] {
                        if !patch.contains(&s) {
                            patch.push(s);
                        }
                    }
                }
            }
            patch
        })
        .collect()
}

/// Galerkin RHS `∫ ψ_a Lim↔ I dΣ` by symmetric offsets `P ± ε n` along each
/// element's normal and polynomial extrapolation in ε.
pub fn limit_difference_rhs(solution: &BoundarySolution, settings: &GradientSettings) -> Result<GradientRhs, SolveError> {
    limit_difference_rhs_with(solution, settings, None)
}

/// As [`limit_difference_rhs`], adding `extra(X)` to `I(X)` on both sides.
pub fn limit_difference_rhs_with(
    solution: &BoundarySolution,
    settings: &GradientSettings,
    extra: Option<&OffsetTerm>,
) -> Result<GradientRhs, SolveError> {
    let mesh = solution.mesh();
    let rule = gauss_triangle(settings.outer_degree)?;
    let factors = settings.schedule.factors();
    let patches = patches(mesh, settings.include_neighbours);
    let per_element: Vec<[(Mat3, f64); 3]> = (0..mesh.element_count())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.corners(t);
            let n = mesh.normal(t);
            let h = mesh.mean_edge_length(t);
            let eps: Vec<f64> = factors.iter().map(|f| f * h).collect();
            let mut out = [(Mat3::zeros(), 0.0); 3];
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let p = tri[0] * bary[0] + tri[1] * bary[1] + tri[2] * bary[2];
                let mut diffs = Vec::with_capacity(eps.len());
                for &e in &eps {
                    let inside = limit_difference_at(solution, settings, &patches[t], &(p - n * e), extra)?;
                    let outside = limit_difference_at(solution, settings, &patches[t], &(p + n * e), extra)?;
                    diffs.push(inside - outside);
                }
                let full = extrapolate_to_zero(&eps, &diffs);
                let lower = extrapolate_to_zero(&eps[1..], &diffs[1..]);
                let gap = (full - lower).norm();
                let weight = w * mesh.area(t);
                for a in 0..3 {
                    out[a].0 += full * (weight * bary[a]);
                    out[a].1 += gap * weight * bary[a];
                }
            }
            Ok(out)
        })
        .collect::<Result<_, SolveError>>()?;
    let nn = mesh.node_count();
    let mut values = vec![Mat3::zeros(); nn];
    let mut gaps = vec![0.0; nn];
    for (t, parts) in per_element.iter().enumerate() {
        for (a, &node) in mesh.triangles()[t].iter().enumerate() {
            values[node] += parts[a].0;
            gaps[node] += parts[a].1;
        }
    }
    let mean = values.iter().map(|v| v.norm()).sum::<f64>() / nn as f64;
    // floor for data whose gradient vanishes
    let mu = solution.operators().mu();
    let edge = (0..mesh.element_count()).map(|t| mesh.mean_edge_length(t)).sum::<f64>() / mesh.element_count() as f64;
    let data = solution.velocity.iter().map(|u| u.norm()).fold(0.0, f64::max) / edge
        + solution.traction.iter().map(|t| t.norm()).fold(0.0, f64::max) / mu;
    let lumped = mesh.lumped_areas();
    for (a, (v, g)) in values.iter().zip(&gaps).enumerate() {
        let reference = v.norm().max(mean).max(1e-2 * data * lumped[a]);
        if *g > settings.extrapolation_tol * reference {
            return Err(SolveError::Extrapolation { node: a, residual: *g });
        }
    }
    Ok(GradientRhs { values, gaps })
}

/// The limit difference evaluated in closed form: on a flat element the
/// jump of `∇u` is `S + a nᵀ` with `S` the surface gradient of the
/// interpolated velocity and `a = −n div_s u + τ_t/μ − Sᵀn` fixed by
/// incompressibility and the tangential traction. Returns the same Galerkin
/// vectors as [`limit_difference_rhs`] without any offsets.
pub fn jump_formula_rhs(solution: &BoundarySolution) -> Vec<Mat3> {
    let mesh = solution.mesh();
    let mu = solution.operators().mu();
    let rule = gauss_triangle(2).expect("degree 2 rule");
    let mut values = vec![Mat3::zeros(); mesh.node_count()];
    for t in 0..mesh.element_count() {
        let nodes = mesh.triangles()[t];
        let n = mesh.normal(t);
        let s = Mat3::from_rows(
            &[0, 1, 2].map(|k| mesh.surface_gradient(t, nodes.map(|b| solution.velocity[b][k])).transpose()),
        );
        let div = s.trace();
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let tau = mesh.interpolate(t, *bary, &solution.traction);
            let tau_t = tau - n * n.dot(&tau);
            let a = -n * div + tau_t / mu - s.transpose() * n;
            let g = s + a * n.transpose();
            for (i, &node) in nodes.iter().enumerate() {
                values[node] += g * (w * mesh.area(t) * bary[i]);
            }
        }
    }
    values
}

/// Nodal gradients from the Galerkin vectors: nine solves with the sparse
/// SPD mass matrix, factored once.
pub fn solve_gradients(mesh: &SurfaceMesh, rhs: &[Mat3]) -> Result<GradientField, SolveError> {
    let n = mesh.node_count();
    if rhs.len() != n {
        return Err(SolveError::LengthMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let chol = CscCholesky::factor(&mass_matrix(mesh)).map_err(|_| SolveError::Factorization)?;
    let b = DMatrix::from_fn(n, 9, |a, c| rhs[a][(c / 3, c % 3)]);
    let x = chol.solve(&b);
    let values: Vec<Mat3> = (0..n).map(|a| Mat3::from_fn(|k, m| x[(a, 3 * k + m)])).collect();
    let field = GradientField { values };
    if !field.is_finite() {
        return Err(SolveError::Factorization);
    }
    Ok(field)
}

/// Limit-difference RHS followed by the mass-matrix solve.
pub fn recover_gradients(solution: &BoundarySolution, settings: &GradientSettings) -> Result<GradientField, SolveError> {
    let rhs = limit_difference_rhs(solution, settings)?;
    solve_gradients(solution.mesh(), &rhs.values)
}

/// `Σ_l ∂²H_kj / ∂Q_l ∂P_m n_l f_j`, indexed `(k, m)`.
pub fn hfun_normal_derivative_grad_contracted(r: &Vec3, n: &Vec3, f: &Vec3, mu: f64) -> Mat3 {
    let d2 = r.norm_squared();
    let d = d2.sqrt();
    let d3 = d2 * d;
    let c = 1.0 / (32.0 * std::f64::consts::PI * mu * mu);
    let rn = r.dot(n);
    let rf = r.dot(f);
    let nf = n.dot(f);
    Mat3::from_fn(|k, m| {
        let dkm = if k == m { 1.0 } else { 0.0 };
        let v = -3.0 * f[k] * (n[m] / d - r[m] * rn / d3) + dkm * (nf / d - rf * rn / d3)
            + f[m] * (n[k] / d - r[k] * rn / d3)
            - (n[k] * rf * r[m] + nf * r[k] * r[m] + n[m] * r[k] * rf) / d3
            + 3.0 * r[k] * rf * r[m] * rn / (d3 * d2);
        c * v
    })
}

/// `∇_X ∫_Ω U(Q, X) F(Q) dΩ_Q` by the same split as the volume vectors:
/// the H boundary term differentiated under the integral plus the
/// remainder vertex sum with `U_,m`. Indexed `(k, m)`.
pub fn volume_gradient_at(
    x: &Point,
    extension: &HarmonicExtension,
    field: &GridField,
    mu: f64,
    point: &PointQuadrature,
) -> Result<Mat3, SolveError> {
    let mesh = extension.mesh();
    let dirichlet = extension.dirichlet();
    let flux = extension.flux();
    let mut boundary = Mat3::zeros();
    for t in 0..mesh.element_count() {
        let n = mesh.normal(t);
        let nodes = mesh.triangles()[t];
        let f = nodes.map(|b| dirichlet[b]);
        let g = nodes.map(|b| flux[b]);
        let tri = mesh.corners(t);
        let parts = integrate_point_kernel(
            &tri,
            |q| {
                let r = q - x;
                let l = barycentric(&tri, q);
                let fq = f[0] * l[0] + f[1] * l[1] + f[2] * l[2];
                let gq = g[0] * l[0] + g[1] * l[1] + g[2] * l[2];
                let hg = raw::hfun_grad(&r, mu);
                let h = Mat3::from_fn(|k, m| (hg[m] * gq)[k]);
                hfun_normal_derivative_grad_contracted(&r, &n, &fq, mu) - h
            },
            x,
            point,
        )?;
        boundary += parts[0] + parts[1] + parts[2];
    }
    let grid = &field.grid;
    let mut remainder = Mat3::zeros();
    for v in 0..grid.vertex_count() {
        if !field.inside[v] || field.values[v] == Vec3::zeros() {
            continue;
        }
        let r = grid.vertex(v) - x;
        if r.norm_squared() == 0.0 {
            continue;
        }
        remainder += raw::stokeslet_grad_contracted(&r, &field.values[v], mu) * grid.vertex_weight(v);
    }
    Ok(boundary * mu + remainder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::{solve_mixed, AssemblySettings, BoundaryOperators, DomainKind, MixedBC};
    use crate::kernels::{point_source_traction, point_source_velocity, stokeslet_deriv};
    use crate::mesh::make_icosphere;
    use std::sync::Arc;

    fn point_source_solution(subdiv: u32, domain: DomainKind, src: Vec3) -> BoundarySolution {
        let mesh = make_icosphere(subdiv, 1.0).unwrap();
        let ops = Arc::new(BoundaryOperators::assemble(&mesh, 1.0, domain, AssemblySettings::default()).unwrap());
        let bc = MixedBC::upper_velocity_lower_traction(
            &mesh,
            domain,
            |x| point_source_velocity(x, &src, 1.0, 0).unwrap(),
            |x, n| point_source_traction(x, &src, n, 0).unwrap(),
        )
        .unwrap();
        solve_mixed(&ops, &bc, None).unwrap()
    }

    #[test]
    fn neville_is_exact_for_polynomials() {
        let eps = [0.4, 0.2, 0.1, 0.05];
        let vals: Vec<Mat3> = eps
            .iter()
            .map(|e| Mat3::from_element(1.5 - 2.0 * e + 0.7 * e * e - 3.0 * e * e * e))
            .collect();
        let got = extrapolate_to_zero(&eps, &vals);
        assert!((got - Mat3::from_element(1.5)).norm() < 1e-12);
    }

    #[test]
    fn schedule_validation() {
        assert!(EpsilonSchedule::new(vec![0.1]).is_err());
        assert!(EpsilonSchedule::new(vec![0.1, 0.2]).is_err());
        assert!(EpsilonSchedule::new(vec![0.1, -0.05]).is_err());
        assert!(EpsilonSchedule::new(vec![0.1, 0.05]).is_ok());
    }

    #[test]
    fn mass_solve_inverts_mass_matrix() {
        let mesh = make_icosphere(2, 1.0).unwrap();
        let g: Vec<Mat3> = mesh
            .vertices()
            .iter()
            .map(|v| Mat3::from_fn(|k, m| v[k] * (m as f64 + 1.0) - v[m].powi(2)))
            .collect();
        let mass = mass_matrix(&mesh);
        let mut rhs = vec![Mat3::zeros(); g.len()];
        for (r, c, v) in mass.triplet_iter() {
            rhs[r] += g[c] * *v;
        }
        let back = solve_gradients(&mesh, &rhs).unwrap();
        for (a, b) in back.values.iter().zip(&g) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn offset_pairs_match_jump_formula() {
        let sol = point_source_solution(1, DomainKind::Interior, Vec3::new(2.0, 0.0, 0.0));
        let rhs = limit_difference_rhs(&sol, &GradientSettings::default()).unwrap();
        let oracle = jump_formula_rhs(&sol);
        let scale = oracle.iter().map(|m| m.norm()).fold(0.0, f64::max);
        for (a, b) in rhs.values.iter().zip(&oracle) {
            assert!((a - b).norm() < 5e-5 * scale, "{a} {b}");
        }
    }

    #[test]
    fn neighbours_do_not_change_the_limit() {
        let sol = point_source_solution(1, DomainKind::Interior, Vec3::new(2.0, 0.0, 0.0));
        let own = limit_difference_rhs(&sol, &GradientSettings::default()).unwrap();
        let settings = GradientSettings {
            include_neighbours: true,
                        ..Default::default()
        };
        let wide = limit_difference_rhs(&sol, &settings).unwrap();
        let scale = own.values.iter().map(|m| m.norm()).fold(0.0, f64::max);
        for (a, b) in own.values.iter().zip(&wide.values) {
            assert!((a - b).norm() < 1e-3 * scale, "{a} {b}");
        }
    }

    #[test]
    fn rigid_motion_has_zero_rhs() {
        let mesh = make_icosphere(1, 1.0).unwrap();
        let ops = Arc::new(BoundaryOperators::assemble(&mesh, 1.0, DomainKind::Interior, AssemblySettings::default()).unwrap());
        let c = Vec3::new(0.3, -1.0, 2.0);
        let bc = MixedBC::upper_velocity_lower_traction(&mesh, DomainKind::Interior, |_| c, |_, _| Vec3::zeros()).unwrap();
        let sol = solve_mixed(&ops, &bc, None).unwrap();
        let rhs = limit_difference_rhs(&sol, &GradientSettings::default()).unwrap();
        for k in 0..3 {
            for m in 0..3 {
                let norm: f64 = rhs.values.iter().map(|v| v[(k, m)].powi(2)).sum::<f64>().sqrt();
                assert!(norm <= 1e-3, "{k}{m} {norm}");
            }
        }
    }

    #[test]
    fn volume_gradient_kernel_matches_finite_difference() {
        let q = Vec3::new(0.3, -0.2, 0.9);
        let p = Vec3::new(-0.1, 0.4, 0.2);
        let n = Vec3::new(1.0, 2.0, -0.5).normalize();
        let f = Vec3::new(0.7, -1.1, 0.4);
        let mu = 1.7;
        let got = hfun_normal_derivative_grad_contracted(&(q - p), &n, &f, mu);
        let h = 1e-5;
        for m in 0..3 {
            let mut dp = Vec3::zeros();
            dp[m] = h;
            let plus = raw::hfun_normal_derivative(&(q - p - dp), &n, mu) * f;
            let minus = raw::hfun_normal_derivative(&(q - p + dp), &n, mu) * f;
            let fd = (plus - minus) / (2.0 * h);
            for k in 0..3 {
                assert!((got[(k, m)] - fd[k]).abs() < 1e-8, "{k}{m} {} {}", got[(k, m)], fd[k]);
            }
        }
    }

    #[test]
    fn linear_flow_is_recovered_exactly() {
        // u = A x with tr A = 0 and p = 0 has τ = μ(A + Aᵀ)n
        let a = Mat3::new(0.4, -0.2, 0.7, 0.1, -0.9, 0.3, -0.5, 0.6, 0.5);
        let mut sol = point_source_solution(1, DomainKind::Interior, Vec3::new(2.0, 0.0, 0.0));
        let mesh = sol.mesh().clone();
        let normals = mesh.node_normals();
        sol.velocity = mesh.vertices().iter().map(|x| a * x).collect();
        sol.traction = normals.iter().map(|n| (a + a.transpose()) * n).collect();
        let rhs = limit_difference_rhs(&sol, &GradientSettings::default()).unwrap();
        let field = solve_gradients(&mesh, &rhs.values).unwrap();
        let jump = solve_gradients(&mesh, &jump_formula_rhs(&sol)).unwrap();
        // node-normal tractions are exact only at the nodes, so compare
        // against the closed-form limit and check the offsets reproduce it
        for (g, j) in field.values.iter().zip(&jump.values) {
            assert!((g - j).norm() < 1e-3 * a.norm(), "{g} {j}");
            assert!((g - a).norm() < 0.2 * a.norm());
        }
    }

    #[test]
    fn schedule_shift_is_robust() {
        let sol = point_source_solution(1, DomainKind::Interior, Vec3::new(2.0, 0.0, 0.0));
        let base = GradientSettings::default();
        let shifted = GradientSettings {
            schedule: base.schedule.scaled(1.5).unwrap(),
            ..base.clone()
        };
        let a = limit_difference_rhs(&sol, &base).unwrap();
        let b = limit_difference_rhs(&sol, &shifted).unwrap();
        let probe = 0;
        assert!((a.values[probe] - b.values[probe]).norm() <= 0.05 * a.values[probe].norm());
    }

    #[test]
    fn point_source_gradient_errors_are_small() {
        let src = Vec3::new(2.0, 0.0, 0.0);
        let sol = point_source_solution(2, DomainKind::Interior, src);
        let field = solve_gradients(sol.mesh(), &jump_formula_rhs(&sol)).unwrap();
        let n = field.node_count() as f64;
        let mut sums = Mat3::zeros();
        for (x, g) in sol.mesh().vertices().iter().zip(&field.values) {
            let exact = Mat3::from_fn(|k, m| -stokeslet_deriv(x, &src, 1.0, m).unwrap()[(k, 0)]);
            sums += (g - exact).map(|d| d * d);
        }
        let rms = (sums / n).map(f64::sqrt);
        assert!(rms.max() < 1e-3, "{rms}");
    }
}
