//! Galerkin discretization of the Stokes boundary integral equation with
//! linear elements and mixed boundary conditions.
//!
//! Conventions: `n` points out of the fluid, `R = Q − P`, and
//! `μ∇²u − ∇p = F`. For P on Σ, with the double-layer integral taken as the
//! limit from outside the fluid,
//!
//! ```text
//! ∫_Σ [T_ijk u_i n_j − U_kj τ_j] dΣ_Q + ∫_Ω U_kj F_j dΩ_Q = 0,
//! ```
//!
//! and for P inside the fluid the same expression equals `−u_k(P)`. Testing
//! with ψ_a gives `K u − V τ + b = 0` with `b_a = ∫ ψ_a ∫_Ω U F`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::SolveError;
use crate::kernels::{raw, Mat3, Vec3};
use crate::mesh::{Point, SurfaceMesh};
use crate::quadrature::{
    classify_pair, distance_to_triangle, galerkin_pair_integral, integrate_point_kernel, Element, KernelValue,
    Pair, PairIntegrator, PairQuadrature, PointQuadrature,
};

/// Which side of Σ holds the fluid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    /// Fluid inside the closed surface.
    Interior,
    /// Fluid outside the closed surface, decaying at infinity.
    Exterior,
}

impl std::str::FromStr for DomainKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "interior" => Ok(Self::Interior),
            "exterior" => Ok(Self::Exterior),
            other => Err(format!("unknown domain kind '{other}' (expected interior or exterior)")),
        }
    }
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Interior => "interior",
            Self::Exterior => "exterior",
        })
    }
}

/// Boundary data at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeCondition {
    Velocity(Vec3),
    Traction(Vec3),
}

impl NodeCondition {
    pub fn is_velocity(&self) -> bool {
        matches!(self, NodeCondition::Velocity(_))
    }

    fn value(&self) -> Vec3 {
        match self {
            NodeCondition::Velocity(v) | NodeCondition::Traction(v) => *v,
        }
    }
}

/// Per-node boundary conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBC {
    domain: DomainKind,
    conditions: Vec<NodeCondition>,
}

impl MixedBC {
    pub fn new(domain: DomainKind, conditions: Vec<NodeCondition>) -> Result<Self, SolveError> {
        if let Some(i) = conditions.iter().position(|c| !c.value().iter().all(|v| v.is_finite())) {
            return Err(SolveError::InvalidParameter(format!("non-finite boundary value at node {i}")));
        }
        Ok(Self { domain, conditions })
    }

    /// Velocity on nodes with z ≥ 0 (equator included), traction below.
    /// `traction` receives the node and the fluid-outward node normal.
    pub fn upper_velocity_lower_traction(
        mesh: &SurfaceMesh,
        domain: DomainKind,
        velocity: impl Fn(&Point) -> Vec3,
        traction: impl Fn(&Point, &Vec3) -> Vec3,
    ) -> Result<Self, SolveError> {
        let normals = fluid_mesh(mesh, domain).node_normals();
        let conditions = mesh
            .vertices()
            .iter()
            .zip(&normals)
            .map(|(x, n)| {
                if x[2] >= 0.0 {
                    NodeCondition::Velocity(velocity(x))
                } else {
                    NodeCondition::Traction(traction(x, n))
                }
            })
            .collect();
        Self::new(domain, conditions)
    }

    pub fn all_velocity(mesh: &SurfaceMesh, domain: DomainKind, velocity: impl Fn(&Point) -> Vec3) -> Result<Self, SolveError> {
        let conditions = mesh.vertices().iter().map(|x| NodeCondition::Velocity(velocity(x))).collect();
        Self::new(domain, conditions)
    }

    pub fn domain(&self) -> DomainKind {
        self.domain
    }

    pub fn conditions(&self) -> &[NodeCondition] {
        &self.conditions
    }

    pub fn velocity_node_count(&self) -> usize {
        self.conditions.iter().filter(|c| c.is_velocity()).count()
    }
}

/// Mesh oriented with normals out of the fluid.
pub fn fluid_mesh(mesh: &SurfaceMesh, domain: DomainKind) -> SurfaceMesh {
    match domain {
        DomainKind::Interior => mesh.clone(),
        DomainKind::Exterior => mesh.flipped(),
    }
}

/// Quadrature settings for assembly and off-surface evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssemblySettings {
    pub pair: PairQuadrature,
    pub point: PointQuadrature,
}

/// Integrates `kernel(q_element, Q, P)` against ψ_a(P) ψ_b(Q) over all element
/// pairs and sums into node blocks, row-major `N × N`.
pub(crate) fn assemble_node_blocks<T: KernelValue>(
    mesh: &SurfaceMesh,
    integrator: &PairIntegrator,
    kernel: impl Fn(usize, &Point, &Point) -> T + Sync,
) -> Result<Vec<T>, SolveError> {
    let n = mesh.node_count();
    let elements: Vec<Element> = (0..mesh.element_count())
        .map(|t| Element {
            nodes: mesh.triangles()[t],
            corners: mesh.corners(t),
        })
        .collect();
    let mut out = vec![T::zero(); n * n];
    const BATCH: usize = 32;
    for start in (0..elements.len()).step_by(BATCH) {
        let end = (start + BATCH).min(elements.len());
        let rows: Vec<Vec<T>> = (start..end)
            .into_par_iter()
            .map(|p| {
                let ep = &elements[p];
                let mut local = vec![T::zero(); 3 * n];
                for (q, eq) in elements.iter().enumerate() {
                    let config = classify_pair(&ep.nodes, &eq.nodes);
                    let block = galerkin_pair_integral(integrator, ep, eq, |y, x| kernel(q, y, x), &config)
                        .map_err(|source| SolveError::Quadrature { p, q, source })?;
                    for a in 0..3 {
                        for b in 0..3 {
                            let slot = &mut local[a * n + eq.nodes[b]];
                            *slot = *slot + block[a][b];
                        }
                    }
                }
                Ok(local)
            })
            .collect::<Result<_, SolveError>>()?;
        for (p, local) in (start..end).zip(rows) {
            for (a, &node) in elements[p].nodes.iter().enumerate() {
                let row = &mut out[node * n..(node + 1) * n];
                for (slot, v) in row.iter_mut().zip(&local[a * n..(a + 1) * n]) {
                    *slot = *slot + *v;
                }
            }
        }
    }
    Ok(out)
}

/// Adds `c · M` (consistent mass matrix) to node-block diagonals of `m`,
/// treating each node block as `c·M_ab·I`.
fn add_mass_identity(mesh: &SurfaceMesh, m: &mut DMatrix<f64>, c: f64) {
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        for &a in tri {
            for &b in tri {
                let w = if a == b { area / 6.0 } else { area / 12.0 };
                for k in 0..3 {
                    m[(3 * a + k, 3 * b + k)] += c * w;
                }
            }
        }
    }
}

fn node_block(m: &DMatrix<f64>, a: usize, b: usize) -> Mat3 {
    m.fixed_view::<3, 3>(3 * a, 3 * b).into_owned()
}

/// Assembled single- and double-layer operators on a fluid-oriented mesh.
#[derive(Debug, Clone)]
pub struct BoundaryOperators {
    mesh: SurfaceMesh,
    domain: DomainKind,
    mu: f64,
    settings: AssemblySettings,
    single_layer: DMatrix<f64>,
    double_layer: DMatrix<f64>,
    raw_row_sums: Vec<Mat3>,
    lumped: Vec<f64>,
}

impl BoundaryOperators {
    /// Assembles `V_ab = ∫∫ ψ_a ψ_b U` and `K_ab = ∫∫ ψ_a ψ_b T·n + ½ M_ab`
    /// (outside-the-fluid limit). `mesh` is given with outward normals as
    /// usual; for exterior problems it is flipped internally. The diagonal
    /// blocks of `K` are then reset so constants satisfy the rigid-body
    /// identity exactly.
    pub fn assemble(
        mesh: &SurfaceMesh,
        mu: f64,
        domain: DomainKind,
        settings: AssemblySettings,
    ) -> Result<Self, SolveError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(SolveError::Kernel(crate::error::KernelError::InvalidViscosity(mu)));
        }
        let mesh = fluid_mesh(mesh, domain);
        let n = mesh.node_count();
        let integrator = PairIntegrator::new(settings.pair);
        let normals = mesh.normals().to_vec();
        let blocks = assemble_node_blocks(&mesh, &integrator, |q, y, x| {
            let r = y - x;
            Pair(raw::stokeslet(&r, mu), raw::stresslet_dot_normal(&r, &normals[q]))
        })?;
        let mut single_layer = DMatrix::zeros(3 * n, 3 * n);
        let mut double_layer = DMatrix::zeros(3 * n, 3 * n);
        for a in 0..n {
            for b in 0..n {
                let Pair(u, tn) = blocks[a * n + b];
                single_layer.fixed_view_mut::<3, 3>(3 * a, 3 * b).copy_from(&u);
                double_layer.fixed_view_mut::<3, 3>(3 * a, 3 * b).copy_from(&tn.transpose());
            }
        }
        drop(blocks);
        add_mass_identity(&mesh, &mut double_layer, 0.5);

        let lumped = mesh.lumped_areas();
        let mut raw_row_sums = vec![Mat3::zeros(); n];
        for (a, sum) in raw_row_sums.iter_mut().enumerate() {
            for b in 0..n {
                *sum += node_block(&double_layer, a, b);
            }
        }
        for a in 0..n {
            let target = match domain {
                DomainKind::Interior => Mat3::zeros(),
                DomainKind::Exterior => Mat3::identity() * lumped[a],
            };
            let fix = raw_row_sums[a] - target;
            let mut diag = double_layer.fixed_view_mut::<3, 3>(3 * a, 3 * a);
            diag -= fix;
        }
        Ok(Self {
            mesh,
            domain,
            mu,
            settings,
            single_layer,
            double_layer,
            raw_row_sums,
            lumped,
        })
    }

    /// The mesh with normals out of the fluid.
    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn domain(&self) -> DomainKind {
        self.domain
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn settings(&self) -> &AssemblySettings {
        &self.settings
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    /// Single-layer matrix `V` (3N × 3N, node-major).
    pub fn single_layer(&self) -> &DMatrix<f64> {
        &self.single_layer
    }

    /// Double-layer matrix for the limit from outside the fluid.
    pub fn double_layer(&self) -> &DMatrix<f64> {
        &self.double_layer
    }

    /// Double-layer matrix for the limit from inside the fluid: `K − M`.
    pub fn double_layer_fluid_limit(&self) -> DMatrix<f64> {
        let mut k = self.double_layer.clone();
        add_mass_identity(&self.mesh, &mut k, -1.0);
        k
    }

    /// Per node, the fluid-side double layer of a constant field as
    /// computed by quadrature before the diagonal reset,
    /// `(1/m_a) Σ_b ∫∫ ψ_a ψ_b T·n − ½ I`. Exact values are `−I` for fluid
    /// inside Σ and `0` for fluid outside.
    pub fn fluid_limit_row_sums(&self) -> Vec<Mat3> {
        self.raw_row_sums
            .iter()
            .zip(&self.lumped)
            .map(|(s, m)| s / *m - Mat3::identity())
            .collect()
    }

    /// Applies `V` to nodal tractions.
    pub fn apply_single_layer(&self, tau: &[Vec3]) -> Result<Vec<Vec3>, SolveError> {
        apply(&self.single_layer, tau)
    }

    /// Applies `K` to nodal velocities.
    pub fn apply_double_layer(&self, u: &[Vec3]) -> Result<Vec<Vec3>, SolveError> {
        apply(&self.double_layer, u)
    }

    /// `K u − V τ + b`, which vanishes for an exact discrete solution.
    pub fn residual(&self, u: &[Vec3], tau: &[Vec3], volume_rhs: Option<&[Vec3]>) -> Result<Vec<Vec3>, SolveError> {
        let ku = self.apply_double_layer(u)?;
        let vt = self.apply_single_layer(tau)?;
        let mut r: Vec<Vec3> = ku.iter().zip(&vt).map(|(a, b)| a - b).collect();
        if let Some(b) = volume_rhs {
            check_len(b.len(), r.len())?;
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri += bi;
            }
        }
        Ok(r)
    }
}

fn check_len(got: usize, expected: usize) -> Result<(), SolveError> {
    if got != expected {
        return Err(SolveError::LengthMismatch { expected, got });
    }
    Ok(())
}

fn apply(m: &DMatrix<f64>, x: &[Vec3]) -> Result<Vec<Vec3>, SolveError> {
    check_len(3 * x.len(), m.ncols())?;
    let flat = nalgebra::DVector::from_iterator(3 * x.len(), x.iter().flat_map(|v| v.iter().copied()));
    let y = m * flat;
    Ok(y.as_slice().chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}

/// Nodal velocity and traction on Σ, with the operators that produced them.
#[derive(Debug, Clone)]
pub struct BoundarySolution {
    pub velocity: Vec<Vec3>,
    pub traction: Vec<Vec3>,
    operators: Arc<BoundaryOperators>,
}

impl BoundarySolution {
    pub fn operators(&self) -> &BoundaryOperators {
        &self.operators
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        self.operators.mesh()
    }
}

/// Smallest-to-largest pivot magnitude below which a factorization is
/// reported as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

/// Solves `K u − V τ + b = 0` for the unknown half of each node's data.
/// `volume_rhs` is the Galerkin vector `b_a = ∫ ψ_a ∫_Ω U F` (omit for the
/// homogeneous equation).
pub fn solve_mixed(
    operators: &Arc<BoundaryOperators>,
    bc: &MixedBC,
    volume_rhs: Option<&[Vec3]>,
) -> Result<BoundarySolution, SolveError> {
    let n = operators.node_count();
    check_len(bc.conditions.len(), n)?;
    if bc.domain != operators.domain {
        return Err(SolveError::InvalidParameter(format!(
            "boundary conditions are for the {:?} problem but operators were assembled for {:?}",
            bc.domain, operators.domain
        )));
    }
    let v = &operators.single_layer;
    let k = &operators.double_layer;
    let mut system = DMatrix::zeros(3 * n, 3 * n);
    let mut rhs = nalgebra::DVector::zeros(3 * n);
    if let Some(b) = volume_rhs {
        check_len(b.len(), n)?;
        for (a, ba) in b.iter().enumerate() {
            for c in 0..3 {
                rhs[3 * a + c] = -ba[c];
            }
        }
    }
    for (b, cond) in bc.conditions.iter().enumerate() {
        let (known, unknown, sign_known, sign_unknown) = match cond {
            NodeCondition::Velocity(_) => (k, v, -1.0, -1.0),
            NodeCondition::Traction(_) => (v, k, 1.0, 1.0),
        };
        let value = cond.value();
        system
            .columns_mut(3 * b, 3)
            .copy_from(&(unknown.columns(3 * b, 3) * sign_unknown));
        rhs += known.columns(3 * b, 3) * (value * sign_known);
    }
    let lu = system.lu();
    let diag = lu.u().diagonal().abs();
    let condition = diag.min() / diag.max();
    if !(condition > SINGULAR_PIVOT_RATIO) {
        return Err(SolveError::Singular { condition });
    }
    let x = lu.solve(&rhs).ok_or(SolveError::Singular { condition })?;
    let mut velocity = Vec::with_capacity(n);
    let mut traction = Vec::with_capacity(n);
    for (b, cond) in bc.conditions.iter().enumerate() {
        let solved = Vec3::new(x[3 * b], x[3 * b + 1], x[3 * b + 2]);
        match cond {
            NodeCondition::Velocity(u) => {
                velocity.push(*u);
                traction.push(solved);
            }
            NodeCondition::Traction(t) => {
                velocity.push(solved);
                traction.push(*t);
            }
        }
    }
    Ok(BoundarySolution {
        velocity,
        traction,
        operators: Arc::clone(operators),
    })
}

/// Distance from `x` to the nearest element of `mesh`.
pub fn distance_to_mesh(mesh: &SurfaceMesh, x: &Point) -> f64 {
    (0..mesh.element_count())
        .map(|t| distance_to_triangle(&mesh.corners(t), x))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum distance to Σ for off-surface evaluation.
pub const MIN_BOUNDARY_DISTANCE: f64 = 1e-6;

/// `−∫_Σ [T_ijk(Q,X) u_i n_j − U_kj(Q,X) τ_j] dΣ_Q` over the interpolated
/// boundary data: the velocity at a fluid point `X` for the homogeneous
/// equation, and zero at points outside the fluid.
pub fn boundary_representation(solution: &BoundarySolution, x: &Point) -> Result<Vec3, SolveError> {
    let ops = solution.operators();
    let mesh = ops.mesh();
    let distance = distance_to_mesh(mesh, x);
    if distance < MIN_BOUNDARY_DISTANCE {
        return Err(SolveError::TooCloseToBoundary { distance });
    }
    let mu = ops.mu;
    let mut acc = Vec3::zeros();
    for t in 0..mesh.element_count() {
        let n = mesh.normal(t);
        let tri = mesh.corners(t);
        let parts = integrate_point_kernel(
            &tri,
            |q| {
                let r = q - x;
                Pair(raw::stokeslet(&r, mu), raw::stresslet_dot_normal(&r, &n))
            },
            x,
            &ops.settings.point,
        )?;
        for (a, &node) in mesh.triangles()[t].iter().enumerate() {
            let Pair(u, tn) = parts[a];
            acc += u * solution.traction[node] - tn.transpose() * solution.velocity[node];
        }
    }
    Ok(acc)
}

/// Velocity at an interior fluid point: the boundary representation minus
/// `volume_contribution = ∫_Ω U(Q,X) F(Q) dΩ_Q` (zero when F = 0).
pub fn interior_velocity(solution: &BoundarySolution, x: &Point, volume_contribution: &Vec3) -> Result<Vec3, SolveError> {
    Ok(boundary_representation(solution, x)? - volume_contribution)
}

/// `∫_Σ T_ijk(Q,X) n_j dΣ_Q` at an off-surface point, indexed `(i, k)`.
/// Equals `−I` inside a closed surface with outward normals and `0` outside.
pub fn double_layer_identity(mesh: &SurfaceMesh, x: &Point, settings: &PointQuadrature) -> Result<Mat3, SolveError> {
    let distance = distance_to_mesh(mesh, x);
    if distance < MIN_BOUNDARY_DISTANCE {
        return Err(SolveError::TooCloseToBoundary { distance });
    }
    let mut acc = Mat3::zeros();
    for t in 0..mesh.element_count() {
        let n = mesh.normal(t);
        let parts = integrate_point_kernel(&mesh.corners(t), |q| raw::stresslet_dot_normal(&(q - x), &n), x, settings)?;
        acc += parts[0] + parts[1] + parts[2];
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{point_source_traction, point_source_velocity};
    use crate::mesh::{make_icosphere, mean_square_error};

    fn ops(subdiv: u32, domain: DomainKind) -> Arc<BoundaryOperators> {
        let mesh = make_icosphere(subdiv, 1.0).unwrap();
        Arc::new(BoundaryOperators::assemble(&mesh, 1.0, domain, AssemblySettings::default()).unwrap())
    }

    #[test]
    fn single_layer_is_symmetric() {
        let o = ops(1, DomainKind::Interior);
        let v = o.single_layer();
        let asym = (v - v.transpose()).norm() / v.norm();
        assert!(asym <= 1e-12, "{asym}");
    }

    #[test]
    fn rigid_body_identity_holds_exactly() {
        for domain in [DomainKind::Interior, DomainKind::Exterior] {
            let o = ops(1, domain);
            let c = vec![Vec3::new(0.3, -1.0, 2.0); o.node_count()];
            let r = o.apply_double_layer(&c).unwrap();
            let expected = match domain {
                DomainKind::Interior => vec![Vec3::zeros(); c.len()],
                DomainKind::Exterior => o
                    .mesh()
                    .lumped_areas()
                    .iter()
                    .map(|m| c[0] * *m)
                    .collect(),
            };
            for (a, b) in r.iter().zip(&expected) {
                assert!((a - b).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn fluid_limit_row_sums_match_identity() {
        let o = ops(2, DomainKind::Interior);
        let worst = o
            .fluid_limit_row_sums()
            .iter()
            .map(|s| (s + Mat3::identity()).amax())
            .fold(0.0, f64::max);
        assert!(worst <= 2e-3, "{worst}");
    }

    #[test]
    fn off_surface_identity() {
        let mesh = make_icosphere(1, 1.0).unwrap();
        let settings = PointQuadrature::default();
        let inside = double_layer_identity(&mesh, &Point::new(0.1, 0.2, -0.3), &settings).unwrap();
        assert!((inside + Mat3::identity()).amax() < 1e-6);
        let outside = double_layer_identity(&mesh, &Point::new(1.4, 0.2, -0.3), &settings).unwrap();
        assert!(outside.amax() < 1e-6);
    }

    #[test]
    fn constant_velocity_gives_zero_traction() {
        let o = ops(1, DomainKind::Interior);
        let c = Vec3::new(1.0, 2.0, -0.5);
        let bc = MixedBC::all_velocity(o.mesh(), DomainKind::Interior, |_| c).unwrap();
        let sol = solve_mixed(&o, &bc, None).unwrap();
        assert!(sol.traction.iter().all(|t| t.amax() < 1e-10));
        let inside = interior_velocity(&sol, &Point::new(0.1, 0.0, 0.2), &Vec3::zeros()).unwrap();
        assert!((inside - c).amax() < 1e-3);
    }

    #[test]
    fn prescribed_values_pass_through_bit_exact() {
        let o = ops(1, DomainKind::Interior);
        let src = Point::new(-2.0, 0.0, 0.0);
        let bc = MixedBC::upper_velocity_lower_traction(
            o.mesh(),
            DomainKind::Interior,
            |x| point_source_velocity(x, &src, 1.0, 0).unwrap(),
            |x, n| point_source_traction(x, &src, n, 0).unwrap(),
        )
        .unwrap();
        let sol = solve_mixed(&o, &bc, None).unwrap();
        for (i, c) in bc.conditions().iter().enumerate() {
            match c {
                NodeCondition::Velocity(v) => assert_eq!(sol.velocity[i], *v),
                NodeCondition::Traction(t) => assert_eq!(sol.traction[i], *t),
            }
        }
    }

    #[test]
    fn point_source_interior_problem() {
        let o = ops(2, DomainKind::Interior);
        let src = Point::new(-2.0, 0.0, 0.0);
        let u_exact: Vec<Vec3> = o.mesh().vertices().iter().map(|x| point_source_velocity(x, &src, 1.0, 0).unwrap()).collect();
        let bc = MixedBC::upper_velocity_lower_traction(
            o.mesh(),
            DomainKind::Interior,
            |x| point_source_velocity(x, &src, 1.0, 0).unwrap(),
            |x, n| point_source_traction(x, &src, n, 0).unwrap(),
        )
        .unwrap();
        let sol = solve_mixed(&o, &bc, None).unwrap();
        let err = mean_square_error(&sol.velocity, &u_exact).unwrap();
        assert!(err.iter().all(|e| *e < 1.1e-3), "{err:?}");
        let center = interior_velocity(&sol, &Point::zeros(), &Vec3::zeros()).unwrap();
        let exact = point_source_velocity(&Point::zeros(), &src, 1.0, 0).unwrap();
        assert!((center - exact).amax() < 5.0 * err.iter().cloned().fold(0.0, f64::max), "{center} {exact}");
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let o = ops(0, DomainKind::Interior);
        let bc = MixedBC::all_velocity(o.mesh(), DomainKind::Exterior, |_| Vec3::zeros()).unwrap();
        assert!(matches!(solve_mixed(&o, &bc, None), Err(SolveError::InvalidParameter(_))));
    }

    #[test]
    fn too_close_to_boundary() {
        let o = ops(0, DomainKind::Interior);
        let bc = MixedBC::all_velocity(o.mesh(), DomainKind::Interior, |_| Vec3::zeros()).unwrap();
        let sol = solve_mixed(&o, &bc, None).unwrap();
        let on = o.mesh().vertex(0);
        assert!(matches!(
            interior_velocity(&sol, &on, &Vec3::zeros()),
            Err(SolveError::TooCloseToBoundary { .. })
        ));
    }
}
