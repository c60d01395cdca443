//! Harmonic extension of boundary data into the interior by the direct
//! Laplace boundary integral formulation.
//!
//! For φ harmonic in Ω with outward normal n and q = ∂φ/∂n,
//!
//! ```text
//! φ(X) = ∫_Σ G(Q,X) q(Q) dΣ_Q + ∫_Σ (n·R / 4πr³) φ(Q) dΣ_Q,   G = 1/(4πr),
//! ```
//!
//! and on Σ the second integral becomes a principal value with φ(P)/2 moved
//! to the left. The Galerkin system is `V q = (½M − D) φ`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::SolveError;
use crate::galerkin::{assemble_node_blocks, distance_to_mesh, AssemblySettings, MIN_BOUNDARY_DISTANCE, SINGULAR_PIVOT_RATIO};
use crate::kernels::{raw, Vec3};
use crate::mesh::{Point, SurfaceMesh};
use crate::quadrature::{integrate_point_kernel, Pair, PairIntegrator};

/// Factored Laplace operators on a closed mesh with outward normals.
#[derive(Debug, Clone)]
pub struct LaplaceOperators {
    mesh: SurfaceMesh,
    settings: AssemblySettings,
    single_layer: DMatrix<f64>,
    /// `½M − D` with row sums reset to zero.
    dirichlet_map: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LaplaceOperators {
    pub fn assemble(mesh: &SurfaceMesh, settings: AssemblySettings) -> Result<Self, SolveError> {
        if mesh.signed_volume() <= 0.0 {
            return Err(SolveError::InvalidParameter(
                "harmonic extension needs a closed mesh with outward normals".into(),
            ));
        }
        let n = mesh.node_count();
        let integrator = PairIntegrator::new(settings.pair);
        let normals = mesh.normals().to_vec();
        let blocks = assemble_node_blocks(mesh, &integrator, |q, y, x| {
            let r = y - x;
            Pair(raw::laplace_green(&r), raw::laplace_green_dn(&r, &normals[q]))
        })?;
        let mut single_layer = DMatrix::zeros(n, n);
        let mut dirichlet_map = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let Pair(g, dn) = blocks[a * n + b];
                single_layer[(a, b)] = g;
                dirichlet_map[(a, b)] = -dn;
            }
        }
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let area = mesh.area(t);
            for &a in tri {
                for &b in tri {
                    dirichlet_map[(a, b)] += 0.5 * if a == b { area / 6.0 } else { area / 12.0 };
                }
            }
        }
        // constants have zero flux
        for a in 0..n {
            let sum: f64 = dirichlet_map.row(a).sum();
            dirichlet_map[(a, a)] -= sum;
        }
        let lu = single_layer.clone().lu();
        let diag = lu.u().diagonal().abs();
        let condition = diag.min() / diag.max();
        if !(condition > SINGULAR_PIVOT_RATIO) {
            return Err(SolveError::Singular { condition });
        }
        Ok(Self {
            mesh: mesh.clone(),
            settings,
            single_layer,
            dirichlet_map,
            lu,
        })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn single_layer(&self) -> &DMatrix<f64> {
        &self.single_layer
    }

    /// Nodal normal derivative of the harmonic function with the given
    /// nodal boundary values.
    pub fn solve_flux(&self, dirichlet: &[f64]) -> Result<Vec<f64>, SolveError> {
        let n = self.mesh.node_count();
        if dirichlet.len() != n {
            return Err(SolveError::LengthMismatch {
                expected: n,
                got: dirichlet.len(),
            });
        }
        let rhs = &self.dirichlet_map * DVector::from_column_slice(dirichlet);
        let q = self.lu.solve(&rhs).ok_or(SolveError::Singular { condition: 0.0 })?;
        Ok(q.as_slice().to_vec())
    }

    /// Three components at once, sharing the factorization.
    pub fn solve_flux3(&self, dirichlet: &[Vec3]) -> Result<Vec<Vec3>, SolveError> {
        let n = self.mesh.node_count();
        if dirichlet.len() != n {
            return Err(SolveError::LengthMismatch {
                expected: n,
                got: dirichlet.len(),
            });
        }
        let data = DMatrix::from_fn(n, 3, |a, c| dirichlet[a][c]);
        let rhs = &self.dirichlet_map * data;
        let q = self.lu.solve(&rhs).ok_or(SolveError::Singular { condition: 0.0 })?;
        Ok((0..n).map(|a| Vec3::new(q[(a, 0)], q[(a, 1)], q[(a, 2)])).collect())
    }
}

/// Convenience wrapper: assemble and solve for one scalar field.
pub fn solve_flux(mesh: &SurfaceMesh, dirichlet: &[f64]) -> Result<Vec<f64>, SolveError> {
    LaplaceOperators::assemble(mesh, AssemblySettings::default())?.solve_flux(dirichlet)
}

/// Componentwise harmonic extension F⁰ of a vector field given on Σ.
#[derive(Debug, Clone)]
pub struct HarmonicExtension {
    mesh: SurfaceMesh,
    settings: AssemblySettings,
    dirichlet: Vec<Vec3>,
    flux: Vec<Vec3>,
}

impl HarmonicExtension {
    pub fn new(operators: &LaplaceOperators, dirichlet: Vec<Vec3>) -> Result<Self, SolveError> {
        let flux = operators.solve_flux3(&dirichlet)?;
        Ok(Self {
            mesh: operators.mesh.clone(),
            settings: operators.settings,
            dirichlet,
            flux,
        })
    }

    /// Samples `field` at the mesh nodes and extends it.
    pub fn from_field(operators: &LaplaceOperators, field: impl Fn(&Point) -> Vec3) -> Result<Self, SolveError> {
        let dirichlet = operators.mesh.vertices().iter().map(field).collect();
        Self::new(operators, dirichlet)
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    /// Nodal boundary values F|Σ.
    pub fn dirichlet(&self) -> &[Vec3] {
        &self.dirichlet
    }

    /// Nodal normal derivative ∂F⁰/∂n.
    pub fn flux(&self) -> &[Vec3] {
        &self.flux
    }

    /// F⁰ at one interior point.
    pub fn value_at(&self, x: &Point) -> Result<Vec3, SolveError> {
        Ok(Self::values_at_many(&[self], x)?[0])
    }

    /// Several extensions on the same mesh evaluated at one point with a
    /// shared quadrature.
    pub fn values_at_many(extensions: &[&HarmonicExtension], x: &Point) -> Result<Vec<Vec3>, SolveError> {
        let Some(first) = extensions.first() else {
            return Ok(Vec::new());
        };
        let mesh = &first.mesh;
        let distance = distance_to_mesh(mesh, x);
        if distance < MIN_BOUNDARY_DISTANCE {
            return Err(SolveError::TooCloseToBoundary { distance });
        }
        let mut acc = vec![Vec3::zeros(); extensions.len()];
        for t in 0..mesh.element_count() {
            let n = mesh.normal(t);
            let parts = integrate_point_kernel(
                &mesh.corners(t),
                |q| {
                    let r = q - x;
                    Pair(raw::laplace_green(&r), raw::laplace_green_dn(&r, &n))
                },
                x,
                &first.settings.point,
            )?;
            for (a, &node) in mesh.triangles()[t].iter().enumerate() {
                let Pair(g, dn) = parts[a];
                for (out, e) in acc.iter_mut().zip(extensions) {
                    *out += e.flux[node] * g + e.dirichlet[node] * dn;
                }
            }
        }
        Ok(acc)
    }

    /// F⁰ at many interior points, evaluated in parallel.
    pub fn interior_values(&self, points: &[Point]) -> Result<Vec<Vec3>, SolveError> {
        points.par_iter().map(|x| self.value_at(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_icosphere, mean_square_error_scalar};
    use rand::{Rng, SeedableRng};

    fn ops(subdiv: u32) -> LaplaceOperators {
        LaplaceOperators::assemble(&make_icosphere(subdiv, 1.0).unwrap(), AssemblySettings::default()).unwrap()
    }

    #[test]
    fn constant_has_zero_flux() {
        let o = ops(2);
        let q = o.solve_flux(&vec![1.0; o.mesh().node_count()]).unwrap();
        assert!(mean_square_error_scalar(&q, &vec![0.0; q.len()]).unwrap() <= 1e-3);
    }

    #[test]
    fn linear_flux_and_refinement() {
        let mut errors = Vec::new();
        for subdiv in [2, 3] {
            let o = ops(subdiv);
            let x: Vec<f64> = o.mesh().vertices().iter().map(|v| v[0]).collect();
            let q = o.solve_flux(&x).unwrap();
            errors.push(mean_square_error_scalar(&q, &x).unwrap());
        }
        assert!(errors[0] <= 1e-2, "{errors:?}");
        assert!(errors[1] < errors[0], "{errors:?}");
    }

    #[test]
    fn exterior_point_source_flux() {
        let o = ops(2);
        let src = Point::new(1.6, 0.4, -0.3);
        let g: Vec<f64> = o.mesh().vertices().iter().map(|v| 1.0 / (v - src).norm()).collect();
        let exact: Vec<f64> = o
            .mesh()
            .vertices()
            .iter()
            .map(|v| {
                let r = v - src;
                -r.dot(v) / r.norm().powi(3)
            })
            .collect();
        let q = o.solve_flux(&g).unwrap();
        assert!(mean_square_error_scalar(&q, &exact).unwrap() <= 1e-2);
    }

    #[test]
    fn interior_values_reproduce_linear_and_constant() {
        let o = ops(2);
        let ext = HarmonicExtension::from_field(&o, |v| Vec3::new(2.0, v[0], v[1] - 0.5 * v[2])).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut pts = Vec::new();
        while pts.len() < 100 {
            let p = Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if p.norm() < 0.9 {
                pts.push(p);
            }
        }
        // one cell from the surface on a 40³ grid over [−1.1, 1.1]³
        pts.push(Point::new(0.9, 0.0, 0.0));
        let values = ext.interior_values(&pts).unwrap();
        for (p, v) in pts.iter().zip(&values) {
            assert!((v[0] - 2.0).abs() < 1e-3, "{p} {v}");
            assert!((v[1] - p[0]).abs() < 1e-2);
            assert!((v[2] - (p[1] - 0.5 * p[2])).abs() < 1e-2);
        }
    }

    #[test]
    fn inside_out_mesh_rejected() {
        let m = make_icosphere(0, 1.0).unwrap().flipped();
        assert!(LaplaceOperators::assemble(&m, AssemblySettings::default()).is_err());
    }
}
