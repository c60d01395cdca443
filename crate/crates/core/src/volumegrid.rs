//! Regular covering grid for the remainder volume integral.
//!
//! The volume term is split as
//!
//! ```text
//! ∫_Ω U F dΩ = μ ∮_Σ (∂H/∂n F⁰ − H ∂F⁰/∂n) dΣ + ∫_B U (F − F⁰) dB,
//! ```
//!
//! where F⁰ is the harmonic extension of F and F − F⁰ is extended by zero
//! outside Ω, so the second integral runs over the whole box `B` with a
//! trapezoidal vertex sum and no special treatment of cut cells.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{GridError, SolveError};
use crate::galerkin::{assemble_node_blocks, distance_to_mesh, AssemblySettings, MIN_BOUNDARY_DISTANCE};
use crate::harmonic::HarmonicExtension;
use crate::kernels::{raw, Vec3};
use crate::mesh::{Point, SurfaceMesh};
use crate::quadrature::{integrate_point_kernel, Pair, PairIntegrator, PointQuadrature};

/// Axis-aligned box split into `cells` cells per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringGrid {
    lo: Point,
    hi: Point,
    cells: [usize; 3],
    spacing: Vec3,
}

impl CoveringGrid {
    pub fn new(lo: Point, hi: Point, cells: [usize; 3]) -> Result<Self, GridError> {
        if cells.contains(&0) || (0..3).any(|i| !(hi[i] > lo[i]) || !lo[i].is_finite() || !hi[i].is_finite()) {
            return Err(GridError::InvalidShape);
        }
        let spacing = Vec3::from_fn(|i, _| (hi[i] - lo[i]) / cells[i] as f64);
        Ok(Self { lo, hi, cells, spacing })
    }

    /// `[−a, a]³` with `n` cells per axis.
    pub fn cube(half_width: f64, n: usize) -> Result<Self, GridError> {
        Self::new(Point::repeat(-half_width), Point::repeat(half_width), [n; 3])
    }

    /// Builds the grid and checks that it strictly contains `mesh`.
    pub fn covering(mesh: &SurfaceMesh, lo: Point, hi: Point, cells: [usize; 3]) -> Result<Self, GridError> {
        let grid = Self::new(lo, hi, cells)?;
        let (mlo, mhi) = mesh.bounding_box();
        if (0..3).any(|i| !(mlo[i] > lo[i] && mhi[i] < hi[i])) {
            return Err(GridError::MeshNotContained {
                lo: [lo[0], lo[1], lo[2]],
                hi: [hi[0], hi[1], hi[2]],
            });
        }
        Ok(grid)
    }

    pub fn lo(&self) -> Point {
        self.lo
    }

    pub fn hi(&self) -> Point {
        self.hi
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.product()
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.spacing.norm()
    }

    /// Vertices per axis (`cells + 1`).
    pub fn dims(&self) -> [usize; 3] {
        self.cells.map(|c| c + 1)
    }

    pub fn vertex_count(&self) -> usize {
        self.dims().iter().product()
    }

    /// Linear index with `i` fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.dims();
        i + nx * (j + ny * k)
    }

    pub fn ijk(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims();
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn vertex(&self, index: usize) -> Point {
        let ijk = self.ijk(index);
        Point::from_fn(|a, _| {
            if ijk[a] == self.cells[a] {
                self.hi[a]
            } else {
                self.lo[a] + ijk[a] as f64 * self.spacing[a]
            }
        })
    }

    /// Trapezoidal weight: cell volume / 8 per incident cell.
    pub fn vertex_weight(&self, index: usize) -> f64 {
        let ijk = self.ijk(index);
        let mut w = self.cell_volume();
        for a in 0..3 {
            if ijk[a] == 0 || ijk[a] == self.cells[a] {
                w *= 0.5;
            }
        }
        w
    }
}

/// Ray/triangle hit classification used by the parity test.
enum Hit {
    Miss,
    Cross,
    Degenerate,
}

fn ray_triangle(origin: &Point, dir: &Vec3, tri: &[Point; 3]) -> Hit {
    const EPS: f64 = 1e-10;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm();
    let s = origin - tri[0];
    if det.abs() < EPS * scale {
        // parallel; only a problem if the ray lies in the triangle's plane
        let n = e1.cross(&e2);
        return if s.dot(&n).abs() < EPS * scale * (1.0 + s.norm()) {
            Hit::Degenerate
        } else {
            Hit::Miss
        };
    }
    let inv = 1.0 / det;
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    let t = e2.dot(&q) * inv;
    if u < -EPS || v < -EPS || u + v > 1.0 + EPS || t < -EPS {
        return Hit::Miss;
    }
    if u < EPS || v < EPS || u + v > 1.0 - EPS || t < EPS {
        return Hit::Degenerate;
    }
    Hit::Cross
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Inside test by parity of ray crossings. Points within `1e-12` (relative
/// to the mesh size) of Σ count as outside.
pub fn point_inside(mesh: &SurfaceMesh, x: &Point, seed: u64) -> bool {
    let (lo, hi) = mesh.bounding_box();
    let size = (hi - lo).norm();
    if (0..3).any(|a| x[a] < lo[a] || x[a] > hi[a]) {
        return false;
    }
    if distance_to_mesh(mesh, x) <= 1e-12 * size {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let dir = random_direction(&mut rng);
        let mut crossings = 0usize;
        let mut clean = true;
        for t in 0..mesh.element_count() {
            match ray_triangle(x, &dir, &mesh.corners(t)) {
                Hit::Miss => {}
                Hit::Cross => crossings += 1,
                Hit::Degenerate => {
                    clean = false;
                    break;
                }
            }
        }
        if clean {
            return crossings % 2 == 1;
        }
    }
    false
}

/// Inside flags for every grid vertex; per-vertex ray directions are derived
/// from `seed` and the vertex index, so results do not depend on threading.
pub fn classify_vertices(grid: &CoveringGrid, mesh: &SurfaceMesh, seed: u64) -> Vec<bool> {
    (0..grid.vertex_count())
        .into_par_iter()
        .map(|v| point_inside(mesh, &grid.vertex(v), seed ^ (v as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect()
}

/// F − F⁰ on the grid, exactly zero at outside vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: CoveringGrid,
    pub inside: Vec<bool>,
    pub values: Vec<Vec3>,
}

impl GridField {
    pub fn zeros(grid: &CoveringGrid, inside: Vec<bool>) -> Result<Self, GridError> {
        if inside.len() != grid.vertex_count() {
            return Err(GridError::FieldMismatch {
                expected: grid.vertex_count(),
                got: inside.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values: vec![Vec3::zeros(); inside.len()],
            inside,
        })
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|b| **b).count()
    }

    /// CSV dump with columns `i,j,k,inside,v0,v1,v2`.
    pub fn write_csv(&self, path: &Path) -> Result<(), GridError> {
        let io = |e: std::io::Error| GridError::Io(e.to_string());
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let csv_err = |e: csv::Error| GridError::Io(e.to_string());
        w.write_record(["i", "j", "k", "inside", "v0", "v1", "v2"]).map_err(csv_err)?;
        for (idx, (inside, v)) in self.inside.iter().zip(&self.values).enumerate() {
            let [i, j, k] = self.grid.ijk(idx);
            w.write_record([
                i.to_string(),
                j.to_string(),
                k.to_string(),
                u8::from(*inside).to_string(),
                format!("{:e}", v[0]),
                format!("{:e}", v[1]),
                format!("{:e}", v[2]),
            ])
            .map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| GridError::Io(e.to_string()))?.flush().map_err(io)
    }
}

/// Evaluates F − F⁰ at inside vertices. Inside vertices closer to Σ than
/// the off-surface evaluation limit get zero, the boundary value of F − F⁰.
pub fn remainder_field(
    grid: &CoveringGrid,
    inside: Vec<bool>,
    force: impl Fn(&Point) -> Vec3 + Sync,
    extension: &HarmonicExtension,
) -> Result<GridField, GridError> {
    let mut fields = remainder_fields(grid, inside, &[(&force, extension)])?;
    Ok(fields.remove(0))
}

/// A body force paired with its harmonic extension.
pub type ForcePair<'a> = (&'a (dyn Fn(&Point) -> Vec3 + Sync), &'a HarmonicExtension);

/// [`remainder_field`] for several forces on the same mesh, sharing the
/// boundary quadrature of the extensions.
pub fn remainder_fields(grid: &CoveringGrid, inside: Vec<bool>, forces: &[ForcePair]) -> Result<Vec<GridField>, GridError> {
    let template = GridField::zeros(grid, inside)?;
    let Some((_, first)) = forces.first() else {
        return Ok(Vec::new());
    };
    let mesh = first.mesh();
    if forces.iter().any(|(_, e)| e.mesh() != mesh) {
        return Err(GridError::Solve(SolveError::InvalidParameter(
            "batched extensions must share one mesh".into(),
        )));
    }
    let extensions: Vec<&HarmonicExtension> = forces.iter().map(|(_, e)| *e).collect();
    let per_vertex: Vec<Vec<Vec3>> = (0..grid.vertex_count())
        .into_par_iter()
        .map(|v| {
            if !template.inside[v] {
                return Ok(vec![Vec3::zeros(); forces.len()]);
            }
            let x = grid.vertex(v);
            if distance_to_mesh(mesh, &x) < MIN_BOUNDARY_DISTANCE {
                return Ok(vec![Vec3::zeros(); forces.len()]);
            }
            let f0 = HarmonicExtension::values_at_many(&extensions, &x)?;
            Ok(forces.iter().zip(f0).map(|((force, _), v0)| force(&x) - v0).collect())
        })
        .collect::<Result<_, SolveError>>()?;
    Ok((0..forces.len())
        .map(|i| {
            let mut field = template.clone();
            field.values = per_vertex.iter().map(|v| v[i]).collect();
            field
        })
        .collect())
}

/// Settings for the grid-to-boundary moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSettings {
    pub point: PointQuadrature,
    /// Adaptive quadrature is used within this many cell diagonals of an element.
    pub near_cells: f64,
    /// Vertices per deterministic reduction chunk.
    pub chunk: usize,
}

impl Default for MomentSettings {
    fn default() -> Self {
        Self {
            point: PointQuadrature::default(),
            near_cells: 2.0,
            chunk: 256,
        }
    }
}

fn element_settings(base: &PointQuadrature, mesh: &SurfaceMesh, t: usize, near_distance: f64) -> PointQuadrature {
    let diam = mesh.diameter(t);
    let mut s = *base;
    s.near_factor = s.near_factor.max(near_distance / diam);
    s.far_factor = s.far_factor.max(s.near_factor);
    s
}

/// `b_a = Σ_v w_v ∫_Σ ψ_a(P) U(Q_v, P) dΣ_P · (F − F⁰)(Q_v)`: the Galerkin
/// vector of the remainder integral, with trapezoidal vertex weights.
pub fn remainder_volume_rhs(
    mesh: &SurfaceMesh,
    field: &GridField,
    mu: f64,
    settings: &MomentSettings,
) -> Result<Vec<Vec3>, GridError> {
    let mut out = remainder_volume_rhs_many(mesh, &[field], mu, settings)?;
    Ok(out.remove(0))
}

/// [`remainder_volume_rhs`] for several fields on one grid, integrating
/// each vertex moment once.
pub fn remainder_volume_rhs_many(
    mesh: &SurfaceMesh,
    fields: &[&GridField],
    mu: f64,
    settings: &MomentSettings,
) -> Result<Vec<Vec<Vec3>>, GridError> {
    let Some(first) = fields.first() else {
        return Ok(Vec::new());
    };
    let grid = &first.grid;
    for field in fields {
        if field.grid != *grid || field.values.len() != grid.vertex_count() || field.inside.len() != grid.vertex_count() {
            return Err(GridError::FieldMismatch {
                expected: grid.vertex_count(),
                got: field.values.len(),
            });
        }
    }
    let samples: Vec<Sample> = (0..grid.vertex_count())
        .filter(|&v| fields.iter().any(|f| f.inside[v] && f.values[v] != Vec3::zeros()))
        .map(|v| Sample {
            id: v,
            point: grid.vertex(v),
            weighted: fields
                .iter()
                .map(|f| if f.inside[v] { f.values[v] * grid.vertex_weight(v) } else { Vec3::zeros() })
                .collect(),
        })
        .collect();
    weighted_moments(mesh, &samples, fields.len(), settings.near_cells * grid.cell_diagonal(), mu, settings)
}

/// A volume quadrature node with its weight folded into one value per field.
struct Sample {
    id: usize,
    point: Point,
    weighted: Vec<Vec3>,
}

/// `b_a = Σ_s ∫_Σ ψ_a(P) U(Q_s, P) dΣ_P · weighted_s`, reduced in fixed
/// chunks so the sum does not depend on scheduling.
fn weighted_moments(
    mesh: &SurfaceMesh,
    samples: &[Sample],
    count: usize,
    near_distance: f64,
    mu: f64,
    settings: &MomentSettings,
) -> Result<Vec<Vec<Vec3>>, GridError> {
    let n = mesh.node_count();
    let per_element: Vec<PointQuadrature> = (0..mesh.element_count())
        .map(|t| element_settings(&settings.point, mesh, t, near_distance))
        .collect();
    let corners: Vec<[Point; 3]> = (0..mesh.element_count()).map(|t| mesh.corners(t)).collect();
    let partials: Vec<Vec<Vec<Vec3>>> = samples
        .par_chunks(settings.chunk.max(1))
        .map(|chunk| {
            let mut acc = vec![vec![Vec3::zeros(); n]; count];
            for s in chunk {
                let q = s.point;
                for (t, tri) in corners.iter().enumerate() {
                    let parts = integrate_point_kernel(tri, |p| raw::stokeslet(&(q - p), mu), &q, &per_element[t])
                        .map_err(|source| GridError::Moment { vertex: s.id, source })?;
                    for (a, &node) in mesh.triangles()[t].iter().enumerate() {
                        for (out, w) in acc.iter_mut().zip(&s.weighted) {
                            out[node] += parts[a] * w;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, GridError>>()?;
    let mut rhs = vec![vec![Vec3::zeros(); n]; count];
    for part in partials {
        for (r, p) in rhs.iter_mut().zip(part) {
            for (x, y) in r.iter_mut().zip(p) {
                *x += y;
            }
        }
    }
    Ok(rhs)
}

/// `b_a = μ ∫ ψ_a(P) ∮ (∂H/∂n_Q F⁰ − H ∂F⁰/∂n) dΣ_Q dΣ_P`.
pub fn h_boundary_rhs(
    extension: &HarmonicExtension,
    mu: f64,
    settings: &AssemblySettings,
) -> Result<Vec<Vec3>, SolveError> {
    Ok(h_boundary_rhs_many(&[extension], mu, settings)?.remove(0))
}

/// [`h_boundary_rhs`] for several extensions on one mesh, assembling the
/// kernel blocks once.
pub fn h_boundary_rhs_many(
    extensions: &[&HarmonicExtension],
    mu: f64,
    settings: &AssemblySettings,
) -> Result<Vec<Vec<Vec3>>, SolveError> {
    let Some(first) = extensions.first() else {
        return Ok(Vec::new());
    };
    let mesh = first.mesh();
    if extensions.iter().any(|e| e.mesh() != mesh) {
        return Err(SolveError::InvalidParameter("extensions live on different meshes".into()));
    }
    let n = mesh.node_count();
    let normals = mesh.normals().to_vec();
    let integrator = PairIntegrator::new(settings.pair);
    let blocks = assemble_node_blocks(mesh, &integrator, |q, y, x| {
        let r = y - x;
        Pair(raw::hfun_normal_derivative(&r, &normals[q], mu), raw::hfun(&r, mu))
    })?;
    Ok(extensions
        .iter()
        .map(|e| {
            let dirichlet = e.dirichlet();
            let flux = e.flux();
            (0..n)
                .map(|a| {
                    let mut acc = Vec3::zeros();
                    for b in 0..n {
                        let Pair(dh, h) = blocks[a * n + b];
                        acc += dh * dirichlet[b] - h * flux[b];
                    }
                    acc * mu
                })
                .collect()
        })
        .collect())
}

/// `∫_Ω U(Q, X) F(Q) dΩ_Q` at one point X by the same split as the
/// Galerkin vectors (boundary term plus remainder vertex sum).
pub fn volume_integral_at(
    x: &Point,
    extension: &HarmonicExtension,
    field: &GridField,
    mu: f64,
    point: &PointQuadrature,
) -> Result<Vec3, SolveError> {
    let mesh = extension.mesh();
    let dirichlet = extension.dirichlet();
    let flux = extension.flux();
    let mut boundary = Vec3::zeros();
    for t in 0..mesh.element_count() {
        let n = mesh.normal(t);
        let parts = integrate_point_kernel(
            &mesh.corners(t),
            |q| {
                let r = q - x;
                Pair(raw::hfun_normal_derivative(&r, &n, mu), raw::hfun(&r, mu))
            },
            x,
            point,
        )?;
        for (a, &node) in mesh.triangles()[t].iter().enumerate() {
            let Pair(dh, h) = parts[a];
            boundary += dh * dirichlet[node] - h * flux[node];
        }
    }
    let grid = &field.grid;
    let mut remainder = Vec3::zeros();
    for v in 0..grid.vertex_count() {
        if !field.inside[v] || field.values[v] == Vec3::zeros() {
            continue;
        }
        let q = grid.vertex(v);
        let r = q - x;
        if r.norm_squared() == 0.0 {
            continue;
        }
        remainder += raw::stokeslet(&r, mu) * field.values[v] * grid.vertex_weight(v);
    }
    Ok(boundary * mu + remainder)
}

/// Brute-force `∫ ψ_a ∫_Ω U F` by the midpoint rule on `cells³` cells of
/// the box, keeping cells whose centers are inside the mesh. Used only to
/// check the split.
#[allow(clippy::too_many_arguments)]
pub fn midpoint_volume_rhs(
    mesh: &SurfaceMesh,
    lo: Point,
    hi: Point,
    cells: usize,
    force: impl Fn(&Point) -> Vec3 + Sync,
    mu: f64,
    settings: &MomentSettings,
    seed: u64,
) -> Result<Vec<Vec3>, GridError> {
    let grid = CoveringGrid::new(lo, hi, [cells; 3])?;
    let h = grid.spacing();
    let volume = grid.cell_volume();
    let samples: Vec<Sample> = (0..cells * cells * cells)
        .into_par_iter()
        .filter_map(|c| {
            let (i, j, k) = (c % cells, (c / cells) % cells, c / (cells * cells));
            let x = lo + Vec3::new((i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1], (k as f64 + 0.5) * h[2]);
            let seed = seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            point_inside(mesh, &x, seed).then(|| Sample {
                id: c,
                point: x,
                weighted: vec![force(&x) * volume],
            })
        })
        .collect();
    let mut out = weighted_moments(mesh, &samples, 1, settings.near_cells * grid.cell_diagonal(), mu, settings)?;
    Ok(out.remove(0))
}

/// Euclidean norm of a nodal vector field viewed as one long vector.
pub fn rhs_norm(v: &[Vec3]) -> f64 {
    v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

/// Largest `|F − F⁰|` over inside vertices.
pub fn max_inside_value(field: &GridField) -> f64 {
    field
        .inside
        .iter()
        .zip(&field.values)
        .filter(|(i, _)| **i)
        .map(|(_, v)| v.norm())
        .fold(0.0, f64::max)
}
