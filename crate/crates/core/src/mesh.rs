//! Closed triangulated surfaces with a linear nodal basis.
//!
//! A [`SurfaceMesh`] is immutable once built. Construction validates that the
//! surface is closed (every edge shared by exactly two triangles), that the
//! winding is consistent, and that no triangle is degenerate.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use nalgebra_sparse::{CooMatrix, CscMatrix};

use crate::error::MeshError;

pub type Point = Vector3<f64>;

/// Degenerate-triangle threshold relative to the squared bounding-box diagonal.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

/// Largest icosphere refinement level accepted.
pub const MAX_SUBDIVISIONS: u32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    normals: Vec<Point>,
    areas: Vec<f64>,
}

/// Mesh file formats understood by [`load_mesh`] and [`save_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(Self::Off),
            "obj" => Some(Self::Obj),
            _ => None,
        }
    }
}

impl SurfaceMesh {
    /// Builds and validates a mesh. Winding must already be consistent.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index: v,
                        count: vertices.len(),
                    });
                }
            }
        }
        check_closed_and_oriented(&triangles)?;

        let diag2 = bounding_box_diagonal(&vertices).powi(2);
        let mut normals = Vec::with_capacity(triangles.len());
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if area <= DEGENERATE_AREA_FACTOR * diag2 {
                return Err(MeshError::Degenerate { triangle: t, area });
            }
            normals.push(cross / (2.0 * area));
            areas.push(area);
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
            areas,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn node_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex(&self, i: usize) -> Point {
        self.vertices[i]
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn normal(&self, t: usize) -> Point {
        self.normals[t]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        (a + b + c) / 3.0
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }

    pub fn mean_edge_length(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        ((b - a).norm() + (c - b).norm() + (a - c).norm()) / 3.0
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Signed enclosed volume; positive when normals point outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.map(|i| self.vertices[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Σ area·normal, which vanishes for a closed surface.
    pub fn area_weighted_normal_sum(&self) -> Point {
        self.normals
            .iter()
            .zip(&self.areas)
            .fold(Point::zeros(), |acc, (n, a)| acc + n * *a)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        bounding_box(&self.vertices)
    }

    /// Same surface with every triangle's winding reversed.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            normals: self.normals.iter().map(|n| -n).collect(),
            areas: self.areas.clone(),
        }
    }

    /// Triangles incident to each node.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                incident[v].push(t);
            }
        }
        incident
    }

    /// Area-weighted average of incident triangle normals, normalized.
    pub fn node_normals(&self) -> Vec<Point> {
        let mut acc = vec![Point::zeros(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                acc[v] += self.normals[t] * self.areas[t];
            }
        }
        acc.into_iter().map(|n| n.normalize()).collect()
    }

    /// ∫ ψ_a dΣ = one third of the incident triangle areas.
    pub fn lumped_areas(&self) -> Vec<f64> {
        let mut lumped = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                lumped[v] += self.areas[t] / 3.0;
            }
        }
        lumped
    }

    /// Evaluates a nodal field at barycentric coordinates of triangle `t`.
    pub fn interpolate<T>(&self, t: usize, bary: [f64; 3], nodal: &[T]) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let [i, j, k] = self.triangles[t];
        nodal[i] * bary[0] + nodal[j] * bary[1] + nodal[k] * bary[2]
    }

    /// Gradient of the linear interpolant of `nodal` (one scalar per node)
    /// restricted to triangle `t`; lies in the triangle's plane.
    pub fn surface_gradient(&self, t: usize, values: [f64; 3]) -> Point {
        let [a, b, c] = self.corners(t);
        let n = self.normals[t];
        let twice_area = 2.0 * self.areas[t];
        // ∇λ_i = n × (opposite edge) / 2A
        let g0 = n.cross(&(c - b)) / twice_area;
        let g1 = n.cross(&(a - c)) / twice_area;
        let g2 = n.cross(&(b - a)) / twice_area;
        g0 * values[0] + g1 * values[1] + g2 * values[2]
    }

    /// Number of distinct edges.
    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }
}

fn bounding_box(vertices: &[Point]) -> (Point, Point) {
    let mut lo = Point::repeat(f64::INFINITY);
    let mut hi = Point::repeat(f64::NEG_INFINITY);
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (lo, hi)
}

fn bounding_box_diagonal(vertices: &[Point]) -> f64 {
    let (lo, hi) = bounding_box(vertices);
    (hi - lo).norm()
}

/// Directed-edge bookkeeping: each undirected edge must appear exactly twice,
/// once in each direction.
fn check_closed_and_oriented(triangles: &[[usize; 3]]) -> Result<(), MeshError> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let key = (tri[e], tri[(e + 1) % 3]);
            if let Some(&other) = directed.get(&key) {
                return Err(MeshError::InconsistentWinding {
                    first: other,
                    second: t,
                });
            }
            directed.insert(key, t);
        }
    }
    let mut undirected: HashMap<(usize, usize), usize> = HashMap::new();
    for &(a, b) in directed.keys() {
        *undirected.entry((a.min(b), a.max(b))).or_default() += 1;
    }
    for (&(a, b), &count) in &undirected {
        if count != 2 {
            return Err(MeshError::NonManifoldEdge { a, b, count });
        }
    }
    Ok(())
}

/// Reorients triangles by breadth-first propagation so that neighbours agree.
/// The orientation of each connected component follows its first triangle;
/// components are then flipped so that enclosed volume is positive.
pub fn repair_orientation(
    vertices: &[Point],
    triangles: &mut [[usize; 3]],
) -> Result<usize, MeshError> {
    let mut edge_map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            edge_map.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    for (&(a, b), ts) in &edge_map {
        if ts.len() != 2 {
            return Err(MeshError::NonManifoldEdge {
                a,
                b,
                count: ts.len(),
            });
        }
    }

    let has_directed = |tri: &[usize; 3], a: usize, b: usize| {
        (0..3).any(|e| tri[e] == a && tri[(e + 1) % 3] == b)
    };

    let mut visited = vec![false; triangles.len()];
    let mut flips = 0;
    for seed in 0..triangles.len() {
        if visited[seed] {
            continue;
        }
        let mut component = Vec::new();
        visited[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(t) = queue.pop_front() {
            component.push(t);
            let tri = triangles[t];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let neighbours = &edge_map[&(a.min(b), a.max(b))];
                let other = if neighbours[0] == t {
                    neighbours[1]
                } else {
                    neighbours[0]
                };
                if visited[other] {
                    // a consistent neighbour traverses the edge as b -> a
                    if has_directed(&triangles[other], a, b) {
                        return Err(MeshError::NonOrientable);
                    }
                    continue;
                }
                if has_directed(&triangles[other], a, b) {
                    let [x, y, z] = triangles[other];
                    triangles[other] = [x, z, y];
                    flips += 1;
                }
                visited[other] = true;
                queue.push_back(other);
            }
        }
        let volume: f64 = component
            .iter()
            .map(|&t| {
                let [a, b, c] = triangles[t].map(|i| vertices[i]);
                a.dot(&b.cross(&c))
            })
            .sum();
        if volume < 0.0 {
            for &t in &component {
                let [x, y, z] = triangles[t];
                triangles[t] = [x, z, y];
            }
            flips += component.len();
        }
    }
    Ok(flips)
}

/// Icosahedron refined `subdivisions` times by edge midpoints, with every new
/// vertex projected back onto the sphere.
pub fn make_icosphere(subdivisions: u32, radius: f64) -> Result<SurfaceMesh, MeshError> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(MeshError::TooFine {
            subdivisions,
            max: MAX_SUBDIVISIONS,
        });
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::InvalidRadius(radius));
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point::new(x, y, z).normalize() * radius)
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut refined = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (vertices[a] + vertices[b]).normalize() * radius;
                vertices.push(m);
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            refined.push([a, ab, ca]);
            refined.push([b, bc, ab]);
            refined.push([c, ca, bc]);
            refined.push([ab, bc, ca]);
        }
        triangles = refined;
    }
    SurfaceMesh::new(vertices, triangles)
}

/// Options for [`load_mesh_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reorient faces by breadth-first propagation instead of rejecting
    /// inconsistent winding.
    pub repair_orientation: bool,
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<SurfaceMesh, MeshError> {
    load_mesh_with(path, format, LoadOptions::default())
}

pub fn load_mesh_with(
    path: &Path,
    format: MeshFormat,
    options: LoadOptions,
) -> Result<SurfaceMesh, MeshError> {
    let text = fs::read_to_string(path).map_err(|e| MeshError::Io(e.to_string()))?;
    let (vertices, mut triangles) = match format {
        MeshFormat::Off => parse_off(&text)?,
        MeshFormat::Obj => parse_obj(&text)?,
    };
    if options.repair_orientation {
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index: v,
                        count: vertices.len(),
                    });
                }
            }
        }
        repair_orientation(&vertices, &mut triangles)?;
    }
    SurfaceMesh::new(vertices, triangles)
}

pub fn save_mesh(mesh: &SurfaceMesh, path: &Path, format: MeshFormat) -> Result<(), MeshError> {
    let mut out = String::new();
    match format {
        MeshFormat::Off => {
            out.push_str("OFF\n");
            let _ = writeln!(out, "{} {} 0", mesh.node_count(), mesh.element_count());
            for v in mesh.vertices() {
                let _ = writeln!(out, "{:e} {:e} {:e}", v.x, v.y, v.z);
            }
            for [a, b, c] in mesh.triangles() {
                let _ = writeln!(out, "3 {a} {b} {c}");
            }
        }
        MeshFormat::Obj => {
            for v in mesh.vertices() {
                let _ = writeln!(out, "v {:e} {:e} {:e}", v.x, v.y, v.z);
            }
            for [a, b, c] in mesh.triangles() {
                let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
            }
        }
    }
    fs::write(path, out).map_err(|e| MeshError::Io(e.to_string()))
}

fn parse_error(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(token: &str, line: usize) -> Result<f64, MeshError> {
    token
        .parse::<f64>()
        .map_err(|_| parse_error(line, format!("invalid number `{token}`")))
}

fn parse_usize(token: &str, line: usize) -> Result<usize, MeshError> {
    token
        .parse::<usize>()
        .map_err(|_| parse_error(line, format!("invalid index `{token}`")))
}

type RawMesh = (Vec<Point>, Vec<[usize; 3]>);

fn parse_off(text: &str) -> Result<RawMesh, MeshError> {
    // (line number, tokens) with comments and blank lines removed
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then(|| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
    });

    let (line, mut header) = lines.next().ok_or_else(|| parse_error(1, "empty file"))?;
    if header.first().copied() != Some("OFF") {
        return Err(parse_error(line, "missing OFF header"));
    }
    header.remove(0);
    let (line, counts) = if header.is_empty() {
        lines
            .next()
            .ok_or_else(|| parse_error(line, "missing element counts"))?
    } else {
        (line, header)
    };
    if counts.len() < 2 {
        return Err(parse_error(line, "expected vertex and face counts"));
    }
    let nv = parse_usize(counts[0], line)?;
    let nf = parse_usize(counts[1], line)?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, tokens) = lines
            .next()
            .ok_or_else(|| parse_error(line, "unexpected end of file in vertex list"))?;
        if tokens.len() < 3 {
            return Err(parse_error(line, "vertex needs three coordinates"));
        }
        vertices.push(Point::new(
            parse_f64(tokens[0], line)?,
            parse_f64(tokens[1], line)?,
            parse_f64(tokens[2], line)?,
        ));
    }
    let mut triangles = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, tokens) = lines
            .next()
            .ok_or_else(|| parse_error(line, "unexpected end of file in face list"))?;
        let n = parse_usize(tokens[0], line)?;
        if n != 3 {
            return Err(parse_error(line, format!("face has {n} vertices; only triangles are supported")));
        }
        if tokens.len() < 4 {
            return Err(parse_error(line, "face lists fewer than 3 indices"));
        }
        let mut tri = [0; 3];
        for (slot, token) in tri.iter_mut().zip(&tokens[1..4]) {
            *slot = parse_usize(token, line)?;
            if *slot >= nv {
                return Err(parse_error(line, format!("vertex index {} out of range", slot)));
            }
        }
        triangles.push(tri);
    }
    Ok((vertices, triangles))
}

fn parse_obj(text: &str) -> Result<RawMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces: Vec<(usize, Vec<i64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = l.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 {
                    return Err(parse_error(line, "vertex needs three coordinates"));
                }
                vertices.push(Point::new(
                    parse_f64(coords[0], line)?,
                    parse_f64(coords[1], line)?,
                    parse_f64(coords[2], line)?,
                ));
            }
            Some("f") => {
                let idx = tokens
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        head.parse::<i64>()
                            .map_err(|_| parse_error(line, format!("invalid face index `{t}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() != 3 {
                    return Err(parse_error(
                        line,
                        format!("face has {} vertices; only triangles are supported", idx.len()),
                    ));
                }
                faces.push((line, idx));
            }
            _ => {}
        }
    }
    let nv = vertices.len() as i64;
    let triangles = faces
        .into_iter()
        .map(|(line, idx)| {
            let mut tri = [0usize; 3];
            for (slot, &k) in tri.iter_mut().zip(&idx) {
                let resolved = if k > 0 { k - 1 } else { nv + k };
                if k == 0 || resolved < 0 || resolved >= nv {
                    return Err(parse_error(line, format!("vertex index {k} out of range")));
                }
                *slot = resolved as usize;
            }
            Ok(tri)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((vertices, triangles))
}

/// Consistent mass matrix M_ab = ∫ ψ_a ψ_b dΣ in compressed-column form.
pub fn mass_matrix(mesh: &SurfaceMesh) -> CscMatrix<f64> {
    let n = mesh.node_count();
    let mut coo = CooMatrix::new(n, n);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        for (i, &a) in tri.iter().enumerate() {
            for (j, &b) in tri.iter().enumerate() {
                let value = if i == j { area / 6.0 } else { area / 12.0 };
                coo.push(a, b, value);
            }
        }
    }
    CscMatrix::from(&coo)
}

/// Root-mean-square nodal error per component: [(1/N) Σ_k ε_k²]^{1/2}.
pub fn mean_square_error(computed: &[Point], exact: &[Point]) -> Result<[f64; 3], MeshError> {
    if computed.len() != exact.len() {
        return Err(MeshError::LengthMismatch {
            left: computed.len(),
            right: exact.len(),
        });
    }
    if computed.is_empty() {
        return Ok([0.0; 3]);
    }
    let mut sums = [0.0; 3];
    for (c, e) in computed.iter().zip(exact) {
        for (k, s) in sums.iter_mut().enumerate() {
            *s += (c[k] - e[k]).powi(2);
        }
    }
    let n = computed.len() as f64;
    Ok(sums.map(|s| (s / n).sqrt()))
}

/// Same metric for a scalar nodal field.
pub fn mean_square_error_scalar(computed: &[f64], exact: &[f64]) -> Result<f64, MeshError> {
    if computed.len() != exact.len() {
        return Err(MeshError::LengthMismatch {
            left: computed.len(),
            right: exact.len(),
        });
    }
    if computed.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = computed.iter().zip(exact).map(|(c, e)| (c - e).powi(2)).sum();
    Ok((sum / computed.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn icosahedron_counts() {
        let m = make_icosphere(0, 1.0).unwrap();
        assert_eq!(m.element_count(), 20);
        assert_eq!(m.node_count(), 12);
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn subdivision_counts_and_radius() {
        let m = make_icosphere(2, 1.0).unwrap();
        assert_eq!(m.element_count(), 320);
        assert_eq!(m.node_count(), 162);
        for v in m.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        assert!(m.signed_volume() > 0.0);
    }

    #[test]
    fn icosphere_area_close_to_sphere() {
        let m = make_icosphere(3, 1.0).unwrap();
        let rel = (m.total_area() - 4.0 * PI).abs() / (4.0 * PI);
        assert!(rel < 5e-3, "relative area defect {rel}");
    }

    #[test]
    fn refinement_keeps_old_vertices() {
        let coarse = make_icosphere(1, 2.0).unwrap();
        let fine = make_icosphere(2, 2.0).unwrap();
        assert_eq!(fine.element_count(), 4 * coarse.element_count());
        for (a, b) in coarse.vertices().iter().zip(fine.vertices()) {
            assert_eq!(a, b);
        }
        for v in fine.vertices() {
            assert!((v.norm() - 2.0).abs() < 1e-12 * 2.0);
        }
    }

    #[test]
    fn closed_surface_normal_identity() {
        for s in 0..4 {
            let m = make_icosphere(s, 1.0).unwrap();
            let sum = m.area_weighted_normal_sum();
            assert!(sum.norm() < 1e-10 * m.total_area(), "{sum:?}");
        }
    }

    #[test]
    fn too_fine_is_refused() {
        assert!(matches!(make_icosphere(7, 1.0), Err(MeshError::TooFine { .. })));
    }

    #[test]
    fn open_surface_rejected() {
        let m = make_icosphere(0, 1.0).unwrap();
        let mut tris = m.triangles().to_vec();
        tris.pop();
        let err = SurfaceMesh::new(m.vertices().to_vec(), tris).unwrap_err();
        assert!(matches!(err, MeshError::NonManifoldEdge { count: 1, .. }));
    }

    #[test]
    fn reversed_face_rejected_then_repaired() {
        let m = make_icosphere(1, 1.0).unwrap();
        let mut tris = m.triangles().to_vec();
        let [a, b, c] = tris[7];
        tris[7] = [a, c, b];
        let err = SurfaceMesh::new(m.vertices().to_vec(), tris.clone()).unwrap_err();
        assert!(matches!(err, MeshError::InconsistentWinding { .. }));
        let flips = repair_orientation(m.vertices(), &mut tris).unwrap();
        assert_eq!(flips, 1);
        assert_eq!(tris, m.triangles());
    }

    #[test]
    fn repair_turns_inside_out_mesh_outward() {
        let m = make_icosphere(1, 1.0).unwrap().flipped();
        let mut tris = m.triangles().to_vec();
        repair_orientation(m.vertices(), &mut tris).unwrap();
        let fixed = SurfaceMesh::new(m.vertices().to_vec(), tris).unwrap();
        assert!(fixed.signed_volume() > 0.0);
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let m = make_icosphere(0, 1.0).unwrap();
        let mut verts = m.vertices().to_vec();
        // collapse vertex 1 onto vertex 0
        verts[1] = verts[0];
        let err = SurfaceMesh::new(verts, m.triangles().to_vec()).unwrap_err();
        assert!(matches!(err, MeshError::Degenerate { .. }));
    }

    #[test]
    fn mass_matrix_single_triangle_entries() {
        // one face of a tetrahedron: check the per-triangle stencil directly
        let verts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, 0.0, 1.0),
        ];
        let tris = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        let m = SurfaceMesh::new(verts, tris).unwrap();
        let mm = mass_matrix(&m);
        let dense = nalgebra::DMatrix::from(&mm);
        // node 0 is shared by three right triangles of area 1/2
        let a = 0.5;
        assert!((dense[(0, 0)] - 3.0 * a / 6.0).abs() < 1e-15);
        // edge 0-1 is shared by two faces of area 1/2
        assert!((dense[(0, 1)] - 2.0 * a / 12.0).abs() < 1e-15);
        assert!((dense.sum() - m.total_area()).abs() < 1e-14);
    }

    #[test]
    fn mass_matrix_row_sums_and_symmetry() {
        let m = make_icosphere(2, 1.0).unwrap();
        let dense = nalgebra::DMatrix::from(&mass_matrix(&m));
        let lumped = m.lumped_areas();
        for a in 0..m.node_count() {
            let row: f64 = dense.row(a).sum();
            assert!((row - lumped[a]).abs() <= 1e-12 * lumped[a]);
        }
        assert!((&dense - dense.transpose()).amax() == 0.0);
        assert!((dense.sum() - m.total_area()).abs() < 1e-12);
        assert!(dense.clone().cholesky().is_some());
    }

    #[test]
    fn mean_square_error_examples() {
        let a = vec![Point::new(1.0, 2.0, 3.0); 4];
        assert_eq!(mean_square_error(&a, &a).unwrap(), [0.0; 3]);
        let shifted: Vec<Point> = a.iter().map(|p| p + Point::new(0.5, -0.5, 2.0)).collect();
        let e = mean_square_error(&shifted, &a).unwrap();
        assert!((e[0] - 0.5).abs() < 1e-15 && (e[1] - 0.5).abs() < 1e-15 && (e[2] - 2.0).abs() < 1e-15);
        let e = mean_square_error_scalar(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!((e - (12.5f64).sqrt()).abs() < 1e-15);
        assert!(mean_square_error(&a, &a[..3]).is_err());
    }

    #[test]
    fn surface_gradient_of_linear_field() {
        let m = make_icosphere(1, 1.0).unwrap();
        let g = Point::new(0.3, -1.2, 0.7);
        for t in 0..m.element_count() {
            let vals = m.corners(t).map(|p| g.dot(&p));
            let sg = m.surface_gradient(t, vals);
            let n = m.normal(t);
            let tangential = g - n * n.dot(&g);
            assert!((sg - tangential).norm() < 1e-12);
        }
    }
}
