//! Finite-difference checks of the kernel identities and end-to-end drivers
//! for the sphere test problems, with reports in CSV and JSON.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, GridError, KernelError, SolveError};
use crate::galerkin::{
    distance_to_mesh, fluid_mesh, solve_mixed, AssemblySettings, BoundaryOperators, BoundarySolution, DomainKind,
    MixedBC, MIN_BOUNDARY_DISTANCE,
};
use crate::gradient::{
    limit_difference_rhs_with, recover_gradients, solve_gradients, volume_gradient_at, GradientField,
    GradientSettings,
};
use crate::harmonic::{HarmonicExtension, LaplaceOperators};
use crate::kernels::{self, Mat3, Tensor3, Vec3};
use crate::mesh::{mean_square_error, Point, SurfaceMesh};
use crate::volumegrid::{
    classify_vertices, h_boundary_rhs_many, remainder_fields, remainder_volume_rhs_many, CoveringGrid, ForcePair,
    GridField, MomentSettings,
};

const AXES: [&str; 3] = ["x", "y", "z"];

/// One named check: passes iff `residual ≤ tolerance` (NaN fails).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            passed: residual <= tolerance,
        }
    }
}

/// Config echo written at the top of every report.
pub type Provenance = BTreeMap<String, String>;

fn base_provenance() -> Provenance {
    let mut p = Provenance::new();
    p.insert("version".into(), format!("nhstokes {}", env!("CARGO_PKG_VERSION")));
    p
}

fn write_header(out: &mut String, provenance: &Provenance) {
    for (k, v) in provenance {
        out.push_str(&format!("# {k} = {v}\n"));
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), GridError> {
    std::fs::write(path, text).map_err(|e| GridError::Io(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub provenance: Provenance,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Concatenates checks; provenance keys of `other` are prefixed.
    pub fn merge(&mut self, prefix: &str, other: VerificationReport) {
        for (k, v) in other.provenance {
            if k != "version" {
                self.provenance.insert(format!("{prefix}.{k}"), v);
            }
        }
        self.checks.extend(other.checks);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        write_header(&mut out, &self.provenance);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "residual", "tolerance", "pass"]).unwrap();
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                format!("{:e}", c.residual),
                format!("{:e}", c.tolerance),
                c.passed.to_string(),
            ])
            .unwrap();
        }
        out.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), GridError> {
        let text = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => self.to_csv(),
            _ => self.to_json(),
        };
        write_text(path, &text)
    }
}

// ---------------------------------------------------------------------------
// Kernel identities

/// Settings for the finite-difference identity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppendixSettings {
    pub samples: usize,
    pub seed: u64,
    pub mus: Vec<f64>,
    /// FD step as a fraction of |Q − P|.
    pub fd_step: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Relative tolerance for Laplacian and derivative checks.
    pub tol: f64,
    /// Divergence tolerance relative to ‖U‖.
    pub div_tol: f64,
    /// Multiplies H before checking. Anything but 1 must fail.
    #[serde(default = "one")]
    pub h_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for AppendixSettings {
    fn default() -> Self {
        Self {
            samples: 100,
            seed: 2024,
            mus: vec![0.5, 1.0, 2.0],
            fd_step: 1e-4,
            r_min: 0.1,
            r_max: 10.0,
            tol: 1e-5,
            div_tol: 1e-6,
            h_scale: 1.0,
        }
    }
}

impl AppendixSettings {
    fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::Solve(SolveError::InvalidParameter(msg.into())));
        if self.samples == 0 {
            return bad("at least one sample is needed");
        }
        if self.mus.is_empty() || self.mus.iter().any(|m| !(*m > 0.0)) {
            return bad("viscosities must be positive");
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.1) {
            return bad("fd step factor must lie in (0, 0.1)");
        }
        if !(self.r_min > 0.0 && self.r_max > self.r_min) {
            return bad("distance range must satisfy 0 < r_min < r_max");
        }
        Ok(())
    }
}

fn unit(k: usize) -> Vec3 {
    Vec3::from_fn(|i, _| if i == k { 1.0 } else { 0.0 })
}

fn random_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn max_abs(m: &Mat3) -> f64 {
    m.abs().max()
}

/// Central-difference Laplacian of a matrix field.
fn fd_laplacian(f: &impl Fn(&Vec3) -> Mat3, x: &Vec3, h: f64) -> Mat3 {
    let centre = f(x) * 2.0;
    (0..3).fold(Mat3::zeros(), |acc, m| {
        let e = unit(m) * h;
        acc + (f(&(x + e)) + f(&(x - e)) - centre) / (h * h)
    })
}

/// Fourth-order central first derivative along `dir`.
fn fd_derivative<T>(f: &impl Fn(&Vec3) -> T, x: &Vec3, dir: &Vec3, h: f64) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let d = dir * h;
    (f(&(x - d * 2.0)) - f(&(x + d * 2.0)) + (f(&(x + d)) - f(&(x - d))) * 8.0) * (1.0 / (12.0 * h))
}

struct Maxima(BTreeMap<&'static str, f64>);

impl Maxima {
    fn new() -> Self {
        Self(BTreeMap::new())
    }

    fn record(&mut self, name: &'static str, value: f64) {
        let slot = self.0.entry(name).or_insert(0.0);
        // NaN must stick
        if value.is_nan() || *slot < value {
            *slot = value;
        }
    }
}

/// FD checks of the 3D kernels at seeded random pairs: `μ∇²H = U`, `∇·H = 0`,
/// every P-derivative kernel, `∂H/∂n`, and the stresses of the U and H flows.
pub fn appendix_check_3d(settings: &AppendixSettings) -> Result<VerificationReport, Error> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut worst = Maxima::new();
    let scale = settings.h_scale;
    for s in 0..settings.samples {
        let mu = settings.mus[s % settings.mus.len()];
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let r = log_uniform(&mut rng, settings.r_min, settings.r_max);
        let q = p + random_direction(&mut rng) * r;
        let n = random_direction(&mut rng);
        let h = settings.fd_step * r;

        let u = kernels::stokeslet(&q, &p, mu)?;
        let u_norm = max_abs(&u);
        let h_of_q = |x: &Vec3| kernels::hfun(x, &p, mu).map(|m| m * scale).unwrap_or(Mat3::repeat(f64::NAN));
        let lap = fd_laplacian(&h_of_q, &q, h);
        worst.record("laplacian_h", max_abs(&(lap * mu - u)) / u_norm);

        let grads: Vec<Mat3> = (0..3).map(|m| fd_derivative(&h_of_q, &q, &unit(m), h)).collect();
        let div = (0..3)
            .map(|j| (0..3).map(|k| grads[k][(k, j)]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        worst.record("divergence_h", div / u_norm);

        for m in 0..3 {
            let e = unit(m);
            let exact = kernels::stokeslet_deriv(&q, &p, mu, m)?;
            let fd = fd_derivative(&|x: &Vec3| kernels::stokeslet(&q, x, mu).unwrap(), &p, &e, h);
            worst.record("stokeslet_deriv", max_abs(&(exact - fd)) / max_abs(&exact));

            let exact = kernels::stresslet_deriv(&q, &p, m)?;
            let fd = fd_derivative(&|x: &Vec3| kernels::stresslet(&q, x).unwrap(), &p, &e, h);
            worst.record("stresslet_deriv", (exact - fd).max_abs() / exact.max_abs());

            let exact = kernels::hfun_deriv(&q, &p, mu, m)? * scale;
            let fd = fd_derivative(&|x: &Vec3| kernels::hfun(&q, x, mu).unwrap(), &p, &e, h);
            worst.record("hfun_deriv", max_abs(&(exact - fd)) / max_abs(&exact));
        }

        let exact = kernels::hfun_normal_derivative(&q, &p, &n, mu)?;
        let fd = fd_derivative(&|x: &Vec3| kernels::hfun(x, &p, mu).unwrap(), &q, &n, h);
        worst.record("hfun_normal_derivative", max_abs(&(exact - fd)) / max_abs(&exact).max(1e-300));

        // σ_ijk = −p_k δ_ij + μ(∂_j U_ik + ∂_i U_jk), Q-derivatives
        let du: Vec<Mat3> = (0..3)
            .map(|l| fd_derivative(&|x: &Vec3| kernels::stokeslet(x, &p, mu).unwrap(), &q, &unit(l), h))
            .collect();
        let pressure: Vec<f64> = (0..3).map(|k| kernels::stokeslet_pressure(&q, &p, k)).collect::<Result<_, _>>()?;
        let t = kernels::stresslet(&q, &p)?;
        let built = Tensor3::from_fn(|i, j, k| {
            let d = if i == j { 1.0 } else { 0.0 };
            -pressure[k] * d + mu * (du[j][(i, k)] + du[i][(j, k)])
        });
        worst.record("stresslet_stress", (t - built).max_abs() / t.max_abs());

        // σ_kjl = μ(∂_l H_kj + ∂_k H_lj) for the zero-pressure H flows
        let sigma = kernels::h_stress(&q, &p, mu)?;
        let built = Tensor3::from_fn(|k, j, l| mu * (grads[l][(k, j)] + grads[k][(l, j)]));
        worst.record("h_stress", (sigma - built).max_abs() / sigma.max_abs());
    }

    // hand value at R = (1, 0, 0), μ = 1
    let q = Vec3::new(1.0, 0.0, 0.0);
    let p = Vec3::zeros();
    let h_of_q = |x: &Vec3| kernels::hfun(x, &p, 1.0).map(|m| m * scale).unwrap_or(Mat3::repeat(f64::NAN));
    let lap = fd_laplacian(&h_of_q, &q, settings.fd_step);
    let spot = (lap[(0, 0)] - 1.0 / (4.0 * PI)).abs() * 4.0 * PI;

    let mut checks: Vec<CheckResult> = worst
        .0
        .into_iter()
        .map(|(name, v)| {
            let tol = if name == "divergence_h" { settings.div_tol } else { settings.tol };
            CheckResult::new(format!("3d.{name}"), v, tol)
        })
        .collect();
    checks.push(CheckResult::new("3d.laplacian_h_spot", spot, settings.tol));

    let mut provenance = base_provenance();
    provenance.insert("samples".into(), settings.samples.to_string());
    provenance.insert("seed".into(), settings.seed.to_string());
    provenance.insert("mu".into(), format!("{:?}", settings.mus));
    provenance.insert("fd_step".into(), format!("{:e}", settings.fd_step));
    provenance.insert("r_range".into(), format!("({}, {})", settings.r_min, settings.r_max));
    Ok(VerificationReport { provenance, checks })
}

/// FD checks of the 2D pair: `∇²H̃ = Ũ`, `∇·H̃ = 0`, and the hand values at
/// R = (1, 0). Viscosities in `settings` are ignored.
pub fn appendix_check_2d(settings: &AppendixSettings) -> Result<VerificationReport, Error> {
    settings.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x2d);
    let mut worst = Maxima::new();
    let scale = settings.h_scale;
    let hfun = |q: &Vector2<f64>, p: &Vector2<f64>| {
        kernels::hfun_2d(q, p).map(|m| m * scale).unwrap_or(Matrix2::repeat(f64::NAN))
    };
    for _ in 0..settings.samples {
        let p = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let r = log_uniform(&mut rng, settings.r_min, settings.r_max);
        let theta = rng.random_range(0.0..2.0 * PI);
        let q = p + Vector2::new(theta.cos(), theta.sin()) * r;
        let h = settings.fd_step * r;
        let u = kernels::stokeslet_2d(&q, &p)?;
        let e = [Vector2::new(h, 0.0), Vector2::new(0.0, h)];
        let centre = hfun(&q, &p) * 2.0;
        let lap = e
            .iter()
            .fold(Matrix2::zeros(), |acc, d| acc + (hfun(&(q + d), &p) + hfun(&(q - d), &p) - centre) / (h * h));
        let u_norm = u.abs().max();
        worst.record("laplacian_h", (lap - u).abs().max() / u_norm);

        let grads: Vec<Matrix2<f64>> = e
            .iter()
            .map(|d| {
                (hfun(&(q - d * 2.0), &p) - hfun(&(q + d * 2.0), &p) + (hfun(&(q + d), &p) - hfun(&(q - d), &p)) * 8.0)
                    / (12.0 * h)
            })
            .collect();
        let div = (0..2)
            .map(|j| (0..2).map(|k| grads[k][(k, j)]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        worst.record("divergence_h", div);
    }
    let q = Vector2::new(1.0, 0.0);
    let p = Vector2::zeros();
    let spot = (hfun(&q, &p)[(0, 0)] - 0.21875).abs() + (kernels::stokeslet_2d(&q, &p)?[(0, 0)] - 1.0).abs();

    let mut checks: Vec<CheckResult> = worst
        .0
        .into_iter()
        .map(|(name, v)| {
            let tol = if name == "divergence_h" { settings.div_tol } else { settings.tol };
            CheckResult::new(format!("2d.{name}"), v, tol)
        })
        .collect();
    checks.push(CheckResult::new("2d.spot_values", spot, 1e-12));

    let mut provenance = base_provenance();
    provenance.insert("samples".into(), settings.samples.to_string());
    provenance.insert("seed".into(), settings.seed.to_string());
    provenance.insert("fd_step".into(), format!("{:e}", settings.fd_step));
    Ok(VerificationReport { provenance, checks })
}

// ---------------------------------------------------------------------------
// Reference values

/// Published errors for one source: `[coarse, refined]`, each `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub source: [f64; 3],
    pub velocity: [[f64; 3]; 2],
    pub traction: [[f64; 3]; 2],
}

/// Element counts of the two published sphere meshes.
pub const REFERENCE_ELEMENTS: [usize; 2] = [376, 1504];

/// Homogeneous interior problems.
pub const TABLE1: [ReferenceRow; 2] = [
    ReferenceRow {
        source: [-2.0, 0.0, 0.0],
        velocity: [[1.094e-4, 5.670e-5, 3.634e-5], [3.796e-5, 1.409e-5, 7.812e-6]],
        traction: [[5.520e-4, 2.042e-4, 2.347e-4], [2.214e-4, 7.840e-5, 9.376e-5]],
    },
    ReferenceRow {
        source: [1.5, 0.0, 0.0],
        velocity: [[2.487e-4, 8.597e-5, 1.320e-4], [6.050e-5, 1.985e-5, 2.009e-5]],
        traction: [[1.515e-3, 1.327e-3, 1.136e-3], [4.502e-4, 2.751e-4, 2.504e-4]],
    },
];

/// Homogeneous exterior problems.
pub const TABLE2: [ReferenceRow; 2] = [
    ReferenceRow {
        source: [0.0, 0.7, 0.0],
        velocity: [[1.964e-3, 1.749e-3, 3.412e-3], [4.472e-5, 3.674e-5, 4.184e-5]],
        traction: [[1.468e-2, 1.530e-2, 1.152e-2], [7.571e-4, 6.693e-4, 5.617e-4]],
    },
    ReferenceRow {
        source: [0.0, 0.0, 0.8],
        velocity: [[8.042e-4, 7.977e-4, 1.458e-3], [2.281e-5, 1.991e-5, 4.091e-5]],
        traction: [[4.614e-2, 1.222e-2, 2.792e-2], [5.633e-3, 2.772e-3, 5.118e-3]],
    },
];

/// Nonhomogeneous problems on a 40³ grid over [−1.1, 1.1]³.
pub const TABLE3: [ReferenceRow; 4] = [
    ReferenceRow {
        source: [2.0, 0.0, 0.0],
        velocity: [[2.815e-4, 3.495e-5, 8.432e-5], [7.382e-5, 8.187e-6, 1.908e-5]],
        traction: [[6.332e-4, 2.033e-4, 3.076e-4], [2.199e-4, 7.934e-5, 1.016e-4]],
    },
    ReferenceRow {
        source: [1.5, 0.0, 0.0],
        velocity: [[3.314e-4, 3.644e-5, 1.039e-4], [8.111e-5, 8.700e-6, 2.392e-5]],
        traction: [[6.721e-4, 2.400e-4, 3.604e-4], [2.165e-4, 8.181e-5, 1.512e-4]],
    },
    ReferenceRow {
        source: [0.0, 1.3, 0.0],
        velocity: [[2.579e-4, 2.300e-5, 5.769e-4], [6.686e-5, 7.441e-6, 1.336e-5]],
        traction: [[5.881e-4, 2.913e-4, 2.790e-4], [2.010e-4, 9.461e-5, 8.569e-5]],
    },
    ReferenceRow {
        source: [0.0, 0.0, 1.2],
        velocity: [[1.643e-4, 1.322e-5, 5.353e-5], [5.299e-5, 3.347e-6, 1.315e-5]],
        traction: [[6.246e-4, 1.984e-4, 3.690e-4], [2.043e-4, 7.412e-5, 1.100e-4]],
    },
];

/// Published gradient errors, `[coarse, refined][m][k]` for `u_k,m`.
pub const TABLE4: [[[[f64; 3]; 3]; 2]; 3] = [
    [
        [[1.002e-4, 6.311e-5, 6.833e-5], [5.547e-5, 5.718e-5, 3.893e-5], [6.335e-5, 4.120e-5, 5.443e-5]],
        [[1.817e-5, 1.199e-5, 1.400e-5], [9.240e-6, 1.116e-5, 7.820e-6], [9.940e-6, 8.053e-6, 1.168e-5]],
    ],
    [
        [[4.428e-4, 6.620e-4, 3.751e-4], [1.046e-3, 5.296e-4, 4.392e-4], [5.526e-4, 4.901e-4, 4.443e-4]],
        [[3.957e-5, 5.462e-5, 3.926e-5], [4.657e-5, 3.758e-5, 3.472e-5], [2.818e-5, 3.620e-5, 2.649e-5]],
    ],
    [
        [[1.135e-4, 6.056e-5, 6.881e-5], [4.324e-5, 5.383e-5, 3.878e-5], [5.934e-5, 3.758e-5, 5.362e-5]],
        [[2.187e-5, 1.251e-5, 1.435e-5], [9.990e-6, 1.094e-5, 8.033e-6], [1.198e-5, 7.676e-6, 1.114e-5]],
    ],
];

/// Index of the published mesh whose element count is within a factor 1.4
/// of `elements`, if any.
pub fn reference_level(elements: usize) -> Option<usize> {
    REFERENCE_ELEMENTS.iter().position(|&e| {
        let ratio = elements as f64 / e as f64;
        (1.0 / 1.4..=1.4).contains(&ratio)
    })
}

fn find_row<'a>(table: &'a [ReferenceRow], source: &Vec3) -> Option<&'a ReferenceRow> {
    table
        .iter()
        .find(|r| (Vec3::from(r.source) - source).norm() < 1e-12)
}

// ---------------------------------------------------------------------------
// Error tables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub field: String,
    pub component: String,
    pub error: f64,
    pub reference: Option<f64>,
    pub ratio: Option<f64>,
}

/// Nodal RMS errors of one run, with published values where comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub name: String,
    pub provenance: Provenance,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    fn new(name: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            provenance,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, field: &str, component: &str, error: f64, reference: Option<f64>) {
        self.rows.push(ErrorRow {
            field: field.into(),
            component: component.into(),
            error,
            reference,
            ratio: reference.map(|r| error / r),
        });
    }

    fn push_field(&mut self, field: &str, errors: [f64; 3], reference: Option<[f64; 3]>) {
        for c in 0..3 {
            self.push(field, AXES[c], errors[c], reference.map(|r| r[c]));
        }
    }

    pub fn get(&self, field: &str, component: &str) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.field == field && r.component == component)
    }

    /// Errors of one field in row order.
    pub fn errors(&self, field: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.field == field).map(|r| r.error).collect()
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.ratio).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut provenance = self.provenance.clone();
        provenance.insert("table".into(), self.name.clone());
        write_header(&mut out, &provenance);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["field", "component", "error", "reference", "ratio"]).unwrap();
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.field.clone(),
                r.component.clone(),
                format!("{:e}", r.error),
                opt(r.reference),
                opt(r.ratio),
            ])
            .unwrap();
        }
        out.push_str(&String::from_utf8(w.into_inner().unwrap()).unwrap());
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), GridError> {
        let text = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => self.to_json(),
            _ => self.to_csv(),
        };
        write_text(path, &text)
    }
}

// ---------------------------------------------------------------------------
// Drivers

/// Regular grid `cells³` over `[−half_width, half_width]³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: 1.1,
            cells: 40,
        }
    }
}

impl GridSpec {
    pub fn build(&self, mesh: &SurfaceMesh) -> Result<CoveringGrid, GridError> {
        let a = self.half_width;
        CoveringGrid::covering(mesh, Point::repeat(-a), Point::repeat(a), [self.cells; 3])
    }
}

/// Quadrature and sampling settings shared by all drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverSettings {
    pub assembly: AssemblySettings,
    pub moments: MomentSettings,
    pub gradient: GradientSettings,
    /// Seed for the inside/outside ray directions.
    pub seed: u64,
}

impl Default for DriverSettings {
    fn default() -> Self {
        Self {
            assembly: AssemblySettings::default(),
            moments: MomentSettings::default(),
            gradient: GradientSettings::default(),
            seed: 1,
        }
    }
}

fn run_provenance(mesh: &SurfaceMesh, mu: f64, settings: &DriverSettings) -> Provenance {
    let mut p = base_provenance();
    let pair = &settings.assembly.pair;
    p.insert("elements".into(), mesh.element_count().to_string());
    p.insert("nodes".into(), mesh.node_count().to_string());
    p.insert("mu".into(), mu.to_string());
    p.insert("singular_order".into(), pair.singular_order.to_string());
    p.insert(
        "pair_degrees".into(),
        format!("near {} regular {} far {}", pair.near_degree, pair.regular_degree, pair.far_degree),
    );
    p.insert("point_degree".into(), settings.assembly.point.degree.to_string());
    p.insert(
        "reference_mesh".into(),
        reference_level(mesh.element_count())
            .map(|l| REFERENCE_ELEMENTS[l].to_string())
            .unwrap_or_else(|| "none".into()),
    );
    p
}

fn format_point(x: &Vec3) -> String {
    format!("{},{},{}", x[0], x[1], x[2])
}

fn check_source(mesh: &SurfaceMesh, source: &Vec3) -> Result<(), Error> {
    let distance = distance_to_mesh(mesh, source);
    if !(distance >= MIN_BOUNDARY_DISTANCE) {
        return Err(SolveError::TooCloseToBoundary { distance }.into());
    }
    Ok(())
}

fn nan_on_error(v: Result<Vec3, KernelError>) -> Vec3 {
    v.unwrap_or(Vec3::repeat(f64::NAN))
}

fn point_source_bc(mesh: &SurfaceMesh, source: &Vec3, domain: DomainKind, mu: f64) -> Result<MixedBC, SolveError> {
    MixedBC::upper_velocity_lower_traction(
        mesh,
        domain,
        |x| nan_on_error(kernels::point_source_velocity(x, source, mu, 0)),
        |x, n| nan_on_error(kernels::point_source_traction(x, source, n, 0)),
    )
}

/// Mixed problem driven by Stokeslet column 1 of a point force at `source`,
/// on already assembled operators.
pub fn solve_point_source_on(operators: &Arc<BoundaryOperators>, source: &Vec3) -> Result<BoundarySolution, Error> {
    let mesh = fluid_mesh(operators.mesh(), operators.domain());
    check_source(&mesh, source)?;
    let bc = point_source_bc(&mesh, source, operators.domain(), operators.mu())?;
    Ok(solve_mixed(operators, &bc, None)?)
}

pub fn solve_point_source(
    mesh: &SurfaceMesh,
    source: &Vec3,
    domain: DomainKind,
    mu: f64,
    settings: &AssemblySettings,
) -> Result<BoundarySolution, Error> {
    check_source(mesh, source)?;
    let ops = Arc::new(BoundaryOperators::assemble(mesh, mu, domain, *settings)?);
    solve_point_source_on(&ops, source)
}

fn boundary_errors(
    solution: &BoundarySolution,
    velocity: impl Fn(&Point) -> Vec3,
    traction: impl Fn(&Point, &Vec3) -> Vec3,
) -> Result<([f64; 3], [f64; 3]), Error> {
    let mesh = solution.mesh();
    let normals = mesh.node_normals();
    let u: Vec<Vec3> = mesh.vertices().iter().map(velocity).collect();
    let t: Vec<Vec3> = mesh.vertices().iter().zip(&normals).map(|(x, n)| traction(x, n)).collect();
    Ok((
        mean_square_error(&solution.velocity, &u)?,
        mean_square_error(&solution.traction, &t)?,
    ))
}

/// Error table of a solved point-force problem.
pub fn homogeneous_table(solution: &BoundarySolution, source: &Vec3, settings: &DriverSettings) -> Result<ErrorTable, Error> {
    let mesh = solution.mesh();
    let domain = solution.operators().domain();
    let mu = solution.operators().mu();
    let (eu, et) = boundary_errors(
        solution,
        |x| nan_on_error(kernels::point_source_velocity(x, source, mu, 0)),
        |x, n| nan_on_error(kernels::point_source_traction(x, source, n, 0)),
    )?;
    let table = match domain {
        DomainKind::Interior => &TABLE1[..],
        DomainKind::Exterior => &TABLE2[..],
    };
    let level = reference_level(mesh.element_count());
    let row = find_row(table, source).filter(|_| mu == 1.0);
    let mut provenance = run_provenance(mesh, mu, settings);
    provenance.insert("source".into(), format_point(source));
    provenance.insert("domain".into(), domain.to_string());
    let mut out = ErrorTable::new(format!("homogeneous-{domain}"), provenance);
    out.push_field("u", eu, row.zip(level).map(|(r, l)| r.velocity[l]));
    out.push_field("tau", et, row.zip(level).map(|(r, l)| r.traction[l]));
    Ok(out)
}

/// Homogeneous mixed problem with point-force data; velocity on z ≥ 0,
/// traction below. Published values are attached for the tabulated sources
/// on meshes of comparable size.
pub fn run_homogeneous_test(
    mesh: &SurfaceMesh,
    source: &Vec3,
    domain: DomainKind,
    mu: f64,
    settings: &DriverSettings,
) -> Result<ErrorTable, Error> {
    let solution = solve_point_source(mesh, source, domain, mu, &settings.assembly)?;
    homogeneous_table(&solution, source, settings)
}

/// Solution of one nonhomogeneous problem with the pieces of its volume
/// term.
#[derive(Debug, Clone)]
pub struct NonhomogeneousRun {
    pub source: Vec3,
    pub grid: GridSpec,
    pub solution: BoundarySolution,
    pub extension: HarmonicExtension,
    pub field: GridField,
    /// Galerkin volume vector `b` used in the solve.
    pub volume_rhs: Vec<Vec3>,
}

/// Interior problems with body force F = Stokeslet column 1 at each source
/// and exact solution H column 1. Operators, grid classification and
/// moment quadrature are shared between sources.
pub fn solve_nonhomogeneous(
    mesh: &SurfaceMesh,
    grid: &GridSpec,
    sources: &[Vec3],
    mu: f64,
    settings: &DriverSettings,
) -> Result<Vec<NonhomogeneousRun>, Error> {
    for s in sources {
        check_source(mesh, s)?;
    }
    grid.build(mesh)?;
    let ops = Arc::new(BoundaryOperators::assemble(mesh, mu, DomainKind::Interior, settings.assembly)?);
    solve_nonhomogeneous_on(&ops, grid, sources, settings)
}

/// [`solve_nonhomogeneous`] on already assembled interior operators.
pub fn solve_nonhomogeneous_on(
    operators: &Arc<BoundaryOperators>,
    grid: &GridSpec,
    sources: &[Vec3],
    settings: &DriverSettings,
) -> Result<Vec<NonhomogeneousRun>, Error> {
    let mesh = operators.mesh();
    let mu = operators.mu();
    if operators.domain() != DomainKind::Interior {
        return Err(SolveError::InvalidParameter("body forces need an interior domain".into()).into());
    }
    for s in sources {
        check_source(mesh, s)?;
    }
    let covering = grid.build(mesh)?;
    let lap = LaplaceOperators::assemble(mesh, settings.assembly)?;
    let forces: Vec<Box<dyn Fn(&Point) -> Vec3 + Sync>> = sources
        .iter()
        .map(|&s| {
            Box::new(move |x: &Point| nan_on_error(kernels::point_source_velocity(x, &s, mu, 0)))
                as Box<dyn Fn(&Point) -> Vec3 + Sync>
        })
        .collect();
    let extensions = forces
        .iter()
        .map(|f| HarmonicExtension::from_field(&lap, f))
        .collect::<Result<Vec<_>, _>>()?;
    let inside = classify_vertices(&covering, mesh, settings.seed);
    let pairs: Vec<ForcePair> = forces.iter().zip(&extensions).map(|(f, e)| (f.as_ref(), e)).collect();
    let fields = remainder_fields(&covering, inside, &pairs)?;
    let field_refs: Vec<&GridField> = fields.iter().collect();
    let remainders = remainder_volume_rhs_many(mesh, &field_refs, mu, &settings.moments)?;
    let extension_refs: Vec<&HarmonicExtension> = extensions.iter().collect();
    let boundaries = h_boundary_rhs_many(&extension_refs, mu, &settings.assembly)?;
    let mut runs = Vec::with_capacity(sources.len());
    for ((((source, extension), field), remainder), boundary) in
        sources.iter().zip(extensions).zip(fields).zip(remainders).zip(boundaries)
    {
        let volume_rhs: Vec<Vec3> = boundary.iter().zip(&remainder).map(|(a, c)| a + c).collect();
        let bc = MixedBC::upper_velocity_lower_traction(
            mesh,
            DomainKind::Interior,
            |x| nan_on_error(kernels::h_velocity(x, source, mu, 0)),
            |x, n| nan_on_error(kernels::h_traction(x, source, n, mu, 0)),
        )?;
        let solution = solve_mixed(operators, &bc, Some(&volume_rhs))?;
        runs.push(NonhomogeneousRun {
            source: *source,
            grid: *grid,
            solution,
            extension,
            field,
            volume_rhs,
        });
    }
    Ok(runs)
}

fn grid_provenance(p: &mut Provenance, grid: &GridSpec) {
    p.insert(
        "grid".into(),
        format!("{0}^3 on [-{1}, {1}]^3", grid.cells, grid.half_width),
    );
}

/// Error table of a solved nonhomogeneous problem.
pub fn nonhomogeneous_table(run: &NonhomogeneousRun, settings: &DriverSettings) -> Result<ErrorTable, Error> {
    let mesh = run.solution.mesh();
    let mu = run.solution.operators().mu();
    let s = run.source;
    let (eu, et) = boundary_errors(
        &run.solution,
        |x| nan_on_error(kernels::h_velocity(x, &s, mu, 0)),
        |x, n| nan_on_error(kernels::h_traction(x, &s, n, mu, 0)),
    )?;
    let level = reference_level(mesh.element_count());
    let published = run.grid == GridSpec::default() && mu == 1.0;
    let row = find_row(&TABLE3, &s).filter(|_| published);
    let mut provenance = run_provenance(mesh, mu, settings);
    provenance.insert("source".into(), format_point(&s));
    grid_provenance(&mut provenance, &run.grid);
    provenance.insert("moment_degree".into(), settings.moments.point.degree.to_string());
    provenance.insert("seed".into(), settings.seed.to_string());
    let mut out = ErrorTable::new("nonhomogeneous", provenance);
    out.push_field("u", eu, row.zip(level).map(|(r, l)| r.velocity[l]));
    out.push_field("tau", et, row.zip(level).map(|(r, l)| r.traction[l]));
    Ok(out)
}

/// Error tables for several nonhomogeneous sources sharing one setup.
pub fn run_nonhomogeneous_tests(
    mesh: &SurfaceMesh,
    grid: &GridSpec,
    sources: &[Vec3],
    mu: f64,
    settings: &DriverSettings,
) -> Result<Vec<ErrorTable>, Error> {
    solve_nonhomogeneous(mesh, grid, sources, mu, settings)?
        .iter()
        .map(|run| nonhomogeneous_table(run, settings))
        .collect()
}

pub fn run_nonhomogeneous_test(
    mesh: &SurfaceMesh,
    grid: &GridSpec,
    source: &Vec3,
    mu: f64,
    settings: &DriverSettings,
) -> Result<ErrorTable, Error> {
    Ok(run_nonhomogeneous_tests(mesh, grid, std::slice::from_ref(source), mu, settings)?.remove(0))
}

/// The three gradient problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientProblem {
    /// Interior flow of a point force at (2, 0, 0).
    A,
    /// Exterior flow of a point force at (0, 0.7, 0).
    B,
    /// Nonhomogeneous interior problem with P = (0, 0, 1.2).
    C,
}

impl GradientProblem {
    pub fn source(self) -> Vec3 {
        match self {
            GradientProblem::A => Vec3::new(2.0, 0.0, 0.0),
            GradientProblem::B => Vec3::new(0.0, 0.7, 0.0),
            GradientProblem::C => Vec3::new(0.0, 0.0, 1.2),
        }
    }

    pub fn domain(self) -> DomainKind {
        match self {
            GradientProblem::B => DomainKind::Exterior,
            _ => DomainKind::Interior,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    /// Exact `u_k,m` at a boundary point.
    pub fn exact_gradient(self, x: &Point, mu: f64) -> Mat3 {
        let s = self.source();
        Mat3::from_fn(|k, m| {
            let d = match self {
                GradientProblem::C => kernels::hfun_deriv(x, &s, mu, m),
                _ => kernels::stokeslet_deriv(x, &s, mu, m),
            };
            d.map(|d| -d[(k, 0)]).unwrap_or(f64::NAN)
        })
    }
}

impl std::str::FromStr for GradientProblem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Self::A),
            "b" => Ok(Self::B),
            "c" => Ok(Self::C),
            _ => Err(format!("unknown gradient problem '{s}' (expected a, b or c)")),
        }
    }
}

impl std::fmt::Display for GradientProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(["a", "b", "c"][self.index()])
    }
}

/// Gradient errors with the recovered field and the discrete divergence.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub table: ErrorTable,
    pub field: GradientField,
    /// RMS of the nodal divergence.
    pub divergence: f64,
}

/// RMS nodal error of each `u_k,m`, indexed `(k, m)`.
pub fn gradient_errors(field: &GradientField, mesh: &SurfaceMesh, exact: impl Fn(&Point) -> Mat3) -> Mat3 {
    let mut acc = Mat3::zeros();
    for (x, g) in mesh.vertices().iter().zip(&field.values) {
        acc += (g - exact(x)).map(|d| d * d);
    }
    (acc / mesh.node_count() as f64).map(f64::sqrt)
}

/// Recovers gradients from a solved problem of the given kind and tabulates
/// their errors. `grid` is the volume grid used for problem (c).
pub fn gradient_report(
    problem: GradientProblem,
    solution: &BoundarySolution,
    grid: Option<&GridSpec>,
    settings: &DriverSettings,
) -> Result<GradientReport, Error> {
    let mesh = solution.mesh();
    let mu = solution.operators().mu();
    let source = problem.source();
    let field = recover_gradients(solution, &settings.gradient)?;
    let errors = gradient_errors(&field, mesh, |x| problem.exact_gradient(x, mu));
    let divergence = {
        let d = field.divergence();
        (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt()
    };

    let published_grid = problem != GradientProblem::C || grid == Some(&GridSpec::default());
    let level = reference_level(mesh.element_count()).filter(|_| mu == 1.0 && published_grid);
    let mut provenance = run_provenance(mesh, mu, settings);
    provenance.insert("problem".into(), problem.to_string());
    provenance.insert("source".into(), format_point(&source));
    provenance.insert("domain".into(), problem.domain().to_string());
    provenance.insert("epsilon_schedule".into(), format!("{:?}", settings.gradient.schedule.factors()));
    provenance.insert(
        "offset_quadrature".into(),
        format!(
            "outer degree {}, polar {}x{}",
            settings.gradient.outer_degree, settings.gradient.angular, settings.gradient.radial
        ),
    );
    if let Some(grid) = grid.filter(|_| problem == GradientProblem::C) {
        grid_provenance(&mut provenance, grid);
        provenance.insert("seed".into(), settings.seed.to_string());
    }
    let mut table = ErrorTable::new(format!("gradient-{problem}"), provenance);
    for k in 0..3 {
        for m in 0..3 {
            let reference = level.map(|l| TABLE4[problem.index()][l][m][k]);
            table.push(&format!("grad_u{}", AXES[k]), AXES[m], errors[(k, m)], reference);
        }
    }
    Ok(GradientReport {
        table,
        field,
        divergence,
    })
}

pub fn run_gradient_test(
    problem: GradientProblem,
    mesh: &SurfaceMesh,
    mu: f64,
    grid: &GridSpec,
    settings: &DriverSettings,
) -> Result<GradientReport, Error> {
    let source = problem.source();
    let solution = match problem {
        GradientProblem::C => solve_nonhomogeneous(mesh, grid, &[source], mu, settings)?.remove(0).solution,
        _ => solve_point_source(mesh, &source, problem.domain(), mu, &settings.assembly)?,
    };
    gradient_report(problem, &solution, Some(grid), settings)
}

/// RMS change of each `u_k,m` when the derivative of the volume integral
/// is added at every offset point explicitly. It cancels in the limit, so
/// the change measures the extrapolation noise only.
pub fn volume_term_change(run: &NonhomogeneousRun, settings: &DriverSettings) -> Result<Mat3, Error> {
    let mu = run.solution.operators().mu();
    let base = recover_gradients(&run.solution, &settings.gradient)?;
    let point = settings.assembly.point;
    let extra = |x: &Point| volume_gradient_at(x, &run.extension, &run.field, mu, &point).map(|m| -m);
    let rhs = limit_difference_rhs_with(&run.solution, &settings.gradient, Some(&extra))?;
    let with = solve_gradients(run.solution.mesh(), &rhs.values)?;
    let mut acc = Mat3::zeros();
    for (a, b) in base.values.iter().zip(&with.values) {
        acc += (a - b).map(|d| d * d);
    }
    Ok((acc / base.node_count() as f64).map(f64::sqrt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;

    fn quick() -> AppendixSettings {
        AppendixSettings {
            samples: 20,
            ..AppendixSettings::default()
        }
    }

    #[test]
    fn exterior_traction_uses_fluid_normals() {
        let mesh = make_icosphere(1, 1.0).unwrap();
        let src = Vec3::new(0.0, 0.7, 0.0);
        let t = run_homogeneous_test(&mesh, &src, DomainKind::Exterior, 1.0, &DriverSettings::default()).unwrap();
        let worst = t.rows.iter().map(|r| r.error).fold(0.0, f64::max);
        assert!(worst < 0.08, "{worst}");
    }

    #[test]
    fn identities_hold() {
        let r3 = appendix_check_3d(&quick()).unwrap();
        assert!(r3.passed(), "{}", r3.to_csv());
        let r2 = appendix_check_2d(&quick()).unwrap();
        assert!(r2.passed(), "{}", r2.to_csv());
    }

    #[test]
    fn scaled_h_fails() {
        let s = AppendixSettings {
            h_scale: 1.001,
            ..quick()
        };
        let r = appendix_check_3d(&s).unwrap();
        assert!(!r.check("3d.laplacian_h").unwrap().passed);
        assert!(!appendix_check_2d(&s).unwrap().passed());
    }

    #[test]
    fn zero_samples_rejected() {
        let s = AppendixSettings {
            samples: 0,
            ..AppendixSettings::default()
        };
        assert!(appendix_check_3d(&s).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let a = appendix_check_3d(&quick()).unwrap().to_json();
        let b = appendix_check_3d(&quick()).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn nan_residual_fails() {
        assert!(!CheckResult::new("x", f64::NAN, 1.0).passed);
        assert!(CheckResult::new("x", 1.0, 1.0).passed);
    }

    #[test]
    fn reference_levels() {
        assert_eq!(reference_level(320), Some(0));
        assert_eq!(reference_level(1280), Some(1));
        assert_eq!(reference_level(80), None);
        assert_eq!(reference_level(5120), None);
    }

    #[test]
    fn homogeneous_table_shape() {
        let mesh = make_icosphere(1, 1.0).unwrap();
        let t = run_homogeneous_test(
            &mesh,
            &Vec3::new(-2.0, 0.0, 0.0),
            DomainKind::Interior,
            1.0,
            &DriverSettings::default(),
        )
        .unwrap();
        assert_eq!(t.rows.len(), 6);
        assert!(t.rows.iter().all(|r| r.error >= 0.0 && r.reference.is_none()));
        let csv = t.to_csv();
        assert!(csv.contains("field,component,error,reference,ratio"));
        assert!(csv.starts_with('#'));
    }

    #[test]
    fn source_on_boundary_rejected() {
        let mesh = make_icosphere(1, 1.0).unwrap();
        let s = mesh.vertex(0);
        assert!(run_homogeneous_test(&mesh, &s, DomainKind::Interior, 1.0, &DriverSettings::default()).is_err());
    }

    #[test]
    fn problem_parsing() {
        assert_eq!("B".parse::<GradientProblem>().unwrap(), GradientProblem::B);
        assert!("d".parse::<GradientProblem>().is_err());
        assert_eq!(GradientProblem::C.to_string(), "c");
    }
}
