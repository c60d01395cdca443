//! Closed-form Stokes and Laplace kernels.
//!
//! Every kernel is written in terms of `R = Q − P`, `r = |R|`. Derivative
//! kernels (`*_deriv`) differentiate with respect to the coordinates of the
//! second point `P`; derivatives in `Q` are their negation.
//!
//! The checked functions reject `r = 0`. The [`raw`] submodule holds the
//! unchecked versions used inside quadrature loops, where the caller
//! guarantees a positive distance.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::KernelError;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rank-3 tensor indexed as `t[(i, j, k)]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensor3(pub [[[f64; 3]; 3]; 3]);

impl Tensor3 {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    t.0[i][j][k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Contracts the middle index with `v`: result(i, k) = Σ_j t(i, j, k) v_j.
    pub fn contract_middle(&self, v: &Vec3) -> Mat3 {
        Mat3::from_fn(|i, k| (0..3).map(|j| self.0[i][j][k] * v[j]).sum())
    }

    /// Contracts the last index with `v`: result(i, j) = Σ_k t(i, j, k) v_k.
    pub fn contract_last(&self, v: &Vec3) -> Mat3 {
        Mat3::from_fn(|i, j| (0..3).map(|k| self.0[i][j][k] * v[k]).sum())
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.0[i][j][k]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        &mut self.0[i][j][k]
    }
}

impl Add for Tensor3 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::from_fn(|i, j, k| self.0[i][j][k] + rhs.0[i][j][k])
    }
}

impl Sub for Tensor3 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::from_fn(|i, j, k| self.0[i][j][k] - rhs.0[i][j][k])
    }
}

impl AddAssign for Tensor3 {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Mul<f64> for Tensor3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::from_fn(|i, j, k| self.0[i][j][k] * s)
    }
}

impl Neg for Tensor3 {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

/// An ordered point pair with `R = Q − P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub q: Vec3,
    pub p: Vec3,
}

impl PointPair {
    pub fn new(q: Vec3, p: Vec3) -> Self {
        Self { q, p }
    }

    pub fn separation(&self) -> Vec3 {
        self.q - self.p
    }

    pub fn distance(&self) -> f64 {
        self.separation().norm()
    }

    fn checked(&self) -> Result<Vec3, KernelError> {
        let r = self.separation();
        if r.norm() == 0.0 {
            Err(KernelError::Coincident)
        } else {
            Ok(r)
        }
    }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

fn check_mu(mu: f64) -> Result<(), KernelError> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(KernelError::InvalidViscosity(mu))
    }
}

fn check_index(m: usize) -> Result<(), KernelError> {
    if m < 3 {
        Ok(())
    } else {
        Err(KernelError::InvalidIndex(m))
    }
}

fn check_normal(n: &Vec3) -> Result<(), KernelError> {
    let len = n.norm();
    if (len - 1.0).abs() <= 1e-8 {
        Ok(())
    } else {
        Err(KernelError::InvalidNormal(len))
    }
}

/// Unchecked kernel bodies. `r` is always `Q − P`.
pub mod raw {
    use super::*;

    #[inline]
    pub fn stokeslet(r: &Vec3, mu: f64) -> Mat3 {
        let d2 = r.norm_squared();
        let d = d2.sqrt();
        let c = 1.0 / (8.0 * PI * mu * d);
        let rr = r * r.transpose() / d2;
        (Mat3::identity() + rr) * c
    }

    /// Σ_j T_ijk n_j, indexed (i, k).
    #[inline]
    pub fn stresslet_dot_normal(r: &Vec3, n: &Vec3) -> Mat3 {
        let d2 = r.norm_squared();
        let d5 = d2 * d2 * d2.sqrt();
        let s = -3.0 / (4.0 * PI) * r.dot(n) / d5;
        r * r.transpose() * s
    }

    #[inline]
    pub fn stresslet(r: &Vec3) -> Tensor3 {
        let d2 = r.norm_squared();
        let d5 = d2 * d2 * d2.sqrt();
        let s = -3.0 / (4.0 * PI * d5);
        Tensor3::from_fn(|i, j, k| s * r[i] * r[j] * r[k])
    }

    #[inline]
    pub fn hfun(r: &Vec3, mu: f64) -> Mat3 {
        let d = r.norm();
        let c = 1.0 / (32.0 * PI * mu * mu);
        (Mat3::identity() * (3.0 * d) - r * r.transpose() / d) * c
    }

    /// ∂H/∂n_Q for the normal `n` at `Q`.
    #[inline]
    pub fn hfun_normal_derivative(r: &Vec3, n: &Vec3, mu: f64) -> Mat3 {
        let d2 = r.norm_squared();
        let d = d2.sqrt();
        let c = 1.0 / (32.0 * PI * mu * mu * d);
        let nr = n.dot(r);
        let nrt = n * r.transpose();
        (Mat3::identity() * (3.0 * nr) - (nrt + nrt.transpose()) + r * r.transpose() * (nr / d2))
            * c
    }

    /// All three P-derivatives of the Stokeslet: `out[m][(k, j)] = U_{kj,m}`.
    #[inline]
    pub fn stokeslet_grad(r: &Vec3, mu: f64) -> [Mat3; 3] {
        let d2 = r.norm_squared();
        let d = d2.sqrt();
        let d3 = d2 * d;
        let c = 1.0 / (8.0 * PI * mu * d3);
        std::array::from_fn(|m| {
            Mat3::from_fn(|k, j| {
                c * (delta(k, j) * r[m] - delta(k, m) * r[j] - delta(j, m) * r[k]
                    + 3.0 * r[k] * r[j] * r[m] / d2)
            })
        })
    }

    /// All three P-derivatives of H: `out[m][(k, j)] = H_{kj,m}`.
    #[inline]
    pub fn hfun_grad(r: &Vec3, mu: f64) -> [Mat3; 3] {
        let d2 = r.norm_squared();
        let d = d2.sqrt();
        let c = 1.0 / (32.0 * PI * mu * mu * d);
        std::array::from_fn(|m| {
            Mat3::from_fn(|k, j| {
                c * (-3.0 * delta(k, j) * r[m] + delta(k, m) * r[j] + delta(j, m) * r[k]
                    - r[k] * r[j] * r[m] / d2)
            })
        })
    }

    /// T_{ijk,m}(Q, P) for fixed `m`.
    #[inline]
    pub fn stresslet_deriv(r: &Vec3, m: usize) -> Tensor3 {
        let d2 = r.norm_squared();
        let d5 = d2 * d2 * d2.sqrt();
        let s = -3.0 / (4.0 * PI * d5);
        Tensor3::from_fn(|i, j, k| {
            s * (-delta(i, m) * r[j] * r[k] - delta(j, m) * r[i] * r[k] - delta(k, m) * r[i] * r[j]
                + 5.0 * r[i] * r[j] * r[k] * r[m] / d2)
        })
    }

    /// Σ_ij T_{ijk,m} u_i n_j, indexed (k, m).
    #[inline]
    pub fn stresslet_grad_contracted(r: &Vec3, u: &Vec3, n: &Vec3) -> Mat3 {
        let d2 = r.norm_squared();
        let d5 = d2 * d2 * d2.sqrt();
        let s = -3.0 / (4.0 * PI * d5);
        let ru = r.dot(u);
        let rn = r.dot(n);
        let ru_rn = ru * rn;
        Mat3::from_fn(|k, m| {
            s * (-u[m] * rn * r[k] - n[m] * ru * r[k] - delta(k, m) * ru_rn
                + 5.0 * ru_rn * r[k] * r[m] / d2)
        })
    }

    /// Σ_j U_{kj,m} τ_j, indexed (k, m).
    #[inline]
    pub fn stokeslet_grad_contracted(r: &Vec3, tau: &Vec3, mu: f64) -> Mat3 {
        let d2 = r.norm_squared();
        let d3 = d2 * d2.sqrt();
        let c = 1.0 / (8.0 * PI * mu * d3);
        let rt = r.dot(tau);
        Mat3::from_fn(|k, m| {
            c * (tau[k] * r[m] - delta(k, m) * rt - tau[m] * r[k] + 3.0 * r[k] * rt * r[m] / d2)
        })
    }

    #[inline]
    pub fn h_stress(r: &Vec3, mu: f64) -> Tensor3 {
        let d2 = r.norm_squared();
        let d = d2.sqrt();
        let c = 1.0 / (16.0 * PI * mu);
        Tensor3::from_fn(|k, j, l| {
            c * (r[k] * r[l] * r[j] / (d2 * d)
                + (r[l] * delta(k, j) + r[k] * delta(j, l) - r[j] * delta(k, l)) / d)
        })
    }

    #[inline]
    pub fn laplace_green(r: &Vec3) -> f64 {
        1.0 / (4.0 * PI * r.norm())
    }

    /// n·R / (4π r³) with `n` the normal at `Q`.
    #[inline]
    pub fn laplace_green_dn(r: &Vec3, n: &Vec3) -> f64 {
        let d2 = r.norm_squared();
        n.dot(r) / (4.0 * PI * d2 * d2.sqrt())
    }
}

pub fn stokeslet(q: &Vec3, p: &Vec3, mu: f64) -> Result<Mat3, KernelError> {
    check_mu(mu)?;
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::stokeslet(&r, mu))
}

pub fn stresslet(q: &Vec3, p: &Vec3) -> Result<Tensor3, KernelError> {
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::stresslet(&r))
}

pub fn hfun(q: &Vec3, p: &Vec3, mu: f64) -> Result<Mat3, KernelError> {
    check_mu(mu)?;
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::hfun(&r, mu))
}

pub fn hfun_normal_derivative(q: &Vec3, p: &Vec3, n: &Vec3, mu: f64) -> Result<Mat3, KernelError> {
    check_mu(mu)?;
    check_normal(n)?;
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::hfun_normal_derivative(&r, n, mu))
}

/// U_{kj,m}: derivative of the Stokeslet in the coordinate `P_m`.
pub fn stokeslet_deriv(q: &Vec3, p: &Vec3, mu: f64, m: usize) -> Result<Mat3, KernelError> {
    check_mu(mu)?;
    check_index(m)?;
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::stokeslet_grad(&r, mu)[m])
}

/// T_{ijk,m}: derivative of the stresslet in the coordinate `P_m`.
pub fn stresslet_deriv(q: &Vec3, p: &Vec3, m: usize) -> Result<Tensor3, KernelError> {
    check_index(m)?;
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::stresslet_deriv(&r, m))
}

/// H_{kj,m}: derivative of H in the coordinate `P_m`.
pub fn hfun_deriv(q: &Vec3, p: &Vec3, mu: f64, m: usize) -> Result<Mat3, KernelError> {
    check_mu(mu)?;
    check_index(m)?;
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::hfun_grad(&r, mu)[m])
}

/// Velocity of the zero-pressure flow driven by Stokeslet column `j`,
/// which is column `j` of H.
pub fn h_velocity(q: &Vec3, p: &Vec3, mu: f64, j: usize) -> Result<Vec3, KernelError> {
    check_index(j)?;
    Ok(hfun(q, p, mu)?.column(j).into_owned())
}

/// σ_kjl for the H flows; column `j` selects the flow.
pub fn h_stress(q: &Vec3, p: &Vec3, mu: f64) -> Result<Tensor3, KernelError> {
    check_mu(mu)?;
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::h_stress(&r, mu))
}

/// σ_kjl n_l for the H flow of column `j`.
pub fn h_traction(q: &Vec3, p: &Vec3, n: &Vec3, mu: f64, j: usize) -> Result<Vec3, KernelError> {
    check_index(j)?;
    let s = h_stress(q, p, mu)?;
    Ok(Vec3::from_fn(|k, _| (0..3).map(|l| s[(k, j, l)] * n[l]).sum()))
}

/// Velocity at `q` of a unit point force along axis `j` placed at `source`.
pub fn point_source_velocity(q: &Vec3, source: &Vec3, mu: f64, j: usize) -> Result<Vec3, KernelError> {
    check_index(j)?;
    Ok(stokeslet(q, source, mu)?.column(j).into_owned())
}

/// Traction τ_i = T_ijc n_j of the point-force flow of column `c`.
pub fn point_source_traction(q: &Vec3, source: &Vec3, n: &Vec3, c: usize) -> Result<Vec3, KernelError> {
    check_index(c)?;
    let t = stresslet(q, source)?;
    Ok(Vec3::from_fn(|i, _| (0..3).map(|j| t[(i, j, c)] * n[j]).sum()))
}

/// Pressure of the point-force flow of column `c`: R_c / (4π r³).
/// Only used to cross-check tractions; the solver never needs it.
pub fn stokeslet_pressure(q: &Vec3, source: &Vec3, c: usize) -> Result<f64, KernelError> {
    check_index(c)?;
    let r = PointPair::new(*q, *source).checked()?;
    Ok(r[c] / (4.0 * PI * r.norm().powi(3)))
}

pub fn laplace_green(q: &Vec3, p: &Vec3) -> Result<f64, KernelError> {
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::laplace_green(&r))
}

/// n·R / (4π r³) = n·∇_P (1/4πr) = −∂/∂n_Q (1/4πr).
pub fn laplace_green_dn(q: &Vec3, p: &Vec3, n: &Vec3) -> Result<f64, KernelError> {
    let r = PointPair::new(*q, *p).checked()?;
    Ok(raw::laplace_green_dn(&r, n))
}

/// Two-dimensional Stokeslet without normalization: −δ log r + R R / r².
pub fn stokeslet_2d(q: &Vector2<f64>, p: &Vector2<f64>) -> Result<Matrix2<f64>, KernelError> {
    let r = q - p;
    let d2 = r.norm_squared();
    if d2 == 0.0 {
        return Err(KernelError::Coincident);
    }
    let log_r = 0.5 * d2.ln();
    Ok(Matrix2::from_fn(|k, j| -delta(k, j) * log_r + r[k] * r[j] / d2))
}

/// Two-dimensional H: (1/32)[δ r²(17 − 12 log r) + 2 R R (4 log r − 5)].
pub fn hfun_2d(q: &Vector2<f64>, p: &Vector2<f64>) -> Result<Matrix2<f64>, KernelError> {
    let r = q - p;
    let d2 = r.norm_squared();
    if d2 == 0.0 {
        return Err(KernelError::Coincident);
    }
    let log_r = 0.5 * d2.ln();
    Ok(Matrix2::from_fn(|k, j| {
        (delta(k, j) * d2 * (17.0 - 12.0 * log_r) + 2.0 * r[k] * r[j] * (4.0 * log_r - 5.0)) / 32.0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn origin() -> Vec3 {
        Vec3::zeros()
    }

    fn ex() -> Vec3 {
        Vec3::new(1.0, 0.0, 0.0)
    }

    #[test]
    fn stokeslet_hand_values() {
        let u = stokeslet(&ex(), &origin(), 1.0).unwrap();
        assert_relative_eq!(u[(0, 0)], 1.0 / (4.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(u[(1, 1)], 1.0 / (8.0 * PI), epsilon = 1e-15);
        assert_eq!(u[(0, 1)], 0.0);
        let u2 = stokeslet(&(ex() * 2.0), &origin(), 1.0).unwrap();
        assert_relative_eq!(u2, u * 0.5, epsilon = 1e-16);
        let u_mu = stokeslet(&ex(), &origin(), 2.0).unwrap();
        assert_relative_eq!(u_mu, u * 0.5, epsilon = 1e-16);
    }

    #[test]
    fn coincident_points_rejected() {
        let p = Vec3::new(0.3, 0.2, 0.1);
        assert_eq!(stokeslet(&p, &p, 1.0), Err(KernelError::Coincident));
        assert_eq!(stresslet(&p, &p), Err(KernelError::Coincident));
        assert_eq!(hfun(&p, &p, 1.0), Err(KernelError::Coincident));
        assert!(laplace_green(&p, &p).is_err());
        assert!(stokeslet(&ex(), &p, 0.0).is_err());
        assert!(stokeslet_deriv(&ex(), &p, 1.0, 3).is_err());
    }

    #[test]
    fn stresslet_hand_values_and_symmetry() {
        let t = stresslet(&ex(), &origin()).unwrap();
        assert_relative_eq!(t[(0, 0, 0)], -3.0 / (4.0 * PI), epsilon = 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    if (i, j, k) != (0, 0, 0) {
                        assert_eq!(t[(i, j, k)], 0.0);
                    }
                }
            }
        }
        let q = Vec3::new(0.3, -1.1, 0.7);
        let t = stresslet(&q, &origin()).unwrap();
        assert_relative_eq!(t[(0, 1, 2)], t[(2, 0, 1)], epsilon = 1e-16);
        assert_relative_eq!(t[(0, 1, 2)], t[(1, 2, 0)], epsilon = 1e-16);
        let flipped = stresslet(&(-q), &origin()).unwrap();
        assert_relative_eq!(flipped.max_abs(), t.max_abs(), epsilon = 1e-16);
        assert_relative_eq!(flipped[(0, 1, 2)], -t[(0, 1, 2)], epsilon = 1e-16);
    }

    #[test]
    fn hfun_hand_values() {
        let h = hfun(&ex(), &origin(), 1.0).unwrap();
        assert_relative_eq!(h[(0, 0)], 1.0 / (16.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(h[(1, 1)], 3.0 / (32.0 * PI), epsilon = 1e-15);
        let h2 = hfun(&(ex() * 2.0), &origin(), 1.0).unwrap();
        assert_relative_eq!(h2, h * 2.0, epsilon = 1e-16);
        let tiny = hfun(&(ex() * 1e-9), &origin(), 1.0).unwrap();
        assert!(tiny.norm() < 1e-9);
    }

    #[test]
    fn hfun_normal_derivative_values() {
        let d = hfun_normal_derivative(&ex(), &origin(), &ex(), 1.0).unwrap();
        assert_relative_eq!(d[(0, 0)], 1.0 / (16.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(d[(1, 1)], 3.0 / (32.0 * PI), epsilon = 1e-15);
        let n = Vec3::new(0.0, 1.0, 0.0);
        let d = hfun_normal_derivative(&ex(), &origin(), &n, 1.0).unwrap();
        assert_eq!(d[(2, 2)], 0.0);
        assert!(hfun_normal_derivative(&ex(), &origin(), &(ex() * 2.0), 1.0).is_err());
    }

    #[test]
    fn derivative_hand_values() {
        let du = stokeslet_deriv(&ex(), &origin(), 1.0, 0).unwrap();
        assert_relative_eq!(du[(0, 0)], 1.0 / (4.0 * PI), epsilon = 1e-15);
        let dh = hfun_deriv(&ex(), &origin(), 1.0, 0).unwrap();
        assert_relative_eq!(dh[(0, 0)], -1.0 / (16.0 * PI), epsilon = 1e-15);
        let ez = Vec3::new(0.0, 0.0, 1.0);
        let dt = stresslet_deriv(&ez, &origin(), 2).unwrap();
        assert_eq!(dt[(0, 0, 2)], 0.0);
    }

    #[test]
    fn normal_derivative_is_minus_directional_p_derivative() {
        let q = Vec3::new(0.4, -0.9, 1.3);
        let p = Vec3::new(-0.2, 0.1, 0.05);
        let n = Vec3::new(1.0, 2.0, -0.5).normalize();
        let mu = 0.7;
        let dn = hfun_normal_derivative(&q, &p, &n, mu).unwrap();
        let mut sum = Mat3::zeros();
        for m in 0..3 {
            sum -= hfun_deriv(&q, &p, mu, m).unwrap() * n[m];
        }
        assert_relative_eq!(dn, sum, max_relative = 1e-12);
    }

    #[test]
    fn contracted_forms_match_full_tensors() {
        let r = Vec3::new(0.3, -0.8, 0.45);
        let u = Vec3::new(1.0, -2.0, 0.5);
        let n = Vec3::new(0.2, 0.3, -0.9).normalize();
        let tau = Vec3::new(-0.3, 0.7, 1.1);
        let mu = 1.3;
        let c = raw::stresslet_grad_contracted(&r, &u, &n);
        let cu = raw::stokeslet_grad_contracted(&r, &tau, mu);
        let grad_u = raw::stokeslet_grad(&r, mu);
        for m in 0..3 {
            let t = raw::stresslet_deriv(&r, m);
            for k in 0..3 {
                let full: f64 = (0..3)
                    .flat_map(|i| (0..3).map(move |j| (i, j)))
                    .map(|(i, j)| t[(i, j, k)] * u[i] * n[j])
                    .sum();
                assert_relative_eq!(c[(k, m)], full, max_relative = 1e-13);
                let fu: f64 = (0..3).map(|j| grad_u[m][(k, j)] * tau[j]).sum();
                assert_relative_eq!(cu[(k, m)], fu, max_relative = 1e-13);
            }
        }
        let dl = raw::stresslet_dot_normal(&r, &n);
        let full = raw::stresslet(&r).contract_middle(&n);
        assert_relative_eq!(dl, full, max_relative = 1e-13);
    }

    #[test]
    fn h_field_values() {
        let two = ex() * 2.0;
        let u = h_velocity(&two, &origin(), 1.0, 0).unwrap();
        assert_relative_eq!(u[0], 1.0 / (8.0 * PI), epsilon = 1e-15);
        let ez2 = Vec3::new(0.0, 0.0, 2.0);
        assert_eq!(h_velocity(&ez2, &origin(), 1.0, 0).unwrap()[2], 0.0);
        let h = hfun(&two, &origin(), 1.0).unwrap();
        assert_eq!(h_velocity(&two, &origin(), 1.0, 1).unwrap(), h.column(1).into_owned());
        let s = h_stress(&ex(), &origin(), 1.0).unwrap();
        assert_relative_eq!(s[(0, 0, 0)], 1.0 / (8.0 * PI), epsilon = 1e-15);
        assert_relative_eq!(s[(1, 0, 1)], -1.0 / (16.0 * PI), epsilon = 1e-15);
    }

    #[test]
    fn point_source_values() {
        let tau = point_source_traction(&ex(), &origin(), &ex(), 0).unwrap();
        assert_relative_eq!(tau[0], -3.0 / (4.0 * PI), epsilon = 1e-15);
        let q = Vec3::new(0.2, 0.9, -0.4);
        let v = point_source_velocity(&q, &origin(), 1.0, 2).unwrap();
        assert_eq!(v, stokeslet(&q, &origin(), 1.0).unwrap().column(2).into_owned());
    }

    #[test]
    fn laplace_values() {
        assert_relative_eq!(laplace_green(&ex(), &origin()).unwrap(), 1.0 / (4.0 * PI));
        let n = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(laplace_green_dn(&ex(), &origin(), &n).unwrap(), 0.0);
    }

    #[test]
    fn two_dimensional_values() {
        let q = Vector2::new(1.0, 0.0);
        let p = Vector2::zeros();
        let u = stokeslet_2d(&q, &p).unwrap();
        assert_relative_eq!(u[(0, 0)], 1.0);
        assert_relative_eq!(u[(1, 1)], 0.0);
        assert_relative_eq!(u[(0, 1)], 0.0);
        let h = hfun_2d(&q, &p).unwrap();
        assert_relative_eq!(h[(0, 0)], 0.21875, epsilon = 1e-15);
        assert_relative_eq!(h[(1, 1)], 0.53125, epsilon = 1e-15);
    }

    #[test]
    fn homogeneity_exact_to_roundoff() {
        let r = Vec3::new(0.3, -0.7, 0.2);
        let lambda = 3.7;
        let u = raw::stokeslet(&r, 1.0);
        assert_relative_eq!(raw::stokeslet(&(r * lambda), 1.0), u / lambda, max_relative = 1e-14);
        let t = raw::stresslet(&r);
        let ts = raw::stresslet(&(r * lambda));
        assert!((ts - t * (1.0 / (lambda * lambda))).max_abs() <= 1e-14 * t.max_abs());
        let h = raw::hfun(&r, 1.0);
        assert_relative_eq!(raw::hfun(&(r * lambda), 1.0), h * lambda, max_relative = 1e-14);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = Vec3> {
            (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
        }

        proptest! {
            #[test]
            fn stokeslet_symmetric_under_swap(q in point(), p in point(), mu in 0.1..5.0f64) {
                prop_assume!((q - p).norm() > 1e-2);
                let a = stokeslet(&q, &p, mu).unwrap();
                let b = stokeslet(&p, &q, mu).unwrap();
                prop_assert!((a - b).norm() <= 1e-12 * a.norm());
                prop_assert!((a - a.transpose()).norm() <= 1e-12 * a.norm());
            }

            #[test]
            fn stokeslet_scales_with_viscosity(q in point(), p in point(), mu in 0.1..5.0f64) {
                prop_assume!((q - p).norm() > 1e-2);
                let a = stokeslet(&q, &p, mu).unwrap() * mu;
                let b = stokeslet(&q, &p, 1.0).unwrap();
                prop_assert!((a - b).norm() <= 1e-12 * b.norm());
            }

            #[test]
            fn hfun_translation_invariant(q in point(), p in point(), shift in point()) {
                prop_assume!((q - p).norm() > 1e-2);
                let a = hfun(&q, &p, 1.0).unwrap();
                let b = hfun(&(q + shift), &(p + shift), 1.0).unwrap();
                prop_assert!((a - b).norm() <= 1e-10 * (1.0 + a.norm()));
            }
        }
    }
}
