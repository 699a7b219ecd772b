//! Matrix Lie group primitives for SO(3) and SE_3(3).
//!
//! An SE_3(3) element packs one rotation with three translation-like columns
//! (base velocity, base position, contact position):
//!
//! ```text
//!     | R  v  p  c |
//! X = | 0  1  0  0 |   (6x6, bottom-right block is I3)
//!     | 0  0  1  0 |
//!     | 0  0  0  1 |
//! ```
//!
//! Tangent vectors are ordered `(phi, rho_v, rho_p, rho_c)`, each 3 components.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
/// 3x3 rotation matrix. Kept as a plain matrix since the filter equations are
/// written in matrix form.
pub type Rotation = Matrix3<f64>;
/// Tangent vector of SE_3(3): `(phi, rho_v, rho_p, rho_c)`.
pub type TangentVector = SVector<f64, 12>;
pub type Mat12 = SMatrix<f64, 12, 12>;

/// Below this rotation angle the closed forms switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-6;
/// Within this distance of pi the log uses axis extraction from the symmetric part.
const NEAR_PI: f64 = 1e-7;
/// Re-orthonormalize when `||R R^T - I||` exceeds this.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Cross-product matrix: `skew(v) * w == v x w`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`]; reads the antisymmetric part only.
#[inline]
pub fn vee3(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues' formula.
pub fn so3_exp(phi: &Vec3) -> Rotation {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Principal logarithm of a rotation, `||result|| <= pi`.
///
/// At an angle of exactly pi the axis sign is ambiguous; the first nonzero
/// component of the returned axis is made positive.
pub fn so3_log(r: &Rotation) -> Vec3 {
    let w = vee3(r);
    let s = w.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        // sin(theta)/theta ~ 1 - theta^2/6
        return w * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta > NEAR_PI {
        return w * (theta / s);
    }

    // Near pi: (R + R^T)/2 = cos(t) I + (1 - cos(t)) n n^T.
    let sym = (r + r.transpose()) * 0.5;
    let outer = (sym - Mat3::identity() * c) / (1.0 - c);
    let i = (0..3)
        .max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)]))
        .unwrap_or(0);
    let mut axis = outer.column(i) / outer[(i, i)].max(0.0).sqrt();
    axis /= axis.norm();
    if s > 1e-12 {
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
    } else if let Some(first) = axis.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            axis = -axis;
        }
    }
    axis * theta
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Mat3::identity() + k * a + k * k * b
}

/// Inverse of the SO(3) left Jacobian.
pub fn so3_left_jacobian_inv(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    // 1/t^2 - cot(t/2)/(2t); finite on [0, pi]
    let b = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - 1.0 / ((0.5 * theta).tan() * 2.0 * theta)
    };
    Mat3::identity() - k * 0.5 + k * k * b
}

/// Right Jacobian of SO(3): `exp(phi + d) ~ exp(phi) exp(J_r(phi) d)`.
pub fn so3_right_jacobian(phi: &Vec3) -> Mat3 {
    so3_left_jacobian(&-phi)
}

/// Frobenius norm of `R R^T - I`.
pub fn orthonormality_error(r: &Rotation) -> f64 {
    (r * r.transpose() - Mat3::identity()).norm()
}

/// Closest rotation in the Frobenius sense (polar decomposition via SVD).
pub fn orthonormalize(r: &Rotation) -> Rotation {
    let svd = r.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return *r;
    };
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

/// Re-orthonormalize only when the drift exceeds [`ORTHONORMAL_TOL`].
pub fn renormalize_if_needed(r: &Rotation) -> Rotation {
    if orthonormality_error(r) > ORTHONORMAL_TOL {
        orthonormalize(r)
    } else {
        *r
    }
}

/// Rotation about the world x axis.
pub fn rot_x(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation about the world y axis.
pub fn rot_y(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation about the world z axis.
pub fn rot_z(angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Unit quaternion `(w, x, y, z)` of a rotation matrix.
pub fn rotation_to_quaternion(r: &Rotation) -> [f64; 4] {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot);
    // keep w >= 0 so the serialized form is canonical
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

/// Rotation matrix of a quaternion `(w, x, y, z)`; the input is normalized first.
pub fn quaternion_to_rotation(q: [f64; 4]) -> Rotation {
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        q[0], q[1], q[2], q[3],
    ));
    q.to_rotation_matrix().into_inner()
}

/// Element of SE_3(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub rotation: Rotation,
    pub velocity: Vec3,
    pub position: Vec3,
    pub contact: Vec3,
}

impl Default for GroupElement {
    fn default() -> Self {
        Self::identity()
    }
}

impl GroupElement {
    pub fn new(rotation: Rotation, velocity: Vec3, position: Vec3, contact: Vec3) -> Self {
        Self {
            rotation,
            velocity,
            position,
            contact,
        }
    }

    pub fn identity() -> Self {
        Self::new(Mat3::identity(), Vec3::zeros(), Vec3::zeros(), Vec3::zeros())
    }

    /// Column `i` of the translation block (0 = velocity, 1 = position, 2 = contact).
    pub fn column(&self, i: usize) -> &Vec3 {
        match i {
            0 => &self.velocity,
            1 => &self.position,
            2 => &self.contact,
            _ => panic!("SE_3(3) has three translation columns, got index {i}"),
        }
    }

    fn columns(&self) -> [Vec3; 3] {
        [self.velocity, self.position, self.contact]
    }

    fn from_columns(rotation: Rotation, c: [Vec3; 3]) -> Self {
        Self::new(rotation, c[0], c[1], c[2])
    }

    /// Exponential map, closed form with the SO(3) left Jacobian applied per column.
    pub fn exp(xi: &TangentVector) -> Self {
        let phi = xi.fixed_rows::<3>(0).into_owned();
        let r = so3_exp(&phi);
        let jl = so3_left_jacobian(&phi);
        Self::from_columns(
            r,
            [
                jl * xi.fixed_rows::<3>(3),
                jl * xi.fixed_rows::<3>(6),
                jl * xi.fixed_rows::<3>(9),
            ],
        )
    }

    /// Logarithm map, inverse of [`GroupElement::exp`] for rotation angles below pi.
    pub fn log(&self) -> TangentVector {
        let phi = so3_log(&self.rotation);
        let jl_inv = so3_left_jacobian_inv(&phi);
        let mut xi = TangentVector::zeros();
        xi.fixed_rows_mut::<3>(0).copy_from(&phi);
        for (i, c) in self.columns().iter().enumerate() {
            xi.fixed_rows_mut::<3>(3 + 3 * i).copy_from(&(jl_inv * c));
        }
        xi
    }

    pub fn compose(&self, other: &Self) -> Self {
        let r = self.rotation;
        Self::new(
            r * other.rotation,
            r * other.velocity + self.velocity,
            r * other.position + self.position,
            r * other.contact + self.contact,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(
            rt,
            -rt * self.velocity,
            -rt * self.position,
            -rt * self.contact,
        )
    }

    /// 12x12 adjoint, `Ad_X xi = vee(X hat(xi) X^-1)`.
    pub fn adjoint(&self) -> Mat12 {
        let r = self.rotation;
        let mut ad = Mat12::zeros();
        for i in 0..4 {
            ad.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&r);
        }
        for (i, c) in self.columns().iter().enumerate() {
            ad.fixed_view_mut::<3, 3>(3 + 3 * i, 0)
                .copy_from(&(skew(c) * r));
        }
        ad
    }

    /// Dense 6x6 matrix representation.
    pub fn to_matrix(&self) -> Matrix6<f64> {
        let mut m = Matrix6::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        for (i, c) in self.columns().iter().enumerate() {
            m.fixed_view_mut::<3, 1>(0, 3 + i).copy_from(c);
        }
        m
    }

    /// Reads the rotation and translation columns of a 6x6 matrix; the bottom
    /// rows are assumed to be `[0 I3]`.
    pub fn from_matrix(m: &Matrix6<f64>) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
            m.fixed_view::<3, 1>(0, 4).into_owned(),
            m.fixed_view::<3, 1>(0, 5).into_owned(),
        )
    }

    /// Acts on a 6-vector `(x; y)` with the 6x6 matrix representation.
    pub fn act(&self, x: &Vec3, y: &Vec3) -> Vec3 {
        self.rotation * x + self.velocity * y.x + self.position * y.y + self.contact * y.z
    }

    pub fn renormalized(mut self) -> Self {
        self.rotation = renormalize_if_needed(&self.rotation);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|x| x.is_finite())
            && self.columns().iter().all(|c| c.iter().all(|x| x.is_finite()))
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: GroupElement) -> GroupElement {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a GroupElement> for &'a GroupElement {
    type Output = GroupElement;
    fn mul(self, rhs: &GroupElement) -> GroupElement {
        self.compose(rhs)
    }
}

/// 6x6 Lie-algebra matrix of a tangent vector.
pub fn hat(xi: &TangentVector) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&skew(&xi.fixed_rows::<3>(0).into_owned()));
    for i in 0..3 {
        m.fixed_view_mut::<3, 1>(0, 3 + i)
            .copy_from(&xi.fixed_rows::<3>(3 + 3 * i));
    }
    m
}

/// Inverse of [`hat`].
pub fn vee(m: &Matrix6<f64>) -> TangentVector {
    let mut xi = TangentVector::zeros();
    xi.fixed_rows_mut::<3>(0)
        .copy_from(&vee3(&m.fixed_view::<3, 3>(0, 0).into_owned()));
    for i in 0..3 {
        xi.fixed_rows_mut::<3>(3 + 3 * i)
            .copy_from(&m.fixed_view::<3, 1>(0, 3 + i));
    }
    xi
}

/// Builds a tangent vector from its four 3-blocks.
pub fn tangent(phi: Vec3, rho_v: Vec3, rho_p: Vec3, rho_c: Vec3) -> TangentVector {
    let mut xi = TangentVector::zeros();
    xi.fixed_rows_mut::<3>(0).copy_from(&phi);
    xi.fixed_rows_mut::<3>(3).copy_from(&rho_v);
    xi.fixed_rows_mut::<3>(6).copy_from(&rho_p);
    xi.fixed_rows_mut::<3>(9).copy_from(&rho_c);
    xi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    /// Scaling-and-squaring Taylor expm, kept independent of the closed forms.
    fn expm_dense(m: &Matrix6<f64>) -> Matrix6<f64> {
        let norm = m.norm();
        let s = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as i32
        } else {
            0
        };
        let a = m / 2f64.powi(s);
        let mut term = Matrix6::identity();
        let mut sum = Matrix6::identity();
        for k in 1..30 {
            term = term * a / k as f64;
            sum += term;
        }
        for _ in 0..s {
            sum = sum * sum;
        }
        sum
    }

    fn random_vec3(rng: &mut impl Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    fn random_phi(rng: &mut impl Rng, max_angle: f64) -> Vec3 {
        let axis = random_vec3(rng, 1.0).normalize();
        axis * rng.gen_range(0.0..max_angle)
    }

    fn random_tangent(rng: &mut impl Rng, max_angle: f64) -> TangentVector {
        tangent(
            random_phi(rng, max_angle),
            random_vec3(rng, 2.0),
            random_vec3(rng, 2.0),
            random_vec3(rng, 2.0),
        )
    }

    fn random_element(rng: &mut impl Rng) -> GroupElement {
        GroupElement::new(
            so3_exp(&random_phi(rng, PI)),
            random_vec3(rng, 2.0),
            random_vec3(rng, 5.0),
            random_vec3(rng, 5.0),
        )
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        let s = skew(&Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(s, Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v = random_vec3(&mut rng, 3.0);
            let w = random_vec3(&mut rng, 3.0);
            assert_relative_eq!(skew(&v) * v, Vec3::zeros(), epsilon = 1e-12);
            assert_relative_eq!(skew(&v) * w, v.cross(&w), epsilon = 1e-12);
            assert_relative_eq!(skew(&v), -skew(&v).transpose());
        }
    }

    #[test]
    fn so3_exp_matches_quaternion() {
        assert_eq!(so3_exp(&Vec3::zeros()), Mat3::identity());
        let r = so3_exp(&Vec3::new(FRAC_PI_2, 0.0, 0.0));
        let q = nalgebra::UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2);
        assert_relative_eq!(r, q.to_rotation_matrix().into_inner(), epsilon = 1e-14);
        assert_relative_eq!(r, rot_x(FRAC_PI_2), epsilon = 1e-14);
    }

    #[test]
    fn so3_log_examples() {
        assert_eq!(so3_log(&Mat3::identity()), Vec3::zeros());
        assert_relative_eq!(
            so3_log(&rot_z(0.3)),
            Vec3::new(0.0, 0.0, 0.3),
            epsilon = 1e-14
        );
        let phi = so3_log(&rot_x(PI));
        assert_relative_eq!(phi, Vec3::new(PI, 0.0, 0.0), epsilon = 1e-12);
        // within the near-pi branch but not exactly pi: sign follows the rotation
        let r = rot_y(-(PI - 5e-8));
        assert_relative_eq!(
            so3_exp(&so3_log(&r)),
            r,
            epsilon = 1e-9
        );
    }

    #[test]
    fn so3_log_pi_sign_convention() {
        let axis = Vec3::new(-1.0, 2.0, 2.0).normalize();
        let r = so3_exp(&(axis * PI));
        let phi = so3_log(&r);
        assert_relative_eq!(phi.norm(), PI, epsilon = 1e-9);
        assert!(phi.x > 0.0);
        assert_relative_eq!(so3_exp(&phi), r, epsilon = 1e-9);
    }

    #[test]
    fn so3_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let phi = random_phi(&mut rng, PI - 0.1);
            assert_relative_eq!(so3_log(&so3_exp(&phi)), phi, epsilon = 1e-9);
        }
        let tiny = Vec3::new(1e-9, -2e-9, 3e-10);
        assert_relative_eq!(so3_log(&so3_exp(&tiny)), tiny, epsilon = 1e-18);
    }

    #[test]
    fn left_jacobian_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let phi = random_phi(&mut rng, PI - 0.1);
            let prod = so3_left_jacobian(&phi) * so3_left_jacobian_inv(&phi);
            assert_relative_eq!(prod, Mat3::identity(), epsilon = 1e-10);
        }
    }

    #[test]
    fn right_jacobian_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let phi = random_phi(&mut rng, 2.5);
            let d = random_vec3(&mut rng, 1e-6);
            let lhs = so3_exp(&(phi + d));
            let rhs = so3_exp(&phi) * so3_exp(&(so3_right_jacobian(&phi) * d));
            assert_relative_eq!(lhs, rhs, epsilon = 1e-11);
        }
    }

    #[test]
    fn sek3_exp_examples() {
        assert_eq!(
            GroupElement::exp(&TangentVector::zeros()),
            GroupElement::identity()
        );
        let (a, b, c) = (
            Vec3::new(1.0, -2.0, 0.5),
            Vec3::new(0.1, 0.2, 0.3),
            Vec3::new(-4.0, 0.0, 9.0),
        );
        let x = GroupElement::exp(&tangent(Vec3::zeros(), a, b, c));
        assert_eq!(x.rotation, Mat3::identity());
        assert_eq!((x.velocity, x.position, x.contact), (a, b, c));
    }

    #[test]
    fn sek3_exp_matches_dense_expm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let xi = random_tangent(&mut rng, PI);
            let closed = GroupElement::exp(&xi).to_matrix();
            let dense = expm_dense(&hat(&xi));
            assert_relative_eq!(closed, dense, epsilon = 1e-9);
        }
    }

    #[test]
    fn sek3_log_examples() {
        assert_eq!(GroupElement::identity().log(), TangentVector::zeros());
        let x = GroupElement::new(
            Mat3::identity(),
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(4.0, 5.0, 6.0),
            Vec3::new(7.0, 8.0, 9.0),
        );
        let xi = x.log();
        assert_eq!(
            xi,
            tangent(Vec3::zeros(), x.velocity, x.position, x.contact)
        );
    }

    #[test]
    fn sek3_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let xi = random_tangent(&mut rng, PI - 0.1);
            let back = GroupElement::exp(&xi).log();
            worst = worst.max((back - xi).amax());
            let x = random_element(&mut rng);
            if so3_log(&x.rotation).norm() < PI - 0.1 {
                let y = GroupElement::exp(&x.log());
                worst = worst.max((y.to_matrix() - x.to_matrix()).amax());
            }
        }
        assert!(worst <= 1e-9, "worst roundtrip error {worst}");
    }

    #[test]
    fn compose_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let a = random_element(&mut rng);
            let b = random_element(&mut rng);
            assert_eq!(GroupElement::identity() * b, b);
            assert_relative_eq!(
                (a * a.inverse()).to_matrix(),
                Matrix6::identity(),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                a.inverse().inverse().to_matrix(),
                a.to_matrix(),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                (a * b).to_matrix(),
                a.to_matrix() * b.to_matrix(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn adjoint_identity_and_definition() {
        assert_eq!(GroupElement::identity().adjoint(), Mat12::identity());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let x = random_element(&mut rng);
            let xi = random_tangent(&mut rng, 2.0);
            let conj = vee(&(x.to_matrix() * hat(&xi) * x.inverse().to_matrix()));
            assert_relative_eq!(x.adjoint() * xi, conj, epsilon = 1e-9);
        }
    }

    #[test]
    fn adjoint_is_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let a = random_element(&mut rng);
            let b = random_element(&mut rng);
            assert_relative_eq!(
                (a * b).adjoint(),
                a.adjoint() * b.adjoint(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn repeated_composition_stays_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut r = Mat3::identity();
        for k in 1..=10_000 {
            r *= so3_exp(&random_phi(&mut rng, PI));
            if k % 1000 == 0 {
                r = orthonormalize(&r);
            }
            assert!(orthonormality_error(&r) <= 1e-8);
        }
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quaternion_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r = so3_exp(&random_phi(&mut rng, PI));
            let q = rotation_to_quaternion(&r);
            assert!(q[0] >= 0.0);
            assert_relative_eq!(quaternion_to_rotation(q), r, epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec3(scale: f64) -> impl Strategy<Value = Vec3> {
            prop::array::uniform3(-scale..scale).prop_map(Vec3::from)
        }

        proptest! {
            #[test]
            fn exp_log_roundtrip(
                axis in vec3(1.0).prop_filter("nonzero", |v| v.norm() > 1e-3),
                angle in 0.0..(PI - 0.1),
                v in vec3(3.0), p in vec3(3.0), c in vec3(3.0),
            ) {
                let xi = tangent(axis.normalize() * angle, v, p, c);
                let back = GroupElement::exp(&xi).log();
                prop_assert!((back - xi).amax() <= 1e-9);
            }
        }
    }
}
