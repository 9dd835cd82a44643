//! SE(3) Lie-group operators in closed form.
//!
//! Everything here is an exact (to round-off) closed-form evaluation: the
//! exponential and logarithm maps, the big and small adjoints, the coadjoint,
//! the momentum-indexed `ad~` operator and the right Jacobian of the logarithm
//! `B_r`. A truncated Bernoulli-series evaluation of `B_r` is provided as an
//! independent cross-check oracle.
//!
//! Conventions: a twist stacks the angular part first, `V = [w; v]`. All
//! matrices are dense fixed-size `nalgebra` types (column-major).

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};
use thiserror::Error;

/// Switch to Taylor expansions of the trigonometric coefficient functions
/// below this rotation angle; the closed forms are 0/0 at zero.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Margin on `tr(R) <= -1` below which the logarithm is treated as singular.
pub const LOG_SINGULARITY_MARGIN: f64 = 1e-9;

/// 6x6 twist-transport matrix of a pose (see [`Pose::adjoint`]).
pub type AdjointMatrix = Matrix6<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LieError {
    /// The rotation is at (or numerically indistinguishable from) the pi
    /// singularity where the logarithm is undefined.
    #[error("log map singularity: rotation angle {angle:.9} rad is at or beyond pi")]
    LogSingularity { angle: f64 },
    /// A 4x4 matrix claimed to be an se(3) element has a non-skew rotation block.
    #[error("invalid se(3) element: rotation block deviates from skew-symmetry by {defect:.3e}")]
    InvalidAlgebraElement { defect: f64 },
}

/// Skew-symmetric (cross-product) matrix of a 3-vector: `hat(v) * w = v x w`.
#[rustfmt::skip]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
         0.0, -v.z,  v.y,
         v.z,  0.0, -v.x,
        -v.y,  v.x,  0.0,
    )
}

/// Inverse of [`hat`]; reads the off-diagonal entries without checking skewness.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A rotation matrix, orthogonal with determinant +1 by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Wraps a matrix that is already known to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Validates orthogonality and orientation before wrapping.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, LieError> {
        let r = Rotation(m);
        let defect = r.orthogonality_defect();
        if defect > 1e-12 || (m.determinant() - 1.0).abs() > 1e-12 {
            return Err(LieError::InvalidAlgebraElement { defect });
        }
        Ok(r)
    }

    /// Rodrigues formula: the SO(3) exponential of a rotation vector.
    pub fn exp(psi: &Vector3<f64>) -> Self {
        let theta = psi.norm();
        let (c1, c2) = if theta < SMALL_ANGLE {
            let t2 = theta * theta;
            // sin(t)/t and (1-cos(t))/t^2
            (
                1.0 - t2 / 6.0 + t2 * t2 / 120.0,
                0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            )
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
        };
        let k = hat(psi);
        Rotation(Matrix3::identity() + c1 * k + c2 * (k * k))
    }

    /// SO(3) logarithm as a rotation vector, `|psi| < pi`.
    ///
    /// The angle comes from `cos(phi) = (tr R - 1) / 2`; rotations with
    /// `tr(R) <= -1 + margin` (angle pi) are rejected, with the default
    /// margin [`LOG_SINGULARITY_MARGIN`].
    pub fn log(&self) -> Result<Vector3<f64>, LieError> {
        self.log_with_margin(LOG_SINGULARITY_MARGIN)
    }

    /// [`Rotation::log`] with a caller-chosen singularity margin on `tr(R)`.
    pub fn log_with_margin(&self, margin: f64) -> Result<Vector3<f64>, LieError> {
        let trace = self.0.trace();
        if trace <= -1.0 + margin {
            return Err(LieError::LogSingularity { angle: std::f64::consts::PI });
        }
        let phi = (0.5 * (trace - 1.0)).clamp(-1.0, 1.0).acos();
        let factor = if phi < SMALL_ANGLE {
            // phi / (2 sin phi)
            0.5 * (1.0 + phi * phi / 6.0 + 7.0 * phi.powi(4) / 360.0)
        } else {
            phi / (2.0 * phi.sin())
        };
        Ok(factor * vee(&(self.0 - self.0.transpose())))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        (0.5 * (self.0.trace() - 1.0)).clamp(-1.0, 1.0).acos()
    }

    /// Frobenius norm of `R^T R - I`; drift monitor for long integrations.
    pub fn orthogonality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).norm()
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl std::ops::Mul for &Rotation {
    type Output = Rotation;
    fn mul(self, rhs: &Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Element of se(3): body-frame angular and linear components.
///
/// Also used for log-coordinates `eps = [psi; q]` of a pose error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

impl Twist {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Twist { angular, linear }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist {
            angular: Vector3::new(v[0], v[1], v[2]),
            linear: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x, self.angular.y, self.angular.z,
            self.linear.x, self.linear.y, self.linear.z,
        )
    }

    pub fn norm(&self) -> f64 {
        (self.angular.norm_squared() + self.linear.norm_squared()).sqrt()
    }

    /// 4x4 matrix form of the twist.
    pub fn hat(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&self.angular));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.linear);
        m
    }

    /// Inverse of [`Twist::hat`]. The rotation block must be skew to 1e-12.
    pub fn vee(m: &Matrix4<f64>) -> Result<Self, LieError> {
        let r = m.fixed_view::<3, 3>(0, 0);
        let defect = (r + r.transpose()).abs().max();
        if defect > 1e-12 {
            return Err(LieError::InvalidAlgebraElement { defect });
        }
        Ok(Twist {
            angular: Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]),
            linear: Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
        })
    }

    /// SE(3) exponential map; accepts the entire tangent space.
    pub fn exp(&self) -> Pose {
        Pose {
            rotation: Rotation::exp(&self.angular),
            translation: a_matrix(&self.angular) * self.linear,
        }
    }

    /// Small adjoint `ad_V = [[w^, 0], [v^, w^]]`, the differential of Ad.
    pub fn ad(&self) -> Matrix6<f64> {
        let w = hat(&self.angular);
        let v = hat(&self.linear);
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&w);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&v);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&w);
        m
    }

    /// Coadjoint `ad*_V = ad_V^T`, acting on wrenches.
    pub fn coad(&self) -> Matrix6<f64> {
        self.ad().transpose()
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.angular + rhs.angular, self.linear + rhs.linear)
    }
}

impl std::ops::Sub for Twist {
    type Output = Twist;
    fn sub(self, rhs: Twist) -> Twist {
        Twist::new(self.angular - rhs.angular, self.linear - rhs.linear)
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.angular, -self.linear)
    }
}

impl std::ops::Mul<Twist> for f64 {
    type Output = Twist;
    fn mul(self, rhs: Twist) -> Twist {
        Twist::new(self * rhs.angular, self * rhs.linear)
    }
}

/// Element of se(3)*: a generalized force or momentum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrench {
    pub rotational: Vector3<f64>,
    pub translational: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(rotational: Vector3<f64>, translational: Vector3<f64>) -> Self {
        Wrench { rotational, translational }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Wrench {
            rotational: Vector3::new(v[0], v[1], v[2]),
            translational: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(self) -> Vector6<f64> {
        Vector6::new(
            self.rotational.x, self.rotational.y, self.rotational.z,
            self.translational.x, self.translational.y, self.translational.z,
        )
    }

    /// Natural pairing `<V, f> = w . f_rot + v . f_trans`.
    pub fn pair(&self, v: &Twist) -> f64 {
        self.rotational.dot(&v.angular) + self.translational.dot(&v.linear)
    }

    /// Momentum-indexed operator `ad~_h = [[hw^, hv^], [hv^, 0]]` satisfying
    /// `ad*_X (h) = ad~_h (X)` for every twist `X`.
    pub fn ad_tilde(&self) -> Matrix6<f64> {
        let hw = hat(&self.rotational);
        let hv = hat(&self.translational);
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hw);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&hv);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&hv);
        m
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.rotational + rhs.rotational, self.translational + rhs.translational)
    }
}

impl std::ops::Sub for Wrench {
    type Output = Wrench;
    fn sub(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.rotational - rhs.rotational, self.translational - rhs.translational)
    }
}

/// Rigid-body pose: an element of SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Rotation,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn rotation(&self) -> &Rotation {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        let t = -rt.apply(&self.translation);
        Pose { rotation: rt, translation: t }
    }

    /// Homogeneous 4x4 matrix form.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// SE(3) logarithm: `[psi; q]` with `q = A(psi)^{-1} p`.
    pub fn log(&self) -> Result<Twist, LieError> {
        self.log_with_margin(LOG_SINGULARITY_MARGIN)
    }

    /// [`Pose::log`] with a caller-chosen singularity margin on `tr(R)`.
    pub fn log_with_margin(&self, margin: f64) -> Result<Twist, LieError> {
        let psi = self.rotation.log_with_margin(margin)?;
        let q = a_matrix_inv(&psi)? * self.translation;
        Ok(Twist::new(psi, q))
    }

    /// Big adjoint `Ad_g = [[R, 0], [p^ R, R]]`, transporting twists.
    pub fn adjoint(&self) -> AdjointMatrix {
        let r = self.rotation.matrix();
        let pr = hat(&self.translation) * r;
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&pr);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        m
    }

    /// Transport a twist by this pose without forming the 6x6 matrix.
    pub fn adjoint_apply(&self, v: &Twist) -> Twist {
        let rw = self.rotation.apply(&v.angular);
        Twist::new(rw, self.translation.cross(&rw) + self.rotation.apply(&v.linear))
    }

    /// Separation of two poses: Frobenius norm of the rotation difference
    /// plus the translation gap.
    pub fn distance(&self, other: &Pose) -> f64 {
        (self.rotation.matrix() - other.rotation.matrix()).norm()
            + (self.translation - other.translation).norm()
    }
}

impl std::ops::Mul for &Pose {
    type Output = Pose;
    fn mul(self, rhs: &Pose) -> Pose {
        Pose {
            rotation: &self.rotation * &rhs.rotation,
            translation: self.rotation.apply(&rhs.translation) + self.translation,
        }
    }
}

/// `alpha(x) = (x/2) cot(x/2)`, the scalar appearing in `A(psi)^{-1}`.
fn alpha(x: f64) -> f64 {
    if x < SMALL_ANGLE {
        let x2 = x * x;
        1.0 - x2 / 12.0 - x2 * x2 / 720.0
    } else {
        let h = 0.5 * x;
        h * h.cos() / h.sin()
    }
}

/// Translation factor of the SE(3) exponential (the Rodrigues `A(psi)`).
pub fn a_matrix(psi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = psi.norm();
    let (c1, c2) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        // (1-cos t)/t^2 and (t - sin t)/t^3
        (
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        (
            (1.0 - theta.cos()) / (theta * theta),
            (theta - theta.sin()) / (theta * theta * theta),
        )
    };
    let k = hat(psi);
    Matrix3::identity() + c1 * k + c2 * (k * k)
}

/// Closed-form inverse of [`a_matrix`]:
/// `A^{-1} = I - psi^/2 + (1 - alpha)/|psi|^2 psi^2`, valid for `|psi| < pi`.
pub fn a_matrix_inv(psi: &Vector3<f64>) -> Result<Matrix3<f64>, LieError> {
    let theta = psi.norm();
    if theta >= std::f64::consts::PI {
        return Err(LieError::LogSingularity { angle: theta });
    }
    let c2 = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        // (1 - alpha(t))/t^2
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30_240.0
    } else {
        (1.0 - alpha(theta)) / (theta * theta)
    };
    let k = hat(psi);
    Ok(Matrix3::identity() - 0.5 * k + c2 * (k * k))
}

/// Taylor switch for the `gamma` coefficients. Unlike the other coefficient
/// functions their closed forms cancel two `1/theta^4`-sized terms, and the
/// error lands on the translation block of `ad_X`, which does not shrink
/// with the angle; the closed form only reaches 1e-12 accuracy for
/// `theta^3 >> eps * |q|`.
const GAMMA_TAYLOR_THRESHOLD: f64 = 0.25;

/// `gamma_1` coefficient of the closed-form right Jacobian.
fn gamma1(theta: f64) -> f64 {
    if theta < GAMMA_TAYLOR_THRESHOLD {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        1.0 / 12.0 - t4 / 30_240.0 - t4 * t2 / 604_800.0 - t4 * t4 / 15_966_720.0
    } else {
        2.0 / (theta * theta)
            + (theta + 3.0 * theta.sin()) / (4.0 * theta * (theta.cos() - 1.0))
    }
}

/// `gamma_2` coefficient of the closed-form right Jacobian.
fn gamma2(theta: f64) -> f64 {
    if theta < GAMMA_TAYLOR_THRESHOLD {
        let t2 = theta * theta;
        let t4 = t2 * t2;
        -1.0 / 720.0 - t2 / 15_120.0 - t4 / 403_200.0 - t4 * t2 / 11_975_040.0
            - 691.0 * t4 * t4 / 261_534_873_600.0
    } else {
        1.0 / theta.powi(4)
            + (theta + theta.sin()) / (4.0 * theta.powi(3) * (theta.cos() - 1.0))
    }
}

/// Right Jacobian of the SE(3) logarithm in closed form:
///
/// `B_r(X) = I + ad_X/2 + gamma_1 ad_X^2 + gamma_2 ad_X^4`,
///
/// mapping the body velocity of a curve to the rate of its log-coordinates.
/// Requires `|psi| < pi`. Satisfies `B_r(0) = I` and `B_r(eps) eps = eps`.
pub fn b_r(x: &Twist) -> Result<Matrix6<f64>, LieError> {
    let theta = x.angular.norm();
    if theta >= std::f64::consts::PI {
        return Err(LieError::LogSingularity { angle: theta });
    }
    let ad = x.ad();
    let ad2 = ad * ad;
    let ad4 = ad2 * ad2;
    Ok(Matrix6::identity() + 0.5 * ad + gamma1(theta) * ad2 + gamma2(theta) * ad4)
}

/// Bernoulli numbers `B_0..=B_30` (B_1 = -1/2 convention).
const BERNOULLI: [f64; 31] = [
    1.0,
    -0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    5.0 / 66.0,
    0.0,
    -691.0 / 2730.0,
    0.0,
    7.0 / 6.0,
    0.0,
    -3617.0 / 510.0,
    0.0,
    43_867.0 / 798.0,
    0.0,
    -174_611.0 / 330.0,
    0.0,
    854_513.0 / 138.0,
    0.0,
    -236_364_091.0 / 2730.0,
    0.0,
    8_553_103.0 / 6.0,
    0.0,
    -23_749_461_029.0 / 870.0,
    0.0,
    8_615_841_276_005.0 / 14_322.0,
];

/// Series oracle for [`b_r`]: `sum_n (-1)^n B_n/n! ad_X^n` truncated to
/// `n_terms` terms. Converges for `|psi| < 2 pi`.
pub fn b_r_series(x: &Twist, n_terms: usize) -> Matrix6<f64> {
    assert!(n_terms >= 1, "series needs at least one term");
    assert!(n_terms <= BERNOULLI.len(), "Bernoulli table holds {} terms", BERNOULLI.len());
    let ad = x.ad();
    let mut sum = Matrix6::identity();
    let mut ad_pow = Matrix6::identity();
    let mut factorial = 1.0;
    for (n, b_n) in BERNOULLI.iter().enumerate().take(n_terms).skip(1) {
        ad_pow *= ad;
        factorial *= n as f64;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let coeff = sign * b_n / factorial;
        if coeff != 0.0 {
            sum += coeff * ad_pow;
        }
    }
    sum
}
