//! se(3) six-vectors and their SE(3) group elements.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::Rng;

use super::GeomError;
use crate::util::standard_normal;

/// Rotation angle beyond which the logarithm is rejected as ill-conditioned.
pub const LOG_ANGLE_LIMIT: f64 = std::f64::consts::PI - 1e-4;

/// Below this squared angle the exp/log coefficients switch to series form.
const SMALL_ANGLE_SQ: f64 = 1e-8;

/// A camera pose on the Lie algebra: rotation part `omega` (radians-scaled
/// axis) followed by translation part `tau` (scene units).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose6(pub [f64; 6]);

impl Pose6 {
    pub fn zero() -> Self {
        Pose6([0.0; 6])
    }

    pub fn omega(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn tau(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Rigid transform as rotation matrix plus translation, camera-to-world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Geodesic rotation angle, radians. Uses the atan2 form, which stays
    /// accurate near zero where the bare trace formula loses digits.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let skew = Vector3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
        let s = 0.5 * skew.norm();
        let c = 0.5 * (r.trace() - 1.0);
        s.atan2(c)
    }

    /// Max deviation from orthonormality plus unit determinant.
    pub fn orthonormality_defect(&self) -> f64 {
        let rtr = self.rotation.transpose() * self.rotation;
        let mut d: f64 = (self.rotation.determinant() - 1.0).abs();
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { 1.0 } else { 0.0 };
                d = d.max((rtr[(i, j)] - id).abs());
            }
        }
        d
    }

    /// Row-major 3x4 `[R | t]`, the on-disk pose encoding.
    pub fn to_rows_3x4(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            for j in 0..3 {
                out[i * 4 + j] = self.rotation[(i, j)];
            }
            out[i * 4 + 3] = self.translation[i];
        }
        out
    }

    pub fn from_rows_3x4(rows: &[f64; 12]) -> Self {
        let mut rotation = Matrix3::zeros();
        let mut translation = Vector3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                rotation[(i, j)] = rows[i * 4 + j];
            }
            translation[i] = rows[i * 4 + 3];
        }
        Self { rotation, translation }
    }
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues coefficients (A, B, C) = (sinθ/θ, (1-cosθ)/θ², (1-A)/θ²),
/// with series expansions near zero.
fn exp_coeffs(theta_sq: f64) -> (f64, f64, f64) {
    if theta_sq < SMALL_ANGLE_SQ {
        let a = 1.0 - theta_sq / 6.0 + theta_sq * theta_sq / 120.0;
        let b = 0.5 - theta_sq / 24.0 + theta_sq * theta_sq / 720.0;
        let c = 1.0 / 6.0 - theta_sq / 120.0 + theta_sq * theta_sq / 5040.0;
        (a, b, c)
    } else {
        let theta = theta_sq.sqrt();
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta_sq;
        let c = (1.0 - a) / theta_sq;
        (a, b, c)
    }
}

/// Exponential map se(3) -> SE(3). The rotation angle equals `‖omega‖`.
pub fn exp_se3(xi: &Pose6) -> RigidTransform {
    let w = xi.omega();
    let tau = xi.tau();
    let theta_sq = w.norm_squared();
    let (a, b, c) = exp_coeffs(theta_sq);
    let wx = skew(&w);
    let wx2 = wx * wx;
    let rotation = Matrix3::identity() + wx * a + wx2 * b;
    let v = Matrix3::identity() + wx * b + wx2 * c;
    RigidTransform { rotation, translation: v * tau }
}

/// Logarithm SE(3) -> se(3). Rejects rotations within `1e-4` of π, where
/// the axis extraction is ill-conditioned.
pub fn log_se3(t: &RigidTransform) -> Result<Pose6, GeomError> {
    let angle = t.rotation_angle();
    if angle > LOG_ANGLE_LIMIT {
        return Err(GeomError::IllConditioned { angle });
    }
    let r = &t.rotation;
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let theta_sq = angle * angle;
    // omega = k * vee with k = θ / (2 sin θ).
    let k = if theta_sq < SMALL_ANGLE_SQ {
        0.5 + theta_sq / 12.0 + 7.0 * theta_sq * theta_sq / 720.0
    } else {
        0.5 * angle / angle.sin()
    };
    let w = vee * k;
    let (a, b, _) = exp_coeffs(theta_sq);
    // V^{-1} = I - wx/2 + d * wx², d = (1 - A/(2B)) / θ².
    let d = if theta_sq < SMALL_ANGLE_SQ {
        1.0 / 12.0 + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0
    } else {
        (1.0 - a / (2.0 * b)) / theta_sq
    };
    let wx = skew(&w);
    let v_inv = Matrix3::identity() - wx * 0.5 + (wx * wx) * d;
    let tau = v_inv * t.translation;
    Ok(Pose6([w.x, w.y, w.z, tau.x, tau.y, tau.z]))
}

/// Perturbs a ground-truth pose by `exp(level * n) ∘ pose` with
/// `n ~ N(0, I_6)` drawn from `rng`. Left composition keeps the noise
/// magnitude independent of the pose itself.
pub fn perturb_pose(pose: &RigidTransform, level: f64, rng: &mut impl Rng) -> RigidTransform {
    if level == 0.0 {
        return *pose;
    }
    let mut xi = [0.0; 6];
    for v in &mut xi {
        *v = level * standard_normal(rng);
    }
    exp_se3(&Pose6(xi)).compose(pose)
}

/// 20-term matrix exponential of the 4x4 twist, test oracle quality only.
pub fn exp_se3_series(xi: &Pose6, terms: usize) -> RigidTransform {
    let w = xi.omega();
    let tau = xi.tau();
    let mut twist = Matrix4::zeros();
    let wx = skew(&w);
    for i in 0..3 {
        for j in 0..3 {
            twist[(i, j)] = wx[(i, j)];
        }
        twist[(i, 3)] = tau[i];
    }
    let mut acc = Matrix4::identity();
    let mut term = Matrix4::identity();
    for k in 1..=terms {
        term = term * twist / (k as f64);
        acc += term;
    }
    let mut rotation = Matrix3::zeros();
    let mut translation = Vector3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            rotation[(i, j)] = acc[(i, j)];
        }
        translation[i] = acc[(i, 3)];
    }
    RigidTransform { rotation, translation }
}
