//! Gauge alignment and pose-error metrics.
//!
//! Joint pose-and-field optimization fixes no world frame, so estimated
//! poses are fit to the ground truth with a global similarity (Umeyama on
//! camera centers) before errors are measured. The unaligned errors are
//! reported too.

use nalgebra::{Matrix3, Vector3};

use super::se3::RigidTransform;
use super::GeomError;

/// Global similarity `x -> scale * rotation * x + translation`.
#[derive(Clone, Copy, Debug)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }

    /// Maps a camera-to-world pose into the destination frame.
    pub fn apply_pose(&self, pose: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * pose.rotation,
            translation: self.apply(&pose.translation),
        }
    }

    pub fn invert(&self) -> Similarity {
        let rt = self.rotation.transpose();
        let s = 1.0 / self.scale;
        Similarity { scale: s, rotation: rt, translation: -(rt * self.translation) * s }
    }
}

/// Least-squares similarity from `src` points onto `dst` (Umeyama).
/// Degenerate sets (fewer than two points, or zero spread) fall back to
/// unit scale and identity rotation with a mean-shift translation.
pub fn fit_similarity(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Similarity {
    assert_eq!(src.len(), dst.len());
    let n = src.len();
    if n == 0 {
        return Similarity::identity();
    }
    let mu_s: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n as f64;
    let mu_d: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n as f64;
    let mut var_s = 0.0;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let cs = s - mu_s;
        let cd = d - mu_d;
        var_s += cs.norm_squared();
        cov += cd * cs.transpose();
    }
    var_s /= n as f64;
    cov /= n as f64;
    if n < 2 || var_s < 1e-12 {
        return Similarity {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: mu_d - mu_s,
        };
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd");
    let vt = svd.v_t.expect("svd");
    let mut s_fix = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s_fix[(2, 2)] = -1.0;
    }
    let rotation = u * s_fix * vt;
    let scale = (svd.singular_values.dot(&s_fix.diagonal())) / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Similarity { scale, rotation, translation }
}

/// Mean rotation error (degrees) and mean translation error (x100).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoseError {
    pub rot_deg: f64,
    pub trans_x100: f64,
}

fn mean_errors(est: &[RigidTransform], gt: &[RigidTransform]) -> PoseError {
    let n = est.len() as f64;
    let mut rot = 0.0;
    let mut trans = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let rel = RigidTransform::new(g.rotation.transpose() * e.rotation, Vector3::zeros());
        rot += rel.rotation_angle().to_degrees();
        trans += (e.translation - g.translation).norm() * 100.0;
    }
    PoseError { rot_deg: rot / n, trans_x100: trans / n }
}

/// Pose errors after similarity alignment of the estimated set onto the
/// ground truth. This is the headline metric.
pub fn pose_error(est: &[RigidTransform], gt: &[RigidTransform]) -> Result<PoseError, GeomError> {
    let sim = alignment(est, gt)?;
    let aligned: Vec<RigidTransform> = est.iter().map(|p| sim.apply_pose(p)).collect();
    Ok(mean_errors(&aligned, gt))
}

/// Pose errors in the raw (unaligned) frames.
pub fn pose_error_unaligned(
    est: &[RigidTransform],
    gt: &[RigidTransform],
) -> Result<PoseError, GeomError> {
    check_lists(est, gt)?;
    Ok(mean_errors(est, gt))
}

/// The similarity mapping estimated camera centers onto ground truth.
pub fn alignment(est: &[RigidTransform], gt: &[RigidTransform]) -> Result<Similarity, GeomError> {
    check_lists(est, gt)?;
    let src: Vec<Vector3<f64>> = est.iter().map(|p| p.translation).collect();
    let dst: Vec<Vector3<f64>> = gt.iter().map(|p| p.translation).collect();
    Ok(fit_similarity(&src, &dst))
}

fn check_lists(est: &[RigidTransform], gt: &[RigidTransform]) -> Result<(), GeomError> {
    if est.is_empty() || gt.is_empty() {
        return Err(GeomError::EmptyPoseList);
    }
    if est.len() != gt.len() {
        return Err(GeomError::LengthMismatch { est: est.len(), gt: gt.len() });
    }
    Ok(())
}
