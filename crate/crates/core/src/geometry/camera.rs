//! Pinhole camera model.

use nalgebra::{Vector2, Vector3};

use super::GeomError;

/// Pinhole intrinsics; principal point and focal lengths in pixels.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        assert!(fx > 0.0 && fy > 0.0, "focal lengths must be positive");
        assert!(cx >= 0.0 && cx < width as f64, "principal point outside image");
        assert!(cy >= 0.0 && cy < height as f64, "principal point outside image");
        Self { fx, fy, cx, cy, width, height }
    }

    /// Continuous pixel coordinates inside `[0, w-1] x [0, h-1]`.
    pub fn in_bounds(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.x <= (self.width - 1) as f64 && p.y >= 0.0 && p.y <= (self.height - 1) as f64
    }

    /// `K^{-1} [u v 1]^T`: the camera-frame ray direction at unit depth.
    pub fn unproject_dir(&self, p: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0)
    }

    /// Factor converting distance along the unit ray through `p` into
    /// camera-frame z depth.
    pub fn ray_dist_to_z(&self, p: &Vector2<f64>) -> f64 {
        1.0 / self.unproject_dir(p).norm()
    }
}

/// Projects a camera-frame point to the image plane. The point must be in
/// front of the camera.
pub fn project(k: &Intrinsics, x: &Vector3<f64>) -> Result<Vector2<f64>, GeomError> {
    if x.z <= 0.0 {
        return Err(GeomError::BehindCamera { z: x.z });
    }
    Ok(Vector2::new(k.fx * x.x / x.z + k.cx, k.fy * x.y / x.z + k.cy))
}

/// Lifts a pixel to the camera frame at camera-z depth `z > 0`.
pub fn backproject(k: &Intrinsics, p: &Vector2<f64>, z: f64) -> Result<Vector3<f64>, GeomError> {
    if z <= 0.0 {
        return Err(GeomError::InvalidDepth { z });
    }
    Ok(Vector3::new((p.x - k.cx) * z / k.fx, (p.y - k.cy) * z / k.fy, z))
}
