//! Pinhole camera model with world-to-camera extrinsics.

use nalgebra::{Matrix3, Vector3};
use std::path::PathBuf;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Camera {
    pub image_id: u32,
    pub width: usize,
    pub height: usize,
    /// Focal lengths in pixels.
    pub fx: f64,
    pub fy: f64,
    /// Principal point in pixels.
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, orthonormal.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation: `t_cam = R * p_world + translation`.
    pub translation: Vector3<f64>,
    /// Ground-truth image path, when the camera comes from a dataset.
    pub image_path: Option<PathBuf>,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "camera {}: focal lengths must be positive",
                self.image_id
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter(format!(
                "camera {}: zero image dimensions",
                self.image_id
            )));
        }
        let err = (self.rotation * self.rotation.transpose() - Matrix3::identity()).norm();
        if err > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "camera {}: rotation not orthonormal (deviation {err:.2e})",
                self.image_id
            )));
        }
        Ok(())
    }

    /// Camera center in world coordinates: `-Rᵀ t`.
    pub fn position(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    /// Transform a world point into camera space.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Simple look-at constructor used by synthetic scenes and tests.
    /// The camera looks from `eye` towards `target` with +z forward.
    pub fn look_at(
        image_id: u32,
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Camera {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        let translation = -rotation * eye;
        Camera {
            image_id,
            width,
            height,
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            translation,
            image_path: None,
        }
    }
}
