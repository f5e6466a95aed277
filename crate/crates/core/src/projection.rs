//! Perspective (EWA) projection of 3D Gaussians to screen space.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;

/// Constants of the screen-space footprint model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    /// Added to the 2D covariance diagonal, in px^2.
    pub dilation: f64,
    /// Low-pass kernel size; enters the 2D covariance as an isotropic
    /// variance floor of (kernel_size * depth / focal)^2.
    pub kernel_size: f64,
    /// Cull Gaussians closer than this camera-space depth.
    pub near: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            dilation: 0.3,
            kernel_size: 0.05,
            near: 0.01,
        }
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy)]
pub struct Projected {
    /// Pixel coordinates of the projected mean.
    pub mean2d: Vector2<f64>,
    /// 2D covariance including dilation, positive definite.
    pub cov2d: Matrix2<f64>,
    /// Camera-space z.
    pub depth: f64,
}

fn perspective_jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let inv_z = 1.0 / t.z;
    Matrix2x3::new(
        cam.fx * inv_z,
        0.0,
        -cam.fx * t.x * inv_z * inv_z,
        0.0,
        cam.fy * inv_z,
        -cam.fy * t.y * inv_z * inv_z,
    )
}

fn kernel_floor_var(cfg: &ProjectionConfig, cam: &Camera, depth: f64) -> f64 {
    let f_mean = 0.5 * (cam.fx + cam.fy);
    let floor = cfg.kernel_size * depth / f_mean;
    floor * floor
}

/// Project one Gaussian. Returns `None` when the Gaussian lies behind the
/// near plane (culled, not an error).
pub fn project_gaussian(
    position: &Vector3<f64>,
    sigma: &Matrix3<f64>,
    camera: &Camera,
    cfg: &ProjectionConfig,
) -> Option<Projected> {
    let t = camera.to_camera(position);
    if t.z <= cfg.near {
        return None;
    }
    let mean2d = Vector2::new(
        camera.fx * t.x / t.z + camera.cx,
        camera.fy * t.y / t.z + camera.cy,
    );
    let u = perspective_jacobian(camera, &t) * camera.rotation;
    let mut cov2d = u * sigma * u.transpose();
    let pad = cfg.dilation + kernel_floor_var(cfg, camera, t.z);
    cov2d[(0, 0)] += pad;
    cov2d[(1, 1)] += pad;
    Some(Projected {
        mean2d,
        cov2d,
        depth: t.z,
    })
}

/// Gradients flowing out of the projection for one Gaussian.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionGrads {
    pub d_position: Vector3<f64>,
    /// Symmetric gradient with respect to the 3D covariance.
    pub d_sigma: Matrix3<f64>,
}

/// Backward of `project_gaussian`: pull gradients on (mean2d, cov2d) back
/// to (position, Σ). `d_cov2d` must be symmetric.
pub fn project_gaussian_backward(
    position: &Vector3<f64>,
    sigma: &Matrix3<f64>,
    camera: &Camera,
    cfg: &ProjectionConfig,
    d_mean2d: &Vector2<f64>,
    d_cov2d: &Matrix2<f64>,
) -> ProjectionGrads {
    let t = camera.to_camera(position);
    let inv_z = 1.0 / t.z;
    let j = perspective_jacobian(camera, &t);
    let u = j * camera.rotation;

    // cov2d = U Σ Uᵀ + pad(t.z) I
    let d_sigma = u.transpose() * d_cov2d * u;
    let d_u = 2.0 * d_cov2d * u * sigma;
    let d_j = d_u * camera.rotation.transpose();

    // mean2d = (fx tx/tz + cx, fy ty/tz + cy)
    let mut d_t = Vector3::new(
        d_mean2d.x * camera.fx * inv_z,
        d_mean2d.y * camera.fy * inv_z,
        -d_mean2d.x * camera.fx * t.x * inv_z * inv_z
            - d_mean2d.y * camera.fy * t.y * inv_z * inv_z,
    );

    // J entries depend on t as well.
    let inv_z2 = inv_z * inv_z;
    let inv_z3 = inv_z2 * inv_z;
    d_t.x += d_j[(0, 2)] * (-camera.fx * inv_z2);
    d_t.y += d_j[(1, 2)] * (-camera.fy * inv_z2);
    d_t.z += d_j[(0, 0)] * (-camera.fx * inv_z2)
        + d_j[(1, 1)] * (-camera.fy * inv_z2)
        + d_j[(0, 2)] * (2.0 * camera.fx * t.x * inv_z3)
        + d_j[(1, 2)] * (2.0 * camera.fy * t.y * inv_z3);

    // Kernel floor pad depends on depth.
    let f_mean = 0.5 * (camera.fx + camera.fy);
    let k = cfg.kernel_size / f_mean;
    d_t.z += (d_cov2d[(0, 0)] + d_cov2d[(1, 1)]) * 2.0 * k * k * t.z;

    ProjectionGrads {
        d_position: camera.rotation.transpose() * d_t,
        d_sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn axis_camera() -> Camera {
        // Camera at origin looking down +z with fx = fy = 100.
        Camera {
            image_id: 0,
            width: 64,
            height: 64,
            fx: 100.0,
            fy: 100.0,
            cx: 32.0,
            cy: 32.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            image_path: None,
        }
    }

    #[test]
    fn on_axis_projection_lands_on_principal_point() {
        let cam = axis_camera();
        let sigma = Matrix3::identity() * 1e-8;
        let p = project_gaussian(
            &Vector3::new(0.0, 0.0, 1.0),
            &sigma,
            &cam,
            &ProjectionConfig::default(),
        )
        .unwrap();
        assert_relative_eq!(p.mean2d, Vector2::new(32.0, 32.0), epsilon = 1e-12);
        assert_relative_eq!(p.depth, 1.0);
    }

    #[test]
    fn footprint_scales_inverse_square_with_depth() {
        let cam = axis_camera();
        let cfg = ProjectionConfig {
            dilation: 0.0,
            kernel_size: 0.0,
            near: 0.01,
        };
        let sigma = Matrix3::identity() * 0.01;
        let near = project_gaussian(&Vector3::new(0.0, 0.0, 1.0), &sigma, &cam, &cfg).unwrap();
        let far = project_gaussian(&Vector3::new(0.0, 0.0, 2.0), &sigma, &cam, &cfg).unwrap();
        assert_relative_eq!(far.cov2d, near.cov2d / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn behind_camera_is_culled() {
        let cam = axis_camera();
        let sigma = Matrix3::identity();
        assert!(project_gaussian(
            &Vector3::new(0.0, 0.0, -1.0),
            &sigma,
            &cam,
            &ProjectionConfig::default()
        )
        .is_none());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cam = Camera::look_at(
            0,
            64,
            64,
            80.0,
            90.0,
            Vector3::new(0.4, -0.2, -2.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
        );
        let cfg = ProjectionConfig::default();
        let pos = Vector3::new(0.1, 0.2, 0.3);
        let sigma = {
            let m = Matrix3::new(0.4, 0.1, 0.0, 0.2, 0.5, 0.1, 0.1, 0.0, 0.3);
            m * m.transpose() * 0.05
        };
        // Random-ish adjoint seeds.
        let d_mean = Vector2::new(0.7, -1.3);
        let d_cov = Matrix2::new(0.5, -0.2, -0.2, 0.9);

        let grads = project_gaussian_backward(&pos, &sigma, &cam, &cfg, &d_mean, &d_cov);

        let loss = |p: &Vector3<f64>, s: &Matrix3<f64>| -> f64 {
            let pr = project_gaussian(p, s, &cam, &cfg).unwrap();
            d_mean.dot(&pr.mean2d) + (d_cov.transpose() * pr.cov2d).trace()
        };

        let h = 1e-6;
        for k in 0..3 {
            let mut pp = pos;
            let mut pm = pos;
            pp[k] += h;
            pm[k] -= h;
            let fd = (loss(&pp, &sigma) - loss(&pm, &sigma)) / (2.0 * h);
            assert_relative_eq!(grads.d_position[k], fd, epsilon = 1e-5, max_relative = 1e-6);
        }
        for r in 0..3 {
            for c in 0..3 {
                let mut sp = sigma;
                let mut sm = sigma;
                sp[(r, c)] += h;
                sm[(r, c)] -= h;
                let fd = (loss(&pos, &sp) - loss(&pos, &sm)) / (2.0 * h);
                assert_relative_eq!(grads.d_sigma[(r, c)], fd, epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }
}
