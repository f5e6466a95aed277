//! Deterministic synthetic datasets for tests and demos. Each scene is
//! a ground-truth Gaussian cloud plus a camera rig; ground-truth images
//! come from our own renderer, and the sparse reconstruction is derived
//! by projecting the cloud centers into every view.

use std::path::Path;

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image_io::save_ppm;
use crate::ply::save_ply;
use crate::rasterizer::{render, RasterConfig};
use crate::scene::{logit, GaussianCloud};
use crate::sfm::{CameraModel, SfmCamera, SfmDataset, SfmImage, SfmPoint};
use crate::trainer::TrainView;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthScene {
    /// ~50 Gaussians near the origin with a few far sparse points, a
    /// 12-camera ring. Small enough to train in seconds.
    Toy,
    /// Four well-separated clusters with per-cluster camera rings; made
    /// for block subdivision.
    Town,
    /// A flat plane with a high-contrast vertical edge, for probing the
    /// edge and frequency terms.
    Edge,
}

impl std::str::FromStr for SynthScene {
    type Err = Error;
    fn from_str(s: &str) -> Result<SynthScene> {
        match s {
            "toy" => Ok(SynthScene::Toy),
            "town" => Ok(SynthScene::Town),
            "edge" => Ok(SynthScene::Edge),
            other => Err(Error::InvalidParameter(format!(
                "unknown scene '{other}' (expected toy, town, or edge)"
            ))),
        }
    }
}

pub struct SynthOutput {
    pub gt_cloud: GaussianCloud,
    pub views: Vec<TrainView>,
    pub dataset: SfmDataset,
}

fn ring_camera(
    image_id: u32,
    size: usize,
    focal: f64,
    center: Vector3<f64>,
    radius: f64,
    height: f64,
    angle: f64,
) -> Camera {
    let eye = center + Vector3::new(radius * angle.cos(), radius * angle.sin(), height);
    Camera::look_at(
        image_id,
        size,
        size,
        focal,
        focal,
        eye,
        center,
        Vector3::new(0.0, 0.0, 1.0),
    )
}

fn random_gaussian<R: Rng>(
    rng: &mut R,
    center: Vector3<f64>,
    spread: f64,
    cloud: &mut GaussianCloud,
) {
    let q = Vector4::new(
        rng.gen_range(-1.0..1.0_f64),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
    .normalize();
    cloud.push(
        center
            + Vector3::new(
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread..spread),
                rng.gen_range(-spread * 0.6..spread * 0.6),
            ),
        Vector3::new(
            rng.gen_range(-2.6..-1.9),
            rng.gen_range(-2.6..-1.9),
            rng.gen_range(-2.6..-1.9),
        ),
        q,
        logit(rng.gen_range(0.4..0.9)),
        Vector3::new(
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.2..0.8),
        ),
        None,
    );
}

fn toy(seed: u64) -> (GaussianCloud, Vec<Camera>, Vec<Vector3<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = GaussianCloud::default();
    for _ in 0..50 {
        random_gaussian(&mut rng, Vector3::zeros(), 0.5, &mut cloud);
    }
    let cameras = (0..12)
        .map(|i| {
            let angle = i as f64 / 12.0 * std::f64::consts::TAU;
            ring_camera(i as u32 + 1, 64, 80.0, Vector3::zeros(), 3.0, 1.2, angle)
        })
        .collect();
    // Isolated sparse points far from the cluster: their nearest-neighbor
    // distances force large initial scales, which exercises the scale
    // constraint from the very first pass.
    let extra = vec![
        Vector3::new(1.8, 0.0, 0.4),
        Vector3::new(-1.7, 0.5, -0.3),
        Vector3::new(0.3, -1.9, 0.2),
    ];
    (cloud, cameras, extra)
}

fn town(seed: u64) -> (GaussianCloud, Vec<Camera>, Vec<Vector3<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [
        Vector3::new(4.0, 4.0, 0.0),
        Vector3::new(-4.0, 4.0, 0.0),
        Vector3::new(4.0, -4.0, 0.0),
        Vector3::new(-4.0, -4.0, 0.0),
    ];
    let mut cloud = GaussianCloud::default();
    let mut cameras = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        // Two vertically separated blobs per cluster, so a two-per-axis
        // subdivision cuts between coherent pieces instead of through
        // them and every octant block ends up trainable.
        for dz in [-0.6, 0.6] {
            let blob = center + Vector3::new(0.0, 0.0, dz);
            for _ in 0..30 {
                random_gaussian(&mut rng, blob, 0.35, &mut cloud);
            }
        }
        for i in 0..12 {
            let angle = i as f64 / 12.0 * std::f64::consts::TAU;
            cameras.push(ring_camera(
                (c * 12 + i + 1) as u32,
                48,
                60.0,
                *center,
                2.6,
                0.0,
                angle,
            ));
        }
    }
    (cloud, cameras, Vec::new())
}

fn edge(seed: u64) -> (GaussianCloud, Vec<Camera>, Vec<Vector3<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = GaussianCloud::default();
    let n = 12;
    // A vertical plane at y = 0 spanning x and z, so the frontal arc
    // below views it face-on.
    for gz in 0..n {
        for gx in 0..n {
            let x = -0.6 + 1.2 * gx as f64 / (n - 1) as f64;
            let z = -0.6 + 1.2 * gz as f64 / (n - 1) as f64;
            let bright = x >= 0.0;
            let v = if bright { 0.9 } else { 0.1 };
            cloud.push(
                Vector3::new(x, rng.gen_range(-0.02..0.02), z),
                Vector3::from_element(-2.6),
                Vector4::new(1.0, 0.0, 0.0, 0.0),
                logit(0.85),
                Vector3::new(v, v, v),
                None,
            );
        }
    }
    let cameras = (0..8)
        .map(|i| {
            // A shallow frontal arc facing the plane.
            let angle = -0.35 + 0.7 * i as f64 / 7.0;
            let eye = Vector3::new(2.4 * angle.sin(), -2.4 * angle.cos(), 0.1);
            Camera::look_at(
                i as u32 + 1,
                64,
                64,
                90.0,
                90.0,
                eye,
                Vector3::zeros(),
                Vector3::new(0.0, 0.0, 1.0),
            )
        })
        .collect();
    (cloud, cameras, Vec::new())
}

/// Project world points into every camera to build the observation
/// structure of a sparse reconstruction.
fn build_dataset(
    points: &[Vector3<f64>],
    colors: &[[u8; 3]],
    cameras: &[Camera],
    max_depth: f64,
) -> SfmDataset {
    let intr = &cameras[0];
    let sfm_camera = SfmCamera {
        camera_id: 1,
        model: CameraModel::Pinhole,
        width: intr.width,
        height: intr.height,
        fx: intr.fx,
        fy: intr.fy,
        cx: intr.cx,
        cy: intr.cy,
    };
    let mut images: Vec<SfmImage> = cameras
        .iter()
        .map(|cam| SfmImage {
            image_id: cam.image_id,
            qvec: rotation_to_quat(&cam.rotation),
            tvec: cam.translation,
            camera_id: 1,
            name: format!("img_{:04}.ppm", cam.image_id),
            points2d: Vec::new(),
        })
        .collect();
    let mut sfm_points: Vec<SfmPoint> = points
        .iter()
        .enumerate()
        .map(|(i, p)| SfmPoint {
            point_id: i as u64 + 1,
            position: *p,
            color: colors[i],
            error: 0.5,
            track: Vec::new(),
        })
        .collect();
    for (ci, cam) in cameras.iter().enumerate() {
        for (pi, p) in points.iter().enumerate() {
            let pc = cam.to_camera(p);
            if pc.z <= 0.05 || pc.z > max_depth {
                continue;
            }
            let u = cam.fx * pc.x / pc.z + cam.cx;
            let v = cam.fy * pc.y / pc.z + cam.cy;
            if u < 0.0 || v < 0.0 || u >= cam.width as f64 || v >= cam.height as f64 {
                continue;
            }
            let slot = images[ci].points2d.len() as u32;
            images[ci].points2d.push((u, v, pi as i64 + 1));
            sfm_points[pi].track.push((cam.image_id, slot));
        }
    }
    SfmDataset {
        cameras: vec![sfm_camera],
        images,
        points: sfm_points,
    }
}

/// Inverse of the quaternion-to-matrix map for proper rotations,
/// stable across all trace signs.
pub fn rotation_to_quat(r: &nalgebra::Matrix3<f64>) -> Vector4<f64> {
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let q = if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        Vector4::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        Vector4::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        Vector4::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        Vector4::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        )
    };
    q.normalize()
}

pub fn generate(scene: SynthScene, seed: u64) -> Result<SynthOutput> {
    let (gt_cloud, cameras, extra_points) = match scene {
        SynthScene::Toy => toy(seed),
        SynthScene::Town => town(seed),
        SynthScene::Edge => edge(seed),
    };
    let raster = RasterConfig::default();
    let views: Vec<TrainView> = cameras
        .iter()
        .map(|camera| {
            let (truth, _) = render(&gt_cloud, camera, &raster);
            TrainView {
                camera: camera.clone(),
                truth,
            }
        })
        .collect();

    // Sparse reconstructions carry triangulation error: jitter the
    // point set so training starts from a noisy initialization.
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let mut points: Vec<Vector3<f64>> = gt_cloud
        .positions
        .iter()
        .map(|p| {
            p + Vector3::new(
                noise.gen_range(-0.03..0.03),
                noise.gen_range(-0.03..0.03),
                noise.gen_range(-0.03..0.03),
            )
        })
        .collect();
    let mut colors: Vec<[u8; 3]> = gt_cloud
        .colors
        .iter()
        .map(|c| {
            [
                (c[0].clamp(0.0, 1.0) * 255.0).round() as u8,
                (c[1].clamp(0.0, 1.0) * 255.0).round() as u8,
                (c[2].clamp(0.0, 1.0) * 255.0).round() as u8,
            ]
        })
        .collect();
    for p in extra_points {
        points.push(p);
        colors.push([128, 128, 128]);
    }
    // Feature matching does not span clusters in practice: cap the
    // observation depth so town cameras only track their own cluster.
    let max_depth = match scene {
        SynthScene::Town => 6.0,
        _ => f64::INFINITY,
    };
    let dataset = build_dataset(&points, &colors, &cameras, max_depth);
    dataset.validate()?;
    Ok(SynthOutput {
        gt_cloud,
        views,
        dataset,
    })
}

/// Write the dataset as `cameras.txt` / `images.txt` / `points3D.txt`,
/// ground-truth renders under `images/`, and the cloud as `gt.ply`.
pub fn write(out: &SynthOutput, dir: &Path) -> Result<()> {
    out.dataset.save(dir)?;
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|source| Error::Io {
        path: image_dir.clone(),
        source,
    })?;
    for (view, meta) in out.views.iter().zip(&out.dataset.images) {
        save_ppm(&view.truth, &image_dir.join(&meta.name))?;
    }
    save_ply(&out.gt_cloud, &dir.join("gt.ply"))
}
