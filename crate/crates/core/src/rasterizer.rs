//! Tile-based forward rasterization of a Gaussian cloud and the analytic
//! backward pass from per-pixel loss gradients to per-parameter gradients.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::{GradientImage, Image};
use crate::projection::{project_gaussian, project_gaussian_backward, ProjectionConfig};
use crate::scene::{
    covariance_3d, eval_color, quat_rotation_jacobian, quat_to_rotation, sigmoid, GaussianCloud,
    SH1_COEFF,
};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    /// Square tile edge in pixels.
    pub tile_size: usize,
    /// Footprint radius as a multiple of the largest 2D standard deviation.
    pub radius_sigma: f64,
    /// Splats with per-pixel alpha below this are skipped.
    pub alpha_min: f64,
    /// Per-pixel alpha clamp.
    pub alpha_max: f64,
    /// Stop compositing a pixel once transmittance falls below this.
    pub transmittance_min: f64,
    pub background: [f64; 3],
    pub projection: ProjectionConfig,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            tile_size: 16,
            radius_sigma: 3.0,
            alpha_min: 1.0 / 255.0,
            alpha_max: 0.99,
            transmittance_min: 1e-4,
            background: [0.0; 3],
            projection: ProjectionConfig::default(),
        }
    }
}

impl RasterConfig {
    /// Variant with every cutoff relaxed so the forward map is smooth;
    /// used by finite-difference gradient checks.
    pub fn smooth_for_gradcheck(mut self) -> Self {
        self.radius_sigma = 9.0;
        self.alpha_min = 0.0;
        self.transmittance_min = 0.0;
        self
    }
}

/// One Gaussian prepared for rasterization in a given view.
#[derive(Debug, Clone)]
struct PreparedSplat {
    index: usize,
    mean2d: Vector2<f64>,
    /// Inverse of the 2D covariance.
    conic: Matrix2<f64>,
    depth: f64,
    radius: f64,
    opacity: f64,
    color: Vector3<f64>,
}

/// Gaussians overlapping one tile, sorted front to back.
#[derive(Debug, Clone)]
pub struct TileBin {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    /// (depth, splat slot) pairs, ascending depth, ties by index.
    items: Vec<(f64, usize)>,
}

/// Side data from a forward pass, needed by backward and densification.
#[derive(Debug, Clone)]
pub struct RenderAux {
    pub width: usize,
    pub height: usize,
    pub image_id: u32,
    pub cloud_len: usize,
    /// Per-pixel transmittance remaining after compositing.
    pub final_transmittance: Vec<f64>,
    /// Per-Gaussian maximum alpha*T over all pixels (0 for culled).
    pub max_contribution: Vec<f64>,
    /// Per-Gaussian screen footprint radius in pixels (0 for culled).
    pub radii: Vec<f64>,
}

/// Per-parameter gradients mirroring `GaussianCloud` shapes.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    pub positions: Vec<Vector3<f64>>,
    pub log_scales: Vec<Vector3<f64>>,
    pub rotations: Vec<Vector4<f64>>,
    pub opacities: Vec<f64>,
    pub colors: Vec<Vector3<f64>>,
    pub sh1: Option<Vec<[f64; 9]>>,
    /// Norm of the screen-space mean gradient in NDC units, the signal
    /// densification thresholds are calibrated against.
    pub screen: Vec<f64>,
}

impl GradientBuffer {
    pub fn zeros_like(cloud: &GaussianCloud) -> Self {
        let n = cloud.len();
        GradientBuffer {
            positions: vec![Vector3::zeros(); n],
            log_scales: vec![Vector3::zeros(); n],
            rotations: vec![Vector4::zeros(); n],
            opacities: vec![0.0; n],
            colors: vec![Vector3::zeros(); n],
            sh1: cloud.sh1.as_ref().map(|_| vec![[0.0; 9]; n]),
            screen: vec![0.0; n],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.log_scales.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.rotations.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.opacities.iter().all(|x| x.is_finite())
            && self.colors.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn prepare_splats(
    cloud: &GaussianCloud,
    camera: &Camera,
    cfg: &RasterConfig,
) -> (Vec<PreparedSplat>, Vec<f64>) {
    let cam_pos = camera.position();
    let mut splats = Vec::new();
    let mut radii = vec![0.0; cloud.len()];
    for i in 0..cloud.len() {
        let sigma = match covariance_3d(&cloud.log_scales[i], &cloud.rotations[i]) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let Some(proj) = project_gaussian(&cloud.positions[i], &sigma, camera, &cfg.projection)
        else {
            continue;
        };
        let det = proj.cov2d[(0, 0)] * proj.cov2d[(1, 1)] - proj.cov2d[(0, 1)] * proj.cov2d[(1, 0)];
        if det <= 0.0 {
            continue;
        }
        let conic = Matrix2::new(
            proj.cov2d[(1, 1)] / det,
            -proj.cov2d[(0, 1)] / det,
            -proj.cov2d[(1, 0)] / det,
            proj.cov2d[(0, 0)] / det,
        );
        // Largest eigenvalue of the 2x2 covariance bounds the footprint.
        let mid = 0.5 * (proj.cov2d[(0, 0)] + proj.cov2d[(1, 1)]);
        let lam_max = mid + (mid * mid - det).max(0.0).sqrt();
        let radius = cfg.radius_sigma * lam_max.sqrt();
        radii[i] = radius;
        let dir = (cloud.positions[i] - cam_pos).normalize();
        let color = eval_color(
            &cloud.colors[i],
            cloud.sh1.as_ref().map(|s| &s[i]),
            &dir,
        );
        splats.push(PreparedSplat {
            index: i,
            mean2d: proj.mean2d,
            conic,
            depth: proj.depth,
            radius,
            opacity: sigmoid(cloud.opacities[i]),
            color,
        });
    }
    (splats, radii)
}

fn bin_tiles(splats: &[PreparedSplat], width: usize, height: usize, tile: usize) -> Vec<TileBin> {
    let tiles_x = width.div_ceil(tile);
    let tiles_y = height.div_ceil(tile);
    let mut bins: Vec<TileBin> = (0..tiles_x * tiles_y)
        .map(|t| {
            let tx = t % tiles_x;
            let ty = t / tiles_x;
            TileBin {
                x0: tx * tile,
                y0: ty * tile,
                x1: ((tx + 1) * tile).min(width),
                y1: ((ty + 1) * tile).min(height),
                items: Vec::new(),
            }
        })
        .collect();
    for (slot, s) in splats.iter().enumerate() {
        let min_x = ((s.mean2d.x - s.radius).floor().max(0.0)) as usize;
        let max_x = (s.mean2d.x + s.radius).ceil().max(0.0) as usize;
        let min_y = ((s.mean2d.y - s.radius).floor().max(0.0)) as usize;
        let max_y = (s.mean2d.y + s.radius).ceil().max(0.0) as usize;
        if min_x >= width || min_y >= height || s.mean2d.x + s.radius < 0.0 || s.mean2d.y + s.radius < 0.0
        {
            continue;
        }
        let tx0 = min_x / tile;
        let tx1 = (max_x.min(width - 1)) / tile;
        let ty0 = min_y / tile;
        let ty1 = (max_y.min(height - 1)) / tile;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * tiles_x + tx].items.push((s.depth, slot));
            }
        }
    }
    for bin in &mut bins {
        // Depth ties broken by index so the order is total and stable.
        bin.items.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then_with(|| splats[a.1].index.cmp(&splats[b.1].index))
        });
    }
    bins
}

/// Per-pixel contribution of one splat during compositing replay.
struct PixelHit {
    slot: usize,
    alpha: f64,
    clamped: bool,
    gauss: f64,
    d: Vector2<f64>,
}

/// Walk the splat list for one pixel front to back, calling `visit` for
/// every contributing splat. Returns the final transmittance.
fn composite_pixel<F: FnMut(&PixelHit, f64)>(
    splats: &[PreparedSplat],
    items: &[(f64, usize)],
    px: f64,
    py: f64,
    cfg: &RasterConfig,
    visit: &mut F,
) -> f64 {
    let mut transmittance = 1.0;
    for &(_, slot) in items {
        if transmittance < cfg.transmittance_min {
            break;
        }
        let s = &splats[slot];
        let d = Vector2::new(px - s.mean2d.x, py - s.mean2d.y);
        let power = -0.5 * (s.conic * d).dot(&d);
        if power > 0.0 {
            continue;
        }
        let gauss = power.exp();
        let raw_alpha = s.opacity * gauss;
        let clamped = raw_alpha > cfg.alpha_max;
        let alpha = if clamped { cfg.alpha_max } else { raw_alpha };
        if alpha < cfg.alpha_min {
            continue;
        }
        visit(
            &PixelHit {
                slot,
                alpha,
                clamped,
                gauss,
                d,
            },
            transmittance,
        );
        transmittance *= 1.0 - alpha;
    }
    transmittance
}

/// Forward render of the cloud into an image.
pub fn render(cloud: &GaussianCloud, camera: &Camera, cfg: &RasterConfig) -> (Image, RenderAux) {
    let (splats, radii) = prepare_splats(cloud, camera, cfg);
    let width = camera.width;
    let height = camera.height;
    let bins = bin_tiles(&splats, width, height, cfg.tile_size);
    let mut image = Image::new(width, height);
    let mut aux = RenderAux {
        width,
        height,
        image_id: camera.image_id,
        cloud_len: cloud.len(),
        final_transmittance: vec![1.0; width * height],
        max_contribution: vec![0.0; cloud.len()],
        radii,
    };
    for bin in &bins {
        for y in bin.y0..bin.y1 {
            for x in bin.x0..bin.x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut rgb = [0.0f64; 3];
                let t_final = composite_pixel(&splats, &bin.items, px, py, cfg, &mut |hit, t| {
                    let s = &splats[hit.slot];
                    let w = hit.alpha * t;
                    for c in 0..3 {
                        rgb[c] += s.color[c] * w;
                    }
                    let m = &mut aux.max_contribution[s.index];
                    if w > *m {
                        *m = w;
                    }
                });
                for c in 0..3 {
                    rgb[c] += t_final * cfg.background[c];
                }
                image.set_pixel(x, y, rgb);
                aux.final_transmittance[y * width + x] = t_final;
            }
        }
    }
    (image, aux)
}

/// Per-splat gradient accumulators in screen space.
#[derive(Clone, Default)]
struct SplatGrad {
    color: Vector3<f64>,
    opacity_act: f64,
    mean2d: Vector2<f64>,
    conic: Matrix2<f64>,
}

/// Backward pass: pull per-pixel loss gradients into per-parameter
/// gradients. `aux` must come from a matching forward call.
pub fn render_backward(
    cloud: &GaussianCloud,
    camera: &Camera,
    aux: &RenderAux,
    d_image: &GradientImage,
    cfg: &RasterConfig,
) -> Result<GradientBuffer> {
    if aux.cloud_len != cloud.len()
        || aux.image_id != camera.image_id
        || aux.width != camera.width
        || aux.height != camera.height
    {
        return Err(Error::ContractViolation(
            "render aux does not match this cloud/camera".into(),
        ));
    }
    if d_image.width != camera.width || d_image.height != camera.height {
        return Err(Error::ContractViolation(
            "gradient image dimensions do not match the camera".into(),
        ));
    }

    let (splats, _) = prepare_splats(cloud, camera, cfg);
    let bins = bin_tiles(&splats, camera.width, camera.height, cfg.tile_size);
    let mut local = vec![SplatGrad::default(); splats.len()];
    let bg = Vector3::from(cfg.background);

    for bin in &bins {
        for y in bin.y0..bin.y1 {
            for x in bin.x0..bin.x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let d_pix = Vector3::new(
                    d_image.at(x, y, 0),
                    d_image.at(x, y, 1),
                    d_image.at(x, y, 2),
                );
                if d_pix == Vector3::zeros() {
                    continue;
                }
                // Replay the pixel to capture the contributing prefix.
                let mut hits: Vec<(PixelHit, f64)> = Vec::new();
                let t_final =
                    composite_pixel(&splats, &bin.items, px, py, cfg, &mut |hit, t| {
                        hits.push((
                            PixelHit {
                                slot: hit.slot,
                                alpha: hit.alpha,
                                clamped: hit.clamped,
                                gauss: hit.gauss,
                                d: hit.d,
                            },
                            t,
                        ));
                    });
                // Suffix sum of everything composited behind the current
                // splat, including the background term.
                let mut suffix = bg * t_final;
                for (hit, t_before) in hits.iter().rev() {
                    let s = &splats[hit.slot];
                    let g = &mut local[hit.slot];
                    let weight = hit.alpha * t_before;
                    g.color += d_pix * weight;
                    let d_alpha = d_pix.dot(&(s.color * *t_before - suffix / (1.0 - hit.alpha)));
                    if !hit.clamped {
                        g.opacity_act += d_alpha * hit.gauss;
                        let d_gauss = d_alpha * s.opacity;
                        let cd = s.conic * hit.d;
                        g.mean2d += d_gauss * hit.gauss * cd;
                        g.conic += (-0.5 * d_gauss * hit.gauss) * (hit.d * hit.d.transpose());
                    }
                    suffix += s.color * weight;
                }
            }
        }
    }

    // Chain screen-space gradients back to the 3D parameters.
    let mut out = GradientBuffer::zeros_like(cloud);
    let cam_pos = camera.position();
    for (slot, s) in splats.iter().enumerate() {
        let g = &local[slot];
        let i = s.index;

        // View-dependent color back to base color / SH / direction.
        let diff = cloud.positions[i] - cam_pos;
        let dist = diff.norm();
        let dir = diff / dist;
        let mut d_dir = Vector3::zeros();
        let base = &cloud.colors[i];
        let sh = cloud.sh1.as_ref().map(|v| &v[i]);
        for ch in 0..3 {
            let pre_clamp = match sh {
                Some(sh) => {
                    base[ch]
                        + SH1_COEFF
                            * (-sh[ch * 3] * dir.y + sh[ch * 3 + 1] * dir.z
                                - sh[ch * 3 + 2] * dir.x)
                }
                None => base[ch],
            };
            if pre_clamp <= 0.0 {
                continue;
            }
            out.colors[i][ch] += g.color[ch];
            if let Some(sh) = sh {
                let gsh = out.sh1.as_mut().unwrap();
                gsh[i][ch * 3] += g.color[ch] * SH1_COEFF * -dir.y;
                gsh[i][ch * 3 + 1] += g.color[ch] * SH1_COEFF * dir.z;
                gsh[i][ch * 3 + 2] += g.color[ch] * SH1_COEFF * -dir.x;
                d_dir += g.color[ch]
                    * SH1_COEFF
                    * Vector3::new(-sh[ch * 3 + 2], -sh[ch * 3], sh[ch * 3 + 1]);
            }
        }
        // dir = diff/|diff|
        let d_position_from_dir =
            (Matrix3::identity() - dir * dir.transpose()) * d_dir / dist;

        // Opacity activation.
        let o = s.opacity;
        out.opacities[i] += g.opacity_act * o * (1.0 - o);

        // NDC x spans [-1, 1] over the image width, so d/d ndc scales
        // the pixel-space mean gradient by half the image extent.
        out.screen[i] += Vector2::new(
            g.mean2d.x * camera.width as f64 / 2.0,
            g.mean2d.y * camera.height as f64 / 2.0,
        )
        .norm();

        // conic = cov2d^-1
        let d_cov2d = -(s.conic * g.conic * s.conic);
        let sigma = covariance_3d(&cloud.log_scales[i], &cloud.rotations[i]).unwrap();
        let pg = project_gaussian_backward(
            &cloud.positions[i],
            &sigma,
            camera,
            &cfg.projection,
            &g.mean2d,
            &d_cov2d,
        );
        out.positions[i] += pg.d_position + d_position_from_dir;

        // Σ = M Mᵀ with M = R diag(s).
        let q_unit = cloud.rotations[i] / cloud.rotations[i].norm();
        let r = quat_to_rotation(&q_unit);
        let scales = cloud.log_scales[i].map(f64::exp);
        let m = Matrix3::from_columns(&[
            r.column(0) * scales[0],
            r.column(1) * scales[1],
            r.column(2) * scales[2],
        ]);
        let d_m = 2.0 * pg.d_sigma * m;
        let mut d_r = Matrix3::zeros();
        for row in 0..3 {
            for col in 0..3 {
                out.log_scales[i][col] += d_m[(row, col)] * r[(row, col)] * scales[col];
                d_r[(row, col)] = d_m[(row, col)] * scales[col];
            }
        }
        let jac = quat_rotation_jacobian(&q_unit);
        let mut d_q_unit = Vector4::zeros();
        for k in 0..4 {
            d_q_unit[k] = (jac[k].component_mul(&d_r)).sum();
        }
        // Normalization jacobian at the stored (near-unit) quaternion.
        let qn = cloud.rotations[i].norm();
        let d_q = (d_q_unit - q_unit * q_unit.dot(&d_q_unit)) / qn;
        out.rotations[i] += d_q;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::logit;
    use approx::assert_relative_eq;

    fn single_splat_scene(opacity_logit: f64, color: [f64; 3]) -> (GaussianCloud, Camera) {
        let mut cloud = GaussianCloud::default();
        cloud.push(
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.1f64.ln(), 0.1f64.ln(), 0.1f64.ln()),
            Vector4::new(1.0, 0.0, 0.0, 0.0),
            opacity_logit,
            Vector3::from(color),
            None,
        );
        let cam = Camera {
            image_id: 7,
            width: 32,
            height: 32,
            fx: 50.0,
            fy: 50.0,
            cx: 16.0,
            cy: 16.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            image_path: None,
        };
        (cloud, cam)
    }

    #[test]
    fn empty_cloud_renders_background() {
        let cloud = GaussianCloud::default();
        let (_, cam) = single_splat_scene(0.0, [0.0; 3]);
        let cfg = RasterConfig::default();
        let (img, aux) = render(&cloud, &cam, &cfg);
        assert!(img.data.iter().all(|&v| v == 0.0));
        assert!(aux.final_transmittance.iter().all(|&t| t == 1.0));

        let mut bg_cfg = cfg;
        bg_cfg.background = [0.25, 0.5, 0.75];
        let (img, _) = render(&cloud, &cam, &bg_cfg);
        assert_eq!(img.pixel(3, 9), [0.25, 0.5, 0.75]);
    }

    #[test]
    fn opaque_splat_composites_against_background() {
        // Opacity logit pushed high enough that alpha clamps at 0.99 at
        // the center pixel. The center of pixel (16,16) is at (16.5,16.5),
        // slightly off the mean; use huge scale so gauss ~ 1 there.
        let (mut cloud, cam) = single_splat_scene(logit(0.9999), [1.0, 0.5, 0.0]);
        cloud.log_scales[0] = Vector3::new(1.0f64.ln(), 1.0f64.ln(), 1.0f64.ln());
        let mut cfg = RasterConfig::default();
        cfg.background = [0.0, 0.0, 1.0];
        let (img, _) = render(&cloud, &cam, &cfg);
        let px = img.pixel(16, 16);
        // 0.99 * color + 0.01 * background, hand-evaluated compositing.
        assert_relative_eq!(px[0], 0.99 * 1.0, epsilon = 1e-3);
        assert_relative_eq!(px[1], 0.99 * 0.5, epsilon = 1e-3);
        assert_relative_eq!(px[2], 0.0 + 0.01 * 1.0, epsilon = 1e-3);
    }

    #[test]
    fn two_splat_transmittance_product() {
        // Two identical huge gaussians at depths 1 and 2 with alpha 0.5:
        // pixel = 0.5 red + 0.25 blue over black.
        let mut cloud = GaussianCloud::default();
        let ls = Vector3::new(5.0f64.ln(), 5.0f64.ln(), 5.0f64.ln());
        let q = Vector4::new(1.0, 0.0, 0.0, 0.0);
        cloud.push(
            Vector3::new(0.0, 0.0, 1.0),
            ls,
            q,
            logit(0.5),
            Vector3::new(1.0, 0.0, 0.0),
            None,
        );
        cloud.push(
            Vector3::new(0.0, 0.0, 2.0),
            ls,
            q,
            logit(0.5),
            Vector3::new(0.0, 0.0, 1.0),
            None,
        );
        let (_, cam) = single_splat_scene(0.0, [0.0; 3]);
        // Kill the dilation so alpha is exactly opacity at the mean; use
        // the pixel whose center the means project to.
        let mut cfg = RasterConfig::default();
        cfg.projection.dilation = 0.0;
        cfg.projection.kernel_size = 0.0;
        let (img, _) = render(&cloud, &cam, &cfg);
        let px = img.pixel(16, 16);
        // Centers at (16.5,16.5) vs mean (16,16): gauss slightly below 1.
        // With scale 5 and fx 50 the footprint stddev is >= 125 px, so the
        // half-pixel offset costs < 1e-5 of alpha.
        assert_relative_eq!(px[0], 0.5, epsilon = 1e-3);
        assert_relative_eq!(px[2], 0.25, epsilon = 1e-3);
        assert_relative_eq!(px[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_gradient_image_gives_zero_buffer() {
        let (cloud, cam) = single_splat_scene(0.5, [0.3, 0.4, 0.5]);
        let cfg = RasterConfig::default();
        let (_, aux) = render(&cloud, &cam, &cfg);
        let zeros = GradientImage::new(32, 32);
        let grads = render_backward(&cloud, &cam, &aux, &zeros, &cfg).unwrap();
        assert!(grads.positions.iter().all(|v| v.norm() == 0.0));
        assert!(grads.opacities.iter().all(|&v| v == 0.0));
        assert!(grads.colors.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn single_splat_color_gradient_is_alpha_times_transmittance() {
        let (cloud, cam) = single_splat_scene(logit(0.7), [0.3, 0.4, 0.5]);
        let cfg = RasterConfig::default();
        let (_, aux) = render(&cloud, &cam, &cfg);
        let mut d_img = GradientImage::new(32, 32);
        d_img.set_pixel(16, 16, [1.0, 0.0, 0.0]);
        let grads = render_backward(&cloud, &cam, &aux, &d_img, &cfg).unwrap();

        // Closed form: dL/dcolor_r = alpha * T with T = 1 for the front splat.
        let splat_alpha = {
            let (splats, _) = prepare_splats(&cloud, &cam, &cfg);
            let s = &splats[0];
            let d = Vector2::new(16.5 - s.mean2d.x, 16.5 - s.mean2d.y);
            s.opacity * (-0.5 * (s.conic * d).dot(&d)).exp()
        };
        assert_relative_eq!(grads.colors[0][0], splat_alpha, epsilon = 1e-12);
        assert_eq!(grads.colors[0][1], 0.0);
    }

    #[test]
    fn mismatched_aux_is_rejected() {
        let (cloud, cam) = single_splat_scene(0.0, [0.1; 3]);
        let cfg = RasterConfig::default();
        let (_, mut aux) = render(&cloud, &cam, &cfg);
        aux.cloud_len = 99;
        let zeros = GradientImage::new(32, 32);
        assert!(render_backward(&cloud, &cam, &aux, &zeros, &cfg).is_err());
    }

    #[test]
    fn storage_order_permutation_invariance() {
        let mut cloud = GaussianCloud::default();
        let q = Vector4::new(1.0, 0.0, 0.0, 0.0);
        for (k, z) in [1.0, 1.7, 2.4].iter().enumerate() {
            cloud.push(
                Vector3::new(0.1 * k as f64 - 0.1, 0.05, *z),
                Vector3::new(-1.5, -1.8, -1.2),
                q,
                logit(0.6),
                Vector3::new(0.2 + 0.3 * k as f64, 0.5, 1.0 - 0.3 * k as f64),
                None,
            );
        }
        let (_, cam) = single_splat_scene(0.0, [0.0; 3]);
        let cfg = RasterConfig::default();
        let (img_a, _) = render(&cloud, &cam, &cfg);

        let mut permuted = GaussianCloud::default();
        for &i in &[2usize, 0, 1] {
            permuted.push(
                cloud.positions[i],
                cloud.log_scales[i],
                cloud.rotations[i],
                cloud.opacities[i],
                cloud.colors[i],
                None,
            );
        }
        let (img_b, _) = render(&permuted, &cam, &cfg);
        assert_eq!(img_a.data, img_b.data);
    }

    #[test]
    fn forward_is_deterministic() {
        let (cloud, cam) = single_splat_scene(0.3, [0.6, 0.2, 0.8]);
        let cfg = RasterConfig::default();
        let (a, _) = render(&cloud, &cam, &cfg);
        let (b, _) = render(&cloud, &cam, &cfg);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn compositing_weight_plus_transmittance_is_one() {
        let (cloud, cam) = single_splat_scene(logit(0.8), [1.0, 1.0, 1.0]);
        let cfg = RasterConfig::default();
        let (img, aux) = render(&cloud, &cam, &cfg);
        for y in 0..32 {
            for x in 0..32 {
                // White splat over black background: pixel value equals the
                // total compositing weight, which plus T_final must be 1.
                let w = img.at(x, y, 0);
                let t = aux.final_transmittance[y * 32 + x];
                assert!(w + t <= 1.0 + 1e-12);
                assert_relative_eq!(w + t, 1.0, epsilon = 1e-9);
            }
        }
    }
}
