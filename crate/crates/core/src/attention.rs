//! Patch attention between rendered and ground-truth images.
//!
//! Both images are cut into an 8x8 grid. Each patch computes a pixel-token
//! attention map from convolutional Q/K/V features (query from the rendered
//! patch, key and value from the ground truth). The 64 sub-maps are
//! reassembled into a full-image weighting that multiplies the rendered
//! image to emphasize salient regions in the edge and frequency losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GradientImage, Image};

pub const GRID: usize = 8;
pub const PATCH_COUNT: usize = GRID * GRID;
/// Enhanced-image values are clamped to this bound.
pub const ENHANCE_MAX: f64 = 4.0;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AttentionConfig {
    /// Seed for the fixed random projector weights.
    pub seed: u64,
    /// Rescale the assembled map to mean 1.
    pub normalize: bool,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            seed: 42,
            normalize: true,
        }
    }
}

/// Half-open pixel bounds of one patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchBounds {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PatchBounds {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
    pub fn area(&self) -> usize {
        self.width() * self.height()
    }
}

/// The fixed 8x8 segmentation of an image. Edge patches absorb remainder
/// rows and columns when the dimensions are not divisible by 8.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub patches: Vec<PatchBounds>,
}

impl PatchGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < GRID || height < GRID {
            return Err(Error::InvalidParameter(format!(
                "image {width}x{height} too small for an {GRID}x{GRID} patch grid"
            )));
        }
        let pw = width / GRID;
        let ph = height / GRID;
        let mut patches = Vec::with_capacity(PATCH_COUNT);
        for gy in 0..GRID {
            for gx in 0..GRID {
                patches.push(PatchBounds {
                    x0: gx * pw,
                    y0: gy * ph,
                    x1: if gx == GRID - 1 { width } else { (gx + 1) * pw },
                    y1: if gy == GRID - 1 { height } else { (gy + 1) * ph },
                });
            }
        }
        Ok(PatchGrid {
            width,
            height,
            patches,
        })
    }
}

/// Three fixed 3x3 convolution kernels producing one scalar feature per
/// pixel token. Weights are seeded random and identical for every patch.
#[derive(Debug, Clone)]
pub struct QkvProjector {
    pub query: [f64; 9],
    pub key: [f64; 9],
    pub value: [f64; 9],
}

impl QkvProjector {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kernel = || {
            let mut k = [0.0; 9];
            for v in &mut k {
                *v = rng.gen_range(-1.0..1.0) / 3.0;
            }
            k
        };
        QkvProjector {
            query: kernel(),
            key: kernel(),
            value: kernel(),
        }
    }
}

/// 3x3 convolution of the grayscale patch, replicate-padded *within the
/// patch* so patches stay independent. One output per pixel token.
fn conv_patch(img: &Image, b: &PatchBounds, kernel: &[f64; 9]) -> Vec<f64> {
    let mut out = Vec::with_capacity(b.area());
    for y in b.y0..b.y1 {
        for x in b.x0..b.x1 {
            let mut acc = 0.0;
            for (t, k) in kernel.iter().enumerate() {
                let dx = (t % 3) as isize - 1;
                let dy = (t / 3) as isize - 1;
                let sx = (x as isize + dx).clamp(b.x0 as isize, b.x1 as isize - 1) as usize;
                let sy = (y as isize + dy).clamp(b.y0 as isize, b.y1 as isize - 1) as usize;
                let p = img.pixel(sx, sy);
                acc += k * (p[0] + p[1] + p[2]) / 3.0;
            }
            out.push(acc);
        }
    }
    out
}

/// Attention sub-map for one patch, row-major over the patch pixels.
pub fn compute_patch_attention(
    rendered: &Image,
    truth: &Image,
    bounds: &PatchBounds,
    projector: &QkvProjector,
) -> Result<Vec<f64>> {
    rendered.check_same_dims(truth)?;
    if bounds.area() == 0 {
        return Err(Error::ContractViolation("empty patch".into()));
    }
    let q = conv_patch(rendered, bounds, &projector.query);
    let k = conv_patch(truth, bounds, &projector.key);
    let v = conv_patch(truth, bounds, &projector.value);
    let n = q.len();

    // alpha[m][n] = q[m] * k[n]; softmax over each row; out = w . v
    let mut out = Vec::with_capacity(n);
    for &qm in &q {
        let mut row_max = f64::NEG_INFINITY;
        for &kn in &k {
            row_max = row_max.max(qm * kn);
        }
        let mut denom = 0.0;
        let mut acc = 0.0;
        for (kn, vn) in k.iter().zip(&v) {
            let e = (qm * kn - row_max).exp();
            denom += e;
            acc += e * vn;
        }
        out.push(acc / denom);
    }
    Ok(out)
}

/// Softmax rows of the patch attention matrix, exposed for verification.
pub fn patch_attention_weights(
    rendered: &Image,
    truth: &Image,
    bounds: &PatchBounds,
    projector: &QkvProjector,
) -> Result<Vec<Vec<f64>>> {
    rendered.check_same_dims(truth)?;
    let q = conv_patch(rendered, bounds, &projector.query);
    let k = conv_patch(truth, bounds, &projector.key);
    let mut rows = Vec::with_capacity(q.len());
    for &qm in &q {
        let row_max = k.iter().fold(f64::NEG_INFINITY, |m, &kn| m.max(qm * kn));
        let exps: Vec<f64> = k.iter().map(|&kn| (qm * kn - row_max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        rows.push(exps.into_iter().map(|e| e / denom).collect());
    }
    Ok(rows)
}

/// Full-image per-pixel weighting assembled from the 64 patch sub-maps.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub width: usize,
    pub height: usize,
    /// Non-negative weights, one per pixel, row-major.
    pub weights: Vec<f64>,
}

impl AttentionMap {
    pub fn ones(width: usize, height: usize) -> Self {
        AttentionMap {
            width,
            height,
            weights: vec![1.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }
}

/// Concatenate the per-patch sub-maps into image layout. Negative values
/// are clamped to zero, then the map is rescaled to mean 1 when
/// `normalize` is set (falling back to an all-ones map if everything
/// clamped to zero).
pub fn assemble_attention_map(
    grid: &PatchGrid,
    sub_maps: &[Vec<f64>],
    normalize: bool,
) -> Result<AttentionMap> {
    if sub_maps.len() != PATCH_COUNT {
        return Err(Error::ContractViolation(format!(
            "expected {PATCH_COUNT} patch sub-maps, got {}",
            sub_maps.len()
        )));
    }
    let mut weights = vec![0.0; grid.width * grid.height];
    for (b, sub) in grid.patches.iter().zip(sub_maps) {
        if sub.len() != b.area() {
            return Err(Error::ContractViolation(format!(
                "sub-map size {} does not match patch area {}",
                sub.len(),
                b.area()
            )));
        }
        let mut it = sub.iter();
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                weights[y * grid.width + x] = it.next().unwrap().max(0.0);
            }
        }
    }
    if normalize {
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        if mean > 1e-12 {
            for w in &mut weights {
                *w /= mean;
            }
        } else {
            weights.fill(1.0);
        }
    }
    Ok(AttentionMap {
        width: grid.width,
        height: grid.height,
        weights,
    })
}

/// The full pipeline: segment, per-patch attention, assembly.
pub fn compute_attention_map(
    rendered: &Image,
    truth: &Image,
    cfg: &AttentionConfig,
) -> Result<AttentionMap> {
    rendered.check_same_dims(truth)?;
    let grid = PatchGrid::new(rendered.width, rendered.height)?;
    let projector = QkvProjector::seeded(cfg.seed);
    let mut subs = Vec::with_capacity(PATCH_COUNT);
    for b in &grid.patches {
        subs.push(compute_patch_attention(rendered, truth, b, &projector)?);
    }
    assemble_attention_map(&grid, &subs, cfg.normalize)
}

/// Element-wise product of the rendered image with the attention map,
/// broadcast over channels and clamped to [0, ENHANCE_MAX]. The map is a
/// constant weighting: gradients do not flow through it.
pub fn enhance(rendered: &Image, map: &AttentionMap) -> Result<Image> {
    if rendered.width != map.width || rendered.height != map.height {
        return Err(Error::ContractViolation(
            "attention map dimensions do not match the image".into(),
        ));
    }
    let mut out = rendered.clone();
    for y in 0..rendered.height {
        let w_row = y * map.width;
        for x in 0..rendered.width {
            let w = map.weights[w_row + x];
            let i = (y * rendered.width + x) * 3;
            for c in 0..3 {
                out.data[i + c] = (rendered.data[i + c] * w).clamp(0.0, ENHANCE_MAX);
            }
        }
    }
    Ok(out)
}

/// Adjoint of `enhance` with the map treated as constant: gradients on the
/// enhanced image scaled by the map, zeroed where the clamp saturated.
pub fn enhance_backward(
    rendered: &Image,
    map: &AttentionMap,
    d_enhanced: &GradientImage,
) -> GradientImage {
    let mut out = GradientImage::new(rendered.width, rendered.height);
    for y in 0..rendered.height {
        for x in 0..rendered.width {
            let w = map.at(x, y);
            let i = (y * rendered.width + x) * 3;
            for c in 0..3 {
                let pre = rendered.data[i + c] * w;
                if (0.0..=ENHANCE_MAX).contains(&pre) {
                    out.data[i + c] = w * d_enhanced.data[i + c];
                }
            }
        }
    }
    out
}
