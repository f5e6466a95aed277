//! Loss terms, their gradients with respect to the rendered image, and
//! the evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::attention::{enhance, enhance_backward, AttentionMap};
use crate::error::{Error, Result};
use crate::image::{GradientImage, Image};
use crate::ssim;

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// D-SSIM weight; the L1 term gets (1 - lambda).
    pub lambda: f64,
    /// Edge-loss weight.
    pub beta: f64,
    /// Frequency-loss weight.
    pub eta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda: 0.2,
            beta: 0.1,
            eta: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) || self.beta < 0.0 || self.eta < 0.0 {
            return Err(Error::InvalidParameter(
                "loss weights require lambda in [0,1] and beta, eta >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Scalar components of one loss evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub l1: f64,
    pub dssim: f64,
    pub edge: f64,
    pub frequency: f64,
    /// True when the edge/frequency terms used the attention-enhanced image.
    pub used_attention: bool,
}

/// Mean absolute difference and its gradient with respect to `a`.
pub fn l1_loss(a: &Image, b: &Image) -> Result<(f64, GradientImage)> {
    a.check_same_dims(b)?;
    let n = a.data.len() as f64;
    let mut grad = GradientImage::new(a.width, a.height);
    let mut sum = 0.0;
    for i in 0..a.data.len() {
        let d = a.data[i] - b.data[i];
        sum += d.abs();
        grad.data[i] = d.signum() / n;
    }
    Ok((sum / n, grad))
}

/// D-SSIM = (1 - SSIM) / 2 and its gradient with respect to `a`.
pub fn dssim_loss(a: &Image, b: &Image) -> Result<(f64, GradientImage)> {
    let (s, mut grad) = ssim::ssim_with_gradient(a, b)?;
    for g in &mut grad.data {
        *g *= -0.5;
    }
    Ok(((1.0 - s) / 2.0, grad))
}

const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// 3x3 convolution per channel with replicate border padding.
fn conv3(img: &Image, kernel: &[f64; 9]) -> Image {
    let (w, h) = (img.width, img.height);
    let mut out = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (t, k) in kernel.iter().enumerate() {
                    let sx = (x as isize + (t % 3) as isize - 1).clamp(0, w as isize - 1) as usize;
                    let sy = (y as isize + (t / 3) as isize - 1).clamp(0, h as isize - 1) as usize;
                    acc += k * img.at(sx, sy, c);
                }
                *out.at_mut(x, y, c) = acc;
            }
        }
    }
    out
}

/// Adjoint of `conv3` under the same replicate padding.
fn conv3_adjoint(grad: &Image, kernel: &[f64; 9]) -> Image {
    let (w, h) = (grad.width, grad.height);
    let mut out = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let g = grad.at(x, y, c);
                if g == 0.0 {
                    continue;
                }
                for (t, k) in kernel.iter().enumerate() {
                    let sx = (x as isize + (t % 3) as isize - 1).clamp(0, w as isize - 1) as usize;
                    let sy = (y as isize + (t / 3) as isize - 1).clamp(0, h as isize - 1) as usize;
                    *out.at_mut(sx, sy, c) += k * g;
                }
            }
        }
    }
    out
}

/// Sobel edge loss: half the sum of the L1 distances between the x and y
/// gradient responses of the two images.
pub fn edge_loss(a: &Image, b: &Image) -> Result<(f64, GradientImage)> {
    a.check_same_dims(b)?;
    if a.width < 3 || a.height < 3 {
        return Err(Error::InvalidParameter(
            "edge loss needs at least a 3x3 image".into(),
        ));
    }
    let n = a.data.len() as f64;
    let mut total = 0.0;
    let mut grad = GradientImage::new(a.width, a.height);
    for kernel in [&SOBEL_X, &SOBEL_Y] {
        let ga = conv3(a, kernel);
        let gb = conv3(b, kernel);
        let mut sign = Image::new(a.width, a.height);
        for i in 0..ga.data.len() {
            let d = ga.data[i] - gb.data[i];
            total += 0.5 * d.abs() / n;
            sign.data[i] = 0.5 * d.signum() / n;
        }
        let back = conv3_adjoint(&sign, kernel);
        for i in 0..grad.data.len() {
            grad.data[i] += back.data[i];
        }
    }
    Ok((total, grad))
}

/// Frequency loss: L1 distance between forward pixel differences along x
/// and y, averaged over the two directions.
pub fn frequency_loss(a: &Image, b: &Image) -> Result<(f64, GradientImage)> {
    a.check_same_dims(b)?;
    if a.width < 2 || a.height < 2 {
        return Err(Error::InvalidParameter(
            "frequency loss needs at least a 2x2 image".into(),
        ));
    }
    let (w, h) = (a.width, a.height);
    let mut total = 0.0;
    let mut grad = GradientImage::new(w, h);

    // Horizontal forward differences.
    let nx = ((w - 1) * h * 3) as f64;
    for y in 0..h {
        for x in 0..w - 1 {
            for c in 0..3 {
                let da = a.at(x + 1, y, c) - a.at(x, y, c);
                let db = b.at(x + 1, y, c) - b.at(x, y, c);
                total += 0.5 * (da - db).abs() / nx;
                let s = 0.5 * (da - db).signum() / nx;
                *grad.at_mut(x + 1, y, c) += s;
                *grad.at_mut(x, y, c) -= s;
            }
        }
    }
    // Vertical forward differences.
    let ny = (w * (h - 1) * 3) as f64;
    for y in 0..h - 1 {
        for x in 0..w {
            for c in 0..3 {
                let da = a.at(x, y + 1, c) - a.at(x, y, c);
                let db = b.at(x, y + 1, c) - b.at(x, y, c);
                total += 0.5 * (da - db).abs() / ny;
                let s = 0.5 * (da - db).signum() / ny;
                *grad.at_mut(x, y + 1, c) += s;
                *grad.at_mut(x, y, c) -= s;
            }
        }
    }
    Ok((total, grad))
}

/// Whether the attention-enhanced branch applies at this iteration.
pub fn attention_scheduled(iteration: u64, attn_interval: u64) -> bool {
    attn_interval > 0 && iteration > 0 && iteration % attn_interval == 0
}

/// The combined objective. On scheduled iterations the edge and frequency
/// terms are evaluated on the attention-enhanced image (the map acts as a
/// constant weighting in the gradient); otherwise on the rendered image.
pub fn total_loss(
    rendered: &Image,
    attention: Option<&AttentionMap>,
    truth: &Image,
    weights: &LossWeights,
    iteration: u64,
    attn_interval: u64,
) -> Result<(LossReport, GradientImage)> {
    weights.validate()?;
    let scheduled = attention_scheduled(iteration, attn_interval);
    if scheduled && attention.is_none() {
        return Err(Error::ContractViolation(format!(
            "iteration {iteration} is attention-scheduled but no attention map was supplied"
        )));
    }
    if !scheduled && attention.is_some() {
        return Err(Error::ContractViolation(format!(
            "iteration {iteration} is not attention-scheduled but an attention map was supplied"
        )));
    }

    let (l1, g_l1) = l1_loss(rendered, truth)?;
    let (dssim, g_dssim) = dssim_loss(rendered, truth)?;

    let (edge, frequency, mut g_detail) = match attention {
        Some(map) => {
            let enhanced = enhance(rendered, map)?;
            let (edge, g_edge) = edge_loss(&enhanced, truth)?;
            let (freq, g_freq) = frequency_loss(&enhanced, truth)?;
            let mut g = GradientImage::new(rendered.width, rendered.height);
            for i in 0..g.data.len() {
                g.data[i] = weights.beta * g_edge.data[i] + weights.eta * g_freq.data[i];
            }
            (edge, freq, enhance_backward(rendered, map, &g))
        }
        None => {
            let (edge, g_edge) = edge_loss(rendered, truth)?;
            let (freq, g_freq) = frequency_loss(rendered, truth)?;
            let mut g = GradientImage::new(rendered.width, rendered.height);
            for i in 0..g.data.len() {
                g.data[i] = weights.beta * g_edge.data[i] + weights.eta * g_freq.data[i];
            }
            (edge, freq, g)
        }
    };

    let total =
        (1.0 - weights.lambda) * l1 + weights.lambda * dssim + weights.beta * edge
            + weights.eta * frequency;
    for i in 0..g_detail.data.len() {
        g_detail.data[i] +=
            (1.0 - weights.lambda) * g_l1.data[i] + weights.lambda * g_dssim.data[i];
    }
    Ok((
        LossReport {
            total,
            l1,
            dssim,
            edge,
            frequency,
            used_attention: scheduled,
        },
        g_detail,
    ))
}

/// PSNR in dB for [0,1] images; +inf for identical inputs.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_dims(b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

/// Mean SSIM over pixels and channels.
pub fn ssim_metric(a: &Image, b: &Image) -> Result<f64> {
    ssim::ssim(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(w, h);
        for v in &mut img.data {
            *v = rng.gen_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn l1_basics() {
        let a = random_image(1, 16, 16);
        assert_eq!(l1_loss(&a, &a).unwrap().0, 0.0);

        let mut b = a.clone();
        for v in &mut b.data {
            *v += 0.5;
        }
        assert_relative_eq!(l1_loss(&b, &a).unwrap().0, 0.5, epsilon = 1e-12);

        // Independent summation oracle on a random pair.
        let c = random_image(2, 16, 16);
        let oracle = a
            .data
            .iter()
            .zip(&c.data)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / a.data.len() as f64;
        assert_relative_eq!(l1_loss(&a, &c).unwrap().0, oracle, epsilon = 1e-12);
    }

    #[test]
    fn dssim_of_identical_images_is_zero() {
        let a = random_image(3, 16, 16);
        assert_relative_eq!(dssim_loss(&a, &a).unwrap().0, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dssim_of_constants_matches_closed_form() {
        let a = Image::filled(16, 16, [0.0; 3]);
        let b = Image::filled(16, 16, [1.0; 3]);
        let expected = (1.0 - crate::ssim::C1 / (1.0 + crate::ssim::C1)) / 2.0;
        assert_relative_eq!(dssim_loss(&a, &b).unwrap().0, expected, epsilon = 1e-12);
    }

    #[test]
    fn edge_loss_zero_for_flat_and_identical_images() {
        let a = Image::filled(16, 16, [0.3; 3]);
        let b = Image::filled(16, 16, [0.9; 3]);
        // Sobel sums over flat regions cancel only to rounding error.
        assert_relative_eq!(edge_loss(&a, &b).unwrap().0, 0.0, epsilon = 1e-12);
        let c = random_image(4, 16, 16);
        assert_relative_eq!(edge_loss(&c, &c).unwrap().0, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn edge_loss_matches_brute_force_on_shifted_step() {
        let mut a = Image::new(16, 16);
        let mut b = Image::new(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                a.set_pixel(x, y, [if x >= 6 { 1.0 } else { 0.0 }; 3]);
                b.set_pixel(x, y, [if x >= 8 { 1.0 } else { 0.0 }; 3]);
            }
        }
        let (loss, _) = edge_loss(&a, &b).unwrap();
        // Direct Sobel + L1 oracle.
        let oracle = {
            let gax = conv3(&a, &SOBEL_X);
            let gbx = conv3(&b, &SOBEL_X);
            let gay = conv3(&a, &SOBEL_Y);
            let gby = conv3(&b, &SOBEL_Y);
            let n = a.data.len() as f64;
            let lx: f64 = gax
                .data
                .iter()
                .zip(&gbx.data)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / n;
            let ly: f64 = gay
                .data
                .iter()
                .zip(&gby.data)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / n;
            0.5 * (lx + ly)
        };
        assert!(loss > 0.0);
        assert_relative_eq!(loss, oracle, epsilon = 1e-12);
    }

    #[test]
    fn frequency_loss_matches_brute_force_on_checkerboard() {
        let mut a = Image::new(8, 8);
        for y in 0..8 {
            for x in 0..8 {
                a.set_pixel(x, y, [((x + y) % 2) as f64; 3]);
            }
        }
        let b = Image::filled(8, 8, [0.5; 3]);
        let (loss, _) = frequency_loss(&a, &b).unwrap();
        // Forward differences of b are zero; of the checkerboard are +-1.
        // Oracle: mean |difference| is 1 in each direction, so loss = 1.
        let mut ox = 0.0;
        for y in 0..8 {
            for x in 0..7 {
                ox += ((a.at(x + 1, y, 0) - a.at(x, y, 0)) as f64).abs();
            }
        }
        let ox = ox / 56.0;
        assert_relative_eq!(loss, 0.5 * (ox + ox), epsilon = 1e-12);
        assert_relative_eq!(loss, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn losses_are_symmetric_scalars() {
        let a = random_image(5, 16, 16);
        let b = random_image(6, 16, 16);
        assert_relative_eq!(
            edge_loss(&a, &b).unwrap().0,
            edge_loss(&b, &a).unwrap().0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            frequency_loss(&a, &b).unwrap().0,
            frequency_loss(&b, &a).unwrap().0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn total_loss_weighted_sum() {
        // lambda=0.2, beta=eta=0, L1=0.5, D-SSIM known: total must equal
        // the weighted recombination.
        let a = Image::filled(16, 16, [0.0; 3]);
        let b = Image::filled(16, 16, [0.5; 3]);
        let weights = LossWeights {
            lambda: 0.2,
            beta: 0.0,
            eta: 0.0,
        };
        let (report, _) = total_loss(&a, None, &b, &weights, 7, 50).unwrap();
        assert_relative_eq!(report.l1, 0.5, epsilon = 1e-12);
        assert_relative_eq!(
            report.total,
            0.8 * report.l1 + 0.2 * report.dssim,
            epsilon = 1e-12
        );
        assert!(!report.used_attention);
    }

    #[test]
    fn total_loss_zero_on_identical_inputs() {
        let a = random_image(8, 16, 16);
        let (report, grad) =
            total_loss(&a, None, &a, &LossWeights::default(), 3, 50).unwrap();
        assert_eq!(report.total, 0.0);
        assert_eq!(report.l1, 0.0);
        assert_eq!(report.edge, 0.0);
        assert_eq!(report.frequency, 0.0);
        assert!(report.dssim.abs() < 1e-12);
        assert!(grad.is_finite());
    }

    #[test]
    fn scheduled_iteration_requires_attention_map() {
        let a = random_image(9, 16, 16);
        let err = total_loss(&a, None, &a, &LossWeights::default(), 50, 50);
        assert!(err.is_err());
    }

    #[test]
    fn scheduled_branch_uses_enhanced_image() {
        use crate::attention::AttentionMap;
        let rendered = random_image(10, 16, 16);
        let truth = random_image(11, 16, 16);
        // A non-uniform map makes the two branches differ numerically.
        let mut map = AttentionMap::ones(16, 16);
        for (i, w) in map.weights.iter_mut().enumerate() {
            *w = if i % 2 == 0 { 1.5 } else { 0.5 };
        }
        let weights = LossWeights::default();
        let (scheduled, _) =
            total_loss(&rendered, Some(&map), &truth, &weights, 50, 50).unwrap();
        let (plain, _) = total_loss(&rendered, None, &truth, &weights, 49, 50).unwrap();
        assert!(scheduled.used_attention);
        assert!(!plain.used_attention);
        assert!((scheduled.edge - plain.edge).abs() > 1e-6);
        // L1 and D-SSIM always compare the raw rendered image.
        assert_relative_eq!(scheduled.l1, plain.l1, epsilon = 1e-12);
        assert_relative_eq!(scheduled.dssim, plain.dssim, epsilon = 1e-12);
    }

    #[test]
    fn psnr_formula_cases() {
        let a = random_image(12, 8, 8);
        assert!(psnr(&a, &a).unwrap().is_infinite());
        let z = Image::filled(8, 8, [0.0; 3]);
        let o = Image::filled(8, 8, [0.1; 3]);
        // MSE = 0.01 -> 20 dB.
        assert_relative_eq!(psnr(&z, &o).unwrap(), 20.0, epsilon = 1e-9);
    }
}
