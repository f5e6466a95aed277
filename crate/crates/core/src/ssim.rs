//! SSIM with an 11x11 Gaussian window and its analytic gradient.

use crate::error::{Error, Result};
use crate::image::{GradientImage, Image};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

fn window_weights() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *wi = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *wi;
    }
    for wi in &mut w {
        *wi /= sum;
    }
    w
}

#[inline]
fn clamp_coord(v: isize, max: usize) -> usize {
    v.clamp(0, max as isize - 1) as usize
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    a.check_same_dims(b)?;
    if a.width < WINDOW || a.height < WINDOW {
        return Err(Error::InvalidParameter(format!(
            "image {}x{} smaller than the {WINDOW}x{WINDOW} SSIM window",
            a.width, a.height
        )));
    }
    Ok(())
}

/// Mean SSIM over pixels and channels, with replicate border padding.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    Ok(ssim_impl(a, b, None))
}

/// Mean SSIM and its gradient with respect to `a`.
pub fn ssim_with_gradient(a: &Image, b: &Image) -> Result<(f64, GradientImage)> {
    check_dims(a, b)?;
    let mut grad = GradientImage::new(a.width, a.height);
    let value = ssim_impl(a, b, Some(&mut grad));
    Ok((value, grad))
}

fn ssim_impl(a: &Image, b: &Image, mut grad: Option<&mut GradientImage>) -> f64 {
    let w = window_weights();
    let half = (WINDOW / 2) as isize;
    let (width, height) = (a.width, a.height);
    let n = (width * height * 3) as f64;
    let mut total = 0.0;

    for c in 0..3 {
        for y in 0..height {
            for x in 0..width {
                let mut mux = 0.0;
                let mut muy = 0.0;
                let mut ex2 = 0.0;
                let mut ey2 = 0.0;
                let mut exy = 0.0;
                for dy in -half..=half {
                    let wy = w[(dy + half) as usize];
                    let sy = clamp_coord(y as isize + dy, height);
                    for dx in -half..=half {
                        let weight = wy * w[(dx + half) as usize];
                        let sx = clamp_coord(x as isize + dx, width);
                        let va = a.at(sx, sy, c);
                        let vb = b.at(sx, sy, c);
                        mux += weight * va;
                        muy += weight * vb;
                        ex2 += weight * va * va;
                        ey2 += weight * vb * vb;
                        exy += weight * va * vb;
                    }
                }
                let sx2 = ex2 - mux * mux;
                let sy2 = ey2 - muy * muy;
                let sxy = exy - mux * muy;
                let n1 = 2.0 * mux * muy + C1;
                let d1 = mux * mux + muy * muy + C1;
                let n2 = 2.0 * sxy + C2;
                let d2 = sx2 + sy2 + C2;
                let l = n1 / d1;
                let cs = n2 / d2;
                total += l * cs;

                if let Some(g) = grad.as_deref_mut() {
                    // Partials of l*cs in the (mux, Ex2, Exy) coordinates;
                    // sigma terms re-expand through mux.
                    let d_mux = cs * (2.0 * muy * d1 - 2.0 * mux * n1) / (d1 * d1)
                        + l * (-2.0 * muy / d2 + 2.0 * mux * n2 / (d2 * d2));
                    let d_ex2 = -l * n2 / (d2 * d2);
                    let d_exy = l * 2.0 / d2;
                    for dy in -half..=half {
                        let wy = w[(dy + half) as usize];
                        let sy = clamp_coord(y as isize + dy, height);
                        for dx in -half..=half {
                            let weight = wy * w[(dx + half) as usize];
                            let sx = clamp_coord(x as isize + dx, width);
                            let va = a.at(sx, sy, c);
                            let vb = b.at(sx, sy, c);
                            *g.at_mut(sx, sy, c) +=
                                weight * (d_mux + 2.0 * va * d_ex2 + vb * d_exy) / n;
                        }
                    }
                }
            }
        }
    }
    total / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        let mut img = Image::new(w, h);
        for v in &mut img.data {
            *v = rng.gen_range(0.0..1.0);
        }
        img
    }

    #[test]
    fn identical_images_have_ssim_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 16, 16);
        assert_relative_eq!(ssim(&img, &img).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_images_match_closed_form() {
        let a = Image::filled(16, 16, [0.0; 3]);
        let b = Image::filled(16, 16, [1.0; 3]);
        // mux=0, muy=1, all variances zero: ssim = C1/(1+C1).
        let expected = C1 / (1.0 + C1);
        assert_relative_eq!(ssim(&a, &b).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn too_small_image_rejected() {
        let a = Image::new(8, 8);
        assert!(ssim(&a, &a.clone()).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_image(&mut rng, 16, 16);
        let b = random_image(&mut rng, 16, 16);
        let (_, grad) = ssim_with_gradient(&a, &b).unwrap();
        let h = 1e-5;
        // Spot-check a spread of pixels, including borders where the
        // replicate-padding adjoint matters.
        for &(x, y, c) in &[(0, 0, 0), (15, 15, 2), (7, 8, 1), (0, 9, 2), (12, 0, 0)] {
            let mut ap = a.clone();
            let mut am = a.clone();
            *ap.at_mut(x, y, c) += h;
            *am.at_mut(x, y, c) -= h;
            let fd = (ssim(&ap, &b).unwrap() - ssim(&am, &b).unwrap()) / (2.0 * h);
            assert_relative_eq!(grad.at(x, y, c), fd, epsilon = 1e-7, max_relative = 1e-5);
        }
    }
}
