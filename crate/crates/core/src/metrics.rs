//! Distortion metrics: MSE, PSNR and 5-scale MS-SSIM.

use thiserror::Error;

use crate::color::luma_plane;
use crate::image::ImagePlanes;
use crate::scalar::Scalar;

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Smallest side for which all five scales keep an 11-tap window.
pub const MS_SSIM_MIN_SIDE: usize = SSIM_WINDOW << 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("image dimensions differ: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch {
        a_w: usize,
        a_h: usize,
        b_w: usize,
        b_h: usize,
    },
    #[error("MS-SSIM needs both sides >= {required} pixels, got {width}x{height}")]
    TooSmall {
        width: usize,
        height: usize,
        required: usize,
    },
}

fn check_dims<T: Scalar>(x: &ImagePlanes<T>, y: &ImagePlanes<T>) -> Result<(), MetricError> {
    if x.width() != y.width() || x.height() != y.height() {
        return Err(MetricError::DimensionMismatch {
            a_w: x.width(),
            a_h: x.height(),
            b_w: y.width(),
            b_h: y.height(),
        });
    }
    Ok(())
}

/// Mean squared error over all unpadded samples of all three channels.
pub fn mse<T: Scalar>(x: &ImagePlanes<T>, x_hat: &ImagePlanes<T>) -> Result<T, MetricError> {
    check_dims(x, x_hat)?;
    let mut acc = 0.0f64;
    for c in 0..3 {
        for yy in 0..x.height() {
            for xx in 0..x.width() {
                let d = (x.get(c, xx, yy) - x_hat.get(c, xx, yy)).as_f64();
                acc += d * d;
            }
        }
    }
    Ok(T::lit(acc / (3 * x.pixel_count()) as f64))
}

/// `∂MSE/∂x̂` over the padded raster (zero in the padding).
pub fn mse_gradient<T: Scalar>(x: &ImagePlanes<T>, x_hat: &ImagePlanes<T>) -> Result<ImagePlanes<T>, MetricError> {
    check_dims(x, x_hat)?;
    let norm = T::lit(2.0 / (3 * x.pixel_count()) as f64);
    let (w, h, pw) = (x.width(), x.height(), x.padded_width());
    let planes = [0, 1, 2].map(|c| {
        let mut g = vec![T::zero(); pw * x.padded_height()];
        for yy in 0..h {
            for xx in 0..w {
                g[yy * pw + xx] = norm * (x_hat.get(c, xx, yy) - x.get(c, xx, yy));
            }
        }
        g
    });
    Ok(ImagePlanes::from_padded_planes(w, h, planes))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// PSNR in dB; identical images give `+∞`.
pub fn psnr<T: Scalar>(x: &ImagePlanes<T>, x_hat: &ImagePlanes<T>) -> Result<f64, MetricError> {
    Ok(psnr_from_mse(mse(x, x_hat)?.as_f64()))
}

/// Single-channel image for the SSIM pyramid.
#[derive(Clone, Debug)]
struct Gray {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mid = (SSIM_WINDOW - 1) as f64 / 2.0;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Separable Gaussian filter, "valid" region only.
fn filter_valid(img: &Gray, taps: &[f64; SSIM_WINDOW]) -> Gray {
    let (ow, oh) = (img.w + 1 - SSIM_WINDOW, img.h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * img.h];
    for y in 0..img.h {
        let src = &img.data[y * img.w..(y + 1) * img.w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    Gray { w: ow, h: oh, data: out }
}

fn zip_map(a: &Gray, b: &Gray, f: impl Fn(f64, f64) -> f64) -> Gray {
    Gray {
        w: a.w,
        h: a.h,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

/// Mean SSIM and mean contrast-structure term at one scale.
fn ssim_and_cs(x: &Gray, y: &Gray, taps: &[f64; SSIM_WINDOW]) -> (f64, f64) {
    let c1 = (SSIM_K1 * 255.0f64).powi(2);
    let c2 = (SSIM_K2 * 255.0f64).powi(2);
    let mu_x = filter_valid(x, taps);
    let mu_y = filter_valid(y, taps);
    let xy = filter_valid(&zip_map(x, y, |a, b| a * b), taps);
    let sq = filter_valid(&zip_map(x, y, |a, b| a * a + b * b), taps);
    let n = mu_x.data.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_x.data.len() {
        let (mx, my) = (mu_x.data[i], mu_y.data[i]);
        let num0 = 2.0 * mx * my;
        let den0 = mx * mx + my * my;
        let lum = (num0 + c1) / (den0 + c1);
        let cs_i = (2.0 * xy.data[i] - num0 + c2) / (sq.data[i] - den0 + c2);
        ssim += lum * cs_i;
        cs += cs_i;
    }
    (ssim / n, cs / n)
}

/// 2×2 mean pooling; odd sizes first repeat the last row/column.
fn downsample(img: &Gray) -> Gray {
    let (w, h) = (img.w.div_ceil(2), img.h.div_ceil(2));
    let at = |x: usize, y: usize| img.data[y.min(img.h - 1) * img.w + x.min(img.w - 1)];
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(0.25 * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) + at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1)));
        }
    }
    Gray { w, h, data }
}

/// MS-SSIM of two single-channel rasters with values in [0, 255].
pub fn ms_ssim_gray(width: usize, height: usize, a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if width < MS_SSIM_MIN_SIDE || height < MS_SSIM_MIN_SIDE {
        return Err(MetricError::TooSmall {
            width,
            height,
            required: MS_SSIM_MIN_SIDE,
        });
    }
    assert_eq!(a.len(), width * height);
    assert_eq!(b.len(), width * height);
    let taps = gaussian_taps();
    let mut x = Gray { w: width, h: height, data: a.to_vec() };
    let mut y = Gray { w: width, h: height, data: b.to_vec() };
    let mut score = 1.0;
    for (scale, &weight) in MS_SSIM_WEIGHTS.iter().enumerate() {
        if scale > 0 {
            x = downsample(&x);
            y = downsample(&y);
        }
        let (ssim, cs) = ssim_and_cs(&x, &y, &taps);
        let term = if scale + 1 == MS_SSIM_WEIGHTS.len() { ssim } else { cs };
        score *= term.max(0.0).powf(weight);
    }
    Ok(score)
}

/// MS-SSIM on the luma of two RGB rasters.
pub fn ms_ssim<T: Scalar>(x: &ImagePlanes<T>, x_hat: &ImagePlanes<T>) -> Result<f64, MetricError> {
    check_dims(x, x_hat)?;
    let a: Vec<f64> = luma_plane(x).into_iter().map(|v| v.as_f64()).collect();
    let b: Vec<f64> = luma_plane(x_hat).into_iter().map(|v| v.as_f64()).collect();
    ms_ssim_gray(x.width(), x.height(), &a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize) -> ImagePlanes<f64> {
        ImagePlanes::from_fn(w, h, |c, x, y| {
            let fx = x as f64 / 9.0;
            let fy = y as f64 / 13.0;
            (128.0 + 60.0 * fx.sin() * fy.cos() + 30.0 * ((x * y) as f64 / 300.0).sin() + c as f64 * 10.0)
                .clamp(0.0, 255.0)
        })
    }

    fn add_noise(img: &ImagePlanes<f64>, amp: f64, seed: u64) -> ImagePlanes<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..img.pixel_count() * 3).map(|_| rng.gen_range(-amp..=amp)).collect();
        ImagePlanes::from_fn(img.width(), img.height(), |c, x, y| {
            (img.get(c, x, y) + noise[(y * img.width() + x) * 3 + c]).clamp(0.0, 255.0)
        })
    }

    #[test]
    fn mse_examples() {
        let a = ImagePlanes::<f64>::from_fn(5, 3, |c, x, y| (c + x + y) as f64 * 10.0);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = a.map(|v| v + 1.0);
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        // 2x2 rasters, hand summed: diffs (R) 1,2,3,4 (G) 0 (B) -2,0,0,2 -> (30 + 8) / 12
        let x = ImagePlanes::<f64>::from_fn(2, 2, |_, _, _| 100.0);
        let y = ImagePlanes::<f64>::from_fn(2, 2, |c, px, py| {
            let i = (py * 2 + px) as f64;
            match c {
                0 => 101.0 + i,
                1 => 100.0,
                _ => [98.0, 100.0, 100.0, 102.0][py * 2 + px],
            }
        });
        assert!((mse(&x, &y).unwrap() - 38.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn mse_ignores_padding() {
        let a = ImagePlanes::<f64>::from_fn(10, 10, |_, _, _| 50.0);
        let mut b = a.clone();
        b.plane_mut(0)[15] = 0.0; // row 0, column 15 is padding
        assert_eq!(mse(&a, &b).unwrap(), 0.0);
        let g = mse_gradient(&a, &a.map(|v| v + 3.0)).unwrap();
        assert_eq!(g.plane(1)[15], 0.0);
        assert!((g.plane(1)[0] - 6.0 / 300.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let a = ImagePlanes::<f64>::from_fn(8, 8, |_, _, _| 0.0);
        let b = ImagePlanes::<f64>::from_fn(8, 9, |_, _, _| 0.0);
        assert!(matches!(mse(&a, &b), Err(MetricError::DimensionMismatch { .. })));
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_mse(1.0) - 48.130_803_608_679_1).abs() < 1e-9);
        assert!(psnr_from_mse(65025.0).abs() < 1e-12);
        let a = ImagePlanes::<f64>::from_fn(4, 4, |_, _, _| 9.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ms_ssim_identity_and_monotone() {
        let x = textured(180, 192);
        assert!((ms_ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let small = ms_ssim(&x, &add_noise(&x, 4.0, 1)).unwrap();
        let large = ms_ssim(&x, &add_noise(&x, 24.0, 1)).unwrap();
        assert!(small < 1.0 && large < small, "{small} {large}");
    }

    #[test]
    fn ms_ssim_rejects_small_images() {
        let x = textured(175, 200);
        let err = ms_ssim(&x, &x).unwrap_err();
        assert_eq!(
            err,
            MetricError::TooSmall {
                width: 175,
                height: 200,
                required: 176
            }
        );
        assert!(err.to_string().contains("176"));
    }
}
