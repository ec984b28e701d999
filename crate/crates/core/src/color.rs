//! Full-range BT.601 (JFIF) color conversion.

use crate::image::ImagePlanes;
use crate::scalar::{clamp_sample, Scalar};

/// Forward JFIF matrix rows: Y, Cb, Cr (offsets applied separately).
pub(crate) const RGB_TO_YCBCR: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];

/// Inverse JFIF matrix applied to `(Y, Cb − 128, Cr − 128)`.
pub(crate) const YCBCR_TO_RGB: [[f64; 3]; 3] = [
    [1.0, 0.0, 1.402],
    [1.0, -0.344_136, -0.714_136],
    [1.0, 1.772, 0.0],
];

pub fn rgb_to_ycbcr<T: Scalar>(rgb: [T; 3]) -> [T; 3] {
    let m = RGB_TO_YCBCR;
    let offsets = [0.0, 128.0, 128.0];
    [0, 1, 2].map(|row| {
        let v = T::lit(offsets[row])
            + T::lit(m[row][0]) * rgb[0]
            + T::lit(m[row][1]) * rgb[1]
            + T::lit(m[row][2]) * rgb[2];
        clamp_sample(v)
    })
}

/// Inverse transform without the output clamp. Linear in `(Y, Cb, Cr)`.
#[inline]
pub fn ycbcr_to_rgb_unclamped<T: Scalar>(ycc: [T; 3]) -> [T; 3] {
    let m = YCBCR_TO_RGB;
    let half = T::lit(128.0);
    let (y, cb, cr) = (ycc[0], ycc[1] - half, ycc[2] - half);
    [0, 1, 2].map(|row| y + T::lit(m[row][1]) * cb + T::lit(m[row][2]) * cr)
}

pub fn ycbcr_to_rgb<T: Scalar>(ycc: [T; 3]) -> [T; 3] {
    ycbcr_to_rgb_unclamped(ycc).map(clamp_sample)
}

/// Converts a whole RGB raster (padding included) to YCbCr planes in real precision.
pub fn image_to_ycbcr<T: Scalar>(rgb: &ImagePlanes<T>) -> ImagePlanes<T> {
    let [r, g, b] = rgb.planes();
    let n = r.len();
    let mut out: [Vec<T>; 3] = Default::default();
    for p in out.iter_mut() {
        p.reserve_exact(n);
    }
    for i in 0..n {
        let ycc = rgb_to_ycbcr([r[i], g[i], b[i]]);
        for c in 0..3 {
            out[c].push(ycc[c]);
        }
    }
    ImagePlanes::from_padded_planes(rgb.width(), rgb.height(), out)
}

/// Converts YCbCr planes back to clamped RGB.
pub fn image_to_rgb<T: Scalar>(ycc: &ImagePlanes<T>) -> ImagePlanes<T> {
    let [y, cb, cr] = ycc.planes();
    let n = y.len();
    let mut out: [Vec<T>; 3] = Default::default();
    for p in out.iter_mut() {
        p.reserve_exact(n);
    }
    for i in 0..n {
        let rgb = ycbcr_to_rgb([y[i], cb[i], cr[i]]);
        for c in 0..3 {
            out[c].push(rgb[c]);
        }
    }
    ImagePlanes::from_padded_planes(ycc.width(), ycc.height(), out)
}

/// Luma plane of an RGB raster, unpadded, row-major. Used by MS-SSIM.
pub fn luma_plane<T: Scalar>(rgb: &ImagePlanes<T>) -> Vec<T> {
    let m = RGB_TO_YCBCR[0];
    let mut out = Vec::with_capacity(rgb.pixel_count());
    for y in 0..rgb.height() {
        for x in 0..rgb.width() {
            out.push(
                T::lit(m[0]) * rgb.get(0, x, y)
                    + T::lit(m[1]) * rgb.get(1, x, y)
                    + T::lit(m[2]) * rgb.get(2, x, y),
            );
        }
    }
    out
}
