//! Three-plane rasters padded to the 8×8 block grid, plus PNG/PPM ingestion.

use std::path::Path;

use thiserror::Error;

use crate::scalar::{clamp_sample, Scalar};

pub const BLOCK: usize = 8;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image must be at least 1x1 pixels, got {width}x{height}")]
    Empty { width: usize, height: usize },
    #[error("sample buffer has {got} bytes, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("{path}: {message}")]
    Decode { path: String, message: String },
    #[error("{path}: unsupported pixel format {format} (expected 8-bit RGB)")]
    Unsupported { path: String, format: String },
    #[error("{path}: grayscale images are not supported, supply 8-bit RGB")]
    Grayscale { path: String },
    #[error("crop {x}+{w}, {y}+{h} outside {width}x{height} image")]
    Crop {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },
}

/// A three-channel raster (RGB or YCbCr) stored at block-grid resolution.
///
/// Samples live in padded planes of `padded_width() × padded_height()`; the
/// right and bottom margins replicate the last real column and row.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlanes<T> {
    width: usize,
    height: usize,
    pad_right: usize,
    pad_bottom: usize,
    planes: [Vec<T>; 3],
}

fn padding(dim: usize) -> usize {
    (BLOCK - dim % BLOCK) % BLOCK
}

impl<T: Scalar> ImagePlanes<T> {
    /// Builds padded planes from interleaved 8-bit RGB.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty { width, height });
        }
        if rgb.len() != width * height * 3 {
            return Err(ImageError::BufferSize {
                got: rgb.len(),
                expected: width * height * 3,
            });
        }
        Ok(Self::from_fn(width, height, |c, x, y| {
            T::lit(rgb[(y * width + x) * 3 + c] as f64)
        }))
    }

    /// Builds an image by sampling `f(channel, x, y)` over the unpadded area.
    /// Padding replicates the border.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let pad_right = padding(width);
        let pad_bottom = padding(height);
        let pw = width + pad_right;
        let ph = height + pad_bottom;
        let mut planes: [Vec<T>; 3] = Default::default();
        for (c, plane) in planes.iter_mut().enumerate() {
            plane.reserve_exact(pw * ph);
            for y in 0..ph {
                let sy = y.min(height - 1);
                for x in 0..pw {
                    plane.push(f(c, x.min(width - 1), sy));
                }
            }
        }
        Self {
            width,
            height,
            pad_right,
            pad_bottom,
            planes,
        }
    }

    /// Wraps already-padded planes. Each plane must hold `padded_width × padded_height`
    /// samples for the given unpadded size.
    pub fn from_padded_planes(width: usize, height: usize, planes: [Vec<T>; 3]) -> Self {
        let pad_right = padding(width);
        let pad_bottom = padding(height);
        let n = (width + pad_right) * (height + pad_bottom);
        assert!(planes.iter().all(|p| p.len() == n), "plane size mismatch");
        Self {
            width,
            height,
            pad_right,
            pad_bottom,
            planes,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pad_right(&self) -> usize {
        self.pad_right
    }

    pub fn pad_bottom(&self) -> usize {
        self.pad_bottom
    }

    pub fn padded_width(&self) -> usize {
        self.width + self.pad_right
    }

    pub fn padded_height(&self) -> usize {
        self.height + self.pad_bottom
    }

    /// Number of block columns (M).
    pub fn blocks_x(&self) -> usize {
        self.padded_width() / BLOCK
    }

    /// Number of block rows (N).
    pub fn blocks_y(&self) -> usize {
        self.padded_height() / BLOCK
    }

    /// Unpadded pixel count.
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn plane(&self, c: usize) -> &[T] {
        &self.planes[c]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.planes[c]
    }

    pub fn planes(&self) -> &[Vec<T>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<T>; 3] {
        self.planes
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> T {
        self.planes[c][y * self.padded_width() + x]
    }

    /// Copies out the 8×8 block at block coordinates `(bx, by)` of channel `c`.
    pub fn block(&self, c: usize, bx: usize, by: usize) -> [T; 64] {
        let stride = self.padded_width();
        let mut out = [T::zero(); 64];
        for r in 0..BLOCK {
            let row = (by * BLOCK + r) * stride + bx * BLOCK;
            out[r * BLOCK..(r + 1) * BLOCK].copy_from_slice(&self.planes[c][row..row + BLOCK]);
        }
        out
    }

    /// Same dimensions and padding, every sample mapped through `f`.
    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pad_right: self.pad_right,
            pad_bottom: self.pad_bottom,
            planes: [0, 1, 2].map(|c| self.planes[c].iter().map(|&v| f(v)).collect()),
        }
    }

    /// True when both images share unpadded and padded dimensions.
    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Clamped, rounded interleaved 8-bit samples of the unpadded area.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixel_count() * 3);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    let v = clamp_sample(self.get(c, x, y)).round();
                    out.push(v.to_u8().unwrap_or(0));
                }
            }
        }
        out
    }

    /// Re-quantizes every sample to the nearest 8-bit value.
    pub fn quantized_to_u8(&self) -> Self {
        self.map(|v| clamp_sample(v).round())
    }

    /// Extracts an unpadded `w × h` window with its top-left corner at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self, ImageError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(ImageError::Crop {
                x: x0,
                y: y0,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        Ok(Self::from_fn(w, h, |c, x, y| self.get(c, x0 + x, y0 + y)))
    }

    pub fn cast<U: Scalar>(&self) -> ImagePlanes<U> {
        ImagePlanes {
            width: self.width,
            height: self.height,
            pad_right: self.pad_right,
            pad_bottom: self.pad_bottom,
            planes: [0, 1, 2].map(|c| self.planes[c].iter().map(|v| U::lit(v.as_f64())).collect()),
        }
    }
}

/// Decodes an 8-bit RGB PNG or binary PPM (P6) file into padded planes.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImagePlanes<T>, ImageError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let reader = image::ImageReader::open(path)
        .map_err(|e| ImageError::Decode {
            path: name.clone(),
            message: e.to_string(),
        })?
        .with_guessed_format()
        .map_err(|e| ImageError::Decode {
            path: name.clone(),
            message: e.to_string(),
        })?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        other => {
            return Err(ImageError::Unsupported {
                path: name,
                format: format!("container {other:?}"),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| ImageError::Decode {
        path: name.clone(),
        message: e.to_string(),
    })?;
    match decoded {
        image::DynamicImage::ImageRgb8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            ImagePlanes::from_rgb8(w, h, buf.as_raw())
        }
        image::DynamicImage::ImageLuma8(_)
        | image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageLumaA8(_)
        | image::DynamicImage::ImageLumaA16(_) => Err(ImageError::Grayscale { path: name }),
        other => Err(ImageError::Unsupported {
            path: name,
            format: format!("{:?}", other.color()),
        }),
    }
}
