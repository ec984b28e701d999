//! Baseline JPEG encode/decode built from the transform, quantization and
//! entropy-coding stages, plus bit-rate accounting.

use thiserror::Error;

use crate::blocks::{assemble_planes, DctTensor, QuantizedBlocks};
use crate::color::{image_to_rgb, image_to_ycbcr};
use crate::dct::{idct_8x8, Block};
use crate::entropy::{encode_entropy, EntropyError};
use crate::image::ImagePlanes;
use crate::jfif::{decode_jfif, write_jfif, JfifError, JfifFile};
use crate::quant::dequantize_block;
use crate::scalar::Scalar;
use crate::tables::{quality_to_tables, IntegerTables, TableError};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Jfif(#[from] JfifError),
    #[error("bits per pixel needs a positive pixel count, got {width}x{height}")]
    ZeroPixels { width: usize, height: usize },
}

/// Forward DCT of an RGB raster (via real-precision YCbCr).
pub fn forward_dct<T: Scalar>(rgb: &ImagePlanes<T>) -> DctTensor<T> {
    DctTensor::from_ycbcr(&image_to_ycbcr(rgb))
}

/// Entropy-codes already-quantized blocks into a JFIF file.
pub fn encode_quantized(
    z: &QuantizedBlocks,
    tables: &IntegerTables,
    width: usize,
    height: usize,
) -> Result<JfifFile, CodecError> {
    if z.blocks_x != width.div_ceil(8) || z.blocks_y != height.div_ceil(8) {
        return Err(JfifError::GridMismatch {
            got_y: z.blocks_y,
            got_x: z.blocks_x,
            width,
            height,
        }
        .into());
    }
    tables.validate()?;
    let payload = encode_entropy(z)?;
    Ok(write_jfif(&payload, tables, width, height)?)
}

/// Baseline encode with fixed integer tables.
pub fn encode_with_tables<T: Scalar>(rgb: &ImagePlanes<T>, tables: &IntegerTables) -> Result<JfifFile, CodecError> {
    let z = forward_dct(rgb).quantize(tables);
    encode_quantized(&z, tables, rgb.width(), rgb.height())
}

/// Baseline encode at an IJG quality factor.
pub fn encode_quality<T: Scalar>(rgb: &ImagePlanes<T>, quality: i64) -> Result<JfifFile, CodecError> {
    encode_with_tables(rgb, &quality_to_tables(quality)?)
}

/// Dequantize + IDCT + level shift; YCbCr planes in real precision, unclamped.
pub fn reconstruct_ycbcr<T: Scalar>(
    z: &QuantizedBlocks,
    tables: &IntegerTables,
    width: usize,
    height: usize,
) -> ImagePlanes<T> {
    let channels: [Vec<Block<T>>; 3] = [0, 1, 2].map(|c| {
        let t = tables.for_channel(c);
        z.channels[c]
            .iter()
            .map(|b| idct_8x8(&dequantize_block::<T>(b, t)))
            .collect()
    });
    assemble_planes(width, height, z.blocks_x, &channels)
}

/// Full internal decode of quantized blocks to clamped RGB.
pub fn reconstruct_rgb<T: Scalar>(
    z: &QuantizedBlocks,
    tables: &IntegerTables,
    width: usize,
    height: usize,
) -> ImagePlanes<T> {
    image_to_rgb(&reconstruct_ycbcr(z, tables, width, height))
}

/// Parses a JFIF stream and decodes it to an 8-bit RGB raster: YCbCr samples
/// are rounded and clamped to 8 bits before color conversion, as standard
/// decoders do.
pub fn decode_to_rgb8<T: Scalar>(bytes: &[u8]) -> Result<ImagePlanes<T>, CodecError> {
    let dec = decode_jfif(bytes)?;
    let ycc = reconstruct_ycbcr::<T>(&dec.blocks, &dec.tables, dec.width, dec.height).quantized_to_u8();
    Ok(image_to_rgb(&ycc).quantized_to_u8())
}

/// Bits per pixel over the unpadded pixel count.
pub fn compute_bpp(file: &JfifFile, width: usize, height: usize) -> Result<f64, CodecError> {
    bpp_from_bytes(file.size_bytes(), width, height)
}

pub fn bpp_from_bytes(size_bytes: usize, width: usize, height: usize) -> Result<f64, CodecError> {
    if width == 0 || height == 0 {
        return Err(CodecError::ZeroPixels { width, height });
    }
    Ok(8.0 * size_bytes as f64 / (width * height) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jfif::decode_jfif;

    fn gradient_image(w: usize, h: usize) -> ImagePlanes<f64> {
        ImagePlanes::from_fn(w, h, |c, x, y| ((x * 9 + y * 5 + c * 40) % 256) as f64)
    }

    #[test]
    fn bpp_examples() {
        let file = JfifFile {
            bytes: vec![0; 1000],
            recorded_tables: IntegerTables::annex_k(),
        };
        assert!((compute_bpp(&file, 100, 100).unwrap() - 0.8).abs() < 1e-15);
        assert!((compute_bpp(&file, 200, 100).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(compute_bpp(&file, 0, 100), Err(CodecError::ZeroPixels { .. })));
    }

    #[test]
    fn encode_decode_recovers_blocks() {
        let img = gradient_image(21, 13);
        let tables = quality_to_tables(60).unwrap();
        let z = forward_dct(&img).quantize(&tables);
        let file = encode_quantized(&z, &tables, 21, 13).unwrap();
        let dec = decode_jfif(&file.bytes).unwrap();
        assert_eq!(dec.blocks, z);
        assert_eq!(dec.tables, tables);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let z = QuantizedBlocks::zeros(2, 2);
        assert!(matches!(
            encode_quantized(&z, &IntegerTables::annex_k(), 24, 16),
            Err(CodecError::Jfif(JfifError::GridMismatch { .. }))
        ));
    }

    #[test]
    fn quality_one_hundred_is_near_lossless() {
        let img = gradient_image(16, 16);
        let file = encode_quality(&img, 100).unwrap();
        let out: ImagePlanes<f64> = decode_to_rgb8(&file.bytes).unwrap();
        let worst = img
            .to_rgb8()
            .iter()
            .zip(out.to_rgb8())
            .map(|(&a, b)| (a as i32 - b as i32).abs())
            .max()
            .unwrap();
        assert!(worst <= 3, "worst {worst}");
    }

    #[test]
    fn higher_quality_costs_more_bits() {
        let img = gradient_image(64, 48);
        let lo = encode_quality(&img, 10).unwrap().size_bytes();
        let hi = encode_quality(&img, 90).unwrap().size_bytes();
        assert!(hi > lo);
    }
}
