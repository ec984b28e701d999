#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use std::path::PathBuf;

use qtune::image::load_image;
use qtune::Image;

pub const FIXTURES: [&str; 4] = ["astronaut", "chelsea", "coffee", "rocket"];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn fixture(name: &str) -> Image {
    load_image(data_dir().join(format!("{name}.png"))).expect("fixture image")
}

pub fn distorted_pair() -> (Image, Image) {
    (
        fixture("astronaut"),
        load_image(data_dir().join("pairs").join("astronaut_distorted.png")).expect("fixture image"),
    )
}

/// Interleaved 8-bit YCbCr from the independent `jpeg-decoder` crate, no color transform.
pub fn reference_ycbcr(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    let mut dec = jpeg_decoder::Decoder::new(bytes);
    dec.set_color_transform(jpeg_decoder::ColorTransform::None);
    let rows = dec.decode().map_err(|e| e.to_string())?;
    let info = dec.info().ok_or("no frame info")?;
    let (w, h) = (info.width as usize, info.height as usize);
    if rows.len() != w * h * 3 {
        return Err(format!("expected {} samples, got {}", w * h * 3, rows.len()));
    }
    // untransformed output is row-planar: each line holds Y, then Cb, then Cr
    let mut out = vec![0u8; rows.len()];
    for y in 0..h {
        for c in 0..3 {
            for x in 0..w {
                out[(y * w + x) * 3 + c] = rows[(y * 3 + c) * w + x];
            }
        }
    }
    Ok((w, h, out))
}

/// RGB decode from `jpeg-decoder` with its own color conversion.
pub fn reference_rgb(bytes: &[u8]) -> Result<Vec<u8>, String> {
    jpeg_decoder::Decoder::new(bytes).decode().map_err(|e| e.to_string())
}

/// Internal reconstruction of a file, YCbCr rounded and clamped to 8 bits, interleaved.
pub fn internal_ycbcr(bytes: &[u8]) -> Vec<u8> {
    let dec = qtune::jfif::decode_jfif(bytes).expect("internal parse");
    let ycc = qtune::codec::reconstruct_ycbcr::<f64>(&dec.blocks, &dec.tables, dec.width, dec.height);
    ycc.to_rgb8()
}

/// Largest per-sample difference between the reference decoder and the internal path.
pub fn reference_gap(bytes: &[u8]) -> Result<u8, String> {
    let (w, h, reference) = reference_ycbcr(bytes)?;
    let ours = internal_ycbcr(bytes);
    if reference.len() != ours.len() || w * h * 3 != ours.len() {
        return Err(format!("size mismatch: reference {} samples, internal {}", reference.len(), ours.len()));
    }
    Ok(reference.iter().zip(&ours).map(|(a, b)| a.abs_diff(*b)).max().unwrap_or(0))
}
