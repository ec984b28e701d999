//! Integer quantization of DCT blocks.

use crate::dct::Block;
use crate::scalar::{round_half_away, Scalar};

/// `round(F / Q)` entry-wise, ties away from zero.
pub fn quantize_block<T: Scalar>(coeffs: &Block<T>, table: &[u8; 64]) -> [i32; 64] {
    std::array::from_fn(|k| {
        let q = T::lit(table[k] as f64);
        round_half_away(coeffs[k] / q).to_i32().unwrap_or(i32::MAX)
    })
}

/// `z · Q` entry-wise. Attention edits are never undone here.
pub fn dequantize_block<T: Scalar>(z: &[i32; 64], table: &[u8; 64]) -> Block<T> {
    std::array::from_fn(|k| T::lit(z[k] as f64 * table[k] as f64))
}
