//! Orthonormal 8×8 DCT-II in direct matrix-product form.
//!
//! Blocks are row-major: index `v * 8 + u` holds vertical frequency `v` and
//! horizontal frequency `u` (or pixel row `v`, column `u` in the sample domain).

use std::sync::OnceLock;

use crate::scalar::Scalar;

pub type Block<T> = [T; 64];

const LEVEL_SHIFT: f64 = 128.0;

fn basis_f64() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            let norm = if k == 0 { (0.125f64).sqrt() } else { 0.5 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = norm * (((2 * n + 1) * k) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        c
    })
}

/// Basis matrix `C[k][n] = c(k)/2 · cos((2n+1)kπ/16)` with `c(0) = 1/√2`.
pub fn basis<T: Scalar>() -> [[T; 8]; 8] {
    basis_f64().map(|row| row.map(T::lit))
}

/// `C · X · Cᵀ` for a row-major block.
pub fn dct2<T: Scalar>(x: &Block<T>) -> Block<T> {
    let c = basis::<T>();
    // tmp = X · Cᵀ  (transform rows)
    let mut tmp = [T::zero(); 64];
    for r in 0..8 {
        for u in 0..8 {
            let mut acc = T::zero();
            for n in 0..8 {
                acc += x[r * 8 + n] * c[u][n];
            }
            tmp[r * 8 + u] = acc;
        }
    }
    let mut out = [T::zero(); 64];
    for v in 0..8 {
        for u in 0..8 {
            let mut acc = T::zero();
            for n in 0..8 {
                acc += c[v][n] * tmp[n * 8 + u];
            }
            out[v * 8 + u] = acc;
        }
    }
    out
}

/// `Cᵀ · F · C`, the inverse of [`dct2`].
pub fn idct2<T: Scalar>(f: &Block<T>) -> Block<T> {
    let c = basis::<T>();
    let mut tmp = [T::zero(); 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut acc = T::zero();
            for u in 0..8 {
                acc += f[v * 8 + u] * c[u][x];
            }
            tmp[v * 8 + x] = acc;
        }
    }
    let mut out = [T::zero(); 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = T::zero();
            for v in 0..8 {
                acc += c[v][y] * tmp[v * 8 + x];
            }
            out[y * 8 + x] = acc;
        }
    }
    out
}

/// Level shift by −128, then the 2-D DCT.
pub fn fdct_8x8<T: Scalar>(samples: &Block<T>) -> Block<T> {
    let shift = T::lit(LEVEL_SHIFT);
    dct2(&samples.map(|s| s - shift))
}

/// Inverse DCT, then +128. No clamping.
pub fn idct_8x8<T: Scalar>(coeffs: &Block<T>) -> Block<T> {
    let shift = T::lit(LEVEL_SHIFT);
    idct2(coeffs).map(|s| s + shift)
}
