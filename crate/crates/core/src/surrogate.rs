//! Differentiable surrogate of the JPEG encode/decode loop.
//!
//! Forward, per block and channel:
//!
//! ```text
//! F  = fdct(ycbcr(x))
//! u  = F · A / Q           A = sigmoid(logits), Q the effective table
//! Ẑ  = round(u)            (true rounding, ties away from zero)
//! x̂  = clamp(rgb(idct(Ẑ · Q)))
//! ```
//!
//! The decoder multiplies by `Q` only; attention is a pre-edit it never sees.
//! Backward replaces `d round(u)/du` by `3 (u − round(u))²`, the slope of the
//! cubic rounding surrogate `round(u) + (u − round(u))³`.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::blocks::{assemble_planes, DctTensor, QuantizedBlocks};
use crate::codec::forward_dct;
use crate::color::{ycbcr_to_rgb_unclamped, YCBCR_TO_RGB};
use crate::dct::{dct2, idct2, Block};
use crate::image::ImagePlanes;
use crate::scalar::{round_half_away, Scalar};
use crate::tables::{QuantTablePair, TableError, TableKind};

const CHANNEL_NAMES: [&str; 3] = ["Y", "Cb", "Cr"];
/// Block rows per parallel work unit; fixed so reductions do not depend on thread count.
const ROWS_PER_CHUNK: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("non-finite value in {channel} block {block} coefficient {coefficient}")]
    NonFinite {
        channel: &'static str,
        block: usize,
        coefficient: usize,
    },
    #[error("attention grid {got_y}x{got_x} does not match image grid {want_y}x{want_x}")]
    AttentionShape {
        got_y: usize,
        got_x: usize,
        want_y: usize,
        want_x: usize,
    },
    #[error("upstream gradient is {got_w}x{got_h} (padded), tape expects {want_w}x{want_h}")]
    UpstreamShape {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("gradient set shape does not match parameters")]
    GradientShape,
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Rounding with its surrogate derivative: `(round(x), 3 (x − round(x))²)`.
#[inline]
pub fn round_ste<T: Scalar>(x: T) -> (T, T) {
    let r = round_half_away(x);
    let d = x - r;
    (r, T::lit(3.0) * d * d)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Per-block, per-frequency attention logits for luma and chroma.
///
/// The weights are `sigmoid(logits)`; one chroma map serves both Cb and Cr.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMaps<T> {
    pub blocks_y: usize,
    pub blocks_x: usize,
    pub logits_luma: Vec<Block<T>>,
    pub logits_chroma: Vec<Block<T>>,
}

impl<T: Scalar> AttentionMaps<T> {
    pub fn constant(blocks_y: usize, blocks_x: usize, logit: T) -> Self {
        let n = blocks_y * blocks_x;
        Self {
            blocks_y,
            blocks_x,
            logits_luma: vec![[logit; 64]; n],
            logits_chroma: vec![[logit; 64]; n],
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks_y * self.blocks_x
    }

    pub fn logits(&self, kind: TableKind) -> &[Block<T>] {
        match kind {
            TableKind::Luma => &self.logits_luma,
            TableKind::Chroma => &self.logits_chroma,
        }
    }

    pub fn logits_mut(&mut self, kind: TableKind) -> &mut [Block<T>] {
        match kind {
            TableKind::Luma => &mut self.logits_luma,
            TableKind::Chroma => &mut self.logits_chroma,
        }
    }

    /// Attention weights of one block.
    pub fn weights(&self, kind: TableKind, block: usize) -> Block<T> {
        self.logits(kind)[block].map(sigmoid)
    }

    /// Mean weight over all `N·M·64` entries of one map.
    pub fn mean_weight(&self, kind: TableKind) -> T {
        let logits = self.logits(kind);
        let sum: T = logits.iter().flat_map(|b| b.iter()).map(|&l| sigmoid(l)).sum();
        sum / T::from_usize_lossy(logits.len() * 64)
    }
}

/// Everything the surrogate learns: tables and, optionally, attention maps.
///
/// `attention: None` is the table-only configuration (`A ≡ 1` exactly).
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateParams<T> {
    pub tables: QuantTablePair<T>,
    pub attention: Option<AttentionMaps<T>>,
}

impl<T: Scalar> SurrogateParams<T> {
    pub fn tables_only(tables: QuantTablePair<T>) -> Self {
        Self {
            tables,
            attention: None,
        }
    }

    /// Mean attention weight, 1 when attention is disabled.
    pub fn mean_attention(&self, kind: TableKind) -> T {
        self.attention.as_ref().map_or(T::one(), |a| a.mean_weight(kind))
    }

    fn attention_weights(&self, channel: usize, block: usize) -> Option<Block<T>> {
        self.attention
            .as_ref()
            .map(|a| a.weights(TableKind::for_channel(channel), block))
    }
}

/// `∂L/∂θ`: table gradients are with respect to the scaled parameters
/// `Q · scale_s`; attention gradients with respect to the raw logits.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T> {
    pub d_q_luma: [T; 64],
    pub d_q_chroma: [T; 64],
    pub d_logits_luma: Vec<Block<T>>,
    pub d_logits_chroma: Vec<Block<T>>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(p: &SurrogateParams<T>) -> Self {
        let n = p.attention.as_ref().map_or(0, |a| a.block_count());
        Self {
            d_q_luma: [T::zero(); 64],
            d_q_chroma: [T::zero(); 64],
            d_logits_luma: vec![[T::zero(); 64]; n],
            d_logits_chroma: vec![[T::zero(); 64]; n],
        }
    }

    pub fn d_q(&self, kind: TableKind) -> &[T; 64] {
        match kind {
            TableKind::Luma => &self.d_q_luma,
            TableKind::Chroma => &self.d_q_chroma,
        }
    }

    pub fn d_q_mut(&mut self, kind: TableKind) -> &mut [T; 64] {
        match kind {
            TableKind::Luma => &mut self.d_q_luma,
            TableKind::Chroma => &mut self.d_q_chroma,
        }
    }

    pub fn d_logits(&self, kind: TableKind) -> &[Block<T>] {
        match kind {
            TableKind::Luma => &self.d_logits_luma,
            TableKind::Chroma => &self.d_logits_chroma,
        }
    }

    pub fn d_logits_mut(&mut self, kind: TableKind) -> &mut [Block<T>] {
        match kind {
            TableKind::Luma => &mut self.d_logits_luma,
            TableKind::Chroma => &mut self.d_logits_chroma,
        }
    }

    pub fn matches(&self, p: &SurrogateParams<T>) -> bool {
        let n = p.attention.as_ref().map_or(0, |a| a.block_count());
        self.d_logits_luma.len() == n && self.d_logits_chroma.len() == n
    }

    /// `self += other`.
    pub fn accumulate(&mut self, other: &Self) -> Result<(), SurrogateError> {
        if self.d_logits_luma.len() != other.d_logits_luma.len()
            || self.d_logits_chroma.len() != other.d_logits_chroma.len()
        {
            return Err(SurrogateError::GradientShape);
        }
        for k in 0..64 {
            self.d_q_luma[k] += other.d_q_luma[k];
            self.d_q_chroma[k] += other.d_q_chroma[k];
        }
        for kind in [TableKind::Luma, TableKind::Chroma] {
            for (a, b) in self.d_logits_mut(kind).iter_mut().zip(other.d_logits(kind)) {
                for k in 0..64 {
                    a[k] += b[k];
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        self.for_each_mut(|g| *g *= factor);
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut T)) {
        self.d_q_luma.iter_mut().chain(self.d_q_chroma.iter_mut()).for_each(&mut f);
        for b in self.d_logits_luma.iter_mut().chain(self.d_logits_chroma.iter_mut()) {
            b.iter_mut().for_each(&mut f);
        }
    }

    /// Flat iteration in optimizer order: luma table, chroma table, luma logits, chroma logits.
    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.d_q_luma
            .iter()
            .chain(self.d_q_chroma.iter())
            .chain(self.d_logits_luma.iter().flatten())
            .chain(self.d_logits_chroma.iter().flatten())
            .copied()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

/// Input-dependent part of the forward pass, computed once per image.
#[derive(Clone, Debug)]
pub struct SurrogateInput<T> {
    pub width: usize,
    pub height: usize,
    pub coeffs: Arc<DctTensor<T>>,
}

impl<T: Scalar> SurrogateInput<T> {
    pub fn new(rgb: &ImagePlanes<T>) -> Self {
        Self {
            width: rgb.width(),
            height: rgb.height(),
            coeffs: Arc::new(forward_dct(rgb)),
        }
    }
}

/// Intermediates retained by [`surrogate_forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    width: usize,
    height: usize,
    coeffs: Arc<DctTensor<T>>,
    tables: QuantTablePair<T>,
    attention: Option<AttentionMaps<T>>,
    /// `u = F·A/Q` per channel and block.
    pre_round: DctTensor<T>,
    /// 1 where the unclamped RGB sample lies inside [0, 255].
    pass_mask: [Vec<bool>; 3],
}

impl<T> Tape<T> {
    pub fn pre_round(&self) -> &DctTensor<T> {
        &self.pre_round
    }
}

#[derive(Clone, Debug)]
pub struct SurrogateOutput<T> {
    pub x_hat: ImagePlanes<T>,
    pub z: QuantizedBlocks,
    pub tape: Tape<T>,
}

/// Forward pass from raw pixels.
pub fn surrogate_forward<T: Scalar>(
    x: &ImagePlanes<T>,
    p: &SurrogateParams<T>,
) -> Result<SurrogateOutput<T>, SurrogateError> {
    forward_from_input(&SurrogateInput::new(x), p)
}

type ChannelBlocks<T> = [Vec<Block<T>>; 3];

/// Pre-round values, quantized coefficients and reconstruction of one block.
type BlockPass<T> = (Block<T>, [i32; 64], Block<T>);

/// Forward pass reusing precomputed DCT coefficients.
pub fn forward_from_input<T: Scalar>(
    input: &SurrogateInput<T>,
    p: &SurrogateParams<T>,
) -> Result<SurrogateOutput<T>, SurrogateError> {
    p.tables.validate()?;
    let coeffs = &input.coeffs;
    let (by, bx) = (coeffs.blocks_y, coeffs.blocks_x);
    if let Some(a) = &p.attention {
        if a.blocks_y != by || a.blocks_x != bx {
            return Err(SurrogateError::AttentionShape {
                got_y: a.blocks_y,
                got_x: a.blocks_x,
                want_y: by,
                want_x: bx,
            });
        }
    }

    let mut pre_round: ChannelBlocks<T> = Default::default();
    let mut z_out: [Vec<[i32; 64]>; 3] = Default::default();
    let mut recon: ChannelBlocks<T> = Default::default();
    for c in 0..3 {
        let table = p.tables.for_channel(c);
        let results: Vec<Result<BlockPass<T>, SurrogateError>> = coeffs.channels[c]
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let weights = p.attention_weights(c, i);
                let mut u = [T::zero(); 64];
                let mut z = [0i32; 64];
                let mut deq = [T::zero(); 64];
                for k in 0..64 {
                    let edited = match &weights {
                        Some(a) => f[k] * a[k],
                        None => f[k],
                    };
                    let v = edited / table[k];
                    if !v.is_finite() {
                        return Err(SurrogateError::NonFinite {
                            channel: CHANNEL_NAMES[c],
                            block: i,
                            coefficient: k,
                        });
                    }
                    let r = round_half_away(v);
                    u[k] = v;
                    z[k] = r.to_i32().unwrap_or(0);
                    deq[k] = r * table[k];
                }
                let mut samples = idct2(&deq);
                for s in samples.iter_mut() {
                    *s += T::lit(128.0);
                }
                Ok((u, z, samples))
            })
            .collect();
        for r in results {
            let (u, z, s) = r?;
            pre_round[c].push(u);
            z_out[c].push(z);
            recon[c].push(s);
        }
    }

    let ycc = assemble_planes(input.width, input.height, bx, &recon);
    let [y, cb, cr] = ycc.into_planes();
    let n = y.len();
    let mut rgb: [Vec<T>; 3] = Default::default();
    let mut mask: [Vec<bool>; 3] = Default::default();
    for c in 0..3 {
        rgb[c].reserve_exact(n);
        mask[c].reserve_exact(n);
    }
    let (lo, hi) = (T::zero(), T::lit(255.0));
    for i in 0..n {
        let v = ycbcr_to_rgb_unclamped([y[i], cb[i], cr[i]]);
        for c in 0..3 {
            let inside = v[c] >= lo && v[c] <= hi;
            mask[c].push(inside);
            rgb[c].push(v[c].max(lo).min(hi));
        }
    }
    let x_hat = ImagePlanes::from_padded_planes(input.width, input.height, rgb);

    Ok(SurrogateOutput {
        x_hat,
        z: QuantizedBlocks {
            blocks_y: by,
            blocks_x: bx,
            channels: z_out,
        },
        tape: Tape {
            width: input.width,
            height: input.height,
            coeffs: Arc::clone(coeffs),
            tables: p.tables.clone(),
            attention: p.attention.clone(),
            pre_round: DctTensor {
                blocks_y: by,
                blocks_x: bx,
                channels: pre_round,
            },
            pass_mask: mask,
        },
    })
}

/// Reverse-mode gradients of a scalar loss given `∂L/∂x̂` over the padded raster.
pub fn surrogate_backward<T: Scalar>(tape: &Tape<T>, upstream: &ImagePlanes<T>) -> Result<GradientSet<T>, SurrogateError> {
    let (by, bx) = (tape.pre_round.blocks_y, tape.pre_round.blocks_x);
    let (pw, ph) = (bx * 8, by * 8);
    if upstream.padded_width() != pw || upstream.padded_height() != ph {
        return Err(SurrogateError::UpstreamShape {
            got_w: upstream.padded_width(),
            got_h: upstream.padded_height(),
            want_w: pw,
            want_h: ph,
        });
    }

    // Through the clamp and the (linear) color transform: g_ycc = Mᵀ g_rgb.
    let m = YCBCR_TO_RGB.map(|row| row.map(T::lit));
    let n = pw * ph;
    let mut g_ycc: [Vec<T>; 3] = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    for i in 0..n {
        let g = [0, 1, 2].map(|c| {
            if tape.pass_mask[c][i] {
                upstream.plane(c)[i]
            } else {
                T::zero()
            }
        });
        for (j, out) in g_ycc.iter_mut().enumerate() {
            out[i] = m[0][j] * g[0] + m[1][j] * g[1] + m[2][j] * g[2];
        }
    }
    let g_img = ImagePlanes::from_padded_planes(tape.width, tape.height, g_ycc);

    let scale = tape.tables.scale_s;
    let mut grads = GradientSet {
        d_q_luma: [T::zero(); 64],
        d_q_chroma: [T::zero(); 64],
        d_logits_luma: Vec::new(),
        d_logits_chroma: Vec::new(),
    };
    let has_attention = tape.attention.is_some();
    if has_attention {
        grads.d_logits_luma = vec![[T::zero(); 64]; by * bx];
        grads.d_logits_chroma = vec![[T::zero(); 64]; by * bx];
    }

    for c in 0..3 {
        let kind = TableKind::for_channel(c);
        let table = tape.tables.for_channel(c);
        let chunk = ROWS_PER_CHUNK * bx;
        // Each chunk: (table gradient partial in effective units, logit gradients of its blocks).
        let partials: Vec<([T; 64], Vec<Block<T>>)> = (0..by * bx)
            .collect::<Vec<_>>()
            .par_chunks(chunk)
            .map(|idx| {
                let mut g_table = [T::zero(); 64];
                let mut g_logits = Vec::with_capacity(if has_attention { idx.len() } else { 0 });
                for &i in idx {
                    let g_d = dct2(&g_img.block(c, i % bx, i / bx));
                    let u = &tape.pre_round.channels[c][i];
                    let f = &tape.coeffs.channels[c][i];
                    let weights = tape.attention.as_ref().map(|a| a.weights(kind, i));
                    let mut g_l = [T::zero(); 64];
                    for k in 0..64 {
                        let q = table[k];
                        let (r, slope) = round_ste(u[k]);
                        // D = Ẑ·Q
                        let g_z = g_d[k] * q;
                        g_table[k] += g_d[k] * r;
                        // Ẑ = round(u), u = F·A/Q
                        let g_u = g_z * slope;
                        g_table[k] -= g_u * u[k] / q;
                        if let Some(a) = &weights {
                            let g_a = g_u * f[k] / q;
                            g_l[k] = g_a * a[k] * (T::one() - a[k]);
                        }
                    }
                    if has_attention {
                        g_logits.push(g_l);
                    }
                }
                (g_table, g_logits)
            })
            .collect();
        let d_q = grads.d_q_mut(kind);
        let mut offset = 0;
        let mut logit_chunks = Vec::with_capacity(partials.len());
        for (g_table, g_logits) in partials {
            for k in 0..64 {
                d_q[k] += g_table[k] / scale;
            }
            logit_chunks.push((offset, g_logits));
            offset += chunk;
        }
        if has_attention {
            let dst = grads.d_logits_mut(kind);
            for (start, blocks) in logit_chunks {
                for (j, g) in blocks.into_iter().enumerate() {
                    for k in 0..64 {
                        dst[start + j][k] += g[k];
                    }
                }
            }
        }
    }
    Ok(grads)
}
