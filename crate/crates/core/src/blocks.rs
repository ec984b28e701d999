//! Per-channel block tensors on the image block grid.

use crate::dct::{fdct_8x8, Block};
use crate::image::ImagePlanes;
use crate::quant::quantize_block;
use crate::scalar::Scalar;
use crate::tables::IntegerTables;

/// DCT coefficients for Y, Cb, Cr; blocks in raster order.
#[derive(Clone, Debug, PartialEq)]
pub struct DctTensor<T> {
    pub blocks_y: usize,
    pub blocks_x: usize,
    pub channels: [Vec<Block<T>>; 3],
}

impl<T: Scalar> DctTensor<T> {
    /// Forward DCT of every block of a YCbCr raster.
    pub fn from_ycbcr(ycc: &ImagePlanes<T>) -> Self {
        let (by, bx) = (ycc.blocks_y(), ycc.blocks_x());
        let channels = [0, 1, 2].map(|c| {
            (0..by * bx)
                .map(|i| fdct_8x8(&ycc.block(c, i % bx, i / bx)))
                .collect()
        });
        Self {
            blocks_y: by,
            blocks_x: bx,
            channels,
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks_y * self.blocks_x
    }

    /// Integer quantization with the luma table on Y and the chroma table on Cb/Cr.
    pub fn quantize(&self, tables: &IntegerTables) -> QuantizedBlocks {
        let channels = [0, 1, 2].map(|c| {
            let t = tables.for_channel(c);
            self.channels[c].iter().map(|b| quantize_block(b, t)).collect()
        });
        QuantizedBlocks {
            blocks_y: self.blocks_y,
            blocks_x: self.blocks_x,
            channels,
        }
    }
}

/// Quantized coefficients, same layout as [`DctTensor`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedBlocks {
    pub blocks_y: usize,
    pub blocks_x: usize,
    pub channels: [Vec<[i32; 64]>; 3],
}

impl QuantizedBlocks {
    pub fn zeros(blocks_y: usize, blocks_x: usize) -> Self {
        Self {
            blocks_y,
            blocks_x,
            channels: [0, 1, 2].map(|_| vec![[0; 64]; blocks_y * blocks_x]),
        }
    }

    pub fn block_count(&self) -> usize {
        self.blocks_y * self.blocks_x
    }

    pub fn is_all_zero(&self) -> bool {
        self.channels.iter().flatten().all(|b| b.iter().all(|&v| v == 0))
    }
}

/// Writes decoded sample blocks back into padded planes.
pub(crate) fn assemble_planes<T: Scalar>(
    width: usize,
    height: usize,
    blocks_x: usize,
    channels: &[Vec<Block<T>>; 3],
) -> ImagePlanes<T> {
    let stride = blocks_x * 8;
    let rows = channels[0].len() / blocks_x * 8;
    let planes = [0, 1, 2].map(|c| {
        let mut plane = vec![T::zero(); stride * rows];
        for (i, block) in channels[c].iter().enumerate() {
            let (bx, by) = (i % blocks_x, i / blocks_x);
            for r in 0..8 {
                let row = (by * 8 + r) * stride + bx * 8;
                plane[row..row + 8].copy_from_slice(&block[r * 8..r * 8 + 8]);
            }
        }
        plane
    });
    ImagePlanes::from_padded_planes(width, height, planes)
}
