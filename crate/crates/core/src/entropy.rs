//! Baseline sequential Huffman coding of quantized blocks with the default tables.

use thiserror::Error;

use crate::blocks::QuantizedBlocks;
use crate::huffman::{BitReader, BitWriter, HuffmanDecoder, HuffmanEncoder, HuffmanError, HuffmanSpec, ZIGZAG};

/// Largest DC difference magnitude representable in category 11.
pub const MAX_DC_DIFF: i32 = 2047;
/// Largest AC magnitude representable in category 10.
pub const MAX_AC: i32 = 1023;

const CHANNEL_NAMES: [&str; 3] = ["Y", "Cb", "Cr"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EntropyError {
    #[error("{channel} block {block}: DC difference {value} exceeds category 11")]
    DcOverflow {
        channel: &'static str,
        block: usize,
        value: i32,
    },
    #[error("{channel} block {block}: AC coefficient {value} at zig-zag {position} exceeds category 10")]
    AcOverflow {
        channel: &'static str,
        block: usize,
        position: usize,
        value: i32,
    },
    #[error("{channel} block {block}: AC run overruns the block")]
    RunOverflow { channel: &'static str, block: usize },
    #[error(transparent)]
    Huffman(#[from] HuffmanError),
}

/// Entropy-coded scan data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntropyPayload {
    /// Byte-aligned, stuffed scan bytes.
    pub bytes: Vec<u8>,
    /// Number of code bits before padding and stuffing.
    pub bit_len: u64,
}

/// Magnitude category: number of bits needed for `|v|`.
#[inline]
pub fn category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

/// Additional bits for `v` in category `size` (one's-complement for negatives).
#[inline]
fn extra_bits(v: i32, size: u8) -> u32 {
    if v >= 0 {
        v as u32
    } else {
        (v - 1) as u32 & ((1u32 << size) - 1)
    }
}

#[inline]
fn extend(bits: u32, size: u8) -> i32 {
    if size == 0 {
        return 0;
    }
    if bits < (1 << (size - 1)) {
        bits as i32 - (1 << size) + 1
    } else {
        bits as i32
    }
}

/// Encoder and decoder tables for one component class.
struct ComponentCoders<C> {
    dc: C,
    ac: C,
}

fn default_encoders() -> [ComponentCoders<HuffmanEncoder>; 2] {
    let mk = |s: HuffmanSpec| HuffmanEncoder::new(&s).expect("default table is well formed");
    [
        ComponentCoders {
            dc: mk(HuffmanSpec::dc_luma()),
            ac: mk(HuffmanSpec::ac_luma()),
        },
        ComponentCoders {
            dc: mk(HuffmanSpec::dc_chroma()),
            ac: mk(HuffmanSpec::ac_chroma()),
        },
    ]
}

fn encode_block(
    w: &mut BitWriter,
    coders: &ComponentCoders<HuffmanEncoder>,
    block: &[i32; 64],
    pred: &mut i32,
    channel: usize,
    index: usize,
) -> Result<(), EntropyError> {
    let diff = block[0] - *pred;
    if diff.abs() > MAX_DC_DIFF {
        return Err(EntropyError::DcOverflow {
            channel: CHANNEL_NAMES[channel],
            block: index,
            value: diff,
        });
    }
    *pred = block[0];
    let size = category(diff);
    coders.dc.emit(w, size)?;
    w.put(extra_bits(diff, size), size);

    let mut run = 0u8;
    for (k, &zz) in ZIGZAG.iter().enumerate().skip(1) {
        let v = block[zz];
        if v == 0 {
            run += 1;
            continue;
        }
        if v.abs() > MAX_AC {
            return Err(EntropyError::AcOverflow {
                channel: CHANNEL_NAMES[channel],
                block: index,
                position: k,
                value: v,
            });
        }
        while run >= 16 {
            coders.ac.emit(w, 0xF0)?;
            run -= 16;
        }
        let size = category(v);
        coders.ac.emit(w, (run << 4) | size)?;
        w.put(extra_bits(v, size), size);
        run = 0;
    }
    if run > 0 {
        coders.ac.emit(w, 0x00)?;
    }
    Ok(())
}

/// Interleaved (one block per component per MCU) baseline scan.
pub fn encode_entropy(z: &QuantizedBlocks) -> Result<EntropyPayload, EntropyError> {
    let coders = default_encoders();
    let mut w = BitWriter::new();
    let mut preds = [0i32; 3];
    for i in 0..z.block_count() {
        for (c, pred) in preds.iter_mut().enumerate() {
            let class = usize::from(c != 0);
            encode_block(&mut w, &coders[class], &z.channels[c][i], pred, c, i)?;
        }
    }
    let (bytes, bit_len) = w.finish();
    Ok(EntropyPayload { bytes, bit_len })
}

/// Huffman tables selected by each of the three scan components.
pub struct ScanTables {
    pub dc: [HuffmanSpec; 3],
    pub ac: [HuffmanSpec; 3],
}

impl ScanTables {
    pub fn defaults() -> Self {
        Self {
            dc: [HuffmanSpec::dc_luma(), HuffmanSpec::dc_chroma(), HuffmanSpec::dc_chroma()],
            ac: [HuffmanSpec::ac_luma(), HuffmanSpec::ac_chroma(), HuffmanSpec::ac_chroma()],
        }
    }
}

/// Decodes an interleaved scan. Returns the blocks and the number of bytes consumed.
pub fn decode_entropy(
    data: &[u8],
    base_offset: usize,
    blocks_y: usize,
    blocks_x: usize,
    tables: &ScanTables,
) -> Result<(QuantizedBlocks, usize), EntropyError> {
    let coders: Vec<ComponentCoders<HuffmanDecoder>> = (0..3)
        .map(|c| {
            Ok(ComponentCoders {
                dc: HuffmanDecoder::new(&tables.dc[c])?,
                ac: HuffmanDecoder::new(&tables.ac[c])?,
            })
        })
        .collect::<Result<_, HuffmanError>>()?;
    let mut out = QuantizedBlocks::zeros(blocks_y, blocks_x);
    let mut r = BitReader::new(data, base_offset);
    let mut preds = [0i32; 3];
    for i in 0..blocks_y * blocks_x {
        for c in 0..3 {
            let block = &mut out.channels[c][i];
            let size = coders[c].dc.decode(&mut r)?;
            let diff = extend(r.bits(size)?, size);
            preds[c] += diff;
            block[0] = preds[c];
            let mut k = 1usize;
            while k < 64 {
                let rs = coders[c].ac.decode(&mut r)?;
                let (run, size) = ((rs >> 4) as usize, rs & 0x0F);
                if size == 0 {
                    if run == 15 {
                        k += 16;
                        continue;
                    }
                    break;
                }
                k += run;
                if k > 63 {
                    return Err(EntropyError::RunOverflow {
                        channel: CHANNEL_NAMES[c],
                        block: i,
                    });
                }
                block[ZIGZAG[k]] = extend(r.bits(size)?, size);
                k += 1;
            }
        }
    }
    Ok((out, r.consumed()))
}
