//! Canonical Huffman tables (Annex K.3 defaults) and bit-level I/O with 0xFF stuffing.

use thiserror::Error;

/// Natural (row-major) index of each zig-zag position.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, //
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21, 28, //
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, //
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_CHROMA_BITS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const DC_VALUES: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
const AC_LUMA_VALUES: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07,
    0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0,
    0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28,
    0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49,
    0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69,
    0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
    0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5,
    0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2,
    0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

const AC_CHROMA_BITS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77];
const AC_CHROMA_VALUES: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71,
    0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0,
    0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16, 0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26,
    0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48,
    0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68,
    0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
    0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5,
    0xa6, 0xa7, 0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3,
    0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda,
    0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8,
    0xf9, 0xfa,
];

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum HuffmanError {
    #[error("Huffman table lists {declared} codes but carries {actual} values")]
    CountMismatch { declared: usize, actual: usize },
    #[error("Huffman code lengths overflow the code space")]
    Oversubscribed,
    #[error("no Huffman code for symbol {0:#04x}")]
    MissingSymbol(u8),
    #[error("invalid Huffman code at byte {offset}")]
    InvalidCode { offset: usize },
    #[error("entropy-coded data truncated at byte {offset}")]
    Truncated { offset: usize },
}

/// Table class as carried in the DHT `Tc` nibble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableClass {
    Dc = 0,
    Ac = 1,
}

/// A Huffman table in DHT form: code counts per length 1..=16 and symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanSpec {
    pub bits: [u8; 16],
    pub values: Vec<u8>,
}

impl HuffmanSpec {
    pub fn dc_luma() -> Self {
        Self {
            bits: DC_LUMA_BITS,
            values: DC_VALUES.to_vec(),
        }
    }

    pub fn dc_chroma() -> Self {
        Self {
            bits: DC_CHROMA_BITS,
            values: DC_VALUES.to_vec(),
        }
    }

    pub fn ac_luma() -> Self {
        Self {
            bits: AC_LUMA_BITS,
            values: AC_LUMA_VALUES.to_vec(),
        }
    }

    pub fn ac_chroma() -> Self {
        Self {
            bits: AC_CHROMA_BITS,
            values: AC_CHROMA_VALUES.to_vec(),
        }
    }

    /// Canonical `(code, length)` pairs in value order (Annex C).
    fn canonical_codes(&self) -> Result<Vec<(u16, u8)>, HuffmanError> {
        let declared: usize = self.bits.iter().map(|&b| b as usize).sum();
        if declared != self.values.len() {
            return Err(HuffmanError::CountMismatch {
                declared,
                actual: self.values.len(),
            });
        }
        let mut out = Vec::with_capacity(declared);
        let mut code: u32 = 0;
        for (i, &count) in self.bits.iter().enumerate() {
            let len = i as u8 + 1;
            for _ in 0..count {
                if code >= (1 << len) {
                    return Err(HuffmanError::Oversubscribed);
                }
                out.push((code as u16, len));
                code += 1;
            }
            code <<= 1;
        }
        Ok(out)
    }
}

/// Symbol → code lookup.
#[derive(Clone, Debug)]
pub struct HuffmanEncoder {
    code: [u16; 256],
    size: [u8; 256],
}

impl HuffmanEncoder {
    pub fn new(spec: &HuffmanSpec) -> Result<Self, HuffmanError> {
        let mut code = [0u16; 256];
        let mut size = [0u8; 256];
        for (&sym, (c, l)) in spec.values.iter().zip(spec.canonical_codes()?) {
            code[sym as usize] = c;
            size[sym as usize] = l;
        }
        Ok(Self { code, size })
    }

    #[inline]
    pub fn emit(&self, writer: &mut BitWriter, symbol: u8) -> Result<(), HuffmanError> {
        let len = self.size[symbol as usize];
        if len == 0 {
            return Err(HuffmanError::MissingSymbol(symbol));
        }
        writer.put(self.code[symbol as usize] as u32, len);
        Ok(())
    }

    /// `(code, length)` of a symbol, if it has one.
    pub fn lookup(&self, symbol: u8) -> Option<(u16, u8)> {
        let len = self.size[symbol as usize];
        (len > 0).then(|| (self.code[symbol as usize], len))
    }
}

/// Code → symbol decoding via per-length code ranges (Annex F.2.2.3).
#[derive(Clone, Debug)]
pub struct HuffmanDecoder {
    mincode: [i32; 17],
    maxcode: [i32; 17],
    valptr: [usize; 17],
    values: Vec<u8>,
}

impl HuffmanDecoder {
    pub fn new(spec: &HuffmanSpec) -> Result<Self, HuffmanError> {
        let codes = spec.canonical_codes()?;
        let mut mincode = [0i32; 17];
        let mut maxcode = [-1i32; 17];
        let mut valptr = [0usize; 17];
        let mut k = 0usize;
        for len in 1..=16usize {
            let count = spec.bits[len - 1] as usize;
            if count > 0 {
                valptr[len] = k;
                mincode[len] = codes[k].0 as i32;
                k += count;
                maxcode[len] = codes[k - 1].0 as i32;
            }
        }
        Ok(Self {
            mincode,
            maxcode,
            valptr,
            values: spec.values.clone(),
        })
    }

    pub fn decode(&self, reader: &mut BitReader<'_>) -> Result<u8, HuffmanError> {
        let mut code: i32 = 0;
        for len in 1..=16usize {
            code = (code << 1) | reader.bit()? as i32;
            if code <= self.maxcode[len] {
                let idx = self.valptr[len] + (code - self.mincode[len]) as usize;
                return Ok(self.values[idx]);
            }
        }
        Err(HuffmanError::InvalidCode {
            offset: reader.offset(),
        })
    }
}

/// MSB-first bit packer with 0xFF → 0xFF 0x00 stuffing.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u32,
    nbits: u8,
    total_bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `len` bits of `value` (`len` ≤ 16).
    #[inline]
    pub fn put(&mut self, value: u32, len: u8) {
        debug_assert!(len <= 16);
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (value & ((1 << len) - 1));
        self.nbits += len;
        self.total_bits += len as u64;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.push_byte(byte);
            self.nbits -= 8;
        }
        self.acc &= (1 << self.nbits) - 1;
    }

    fn push_byte(&mut self, byte: u8) {
        self.bytes.push(byte);
        if byte == 0xFF {
            self.bytes.push(0x00);
        }
    }

    /// Bits written so far, before padding and stuffing.
    pub fn bit_len(&self) -> u64 {
        self.total_bits
    }

    /// Pads the final partial byte with 1-bits.
    pub fn finish(mut self) -> (Vec<u8>, u64) {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            let byte = ((self.acc << pad) | ((1 << pad) - 1)) as u8;
            self.push_byte(byte);
        }
        (self.bytes, self.total_bits)
    }
}

/// MSB-first reader over entropy-coded bytes, undoing 0xFF stuffing.
#[derive(Debug)]
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    base_offset: usize,
    acc: u32,
    nbits: u8,
}

impl<'a> BitReader<'a> {
    /// `base_offset` is the file position of `data[0]`, used in error reports.
    pub fn new(data: &'a [u8], base_offset: usize) -> Self {
        Self {
            data,
            pos: 0,
            base_offset,
            acc: 0,
            nbits: 0,
        }
    }

    pub fn offset(&self) -> usize {
        self.base_offset + self.pos
    }

    fn fill(&mut self) -> Result<(), HuffmanError> {
        let truncated = HuffmanError::Truncated {
            offset: self.offset(),
        };
        let byte = *self.data.get(self.pos).ok_or(truncated.clone())?;
        if byte == 0xFF {
            match self.data.get(self.pos + 1) {
                Some(0x00) => self.pos += 2,
                _ => return Err(truncated),
            }
        } else {
            self.pos += 1;
        }
        self.acc = (self.acc << 8) | byte as u32;
        self.nbits += 8;
        Ok(())
    }

    #[inline]
    pub fn bit(&mut self) -> Result<u32, HuffmanError> {
        if self.nbits == 0 {
            self.fill()?;
        }
        self.nbits -= 1;
        Ok((self.acc >> self.nbits) & 1)
    }

    pub fn bits(&mut self, len: u8) -> Result<u32, HuffmanError> {
        let mut v = 0;
        for _ in 0..len {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    /// Bytes consumed so far, stuffing included.
    pub fn consumed(&self) -> usize {
        self.pos
    }
}
