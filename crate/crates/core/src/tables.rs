//! Quantization tables: the Annex K examples, IJG quality scaling, and the
//! learnable real-valued parameterization.

use thiserror::Error;

use crate::scalar::Scalar;

/// Annex K.1 luminance table, row-major natural order.
pub const ANNEX_K_LUMA: [u8; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K.2 chrominance table, row-major natural order.
pub const ANNEX_K_CHROMA: [u8; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

pub const TABLE_MIN: f64 = 1.0;
pub const TABLE_MAX: f64 = 255.0;

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("quality {0} outside [1, 100]")]
    Quality(i64),
    #[error("table entry {index} of {table} table is {value}, expected an integer in [1, 255]")]
    Entry {
        table: &'static str,
        index: usize,
        value: f64,
    },
    #[error("scale factor must be positive and finite, got {0}")]
    Scale(f64),
}

/// Component class: luma tables serve Y, chroma tables serve Cb and Cr.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TableKind {
    Luma,
    Chroma,
}

impl TableKind {
    pub fn for_channel(channel: usize) -> Self {
        if channel == 0 {
            TableKind::Luma
        } else {
            TableKind::Chroma
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TableKind::Luma => "luma",
            TableKind::Chroma => "chroma",
        }
    }
}

/// Integer tables as stored in DQT segments, row-major natural order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerTables {
    pub luma: [u8; 64],
    pub chroma: [u8; 64],
}

impl IntegerTables {
    pub fn annex_k() -> Self {
        Self {
            luma: ANNEX_K_LUMA,
            chroma: ANNEX_K_CHROMA,
        }
    }

    pub fn uniform(value: u8) -> Self {
        Self {
            luma: [value; 64],
            chroma: [value; 64],
        }
    }

    pub fn get(&self, kind: TableKind) -> &[u8; 64] {
        match kind {
            TableKind::Luma => &self.luma,
            TableKind::Chroma => &self.chroma,
        }
    }

    pub fn for_channel(&self, channel: usize) -> &[u8; 64] {
        self.get(TableKind::for_channel(channel))
    }

    /// Rejects zero entries (DQT storage cannot hold anything above 255).
    pub fn validate(&self) -> Result<(), TableError> {
        for kind in [TableKind::Luma, TableKind::Chroma] {
            if let Some(index) = self.get(kind).iter().position(|&q| q == 0) {
                return Err(TableError::Entry {
                    table: kind.name(),
                    index,
                    value: 0.0,
                });
            }
        }
        Ok(())
    }
}

fn scale_table(base: &[u8; 64], scale: i64) -> [u8; 64] {
    base.map(|entry| ((entry as i64 * scale + 50) / 100).clamp(1, 255) as u8)
}

/// IJG quality scaling of the Annex K tables.
pub fn quality_to_tables(quality: i64) -> Result<IntegerTables, TableError> {
    if !(1..=100).contains(&quality) {
        return Err(TableError::Quality(quality));
    }
    let scale = if quality < 50 { 5000 / quality } else { 200 - 2 * quality };
    Ok(IntegerTables {
        luma: scale_table(&ANNEX_K_LUMA, scale),
        chroma: scale_table(&ANNEX_K_CHROMA, scale),
    })
}

/// Learnable luma/chroma tables.
///
/// Entries are held in effective units (the divisor actually applied to DCT
/// coefficients). The optimizer works on the scaled parameters
/// `effective · scale_s`, so a learning rate tuned for small weights moves the
/// tables at a useful speed.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantTablePair<T> {
    pub luma: [T; 64],
    pub chroma: [T; 64],
    pub scale_s: T,
}

impl<T: Scalar> QuantTablePair<T> {
    pub fn uniform(value: T, scale_s: T) -> Self {
        Self {
            luma: [value; 64],
            chroma: [value; 64],
            scale_s,
        }
    }

    pub fn from_integer(tables: &IntegerTables, scale_s: T) -> Self {
        Self {
            luma: tables.luma.map(|q| T::lit(q as f64)),
            chroma: tables.chroma.map(|q| T::lit(q as f64)),
            scale_s,
        }
    }

    pub fn get(&self, kind: TableKind) -> &[T; 64] {
        match kind {
            TableKind::Luma => &self.luma,
            TableKind::Chroma => &self.chroma,
        }
    }

    pub fn get_mut(&mut self, kind: TableKind) -> &mut [T; 64] {
        match kind {
            TableKind::Luma => &mut self.luma,
            TableKind::Chroma => &mut self.chroma,
        }
    }

    pub fn for_channel(&self, channel: usize) -> &[T; 64] {
        self.get(TableKind::for_channel(channel))
    }

    /// Scaled optimizer parameter for one entry.
    pub fn param(&self, kind: TableKind, index: usize) -> T {
        self.get(kind)[index] * self.scale_s
    }

    pub fn set_param(&mut self, kind: TableKind, index: usize, param: T) {
        let s = self.scale_s;
        self.get_mut(kind)[index] = param / s;
    }

    /// Clamps every effective entry into [1, 255].
    pub fn project(&mut self) {
        let (lo, hi) = (T::lit(TABLE_MIN), T::lit(TABLE_MAX));
        for kind in [TableKind::Luma, TableKind::Chroma] {
            for q in self.get_mut(kind).iter_mut() {
                *q = q.max(lo).min(hi);
            }
        }
    }

    pub fn in_range(&self) -> bool {
        let (lo, hi) = (T::lit(TABLE_MIN), T::lit(TABLE_MAX));
        self.luma.iter().chain(&self.chroma).all(|&q| q >= lo && q <= hi)
    }

    /// Rounds to the nearest integer in [1, 255] for DQT emission.
    pub fn to_integer(&self) -> IntegerTables {
        let conv = |t: &[T; 64]| {
            t.map(|q| {
                let q = q.as_f64();
                if q.is_nan() {
                    TABLE_MAX as u8
                } else {
                    q.round().clamp(TABLE_MIN, TABLE_MAX) as u8
                }
            })
        };
        IntegerTables {
            luma: conv(&self.luma),
            chroma: conv(&self.chroma),
        }
    }

    pub fn validate(&self) -> Result<(), TableError> {
        let s = self.scale_s.as_f64();
        if !(s > 0.0 && s.is_finite()) {
            return Err(TableError::Scale(s));
        }
        for kind in [TableKind::Luma, TableKind::Chroma] {
            for (index, q) in self.get(kind).iter().enumerate() {
                let value = q.as_f64();
                if !(TABLE_MIN..=TABLE_MAX).contains(&value) {
                    return Err(TableError::Entry {
                        table: kind.name(),
                        index,
                        value,
                    });
                }
            }
        }
        Ok(())
    }
}
