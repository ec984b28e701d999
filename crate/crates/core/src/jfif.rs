//! Baseline JFIF container: writer and a parser for the subset this crate emits.

use thiserror::Error;

use crate::blocks::QuantizedBlocks;
use crate::entropy::{decode_entropy, EntropyError, EntropyPayload, ScanTables};
use crate::huffman::{HuffmanSpec, TableClass, ZIGZAG};
use crate::tables::IntegerTables;

pub const SOI: u8 = 0xD8;
pub const EOI: u8 = 0xD9;
pub const APP0: u8 = 0xE0;
pub const DQT: u8 = 0xDB;
pub const SOF0: u8 = 0xC0;
pub const DHT: u8 = 0xC4;
pub const SOS: u8 = 0xDA;
pub const DRI: u8 = 0xDD;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JfifError {
    #[error("image dimensions {width}x{height} not representable in SOF0")]
    Dimensions { width: usize, height: usize },
    #[error("{table} table entry {index} is zero")]
    TableEntry { table: &'static str, index: usize },
    #[error("block grid {got_y}x{got_x} does not match {width}x{height} image")]
    GridMismatch {
        got_y: usize,
        got_x: usize,
        width: usize,
        height: usize,
    },
    #[error("missing SOI marker at byte 0")]
    MissingSoi,
    #[error("truncated stream at byte {offset}")]
    Truncated { offset: usize },
    #[error("expected marker at byte {offset}, found {found:#04x}")]
    ExpectedMarker { offset: usize, found: u8 },
    #[error("unsupported feature at byte {offset}: {feature}")]
    Unsupported { offset: usize, feature: String },
    #[error("malformed {segment} segment at byte {offset}")]
    Malformed { segment: &'static str, offset: usize },
    #[error("stream lacks {0}")]
    Missing(&'static str),
    #[error("entropy-coded data: {0}")]
    Entropy(#[from] EntropyError),
}

/// A complete JFIF byte stream plus the tables recorded in its DQT segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JfifFile {
    pub bytes: Vec<u8>,
    pub recorded_tables: IntegerTables,
}

impl JfifFile {
    pub fn size_bytes(&self) -> usize {
        self.bytes.len()
    }
}

fn put_marker(out: &mut Vec<u8>, marker: u8) {
    out.extend_from_slice(&[0xFF, marker]);
}

fn put_segment(out: &mut Vec<u8>, marker: u8, body: &[u8]) {
    put_marker(out, marker);
    let len = (body.len() + 2) as u16;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(body);
}

fn dqt_body(id: u8, table: &[u8; 64]) -> Vec<u8> {
    let mut body = Vec::with_capacity(65);
    body.push(id); // Pq = 0 (8-bit), Tq = id
    body.extend(ZIGZAG.iter().map(|&k| table[k]));
    body
}

fn dht_body(class: TableClass, id: u8, spec: &HuffmanSpec) -> Vec<u8> {
    let mut body = Vec::with_capacity(17 + spec.values.len());
    body.push(((class as u8) << 4) | id);
    body.extend_from_slice(&spec.bits);
    body.extend_from_slice(&spec.values);
    body
}

/// Assembles SOI, APP0, two DQT, SOF0 (1×1 sampling), four default DHT, SOS,
/// the scan data and EOI.
pub fn write_jfif(
    payload: &EntropyPayload,
    tables: &IntegerTables,
    width: usize,
    height: usize,
) -> Result<JfifFile, JfifError> {
    if width == 0 || height == 0 || width > u16::MAX as usize || height > u16::MAX as usize {
        return Err(JfifError::Dimensions { width, height });
    }
    for (name, t) in [("luma", &tables.luma), ("chroma", &tables.chroma)] {
        if let Some(index) = t.iter().position(|&q| q == 0) {
            return Err(JfifError::TableEntry { table: name, index });
        }
    }
    let mut out = Vec::with_capacity(payload.bytes.len() + 640);
    put_marker(&mut out, SOI);
    put_segment(
        &mut out,
        APP0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );
    put_segment(&mut out, DQT, &dqt_body(0, &tables.luma));
    put_segment(&mut out, DQT, &dqt_body(1, &tables.chroma));

    let (w, h) = (width as u16, height as u16);
    let mut sof = vec![8];
    sof.extend_from_slice(&h.to_be_bytes());
    sof.extend_from_slice(&w.to_be_bytes());
    sof.push(3);
    for (id, tq) in [(1u8, 0u8), (2, 1), (3, 1)] {
        sof.extend_from_slice(&[id, 0x11, tq]);
    }
    put_segment(&mut out, SOF0, &sof);

    put_segment(&mut out, DHT, &dht_body(TableClass::Dc, 0, &HuffmanSpec::dc_luma()));
    put_segment(&mut out, DHT, &dht_body(TableClass::Ac, 0, &HuffmanSpec::ac_luma()));
    put_segment(&mut out, DHT, &dht_body(TableClass::Dc, 1, &HuffmanSpec::dc_chroma()));
    put_segment(&mut out, DHT, &dht_body(TableClass::Ac, 1, &HuffmanSpec::ac_chroma()));

    put_segment(
        &mut out,
        SOS,
        &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0],
    );
    out.extend_from_slice(&payload.bytes);
    put_marker(&mut out, EOI);
    Ok(JfifFile {
        bytes: out,
        recorded_tables: tables.clone(),
    })
}

/// Everything recovered from a baseline stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedJfif {
    pub blocks: QuantizedBlocks,
    pub tables: IntegerTables,
    pub width: usize,
    pub height: usize,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Result<u8, JfifError> {
        let b = *self.data.get(self.pos).ok_or(JfifError::Truncated { offset: self.pos })?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, JfifError> {
        Ok(((self.u8()? as u16) << 8) | self.u8()? as u16)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], JfifError> {
        let end = self.pos + n;
        if end > self.data.len() {
            return Err(JfifError::Truncated {
                offset: self.data.len(),
            });
        }
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

#[derive(Clone, Copy)]
struct Component {
    id: u8,
    tq: u8,
}

fn sof_feature(marker: u8) -> Option<&'static str> {
    match marker {
        0xC1 => Some("extended sequential DCT (SOF1)"),
        0xC2 => Some("progressive DCT (SOF2)"),
        0xC3 => Some("lossless (SOF3)"),
        0xC5..=0xC7 => Some("hierarchical coding"),
        0xC9..=0xCB | 0xCD..=0xCF => Some("arithmetic coding"),
        0xCC => Some("arithmetic conditioning (DAC)"),
        _ => None,
    }
}

/// Parses a baseline JFIF stream with 1×1 sampling and Huffman coding.
pub fn decode_jfif(bytes: &[u8]) -> Result<DecodedJfif, JfifError> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    if cur.u8().ok() != Some(0xFF) || cur.u8().ok() != Some(SOI) {
        return Err(JfifError::MissingSoi);
    }
    let mut qt: [Option<[u8; 64]>; 4] = [None; 4];
    let mut dc: [Option<HuffmanSpec>; 4] = Default::default();
    let mut ac: [Option<HuffmanSpec>; 4] = Default::default();
    let mut frame: Option<(usize, usize, Vec<Component>)> = None;
    let mut parsed: Option<(QuantizedBlocks, [u8; 3])> = None;

    loop {
        let offset = cur.pos;
        let lead = cur.u8()?;
        if lead != 0xFF {
            return Err(JfifError::ExpectedMarker { offset, found: lead });
        }
        let mut marker = cur.u8()?;
        while marker == 0xFF {
            marker = cur.u8()?;
        }
        match marker {
            EOI => break,
            SOI | 0x01 | 0xD0..=0xD7 => {
                return Err(JfifError::Unsupported {
                    offset,
                    feature: format!("standalone marker {marker:#04x}"),
                })
            }
            _ => {}
        }
        let seg_start = cur.pos;
        let len = cur.u16()? as usize;
        if len < 2 {
            return Err(JfifError::Malformed {
                segment: "marker",
                offset,
            });
        }
        let body = cur.take(len - 2)?;
        if let Some(feature) = sof_feature(marker) {
            return Err(JfifError::Unsupported {
                offset,
                feature: feature.to_string(),
            });
        }
        match marker {
            DQT => {
                let mut b = Cursor { data: body, pos: 0 };
                while b.pos < body.len() {
                    let pq_tq = b.u8().map_err(|_| JfifError::Malformed { segment: "DQT", offset })?;
                    if pq_tq >> 4 != 0 {
                        return Err(JfifError::Unsupported {
                            offset,
                            feature: "16-bit quantization tables".into(),
                        });
                    }
                    let raw = b.take(64).map_err(|_| JfifError::Malformed { segment: "DQT", offset })?;
                    let mut t = [0u8; 64];
                    for (i, &k) in ZIGZAG.iter().enumerate() {
                        t[k] = raw[i];
                    }
                    qt[(pq_tq & 0x03) as usize] = Some(t);
                }
            }
            DHT => {
                let mut b = Cursor { data: body, pos: 0 };
                while b.pos < body.len() {
                    let malformed = |_| JfifError::Malformed { segment: "DHT", offset };
                    let tc_th = b.u8().map_err(malformed)?;
                    let mut bits = [0u8; 16];
                    bits.copy_from_slice(b.take(16).map_err(malformed)?);
                    let n: usize = bits.iter().map(|&v| v as usize).sum();
                    let values = b.take(n).map_err(malformed)?.to_vec();
                    let spec = HuffmanSpec { bits, values };
                    let slot = (tc_th & 0x03) as usize;
                    match tc_th >> 4 {
                        0 => dc[slot] = Some(spec),
                        1 => ac[slot] = Some(spec),
                        _ => return Err(JfifError::Malformed { segment: "DHT", offset }),
                    }
                }
            }
            SOF0 => {
                let mut b = Cursor { data: body, pos: 0 };
                let malformed = |_| JfifError::Malformed { segment: "SOF0", offset };
                let precision = b.u8().map_err(malformed)?;
                if precision != 8 {
                    return Err(JfifError::Unsupported {
                        offset,
                        feature: format!("{precision}-bit samples"),
                    });
                }
                let height = b.u16().map_err(malformed)? as usize;
                let width = b.u16().map_err(malformed)? as usize;
                let nf = b.u8().map_err(malformed)?;
                if nf != 3 {
                    return Err(JfifError::Unsupported {
                        offset,
                        feature: format!("{nf} components"),
                    });
                }
                if width == 0 || height == 0 {
                    return Err(JfifError::Unsupported {
                        offset,
                        feature: "deferred image height (DNL)".into(),
                    });
                }
                let mut comps = Vec::with_capacity(3);
                for _ in 0..3 {
                    let id = b.u8().map_err(malformed)?;
                    let hv = b.u8().map_err(malformed)?;
                    let tq = b.u8().map_err(malformed)?;
                    if hv != 0x11 {
                        return Err(JfifError::Unsupported {
                            offset,
                            feature: format!("chroma subsampling (sampling factors {hv:#04x})"),
                        });
                    }
                    comps.push(Component { id, tq: tq & 0x03 });
                }
                frame = Some((width, height, comps));
            }
            DRI => {
                if body.len() >= 2 && (body[0] != 0 || body[1] != 0) {
                    return Err(JfifError::Unsupported {
                        offset,
                        feature: "restart intervals".into(),
                    });
                }
            }
            SOS => {
                let (width, height, comps) = frame.as_ref().ok_or(JfifError::Missing("SOF0 before SOS"))?;
                let mut b = Cursor { data: body, pos: 0 };
                let malformed = |_| JfifError::Malformed { segment: "SOS", offset };
                let ns = b.u8().map_err(malformed)?;
                if ns != 3 {
                    return Err(JfifError::Unsupported {
                        offset,
                        feature: "non-interleaved scans".into(),
                    });
                }
                let mut dc_specs = Vec::with_capacity(3);
                let mut ac_specs = Vec::with_capacity(3);
                let mut tqs = [0u8; 3];
                for (i, comp) in comps.iter().enumerate() {
                    let id = b.u8().map_err(malformed)?;
                    let td_ta = b.u8().map_err(malformed)?;
                    if id != comp.id {
                        return Err(JfifError::Unsupported {
                            offset,
                            feature: "scan component order differs from frame".into(),
                        });
                    }
                    tqs[i] = comp.tq;
                    let d = dc[(td_ta >> 4) as usize & 0x03]
                        .clone()
                        .ok_or(JfifError::Missing("DC Huffman table"))?;
                    let a = ac[(td_ta & 0x0F) as usize & 0x03]
                        .clone()
                        .ok_or(JfifError::Missing("AC Huffman table"))?;
                    dc_specs.push(d);
                    ac_specs.push(a);
                }
                let ss = b.u8().map_err(malformed)?;
                let se = b.u8().map_err(malformed)?;
                let ahal = b.u8().map_err(malformed)?;
                if ss != 0 || se != 63 || ahal != 0 {
                    return Err(JfifError::Unsupported {
                        offset,
                        feature: "spectral selection or successive approximation".into(),
                    });
                }
                let to3 = |v: Vec<HuffmanSpec>| -> [HuffmanSpec; 3] {
                    let mut it = v.into_iter();
                    [0, 1, 2].map(|_| it.next().expect("three specs"))
                };
                let scan_tables = ScanTables {
                    dc: to3(dc_specs),
                    ac: to3(ac_specs),
                };
                let blocks_x = width.div_ceil(8);
                let blocks_y = height.div_ceil(8);
                let (blocks, used) = decode_entropy(&bytes[cur.pos..], cur.pos, blocks_y, blocks_x, &scan_tables)?;
                cur.pos += used;
                parsed = Some((blocks, tqs));
            }
            APP0..=0xEF | 0xFE => {}
            _ => {
                return Err(JfifError::Unsupported {
                    offset: seg_start - 2,
                    feature: format!("marker {marker:#04x}"),
                })
            }
        }
    }

    let (width, height, _) = frame.ok_or(JfifError::Missing("SOF0 frame header"))?;
    let (blocks, tqs) = parsed.ok_or(JfifError::Missing("SOS scan"))?;
    let luma = qt[tqs[0] as usize].ok_or(JfifError::Missing("luma quantization table"))?;
    let chroma = qt[tqs[1] as usize].ok_or(JfifError::Missing("chroma quantization table"))?;
    if tqs[1] != tqs[2] {
        return Err(JfifError::Unsupported {
            offset: 0,
            feature: "distinct Cb and Cr quantization tables".into(),
        });
    }
    Ok(DecodedJfif {
        blocks,
        tables: IntegerTables { luma, chroma },
        width,
        height,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::encode_entropy;

    fn sample_blocks(by: usize, bx: usize) -> QuantizedBlocks {
        let mut z = QuantizedBlocks::zeros(by, bx);
        for (c, ch) in z.channels.iter_mut().enumerate() {
            for (i, b) in ch.iter_mut().enumerate() {
                b[0] = (i as i32 * 7 + c as i32 * 3) % 40 - 20;
                b[1] = (i as i32 % 3) - 1;
                b[9] = c as i32;
            }
        }
        z
    }

    fn segments(bytes: &[u8]) -> Vec<(u8, usize)> {
        // marker, declared length; stops at SOS
        let mut out = vec![];
        let mut p = 2;
        loop {
            let m = bytes[p + 1];
            let len = u16::from_be_bytes([bytes[p + 2], bytes[p + 3]]) as usize;
            out.push((m, len));
            if m == SOS {
                break;
            }
            p += 2 + len;
        }
        out
    }

    #[test]
    fn layout_and_round_trip() {
        let z = sample_blocks(2, 3);
        let tables = crate::tables::quality_to_tables(75).unwrap();
        let file = write_jfif(&encode_entropy(&z).unwrap(), &tables, 20, 13).unwrap();
        let b = &file.bytes;
        assert_eq!(&b[..2], &[0xFF, 0xD8]);
        assert_eq!(&b[b.len() - 2..], &[0xFF, 0xD9]);
        let segs = segments(b);
        let markers: Vec<u8> = segs.iter().map(|s| s.0).collect();
        assert_eq!(markers, vec![APP0, DQT, DQT, SOF0, DHT, DHT, DHT, DHT, SOS]);
        assert_eq!(segs[1].1, 67);
        assert_eq!(segs[2].1, 67);
        assert_eq!(segs[3].1, 17);
        assert_eq!(segs[4].1, 2 + 17 + 12);
        assert_eq!(segs[5].1, 2 + 17 + 162);

        let dec = decode_jfif(b).unwrap();
        assert_eq!(dec.blocks, z);
        assert_eq!(dec.tables, tables);
        assert_eq!((dec.width, dec.height), (20, 13));
    }

    #[test]
    fn rejects_progressive_and_subsampled() {
        let z = sample_blocks(1, 1);
        let file = write_jfif(&encode_entropy(&z).unwrap(), &IntegerTables::annex_k(), 8, 8).unwrap();
        let sof_at = file.bytes.windows(2).position(|w| w == [0xFF, SOF0]).unwrap();

        let mut prog = file.bytes.clone();
        prog[sof_at + 1] = 0xC2;
        match decode_jfif(&prog) {
            Err(JfifError::Unsupported { feature, .. }) => assert!(feature.contains("progressive")),
            other => panic!("{other:?}"),
        }

        let mut sub = file.bytes.clone();
        sub[sof_at + 2 + 2 + 6 + 1] = 0x22; // first component sampling
        match decode_jfif(&sub) {
            Err(JfifError::Unsupported { feature, .. }) => assert!(feature.contains("subsampling")),
            other => panic!("{other:?}"),
        }

        let mut arith = file.bytes.clone();
        arith[sof_at + 1] = 0xC9;
        assert!(matches!(decode_jfif(&arith), Err(JfifError::Unsupported { .. })));
    }

    #[test]
    fn truncation_has_offset() {
        let z = sample_blocks(4, 4);
        let file = write_jfif(&encode_entropy(&z).unwrap(), &IntegerTables::annex_k(), 32, 32).unwrap();
        for cut in [1usize, 30, 100, file.bytes.len() - 3] {
            match decode_jfif(&file.bytes[..cut]) {
                Err(JfifError::Truncated { offset })
                | Err(JfifError::Entropy(EntropyError::Huffman(crate::huffman::HuffmanError::Truncated { offset }))) => {
                    assert!(offset <= cut)
                }
                Err(JfifError::MissingSoi) => assert!(cut < 2),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_zero_table_entries_and_bad_dims() {
        let z = sample_blocks(1, 1);
        let p = encode_entropy(&z).unwrap();
        let mut t = IntegerTables::annex_k();
        t.chroma[5] = 0;
        assert_eq!(
            write_jfif(&p, &t, 8, 8).unwrap_err(),
            JfifError::TableEntry { table: "chroma", index: 5 }
        );
        assert!(write_jfif(&p, &IntegerTables::annex_k(), 0, 8).is_err());
        assert!(write_jfif(&p, &IntegerTables::annex_k(), 70_000, 8).is_err());
    }
}
