//! Canonical binary layout of a [`CompressedSample`].
//!
//! ```text
//! u32 d, u32 r, u32 k                      little-endian
//! u32 n_qp
//! n_qp × (d f64 coordinates, f64 label)    little-endian, label ±1.0
//! side bitstream                           n_qp × (1 sign bit + ⌈log₂k⌉ index bits),
//!                                          MSB-first, zero-padded to a byte
//! u32 n_table
//! n_table × (d f64 coordinates, f64 label)
//! ```
//!
//! A sign bit of 1 means `+1`. The two counts are not part of the side
//! information; they only make the stream self-delimiting.

use super::{CompressedSample, Dims, SideEntry, SideInfo};
use crate::error::{Error, Result};
use crate::hac::LabeledSample;

const HEADER_BYTES: usize = 12;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Overflow(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_samples(out: &mut Vec<u8>, samples: &[LabeledSample]) -> Result<()> {
    put_u32(out, samples.len())?;
    for s in samples {
        for v in &s.x {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&f64::from(s.y).to_le_bytes());
    }
    Ok(())
}

/// Bitstream of `side`, and its length in bits before padding.
pub fn pack_side_info(side: &SideInfo) -> (Vec<u8>, usize) {
    let index_bits = side.bits_per_entry() - 1;
    let total = side.bit_cost();
    let mut bytes = vec![0u8; total.div_ceil(8)];
    let mut pos = 0;
    let mut push = |bit: bool| {
        if bit {
            bytes[pos / 8] |= 0x80 >> (pos % 8);
        }
        pos += 1;
    };
    for e in &side.entries {
        push(e.sign == 1);
        for b in (0..index_bits).rev() {
            push((e.hyperplane >> b) & 1 == 1);
        }
    }
    (bytes, total)
}

fn unpack_side_info(bytes: &[u8], count: usize, k: usize) -> Result<SideInfo> {
    let mut side = SideInfo {
        k,
        entries: Vec::with_capacity(count),
    };
    let index_bits = side.bits_per_entry() - 1;
    let bit = |pos: usize| bytes[pos / 8] & (0x80 >> (pos % 8)) != 0;
    let mut pos = 0;
    for _ in 0..count {
        let sign = if bit(pos) { 1 } else { -1 };
        pos += 1;
        let mut hyperplane = 0usize;
        for _ in 0..index_bits {
            hyperplane = (hyperplane << 1) | usize::from(bit(pos));
            pos += 1;
        }
        if hyperplane >= k {
            return Err(Error::Corrupt(format!("hyperplane index {hyperplane} ≥ k={k}")));
        }
        side.entries.push(SideEntry { sign, hyperplane });
    }
    while pos < bytes.len() * 8 {
        if bit(pos) {
            return Err(Error::Corrupt("nonzero padding in side bitstream".into()));
        }
        pos += 1;
    }
    Ok(side)
}

/// Byte offset of the side bitstream within [`to_bytes`] output.
pub fn side_offset(comp: &CompressedSample) -> usize {
    HEADER_BYTES + 4 + comp.qp_samples.len() * (comp.dims.d + 1) * 8
}

pub fn to_bytes(comp: &CompressedSample) -> Result<Vec<u8>> {
    comp.validate()?;
    let mut out = Vec::new();
    put_u32(&mut out, comp.dims.d)?;
    put_u32(&mut out, comp.dims.r)?;
    put_u32(&mut out, comp.dims.k)?;
    put_samples(&mut out, &comp.qp_samples)?;
    out.extend(pack_side_info(&comp.side_info).0);
    put_samples(&mut out, &comp.table_samples)?;
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn samples(&mut self, d: usize) -> Result<(usize, Vec<LabeledSample>)> {
        let n = self.u32()?;
        let row = (d + 1)
            .checked_mul(8)
            .and_then(|r| r.checked_mul(n))
            .ok_or_else(|| Error::Corrupt("sample block size overflows".into()))?;
        if row > self.bytes.len() - self.pos {
            return Err(Error::Corrupt(format!("truncated sample block of {n} rows")));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x = (0..d).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            let label = self.f64()?;
            let y = if label == 1.0 {
                1
            } else if label == -1.0 {
                -1
            } else {
                return Err(Error::Corrupt(format!("label {label} is not ±1")));
            };
            out.push(LabeledSample { x, y });
        }
        Ok((n, out))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<CompressedSample> {
    let mut rd = Reader { bytes, pos: 0 };
    let d = rd.u32()?;
    let r = rd.u32()?;
    let k = rd.u32()?;
    if d == 0 || k == 0 || r == 0 || r > d {
        return Err(Error::Corrupt(format!("bad dims d={d}, r={r}, k={k}")));
    }
    let (n_qp, qp_samples) = rd.samples(d)?;
    let probe = SideInfo { k, entries: Vec::new() };
    let side_bits = n_qp
        .checked_mul(probe.bits_per_entry())
        .ok_or_else(|| Error::Corrupt("side bitstream size overflows".into()))?;
    let side_bytes = rd.take(side_bits.div_ceil(8))?;
    let side_info = unpack_side_info(side_bytes, n_qp, k)?;
    let (_, table_samples) = rd.samples(d)?;
    if rd.pos != bytes.len() {
        return Err(Error::Corrupt(format!("{} trailing bytes", bytes.len() - rd.pos)));
    }
    let comp = CompressedSample {
        dims: Dims { d, r, k },
        qp_samples,
        side_info,
        table_samples,
    };
    comp.validate()?;
    Ok(comp)
}

pub fn to_json(comp: &CompressedSample) -> Result<String> {
    Ok(serde_json::to_string_pretty(comp)?)
}

pub fn from_json(text: &str) -> Result<CompressedSample> {
    let comp: CompressedSample = serde_json::from_str(text)?;
    comp.validate()?;
    Ok(comp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CompressedSample {
        CompressedSample {
            dims: Dims { d: 2, r: 2, k: 3 },
            qp_samples: vec![
                LabeledSample::new(vec![0.5, -1.0], 1),
                LabeledSample::new(vec![2.0, 0.25], -1),
            ],
            side_info: SideInfo {
                k: 3,
                entries: vec![
                    SideEntry { sign: 1, hyperplane: 2 },
                    SideEntry { sign: -1, hyperplane: 1 },
                ],
            },
            table_samples: vec![LabeledSample::new(vec![0.5, -1.0], 1)],
        }
    }

    #[test]
    fn bit_layout() {
        // Entries "1 10" and "0 01" → 110001 then two zero pad bits.
        let (bytes, bits) = pack_side_info(&sample().side_info);
        assert_eq!(bits, 6);
        assert_eq!(bytes, vec![0b1100_0100]);
        let k1 = SideInfo {
            k: 1,
            entries: vec![SideEntry { sign: -1, hyperplane: 0 }, SideEntry { sign: 1, hyperplane: 0 }],
        };
        assert_eq!(pack_side_info(&k1), (vec![0b0100_0000], 2));
    }

    #[test]
    fn byte_layout() {
        let comp = sample();
        let bytes = to_bytes(&comp).unwrap();
        assert_eq!(&bytes[0..12], &[2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &0.5f64.to_le_bytes());
        assert_eq!(&bytes[32..40], &1.0f64.to_le_bytes());
        assert_eq!(side_offset(&comp), 64);
        assert_eq!(bytes[64], 0b1100_0100);
        assert_eq!(bytes.len(), 12 + 4 + 48 + 1 + 4 + 24);
        assert_eq!(from_bytes(&bytes).unwrap(), comp);
        assert_eq!(from_json(&to_json(&comp).unwrap()).unwrap(), comp);
    }

    #[test]
    fn corrupt_streams() {
        let bytes = to_bytes(&sample()).unwrap();
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Corrupt(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(Error::Corrupt(_))));
        // Index 3 with k = 3.
        let mut bad = bytes.clone();
        bad[64] = 0b1110_0100;
        assert!(matches!(from_bytes(&bad), Err(Error::Corrupt(_))));
        // Nonzero padding.
        let mut pad = bytes.clone();
        pad[64] |= 1;
        assert!(matches!(from_bytes(&pad), Err(Error::Corrupt(_))));
        // Label 0.5.
        let mut label = bytes.clone();
        label[32..40].copy_from_slice(&0.5f64.to_le_bytes());
        assert!(matches!(from_bytes(&label), Err(Error::Corrupt(_))));
        // Huge row count.
        let mut count = bytes;
        count[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(from_bytes(&count), Err(Error::Corrupt(_))));
    }
}
