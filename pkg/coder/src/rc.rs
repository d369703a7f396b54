//! 32-bit range coder with byte renormalization; integer-only inside
//! encode/decode. Out-of-window symbols code the escape bucket followed by
//! an order-0 exponential-Golomb value carried as binary decisions.
//!
//! Stream layout: u32 LE symbol count | payload (absent when empty)
//! | u32 LE CRC-32 of the 4 count bytes.

use crate::cdf::{CdfTable, CDF_TOTAL};

const MASK: u64 = 0xFFFF_FFFF;
const TOP: u64 = 1 << 24;
const BOTTOM: u64 = 1 << 16;
const HALF: u32 = CDF_TOTAL / 2;

#[derive(Debug, PartialEq, Eq)]
pub struct DecodeError {
    pub offset: usize,
    pub message: &'static str,
}

fn crc32_ieee(data: &[u8]) -> u32 {
    let mut crc: u32 = 0xFFFF_FFFF;
    for &byte in data {
        crc ^= byte as u32;
        for _ in 0..8 {
            let low = crc & 1;
            crc >>= 1;
            if low != 0 {
                crc ^= 0xEDB8_8320;
            }
        }
    }
    !crc
}

fn count_checksum(count: u32) -> u32 {
    crc32_ieee(&count.to_le_bytes())
}

fn escape_value(k: i64, k_min: i32, k_max: i32) -> u64 {
    if k > k_max as i64 {
        (2 * (k - k_max as i64 - 1)) as u64
    } else {
        (2 * (k_min as i64 - 1 - k) + 1) as u64
    }
}

fn unescape_value(u: u64, k_min: i32, k_max: i32) -> i64 {
    if u % 2 == 0 {
        k_max as i64 + 1 + (u / 2) as i64
    } else {
        k_min as i64 - 1 - ((u - 1) / 2) as i64
    }
}

struct EncoderCore {
    low: u64,
    range: u64,
    out: Vec<u8>,
}

impl EncoderCore {
    fn new() -> Self {
        EncoderCore { low: 0, range: MASK, out: Vec::new() }
    }

    fn renorm(&mut self) {
        loop {
            if (self.low ^ ((self.low + self.range) & MASK)) < TOP {
                // fall through to emit
            } else if self.range < BOTTOM {
                self.range = self.low.wrapping_neg() & (BOTTOM - 1);
            } else {
                break;
            }
            self.out.push(((self.low >> 24) & 0xFF) as u8);
            self.low = (self.low << 8) & MASK;
            self.range = (self.range << 8) & MASK;
        }
    }

    fn encode(&mut self, c_lo: u32, c_hi: u32) {
        let r = self.range >> 16;
        self.low = (self.low + c_lo as u64 * r) & MASK;
        self.range = (c_hi - c_lo) as u64 * r;
        self.renorm();
    }

    fn encode_bit(&mut self, bit: u8) {
        if bit != 0 {
            self.encode(HALF, CDF_TOTAL);
        } else {
            self.encode(0, HALF);
        }
    }

    fn encode_exp_golomb(&mut self, u: u64) {
        let v = u + 1;
        let n = 64 - v.leading_zeros();
        for _ in 0..n - 1 {
            self.encode_bit(0);
        }
        for i in (0..n).rev() {
            self.encode_bit(((v >> i) & 1) as u8);
        }
    }

    fn finish(mut self) -> Vec<u8> {
        for _ in 0..4 {
            self.out.push(((self.low >> 24) & 0xFF) as u8);
            self.low = (self.low << 8) & MASK;
        }
        self.out
    }
}

struct DecoderCore<'a> {
    data: &'a [u8],
    pos: usize,
    low: u64,
    range: u64,
    code: u64,
}

impl<'a> DecoderCore<'a> {
    fn new(data: &'a [u8], start: usize) -> Result<Self, DecodeError> {
        let mut core = DecoderCore { data, pos: start, low: 0, range: MASK, code: 0 };
        for _ in 0..4 {
            core.code = (core.code << 8) | core.next_byte()? as u64;
        }
        Ok(core)
    }

    fn next_byte(&mut self) -> Result<u8, DecodeError> {
        if self.pos >= self.data.len() {
            return Err(DecodeError { offset: self.pos, message: "stream truncated" });
        }
        let b = self.data[self.pos];
        self.pos += 1;
        Ok(b)
    }

    fn renorm(&mut self) -> Result<(), DecodeError> {
        loop {
            if (self.low ^ ((self.low + self.range) & MASK)) < TOP {
                // fall through to read
            } else if self.range < BOTTOM {
                self.range = self.low.wrapping_neg() & (BOTTOM - 1);
            } else {
                break;
            }
            self.code = ((self.code << 8) & MASK) | self.next_byte()? as u64;
            self.low = (self.low << 8) & MASK;
            self.range = (self.range << 8) & MASK;
        }
        Ok(())
    }

    fn decode(&mut self, entries: &[u32]) -> Result<usize, DecodeError> {
        let r = self.range >> 16;
        let mut cum = (self.code.wrapping_sub(self.low) & MASK) / r;
        if cum >= CDF_TOTAL as u64 {
            cum = CDF_TOTAL as u64 - 1;
        }
        // upper_bound(entries, cum) - 1
        let mut lo = 0usize;
        let mut hi = entries.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            if entries[mid] as u64 <= cum {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let j = lo - 1;
        let c_lo = entries[j];
        let c_hi = entries[j + 1];
        self.low = (self.low + c_lo as u64 * r) & MASK;
        self.range = (c_hi - c_lo) as u64 * r;
        self.renorm()?;
        Ok(j)
    }

    fn decode_bit(&mut self) -> Result<u8, DecodeError> {
        let r = self.range >> 16;
        let cum = (self.code.wrapping_sub(self.low) & MASK) / r;
        let bit = if cum >= HALF as u64 { 1 } else { 0 };
        if bit != 0 {
            self.low = (self.low + HALF as u64 * r) & MASK;
            self.range = (CDF_TOTAL - HALF) as u64 * r;
        } else {
            self.range = HALF as u64 * r;
        }
        self.renorm()?;
        Ok(bit)
    }

    fn decode_exp_golomb(&mut self) -> Result<u64, DecodeError> {
        let mut zeros = 0u32;
        while self.decode_bit()? == 0 {
            zeros += 1;
            if zeros > 64 {
                return Err(DecodeError { offset: self.pos, message: "runaway escape code" });
            }
        }
        let mut v: u64 = 1;
        for _ in 0..zeros {
            v = (v << 1) | self.decode_bit()? as u64;
        }
        Ok(v - 1)
    }
}

/// Encode `symbols[i]` with `tables[table_idx[i]]` into one checksummed stream.
pub fn encode_stream(symbols: &[i32], tables: &[CdfTable], table_idx: &[u32]) -> Vec<u8> {
    assert_eq!(symbols.len(), table_idx.len());
    let mut out = Vec::new();
    out.extend_from_slice(&(symbols.len() as u32).to_le_bytes());
    if !symbols.is_empty() {
        let mut core = EncoderCore::new();
        for (&sym, &ti) in symbols.iter().zip(table_idx.iter()) {
            let table = &tables[ti as usize];
            let k = sym as i64;
            if k >= table.k_min as i64 && k <= table.k_max as i64 {
                let j = (k - table.k_min as i64) as usize;
                core.encode(table.entries[j], table.entries[j + 1]);
            } else {
                let esc = table.escape_bucket();
                core.encode(table.entries[esc], table.entries[esc + 1]);
                core.encode_exp_golomb(escape_value(k, table.k_min, table.k_max));
            }
        }
        out.extend_from_slice(&core.finish());
    }
    out.extend_from_slice(&count_checksum(symbols.len() as u32).to_le_bytes());
    out
}

/// Decode exactly `table_idx.len()` symbols; verifies count, checksum, and
/// that the stream is consumed with zero residual bytes.
pub fn decode_stream(data: &[u8], tables: &[CdfTable], table_idx: &[u32])
                     -> Result<Vec<i32>, DecodeError> {
    if data.len() < 8 {
        return Err(DecodeError { offset: 0, message: "stream shorter than header+checksum" });
    }
    let count = u32::from_le_bytes([data[0], data[1], data[2], data[3]]) as usize;
    if count != table_idx.len() {
        return Err(DecodeError { offset: 0, message: "symbol count mismatch" });
    }
    let mut out = Vec::with_capacity(count);
    let end_pos = if count > 0 {
        let mut core = DecoderCore::new(data, 4)?;
        for &ti in table_idx {
            let table = &tables[ti as usize];
            let j = core.decode(&table.entries)?;
            if j == table.escape_bucket() {
                let u = core.decode_exp_golomb()?;
                out.push(unescape_value(u, table.k_min, table.k_max) as i32);
            } else {
                out.push(table.k_min + j as i32);
            }
        }
        core.pos
    } else {
        4
    };
    if end_pos + 4 > data.len() {
        return Err(DecodeError { offset: end_pos, message: "stream truncated before checksum" });
    }
    let stored = u32::from_le_bytes([data[end_pos], data[end_pos + 1],
                                     data[end_pos + 2], data[end_pos + 3]]);
    if stored != count_checksum(count as u32) {
        return Err(DecodeError { offset: end_pos, message: "checksum mismatch" });
    }
    if end_pos + 4 != data.len() {
        return Err(DecodeError { offset: end_pos + 4, message: "residual bytes after decode" });
    }
    Ok(out)
}
