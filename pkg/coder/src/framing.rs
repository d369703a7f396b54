//! Flat little-endian request/response framing shared with the host codec.
//!
//! request  := u8 op | body
//!   op=1 encode: u32 n_sym | u32 n_tab | tables | u32 idx[n] | i32 sym[n]
//!   op=2 decode: u32 n_sym | u32 n_tab | tables | u32 idx[n]
//!                | u32 stream_len | stream
//! table    := i16 k_min | i16 k_max | u16 n_entries | u16 entries[n]
//!             (the final cumulative 65536 is stored as 0)
//! response := u8 status
//!   status=0 encode: u32 n_bytes | bytes
//!   status=0 decode: u32 n_sym | i32 sym[n]
//!   status=1 error:  u32 offset | u32 msg_len | msg

use crate::cdf::{CdfTable, CDF_TOTAL};
use crate::rc::{decode_stream, encode_stream};

pub const OP_ENCODE: u8 = 1;
pub const OP_DECODE: u8 = 2;
pub const STATUS_OK: u8 = 0;
pub const STATUS_ERROR: u8 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.pos + n > self.buf.len() {
            return Err("truncated request".into());
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, String> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn i16(&mut self) -> Result<i16, String> {
        let b = self.take(2)?;
        Ok(i16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, String> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn parse_tables(r: &mut Reader, n_tab: usize) -> Result<Vec<CdfTable>, String> {
    let mut tables = Vec::with_capacity(n_tab);
    for _ in 0..n_tab {
        let k_min = r.i16()? as i32;
        let k_max = r.i16()? as i32;
        let n_entries = r.u16()? as usize;
        let raw = r.take(2 * n_entries)?;
        let mut entries = Vec::with_capacity(n_entries);
        for i in 0..n_entries {
            let v = u16::from_le_bytes([raw[2 * i], raw[2 * i + 1]]) as u32;
            entries.push(v);
        }
        if let Some(last) = entries.last_mut() {
            if *last == 0 {
                *last = CDF_TOTAL;
            }
        }
        let table = CdfTable { k_min, k_max, entries };
        table.validate().map_err(|e| format!("bad table: {:?}", e))?;
        tables.push(table);
    }
    Ok(tables)
}

pub fn serialize_tables(tables: &[CdfTable]) -> Vec<u8> {
    let mut out = Vec::new();
    for t in tables {
        out.extend_from_slice(&(t.k_min as i16).to_le_bytes());
        out.extend_from_slice(&(t.k_max as i16).to_le_bytes());
        out.extend_from_slice(&(t.entries.len() as u16).to_le_bytes());
        for &e in &t.entries {
            let wire = if e == CDF_TOTAL { 0u16 } else { e as u16 };
            out.extend_from_slice(&wire.to_le_bytes());
        }
    }
    out
}

pub fn build_encode_request(symbols: &[i32], tables: &[CdfTable], idx: &[u32]) -> Vec<u8> {
    let mut out = vec![OP_ENCODE];
    out.extend_from_slice(&(symbols.len() as u32).to_le_bytes());
    out.extend_from_slice(&(tables.len() as u32).to_le_bytes());
    out.extend_from_slice(&serialize_tables(tables));
    for &i in idx {
        out.extend_from_slice(&i.to_le_bytes());
    }
    for &s in symbols {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

fn error_response(offset: u32, message: &str) -> Vec<u8> {
    let msg = message.as_bytes();
    let mut out = vec![STATUS_ERROR];
    out.extend_from_slice(&offset.to_le_bytes());
    out.extend_from_slice(&(msg.len() as u32).to_le_bytes());
    out.extend_from_slice(msg);
    out
}

/// Serve one framed request.
pub fn handle_request(req: &[u8]) -> Vec<u8> {
    match try_handle(req) {
        Ok(resp) => resp,
        Err((offset, msg)) => error_response(offset, &msg),
    }
}

fn try_handle(req: &[u8]) -> Result<Vec<u8>, (u32, String)> {
    let mut r = Reader::new(req);
    let op = r.u8().map_err(|e| (0, e))?;
    if op != OP_ENCODE && op != OP_DECODE {
        return Err((0, format!("unknown op {}", op)));
    }
    let n_sym = r.u32().map_err(|e| (0, e))? as usize;
    let n_tab = r.u32().map_err(|e| (0, e))? as usize;
    let tables = parse_tables(&mut r, n_tab).map_err(|e| (0, e))?;
    let idx_raw = r.take(4 * n_sym).map_err(|e| (0, e))?;
    let mut idx = Vec::with_capacity(n_sym);
    for i in 0..n_sym {
        let v = u32::from_le_bytes([idx_raw[4 * i], idx_raw[4 * i + 1],
                                    idx_raw[4 * i + 2], idx_raw[4 * i + 3]]);
        if v as usize >= n_tab {
            return Err((0, "table index out of range".into()));
        }
        idx.push(v);
    }
    if op == OP_ENCODE {
        let sym_raw = r.take(4 * n_sym).map_err(|e| (0, e))?;
        let mut symbols = Vec::with_capacity(n_sym);
        for i in 0..n_sym {
            symbols.push(i32::from_le_bytes([sym_raw[4 * i], sym_raw[4 * i + 1],
                                             sym_raw[4 * i + 2], sym_raw[4 * i + 3]]));
        }
        let data = encode_stream(&symbols, &tables, &idx);
        let mut out = vec![STATUS_OK];
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&data);
        Ok(out)
    } else {
        let stream_len = r.u32().map_err(|e| (0, e))? as usize;
        let stream = r.take(stream_len).map_err(|e| (0, e))?;
        match decode_stream(stream, &tables, &idx) {
            Ok(symbols) => {
                let mut out = vec![STATUS_OK];
                out.extend_from_slice(&(symbols.len() as u32).to_le_bytes());
                for s in symbols {
                    out.extend_from_slice(&s.to_le_bytes());
                }
                Ok(out)
            }
            Err(e) => Err((e.offset as u32, e.message.to_string())),
        }
    }
}
