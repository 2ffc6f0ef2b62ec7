//! CompactSize variable-length integers.
//!
//! Values below `0xFD` encode as one byte; larger values carry a one-byte
//! marker (`0xFD`, `0xFE`, `0xFF`) followed by a 2, 4 or 8 byte little-endian
//! integer.

use super::DecodeError;

/// Number of bytes `n` occupies once encoded.
pub fn varint_len(n: u64) -> usize {
    match n {
        0..=0xFC => 1,
        0xFD..=0xFFFF => 3,
        0x1_0000..=0xFFFF_FFFF => 5,
        _ => 9,
    }
}

/// Appends the CompactSize encoding of `n` to `out`.
pub fn write_varint(out: &mut Vec<u8>, n: u64) {
    match n {
        0..=0xFC => out.push(n as u8),
        0xFD..=0xFFFF => {
            out.push(0xFD);
            out.extend_from_slice(&(n as u16).to_le_bytes());
        }
        0x1_0000..=0xFFFF_FFFF => {
            out.push(0xFE);
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        _ => {
            out.push(0xFF);
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
}

pub fn encode_varint(n: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(varint_len(n));
    write_varint(&mut out, n);
    out
}

/// Decodes a CompactSize from the front of `bytes`, returning the value and
/// the number of bytes consumed. Non-canonical encodings are rejected.
pub fn decode_varint(bytes: &[u8]) -> Result<(u64, usize), DecodeError> {
    let first = *bytes.first().ok_or(DecodeError::UnexpectedEnd)?;
    let (value, used) = match first {
        0xFD => (read_le(bytes, 2)?, 3),
        0xFE => (read_le(bytes, 4)?, 5),
        0xFF => (read_le(bytes, 8)?, 9),
        b => (u64::from(b), 1),
    };
    if varint_len(value) != used {
        return Err(DecodeError::NonCanonicalVarint);
    }
    Ok((value, used))
}

fn read_le(bytes: &[u8], width: usize) -> Result<u64, DecodeError> {
    let body = bytes.get(1..1 + width).ok_or(DecodeError::UnexpectedEnd)?;
    let mut buf = [0u8; 8];
    buf[..width].copy_from_slice(body);
    Ok(u64::from_le_bytes(buf))
}
