//! Bit-vector packing and hex helpers shared by the file formats.

use crate::error::{Error, Result};

/// Pack bits MSB-first; the last byte is zero-padded.
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (k, &b) in bits.iter().enumerate() {
        if b {
            out[k / 8] |= 0x80 >> (k % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], len: usize) -> Result<Vec<bool>> {
    if bytes.len() != len.div_ceil(8) {
        return Err(Error::format(format!("{} bytes cannot hold exactly {len} bits", bytes.len())));
    }
    Ok((0..len).map(|k| bytes[k / 8] & (0x80 >> (k % 8)) != 0).collect())
}

/// `len:hex` text form used by the record files.
pub fn bits_to_hex(bits: &[bool]) -> String {
    format!("{}:{}", bits.len(), hex::encode(pack_bits(bits)))
}

pub fn bits_from_hex(text: &str) -> Result<Vec<bool>> {
    let (len, digits) = text
        .split_once(':')
        .ok_or_else(|| Error::format(format!("expected len:hex, found '{text}'")))?;
    let len: usize = len.parse().map_err(|_| Error::format(format!("bad bit length '{len}'")))?;
    let bytes = hex::decode(digits).map_err(|e| Error::format(format!("bad hex '{digits}': {e}")))?;
    unpack_bits(&bytes, len)
}

pub fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

pub fn ones(bits: &[bool]) -> usize {
    bits.iter().filter(|b| **b).count()
}
