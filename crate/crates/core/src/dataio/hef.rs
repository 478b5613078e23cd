//! Binary matrix container: `HEF1`, rows and cols as little-endian `u64`,
//! then row-major little-endian `f64` values.
//!
//! Embedding files may carry a label trailer: `LBL1`, a `u64` count, then one
//! `u64` per row.

use std::io::{self, Read, Write};

use crate::numkit::Matrix;

pub const MAGIC: &[u8; 4] = b"HEF1";
pub const LABEL_MAGIC: &[u8; 4] = b"LBL1";

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_matrix<W: Write>(out: &mut W, m: &Matrix) -> io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(m.rows() as u64).to_le_bytes())?;
    out.write_all(&(m.cols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_matrix<R: Read>(input: &mut R) -> io::Result<Matrix> {
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| invalid("truncated header"))?;
    if &magic != MAGIC {
        return Err(invalid(format!("bad magic {magic:?}, expected HEF1")));
    }
    let rows = read_u64(input).map_err(|_| invalid("truncated header"))?;
    let cols = read_u64(input).map_err(|_| invalid("truncated header"))?;
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| invalid(format!("dimensions {rows}x{cols} overflow")))?;
    let mut bytes = Vec::new();
    input.take(count as u64).read_to_end(&mut bytes)?;
    if bytes.len() != count {
        return Err(invalid(format!("expected {count} data bytes, found {}", bytes.len())));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(Matrix::from_vec(rows as usize, cols as usize, data))
}

pub fn write_labels<W: Write>(out: &mut W, labels: &[usize]) -> io::Result<()> {
    out.write_all(LABEL_MAGIC)?;
    out.write_all(&(labels.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(labels.len() * 8);
    for &l in labels {
        buf.extend_from_slice(&(l as u64).to_le_bytes());
    }
    out.write_all(&buf)
}

/// Reads a label trailer if one follows; `None` at a clean end of input.
pub fn read_labels<R: Read>(input: &mut R) -> io::Result<Option<Vec<usize>>> {
    let mut magic = Vec::new();
    input.take(4).read_to_end(&mut magic)?;
    if magic.is_empty() {
        return Ok(None);
    }
    if magic != LABEL_MAGIC {
        return Err(invalid("trailing bytes are not a label block"));
    }
    let n = read_u64(input).map_err(|_| invalid("truncated label block"))?;
    let mut labels = Vec::new();
    for _ in 0..n {
        let l = read_u64(input).map_err(|_| invalid("truncated label block"))?;
        labels.push(usize::try_from(l).map_err(|_| invalid("label out of range"))?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(invalid("unexpected bytes after label block"));
    }
    Ok(Some(labels))
}
