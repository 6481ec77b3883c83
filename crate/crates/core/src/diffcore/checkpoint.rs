//! Bit-exact checkpoint files for parameter vectors.
//!
//! Layout: 8-byte magic, little-endian u32 format version, little-endian
//! u32 header length, JSON segment table, then the raw values as
//! little-endian f64. The JSON header keeps the file debuggable; the raw
//! payload keeps round trips exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{ParamVector, Segment};
use super::DiffError;

pub const MAGIC: [u8; 8] = *b"TRACKBA\0";
pub const VERSION: u32 = 1;

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    len: usize,
    segments: Vec<Segment>,
}

pub fn checkpoint_write(params: &ParamVector, path: &Path) -> Result<(), DiffError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = Header { len: params.len(), segments: params.segments().to_vec() };
    let header_json = serde_json::to_vec(&header).map_err(|e| DiffError::Format(e.to_string()))?;
    w.write_all(&(header_json.len() as u32).to_le_bytes())?;
    w.write_all(&header_json)?;
    for v in params.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn checkpoint_read(path: &Path) -> Result<ParamVector, DiffError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if magic != MAGIC {
        return Err(DiffError::Format("bad magic header".into()));
    }
    let mut u32buf = [0u8; 4];
    read_exact(&mut r, &mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(DiffError::Version { found: version, expected: VERSION });
    }
    read_exact(&mut r, &mut u32buf)?;
    let header_len = u32::from_le_bytes(u32buf) as usize;
    let mut header_json = vec![0u8; header_len];
    read_exact(&mut r, &mut header_json)?;
    let header: Header =
        serde_json::from_slice(&header_json).map_err(|e| DiffError::Format(e.to_string()))?;
    let mut data = Vec::with_capacity(header.len);
    let mut f64buf = [0u8; 8];
    for _ in 0..header.len {
        read_exact(&mut r, &mut f64buf)?;
        data.push(f64::from_le_bytes(f64buf));
    }
    ParamVector::from_raw(data, header.segments)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), DiffError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            DiffError::Format("truncated checkpoint".into())
        } else {
            DiffError::Io(e)
        }
    })
}
