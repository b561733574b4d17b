//! `QMTN` binary tensor records.
//!
//! Layout (little-endian): magic `QMTN`, version `u8 = 1`, dtype `u8 = 0`
//! (float32), rank `u8`, pad `u8`, `rank` x `u32` dims, row-major `f32` payload.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"QMTN";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, DTYPE_F32, t.dims().len() as u8, 0])?;
    for &d in t.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::TensorFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads one record; `Ok(None)` at a clean end of stream.
fn read_record<R: Read>(r: &mut R, path: &Path) -> Result<Option<Tensor>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut magic[got..])?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if got == 0 {
        return Ok(None);
    }
    if got < 4 || &magic != MAGIC {
        return Err(format_err(path, "bad magic"));
    }
    let mut header = [0u8; 4];
    r.read_exact(&mut header)
        .map_err(|_| format_err(path, "truncated header"))?;
    let [version, dtype, rank, _pad] = header;
    if version != VERSION {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    if dtype != DTYPE_F32 {
        return Err(format_err(path, format!("unsupported dtype {dtype}")));
    }
    let mut dims = Vec::with_capacity(rank as usize);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| format_err(path, "truncated dims"))?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let n: usize = dims.iter().product();
    let mut payload = vec![0u8; n * 4];
    r.read_exact(&mut payload)
        .map_err(|_| format_err(path, "truncated payload"))?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(dims, data)
        .map(Some)
        .map_err(|e| format_err(path, e.to_string()))
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let path = Path::new("<stream>");
    read_record(r, path)?.ok_or_else(|| format_err(path, "empty stream"))
}

pub fn save_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + t.len() * 4);
    write_tensor(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    let mut cursor = bytes.as_slice();
    let t = read_record(&mut cursor, path)?.ok_or_else(|| format_err(path, "empty file"))?;
    if !cursor.is_empty() {
        return Err(format_err(path, "trailing bytes after record"));
    }
    Ok(t)
}

/// Writes a sequence of records back to back.
pub fn save_pack(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let mut buf = Vec::new();
    for t in tensors {
        write_tensor(&mut buf, t)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_pack(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path)?;
    let mut cursor = bytes.as_slice();
    let mut out = Vec::new();
    while let Some(t) = read_record(&mut cursor, path)? {
        out.push(t);
    }
    Ok(out)
}

/// `.qmtn` files of a directory in lexicographic order.
pub fn list_tensor_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "qmtn"))
        .collect();
    files.sort();
    Ok(files)
}
