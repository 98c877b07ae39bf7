//! File formats: the DDPT tensor container, dataset labels, and the float
//! formatting used by every CSV emitter.
//!
//! DDPT layout (all integers little-endian):
//!   magic `DDPT` | version u8 (0x01) | rank u8 | rank x extent u32 | data f32
//! Values are IEEE-754 binary32 in row-major order. In-memory computation is
//! always binary64; precision is reduced only at the file boundary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DdpError, Result};
use crate::tensor::{DenseTensor, Shape};

pub const DDPT_MAGIC: [u8; 4] = *b"DDPT";
pub const DDPT_VERSION: u8 = 0x01;

pub fn write_ddpt(path: &Path, tensor: &DenseTensor) -> Result<()> {
    let dims = tensor.dims();
    if dims.len() > u8::MAX as usize {
        return Err(DdpError::InvalidInput(format!(
            "tensor order {} exceeds the container's u8 rank field",
            dims.len()
        )));
    }
    for &d in dims {
        if d > u32::MAX as usize {
            return Err(DdpError::InvalidInput(format!(
                "extent {d} exceeds the container's u32 extent field"
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DDPT_MAGIC)?;
    w.write_all(&[DDPT_VERSION, dims.len() as u8])?;
    for &d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in tensor.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ddpt(path: &Path) -> Result<DenseTensor> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 6];
    r.read_exact(&mut header).map_err(|e| truncated(path, e))?;
    if header[0..4] != DDPT_MAGIC {
        return Err(DdpError::InvalidInput(format!(
            "{}: bad magic bytes {:?}",
            path.display(),
            &header[0..4]
        )));
    }
    if header[4] != DDPT_VERSION {
        return Err(DdpError::InvalidInput(format!(
            "{}: unsupported container version {}",
            path.display(),
            header[4]
        )));
    }
    let rank = header[5] as usize;
    if rank == 0 {
        return Err(DdpError::InvalidInput(format!(
            "{}: rank must be >= 1",
            path.display()
        )));
    }
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf).map_err(|e| truncated(path, e))?;
        dims.push(u32::from_le_bytes(buf) as usize);
    }
    let shape = Shape::new(dims)
        .map_err(|e| DdpError::InvalidInput(format!("{}: {e}", path.display())))?;
    let count = shape.element_count();
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 4];
    for _ in 0..count {
        r.read_exact(&mut buf).map_err(|e| truncated(path, e))?;
        data.push(f32::from_le_bytes(buf) as f64);
    }
    // Trailing bytes mean the header lied about the payload.
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(DdpError::InvalidInput(format!(
            "{}: trailing bytes after {count} values",
            path.display()
        )));
    }
    DenseTensor::new(shape, data)
}

fn truncated(path: &Path, e: std::io::Error) -> DdpError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        DdpError::InvalidInput(format!("{}: truncated container", path.display()))
    } else {
        DdpError::Io(e)
    }
}

/// Read `labels.csv` (header `image_id,class_label`) from a dataset directory.
pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "image_id,class_label" => {}
        Some(h) => {
            return Err(DdpError::InvalidInput(format!(
                "{}: expected header 'image_id,class_label', got '{h}'",
                path.display()
            )))
        }
        None => {
            return Err(DdpError::InvalidInput(format!(
                "{}: empty labels file",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let id = parts.next().unwrap_or("").trim();
        let label = parts.next().unwrap_or("").trim();
        // Labels feed unquoted CSV emitters downstream.
        if id.is_empty() || label.is_empty() || label.contains(',') {
            return Err(DdpError::InvalidInput(format!(
                "{}: malformed row {} '{line}'",
                path.display(),
                lineno + 2
            )));
        }
        out.push((id.to_string(), label.to_string()));
    }
    if out.is_empty() {
        return Err(DdpError::InvalidInput(format!(
            "{}: no labeled images",
            path.display()
        )));
    }
    Ok(out)
}

/// 17-significant-digit float rendering used by all analysis CSVs.
pub fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}
