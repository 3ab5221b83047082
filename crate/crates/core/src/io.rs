//! File formats.
//!
//! Grid files: 16-byte header (`GLPF`, then version, nx, ny as little-endian
//! u32) followed by nx * ny little-endian f64 values in row-major order
//! (x varies fastest). Complex fields are stored as two grid files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ComplexField, ScalarField};

pub const MAGIC: &[u8; 4] = b"GLPF";
pub const VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Raw grid payload read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGrid {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

pub fn write_grid_values(path: &Path, nx: usize, ny: usize, values: &[f64]) -> Result<()> {
    if values.len() != nx * ny {
        return Err(Error::Format(format!(
            "grid payload has {} values, expected {}",
            values.len(),
            nx * ny
        )));
    }
    let mut w = create(path)?;
    let mut buf = Vec::with_capacity(16 + 8 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(nx as u32).to_le_bytes());
    buf.extend_from_slice(&(ny as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    write_grid_values(path, f.grid.nx, f.grid.ny, &f.values)
}

/// Writes `<stem>_re.bin` and `<stem>_im.bin` next to each other.
pub fn write_complex(dir: &Path, stem: &str, f: &ComplexField) -> Result<()> {
    write_scalar(&dir.join(format!("{stem}_re.bin")), &f.re())?;
    write_scalar(&dir.join(format!("{stem}_im.bin")), &f.im())
}

pub fn read_grid(path: &Path) -> Result<RawGrid> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{}: not a grid file", path.display())));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("{}: unsupported version {version}", path.display())));
    }
    let (nx, ny) = (word(8) as usize, word(12) as usize);
    if bytes.len() != 16 + 8 * nx * ny {
        return Err(Error::Format(format!(
            "{}: payload length {} does not match {}x{}",
            path.display(),
            bytes.len() - 16,
            nx,
            ny
        )));
    }
    let values = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawGrid { nx, ny, values })
}

/// `x,y,value` rows for the nodes of the discrete domain.
pub fn write_scalar_csv(path: &Path, f: &ScalarField) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "x,y,value").map_err(io)?;
    for (k, v) in f.values.iter().enumerate() {
        if f.grid.is_active(k) {
            let p = f.grid.point(k);
            writeln!(w, "{},{},{}", p.x, p.y, v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// One row of a solver convergence history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub residual: f64,
    pub energy: f64,
}

pub fn write_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "iteration,residual,energy").map_err(io)?;
    for r in rows {
        writeln!(w, "{},{:e},{:.15e}", r.iteration, r.residual, r.energy).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Generic CSV table writer.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// CSV writer for pre-formatted cells.
pub fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in rows {
        writeln!(w, "{}", r.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{DomainSpec, Grid};
    use std::sync::Arc;

    #[test]
    fn grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Arc::new(Grid::new(DomainSpec::disc(1.0, 0.125)).unwrap());
        let f = ScalarField::from_fn(g.clone(), |p| p.x * 3.0 - p.y);
        let path = dir.path().join("f.bin");
        write_scalar(&path, &f).unwrap();
        let raw = read_grid(&path).unwrap();
        assert_eq!((raw.nx, raw.ny), (g.nx, g.ny));
        assert_eq!(raw.values, f.values);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"GLPF");
        assert_eq!(bytes.len(), 16 + 8 * g.len());
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        write_grid_values(&path, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(read_grid(&path), Err(Error::Format(_))));
    }
}
