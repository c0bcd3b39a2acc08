//! Binary field snapshots.
//!
//! Little-endian layout:
//!
//! | offset | size | content                         |
//! |--------|------|---------------------------------|
//! | 0      | 8    | magic `FKDVSNAP`                |
//! | 8      | 4    | `u32` format version (1)        |
//! | 12     | 4    | `u32` dimension `d`             |
//! | 16     | 8    | `u64` points per axis `n`       |
//! | 24     | 8    | `f64` half-length `L`           |
//! | 32     | 8    | `f64` dispersion exponent `a`   |
//! | 40     | 8 n^d| `f64` samples, row-major        |

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{Field, Grid};

pub const MAGIC: &[u8; 8] = b"FKDVSNAP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub field: Field,
    pub a: f64,
}

pub fn encode(field: &Field, a: f64) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.n() as u64).to_le_bytes());
    out.extend_from_slice(&grid.half_length().to_le_bytes());
    out.extend_from_slice(&a.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Snapshot(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..8] != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let dim = u32_at(12) as usize;
    let n = u64_at(16) as usize;
    let l = f64_at(24);
    let a = f64_at(32);
    let grid = Grid::new(dim, n, l).map_err(|e| Error::Snapshot(e.to_string()))?;
    let expected = HEADER_LEN + 8 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Snapshot(format!(
            "expected {expected} bytes for d = {dim}, n = {n}, got {}",
            bytes.len()
        )));
    }
    let values = (0..grid.len()).map(|i| f64_at(HEADER_LEN + 8 * i)).collect();
    Ok(Snapshot {
        field: Field::from_values(&grid, values)?,
        a,
    })
}

pub fn write(path: &Path, field: &Field, a: f64) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode(field, a))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Snapshot> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
