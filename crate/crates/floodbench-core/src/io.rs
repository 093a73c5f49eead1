//! On-disk raster format and dataset path conventions.
//!
//! Layout of a `.rst` file, all integers little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FBRS"
//! 4       2     format version (currently 1)
//! 6       1     units tag (0 dimensionless, 1 meters, 2 mm/h)
//! 7       1     reserved, must be 0
//! 8       4     rows (u32)
//! 12      4     cols (u32)
//! 16      8*n   cells, row-major f64 bit patterns
//! ```
//!
//! Reads and writes round-trip bit-exactly: the payload is the raw IEEE-754
//! representation, never a decimal rendering.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::raster::{Raster, RasterError, Units};

pub const MAGIC: [u8; 4] = *b"FBRS";
pub const FORMAT_VERSION: u16 = 1;

pub fn write_raster(path: &Path, raster: &Raster) -> Result<(), RasterError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[raster.units().tag(), 0])?;
    w.write_all(&(raster.rows() as u32).to_le_bytes())?;
    w.write_all(&(raster.cols() as u32).to_le_bytes())?;
    let mut payload = Vec::with_capacity(raster.cells().len() * 8);
    for &v in raster.cells() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_raster(path: &Path) -> Result<Raster, RasterError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| RasterError::Format(format!("{}: truncated header", path.display())))?;
    if header[0..4] != MAGIC {
        return Err(RasterError::Format(format!(
            "{}: bad magic {:?}",
            path.display(),
            &header[0..4]
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != FORMAT_VERSION {
        return Err(RasterError::Format(format!(
            "{}: unsupported version {}",
            path.display(),
            version
        )));
    }
    let units = Units::from_tag(header[6]).ok_or_else(|| {
        RasterError::Format(format!("{}: unknown units tag {}", path.display(), header[6]))
    })?;
    let rows = u32::from_le_bytes([header[8], header[9], header[10], header[11]]) as usize;
    let cols = u32::from_le_bytes([header[12], header[13], header[14], header[15]]) as usize;
    if rows == 0 || cols == 0 {
        return Err(RasterError::Corrupt(format!(
            "{}: zero dimension {}x{}",
            path.display(),
            rows,
            cols
        )));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| RasterError::Corrupt(format!("{}: dimension overflow", path.display())))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(RasterError::Corrupt(format!(
            "{}: payload is {} bytes, expected {}",
            path.display(),
            payload.len(),
            expected
        )));
    }
    let mut cells = Vec::with_capacity(rows * cols);
    for chunk in payload.chunks_exact(8) {
        cells.push(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
    }
    Raster::new(rows, cols, cells, units)
}

/// `<root>/<dataset>/dem.rst`
pub fn dem_path(root: &Path, dataset: &str) -> PathBuf {
    root.join(dataset).join("dem.rst")
}

/// `<root>/<dataset>/<event>/wd_t{index}.rst`; `index` is 1-based.
pub fn frame_path(root: &Path, dataset: &str, event: &str, index: usize) -> PathBuf {
    root.join(dataset).join(event).join(format!("wd_t{index}.rst"))
}

/// Load every frame of an event in time order; `frames` is the frame count.
pub fn read_event_frames(
    root: &Path,
    dataset: &str,
    event: &str,
    frames: usize,
) -> Result<Vec<Raster>, RasterError> {
    (1..=frames)
        .map(|i| read_raster(&frame_path(root, dataset, event, i)))
        .collect()
}
