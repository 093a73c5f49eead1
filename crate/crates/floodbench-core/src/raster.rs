//! Grid containers shared by the whole suite.
//!
//! A [`Raster`] is an immutable row-major grid of finite `f64` cells.
//! Elevation and water depth are in meters, rainfall in mm/h; the unit
//! travels with the raster so files stay self-describing. Cells with an
//! elevation of exactly `0.0` are outside the catchment and are excluded
//! from every downstream computation via [`CatchmentMask`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid raster dimensions {rows}x{cols}")]
    InvalidDimensions { rows: usize, cols: usize },
    #[error("cell buffer has {got} values, expected {expected}")]
    CellCountMismatch { got: usize, expected: usize },
    #[error("non-finite value {value} at cell ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("DEM is zero everywhere; no catchment cells")]
    EmptyCatchment,
    #[error("duplicate channel label {0:?}")]
    DuplicateLabel(String),
    #[error("malformed raster file: {0}")]
    Format(String),
    #[error("corrupt raster file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Physical unit of a raster's cell values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    Dimensionless,
    Meters,
    MmPerHour,
}

impl Units {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Units::Dimensionless => 0,
            Units::Meters => 1,
            Units::MmPerHour => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Units> {
        match tag {
            0 => Some(Units::Dimensionless),
            1 => Some(Units::Meters),
            2 => Some(Units::MmPerHour),
            _ => None,
        }
    }
}

/// Immutable 2-D grid of finite 64-bit floats, row-major.
///
/// Construction validates shape and finiteness; after that the raster is
/// frozen, so sharing across threads needs no synchronization.
#[derive(Debug, Clone)]
pub struct Raster {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
    units: Units,
}

impl Raster {
    pub fn new(rows: usize, cols: usize, cells: Vec<f64>, units: Units) -> Result<Self, RasterError> {
        if rows == 0 || cols == 0 {
            return Err(RasterError::InvalidDimensions { rows, cols });
        }
        if cells.len() != rows * cols {
            return Err(RasterError::CellCountMismatch {
                got: cells.len(),
                expected: rows * cols,
            });
        }
        for (i, &v) in cells.iter().enumerate() {
            if !v.is_finite() {
                return Err(RasterError::NonFinite {
                    row: i / cols,
                    col: i % cols,
                    value: v,
                });
            }
        }
        Ok(Raster { rows, cols, cells, units })
    }

    pub fn constant(rows: usize, cols: usize, value: f64, units: Units) -> Result<Self, RasterError> {
        Self::new(rows, cols, vec![value; rows * cols], units)
    }

    pub fn zeros(rows: usize, cols: usize, units: Units) -> Self {
        Raster {
            rows,
            cols,
            cells: vec![0.0; rows * cols],
            units,
        }
    }

    /// Build from a closure over (row, col). Panics are avoided by validating
    /// the produced values like `new` does.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        units: Units,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                cells.push(f(r, c));
            }
        }
        Self::new(rows, cols, cells, units)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn units(&self) -> Units {
        self.units
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[self.idx(row, col)]
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// New raster with rows and columns swapped.
    pub fn transposed(&self) -> Raster {
        let mut cells = vec![0.0; self.cells.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                cells[c * self.rows + r] = self.cells[r * self.cols + c];
            }
        }
        Raster {
            rows: self.cols,
            cols: self.rows,
            cells,
            units: self.units,
        }
    }

    /// Rectangular crop of size `rows x cols` anchored at (row0, col0).
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Raster, RasterError> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(RasterError::DimensionMismatch(format!(
                "crop {}x{}@({},{}) exceeds raster {}x{}",
                rows, cols, row0, col0, self.rows, self.cols
            )));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let start = (row0 + r) * self.cols + col0;
            cells.extend_from_slice(&self.cells[start..start + cols]);
        }
        Ok(Raster { rows, cols, cells, units: self.units })
    }
}

/// Bitwise cell equality; two rasters are equal only if every stored bit
/// pattern matches, which is what the I/O round-trip guarantees.
impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.units == other.units
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Which cells belong to the catchment. Same shape as the rasters it masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatchmentMask {
    rows: usize,
    cols: usize,
    inside: Vec<bool>,
}

impl CatchmentMask {
    pub fn new(rows: usize, cols: usize, inside: Vec<bool>) -> Result<Self, RasterError> {
        if rows == 0 || cols == 0 {
            return Err(RasterError::InvalidDimensions { rows, cols });
        }
        if inside.len() != rows * cols {
            return Err(RasterError::CellCountMismatch {
                got: inside.len(),
                expected: rows * cols,
            });
        }
        if !inside.iter().any(|&b| b) {
            return Err(RasterError::EmptyCatchment);
        }
        Ok(CatchmentMask { rows, cols, inside })
    }

    /// Mask with every cell inside.
    pub fn full(rows: usize, cols: usize) -> Self {
        CatchmentMask {
            rows,
            cols,
            inside: vec![true; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    #[inline]
    pub fn is_inside(&self, row: usize, col: usize) -> bool {
        self.inside[row * self.cols + col]
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<CatchmentMask, RasterError> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(RasterError::DimensionMismatch(format!(
                "crop {}x{}@({},{}) exceeds mask {}x{}",
                rows, cols, row0, col0, self.rows, self.cols
            )));
        }
        let mut inside = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let start = (row0 + r) * self.cols + col0;
            inside.extend_from_slice(&self.inside[start..start + cols]);
        }
        // A crop may land entirely outside the catchment; that is a legal
        // (if useless) patch, so bypass the at-least-one-inside check.
        Ok(CatchmentMask { rows, cols, inside })
    }

    pub fn transposed(&self) -> CatchmentMask {
        let mut inside = vec![false; self.inside.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                inside[c * self.rows + r] = self.inside[r * self.cols + c];
            }
        }
        CatchmentMask {
            rows: self.cols,
            cols: self.rows,
            inside,
        }
    }
}

/// Cells are inside the catchment wherever the DEM elevation is not
/// exactly zero.
pub fn mask_from_dem(dem: &Raster) -> Result<CatchmentMask, RasterError> {
    let inside: Vec<bool> = dem.cells().iter().map(|&v| v != 0.0).collect();
    CatchmentMask::new(dem.rows(), dem.cols(), inside)
}

/// Ordered set of equally shaped channels with unique labels.
#[derive(Debug, Clone)]
pub struct RasterStack {
    channels: Vec<Raster>,
    labels: Vec<String>,
}

impl RasterStack {
    pub fn new(channels: Vec<Raster>, labels: Vec<String>) -> Result<Self, RasterError> {
        if channels.is_empty() {
            return Err(RasterError::DimensionMismatch("empty stack".into()));
        }
        if channels.len() != labels.len() {
            return Err(RasterError::DimensionMismatch(format!(
                "{} channels but {} labels",
                channels.len(),
                labels.len()
            )));
        }
        let (rows, cols) = (channels[0].rows(), channels[0].cols());
        for ch in &channels[1..] {
            if ch.rows() != rows || ch.cols() != cols {
                return Err(RasterError::DimensionMismatch(format!(
                    "channel is {}x{}, expected {}x{}",
                    ch.rows(),
                    ch.cols(),
                    rows,
                    cols
                )));
            }
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(RasterError::DuplicateLabel(l.clone()));
            }
        }
        Ok(RasterStack { channels, labels })
    }

    pub fn rows(&self) -> usize {
        self.channels[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.channels[0].cols()
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[Raster] {
        &self.channels
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn channel(&self, i: usize) -> &Raster {
        &self.channels[i]
    }

    /// Position of the channel with the given label, if present.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Flatten into a contiguous (channel, row, col) buffer.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.rows() * self.cols());
        for ch in &self.channels {
            out.extend_from_slice(ch.cells());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_follows_zero_convention() {
        let dem = Raster::new(2, 2, vec![0.0, 1.0, 2.0, 3.0], Units::Meters).unwrap();
        let mask = mask_from_dem(&dem).unwrap();
        assert_eq!(mask.inside(), &[false, true, true, true]);
    }

    #[test]
    fn mask_all_inside_for_nonzero_dem() {
        let dem = Raster::constant(3, 3, 5.0, Units::Meters).unwrap();
        let mask = mask_from_dem(&dem).unwrap();
        assert_eq!(mask.inside_count(), 9);
    }

    #[test]
    fn mask_rejects_all_zero_dem() {
        let dem = Raster::constant(3, 3, 0.0, Units::Meters).unwrap();
        assert!(matches!(mask_from_dem(&dem), Err(RasterError::EmptyCatchment)));
    }

    #[test]
    fn mask_from_dem_is_stable() {
        let dem = Raster::new(2, 3, vec![0.0, 1.0, 0.0, 2.0, 0.5, 3.0], Units::Meters).unwrap();
        assert_eq!(mask_from_dem(&dem).unwrap(), mask_from_dem(&dem).unwrap());
    }

    #[test]
    fn raster_rejects_non_finite() {
        let err = Raster::new(1, 2, vec![1.0, f64::NAN], Units::Meters).unwrap_err();
        assert!(matches!(err, RasterError::NonFinite { row: 0, col: 1, .. }));
    }

    #[test]
    fn raster_rejects_wrong_count() {
        assert!(Raster::new(2, 2, vec![1.0; 3], Units::Meters).is_err());
    }

    #[test]
    fn stack_rejects_duplicate_labels() {
        let a = Raster::zeros(2, 2, Units::Meters);
        let err = RasterStack::new(vec![a.clone(), a], vec!["w".into(), "w".into()]).unwrap_err();
        assert!(matches!(err, RasterError::DuplicateLabel(_)));
    }

    #[test]
    fn stack_rejects_shape_mismatch() {
        let a = Raster::zeros(2, 2, Units::Meters);
        let b = Raster::zeros(2, 3, Units::Meters);
        assert!(RasterStack::new(vec![a, b], vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn transpose_round_trips() {
        let r = Raster::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], Units::Meters).unwrap();
        let t = r.transposed();
        assert_eq!(t.get(0, 1), 4.0);
        assert_eq!(t.transposed(), r);
    }

    #[test]
    fn crop_extracts_block() {
        let r = Raster::new(3, 3, (0..9).map(|v| v as f64).collect(), Units::Meters).unwrap();
        let c = r.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.cells(), &[4.0, 5.0, 7.0, 8.0]);
    }
}
