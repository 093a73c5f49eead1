//! Model input assembly: the 3T+H+3-channel stacks and patch sampling.
//!
//! Channel order is fixed and every consumer depends on it:
//!
//! ```text
//! [ DEM (1) | ΔD (4) | rain (T+H−1) | W (T) | ΔW (T−1) ]
//! ```
//!
//! ΔD is the elevation change toward the left/right/down/up neighbor with a
//! phantom neighbor of −1 outside the grid. Rain channels broadcast the
//! scalar intensities of steps t−T+2 .. t+H. The target is the change in
//! water depth over the horizon, W(t+H) − W(t), never the absolute depth.

use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rainfall::RainEvent;
use crate::raster::{CatchmentMask, Raster, RasterError, RasterStack, Units};
use crate::seed::stream_rng;

/// A target cell is "wet" for sampling purposes when its depth changes by
/// more than this many meters over the horizon.
pub const WET_DELTA_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error(
        "anchor t={t} needs frames {first}..={last} but the simulation has 1..={available}"
    )]
    Range {
        t: usize,
        first: usize,
        last: usize,
        available: usize,
    },
    #[error("raster {rows}x{cols} smaller than patch size {patch}")]
    TooSmall { rows: usize, cols: usize, patch: usize },
    #[error("sample cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Number of observed depth frames T.
    pub t_steps: usize,
    /// Forecast horizon H in 5-minute steps.
    pub horizon: usize,
    pub include_delta_dem: bool,
    pub include_delta_wd: bool,
    pub patch_size: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            t_steps: 5,
            horizon: 12,
            include_delta_dem: true,
            include_delta_wd: true,
            patch_size: 128,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.t_steps == 0 {
            return Err(FeatureError::InvalidSpec("T must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(FeatureError::InvalidSpec("horizon must be >= 1".into()));
        }
        if self.patch_size == 0 {
            return Err(FeatureError::InvalidSpec("patch size must be >= 1".into()));
        }
        Ok(())
    }

    /// Total channel count; equals 3T+H+3 with every feature enabled.
    pub fn channel_count(&self) -> usize {
        channel_layout(self).total
    }
}

/// Index ranges of each feature group inside an assembled stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelLayout {
    pub dem: Range<usize>,
    pub delta_dem: Range<usize>,
    pub rain: Range<usize>,
    pub wd: Range<usize>,
    pub delta_wd: Range<usize>,
    pub total: usize,
}

pub fn channel_layout(spec: &FeatureSpec) -> ChannelLayout {
    let t = spec.t_steps;
    let h = spec.horizon;
    let mut next = 0;
    let mut take = |len: usize| {
        let r = next..next + len;
        next += len;
        r
    };
    let dem = take(1);
    let delta_dem = take(if spec.include_delta_dem { 4 } else { 0 });
    let rain = take(t + h - 1);
    let wd = take(t);
    let delta_wd = take(if spec.include_delta_wd && t >= 2 { t - 1 } else { 0 });
    ChannelLayout {
        dem,
        delta_dem,
        rain,
        wd,
        delta_wd,
        total: next,
    }
}

/// Elevation change toward each neighbor (Eqs. 1–4): four channels in the
/// order left, right, down, up, with a phantom −1 outside the border.
pub fn delta_dem(dem: &Raster) -> Result<RasterStack, FeatureError> {
    const PAD: f64 = -1.0;
    let rows = dem.rows();
    let cols = dem.cols();
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            PAD
        } else {
            dem.get(r as usize, c as usize)
        }
    };
    let left = Raster::from_fn(rows, cols, Units::Meters, |r, c| {
        dem.get(r, c) - at(r as isize, c as isize - 1)
    })?;
    let right = Raster::from_fn(rows, cols, Units::Meters, |r, c| {
        dem.get(r, c) - at(r as isize, c as isize + 1)
    })?;
    let down = Raster::from_fn(rows, cols, Units::Meters, |r, c| {
        dem.get(r, c) - at(r as isize - 1, c as isize)
    })?;
    let up = Raster::from_fn(rows, cols, Units::Meters, |r, c| {
        dem.get(r, c) - at(r as isize + 1, c as isize)
    })?;
    Ok(RasterStack::new(
        vec![left, right, down, up],
        ["ddem_left", "ddem_right", "ddem_down", "ddem_up"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )?)
}

/// Water-depth change between consecutive frames (Eq. 5): channel t is
/// W(t+1) − W(t).
pub fn delta_wd(frames: &[Raster]) -> Result<RasterStack, FeatureError> {
    if frames.len() < 2 {
        return Err(FeatureError::InvalidSpec(format!(
            "delta_wd needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let mut channels = Vec::with_capacity(frames.len() - 1);
    let mut labels = Vec::with_capacity(frames.len() - 1);
    for (i, pair) in frames.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if !a.same_shape(b) {
            return Err(FeatureError::InvalidSpec("frame shapes differ".into()));
        }
        let cells: Vec<f64> = b.cells().iter().zip(a.cells()).map(|(x, y)| x - y).collect();
        channels.push(Raster::new(a.rows(), a.cols(), cells, Units::Meters)?);
        labels.push(format!("dwd_{i}"));
    }
    Ok(RasterStack::new(channels, labels)?)
}

/// One training/evaluation sample: input stack, horizon depth change, and
/// the catchment mask for the same window.
#[derive(Debug, Clone)]
pub struct Sample {
    pub input: RasterStack,
    pub target_delta: Raster,
    pub mask: CatchmentMask,
    pub event_name: String,
    /// (row offset, col offset, anchor step t).
    pub anchor: (usize, usize, usize),
}

/// Assemble the full-raster sample anchored at 1-based step `t`.
///
/// `frames` is the whole simulated sequence (index 0 holds step 1); the
/// window uses W(t−T+1)..W(t) as input and W(t+H) − W(t) as target.
pub fn assemble(
    dem: &Raster,
    mask: &CatchmentMask,
    frames: &[Raster],
    event: &RainEvent,
    t: usize,
    spec: &FeatureSpec,
) -> Result<Sample, FeatureError> {
    spec.validate()?;
    let t_steps = spec.t_steps;
    let h = spec.horizon;
    if t < t_steps || t + h > frames.len() {
        return Err(FeatureError::Range {
            t,
            first: t.saturating_sub(t_steps - 1),
            last: t + h,
            available: frames.len(),
        });
    }
    let rows = dem.rows();
    let cols = dem.cols();

    let mut channels: Vec<Raster> = Vec::with_capacity(spec.channel_count());
    let mut labels: Vec<String> = Vec::with_capacity(spec.channel_count());

    channels.push(dem.clone());
    labels.push("dem".to_string());

    if spec.include_delta_dem {
        let dd = delta_dem(dem)?;
        for (ch, label) in dd.channels().iter().zip(dd.labels()) {
            channels.push(ch.clone());
            labels.push(label.clone());
        }
    }

    for step in (t + 2 - t_steps)..=(t + h) {
        let intensity = event.intensity_for_step(step);
        channels.push(Raster::constant(rows, cols, intensity, Units::MmPerHour)?);
        labels.push(format!("rain_s{step}"));
    }

    let window = &frames[(t - t_steps)..t];
    for (offset, frame) in window.iter().enumerate() {
        if !frame.same_shape(dem) {
            return Err(FeatureError::InvalidSpec("frame/DEM shape mismatch".into()));
        }
        channels.push(frame.clone());
        labels.push(format!("wd_t{}", t - t_steps + 1 + offset));
    }

    if spec.include_delta_wd && t_steps >= 2 {
        let dw = delta_wd(window)?;
        for (i, ch) in dw.channels().iter().enumerate() {
            channels.push(ch.clone());
            labels.push(format!("dwd_t{}", t - t_steps + 1 + i));
        }
    }

    let future = &frames[t + h - 1];
    let current = &frames[t - 1];
    let target_cells: Vec<f64> = future
        .cells()
        .iter()
        .zip(current.cells())
        .map(|(a, b)| a - b)
        .collect();
    let target_delta = Raster::new(rows, cols, target_cells, Units::Meters)?;

    Ok(Sample {
        input: RasterStack::new(channels, labels)?,
        target_delta,
        mask: mask.clone(),
        event_name: event.name().to_string(),
        anchor: (0, 0, t),
    })
}

/// Crop a `size`×`size` window of every channel, the target, and the mask.
pub fn crop_sample(full: &Sample, row0: usize, col0: usize, size: usize) -> Result<Sample, FeatureError> {
    let mut channels = Vec::with_capacity(full.input.len());
    for ch in full.input.channels() {
        channels.push(ch.crop(row0, col0, size, size)?);
    }
    Ok(Sample {
        input: RasterStack::new(channels, full.input.labels().to_vec())?,
        target_delta: full.target_delta.crop(row0, col0, size, size)?,
        mask: full.mask.crop(row0, col0, size, size)?,
        event_name: full.event_name.clone(),
        anchor: (row0, col0, full.anchor.2),
    })
}

/// Draw `n` patch samples from a full-raster sample. A `wet_bias` fraction
/// of draws is taken from anchors whose target patch contains at least one
/// cell with |Δdepth| above [`WET_DELTA_THRESHOLD`]; the rest are uniform.
pub fn sample_patches(
    full: &Sample,
    spec: &FeatureSpec,
    n: usize,
    seed: u64,
    wet_bias: f64,
) -> Result<Vec<Sample>, FeatureError> {
    spec.validate()?;
    if !(0.0..=1.0).contains(&wet_bias) {
        return Err(FeatureError::InvalidSpec(format!(
            "wet_bias {wet_bias} outside [0,1]"
        )));
    }
    let rows = full.target_delta.rows();
    let cols = full.target_delta.cols();
    let size = spec.patch_size;
    if rows < size || cols < size {
        return Err(FeatureError::TooSmall { rows, cols, patch: size });
    }
    let anchor_rows = rows - size + 1;
    let anchor_cols = cols - size + 1;

    // Summed-area table of the wet indicator, so each anchor's wet-cell
    // count is O(1). sat[(r+1)(cols+1)+(c+1)] covers rows 0..=r, cols 0..=c.
    let mut sat = vec![0u32; (rows + 1) * (cols + 1)];
    for r in 0..rows {
        for c in 0..cols {
            let wet = u32::from(full.target_delta.get(r, c).abs() > WET_DELTA_THRESHOLD);
            sat[(r + 1) * (cols + 1) + (c + 1)] =
                wet + sat[r * (cols + 1) + (c + 1)] + sat[(r + 1) * (cols + 1) + c]
                    - sat[r * (cols + 1) + c];
        }
    }
    let wet_count = |r0: usize, c0: usize| -> u32 {
        let r1 = r0 + size;
        let c1 = c0 + size;
        sat[r1 * (cols + 1) + c1] + sat[r0 * (cols + 1) + c0]
            - sat[r0 * (cols + 1) + c1]
            - sat[r1 * (cols + 1) + c0]
    };
    let mut wet_anchors = Vec::new();
    for r0 in 0..anchor_rows {
        for c0 in 0..anchor_cols {
            if wet_count(r0, c0) > 0 {
                wet_anchors.push((r0, c0));
            }
        }
    }

    let mut rng = stream_rng(seed, "patches");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (r0, c0) = if !wet_anchors.is_empty() && rng.gen_range(0.0..1.0) < wet_bias {
            wet_anchors[rng.gen_range(0..wet_anchors.len())]
        } else {
            (rng.gen_range(0..anchor_rows), rng.gen_range(0..anchor_cols))
        };
        out.push(crop_sample(full, r0, c0, size)?);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    file: String,
    event: String,
    anchor: [usize; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheIndex {
    rows: usize,
    cols: usize,
    labels: Vec<String>,
    patches: Vec<CacheEntry>,
}

const CACHE_MAGIC: [u8; 4] = *b"FBPT";

/// Persist samples as one binary file per patch plus an `index.json`.
pub fn save_samples(samples: &[Sample], dir: &Path) -> Result<(), FeatureError> {
    std::fs::create_dir_all(dir)?;
    let (rows, cols, labels) = match samples.first() {
        Some(s) => (
            s.target_delta.rows(),
            s.target_delta.cols(),
            s.input.labels().to_vec(),
        ),
        None => {
            let index = CacheIndex {
                rows: 0,
                cols: 0,
                labels: Vec::new(),
                patches: Vec::new(),
            };
            let json = serde_json::to_string_pretty(&index)
                .map_err(|e| FeatureError::Cache(e.to_string()))?;
            std::fs::write(dir.join("index.json"), json + "\n")?;
            return Ok(());
        }
    };

    let mut patches = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.input.labels() != labels.as_slice() {
            return Err(FeatureError::Cache("inconsistent channel labels".into()));
        }
        let file = format!("patch_{i:05}.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&CACHE_MAGIC);
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&(s.input.len() as u16).to_le_bytes());
        bytes.extend_from_slice(&(rows as u32).to_le_bytes());
        bytes.extend_from_slice(&(cols as u32).to_le_bytes());
        for ch in s.input.channels() {
            for &v in ch.cells() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &v in s.target_delta.cells() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend(s.mask.inside().iter().map(|&b| u8::from(b)));
        std::fs::write(dir.join(&file), bytes)?;
        patches.push(CacheEntry {
            file,
            event: s.event_name.clone(),
            anchor: [s.anchor.0, s.anchor.1, s.anchor.2],
        });
    }
    let index = CacheIndex {
        rows,
        cols,
        labels,
        patches,
    };
    let json =
        serde_json::to_string_pretty(&index).map_err(|e| FeatureError::Cache(e.to_string()))?;
    std::fs::write(dir.join("index.json"), json + "\n")?;
    Ok(())
}

pub fn load_samples(dir: &Path) -> Result<Vec<Sample>, FeatureError> {
    let text = std::fs::read_to_string(dir.join("index.json"))?;
    let index: CacheIndex =
        serde_json::from_str(&text).map_err(|e| FeatureError::Cache(e.to_string()))?;
    let mut samples = Vec::with_capacity(index.patches.len());
    for entry in &index.patches {
        let bytes = std::fs::read(dir.join(&entry.file))?;
        let fail = |msg: &str| FeatureError::Cache(format!("{}: {msg}", entry.file));
        if bytes.len() < 16 || bytes[0..4] != CACHE_MAGIC {
            return Err(fail("bad header"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != 1 {
            return Err(fail("unsupported version"));
        }
        let n_ch = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if n_ch != index.labels.len() || rows != index.rows || cols != index.cols {
            return Err(fail("header disagrees with index"));
        }
        let cell_n = rows * cols;
        let expected = 16 + (n_ch + 1) * cell_n * 8 + cell_n;
        if bytes.len() != expected {
            return Err(fail("truncated payload"));
        }
        let mut offset = 16;
        let read_raster = |units: Units, offset: &mut usize| -> Result<Raster, FeatureError> {
            let mut cells = Vec::with_capacity(cell_n);
            for chunk in bytes[*offset..*offset + cell_n * 8].chunks_exact(8) {
                cells.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            *offset += cell_n * 8;
            Ok(Raster::new(rows, cols, cells, units)?)
        };
        let mut channels = Vec::with_capacity(n_ch);
        for label in &index.labels {
            let units = if label.starts_with("rain") {
                Units::MmPerHour
            } else {
                Units::Meters
            };
            channels.push(read_raster(units, &mut offset)?);
        }
        let target_delta = read_raster(Units::Meters, &mut offset)?;
        let inside: Vec<bool> = bytes[offset..offset + cell_n].iter().map(|&b| b != 0).collect();
        // A patch cropped at the catchment edge may be entirely outside,
        // which the standalone constructor rejects; rebuild through a crop,
        // which permits it.
        let mask = rebuild_mask(rows, cols, &inside);
        samples.push(Sample {
            input: RasterStack::new(channels, index.labels.clone())
                .map_err(FeatureError::from)?,
            target_delta,
            mask,
            event_name: entry.event.clone(),
            anchor: (entry.anchor[0], entry.anchor[1], entry.anchor[2]),
        });
    }
    Ok(samples)
}

/// Build a mask that may be empty by cropping a padded non-empty one.
fn rebuild_mask(rows: usize, cols: usize, inside: &[bool]) -> CatchmentMask {
    let mut padded = Vec::with_capacity((rows + 1) * cols);
    padded.extend_from_slice(inside);
    padded.extend(std::iter::repeat(true).take(cols));
    CatchmentMask::new(rows + 1, cols, padded)
        .expect("padded mask has an inside cell")
        .crop(0, 0, rows, cols)
        .expect("crop within bounds")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rainfall::make_short_event;
    use crate::raster::mask_from_dem;
    use crate::sim::{simulate, SimConfig};
    use crate::terrain::{synthetic_dem, TerrainKind};

    fn toy_world() -> (Raster, CatchmentMask, Vec<Raster>, RainEvent) {
        let dem = synthetic_dem(TerrainKind::Like709, 24, 24, 8).unwrap();
        let mask = mask_from_dem(&dem).unwrap();
        let event = make_short_event(100, 5, 8).unwrap();
        let cfg = SimConfig {
            inner_steps_per_frame: 10,
            frames: 20,
            ..SimConfig::default()
        };
        let frames = simulate(&dem, &mask, &event, &cfg).unwrap().frames;
        (dem, mask, frames, event)
    }

    use crate::rainfall::RainEvent;

    #[test]
    fn delta_dem_matches_hand_case() {
        let dem = Raster::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], Units::Meters).unwrap();
        let dd = delta_dem(&dem).unwrap();
        let left = dd.channel(dd.index_of("ddem_left").unwrap());
        assert_eq!(left.cells(), &[2.0, 1.0, 4.0, 1.0]);
    }

    #[test]
    fn delta_dem_constant_interior_zero_border_pad() {
        let e = 3.0;
        let dem = Raster::constant(4, 4, e, Units::Meters).unwrap();
        let dd = delta_dem(&dem).unwrap();
        let left = dd.channel(0);
        for r in 0..4 {
            assert_eq!(left.get(r, 0), e + 1.0);
            for c in 1..4 {
                assert_eq!(left.get(r, c), 0.0);
            }
        }
        let up = dd.channel(3);
        for c in 0..4 {
            assert_eq!(up.get(3, c), e + 1.0);
            for r in 0..3 {
                assert_eq!(up.get(r, c), 0.0);
            }
        }
    }

    #[test]
    fn delta_dem_antisymmetry_interior() {
        let dem = synthetic_dem(TerrainKind::Like709, 16, 16, 2).unwrap();
        let dd = delta_dem(&dem).unwrap();
        let left = dd.channel(0);
        let right = dd.channel(1);
        for r in 0..16 {
            for c in 1..16 {
                assert_eq!(left.get(r, c), -right.get(r, c - 1));
            }
        }
    }

    #[test]
    fn delta_dem_brute_force_oracle() {
        let dem = synthetic_dem(TerrainKind::Like744, 9, 11, 6).unwrap();
        let dd = delta_dem(&dem).unwrap();
        let at = |r: isize, c: isize| -> f64 {
            if r < 0 || c < 0 || r >= 9 || c >= 11 {
                -1.0
            } else {
                dem.get(r as usize, c as usize)
            }
        };
        for r in 0..9usize {
            for c in 0..11usize {
                let (ri, ci) = (r as isize, c as isize);
                assert_eq!(dd.channel(0).get(r, c), dem.get(r, c) - at(ri, ci - 1));
                assert_eq!(dd.channel(1).get(r, c), dem.get(r, c) - at(ri, ci + 1));
                assert_eq!(dd.channel(2).get(r, c), dem.get(r, c) - at(ri - 1, ci));
                assert_eq!(dd.channel(3).get(r, c), dem.get(r, c) - at(ri + 1, ci));
            }
        }
    }

    #[test]
    fn delta_dem_linearity_on_interior() {
        let a = synthetic_dem(TerrainKind::Like709, 12, 12, 1).unwrap();
        let b = synthetic_dem(TerrainKind::Like744, 12, 12, 2).unwrap();
        let sum = Raster::new(
            12,
            12,
            a.cells().iter().zip(b.cells()).map(|(x, y)| x + y).collect(),
            Units::Meters,
        )
        .unwrap();
        let da = delta_dem(&a).unwrap();
        let db = delta_dem(&b).unwrap();
        let ds = delta_dem(&sum).unwrap();
        for ch in 0..4 {
            for r in 1..11 {
                for c in 1..11 {
                    let lhs = ds.channel(ch).get(r, c);
                    let rhs = da.channel(ch).get(r, c) + db.channel(ch).get(r, c);
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn delta_wd_matches_subtraction_oracle() {
        let (_, _, frames, _) = toy_world();
        let window = &frames[4..8];
        let dw = delta_wd(window).unwrap();
        assert_eq!(dw.len(), 3);
        for i in 0..3 {
            for r in 0..window[0].rows() {
                for c in 0..window[0].cols() {
                    assert_eq!(
                        dw.channel(i).get(r, c),
                        window[i + 1].get(r, c) - window[i].get(r, c)
                    );
                }
            }
        }
    }

    #[test]
    fn delta_wd_constant_frames() {
        let w1 = Raster::constant(3, 3, 0.1, Units::Meters).unwrap();
        let w2 = Raster::constant(3, 3, 0.3, Units::Meters).unwrap();
        let dw = delta_wd(&[w1, w2]).unwrap();
        for &v in dw.channel(0).cells() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_wd_needs_two_frames() {
        let w = Raster::zeros(3, 3, Units::Meters);
        assert!(delta_wd(&[w]).is_err());
    }

    #[test]
    fn channel_count_identity() {
        for t in 1..=6 {
            for h in [1usize, 6, 12] {
                let spec = FeatureSpec {
                    t_steps: t,
                    horizon: h,
                    ..FeatureSpec::default()
                };
                assert_eq!(spec.channel_count(), 3 * t + h + 3, "T={t} H={h}");
            }
        }
    }

    #[test]
    fn assemble_has_documented_channel_order() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 5,
            horizon: 12,
            patch_size: 24,
            ..FeatureSpec::default()
        };
        let s = assemble(&dem, &mask, &frames, &event, 5, &spec).unwrap();
        assert_eq!(s.input.len(), 30);
        let labels = s.input.labels();
        assert_eq!(labels[0], "dem");
        assert_eq!(&labels[1..5], &["ddem_left", "ddem_right", "ddem_down", "ddem_up"]);
        // Rain channels cover steps t−T+2..t+H = 2..17.
        for (i, step) in (2..=17).enumerate() {
            assert_eq!(labels[5 + i], format!("rain_s{step}"));
            let expected = event.intensity_for_step(step);
            assert!(s.input.channel(5 + i).cells().iter().all(|&v| v == expected));
        }
        for (i, step) in (1..=5).enumerate() {
            assert_eq!(labels[21 + i], format!("wd_t{step}"));
        }
        for (i, step) in (1..=4).enumerate() {
            assert_eq!(labels[26 + i], format!("dwd_t{step}"));
        }
        // Target is the depth change, not absolute depth.
        for r in 0..dem.rows() {
            for c in 0..dem.cols() {
                assert_eq!(
                    s.target_delta.get(r, c),
                    frames[16].get(r, c) - frames[4].get(r, c)
                );
            }
        }
    }

    #[test]
    fn assemble_t1_channel_count() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 1,
            horizon: 12,
            ..FeatureSpec::default()
        };
        let s = assemble(&dem, &mask, &frames, &event, 1, &spec).unwrap();
        assert_eq!(s.input.len(), 12 + 6);
    }

    #[test]
    fn assemble_is_pure() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 3,
            horizon: 2,
            ..FeatureSpec::default()
        };
        let a = assemble(&dem, &mask, &frames, &event, 6, &spec).unwrap();
        let b = assemble(&dem, &mask, &frames, &event, 6, &spec).unwrap();
        assert_eq!(a.target_delta, b.target_delta);
        for (x, y) in a.input.channels().iter().zip(b.input.channels()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn assemble_rejects_out_of_range_anchor() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 5,
            horizon: 12,
            ..FeatureSpec::default()
        };
        assert!(matches!(
            assemble(&dem, &mask, &frames, &event, 4, &spec),
            Err(FeatureError::Range { .. })
        ));
        assert!(matches!(
            assemble(&dem, &mask, &frames, &event, 9, &spec),
            Err(FeatureError::Range { .. })
        ));
    }

    #[test]
    fn horizon_one_target_matches_simulator_pair() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 2,
            horizon: 1,
            ..FeatureSpec::default()
        };
        let s = assemble(&dem, &mask, &frames, &event, 7, &spec).unwrap();
        for r in 0..dem.rows() {
            for c in 0..dem.cols() {
                assert_eq!(s.target_delta.get(r, c), frames[7].get(r, c) - frames[6].get(r, c));
            }
        }
    }

    #[test]
    fn patch_sampling_is_deterministic() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 2,
            horizon: 3,
            patch_size: 8,
            ..FeatureSpec::default()
        };
        let full = assemble(&dem, &mask, &frames, &event, 6, &spec).unwrap();
        let a = sample_patches(&full, &spec, 12, 77, 0.5).unwrap();
        let b = sample_patches(&full, &spec, 12, 77, 0.5).unwrap();
        let anchors_a: Vec<_> = a.iter().map(|s| s.anchor).collect();
        let anchors_b: Vec<_> = b.iter().map(|s| s.anchor).collect();
        assert_eq!(anchors_a, anchors_b);
        assert_eq!(a.len(), 12);
        for s in &a {
            assert_eq!(s.target_delta.rows(), 8);
            assert_eq!(s.input.len(), full.input.len());
        }
    }

    #[test]
    fn zero_patches_is_empty() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 2,
            horizon: 3,
            patch_size: 8,
            ..FeatureSpec::default()
        };
        let full = assemble(&dem, &mask, &frames, &event, 6, &spec).unwrap();
        assert!(sample_patches(&full, &spec, 0, 1, 0.5).unwrap().is_empty());
    }

    #[test]
    fn patch_larger_than_raster_is_rejected() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 2,
            horizon: 3,
            patch_size: 100,
            ..FeatureSpec::default()
        };
        let full = assemble(&dem, &mask, &frames, &event, 6, &spec).unwrap();
        assert!(matches!(
            sample_patches(&full, &spec, 1, 1, 0.5),
            Err(FeatureError::TooSmall { .. })
        ));
    }

    #[test]
    fn unbiased_sampling_is_uniform() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 2,
            horizon: 3,
            patch_size: 9,
            ..FeatureSpec::default()
        };
        let full = assemble(&dem, &mask, &frames, &event, 6, &spec).unwrap();
        let n = 4096;
        let samples = sample_patches(&full, &spec, n, 123, 0.0).unwrap();
        // Anchor space is 16x16; bin into 4x4 blocks and chi-square against
        // the uniform distribution. 15 dof, p=0.001 critical value 37.7.
        let mut bins = [0usize; 16];
        for s in &samples {
            let (r0, c0, _) = s.anchor;
            bins[(r0 / 4) * 4 + c0 / 4] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 37.7, "chi-square {chi2} too large, bins {bins:?}");
    }

    #[test]
    fn wet_bias_prefers_wet_anchors() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 2,
            horizon: 10,
            patch_size: 6,
            ..FeatureSpec::default()
        };
        let full = assemble(&dem, &mask, &frames, &event, 6, &spec).unwrap();
        let wet_hits = |samples: &[Sample]| {
            samples
                .iter()
                .filter(|s| {
                    s.target_delta
                        .cells()
                        .iter()
                        .any(|&v| v.abs() > WET_DELTA_THRESHOLD)
                })
                .count()
        };
        let biased = sample_patches(&full, &spec, 400, 9, 1.0).unwrap();
        assert_eq!(wet_hits(&biased), 400);
        let unbiased = sample_patches(&full, &spec, 400, 9, 0.0).unwrap();
        assert!(wet_hits(&unbiased) < 400);
    }

    #[test]
    fn sample_cache_round_trips() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 3,
            horizon: 4,
            patch_size: 8,
            ..FeatureSpec::default()
        };
        let full = assemble(&dem, &mask, &frames, &event, 8, &spec).unwrap();
        let samples = sample_patches(&full, &spec, 5, 3, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_samples(&samples, dir.path()).unwrap();
        let back = load_samples(dir.path()).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.anchor, b.anchor);
            assert_eq!(a.event_name, b.event_name);
            assert_eq!(a.target_delta, b.target_delta);
            assert_eq!(a.mask, b.mask);
            for (x, y) in a.input.channels().iter().zip(b.input.channels()) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn cache_rejects_corruption() {
        let (dem, mask, frames, event) = toy_world();
        let spec = FeatureSpec {
            t_steps: 2,
            horizon: 2,
            patch_size: 8,
            ..FeatureSpec::default()
        };
        let full = assemble(&dem, &mask, &frames, &event, 5, &spec).unwrap();
        let samples = sample_patches(&full, &spec, 2, 3, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_samples(&samples, dir.path()).unwrap();
        let victim = dir.path().join("patch_00000.bin");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_samples(dir.path()), Err(FeatureError::Cache(_))));
    }
}
