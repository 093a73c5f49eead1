//! Weight-based cellular-automaton flood simulator.
//!
//! Each output frame covers `output_step_seconds` (default 300 s) split into
//! `inner_steps_per_frame` inner steps. One inner step is two passes:
//!
//! 1. From an immutable depth snapshot, every wet cell computes the head
//!    difference (elevation + depth) to its four von Neumann neighbors,
//!    splits an outgoing volume proportionally over the positive
//!    differences (the "weights"), and caps that volume at
//!    `roughness_coefficient x depth` and at half the smallest positive
//!    difference so depths never go negative and heads never overshoot.
//! 2. Flows are applied: new depth = old depth − outflow + inflows + rain.
//!
//! Out-of-catchment cells are walls. With a closed boundary the total water
//! volume equals the injected rainfall volume to float accuracy, which the
//! conservation tests pin at 1e-9 relative.
//!
//! All per-cell sums use a fixed pairing ((N+S)+(W+E)); IEEE addition is
//! commutative, so simulating a transposed DEM yields bit-exactly
//! transposed frames.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::{frame_path, write_raster};
use crate::rainfall::RainEvent;
use crate::raster::{CatchmentMask, Raster, RasterError, Units};

/// Cell edge length is one meter, so a depth sum in meters doubles as a
/// volume in cubic meters.
pub const CELL_AREA_M2: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid sim config: {0}")]
    Config(String),
    #[error("DEM and mask dimensions differ")]
    MaskMismatch,
    #[error("negative depth produced at inner step {inner_step}; configuration unstable")]
    Unstable { inner_step: u64 },
    #[error("event {event:?}: {source}")]
    Event {
        event: String,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("manifest serialization failed: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// No water crosses the grid edge; mass is conserved exactly.
    Closed,
    /// Edge cells may spill off-grid as if bordered by dry ground at their
    /// own elevation; spilled volume is tallied as outflow.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Seconds per output frame; the paper's cadence is 5 minutes.
    pub output_step_seconds: u32,
    /// Inner CA steps per output frame.
    pub inner_steps_per_frame: u32,
    /// Fraction of a cell's depth eligible to leave per inner step.
    pub roughness_coefficient: f64,
    /// Depths at or below this never move (meters).
    pub min_depth_threshold: f64,
    pub boundary: Boundary,
    /// Number of output frames to produce.
    pub frames: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            output_step_seconds: 300,
            inner_steps_per_frame: 60,
            roughness_coefficient: 0.5,
            min_depth_threshold: 1e-6,
            boundary: Boundary::Closed,
            frames: 61,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.output_step_seconds == 0 || self.inner_steps_per_frame == 0 {
            return Err(SimError::Config("step counts must be positive".into()));
        }
        if self.output_step_seconds % self.inner_steps_per_frame != 0 {
            return Err(SimError::Config(format!(
                "output step {} s not divisible into {} inner steps",
                self.output_step_seconds, self.inner_steps_per_frame
            )));
        }
        if !self.roughness_coefficient.is_finite() || self.roughness_coefficient < 0.0 {
            return Err(SimError::Config("roughness must be finite and >= 0".into()));
        }
        if !self.min_depth_threshold.is_finite() || self.min_depth_threshold < 0.0 {
            return Err(SimError::Config("min depth threshold must be >= 0".into()));
        }
        if self.frames == 0 {
            return Err(SimError::Config("frame count must be positive".into()));
        }
        Ok(())
    }

    pub fn inner_dt_seconds(&self) -> f64 {
        f64::from(self.output_step_seconds) / f64::from(self.inner_steps_per_frame)
    }
}

#[derive(Debug)]
pub struct SimResult {
    /// One water-depth raster per output step, 1-based step i at index i−1.
    pub frames: Vec<Raster>,
    /// Total rainfall volume injected, m³.
    pub total_inflow: f64,
    /// Total volume lost over open boundaries, m³.
    pub total_outflow: f64,
}

// Direction order is load-bearing: under a transpose N<->W and S<->E, and
// every sum pairs (N+S) with (W+E), so results stay bit-exact.
const N: usize = 0;
const S: usize = 1;
const W: usize = 2;
const E: usize = 3;

pub fn simulate(
    dem: &Raster,
    mask: &CatchmentMask,
    event: &RainEvent,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    cfg.validate()?;
    if dem.rows() != mask.rows() || dem.cols() != mask.cols() {
        return Err(SimError::MaskMismatch);
    }
    let rows = dem.rows();
    let cols = dem.cols();
    let n = rows * cols;
    let elevation = dem.cells();
    let inside = mask.inside();
    let inside_count = mask.inside_count() as f64;

    let dt = cfg.inner_dt_seconds();
    let nu = cfg.roughness_coefficient;

    let mut depth = vec![0.0f64; n];
    let mut next = vec![0.0f64; n];
    // Per-cell outgoing volume toward each direction, refreshed every step.
    let mut flows = vec![[0.0f64; 4]; n];
    let mut total_inflow = 0.0f64;
    let mut total_outflow = 0.0f64;
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut inner_step: u64 = 0;

    for frame_idx in 1..=cfg.frames {
        // mm/h -> meters of depth per inner step.
        let rain_per_inner = event.intensity_for_step(frame_idx) * dt / 3.6e6;
        for _ in 0..cfg.inner_steps_per_frame {
            inner_step += 1;

            // Pass 1: outflows from the immutable snapshot.
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    let f = &mut flows[i];
                    *f = [0.0; 4];
                    if !inside[i] {
                        continue;
                    }
                    let d = depth[i];
                    if d <= cfg.min_depth_threshold {
                        continue;
                    }
                    let head = elevation[i] + d;

                    // Head drop toward each neighbor; barriers yield 0.
                    let mut drop = [0.0f64; 4];
                    let mut consider = |dir: usize, nr: isize, nc: isize| {
                        if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                            if cfg.boundary == Boundary::Open {
                                // Ghost neighbor: dry ground at this cell's
                                // elevation, so the drop is the depth itself.
                                drop[dir] = d;
                            }
                            return;
                        }
                        let j = nr as usize * cols + nc as usize;
                        if !inside[j] {
                            return;
                        }
                        let diff = head - (elevation[j] + depth[j]);
                        if diff > 0.0 {
                            drop[dir] = diff;
                        }
                    };
                    consider(N, r as isize - 1, c as isize);
                    consider(S, r as isize + 1, c as isize);
                    consider(W, r as isize, c as isize - 1);
                    consider(E, r as isize, c as isize + 1);

                    let weight_sum = (drop[N] + drop[S]) + (drop[W] + drop[E]);
                    if weight_sum <= 0.0 {
                        continue;
                    }
                    let mut min_drop = f64::INFINITY;
                    for &v in &drop {
                        if v > 0.0 && v < min_drop {
                            min_drop = v;
                        }
                    }
                    // Cap: at most nu of the standing water, and no more
                    // than half the tightest head difference.
                    let transfer = (nu * d).min(0.5 * min_drop);
                    if transfer <= 0.0 {
                        continue;
                    }
                    for dir in 0..4 {
                        if drop[dir] > 0.0 {
                            f[dir] = transfer * (drop[dir] / weight_sum);
                        }
                    }
                }
            }

            // Pass 2: apply aggregated flows plus rain.
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    if !inside[i] {
                        next[i] = 0.0;
                        continue;
                    }
                    let f = &flows[i];
                    let out = (f[N] + f[S]) + (f[W] + f[E]);
                    let in_n = if r > 0 { flows[i - cols][S] } else { 0.0 };
                    let in_s = if r + 1 < rows { flows[i + cols][N] } else { 0.0 };
                    let in_w = if c > 0 { flows[i - 1][E] } else { 0.0 };
                    let in_e = if c + 1 < cols { flows[i + 1][W] } else { 0.0 };
                    let new_depth = ((depth[i] - out) + rain_per_inner) + ((in_n + in_s) + (in_w + in_e));
                    if new_depth < 0.0 {
                        return Err(SimError::Unstable { inner_step });
                    }
                    next[i] = new_depth;
                }
            }
            std::mem::swap(&mut depth, &mut next);

            total_inflow += rain_per_inner * inside_count * CELL_AREA_M2;
            if cfg.boundary == Boundary::Open {
                for r in 0..rows {
                    for c in 0..cols {
                        let i = r * cols + c;
                        if !inside[i] {
                            continue;
                        }
                        let f = &flows[i];
                        if r == 0 {
                            total_outflow += f[N];
                        }
                        if r + 1 == rows {
                            total_outflow += f[S];
                        }
                        if c == 0 {
                            total_outflow += f[W];
                        }
                        if c + 1 == cols {
                            total_outflow += f[E];
                        }
                    }
                }
            }
        }
        frames.push(Raster::new(rows, cols, depth.clone(), Units::Meters)?);
    }

    Ok(SimResult {
        frames,
        total_inflow,
        total_outflow,
    })
}

/// Manifest describing one simulated dataset directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dem: String,
    /// Event name -> ordered frame paths, relative to the manifest.
    pub events: BTreeMap<String, Vec<String>>,
    pub config: SimConfig,
    /// SHA-256 of the serialized config, hex.
    pub config_hash: String,
}

pub fn config_hash(cfg: &SimConfig) -> Result<String, SimError> {
    let json = serde_json::to_string(cfg).map_err(|e| SimError::Manifest(e.to_string()))?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// Simulate every event in the catalogue, writing frames and `dem.rst`
/// under `out_dir/<dataset>/...` plus a `manifest.json`.
pub fn run_dataset(
    dem: &Raster,
    mask: &CatchmentMask,
    catalogue: &[RainEvent],
    cfg: &SimConfig,
    out_root: &Path,
    dataset: &str,
) -> Result<DatasetManifest, SimError> {
    let dataset_dir = out_root.join(dataset);
    std::fs::create_dir_all(&dataset_dir)?;
    write_raster(&dataset_dir.join("dem.rst"), dem)?;

    let mut events = BTreeMap::new();
    for event in catalogue {
        let result = simulate(dem, mask, event, cfg).map_err(|e| SimError::Event {
            event: event.name().to_string(),
            source: Box::new(e),
        })?;
        let mut paths = Vec::with_capacity(result.frames.len());
        for (idx, frame) in result.frames.iter().enumerate() {
            let path = frame_path(out_root, dataset, event.name(), idx + 1);
            write_raster(&path, frame)?;
            paths.push(format!("{}/wd_t{}.rst", event.name(), idx + 1));
        }
        events.insert(event.name().to_string(), paths);
    }

    let manifest = DatasetManifest {
        dem: "dem.rst".to_string(),
        events,
        config: *cfg,
        config_hash: config_hash(cfg)?,
    };
    let json =
        serde_json::to_string_pretty(&manifest).map_err(|e| SimError::Manifest(e.to_string()))?;
    std::fs::write(dataset_dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

pub fn load_manifest(dataset_dir: &Path) -> Result<DatasetManifest, SimError> {
    let text = std::fs::read_to_string(dataset_dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| SimError::Manifest(e.to_string()))
}

/// Total water volume over inside cells, m³.
pub fn water_volume(frame: &Raster, mask: &CatchmentMask) -> f64 {
    frame
        .cells()
        .iter()
        .zip(mask.inside())
        .filter(|(_, &inside)| inside)
        .map(|(&d, _)| d * CELL_AREA_M2)
        .sum()
}
