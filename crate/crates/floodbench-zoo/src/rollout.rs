//! Autoregressive rollout: chained one-step predictions whose input stacks
//! mirror the feature pipeline channel for channel, with predicted depths
//! replacing observed frames and the depth clamped non-negative between
//! steps.

use std::collections::BTreeMap;

use crate::error::ZooError;
use crate::model::Model;
use floodbench_core::features::Sample;
use floodbench_core::rainfall::RainEvent;
use floodbench_core::{Raster, Units};
use floodbench_nn::{Tape, Var};

/// A model's forecast for one anchor: the depth change over the horizon and
/// the depth it implies, `clamp(W(t) + delta, >= 0)`.
pub struct Prediction {
    pub delta: Raster,
    pub depth: Raster,
}

/// Static per-tile channels reused by every chain step.
pub(crate) struct ChainStatics {
    pub dem: Var,
    pub ddem: Vec<Var>,
    pub rows: usize,
    pub cols: usize,
}

impl ChainStatics {
    /// Lift the terrain channels of an assembled sample onto the tape.
    /// `layout` must describe the stack the sample was assembled with.
    pub(crate) fn from_sample(
        tape: &mut Tape,
        sample: &Sample,
        dem_idx: usize,
        ddem: std::ops::Range<usize>,
    ) -> Result<ChainStatics, ZooError> {
        let rows = sample.input.rows();
        let cols = sample.input.cols();
        let lift = |tape: &mut Tape, idx: usize| -> Result<Var, ZooError> {
            Ok(tape.constant(&[1, rows, cols], sample.input.channel(idx).cells().to_vec())?)
        };
        let dem = lift(tape, dem_idx)?;
        let mut ddem_vars = Vec::with_capacity(ddem.len());
        for idx in ddem {
            ddem_vars.push(lift(tape, idx)?);
        }
        Ok(ChainStatics {
            dem,
            ddem: ddem_vars,
            rows,
            cols,
        })
    }
}

/// Build the model's full input stack for the window ending at 1-based step
/// `t_last`, in exactly the channel order of the feature pipeline:
/// DEM, ΔD, rain for steps `t_last+2−T ..= t_last+H`, the T depth frames,
/// and their T−1 differences.
pub(crate) fn chain_stack(
    tape: &mut Tape,
    model: &Model,
    statics: &ChainStatics,
    rain_cache: &mut BTreeMap<usize, Var>,
    event: &RainEvent,
    window: &[Var],
    t_last: usize,
) -> Result<Var, ZooError> {
    let spec = model.spec();
    let layout = model.layout();
    let t_steps = spec.t_steps;
    if window.len() != t_steps {
        return Err(ZooError::Config(format!(
            "rollout window holds {} frames, model expects {t_steps}",
            window.len()
        )));
    }
    if t_last < t_steps {
        return Err(ZooError::Config(format!(
            "window ending at step {t_last} needs {t_steps} observed frames"
        )));
    }
    let (rows, cols) = (statics.rows, statics.cols);
    let mut parts = Vec::with_capacity(layout.total);
    parts.push(statics.dem);
    parts.extend_from_slice(&statics.ddem);
    for step in (t_last + 2 - t_steps)..=(t_last + spec.horizon) {
        let var = match rain_cache.get(&step) {
            Some(&v) => v,
            None => {
                let v = tape.constant(
                    &[1, rows, cols],
                    vec![event.intensity_for_step(step); rows * cols],
                )?;
                rain_cache.insert(step, v);
                v
            }
        };
        parts.push(var);
    }
    parts.extend_from_slice(window);
    if !layout.delta_wd.is_empty() {
        for pair in window.windows(2) {
            parts.push(tape.sub(pair[1], pair[0])?);
        }
    }
    Ok(tape.concat_channels(&parts)?)
}

/// Roll a one-step model forward `steps` times from the observed window of
/// `sample` (assembled with the model's own T and horizon 1).
pub fn rollout(
    model: &Model,
    sample: &Sample,
    event: &RainEvent,
    steps: usize,
) -> Result<Prediction, ZooError> {
    if model.spec().horizon != 1 {
        return Err(ZooError::Config(
            "rollout chains one-step models; this model predicts a longer horizon directly".into(),
        ));
    }
    if steps == 0 {
        return Err(ZooError::Config("rollout needs at least one step".into()));
    }
    let layout = model.layout();
    if sample.input.len() != layout.total {
        return Err(ZooError::Config(format!(
            "sample has {} channels, the model's one-step stack has {}",
            sample.input.len(),
            layout.total
        )));
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape)?;
    let statics =
        ChainStatics::from_sample(&mut tape, sample, layout.dem.start, layout.delta_dem.clone())?;
    let mut window: Vec<Var> = Vec::with_capacity(model.spec().t_steps);
    for idx in layout.wd.clone() {
        window.push(tape.constant(
            &[1, statics.rows, statics.cols],
            sample.input.channel(idx).cells().to_vec(),
        )?);
    }
    let w_start = *window.last().expect("t_steps >= 1");
    let t0 = sample.anchor.2;
    let mut rain_cache = BTreeMap::new();
    for k in 1..=steps {
        let x = chain_stack(
            &mut tape,
            model,
            &statics,
            &mut rain_cache,
            event,
            &window,
            t0 + k - 1,
        )?;
        let delta = model.forward_delta(&mut tape, &bound, x)?;
        let raw = tape.add(*window.last().unwrap(), delta)?;
        let clamped = tape.relu(raw)?;
        window.remove(0);
        window.push(clamped);
    }
    let w_final = *window.last().unwrap();
    let total_delta = tape.sub(w_final, w_start)?;
    Ok(Prediction {
        delta: Raster::new(
            statics.rows,
            statics.cols,
            tape.values(total_delta).to_vec(),
            Units::Meters,
        )?,
        depth: Raster::new(
            statics.rows,
            statics.cols,
            tape.values(w_final).to_vec(),
            Units::Meters,
        )?,
    })
}

/// Single-shot prediction over the model's full horizon.
pub fn predict_direct(model: &Model, sample: &Sample) -> Result<Prediction, ZooError> {
    let layout = model.layout();
    if sample.input.len() != layout.total {
        return Err(ZooError::Config(format!(
            "sample has {} channels, the model's stack has {}",
            sample.input.len(),
            layout.total
        )));
    }
    let rows = sample.input.rows();
    let cols = sample.input.cols();
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape)?;
    let x = tape.leaf(&[layout.total, rows, cols], sample.input.to_flat(), false)?;
    let delta = model.forward_delta(&mut tape, &bound, x)?;
    let w_t = tape.slice_channels(x, layout.wd.end - 1, 1)?;
    let raw = tape.add(w_t, delta)?;
    let depth = tape.relu(raw)?;
    Ok(Prediction {
        delta: Raster::new(rows, cols, tape.values(delta).to_vec(), Units::Meters)?,
        depth: Raster::new(rows, cols, tape.values(depth).to_vec(), Units::Meters)?,
    })
}
