//! Patch-based training for the parametric models.
//!
//! All three methods minimize the weighted MAE of the predicted depth
//! change against the simulator's: `one_ts` on single-step targets,
//! `direct_12ts` on full-horizon targets in one shot, and
//! `iterative_12ts` by chaining the one-step model through the horizon on
//! the tape and scoring the cumulative change (with gradients clipped to
//! unit global norm, since they flow through the whole chain).
//!
//! Sampling is replayable: every random draw comes from a stream keyed by
//! the training seed, the epoch, and the event, so a rerun with the same
//! configuration reproduces the same batches, losses, and weights bit for
//! bit. The returned model carries the weights of its best validation
//! epoch, not its last.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::ZooError;
use crate::model::Model;
use crate::rollout::{chain_stack, ChainStatics};
use crate::spec::{Family, TrainConfig, TrainMethod};
use floodbench_core::features::{assemble, channel_layout, sample_patches, FeatureSpec, Sample};
use floodbench_core::rainfall::RainEvent;
use floodbench_core::seed::{derive_seed, stream_rng};
use floodbench_core::{CatchmentMask, Raster};
use floodbench_nn::{clip_global_norm, AdamState, Tape, Var};

/// Gradient clip for the chained iterative method.
const ITERATIVE_CLIP_NORM: f64 = 1.0;
/// Validation anchors sampled per event (fewer if the event is shorter).
const VAL_ANCHORS_PER_EVENT: usize = 4;

/// One simulated event: the hyetograph and its depth frames.
pub struct EventData {
    pub event: RainEvent,
    pub frames: Vec<Raster>,
}

/// Everything training needs: terrain, catchment, and simulated events.
pub struct TrainDataset {
    pub dem: Raster,
    pub mask: CatchmentMask,
    pub train: Vec<EventData>,
    pub validation: Vec<EventData>,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch whose validation loss the returned weights carry.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// `epoch,train_loss,val_loss` rows; floats in shortest round-trip form.
pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<(), ZooError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in &history.records {
        writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss).expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn horizon_for(method: TrainMethod, cfg: &TrainConfig) -> usize {
    match method {
        TrainMethod::OneTs => 1,
        TrainMethod::Direct12Ts | TrainMethod::Iterative12Ts => cfg.horizon,
    }
}

fn check_setup(model: &Model, data: &TrainDataset, cfg: &TrainConfig) -> Result<(), ZooError> {
    cfg.validate()?;
    let spec = model.spec();
    if !spec.family.is_parametric() {
        return Err(ZooError::Config(format!(
            "{} has no trainable parameters",
            spec.family.tag()
        )));
    }
    if spec.family.is_autoregressive() && cfg.method != TrainMethod::OneTs {
        return Err(ZooError::Config(
            "autoregressive baselines train on one-step targets only".into(),
        ));
    }
    let wanted = match cfg.method {
        TrainMethod::OneTs | TrainMethod::Iterative12Ts => 1,
        TrainMethod::Direct12Ts => cfg.horizon,
    };
    if spec.horizon != wanted {
        return Err(ZooError::Config(format!(
            "{} needs a model with horizon {wanted}, got {}",
            cfg.method.tag(),
            spec.horizon
        )));
    }
    if matches!(spec.family, Family::Autoencoder | Family::Unet) && cfg.patch_size % 8 != 0 {
        return Err(ZooError::Config(format!(
            "{} downsamples three times; patch_size {} is not divisible by 8",
            spec.family.tag(),
            cfg.patch_size
        )));
    }
    if cfg.patch_size > data.dem.rows() || cfg.patch_size > data.dem.cols() {
        return Err(ZooError::Config(format!(
            "patch_size {} exceeds the {}x{} terrain",
            cfg.patch_size,
            data.dem.rows(),
            data.dem.cols()
        )));
    }
    if data.train.is_empty() {
        return Err(ZooError::Config("no training events".into()));
    }
    if data.validation.is_empty() {
        return Err(ZooError::Config("no validation events".into()));
    }
    let needed = spec.t_steps + horizon_for(cfg.method, cfg);
    for ev in data.train.iter().chain(&data.validation) {
        if ev.frames.len() < needed {
            return Err(ZooError::Config(format!(
                "event {} has {} frames, fewer than the {needed} a window needs",
                ev.event.name(),
                ev.frames.len()
            )));
        }
    }
    Ok(())
}

/// Valid 1-based anchors for an event of `n` frames.
fn anchor_range(n: usize, t_steps: usize, horizon: usize) -> Vec<usize> {
    (t_steps..=n - horizon).collect()
}

/// Build the loss node for one sample under the configured method.
fn sample_loss(
    tape: &mut Tape,
    model: &Model,
    bound: &[Var],
    sample: &Sample,
    events: &BTreeMap<String, &EventData>,
    train_fspec: &FeatureSpec,
    cfg: &TrainConfig,
) -> Result<Var, ZooError> {
    let rows = sample.input.rows();
    let cols = sample.input.cols();
    let inside = sample.mask.inside();
    match cfg.method {
        TrainMethod::OneTs | TrainMethod::Direct12Ts => {
            let x = tape.leaf(
                &[sample.input.len(), rows, cols],
                sample.input.to_flat(),
                false,
            )?;
            let delta = model.forward_delta(tape, bound, x)?;
            Ok(tape.weighted_mae(
                delta,
                sample.target_delta.cells(),
                inside,
                cfg.loss_threshold_m,
                cfg.loss_factor,
            )?)
        }
        TrainMethod::Iterative12Ts => {
            // The sample was assembled with the full training horizon; the
            // chain rebuilds the model's one-step stacks from its pieces.
            let layout = channel_layout(train_fspec);
            let statics =
                ChainStatics::from_sample(tape, sample, layout.dem.start, layout.delta_dem)?;
            let mut window: Vec<Var> = Vec::with_capacity(train_fspec.t_steps);
            for idx in layout.wd {
                window.push(tape.constant(
                    &[1, rows, cols],
                    sample.input.channel(idx).cells().to_vec(),
                )?);
            }
            let w_init = *window.last().expect("t_steps >= 1");
            let data = events.get(&sample.event_name).ok_or_else(|| {
                ZooError::Config(format!("no frames stored for event {}", sample.event_name))
            })?;
            let (row0, col0, t0) = sample.anchor;
            let mut rain_cache = BTreeMap::new();
            let mut losses = Vec::new();
            for k in 1..=cfg.horizon {
                let x = chain_stack(
                    tape,
                    model,
                    &statics,
                    &mut rain_cache,
                    &data.event,
                    &window,
                    t0 + k - 1,
                )?;
                let delta = model.forward_delta(tape, bound, x)?;
                let raw = tape.add(*window.last().expect("window non-empty"), delta)?;
                let clamped = tape.relu(raw)?;
                window.remove(0);
                window.push(clamped);
                if k == cfg.horizon || cfg.supervise_intermediate {
                    let cumulative = tape.sub(clamped, w_init)?;
                    let loss = if k == cfg.horizon {
                        tape.weighted_mae(
                            cumulative,
                            sample.target_delta.cells(),
                            inside,
                            cfg.loss_threshold_m,
                            cfg.loss_factor,
                        )?
                    } else {
                        let future = data.frames[t0 + k - 1].crop(row0, col0, rows, cols)?;
                        let current = data.frames[t0 - 1].crop(row0, col0, rows, cols)?;
                        let target: Vec<f64> = future
                            .cells()
                            .iter()
                            .zip(current.cells())
                            .map(|(a, b)| a - b)
                            .collect();
                        tape.weighted_mae(
                            cumulative,
                            &target,
                            inside,
                            cfg.loss_threshold_m,
                            cfg.loss_factor,
                        )?
                    };
                    losses.push(loss);
                }
            }
            // Without a scalar-scale op the supervised losses are summed,
            // not averaged; the learning rate absorbs the fixed factor.
            let mut total = losses[0];
            for &l in &losses[1..] {
                total = tape.add(total, l)?;
            }
            Ok(total)
        }
    }
}

/// Deterministic, roughly evenly spaced subset of the valid anchors used
/// for the fixed validation set.
fn validation_anchors(anchors: &[usize]) -> Vec<usize> {
    let k = VAL_ANCHORS_PER_EVENT.min(anchors.len());
    if k == 0 {
        return Vec::new();
    }
    if k == 1 {
        return vec![anchors[anchors.len() / 2]];
    }
    let mut chosen: Vec<usize> = (0..k)
        .map(|i| anchors[i * (anchors.len() - 1) / (k - 1)])
        .collect();
    chosen.dedup();
    chosen
}

fn build_validation_set(
    data: &TrainDataset,
    fspec: &FeatureSpec,
    cfg: &TrainConfig,
    horizon: usize,
) -> Result<Vec<Sample>, ZooError> {
    let mut samples = Vec::new();
    for ev in &data.validation {
        let anchors = anchor_range(ev.frames.len(), fspec.t_steps, horizon);
        let chosen = validation_anchors(&anchors);
        let per_anchor = cfg.val_patches_per_event.div_ceil(chosen.len().max(1));
        for &t in &chosen {
            let full = assemble(&data.dem, &data.mask, &ev.frames, &ev.event, t, fspec)?;
            let seed = derive_seed(cfg.seed, &format!("val/{}/t{t}", ev.event.name()));
            let patches = sample_patches(&full, fspec, per_anchor, seed, cfg.wet_bias)?;
            samples.extend(
                patches
                    .into_iter()
                    .filter(|p| p.mask.inside_count() > 0),
            );
        }
    }
    if samples.is_empty() {
        return Err(ZooError::Config(
            "validation produced no patches with catchment cells".into(),
        ));
    }
    Ok(samples)
}

/// Mean per-sample loss without touching gradients.
fn evaluate_loss(
    model: &Model,
    samples: &[Sample],
    events: &BTreeMap<String, &EventData>,
    train_fspec: &FeatureSpec,
    cfg: &TrainConfig,
) -> Result<f64, ZooError> {
    let mut total = 0.0;
    for sample in samples {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape)?;
        let loss = sample_loss(&mut tape, model, &bound, sample, events, train_fspec, cfg)?;
        total += tape.scalar(loss)?;
    }
    Ok(total / samples.len() as f64)
}

/// Train `model` in place and return the loss history. On return the model
/// holds its best-validation weights.
pub fn train(
    model: &mut Model,
    data: &TrainDataset,
    cfg: &TrainConfig,
) -> Result<TrainHistory, ZooError> {
    check_setup(model, data, cfg)?;
    let horizon = horizon_for(cfg.method, cfg);
    let t_steps = model.spec().t_steps;
    // Samples always carry the full training horizon's channels; for the
    // one-step methods this coincides with the model's own stack.
    let train_fspec = FeatureSpec {
        t_steps,
        horizon,
        include_delta_dem: true,
        include_delta_wd: true,
        patch_size: cfg.patch_size,
    };
    let events: BTreeMap<String, &EventData> = data
        .train
        .iter()
        .chain(&data.validation)
        .map(|ev| (ev.event.name().to_string(), ev))
        .collect();
    let val_samples = build_validation_set(data, &train_fspec, cfg, horizon)?;

    let mut adam = AdamState::new(cfg.learning_rate, &model.params);
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    let mut records = Vec::with_capacity(cfg.epochs);

    // Per-event patch quotas: patches_per_epoch split as evenly as the
    // event count allows, earlier events taking the remainder.
    let n_events = data.train.len();
    let base = cfg.patches_per_epoch / n_events;
    let extra = cfg.patches_per_epoch % n_events;

    for epoch in 1..=cfg.epochs {
        if cfg.lr_drop_epoch.is_some_and(|at| epoch >= at) {
            adam.learning_rate = cfg
                .final_learning_rate
                .unwrap_or(cfg.learning_rate * 0.1);
        }
        let mut pool: Vec<Sample> = Vec::with_capacity(cfg.patches_per_epoch);
        for (ei, ev) in data.train.iter().enumerate() {
            let quota = base + usize::from(ei < extra);
            if quota == 0 {
                continue;
            }
            let anchors = anchor_range(ev.frames.len(), t_steps, horizon);
            let mut anchor_rng =
                stream_rng(cfg.seed, &format!("epoch{epoch}/anchors/{}", ev.event.name()));
            let mut per_anchor: BTreeMap<usize, usize> = BTreeMap::new();
            for _ in 0..quota {
                let t = anchors[anchor_rng.gen_range(0..anchors.len())];
                *per_anchor.entry(t).or_insert(0) += 1;
            }
            for (t, n_t) in per_anchor {
                let full = assemble(&data.dem, &data.mask, &ev.frames, &ev.event, t, &train_fspec)?;
                let seed = derive_seed(
                    cfg.seed,
                    &format!("epoch{epoch}/patches/{}/t{t}", ev.event.name()),
                );
                let patches = sample_patches(&full, &train_fspec, n_t, seed, cfg.wet_bias)?;
                pool.extend(patches.into_iter().filter(|p| p.mask.inside_count() > 0));
            }
        }
        if pool.is_empty() {
            return Err(ZooError::Config(
                "epoch produced no patches with catchment cells".into(),
            ));
        }
        let mut shuffle_rng = stream_rng(cfg.seed, &format!("epoch{epoch}/shuffle"));
        pool.shuffle(&mut shuffle_rng);

        let mut epoch_loss_sum = 0.0;
        for batch in pool.chunks(cfg.batch_size) {
            let mut grad_acc: Vec<Vec<f64>> = (0..model.params.len())
                .map(|i| vec![0.0; model.params.get(i).values.len()])
                .collect();
            for sample in batch {
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape)?;
                let loss =
                    sample_loss(&mut tape, model, &bound, sample, &events, &train_fspec, cfg)?;
                epoch_loss_sum += tape.scalar(loss)?;
                tape.backward(loss)?;
                let grads = model.params.gradients(&tape, &bound)?;
                for (acc, g) in grad_acc.iter_mut().zip(&grads) {
                    for (a, gi) in acc.iter_mut().zip(g) {
                        *a += gi;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for acc in &mut grad_acc {
                for a in acc.iter_mut() {
                    *a *= scale;
                }
            }
            if cfg.method == TrainMethod::Iterative12Ts {
                clip_global_norm(&mut grad_acc, ITERATIVE_CLIP_NORM);
            }
            adam.apply(&mut model.params, &grad_acc)?;
        }
        let train_loss = epoch_loss_sum / pool.len() as f64;
        let val_loss = evaluate_loss(model, &val_samples, &events, &train_fspec, cfg)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = best.as_ref().map_or(true, |(_, b, _)| val_loss < *b);
        if improved {
            let snapshot = (0..model.params.len())
                .map(|i| model.params.get(i).values.clone())
                .collect();
            best = Some((epoch, val_loss, snapshot));
        }
    }

    let (best_epoch, best_val_loss, snapshot) = best.expect("epochs >= 1");
    for (i, values) in snapshot.into_iter().enumerate() {
        model.params.get_mut(i).values = values;
    }
    Ok(TrainHistory {
        records,
        best_epoch,
        best_val_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::ModelSpec;
    use floodbench_core::rainfall::EventKind;
    use floodbench_core::raster::mask_from_dem;
    use floodbench_core::Units;

    fn toy_dem(rows: usize, cols: usize) -> Raster {
        Raster::from_fn(rows, cols, Units::Meters, |r, c| {
            3.0 + 0.05 * (r as f64) + 0.04 * (c as f64)
        })
        .unwrap()
    }

    fn quiet_event(name: &str) -> RainEvent {
        RainEvent::new(name.into(), None, None, vec![0.0; 4], EventKind::Short).unwrap()
    }

    /// Frames obeying W(s+1) = factor * W(s) from a spatially varied start.
    fn decaying_event(name: &str, rows: usize, cols: usize, n: usize, factor: f64, phase: f64) -> EventData {
        let start = Raster::from_fn(rows, cols, Units::Meters, |r, c| {
            0.3 + 0.2 * ((r as f64 * 0.9 + phase).sin().abs() + (c as f64 * 0.7).cos().abs())
        })
        .unwrap();
        let mut frames = vec![start];
        for _ in 1..n {
            let prev = frames.last().unwrap();
            let next = Raster::new(
                rows,
                cols,
                prev.cells().iter().map(|&v| v * factor).collect(),
                Units::Meters,
            )
            .unwrap();
            frames.push(next);
        }
        EventData {
            event: quiet_event(name),
            frames,
        }
    }

    fn toy_dataset(rows: usize, cols: usize, n_frames: usize, factor: f64) -> TrainDataset {
        let dem = toy_dem(rows, cols);
        let mask = mask_from_dem(&dem).unwrap();
        TrainDataset {
            dem,
            mask,
            train: vec![
                decaying_event("ev_a", rows, cols, n_frames, factor, 0.0),
                decaying_event("ev_b", rows, cols, n_frames, factor, 2.0),
            ],
            validation: vec![decaying_event("ev_v", rows, cols, n_frames, factor, 4.0)],
        }
    }

    fn toy_cfg(method: TrainMethod, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::new(method, seed);
        cfg.epochs = 8;
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 4;
        cfg.patches_per_epoch = 24;
        cfg.val_patches_per_event = 8;
        cfg.patch_size = 8;
        cfg.horizon = 3;
        cfg.wet_bias = 0.5;
        cfg
    }

    #[test]
    fn one_ts_training_reduces_the_loss() {
        let data = toy_dataset(12, 12, 6, 0.72);
        let cfg = toy_cfg(TrainMethod::OneTs, 42);
        let mut model =
            Model::init(ModelSpec::new(Family::Fcn, 2, 1, 7).with_widths(vec![4, 4])).unwrap();
        let history = train(&mut model, &data, &cfg).unwrap();
        assert_eq!(history.records.len(), cfg.epochs);
        let first = history.records[0].val_loss;
        assert!(
            history.best_val_loss <= 0.8 * first,
            "validation loss fell only from {first} to {}",
            history.best_val_loss
        );
        assert_eq!(
            history.best_val_loss,
            history.records[history.best_epoch - 1].val_loss
        );
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let data = toy_dataset(10, 10, 6, 0.8);
        let mut cfg = toy_cfg(TrainMethod::OneTs, 9);
        cfg.epochs = 3;
        let spec = ModelSpec::new(Family::Fcn, 2, 1, 3).with_widths(vec![3, 3]);
        let mut a = Model::init(spec.clone()).unwrap();
        let mut b = Model::init(spec).unwrap();
        let ha = train(&mut a, &data, &cfg).unwrap();
        let hb = train(&mut b, &data, &cfg).unwrap();
        for (ra, rb) in ha.records.iter().zip(&hb.records) {
            assert_eq!(ra.train_loss.to_bits(), rb.train_loss.to_bits());
            assert_eq!(ra.val_loss.to_bits(), rb.val_loss.to_bits());
        }
        for i in 0..a.params.len() {
            assert_eq!(a.params.get(i).values, b.params.get(i).values);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history_csv(&path, &ha).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss\n"));
        assert_eq!(text.lines().count(), 1 + ha.records.len());
    }

    #[test]
    fn untrainable_and_mismatched_setups_are_rejected() {
        let data = toy_dataset(10, 10, 6, 0.8);
        let cfg = toy_cfg(TrainMethod::OneTs, 1);
        let mut frozen = Model::init(ModelSpec::new(Family::NoChange, 2, 1, 0)).unwrap();
        assert!(train(&mut frozen, &data, &cfg).is_err());

        // AR models train on one-step targets only.
        let mut ar = Model::init(ModelSpec::new(Family::Ar1x1, 2, 1, 0)).unwrap();
        let direct = toy_cfg(TrainMethod::Direct12Ts, 1);
        assert!(train(&mut ar, &data, &direct).is_err());
        let iterative = toy_cfg(TrainMethod::Iterative12Ts, 1);
        assert!(train(&mut ar, &data, &iterative).is_err());

        // Direct training demands a model built for the full horizon.
        let mut one_step =
            Model::init(ModelSpec::new(Family::Fcn, 2, 1, 0).with_widths(vec![3, 3])).unwrap();
        assert!(train(&mut one_step, &data, &direct).is_err());
    }

    #[test]
    fn ar_recovers_a_scalar_recurrence() {
        // W(t+1) = 0.5 W(t): a 1x1 kernel should find weight 0.5, bias 0.
        let data = toy_dataset(10, 10, 6, 0.5);
        let mut cfg = toy_cfg(TrainMethod::OneTs, 11);
        cfg.epochs = 30;
        cfg.learning_rate = 3e-2;
        let mut model = Model::init(ModelSpec::new(Family::Ar1x1, 1, 1, 13)).unwrap();
        train(&mut model, &data, &cfg).unwrap();
        let w = model.params.by_name("ar.w").unwrap().values[0];
        let b = model.params.by_name("ar.b").unwrap().values[0];
        assert!((w - 0.5).abs() < 0.1, "kernel weight {w}");
        assert!(b.abs() < 0.1, "bias {b}");
    }

    #[test]
    fn direct_and_iterative_methods_run() {
        let data = toy_dataset(12, 12, 7, 0.8);
        let mut direct_cfg = toy_cfg(TrainMethod::Direct12Ts, 21);
        direct_cfg.epochs = 2;
        let mut direct_model =
            Model::init(ModelSpec::new(Family::Fcn, 2, 3, 5).with_widths(vec![3, 3])).unwrap();
        let dh = train(&mut direct_model, &data, &direct_cfg).unwrap();
        assert_eq!(dh.records.len(), 2);
        assert!(dh.records.iter().all(|r| r.train_loss.is_finite() && r.val_loss.is_finite()));

        for supervise in [false, true] {
            let mut iter_cfg = toy_cfg(TrainMethod::Iterative12Ts, 22);
            iter_cfg.epochs = 2;
            iter_cfg.supervise_intermediate = supervise;
            let mut iter_model =
                Model::init(ModelSpec::new(Family::Fcn, 2, 1, 6).with_widths(vec![3, 3])).unwrap();
            let ih = train(&mut iter_model, &data, &iter_cfg).unwrap();
            assert_eq!(ih.records.len(), 2);
            assert!(ih
                .records
                .iter()
                .all(|r| r.train_loss.is_finite() && r.val_loss.is_finite()));
        }
    }
}
