//! Depth-bucketed evaluation.
//!
//! Every model is scored the same way: predict the depth `horizon` steps
//! past each valid anchor, then normalize the absolute error per cell by
//! the spread of the ground truth in that cell's depth bucket,
//! `M = |y − ŷ| / σ_b`. Buckets are keyed to the TRUE depth so a model
//! cannot move cells into easier buckets, and σ_b is computed per event
//! from the pooled truths of all anchors.

use std::ops::Range;

use crate::error::ZooError;
use crate::model::Model;
use crate::rollout::{predict_direct, rollout};
use floodbench_core::features::{assemble, crop_sample};
use floodbench_core::rainfall::RainEvent;
use floodbench_core::{CatchmentMask, Raster};

/// Upper edges of the first four depth buckets, meters. The fifth bucket
/// is unbounded. Labels in centimeters: 0–10, 10–20, 20–50, 50–100, >100.
pub const BUCKET_EDGES_M: [f64; 4] = [0.10, 0.20, 0.50, 1.00];
pub const BUCKET_COUNT: usize = 5;
pub const BUCKET_LABELS: [&str; BUCKET_COUNT] =
    ["0-10 cm", "10-20 cm", "20-50 cm", "50-100 cm", ">100 cm"];

/// 0-based bucket index for a true depth in meters. Buckets are half-open
/// on the right: a depth of exactly 0.10 m falls in the 10–20 cm bucket.
pub fn bucket_of(depth_m: f64) -> usize {
    for (i, &edge) in BUCKET_EDGES_M.iter().enumerate() {
        if depth_m < edge {
            return i;
        }
    }
    BUCKET_COUNT - 1
}

/// Population standard deviation (the N divisor, not N−1).
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    var.sqrt()
}

/// Scores for one (event, bucket) cell population.
#[derive(Debug, Clone)]
pub struct BucketStats {
    /// Truth cells that fell in the bucket, degenerate or not.
    pub count: usize,
    /// Population std of the truths; 0 when empty.
    pub sigma: f64,
    /// Too few cells (< 2) or zero spread: no M values can be formed.
    pub degenerate: bool,
    /// One M value per cell; empty when degenerate.
    pub m_values: Vec<f64>,
}

/// Normalize one bucket's (truth, prediction) pairs into M values.
pub fn bucket_metric(truths: &[f64], preds: &[f64]) -> Result<BucketStats, ZooError> {
    if truths.len() != preds.len() {
        return Err(ZooError::Eval(format!(
            "{} truths but {} predictions in one bucket",
            truths.len(),
            preds.len()
        )));
    }
    let count = truths.len();
    let sigma = population_std(truths);
    if count < 2 || sigma == 0.0 {
        return Ok(BucketStats {
            count,
            sigma,
            degenerate: true,
            m_values: Vec::new(),
        });
    }
    let m_values = truths
        .iter()
        .zip(preds)
        .map(|(&y, &yh)| (y - yh).abs() / sigma)
        .collect();
    Ok(BucketStats {
        count,
        sigma,
        degenerate: false,
        m_values,
    })
}

/// One model's scores on one event: five buckets, fixed order.
#[derive(Debug, Clone)]
pub struct EventReport {
    pub event: String,
    pub buckets: Vec<BucketStats>,
}

/// Concatenate M values per bucket across events (the cross-event pooling
/// used for reporting).
pub fn pool_m_values(reports: &[EventReport]) -> Vec<Vec<f64>> {
    let mut pooled = vec![Vec::new(); BUCKET_COUNT];
    for report in reports {
        for (b, stats) in report.buckets.iter().enumerate() {
            pooled[b].extend_from_slice(&stats.m_values);
        }
    }
    pooled
}

/// Split `0..total` into tile windows with 50% overlap. Each entry is the
/// tile's start offset plus the half-open range of rows/cols whose
/// predictions the tile contributes: interior keep boundaries sit at the
/// midpoints of the overlaps, so stitched cells always come from the tile
/// in which they are most central. The last tile is pulled back so it ends
/// exactly at `total`.
pub fn tile_windows(total: usize, tile: usize) -> Result<Vec<(usize, Range<usize>)>, ZooError> {
    if tile == 0 || tile > total {
        return Err(ZooError::Eval(format!(
            "tile size {tile} does not fit a span of {total}"
        )));
    }
    if tile == 1 && total > 1 {
        return Err(ZooError::Eval("tile size 1 cannot overlap".into()));
    }
    let mut starts = Vec::new();
    let mut s = 0;
    loop {
        if s + tile >= total {
            starts.push(total - tile);
            break;
        }
        starts.push(s);
        s += tile / 2;
    }
    starts.dedup();
    let last = starts.len() - 1;
    let windows = starts
        .iter()
        .enumerate()
        .map(|(i, &st)| {
            let lo = if i == 0 { 0 } else { (st + starts[i - 1] + tile) / 2 };
            let hi = if i == last {
                total
            } else {
                (starts[i + 1] + st + tile) / 2
            };
            (st, lo..hi)
        })
        .collect();
    Ok(windows)
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    /// Forecast lead in 5-minute steps; one-step models are rolled out
    /// this many times, full-horizon models predict it in one shot.
    pub horizon: usize,
    /// Side length of the square tiles fed to the model.
    pub tile: usize,
}

/// Score `model` on every valid anchor of one simulated event.
///
/// Anchors run over every 1-based step `t` with a full input window behind
/// it and a truth frame `horizon` steps ahead, i.e.
/// `t ∈ t_steps ..= frames.len() − horizon`. Frames larger than the tile
/// are predicted per overlapping tile and stitched from each tile's
/// central region.
pub fn evaluate_event(
    model: &Model,
    dem: &Raster,
    mask: &CatchmentMask,
    frames: &[Raster],
    event: &RainEvent,
    cfg: &EvalConfig,
) -> Result<EventReport, ZooError> {
    if cfg.horizon == 0 {
        return Err(ZooError::Eval("horizon must be positive".into()));
    }
    let model_h = model.spec().horizon;
    let direct = model_h == cfg.horizon;
    if !direct && model_h != 1 {
        return Err(ZooError::Eval(format!(
            "model horizon {model_h} fits neither direct prediction at {} nor one-step rollout",
            cfg.horizon
        )));
    }
    let t_steps = model.spec().t_steps;
    let n = frames.len();
    if t_steps + cfg.horizon > n {
        return Err(ZooError::Eval(format!(
            "event {} has {n} frames, too short for a {t_steps}-frame window plus {}-step lead",
            event.name(),
            cfg.horizon
        )));
    }
    let rows = dem.rows();
    let cols = dem.cols();
    let row_windows = tile_windows(rows, cfg.tile)?;
    let col_windows = tile_windows(cols, cfg.tile)?;
    let fspec = model.spec().feature_spec(cfg.tile);

    let mut truths: Vec<Vec<f64>> = vec![Vec::new(); BUCKET_COUNT];
    let mut preds: Vec<Vec<f64>> = vec![Vec::new(); BUCKET_COUNT];
    let mut pred_depth = vec![0.0; rows * cols];
    for t in t_steps..=(n - cfg.horizon) {
        let full = assemble(dem, mask, frames, event, t, &fspec)?;
        for (r0, r_keep) in &row_windows {
            for (c0, c_keep) in &col_windows {
                let sample = crop_sample(&full, *r0, *c0, cfg.tile)?;
                let p = if direct {
                    predict_direct(model, &sample)?
                } else {
                    rollout(model, &sample, event, cfg.horizon)?
                };
                for r in r_keep.clone() {
                    for c in c_keep.clone() {
                        pred_depth[r * cols + c] = p.depth.get(r - r0, c - c0);
                    }
                }
            }
        }
        let truth = &frames[t + cfg.horizon - 1];
        for (idx, &inside) in mask.inside().iter().enumerate() {
            if !inside {
                continue;
            }
            let y = truth.cells()[idx];
            let b = bucket_of(y);
            truths[b].push(y);
            preds[b].push(pred_depth[idx]);
        }
    }

    let mut buckets = Vec::with_capacity(BUCKET_COUNT);
    for b in 0..BUCKET_COUNT {
        let stats = bucket_metric(&truths[b], &preds[b])?;
        if stats.degenerate && stats.count > 0 {
            log::warn!(
                "event {}, bucket {} ({}): {} cells with sigma {}; excluded from pooling",
                event.name(),
                b + 1,
                BUCKET_LABELS[b],
                stats.count,
                stats.sigma
            );
        }
        buckets.push(stats);
    }
    Ok(EventReport {
        event: event.name().to_string(),
        buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use crate::spec::{Family, ModelSpec};
    use floodbench_core::rainfall::EventKind;
    use floodbench_core::raster::mask_from_dem;
    use floodbench_core::Units;

    #[test]
    fn bucket_edges_are_half_open_and_keyed_in_meters() {
        assert_eq!(bucket_of(0.0), 0);
        assert_eq!(bucket_of(0.05), 0);
        assert_eq!(bucket_of(0.10), 1);
        assert_eq!(bucket_of(0.15), 1);
        assert_eq!(bucket_of(0.20), 2);
        assert_eq!(bucket_of(0.49), 2);
        assert_eq!(bucket_of(0.50), 3);
        assert_eq!(bucket_of(1.00), 4);
        assert_eq!(bucket_of(3.25), 4);
    }

    #[test]
    fn two_point_bucket_normalizes_to_one() {
        let stats = bucket_metric(&[0.0, 0.08], &[0.04, 0.04]).unwrap();
        assert_eq!(stats.sigma, 0.04);
        assert_eq!(stats.m_values, vec![1.0, 1.0]);
        assert!(!stats.degenerate);
    }

    #[test]
    fn degenerate_buckets_keep_their_counts() {
        let single = bucket_metric(&[0.3], &[0.1]).unwrap();
        assert!(single.degenerate);
        assert_eq!(single.count, 1);
        assert!(single.m_values.is_empty());
        let flat = bucket_metric(&[0.3, 0.3, 0.3], &[0.1, 0.2, 0.3]).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.count, 3);
        let empty = bucket_metric(&[], &[]).unwrap();
        assert!(empty.degenerate);
        assert_eq!(empty.count, 0);
    }

    #[test]
    fn metric_is_invariant_under_power_of_two_scaling() {
        let truths = [0.11, 0.14, 0.19, 0.125, 0.16];
        let preds = [0.10, 0.15, 0.17, 0.20, 0.11];
        let base = bucket_metric(&truths, &preds).unwrap();
        let scaled_t: Vec<f64> = truths.iter().map(|v| v * 2.0).collect();
        let scaled_p: Vec<f64> = preds.iter().map(|v| v * 2.0).collect();
        let scaled = bucket_metric(&scaled_t, &scaled_p).unwrap();
        // ×2 is exact in binary floating point, so M must match bitwise.
        assert_eq!(base.m_values, scaled.m_values);
        assert_eq!(scaled.sigma, 2.0 * base.sigma);
    }

    #[test]
    fn bucket_mean_predictor_scores_at_most_one() {
        let truths = [0.21, 0.27, 0.33, 0.48, 0.22, 0.40, 0.26];
        let mean = truths.iter().sum::<f64>() / truths.len() as f64;
        let preds = vec![mean; truths.len()];
        let stats = bucket_metric(&truths, &preds).unwrap();
        let mean_m = stats.m_values.iter().sum::<f64>() / stats.m_values.len() as f64;
        assert!(
            mean_m <= 1.0 + 1e-12,
            "mean-predictor mean M was {mean_m}"
        );
    }

    #[test]
    fn tile_windows_cover_the_span_once() {
        assert_eq!(tile_windows(48, 32).unwrap(), vec![(0, 0..24), (16, 24..48)]);
        assert_eq!(
            tile_windows(64, 32).unwrap(),
            vec![(0, 0..24), (16, 24..40), (32, 40..64)]
        );
        assert_eq!(tile_windows(32, 32).unwrap(), vec![(0, 0..32)]);
        assert_eq!(tile_windows(40, 32).unwrap(), vec![(0, 0..20), (8, 20..40)]);
        assert!(tile_windows(16, 32).is_err());

        for (total, tile) in [(48, 32), (100, 32), (33, 32), (17, 8), (95, 24)] {
            let windows = tile_windows(total, tile).unwrap();
            let mut expected_next = 0;
            for (start, keep) in &windows {
                assert_eq!(keep.start, expected_next, "gap at {total}/{tile}");
                assert!(keep.start >= *start && keep.end <= start + tile);
                expected_next = keep.end;
            }
            assert_eq!(expected_next, total);
        }
    }

    fn toy_dem(rows: usize, cols: usize) -> Raster {
        Raster::from_fn(rows, cols, Units::Meters, |r, c| {
            2.0 + 0.03 * (r as f64) + 0.02 * (c as f64)
        })
        .unwrap()
    }

    fn quiet_event() -> RainEvent {
        RainEvent::new("quiet".into(), None, None, vec![0.0; 6], EventKind::Short).unwrap()
    }

    /// Depths that grow linearly in time with a spatial gradient wide
    /// enough to populate every bucket.
    fn growing_frames(rows: usize, cols: usize, n: usize) -> Vec<Raster> {
        (1..=n)
            .map(|s| {
                Raster::from_fn(rows, cols, Units::Meters, |r, c| {
                    let base = 1.5 * (r * cols + c) as f64 / ((rows * cols) as f64);
                    base + 0.01 * s as f64
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn perfect_prediction_scores_zero_everywhere() {
        // Static frames make no_change a perfect predictor.
        let dem = toy_dem(8, 8);
        let mask = mask_from_dem(&dem).unwrap();
        let frame = growing_frames(8, 8, 1).pop().unwrap();
        let frames: Vec<Raster> = vec![frame; 6];
        let model = Model::init(ModelSpec::new(Family::NoChange, 2, 1, 0)).unwrap();
        let report = evaluate_event(
            &model,
            &dem,
            &mask,
            &frames,
            &quiet_event(),
            &EvalConfig { horizon: 2, tile: 8 },
        )
        .unwrap();
        let mut scored = 0;
        for stats in &report.buckets {
            if !stats.degenerate {
                scored += stats.m_values.len();
                assert!(stats.m_values.iter().all(|&m| m == 0.0));
            }
        }
        assert!(scored > 0, "no bucket produced scores");
    }

    #[test]
    fn evaluation_matches_a_brute_force_oracle() {
        // no_change on evolving frames, 12x12 raster with 8-cell tiles so
        // stitching is exercised; the oracle ignores tiling entirely.
        let rows = 12;
        let cols = 12;
        let dem = toy_dem(rows, cols);
        let mask = mask_from_dem(&dem).unwrap();
        let frames = growing_frames(rows, cols, 7);
        let event = quiet_event();
        let t_steps = 2;
        let horizon = 2;
        let model = Model::init(ModelSpec::new(Family::NoChange, t_steps, 1, 0)).unwrap();
        let report = evaluate_event(
            &model,
            &dem,
            &mask,
            &frames,
            &event,
            &EvalConfig { horizon, tile: 8 },
        )
        .unwrap();

        let mut oracle_truths: Vec<Vec<f64>> = vec![Vec::new(); BUCKET_COUNT];
        let mut oracle_preds: Vec<Vec<f64>> = vec![Vec::new(); BUCKET_COUNT];
        for t in t_steps..=(frames.len() - horizon) {
            let truth = &frames[t + horizon - 1];
            let current = &frames[t - 1];
            for idx in 0..rows * cols {
                if !mask.inside()[idx] {
                    continue;
                }
                let y = truth.cells()[idx];
                let b = bucket_of(y);
                oracle_truths[b].push(y);
                oracle_preds[b].push(current.cells()[idx]);
            }
        }
        let mut total = 0;
        for b in 0..BUCKET_COUNT {
            let expected = bucket_metric(&oracle_truths[b], &oracle_preds[b]).unwrap();
            let got = &report.buckets[b];
            assert_eq!(got.count, expected.count, "bucket {b} count");
            assert_eq!(got.sigma, expected.sigma, "bucket {b} sigma");
            assert_eq!(got.m_values, expected.m_values, "bucket {b} values");
            total += got.count;
        }
        // Accounting: every inside cell of every anchor lands in exactly
        // one bucket.
        let anchors = frames.len() - horizon - t_steps + 1;
        assert_eq!(total, mask.inside_count() * anchors);
    }

    #[test]
    fn pooling_concatenates_across_events() {
        let a = EventReport {
            event: "a".into(),
            buckets: (0..BUCKET_COUNT)
                .map(|b| BucketStats {
                    count: 2,
                    sigma: 1.0,
                    degenerate: false,
                    m_values: vec![b as f64, b as f64 + 0.5],
                })
                .collect(),
        };
        let mut b = a.clone();
        b.event = "b".into();
        b.buckets[3] = BucketStats {
            count: 1,
            sigma: 0.0,
            degenerate: true,
            m_values: Vec::new(),
        };
        let pooled = pool_m_values(&[a, b]);
        assert_eq!(pooled[0], vec![0.0, 0.5, 0.0, 0.5]);
        assert_eq!(pooled[3], vec![3.0, 3.5]);
        assert_eq!(pooled[4].len(), 4);
    }

    #[test]
    fn mismatched_horizons_are_rejected() {
        let dem = toy_dem(8, 8);
        let mask = mask_from_dem(&dem).unwrap();
        let frames = growing_frames(8, 8, 20);
        let model =
            Model::init(ModelSpec::new(Family::Fcn, 2, 6, 0).with_widths(vec![2, 2])).unwrap();
        let err = evaluate_event(
            &model,
            &dem,
            &mask,
            &frames,
            &quiet_event(),
            &EvalConfig {
                horizon: 12,
                tile: 8,
            },
        );
        assert!(err.is_err());
    }
}
