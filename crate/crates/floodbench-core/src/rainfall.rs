//! Synthetic hyetograph catalogue.
//!
//! Short events follow the `tr{RP}_{disc}` naming scheme: six return periods
//! (2..100 years) crossed with three block discretizations (label 1 = 5 min,
//! 2 = 10 min, 3 = 15 min) give the 18-event short catalogue. Long events
//! continue a short event past the first hour (`tr50_3c1`, `tr50_3c2`) or
//! mimic observed two-hour records (`real1_c1`, `real2_c1`).
//!
//! Intensities are stored per 5-minute simulation step in mm/h. The shapes
//! are synthetic: peak depth grows with ln(return period) and block noise
//! comes from a seeded stream, so the catalogue is reproducible but is not
//! calibrated to any regional IDF statistics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::stream_rng;
use rand::Rng;

/// Simulation output step length in minutes; rainfall series are stored at
/// this resolution no matter which block discretization generated them.
pub const STEP_MINUTES: u32 = 5;
/// A short event rains for exactly one hour = 12 simulation steps.
pub const SHORT_RAIN_STEPS: usize = 12;
/// Long events rain for at most four hours.
pub const MAX_RAIN_STEPS: usize = 48;

pub const RETURN_PERIODS: [u32; 6] = [2, 5, 10, 20, 50, 100];
pub const DISCRETIZATIONS_MINUTES: [u32; 3] = [5, 10, 15];

#[derive(Debug, Error)]
pub enum RainfallError {
    #[error("return period {0} not in {{2,5,10,20,50,100}}")]
    InvalidReturnPeriod(u32),
    #[error("discretization {0} min not in {{5,10,15}}")]
    InvalidDiscretization(u32),
    #[error("negative or non-finite intensity {value} at step {step}")]
    InvalidIntensity { step: usize, value: f64 },
    #[error("short event has rain after step {SHORT_RAIN_STEPS}")]
    ShortEventTooLong,
    #[error("event duration {0} steps exceeds the {MAX_RAIN_STEPS}-step (4 h) maximum")]
    TooLong(usize),
    #[error("event has no rainfall steps")]
    Empty,
    #[error("unknown continuation pattern {0:?}")]
    UnknownPattern(String),
    #[error("base event for a continuation must be a short event")]
    BaseNotShort,
    #[error("malformed event file: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Short,
    Long,
}

/// One named rainfall event: a hyetograph plus catalogue metadata.
///
/// Metadata is `None` for events loaded from bare CSV files that never
/// carried it; generator-produced events always have it.
#[derive(Debug, Clone, PartialEq)]
pub struct RainEvent {
    name: String,
    return_period_years: Option<u32>,
    discretization_minutes: Option<u32>,
    intensities: Vec<f64>,
    kind: EventKind,
}

impl RainEvent {
    pub fn new(
        name: String,
        return_period_years: Option<u32>,
        discretization_minutes: Option<u32>,
        intensities: Vec<f64>,
        kind: EventKind,
    ) -> Result<Self, RainfallError> {
        if intensities.is_empty() {
            return Err(RainfallError::Empty);
        }
        if let Some(rp) = return_period_years {
            if !RETURN_PERIODS.contains(&rp) {
                return Err(RainfallError::InvalidReturnPeriod(rp));
            }
        }
        if let Some(d) = discretization_minutes {
            if !DISCRETIZATIONS_MINUTES.contains(&d) {
                return Err(RainfallError::InvalidDiscretization(d));
            }
        }
        for (i, &v) in intensities.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(RainfallError::InvalidIntensity { step: i + 1, value: v });
            }
        }
        match kind {
            EventKind::Short => {
                if intensities.iter().skip(SHORT_RAIN_STEPS).any(|&v| v != 0.0) {
                    return Err(RainfallError::ShortEventTooLong);
                }
            }
            EventKind::Long => {
                if intensities.len() > MAX_RAIN_STEPS {
                    return Err(RainfallError::TooLong(intensities.len()));
                }
            }
        }
        Ok(RainEvent {
            name,
            return_period_years,
            discretization_minutes,
            intensities,
            kind,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn return_period_years(&self) -> Option<u32> {
        self.return_period_years
    }

    pub fn discretization_minutes(&self) -> Option<u32> {
        self.discretization_minutes
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    /// Number of stored rainfall steps (5-minute steps).
    pub fn duration_steps(&self) -> usize {
        self.intensities.len()
    }

    /// Intensity in mm/h during 1-based simulation step `step`; zero once
    /// the stored series is exhausted.
    pub fn intensity_for_step(&self, step: usize) -> f64 {
        if step == 0 {
            return 0.0;
        }
        self.intensities.get(step - 1).copied().unwrap_or(0.0)
    }

    /// Total rainfall depth in millimeters over the whole event.
    pub fn total_depth_mm(&self) -> f64 {
        let hours_per_step = f64::from(STEP_MINUTES) / 60.0;
        self.intensities.iter().map(|i| i * hours_per_step).sum()
    }

    pub fn peak_intensity(&self) -> f64 {
        self.intensities.iter().cloned().fold(0.0, f64::max)
    }
}

fn disc_label(discretization_minutes: u32) -> u32 {
    match discretization_minutes {
        5 => 1,
        10 => 2,
        15 => 3,
        _ => unreachable!("validated discretization"),
    }
}

pub fn short_event_name(return_period: u32, discretization_minutes: u32) -> String {
    format!("tr{}_{}", return_period, disc_label(discretization_minutes))
}

/// Total one-hour rainfall depth in mm for a return period. Increasing in
/// ln(RP) so event severity is strictly ordered by return period.
fn total_depth_for_return_period(return_period: u32) -> f64 {
    20.0 + 12.0 * f64::from(return_period).ln()
}

/// Generate one short event: piecewise-constant blocks of the requested
/// discretization filling one hour, peak depth set by the return period,
/// block-to-block shape noise from the seeded stream.
pub fn make_short_event(
    return_period: u32,
    discretization_minutes: u32,
    seed: u64,
) -> Result<RainEvent, RainfallError> {
    if !RETURN_PERIODS.contains(&return_period) {
        return Err(RainfallError::InvalidReturnPeriod(return_period));
    }
    if !DISCRETIZATIONS_MINUTES.contains(&discretization_minutes) {
        return Err(RainfallError::InvalidDiscretization(discretization_minutes));
    }
    let name = short_event_name(return_period, discretization_minutes);
    let mut rng = stream_rng(seed, &format!("rain/{name}"));

    let blocks = (60 / discretization_minutes) as usize;
    let steps_per_block = (discretization_minutes / STEP_MINUTES) as usize;
    let mut weights: Vec<f64> = (0..blocks).map(|_| rng.gen_range(0.6..1.4)).collect();
    // Amplify one early-ish block so the hyetograph has a single clear peak,
    // like a design storm.
    let peak_block = blocks / 3;
    weights[peak_block] *= 2.2;
    let weight_sum: f64 = weights.iter().sum();

    let total_mm = total_depth_for_return_period(return_period);
    let block_hours = f64::from(discretization_minutes) / 60.0;
    let mut intensities = Vec::with_capacity(SHORT_RAIN_STEPS);
    for w in &weights {
        let block_depth_mm = total_mm * w / weight_sum;
        let intensity = block_depth_mm / block_hours;
        for _ in 0..steps_per_block {
            intensities.push(intensity);
        }
    }
    debug_assert_eq!(intensities.len(), SHORT_RAIN_STEPS);
    RainEvent::new(
        name,
        Some(return_period),
        Some(discretization_minutes),
        intensities,
        EventKind::Short,
    )
}

/// All 18 short events (6 return periods x 3 discretizations), ordered by
/// return period then discretization.
pub fn short_catalogue(seed: u64) -> Vec<RainEvent> {
    let mut events = Vec::with_capacity(18);
    for &rp in &RETURN_PERIODS {
        for &disc in &DISCRETIZATIONS_MINUTES {
            events.push(make_short_event(rp, disc, seed).expect("catalogue inputs are valid"));
        }
    }
    events
}

/// Continue a short event past its first hour.
///
/// Patterns:
/// - `"c1"`: two more hours of decaying rain (3 h total), named `<base>c1`
/// - `"c2"`: three more hours with a secondary burst (4 h total), `<base>c2`
/// - `"real1"` / `"real2"`: one more hour of irregular tail (2 h total),
///   named `real1_c1` / `real2_c1`; the peak stays the base event's peak
/// - `"zero"`: one more hour of no rain, named `<base>c0`
pub fn make_long_event(
    base: &RainEvent,
    continuation_pattern: &str,
    seed: u64,
) -> Result<RainEvent, RainfallError> {
    if base.kind() != EventKind::Short {
        return Err(RainfallError::BaseNotShort);
    }
    let mut rng = stream_rng(seed, &format!("rain/{}/{}", base.name(), continuation_pattern));
    let mut intensities = base.intensities()[..SHORT_RAIN_STEPS.min(base.duration_steps())].to_vec();
    intensities.resize(SHORT_RAIN_STEPS, 0.0);
    let mean_base: f64 = intensities.iter().sum::<f64>() / intensities.len() as f64;
    let peak_base = base.peak_intensity();

    let (name, extra_steps): (String, usize) = match continuation_pattern {
        "c1" => (format!("{}c1", base.name()), 24),
        "c2" => (format!("{}c2", base.name()), 36),
        "real1" => ("real1_c1".to_string(), 12),
        "real2" => ("real2_c1".to_string(), 12),
        "zero" => (format!("{}c0", base.name()), 12),
        other => return Err(RainfallError::UnknownPattern(other.to_string())),
    };

    match continuation_pattern {
        "zero" => intensities.extend(std::iter::repeat(0.0).take(extra_steps)),
        "c1" => {
            // Linear decay from half the base mean down to a drizzle.
            for i in 0..extra_steps {
                let frac = 1.0 - i as f64 / extra_steps as f64;
                let jitter = rng.gen_range(0.9..1.1);
                intensities.push(0.5 * mean_base * frac * jitter + 0.02 * mean_base);
            }
        }
        "c2" => {
            // Decay like c1, but a second burst arrives in the third hour.
            for i in 0..extra_steps {
                let frac = 1.0 - i as f64 / extra_steps as f64;
                let jitter = rng.gen_range(0.9..1.1);
                let mut v = 0.4 * mean_base * frac * jitter + 0.02 * mean_base;
                if (12..16).contains(&i) {
                    v += 0.55 * peak_base * jitter;
                }
                intensities.push(v.min(0.9 * peak_base));
            }
        }
        "real1" | "real2" => {
            // Irregular tail, capped below the base peak so the event keeps
            // roughly the base's return period.
            for _ in 0..extra_steps {
                let v = rng.gen_range(0.05..0.45) * mean_base;
                intensities.push(v.min(0.9 * peak_base));
            }
        }
        _ => unreachable!("pattern validated above"),
    }

    RainEvent::new(
        name,
        base.return_period_years(),
        base.discretization_minutes(),
        intensities,
        EventKind::Long,
    )
}

/// The four-event long catalogue: two continuations of tr50_3 and two
/// two-hour "real"-style events with a roughly 20-year peak.
pub fn long_catalogue(seed: u64) -> Vec<RainEvent> {
    let tr50_3 = make_short_event(50, 15, seed).expect("valid");
    let tr20_1 = make_short_event(20, 5, seed).expect("valid");
    let tr20_2 = make_short_event(20, 10, seed).expect("valid");
    vec![
        make_long_event(&tr50_3, "c1", seed).expect("valid"),
        make_long_event(&tr50_3, "c2", seed).expect("valid"),
        make_long_event(&tr20_1, "real1", seed).expect("valid"),
        make_long_event(&tr20_2, "real2", seed).expect("valid"),
    ]
}

/// Save as CSV: commented metadata lines, then (step_index, intensity_mm_per_h)
/// rows. Intensities print in shortest round-trip form, so load returns the
/// exact same floats.
pub fn save_event_csv(event: &RainEvent, path: &Path) -> Result<(), RainfallError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    out.push_str(&format!("# name={}\n", event.name()));
    out.push_str(&format!(
        "# kind={}\n",
        match event.kind() {
            EventKind::Short => "short",
            EventKind::Long => "long",
        }
    ));
    if let Some(rp) = event.return_period_years() {
        out.push_str(&format!("# return_period_years={rp}\n"));
    }
    if let Some(d) = event.discretization_minutes() {
        out.push_str(&format!("# discretization_minutes={d}\n"));
    }
    out.push_str("step_index,intensity_mm_per_h\n");
    for (i, v) in event.intensities().iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, v));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_event_csv(path: &Path) -> Result<RainEvent, RainfallError> {
    let text = std::fs::read_to_string(path)?;
    let mut name: Option<String> = None;
    let mut kind: Option<EventKind> = None;
    let mut return_period: Option<u32> = None;
    let mut discretization: Option<u32> = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some((key, value)) = rest.split_once('=') {
                match key.trim() {
                    "name" => name = Some(value.trim().to_string()),
                    "kind" => {
                        kind = Some(match value.trim() {
                            "short" => EventKind::Short,
                            "long" => EventKind::Long,
                            other => {
                                return Err(RainfallError::Format(format!("unknown kind {other:?}")))
                            }
                        })
                    }
                    "return_period_years" => {
                        return_period = Some(value.trim().parse().map_err(|_| {
                            RainfallError::Format(format!("bad return period {value:?}"))
                        })?)
                    }
                    "discretization_minutes" => {
                        discretization = Some(value.trim().parse().map_err(|_| {
                            RainfallError::Format(format!("bad discretization {value:?}"))
                        })?)
                    }
                    _ => {}
                }
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }

    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "step_index" || &headers[1] != "intensity_mm_per_h" {
        return Err(RainfallError::Format(format!(
            "unexpected header {headers:?}"
        )));
    }
    let mut intensities = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let step: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RainfallError::Format(format!("row {}: bad step index", row + 1)))?;
        if step != row + 1 {
            return Err(RainfallError::Format(format!(
                "row {}: step index {} out of order",
                row + 1,
                step
            )));
        }
        let value: f64 = record
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| RainfallError::Format(format!("row {}: bad intensity", row + 1)))?;
        if !value.is_finite() || value < 0.0 {
            return Err(RainfallError::InvalidIntensity {
                step: row + 1,
                value,
            });
        }
        intensities.push(value);
    }
    if intensities.is_empty() {
        return Err(RainfallError::Empty);
    }

    let name = name.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unnamed".to_string())
    });
    let kind = kind.unwrap_or(if intensities.len() <= SHORT_RAIN_STEPS {
        EventKind::Short
    } else {
        EventKind::Long
    });
    RainEvent::new(name, return_period, discretization, intensities, kind)
}

/// Write every event plus a `manifest.json` mapping name -> CSV filename.
pub fn save_catalogue(events: &[RainEvent], dir: &Path) -> Result<(), RainfallError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest: BTreeMap<String, String> = BTreeMap::new();
    for event in events {
        let filename = format!("{}.csv", event.name());
        save_event_csv(event, &dir.join(&filename))?;
        manifest.insert(event.name().to_string(), filename);
    }
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RainfallError::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_has_18_distinct_names() {
        let events = short_catalogue(7);
        assert_eq!(events.len(), 18);
        let names: std::collections::BTreeSet<_> =
            events.iter().map(|e| e.name().to_string()).collect();
        assert_eq!(names.len(), 18);
        for e in &events {
            let rp = e.return_period_years().unwrap();
            let label = disc_label(e.discretization_minutes().unwrap());
            assert_eq!(e.name(), &format!("tr{rp}_{label}"));
        }
    }

    #[test]
    fn total_depth_strictly_ordered_by_return_period() {
        for &disc in &DISCRETIZATIONS_MINUTES {
            for seed in [0u64, 7, 99] {
                let depths: Vec<f64> = RETURN_PERIODS
                    .iter()
                    .map(|&rp| make_short_event(rp, disc, seed).unwrap().total_depth_mm())
                    .collect();
                for pair in depths.windows(2) {
                    assert!(
                        pair[1] > pair[0],
                        "depths not strictly increasing: {depths:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn hundred_year_exceeds_two_year() {
        let lo = make_short_event(2, 5, 11).unwrap();
        let hi = make_short_event(100, 5, 11).unwrap();
        assert!(hi.total_depth_mm() > lo.total_depth_mm());
    }

    #[test]
    fn fifteen_minute_discretization_gives_four_blocks() {
        let e = make_short_event(50, 15, 3).unwrap();
        assert_eq!(e.duration_steps(), 12);
        let mut blocks = Vec::new();
        for chunk in e.intensities().chunks(3) {
            assert!(chunk.iter().all(|&v| v == chunk[0]), "block not constant");
            blocks.push(chunk[0]);
        }
        assert_eq!(blocks.len(), 4);
        for i in 0..blocks.len() {
            for j in (i + 1)..blocks.len() {
                assert_ne!(blocks[i], blocks[j], "blocks {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn no_rain_after_step_12_in_short_events() {
        for e in short_catalogue(13) {
            assert_eq!(e.duration_steps(), SHORT_RAIN_STEPS);
            for step in 13..=61 {
                assert_eq!(e.intensity_for_step(step), 0.0);
            }
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = make_short_event(20, 10, 5).unwrap();
        let b = make_short_event(20, 10, 5).unwrap();
        assert_eq!(a, b);
        let c = make_short_event(20, 10, 6).unwrap();
        assert_ne!(a.intensities(), c.intensities());
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(matches!(
            make_short_event(3, 5, 0),
            Err(RainfallError::InvalidReturnPeriod(3))
        ));
        assert!(matches!(
            make_short_event(2, 7, 0),
            Err(RainfallError::InvalidDiscretization(7))
        ));
    }

    #[test]
    fn long_catalogue_names_and_durations() {
        let events = long_catalogue(7);
        let summary: Vec<(String, usize)> = events
            .iter()
            .map(|e| (e.name().to_string(), e.duration_steps()))
            .collect();
        assert_eq!(
            summary,
            vec![
                ("tr50_3c1".to_string(), 36),
                ("tr50_3c2".to_string(), 48),
                ("real1_c1".to_string(), 24),
                ("real2_c1".to_string(), 24),
            ]
        );
        for e in &events {
            assert_eq!(e.kind(), EventKind::Long);
        }
    }

    #[test]
    fn continuation_first_hour_matches_base() {
        let base = make_short_event(50, 15, 7).unwrap();
        let long = make_long_event(&base, "c1", 7).unwrap();
        assert_eq!(&long.intensities()[..12], base.intensities());
        assert!(long.duration_steps() > SHORT_RAIN_STEPS);
    }

    #[test]
    fn real_events_keep_the_base_peak() {
        let events = long_catalogue(7);
        let real1 = &events[2];
        let tr20_1 = make_short_event(20, 5, 7).unwrap();
        assert_eq!(real1.peak_intensity(), tr20_1.peak_intensity());
        assert_eq!(real1.duration_steps(), 24);
    }

    #[test]
    fn zero_continuation_is_padded_base() {
        let base = make_short_event(10, 10, 42).unwrap();
        let long = make_long_event(&base, "zero", 42).unwrap();
        assert_eq!(long.name(), "tr10_2c0");
        assert_eq!(&long.intensities()[..12], base.intensities());
        assert!(long.intensities()[12..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_pattern_is_an_error() {
        let base = make_short_event(10, 10, 42).unwrap();
        assert!(matches!(
            make_long_event(&base, "c9", 42),
            Err(RainfallError::UnknownPattern(_))
        ));
    }

    #[test]
    fn csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        for event in short_catalogue(3).into_iter().chain(long_catalogue(3)) {
            let path = dir.path().join(format!("{}.csv", event.name()));
            save_event_csv(&event, &path).unwrap();
            let back = load_event_csv(&path).unwrap();
            assert_eq!(back, event);
        }
    }

    #[test]
    fn csv_rejects_negative_intensity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "step_index,intensity_mm_per_h\n1,-1\n").unwrap();
        assert!(matches!(
            load_event_csv(&path),
            Err(RainfallError::InvalidIntensity { .. })
        ));
    }

    #[test]
    fn csv_rejects_empty_series() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "step_index,intensity_mm_per_h\n").unwrap();
        assert!(matches!(load_event_csv(&path), Err(RainfallError::Empty)));
    }

    #[test]
    fn catalogue_manifest_lists_every_event() {
        let dir = tempfile::tempdir().unwrap();
        let events = short_catalogue(1);
        save_catalogue(&events, dir.path()).unwrap();
        let manifest: BTreeMap<String, String> = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.len(), 18);
        for (name, file) in &manifest {
            let loaded = load_event_csv(&dir.path().join(file)).unwrap();
            assert_eq!(loaded.name(), name);
        }
    }
}
