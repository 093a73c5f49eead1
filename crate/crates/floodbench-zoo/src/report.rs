//! Box-plot reporting over pooled M values.
//!
//! Quartiles use the type-7 definition (linear interpolation at
//! `(n−1)·p`), whiskers are Tukey fences (last data point within
//! 1.5×IQR of the box). Outliers beyond the whiskers are omitted from the
//! plot but stay in the CSV counts and in the raw value spills, so every
//! summary can be recomputed from disk.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ZooError;
use crate::eval::{BUCKET_COUNT, BUCKET_LABELS};

/// Five-number summary of one model's pooled M values in one bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
}

/// Type-7 quantile of an ascending-sorted, non-empty slice.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Box statistics of a value set; `None` when it is empty.
pub fn box_summary(values: &[f64]) -> Option<BoxSummary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("M values are finite"));
    let q1 = quantile_type7(&sorted, 0.25);
    let median = quantile_type7(&sorted, 0.50);
    let q3 = quantile_type7(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_lo = *sorted
        .iter()
        .find(|&&v| v >= lo_fence)
        .expect("q1 itself is inside the lower fence");
    let whisker_hi = *sorted
        .iter()
        .rev()
        .find(|&&v| v <= hi_fence)
        .expect("q3 itself is inside the upper fence");
    Some(BoxSummary {
        count: sorted.len(),
        median,
        q1,
        q3,
        whisker_lo,
        whisker_hi,
    })
}

/// One model's row group in the report: a box per bucket, `None` where the
/// bucket produced no M values.
#[derive(Debug, Clone)]
pub struct ModelReport {
    pub name: String,
    pub buckets: Vec<Option<BoxSummary>>,
}

impl ModelReport {
    pub fn from_pooled(name: &str, pooled: &[Vec<f64>]) -> ModelReport {
        ModelReport {
            name: name.to_string(),
            buckets: pooled.iter().map(|v| box_summary(v)).collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    model: String,
    bucket: String,
    count: usize,
    median: Option<f64>,
    q1: Option<f64>,
    q3: Option<f64>,
    whisker_lo: Option<f64>,
    whisker_hi: Option<f64>,
}

/// Write the per-(model, bucket) box summaries as CSV. Buckets without M
/// values keep their row with empty statistics columns.
pub fn write_report_csv(path: &Path, reports: &[ModelReport]) -> Result<(), ZooError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for report in reports {
        for (b, summary) in report.buckets.iter().enumerate() {
            let row = match summary {
                Some(s) => CsvRow {
                    model: report.name.clone(),
                    bucket: format!("b{}", b + 1),
                    count: s.count,
                    median: Some(s.median),
                    q1: Some(s.q1),
                    q3: Some(s.q3),
                    whisker_lo: Some(s.whisker_lo),
                    whisker_hi: Some(s.whisker_hi),
                },
                None => CsvRow {
                    model: report.name.clone(),
                    bucket: format!("b{}", b + 1),
                    count: 0,
                    median: None,
                    q1: None,
                    q3: None,
                    whisker_lo: None,
                    whisker_hi: None,
                },
            };
            writer.serialize(row)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// One raw M value per line, in shortest round-trip decimal form so a
/// reload reproduces the exact floats.
pub fn write_m_values(path: &Path, values: &[f64]) -> Result<(), ZooError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = String::new();
    for v in values {
        writeln!(out, "{v}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_m_values(path: &Path) -> Result<Vec<f64>, ZooError> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|e| {
            ZooError::Eval(format!("{}:{}: bad M value: {e}", path.display(), i + 1))
        })?);
    }
    Ok(values)
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc949", "#b07aa1", "#ff9da7",
    "#9c755f", "#bab0ab",
];

/// Render grouped box plots (buckets on the x axis, one box per model) as
/// a standalone SVG string. A dashed horizontal line with
/// `id="m1-reference"` marks M = 1, the score of a bucket-mean predictor.
pub fn render_svg(reports: &[ModelReport]) -> String {
    let width = 980.0;
    let height = 460.0;
    let left = 64.0;
    let right = width - 190.0;
    let top = 28.0;
    let bottom = height - 58.0;
    let plot_w = right - left;
    let plot_h = bottom - top;

    let mut y_max: f64 = 1.25;
    for r in reports {
        for s in r.buckets.iter().flatten() {
            y_max = y_max.max(s.whisker_hi);
        }
    }
    y_max *= 1.06;
    let y_of = |v: f64| bottom - plot_h * (v / y_max);

    let n_models = reports.len().max(1);
    let group_w = plot_w / BUCKET_COUNT as f64;
    let slot_w = group_w / (n_models as f64 + 1.0);
    let box_w = (slot_w * 0.72).min(26.0);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"Helvetica, Arial, sans-serif\">\n"
    );
    let _ = write!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
    // Axes.
    let _ = write!(
        svg,
        "  <line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"#333\"/>\n  \
         <line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"#333\"/>\n"
    );
    // Y ticks at round values.
    let tick_step = if y_max > 8.0 {
        2.0
    } else if y_max > 4.0 {
        1.0
    } else {
        0.5
    };
    let mut tick = 0.0;
    while tick <= y_max {
        let y = y_of(tick);
        let _ = write!(
            svg,
            "  <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{left}\" y2=\"{y:.2}\" stroke=\"#333\"/>\n  \
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\" fill=\"#333\">{tick}</text>\n",
            left - 5.0,
            left - 8.0,
            y + 4.0
        );
        tick += tick_step;
    }
    let _ = write!(
        svg,
        "  <text x=\"16\" y=\"{:.2}\" font-size=\"12\" fill=\"#333\" \
         transform=\"rotate(-90 16 {:.2})\" text-anchor=\"middle\">M = |y − ŷ| / σ_b</text>\n",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );
    // Reference line at M = 1.
    let y1 = y_of(1.0);
    let _ = write!(
        svg,
        "  <line id=\"m1-reference\" x1=\"{left}\" y1=\"{y1:.2}\" x2=\"{right}\" y2=\"{y1:.2}\" \
         stroke=\"#555\" stroke-dasharray=\"6 4\"/>\n  \
         <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"#555\">M = 1</text>\n",
        right - 38.0,
        y1 - 5.0
    );
    // Boxes.
    for (b, label) in BUCKET_LABELS.iter().enumerate() {
        let group_x = left + b as f64 * group_w;
        let _ = write!(
            svg,
            "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" \
             fill=\"#333\">{label}</text>\n",
            group_x + group_w / 2.0,
            bottom + 20.0
        );
        for (m, report) in reports.iter().enumerate() {
            let Some(s) = &report.buckets[b] else {
                continue;
            };
            let color = PALETTE[m % PALETTE.len()];
            let cx = group_x + slot_w * (m as f64 + 1.0);
            let x0 = cx - box_w / 2.0;
            let (yq1, yq3) = (y_of(s.q1), y_of(s.q3));
            let (ylo, yhi) = (y_of(s.whisker_lo), y_of(s.whisker_hi));
            let ymed = y_of(s.median);
            let cap = box_w * 0.5;
            let _ = write!(
                svg,
                "  <g>\n    \
                 <line x1=\"{cx:.2}\" y1=\"{yhi:.2}\" x2=\"{cx:.2}\" y2=\"{yq3:.2}\" stroke=\"{color}\"/>\n    \
                 <line x1=\"{cx:.2}\" y1=\"{yq1:.2}\" x2=\"{cx:.2}\" y2=\"{ylo:.2}\" stroke=\"{color}\"/>\n    \
                 <line x1=\"{:.2}\" y1=\"{yhi:.2}\" x2=\"{:.2}\" y2=\"{yhi:.2}\" stroke=\"{color}\"/>\n    \
                 <line x1=\"{:.2}\" y1=\"{ylo:.2}\" x2=\"{:.2}\" y2=\"{ylo:.2}\" stroke=\"{color}\"/>\n    \
                 <rect x=\"{x0:.2}\" y=\"{yq3:.2}\" width=\"{box_w:.2}\" height=\"{:.2}\" \
                 fill=\"{color}\" fill-opacity=\"0.45\" stroke=\"{color}\"/>\n    \
                 <line x1=\"{x0:.2}\" y1=\"{ymed:.2}\" x2=\"{:.2}\" y2=\"{ymed:.2}\" \
                 stroke=\"black\" stroke-width=\"2\"/>\n  </g>\n",
                cx - cap / 2.0,
                cx + cap / 2.0,
                cx - cap / 2.0,
                cx + cap / 2.0,
                (yq1 - yq3).max(0.5),
                x0 + box_w,
            );
        }
    }
    // Legend.
    for (m, report) in reports.iter().enumerate() {
        let color = PALETTE[m % PALETTE.len()];
        let y = top + 14.0 + m as f64 * 18.0;
        let _ = write!(
            svg,
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\" \
             fill-opacity=\"0.45\" stroke=\"{color}\"/>\n  \
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"#333\">{}</text>\n",
            right + 14.0,
            y - 10.0,
            right + 32.0,
            y,
            report.name
        );
    }
    let _ = write!(
        svg,
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\" \
         fill=\"#333\">water depth at forecast time (ground truth)</text>\n",
        (left + right) / 2.0,
        bottom + 40.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn write_report_svg(path: &Path, reports: &[ModelReport]) -> Result<(), ZooError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, render_svg(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quartiles_match_the_hand_case() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&sorted, 0.50), 2.5);
        assert_eq!(quantile_type7(&sorted, 0.25), 1.75);
        assert_eq!(quantile_type7(&sorted, 0.75), 3.25);
        assert_eq!(quantile_type7(&sorted, 0.0), 1.0);
        assert_eq!(quantile_type7(&sorted, 1.0), 4.0);
    }

    #[test]
    fn whiskers_stop_at_the_tukey_fences() {
        let values: Vec<f64> = (1..=9).map(|v| v as f64).chain([100.0]).collect();
        let s = box_summary(&values).unwrap();
        assert_eq!(s.count, 10);
        assert_eq!(s.median, 5.5);
        assert_eq!(s.q1, 3.25);
        assert_eq!(s.q3, 7.75);
        // 100 sits beyond q3 + 1.5*IQR = 14.5, so the whisker stops at 9.
        assert_eq!(s.whisker_hi, 9.0);
        assert_eq!(s.whisker_lo, 1.0);
        assert!(box_summary(&[]).is_none());
    }

    #[test]
    fn value_spills_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m_values_b3.txt");
        let values = vec![
            0.1,
            1.0 / 3.0,
            2.5e-17,
            1.4142135623730951,
            17.25,
            f64::MIN_POSITIVE,
        ];
        write_m_values(&path, &values).unwrap();
        let back = read_m_values(&path).unwrap();
        assert_eq!(back, values);
        assert_eq!(box_summary(&back), box_summary(&values));
    }

    fn sample_reports() -> Vec<ModelReport> {
        let a = ModelReport::from_pooled(
            "no_change",
            &[
                vec![0.1, 0.4, 0.9, 1.3],
                vec![0.2, 0.5],
                vec![1.0, 2.0, 3.0],
                Vec::new(),
                vec![0.7, 0.9, 1.1],
            ],
        );
        let b = ModelReport::from_pooled(
            "unet_12ts",
            &[
                vec![0.1, 0.2, 0.3, 0.4],
                vec![0.1, 0.3],
                vec![0.5, 0.6, 0.9],
                Vec::new(),
                vec![0.2, 0.4, 0.6],
            ],
        );
        vec![a, b]
    }

    #[test]
    fn csv_report_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let reports = sample_reports();
        write_report_csv(&path, &reports).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<CsvRow> = reader.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2 * BUCKET_COUNT);
        assert_eq!(rows[0].model, "no_change");
        assert_eq!(rows[0].bucket, "b1");
        assert_eq!(rows[0].count, 4);
        assert_eq!(rows[0].median, Some(0.65));
        // The empty bucket keeps its row with blank statistics.
        assert_eq!(rows[3].bucket, "b4");
        assert_eq!(rows[3].count, 0);
        assert_eq!(rows[3].median, None);
    }

    #[test]
    fn svg_carries_the_reference_line_and_legend() {
        let svg = render_svg(&sample_reports());
        assert!(svg.contains("id=\"m1-reference\""));
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("no_change"));
        assert!(svg.contains("unet_12ts"));
        assert!(svg.contains(">100 cm"));
        // 2 models x 4 non-empty buckets -> 8 boxes, plus frame + legend
        // rects and the background.
        assert_eq!(svg.matches("<g>").count(), 8);
        // Deterministic output: same input, same bytes.
        assert_eq!(svg, render_svg(&sample_reports()));
    }
}
