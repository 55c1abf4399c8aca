//! Per-cough summary vectors: eight statistics of every feature row.

use std::io::Write;

use crate::error::{Error, Result};
use crate::features::FrameFeatureMatrix;

/// Statistic suffixes in vector order.
pub const STATISTICS: [&str; 8] = [
    "mean", "std", "median", "skewness", "kurtosis", "p1", "p99", "p99_minus_p1",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub cough_id: String,
    pub patient_id: String,
}

/// Column names `<feature>_<statistic>`, feature-major.
pub fn summary_names(feature_names: &[String]) -> Vec<String> {
    feature_names
        .iter()
        .flat_map(|f| STATISTICS.iter().map(move |s| format!("{f}_{s}")))
        .collect()
}

/// Linear interpolation between order statistics (inclusive definition).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `[mean, std, median, skewness, excess kurtosis, p1, p99, p99 - p1]` with
/// population moments. Skewness and kurtosis are 0 for a constant row.
pub fn row_statistics(row: &[f64]) -> [f64; 8] {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in row {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let std = m2.sqrt();
    let (skew, kurt) = if std > 0.0 {
        (m3 / (std * m2), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mut sorted = row.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = percentile(&sorted, 50.0);
    let p1 = percentile(&sorted, 1.0);
    let p99 = percentile(&sorted, 99.0);
    [mean, std, median, skew, kurt, p1, p99, p99 - p1]
}

pub fn summarize_cough(
    m: &FrameFeatureMatrix,
    cough_id: impl Into<String>,
    patient_id: impl Into<String>,
) -> Result<FeatureVector> {
    if m.n_frames() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 frames to summarise, got {}",
            m.n_frames()
        )));
    }
    if m.values.iter().any(|r| r.len() != m.n_frames()) {
        return Err(Error::invalid("ragged feature matrix"));
    }
    let values = m.values.iter().flat_map(|r| row_statistics(r)).collect();
    Ok(FeatureVector {
        values,
        cough_id: cough_id.into(),
        patient_id: patient_id.into(),
    })
}

/// One row per cough: `cough_id,patient_id,label,<features...>`.
pub fn write_feature_table<W: Write>(
    out: W,
    feature_names: &[String],
    rows: &[(FeatureVector, u8)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "cough_id".to_string(),
        "patient_id".to_string(),
        "label".to_string(),
    ];
    header.extend(summary_names(feature_names));
    w.write_record(&header)?;
    for (fv, label) in rows {
        let mut rec = vec![fv.cough_id.clone(), fv.patient_id.clone(), label.to_string()];
        rec.extend(fv.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
