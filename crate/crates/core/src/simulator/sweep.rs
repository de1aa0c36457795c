use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

/// One axis point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis: f64,
    pub metric: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Additional named columns, written in key order.
    pub extras: BTreeMap<String, f64>,
    /// Set when the point did not reach its statistical target.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis_name: String,
    pub metric_name: String,
    pub points: Vec<SweepPoint>,
    pub seeds: Vec<u64>,
    /// Whole-sweep statistics (e.g. fitted slope).
    pub summary: BTreeMap<String, f64>,
}

impl SweepResult {
    pub fn metrics(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.metric).collect()
    }

    pub fn axis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis).collect()
    }

    /// CSV with columns `axis, metric, ci_low, ci_high, <extras...>, flagged`.
    pub fn to_csv(&self) -> String {
        let extra_keys: Vec<&String> = self
            .points
            .first()
            .map(|p| p.extras.keys().collect())
            .unwrap_or_default();
        let mut out = String::new();
        let _ = write!(out, "{},{},ci_low,ci_high", self.axis_name, self.metric_name);
        for k in &extra_keys {
            let _ = write!(out, ",{k}");
        }
        out.push_str(",flagged\n");
        for p in &self.points {
            let _ = write!(out, "{},{},{},{}", p.axis, p.metric, p.ci_low, p.ci_high);
            for k in &extra_keys {
                let _ = write!(out, ",{}", p.extras.get(*k).copied().unwrap_or(f64::NAN));
            }
            let _ = writeln!(out, ",{}", p.flagged as u8);
        }
        out
    }
}

/// Wilson score interval for `errors / trials` at 95% confidence.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
