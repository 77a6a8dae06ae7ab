use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub mean: f64,
    pub std: Option<f64>,
}

impl MetricValue {
    pub fn new(mean: f64, std: Option<f64>) -> Self {
        Self { mean, std }
    }

    pub fn cell(&self) -> String {
        match self.std {
            Some(s) => format!("{:.4} ± {:.4}", self.mean, s),
            None => format!("{:.4}", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub metrics: BTreeMap<String, MetricValue>,
}

impl MethodReport {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            metrics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, metric: &str, value: MetricValue) -> Self {
        self.metrics.insert(metric.to_string(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub metrics: Vec<String>,
    pub rows: Vec<MethodReport>,
}

impl ComparisonTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["method".to_string()];
        header.extend(self.metrics.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.method.clone()];
            rec.extend(self.metrics.iter().map(|m| row.metrics[m].cell()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// One row per method; every method must report the same metric names.
pub fn compare_methods(reports: &[MethodReport]) -> Result<ComparisonTable> {
    let first = reports.first().ok_or(Error::Empty("method reports"))?;
    let metrics: Vec<String> = first.metrics.keys().cloned().collect();
    for r in &reports[1..] {
        let names: Vec<&String> = r.metrics.keys().collect();
        if names != metrics.iter().collect::<Vec<_>>() {
            return Err(Error::Inconsistent(format!(
                "method `{}` reports {:?}, expected {:?}",
                r.method, names, metrics
            )));
        }
    }
    Ok(ComparisonTable {
        metrics,
        rows: reports.to_vec(),
    })
}

/// Published full-scale figures for the latent anonymizer, kept for
/// side-by-side display. They are not reproducible with desk-scale backends.
pub mod reference {
    use super::{MethodReport, MetricValue};

    /// Identity distance by swapped region: `(regions, mean, std)`.
    pub const REGION_DISTANCES: [(&str, f64, f64); 4] = [
        ("eyes", 0.28, 0.08),
        ("eyes+nose", 0.72, 0.14),
        ("eyes+nose+mouth", 0.79, 0.14),
        ("base", 1.25, 0.10),
    ];

    /// Identity distance per embedder: `(embedder, mean, std)`.
    pub const IDENTITY_DISTANCE: [(&str, f64, f64); 3] =
        [("facenet", 1.18, 0.08), ("arcface", 1.35, 0.11), ("curricularface", 1.29, 0.08)];

    /// Verification AUC per embedder.
    pub const AUC: [(&str, f64); 3] = [("facenet", 0.6011), ("arcface", 0.7127), ("curricularface", 0.6805)];

    pub fn identity_distance_row() -> MethodReport {
        IDENTITY_DISTANCE
            .iter()
            .fold(MethodReport::new("full-scale reference"), |r, &(name, m, s)| {
                r.with(name, MetricValue::new(m, Some(s)))
            })
    }

    pub fn auc_row() -> MethodReport {
        AUC.iter()
            .fold(MethodReport::new("full-scale reference"), |r, &(name, m)| r.with(name, MetricValue::new(m, None)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let t = compare_methods(&[MethodReport::new("m").with("auc", MetricValue::new(0.5, None))]).unwrap();
        assert_eq!(t.metrics, vec!["auc"]);
        assert_eq!(t.rows[0].metrics["auc"].cell(), "0.5000");
    }

    #[test]
    fn inconsistent_metrics_rejected() {
        let a = MethodReport::new("a").with("auc", MetricValue::new(0.5, None));
        let b = MethodReport::new("b").with("rank", MetricValue::new(2.0, None));
        assert!(matches!(compare_methods(&[a, b]), Err(Error::Inconsistent(_))));
        assert!(compare_methods(&[]).is_err());
    }

    #[test]
    fn reference_rows() {
        let row = reference::identity_distance_row();
        assert_eq!(row.metrics["facenet"], MetricValue::new(1.18, Some(0.08)));
        assert_eq!(row.metrics["arcface"], MetricValue::new(1.35, Some(0.11)));
        assert_eq!(row.metrics["curricularface"], MetricValue::new(1.29, Some(0.08)));
        let auc = reference::auc_row();
        assert_eq!(auc.metrics["facenet"].mean, 0.6011);
        assert_eq!(auc.metrics["arcface"].mean, 0.7127);
        assert_eq!(auc.metrics["curricularface"].mean, 0.6805);
        let regions: Vec<(f64, f64)> = reference::REGION_DISTANCES.iter().map(|r| (r.1, r.2)).collect();
        assert_eq!(regions, vec![(0.28, 0.08), (0.72, 0.14), (0.79, 0.14), (1.25, 0.10)]);
    }
}
