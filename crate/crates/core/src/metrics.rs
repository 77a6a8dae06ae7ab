//! Distances, min-max normalization, the IA score, and dataset-level privacy
//! and utility aggregates.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{AttributeVector, IdentityEmbedding};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_BETA: f64 = 1.25;
/// Identity-distance threshold matching 95% recognition accuracy.
pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_THETA: f64 = 0.5;

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

pub fn identity_distance(e1: &IdentityEmbedding, e2: &IdentityEmbedding) -> Result<f64> {
    euclidean(e1.values(), e2.values())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Euclidean distance between attribute confidences, optionally after
/// mapping each through `log(p / (1 - p))`.
pub fn attribute_distance(a1: &AttributeVector, a2: &AttributeVector, use_logit: bool) -> Result<f64> {
    if use_logit {
        let t = |v: &AttributeVector| v.values().iter().map(|&p| logit(p)).collect::<Vec<_>>();
        euclidean(&t(a1), &t(a2))
    } else {
        euclidean(a1.values(), a2.values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub x_min: f64,
    pub x_max: f64,
    pub population: String,
}

impl NormalizationStats {
    pub fn new(x_min: f64, x_max: f64, population: impl Into<String>) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min > x_max {
            return Err(Error::InvalidArgument(format!(
                "normalization bounds [{x_min}, {x_max}] are invalid"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            population: population.into(),
        })
    }

    pub fn from_values(values: &[f64], population: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("normalization population"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::new(lo, hi, population)
    }
}

/// `(x - min) / (max - min)` clamped to `[0, 1]`; zero when the population
/// has no spread.
pub fn minmax_normalize(x: f64, stats: &NormalizationStats) -> f64 {
    let span = stats.x_max - stats.x_min;
    if span <= 0.0 {
        return 0.0;
    }
    ((x - stats.x_min) / span).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub attribute_logit: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            theta: DEFAULT_THETA,
            attribute_logit: false,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementScore {
    pub delta_id: f64,
    pub delta_attr: f64,
    pub h_id: f64,
    pub h_attr: f64,
    pub ia: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn ia_score(
    delta_id: f64,
    delta_attr: f64,
    alpha: f64,
    beta: f64,
    id_stats: &NormalizationStats,
    attr_stats: &NormalizationStats,
) -> DisentanglementScore {
    let h_id = minmax_normalize(delta_id, id_stats);
    let h_attr = minmax_normalize(delta_attr, attr_stats);
    DisentanglementScore {
        delta_id,
        delta_attr,
        h_id,
        h_attr,
        ia: alpha * h_id - beta * h_attr,
        alpha,
        beta,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    /// Mean identity distance.
    pub mean_distance: f64,
    pub gamma: f64,
    pub p_above: f64,
    pub strict: bool,
    pub distances: Vec<f64>,
}

pub fn privacy_metric(pairs: &[(IdentityEmbedding, IdentityEmbedding)], gamma: f64) -> Result<PrivacyReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("privacy pairs"));
    }
    let distances = pairs
        .iter()
        .map(|(s, o)| identity_distance(s, o))
        .collect::<Result<Vec<_>>>()?;
    Ok(privacy_from_distances(distances, gamma))
}

pub fn privacy_from_distances(distances: Vec<f64>, gamma: f64) -> PrivacyReport {
    let above = distances.iter().filter(|&&d| d > gamma).count();
    PrivacyReport {
        mean_distance: mean(&distances),
        gamma,
        p_above: above as f64 / distances.len() as f64,
        strict: above == distances.len(),
        distances,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    /// Mean attribute distance.
    pub mean_distance: f64,
    pub distances: Vec<f64>,
    pub theta: f64,
    pub attribute_logit: bool,
    /// Per attribute: does `a > theta` agree between source and output on
    /// every pair?
    pub attribute_pass: Vec<bool>,
    /// Per attribute: fraction of pairs on which the decision agrees.
    pub attribute_agreement: Vec<f64>,
}

pub fn utility_metric(
    pairs: &[(AttributeVector, AttributeVector)],
    theta: f64,
    attribute_logit: bool,
) -> Result<UtilityReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("utility pairs"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
    }
    let m = pairs[0].0.len();
    let mut agree = vec![0usize; m];
    let mut distances = Vec::with_capacity(pairs.len());
    for (s, o) in pairs {
        if s.len() != m || o.len() != m {
            return Err(Error::DimMismatch {
                expected: m,
                actual: if s.len() != m { s.len() } else { o.len() },
            });
        }
        distances.push(attribute_distance(s, o, attribute_logit)?);
        for (k, (a, b)) in s.values().iter().zip(o.values()).enumerate() {
            if (*a > theta) == (*b > theta) {
                agree[k] += 1;
            }
        }
    }
    let n = pairs.len();
    Ok(UtilityReport {
        mean_distance: mean(&distances),
        distances,
        theta,
        attribute_logit,
        attribute_pass: agree.iter().map(|&c| c == n).collect(),
        attribute_agreement: agree.iter().map(|&c| c as f64 / n as f64).collect(),
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_distance_csv(path: &Path, header: &str, distances: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["pair", header])?;
    for (i, d) in distances.iter().enumerate() {
        w.write_record([i.to_string(), format!("{d:.12}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl PrivacyReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_distance_csv(path, "identity_distance", &self.distances)
    }
}

impl UtilityReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_distance_csv(path, "attribute_distance", &self.distances)
    }

    /// One row per attribute with its agreement rate and pass flag.
    pub fn write_attribute_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(w, "attribute,agreement,pass").map_err(io)?;
        for (k, (a, p)) in self.attribute_agreement.iter().zip(&self.attribute_pass).enumerate() {
            writeln!(w, "{k},{a:.6},{p}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> IdentityEmbedding {
        IdentityEmbedding::new(v.to_vec()).unwrap()
    }

    fn attrs(v: &[f64]) -> AttributeVector {
        AttributeVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_distance_examples() {
        assert_eq!(identity_distance(&emb(&[0.0, 0.0]), &emb(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(identity_distance(&emb(&[0.3, 0.7]), &emb(&[0.3, 0.7])).unwrap(), 0.0);
        assert_eq!(identity_distance(&emb(&[1.0, 0.0]), &emb(&[-1.0, 0.0])).unwrap(), 2.0);
        assert!(matches!(
            identity_distance(&emb(&[1.0]), &emb(&[1.0, 2.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn attribute_distance_examples() {
        let d = attribute_distance(&attrs(&[0.2, 0.8]), &attrs(&[0.2, 0.2]), false).unwrap();
        assert!((d - 0.6).abs() < 1e-12);
        let l = attribute_distance(&attrs(&[0.5]), &attrs(&[0.73]), true).unwrap();
        assert!((l - logit(0.73)).abs() < 1e-12);
    }

    #[test]
    fn minmax_examples() {
        let s = NormalizationStats::from_values(&[1.0, 2.0, 3.0], "t").unwrap();
        assert_eq!(minmax_normalize(2.0, &s), 0.5);
        assert_eq!(minmax_normalize(1.0, &s), 0.0);
        assert_eq!(minmax_normalize(3.0, &s), 1.0);
        assert_eq!(minmax_normalize(9.0, &s), 1.0);
        let flat = NormalizationStats::from_values(&[4.0, 4.0], "t").unwrap();
        assert_eq!(minmax_normalize(4.0, &flat), 0.0);
        assert_eq!(minmax_normalize(100.0, &flat), 0.0);
        assert!(NormalizationStats::new(2.0, 1.0, "t").is_err());
    }

    #[test]
    fn ia_examples() {
        let unit = NormalizationStats::new(0.0, 1.0, "unit").unwrap();
        let s = ia_score(0.8, 0.2, DEFAULT_ALPHA, DEFAULT_BETA, &unit, &unit);
        assert!((s.ia - 0.55).abs() < 1e-12);
        let s = ia_score(0.8, 0.0, 1.0, 1.25, &unit, &unit);
        assert_eq!(s.ia, s.alpha * s.h_id);
        let s = ia_score(0.0, 0.0, 1.0, 1.25, &unit, &unit);
        assert_eq!(s.ia, 0.0);
    }

    #[test]
    fn privacy_examples() {
        let pairs = vec![
            (emb(&[0.0]), emb(&[1.0])),
            (emb(&[0.0]), emb(&[1.5])),
        ];
        let r = privacy_metric(&pairs, 1.2).unwrap();
        assert!((r.mean_distance - 1.25).abs() < 1e-12);
        assert_eq!(r.p_above, 0.5);
        assert!(!r.strict);

        let same = vec![(emb(&[0.4, 0.1]), emb(&[0.4, 0.1]))];
        let r = privacy_metric(&same, DEFAULT_GAMMA).unwrap();
        assert_eq!(r.mean_distance, 0.0);
        assert!(!r.strict);
        assert_eq!(DEFAULT_GAMMA, 0.9);
        assert!(privacy_metric(&[], 0.9).is_err());
    }

    #[test]
    fn utility_examples() {
        let r = utility_metric(&[(attrs(&[0.2, 0.8]), attrs(&[0.2, 0.2]))], DEFAULT_THETA, false).unwrap();
        assert!((r.mean_distance - 0.6).abs() < 1e-12);
        assert_eq!(r.attribute_pass, vec![true, false]);

        let a = attrs(&[0.1, 0.6, 0.9]);
        let r = utility_metric(&[(a.clone(), a)], 0.5, false).unwrap();
        assert_eq!(r.mean_distance, 0.0);
        assert!(r.attribute_pass.iter().all(|&p| p));
        assert!(utility_metric(&[], 0.5, false).is_err());
        assert!(utility_metric(&[(attrs(&[0.5]), attrs(&[0.5]))], 1.0, false).is_err());
    }

    #[test]
    fn reports_write_csv() {
        let dir = tempfile::tempdir().unwrap();
        let r = privacy_from_distances(vec![0.5, 1.5], 0.9);
        let p = dir.path().join("p.csv");
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 3);
        write_json(&r, &dir.path().join("p.json")).unwrap();
    }
}
