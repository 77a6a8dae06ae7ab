use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::IdentityEmbedding;
use crate::error::{Error, Result};
use crate::metrics::identity_distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Pairs with distance `<= threshold` are predicted to match. The first
    /// point uses negative infinity (serialized as `null`).
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub accuracy: f64,
    pub best_threshold: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl RocCurve {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["threshold", "tpr", "fpr", "accuracy"])?;
        for p in &self.points {
            w.write_record([
                format!("{:.12}", p.threshold),
                format!("{:.12}", p.tpr),
                format!("{:.12}", p.fpr),
                format!("{:.12}", p.accuracy),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Threshold sweep over pooled distances. Genuine pairs are positives.
pub fn roc_from_distances(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve> {
    if genuine.is_empty() {
        return Err(Error::Empty("genuine pairs"));
    }
    if impostor.is_empty() {
        return Err(Error::Empty("impostor pairs"));
    }
    if let Some(i) = genuine.iter().chain(impostor).position(|d| !d.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut pooled: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&d| (d, true))
        .chain(impostor.iter().map(|&d| (d, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (g, n) = (genuine.len() as f64, impostor.len() as f64);
    let total = g + n;
    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        tpr: 0.0,
        fpr: 0.0,
        accuracy: n / total,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < pooled.len() {
        let t = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == t {
            if pooled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            tpr: tp as f64 / g,
            fpr: fp as f64 / n,
            accuracy: (tp as f64 + (n - fp as f64)) / total,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum::<f64>();
    let best = points
        .iter()
        .enumerate()
        .fold(0, |b, (k, p)| if p.accuracy > points[b].accuracy { k } else { b });
    Ok(RocCurve {
        accuracy: points[best].accuracy,
        best_threshold: points[best].threshold,
        points,
        auc,
        n_genuine: genuine.len(),
        n_impostor: impostor.len(),
    })
}

pub fn verification_roc(
    genuine_pairs: &[(IdentityEmbedding, IdentityEmbedding)],
    impostor_pairs: &[(IdentityEmbedding, IdentityEmbedding)],
) -> Result<RocCurve> {
    let dist = |pairs: &[(IdentityEmbedding, IdentityEmbedding)]| {
        pairs.iter().map(|(a, b)| identity_distance(a, b)).collect::<Result<Vec<_>>>()
    };
    roc_from_distances(&dist(genuine_pairs)?, &dist(impostor_pairs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_distances() {
        let r = roc_from_distances(&[0.1; 5], &[2.0; 7]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.best_threshold, 0.1);
    }

    #[test]
    fn small_example_counts_pairs() {
        let r = roc_from_distances(&[0.1, 0.3], &[0.2, 0.4]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-12);
        let first = r.points[0];
        assert_eq!((first.tpr, first.fpr), (0.0, 0.0));
        let last = r.points.last().unwrap();
        assert_eq!((last.tpr, last.fpr), (1.0, 1.0));
    }

    #[test]
    fn ties_count_half() {
        let r = roc_from_distances(&[1.0], &[1.0]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert!(roc_from_distances(&[], &[1.0]).is_err());
    }
}
