use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::IdentityEmbedding;
use crate::error::{Error, Result};
use crate::metrics::identity_distance;

pub type Labeled = (String, IdentityEmbedding);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub ranks: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n_identities: usize,
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Rank of a true-identity distance among per-identity distances:
/// `1 + #closer + #ties / 2`, ties excluding the true identity itself.
pub fn rank_of(true_distance: f64, others: impl IntoIterator<Item = f64>) -> f64 {
    let (mut closer, mut ties) = (0usize, 0usize);
    for d in others {
        if d < true_distance {
            closer += 1;
        } else if d == true_distance {
            ties += 1;
        }
    }
    1.0 + closer as f64 + ties as f64 / 2.0
}

/// Per probe, the rank of its true identity when gallery identities are
/// ordered by distance (minimum over each identity's gallery images).
pub fn identification_rank(gallery: &[Labeled], probes: &[Labeled]) -> Result<RankReport> {
    if gallery.is_empty() {
        return Err(Error::Empty("gallery"));
    }
    if probes.is_empty() {
        return Err(Error::Empty("probes"));
    }
    let mut by_id: BTreeMap<&str, Vec<&IdentityEmbedding>> = BTreeMap::new();
    for (label, e) in gallery {
        by_id.entry(label.as_str()).or_default().push(e);
    }
    let ids: Vec<(&str, Vec<&IdentityEmbedding>)> = by_id.into_iter().collect();
    let ranks = probes
        .par_iter()
        .map(|(label, probe)| {
            let mut truth = None;
            let mut others = Vec::with_capacity(ids.len());
            for (id, images) in &ids {
                let mut best = f64::INFINITY;
                for g in images {
                    best = best.min(identity_distance(g, probe)?);
                }
                if *id == label.as_str() {
                    truth = Some(best);
                } else {
                    others.push(best);
                }
            }
            let t = truth.ok_or_else(|| Error::InvalidArgument(format!("probe identity `{label}` is not in the gallery")))?;
            Ok(rank_of(t, others))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&ranks);
    Ok(RankReport {
        ranks,
        mean,
        std,
        n_identities: ids.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: &[f64]) -> IdentityEmbedding {
        IdentityEmbedding::new(v.to_vec()).unwrap()
    }

    #[test]
    fn exact_match_is_rank_one() {
        let gallery = vec![("a".into(), e(&[0.0, 0.0])), ("b".into(), e(&[5.0, 0.0])), ("c".into(), e(&[0.0, 5.0]))];
        let r = identification_rank(&gallery, &[("a".into(), e(&[0.0, 0.0]))]).unwrap();
        assert_eq!(r.ranks, vec![1.0]);
    }

    #[test]
    fn equidistant_probe_gets_middle_rank() {
        let gallery: Vec<Labeled> = (0..4)
            .map(|k| {
                let mut v = vec![0.0; 4];
                v[k] = 1.0;
                (format!("id{k}"), e(&v))
            })
            .collect();
        let r = identification_rank(&gallery, &[("id2".into(), e(&[0.0; 4]))]).unwrap();
        assert_eq!(r.ranks, vec![2.5]);
    }

    #[test]
    fn min_over_gallery_images() {
        let gallery = vec![
            ("a".into(), e(&[10.0])),
            ("a".into(), e(&[0.1])),
            ("b".into(), e(&[1.0])),
        ];
        let r = identification_rank(&gallery, &[("a".into(), e(&[0.0]))]).unwrap();
        assert_eq!(r.ranks, vec![1.0]);
        assert!(identification_rank(&gallery, &[("z".into(), e(&[0.0]))]).is_err());
    }
}
