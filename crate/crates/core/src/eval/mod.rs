//! Privacy and utility evaluation of an anonymized dataset.

mod compare;
mod diversity;
mod rank;
mod roc;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{AttributeVector, IdentityEmbedding};
use crate::error::{Error, Result};
use crate::metrics::{identity_distance, privacy_metric, utility_metric, MetricConfig, PrivacyReport, UtilityReport};

pub use compare::{compare_methods, reference, ComparisonTable, MethodReport, MetricValue};
pub use diversity::{identity_diversity, kmeans, silhouette, DiversityConfig, DiversityReport};
pub use rank::{identification_rank, rank_of, Labeled, RankReport};
pub use roc::{roc_from_distances, verification_roc, RocCurve, RocPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDistributionReport {
    pub attributes: Vec<usize>,
    pub theta: f64,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub drift: Vec<f64>,
}

/// Fraction of faces with `a_j > theta`, before and after, per attribute.
pub fn attribute_distribution(
    before: &[AttributeVector],
    after: &[AttributeVector],
    attributes: &[usize],
    theta: f64,
) -> Result<AttributeDistributionReport> {
    if before.len() != after.len() {
        return Err(Error::DimMismatch {
            expected: before.len(),
            actual: after.len(),
        });
    }
    if before.is_empty() {
        return Err(Error::Empty("attribute vectors"));
    }
    let rate = |set: &[AttributeVector], j: usize| -> Result<f64> {
        let mut hits = 0usize;
        for a in set {
            let v = *a.values().get(j).ok_or_else(|| {
                Error::InvalidArgument(format!("attribute index {j} out of range for {} attributes", a.len()))
            })?;
            if v > theta {
                hits += 1;
            }
        }
        Ok(hits as f64 / set.len() as f64)
    };
    let mut out = AttributeDistributionReport {
        attributes: attributes.to_vec(),
        theta,
        before: Vec::new(),
        after: Vec::new(),
        drift: Vec::new(),
    };
    for &j in attributes {
        let (b, a) = (rate(before, j)?, rate(after, j)?);
        out.before.push(b);
        out.after.push(a);
        out.drift.push((b - a).abs());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceFeatures {
    pub embedding: IdentityEmbedding,
    pub attributes: AttributeVector,
}

/// One source image and its anonymized counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    /// Identity label; the image id when no labels are known.
    pub identity: String,
    pub original: FaceFeatures,
    pub anonymized: FaceFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub metric: MetricConfig,
    /// Fraction of each identity's images placed in the gallery.
    pub gallery_split: f64,
    /// Impostor pairs per record: record `i` against records `i + 1 ..= i + k`.
    pub impostor_offsets: usize,
    pub diversity: DiversityConfig,
    /// Attributes for the distribution report; all when empty.
    pub attributes: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric: MetricConfig::default(),
            gallery_split: 0.9,
            impostor_offsets: 5,
            diversity: DiversityConfig::default(),
            attributes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_records: usize,
    pub n_identities: usize,
    pub privacy: PrivacyReport,
    pub utility: UtilityReport,
    pub roc: RocCurve,
    pub rank: RankReport,
    pub diversity: Option<DiversityReport>,
    pub attributes: AttributeDistributionReport,
}

/// Gallery of originals and probes of anonymized faces. Identities with a
/// single image contribute its original to the gallery and its anonymized
/// version as probe; larger identities are split by `ratio`.
pub fn gallery_probe_split(records: &[EvalRecord], ratio: f64) -> (Vec<Labeled>, Vec<Labeled>) {
    let mut groups: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.identity.as_str()).or_default().push(r);
    }
    let (mut gallery, mut probes) = (Vec::new(), Vec::new());
    for (id, members) in groups {
        if members.len() == 1 {
            gallery.push((id.to_string(), members[0].original.embedding.clone()));
            probes.push((id.to_string(), members[0].anonymized.embedding.clone()));
            continue;
        }
        let m = members.len();
        let k = ((m as f64 * ratio).round() as usize).clamp(1, m - 1);
        for (i, r) in members.iter().enumerate() {
            if i < k {
                gallery.push((id.to_string(), r.original.embedding.clone()));
            } else {
                probes.push((id.to_string(), r.anonymized.embedding.clone()));
            }
        }
    }
    (gallery, probes)
}

pub fn evaluate(records: &[EvalRecord], cfg: &EvalConfig) -> Result<EvaluationReport> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument("evaluation needs at least 2 records".into()));
    }
    cfg.metric.validate()?;
    let privacy_pairs: Vec<(IdentityEmbedding, IdentityEmbedding)> = records
        .iter()
        .map(|r| (r.original.embedding.clone(), r.anonymized.embedding.clone()))
        .collect();
    let privacy = privacy_metric(&privacy_pairs, cfg.metric.gamma)?;
    let utility_pairs: Vec<(AttributeVector, AttributeVector)> = records
        .iter()
        .map(|r| (r.original.attributes.clone(), r.anonymized.attributes.clone()))
        .collect();
    let utility = utility_metric(&utility_pairs, cfg.metric.theta, cfg.metric.attribute_logit)?;

    let n = records.len();
    let mut impostor = Vec::new();
    for i in 0..n {
        for off in 1..=cfg.impostor_offsets.min(n - 1) {
            let j = (i + off) % n;
            if records[i].identity != records[j].identity {
                impostor.push(identity_distance(&records[i].original.embedding, &records[j].anonymized.embedding)?);
            }
        }
    }
    let roc = roc_from_distances(&privacy.distances, &impostor)?;

    let (gallery, probes) = gallery_probe_split(records, cfg.gallery_split);
    let rank = identification_rank(&gallery, &probes)?;
    let n_identities = rank.n_identities;

    let anonymized: Vec<IdentityEmbedding> = records.iter().map(|r| r.anonymized.embedding.clone()).collect();
    let diversity = if cfg.diversity.k_grid.is_empty() {
        None
    } else {
        Some(identity_diversity(&anonymized, Some(n_identities), &cfg.diversity)?)
    };

    let attrs: Vec<usize> = if cfg.attributes.is_empty() {
        (0..records[0].original.attributes.len()).collect()
    } else {
        cfg.attributes.clone()
    };
    let (before, after): (Vec<_>, Vec<_>) = records
        .iter()
        .map(|r| (r.original.attributes.clone(), r.anonymized.attributes.clone()))
        .unzip();
    let attributes = attribute_distribution(&before, &after, &attrs, cfg.metric.theta)?;
    Ok(EvaluationReport {
        n_records: n,
        n_identities,
        privacy,
        utility,
        roc,
        rank,
        diversity,
        attributes,
    })
}
