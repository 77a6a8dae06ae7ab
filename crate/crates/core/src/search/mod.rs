//! Locating identity-carrying latent coordinates by swap experiments.
//!
//! Every search follows the same pattern: for each candidate selection and
//! each `(source, target)` pair, swap the selection from target into source,
//! generate, and measure identity and attribute distances against the
//! generated source. Raw distances of the whole call form the normalization
//! population, and candidates are ranked by their mean IA score.

mod channels;
mod correlation;
mod layers;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{AttributeVector, BackendBundle, IdentityEmbedding};
use crate::error::{Error, Result};
use crate::latent::{swap, LatentCode, Selection};
use crate::metrics::{attribute_distance, ia_score, identity_distance, MetricConfig, NormalizationStats};
use crate::rng::derive_seed;

pub use channels::{
    channel_score_scan, greedy_block_select, BlockScore, BlockSelection, ChannelScoreTable, StopCriterion, StopReason,
};
pub use correlation::{attribute_identity_correlation, pearson, CorrelationReport};
pub use layers::{greedy_layer_select, layer_window_search, LayerSearchResult, WindowScore};

pub type LatentPair = (LatentCode, LatentCode);

pub const DEFAULT_PAIRS: usize = 200;
pub const DEFAULT_SMOOTHING: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub metric: MetricConfig,
    /// Also score the reverse swap (source into target) and average.
    pub symmetric: bool,
    pub n_pairs: usize,
    /// Channel window of the smoothed channel-score view.
    pub smoothing: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            metric: MetricConfig::default(),
            symmetric: true,
            n_pairs: DEFAULT_PAIRS,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

/// `n` random latent pairs drawn from the backend prior.
pub fn sample_pairs(backend: &BackendBundle, n: usize, seed: u64) -> Result<Vec<LatentPair>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            Ok((
                backend.sample_random_latent(derive_seed(seed, 2 * i))?,
                backend.sample_random_latent(derive_seed(seed, 2 * i + 1))?,
            ))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct Features {
    pub embedding: IdentityEmbedding,
    pub attributes: AttributeVector,
}

pub(crate) fn features(backend: &BackendBundle, latent: &LatentCode) -> Result<Features> {
    let img = backend.generate(latent)?;
    Ok(Features {
        embedding: backend.embed_identity(&img)?,
        attributes: backend.predict_attributes(&img)?,
    })
}

/// Raw `(delta_id, delta_attr)` of one swap measured against its base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawDistance {
    pub delta_id: f64,
    pub delta_attr: f64,
}

fn raw_distance(base: &Features, out: &Features, attribute_logit: bool) -> Result<RawDistance> {
    Ok(RawDistance {
        delta_id: identity_distance(&base.embedding, &out.embedding)?,
        delta_attr: attribute_distance(&base.attributes, &out.attributes, attribute_logit)?,
    })
}

/// Mean scores of one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub ia: f64,
    pub delta_id: f64,
    pub delta_attr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPopulation {
    pub scores: Vec<CandidateScore>,
    pub id_stats: NormalizationStats,
    pub attr_stats: NormalizationStats,
}

/// Normalizes over every raw distance of every candidate and averages the
/// IA score per candidate in a fixed order.
pub fn score_population(raw: &[Vec<RawDistance>], metric: &MetricConfig, population: &str) -> Result<ScoredPopulation> {
    let ids: Vec<f64> = raw.iter().flatten().map(|r| r.delta_id).collect();
    let attrs: Vec<f64> = raw.iter().flatten().map(|r| r.delta_attr).collect();
    let id_stats = NormalizationStats::from_values(&ids, population)?;
    let attr_stats = NormalizationStats::from_values(&attrs, population)?;
    let scores = raw
        .iter()
        .map(|samples| {
            let n = samples.len() as f64;
            let mut acc = CandidateScore {
                ia: 0.0,
                delta_id: 0.0,
                delta_attr: 0.0,
            };
            for r in samples {
                let s = ia_score(r.delta_id, r.delta_attr, metric.alpha, metric.beta, &id_stats, &attr_stats);
                acc.ia += s.ia;
                acc.delta_id += r.delta_id;
                acc.delta_attr += r.delta_attr;
            }
            CandidateScore {
                ia: acc.ia / n,
                delta_id: acc.delta_id / n,
                delta_attr: acc.delta_attr / n,
            }
        })
        .collect();
    Ok(ScoredPopulation {
        scores,
        id_stats,
        attr_stats,
    })
}

/// Runs every candidate selection over every pair and scores the result.
pub(crate) fn evaluate_candidates(
    pairs: &[LatentPair],
    candidates: &[Selection],
    backend: &BackendBundle,
    cfg: &SearchConfig,
    population: &str,
) -> Result<ScoredPopulation> {
    if pairs.is_empty() {
        return Err(Error::Empty("search pairs"));
    }
    if candidates.is_empty() {
        return Err(Error::Empty("search candidates"));
    }
    cfg.metric.validate()?;
    for c in candidates {
        c.validate(backend.latent_shape())?;
    }
    let base: Vec<(Features, Option<Features>)> = pairs
        .par_iter()
        .map(|(s, t)| {
            let fs = features(backend, s)?;
            let ft = if cfg.symmetric { Some(features(backend, t)?) } else { None };
            Ok((fs, ft))
        })
        .collect::<Result<_>>()?;
    let logit = cfg.metric.attribute_logit;
    let raw: Vec<Vec<RawDistance>> = candidates
        .par_iter()
        .map(|sel| {
            let mut out = Vec::with_capacity(pairs.len() * if cfg.symmetric { 2 } else { 1 });
            for ((s, t), (fs, ft)) in pairs.iter().zip(&base) {
                out.push(raw_distance(fs, &features(backend, &swap(s, t, sel)?)?, logit)?);
                if let Some(ft) = ft {
                    out.push(raw_distance(ft, &features(backend, &swap(t, s, sel)?)?, logit)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    score_population(&raw, &cfg.metric, population)
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushAwayResult {
    pub latent: LatentCode,
    pub chosen: usize,
    pub scores: Vec<CandidateScore>,
}

/// Swaps `selection` from each candidate into `source` and keeps the swap
/// with the highest IA score against the source.
pub fn push_away(
    source: &LatentCode,
    candidates: &[LatentCode],
    selection: &Selection,
    backend: &BackendBundle,
    metric: &MetricConfig,
) -> Result<PushAwayResult> {
    if candidates.is_empty() {
        return Err(Error::Empty("push-away candidates"));
    }
    selection.validate(backend.latent_shape())?;
    let base = features(backend, source)?;
    let swapped: Vec<(LatentCode, RawDistance)> = candidates
        .par_iter()
        .map(|c| {
            let out = swap(source, c, selection)?;
            let d = raw_distance(&base, &features(backend, &out)?, metric.attribute_logit)?;
            Ok((out, d))
        })
        .collect::<Result<_>>()?;
    let raw: Vec<Vec<RawDistance>> = swapped.iter().map(|(_, d)| vec![*d]).collect();
    let scored = score_population(&raw, metric, "push-away candidates")?;
    let chosen = argmax(scored.scores.iter().map(|s| s.ia)).expect("non-empty");
    Ok(PushAwayResult {
        latent: swapped[chosen].0.clone(),
        chosen,
        scores: scored.scores,
    })
}
