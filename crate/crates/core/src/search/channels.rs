use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate_candidates, features, LatentPair, SearchConfig};
use crate::backend::BackendBundle;
use crate::error::{Error, Result};
use crate::latent::{swap_channels, ChannelBlock, ChannelBlockSet, LayerSet, Selection};
use crate::metrics::{identity_distance, NormalizationStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockScore {
    pub block: ChannelBlock,
    pub ia: f64,
    pub delta_id: f64,
    pub delta_attr: f64,
}

impl BlockScore {
    /// Score per swapped channel; the ranking key, so that a short tail
    /// block competes fairly with full blocks.
    pub fn per_channel(&self) -> f64 {
        self.ia / self.block.len as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScoreTable {
    pub block_size: usize,
    pub layers: LayerSet,
    /// Ordered by layer, then block start.
    pub blocks: Vec<BlockScore>,
    pub smoothing: usize,
    /// Per scanned layer: mean per-channel score over consecutive windows
    /// of `smoothing` channels.
    pub smoothed: Vec<(usize, Vec<f64>)>,
    pub id_stats: NormalizationStats,
    pub attr_stats: NormalizationStats,
    pub n_pairs: usize,
    pub backend_id: String,
}

impl ChannelScoreTable {
    /// Blocks in descending per-channel score; ties go to the lowest
    /// `(layer, start)`.
    pub fn ranking(&self) -> Vec<BlockScore> {
        let mut out = self.blocks.clone();
        out.sort_by(|a, b| {
            b.per_channel()
                .total_cmp(&a.per_channel())
                .then((a.block.layer, a.block.start).cmp(&(b.block.layer, b.block.start)))
        });
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["layer", "block_start", "block_len", "score", "delta_id", "delta_attr"])?;
        for b in &self.blocks {
            w.write_record([
                b.block.layer.to_string(),
                b.block.start.to_string(),
                b.block.len.to_string(),
                format!("{:.12}", b.ia),
                format!("{:.12}", b.delta_id),
                format!("{:.12}", b.delta_attr),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_smoothed_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["layer", "block_start", "score"])?;
        for (layer, values) in &self.smoothed {
            for (k, v) in values.iter().enumerate() {
                w.write_record([layer.to_string(), (k * self.smoothing).to_string(), format!("{v:.12}")])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scores each block of `block_size` channels in `layers` by swapping only
/// that block.
pub fn channel_score_scan(
    pairs: &[LatentPair],
    layers: &LayerSet,
    block_size: usize,
    backend: &BackendBundle,
    cfg: &SearchConfig,
) -> Result<ChannelScoreTable> {
    let shape = backend.latent_shape();
    if block_size == 0 || block_size > shape.n_channels {
        return Err(Error::InvalidArgument(format!(
            "block size {block_size} outside 1..={}",
            shape.n_channels
        )));
    }
    if cfg.smoothing == 0 {
        return Err(Error::InvalidArgument("smoothing window must be positive".into()));
    }
    if layers.is_empty() {
        return Err(Error::Empty("scan layers"));
    }
    layers.validate(shape)?;
    let blocks: Vec<ChannelBlock> = layers
        .iter()
        .flat_map(|l| {
            (0..shape.n_channels)
                .step_by(block_size)
                .map(move |s| ChannelBlock::new(l, s, block_size.min(shape.n_channels - s)))
        })
        .collect();
    let candidates: Vec<Selection> = blocks
        .iter()
        .map(|&b| Selection::Channels(ChannelBlockSet::new([b])))
        .collect();
    let scored = evaluate_candidates(pairs, &candidates, backend, cfg, "all scanned channel blocks")?;
    let blocks: Vec<BlockScore> = blocks
        .into_iter()
        .zip(&scored.scores)
        .map(|(block, s)| BlockScore {
            block,
            ia: s.ia,
            delta_id: s.delta_id,
            delta_attr: s.delta_attr,
        })
        .collect();
    let smoothed = layers
        .iter()
        .map(|l| {
            let mut per_channel = vec![0.0; shape.n_channels];
            for b in blocks.iter().filter(|b| b.block.layer == l) {
                per_channel[b.block.start..b.block.end()].fill(b.per_channel());
            }
            let means = per_channel
                .chunks(cfg.smoothing)
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect();
            (l, means)
        })
        .collect();
    Ok(ChannelScoreTable {
        block_size,
        layers: layers.clone(),
        blocks,
        smoothing: cfg.smoothing,
        smoothed,
        id_stats: scored.id_stats,
        attr_stats: scored.attr_stats,
        n_pairs: pairs.len(),
        backend_id: backend.id().to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// Maximum number of swapped channels.
    Budget(usize),
    /// Stop once the mean identity distance exceeds this value.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Budget,
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSelection {
    pub block_size: usize,
    pub picks: Vec<ChannelBlock>,
    pub cum_channels: Vec<usize>,
    /// Mean identity distance to the generated source after each pick.
    pub id_distance: Vec<f64>,
    pub stop: StopReason,
    pub backend_id: String,
}

impl BlockSelection {
    pub fn selection(&self) -> ChannelBlockSet {
        ChannelBlockSet::new(self.picks.iter().copied())
    }

    pub fn n_channels(&self) -> usize {
        self.cum_channels.last().copied().unwrap_or(0)
    }

    pub fn final_distance(&self) -> f64 {
        self.id_distance.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["picks", "layer", "block_start", "block_len", "cum_channels", "id_distance"])?;
        for (k, ((b, c), d)) in self.picks.iter().zip(&self.cum_channels).zip(&self.id_distance).enumerate() {
            w.write_record([
                (k + 1).to_string(),
                b.layer.to_string(),
                b.start.to_string(),
                b.len.to_string(),
                c.to_string(),
                format!("{d:.12}"),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Adds blocks in ranking order and records the identity distance after
/// each addition. The distance is averaged over `pairs`.
pub fn greedy_block_select(
    table: &ChannelScoreTable,
    stop: StopCriterion,
    backend: &BackendBundle,
    pairs: &[LatentPair],
) -> Result<BlockSelection> {
    if pairs.is_empty() {
        return Err(Error::Empty("selection pairs"));
    }
    if let StopCriterion::Threshold(t) = stop {
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("threshold {t} is not finite")));
        }
    }
    let base = pairs
        .par_iter()
        .map(|(s, _)| features(backend, s).map(|f| f.embedding))
        .collect::<Result<Vec<_>>>()?;
    let mut out = BlockSelection {
        block_size: table.block_size,
        picks: Vec::new(),
        cum_channels: Vec::new(),
        id_distance: Vec::new(),
        stop: StopReason::Budget,
        backend_id: backend.id().to_string(),
    };
    let mut chosen = ChannelBlockSet::empty();
    let mut total = 0;
    for candidate in table.ranking() {
        let b = candidate.block;
        if let StopCriterion::Budget(budget) = stop {
            if total + b.len > budget {
                break;
            }
        }
        chosen.push(b);
        total += b.len;
        let dists = pairs
            .par_iter()
            .zip(&base)
            .map(|((s, t), e)| {
                let f = features(backend, &swap_channels(s, t, &chosen)?)?;
                identity_distance(e, &f.embedding)
            })
            .collect::<Result<Vec<_>>>()?;
        let d = dists.iter().sum::<f64>() / dists.len() as f64;
        out.picks.push(b);
        out.cum_channels.push(total);
        out.id_distance.push(d);
        if let StopCriterion::Threshold(t) = stop {
            if d > t {
                out.stop = StopReason::Threshold;
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::sample_pairs;
    use super::super::tests::world;
    use super::*;
    use crate::latent::swap;
    use crate::search::layer_window_search;

    #[test]
    fn planted_block_ranks_first() {
        let b = world("8:100-131", 256);
        let pairs = sample_pairs(&b, 3, 1).unwrap();
        let cfg = SearchConfig::default();
        for bs in [1, 16] {
            let t = channel_score_scan(&pairs, &LayerSet::new([8]), bs, &b, &cfg).unwrap();
            let ranked = t.ranking();
            let top: usize = ranked.iter().take_while(|s| s.delta_id > 0.0).map(|s| s.block.len).sum();
            let planted: Vec<ChannelBlock> = ranked
                .iter()
                .filter(|s| s.block.start < 132 && s.block.end() > 100)
                .map(|s| s.block)
                .collect();
            let n = planted.len();
            assert!(ranked[..n].iter().all(|s| planted.contains(&s.block)), "block size {bs}");
            assert!(top >= 32);
        }
    }

    #[test]
    fn non_identity_blocks_score_at_most_zero() {
        let b = world("8:0-15", 64);
        let pairs = sample_pairs(&b, 3, 2).unwrap();
        let t = channel_score_scan(&pairs, &LayerSet::new([8, 9]), 8, &b, &SearchConfig::default()).unwrap();
        for s in &t.blocks {
            if s.block.layer != 8 || s.block.start >= 16 {
                assert!(s.ia <= 0.0, "{:?}", s);
            }
        }
        assert_eq!(t.smoothed.len(), 2);
        assert_eq!(t.smoothed[0].1.len(), 4);
    }

    #[test]
    fn full_width_blocks_match_single_layer_search() {
        let b = world("5-7:*", 16);
        let pairs = sample_pairs(&b, 3, 3).unwrap();
        let cfg = SearchConfig::default();
        let t = channel_score_scan(&pairs, &LayerSet::all(18), 16, &b, &cfg).unwrap();
        let r = layer_window_search(&pairs, &[1], &b, &cfg).unwrap();
        for s in &t.blocks {
            let expected = r.score(s.block.layer, 1).unwrap();
            assert!((s.ia - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_block_is_shorter() {
        let b = world("5-7:*", 16);
        let pairs = sample_pairs(&b, 1, 4).unwrap();
        let t = channel_score_scan(&pairs, &LayerSet::new([5]), 6, &b, &SearchConfig::default()).unwrap();
        let lens: Vec<usize> = t.blocks.iter().map(|s| s.block.len).collect();
        assert_eq!(lens, vec![6, 6, 4]);
        assert!(channel_score_scan(&pairs, &LayerSet::new([5]), 0, &b, &SearchConfig::default()).is_err());
    }

    #[test]
    fn greedy_budget_edges() {
        let b = world("8:0-15", 32);
        let pairs = sample_pairs(&b, 2, 5).unwrap();
        let layers = LayerSet::all(18);
        let t = channel_score_scan(&pairs, &layers, 32, &b, &SearchConfig::default()).unwrap();
        let none = greedy_block_select(&t, StopCriterion::Budget(0), &b, &pairs).unwrap();
        assert!(none.picks.is_empty());
        assert_eq!(none.final_distance(), 0.0);

        let all = greedy_block_select(&t, StopCriterion::Budget(18 * 32), &b, &pairs).unwrap();
        assert_eq!(all.n_channels(), 18 * 32);
        let full: f64 = pairs
            .iter()
            .map(|(s, tg)| {
                let full = swap(s, tg, &Selection::Layers(layers.clone())).unwrap();
                let a = features(&b, s).unwrap().embedding;
                identity_distance(&a, &features(&b, &full).unwrap().embedding).unwrap()
            })
            .sum::<f64>()
            / 2.0;
        assert!((all.final_distance() - full).abs() < 1e-12);
        assert!(all.id_distance.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn unreachable_threshold_reports_budget() {
        let b = world("8:0-15", 32);
        let pairs = sample_pairs(&b, 1, 6).unwrap();
        let t = channel_score_scan(&pairs, &LayerSet::new([8]), 8, &b, &SearchConfig::default()).unwrap();
        let s = greedy_block_select(&t, StopCriterion::Threshold(1e9), &b, &pairs).unwrap();
        assert_eq!(s.stop, StopReason::Budget);
        assert_eq!(s.n_channels(), 32);
    }
}
