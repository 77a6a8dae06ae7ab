use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{argmax, evaluate_candidates, LatentPair, SearchConfig};
use crate::backend::BackendBundle;
use crate::error::{Error, Result};
use crate::latent::{LayerSet, Selection};
use crate::metrics::NormalizationStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub start: usize,
    pub size: usize,
    pub ia: f64,
    pub delta_id: f64,
    pub delta_attr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSearchResult {
    /// Ordered by window size, then start layer.
    pub table: Vec<WindowScore>,
    pub best_consecutive: (usize, usize),
    /// `(layer, ia)` for single-layer windows, best first.
    pub top_individual: Vec<(usize, f64)>,
    pub id_stats: NormalizationStats,
    pub attr_stats: NormalizationStats,
    pub n_pairs: usize,
    pub symmetric: bool,
    pub backend_id: String,
}

impl LayerSearchResult {
    pub fn score(&self, start: usize, size: usize) -> Option<f64> {
        self.table.iter().find(|w| w.start == start && w.size == size).map(|w| w.ia)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "m", "score", "delta_id", "delta_attr"])?;
        for s in &self.table {
            w.write_record([
                s.start.to_string(),
                s.size.to_string(),
                format!("{:.12}", s.ia),
                format!("{:.12}", s.delta_id),
                format!("{:.12}", s.delta_attr),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Scores every window of `m` consecutive layers for each `m` in `m_values`.
pub fn layer_window_search(
    pairs: &[LatentPair],
    m_values: &[usize],
    backend: &BackendBundle,
    cfg: &SearchConfig,
) -> Result<LayerSearchResult> {
    let n_layers = backend.latent_shape().n_layers;
    if m_values.is_empty() {
        return Err(Error::Empty("window sizes"));
    }
    let mut sizes = m_values.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if let Some(&m) = sizes.iter().find(|&&m| m == 0 || m > n_layers) {
        return Err(Error::InvalidArgument(format!("window size {m} outside 1..={n_layers}")));
    }
    let windows: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&m| (0..=n_layers - m).map(move |i| (i, m)))
        .collect();
    let candidates: Vec<Selection> = windows
        .iter()
        .map(|&(i, m)| Selection::Layers(LayerSet::window(i, m)))
        .collect();
    let scored = evaluate_candidates(pairs, &candidates, backend, cfg, "all layer windows")?;
    let table: Vec<WindowScore> = windows
        .iter()
        .zip(&scored.scores)
        .map(|(&(start, size), s)| WindowScore {
            start,
            size,
            ia: s.ia,
            delta_id: s.delta_id,
            delta_attr: s.delta_attr,
        })
        .collect();

    // argmax over (start, size) in lexicographic order so ties favour the lowest start
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by_key(|&k| (table[k].start, table[k].size));
    let best = order[argmax(order.iter().map(|&k| table[k].ia)).expect("non-empty")];

    let mut top_individual: Vec<(usize, f64)> = table.iter().filter(|w| w.size == 1).map(|w| (w.start, w.ia)).collect();
    top_individual.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    Ok(LayerSearchResult {
        best_consecutive: (table[best].start, table[best].size),
        table,
        top_individual,
        id_stats: scored.id_stats,
        attr_stats: scored.attr_stats,
        n_pairs: pairs.len(),
        symmetric: cfg.symmetric,
        backend_id: backend.id().to_string(),
    })
}

/// The `k` best single layers of a search that included `m = 1`.
pub fn greedy_layer_select(result: &LayerSearchResult, k: usize) -> Result<LayerSet> {
    if result.top_individual.is_empty() {
        return Err(Error::InvalidArgument("search did not score single layers (m = 1)".into()));
    }
    if k > result.top_individual.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {k} of {} layers",
            result.top_individual.len()
        )));
    }
    Ok(LayerSet::new(result.top_individual[..k].iter().map(|&(l, _)| l)))
}
