use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{features, LatentPair};
use crate::backend::BackendBundle;
use crate::error::{Error, Result};
use crate::latent::{swap_layers, LayerSet};
use crate::metrics::identity_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub layers: LayerSet,
    pub n_samples: usize,
    /// Pearson r per attribute; `None` when either series is constant.
    pub r: Vec<Option<f64>>,
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // relative tolerance so float noise around a constant series counts as constant
    let tiny = |s: f64, m: f64| s <= 1e-24 * n * m.abs().max(1.0).powi(2);
    if tiny(sxx, mx) || tiny(syy, my) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlates the identity change of a layer swap with the L1 change of
/// each attribute confidence.
pub fn attribute_identity_correlation(
    pairs: &[LatentPair],
    layers: &LayerSet,
    backend: &BackendBundle,
) -> Result<CorrelationReport> {
    if pairs.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 pairs, got {}",
            pairs.len()
        )));
    }
    layers.validate(backend.latent_shape())?;
    let samples = pairs
        .par_iter()
        .map(|(s, t)| {
            let a = features(backend, s)?;
            let b = features(backend, &swap_layers(s, t, layers)?)?;
            let d_id = identity_distance(&a.embedding, &b.embedding)?;
            let d_attr: Vec<f64> = a
                .attributes
                .values()
                .iter()
                .zip(b.attributes.values())
                .map(|(x, y)| (x - y).abs())
                .collect();
            Ok((d_id, d_attr))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let n_attr = backend.descriptor().n_attributes;
    let r = (0..n_attr)
        .map(|j| {
            let col: Vec<f64> = samples.iter().map(|s| s.1[j]).collect();
            pearson(&ids, &col)
        })
        .collect();
    Ok(CorrelationReport {
        layers: layers.clone(),
        n_samples: pairs.len(),
        r,
    })
}
