//! Learned latent anonymizer.
//!
//! A small network reads `(L_S, L_R)` row by row and emits a blend weight
//! `alpha` per latent coordinate; the anonymized latent is
//! `alpha * L_S + (1 - alpha) * L_R`. Training targets come from the masked
//! pixel-space pipeline.

mod network;
mod train;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendBundle, IdentityEmbedding};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::latent::{blend, LatentCode, LatentMask};
use crate::mask_anon::{anonymize_masked, MaskAnonConfig};
use crate::rng::derive_seed;

pub use network::{swapper_forward, DenseLayer, PassRule, SwapperArchitecture, SwapperNetwork, SwapperParams};
pub use train::{
    loss_and_gradient, mean_loss, swapper_loss, train_swapper, EpochLoss, IdentitySign, LatentNorm, TrainingConfig,
    TrainingOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPair {
    pub source_id: String,
    pub seed: u64,
    pub l_s: LatentCode,
    pub l_r: LatentCode,
    /// Latent of the masked-anonymization output for this source and seed.
    pub t_truth: LatentCode,
    pub source_embedding: IdentityEmbedding,
}

/// One pair per `(image, k)` for `k < seeds_per_image`. Images the parser
/// or encoder rejects are skipped with a warning.
pub fn build_ground_truth(
    images: &[(String, Image)],
    seeds_per_image: usize,
    base_seed: u64,
    identity_mask: &LatentMask,
    mask_cfg: &MaskAnonConfig,
    backend: &BackendBundle,
) -> Result<Vec<GroundTruthPair>> {
    if images.is_empty() {
        return Err(Error::Empty("ground-truth images"));
    }
    let jobs: Vec<(usize, u64)> = (0..images.len())
        .flat_map(|i| (0..seeds_per_image).map(move |k| (i, derive_seed(base_seed, (i * seeds_per_image + k) as u64))))
        .collect();
    let built: Vec<Option<GroundTruthPair>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let (id, img) = &images[i];
            let attempt = || -> Result<GroundTruthPair> {
                let out = anonymize_masked(img, mask_cfg, seed, identity_mask, backend)?;
                Ok(GroundTruthPair {
                    source_id: id.clone(),
                    seed,
                    l_s: backend.encode(img)?,
                    l_r: backend.sample_random_latent(seed)?,
                    t_truth: backend.encode(&out)?,
                    source_embedding: backend.embed_identity(img)?,
                })
            };
            match attempt() {
                Ok(p) => Ok(Some(p)),
                Err(e @ (Error::Backend(_) | Error::ShapeMismatch { .. } | Error::DimMismatch { .. })) => {
                    log::warn!("skipping {id} (seed {seed}): {e}");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(built.into_iter().flatten().collect())
}

/// First `round(n * ratio)` pairs train, the rest test.
pub fn split<T>(pairs: &[T], ratio: f64) -> (&[T], &[T]) {
    let k = ((pairs.len() as f64) * ratio).round() as usize;
    pairs.split_at(k.min(pairs.len()))
}

pub fn anonymize_with_swapper(net: &SwapperNetwork, source: &Image, seed: u64, backend: &BackendBundle) -> Result<Image> {
    let l_s = backend.encode(source)?;
    let l_r = backend.sample_random_latent(seed)?;
    let (alpha, _) = swapper_forward(net, &l_s, &l_r)?;
    backend.generate(&blend(&l_s, &l_r, &alpha)?)
}

pub const CHECKPOINT_FORMAT: &str = "idswap-swapper-v1";

/// JSON checkpoint: network, training configuration and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapperCheckpoint {
    pub format: String,
    pub backend_id: String,
    pub training: TrainingConfig,
    pub network: SwapperNetwork,
    pub history: Vec<EpochLoss>,
}

impl SwapperCheckpoint {
    pub fn new(backend_id: &str, training: TrainingConfig, outcome: &TrainingOutcome) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            backend_id: backend_id.into(),
            training,
            network: outcome.network.clone(),
            history: outcome.history.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::format(path, format!("unknown checkpoint format `{}`", ck.format)));
        }
        ck.network.architecture.validate()?;
        Ok(ck)
    }
}
