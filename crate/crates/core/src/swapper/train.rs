use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{swapper_forward, SwapperNetwork, SwapperParams};
use super::GroundTruthPair;
use crate::backend::{norm, BackendBundle, IdentityEmbedding};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::latent::{blend, LatentCode, LatentMask};
use crate::rng::{derive_seed, rng};

/// Sign applied to the cosine identity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentitySign {
    /// `+lambda_id * cos`: similarity to the source is penalized.
    #[default]
    Penalize,
    /// `-lambda_id * cos`.
    Literal,
}

impl IdentitySign {
    fn factor(&self) -> f64 {
        match self {
            IdentitySign::Penalize => 1.0,
            IdentitySign::Literal => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentNorm {
    #[default]
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lambda_l2: f64,
    pub lambda_id: f64,
    pub learning_rate: f64,
    /// Fraction of pairs used for training; the rest are held out.
    pub split: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Decoupled L2 shrinkage of the dense-layer weights per step; biases
    /// are not decayed.
    pub weight_decay: f64,
    pub identity_sign: IdentitySign,
    pub latent_norm: LatentNorm,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_l2: 1.0,
            lambda_id: 0.1,
            learning_rate: 0.1,
            split: 0.9,
            epochs: 50,
            batch_size: 8,
            weight_decay: 0.0,
            identity_sign: IdentitySign::Penalize,
            latent_norm: LatentNorm::L1,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda_l2 >= 0.0 && self.lambda_id >= 0.0) {
            return bad(format!("lambdas must be non-negative ({}, {})", self.lambda_l2, self.lambda_id));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} outside (0, 1)", self.split));
        }
        if !(self.weight_decay >= 0.0 && self.learning_rate * self.weight_decay < 1.0) {
            return bad(format!("weight decay {} must be in [0, 1 / learning rate)", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

/// Gradient of `cos(e, e_s)` with respect to `e`.
fn cosine_grad(e: &[f64], e_s: &[f64]) -> Vec<f64> {
    let (ne, ns) = (norm(e), norm(e_s));
    if ne == 0.0 || ns == 0.0 {
        return vec![0.0; e.len()];
    }
    let cos = cosine(e, e_s);
    e.iter().zip(e_s).map(|(a, b)| b / (ne * ns) - cos * a / (ne * ne)).collect()
}

fn latent_term(l_hat: &LatentCode, t_truth: &LatentCode, kind: LatentNorm) -> f64 {
    let d = l_hat.values().iter().zip(t_truth.values()).map(|(a, b)| a - b);
    match kind {
        LatentNorm::L1 => d.map(f64::abs).sum(),
        LatentNorm::L2 => d.map(|v| v * v).sum(),
    }
}

fn identity_term(l_hat: &LatentCode, source: &IdentityEmbedding, backend: &BackendBundle) -> Result<(f64, Vec<f64>)> {
    let e = backend.embed_identity(&backend.generate(l_hat)?)?;
    Ok((cosine(e.values(), source.values()), e.values().to_vec()))
}

pub(crate) fn loss_with_embedding(
    l_hat: &LatentCode,
    t_truth: &LatentCode,
    source: &IdentityEmbedding,
    backend: &BackendBundle,
    cfg: &TrainingConfig,
) -> Result<f64> {
    l_hat.shape().ensure_eq(&t_truth.shape())?;
    let mut loss = cfg.lambda_l2 * latent_term(l_hat, t_truth, cfg.latent_norm);
    if cfg.lambda_id != 0.0 {
        let (cos, _) = identity_term(l_hat, source, backend)?;
        loss += cfg.identity_sign.factor() * cfg.lambda_id * cos;
    }
    Ok(loss)
}

/// `lambda_l2 * |L_hat - t|` plus the signed cosine identity term against
/// the source image.
pub fn swapper_loss(
    l_hat: &LatentCode,
    t_truth: &LatentCode,
    source: &Image,
    backend: &BackendBundle,
    cfg: &TrainingConfig,
) -> Result<f64> {
    let e_s = backend.embed_identity(source)?;
    loss_with_embedding(l_hat, t_truth, &e_s, backend, cfg)
}

/// Loss of one pair and its gradient with respect to every parameter.
pub fn loss_and_gradient(
    net: &SwapperNetwork,
    pair: &GroundTruthPair,
    backend: &BackendBundle,
    cfg: &TrainingConfig,
) -> Result<(f64, SwapperParams)> {
    let trace = net.trace(&pair.l_s, &pair.l_r)?;
    let alpha = LatentMask::continuous(net.shape(), trace.alpha.clone())?;
    let l_hat = blend(&pair.l_s, &pair.l_r, &alpha)?;
    let diff: Vec<f64> = l_hat.values().iter().zip(pair.t_truth.values()).map(|(a, b)| a - b).collect();

    let mut loss = 0.0;
    let mut g_hat = vec![0.0; diff.len()];
    if cfg.lambda_l2 != 0.0 {
        loss += cfg.lambda_l2 * latent_term(&l_hat, &pair.t_truth, cfg.latent_norm);
        for (g, d) in g_hat.iter_mut().zip(&diff) {
            *g += cfg.lambda_l2
                * match cfg.latent_norm {
                    LatentNorm::L1 => {
                        if *d > 0.0 {
                            1.0
                        } else if *d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    LatentNorm::L2 => 2.0 * d,
                };
        }
    }
    if cfg.lambda_id != 0.0 {
        let (cos, e) = identity_term(&l_hat, &pair.source_embedding, backend)?;
        let k = cfg.identity_sign.factor() * cfg.lambda_id;
        loss += k * cos;
        let g_e: Vec<f64> = cosine_grad(&e, pair.source_embedding.values()).iter().map(|v| k * v).collect();
        let g_lat = backend.identity_vjp(&l_hat, &g_e)?;
        g_hat.iter_mut().zip(g_lat.values()).for_each(|(g, v)| *g += v);
    }
    let g_alpha: Vec<f64> = g_hat
        .iter()
        .zip(pair.l_s.values().iter().zip(pair.l_r.values()))
        .map(|(g, (s, r))| g * (s - r))
        .collect();
    let mut grad = net.params.zeros_like();
    net.backward(&pair.l_s, &pair.l_r, &trace, &g_alpha, &mut grad);
    Ok((loss, grad))
}

/// Mean loss of `net` over `pairs`.
pub fn mean_loss(
    net: &SwapperNetwork,
    pairs: &[GroundTruthPair],
    backend: &BackendBundle,
    cfg: &TrainingConfig,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("loss pairs"));
    }
    let losses = pairs
        .par_iter()
        .map(|p| {
            let (_, l_hat) = swapper_forward(net, &p.l_s, &p.l_r)?;
            loss_with_embedding(&l_hat, &p.t_truth, &p.source_embedding, backend, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub network: SwapperNetwork,
    pub initial_train_loss: f64,
    pub history: Vec<EpochLoss>,
}

impl TrainingOutcome {
    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "test_loss"])?;
        w.write_record(["0".to_string(), format!("{:.12}", self.initial_train_loss), String::new()])?;
        for h in &self.history {
            w.write_record([
                h.epoch.to_string(),
                format!("{:.12}", h.train),
                h.test.map(|t| format!("{t:.12}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Mini-batch gradient descent on the mean pair loss. The epoch history
/// records the full training (and held-out) loss after each epoch.
pub fn train_swapper(
    cfg: &TrainingConfig,
    mut network: SwapperNetwork,
    train: &[GroundTruthPair],
    test: &[GroundTruthPair],
    backend: &BackendBundle,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training pairs"));
    }
    let initial_train_loss = mean_loss(&network, train, backend, cfg)?;
    let mut order_rng = rng(derive_seed(cfg.seed, 0x7EA1));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        for batch in order.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| loss_and_gradient(&network, &train[i], backend, cfg))
                .collect::<Result<Vec<_>>>()?;
            let mut total = network.params.zeros_like();
            for (loss, g) in &results {
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        detail: format!("non-finite batch loss {loss}"),
                    });
                }
                total.add_scaled(g, 1.0);
            }
            if cfg.weight_decay > 0.0 {
                network.params.scale_weights(1.0 - cfg.learning_rate * cfg.weight_decay);
            }
            network.params.add_scaled(&total, -cfg.learning_rate / batch.len() as f64);
            if !network.params.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "non-finite parameters after update".into(),
                });
            }
        }
        let train_loss = mean_loss(&network, train, backend, cfg)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("training loss {train_loss}"),
            });
        }
        let test_loss = if test.is_empty() {
            None
        } else {
            Some(mean_loss(&network, test, backend, cfg)?)
        };
        log::info!("epoch {epoch}: train loss {train_loss:.6}");
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            test: test_loss,
        });
    }
    Ok(TrainingOutcome {
        network,
        initial_train_loss,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{SyntheticConfig, SyntheticWorld};
    use crate::latent::LatentShape;
    use crate::swapper::network::{PassRule, SwapperArchitecture};
    use rand::Rng;

    fn bundle() -> BackendBundle {
        let cfg = SyntheticConfig {
            n_channels: 6,
            n_attributes: 4,
            attribute_width: 2,
            identity: "5-7:0-3".into(),
            ..Default::default()
        };
        BackendBundle::synthetic(SyntheticWorld::new(cfg).unwrap())
    }

    fn pair(b: &BackendBundle, seed: u64) -> GroundTruthPair {
        let l_s = b.sample_random_latent(seed).unwrap();
        let l_r = b.sample_random_latent(seed + 1000).unwrap();
        let t_truth = b.sample_random_latent(seed + 2000).unwrap();
        let source_embedding = b.embed_identity(&b.generate(&l_s).unwrap()).unwrap();
        GroundTruthPair {
            source_id: format!("s{seed}"),
            seed,
            l_s,
            l_r,
            t_truth,
            source_embedding,
        }
    }

    fn randomized(shape: LatentShape, seed: u64) -> SwapperNetwork {
        let mut arch = SwapperArchitecture::standard(shape).unwrap();
        arch.pass_rule = PassRule::Learned;
        arch.hidden = 5;
        let mut net = SwapperNetwork::new(arch, seed).unwrap();
        let mut r = rng(seed);
        for s in net.params.slices_mut() {
            s.iter_mut().for_each(|v| *v = r.random_range(-0.3..0.3));
        }
        net
    }

    #[test]
    fn gradients_match_finite_differences() {
        let b = bundle();
        for (k, latent_norm) in [LatentNorm::L1, LatentNorm::L2].into_iter().enumerate() {
            let cfg = TrainingConfig {
                lambda_id: 0.7,
                latent_norm,
                ..Default::default()
            };
            let p = pair(&b, 10 + k as u64);
            let net = randomized(b.latent_shape(), 20 + k as u64);
            let (_, grad) = loss_and_gradient(&net, &p, &b, &cfg).unwrap();
            // images are f32, so the step must be well above f32 resolution
            let h = 1e-3;
            let mut numeric = Vec::new();
            let mut analytic = Vec::new();
            for (si, g) in grad.slices().iter().enumerate() {
                // a spread of indices from every parameter tensor
                let step = (g.len() / 7).max(1);
                for i in (0..g.len()).step_by(step) {
                    let eval = |delta: f64| {
                        let mut n = net.clone();
                        n.params.slices_mut()[si][i] += delta;
                        let (_, l_hat) = swapper_forward(&n, &p.l_s, &p.l_r).unwrap();
                        loss_with_embedding(&l_hat, &p.t_truth, &p.source_embedding, &b, &cfg).unwrap()
                    };
                    numeric.push((eval(h) - eval(-h)) / (2.0 * h));
                    analytic.push(g[i]);
                }
            }
            let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
            let scale = norm(&analytic).max(norm(&numeric));
            assert!(diff / scale <= 1e-4, "{latent_norm:?}: relative error {}", diff / scale);
        }
    }

    #[test]
    fn loss_examples() {
        let b = bundle();
        let shape = b.latent_shape();
        let l = b.sample_random_latent(1).unwrap();
        let img = b.generate(&l).unwrap();
        let cfg = TrainingConfig {
            lambda_id: 0.0,
            ..Default::default()
        };
        let shifted = LatentCode::new(shape, l.values().iter().map(|v| v + 1.0).collect()).unwrap();
        let loss = swapper_loss(&shifted, &l, &img, &b, &cfg).unwrap();
        assert!((loss - shape.len() as f64).abs() < 1e-9);

        let cfg = TrainingConfig::default();
        let loss = swapper_loss(&l, &l, &img, &b, &cfg).unwrap();
        assert!((loss - cfg.lambda_id).abs() < 1e-12, "equal embeddings give cos = 1");
        let lit = TrainingConfig {
            identity_sign: IdentitySign::Literal,
            ..Default::default()
        };
        assert!((swapper_loss(&l, &l, &img, &b, &lit).unwrap() + 0.1).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_embeddings_give_zero_loss() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 2.0]), 0.0);
    }

    #[test]
    fn zero_lambdas_leave_weights_unchanged() {
        let b = bundle();
        let cfg = TrainingConfig {
            lambda_l2: 0.0,
            lambda_id: 0.0,
            epochs: 2,
            ..Default::default()
        };
        let pairs: Vec<_> = (0..4).map(|i| pair(&b, i)).collect();
        let net = randomized(b.latent_shape(), 1);
        let out = train_swapper(&cfg, net.clone(), &pairs, &[], &b).unwrap();
        assert_eq!(out.network, net);
        assert!(out.history.iter().all(|h| h.train == 0.0));
    }

    #[test]
    fn divergence_is_reported() {
        let b = bundle();
        let cfg = TrainingConfig {
            learning_rate: 1e300,
            lambda_l2: 1e10,
            latent_norm: LatentNorm::L2,
            epochs: 3,
            ..Default::default()
        };
        let pairs: Vec<_> = (0..4).map(|i| pair(&b, i)).collect();
        let net = randomized(b.latent_shape(), 2);
        assert!(matches!(
            train_swapper(&cfg, net, &pairs, &[], &b),
            Err(Error::Diverged { .. })
        ));
    }
}
