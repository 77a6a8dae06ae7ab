use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backend::logistic;
use crate::error::{Error, Result};
use crate::latent::{blend, LatentCode, LatentMask, LatentShape, LayerSet};
use crate::rng::{derive_seed, rng};

const LEAK: f64 = 0.2;

/// Alpha rule for latent layers outside the identity group.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PassRule {
    /// Keep the source: alpha = 1.
    #[default]
    Pass,
    /// Fixed blend weight toward the source.
    LowWeight { alpha: f64 },
    /// Use the coarse and fine modules.
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapperArchitecture {
    pub shape: LatentShape,
    pub hidden: usize,
    pub coarse: LayerSet,
    pub identity: LayerSet,
    pub fine: LayerSet,
    pub pass_rule: PassRule,
}

impl SwapperArchitecture {
    /// Coarse layers 0-4, identity 5-11, fine 12-17 on an 18-layer latent;
    /// hidden width equals the channel count.
    pub fn standard(shape: LatentShape) -> Result<Self> {
        let arch = Self {
            shape,
            hidden: shape.n_channels,
            coarse: "0-4".parse()?,
            identity: "5-11".parse()?,
            fine: "12-17".parse()?,
            pass_rule: PassRule::Pass,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be positive".into()));
        }
        let mut seen = vec![0u8; self.shape.n_layers];
        for set in [&self.coarse, &self.identity, &self.fine] {
            set.validate(self.shape)?;
            for l in set.iter() {
                seen[l] += 1;
            }
        }
        if let Some(l) = seen.iter().position(|&c| c != 1) {
            return Err(Error::InvalidArgument(format!(
                "layer groups must partition 0..{}; layer {l} is covered {} times",
                self.shape.n_layers, seen[l]
            )));
        }
        if let PassRule::LowWeight { alpha } = self.pass_rule {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidArgument(format!("low-weight alpha {alpha} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `[n_out, n_in]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weight: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn uniform(n_in: usize, n_out: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        let mut l = Self::zeros(n_in, n_out);
        l.weight.iter_mut().for_each(|w| *w = r.random_range(-bound..bound));
        l
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    fn backward(&self, x: &[f64], g_out: &[f64], grad: &mut DenseLayer) -> Vec<f64> {
        let mut g_in = vec![0.0; self.n_in];
        for (o, &g) in g_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.weight[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] += g * x[i];
                g_in[i] += g * row[i];
            }
        }
        g_in
    }
}

/// All trainable parameters. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapperParams {
    pub coarse: DenseLayer,
    pub id_hidden: DenseLayer,
    pub id_out: DenseLayer,
    pub fine: DenseLayer,
    /// Per latent coordinate, row-major `[n_layers, n_channels]`.
    pub layer_bias: Vec<f64>,
}

impl SwapperParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            coarse: DenseLayer::zeros(self.coarse.n_in, self.coarse.n_out),
            id_hidden: DenseLayer::zeros(self.id_hidden.n_in, self.id_hidden.n_out),
            id_out: DenseLayer::zeros(self.id_out.n_in, self.id_out.n_out),
            fine: DenseLayer::zeros(self.fine.n_in, self.fine.n_out),
            layer_bias: vec![0.0; self.layer_bias.len()],
        }
    }

    pub fn slices(&self) -> [&[f64]; 9] {
        [
            &self.coarse.weight,
            &self.coarse.bias,
            &self.id_hidden.weight,
            &self.id_hidden.bias,
            &self.id_out.weight,
            &self.id_out.bias,
            &self.fine.weight,
            &self.fine.bias,
            &self.layer_bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 9] {
        [
            &mut self.coarse.weight,
            &mut self.coarse.bias,
            &mut self.id_hidden.weight,
            &mut self.id_hidden.bias,
            &mut self.id_out.weight,
            &mut self.id_out.bias,
            &mut self.fine.weight,
            &mut self.fine.bias,
            &mut self.layer_bias,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += k * other`.
    /// Multiplies the dense-layer weight matrices by `k`.
    pub fn scale_weights(&mut self, k: f64) {
        for w in [&mut self.coarse.weight, &mut self.id_hidden.weight, &mut self.id_out.weight, &mut self.fine.weight] {
            w.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn add_scaled(&mut self, other: &SwapperParams, k: f64) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += k * y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Coarse,
    Identity,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapperNetwork {
    pub architecture: SwapperArchitecture,
    pub params: SwapperParams,
}

/// Intermediate values kept for the backward pass.
pub(crate) struct ForwardTrace {
    pub alpha: Vec<f64>,
    hidden: Vec<Option<Vec<f64>>>,
}

impl SwapperNetwork {
    /// Final layers start at zero so every learned alpha is 0.5.
    pub fn new(architecture: SwapperArchitecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let c = architecture.shape.n_channels;
        let h = architecture.hidden;
        let params = SwapperParams {
            coarse: DenseLayer::zeros(2 * c, c),
            id_hidden: DenseLayer::uniform(2 * c, h, derive_seed(seed, 1)),
            id_out: DenseLayer::zeros(h, c),
            fine: DenseLayer::zeros(2 * c, c),
            layer_bias: vec![0.0; architecture.shape.len()],
        };
        Ok(Self { architecture, params })
    }

    pub fn shape(&self) -> LatentShape {
        self.architecture.shape
    }

    fn group(&self, layer: usize) -> Group {
        if self.architecture.identity.contains(layer) {
            Group::Identity
        } else if self.architecture.coarse.contains(layer) {
            Group::Coarse
        } else {
            Group::Fine
        }
    }

    /// Whether the alpha of `layer` comes from the network.
    pub fn is_learned(&self, layer: usize) -> bool {
        self.group(layer) == Group::Identity || self.architecture.pass_rule == PassRule::Learned
    }

    fn input(&self, l_s: &LatentCode, l_r: &LatentCode, layer: usize) -> Vec<f64> {
        let mut x = l_s.row(layer).to_vec();
        x.extend_from_slice(l_r.row(layer));
        x
    }

    pub(crate) fn trace(&self, l_s: &LatentCode, l_r: &LatentCode) -> Result<ForwardTrace> {
        let shape = self.shape();
        shape.ensure_eq(&l_s.shape())?;
        shape.ensure_eq(&l_r.shape())?;
        let c = shape.n_channels;
        let p = &self.params;
        let fixed = match self.architecture.pass_rule {
            PassRule::LowWeight { alpha } => alpha,
            _ => 1.0,
        };
        let mut alpha = Vec::with_capacity(shape.len());
        let mut hidden = Vec::with_capacity(shape.n_layers);
        for layer in 0..shape.n_layers {
            if !self.is_learned(layer) {
                alpha.extend(std::iter::repeat_n(fixed, c));
                hidden.push(None);
                continue;
            }
            let x = self.input(l_s, l_r, layer);
            let (z, h) = match self.group(layer) {
                Group::Identity => {
                    let h = p.id_hidden.forward(&x);
                    let a: Vec<f64> = h.iter().map(|&v| if v >= 0.0 { v } else { LEAK * v }).collect();
                    (p.id_out.forward(&a), Some(h))
                }
                Group::Coarse => (p.coarse.forward(&x), None),
                Group::Fine => (p.fine.forward(&x), None),
            };
            let bias = &p.layer_bias[layer * c..(layer + 1) * c];
            alpha.extend(z.iter().zip(bias).map(|(z, b)| logistic(z + b)));
            hidden.push(h);
        }
        Ok(ForwardTrace { alpha, hidden })
    }

    /// Gradient of the loss with respect to every parameter, given its
    /// gradient with respect to alpha.
    pub(crate) fn backward(
        &self,
        l_s: &LatentCode,
        l_r: &LatentCode,
        trace: &ForwardTrace,
        g_alpha: &[f64],
        grad: &mut SwapperParams,
    ) {
        let c = self.shape().n_channels;
        let p = &self.params;
        for layer in 0..self.shape().n_layers {
            if !self.is_learned(layer) {
                continue;
            }
            let range = layer * c..(layer + 1) * c;
            let gz: Vec<f64> = trace.alpha[range.clone()]
                .iter()
                .zip(&g_alpha[range.clone()])
                .map(|(a, g)| g * a * (1.0 - a))
                .collect();
            grad.layer_bias[range].iter_mut().zip(&gz).for_each(|(b, g)| *b += g);
            let x = self.input(l_s, l_r, layer);
            match self.group(layer) {
                Group::Identity => {
                    let h = trace.hidden[layer].as_ref().expect("identity layer keeps its hidden state");
                    let a: Vec<f64> = h.iter().map(|&v| if v >= 0.0 { v } else { LEAK * v }).collect();
                    let ga = p.id_out.backward(&a, &gz, &mut grad.id_out);
                    let gh: Vec<f64> = ga
                        .iter()
                        .zip(h)
                        .map(|(g, &v)| if v >= 0.0 { *g } else { LEAK * g })
                        .collect();
                    p.id_hidden.backward(&x, &gh, &mut grad.id_hidden);
                }
                Group::Coarse => {
                    p.coarse.backward(&x, &gz, &mut grad.coarse);
                }
                Group::Fine => {
                    p.fine.backward(&x, &gz, &mut grad.fine);
                }
            }
        }
    }
}

/// Returns `alpha` and `L_hat = alpha * l_s + (1 - alpha) * l_r`.
pub fn swapper_forward(net: &SwapperNetwork, l_s: &LatentCode, l_r: &LatentCode) -> Result<(LatentMask, LatentCode)> {
    let t = net.trace(l_s, l_r)?;
    let alpha = LatentMask::continuous(net.shape(), t.alpha)?;
    let l_hat = blend(l_s, l_r, &alpha)?;
    Ok((alpha, l_hat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> LatentShape {
        LatentShape::new(18, 8)
    }

    fn latent(seed: u64) -> LatentCode {
        let mut r = rng(seed);
        LatentCode::from_fn(shape(), |_, _| r.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn untrained_alpha_is_half_on_learned_layers() {
        let net = SwapperNetwork::new(SwapperArchitecture::standard(shape()).unwrap(), 0).unwrap();
        let (a, l_hat) = swapper_forward(&net, &latent(1), &latent(2)).unwrap();
        for l in 0..18 {
            for c in 0..8 {
                let expected = if (5..=11).contains(&l) { 0.5 } else { 1.0 };
                assert_eq!(a.get(l, c), expected);
            }
        }
        let s = latent(1);
        for l in (0..5).chain(12..18) {
            assert_eq!(l_hat.row(l), s.row(l));
        }
    }

    #[test]
    fn equal_inputs_reproduce_source() {
        let mut arch = SwapperArchitecture::standard(shape()).unwrap();
        arch.pass_rule = PassRule::Learned;
        let net = SwapperNetwork::new(arch, 3).unwrap();
        let s = latent(4);
        let (_, l_hat) = swapper_forward(&net, &s, &s).unwrap();
        assert!(l_hat.max_abs_diff(&s).unwrap() < 1e-12);
    }

    #[test]
    fn low_weight_rule() {
        let mut arch = SwapperArchitecture::standard(shape()).unwrap();
        arch.pass_rule = PassRule::LowWeight { alpha: 0.9 };
        let net = SwapperNetwork::new(arch, 0).unwrap();
        let (a, _) = swapper_forward(&net, &latent(1), &latent(2)).unwrap();
        assert_eq!(a.get(0, 0), 0.9);
        assert_eq!(a.get(17, 7), 0.9);
        assert_eq!(a.get(5, 0), 0.5);
    }

    #[test]
    fn groups_must_partition() {
        let mut arch = SwapperArchitecture::standard(shape()).unwrap();
        arch.fine = "12-16".parse().unwrap();
        assert!(arch.validate().is_err());
        assert!(SwapperArchitecture::standard(LatentShape::new(10, 8)).is_err());
    }
}
