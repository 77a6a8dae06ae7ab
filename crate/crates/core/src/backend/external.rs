//! Adapter for externally trained models stored as safetensors files.
//!
//! Each model is a stack of dense layers. Layer `k` is stored as tensors
//! `layer{k}.weight` (shape `[out, in]`) and `layer{k}.bias` (shape `[out]`),
//! in F32 or F64. The file metadata key `activations` lists one activation
//! per layer, comma separated: `identity`, `relu`, `leaky_relu` (slope 0.2),
//! `tanh` or `sigmoid`.
//!
//! A bundle directory holds a `backend.toml` manifest naming the six model
//! files plus the shape descriptor. Tensor conventions:
//!
//! | model      | input                           | output                          |
//! |------------|---------------------------------|---------------------------------|
//! | generator  | latent, row-major `layers x ch` | image, CHW                      |
//! | encoder    | image, CHW                      | latent, row-major               |
//! | mapper     | `z ~ N(0, I)`                   | latent, row-major               |
//! | embedder   | image, CHW                      | identity embedding              |
//! | attributes | image, CHW                      | `M` probabilities or logits     |
//! | parser     | image, CHW                      | 7 label logits per pixel, `LHW` |
//!
//! Parser label order is background, skin, eyes, nose, mouth, hair, other.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use super::{
    logistic, AttributeClassifier, AttributeVector, BackendBundle, Components, Encoder, Generator,
    IdentityEmbedder, IdentityEmbedding, LatentSampler, MaskParser, ShapeDescriptor,
};
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::latent::{LatentCode, LatentShape};
use crate::rng::{derive_seed, rng};
use crate::segmentation::{Label, SegmentationMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "identity" | "linear" => Activation::Identity,
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::LeakyRelu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            other => return Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    z
                } else {
                    0.2 * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative given the pre-activation `z` and output `a`.
    fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.2
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new(n_in: usize, n_out: usize, weight: Vec<f64>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weight.len() != n_in * n_out {
            return Err(Error::DimMismatch {
                expected: n_in * n_out,
                actual: weight.len(),
            });
        }
        if bias.len() != n_out {
            return Err(Error::DimMismatch {
                expected: n_out,
                actual: bias.len(),
            });
        }
        Ok(Self {
            weight,
            bias,
            n_in,
            n_out,
            activation,
        })
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.weight[o * self.n_in..(o + 1) * self.n_in];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStack {
    layers: Vec<Dense>,
}

impl DenseStack {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("dense stack"));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::DimMismatch {
                    expected: pair[0].n_out,
                    actual: pair[1].n_in,
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.n_out).unwrap_or(0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer
                .pre_activation(&a)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        Ok(a)
    }

    /// Gradient of `<grad_out, forward(x)>` with respect to `x`.
    pub fn vjp(&self, x: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if grad_out.len() != self.output_dim() {
            return Err(Error::DimMismatch {
                expected: self.output_dim(),
                actual: grad_out.len(),
            });
        }
        let mut trace = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.pre_activation(&a);
            let out: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            trace.push((z, out.clone()));
            a = out;
        }
        let mut g = grad_out.to_vec();
        for (layer, (z, out)) in self.layers.iter().zip(&trace).rev() {
            let gz: Vec<f64> = g
                .iter()
                .zip(z.iter().zip(out))
                .map(|(gv, (&zv, &av))| gv * layer.activation.derivative(zv, av))
                .collect();
            let mut gin = vec![0.0; layer.n_in];
            for (o, &go) in gz.iter().enumerate() {
                let row = &layer.weight[o * layer.n_in..(o + 1) * layer.n_in];
                for (gi, w) in gin.iter_mut().zip(row) {
                    *gi += go * w;
                }
            }
            g = gin;
        }
        Ok(g)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub fn from_safetensors(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |d: String| Error::format(origin, d);
        let (_, meta) = SafeTensors::read_metadata(bytes).map_err(|e| bad(e.to_string()))?;
        let acts = meta
            .metadata()
            .as_ref()
            .and_then(|m| m.get("activations"))
            .ok_or_else(|| bad("missing `activations` metadata".into()))?;
        let activations = acts.split(',').map(Activation::parse).collect::<Result<Vec<_>>>()?;
        let tensors = SafeTensors::deserialize(bytes).map_err(|e| bad(e.to_string()))?;
        let read = |name: &str| -> Result<(Vec<usize>, Vec<f64>)> {
            let t = tensors.tensor(name).map_err(|e| bad(format!("{name}: {e}")))?;
            let values = match t.dtype() {
                Dtype::F32 => t
                    .data()
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                    .collect(),
                Dtype::F64 => t
                    .data()
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
                    .collect(),
                other => return Err(bad(format!("{name}: unsupported dtype {other:?}"))),
            };
            Ok((t.shape().to_vec(), values))
        };
        let mut layers = Vec::with_capacity(activations.len());
        for (k, act) in activations.into_iter().enumerate() {
            let (ws, w) = read(&format!("layer{k}.weight"))?;
            let (bs, b) = read(&format!("layer{k}.bias"))?;
            if ws.len() != 2 || bs.len() != 1 || bs[0] != ws[0] {
                return Err(bad(format!("layer {k}: weight {ws:?} / bias {bs:?} shapes disagree")));
            }
            layers.push(Dense::new(ws[1], ws[0], w, b, act)?);
        }
        Self::new(layers)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_safetensors(&bytes, path)
    }

    /// Serializes as F32 tensors with the layout read by [`Self::from_safetensors`].
    pub fn to_safetensors(&self) -> Result<Vec<u8>> {
        let mut buffers: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            let to_bytes = |v: &[f64]| v.iter().flat_map(|x| (*x as f32).to_le_bytes()).collect::<Vec<u8>>();
            buffers.push((format!("layer{k}.weight"), vec![l.n_out, l.n_in], to_bytes(&l.weight)));
            buffers.push((format!("layer{k}.bias"), vec![l.n_out], to_bytes(&l.bias)));
        }
        let views = buffers
            .iter()
            .map(|(name, shape, data)| {
                TensorView::new(Dtype::F32, shape.clone(), data)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let acts: Vec<&str> = self.layers.iter().map(|l| l.activation.name()).collect();
        let meta = HashMap::from([("activations".to_string(), acts.join(","))]);
        safetensors::serialize(views, Some(meta)).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_safetensors()?).map_err(|e| Error::io(path, e))
    }
}

fn hwc_to_chw(image: &Image) -> Vec<f64> {
    let n = image.n_pixels();
    let mut out = vec![0.0; n * CHANNELS];
    for (i, &v) in image.data().iter().enumerate() {
        out[(i % CHANNELS) * n + i / CHANNELS] = v as f64;
    }
    out
}

fn chw_to_hwc(values: &[f64], n_pixels: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_pixels * CHANNELS];
    for (i, v) in out.iter_mut().enumerate() {
        *v = values[(i % CHANNELS) * n_pixels + i / CHANNELS];
    }
    out
}

struct ExternalGenerator {
    net: DenseStack,
    width: usize,
    height: usize,
}

impl Generator for ExternalGenerator {
    fn generate(&self, latent: &LatentCode) -> Result<Image> {
        let out = self.net.forward(latent.values())?;
        let hwc = chw_to_hwc(&out, self.width * self.height);
        Image::new(self.width, self.height, hwc.into_iter().map(|v| v as f32).collect())
    }

    fn generate_vjp(&self, latent: &LatentCode, grad_image: &[f64]) -> Result<Vec<f64>> {
        let n = self.width * self.height;
        if grad_image.len() != n * CHANNELS {
            return Err(Error::DimMismatch {
                expected: n * CHANNELS,
                actual: grad_image.len(),
            });
        }
        let mut chw = vec![0.0; n * CHANNELS];
        for (i, &g) in grad_image.iter().enumerate() {
            chw[(i % CHANNELS) * n + i / CHANNELS] = g;
        }
        self.net.vjp(latent.values(), &chw)
    }
}

struct ExternalEncoder {
    net: DenseStack,
    shape: LatentShape,
}

impl Encoder for ExternalEncoder {
    fn encode(&self, image: &Image) -> Result<LatentCode> {
        LatentCode::new(self.shape, self.net.forward(&hwc_to_chw(image))?)
    }
}

struct ExternalSampler {
    net: DenseStack,
    shape: LatentShape,
}

impl LatentSampler for ExternalSampler {
    fn sample(&self, seed: u64) -> Result<LatentCode> {
        let mut r = rng(derive_seed(seed, 0x5A));
        let z: Vec<f64> = (0..self.net.input_dim()).map(|_| StandardNormal.sample(&mut r)).collect();
        LatentCode::new(self.shape, self.net.forward(&z)?)
    }
}

struct ExternalEmbedder {
    net: DenseStack,
    normalize: bool,
}

impl IdentityEmbedder for ExternalEmbedder {
    fn embed(&self, image: &Image) -> Result<IdentityEmbedding> {
        let v = self.net.forward(&hwc_to_chw(image))?;
        if self.normalize {
            IdentityEmbedding::normalized(v)
        } else {
            IdentityEmbedding::new(v)
        }
    }

    fn embed_vjp(&self, image: &Image, grad: &[f64]) -> Result<Vec<f64>> {
        let x = hwc_to_chw(image);
        let g = if self.normalize {
            let v = self.net.forward(&x)?;
            let n = super::norm(&v);
            if n == 0.0 {
                vec![0.0; v.len()]
            } else {
                let dot: f64 = grad.iter().zip(&v).map(|(g, v)| g * v / n).sum();
                grad.iter().zip(&v).map(|(g, v)| (g - dot * v / n) / n).collect()
            }
        } else {
            grad.to_vec()
        };
        let gx = self.net.vjp(&x, &g)?;
        Ok(chw_to_hwc(&gx, image.n_pixels()))
    }
}

struct ExternalClassifier {
    net: DenseStack,
    logits: bool,
}

impl AttributeClassifier for ExternalClassifier {
    fn predict(&self, image: &Image) -> Result<AttributeVector> {
        let out = self.net.forward(&hwc_to_chw(image))?;
        let probs = out
            .into_iter()
            .map(|v| if self.logits { logistic(v) } else { v.clamp(1e-12, 1.0 - 1e-12) })
            .collect();
        AttributeVector::new(probs)
    }
}

struct ExternalParser {
    net: DenseStack,
}

impl MaskParser for ExternalParser {
    fn parse(&self, image: &Image) -> Result<SegmentationMask> {
        let n = image.n_pixels();
        let out = self.net.forward(&hwc_to_chw(image))?;
        if out.len() != n * Label::ALL.len() {
            return Err(Error::DimMismatch {
                expected: n * Label::ALL.len(),
                actual: out.len(),
            });
        }
        let labels = (0..n)
            .map(|p| {
                let mut best = 0;
                for k in 1..Label::ALL.len() {
                    if out[k * n + p] > out[best * n + p] {
                        best = k;
                    }
                }
                Label::ALL[best]
            })
            .collect();
        SegmentationMask::new(image.width(), image.height(), labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeOutput {
    #[default]
    Probabilities,
    Logits,
}

fn default_true() -> bool {
    true
}

/// Contents of `backend.toml`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalManifest {
    pub id: String,
    pub n_layers: usize,
    pub n_channels: usize,
    pub image_width: usize,
    pub image_height: usize,
    #[serde(default = "default_true")]
    pub normalize_embeddings: bool,
    #[serde(default)]
    pub attribute_output: AttributeOutput,
    pub generator: PathBuf,
    pub encoder: PathBuf,
    pub mapper: PathBuf,
    pub embedder: PathBuf,
    pub attributes: PathBuf,
    pub parser: PathBuf,
}

pub const MANIFEST_FILE: &str = "backend.toml";

/// Loads a bundle directory containing `backend.toml` and the model files.
pub fn load_bundle(dir: &Path) -> Result<BackendBundle> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let m: ExternalManifest =
        toml::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    let load = |p: &Path| DenseStack::load(&dir.join(p));
    let shape = LatentShape::new(m.n_layers, m.n_channels);
    let embedder = load(&m.embedder)?;
    let classifier = load(&m.attributes)?;
    let descriptor = ShapeDescriptor {
        latent: shape,
        image_width: m.image_width,
        image_height: m.image_height,
        embedding_dim: embedder.output_dim(),
        n_attributes: classifier.output_dim(),
    };
    let parts = Components {
        generator: Arc::new(ExternalGenerator {
            net: load(&m.generator)?,
            width: m.image_width,
            height: m.image_height,
        }),
        encoder: Arc::new(ExternalEncoder {
            net: load(&m.encoder)?,
            shape,
        }),
        sampler: Arc::new(ExternalSampler {
            net: load(&m.mapper)?,
            shape,
        }),
        embedder: Arc::new(ExternalEmbedder {
            net: embedder,
            normalize: m.normalize_embeddings,
        }),
        classifier: Arc::new(ExternalClassifier {
            net: classifier,
            logits: m.attribute_output == AttributeOutput::Logits,
        }),
        parser: Arc::new(ExternalParser { net: load(&m.parser)? }),
    };
    BackendBundle::new(format!("external-{}", m.id), descriptor, parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_stack(dims: &[usize], acts: &[Activation], seed: u64) -> DenseStack {
        let mut r = rng(seed);
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, &a)| {
                let w = (0..d[0] * d[1]).map(|_| r.random_range(-0.5..0.5)).collect();
                let b = (0..d[1]).map(|_| r.random_range(-0.1..0.1)).collect();
                Dense::new(d[0], d[1], w, b, a).unwrap()
            })
            .collect();
        DenseStack::new(layers).unwrap()
    }

    #[test]
    fn safetensors_roundtrip() {
        let net = random_stack(&[5, 4, 3], &[Activation::LeakyRelu, Activation::Sigmoid], 1);
        let bytes = net.to_safetensors().unwrap();
        let back = DenseStack::from_safetensors(&bytes, Path::new("mem")).unwrap();
        let x = [0.1, -0.2, 0.3, 0.4, -0.5];
        let a = net.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-5);
        }
    }

    #[test]
    fn missing_activation_metadata_rejected() {
        let data = vec![0u8; 4];
        let view = TensorView::new(Dtype::F32, vec![1, 1], &data).unwrap();
        let bytes = safetensors::serialize([("layer0.weight", view)], None).unwrap();
        assert!(matches!(
            DenseStack::from_safetensors(&bytes, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let net = random_stack(&[4, 6, 3], &[Activation::Tanh, Activation::Identity], 2);
        let x = [0.3, -0.1, 0.7, 0.2];
        let g = [0.5, -1.0, 0.25];
        let analytic = net.vjp(&x, &g).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fp: f64 = net.forward(&xp).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum();
            let fm: f64 = net.forward(&xm).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum();
            assert!((analytic[i] - (fp - fm) / (2.0 * h)).abs() < 1e-7);
        }
    }

    #[test]
    fn layout_conversion_inverts() {
        let img = Image::new(2, 3, (0..18).map(|v| v as f32).collect()).unwrap();
        let chw = hwc_to_chw(&img);
        assert_eq!(chw[0], 0.0);
        assert_eq!(chw[1], 3.0);
        assert_eq!(chw[6], 1.0);
        let back = chw_to_hwc(&chw, 6);
        assert_eq!(back, img.data().iter().map(|&v| v as f64).collect::<Vec<_>>());
    }
}
