//! Model backends: generator, encoder, latent sampler, identity embedder,
//! attribute classifier and face parser behind one bundle.
//!
//! Two implementations ship with the crate: [`SyntheticWorld`], a linear
//! desk-scale world with planted identity and attribute coordinates, and
//! [`external`], which runs dense-layer stacks stored as safetensors files.

pub mod external;
mod layout;
mod synthetic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::latent::{LatentCode, LatentShape};
use crate::segmentation::SegmentationMask;

pub use layout::{canonical_labels, FaceLayout};
pub use synthetic::{parse_coordinates, SyntheticConfig, SyntheticWorld};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeDescriptor {
    pub latent: LatentShape,
    pub image_width: usize,
    pub image_height: usize,
    pub embedding_dim: usize,
    pub n_attributes: usize,
}

impl ShapeDescriptor {
    pub fn image_len(&self) -> usize {
        self.image_width * self.image_height * CHANNELS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityEmbedding {
    values: Vec<f64>,
    normalized: bool,
}

impl IdentityEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            values,
            normalized: false,
        })
    }

    /// Scales to unit Euclidean norm; the zero vector stays zero.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut e = Self::new(values)?;
        let n = norm(&e.values);
        if n > 0.0 {
            e.values.iter_mut().for_each(|v| *v /= n);
        }
        e.normalized = true;
        Ok(e)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    values: Vec<f64>,
}

impl AttributeVector {
    /// Confidences must lie strictly inside `(0, 1)`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
        {
            return Err(Error::InvalidArgument(format!(
                "attribute confidence {v} at index {i} is outside (0, 1)"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Logistic map clamped to the open unit interval.
pub(crate) fn logistic(x: f64) -> f64 {
    const EPS: f64 = 1e-12;
    (1.0 / (1.0 + (-x).exp())).clamp(EPS, 1.0 - EPS)
}

pub trait Generator: Send + Sync {
    fn generate(&self, latent: &LatentCode) -> Result<Image>;

    /// Vector-Jacobian product: gradient of `<grad_image, generate(latent)>`
    /// with respect to the latent, row-major.
    fn generate_vjp(&self, _latent: &LatentCode, _grad_image: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("generator gradients".into()))
    }
}

pub trait Encoder: Send + Sync {
    fn encode(&self, image: &Image) -> Result<LatentCode>;
}

/// Samples `z` from the prior and maps it into the latent space.
pub trait LatentSampler: Send + Sync {
    fn sample(&self, seed: u64) -> Result<LatentCode>;
}

pub trait IdentityEmbedder: Send + Sync {
    fn embed(&self, image: &Image) -> Result<IdentityEmbedding>;

    /// Gradient of `<grad, embed(image)>` with respect to the image data.
    fn embed_vjp(&self, _image: &Image, _grad: &[f64]) -> Result<Vec<f64>> {
        Err(Error::Unsupported("embedder gradients".into()))
    }
}

pub trait AttributeClassifier: Send + Sync {
    fn predict(&self, image: &Image) -> Result<AttributeVector>;
}

pub trait MaskParser: Send + Sync {
    fn parse(&self, image: &Image) -> Result<SegmentationMask>;
}

#[derive(Clone)]
pub struct Components {
    pub generator: Arc<dyn Generator>,
    pub encoder: Arc<dyn Encoder>,
    pub sampler: Arc<dyn LatentSampler>,
    pub embedder: Arc<dyn IdentityEmbedder>,
    pub classifier: Arc<dyn AttributeClassifier>,
    pub parser: Arc<dyn MaskParser>,
}

/// A complete set of models sharing one shape descriptor.
///
/// Every call is a pure function of its inputs and the fixed model
/// parameters; the bundle is cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct BackendBundle {
    id: String,
    descriptor: ShapeDescriptor,
    parts: Components,
}

impl std::fmt::Debug for BackendBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BackendBundle")
            .field("id", &self.id)
            .field("descriptor", &self.descriptor)
            .finish_non_exhaustive()
    }
}

impl BackendBundle {
    /// Builds a bundle and checks that every component agrees with the
    /// descriptor by running each one once.
    pub fn new(id: impl Into<String>, descriptor: ShapeDescriptor, parts: Components) -> Result<Self> {
        let bundle = Self {
            id: id.into(),
            descriptor,
            parts,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn synthetic(world: SyntheticWorld) -> Self {
        let id = world.backend_id();
        let descriptor = world.descriptor();
        let world = Arc::new(world);
        Self {
            id,
            descriptor,
            parts: Components {
                generator: world.clone(),
                encoder: world.clone(),
                sampler: world.clone(),
                embedder: world.clone(),
                classifier: world.clone(),
                parser: world,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let d = &self.descriptor;
        let latent = self.sample_random_latent(0)?;
        let img = self.generate(&latent)?;
        let back = self.encode(&img)?;
        d.latent.ensure_eq(&back.shape())?;
        let e = self.embed_identity(&img)?;
        if e.dim() != d.embedding_dim {
            return Err(Error::Backend(format!(
                "embedder produced {} values, descriptor says {}",
                e.dim(),
                d.embedding_dim
            )));
        }
        self.predict_attributes(&img)?;
        self.parse_mask(&img)?;
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn descriptor(&self) -> ShapeDescriptor {
        self.descriptor
    }

    pub fn latent_shape(&self) -> LatentShape {
        self.descriptor.latent
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        image.ensure_dims(self.descriptor.image_width, self.descriptor.image_height)
    }

    pub fn generate(&self, latent: &LatentCode) -> Result<Image> {
        self.descriptor.latent.ensure_eq(&latent.shape())?;
        let img = self.parts.generator.generate(latent)?;
        self.check_image(&img).map_err(|e| Error::Backend(format!("generator output: {e}")))?;
        Ok(img)
    }

    pub fn encode(&self, image: &Image) -> Result<LatentCode> {
        self.check_image(image)?;
        let l = self.parts.encoder.encode(image)?;
        self.descriptor.latent.ensure_eq(&l.shape())?;
        Ok(l)
    }

    pub fn sample_random_latent(&self, seed: u64) -> Result<LatentCode> {
        let l = self.parts.sampler.sample(seed)?;
        self.descriptor.latent.ensure_eq(&l.shape())?;
        Ok(l)
    }

    pub fn embed_identity(&self, image: &Image) -> Result<IdentityEmbedding> {
        self.check_image(image)?;
        self.parts.embedder.embed(image)
    }

    pub fn predict_attributes(&self, image: &Image) -> Result<AttributeVector> {
        self.check_image(image)?;
        let a = self.parts.classifier.predict(image)?;
        if a.len() != self.descriptor.n_attributes {
            return Err(Error::Backend(format!(
                "classifier produced {} attributes, descriptor says {}",
                a.len(),
                self.descriptor.n_attributes
            )));
        }
        Ok(a)
    }

    pub fn parse_mask(&self, image: &Image) -> Result<SegmentationMask> {
        self.check_image(image)?;
        let m = self.parts.parser.parse(image)?;
        if m.width() != image.width() || m.height() != image.height() {
            return Err(Error::Backend("parser output has wrong dimensions".into()));
        }
        Ok(m)
    }

    /// Gradient of `<grad_embedding, embed(generate(latent))>` with respect
    /// to the latent.
    pub fn identity_vjp(&self, latent: &LatentCode, grad_embedding: &[f64]) -> Result<LatentCode> {
        let img = self.generate(latent)?;
        let g_img = self.parts.embedder.embed_vjp(&img, grad_embedding)?;
        let g_latent = self.parts.generator.generate_vjp(latent, &g_img)?;
        LatentCode::new(latent.shape(), g_latent)
    }
}
