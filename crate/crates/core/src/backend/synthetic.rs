//! Desk-scale linear world with planted ground truth.
//!
//! Every latent coordinate owns a disjoint set of pixel entries with positive
//! unit-norm weights, so the generator matrix has orthonormal columns and the
//! encoder (its transpose) is an exact pseudo-inverse. Identity coordinates
//! are only ever placed on pixels that are eyes, nose, mouth or skin under
//! every canonical layout; the identity embedding reads exactly those
//! coordinates back and each attribute is a logistic of a positive-weighted
//! sum over its own coordinates.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layout::{canonical_labels, FaceLayout};
use super::{
    logistic, AttributeClassifier, AttributeVector, Encoder, Generator, IdentityEmbedder,
    IdentityEmbedding, LatentSampler, MaskParser, ShapeDescriptor,
};
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::latent::{parse_range, ChannelBlock, ChannelBlockSet, LatentCode, LatentShape};
use crate::rng::{derive_seed, mix64, rng};
use crate::segmentation::{Label, SegmentationMask};

const TAG_LAYOUT: u64 = 1;
const TAG_WEIGHTS: u64 = 2;
const TAG_MAPPER: u64 = 3;
const TAG_SAMPLE: u64 = 4;
const TAG_NOISE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_layers: usize,
    pub n_channels: usize,
    /// Side of the square image; defaults to `ceil(sqrt(n_layers * n_channels))`.
    pub image_size: Option<usize>,
    pub n_attributes: usize,
    /// Channels per automatically placed attribute.
    pub attribute_width: usize,
    pub attribute_gain: f64,
    /// Planted identity coordinates, e.g. `"5-9:0-95"` or `"5-7:*;8:100-131"`.
    pub identity: String,
    /// Explicit attribute coordinate sets, one spec per attribute.
    pub attributes: Option<Vec<String>>,
    /// Coordinate whose value picks the canonical face layout.
    pub layout_coord: String,
    pub noise_scale: f64,
    pub identity_scale: f64,
    pub mapper_mean_spread: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_layers: 18,
            n_channels: 512,
            image_size: None,
            n_attributes: 40,
            attribute_width: 8,
            attribute_gain: 1.5,
            identity: "5-9:0-95".into(),
            attributes: None,
            layout_coord: "0:0".into(),
            noise_scale: 0.0,
            identity_scale: 1.0,
            mapper_mean_spread: 0.2,
        }
    }
}

impl SyntheticConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidArgument(format!("synthetic world config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn shape(&self) -> LatentShape {
        LatentShape::new(self.n_layers, self.n_channels)
    }
}

/// Parses coordinate specs like `"5-7:*;8:100-131"` into sorted, unique flat
/// indices. Each `;`-separated group is `layers:channels`, where each side
/// is `*` or a comma list of inclusive ranges.
pub fn parse_coordinates(spec: &str, shape: LatentShape) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for group in spec.split(';').map(str::trim).filter(|g| !g.is_empty()) {
        let (layers, channels) = group.split_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!("coordinate group `{group}` must be `layers:channels`"))
        })?;
        let expand = |part: &str, limit: usize| -> Result<Vec<usize>> {
            if part.trim() == "*" {
                return Ok((0..limit).collect());
            }
            let mut v = Vec::new();
            for r in part.split(',').map(str::trim).filter(|r| !r.is_empty()) {
                let (lo, hi) = parse_range(r)?;
                if hi >= limit {
                    return Err(Error::InvalidArgument(format!(
                        "index {hi} in `{group}` exceeds limit {limit}"
                    )));
                }
                v.extend(lo..=hi);
            }
            Ok(v)
        };
        for l in expand(layers, shape.n_layers)? {
            for c in expand(channels, shape.n_channels)? {
                out.insert(shape.index(l, c));
            }
        }
    }
    Ok(out.into_iter().collect())
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    config: SyntheticConfig,
    shape: LatentShape,
    size: usize,
    offsets: Vec<usize>,
    entries: Vec<u32>,
    weights: Vec<f64>,
    identity: Vec<usize>,
    attributes: Vec<Vec<(usize, f64)>>,
    layout_coord: usize,
    mapper_mean: Vec<f64>,
    mapper_std: Vec<f64>,
}

impl SyntheticWorld {
    pub fn new(config: SyntheticConfig) -> Result<Self> {
        let shape = config.shape();
        if shape.is_empty() {
            return Err(Error::InvalidArgument("synthetic world needs a non-empty latent".into()));
        }
        if !(config.noise_scale >= 0.0 && config.noise_scale.is_finite()) {
            return Err(Error::InvalidArgument("noise_scale must be a finite value >= 0".into()));
        }
        if !(config.identity_scale > 0.0 && config.identity_scale.is_finite()) {
            return Err(Error::InvalidArgument("identity_scale must be positive".into()));
        }
        let d = shape.len();
        let identity = parse_coordinates(&config.identity, shape)?;
        let layout = parse_coordinates(&config.layout_coord, shape)?;
        if layout.len() != 1 {
            return Err(Error::InvalidArgument("layout_coord must name exactly one coordinate".into()));
        }
        let layout_coord = layout[0];
        if identity.binary_search(&layout_coord).is_ok() {
            return Err(Error::InvalidArgument("layout_coord overlaps the planted identity".into()));
        }

        let mut weight_rng = rng(derive_seed(config.seed, TAG_WEIGHTS));
        let attribute_coords = match &config.attributes {
            Some(specs) => {
                if specs.len() != config.n_attributes {
                    return Err(Error::InvalidArgument(format!(
                        "{} attribute specs given for n_attributes = {}",
                        specs.len(),
                        config.n_attributes
                    )));
                }
                specs
                    .iter()
                    .map(|s| parse_coordinates(s, shape))
                    .collect::<Result<Vec<_>>>()?
            }
            None => auto_attributes(&config, shape, &identity, layout_coord)?,
        };
        let attributes = attribute_coords
            .into_iter()
            .map(|coords| {
                coords
                    .into_iter()
                    .map(|c| (c, weight_rng.random_range(0.5..1.5)))
                    .collect()
            })
            .collect();

        let size = config
            .image_size
            .unwrap_or_else(|| ((d as f64).sqrt().ceil() as usize).max(16));
        let (offsets, entries, weights) =
            allocate_supports(shape, size, &identity, derive_seed(config.seed, TAG_LAYOUT))?;

        let mut mapper_rng = rng(derive_seed(config.seed, TAG_MAPPER));
        let spread = config.mapper_mean_spread.abs();
        let mapper_mean = (0..d)
            .map(|_| if spread > 0.0 { mapper_rng.random_range(-spread..spread) } else { 0.0 })
            .collect();
        let mapper_std = (0..d).map(|_| mapper_rng.random_range(0.8..1.2)).collect();

        Ok(Self {
            config,
            shape,
            size,
            offsets,
            entries,
            weights,
            identity,
            attributes,
            layout_coord,
            mapper_mean,
            mapper_std,
        })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn image_size(&self) -> usize {
        self.size
    }

    pub fn descriptor(&self) -> ShapeDescriptor {
        ShapeDescriptor {
            latent: self.shape,
            image_width: self.size,
            image_height: self.size,
            embedding_dim: self.identity.len(),
            n_attributes: self.attributes.len(),
        }
    }

    pub fn backend_id(&self) -> String {
        let json = serde_json::to_vec(&self.config).expect("config serializes");
        let digest = Sha256::digest(&json);
        format!("synthetic-{}", &hex::encode(digest)[..12])
    }

    /// Planted identity coordinates as sorted flat indices.
    pub fn identity_coords(&self) -> &[usize] {
        &self.identity
    }

    /// Planted identity coordinates as maximal runs of channels.
    pub fn identity_selection(&self) -> ChannelBlockSet {
        runs_to_blocks(&self.identity, self.shape)
    }

    pub fn attribute_coords(&self, attribute: usize) -> Vec<usize> {
        self.attributes[attribute].iter().map(|&(c, _)| c).collect()
    }

    pub fn layout_coord(&self) -> usize {
        self.layout_coord
    }

    /// Stationary per-coordinate mean of [`LatentSampler::sample`].
    pub fn mapper_mean(&self) -> &[f64] {
        &self.mapper_mean
    }

    pub fn mapper_std(&self) -> &[f64] {
        &self.mapper_std
    }

    fn support(&self, coord: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[coord]..self.offsets[coord + 1];
        self.entries[r.clone()]
            .iter()
            .map(|&e| e as usize)
            .zip(self.weights[r].iter().copied())
    }

    fn project(&self, data: &[f32], coord: usize) -> f64 {
        self.support(coord).map(|(e, w)| w * data[e] as f64).sum()
    }

    fn check(&self, image: &Image) -> Result<()> {
        image.ensure_dims(self.size, self.size)
    }

    fn identity_gain(&self) -> f64 {
        self.config.identity_scale / (self.identity.len().max(1) as f64).sqrt()
    }

    fn layout_of(&self, image: &Image) -> FaceLayout {
        FaceLayout::from_value(self.project(image.data(), self.layout_coord))
    }
}

fn runs_to_blocks(coords: &[usize], shape: LatentShape) -> ChannelBlockSet {
    let mut blocks = ChannelBlockSet::empty();
    let mut iter = coords.iter().copied().peekable();
    while let Some(first) = iter.next() {
        let (layer, start) = (first / shape.n_channels, first % shape.n_channels);
        let mut len = 1;
        while let Some(&next) = iter.peek() {
            if next == first + len && next / shape.n_channels == layer {
                len += 1;
                iter.next();
            } else {
                break;
            }
        }
        blocks.push(ChannelBlock::new(layer, start, len));
    }
    blocks
}

/// Attributes go round-robin over layers free of identity coordinates (or,
/// if every layer carries identity, over all layers), each taking the lowest
/// unused channels of its layer.
fn auto_attributes(
    config: &SyntheticConfig,
    shape: LatentShape,
    identity: &[usize],
    layout_coord: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut used: Vec<bool> = vec![false; shape.len()];
    for &c in identity {
        used[c] = true;
    }
    used[layout_coord] = true;
    let clean: Vec<usize> = (0..shape.n_layers)
        .filter(|&l| !identity.iter().any(|&c| c / shape.n_channels == l))
        .collect();
    let layers = if clean.is_empty() {
        (0..shape.n_layers).collect()
    } else {
        clean
    };
    let width = config.attribute_width.max(1);
    let mut out = Vec::with_capacity(config.n_attributes);
    for j in 0..config.n_attributes {
        let layer = layers[j % layers.len()];
        let free: Vec<usize> = (0..shape.n_channels)
            .map(|c| shape.index(layer, c))
            .filter(|&i| !used[i])
            .take(width)
            .collect();
        if free.len() < width {
            return Err(Error::InvalidArgument(format!(
                "not enough free channels in layer {layer} to place attribute {j}"
            )));
        }
        for &i in &free {
            used[i] = true;
        }
        out.push(free);
    }
    Ok(out)
}

type Supports = (Vec<usize>, Vec<u32>, Vec<f64>);

fn allocate_supports(shape: LatentShape, size: usize, identity: &[usize], seed: u64) -> Result<Supports> {
    let d = shape.len();
    let n_pixels = size * size;
    let total = n_pixels * CHANNELS;
    if total < d {
        return Err(Error::InvalidArgument(format!(
            "image {size}x{size} has {total} entries, fewer than {d} latent coordinates"
        )));
    }
    let variants: Vec<Vec<Label>> = FaceLayout::ALL
        .iter()
        .map(|&l| canonical_labels(l, size, size))
        .collect();
    let stable_face = |p: usize| {
        let l = variants[0][p];
        matches!(l, Label::Skin | Label::Eyes | Label::Nose | Label::Mouth)
            && variants.iter().all(|v| v[p] == l)
    };
    let face_entries: Vec<u32> = (0..n_pixels)
        .filter(|&p| stable_face(p))
        .flat_map(|p| (0..CHANNELS).map(move |c| (p * CHANNELS + c) as u32))
        .collect();

    let cap = (total / d).max(1);
    let mut r = rng(seed);
    let mut assignment: Vec<Vec<u32>> = vec![Vec::new(); d];
    let mut used = vec![false; total];

    let mut id_order = identity.to_vec();
    id_order.shuffle(&mut r);
    if !id_order.is_empty() {
        let per = cap.min(face_entries.len() / id_order.len());
        if per == 0 {
            return Err(Error::InvalidArgument(format!(
                "image {size}x{size} has {} face entries for {} identity coordinates",
                face_entries.len(),
                id_order.len()
            )));
        }
        for (k, &coord) in id_order.iter().enumerate() {
            let chunk = &face_entries[k * per..(k + 1) * per];
            for &e in chunk {
                used[e as usize] = true;
            }
            assignment[coord] = chunk.to_vec();
        }
    }

    let is_identity = {
        let mut v = vec![false; d];
        identity.iter().for_each(|&c| v[c] = true);
        v
    };
    let mut others: Vec<usize> = (0..d).filter(|&c| !is_identity[c]).collect();
    others.shuffle(&mut r);
    let rest: Vec<u32> = (0..total as u32).filter(|&e| !used[e as usize]).collect();
    if !others.is_empty() {
        let per = cap.min(rest.len() / others.len());
        if per == 0 {
            return Err(Error::InvalidArgument(format!(
                "image {size}x{size} leaves {} entries for {} non-identity coordinates",
                rest.len(),
                others.len()
            )));
        }
        for (k, &coord) in others.iter().enumerate() {
            assignment[coord] = rest[k * per..(k + 1) * per].to_vec();
        }
    }

    let mut offsets = Vec::with_capacity(d + 1);
    let mut entries = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for support in assignment {
        let raw: Vec<f64> = support.iter().map(|_| r.random_range(0.5..1.5)).collect();
        let n = raw.iter().map(|w| w * w).sum::<f64>().sqrt();
        weights.extend(raw.iter().map(|w| w / n));
        entries.extend(support);
        offsets.push(entries.len());
    }
    Ok((offsets, entries, weights))
}

fn latent_hash(latent: &LatentCode) -> u64 {
    latent
        .values()
        .iter()
        .fold(0x6A09_E667_F3BC_C909u64, |h, v| mix64(h ^ v.to_bits()))
}

impl Generator for SyntheticWorld {
    fn generate(&self, latent: &LatentCode) -> Result<Image> {
        self.shape.ensure_eq(&latent.shape())?;
        let mut data = vec![0.0f64; self.size * self.size * CHANNELS];
        for (coord, &v) in latent.values().iter().enumerate() {
            for (e, w) in self.support(coord) {
                data[e] = v * w;
            }
        }
        if self.config.noise_scale > 0.0 {
            let mut r = rng(derive_seed(self.config.seed ^ latent_hash(latent), TAG_NOISE));
            let noise = Normal::new(0.0, self.config.noise_scale).expect("validated scale");
            data.iter_mut().for_each(|x| *x += noise.sample(&mut r));
        }
        Image::new(self.size, self.size, data.into_iter().map(|x| x as f32).collect())
    }

    fn generate_vjp(&self, latent: &LatentCode, grad_image: &[f64]) -> Result<Vec<f64>> {
        self.shape.ensure_eq(&latent.shape())?;
        if grad_image.len() != self.size * self.size * CHANNELS {
            return Err(Error::DimMismatch {
                expected: self.size * self.size * CHANNELS,
                actual: grad_image.len(),
            });
        }
        Ok((0..self.shape.len())
            .map(|c| self.support(c).map(|(e, w)| w * grad_image[e]).sum())
            .collect())
    }
}

impl Encoder for SyntheticWorld {
    fn encode(&self, image: &Image) -> Result<LatentCode> {
        self.check(image)?;
        let values = (0..self.shape.len()).map(|c| self.project(image.data(), c)).collect();
        LatentCode::new(self.shape, values)
    }
}

impl LatentSampler for SyntheticWorld {
    fn sample(&self, seed: u64) -> Result<LatentCode> {
        let mut r = rng(derive_seed(derive_seed(self.config.seed, TAG_SAMPLE), seed));
        let values = self
            .mapper_mean
            .iter()
            .zip(&self.mapper_std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(&mut r);
                m + s * z
            })
            .collect();
        LatentCode::new(self.shape, values)
    }
}

impl IdentityEmbedder for SyntheticWorld {
    fn embed(&self, image: &Image) -> Result<IdentityEmbedding> {
        self.check(image)?;
        let g = self.identity_gain();
        IdentityEmbedding::new(
            self.identity
                .iter()
                .map(|&c| g * self.project(image.data(), c))
                .collect(),
        )
    }

    fn embed_vjp(&self, image: &Image, grad: &[f64]) -> Result<Vec<f64>> {
        self.check(image)?;
        if grad.len() != self.identity.len() {
            return Err(Error::DimMismatch {
                expected: self.identity.len(),
                actual: grad.len(),
            });
        }
        let g = self.identity_gain();
        let mut out = vec![0.0; image.data().len()];
        for (&coord, &gk) in self.identity.iter().zip(grad) {
            for (e, w) in self.support(coord) {
                out[e] += g * gk * w;
            }
        }
        Ok(out)
    }
}

impl AttributeClassifier for SyntheticWorld {
    fn predict(&self, image: &Image) -> Result<AttributeVector> {
        self.check(image)?;
        let values = self
            .attributes
            .iter()
            .map(|coords| {
                let n = (coords.len().max(1) as f64).sqrt();
                let x: f64 = coords
                    .iter()
                    .map(|&(c, u)| u * self.project(image.data(), c))
                    .sum();
                logistic(self.config.attribute_gain * x / n)
            })
            .collect();
        AttributeVector::new(values)
    }
}

impl MaskParser for SyntheticWorld {
    fn parse(&self, image: &Image) -> Result<SegmentationMask> {
        self.check(image)?;
        let layout = self.layout_of(image);
        SegmentationMask::new(self.size, self.size, canonical_labels(layout, self.size, self.size))
    }
}
