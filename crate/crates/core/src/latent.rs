//! Pure algebra on latent codes.
//!
//! A [`LatentCode`] is a `n_layers x n_channels` matrix stored row-major
//! (layer-major). All operations here are pure: they never mutate their
//! inputs and return freshly allocated codes.
//!
//! Mask convention, used everywhere in the crate: a mask value of `1` keeps
//! the first (source) operand and `0` takes the second one, so
//! `blend(s, o, m) = m * s + (1 - m) * o`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentShape {
    pub n_layers: usize,
    pub n_channels: usize,
}

impl LatentShape {
    pub fn new(n_layers: usize, n_channels: usize) -> Self {
        Self {
            n_layers,
            n_channels,
        }
    }

    pub fn len(&self) -> usize {
        self.n_layers * self.n_channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, layer: usize, channel: usize) -> usize {
        layer * self.n_channels + channel
    }

    fn pair(&self) -> (usize, usize) {
        (self.n_layers, self.n_channels)
    }

    pub(crate) fn ensure_eq(&self, other: &LatentShape) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected: self.pair(),
                actual: other.pair(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for LatentShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n_layers, self.n_channels)
    }
}

/// A point in the extended latent space of a style-based generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    shape: LatentShape,
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(shape: LatentShape, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "latent shape {shape} has no coordinates"
            )));
        }
        if values.len() != shape.len() {
            return Err(Error::DimMismatch {
                expected: shape.len(),
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: LatentShape, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: LatentShape, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(shape.len());
        for l in 0..shape.n_layers {
            for c in 0..shape.n_channels {
                values.push(f(l, c));
            }
        }
        Self::new(shape, values)
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn n_layers(&self) -> usize {
        self.shape.n_layers
    }

    pub fn n_channels(&self) -> usize {
        self.shape.n_channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, layer: usize, channel: usize) -> f64 {
        self.values[self.shape.index(layer, channel)]
    }

    pub fn row(&self, layer: usize) -> &[f64] {
        let c = self.shape.n_channels;
        &self.values[layer * c..(layer + 1) * c]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            shape: self.shape,
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &LatentCode) -> Result<f64> {
        self.shape.ensure_eq(&other.shape)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Little-endian f32 bytes in row-major order.
    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_f32_le_bytes(shape: LatentShape, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != shape.len() * 4 {
            return Err(Error::DimMismatch {
                expected: shape.len() * 4,
                actual: bytes.len(),
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Self::new(shape, values)
    }

    fn ensure_same_shape(&self, other: &LatentCode) -> Result<()> {
        self.shape.ensure_eq(&other.shape)
    }
}

/// Ordered set of layer indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSet(BTreeSet<usize>);

impl LayerSet {
    pub fn new(layers: impl IntoIterator<Item = usize>) -> Self {
        Self(layers.into_iter().collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Consecutive window `start, start + 1, ..., start + size - 1`.
    pub fn window(start: usize, size: usize) -> Self {
        Self((start..start + size).collect())
    }

    pub fn all(n_layers: usize) -> Self {
        Self((0..n_layers).collect())
    }

    pub fn contains(&self, layer: usize) -> bool {
        self.0.contains(&layer)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, shape: LatentShape) -> Result<()> {
        match self.0.iter().next_back() {
            Some(&max) if max >= shape.n_layers => Err(Error::LayerOutOfRange {
                index: max,
                n_layers: shape.n_layers,
            }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LayerSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses `"5,6,7"`, `"5-7"`, `"0-4,12-17"`; an empty string is the empty set.
impl FromStr for LayerSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (lo, hi) = parse_range(part)?;
            set.extend(lo..=hi);
        }
        Ok(Self(set))
    }
}

pub(crate) fn parse_range(part: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("cannot parse index range `{part}`"));
    match part.split_once('-') {
        Some((a, b)) => {
            let lo: usize = a.trim().parse().map_err(|_| bad())?;
            let hi: usize = b.trim().parse().map_err(|_| bad())?;
            if hi < lo {
                return Err(bad());
            }
            Ok((lo, hi))
        }
        None => {
            let v: usize = part.parse().map_err(|_| bad())?;
            Ok((v, v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelBlock {
    pub layer: usize,
    pub start: usize,
    pub len: usize,
}

impl ChannelBlock {
    pub fn new(layer: usize, start: usize, len: usize) -> Self {
        Self { layer, start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    fn validate(&self, shape: LatentShape) -> Result<()> {
        if self.layer >= shape.n_layers || self.end() > shape.n_channels {
            return Err(Error::BlockOutOfRange {
                layer: self.layer,
                start: self.start,
                len: self.len,
                n_layers: shape.n_layers,
                n_channels: shape.n_channels,
            });
        }
        Ok(())
    }
}

/// Channel blocks; overlapping blocks select the union of their coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelBlockSet(Vec<ChannelBlock>);

impl ChannelBlockSet {
    pub fn new(blocks: impl IntoIterator<Item = ChannelBlock>) -> Self {
        Self(blocks.into_iter().collect())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, block: ChannelBlock) {
        self.0.push(block);
    }

    pub fn blocks(&self) -> &[ChannelBlock] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, shape: LatentShape) -> Result<()> {
        self.0.iter().try_for_each(|b| b.validate(shape))
    }

    /// Number of distinct coordinates covered.
    pub fn coverage(&self, shape: LatentShape) -> Result<usize> {
        Ok(Selection::Channels(self.clone())
            .coordinates(shape)?
            .iter()
            .filter(|&&s| s)
            .count())
    }
}

impl fmt::Display for ChannelBlockSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|b| format!("{}:{}+{}", b.layer, b.start, b.len))
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses `"8:0+16,9:32+32"` (layer:start+len).
impl FromStr for ChannelBlockSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut blocks = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || Error::InvalidArgument(format!("cannot parse channel block `{part}`"));
            let (layer, rest) = part.split_once(':').ok_or_else(bad)?;
            let (start, len) = rest.split_once('+').ok_or_else(bad)?;
            blocks.push(ChannelBlock::new(
                layer.trim().parse().map_err(|_| bad())?,
                start.trim().parse().map_err(|_| bad())?,
                len.trim().parse().map_err(|_| bad())?,
            ));
        }
        Ok(Self(blocks))
    }
}

/// Search output that can be turned into a swap or a mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Selection {
    Layers(LayerSet),
    Channels(ChannelBlockSet),
}

impl Selection {
    pub fn validate(&self, shape: LatentShape) -> Result<()> {
        match self {
            Selection::Layers(l) => l.validate(shape),
            Selection::Channels(b) => b.validate(shape),
        }
    }

    /// Per-coordinate membership, row-major.
    pub fn coordinates(&self, shape: LatentShape) -> Result<Vec<bool>> {
        self.validate(shape)?;
        let mut selected = vec![false; shape.len()];
        match self {
            Selection::Layers(layers) => {
                for l in layers.iter() {
                    let i = shape.index(l, 0);
                    selected[i..i + shape.n_channels].fill(true);
                }
            }
            Selection::Channels(blocks) => {
                for b in blocks.blocks() {
                    let i = shape.index(b.layer, b.start);
                    selected[i..i + b.len].fill(true);
                }
            }
        }
        Ok(selected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Binary,
    Continuous,
}

/// Per-coordinate blend weights in `[0, 1]`; 1 keeps the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMask {
    shape: LatentShape,
    values: Vec<f64>,
    kind: MaskKind,
}

impl LatentMask {
    pub fn continuous(shape: LatentShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::DimMismatch {
                expected: shape.len(),
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::MaskOutOfRange { index, value });
        }
        Ok(Self {
            shape,
            values,
            kind: MaskKind::Continuous,
        })
    }

    pub fn binary(shape: LatentShape, values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| **v != 0.0 && **v != 1.0)
        {
            return Err(Error::MaskOutOfRange { index, value });
        }
        let mut mask = Self::continuous(shape, values)?;
        mask.kind = MaskKind::Binary;
        Ok(mask)
    }

    pub fn ones(shape: LatentShape) -> Self {
        Self {
            shape,
            values: vec![1.0; shape.len()],
            kind: MaskKind::Binary,
        }
    }

    pub fn zeros(shape: LatentShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
            kind: MaskKind::Binary,
        }
    }

    pub fn shape(&self) -> LatentShape {
        self.shape
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, layer: usize, channel: usize) -> f64 {
        self.values[self.shape.index(layer, channel)]
    }
}

fn select(source: &LatentCode, target: &LatentCode, take_target: &[bool]) -> LatentCode {
    let values = source
        .values
        .iter()
        .zip(&target.values)
        .zip(take_target)
        .map(|((&s, &t), &take)| if take { t } else { s })
        .collect();
    LatentCode {
        shape: source.shape,
        values,
    }
}

/// Rows in `layers` come from `target`, all others from `source`.
pub fn swap_layers(source: &LatentCode, target: &LatentCode, layers: &LayerSet) -> Result<LatentCode> {
    source.ensure_same_shape(target)?;
    let selected = Selection::Layers(layers.clone()).coordinates(source.shape)?;
    Ok(select(source, target, &selected))
}

/// Coordinates covered by any block come from `target`.
pub fn swap_channels(
    source: &LatentCode,
    target: &LatentCode,
    blocks: &ChannelBlockSet,
) -> Result<LatentCode> {
    source.ensure_same_shape(target)?;
    let selected = Selection::Channels(blocks.clone()).coordinates(source.shape)?;
    Ok(select(source, target, &selected))
}

pub fn swap(source: &LatentCode, target: &LatentCode, selection: &Selection) -> Result<LatentCode> {
    match selection {
        Selection::Layers(l) => swap_layers(source, target, l),
        Selection::Channels(b) => swap_channels(source, target, b),
    }
}

/// `mask * source + (1 - mask) * other`, elementwise.
pub fn blend(source: &LatentCode, other: &LatentCode, mask: &LatentMask) -> Result<LatentCode> {
    source.ensure_same_shape(other)?;
    source.shape.ensure_eq(&mask.shape)?;
    let values = source
        .values
        .iter()
        .zip(&other.values)
        .zip(&mask.values)
        .map(|((&s, &o), &m)| {
            // exact selection at the binary endpoints
            if m == 1.0 {
                s
            } else if m == 0.0 {
                o
            } else {
                m * s + (1.0 - m) * o
            }
        })
        .collect();
    Ok(LatentCode {
        shape: source.shape,
        values,
    })
}

/// Binary mask that is 0 on selected coordinates and 1 elsewhere, so that
/// `blend(s, t, mask_from_selection(sel))` equals `swap(s, t, sel)`.
pub fn mask_from_selection(selection: &Selection, shape: LatentShape) -> Result<LatentMask> {
    let selected = selection.coordinates(shape)?;
    Ok(LatentMask {
        shape,
        values: selected.iter().map(|&s| if s { 0.0 } else { 1.0 }).collect(),
        kind: MaskKind::Binary,
    })
}
