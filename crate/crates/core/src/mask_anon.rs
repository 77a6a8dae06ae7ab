//! Pixel-space anonymization of selected face regions.
//!
//! A replacement face `R'` is generated that shares the source's layout but
//! carries a different identity; the chosen regions of the source are then
//! replaced by the corresponding pixels of `R'`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::BackendBundle;
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::latent::{blend, LatentMask, MaskKind};
use crate::segmentation::{Label, SegmentationMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Eyes,
    Nose,
    Mouth,
    /// Skin, eyes, nose and mouth.
    Face,
    Hair,
    /// Every pixel.
    Full,
}

impl Region {
    pub const ALL: [Region; 6] = [Region::Eyes, Region::Nose, Region::Mouth, Region::Face, Region::Hair, Region::Full];

    pub fn name(&self) -> &'static str {
        match self {
            Region::Eyes => "eyes",
            Region::Nose => "nose",
            Region::Mouth => "mouth",
            Region::Face => "face",
            Region::Hair => "hair",
            Region::Full => "full",
        }
    }

    pub fn labels(&self) -> &'static [Label] {
        match self {
            Region::Eyes => &[Label::Eyes],
            Region::Nose => &[Label::Nose],
            Region::Mouth => &[Label::Mouth],
            Region::Face => &[Label::Skin, Label::Eyes, Label::Nose, Label::Mouth],
            Region::Hair => &[Label::Hair],
            Region::Full => &Label::ALL,
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| Error::UnknownRegion(s.trim().to_string()))
    }
}

/// Regions to replace. Parsed from strings like `"eyes+nose"`; `""` or
/// `"none"` is the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RegionSet(BTreeSet<Region>);

impl RegionSet {
    pub fn new(regions: impl IntoIterator<Item = Region>) -> Self {
        let set: BTreeSet<Region> = regions.into_iter().collect();
        if set.contains(&Region::Full) {
            return Self(BTreeSet::from([Region::Full]));
        }
        Self(set)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn regions(&self) -> impl Iterator<Item = Region> + '_ {
        self.0.iter().copied()
    }

    pub fn contains_label(&self, label: Label) -> bool {
        self.0.iter().any(|r| r.labels().contains(&label))
    }
}

impl fmt::Display for RegionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = self.0.iter().map(Region::name).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for RegionSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Self::empty());
        }
        Ok(Self::new(s.split('+').map(str::parse).collect::<Result<Vec<Region>>>()?))
    }
}

impl TryFrom<String> for RegionSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RegionSet> for String {
    fn from(r: RegionSet) -> String {
        r.to_string()
    }
}

/// Binary per-pixel mask: 1 keeps the source pixel, 0 takes the replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl PixelMask {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(Error::MaskOutOfRange {
                index: i,
                value: values[i] as f64,
            });
        }
        Ok(Self { width, height, values })
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![1; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn keeps(&self, pixel: usize) -> bool {
        self.values[pixel] == 1
    }

    pub fn n_replaced(&self) -> usize {
        self.values.iter().filter(|&&v| v == 0).count()
    }

    fn check(&self, image: &Image) -> Result<()> {
        image.ensure_dims(self.width, self.height)
    }
}

pub fn region_mask(seg: &SegmentationMask, swap_regions: &RegionSet) -> PixelMask {
    PixelMask {
        width: seg.width(),
        height: seg.height(),
        values: seg
            .labels()
            .iter()
            .map(|&l| if swap_regions.contains_label(l) { 0 } else { 1 })
            .collect(),
    }
}

/// Which latent pair the identity mask blends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperandPair {
    /// Source latent and a random latent drawn from the seed.
    #[default]
    SourceRandom,
    /// Source latent and the encoding of the rendered source label map.
    SourceMaskLatent,
}

/// Generates `R'`: the source latent with its identity coordinates (zeros
/// of `identity_mask`) taken from the second operand.
pub fn generate_same_mask_face(
    source: &Image,
    seed: u64,
    identity_mask: &LatentMask,
    operand: OperandPair,
    backend: &BackendBundle,
) -> Result<Image> {
    if identity_mask.kind() != MaskKind::Binary {
        return Err(Error::InvalidArgument("identity mask must be binary".into()));
    }
    let l_s = backend.encode(source)?;
    let other = match operand {
        OperandPair::SourceRandom => backend.sample_random_latent(seed)?,
        OperandPair::SourceMaskLatent => backend.encode(&backend.parse_mask(source)?.render())?,
    };
    backend.generate(&blend(&l_s, &other, identity_mask)?)
}

/// Per pixel: source where the mask is 1, replacement where it is 0.
pub fn seg_swap(source: &Image, replacement: &Image, mask: &PixelMask) -> Result<Image> {
    source.ensure_same_dims(replacement)?;
    mask.check(source)?;
    let mut out = source.clone();
    for (p, px) in out.data_mut().chunks_exact_mut(CHANNELS).enumerate() {
        if !mask.keeps(p) {
            px.copy_from_slice(&replacement.data()[p * CHANNELS..(p + 1) * CHANNELS]);
        }
    }
    Ok(out)
}

fn region_stats(image: &Image, mask: &PixelMask) -> [(f64, f64); CHANNELS] {
    let mut out = [(0.0, 0.0); CHANNELS];
    let n = mask.n_replaced() as f64;
    for (c, slot) in out.iter_mut().enumerate() {
        let vals = || (0..image.n_pixels()).filter(|&p| !mask.keeps(p)).map(|p| image.pixel(p)[c] as f64);
        let mean = vals().sum::<f64>() / n;
        let var = vals().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        *slot = (mean, var.sqrt());
    }
    out
}

/// Transfers per-channel mean and standard deviation of `source` onto
/// `output` inside the replaced region. Kept pixels are left untouched.
pub fn color_match(output: &Image, source: &Image, mask: &PixelMask) -> Result<Image> {
    output.ensure_same_dims(source)?;
    mask.check(output)?;
    if mask.n_replaced() == 0 {
        return Err(Error::Empty("replaced region"));
    }
    let from = region_stats(output, mask);
    let to = region_stats(source, mask);
    let mut out = output.clone();
    for (p, px) in out.data_mut().chunks_exact_mut(CHANNELS).enumerate() {
        if mask.keeps(p) {
            continue;
        }
        for c in 0..CHANNELS {
            let (m_o, s_o) = from[c];
            let (m_s, s_s) = to[c];
            let v = if s_o > 0.0 {
                (px[c] as f64 - m_o) / s_o * s_s + m_s
            } else {
                m_s
            };
            px[c] = v as f32;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskAnonConfig {
    pub regions: RegionSet,
    pub operand: OperandPair,
    pub color_match: bool,
}

impl Default for MaskAnonConfig {
    fn default() -> Self {
        Self {
            regions: RegionSet::new([Region::Face]),
            operand: OperandPair::SourceRandom,
            color_match: false,
        }
    }
}

/// Full pipeline: segment the source, generate `R'`, replace the chosen
/// regions, and optionally match colors.
pub fn anonymize_masked(
    source: &Image,
    cfg: &MaskAnonConfig,
    seed: u64,
    identity_mask: &LatentMask,
    backend: &BackendBundle,
) -> Result<Image> {
    let mask = region_mask(&backend.parse_mask(source)?, &cfg.regions);
    if mask.n_replaced() == 0 {
        return Ok(source.clone());
    }
    let replacement = generate_same_mask_face(source, seed, identity_mask, cfg.operand, backend)?;
    let out = seg_swap(source, &replacement, &mask)?;
    if cfg.color_match {
        color_match(&out, source, &mask)
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{SyntheticConfig, SyntheticWorld};
    use crate::latent::{mask_from_selection, Selection};
    use crate::metrics::identity_distance;

    fn img(w: usize, h: usize, f: impl Fn(usize) -> f32) -> Image {
        Image::new(w, h, (0..w * h * CHANNELS).map(f).collect()).unwrap()
    }

    fn bundle() -> (BackendBundle, LatentMask) {
        let cfg = SyntheticConfig {
            n_channels: 32,
            n_attributes: 8,
            identity: "5-7:*".into(),
            ..Default::default()
        };
        let world = SyntheticWorld::new(cfg).unwrap();
        let shape = world.shape();
        let sel = Selection::Channels(world.identity_selection());
        (BackendBundle::synthetic(world), mask_from_selection(&sel, shape).unwrap())
    }

    #[test]
    fn region_parsing() {
        let r: RegionSet = "eyes+nose".parse().unwrap();
        assert_eq!(r.to_string(), "eyes+nose");
        assert!("".parse::<RegionSet>().unwrap().is_empty());
        assert!(matches!("ears".parse::<RegionSet>(), Err(Error::UnknownRegion(_))));
        assert_eq!("hair+full".parse::<RegionSet>().unwrap(), RegionSet::new([Region::Full]));
    }

    #[test]
    fn region_mask_examples() {
        let mut labels = vec![Label::Skin; 100];
        for l in labels.iter_mut().take(10) {
            *l = Label::Eyes;
        }
        labels[50] = Label::Background;
        let seg = SegmentationMask::new(10, 10, labels).unwrap();
        assert_eq!(region_mask(&seg, &RegionSet::empty()), PixelMask::ones(10, 10));
        assert_eq!(region_mask(&seg, &RegionSet::new([Region::Full])), PixelMask::zeros(10, 10));
        let eyes = region_mask(&seg, &RegionSet::new([Region::Eyes]));
        assert_eq!(eyes.n_replaced(), 10);
        assert!((0..10).all(|p| !eyes.keeps(p)));
        let face = region_mask(&seg, &RegionSet::new([Region::Face]));
        assert_eq!(face.n_replaced(), 99);
    }

    #[test]
    fn seg_swap_selects_per_pixel() {
        let s = img(4, 4, |i| i as f32);
        let r = img(4, 4, |i| -(i as f32));
        assert_eq!(seg_swap(&s, &r, &PixelMask::ones(4, 4)).unwrap(), s);
        assert_eq!(seg_swap(&s, &r, &PixelMask::zeros(4, 4)).unwrap(), r);
        let checker = PixelMask::new(4, 4, (0..16).map(|p| ((p % 4 + p / 4) % 2) as u8).collect()).unwrap();
        let o = seg_swap(&s, &r, &checker).unwrap();
        for p in 0..16 {
            let expected = if checker.keeps(p) { s.pixel(p) } else { r.pixel(p) };
            assert_eq!(o.pixel(p), expected);
        }
        // swapping back restores the source everywhere
        assert_eq!(seg_swap(&o, &s, &checker).unwrap(), s);
        assert!(seg_swap(&s, &img(2, 2, |_| 0.0), &checker).is_err());
    }

    #[test]
    fn color_match_examples() {
        let s = img(4, 4, |i| (i % 7) as f32 * 0.1);
        let mask = PixelMask::new(4, 4, (0..16).map(|p| (p >= 8) as u8).collect()).unwrap();
        let same = color_match(&s, &s, &mask).unwrap();
        for (a, b) in same.data().iter().zip(s.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let flat = img(4, 4, |_| 0.9);
        let out = color_match(&flat, &s, &mask).unwrap();
        let stats = region_stats(&s, &mask);
        for p in 0..8 {
            for (v, st) in out.pixel(p).iter().zip(&stats) {
                assert_eq!(*v, st.0 as f32);
            }
        }
        for p in 8..16 {
            assert_eq!(out.pixel(p), flat.pixel(p));
        }
        assert!(color_match(&s, &s, &PixelMask::ones(4, 4)).is_err());
    }

    #[test]
    fn all_ones_identity_mask_reconstructs() {
        let (b, _) = bundle();
        let s = b.generate(&b.sample_random_latent(1).unwrap()).unwrap();
        let shape = b.latent_shape();
        let r = generate_same_mask_face(&s, 9, &LatentMask::ones(shape), OperandPair::SourceRandom, &b).unwrap();
        let recon = b.generate(&b.encode(&s).unwrap()).unwrap();
        assert_eq!(r, recon);
    }

    #[test]
    fn replacement_shares_mask_and_moves_identity() {
        let (b, m) = bundle();
        for seed in 0..5 {
            let s = b.generate(&b.sample_random_latent(100 + seed).unwrap()).unwrap();
            let recon = b.generate(&b.encode(&s).unwrap()).unwrap();
            for op in [OperandPair::SourceRandom, OperandPair::SourceMaskLatent] {
                let r = generate_same_mask_face(&s, seed, &m, op, &b).unwrap();
                assert_eq!(b.parse_mask(&r).unwrap(), b.parse_mask(&recon).unwrap());
                let es = b.embed_identity(&s).unwrap();
                let d_r = identity_distance(&b.embed_identity(&r).unwrap(), &es).unwrap();
                let d_recon = identity_distance(&b.embed_identity(&recon).unwrap(), &es).unwrap();
                assert!(d_r > d_recon, "{op:?}");
            }
        }
    }

    #[test]
    fn empty_regions_return_source() {
        let (b, m) = bundle();
        let s = b.generate(&b.sample_random_latent(3).unwrap()).unwrap();
        let cfg = MaskAnonConfig {
            regions: RegionSet::empty(),
            color_match: true,
            ..Default::default()
        };
        assert_eq!(anonymize_masked(&s, &cfg, 0, &m, &b).unwrap(), s);
    }

    #[test]
    fn kept_pixels_are_untouched() {
        let (b, m) = bundle();
        let s = b.generate(&b.sample_random_latent(4).unwrap()).unwrap();
        let cfg = MaskAnonConfig {
            regions: "eyes+nose".parse().unwrap(),
            ..Default::default()
        };
        let o = anonymize_masked(&s, &cfg, 1, &m, &b).unwrap();
        let mask = region_mask(&b.parse_mask(&s).unwrap(), &cfg.regions);
        for p in 0..s.n_pixels() {
            if mask.keeps(p) {
                assert_eq!(o.pixel(p), s.pixel(p));
            }
        }
    }
}
