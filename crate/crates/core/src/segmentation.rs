//! Face-parsing label maps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::{GrayImage, ImageBuffer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Label {
    Background = 0,
    Skin = 1,
    Eyes = 2,
    Nose = 3,
    Mouth = 4,
    Hair = 5,
    Other = 6,
}

impl Label {
    pub const ALL: [Label; 7] = [
        Label::Background,
        Label::Skin,
        Label::Eyes,
        Label::Nose,
        Label::Mouth,
        Label::Hair,
        Label::Other,
    ];

    pub fn from_u8(v: u8) -> Option<Label> {
        Label::ALL.get(v as usize).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Label::Background => "background",
            Label::Skin => "skin",
            Label::Eyes => "eyes",
            Label::Nose => "nose",
            Label::Mouth => "mouth",
            Label::Hair => "hair",
            Label::Other => "other",
        }
    }

    /// Palette used when a label map is rendered as an RGB image.
    pub fn color(&self) -> [f32; 3] {
        match self {
            Label::Background => [0.0, 0.0, 0.0],
            Label::Skin => [0.9, 0.7, 0.6],
            Label::Eyes => [0.2, 0.4, 0.9],
            Label::Nose => [0.8, 0.5, 0.3],
            Label::Mouth => [0.8, 0.1, 0.2],
            Label::Hair => [0.3, 0.2, 0.1],
            Label::Other => [0.5, 0.5, 0.5],
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownRegion(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationMask {
    width: usize,
    height: usize,
    labels: Vec<Label>,
}

impl SegmentationMask {
    pub fn new(width: usize, height: usize, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimMismatch {
                expected: width * height,
                actual: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn histogram(&self) -> BTreeMap<Label, usize> {
        let mut h = BTreeMap::new();
        for &l in &self.labels {
            *h.entry(l).or_insert(0) += 1;
        }
        h
    }

    pub fn render(&self) -> Image {
        let data = self.labels.iter().flat_map(|l| l.color()).collect();
        Image::new(self.width, self.height, data).expect("label count matches dims")
    }

    /// Single-channel PNG of label indices plus `<path>.json` label map.
    pub fn save(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        let buf: GrayImage = ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
            .expect("label count matches dims");
        buf.save(path)?;
        let map: BTreeMap<u8, &str> = Label::ALL.iter().map(|l| (*l as u8, l.name())).collect();
        let sidecar = path.with_extension("json");
        std::fs::write(&sidecar, serde_json::to_vec_pretty(&map)?)
            .map_err(|e| Error::io(&sidecar, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        let labels = img
            .into_raw()
            .into_iter()
            .map(|v| {
                Label::from_u8(v).ok_or_else(|| Error::format(path, format!("label value {v} is not in the label set")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(w as usize, h as usize, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = (0..12).map(|i| Label::ALL[i % 7]).collect();
        let m = SegmentationMask::new(4, 3, labels).unwrap();
        let p = dir.path().join("m.png");
        m.save(&p).unwrap();
        assert_eq!(SegmentationMask::load(&p).unwrap(), m);
        let map: BTreeMap<String, String> =
            serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
        assert_eq!(map["2"], "eyes");
    }

    #[test]
    fn label_names_parse() {
        for l in Label::ALL {
            assert_eq!(l.name().parse::<Label>().unwrap(), l);
        }
        assert!("teeth".parse::<Label>().is_err());
    }
}
