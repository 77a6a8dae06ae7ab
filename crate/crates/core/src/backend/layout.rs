use serde::{Deserialize, Serialize};

use crate::segmentation::Label;

/// Canonical face layouts used by the synthetic parser. They differ only in
/// the width of the face oval; eyes, nose and mouth sit at fixed places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceLayout {
    Narrow,
    Base,
    Wide,
}

impl FaceLayout {
    pub const ALL: [FaceLayout; 3] = [FaceLayout::Narrow, FaceLayout::Base, FaceLayout::Wide];

    /// Layout selected by the value of the layout coordinate.
    pub fn from_value(v: f64) -> Self {
        if v < -0.5 {
            FaceLayout::Narrow
        } else if v > 0.5 {
            FaceLayout::Wide
        } else {
            FaceLayout::Base
        }
    }

    fn face_rx(&self) -> f64 {
        match self {
            FaceLayout::Narrow => 0.27,
            FaceLayout::Base => 0.31,
            FaceLayout::Wide => 0.35,
        }
    }

    /// Label at normalized image coordinates `(u, v)` in `[0, 1]^2`.
    pub fn label_at(&self, u: f64, v: f64) -> Label {
        let inside = |cu: f64, cv: f64, ru: f64, rv: f64| {
            let a = (u - cu) / ru;
            let b = (v - cv) / rv;
            a * a + b * b <= 1.0
        };
        let rx = self.face_rx();
        if inside(0.5, 0.56, rx, 0.38) {
            if inside(0.38, 0.46, 0.09, 0.05) || inside(0.62, 0.46, 0.09, 0.05) {
                Label::Eyes
            } else if inside(0.5, 0.59, 0.06, 0.10) {
                Label::Nose
            } else if inside(0.5, 0.76, 0.14, 0.05) {
                Label::Mouth
            } else {
                Label::Skin
            }
        } else if v < 0.56 && inside(0.5, 0.46, rx + 0.09, 0.44) {
            Label::Hair
        } else if v > 0.86 && (0.40..=0.60).contains(&u) {
            Label::Other
        } else {
            Label::Background
        }
    }
}

/// Row-major label table for a `width x height` image.
pub fn canonical_labels(layout: FaceLayout, width: usize, height: usize) -> Vec<Label> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let u = (x as f64 + 0.5) / width as f64;
            let v = (y as f64 + 0.5) / height as f64;
            out.push(layout.label_at(u, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layout_has_all_face_parts() {
        for layout in FaceLayout::ALL {
            let labels = canonical_labels(layout, 48, 48);
            for l in [Label::Skin, Label::Eyes, Label::Nose, Label::Mouth, Label::Hair, Label::Background] {
                assert!(labels.contains(&l), "{layout:?} lacks {l}");
            }
        }
    }

    #[test]
    fn layouts_differ_only_outside_features() {
        let a = canonical_labels(FaceLayout::Narrow, 64, 64);
        let b = canonical_labels(FaceLayout::Wide, 64, 64);
        assert_ne!(a, b);
        for (x, y) in a.iter().zip(&b) {
            if matches!(x, Label::Eyes | Label::Nose | Label::Mouth) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(FaceLayout::from_value(-0.6), FaceLayout::Narrow);
        assert_eq!(FaceLayout::from_value(0.0), FaceLayout::Base);
        assert_eq!(FaceLayout::from_value(0.6), FaceLayout::Wide);
    }
}
