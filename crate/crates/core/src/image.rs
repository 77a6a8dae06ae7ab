//! RGB images as `f32` rasters (height x width x 3, row-major, interleaved).

use std::path::Path;

use image::{ImageBuffer, Rgb, Rgb32FImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * CHANNELS {
            return Err(Error::DimMismatch {
                expected: width * height * CHANNELS,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * CHANNELS],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, pixel: usize) -> [f32; 3] {
        let i = pixel * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn ensure_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimMismatch {
                expected: width * height,
                actual: self.width * self.height,
            });
        }
        Ok(())
    }

    pub(crate) fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        other.ensure_dims(self.width, self.height)
    }

    /// Loads any raster the `image` crate decodes. Integer formats map to
    /// `[0, 1]`; OpenEXR keeps its float values unchanged.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        let rgb = img.to_rgb32f();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }

    /// Writes the image; the format follows the file extension. `.exr`
    /// stores the float values exactly, 8/16-bit formats clamp to `[0, 1]`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "exr" => {
                let buf: Rgb32FImage =
                    ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
                        .expect("buffer length checked at construction");
                buf.save(path)?;
            }
            "png" | "tif" | "tiff" => {
                let raw: Vec<u16> = self
                    .data
                    .iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
                    .collect();
                let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
                    ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                        .expect("buffer length checked at construction");
                buf.save(path)?;
            }
            _ => {
                let raw: Vec<u8> = self
                    .data
                    .iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect();
                let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
                    ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
                        .expect("buffer length checked at construction");
                buf.save(path)?;
            }
        }
        Ok(())
    }
}

pub const SUPPORTED_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "tif", "tiff", "exr"];

pub fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| SUPPORTED_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}
