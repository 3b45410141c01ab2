//! Floating-point RGB buffers and their 8-bit PNG encoding.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, channel-interleaved RGB image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        ImageRgb {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot fill a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(ImageRgb {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        ImageRgb {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &ImageRgb) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn to_rgb8(&self) -> ::image::RgbImage {
        let bytes = self.data.iter().map(|&v| quantize(v)).collect();
        ::image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer sized from dimensions")
    }

    pub fn from_rgb8(img: &::image::RgbImage) -> Self {
        ImageRgb {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8().save_with_format(path, ::image::ImageFormat::Png).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let img = ::image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    /// Round-trips the image through 8-bit quantization.
    pub fn quantized(&self) -> Self {
        ImageRgb {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| quantize(v) as f64 / 255.0).collect(),
        }
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// A rendered view: color, per-pixel depth and coverage.
///
/// Pixels with `mask == false` hold the background color and infinite depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub rgb: ImageRgb,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
}

impl RenderedImage {
    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }

    pub fn coverage(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len().max(1) as f64
    }
}

pub fn save_mask_png(mask: &[bool], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    let img = ::image::GrayImage::from_raw(width as u32, height as u32, bytes).ok_or_else(|| {
        Error::DimensionMismatch(format!("mask of {} pixels is not {width}x{height}", mask.len()))
    })?;
    img.save_with_format(path, ::image::ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a single-channel mask; any nonzero value counts as valid.
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<(Vec<bool>, usize, usize)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let img = ::image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((img.as_raw().iter().map(|&b| b > 0).collect(), w, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_roundtrip_of_quantized_values() {
        let img = ImageRgb::from_fn(5, 3, |x, y| {
            [x as f64 / 4.0, y as f64 / 2.0, ((x + y) % 2) as f64]
        })
        .quantized();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        assert_eq!(ImageRgb::load_png(&p).unwrap(), img);
    }

    #[test]
    fn mask_roundtrip() {
        let mask = vec![true, false, false, true, true, false];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        save_mask_png(&mask, 3, 2, &p).unwrap();
        assert_eq!(load_mask_png(&p).unwrap(), (mask, 3, 2));
    }
}
