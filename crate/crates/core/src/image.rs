//! Planar floating point images.
//!
//! Pixels are stored channel-major (`C × H × W`), which is the layout the
//! network consumes directly. Intensities are nominally in `[0, 1]`.

use std::path::Path;

use image::{imageops, ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "buffer of {} values does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(channel, x, y)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.pixel_count();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copies the `w × h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Region(format!(
                "window {w}x{h} at ({x0},{y0}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut out = Image::new(w, h, self.channels);
        for c in 0..self.channels {
            for y in 0..h {
                let src = (c * self.height + y0 + y) * self.width + x0;
                let dst = (c * h + y) * w;
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        Ok(out)
    }

    /// Mean over channels, as a single-channel image.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.pixel_count();
        let scale = 1.0 / self.channels as f32;
        let mut out = vec![0.0f32; n];
        for c in 0..self.channels {
            for (o, v) in out.iter_mut().zip(self.plane(c)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: out,
        }
    }

    /// Rounds every sample to the nearest 8-bit level, as a camera would.
    pub fn quantize_u8(&mut self) {
        for v in &mut self.data {
            *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Bilinear resampling of a three-channel image.
    pub fn resize(&self, width: usize, height: usize) -> Result<Image> {
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        if width == 0 || height == 0 {
            return Err(Error::Parameter("resize target must be non-empty".into()));
        }
        let buf = self.to_rgb32f()?;
        let resized = imageops::resize(&buf, width as u32, height as u32, imageops::FilterType::Triangle);
        Ok(Self::from_rgb32f(&resized))
    }

    fn to_rgb32f(&self) -> Result<ImageBuffer<Rgb<f32>, Vec<f32>>> {
        if self.channels != 3 {
            return Err(Error::Shape(format!("expected 3 channels, got {}", self.channels)));
        }
        let n = self.pixel_count();
        let mut buf = Vec::with_capacity(n * 3);
        for i in 0..n {
            for c in 0..3 {
                buf.push(self.data[c * n + i]);
            }
        }
        Ok(ImageBuffer::from_raw(self.width as u32, self.height as u32, buf).expect("buffer size"))
    }

    fn from_rgb32f(buf: &ImageBuffer<Rgb<f32>, Vec<f32>>) -> Image {
        let (w, h) = (buf.width() as usize, buf.height() as usize);
        let raw = buf.as_raw();
        Image::from_fn(w, h, 3, |c, x, y| raw[(y * w + x) * 3 + c])
    }

    pub fn to_rgb8(&self) -> Result<RgbImage> {
        if self.channels != 3 {
            return Err(Error::Shape(format!("expected 3 channels, got {}", self.channels)));
        }
        let n = self.pixel_count();
        let mut buf = Vec::with_capacity(n * 3);
        for i in 0..n {
            for c in 0..3 {
                buf.push((self.data[c * n + i].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        Ok(RgbImage::from_raw(self.width as u32, self.height as u32, buf).expect("buffer size"))
    }

    pub fn from_rgb8(img: &RgbImage) -> Image {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let raw = img.as_raw();
        Image::from_fn(w, h, 3, |c, x, y| raw[(y * w + x) * 3 + c] as f32 / 255.0)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8()?.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let img = image::open(path)?.to_rgb8();
        Ok(Image::from_rgb8(&img))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_copies_window() {
        let img = Image::from_fn(6, 4, 3, |c, x, y| (c * 100 + y * 10 + x) as f32);
        let w = img.crop(2, 1, 3, 2).unwrap();
        assert_eq!(w.get(0, 0, 0), 12.0);
        assert_eq!(w.get(2, 2, 1), 224.0);
        assert!(img.crop(4, 0, 3, 1).is_err());
    }

    #[test]
    fn gray_is_channel_mean() {
        let img = Image::from_fn(2, 2, 3, |c, _, _| c as f32);
        assert!(img.to_gray().data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn png_round_trip_is_exact_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::from_fn(7, 5, 3, |c, x, y| ((c + x * 3 + y * 11) % 17) as f32 / 16.0);
        img.quantize_u8();
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        assert_eq!(Image::load_png(&path).unwrap(), img);
    }
}
