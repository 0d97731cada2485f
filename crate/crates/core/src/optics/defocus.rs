//! Gaussian defocus model with per-channel focal offsets.
//!
//! Channel `c` at stage height `z` is blurred with
//! `σ_c(x, y) = k · |z + Δ_c − z*(x, y)|` pixels. Spatially varying σ is
//! rendered by blending a ladder of uniformly blurred copies.

use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::image::Image;
use crate::seed;

use super::{OpticsConfig, Region, VirtualSlide};

/// Spacing of the σ ladder used for spatially varying blur, px.
const SIGMA_STEP: f32 = 0.25;
/// Ladder levels at or above this σ are derived from the previous level;
/// the incremental kernel is then wide enough to be a faithful Gaussian.
const CASCADE_MIN_SIGMA: f32 = 1.75;
/// Below this σ the kernel is treated as a delta.
const SIGMA_EPS: f32 = 1e-3;

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur of one `w × h` plane with mirrored borders.
pub fn gaussian_blur_plane(src: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    if sigma <= SIGMA_EPS {
        return src.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![0.0f32; w * h];
    let mut padded = vec![0.0f32; w + 2 * r as usize];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            *p = row[reflect(i as isize - r, w)];
        }
        for (x, t) in tmp[y * w..(y + 1) * w].iter_mut().enumerate() {
            *t = k.iter().zip(&padded[x..x + k.len()]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0f32; w * h];
    for (j, kv) in k.iter().enumerate() {
        for y in 0..h {
            let sy = reflect(y as isize + j as isize - r, h);
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Blurs every channel with the same σ.
pub fn gaussian_blur(image: &Image, sigma: f32) -> Image {
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    for c in 0..image.channels() {
        let blurred = gaussian_blur_plane(image.plane(c), w, h, sigma);
        out.plane_mut(c).copy_from_slice(&blurred);
    }
    out
}

/// Blur with a per-pixel σ map, interpolating linearly between ladder levels.
fn variable_blur_plane(src: &[f32], w: usize, h: usize, sigma: &[f32]) -> Vec<f32> {
    let (lo, hi) = sigma
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    if hi - lo < 1e-4 {
        return gaussian_blur_plane(src, w, h, 0.5 * (lo + hi));
    }
    let levels = ((hi - lo) / SIGMA_STEP).ceil() as usize;
    let step = (hi - lo) / levels as f32;
    let mut out = vec![0.0f32; w * h];
    let mut prev: Option<(f32, Vec<f32>)> = None;
    for j in 0..=levels {
        let level = lo + j as f32 * step;
        // Wide levels are reached by blurring the previous level with the
        // variance difference, which needs a much shorter kernel.
        let blurred = match prev.take() {
            Some((p, img)) if p >= CASCADE_MIN_SIGMA => {
                gaussian_blur_plane(&img, w, h, (level * level - p * p).max(0.0).sqrt())
            }
            _ => gaussian_blur_plane(src, w, h, level),
        };
        for i in 0..w * h {
            // hat weight of this level at the pixel's σ
            let t = 1.0 - ((sigma[i] - level) / step).abs();
            if t > 0.0 {
                out[i] += t * blurred[i];
            }
        }
        prev = Some((level, blurred));
    }
    out
}

/// Renders `slide` with the stage at height `z_um` (µm relative to the
/// slide's mean focal plane).
pub fn apply_defocus(slide: &VirtualSlide, z_um: f64, optics: &OpticsConfig) -> Result<Image> {
    optics.validate()?;
    Ok(render(slide, z_um, optics, &[seed::f64_key(z_um)]))
}

pub(crate) fn render(slide: &VirtualSlide, z_um: f64, optics: &OpticsConfig, noise_key: &[u64]) -> Image {
    let (w, h) = (slide.width(), slide.height());
    let surface = slide.focal_surface.data();
    let mut out = Image::new(w, h, 3);
    for (c, offset) in optics.channel_offsets().iter().enumerate() {
        let plane_z = z_um + offset;
        let sigma: Vec<f32> = surface
            .iter()
            .map(|&zs| (optics.blur_gain_k * (plane_z - zs as f64).abs()) as f32)
            .collect();
        let blurred = variable_blur_plane(slide.sharp_image.plane(c), w, h, &sigma);
        out.plane_mut(c).copy_from_slice(&blurred);
    }
    if optics.noise_sigma > 0.0 {
        let mut rng = seed::rng(optics.seed, noise_key);
        let normal = Normal::new(0.0f32, optics.noise_sigma as f32).expect("valid noise std");
        for v in out.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    out.clamp01();
    out
}

/// Renders only `region` of the slide, blurring a margin around it so the
/// result matches a whole-slide render away from the slide border.
pub(crate) fn render_region(
    slide: &VirtualSlide,
    region: &Region,
    z_um: f64,
    optics: &OpticsConfig,
    noise_key: &[u64],
) -> Result<Image> {
    optics.validate()?;
    if !slide.bounds().contains(region) {
        return Err(crate::Error::Region(format!(
            "{region:?} lies outside the {}x{} slide",
            slide.width(),
            slide.height()
        )));
    }
    let (zmin, zmax) = slide.focal_surface.min_max();
    let reach = optics.chroma_offset_um + (z_um - zmin as f64).abs().max((z_um - zmax as f64).abs());
    let margin = (3.0 * optics.blur_gain_k * reach).ceil() as usize + 2;
    let outer = region.expand(margin).clamp_to(&slide.bounds());
    let sub = slide.crop(&outer)?;
    let rendered = render(&sub, z_um, optics, noise_key);
    rendered.crop(region.x - outer.x, region.y - outer.y, region.width, region.height)
}
