//! Training-time augmentation: channel-wise normalization, random erasing,
//! Gaussian blur, random perspective, random auto contrast and color jitter,
//! always in that order.
//!
//! Normalization is an affine map per channel, so it commutes with the
//! linear transforms (erasing with the channel mean, blur, resampling). The
//! pipeline therefore runs on intensities and normalizes at the end, which
//! is equivalent to normalizing first and de-normalizing around the
//! intensity-defined transforms (auto contrast, jitter).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PatchSample;
use crate::nn::{normalize, FeatureMap, NormalizationStats};
use crate::optics::gaussian_blur;
use crate::{seed, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub erasing_p: f64,
    /// Erased area as a fraction of the tile.
    pub erasing_scale: (f64, f64),
    pub erasing_ratio: (f64, f64),
    pub blur_p: f64,
    pub blur_sigma_px: (f64, f64),
    pub perspective_p: f64,
    /// Maximum corner displacement as a fraction of half the tile size.
    pub perspective_distortion: f64,
    pub auto_contrast_p: f64,
    pub jitter_p: f64,
    pub jitter_brightness: f64,
    pub jitter_contrast: f64,
    pub jitter_saturation: f64,
    pub jitter_hue: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            erasing_p: 0.25,
            erasing_scale: (0.02, 0.15),
            erasing_ratio: (0.3, 3.3),
            blur_p: 0.1,
            blur_sigma_px: (0.1, 0.5),
            perspective_p: 0.2,
            perspective_distortion: 0.1,
            auto_contrast_p: 0.2,
            jitter_p: 0.8,
            jitter_brightness: 0.1,
            jitter_contrast: 0.1,
            jitter_saturation: 0.1,
            jitter_hue: 0.02,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

/// Network input and regression target (µm) of one augmented sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub input: FeatureMap,
    pub z_label_um: f64,
}

/// Augments one sample. The label is never changed; the result depends only
/// on `(sample, stats, config, seed)`.
pub fn augment(sample: &PatchSample, stats: &NormalizationStats, config: &AugmentConfig, seed: u64) -> Augmented {
    let input = if config.enabled {
        let mut rng = seed::rng(seed, &[0xa6]);
        let img = augment_image(&sample.image, stats, config, &mut rng);
        normalize(&img, stats)
    } else {
        normalize(&sample.image, stats)
    };
    Augmented {
        input,
        z_label_um: sample.z_label_um,
    }
}

fn augment_image(src: &Image, stats: &NormalizationStats, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Image {
    let mut img = src.clone();
    if rng.random::<f64>() < cfg.erasing_p {
        random_erase(&mut img, stats, cfg, rng);
    }
    if rng.random::<f64>() < cfg.blur_p {
        let (lo, hi) = cfg.blur_sigma_px;
        img = gaussian_blur(&img, rng.random_range(lo..=hi) as f32);
    }
    if rng.random::<f64>() < cfg.perspective_p {
        img = random_perspective(&img, stats, cfg.perspective_distortion, rng);
    }
    if rng.random::<f64>() < cfg.auto_contrast_p {
        auto_contrast(&mut img);
    }
    if rng.random::<f64>() < cfg.jitter_p {
        color_jitter(&mut img, cfg, rng);
    }
    img
}

fn random_erase(img: &mut Image, stats: &NormalizationStats, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) {
    let (w, h) = (img.width(), img.height());
    let area = (w * h) as f64;
    for _ in 0..10 {
        let target = area * rng.random_range(cfg.erasing_scale.0..=cfg.erasing_scale.1);
        let log_r = rng.random_range(cfg.erasing_ratio.0.ln()..=cfg.erasing_ratio.1.ln());
        let r = log_r.exp();
        let eh = (target * r).sqrt().round() as usize;
        let ew = (target / r).sqrt().round() as usize;
        if eh == 0 || ew == 0 || eh >= h || ew >= w {
            continue;
        }
        let y0 = rng.random_range(0..=h - eh);
        let x0 = rng.random_range(0..=w - ew);
        for c in 0..img.channels() {
            let fill = stats.mean[c % 3] as f32;
            let plane = img.plane_mut(c);
            for y in y0..y0 + eh {
                plane[y * w + x0..y * w + x0 + ew].iter_mut().for_each(|v| *v = fill);
            }
        }
        return;
    }
}

/// Solves the 8×8 system for the homography sending `from[i]` to `to[i]`.
fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Option<[f64; 8]> {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let ((x, y), (u, v)) = (from[i], to[i]);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    for col in 0..8 {
        let pivot = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..9 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut h = [0.0; 8];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    Some(h)
}

fn random_perspective(img: &Image, stats: &NormalizationStats, distortion: f64, rng: &mut ChaCha8Rng) -> Image {
    let (w, h) = (img.width(), img.height());
    let (wm, hm) = ((w - 1) as f64, (h - 1) as f64);
    let dx = distortion * w as f64 / 2.0;
    let dy = distortion * h as f64 / 2.0;
    let mut j = |d: f64| if d > 0.0 { rng.random_range(0.0..=d) } else { 0.0 };
    let corners = [(0.0, 0.0), (wm, 0.0), (wm, hm), (0.0, hm)];
    let moved = [
        (j(dx), j(dy)),
        (wm - j(dx), j(dy)),
        (wm - j(dx), hm - j(dy)),
        (j(dx), hm - j(dy)),
    ];
    // Output pixels are pulled from the source: map moved corners back.
    let Some(hm_) = homography(&moved, &corners) else {
        return img.clone();
    };
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let den = hm_[6] * xf + hm_[7] * yf + 1.0;
            let sx = (hm_[0] * xf + hm_[1] * yf + hm_[2]) / den;
            let sy = (hm_[3] * xf + hm_[4] * yf + hm_[5]) / den;
            for c in 0..img.channels() {
                let v = if sx < 0.0 || sy < 0.0 || sx > wm || sy > hm {
                    stats.mean[c % 3] as f32
                } else {
                    bilinear(img.plane(c), w, h, sx, sy)
                };
                out.plane_mut(c)[y * w + x] = v;
            }
        }
    }
    out
}

fn bilinear(plane: &[f32], w: usize, h: usize, x: f64, y: f64) -> f32 {
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Stretches each channel to span `[0, 1]`.
fn auto_contrast(img: &mut Image) {
    for c in 0..img.channels() {
        let plane = img.plane_mut(c);
        let (lo, hi) = plane
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi > lo {
            let s = 1.0 / (hi - lo);
            plane.iter_mut().for_each(|v| *v = (*v - lo) * s);
        }
    }
}

fn luminance(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn color_jitter(img: &mut Image, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) {
    let mut factor = |m: f64| rng.random_range(1.0 - m..=1.0 + m) as f32;
    let brightness = factor(cfg.jitter_brightness);
    let contrast = factor(cfg.jitter_contrast);
    let saturation = factor(cfg.jitter_saturation);
    let hue = rng.random_range(-cfg.jitter_hue..=cfg.jitter_hue);
    if img.channels() != 3 {
        return;
    }
    let n = img.pixel_count();
    let data = img.data_mut();
    let (rgb, _) = data.split_at_mut(3 * n);
    let (r, gb) = rgb.split_at_mut(n);
    let (g, b) = gb.split_at_mut(n);
    for i in 0..n {
        r[i] = (r[i] * brightness).clamp(0.0, 1.0);
        g[i] = (g[i] * brightness).clamp(0.0, 1.0);
        b[i] = (b[i] * brightness).clamp(0.0, 1.0);
    }
    let mean = (0..n).map(|i| luminance(r[i], g[i], b[i])).sum::<f32>() / n as f32;
    let (cos, sin) = ((2.0 * std::f64::consts::PI * hue).cos() as f32, (2.0 * std::f64::consts::PI * hue).sin() as f32);
    for i in 0..n {
        let mut px = [r[i], g[i], b[i]];
        for v in &mut px {
            *v = ((*v - mean) * contrast + mean).clamp(0.0, 1.0);
        }
        let l = luminance(px[0], px[1], px[2]);
        for v in &mut px {
            *v = (l + (*v - l) * saturation).clamp(0.0, 1.0);
        }
        // hue: rotate the chroma plane of YIQ
        let yy = luminance(px[0], px[1], px[2]);
        let ii = 0.596 * px[0] - 0.274 * px[1] - 0.322 * px[2];
        let qq = 0.211 * px[0] - 0.523 * px[1] + 0.312 * px[2];
        let (i2, q2) = (ii * cos - qq * sin, ii * sin + qq * cos);
        r[i] = (yy + 0.956 * i2 + 0.621 * q2).clamp(0.0, 1.0);
        g[i] = (yy - 0.272 * i2 - 0.647 * q2).clamp(0.0, 1.0);
        b[i] = (yy - 1.106 * i2 + 1.703 * q2).clamp(0.0, 1.0);
    }
}

/// Per-channel mean and standard deviation over a set of tiles.
pub fn channel_stats(samples: &[PatchSample]) -> ([f64; 3], [f64; 3]) {
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut n = 0.0f64;
    for s in samples {
        for c in 0..3 {
            for &v in s.image.plane(c) {
                sum[c] += v as f64;
                sq[c] += (v as f64) * (v as f64);
            }
        }
        n += s.image.pixel_count() as f64;
    }
    let mut mean = [0.0; 3];
    let mut std = [1.0; 3];
    if n > 0.0 {
        for c in 0..3 {
            mean[c] = sum[c] / n;
            std[c] = (sq[c] / n - mean[c] * mean[c]).max(1e-12).sqrt();
        }
    }
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SourceId;
    use crate::optics::generate_slide;

    fn samples(n: usize) -> Vec<PatchSample> {
        let slide = generate_slide(11, (512, 512), 0.6).unwrap();
        (0..n)
            .map(|i| {
                let (x, y) = ((i * 37) % 448, (i * 91) % 448);
                PatchSample {
                    image: slide.sharp_image.crop(x, y, 64, 64).unwrap(),
                    z_label_um: i as f64 - 7.5,
                    source: SourceId {
                        slide_id: "s".into(),
                        fov_id: 0,
                        slice_idx: i,
                        tile_xy: (x, y),
                    },
                }
            })
            .collect()
    }

    #[test]
    fn deterministic_and_label_preserving() {
        let s = samples(40);
        let (mean, std) = channel_stats(&s);
        let stats = NormalizationStats {
            label_scale_um: 20.0,
            mean,
            std,
        };
        let cfg = AugmentConfig::default();
        for (i, smp) in s.iter().enumerate() {
            let a = augment(smp, &stats, &cfg, i as u64);
            let b = augment(smp, &stats, &cfg, i as u64);
            assert_eq!(a, b);
            assert_eq!(a.z_label_um, smp.z_label_um);
            assert!(a.input.is_finite());
        }
    }

    #[test]
    fn disabled_is_plain_normalization() {
        let s = &samples(1)[0];
        let stats = NormalizationStats::default();
        let a = augment(s, &stats, &AugmentConfig::disabled(), 3);
        assert_eq!(a.input, normalize(&s.image, &stats));
    }

    #[test]
    fn homography_maps_corners() {
        let from = [(0.0, 0.0), (10.0, 0.0), (10.0, 8.0), (0.0, 8.0)];
        let to = [(1.0, 0.5), (9.0, 1.0), (10.0, 8.0), (0.0, 7.0)];
        let h = homography(&from, &to).unwrap();
        for (p, q) in from.iter().zip(&to) {
            let den = h[6] * p.0 + h[7] * p.1 + 1.0;
            let u = (h[0] * p.0 + h[1] * p.1 + h[2]) / den;
            let v = (h[3] * p.0 + h[4] * p.1 + h[5]) / den;
            assert!((u - q.0).abs() < 1e-9 && (v - q.1).abs() < 1e-9);
        }
    }

    #[test]
    fn hue_rotation_by_zero_is_identity() {
        let s = &samples(1)[0];
        let mut img = s.image.clone();
        let cfg = AugmentConfig {
            jitter_brightness: 0.0,
            jitter_contrast: 0.0,
            jitter_saturation: 0.0,
            jitter_hue: 0.0,
            ..AugmentConfig::default()
        };
        color_jitter(&mut img, &cfg, &mut seed::rng(0, &[]));
        for (a, b) in img.data().iter().zip(s.image.data()) {
            assert!((a - b).abs() < 2e-3);
        }
    }
}
