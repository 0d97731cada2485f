//! Procedural H&E-like tissue phantoms with a known focal surface.
//!
//! Stain appearance follows a Beer–Lambert mixture of hematoxylin, eosin and
//! a neutral density term. Nuclei are rendered as soft ellipses gathered in
//! clusters, stroma as fibrous eosin texture.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed;

use super::Region;

const HEMATOXYLIN_OD: [f32; 3] = [0.65, 0.70, 0.29];
const EOSIN_OD: [f32; 3] = [0.07, 0.99, 0.11];
const NEUTRAL_OD: [f32; 3] = [0.35, 0.35, 0.35];

/// Per-pixel optimal focal plane z*(x, y) in µm.
#[derive(Debug, Clone, PartialEq)]
pub struct FocalSurface {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FocalSurface {
    pub fn flat(width: usize, height: usize, z_um: f32) -> Self {
        Self {
            width,
            height,
            data: vec![z_um; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape("focal surface buffer size mismatch".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Mean of z* over a region, in µm.
    pub fn mean_over(&self, r: &Region) -> f64 {
        let mut acc = 0.0f64;
        for y in r.y..r.y + r.height {
            let row = &self.data[y * self.width + r.x..y * self.width + r.x + r.width];
            acc += row.iter().map(|&v| v as f64).sum::<f64>();
        }
        acc / r.area() as f64
    }

    /// Largest forward-difference gradient magnitude, µm per pixel.
    pub fn max_gradient(&self) -> f64 {
        let mut best = 0.0f64;
        for y in 0..self.height.saturating_sub(1) {
            for x in 0..self.width.saturating_sub(1) {
                let z = self.get(x, y) as f64;
                let gx = self.get(x + 1, y) as f64 - z;
                let gy = self.get(x, y + 1) as f64 - z;
                best = best.max((gx * gx + gy * gy).sqrt());
            }
        }
        best
    }

    fn crop(&self, r: &Region) -> FocalSurface {
        let mut data = Vec::with_capacity(r.area());
        for y in r.y..r.y + r.height {
            data.extend_from_slice(&self.data[y * self.width + r.x..y * self.width + r.x + r.width]);
        }
        FocalSurface {
            width: r.width,
            height: r.height,
            data,
        }
    }
}

/// A simulated slide: sharp appearance, tissue mask and focal surface.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualSlide {
    pub sharp_image: Image,
    pub focal_surface: FocalSurface,
    pub tissue_mask: Vec<bool>,
    /// Sampling pitch of the slide raster, µm per pixel.
    pub um_per_px: f64,
}

impl VirtualSlide {
    pub fn width(&self) -> usize {
        self.sharp_image.width()
    }

    pub fn height(&self) -> usize {
        self.sharp_image.height()
    }

    pub fn bounds(&self) -> Region {
        Region::new(0, 0, self.width(), self.height())
    }

    /// (width_mm, height_mm)
    pub fn physical_extent(&self) -> (f64, f64) {
        (
            self.width() as f64 * self.um_per_px / 1000.0,
            self.height() as f64 * self.um_per_px / 1000.0,
        )
    }

    pub fn tissue_fraction(&self) -> f64 {
        self.tissue_fraction_in(&self.bounds())
    }

    pub fn tissue_fraction_in(&self, r: &Region) -> f64 {
        let w = self.width();
        let mut n = 0usize;
        for y in r.y..r.y + r.height {
            n += self.tissue_mask[y * w + r.x..y * w + r.x + r.width]
                .iter()
                .filter(|&&m| m)
                .count();
        }
        n as f64 / r.area() as f64
    }

    /// Sub-slide covering `r`.
    pub fn crop(&self, r: &Region) -> Result<VirtualSlide> {
        if !self.bounds().contains(r) {
            return Err(Error::Region(format!(
                "{r:?} lies outside the {}x{} slide",
                self.width(),
                self.height()
            )));
        }
        let w = self.width();
        let mut mask = Vec::with_capacity(r.area());
        for y in r.y..r.y + r.height {
            mask.extend_from_slice(&self.tissue_mask[y * w + r.x..y * w + r.x + r.width]);
        }
        Ok(VirtualSlide {
            sharp_image: self.sharp_image.crop(r.x, r.y, r.width, r.height)?,
            focal_surface: self.focal_surface.crop(r),
            tissue_mask: mask,
            um_per_px: self.um_per_px,
        })
    }

    /// Replaces the focal surface with the constant plane `z_um`.
    pub fn with_flat_surface(mut self, z_um: f32) -> Self {
        self.focal_surface = FocalSurface::flat(self.width(), self.height(), z_um);
        self
    }
}

/// Knobs of the phantom generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomParams {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub tissue_fraction: f64,
    /// Peak |z*| of the focal surface, µm. Zero gives a flat surface.
    pub focal_amplitude_um: f64,
    /// Upper bound on |∇z*|, µm per pixel.
    pub max_slope_um_per_px: f64,
    pub um_per_px: f64,
}

impl PhantomParams {
    pub fn new(seed: u64, size_px: (usize, usize), tissue_fraction: f64) -> Self {
        Self {
            seed,
            width: size_px.0,
            height: size_px.1,
            tissue_fraction,
            focal_amplitude_um: 5.0,
            max_slope_um_per_px: 0.05,
            um_per_px: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width < 256 || self.height < 256 {
            return Err(Error::Parameter(format!(
                "slide must be at least 256x256, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.tissue_fraction) {
            return Err(Error::Parameter(format!(
                "tissue_fraction must lie in [0, 1], got {}",
                self.tissue_fraction
            )));
        }
        if !(self.focal_amplitude_um >= 0.0 && self.max_slope_um_per_px > 0.0 && self.um_per_px > 0.0) {
            return Err(Error::Parameter("invalid focal surface parameters".into()));
        }
        Ok(())
    }
}

/// Generates a slide whose tissue covers roughly `tissue_fraction` of its area.
pub fn generate_slide(seed: u64, size_px: (usize, usize), tissue_fraction: f64) -> Result<VirtualSlide> {
    generate_slide_with(&PhantomParams::new(seed, size_px, tissue_fraction))
}

pub fn generate_slide_with(params: &PhantomParams) -> Result<VirtualSlide> {
    params.validate()?;
    let mask = tissue_mask(params);
    render_slide(params, mask)
}

/// Generates a slide with an explicit tissue mask, `mask(x, y)` true for tissue.
pub fn generate_slide_masked(
    seed: u64,
    size_px: (usize, usize),
    mask: impl Fn(usize, usize) -> bool,
) -> Result<VirtualSlide> {
    let params = PhantomParams::new(seed, size_px, 0.0);
    params.validate()?;
    let (w, h) = size_px;
    let mask: Vec<bool> = (0..w * h).map(|i| mask(i % w, i / w)).collect();
    render_slide(&params, mask)
}

fn render_slide(params: &PhantomParams, mask: Vec<bool>) -> Result<VirtualSlide> {
    let (w, h) = (params.width, params.height);
    let stains = stain_concentrations(params, &mask);
    let mut bg_rng = seed::rng(params.seed, &[4]);
    let bg = value_noise(&mut bg_rng, w, h, 24.0);

    let mut img = Image::new(w, h, 3);
    for i in 0..w * h {
        let (x, y) = (i % w, i / w);
        for c in 0..3 {
            let v = if mask[i] {
                let od = stains.hematoxylin[i] * HEMATOXYLIN_OD[c]
                    + stains.eosin[i] * EOSIN_OD[c]
                    + stains.density[i] * NEUTRAL_OD[c];
                (-od).exp()
            } else {
                0.955 + 0.03 * bg[i]
            };
            img.set(c, x, y, v);
        }
    }
    img.quantize_u8();

    Ok(VirtualSlide {
        sharp_image: img,
        focal_surface: focal_surface(params),
        tissue_mask: mask,
        um_per_px: params.um_per_px,
    })
}

fn tissue_mask(params: &PhantomParams) -> Vec<bool> {
    let (w, h) = (params.width, params.height);
    let n = w * h;
    let target = (params.tissue_fraction * n as f64).round() as usize;
    if target == 0 {
        return vec![false; n];
    }
    if target >= n {
        return vec![true; n];
    }
    let mut rng = seed::rng(params.seed, &[1]);
    let coarse = value_noise(&mut rng, w, h, w.max(h) as f32 / 4.0);
    let medium = value_noise(&mut rng, w, h, w.max(h) as f32 / 12.0);
    let field: Vec<f32> = coarse.iter().zip(&medium).map(|(a, b)| 0.75 * a + 0.25 * b).collect();
    let mut sorted = field.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let threshold = sorted[n - target];
    field.iter().map(|&v| v >= threshold).collect()
}

struct Stains {
    hematoxylin: Vec<f32>,
    eosin: Vec<f32>,
    density: Vec<f32>,
}

fn stain_concentrations(params: &PhantomParams, mask: &[bool]) -> Stains {
    let (w, h) = (params.width, params.height);
    let mut rng = seed::rng(params.seed, &[2]);

    let fine2 = value_noise(&mut rng, w, h, 2.0);
    let fine4 = value_noise(&mut rng, w, h, 4.0);
    let mid = value_noise(&mut rng, w, h, 16.0);
    let orient = value_noise(&mut rng, w, h, 64.0);
    let phase = value_noise(&mut rng, w, h, 12.0);

    let mut eosin = vec![0.0f32; w * h];
    let mut density = vec![0.0f32; w * h];
    let mut hematoxylin = vec![0.0f32; w * h];
    for i in 0..w * h {
        let (x, y) = ((i % w) as f32, (i / w) as f32);
        let theta = orient[i] * std::f32::consts::PI * 2.0;
        let fiber = (std::f32::consts::TAU * (x * theta.cos() + y * theta.sin()) / 6.0 + 6.0 * phase[i]).sin();
        eosin[i] = 0.8 * (0.55 + 0.35 * fine2[i] + 0.25 * fine4[i] + 0.2 * fiber);
        density[i] = 0.75 + 0.5 * mid[i];
        hematoxylin[i] = 0.25 + 0.15 * fine4[i];
    }

    // Nuclei: dense clusters plus a sparse scattered population.
    let mut centers: Vec<(f32, f32)> = Vec::new();
    let n_clusters = ((w * h) as f32 / (110.0 * 110.0)).ceil() as usize;
    for _ in 0..n_clusters {
        let (cx, cy) = (rng.random_range(0.0..w as f32), rng.random_range(0.0..h as f32));
        let spread: f32 = rng.random_range(14.0..36.0);
        let count = rng.random_range(25..70);
        for _ in 0..count {
            let (dx, dy) = gaussian_pair(&mut rng);
            centers.push((cx + dx * spread, cy + dy * spread));
        }
    }
    let n_scattered = (w * h) / 500;
    for _ in 0..n_scattered {
        centers.push((rng.random_range(0.0..w as f32), rng.random_range(0.0..h as f32)));
    }
    let speckle = value_noise(&mut rng, w, h, 1.5);
    for (cx, cy) in centers {
        let a: f32 = rng.random_range(2.5..5.0);
        let b: f32 = rng.random_range(1.8f32..3.5).min(a);
        let rot: f32 = rng.random_range(0.0..std::f32::consts::PI);
        let strength: f32 = rng.random_range(1.0..1.5);
        paint_ellipse(&mut hematoxylin, mask, &speckle, w, h, (cx, cy), (a, b), rot, strength);
    }

    Stains {
        hematoxylin,
        eosin,
        density,
    }
}

#[allow(clippy::too_many_arguments)]
fn paint_ellipse(
    target: &mut [f32],
    mask: &[bool],
    speckle: &[f32],
    w: usize,
    h: usize,
    center: (f32, f32),
    axes: (f32, f32),
    rot: f32,
    strength: f32,
) {
    let (cx, cy) = center;
    let (a, b) = axes;
    let (s, c) = rot.sin_cos();
    let r = a.ceil() as isize + 1;
    let (x0, y0) = (cx.round() as isize, cy.round() as isize);
    for y in (y0 - r).max(0)..(y0 + r + 1).min(h as isize) {
        for x in (x0 - r).max(0)..(x0 + r + 1).min(w as isize) {
            let i = y as usize * w + x as usize;
            if !mask[i] {
                continue;
            }
            let (dx, dy) = (x as f32 - cx, y as f32 - cy);
            let u = (dx * c + dy * s) / a;
            let v = (-dx * s + dy * c) / b;
            let rho = (u * u + v * v).sqrt();
            // ~1 px anti-aliased rim
            let cover = ((1.0 - rho) * b + 0.5).clamp(0.0, 1.0);
            if cover > 0.0 {
                let value = strength * (0.8 + 0.4 * speckle[i]);
                target[i] = target[i].max(cover * value);
            }
        }
    }
}

fn gaussian_pair(rng: &mut ChaCha8Rng) -> (f32, f32) {
    // Box–Muller
    let u1: f32 = rng.random_range(f32::EPSILON..1.0);
    let u2: f32 = rng.random_range(0.0..1.0);
    let r = (-2.0 * u1.ln()).sqrt();
    let t = std::f32::consts::TAU * u2;
    (r * t.cos(), r * t.sin())
}

fn focal_surface(params: &PhantomParams) -> FocalSurface {
    let (w, h) = (params.width, params.height);
    let amp = params.focal_amplitude_um;
    if amp == 0.0 {
        return FocalSurface::flat(w, h, 0.0);
    }
    let mut rng = seed::rng(params.seed, &[3]);
    let f_max = (1.0 / (0.75 * w.max(h) as f64))
        .min(params.max_slope_um_per_px / (std::f64::consts::TAU * amp));
    let weights: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let waves: Vec<(f64, f64, f64, f64)> = weights
        .iter()
        .map(|wt| {
            let freq = rng.random_range(0.5..1.0) * f_max;
            let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (amp * wt / total, freq * dir.cos(), freq * dir.sin(), phase)
        })
        .collect();
    let mut data: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            waves
                .iter()
                .map(|(a, fx, fy, ph)| a * (std::f64::consts::TAU * (fx * x + fy * y) + ph).sin())
                .sum()
        })
        .collect();
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    data.iter_mut().for_each(|v| *v -= mean);
    let peak = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > amp { amp / peak } else { 1.0 };
    FocalSurface {
        width: w,
        height: h,
        data: data.iter().map(|v| (v * scale) as f32).collect(),
    }
}

/// Smooth value noise in [0, 1] with lattice spacing `cell` pixels.
pub(crate) fn value_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, cell: f32) -> Vec<f32> {
    let gw = (w as f32 / cell).ceil() as usize + 2;
    let gh = (h as f32 / cell).ceil() as usize + 2;
    let lattice: Vec<f32> = (0..gw * gh).map(|_| rng.random::<f32>()).collect();
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f32 / cell;
        let iy = fy.floor() as usize;
        let ty = smooth(fy - iy as f32);
        for x in 0..w {
            let fx = x as f32 / cell;
            let ix = fx.floor() as usize;
            let tx = smooth(fx - ix as f32);
            let v00 = lattice[iy * gw + ix];
            let v10 = lattice[iy * gw + ix + 1];
            let v01 = lattice[(iy + 1) * gw + ix];
            let v11 = lattice[(iy + 1) * gw + ix + 1];
            let top = v00 + (v10 - v00) * tx;
            let bottom = v01 + (v11 - v01) * tx;
            out.push(top + (bottom - top) * ty);
        }
    }
    out
}
