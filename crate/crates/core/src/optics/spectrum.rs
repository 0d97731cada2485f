//! Radially averaged power spectra and cut-off frequency estimation.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::Image;

/// Default noise floor relative to the first non-DC bin.
pub const DEFAULT_FLOOR_RATIO: f64 = 0.01;

/// Centered 2-D power spectrum `|F|² / N` of the channel-mean image after a
/// center crop to its smaller side. Returns `(side, power)` with the DC term
/// at `(side/2, side/2)`. By Parseval the power sums to the cropped image's
/// energy `Σ I²`.
pub fn power_spectrum_2d(image: &Image) -> (usize, Vec<f64>) {
    let gray = image.to_gray();
    let n = gray.width().min(gray.height());
    let x0 = (gray.width() - n) / 2;
    let y0 = (gray.height() - n) / 2;

    let mut buf: Vec<Complex64> = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            buf.push(Complex64::new(gray.get(0, x0 + x, y0 + y) as f64, 0.0));
        }
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            col[y] = buf[y * n + x];
        }
        fft.process(&mut col);
        for y in 0..n {
            buf[y * n + x] = col[y];
        }
    }

    let norm = 1.0 / (n * n) as f64;
    let half = n / 2;
    let mut power = vec![0.0; n * n];
    for v in 0..n {
        for u in 0..n {
            // fftshift
            let su = (u + half) % n;
            let sv = (v + half) % n;
            power[sv * n + su] = buf[v * n + u].norm_sqr() * norm;
        }
    }
    (n, power)
}

/// Power averaged over integer-radius annuli; index 0 is DC, the last index
/// is the Nyquist radius `side / 2`. Frequencies beyond the inscribed circle
/// are left out.
pub fn radial_power_spectrum(image: &Image) -> Vec<f64> {
    let (n, power) = power_spectrum_2d(image);
    let half = n / 2;
    let mut sums = vec![0.0; half + 1];
    let mut counts = vec![0usize; half + 1];
    for y in 0..n {
        for x in 0..n {
            let dx = x as f64 - half as f64;
            let dy = y as f64 - half as f64;
            let r = (dx * dx + dy * dy).sqrt().round() as usize;
            if r <= half {
                sums[r] += power[y * n + x];
                counts[r] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Largest normalized radius whose radial power stays at or above
/// `floor_ratio` times the power of the first non-DC bin. 1.0 is Nyquist.
pub fn estimate_cutoff_frequency(image: &Image, floor_ratio: f64) -> Result<f64> {
    if !(floor_ratio > 0.0 && floor_ratio < 1.0) {
        return Err(Error::Parameter(format!("floor_ratio must lie in (0, 1), got {floor_ratio}")));
    }
    let profile = radial_power_spectrum(image);
    if profile.len() < 2 {
        return Err(Error::UndefinedSpectrum);
    }
    let reference = profile[1];
    let ac_energy: f64 = profile[1..].iter().sum();
    if !(reference > 0.0) || ac_energy <= f64::MIN_POSITIVE {
        return Err(Error::UndefinedSpectrum);
    }
    let floor = floor_ratio * reference;
    let last = profile
        .iter()
        .rposition(|&p| p >= floor)
        .expect("bin 1 meets its own floor");
    Ok(last as f64 / (profile.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{gaussian_blur, generate_slide};
    use rand::Rng;

    fn noise_image(seed: u64, n: usize) -> Image {
        let mut rng = crate::seed::rng(seed, &[77]);
        let data: Vec<f32> = (0..n * n).map(|_| rng.random::<f32>()).collect();
        Image::from_vec(n, n, 1, data).unwrap()
    }

    #[test]
    fn parseval_holds() {
        let img = noise_image(1, 64);
        let (_, p) = power_spectrum_2d(&img);
        let spectral: f64 = p.iter().sum();
        let spatial: f64 = img.data().iter().map(|&v| (v as f64) * (v as f64)).sum();
        assert!(((spectral - spatial) / spatial).abs() < 1e-6);
    }

    #[test]
    fn parseval_after_center_crop() {
        let img = Image::from_fn(80, 64, 3, |c, x, y| ((c * 7 + x * 3 + y * 5) % 11) as f32 / 10.0);
        let (n, p) = power_spectrum_2d(&img);
        assert_eq!(n, 64);
        let crop = img.to_gray().crop(8, 0, 64, 64).unwrap();
        let spatial: f64 = crop.data().iter().map(|&v| (v as f64).powi(2)).sum();
        let spectral: f64 = p.iter().sum();
        assert!(((spectral - spatial) / spatial).abs() < 1e-6);
    }

    #[test]
    fn constant_image_is_pure_dc() {
        let profile = radial_power_spectrum(&Image::filled(32, 32, 3, 0.5));
        assert!(profile[0] > 0.0);
        assert!(profile[1..].iter().all(|&p| p.abs() < 1e-20));
    }

    #[test]
    fn white_noise_profile_is_flat() {
        let n = 64;
        let mut avg = vec![0.0; n / 2 + 1];
        for seed in 0..10 {
            for (a, p) in avg.iter_mut().zip(radial_power_spectrum(&noise_image(seed, n))) {
                *a += p / 10.0;
            }
        }
        let nonzero = &avg[1..];
        let max = nonzero.iter().cloned().fold(f64::MIN, f64::max);
        let min = nonzero.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 5.0, "max/min = {}", max / min);
    }

    #[test]
    fn white_noise_cutoff_is_near_nyquist() {
        for seed in 0..10 {
            let c = estimate_cutoff_frequency(&noise_image(seed, 64), DEFAULT_FLOOR_RATIO).unwrap();
            assert!(c >= 0.9, "seed {seed}: cutoff {c}");
        }
    }

    #[test]
    fn constant_image_has_undefined_cutoff() {
        let r = estimate_cutoff_frequency(&Image::filled(32, 32, 3, 0.7), 0.01);
        assert!(matches!(r, Err(Error::UndefinedSpectrum)));
        let r = estimate_cutoff_frequency(&Image::new(32, 32, 3), 0.01);
        assert!(matches!(r, Err(Error::UndefinedSpectrum)));
    }

    #[test]
    fn blur_suppresses_high_frequencies() {
        let slide = generate_slide(12, (256, 256), 0.9).unwrap();
        let sharp = radial_power_spectrum(&slide.sharp_image);
        let blurred = radial_power_spectrum(&gaussian_blur(&slide.sharp_image, 2.0));
        // find the crossover: past it the blurred profile never exceeds the sharp one
        let crossover = (1..sharp.len()).find(|&r| (r..sharp.len()).all(|q| blurred[q] <= sharp[q]));
        let crossover = crossover.expect("a crossover exists");
        assert!(crossover < sharp.len() / 4, "crossover at bin {crossover}");
        let c_sharp = estimate_cutoff_frequency(&slide.sharp_image, 0.01).unwrap();
        let c_blur = estimate_cutoff_frequency(&gaussian_blur(&slide.sharp_image, 2.0), 0.01).unwrap();
        assert!(c_sharp > c_blur);
    }

    #[test]
    fn rejects_bad_floor() {
        let img = noise_image(0, 16);
        assert!(estimate_cutoff_frequency(&img, 0.0).is_err());
        assert!(estimate_cutoff_frequency(&img, 1.0).is_err());
    }
}
