//! Orthonormal real 2-D FFT pair used by the spectral layers.
//!
//! A spectrum is stored as a real feature map with `2c` channels: the real
//! parts of all `c` input channels followed by their imaginary parts, each of
//! shape `h × (w/2 + 1)`.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::tensor::FeatureMap;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Number of retained columns of a real FFT over width `w`.
pub fn half_width(w: usize) -> usize {
    w / 2 + 1
}

/// Multiplicity of column `v` in the Hermitian extension of a half spectrum.
pub fn column_weight(v: usize, w: usize) -> f64 {
    if v == 0 || (w % 2 == 0 && v == w / 2) {
        1.0
    } else {
        2.0
    }
}

/// Forward transform of every channel: `(c, h, w) → (2c, h, w/2 + 1)`.
pub fn rfft2(x: &FeatureMap) -> FeatureMap {
    let (h, w) = (x.h, x.w);
    let wf = half_width(w);
    let row_fft = plan(w, false);
    let col_fft = plan(h, false);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = FeatureMap::zeros(2 * x.c, h, wf);
    let mut half = vec![Complex64::default(); h * wf];
    let mut row = vec![Complex64::default(); w];
    let mut col = vec![Complex64::default(); h];
    for c in 0..x.c {
        let plane = x.channel(c);
        for y in 0..h {
            for (r, v) in row.iter_mut().zip(&plane[y * w..(y + 1) * w]) {
                *r = Complex64::new(*v, 0.0);
            }
            row_fft.process(&mut row);
            half[y * wf..(y + 1) * wf].copy_from_slice(&row[..wf]);
        }
        for v in 0..wf {
            for y in 0..h {
                col[y] = half[y * wf + v];
            }
            col_fft.process(&mut col);
            for y in 0..h {
                half[y * wf + v] = col[y] * scale;
            }
        }
        out.channel_mut(c).iter_mut().zip(&half).for_each(|(o, z)| *o = z.re);
        out.channel_mut(x.c + c).iter_mut().zip(&half).for_each(|(o, z)| *o = z.im);
    }
    out
}

/// Inverse transform back to width `w`.
///
/// With `hermitian = true` each half-spectrum column is counted with its
/// multiplicity in the full spectrum, which inverts [`rfft2`]. With
/// `hermitian = false` every column has weight one, which makes the map the
/// exact adjoint of [`rfft2`].
pub fn irfft2(s: &FeatureMap, w: usize, hermitian: bool) -> FeatureMap {
    let h = s.h;
    let wf = half_width(w);
    assert_eq!(s.w, wf, "spectrum width does not match target width");
    assert_eq!(s.c % 2, 0, "spectrum must hold real and imaginary planes");
    let c_out = s.c / 2;
    let row_ifft = plan(w, true);
    let col_ifft = plan(h, true);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = FeatureMap::zeros(c_out, h, w);
    let mut half = vec![Complex64::default(); h * wf];
    let mut row = vec![Complex64::default(); w];
    let mut col = vec![Complex64::default(); h];
    for c in 0..c_out {
        let (re, im) = (s.channel(c), s.channel(c_out + c));
        for v in 0..wf {
            let wt = if hermitian { column_weight(v, w) } else { 1.0 };
            for y in 0..h {
                col[y] = Complex64::new(re[y * wf + v], im[y * wf + v]) * wt;
            }
            col_ifft.process(&mut col);
            for y in 0..h {
                half[y * wf + v] = col[y];
            }
        }
        let plane = out.channel_mut(c);
        for y in 0..h {
            row[..wf].copy_from_slice(&half[y * wf..(y + 1) * wf]);
            row[wf..].iter_mut().for_each(|z| *z = Complex64::default());
            row_ifft.process(&mut row);
            for (o, z) in plane[y * w..(y + 1) * w].iter_mut().zip(&row) {
                *o = z.re * scale;
            }
        }
    }
    out
}

/// Scales each spectrum column by its Hermitian multiplicity, in place.
pub fn weight_columns(s: &mut FeatureMap, w: usize) {
    let wf = s.w;
    for c in 0..s.c {
        for (i, v) in s.channel_mut(c).iter_mut().enumerate() {
            *v *= column_weight(i % wf, w);
        }
    }
}

/// `|X|²` per retained frequency, summed over channels.
pub fn power(x: &FeatureMap) -> Vec<f64> {
    let s = rfft2(x);
    let n = s.hw();
    let mut p = vec![0.0; n];
    for c in 0..s.c {
        p.iter_mut().zip(s.channel(c)).for_each(|(a, v)| *a += v * v);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(c: usize, h: usize, w: usize, seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn dot(a: &FeatureMap, b: &FeatureMap) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    fn naive_dft(x: &[f64], h: usize, w: usize, u: usize, v: usize) -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for y in 0..h {
            for xx in 0..w {
                let a = -2.0 * std::f64::consts::PI * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                re += x[y * w + xx] * a.cos();
                im += x[y * w + xx] * a.sin();
            }
        }
        let s = 1.0 / ((h * w) as f64).sqrt();
        (re * s, im * s)
    }

    #[test]
    fn forward_matches_direct_sum() {
        let x = random(1, 5, 6, 1);
        let s = rfft2(&x);
        for u in 0..5 {
            for v in 0..4 {
                let (re, im) = naive_dft(&x.data, 5, 6, u, v);
                assert!((s.channel(0)[u * 4 + v] - re).abs() < 1e-12);
                assert!((s.channel(1)[u * 4 + v] - im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        for (h, w) in [(8, 8), (7, 9), (6, 5), (3, 3), (14, 14)] {
            let x = random(2, h, w, (h * w) as u64);
            let back = irfft2(&rfft2(&x), w, true);
            for (a, b) in x.data.iter().zip(&back.data) {
                assert!((a - b).abs() < 1e-12, "{h}x{w}");
            }
        }
    }

    #[test]
    fn parseval_holds_with_column_weights() {
        let x = random(1, 6, 10, 3);
        let mut s = rfft2(&x);
        let energy: f64 = x.data.iter().map(|v| v * v).sum();
        let plain = s.clone();
        weight_columns(&mut s, 10);
        assert!((dot(&plain, &s) - energy).abs() < 1e-10);
    }

    #[test]
    fn unweighted_inverse_is_adjoint_of_forward() {
        for (h, w) in [(6, 8), (5, 7), (4, 4)] {
            let x = random(2, h, w, 11);
            let s = random(4, h, half_width(w), 12);
            let lhs = dot(&rfft2(&x), &s);
            let rhs = dot(&x, &irfft2(&s, w, false));
            assert!((lhs - rhs).abs() < 1e-10, "{h}x{w}");
        }
    }

    #[test]
    fn weighted_inverse_adjoint_is_weighted_forward() {
        let (h, w) = (6, 8);
        let y = random(1, h, w, 21);
        let s = random(2, h, half_width(w), 22);
        let lhs = dot(&irfft2(&s, w, true), &y);
        let mut fy = rfft2(&y);
        weight_columns(&mut fy, w);
        assert!((lhs - dot(&s, &fy)).abs() < 1e-10);
    }

    #[test]
    fn power_is_invariant_to_circular_shift() {
        let (h, w) = (8, 10);
        let x = random(2, h, w, 5);
        let mut shifted = FeatureMap::zeros(2, h, w);
        for c in 0..2 {
            for y in 0..h {
                for xx in 0..w {
                    shifted.channel_mut(c)[((y + 3) % h) * w + (xx + 4) % w] = x.channel(c)[y * w + xx];
                }
            }
        }
        for (a, b) in power(&x).iter().zip(power(&shifted).iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
