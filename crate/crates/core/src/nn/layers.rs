//! Convolution, pooling and activation layers with explicit backward passes.

use super::params::{Grads, Init, ParamId, ParamSet};
use super::tensor::{gemm, FeatureMap, MatRef};

/// 2-D convolution with square kernel, zero padding `k / 2` and optional bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        ps: &mut ParamSet,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        bias: bool,
        seed: u64,
    ) -> Self {
        let fan_in = cin * k * k;
        let weight = ps.register(
            format!("{name}.weight"),
            vec![cout, cin, k, k],
            Init::Normal {
                fan_in,
                gain: std::f64::consts::SQRT_2,
            },
            seed,
        );
        let bias = bias.then(|| ps.register(format!("{name}.bias"), vec![cout], Init::Zeros, seed));
        Self {
            cin,
            cout,
            k,
            stride,
            weight,
            bias,
        }
    }

    fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        ((h + 2 * p - self.k) / self.stride + 1, (w + 2 * p - self.k) / self.stride + 1)
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }

    fn im2col(&self, x: &FeatureMap, ho: usize, wo: usize) -> Vec<f64> {
        let (k, s, p) = (self.k, self.stride, self.pad() as isize);
        let n = ho * wo;
        let mut cols = vec![0.0; self.cin * k * k * n];
        for ci in 0..self.cin {
            let plane = x.channel(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * n;
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                        let dst = &mut cols[row + oy * wo..row + (oy + 1) * wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < x.w as isize {
                                *d = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> FeatureMap {
        let (k, s, p) = (self.k, self.stride, self.pad() as isize);
        let n = ho * wo;
        let mut dx = FeatureMap::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            let plane = dx.channel_mut(ci);
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * n;
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let src = &cols[row + oy * wo..row + (oy + 1) * wo];
                        for (ox, v) in src.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, ps: &ParamSet, x: &FeatureMap) -> FeatureMap {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (ho, wo) = self.output_size(x.h, x.w);
        let n = ho * wo;
        let kk = self.cin * self.k * self.k;
        let mut y = FeatureMap::zeros(self.cout, ho, wo);
        let owned;
        let cols: &[f64] = if self.is_pointwise() {
            &x.data
        } else {
            owned = self.im2col(x, ho, wo);
            &owned
        };
        gemm(
            self.cout,
            kk,
            n,
            1.0,
            MatRef::rows(ps.get(self.weight), kk),
            MatRef::rows(cols, n),
            0.0,
            &mut y.data,
        );
        if let Some(b) = self.bias {
            for (co, bv) in ps.get(b).iter().enumerate() {
                y.channel_mut(co).iter_mut().for_each(|v| *v += bv);
            }
        }
        y
    }

    /// Accumulates weight gradients and, if requested, returns `∂L/∂x`.
    pub fn backward(
        &self,
        ps: &ParamSet,
        x: &FeatureMap,
        dy: &FeatureMap,
        grads: &mut Grads,
        want_dx: bool,
    ) -> Option<FeatureMap> {
        let (ho, wo) = (dy.h, dy.w);
        let n = ho * wo;
        let kk = self.cin * self.k * self.k;
        let owned;
        let cols: &[f64] = if self.is_pointwise() {
            &x.data
        } else {
            owned = self.im2col(x, ho, wo);
            &owned
        };
        gemm(
            self.cout,
            n,
            kk,
            1.0,
            MatRef::rows(&dy.data, n),
            MatRef::transposed(cols, n),
            1.0,
            grads.get_mut(self.weight),
        );
        if let Some(b) = self.bias {
            let gb = grads.get_mut(b);
            for (co, g) in gb.iter_mut().enumerate() {
                *g += dy.channel(co).iter().sum::<f64>();
            }
        }
        if !want_dx {
            return None;
        }
        let mut dcols = vec![0.0; kk * n];
        gemm(
            kk,
            self.cout,
            n,
            1.0,
            MatRef::transposed(ps.get(self.weight), kk),
            MatRef::rows(&dy.data, n),
            0.0,
            &mut dcols,
        );
        if self.is_pointwise() {
            Some(FeatureMap::from_vec(self.cin, x.h, x.w, dcols))
        } else {
            Some(self.col2im(&dcols, x.h, x.w, ho, wo))
        }
    }
}

pub fn relu(mut x: FeatureMap) -> FeatureMap {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
    x
}

/// Masks `dy` by the positive part of the ReLU output `y`.
pub fn relu_backward(y: &FeatureMap, mut dy: FeatureMap) -> FeatureMap {
    dy.data
        .iter_mut()
        .zip(&y.data)
        .for_each(|(g, &v)| {
            if v <= 0.0 {
                *g = 0.0
            }
        });
    dy
}

/// 2×2 average pooling with stride 2.
pub fn avg_pool2(x: &FeatureMap) -> FeatureMap {
    let (ho, wo) = (x.h / 2, x.w / 2);
    let mut y = FeatureMap::zeros(x.c, ho, wo);
    for c in 0..x.c {
        let src = x.channel(c);
        let dst = y.channel_mut(c);
        for oy in 0..ho {
            for ox in 0..wo {
                let i = 2 * oy * x.w + 2 * ox;
                dst[oy * wo + ox] = 0.25 * (src[i] + src[i + 1] + src[i + x.w] + src[i + x.w + 1]);
            }
        }
    }
    y
}

pub fn avg_pool2_backward(dy: &FeatureMap, h: usize, w: usize) -> FeatureMap {
    let mut dx = FeatureMap::zeros(dy.c, h, w);
    for c in 0..dy.c {
        let src = dy.channel(c);
        let dst = dx.channel_mut(c);
        for oy in 0..dy.h {
            for ox in 0..dy.w {
                let g = 0.25 * src[oy * dy.w + ox];
                let i = 2 * oy * w + 2 * ox;
                dst[i] += g;
                dst[i + 1] += g;
                dst[i + w] += g;
                dst[i + w + 1] += g;
            }
        }
    }
    dx
}
