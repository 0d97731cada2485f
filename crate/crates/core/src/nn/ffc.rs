//! Fast Fourier convolution: a local convolutional path and a global path
//! whose receptive field covers the whole input through a spectral transform.

use super::fft::{irfft2, rfft2, weight_columns};
use super::layers::{avg_pool2, avg_pool2_backward, relu, relu_backward, Conv2d};
use super::params::{Grads, ParamSet};
use super::tensor::FeatureMap;

/// Pointwise convolution applied in the frequency domain.
///
/// The real and imaginary planes of the spectrum are treated as channels, so
/// every output frequency mixes information from the entire spatial input.
#[derive(Debug, Clone)]
pub struct FourierUnit {
    conv: Conv2d,
    /// Apply a ReLU to the convolved spectrum. Disabling it (together with an
    /// identity convolution) makes the unit an identity map.
    pub activation: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct FourierCache {
    spec: FeatureMap,
    z: FeatureMap,
    width: usize,
}

impl FourierUnit {
    pub(crate) fn new(ps: &mut ParamSet, name: &str, channels: usize, seed: u64) -> Self {
        Self {
            conv: Conv2d::new(ps, &format!("{name}.conv"), 2 * channels, 2 * channels, 1, 1, true, seed),
            activation: true,
        }
    }

    pub(crate) fn forward(&self, ps: &ParamSet, x: &FeatureMap) -> (FeatureMap, FourierCache) {
        let spec = rfft2(x);
        let mut z = self.conv.forward(ps, &spec);
        if self.activation {
            z = relu(z);
        }
        let y = irfft2(&z, x.w, true);
        (y, FourierCache { spec, z, width: x.w })
    }

    pub(crate) fn backward(&self, ps: &ParamSet, cache: &FourierCache, dy: &FeatureMap, grads: &mut Grads) -> FeatureMap {
        let mut dz = rfft2(dy);
        weight_columns(&mut dz, cache.width);
        if self.activation {
            dz = relu_backward(&cache.z, dz);
        }
        let dspec = self
            .conv
            .backward(ps, &cache.spec, &dz, grads, true)
            .expect("requested input gradient");
        irfft2(&dspec, cache.width, false)
    }
}

/// Global path of an FFC layer: `1×1 conv → ReLU → (h + FourierUnit(h)) → 1×1 conv`,
/// preceded by 2×2 average pooling when the layer downsamples.
#[derive(Debug, Clone)]
pub struct SpectralTransform {
    stride: usize,
    reduce: Conv2d,
    fourier: FourierUnit,
    expand: Conv2d,
}

#[derive(Debug, Clone)]
pub(crate) struct SpectralCache {
    input_hw: (usize, usize),
    pooled: Option<FeatureMap>,
    hidden: FeatureMap,
    fourier: FourierCache,
    sum: FeatureMap,
}

impl SpectralTransform {
    pub(crate) fn new(ps: &mut ParamSet, name: &str, cin: usize, cout: usize, stride: usize, seed: u64) -> Self {
        let hidden = (cout / 2).max(1);
        Self {
            stride,
            reduce: Conv2d::new(ps, &format!("{name}.reduce"), cin, hidden, 1, 1, false, seed),
            fourier: FourierUnit::new(ps, &format!("{name}.fourier"), hidden, seed),
            expand: Conv2d::new(ps, &format!("{name}.expand"), hidden, cout, 1, 1, false, seed),
        }
    }

    pub(crate) fn forward(&self, ps: &ParamSet, x: &FeatureMap) -> (FeatureMap, SpectralCache) {
        let pooled = (self.stride == 2).then(|| avg_pool2(x));
        let xin = pooled.as_ref().unwrap_or(x);
        let hidden = relu(self.reduce.forward(ps, xin));
        let (f, fourier) = self.fourier.forward(ps, &hidden);
        let mut sum = hidden.clone();
        sum.add_assign(&f);
        let y = self.expand.forward(ps, &sum);
        (
            y,
            SpectralCache {
                input_hw: (x.h, x.w),
                pooled,
                hidden,
                fourier,
                sum,
            },
        )
    }

    pub(crate) fn backward(
        &self,
        ps: &ParamSet,
        x: &FeatureMap,
        cache: &SpectralCache,
        dy: &FeatureMap,
        grads: &mut Grads,
    ) -> FeatureMap {
        let dsum = self.expand.backward(ps, &cache.sum, dy, grads, true).expect("input gradient");
        let mut dh = self.fourier.backward(ps, &cache.fourier, &dsum, grads);
        dh.add_assign(&dsum);
        let dh = relu_backward(&cache.hidden, dh);
        let xin = cache.pooled.as_ref().unwrap_or(x);
        let dxin = self.reduce.backward(ps, xin, &dh, grads, true).expect("input gradient");
        if self.stride == 2 {
            avg_pool2_backward(&dxin, cache.input_hw.0, cache.input_hw.1)
        } else {
            dxin
        }
    }
}

/// FFC layer on a feature map split into `local` and `global` channel groups.
///
/// `y_local = l2l(x_local) + g2l(x_global)` and
/// `y_global = l2g(x_local) + spectral(x_global)`; the output is the channel
/// concatenation `[y_local, y_global]`.
#[derive(Debug, Clone)]
pub struct FfcConv {
    pub in_local: usize,
    pub in_global: usize,
    pub out_local: usize,
    pub out_global: usize,
    stride: usize,
    l2l: Option<Conv2d>,
    l2g: Option<Conv2d>,
    g2l: Option<Conv2d>,
    g2g: Option<SpectralTransform>,
}

#[derive(Debug, Clone)]
pub(crate) struct FfcCache {
    xl: FeatureMap,
    xg: FeatureMap,
    spectral: Option<SpectralCache>,
}

impl FfcConv {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        ps: &mut ParamSet,
        name: &str,
        in_local: usize,
        in_global: usize,
        out_local: usize,
        out_global: usize,
        stride: usize,
        seed: u64,
    ) -> Self {
        let conv = |ps: &mut ParamSet, tag: &str, cin: usize, cout: usize, bias: bool| {
            (cin > 0 && cout > 0).then(|| Conv2d::new(ps, &format!("{name}.{tag}"), cin, cout, 3, stride, bias, seed))
        };
        let l2l = conv(ps, "l2l", in_local, out_local, true);
        let l2g = conv(ps, "l2g", in_local, out_global, true);
        let g2l = conv(ps, "g2l", in_global, out_local, false);
        let g2g = (in_global > 0 && out_global > 0)
            .then(|| SpectralTransform::new(ps, &format!("{name}.g2g"), in_global, out_global, stride, seed));
        Self {
            in_local,
            in_global,
            out_local,
            out_global,
            stride,
            l2l,
            l2g,
            g2l,
            g2g,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.stride, w / self.stride)
    }

    pub(crate) fn forward(&self, ps: &ParamSet, x: &FeatureMap) -> (FeatureMap, FfcCache) {
        assert_eq!(x.c, self.in_local + self.in_global, "ffc input channels");
        let (xl, xg) = x.split(self.in_local);
        let (ho, wo) = self.output_size(x.h, x.w);
        let mut yl = FeatureMap::zeros(self.out_local, ho, wo);
        let mut yg = FeatureMap::zeros(self.out_global, ho, wo);
        if let Some(c) = &self.l2l {
            yl.add_assign(&c.forward(ps, &xl));
        }
        if let Some(c) = &self.g2l {
            yl.add_assign(&c.forward(ps, &xg));
        }
        if let Some(c) = &self.l2g {
            yg.add_assign(&c.forward(ps, &xl));
        }
        let spectral = self.g2g.as_ref().map(|t| {
            let (out, cache) = t.forward(ps, &xg);
            yg.add_assign(&out);
            cache
        });
        (FeatureMap::concat(&yl, &yg), FfcCache { xl, xg, spectral })
    }

    pub(crate) fn backward(
        &self,
        ps: &ParamSet,
        cache: &FfcCache,
        dy: &FeatureMap,
        grads: &mut Grads,
        want_dx: bool,
    ) -> Option<FeatureMap> {
        let (dyl, dyg) = dy.split(self.out_local);
        let mut dxl = FeatureMap::zeros(self.in_local, cache.xl.h, cache.xl.w);
        let mut dxg = FeatureMap::zeros(self.in_global, cache.xg.h, cache.xg.w);
        let acc = |conv: &Option<Conv2d>, x: &FeatureMap, dy: &FeatureMap, dx: &mut FeatureMap, grads: &mut Grads| {
            if let Some(c) = conv {
                if let Some(g) = c.backward(ps, x, dy, grads, want_dx) {
                    dx.add_assign(&g);
                }
            }
        };
        acc(&self.l2l, &cache.xl, &dyl, &mut dxl, grads);
        acc(&self.l2g, &cache.xl, &dyg, &mut dxl, grads);
        acc(&self.g2l, &cache.xg, &dyl, &mut dxg, grads);
        if let (Some(t), Some(sc)) = (&self.g2g, &cache.spectral) {
            // The spectral path has no cheap way to skip its input gradient;
            // computing it unconditionally is harmless.
            let g = t.backward(ps, &cache.xg, sc, &dyg, grads);
            dxg.add_assign(&g);
        }
        want_dx.then(|| FeatureMap::concat(&dxl, &dxg))
    }
}
