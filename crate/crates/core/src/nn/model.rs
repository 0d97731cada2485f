//! The focus regression network `f(I) = R(B([E_a(I), E_b(I)]))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::encoder::{Encoder, EncoderCache, EncoderKind, DOWNSAMPLE};
use super::layers::{relu, relu_backward, Conv2d};
use super::params::{Grads, Init, ParamId, ParamSet};
use super::tensor::FeatureMap;
use crate::{Error, Image, Result};

pub const TILE_SIZE: usize = 224;
pub const IN_CHANNELS: usize = 3;
/// Width giving the spatiospectral variant roughly 4.2M parameters.
pub const DEFAULT_BASE_CHANNELS: usize = 36;

/// Which encoder pair feeds the bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Two convolutional encoders.
    Spatial,
    /// Two FFC encoders.
    Spectral,
    /// One convolutional and one FFC encoder.
    Spatiospectral,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Spatial, Variant::Spectral, Variant::Spatiospectral];

    pub fn encoders(self) -> [EncoderKind; 2] {
        match self {
            Variant::Spatial => [EncoderKind::Spatial, EncoderKind::Spatial],
            Variant::Spectral => [EncoderKind::Spectral, EncoderKind::Spectral],
            Variant::Spatiospectral => [EncoderKind::Spatial, EncoderKind::Spectral],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Spatial => "spatial",
            Variant::Spectral => "spectral",
            Variant::Spatiospectral => "spatiospectral",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Variant::Spatial),
            "spectral" => Ok(Variant::Spectral),
            "spatiospectral" => Ok(Variant::Spatiospectral),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected spatial, spectral or spatiospectral)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub base_channels: usize,
    /// `(height, width)` of the tiles the model accepts.
    pub input_size: (usize, usize),
    /// Approximate parameter count the default width was chosen for.
    pub param_budget: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Spatiospectral,
            base_channels: DEFAULT_BASE_CHANNELS,
            input_size: (TILE_SIZE, TILE_SIZE),
            param_budget: 4_200_000,
        }
    }
}

impl ModelConfig {
    pub fn new(variant: Variant, base_channels: usize) -> Self {
        Self {
            variant,
            base_channels,
            ..Self::default()
        }
    }

    pub fn with_input_size(mut self, height: usize, width: usize) -> Self {
        self.input_size = (height, width);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels < 2 || self.base_channels % 2 != 0 {
            return Err(Error::Config(format!(
                "base_channels must be an even number ≥ 2, got {}",
                self.base_channels
            )));
        }
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
            return Err(Error::Shape(format!(
                "input size {h}×{w} is not a positive multiple of {DOWNSAMPLE}"
            )));
        }
        Ok(())
    }
}

/// Input and label scaling stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// Network outputs are multiplied by this to obtain micrometres.
    pub label_scale_um: f64,
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for NormalizationStats {
    fn default() -> Self {
        Self {
            label_scale_um: 20.0,
            mean: [0.5; 3],
            std: [0.25; 3],
        }
    }
}

impl NormalizationStats {
    pub fn validate(&self) -> Result<()> {
        if !(self.label_scale_um.is_finite() && self.label_scale_um > 0.0) {
            return Err(Error::Config("label_scale_um must be positive".into()));
        }
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("channel statistics must be finite with positive std".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FocusModel {
    config: ModelConfig,
    normalization: NormalizationStats,
    params: ParamSet,
    encoders: [Encoder; 2],
    bottleneck: Conv2d,
    head_weight: ParamId,
    head_bias: ParamId,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    encoders: [EncoderCache; 2],
    concat: FeatureMap,
    fused: FeatureMap,
    pooled: Vec<f64>,
}

impl ForwardCache {
    /// Globally pooled bottleneck features feeding the linear head.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }

    /// `(channels, height, width)` of the two encoder outputs.
    pub fn encoder_shapes(&self) -> [(usize, usize, usize); 2] {
        self.encoders.each_ref().map(|e| {
            let o = e.output();
            (o.c, o.h, o.w)
        })
    }
}

impl FocusModel {
    /// Builds a freshly initialised model (Kaiming-normal weights, zero biases).
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamSet::new();
        let base = config.base_channels;
        let [ka, kb] = config.variant.encoders();
        let ea = Encoder::new(&mut ps, "encoder_a", ka, IN_CHANNELS, base, seed);
        let eb = Encoder::new(&mut ps, "encoder_b", kb, IN_CHANNELS, base, seed);
        let cat = ea.out_channels + eb.out_channels;
        let fused = cat / 2;
        let bottleneck = Conv2d::new(&mut ps, "bottleneck", cat, fused, 3, 1, true, seed);
        let head_weight = ps.register(
            "head.weight".into(),
            vec![1, fused],
            Init::Normal { fan_in: fused, gain: 1.0 },
            seed,
        );
        let head_bias = ps.register("head.bias".into(), vec![1], Init::Zeros, seed);
        Ok(Self {
            config,
            normalization: NormalizationStats::default(),
            params: ps,
            encoders: [ea, eb],
            bottleneck,
            head_weight,
            head_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn normalization(&self) -> &NormalizationStats {
        &self.normalization
    }

    pub fn set_normalization(&mut self, stats: NormalizationStats) -> Result<()> {
        stats.validate()?;
        self.normalization = stats;
        Ok(())
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Converts a `[0, 1]` RGB tile into a channel-normalised network input.
    pub fn prepare(&self, image: &Image) -> Result<FeatureMap> {
        let (h, w) = self.config.input_size;
        if image.channels() != IN_CHANNELS || image.height() != h || image.width() != w {
            return Err(Error::Shape(format!(
                "expected a {h}×{w}×{IN_CHANNELS} tile, got {}×{}×{}",
                image.height(),
                image.width(),
                image.channels()
            )));
        }
        Ok(normalize(image, &self.normalization))
    }

    /// Network output in normalised label units for a prepared input.
    pub fn forward(&self, x: &FeatureMap) -> f64 {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &FeatureMap) -> (f64, ForwardCache) {
        let ps = &self.params;
        let ca = self.encoders[0].forward(ps, x);
        let cb = self.encoders[1].forward(ps, x);
        let concat = FeatureMap::concat(ca.output(), cb.output());
        let fused = relu(self.bottleneck.forward(ps, &concat));
        let hw = fused.hw() as f64;
        let pooled: Vec<f64> = (0..fused.c).map(|c| fused.channel(c).iter().sum::<f64>() / hw).collect();
        let w = ps.get(self.head_weight);
        let out = ps.get(self.head_bias)[0] + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>();
        (
            out,
            ForwardCache {
                encoders: [ca, cb],
                concat,
                fused,
                pooled,
            },
        )
    }

    /// Accumulates `d_out · ∂out/∂θ` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, d_out: f64, grads: &mut Grads) {
        let ps = &self.params;
        for (g, p) in grads.get_mut(self.head_weight).iter_mut().zip(&cache.pooled) {
            *g += d_out * p;
        }
        grads.get_mut(self.head_bias)[0] += d_out;
        let fused = &cache.fused;
        let hw = fused.hw();
        let w = ps.get(self.head_weight);
        let mut d_fused = FeatureMap::zeros(fused.c, fused.h, fused.w);
        for c in 0..fused.c {
            let v = d_out * w[c] / hw as f64;
            d_fused.channel_mut(c).iter_mut().for_each(|g| *g = v);
        }
        let d_pre = relu_backward(fused, d_fused);
        let d_cat = self
            .bottleneck
            .backward(ps, &cache.concat, &d_pre, grads, true)
            .expect("input gradient");
        let (da, db) = d_cat.split(self.encoders[0].out_channels);
        self.encoders[0].backward(ps, &cache.encoders[0], da, grads);
        self.encoders[1].backward(ps, &cache.encoders[1], db, grads);
    }

    /// Signed defocus predictions in micrometres, one per tile.
    pub fn predict(&self, tiles: &[Image]) -> Result<Vec<f64>> {
        tiles.iter().map(|t| self.predict_one(t)).collect()
    }

    pub fn predict_one(&self, tile: &Image) -> Result<f64> {
        let x = self.prepare(tile)?;
        Ok(self.forward(&x) * self.normalization.label_scale_um)
    }

    /// Replaces all parameter tensors, checking names and shapes.
    pub(crate) fn replace_params(&mut self, tensors: Vec<(String, Vec<usize>, Vec<f64>)>) -> std::result::Result<(), String> {
        if tensors.len() != self.params.len() {
            return Err(format!(
                "expected {} tensors, found {}",
                self.params.len(),
                tensors.len()
            ));
        }
        for (p, (name, shape, data)) in self.params.iter().zip(&tensors) {
            if &p.name != name || &p.shape != shape {
                return Err(format!(
                    "tensor {name:?} {shape:?} does not match architecture tensor {:?} {:?}",
                    p.name, p.shape
                ));
            }
            if data.len() != p.data.len() {
                return Err(format!("tensor {name:?} has {} values, expected {}", data.len(), p.data.len()));
            }
        }
        for (p, (_, _, data)) in self.params.iter_mut().zip(tensors) {
            p.data = data;
        }
        Ok(())
    }
}

/// Per-channel `(x − mean) / std` in `f64`.
pub fn normalize(image: &Image, stats: &NormalizationStats) -> FeatureMap {
    let (c, h, w) = (image.channels(), image.height(), image.width());
    let mut out = FeatureMap::zeros(c, h, w);
    for ch in 0..c {
        let (m, s) = (stats.mean[ch % 3], stats.std[ch % 3]);
        for (o, v) in out.channel_mut(ch).iter_mut().zip(image.plane(ch)) {
            *o = (*v as f64 - m) / s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_width_lands_in_parameter_budget() {
        let m = FocusModel::new(ModelConfig::default(), 0).unwrap();
        let n = m.param_count();
        assert!((3_400_000..=5_000_000).contains(&n), "{n}");
    }

    #[test]
    fn variant_parameter_ordering() {
        let count = |v| FocusModel::new(ModelConfig::new(v, 8), 0).unwrap().param_count();
        let (sp, sw, ss) = (count(Variant::Spatial), count(Variant::Spectral), count(Variant::Spatiospectral));
        assert!(sw < ss && ss < sp, "{sw} {ss} {sp}");
    }

    #[test]
    fn rejects_indivisible_sizes_and_wrong_tiles() {
        assert!(matches!(
            FocusModel::new(ModelConfig::new(Variant::Spatial, 4).with_input_size(40, 48), 0),
            Err(Error::Shape(_))
        ));
        let m = FocusModel::new(ModelConfig::new(Variant::Spectral, 4).with_input_size(32, 32), 0).unwrap();
        assert!(matches!(m.predict_one(&Image::new(48, 32, 3)), Err(Error::Shape(_))));
        assert!(m.predict_one(&Image::new(32, 32, 3)).unwrap().is_finite());
    }

    #[test]
    fn variant_round_trips_through_strings() {
        for v in Variant::ALL {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("both".parse::<Variant>().is_err());
    }
}
