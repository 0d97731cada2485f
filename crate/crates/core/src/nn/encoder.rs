//! The two encoder families: a plain convolutional pyramid and a pyramid of
//! FFC blocks. Both take a 3-channel `H × W` input to `8·base` channels at
//! `H/16 × W/16`.

use serde::{Deserialize, Serialize};

use super::ffc::{FfcCache, FfcConv};
use super::layers::{relu, relu_backward, Conv2d};
use super::params::{Grads, ParamSet};
use super::tensor::FeatureMap;

pub const STAGES: usize = 4;
pub const DOWNSAMPLE: usize = 1 << STAGES;
/// Fraction of each FFC block's channels routed through the global branch.
pub const GLOBAL_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Spatial,
    Spectral,
}

#[derive(Debug, Clone)]
enum Layer {
    Conv(Conv2d),
    Ffc(FfcConv),
}

/// Four stages of two layers each (a strided one and a same-resolution one),
/// every layer followed by a ReLU.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub kind: EncoderKind,
    pub out_channels: usize,
    layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    /// `acts[0]` is the input; `acts[i + 1]` is the ReLU output of layer `i`.
    acts: Vec<FeatureMap>,
    ffc: Vec<Option<FfcCache>>,
}

impl EncoderCache {
    pub(crate) fn output(&self) -> &FeatureMap {
        self.acts.last().expect("encoder has layers")
    }
}

fn split(c: usize) -> (usize, usize) {
    let global = (c as f64 * GLOBAL_RATIO).round() as usize;
    (c - global, global)
}

impl Encoder {
    pub(crate) fn new(ps: &mut ParamSet, name: &str, kind: EncoderKind, in_channels: usize, base: usize, seed: u64) -> Self {
        let mut layers = Vec::with_capacity(2 * STAGES);
        let mut cin = in_channels;
        // The raw image enters the FFC stack as purely local channels.
        let mut cin_split = (in_channels, 0);
        for stage in 0..STAGES {
            let c = base << stage;
            for (j, stride) in [2, 1].into_iter().enumerate() {
                let lname = format!("{name}.stage{stage}.{j}");
                layers.push(match kind {
                    EncoderKind::Spatial => Layer::Conv(Conv2d::new(ps, &lname, cin, c, 3, stride, true, seed)),
                    EncoderKind::Spectral => {
                        let (ol, og) = split(c);
                        let l = FfcConv::new(ps, &lname, cin_split.0, cin_split.1, ol, og, stride, seed);
                        cin_split = (ol, og);
                        Layer::Ffc(l)
                    }
                });
                cin = c;
            }
        }
        Self {
            kind,
            out_channels: cin,
            layers,
        }
    }

    pub(crate) fn forward(&self, ps: &ParamSet, x: &FeatureMap) -> EncoderCache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut ffc = Vec::with_capacity(self.layers.len());
        acts.push(x.clone());
        for layer in &self.layers {
            let input = acts.last().expect("input pushed");
            let (y, cache) = match layer {
                Layer::Conv(c) => (c.forward(ps, input), None),
                Layer::Ffc(f) => {
                    let (y, c) = f.forward(ps, input);
                    (y, Some(c))
                }
            };
            acts.push(relu(y));
            ffc.push(cache);
        }
        EncoderCache { acts, ffc }
    }

    /// Backpropagates `dy` (gradient w.r.t. the encoder output). The input
    /// gradient is never needed because encoders read the image directly.
    pub(crate) fn backward(&self, ps: &ParamSet, cache: &EncoderCache, dy: FeatureMap, grads: &mut Grads) {
        let mut g = dy;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dz = relu_backward(&cache.acts[i + 1], g);
            let want_dx = i > 0;
            let dx = match layer {
                Layer::Conv(c) => c.backward(ps, &cache.acts[i], &dz, grads, want_dx),
                Layer::Ffc(f) => f.backward(ps, cache.ffc[i].as_ref().expect("ffc cache"), &dz, grads, want_dx),
            };
            match dx {
                Some(dx) => g = dx,
                None => break,
            }
        }
    }
}
