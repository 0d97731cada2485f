//! Named parameter storage shared by all layers of a network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// How a freshly registered tensor is filled.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Zeros,
    /// N(0, gain² / fan_in)
    Normal { fan_in: usize, gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn register(&mut self, name: String, shape: Vec<usize>, init: Init, base_seed: u64) -> ParamId {
        let len = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; len],
            Init::Normal { fan_in, gain } => {
                let std = gain / (fan_in.max(1) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("finite std");
                let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(base_seed, &[self.params.len() as u64]));
                (0..len).map(|_| normal.sample(&mut rng)).collect()
            }
        };
        self.params.push(Param { name, shape, data });
        ParamId(self.params.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].data
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            data: self.params.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn flat_get(&self, index: usize) -> f64 {
        let (p, i) = self.locate(index);
        self.params[p].data[i]
    }

    pub fn flat_set(&mut self, index: usize, value: f64) {
        let (p, i) = self.locate(index);
        self.params[p].data[i] = value;
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (p, param) in self.params.iter().enumerate() {
            if index < param.data.len() {
                return (p, index);
            }
            index -= param.data.len();
        }
        panic!("flat parameter index out of range");
    }
}

/// Gradient buffers laid out like a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub(crate) data: Vec<Vec<f64>>,
}

impl Grads {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn flat(&self) -> Vec<f64> {
        self.data.iter().flatten().copied().collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().flatten().for_each(|g| *g *= s);
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|g| g.is_finite())
    }
}
