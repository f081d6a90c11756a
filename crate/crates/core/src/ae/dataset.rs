//! Synthetic attribute data: every sample is generated from a tuple of
//! discrete attributes through a fixed random mixing map, so the ground-truth
//! factors are known and decoded outputs can be classified back to them.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{RngSeed, StreamRng};

/// Each attribute value must occur at least this often in a sample set.
pub const MIN_VALUE_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    /// `x = tanh(M (onehot(a_1) ++ ... ++ onehot(a_L) + jitter))`.
    #[default]
    Tanh,
    /// `x = e_1[a_1] ++ ... ++ e_L[a_L] + jitter`, one slice per attribute.
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpaceConfig {
    pub cardinalities: Vec<usize>,
    pub input_dim: usize,
    pub jitter: f64,
    pub mixing: Mixing,
    /// Standard deviation of the mixing-map entries.
    pub mixing_scale: f64,
}

impl Default for AttributeSpaceConfig {
    fn default() -> Self {
        Self {
            cardinalities: vec![4, 4, 4],
            input_dim: 48,
            jitter: 0.05,
            mixing: Mixing::Tanh,
            mixing_scale: 0.6,
        }
    }
}

/// The seed-fixed generative map shared by all sample sets.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpace {
    config: AttributeSpaceConfig,
    /// `input_dim x sum(cardinalities)` row-major for [`Mixing::Tanh`];
    /// concatenated per-attribute embedding tables for [`Mixing::Separable`].
    map: Vec<f64>,
    prototypes: Vec<Vec<f64>>,
}

impl AttributeSpace {
    pub fn new(config: AttributeSpaceConfig, seed: RngSeed) -> Result<Self> {
        if config.cardinalities.is_empty() || config.cardinalities.iter().any(|&c| c < 2) {
            return Err(invalid("cardinalities", "need at least one attribute, each with >= 2 values"));
        }
        if config.input_dim == 0 {
            return Err(invalid("input_dim", "must be positive"));
        }
        if !(config.jitter >= 0.0 && config.jitter.is_finite()) {
            return Err(invalid("jitter", "must be nonnegative"));
        }
        let attrs = config.cardinalities.len();
        if config.mixing == Mixing::Separable && config.input_dim % attrs != 0 {
            return Err(invalid("input_dim", "separable mixing needs input_dim divisible by the attribute count"));
        }
        let total: usize = config.cardinalities.iter().sum();
        let mut rng = seed.derive("mixing").rng();
        let normal = Normal::new(0.0, config.mixing_scale).map_err(|e| invalid("mixing_scale", e.to_string()))?;
        let map_len = match config.mixing {
            Mixing::Tanh => config.input_dim * total,
            Mixing::Separable => (config.input_dim / attrs) * total,
        };
        let map = (0..map_len).map(|_| normal.sample(&mut rng)).collect();
        let mut space = Self {
            config,
            map,
            prototypes: Vec::new(),
        };
        space.prototypes = (0..space.num_tuples())
            .map(|t| space.render(&space.tuple_of(t), &[]))
            .collect();
        Ok(space)
    }

    pub fn config(&self) -> &AttributeSpaceConfig {
        &self.config
    }

    pub fn num_attributes(&self) -> usize {
        self.config.cardinalities.len()
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn num_tuples(&self) -> usize {
        self.config.cardinalities.iter().product()
    }

    /// Mixed-radix index of an attribute tuple.
    pub fn tuple_index(&self, labels: &[usize]) -> usize {
        labels
            .iter()
            .zip(&self.config.cardinalities)
            .fold(0, |acc, (&v, &c)| acc * c + v)
    }

    pub fn tuple_of(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_attributes()];
        for (slot, &c) in out.iter_mut().zip(&self.config.cardinalities).rev() {
            *slot = index % c;
            index /= c;
        }
        out
    }

    /// Sample for `labels`, with `jitter` (length = one-hot width for tanh
    /// mixing, `input_dim` for separable) or none when empty.
    fn render(&self, labels: &[usize], jitter: &[f64]) -> Vec<f64> {
        let cards = &self.config.cardinalities;
        match self.config.mixing {
            Mixing::Tanh => {
                let total: usize = cards.iter().sum();
                let mut h = vec![0.0; total];
                let mut off = 0;
                for (&v, &c) in labels.iter().zip(cards) {
                    h[off + v] = 1.0;
                    off += c;
                }
                if !jitter.is_empty() {
                    h.iter_mut().zip(jitter).for_each(|(a, j)| *a += j);
                }
                (0..self.config.input_dim)
                    .map(|r| {
                        let row = &self.map[r * total..(r + 1) * total];
                        row.iter().zip(&h).map(|(m, v)| m * v).sum::<f64>().tanh()
                    })
                    .collect()
            }
            Mixing::Separable => {
                let w = self.config.input_dim / cards.len();
                let mut x = Vec::with_capacity(self.config.input_dim);
                let mut table_off = 0;
                for (&v, &c) in labels.iter().zip(cards) {
                    x.extend_from_slice(&self.map[table_off + v * w..table_off + (v + 1) * w]);
                    table_off += c * w;
                }
                if !jitter.is_empty() {
                    x.iter_mut().zip(jitter).for_each(|(a, j)| *a += j);
                }
                x
            }
        }
    }

    pub fn prototype(&self, labels: &[usize]) -> &[f64] {
        &self.prototypes[self.tuple_index(labels)]
    }

    /// Attribute tuple of the nearest noiseless prototype.
    pub fn classify(&self, x: &[f64]) -> Vec<usize> {
        let best = self
            .prototypes
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |(i, _)| i);
        self.tuple_of(best)
    }

    /// Draws `n` samples with balanced attribute tuples.
    pub fn sample_set(self: &Arc<Self>, n: usize, seed: RngSeed) -> Result<SyntheticAttributeDataset> {
        let tuples = self.num_tuples();
        let mut rng = seed.derive("samples").rng();
        let mut order: Vec<usize> = (0..n).map(|i| i % tuples).collect();
        order.shuffle(&mut rng);
        let jitter_len = match self.config.mixing {
            Mixing::Tanh => self.config.cardinalities.iter().sum(),
            Mixing::Separable => self.config.input_dim,
        };
        let mut samples = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for t in order {
            let lab = self.tuple_of(t);
            let jitter: Vec<f64> = (0..jitter_len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    self.config.jitter * z
                })
                .collect();
            samples.push(self.render(&lab, &jitter));
            labels.push(lab);
        }
        SyntheticAttributeDataset::new(self.clone(), samples, labels)
    }
}

/// Samples, their attribute labels and a value index for pair mining.
#[derive(Debug, Clone)]
pub struct SyntheticAttributeDataset {
    pub space: Arc<AttributeSpace>,
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<Vec<usize>>,
    /// `by_value[attribute][value]` lists the samples carrying that value.
    by_value: Vec<Vec<Vec<usize>>>,
}

impl SyntheticAttributeDataset {
    pub fn new(space: Arc<AttributeSpace>, samples: Vec<Vec<f64>>, labels: Vec<Vec<usize>>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                what: "labels",
                expected: samples.len(),
                actual: labels.len(),
            });
        }
        let cards = &space.config.cardinalities;
        let mut by_value: Vec<Vec<Vec<usize>>> = cards.iter().map(|&c| vec![Vec::new(); c]).collect();
        for (i, lab) in labels.iter().enumerate() {
            for (a, &v) in lab.iter().enumerate() {
                by_value[a][v].push(i);
            }
        }
        for (a, values) in by_value.iter().enumerate() {
            for (v, members) in values.iter().enumerate() {
                if members.len() < MIN_VALUE_COUNT {
                    return Err(invalid(
                        "samples",
                        format!(
                            "attribute {a} value {v} occurs {} times, need {MIN_VALUE_COUNT}",
                            members.len()
                        ),
                    ));
                }
            }
        }
        Ok(Self {
            space,
            samples,
            labels,
            by_value,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn members(&self, attribute: usize, value: usize) -> &[usize] {
        &self.by_value[attribute][value]
    }

    /// Another sample with the same value of `attribute`.
    pub fn partner_sharing(&self, index: usize, attribute: usize, rng: &mut StreamRng) -> usize {
        let pool = &self.by_value[attribute][self.labels[index][attribute]];
        loop {
            let j = pool[rng.gen_range(0..pool.len())];
            if j != index {
                return j;
            }
        }
    }

    /// A sample whose value of `attribute` differs.
    pub fn partner_differing(&self, index: usize, attribute: usize, rng: &mut StreamRng) -> usize {
        let card = self.space.config.cardinalities[attribute];
        let own = self.labels[index][attribute];
        let mut v = rng.gen_range(0..card - 1);
        if v >= own {
            v += 1;
        }
        let pool = &self.by_value[attribute][v];
        pool[rng.gen_range(0..pool.len())]
    }
}
