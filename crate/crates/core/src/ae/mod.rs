//! Group-supervised disentangling autoencoder.

pub mod checkpoint;
pub mod dataset;
pub mod eval;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod train;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use dataset::{AttributeSpace, AttributeSpaceConfig, Mixing, SyntheticAttributeDataset};
pub use loss::{loss_common, loss_different, loss_self, ChannelSource, LossOutput, PairBatch};
pub use mlp::{Activation, Mlp};
pub use model::{AeGrads, AeModel, ModelShape};
pub use train::{train, History, Phase, TrainChannel, TrainConfig};

use crate::error::Result;
use crate::rng::RngSeed;
use crate::schema::{Block, LatentSchema};
use crate::sim::GainPolicy;

/// Fading used for robust training and evaluation: one magnitude-Gaussian
/// gain per code, decoded without channel knowledge.
pub const DESK_FADING: GainPolicy = GainPolicy::Rayleigh {
    variance: 1.0,
    signed: false,
    equalize: false,
};

/// Sizes of the default synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskScale {
    pub space: AttributeSpaceConfig,
    pub block_width: usize,
    pub hidden: usize,
    pub users: usize,
    pub train_samples: usize,
    pub test_samples: usize,
}

impl Default for DeskScale {
    fn default() -> Self {
        Self {
            space: AttributeSpaceConfig::default(),
            block_width: 4,
            hidden: 64,
            users: 2,
            train_samples: 2048,
            test_samples: 512,
        }
    }
}

impl DeskScale {
    /// One block per attribute; user `i` is interested in block `i`.
    pub fn schema(&self) -> Result<LatentSchema> {
        let blocks = (0..self.space.cardinalities.len())
            .map(|i| Block {
                name: format!("attr{i}"),
                width: self.block_width,
            })
            .collect();
        let mut schema = LatentSchema::new(blocks)?;
        for u in 0..self.users {
            schema.add_user(&[u % self.space.cardinalities.len()])?;
        }
        Ok(schema)
    }

    pub fn attribute_space(&self, seed: RngSeed) -> Result<Arc<AttributeSpace>> {
        Ok(Arc::new(AttributeSpace::new(self.space.clone(), seed.derive("space"))?))
    }

    /// Training and held-out sets drawn from one attribute space.
    pub fn datasets(&self, seed: RngSeed) -> Result<(SyntheticAttributeDataset, SyntheticAttributeDataset)> {
        let space = self.attribute_space(seed)?;
        Ok((
            space.sample_set(self.train_samples, seed.derive("train-set"))?,
            space.sample_set(self.test_samples, seed.derive("test-set"))?,
        ))
    }

    pub fn model(&self, seed: RngSeed) -> Result<AeModel> {
        let shape = ModelShape {
            input: self.space.input_dim,
            hidden: self.hidden,
            users: self.users,
            activation: Activation::Tanh,
        };
        AeModel::new(shape, Arc::new(self.schema()?), seed.derive("model"))
    }
}
