use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::SyntheticAttributeDataset;
use super::loss::{loss_common, loss_different, loss_self, ChannelSource, PairBatch};
use super::model::AeModel;
use crate::error::{invalid, Error, Result};
use crate::noise::NoiseModel;
use crate::rng::RngSeed;
use crate::sim::{GainPolicy, LatentChannel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    SelfReconstruction,
    Common,
    Different,
}

impl Phase {
    pub fn of_step(step: usize) -> Self {
        match step % 3 {
            0 => Self::SelfReconstruction,
            1 => Self::Common,
            _ => Self::Different,
        }
    }
}

/// Latent channel injected during robust training.
#[derive(Debug, Clone)]
pub struct TrainChannel {
    pub policy: GainPolicy,
    pub snr_db: f64,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Total optimizer steps; phases rotate one step each.
    pub steps: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// `None` trains over a noiseless identity channel.
    pub channel: Option<TrainChannel>,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            learning_rate: 1e-4,
            momentum: 0.0,
            batch_size: 16,
            channel: None,
            seed: RngSeed(0),
        }
    }
}

impl TrainConfig {
    /// Plain gradient descent tuned for the desk-scale synthetic task.
    pub fn desk_scale() -> Self {
        Self {
            learning_rate: DESK_LEARNING_RATE,
            ..Self::default()
        }
    }

    pub fn robust(mut self, policy: GainPolicy, snr_db: f64) -> Self {
        self.channel = Some(TrainChannel {
            policy,
            snr_db,
            noise: NoiseModel::gaussian(1.0).expect("unit variance"),
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.learning_rate) {
            return Err(invalid("learning_rate", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

pub const DESK_LEARNING_RATE: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub phase: Phase,
    pub attribute: usize,
    /// Loss divided by the number of samples in the step's batch.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub entries: Vec<HistoryEntry>,
}

impl History {
    /// Mean loss of `phase` over the last `window` entries of that phase.
    pub fn recent_mean(&self, phase: Phase, window: usize) -> f64 {
        let v: Vec<f64> = self
            .entries
            .iter()
            .rev()
            .filter(|e| e.phase == phase)
            .take(window)
            .map(|e| e.loss)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }
}

/// Runs the cycled three-phase schedule in place.
pub fn train(model: &mut AeModel, data: &SyntheticAttributeDataset, config: &TrainConfig) -> Result<History> {
    config.validate()?;
    let attributes = data.space.num_attributes();
    if attributes != model.schema.num_blocks() {
        return Err(Error::ShapeMismatch {
            what: "attributes vs latent blocks",
            expected: model.schema.num_blocks(),
            actual: attributes,
        });
    }
    let channel = config
        .channel
        .as_ref()
        .map(|c| LatentChannel::new(c.policy, c.snr_db, &c.noise))
        .transpose()?;
    let mut batch_rng = config.seed.derive("batches").rng();
    let mut channel_rng = config.seed.derive("train-channel").rng();
    let mut velocity: Option<super::model::AeGrads> = None;
    let mut history = History::default();

    for step in 0..config.steps {
        let phase = Phase::of_step(step);
        let attribute = (step / 3) % attributes;
        let picks: Vec<usize> = (0..config.batch_size)
            .map(|_| batch_rng.gen_range(0..data.len()))
            .collect();
        let mut source = match &channel {
            Some(c) => ChannelSource::live(c, &mut channel_rng),
            None => ChannelSource::Noiseless,
        };
        let (out, samples) = match phase {
            Phase::SelfReconstruction => {
                let batch: Vec<Vec<f64>> = picks.iter().map(|&i| data.samples[i].clone()).collect();
                (loss_self(model, &batch, &mut source)?, batch.len())
            }
            Phase::Common | Phase::Different => {
                let pairs: Vec<(usize, usize)> = picks
                    .iter()
                    .map(|&i| {
                        let j = if phase == Phase::Common {
                            data.partner_sharing(i, attribute, &mut batch_rng)
                        } else {
                            data.partner_differing(i, attribute, &mut batch_rng)
                        };
                        (i, j)
                    })
                    .collect();
                let batch = PairBatch::from_dataset(data, &pairs, attribute);
                let out = if phase == Phase::Common {
                    loss_common(model, &batch, &mut source)?
                } else {
                    loss_different(model, &batch, &mut source)?
                };
                (out, 2 * batch.len())
            }
        };
        if !out.loss.is_finite() {
            return Err(Error::Diverged { step, loss: out.loss });
        }
        let mut grads = out.grads;
        let update = if config.momentum > 0.0 {
            let v = velocity.get_or_insert_with(|| model.zero_grads());
            for (vt, gt) in v.tensors_mut().into_iter().zip(grads.tensors_mut()) {
                vt.iter_mut().zip(gt.iter()).for_each(|(a, g)| *a = config.momentum * *a + g);
            }
            v
        } else {
            &mut grads
        };
        for (p, g) in model.param_tensors_mut().into_iter().zip(update.tensors_mut()) {
            p.iter_mut().zip(g.iter()).for_each(|(a, d)| *a -= config.learning_rate * d);
        }
        if !model.all_finite() {
            return Err(Error::Diverged { step, loss: out.loss });
        }
        history.entries.push(HistoryEntry {
            step,
            phase,
            attribute,
            loss: out.loss / samples as f64,
        });
    }
    Ok(history)
}
