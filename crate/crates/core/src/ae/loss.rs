//! The three group-supervised losses with hand-derived gradients.
//!
//! Every broadcast draws one channel realization per user. Realizations are
//! treated as constants for differentiation, and can be recorded and replayed
//! so that a loss is a deterministic function of the parameters.

use super::dataset::SyntheticAttributeDataset;
use super::model::{AeGrads, AeModel};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::sim::{ChannelRealization, LatentChannel};

/// Where latent-channel realizations come from.
pub enum ChannelSource<'a> {
    Noiseless,
    Live {
        channel: &'a LatentChannel,
        rng: &'a mut StreamRng,
        tape: Vec<ChannelRealization>,
    },
    Replay {
        tape: &'a [ChannelRealization],
        cursor: usize,
    },
}

impl<'a> ChannelSource<'a> {
    pub fn live(channel: &'a LatentChannel, rng: &'a mut StreamRng) -> Self {
        Self::Live {
            channel,
            rng,
            tape: Vec::new(),
        }
    }

    pub fn replay(tape: &'a [ChannelRealization]) -> Self {
        Self::Replay { tape, cursor: 0 }
    }

    /// Realizations drawn so far by a live source.
    pub fn into_tape(self) -> Vec<ChannelRealization> {
        match self {
            Self::Live { tape, .. } => tape,
            _ => Vec::new(),
        }
    }

    fn realize(&mut self, codes: &[Vec<f64>]) -> Result<ChannelRealization> {
        match self {
            Self::Noiseless => Ok(ChannelRealization::identity(
                codes.len(),
                codes.first().map_or(0, Vec::len),
            )),
            Self::Live { channel, rng, tape } => {
                let views: Vec<&[f64]> = codes.iter().map(Vec::as_slice).collect();
                let r = channel.realize(&views, rng)?;
                tape.push(r.clone());
                Ok(r)
            }
            Self::Replay { tape, cursor } => {
                let r = tape
                    .get(*cursor)
                    .cloned()
                    .ok_or_else(|| crate::error::invalid("channel tape", "replay ran past the recorded draws"))?;
                *cursor += 1;
                Ok(r)
            }
        }
    }
}

/// Pairs of inputs supervised on one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub attribute: usize,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    pub left_labels: Vec<Vec<usize>>,
    pub right_labels: Vec<Vec<usize>>,
}

impl PairBatch {
    pub fn from_dataset(data: &SyntheticAttributeDataset, pairs: &[(usize, usize)], attribute: usize) -> Self {
        Self {
            attribute,
            left: pairs.iter().map(|&(a, _)| data.samples[a].clone()).collect(),
            right: pairs.iter().map(|&(_, b)| data.samples[b].clone()).collect(),
            left_labels: pairs.iter().map(|&(a, _)| data.labels[a].clone()).collect(),
            right_labels: pairs.iter().map(|&(_, b)| data.labels[b].clone()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    /// Order-swapped copy.
    pub fn reversed(&self) -> Self {
        Self {
            attribute: self.attribute,
            left: self.right.clone(),
            right: self.left.clone(),
            left_labels: self.right_labels.clone(),
            right_labels: self.left_labels.clone(),
        }
    }

    fn check(&self, share: bool) -> Result<()> {
        if self.right.len() != self.left.len()
            || self.left_labels.len() != self.left.len()
            || self.right_labels.len() != self.left.len()
        {
            return Err(Error::ShapeMismatch {
                what: "pair batch",
                expected: self.left.len(),
                actual: self.right.len(),
            });
        }
        for (i, (l, r)) in self.left_labels.iter().zip(&self.right_labels).enumerate() {
            let (lv, rv) = match (l.get(self.attribute), r.get(self.attribute)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::Supervision {
                        left: i,
                        right: i,
                        attribute: self.attribute,
                        reason: "attribute missing from labels",
                    })
                }
            };
            if share && lv != rv {
                return Err(Error::Supervision {
                    left: i,
                    right: i,
                    attribute: self.attribute,
                    reason: "pair does not share the attribute",
                });
            }
            if !share && lv == rv {
                return Err(Error::Supervision {
                    left: i,
                    right: i,
                    attribute: self.attribute,
                    reason: "pair does not differ in the attribute",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: AeGrads,
}

/// Encodes a batch, keeping caches for the backward pass.
fn encode_all(model: &AeModel, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<super::mlp::MlpCache>)> {
    let mut zs = Vec::with_capacity(xs.len());
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        if x.len() != model.input_dim() {
            return Err(Error::ShapeMismatch {
                what: "input sample",
                expected: model.input_dim(),
                actual: x.len(),
            });
        }
        let (z, c) = model.encoder.forward(x);
        zs.push(z);
        caches.push(c);
    }
    Ok((zs, caches))
}

/// Sends `codes` through the channel to `user`, decodes, and returns the
/// outputs with what is needed to backpropagate to the codes.
struct Broadcast {
    outputs: Vec<Vec<f64>>,
    caches: Vec<super::mlp::MlpCache>,
    realization: ChannelRealization,
}

fn broadcast(model: &AeModel, user: usize, codes: &[Vec<f64>], channel: &mut ChannelSource) -> Result<Broadcast> {
    let realization = channel.realize(codes)?;
    let mut outputs = Vec::with_capacity(codes.len());
    let mut caches = Vec::with_capacity(codes.len());
    for (i, z) in codes.iter().enumerate() {
        let (x, c) = model.decoders[user].forward(&realization.apply(i, z));
        outputs.push(x);
        caches.push(c);
    }
    Ok(Broadcast {
        outputs,
        caches,
        realization,
    })
}

impl Broadcast {
    /// `dL/dcode` for every code, given `dL/doutput`.
    fn backward(&self, model: &AeModel, user: usize, d_out: &[Vec<f64>], grads: &mut AeGrads) -> Vec<Vec<f64>> {
        d_out
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let j = self.realization.jacobian(i);
                let mut dz = model.decoders[user].backward(&self.caches[i], d, &mut grads.decoders[user]);
                dz.iter_mut().for_each(|v| *v *= j);
                dz
            })
            .collect()
    }
}

/// Squared error and its gradient `2 (x_hat - x)`.
fn squared_error(x_hat: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
    let d: Vec<f64> = x_hat.iter().zip(x).map(|(a, b)| a - b).collect();
    (d.iter().map(|v| v * v).sum(), d.iter().map(|v| 2.0 * v).collect())
}

fn add_into(acc: &mut [Vec<f64>], d: &[Vec<f64>]) {
    for (a, b) in acc.iter_mut().zip(d) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

/// Swaps coordinates `range` between `left[i]` and `right[i]`.
fn swap_block(left: &mut [Vec<f64>], right: &mut [Vec<f64>], range: std::ops::Range<usize>) {
    for (a, b) in left.iter_mut().zip(right.iter_mut()) {
        a[range.clone()].swap_with_slice(&mut b[range.clone()]);
    }
}

fn encoder_backward(model: &AeModel, caches: &[super::mlp::MlpCache], dz: &[Vec<f64>], grads: &mut AeGrads) -> Vec<Vec<f64>> {
    caches
        .iter()
        .zip(dz)
        .map(|(c, d)| model.encoder.backward(c, d, &mut grads.encoder))
        .collect()
}

/// Self reconstruction: `sum_l sum_i ||x_l - D_i(h_i(E(x_l)))||^2`.
pub fn loss_self(model: &AeModel, batch: &[Vec<f64>], channel: &mut ChannelSource) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(crate::error::invalid("batch", "must be nonempty"));
    }
    let mut grads = model.zero_grads();
    let (zs, enc_caches) = encode_all(model, batch)?;
    let mut dz = vec![vec![0.0; model.latent_dim()]; batch.len()];
    let mut loss = 0.0;
    for user in 0..model.users() {
        let b = broadcast(model, user, &zs, channel)?;
        let d_out: Vec<Vec<f64>> = b
            .outputs
            .iter()
            .zip(batch)
            .map(|(xh, x)| {
                let (l, d) = squared_error(xh, x);
                loss += l;
                d
            })
            .collect();
        add_into(&mut dz, &b.backward(model, user, &d_out, &mut grads));
    }
    encoder_backward(model, &enc_caches, &dz, &mut grads);
    Ok(LossOutput { loss, grads })
}

/// Common-feature exchange: swap the shared block, decode, compare with the
/// original inputs.
pub fn loss_common(model: &AeModel, pairs: &PairBatch, channel: &mut ChannelSource) -> Result<LossOutput> {
    pairs.check(true)?;
    exchange_loss(model, pairs, channel)
}

fn exchange_loss(model: &AeModel, pairs: &PairBatch, channel: &mut ChannelSource) -> Result<LossOutput> {
    if pairs.is_empty() {
        return Err(crate::error::invalid("batch", "must be nonempty"));
    }
    let range = block_range(model, pairs.attribute)?;
    let n = pairs.len();
    let mut grads = model.zero_grads();
    let (mut za, ca) = encode_all(model, &pairs.left)?;
    let (mut zb, cb) = encode_all(model, &pairs.right)?;
    swap_block(&mut za, &mut zb, range.clone());
    let codes: Vec<Vec<f64>> = za.into_iter().chain(zb).collect();
    let targets: Vec<&Vec<f64>> = pairs.left.iter().chain(&pairs.right).collect();
    let mut dz = vec![vec![0.0; model.latent_dim()]; 2 * n];
    let mut loss = 0.0;
    for user in 0..model.users() {
        let b = broadcast(model, user, &codes, channel)?;
        let d_out: Vec<Vec<f64>> = b
            .outputs
            .iter()
            .zip(&targets)
            .map(|(xh, x)| {
                let (l, d) = squared_error(xh, x);
                loss += l;
                d
            })
            .collect();
        add_into(&mut dz, &b.backward(model, user, &d_out, &mut grads));
    }
    let (mut da, mut db) = (dz[..n].to_vec(), dz[n..].to_vec());
    swap_block(&mut da, &mut db, range);
    encoder_backward(model, &ca, &da, &mut grads);
    encoder_backward(model, &cb, &db, &mut grads);
    Ok(LossOutput { loss, grads })
}

fn block_range(model: &AeModel, block: usize) -> Result<std::ops::Range<usize>> {
    model.schema.block_range(block)
}

/// Different-feature double exchange. Per user: swap the differing block,
/// broadcast and decode, re-encode the decoded pair, swap the block back,
/// broadcast and decode again, and compare with the original inputs.
pub fn loss_different(model: &AeModel, pairs: &PairBatch, channel: &mut ChannelSource) -> Result<LossOutput> {
    pairs.check(false)?;
    if pairs.is_empty() {
        return Err(crate::error::invalid("batch", "must be nonempty"));
    }
    let range = block_range(model, pairs.attribute)?;
    let n = pairs.len();
    let mut grads = model.zero_grads();
    let (mut za, ca) = encode_all(model, &pairs.left)?;
    let (mut zb, cb) = encode_all(model, &pairs.right)?;
    swap_block(&mut za, &mut zb, range.clone());
    let swapped: Vec<Vec<f64>> = za.into_iter().chain(zb).collect();
    let targets: Vec<&Vec<f64>> = pairs.left.iter().chain(&pairs.right).collect();
    let mut dz = vec![vec![0.0; model.latent_dim()]; 2 * n];
    let mut loss = 0.0;
    for user in 0..model.users() {
        let first = broadcast(model, user, &swapped, channel)?;
        let (mut ra, rc) = encode_all(model, &first.outputs)?;
        let mut rb = ra.split_off(n);
        swap_block(&mut ra, &mut rb, range.clone());
        let restored: Vec<Vec<f64>> = ra.into_iter().chain(rb).collect();
        let second = broadcast(model, user, &restored, channel)?;
        let d_out: Vec<Vec<f64>> = second
            .outputs
            .iter()
            .zip(&targets)
            .map(|(xh, x)| {
                let (l, d) = squared_error(xh, x);
                loss += l;
                d
            })
            .collect();
        let d_restored = second.backward(model, user, &d_out, &mut grads);
        let (mut da, mut db) = (d_restored[..n].to_vec(), d_restored[n..].to_vec());
        swap_block(&mut da, &mut db, range.clone());
        let d_re: Vec<Vec<f64>> = da.into_iter().chain(db).collect();
        let d_first = encoder_backward(model, &rc, &d_re, &mut grads);
        add_into(&mut dz, &first.backward(model, user, &d_first, &mut grads));
    }
    let (mut da, mut db) = (dz[..n].to_vec(), dz[n..].to_vec());
    swap_block(&mut da, &mut db, range);
    encoder_backward(model, &ca, &da, &mut grads);
    encoder_backward(model, &cb, &db, &mut grads);
    Ok(LossOutput { loss, grads })
}
