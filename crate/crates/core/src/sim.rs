//! Symbol-level Monte Carlo of superposition transmission over the two-user
//! broadcast channel, with SIC at the strong user, plus the latent-space
//! channel used while training the autoencoder.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{BroadcastChannelParams, Fading, FadingMode};
use crate::error::{invalid, Error, Result};
use crate::noise::{NoiseModel, NoiseSampler};
use crate::rng::{RngSeed, StreamRng};

/// Upper clamp for training SNRs, standing in for a noiseless link.
pub const MAX_SNR_DB: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionFrame {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub alpha: f64,
    pub power: f64,
    pub combined: Vec<f64>,
}

impl SuperpositionFrame {
    pub fn new(x1: Vec<f64>, x2: Vec<f64>, alpha: f64, power: f64) -> Result<Self> {
        if x1.len() != x2.len() {
            return Err(Error::ShapeMismatch {
                what: "user 2 stream",
                expected: x1.len(),
                actual: x2.len(),
            });
        }
        if x1.is_empty() {
            return Err(invalid("streams", "need at least one symbol"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid("alpha", format!("{alpha} outside [0, 1]")));
        }
        let (a1, a2) = layer_amplitudes(alpha, power);
        let combined = x1.iter().zip(&x2).map(|(s1, s2)| a1 * s1 + a2 * s2).collect();
        Ok(Self {
            x1,
            x2,
            alpha,
            power,
            combined,
        })
    }
}

/// `(sqrt(alpha P), sqrt((1 - alpha) P))`.
pub fn layer_amplitudes(alpha: f64, power: f64) -> (f64, f64) {
    ((alpha * power).sqrt(), ((1.0 - alpha) * power).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub sent: SuperpositionFrame,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    /// Per-symbol realized gains (constant for fixed or slow-fading links).
    pub gains1: Vec<f64>,
    pub gains2: Vec<f64>,
    pub noise1: Vec<f64>,
    pub noise2: Vec<f64>,
}

/// Noise applied at each receiver.
#[derive(Debug, Clone)]
pub enum ReceiverNoise {
    Silent,
    Model(NoiseSampler),
}

impl ReceiverNoise {
    pub fn from_model(model: &NoiseModel) -> Result<Self> {
        Ok(Self::Model(NoiseSampler::new(model)?))
    }

    fn draw(&self, n: usize, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            Self::Silent => vec![0.0; n],
            Self::Model(s) => (0..n).map(|_| s.sample(rng)).collect(),
        }
    }
}

pub(crate) fn gain_draw(variance: f64, signed: bool, rng: &mut StreamRng) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let g = variance.sqrt() * z;
    if signed {
        g
    } else {
        g.abs()
    }
}

fn realize_gains(fixed: f64, fading: Option<(Fading, f64)>, n: usize, rng: &mut StreamRng) -> Vec<f64> {
    match fading {
        None => vec![fixed; n],
        Some((f, var)) => match f.mode {
            FadingMode::None => vec![fixed; n],
            FadingMode::Slow => vec![gain_draw(var, f.signed, rng); n],
            FadingMode::Fast => (0..n).map(|_| gain_draw(var, f.signed, rng)).collect(),
        },
    }
}

/// Applies per-user gains and additive noise to the superposed signal.
pub fn transmit(
    frame: SuperpositionFrame,
    params: &BroadcastChannelParams,
    noise: (&ReceiverNoise, &ReceiverNoise),
    seed: RngSeed,
) -> ReceivedFrame {
    let n = frame.combined.len();
    let mut gain_rng = seed.derive("gains").rng();
    let gains1 = realize_gains(
        params.gains.0,
        params.fading.map(|f| (f, f.variances.0)),
        n,
        &mut gain_rng,
    );
    let gains2 = realize_gains(
        params.gains.1,
        params.fading.map(|f| (f, f.variances.1)),
        n,
        &mut gain_rng,
    );
    let noise1 = noise.0.draw(n, &mut seed.derive("noise1").rng());
    let noise2 = noise.1.draw(n, &mut seed.derive("noise2").rng());
    let y1 = (0..n).map(|i| gains1[i] * frame.combined[i] + noise1[i]).collect();
    let y2 = (0..n).map(|i| gains2[i] * frame.combined[i] + noise2[i]).collect();
    ReceivedFrame {
        sent: frame,
        y1,
        y2,
        gains1,
        gains2,
        noise1,
        noise2,
    }
}

/// How the strong user obtains user 2's symbols before cancelling them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SicReference {
    #[default]
    Genie,
    /// Nearest point of the constellation to the scaled received sample.
    HardDecision(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SicOutput {
    pub residual: Vec<f64>,
    pub x2_estimate: Vec<f64>,
    /// Mean power of the user-2 layer left in the residual.
    pub residual_interference_power: f64,
}

/// Subtracts `G1 sqrt((1 - alpha) P) x2_ref` from user 1's observation.
pub fn sic_decode(frame: &ReceivedFrame, reference: &SicReference) -> SicOutput {
    let (_, a2) = layer_amplitudes(frame.sent.alpha, frame.sent.power);
    let x2_estimate: Vec<f64> = match reference {
        SicReference::Genie => frame.sent.x2.clone(),
        SicReference::HardDecision(points) => frame
            .y1
            .iter()
            .zip(&frame.gains1)
            .map(|(y, g)| {
                let scaled = if g * a2 != 0.0 { y / (g * a2) } else { 0.0 };
                nearest(points, scaled)
            })
            .collect(),
    };
    let residual: Vec<f64> = frame
        .y1
        .iter()
        .zip(&frame.gains1)
        .zip(&x2_estimate)
        .map(|((y, g), x2)| y - g * a2 * x2)
        .collect();
    let residual_interference_power = frame
        .gains1
        .iter()
        .zip(&frame.sent.x2)
        .zip(&x2_estimate)
        .map(|((g, x2), est)| (g * a2 * (x2 - est)).powi(2))
        .sum::<f64>()
        / residual.len() as f64;
    SicOutput {
        residual,
        x2_estimate,
        residual_interference_power,
    }
}

fn nearest(points: &[f64], v: f64) -> f64 {
    points
        .iter()
        .copied()
        .min_by(|a, b| (a - v).abs().total_cmp(&(b - v).abs()))
        .unwrap_or(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SymbolAlphabet {
    /// Unit-variance Gaussian symbols.
    #[default]
    Gaussian,
    /// Equiprobable +-1.
    Bpsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub alpha: f64,
    pub symbols: usize,
    pub frame_len: usize,
    pub seed: RngSeed,
    pub noiseless: bool,
    pub alphabet: SymbolAlphabet,
    pub sic: SicReference,
}

impl SimConfig {
    pub fn new(alpha: f64, symbols: usize, seed: RngSeed) -> Self {
        Self {
            alpha,
            symbols,
            frame_len: 16_384,
            seed,
            noiseless: false,
            alphabet: SymbolAlphabet::Gaussian,
            sic: SicReference::Genie,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub alpha: f64,
    pub symbols: usize,
    /// Mean power of the superposed transmit signal.
    pub transmit_power: f64,
    /// Mean received power `E[y_k^2]` per user.
    pub received_power: [f64; 2],
    /// User 1 after SIC; user 2 treating user 1's layer as noise.
    pub sinr: [f64; 2],
    /// Mean power of `residual - G1 sqrt(alpha P) x1` after SIC.
    pub residual_noise_power: f64,
    pub residual_interference_power: f64,
    /// Largest `|residual / (G1 sqrt(alpha P)) - x1|` (0 when alpha = 0).
    pub max_x1_error: f64,
    /// Rate proxies `log2(1 + sinr) / 2`.
    pub rate_proxy: [f64; 2],
}

#[derive(Default, Clone, Copy)]
struct Sums {
    n: f64,
    tx: f64,
    rx: [f64; 2],
    sig: [f64; 2],
    impair: [f64; 2],
    interference: f64,
    max_x1_error: f64,
}

impl Sums {
    fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.tx += o.tx;
        for k in 0..2 {
            self.rx[k] += o.rx[k];
            self.sig[k] += o.sig[k];
            self.impair[k] += o.impair[k];
        }
        self.interference += o.interference;
        self.max_x1_error = self.max_x1_error.max(o.max_x1_error);
        self
    }
}

fn symbols(alphabet: SymbolAlphabet, n: usize, rng: &mut StreamRng) -> Vec<f64> {
    match alphabet {
        SymbolAlphabet::Gaussian => (0..n).map(|_| StandardNormal.sample(rng)).collect(),
        SymbolAlphabet::Bpsk => (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect(),
    }
}

/// Runs `config.symbols` symbols in independent frames and aggregates
/// powers and SINRs.
pub fn simulate(params: &BroadcastChannelParams, config: &SimConfig) -> Result<SimReport> {
    if config.symbols == 0 || config.frame_len == 0 {
        return Err(invalid("symbols", "need at least one symbol per frame"));
    }
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(invalid("alpha", format!("{} outside [0, 1]", config.alpha)));
    }
    let noise = if config.noiseless {
        (ReceiverNoise::Silent, ReceiverNoise::Silent)
    } else {
        (
            ReceiverNoise::from_model(&params.noise.0)?,
            ReceiverNoise::from_model(&params.noise.1)?,
        )
    };
    let frames = config.symbols.div_ceil(config.frame_len);
    let (a1, a2) = layer_amplitudes(config.alpha, params.total_power);
    let sums = (0..frames)
        .into_par_iter()
        .map(|f| {
            let len = config.frame_len.min(config.symbols - f * config.frame_len);
            let seed = config.seed.derive_index("frame", f as u64);
            let mut sym_rng = seed.derive("symbols").rng();
            let x1 = symbols(config.alphabet, len, &mut sym_rng);
            let x2 = symbols(config.alphabet, len, &mut sym_rng);
            let frame = SuperpositionFrame::new(x1, x2, config.alpha, params.total_power)
                .expect("validated above");
            let rx = transmit(frame, params, (&noise.0, &noise.1), seed.derive("channel"));
            let sic = sic_decode(&rx, &config.sic);
            let mut s = Sums {
                n: len as f64,
                ..Sums::default()
            };
            for i in 0..len {
                let x = &rx.sent;
                s.tx += x.combined[i].powi(2);
                s.rx[0] += rx.y1[i].powi(2);
                s.rx[1] += rx.y2[i].powi(2);
                let wanted1 = rx.gains1[i] * a1 * x.x1[i];
                s.sig[0] += wanted1.powi(2);
                s.impair[0] += (sic.residual[i] - wanted1).powi(2);
                let wanted2 = rx.gains2[i] * a2 * x.x2[i];
                s.sig[1] += wanted2.powi(2);
                s.impair[1] += (rx.y2[i] - wanted2).powi(2);
                if rx.gains1[i] * a1 != 0.0 {
                    let err = (sic.residual[i] / (rx.gains1[i] * a1) - x.x1[i]).abs();
                    s.max_x1_error = s.max_x1_error.max(err);
                }
            }
            s.interference = sic.residual_interference_power * len as f64;
            s
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Sums::default(), Sums::merge);
    let n = sums.n;
    let ratio = |sig: f64, imp: f64| {
        if sig == 0.0 {
            0.0
        } else if imp == 0.0 {
            f64::INFINITY
        } else {
            sig / imp
        }
    };
    let sinr = [ratio(sums.sig[0], sums.impair[0]), ratio(sums.sig[1], sums.impair[1])];
    Ok(SimReport {
        alpha: config.alpha,
        symbols: config.symbols,
        transmit_power: sums.tx / n,
        received_power: [sums.rx[0] / n, sums.rx[1] / n],
        sinr,
        residual_noise_power: sums.impair[0] / n,
        residual_interference_power: sums.interference / n,
        max_x1_error: sums.max_x1_error,
        rate_proxy: sinr.map(|s| 0.5 * (1.0 + s).log2()),
    })
}

/// Gain model applied to latent codes during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum GainPolicy {
    /// `G = 1` and no noise: the non-robust scheme.
    #[default]
    Identity,
    /// Fixed gain with additive noise.
    Fixed { gain: f64 },
    /// One magnitude-Gaussian draw per code (slow fading), optionally
    /// divided out by a receiver with channel knowledge.
    Rayleigh {
        variance: f64,
        signed: bool,
        equalize: bool,
    },
}

/// Latent-space channel `z_hat = G z + n` with noise scaled to a target SNR.
#[derive(Debug, Clone)]
pub struct LatentChannel {
    pub policy: GainPolicy,
    pub snr_db: f64,
    sampler: NoiseSampler,
    noise_mean: f64,
    noise_sd: f64,
}

/// Gains and noise drawn for one batch; applying it is a deterministic map.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<f64>,
    pub noise: Vec<Vec<f64>>,
    pub equalize: bool,
}

impl ChannelRealization {
    /// Pass-through realization for `n` codes of width `dim`.
    pub fn identity(n: usize, dim: usize) -> Self {
        Self {
            gains: vec![1.0; n],
            noise: vec![vec![0.0; dim]; n],
            equalize: false,
        }
    }

    /// Decoder input for code `index`.
    pub fn apply(&self, index: usize, z: &[f64]) -> Vec<f64> {
        let g = self.gains[index];
        let n = &self.noise[index];
        if self.equalize && g != 0.0 {
            z.iter().zip(n).map(|(zi, ni)| zi + ni / g).collect()
        } else {
            z.iter().zip(n).map(|(zi, ni)| g * zi + ni).collect()
        }
    }

    /// `d(decoder input)/dz`, elementwise constant per code.
    pub fn jacobian(&self, index: usize) -> f64 {
        if self.equalize {
            1.0
        } else {
            self.gains[index]
        }
    }
}

impl LatentChannel {
    pub fn new(policy: GainPolicy, snr_db: f64, noise: &NoiseModel) -> Result<Self> {
        if snr_db.is_nan() {
            return Err(invalid("snr_db", "must be a number"));
        }
        Ok(Self {
            policy,
            snr_db: snr_db.min(MAX_SNR_DB),
            sampler: NoiseSampler::new(noise)?,
            noise_mean: noise.mean(),
            noise_sd: crate::noise::noise_variance(noise)?.sqrt(),
        })
    }

    pub fn identity() -> Self {
        Self::new(GainPolicy::Identity, MAX_SNR_DB, &NoiseModel::gaussian(1.0).expect("valid"))
            .expect("valid")
    }

    /// Draws gains and noise for a batch; the noise power is set from the
    /// batch's empirical received signal power.
    pub fn realize(&self, batch: &[&[f64]], rng: &mut StreamRng) -> Result<ChannelRealization> {
        let dim = batch.first().map_or(0, |z| z.len());
        let (gains, equalize) = match self.policy {
            GainPolicy::Identity => return Ok(ChannelRealization::identity(batch.len(), dim)),
            GainPolicy::Fixed { gain } => (vec![gain; batch.len()], false),
            GainPolicy::Rayleigh {
                variance,
                signed,
                equalize,
            } => (
                (0..batch.len()).map(|_| gain_draw(variance, signed, rng)).collect(),
                equalize,
            ),
        };
        let elems: usize = batch.iter().map(|z| z.len()).sum();
        let signal: f64 = batch
            .iter()
            .zip(&gains)
            .map(|(z, g)| g * g * z.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / elems.max(1) as f64;
        if signal == 0.0 {
            return Err(Error::ZeroSignalPower);
        }
        let target_sd = (signal / 10f64.powf(self.snr_db / 10.0)).sqrt();
        let scale = target_sd / self.noise_sd;
        let noise = batch
            .iter()
            .map(|z| {
                (0..z.len())
                    .map(|_| scale * (self.sampler.sample(rng) - self.noise_mean))
                    .collect()
            })
            .collect();
        Ok(ChannelRealization {
            gains,
            noise,
            equalize,
        })
    }
}

/// One-shot latent channel over a batch of codes.
pub fn channel_for_training(
    batch: &[Vec<f64>],
    policy: GainPolicy,
    snr_db: f64,
    noise: &NoiseModel,
    seed: RngSeed,
) -> Result<Vec<Vec<f64>>> {
    let ch = LatentChannel::new(policy, snr_db, noise)?;
    let views: Vec<&[f64]> = batch.iter().map(Vec::as_slice).collect();
    let real = ch.realize(&views, &mut seed.derive("latent-channel").rng())?;
    Ok(batch.iter().enumerate().map(|(i, z)| real.apply(i, z)).collect())
}
