//! Attribute-level and signal-level evaluation of trained models.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::SyntheticAttributeDataset;
use super::model::AeModel;
use crate::error::Result;
use crate::noise::NoiseModel;
use crate::rng::RngSeed;
use crate::schema::{exchange, select_and_complete, InterestSet};
use crate::sim::{gain_draw, GainPolicy, LatentChannel, MAX_SNR_DB};

/// Peak-to-peak range of tanh-mixed samples.
pub const PSNR_PEAK: f64 = 2.0;
pub const PSNR_CAP_DB: f64 = MAX_SNR_DB;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub block: usize,
    pub outputs: usize,
    /// Swapped attribute changed correctly and every other attribute kept.
    pub accuracy: f64,
    /// Swapped attribute changed correctly, ignoring the others.
    pub swapped_attribute_accuracy: f64,
}

/// Swaps `block` between every sample and a partner differing in that
/// attribute, decodes for every user, and classifies the outputs.
pub fn swap_accuracy(model: &AeModel, data: &SyntheticAttributeDataset, block: usize, seed: RngSeed) -> Result<SwapReport> {
    model.schema.block_range(block)?;
    let counts = (0..data.len())
        .into_par_iter()
        .map(|i| -> Result<(usize, usize, usize)> {
            let mut rng = seed.derive_index("swap-pairs", i as u64).rng();
            let j = data.partner_differing(i, block, &mut rng);
            let (za, zb) = exchange(&model.encode(&data.samples[i])?, &model.encode(&data.samples[j])?, block)?;
            let mut want_a = data.labels[i].clone();
            want_a[block] = data.labels[j][block];
            let mut want_b = data.labels[j].clone();
            want_b[block] = data.labels[i][block];
            let (mut full, mut part, mut n) = (0, 0, 0);
            for user in 0..model.users() {
                for (z, want) in [(&za, &want_a), (&zb, &want_b)] {
                    let got = data.space.classify(&model.decode(user, z.values())?);
                    full += usize::from(got == *want);
                    part += usize::from(got[block] == want[block]);
                    n += 1;
                }
            }
            Ok((full, part, n))
        })
        .try_reduce(|| (0, 0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1, a.2 + b.2)))?;
    Ok(SwapReport {
        block,
        outputs: counts.2,
        accuracy: counts.0 as f64 / counts.2.max(1) as f64,
        swapped_attribute_accuracy: counts.1 as f64 / counts.2.max(1) as f64,
    })
}

/// Fraction of completed decodings whose attributes come from the source on
/// `interest` and from a random knowledge-base donor elsewhere.
pub fn completion_accuracy(
    model: &AeModel,
    data: &SyntheticAttributeDataset,
    interest: &InterestSet,
    user: usize,
    seed: RngSeed,
) -> Result<f64> {
    use rand::Rng;
    let hits = (0..data.len())
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let mut rng = seed.derive_index("donors", i as u64).rng();
            let d = loop {
                let d = rng.gen_range(0..data.len());
                if d != i {
                    break d;
                }
            };
            let code = select_and_complete(
                &model.encode(&data.samples[i])?,
                interest,
                &model.encode(&data.samples[d])?,
            )?;
            let want: Vec<usize> = (0..data.labels[i].len())
                .map(|a| if interest.contains(a) { data.labels[i][a] } else { data.labels[d][a] })
                .collect();
            Ok(usize::from(data.space.classify(&model.decode(user, code.values())?) == want))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(hits as f64 / data.len().max(1) as f64)
}

pub fn mse(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len().max(1) as f64
}

/// `10 log10(peak^2 / mse)`, capped for exact reconstructions.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(x: &[f64], x_hat: &[f64], peak: f64) -> f64 {
    psnr_from_mse(mse(x, x_hat), peak)
}

/// Mean per-element squared error over every sample and user, with the
/// latent codes sent through `channel`.
pub fn reconstruction_error(
    model: &AeModel,
    data: &SyntheticAttributeDataset,
    channel: &LatentChannel,
    seed: RngSeed,
) -> Result<f64> {
    let codes: Vec<Vec<f64>> = data
        .samples
        .par_iter()
        .map(|x| model.encode(x).map(|c| c.into_values()))
        .collect::<Result<_>>()?;
    let views: Vec<&[f64]> = codes.iter().map(Vec::as_slice).collect();
    let mut total = 0.0;
    for user in 0..model.users() {
        let real = channel.realize(&views, &mut seed.derive_index("eval-channel", user as u64).rng())?;
        // collected in order so the sum does not depend on thread scheduling
        let errors = (0..codes.len())
            .into_par_iter()
            .map(|i| -> Result<f64> { Ok(mse(&data.samples[i], &model.decode(user, &real.apply(i, &codes[i]))?)) })
            .collect::<Result<Vec<f64>>>()?;
        total += errors.iter().sum::<f64>();
    }
    Ok(total / (codes.len() * model.users()).max(1) as f64)
}

/// Separate source and channel coding with an ideal channel code: each
/// sample gets `channel_uses * 0.5 log2(1 + g^2 snr)` bits, spread evenly over
/// its coordinates and spent on a uniform quantizer over `[-1, 1]`.
pub fn digital_baseline_error(
    data: &SyntheticAttributeDataset,
    channel_uses: usize,
    policy: GainPolicy,
    snr_db: f64,
    seed: RngSeed,
) -> f64 {
    let snr = 10f64.powf(snr_db.min(MAX_SNR_DB) / 10.0);
    let mut rng = seed.derive("digital-gains").rng();
    let total: f64 = data
        .samples
        .iter()
        .map(|x| {
            let g = match policy {
                GainPolicy::Identity => return 0.0,
                GainPolicy::Fixed { gain } => gain,
                GainPolicy::Rayleigh { variance, signed, .. } => gain_draw(variance, signed, &mut rng),
            };
            let bits = channel_uses as f64 * 0.5 * (1.0 + g * g * snr).log2();
            let per_coord = (bits / x.len() as f64).floor().min(52.0) as i32;
            if per_coord == 0 {
                return x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            }
            let levels = 2f64.powi(per_coord);
            let step = 2.0 / levels;
            let q: Vec<f64> = x
                .iter()
                .map(|&v| {
                    let k = ((v + 1.0) / step).floor().clamp(0.0, levels - 1.0);
                    -1.0 + (k + 0.5) * step
                })
                .collect();
            mse(x, &q)
        })
        .sum();
    total / data.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrRow {
    pub snr_db: f64,
    pub psnr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsnrSweep {
    pub schemes: Vec<String>,
    pub rows: Vec<PsnrRow>,
}

impl PsnrSweep {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["snr_db".to_string()];
        header.extend(self.schemes.iter().map(|s| format!("psnr_{s}")));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.snr_db.to_string()];
            rec.extend(r.psnr.iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// PSNR of each named model and of the digital baseline at every test SNR.
pub fn psnr_sweep(
    models: &[(&str, &AeModel)],
    data: &SyntheticAttributeDataset,
    snrs_db: &[f64],
    policy: GainPolicy,
    noise: &NoiseModel,
    seed: RngSeed,
) -> Result<PsnrSweep> {
    let channel_uses = models.first().map_or(0, |(_, m)| m.latent_dim());
    let mut schemes: Vec<String> = models.iter().map(|(n, _)| n.to_string()).collect();
    schemes.push("digital".into());
    let mut rows = Vec::with_capacity(snrs_db.len());
    for (k, &snr) in snrs_db.iter().enumerate() {
        let point_seed = seed.derive_index("snr-point", k as u64);
        let channel = LatentChannel::new(policy, snr, noise)?;
        let mut psnr = Vec::with_capacity(schemes.len());
        for (_, m) in models {
            psnr.push(psnr_from_mse(reconstruction_error(m, data, &channel, point_seed)?, PSNR_PEAK));
        }
        psnr.push(psnr_from_mse(
            digital_baseline_error(data, channel_uses, policy, snr, point_seed),
            PSNR_PEAK,
        ));
        rows.push(PsnrRow { snr_db: snr, psnr });
    }
    Ok(PsnrSweep { schemes, rows })
}
