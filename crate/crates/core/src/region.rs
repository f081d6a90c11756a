//! Inner and outer rate-region bounds of the two-user degraded broadcast
//! channel with non-Gaussian noise.
//!
//! The inner bound is the superposition/SIC rate pair obtained with Gaussian
//! noise of matched variance; the outer bound adds, per user, the KL
//! divergence between the actual noise density and that equivalent Gaussian.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::BroadcastChannelParams;
use crate::error::{invalid, Error, Result};
use crate::noise::{gaussian_density, noise_variance, NoiseKind, NoiseModel};
use crate::quad::{adaptive_simpson, trapezoid_uniform};

const KL_PANELS: usize = 64;
const KL_TOL: f64 = 1e-10;

/// Equivalent-Gaussian rates `(r1, r2)` in bits per channel use at power split `alpha`.
pub fn equivalent_rates(params: &BroadcastChannelParams, alpha: f64) -> Result<(f64, f64)> {
    if !params.is_degraded_order() {
        return Err(Error::NotDegraded {
            g1: params.gains.0.abs(),
            g2: params.gains.1.abs(),
        });
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("{alpha} outside [0, 1]")));
    }
    let (s1, s2) = analytic_sinr(params, alpha)?;
    Ok((0.5 * (1.0 + s1).log2(), 0.5 * (1.0 + s2).log2()))
}

/// SINR of user 1 after cancelling user 2's layer, and of user 2 treating
/// user 1's layer as noise.
pub fn analytic_sinr(params: &BroadcastChannelParams, alpha: f64) -> Result<(f64, f64)> {
    let v1 = noise_variance(&params.noise.0)?;
    let v2 = noise_variance(&params.noise.1)?;
    let p = params.total_power;
    let (g1, g2) = (params.gains.0 * params.gains.0, params.gains.1 * params.gains.1);
    Ok((g1 * alpha * p / v1, g2 * (1.0 - alpha) * p / (g2 * alpha * p + v2)))
}

/// `KL(p || N(mean_p, var_p))` in nats.
pub fn kl_to_equivalent_gaussian(noise: &NoiseModel) -> Result<f64> {
    kl_with_panels(noise, KL_PANELS)
}

/// As [`kl_to_equivalent_gaussian`] with an explicit number of quadrature panels
/// for closed-form densities (tables always use their own grid).
pub fn kl_with_panels(noise: &NoiseModel, panels: usize) -> Result<f64> {
    let var = noise_variance(noise)?;
    let mean = noise.mean();
    let integrand = |x: f64| {
        let p = noise.density(x);
        if p <= 0.0 {
            0.0
        } else {
            p * (p / gaussian_density(x, mean, var)).ln()
        }
    };
    let kl = match noise.kind() {
        NoiseKind::Gaussian { .. } => 0.0,
        NoiseKind::ErfMixture { .. } => {
            let (lo, hi) = noise.support();
            adaptive_simpson(integrand, lo, hi, panels, KL_TOL)
        }
        NoiseKind::Tabulated(t) => {
            let vals: Vec<f64> = t.xs().iter().map(|&x| integrand(x)).collect();
            trapezoid_uniform(&vals, t.step())
        }
    };
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub alpha: f64,
    pub r1_inner: f64,
    pub r1_outer: f64,
    pub r2_inner: f64,
    pub r2_outer: f64,
    pub kl1_bits: f64,
    pub kl2_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCurve {
    pub params: BroadcastChannelParams,
    pub points: Vec<RegionPoint>,
    pub warnings: Vec<String>,
}

impl RegionCurve {
    /// Largest `outer - inner` over both users and all points.
    pub fn max_gap(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.r1_outer - p.r1_inner).max(p.r2_outer - p.r2_inner))
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REGION_HEADER)?;
        for p in &self.points {
            out.write_record(
                [p.alpha, p.r1_inner, p.r1_outer, p.r2_inner, p.r2_outer, p.kl1_bits, p.kl2_bits]
                    .map(|v| v.to_string()),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

pub const REGION_HEADER: [&str; 7] = [
    "alpha", "r1_inner", "r1_outer", "r2_inner", "r2_outer", "kl1_bits", "kl2_bits",
];

/// Sweeps `alpha` uniformly over `[0, 1]` with `n_alpha` points.
pub fn region_curve(params: &BroadcastChannelParams, n_alpha: usize) -> Result<RegionCurve> {
    if n_alpha < 2 {
        return Err(invalid("n_alpha", "need at least the two endpoints"));
    }
    let mut warnings = Vec::new();
    let v1 = noise_variance(&params.noise.0)?;
    let v2 = noise_variance(&params.noise.1)?;
    if (v1 - v2).abs() > 1e-9 * v1.max(v2) {
        warnings.push(format!("noise variances differ: {v1} vs {v2}"));
    }
    for (k, n) in [&params.noise.0, &params.noise.1].into_iter().enumerate() {
        if (n.mass() - 1.0).abs() > crate::noise::MASS_TOL {
            warnings.push(format!("noise {} integrates to {:.9}, not 1", k + 1, n.mass()));
        }
    }
    let kl1_bits = kl_to_equivalent_gaussian(&params.noise.0)? / std::f64::consts::LN_2;
    let kl2_bits = kl_to_equivalent_gaussian(&params.noise.1)? / std::f64::consts::LN_2;
    let points = (0..n_alpha)
        .into_par_iter()
        .map(|k| {
            let alpha = if k + 1 == n_alpha {
                1.0
            } else {
                k as f64 / (n_alpha - 1) as f64
            };
            let (r1, r2) = equivalent_rates(params, alpha)?;
            Ok(RegionPoint {
                alpha,
                r1_inner: r1,
                r1_outer: r1 + kl1_bits,
                r2_inner: r2,
                r2_outer: r2 + kl2_bits,
                kl1_bits,
                kl2_bits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionCurve {
        params: params.clone(),
        points,
        warnings,
    })
}

/// Analytic versus simulated SINR for both users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrCheck {
    pub alpha: f64,
    pub analytic: [f64; 2],
    pub empirical: [f64; 2],
    pub relative_error: [f64; 2],
}

pub const SINR_TOLERANCE: f64 = 0.02;

/// Compares [`analytic_sinr`] with the SINRs measured by the simulator.
pub fn superposition_rate_check(
    params: &BroadcastChannelParams,
    alpha: f64,
    sim: &crate::sim::SimReport,
) -> Result<SinrCheck> {
    let (a1, a2) = analytic_sinr(params, alpha)?;
    let analytic = [a1, a2];
    let empirical = sim.sinr;
    let mut relative_error = [0.0; 2];
    for k in 0..2 {
        relative_error[k] = if analytic[k] == 0.0 {
            empirical[k].abs()
        } else {
            (empirical[k] - analytic[k]).abs() / analytic[k]
        };
        if relative_error[k] > SINR_TOLERANCE {
            return Err(Error::SinrMismatch {
                user: k + 1,
                empirical: empirical[k],
                analytic: analytic[k],
            });
        }
    }
    Ok(SinrCheck {
        alpha,
        analytic,
        empirical,
        relative_error,
    })
}
