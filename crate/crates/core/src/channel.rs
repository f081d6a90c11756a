//! Parameters of the two-user broadcast channel.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::noise::NoiseModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    #[default]
    None,
    /// One gain draw per frame.
    Slow,
    /// One gain draw per symbol.
    Fast,
}

/// Rayleigh-style gain draws `G_k = |g|`, `g ~ N(0, variance_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fading {
    pub mode: FadingMode,
    pub variances: (f64, f64),
    /// Use the signed Gaussian draw instead of its magnitude.
    pub signed: bool,
}

impl Fading {
    pub fn new(mode: FadingMode, variances: (f64, f64), signed: bool) -> Result<Self> {
        for v in [variances.0, variances.1] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid("fading variance", format!("{v} is not positive")));
            }
        }
        Ok(Self {
            mode,
            variances,
            signed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastChannelParams {
    pub gains: (f64, f64),
    pub noise: (NoiseModel, NoiseModel),
    pub total_power: f64,
    pub fading: Option<Fading>,
}

impl BroadcastChannelParams {
    pub fn new(gains: (f64, f64), noise: (NoiseModel, NoiseModel), total_power: f64) -> Result<Self> {
        if !(total_power > 0.0 && total_power.is_finite()) {
            return Err(invalid("total_power", format!("{total_power} is not positive")));
        }
        if !(gains.0.is_finite() && gains.1.is_finite()) {
            return Err(invalid("gains", "must be finite"));
        }
        Ok(Self {
            gains,
            noise,
            total_power,
            fading: None,
        })
    }

    pub fn with_fading(mut self, fading: Fading) -> Self {
        self.fading = Some(fading);
        self
    }

    /// `|G1| >= |G2|`: user 1 is the strong user that runs SIC.
    pub fn is_degraded_order(&self) -> bool {
        self.gains.0.abs() >= self.gains.1.abs()
    }
}
