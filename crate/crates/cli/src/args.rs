//! Flags for every subcommand. Each struct doubles as the schema of its
//! config-file section (kebab-case keys).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "sbc",
    version,
    about = "Semantic broadcast toolkit: allocation, rate regions, simulation, training and transport",
    arg_required_else_help = true
)]
pub struct Cli {
    /// TOML file with top-level `seed`/`out` and one table per subcommand;
    /// its values override flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate-distortion-perception allocation over a (D, P_kl) grid.
    Allocate(AllocateArgs),
    /// Inner and outer rate-region bounds of the two-user broadcast channel.
    Region(RegionArgs),
    /// Monte Carlo superposition coding with successive interference cancellation.
    Simulate(SimulateArgs),
    /// Train the disentangling autoencoder on synthetic attribute data.
    Train(TrainArgs),
    /// Attribute-level and reconstruction metrics of a checkpoint.
    Eval(EvalArgs),
    /// PSNR against test SNR for one or more checkpoints and a digital baseline.
    PsnrSweep(PsnrSweepArgs),
    /// Transmit selected features to TCP receivers.
    Serve(ServeArgs),
    /// Receive, complete and decode features.
    Recv(RecvArgs),
}

impl Command {
    pub fn section(&self) -> &'static str {
        match self {
            Self::Allocate(_) => "allocate",
            Self::Region(_) => "region",
            Self::Simulate(_) => "simulate",
            Self::Train(_) => "train",
            Self::Eval(_) => "eval",
            Self::PsnrSweep(_) => "psnr-sweep",
            Self::Serve(_) => "serve",
            Self::Recv(_) => "recv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Units {
    Nats,
    Bits,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AllocateArgs {
    /// Source variances.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75,1.0")]
    pub variances: Vec<f64>,
    /// Distortion budgets as FROM:TO:STEP (inclusive).
    #[arg(long, default_value = "0.1:2.5:0.05")]
    pub d_grid: String,
    /// KL budgets in nats.
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub p_kl: Vec<f64>,
    /// Solver tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Units::Nats)]
    pub units: Units,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RegionArgs {
    /// Gain of the strong user.
    #[arg(long, default_value_t = 1.0)]
    pub g1: f64,
    /// Gain of the weak user.
    #[arg(long, default_value_t = 0.5)]
    pub g2: f64,
    /// Noise of user 1: gaussian:VAR, q1, q2, q2-normalized, angc, erf:A,B,C or table:PATH.
    #[arg(long, default_value = "q1")]
    pub noise1: String,
    #[arg(long, default_value = "q1")]
    pub noise2: String,
    /// Total transmit power.
    #[arg(long, default_value_t = 10.0)]
    pub power: f64,
    /// Number of power-split values from 0 to 1.
    #[arg(long, default_value_t = 101)]
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alphabet {
    Gaussian,
    Bpsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SicMode {
    Genie,
    Hard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FadingArg {
    None,
    Slow,
    Fast,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1.0)]
    pub g1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub g2: f64,
    #[arg(long, default_value = "gaussian:1")]
    pub noise1: String,
    #[arg(long, default_value = "gaussian:1")]
    pub noise2: String,
    #[arg(long, default_value_t = 10.0)]
    pub power: f64,
    /// Power splits to simulate.
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,0.8")]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub symbols: usize,
    #[arg(long, default_value_t = 16_384)]
    pub frame_len: usize,
    /// Disable receiver noise.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long, value_enum, default_value_t = Alphabet::Gaussian)]
    pub alphabet: Alphabet,
    /// Source of user 2's symbols for cancellation.
    #[arg(long, value_enum, default_value_t = SicMode::Genie)]
    pub sic: SicMode,
    #[arg(long, value_enum, default_value_t = FadingArg::None)]
    pub fading: FadingArg,
    #[arg(long, default_value_t = 1.0)]
    pub fading_var1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub fading_var2: f64,
    /// Keep the sign of Gaussian gain draws.
    #[arg(long)]
    pub signed_gains: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    /// No channel.
    Identity,
    /// Unit gain with additive noise.
    Awgn,
    /// Magnitude-Gaussian gain per code, no equalization.
    Rayleigh,
    /// Magnitude-Gaussian gain per code, divided out at the receiver.
    RayleighEq,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    /// Learning rate [default: 5e-4, tuned for the synthetic task; the
    /// reference optimizer setting is 1e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    /// Train through a noisy latent channel at this SNR (dB); omit for the
    /// noiseless scheme.
    #[arg(long)]
    pub snr_train: Option<f64>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Rayleigh)]
    pub policy: PolicyArg,
    #[arg(long, default_value = "gaussian:1")]
    pub noise: String,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub users: usize,
    #[arg(long, default_value_t = 2048)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 512)]
    pub test_samples: usize,
    /// Checkpoint file name inside the output directory.
    #[arg(long, default_value = "model.smae")]
    pub checkpoint: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Test SNRs (dB) for reconstruction error.
    #[arg(long, value_delimiter = ',', default_value = "0,4,8,15,20")]
    pub snr: Vec<f64>,
    #[arg(long, value_enum, default_value_t = PolicyArg::Rayleigh)]
    pub policy: PolicyArg,
    #[arg(long, default_value = "gaussian:1")]
    pub noise: String,
    #[arg(long, default_value_t = 2048)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 512)]
    pub test_samples: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PsnrSweepArgs {
    /// NAME=PATH of a checkpoint; repeat for several schemes.
    #[arg(long = "model")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    pub snr_from: f64,
    #[arg(long, default_value_t = 20.0)]
    pub snr_to: f64,
    #[arg(long, default_value_t = 2.0)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Rayleigh)]
    pub policy: PolicyArg,
    #[arg(long, default_value = "gaussian:1")]
    pub noise: String,
    #[arg(long, default_value_t = 2048)]
    pub train_samples: usize,
    #[arg(long, default_value_t = 512)]
    pub test_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Semantic,
    Raw,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub bind: String,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Schema JSON that must match the checkpoint.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Receivers to wait for.
    #[arg(long, default_value_t = 2)]
    pub users: usize,
    /// Samples to broadcast.
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Semantic)]
    pub mode: ModeArg,
    /// Emulated link rate in Mbit/s; omit to send at full speed.
    #[arg(long)]
    pub rate_mbps: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RecvArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub connect: String,
    #[arg(long, default_value_t = 0)]
    pub user: u8,
    /// Interest bitmap: 0b..., 0x... or decimal.
    #[arg(long, default_value = "0b001")]
    pub interest: String,
    /// Knowledge-base sample (whitespace- or comma-separated numbers).
    #[arg(long)]
    pub donor: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Regenerate the transmitted samples from the seed to report PSNR.
    #[arg(long)]
    pub truth_from_seed: bool,
    /// Number of samples the transmitter sends (for --truth-from-seed).
    #[arg(long, default_value_t = 1000)]
    pub frames: usize,
    /// Seconds to keep retrying the connection.
    #[arg(long, default_value_t = 10.0)]
    pub connect_timeout: f64,
}
