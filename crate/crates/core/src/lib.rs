//! Semantic broadcast toolkit: rate-distortion-perception allocation,
//! broadcast-channel rate regions and simulation, a group-supervised
//! disentangling autoencoder, and a small feature-frame transport.

pub mod ae;
pub mod channel;
pub mod error;
pub mod net;
pub mod noise;
pub mod quad;
pub mod rdp;
pub mod region;
pub mod rng;
pub mod schema;
pub mod sim;

pub use channel::{BroadcastChannelParams, Fading, FadingMode};
pub use error::{Error, Result};
pub use noise::{NoiseModel, NoiseSampler, PdfTable};
pub use rdp::{AllocationProblem, AllocationSolution, GaussianSourceSet, RateUnit};
pub use region::{region_curve, RegionCurve, RegionPoint};
pub use rng::RngSeed;
pub use schema::{exchange, select_and_complete, Block, InterestSet, LatentCode, LatentSchema};
pub use sim::{simulate, GainPolicy, LatentChannel, SimConfig, SimReport};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
