//! Feature-frame protocol and the loopback broadcast harness.

pub mod frame;
pub mod harness;

pub use frame::{FeatureFrame, FrameError, FrameReader, FrameType, ReaderStats};
pub use harness::{receive, serve, PayloadMode, ReceiveConfig, ReceiveReport, ServeConfig, ServeReport, SessionMetrics};
