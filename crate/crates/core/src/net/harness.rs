//! Transmitter and receivers over TCP. Broadcast is a fan-out over one
//! connection per user.

use std::io::{BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use serde::Serialize;

use super::frame::{FeatureFrame, FrameReader, FrameType};
use crate::ae::eval::{psnr, PSNR_PEAK};
use crate::ae::AeModel;
use crate::error::{invalid, Error, Result};
use crate::schema::{complete, select, InterestSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadMode {
    /// Encoded, user-selected latent blocks.
    Semantic,
    /// The raw input vector.
    Raw,
}

pub struct ServeConfig<'a> {
    pub model: &'a AeModel,
    pub samples: &'a [Vec<f64>],
    pub users: usize,
    pub mode: PayloadMode,
    /// Link rate in bytes per second; `None` sends as fast as TCP allows.
    pub pacing: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SessionMetrics {
    pub user_id: u8,
    pub interest_bitmap: u64,
    pub frames: u64,
    pub bytes_sent: u64,
    pub payload_bytes_per_frame: u64,
    pub raw_bytes_per_frame: u64,
    pub compression_ratio: f64,
    pub wall_ms: f64,
    pub ms_per_frame: f64,
    pub crc_failures: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ServeReport {
    pub mode: PayloadMode,
    pub sessions: Vec<SessionMetrics>,
    /// Connections dropped for malformed frames.
    pub dropped: Vec<String>,
}

struct Pacer {
    rate: Option<f64>,
    start: Instant,
    bytes: u64,
}

impl Pacer {
    fn wait(&mut self, next: usize) {
        if let Some(rate) = self.rate {
            let due = self.start + Duration::from_secs_f64(self.bytes as f64 / rate);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        self.bytes += next as u64;
    }
}

/// Accepts `config.users` receivers and streams every sample to each.
pub fn serve(listener: &TcpListener, config: &ServeConfig) -> Result<ServeReport> {
    if config.users == 0 {
        return Err(invalid("users", "must be positive"));
    }
    if let Some(r) = config.pacing {
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid("pacing", "must be a positive byte rate"));
        }
    }
    let mut streams = Vec::with_capacity(config.users);
    for _ in 0..config.users {
        streams.push(listener.accept()?.0);
    }
    let results: Vec<std::result::Result<SessionMetrics, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = streams
            .into_iter()
            .map(|stream| s.spawn(|| session(stream, config).map_err(|e| e.to_string())))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("session thread panicked".into())))
            .collect()
    });
    let mut sessions = Vec::new();
    let mut dropped = Vec::new();
    for r in results {
        match r {
            Ok(m) => sessions.push(m),
            Err(reason) => dropped.push(reason),
        }
    }
    sessions.sort_by_key(|m| m.user_id);
    Ok(ServeReport {
        mode: config.mode,
        sessions,
        dropped,
    })
}

fn session(stream: TcpStream, config: &ServeConfig) -> Result<SessionMetrics> {
    stream.set_nodelay(true)?;
    let mut reader = FrameReader::new(stream.try_clone()?);
    let hello = reader
        .next_frame()?
        .filter(|f| f.frame_type == FrameType::Hello)
        .ok_or_else(|| invalid("hello", "connection did not open with a hello frame"))?;
    let schema = &config.model.schema;
    let interest = InterestSet::from_bitmap(hello.interest_bitmap, schema.num_blocks())?;
    let input_dim = config.model.input_dim();
    let raw_bytes = 4 * input_dim as u64;
    let payload_bytes = match config.mode {
        PayloadMode::Semantic => 4 * schema.selected_width(&interest) as u64,
        PayloadMode::Raw => raw_bytes,
    };

    let mut out = BufWriter::new(stream);
    let start = Instant::now();
    let mut pacer = Pacer {
        rate: config.pacing,
        start,
        bytes: 0,
    };
    let mut bytes_sent = 0u64;
    for x in config.samples {
        let frame = match config.mode {
            PayloadMode::Semantic => FeatureFrame {
                frame_type: FrameType::Features,
                user_id: hello.user_id,
                interest_bitmap: interest.bitmap(),
                payload: select(&config.model.encode(x)?, &interest)?.iter().map(|&v| v as f32).collect(),
            },
            PayloadMode::Raw => FeatureFrame {
                frame_type: FrameType::Raw,
                user_id: hello.user_id,
                interest_bitmap: 0,
                payload: x.iter().map(|&v| v as f32).collect(),
            },
        };
        let bytes = frame.encode();
        pacer.wait(bytes.len());
        out.write_all(&bytes)?;
        if config.pacing.is_some() {
            out.flush()?;
        }
        bytes_sent += bytes.len() as u64;
    }
    let bye = FeatureFrame::control(FrameType::Bye, hello.user_id, 0).encode();
    out.write_all(&bye)?;
    out.flush()?;
    bytes_sent += bye.len() as u64;
    loop {
        match reader.next_frame()? {
            Some(f) if f.frame_type == FrameType::Bye => break,
            Some(_) => continue,
            None => return Err(invalid("bye", "receiver closed without acknowledging")),
        }
    }
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let frames = config.samples.len() as u64;
    Ok(SessionMetrics {
        user_id: hello.user_id,
        interest_bitmap: interest.bitmap(),
        frames,
        bytes_sent,
        payload_bytes_per_frame: payload_bytes,
        raw_bytes_per_frame: raw_bytes,
        compression_ratio: if payload_bytes == 0 {
            f64::INFINITY
        } else {
            raw_bytes as f64 / payload_bytes as f64
        },
        wall_ms,
        ms_per_frame: wall_ms / frames.max(1) as f64,
        crc_failures: reader.stats.crc_failures,
    })
}

pub struct ReceiveConfig<'a> {
    pub user_id: u8,
    pub interest: InterestSet,
    pub model: &'a AeModel,
    /// Knowledge-base sample used to fill untransmitted blocks.
    pub donor: &'a [f64],
    /// Ground truth for PSNR, in send order.
    pub truth: Option<&'a [Vec<f64>]>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReceiveReport {
    pub user_id: u8,
    pub frames: u64,
    pub bytes_received: u64,
    pub crc_failures: u64,
    pub malformed: u64,
    pub mean_psnr_db: Option<f64>,
    #[serde(skip)]
    pub reconstructions: Vec<Vec<f64>>,
}

/// Connects, announces the interest set, and reconstructs every frame until
/// the transmitter says bye.
pub fn receive(addr: impl ToSocketAddrs, config: &ReceiveConfig) -> Result<ReceiveReport> {
    let model = config.model;
    let decoder = usize::from(config.user_id) % model.users();
    let donor = model.encode(config.donor)?;
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut out = stream.try_clone()?;
    out.write_all(&FeatureFrame::control(FrameType::Hello, config.user_id, config.interest.bitmap()).encode())?;
    let mut reader = FrameReader::new(stream);
    let mut recon = Vec::new();
    let mut bytes = 0u64;
    loop {
        let Some(frame) = reader.next_frame()? else {
            return Err(invalid("stream", "transmitter closed without bye"));
        };
        bytes += frame.encoded_len() as u64;
        match frame.frame_type {
            FrameType::Bye => {
                out.write_all(&FeatureFrame::control(FrameType::Bye, config.user_id, 0).encode())?;
                break;
            }
            FrameType::Features => {
                if frame.interest_bitmap != config.interest.bitmap() {
                    return Err(invalid("frame", "interest bitmap differs from the announced set"));
                }
                let selected: Vec<f64> = frame.payload.iter().map(|&v| f64::from(v)).collect();
                let code = complete(&selected, &config.interest, &donor)?;
                recon.push(model.decode(decoder, code.values())?);
            }
            FrameType::Raw => recon.push(frame.payload.iter().map(|&v| f64::from(v)).collect()),
            FrameType::Hello => {}
        }
    }
    let mean_psnr_db = match config.truth {
        Some(truth) if !recon.is_empty() => {
            if truth.len() < recon.len() {
                return Err(Error::ShapeMismatch {
                    what: "ground truth samples",
                    expected: recon.len(),
                    actual: truth.len(),
                });
            }
            Some(recon.iter().zip(truth).map(|(r, t)| psnr(t, r, PSNR_PEAK)).sum::<f64>() / recon.len() as f64)
        }
        _ => None,
    };
    Ok(ReceiveReport {
        user_id: config.user_id,
        frames: recon.len() as u64,
        bytes_received: bytes,
        crc_failures: reader.stats.crc_failures,
        malformed: reader.stats.malformed,
        mean_psnr_db,
        reconstructions: recon,
    })
}
