//! Wire format for feature frames.
//!
//! ```text
//! magic "SBC1" | version u8 | type u8 | user u8 | reserved u8
//! | interest bitmap u64 | payload_len u32 | payload (binary32) | crc32 u32
//! ```
//! All integers little-endian; the CRC (IEEE) covers every preceding byte.

use std::io::Read;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"SBC1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
pub const TRAILER_LEN: usize = 4;
/// Larger payloads are treated as corruption.
pub const MAX_PAYLOAD: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown frame type {0}")]
    BadType(u8),
    #[error("reserved byte is {0}, expected 0")]
    Reserved(u8),
    #[error("payload length {0} is not a whole number of floats or too large")]
    BadLength(u32),
    #[error("crc mismatch: frame says {stated:08x}, computed {computed:08x}")]
    BadCrc { stated: u32, computed: u32 },
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameType {
    Hello = 0,
    Features = 1,
    Raw = 2,
    Bye = 3,
}

impl TryFrom<u8> for FrameType {
    type Error = FrameError;
    fn try_from(v: u8) -> Result<Self, FrameError> {
        Ok(match v {
            0 => Self::Hello,
            1 => Self::Features,
            2 => Self::Raw,
            3 => Self::Bye,
            other => return Err(FrameError::BadType(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub frame_type: FrameType,
    pub user_id: u8,
    pub interest_bitmap: u64,
    pub payload: Vec<f32>,
}

impl FeatureFrame {
    pub fn control(frame_type: FrameType, user_id: u8, interest_bitmap: u64) -> Self {
        Self {
            frame_type,
            user_id,
            interest_bitmap,
            payload: Vec::new(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + 4 * self.payload.len() + TRAILER_LEN
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[VERSION, self.frame_type as u8, self.user_id, 0]);
        out.extend_from_slice(&self.interest_bitmap.to_le_bytes());
        out.extend_from_slice(&((4 * self.payload.len()) as u32).to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Decodes one frame from the start of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), FrameError> {
        let payload_len = parse_header(bytes)?;
        let total = HEADER_LEN + payload_len + TRAILER_LEN;
        if bytes.len() < total {
            return Err(FrameError::Truncated {
                needed: total,
                have: bytes.len(),
            });
        }
        let body = &bytes[..HEADER_LEN + payload_len];
        let stated = u32::from_le_bytes(bytes[total - 4..total].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stated != computed {
            return Err(FrameError::BadCrc { stated, computed });
        }
        let payload = body[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok((
            Self {
                frame_type: FrameType::try_from(bytes[5])?,
                user_id: bytes[6],
                interest_bitmap: u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")),
                payload,
            },
            total,
        ))
    }
}

/// Validates the fixed header and returns the payload length in bytes.
fn parse_header(bytes: &[u8]) -> Result<usize, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(FrameError::BadVersion(bytes[4]));
    }
    FrameType::try_from(bytes[5])?;
    if bytes[7] != 0 {
        return Err(FrameError::Reserved(bytes[7]));
    }
    let len = u32::from_le_bytes(bytes[16..20].try_into().expect("4 bytes"));
    if len % 4 != 0 || len as usize > MAX_PAYLOAD {
        return Err(FrameError::BadLength(len));
    }
    Ok(len as usize)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ReaderStats {
    pub frames: u64,
    pub crc_failures: u64,
    pub malformed: u64,
    pub skipped_bytes: u64,
}

/// Pulls frames from a byte stream, skipping garbage and corrupt frames by
/// scanning for the next magic.
pub struct FrameReader<R> {
    inner: R,
    buf: Vec<u8>,
    eof: bool,
    pub stats: ReaderStats,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: Vec::new(),
            eof: false,
            stats: ReaderStats::default(),
        }
    }

    fn fill(&mut self, want: usize) -> std::io::Result<bool> {
        let mut chunk = [0u8; 8192];
        while self.buf.len() < want && !self.eof {
            match self.inner.read(&mut chunk) {
                Ok(0) => self.eof = true,
                Ok(n) => self.buf.extend_from_slice(&chunk[..n]),
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(self.buf.len() >= want)
    }

    fn skip(&mut self, n: usize) {
        self.buf.drain(..n);
        self.stats.skipped_bytes += n as u64;
    }

    /// Next valid frame, or `None` at end of stream.
    pub fn next_frame(&mut self) -> std::io::Result<Option<FeatureFrame>> {
        loop {
            if !self.fill(MAGIC.len())? {
                let rest = self.buf.len();
                self.skip(rest);
                return Ok(None);
            }
            match self.buf.windows(4).position(|w| w == MAGIC) {
                Some(0) => {}
                Some(p) => {
                    self.skip(p);
                    continue;
                }
                None => {
                    // keep a possible partial magic at the tail
                    let keep = 3.min(self.buf.len());
                    let drop = self.buf.len() - keep;
                    self.skip(drop);
                    if self.eof {
                        let rest = self.buf.len();
                        self.skip(rest);
                        return Ok(None);
                    }
                    self.fill(self.buf.len() + 1)?;
                    continue;
                }
            }
            if !self.fill(HEADER_LEN)? {
                self.stats.malformed += 1;
                let rest = self.buf.len();
                self.skip(rest);
                return Ok(None);
            }
            let payload_len = match parse_header(&self.buf) {
                Ok(n) => n,
                Err(_) => {
                    self.stats.malformed += 1;
                    self.skip(1);
                    continue;
                }
            };
            let total = HEADER_LEN + payload_len + TRAILER_LEN;
            if !self.fill(total)? {
                self.stats.malformed += 1;
                self.skip(1);
                continue;
            }
            match FeatureFrame::decode(&self.buf[..total]) {
                Ok((frame, used)) => {
                    self.buf.drain(..used);
                    self.stats.frames += 1;
                    return Ok(Some(frame));
                }
                Err(FrameError::BadCrc { .. }) => {
                    self.stats.crc_failures += 1;
                    self.skip(1);
                }
                Err(_) => {
                    self.stats.malformed += 1;
                    self.skip(1);
                }
            }
        }
    }
}
