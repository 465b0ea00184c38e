//! Audio frames packed into a single message scalar.
//!
//! ```text
//! len (2, BE) || audio (len) || checksum (2) || zero padding
//! ```
//!
//! The frame occupies `(bits(q) - 1) / 8` octets, read as a big-endian integer,
//! so every frame is strictly below `q`. The checksum is the first two octets
//! of `SHA-256("dcstream/frame/v1" || len || audio)`. The zero scalar is
//! silence and never collides with a framed payload in practice.

use num_bigint::BigUint;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::group::{GroupParams, Scalar};

const FRAME_TAG: &[u8] = b"dcstream/frame/v1";
const OVERHEAD: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("group too small for framed payloads ({capacity} octets per scalar)")]
    NoCapacity { capacity: usize },
    #[error("{len} audio octets exceed frame capacity {max}")]
    TooLong { len: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Frame {
    Silence,
    Audio(Vec<u8>),
}

/// Octets available per scalar.
pub fn frame_len(params: &GroupParams) -> usize {
    (params.q().bits() as usize).saturating_sub(1) / 8
}

/// Audio octets that fit in one frame.
pub fn audio_capacity(params: &GroupParams) -> Result<usize, FrameError> {
    let capacity = frame_len(params);
    capacity.checked_sub(OVERHEAD).ok_or(FrameError::NoCapacity { capacity })
}

fn checksum(len: u16, audio: &[u8]) -> [u8; 2] {
    let mut h = Sha256::new();
    h.update(FRAME_TAG);
    h.update(len.to_be_bytes());
    h.update(audio);
    let d = h.finalize();
    [d[0], d[1]]
}

pub fn encode_frame(params: &GroupParams, frame: &Frame) -> Result<Scalar, FrameError> {
    let audio = match frame {
        Frame::Silence => return Ok(Scalar::zero()),
        Frame::Audio(a) => a,
    };
    let max = audio_capacity(params)?;
    if audio.len() > max {
        return Err(FrameError::TooLong { len: audio.len(), max });
    }
    let len = audio.len() as u16;
    let mut bytes = vec![0u8; frame_len(params)];
    bytes[..2].copy_from_slice(&len.to_be_bytes());
    bytes[2..2 + audio.len()].copy_from_slice(audio);
    bytes[2 + audio.len()..4 + audio.len()].copy_from_slice(&checksum(len, audio));
    Ok(params.reduce(BigUint::from_bytes_be(&bytes)))
}

/// `None` unless `m` is silence or a well-formed frame.
pub fn decode_frame(params: &GroupParams, m: &Scalar) -> Option<Frame> {
    if m.is_zero() {
        return Some(Frame::Silence);
    }
    let width = frame_len(params);
    if width < OVERHEAD || m.value().bits() as usize > width * 8 {
        return None;
    }
    let raw = m.value().to_bytes_be();
    let mut bytes = vec![0u8; width - raw.len()];
    bytes.extend(raw);
    let len = u16::from_be_bytes([bytes[0], bytes[1]]);
    let end = 2 + usize::from(len);
    if end + 2 > width {
        return None;
    }
    let audio = &bytes[2..end];
    if bytes[end..end + 2] != checksum(len, audio) || bytes[end + 2..].iter().any(|&b| b != 0) {
        return None;
    }
    Some(Frame::Audio(audio.to_vec()))
}
