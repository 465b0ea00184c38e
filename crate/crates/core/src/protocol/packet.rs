//! The two wire messages of a round.
//!
//! Collection (player to aggregator):
//!
//! ```text
//! round (8, BE) || sender (2, BE) || O (scalar) || [s (scalar)] || [position proof]
//! ```
//!
//! Broadcast (aggregator to players):
//!
//! ```text
//! round (8, BE) || [L bitmap, ceil(n / 8)] || X (scalar)
//! ```
//!
//! Scalars are fixed-width big-endian, `ceil(bits(q) / 8)` octets. Bit
//! `(i - 1) % 8` of bitmap octet `(i - 1) / 8` marks player `i` as received.
//! Which optional fields are present follows the [`WireShape`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupError, GroupParams, Scalar};
use crate::merkle::{MerkleError, PositionProof};
use crate::{PlayerId, WireShape};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("packet truncated: need {need} octets, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{0} trailing octets")]
    Trailing(usize),
    #[error("sender index 0")]
    ZeroSender,
    #[error("received-set bitmap names player {0} outside the group")]
    BitmapOverflow(u16),
    #[error(transparent)]
    Scalar(#[from] GroupError),
    #[error(transparent)]
    Proof(#[from] MerkleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionPacket {
    pub round: u64,
    pub sender: PlayerId,
    /// The opened value `O`.
    pub value: Scalar,
    /// The opened blinding `s`, levels 3 and 4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blind: Option<Scalar>,
    /// Position proof, level 4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<PositionProof>,
}

impl CollectionPacket {
    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len(params));
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&self.sender.0.to_be_bytes());
        out.extend(params.encode_scalar(&self.value));
        if let Some(s) = &self.blind {
            out.extend(params.encode_scalar(s));
        }
        if let Some(p) = &self.proof {
            out.extend(p.encode());
        }
        out
    }

    pub fn encoded_len(&self, params: &GroupParams) -> usize {
        Self::header_len()
            + params.scalar_len() * (1 + usize::from(self.blind.is_some()))
            + self.proof.as_ref().map_or(0, PositionProof::encoded_len)
    }

    /// Wire size for a shape, with proofs of `proof_height` siblings.
    pub fn size_for(params: &GroupParams, shape: WireShape, proof_height: usize) -> usize {
        Self::header_len()
            + params.scalar_len() * (1 + usize::from(shape.blind))
            + if shape.proof { PositionProof::encoded_len_for(proof_height) } else { 0 }
    }

    fn header_len() -> usize {
        8 + 2
    }

    pub fn decode(bytes: &[u8], params: &GroupParams, shape: WireShape) -> Result<Self, WireError> {
        let w = params.scalar_len();
        let fixed = Self::header_len() + w * (1 + usize::from(shape.blind));
        if bytes.len() < fixed {
            return Err(WireError::Truncated { need: fixed, have: bytes.len() });
        }
        let round = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        let sender = u16::from_be_bytes(bytes[8..10].try_into().unwrap());
        if sender == 0 {
            return Err(WireError::ZeroSender);
        }
        let value = params.decode_scalar(&bytes[10..10 + w])?;
        let mut at = 10 + w;
        let blind = if shape.blind {
            let s = params.decode_scalar(&bytes[at..at + w])?;
            at += w;
            Some(s)
        } else {
            None
        };
        let proof = if shape.proof {
            let (p, used) = PositionProof::decode(&bytes[at..])?;
            at += used;
            Some(p)
        } else {
            None
        };
        if at != bytes.len() {
            return Err(WireError::Trailing(bytes.len() - at));
        }
        Ok(CollectionPacket { round, sender: PlayerId(sender), value, blind, proof })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadcastPacket {
    pub round: u64,
    /// The received set `L`; absent at level 1 and in the no-list variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<BTreeSet<PlayerId>>,
    /// `X`, the sum of the accepted openings.
    pub sum: Scalar,
}

impl BroadcastPacket {
    /// Same packet with the received set dropped.
    pub fn without_list(&self) -> Self {
        BroadcastPacket { members: None, ..self.clone() }
    }

    pub fn encode(&self, params: &GroupParams, n: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::size_for(params, n, self.members.is_some()));
        out.extend_from_slice(&self.round.to_be_bytes());
        if let Some(members) = &self.members {
            let mut bitmap = vec![0u8; n.div_ceil(8)];
            for id in members {
                let i = id.index();
                bitmap[i / 8] |= 1 << (i % 8);
            }
            out.extend(bitmap);
        }
        out.extend(params.encode_scalar(&self.sum));
        out
    }

    pub fn size_for(params: &GroupParams, n: usize, list: bool) -> usize {
        8 + if list { n.div_ceil(8) } else { 0 } + params.scalar_len()
    }

    pub fn decode(bytes: &[u8], params: &GroupParams, n: usize, list: bool) -> Result<Self, WireError> {
        let need = Self::size_for(params, n, list);
        if bytes.len() < need {
            return Err(WireError::Truncated { need, have: bytes.len() });
        }
        if bytes.len() > need {
            return Err(WireError::Trailing(bytes.len() - need));
        }
        let round = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        let mut at = 8;
        let members = if list {
            let bitmap = &bytes[8..8 + n.div_ceil(8)];
            at += bitmap.len();
            let mut set = BTreeSet::new();
            for (byte_idx, byte) in bitmap.iter().enumerate() {
                for bit in 0..8 {
                    if byte >> bit & 1 == 1 {
                        let idx = byte_idx * 8 + bit;
                        if idx >= n {
                            return Err(WireError::BitmapOverflow(idx as u16 + 1));
                        }
                        set.insert(PlayerId::from_index(idx));
                    }
                }
            }
            Some(set)
        } else {
            None
        };
        let sum = params.decode_scalar(&bytes[at..])?;
        Ok(BroadcastPacket { round, members, sum })
    }
}
