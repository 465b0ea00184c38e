//! Per-player Merkle tree over the round commitments, with proofs that a
//! commitment sits at a given round position.
//!
//! Leaves hash as `H(0x00 || element)` and interior nodes as
//! `H(0x01 || left || right)` with SHA-256. The tree is padded to a power of
//! two with `commit(0, 0) = 1`. A proof lists one sibling per level, from the
//! leaf upwards, together with the side it sits on; the side sequence must
//! spell out `position - 1` in binary (least significant bit first), so a proof
//! is bound to exactly one position.

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::group::{Commitment, GroupParams};

pub type Digest = [u8; 32];

const LEAF_PREFIX: u8 = 0x00;
const NODE_PREFIX: u8 = 0x01;
/// Upper bound on tree height accepted from the wire.
pub const MAX_HEIGHT: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MerkleError {
    #[error("tree needs at least one leaf")]
    Empty,
    #[error("position {position} outside 1..={len}")]
    OutOfRange { position: u64, len: u64 },
    #[error("malformed proof encoding: {0}")]
    Malformed(&'static str),
}

/// Which side of the path node the sibling is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionProof {
    /// 1-based round position.
    pub position: u32,
    pub siblings: Vec<(Digest, Side)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleSchedule {
    /// Number of real (unpadded) leaves.
    len: usize,
    /// `levels[0]` holds leaf digests, the last level holds only the root.
    levels: Vec<Vec<Digest>>,
}

pub fn hash_leaf(params: &GroupParams, c: &Commitment) -> Digest {
    let mut h = Sha256::new();
    h.update([LEAF_PREFIX]);
    h.update(params.encode_element(c));
    h.finalize().into()
}

fn hash_node(left: &Digest, right: &Digest) -> Digest {
    let mut h = Sha256::new();
    h.update([NODE_PREFIX]);
    h.update(left);
    h.update(right);
    h.finalize().into()
}

impl MerkleSchedule {
    pub fn build(params: &GroupParams, leaves: &[Commitment]) -> Result<Self, MerkleError> {
        let digests: Vec<Digest> = leaves.iter().map(|c| hash_leaf(params, c)).collect();
        Self::from_leaf_digests(params, digests)
    }

    /// Builds from precomputed leaf digests, padding with the identity leaf.
    pub fn from_leaf_digests(params: &GroupParams, mut digests: Vec<Digest>) -> Result<Self, MerkleError> {
        if digests.is_empty() {
            return Err(MerkleError::Empty);
        }
        let len = digests.len();
        let width = len.next_power_of_two();
        if width > len {
            let pad = hash_leaf(params, &params.commit(&Default::default(), &Default::default()));
            digests.resize(width, pad);
        }
        let mut levels = vec![digests];
        while levels.last().map_or(0, Vec::len) > 1 {
            let next = levels
                .last()
                .unwrap()
                .chunks_exact(2)
                .map(|pair| hash_node(&pair[0], &pair[1]))
                .collect();
            levels.push(next);
        }
        Ok(MerkleSchedule { len, levels })
    }

    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    /// Real leaf count `J`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Padded leaf count.
    pub fn capacity(&self) -> usize {
        self.levels[0].len()
    }

    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaf_digest(&self, position: usize) -> Option<&Digest> {
        position.checked_sub(1).and_then(|i| self.levels[0].get(i))
    }

    pub fn prove(&self, position: u64) -> Result<PositionProof, MerkleError> {
        if position == 0 || position > self.len as u64 {
            return Err(MerkleError::OutOfRange { position, len: self.len as u64 });
        }
        let mut idx = (position - 1) as usize;
        let siblings = self.levels[..self.height()]
            .iter()
            .map(|level| {
                let entry = if idx % 2 == 0 {
                    (level[idx + 1], Side::Right)
                } else {
                    (level[idx - 1], Side::Left)
                };
                idx /= 2;
                entry
            })
            .collect();
        Ok(PositionProof { position: position as u32, siblings })
    }
}

/// Accepts iff `proof` places `c` at `position` under `root`.
pub fn verify_position(
    params: &GroupParams,
    root: &Digest,
    c: &Commitment,
    position: u64,
    proof: &PositionProof,
) -> bool {
    if position == 0 || u64::from(proof.position) != position || proof.siblings.len() > MAX_HEIGHT {
        return false;
    }
    let index = position - 1;
    if proof.siblings.len() < 64 && index >> proof.siblings.len() != 0 {
        return false;
    }
    let mut acc = hash_leaf(params, c);
    for (level, (sibling, side)) in proof.siblings.iter().enumerate() {
        let expected = if (index >> level) & 1 == 0 { Side::Right } else { Side::Left };
        if *side != expected {
            return false;
        }
        acc = match side {
            Side::Right => hash_node(&acc, sibling),
            Side::Left => hash_node(sibling, &acc),
        };
    }
    acc == *root
}

impl PositionProof {
    /// `position (4, BE) || count (1) || siblings (32 each) || side bitmap`.
    ///
    /// The bitmap holds `ceil(count / 8)` octets; bit `i % 8` of octet `i / 8`
    /// is set when the level-`i` sibling is on the left. Unused bits are zero.
    pub fn encode(&self) -> Vec<u8> {
        let count = self.siblings.len();
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.position.to_be_bytes());
        out.push(count as u8);
        for (digest, _) in &self.siblings {
            out.extend_from_slice(digest);
        }
        let mut bitmap = vec![0u8; count.div_ceil(8)];
        for (i, (_, side)) in self.siblings.iter().enumerate() {
            if *side == Side::Left {
                bitmap[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bitmap);
        out
    }

    pub fn encoded_len(&self) -> usize {
        Self::encoded_len_for(self.siblings.len())
    }

    pub fn encoded_len_for(height: usize) -> usize {
        4 + 1 + 32 * height + height.div_ceil(8)
    }

    /// Decodes a proof from the front of `bytes`, returning it and the number
    /// of octets consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), MerkleError> {
        if bytes.len() < 5 {
            return Err(MerkleError::Malformed("truncated header"));
        }
        let position = u32::from_be_bytes(bytes[..4].try_into().unwrap());
        let count = bytes[4] as usize;
        if count > MAX_HEIGHT {
            return Err(MerkleError::Malformed("too many siblings"));
        }
        let total = Self::encoded_len_for(count);
        if bytes.len() < total {
            return Err(MerkleError::Malformed("truncated body"));
        }
        let bitmap = &bytes[5 + 32 * count..total];
        if count % 8 != 0 && bitmap[count / 8] >> (count % 8) != 0 {
            return Err(MerkleError::Malformed("nonzero padding bits"));
        }
        let siblings = (0..count)
            .map(|i| {
                let digest: Digest = bytes[5 + 32 * i..5 + 32 * (i + 1)].try_into().unwrap();
                let side = if bitmap[i / 8] >> (i % 8) & 1 == 1 { Side::Left } else { Side::Right };
                (digest, side)
            })
            .collect();
        Ok((PositionProof { position, siblings }, total))
    }
}
