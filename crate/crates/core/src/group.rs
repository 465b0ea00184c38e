//! Schnorr-group arithmetic, Pedersen commitments and trapdoor openings.
//!
//! All group elements live in the order-`q` subgroup of `Z_p*`, all scalars in
//! `Z_q`. A commitment to a pad `k` with blinding `r` is `c = g^r * h^k`.
//! Whoever knows `alpha = log_g h` can open `c` to any other value, which is
//! how correspondents hide a message inside an otherwise honest-looking
//! opening.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::KvFile;

/// 256-bit safe prime `p = 2q + 1`.
const DEFAULT_P_HEX: &str = "c00000000000000000000000000000000000000000000000000000000000a0eb";
/// 255-bit prime order of the quadratic-residue subgroup.
const DEFAULT_Q_HEX: &str = "6000000000000000000000000000000000000000000000000000000000005075";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("modulus p is not prime")]
    ModulusNotPrime,
    #[error("subgroup order q is not prime")]
    OrderNotPrime,
    #[error("q does not divide p - 1")]
    OrderDoesNotDivide,
    #[error("{0} does not generate the order-q subgroup")]
    BadGenerator(&'static str),
    #[error("h is not g^alpha")]
    TrapdoorMismatch,
    #[error("operation requires the trapdoor alpha")]
    MissingTrapdoor,
    #[error("scalar is not reduced modulo q")]
    ScalarOutOfRange,
    #[error("element is not in the order-q subgroup")]
    NotInSubgroup,
    #[error("encoded length {got}, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("parameter file: {0}")]
    Parse(String),
}

/// An integer modulo `q`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(BigUint::zero())
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Lowest 64 bits, handy for toy-group tests and histograms.
    pub fn low_u64(&self) -> u64 {
        self.0.iter_u64_digits().next().unwrap_or(0)
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A Pedersen commitment, an element of the order-`q` subgroup.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Commitment(BigUint);

impl Commitment {
    pub fn value(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.0)
    }
}

/// `(O, s)` such that `g^s * h^O` equals some commitment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opening {
    pub value: Scalar,
    pub blind: Scalar,
}

/// Public group description plus the optional trapdoor `alpha = log_g h`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    #[serde(with = "hex_biguint")]
    p: BigUint,
    #[serde(with = "hex_biguint")]
    q: BigUint,
    #[serde(with = "hex_biguint")]
    g: BigUint,
    #[serde(with = "hex_biguint")]
    h: BigUint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<Scalar>,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("p_bits", &self.p.bits())
            .field("q_bits", &self.q.bits())
            .field("g", &self.g)
            .field("trapdoor", &self.alpha.is_some())
            .finish()
    }
}

impl GroupParams {
    /// Validates and builds public parameters.
    pub fn new(p: BigUint, q: BigUint, g: BigUint, h: BigUint) -> Result<Self, GroupError> {
        let params = GroupParams { p, q, g, h, alpha: None };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters with `h = g^alpha`.
    pub fn with_trapdoor(p: BigUint, q: BigUint, g: BigUint, alpha: Scalar) -> Result<Self, GroupError> {
        if alpha.0 >= q || alpha.is_zero() {
            return Err(GroupError::ScalarOutOfRange);
        }
        let h = g.modpow(&alpha.0, &p);
        let params = GroupParams { p, q, g, h, alpha: Some(alpha) };
        params.validate()?;
        Ok(params)
    }

    /// The order-11 subgroup of `Z_23*` with `g = 2`, `h = 8 = 2^3`.
    pub fn toy() -> Self {
        GroupParams::with_trapdoor(23u32.into(), 11u32.into(), 2u32.into(), Scalar(3u32.into()))
            .expect("toy group is valid")
    }

    /// The built-in 256-bit safe-prime group, `g = 4`, with `h = g^alpha`.
    pub fn default_256(alpha: Scalar) -> Result<Self, GroupError> {
        let (p, q) = default_modulus();
        GroupParams::with_trapdoor(p, q, 4u32.into(), alpha)
    }

    /// The built-in group with `h = g` and no trapdoor, a template for the
    /// dealer, which re-keys `h` before anything is committed.
    pub fn default_256_unkeyed() -> Self {
        let (p, q) = default_modulus();
        GroupParams { p, q, g: 4u32.into(), h: 4u32.into(), alpha: None }
    }

    /// The built-in group with a freshly drawn trapdoor.
    pub fn random_default_256<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let probe = GroupParams::default_256_unkeyed();
        let alpha = probe.random_nonzero_scalar(rng);
        probe.rekeyed(alpha).expect("built-in group is valid")
    }

    /// Re-keys `h` with a fresh trapdoor on the same `(p, q, g)`.
    pub fn rekeyed(&self, alpha: Scalar) -> Result<Self, GroupError> {
        GroupParams::with_trapdoor(self.p.clone(), self.q.clone(), self.g.clone(), alpha)
    }

    pub fn validate(&self) -> Result<(), GroupError> {
        if !is_probable_prime(&self.p) {
            return Err(GroupError::ModulusNotPrime);
        }
        if !is_probable_prime(&self.q) {
            return Err(GroupError::OrderNotPrime);
        }
        if !(&self.p - 1u32).is_multiple_of(&self.q) {
            return Err(GroupError::OrderDoesNotDivide);
        }
        for (name, x) in [("g", &self.g), ("h", &self.h)] {
            if x.is_zero() || x.is_one() || *x >= self.p || !x.modpow(&self.q, &self.p).is_one() {
                return Err(GroupError::BadGenerator(name));
            }
        }
        if let Some(alpha) = &self.alpha {
            if self.g.modpow(&alpha.0, &self.p) != self.h {
                return Err(GroupError::TrapdoorMismatch);
            }
        }
        Ok(())
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn h(&self) -> &BigUint {
        &self.h
    }

    pub fn trapdoor(&self) -> Option<&Scalar> {
        self.alpha.as_ref()
    }

    pub fn has_trapdoor(&self) -> bool {
        self.alpha.is_some()
    }

    /// Copy with the trapdoor stripped.
    pub fn public(&self) -> Self {
        GroupParams { alpha: None, ..self.clone() }
    }

    /// Octets in a fixed-width scalar encoding: `ceil(bits(q) / 8)`.
    pub fn scalar_len(&self) -> usize {
        (self.q.bits() as usize).div_ceil(8)
    }

    /// Octets in a fixed-width element encoding: `ceil(bits(p) / 8)`.
    pub fn element_len(&self) -> usize {
        (self.p.bits() as usize).div_ceil(8)
    }

    // --- scalars -----------------------------------------------------------

    pub fn scalar(&self, v: u64) -> Scalar {
        Scalar(BigUint::from(v) % &self.q)
    }

    pub fn reduce(&self, v: BigUint) -> Scalar {
        Scalar(v % &self.q)
    }

    /// Accepts `v` only if it is already reduced.
    pub fn checked_scalar(&self, v: BigUint) -> Result<Scalar, GroupError> {
        if v < self.q {
            Ok(Scalar(v))
        } else {
            Err(GroupError::ScalarOutOfRange)
        }
    }

    pub fn add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        let s = &a.0 + &b.0;
        Scalar(if s >= self.q { s - &self.q } else { s })
    }

    pub fn sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        if a.0 >= b.0 {
            Scalar(&a.0 - &b.0)
        } else {
            Scalar(&self.q - (&b.0 - &a.0))
        }
    }

    pub fn neg(&self, a: &Scalar) -> Scalar {
        self.sub(&Scalar::zero(), a)
    }

    pub fn mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.q)
    }

    pub fn sum<'a>(&self, items: impl IntoIterator<Item = &'a Scalar>) -> Scalar {
        items.into_iter().fold(Scalar::zero(), |acc, x| self.add(&acc, x))
    }

    /// Uniform scalar in `[0, q)`.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        self.sample_scalar(|buf| rng.fill_bytes(buf))
    }

    /// Uniform scalar in `[1, q)`.
    pub fn random_nonzero_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        loop {
            let s = self.random_scalar(rng);
            if !s.is_zero() {
                return s;
            }
        }
    }

    /// Rejection-samples a scalar from a stream of uniform bytes. Each call of
    /// `fill` must produce fresh bytes.
    pub fn sample_scalar(&self, mut fill: impl FnMut(&mut [u8])) -> Scalar {
        let len = self.scalar_len();
        let excess = len * 8 - self.q.bits() as usize;
        let mask = 0xffu8 >> excess;
        let mut buf = vec![0u8; len];
        loop {
            fill(&mut buf);
            buf[0] &= mask;
            let v = BigUint::from_bytes_be(&buf);
            if v < self.q {
                return Scalar(v);
            }
        }
    }

    pub fn encode_scalar(&self, s: &Scalar) -> Vec<u8> {
        left_pad(&s.0.to_bytes_be(), self.scalar_len())
    }

    pub fn decode_scalar(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        if bytes.len() != self.scalar_len() {
            return Err(GroupError::BadLength { got: bytes.len(), expected: self.scalar_len() });
        }
        self.checked_scalar(BigUint::from_bytes_be(bytes))
    }

    // --- elements ----------------------------------------------------------

    pub fn encode_element(&self, c: &Commitment) -> Vec<u8> {
        left_pad(&c.0.to_bytes_be(), self.element_len())
    }

    pub fn decode_element(&self, bytes: &[u8]) -> Result<Commitment, GroupError> {
        if bytes.len() != self.element_len() {
            return Err(GroupError::BadLength { got: bytes.len(), expected: self.element_len() });
        }
        self.checked_element(BigUint::from_bytes_be(bytes))
    }

    pub fn checked_element(&self, v: BigUint) -> Result<Commitment, GroupError> {
        if v.is_zero() || v >= self.p || !v.modpow(&self.q, &self.p).is_one() {
            return Err(GroupError::NotInSubgroup);
        }
        Ok(Commitment(v))
    }

    // --- commitments -------------------------------------------------------

    /// `g^r * h^k mod p`.
    pub fn commit(&self, k: &Scalar, r: &Scalar) -> Commitment {
        let gr = self.g.modpow(&r.0, &self.p);
        let hk = self.h.modpow(&k.0, &self.p);
        Commitment((gr * hk) % &self.p)
    }

    pub fn commit_opening(&self, opening: &Opening) -> Commitment {
        self.commit(&opening.value, &opening.blind)
    }

    /// True iff `g^s * h^O == c (mod p)`.
    pub fn verify_opening(&self, c: &Commitment, value: &Scalar, blind: &Scalar) -> bool {
        self.commit(value, blind) == *c
    }

    /// Opens `commit(k, r)` to `k + m` instead: returns `(k + m, r - m * alpha)`.
    pub fn equivocate(&self, k: &Scalar, r: &Scalar, m: &Scalar) -> Result<Opening, GroupError> {
        let alpha = self.alpha.as_ref().ok_or(GroupError::MissingTrapdoor)?;
        Ok(Opening {
            value: self.add(k, m),
            blind: self.sub(r, &self.mul(m, alpha)),
        })
    }

    /// Product of two commitments; commits to the sums of the exponents.
    pub fn combine(&self, a: &Commitment, b: &Commitment) -> Commitment {
        Commitment((&a.0 * &b.0) % &self.p)
    }

    // --- parameter files ---------------------------------------------------

    /// Key-value text with `p`, `q`, `g`, `h` and optionally `alpha`.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("p = 0x{}\n", self.p.to_str_radix(16)));
        out.push_str(&format!("q = 0x{}\n", self.q.to_str_radix(16)));
        out.push_str(&format!("g = 0x{}\n", self.g.to_str_radix(16)));
        out.push_str(&format!("h = 0x{}\n", self.h.to_str_radix(16)));
        if let Some(a) = &self.alpha {
            out.push_str(&format!("alpha = 0x{}\n", a.0.to_str_radix(16)));
        }
        out
    }

    pub fn from_kv_str(text: &str) -> Result<Self, GroupError> {
        let kv = KvFile::parse(text).map_err(|e| GroupError::Parse(e.to_string()))?;
        let field = |name: &str| -> Result<BigUint, GroupError> {
            let raw = kv.get(name).ok_or_else(|| GroupError::Parse(format!("missing field `{name}`")))?;
            parse_biguint(raw).ok_or_else(|| GroupError::Parse(format!("bad integer for `{name}`: {raw}")))
        };
        let (p, q, g, h) = (field("p")?, field("q")?, field("g")?, field("h")?);
        let alpha = match kv.get("alpha") {
            Some(raw) => Some(Scalar(
                parse_biguint(raw).ok_or_else(|| GroupError::Parse(format!("bad integer for `alpha`: {raw}")))?,
            )),
            None => None,
        };
        if let Some(extra) = kv.keys().find(|k| !["p", "q", "g", "h", "alpha"].contains(k)) {
            return Err(GroupError::Parse(format!("unknown field `{extra}`")));
        }
        let params = GroupParams { p, q, g, h, alpha };
        params.validate()?;
        Ok(params)
    }
}

pub(crate) fn default_modulus() -> (BigUint, BigUint) {
    (
        BigUint::parse_bytes(DEFAULT_P_HEX.as_bytes(), 16).unwrap(),
        BigUint::parse_bytes(DEFAULT_Q_HEX.as_bytes(), 16).unwrap(),
    )
}

/// Decimal, or hexadecimal with a `0x` prefix.
pub fn parse_biguint(raw: &str) -> Option<BigUint> {
    let raw = raw.trim();
    match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
        Some(hex) => BigUint::parse_bytes(hex.as_bytes(), 16),
        None => BigUint::parse_bytes(raw.as_bytes(), 10),
    }
}

fn left_pad(bytes: &[u8], width: usize) -> Vec<u8> {
    let mut out = vec![0u8; width.saturating_sub(bytes.len())];
    out.extend_from_slice(bytes);
    out
}

/// Miller-Rabin with the first twelve prime bases. Deterministic below
/// 3.3e24, probabilistic above.
fn is_probable_prime(n: &BigUint) -> bool {
    const BASES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for b in BASES {
        let b = BigUint::from(b);
        if *n == b {
            return true;
        }
        if (n % &b).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let shift = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> shift;
    'bases: for b in BASES {
        let mut x = BigUint::from(b).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..shift {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

// Scalars and commitments travel through JSON as hex strings.
impl Serialize for Scalar {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_biguint::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        hex_biguint::deserialize(d).map(Scalar)
    }
}

impl Serialize for Commitment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        hex_biguint::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Commitment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        hex_biguint::deserialize(d).map(Commitment)
    }
}

mod hex_biguint {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(16))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 16).ok_or_else(|| D::Error::custom(format!("bad hex integer: {s}")))
    }
}
