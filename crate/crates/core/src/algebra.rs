//! Prime-order bilinear group triple `(G1, G2, GT)` behind the [`Backend`] trait.
//!
//! The only backend shipped is [`Dlog`], a *transparent* group in which every
//! element is represented by its discrete logarithm modulo a prime `Q`:
//! the group operation is addition of logs, exponentiation is multiplication
//! and the pairing multiplies the two logs. It offers no security whatsoever,
//! but it is algebraically exact, which lets tests check every identity the
//! protocols rely on against an independent integer oracle. A pairing-friendly
//! curve can be slotted in by implementing the same three traits.

use std::fmt;
use std::hash::Hash;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};
use rand::{Rng, RngCore};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::hash::tagged_hash;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlgebraError {
    #[error("group mismatch: expected {expected:?}, found {found:?}")]
    GroupMismatch { expected: GroupId, found: GroupId },
    #[error("invalid encoding: {0}")]
    Encoding(String),
    #[error("operation requires the transparent backend")]
    NotTransparent,
    #[error("group order {0} is not prime")]
    NotPrime(u64),
    #[error("backend mismatch: parameters are for {found}, expected {expected}")]
    BackendMismatch { expected: String, found: String },
}

/// Which of the three groups an element lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    G1,
    G2,
    GT,
}

impl GroupId {
    fn code(self) -> u8 {
        match self {
            GroupId::G1 => 1,
            GroupId::G2 => 2,
            GroupId::GT => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(GroupId::G1),
            2 => Some(GroupId::G2),
            3 => Some(GroupId::GT),
            _ => None,
        }
    }
}

/// Arithmetic in `Z_q` for the group order `q`.
pub trait ScalarField:
    Copy
    + fmt::Debug
    + Eq
    + Hash
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    fn from_u64(v: u64) -> Self;
    /// Reduces a 256-bit big-endian integer modulo `q`.
    fn from_wide_bytes(bytes: &[u8; 32]) -> Self;
    fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self;
    fn invert(&self) -> Option<Self>;
    fn to_bytes(&self) -> Vec<u8>;
    fn from_bytes(bytes: &[u8]) -> Result<Self, AlgebraError>;

    fn pow_u64(&self, mut e: u64) -> Self {
        let mut base = *self;
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

/// An element of one of the three groups, written multiplicatively.
///
/// `Mul` between elements of different groups is a programming error and panics.
pub trait GroupElement:
    Copy + fmt::Debug + Eq + Hash + Mul<Output = Self> + Send + Sync + Serialize + DeserializeOwned + 'static
{
    type Scalar: ScalarField;

    fn group(&self) -> GroupId;
    fn pow(&self, e: &Self::Scalar) -> Self;
    fn invert(&self) -> Self;
    fn is_identity(&self) -> bool;
    /// Canonical encoding: backend/group tag byte followed by the big-endian value.
    fn encode(&self) -> Vec<u8>;

    fn div(&self, other: &Self) -> Self {
        *self * other.invert()
    }
}

/// A pairing-friendly group triple of prime order.
pub trait Backend: Copy + fmt::Debug + Eq + Send + Sync + 'static {
    const NAME: &'static str;

    type Scalar: ScalarField;
    type Element: GroupElement<Scalar = Self::Scalar>;

    /// Group order as a big-endian byte string.
    fn order_bytes() -> Vec<u8>;
    fn generator(group: GroupId) -> Self::Element;
    fn identity(group: GroupId) -> Self::Element;
    fn pairing(a: &Self::Element, b: &Self::Element) -> Result<Self::Element, AlgebraError>;
    fn decode_element(bytes: &[u8]) -> Result<Self::Element, AlgebraError>;
    /// Runtime sanity checks on the compiled-in parameters.
    fn validate() -> Result<(), AlgebraError>;

    /// Discrete log base the group generator; only transparent backends know it.
    fn discrete_log(_e: &Self::Element) -> Option<Self::Scalar> {
        None
    }
}

/// `base^e`.
pub fn exp<E: GroupElement>(base: &E, e: &E::Scalar) -> E {
    base.pow(e)
}

/// Group product that reports a mismatch instead of panicking.
pub fn checked_mul<E: GroupElement>(a: &E, b: &E) -> Result<E, AlgebraError> {
    if a.group() != b.group() {
        return Err(AlgebraError::GroupMismatch { expected: a.group(), found: b.group() });
    }
    Ok(*a * *b)
}

/// Deterministic hash onto `[0, q)`. Distinct tags yield independent functions.
pub fn scalar_from_hash<B: Backend>(domain_tag: &str, data: &[u8]) -> B::Scalar {
    B::Scalar::from_wide_bytes(&tagged_hash(domain_tag, &[data]))
}

/// Public group parameters: generators `g1 ∈ G1`, `g2 ∈ G2` and the second
/// commitment base `h2 ∈ G2`.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GroupParams<B: Backend> {
    pub backend: String,
    #[serde(with = "crate::hash::hex_bytes")]
    pub order: Vec<u8>,
    pub g1: B::Element,
    pub g2: B::Element,
    pub h2: B::Element,
}

impl<B: Backend> fmt::Debug for GroupParams<B> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("backend", &self.backend)
            .field("order", &hex::encode(&self.order))
            .field("h2", &self.h2)
            .finish()
    }
}

impl<B: Backend> GroupParams<B> {
    /// Fresh parameters with `h2 = g2^x` for a random non-zero `x`.
    pub fn setup<R: RngCore + ?Sized>(rng: &mut R) -> Result<Self, AlgebraError> {
        B::validate()?;
        let g2 = B::generator(GroupId::G2);
        let mut x = B::Scalar::random(rng);
        while x.is_zero() || x.is_one() {
            x = B::Scalar::random(rng);
        }
        Ok(Self::with_h2(g2.pow(&x)))
    }

    pub fn with_h2(h2: B::Element) -> Self {
        GroupParams {
            backend: B::NAME.to_string(),
            order: B::order_bytes(),
            g1: B::generator(GroupId::G1),
            g2: B::generator(GroupId::G2),
            h2,
        }
    }

    /// Checks that deserialized parameters belong to the compiled backend.
    pub fn validate(&self) -> Result<(), AlgebraError> {
        B::validate()?;
        if self.backend != B::NAME || self.order != B::order_bytes() {
            return Err(AlgebraError::BackendMismatch {
                expected: B::NAME.to_string(),
                found: self.backend.clone(),
            });
        }
        if self.g1 != B::generator(GroupId::G1) || self.g2 != B::generator(GroupId::G2) {
            return Err(AlgebraError::Encoding("non-standard generators".into()));
        }
        if self.h2.group() != GroupId::G2 || self.h2.is_identity() {
            return Err(AlgebraError::Encoding("h2 must be a non-identity G2 element".into()));
        }
        Ok(())
    }

    pub fn pairing(&self, a: &B::Element, b: &B::Element) -> Result<B::Element, AlgebraError> {
        B::pairing(a, b)
    }

    /// `e(g1, g2)`, the generator of GT.
    pub fn gt(&self) -> B::Element {
        B::generator(GroupId::GT)
    }
}

// ---------------------------------------------------------------------------
// Transparent backend
// ---------------------------------------------------------------------------

/// The Mersenne prime 2^61 − 1, the default group order.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Transparent group triple of prime order `Q < 2^63`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dlog<const Q: u64>;

/// Residue modulo `Q`, always reduced.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Zq<const Q: u64>(u64);

/// A transparent group element: its group and its discrete log.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct DlogElement<const Q: u64> {
    group: GroupId,
    log: Zq<Q>,
}

const DLOG_TAG: u8 = 0x10;

impl<const Q: u64> Zq<Q> {
    pub fn new(v: u64) -> Self {
        Zq(v % Q)
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

impl<const Q: u64> fmt::Debug for Zq<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<const Q: u64> Add for Zq<Q> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Zq(((self.0 as u128 + rhs.0 as u128) % Q as u128) as u64)
    }
}

impl<const Q: u64> Sub for Zq<Q> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Zq(((self.0 as u128 + Q as u128 - rhs.0 as u128) % Q as u128) as u64)
    }
}

impl<const Q: u64> Mul for Zq<Q> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Zq(mul_mod(self.0, rhs.0, Q))
    }
}

impl<const Q: u64> Neg for Zq<Q> {
    type Output = Self;
    fn neg(self) -> Self {
        Zq(0) - self
    }
}

impl<const Q: u64> Zero for Zq<Q> {
    fn zero() -> Self {
        Zq(0)
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl<const Q: u64> One for Zq<Q> {
    fn one() -> Self {
        Zq(1 % Q)
    }
}

impl<const Q: u64> ScalarField for Zq<Q> {
    fn from_u64(v: u64) -> Self {
        Zq::new(v)
    }

    fn from_wide_bytes(bytes: &[u8; 32]) -> Self {
        let q = Q as u128;
        let acc = bytes.iter().fold(0u128, |acc, &b| ((acc << 8) | b as u128) % q);
        Zq(acc as u64)
    }

    fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Zq(rng.gen_range(0..Q))
    }

    fn invert(&self) -> Option<Self> {
        if self.0 == 0 {
            None
        } else {
            Some(self.pow_u64(Q - 2))
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.to_be_bytes().to_vec()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, AlgebraError> {
        let raw: [u8; 8] = bytes
            .try_into()
            .map_err(|_| AlgebraError::Encoding(format!("scalar must be 8 bytes, got {}", bytes.len())))?;
        let v = u64::from_be_bytes(raw);
        if v >= Q {
            return Err(AlgebraError::Encoding("scalar not reduced".into()));
        }
        Ok(Zq(v))
    }
}

impl<const Q: u64> DlogElement<Q> {
    /// Element of `group` whose discrete log is `log`.
    pub fn from_log(group: GroupId, log: u64) -> Self {
        DlogElement { group, log: Zq::new(log) }
    }

    pub fn log(&self) -> Zq<Q> {
        self.log
    }
}

impl<const Q: u64> fmt::Debug for DlogElement<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}[log {}]", self.group, self.log.0)
    }
}

impl<const Q: u64> Mul for DlogElement<Q> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        assert_eq!(self.group, rhs.group, "group product across different groups");
        DlogElement { group: self.group, log: self.log + rhs.log }
    }
}

impl<const Q: u64> GroupElement for DlogElement<Q> {
    type Scalar = Zq<Q>;

    fn group(&self) -> GroupId {
        self.group
    }

    fn pow(&self, e: &Zq<Q>) -> Self {
        DlogElement { group: self.group, log: self.log * *e }
    }

    fn invert(&self) -> Self {
        DlogElement { group: self.group, log: -self.log }
    }

    fn is_identity(&self) -> bool {
        self.log.is_zero()
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9);
        out.push(DLOG_TAG | self.group.code());
        out.extend_from_slice(&self.log.0.to_be_bytes());
        out
    }
}

impl<const Q: u64> Backend for Dlog<Q> {
    const NAME: &'static str = "transparent-dlog";

    type Scalar = Zq<Q>;
    type Element = DlogElement<Q>;

    fn order_bytes() -> Vec<u8> {
        Q.to_be_bytes().to_vec()
    }

    fn generator(group: GroupId) -> Self::Element {
        DlogElement::from_log(group, 1)
    }

    fn identity(group: GroupId) -> Self::Element {
        DlogElement::from_log(group, 0)
    }

    fn pairing(a: &Self::Element, b: &Self::Element) -> Result<Self::Element, AlgebraError> {
        if a.group != GroupId::G1 {
            return Err(AlgebraError::GroupMismatch { expected: GroupId::G1, found: a.group });
        }
        if b.group != GroupId::G2 {
            return Err(AlgebraError::GroupMismatch { expected: GroupId::G2, found: b.group });
        }
        Ok(DlogElement { group: GroupId::GT, log: a.log * b.log })
    }

    fn decode_element(bytes: &[u8]) -> Result<Self::Element, AlgebraError> {
        if bytes.len() != 9 {
            return Err(AlgebraError::Encoding(format!("element must be 9 bytes, got {}", bytes.len())));
        }
        if bytes[0] & 0xf0 != DLOG_TAG {
            return Err(AlgebraError::Encoding(format!("unknown backend tag {:#04x}", bytes[0])));
        }
        let group = GroupId::from_code(bytes[0] & 0x0f)
            .ok_or_else(|| AlgebraError::Encoding(format!("unknown group tag {:#04x}", bytes[0])))?;
        let log = Zq::from_bytes(&bytes[1..])?;
        Ok(DlogElement { group, log })
    }

    fn validate() -> Result<(), AlgebraError> {
        if Q >= 1 << 63 || !is_prime(Q) {
            return Err(AlgebraError::NotPrime(Q));
        }
        Ok(())
    }

    fn discrete_log(e: &Self::Element) -> Option<Self::Scalar> {
        Some(e.log)
    }
}

impl<const Q: u64> Serialize for Zq<Q> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de, const Q: u64> Deserialize<'de> for Zq<Q> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
        Zq::from_bytes(&raw).map_err(serde::de::Error::custom)
    }
}

impl<const Q: u64> Serialize for DlogElement<Q> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.encode()))
    }
}

impl<'de, const Q: u64> Deserialize<'de> for DlogElement<Q> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
        Dlog::<Q>::decode_element(&raw).map_err(serde::de::Error::custom)
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin, exact for all `u64`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for p in WITNESSES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
