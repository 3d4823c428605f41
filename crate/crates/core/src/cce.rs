//! Commitment-consistent encryption cells.
//!
//! A cell pairs a perfectly hiding Pedersen commitment `C = g2^s · h2^m` in G2
//! with an ElGamal encryption of `g1^s` in G1. Commitments are what gets
//! published, summed and mixed; after mixing, the ciphertext is threshold
//! decrypted to `S = g1^s` and the commitment is opened by finding the `m` with
//!
//! ```text
//! e(g1, C) = e(S, g2) · e(g1, h2)^m
//! ```

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraError, Backend, GroupElement, GroupParams, ScalarField};
use crate::elgamal::{encrypt, Ciphertext};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CceError {
    #[error("no admissible value opens the commitment")]
    InvalidVote,
    #[error("alternate openings need the discrete log of h2 (transparent backend only)")]
    NotTransparent,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// The authority's private side of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Opening<B: Backend> {
    pub s: B::Scalar,
    pub m: u64,
    pub r: B::Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Cell<B: Backend> {
    pub commitment: B::Element,
    pub ciphertext: Ciphertext<B>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opening: Option<Opening<B>>,
}

/// A commitment opened against a decrypted `g1^s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OpenedValue<B: Backend> {
    pub m: u64,
    pub s_elem: B::Element,
}

/// `(g2^s · h2^m, Enc(g1^s; r))`.
pub fn commit_encrypt<B: Backend>(
    params: &GroupParams<B>,
    pk: &B::Element,
    m: u64,
    s: B::Scalar,
    r: B::Scalar,
) -> Cell<B> {
    let commitment = params.g2.pow(&s) * params.h2.pow(&B::Scalar::from_u64(m));
    let ciphertext = encrypt(params, pk, &params.g1.pow(&s), &r).expect("g1^s lies in G1");
    Cell { commitment, ciphertext, opening: Some(Opening { s, m, r }) }
}

impl<B: Backend> Cell<B> {
    /// Cell with commitment and ciphertext both the identity; neutral for [`Cell::add`].
    pub fn identity() -> Self {
        Cell {
            commitment: B::identity(crate::algebra::GroupId::G2),
            ciphertext: Ciphertext::identity(),
            opening: Some(Opening { s: B::Scalar::zero(), m: 0, r: B::Scalar::zero() }),
        }
    }

    /// Componentwise product. Openings add when both are known.
    pub fn add(&self, other: &Self) -> Self {
        let opening = match (&self.opening, &other.opening) {
            (Some(a), Some(b)) => Some(Opening { s: a.s + b.s, m: a.m + b.m, r: a.r + b.r }),
            _ => None,
        };
        Cell {
            commitment: self.commitment * other.commitment,
            ciphertext: self.ciphertext.combine(&other.ciphertext),
            opening,
        }
    }

    /// Multiplies in a fresh commitment to zero and a matching encryption; `m` is unchanged.
    pub fn rerandomize(&self, params: &GroupParams<B>, pk: &B::Element, s: B::Scalar, r: B::Scalar) -> Self {
        let delta = commit_encrypt(params, pk, 0, s, r);
        self.add(&delta)
    }

    /// The publicly visible face.
    pub fn public(&self) -> B::Element {
        self.commitment
    }

    pub fn without_opening(&self) -> Self {
        Cell { opening: None, ..*self }
    }
}

/// Sum of an iterator of cells.
pub fn sum<'a, B: Backend>(cells: impl IntoIterator<Item = &'a Cell<B>>) -> Cell<B> {
    cells.into_iter().fold(Cell::identity(), |acc, c| acc.add(c))
}

/// Commitment-side re-randomization, usable on public faces alone.
pub fn rerandomize_commitment<B: Backend>(params: &GroupParams<B>, commitment: &B::Element, s: &B::Scalar) -> B::Element {
    *commitment * params.g2.pow(s)
}

/// Finds the unique admissible `m` consistent with `commitment` and `S = g1^s`.
pub fn open<B: Backend>(
    params: &GroupParams<B>,
    commitment: &B::Element,
    s_elem: &B::Element,
    valid_set: &[u64],
) -> Result<OpenedValue<B>, CceError> {
    let lhs = params.pairing(&params.g1, commitment)?;
    let base = params.pairing(s_elem, &params.g2)?;
    let step = params.pairing(&params.g1, &params.h2)?;
    valid_set
        .iter()
        .find(|&&m| lhs == base * step.pow(&B::Scalar::from_u64(m)))
        .map(|&m| OpenedValue { m, s_elem: *s_elem })
        .ok_or(CceError::InvalidVote)
}

/// Whether `m` opens `commitment` against `S`.
pub fn check_opening<B: Backend>(
    params: &GroupParams<B>,
    commitment: &B::Element,
    s_elem: &B::Element,
    m: u64,
) -> Result<bool, CceError> {
    Ok(open(params, commitment, s_elem, &[m]).is_ok())
}

/// Returns `s'` with `g2^{s'} · h2^{m'} = commitment`, showing that every
/// message is consistent with a published commitment.
pub fn alternate_opening<B: Backend>(
    params: &GroupParams<B>,
    commitment: &B::Element,
    m_alt: u64,
) -> Result<B::Scalar, CceError> {
    let log_c = B::discrete_log(commitment).ok_or(CceError::NotTransparent)?;
    let log_h = B::discrete_log(&params.h2).ok_or(CceError::NotTransparent)?;
    let log_g = B::discrete_log(&params.g2).ok_or(CceError::NotTransparent)?;
    let inv_g = log_g.invert().ok_or(CceError::NotTransparent)?;
    Ok((log_c - log_h * B::Scalar::from_u64(m_alt)) * inv_g)
}
