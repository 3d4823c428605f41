//! t-of-n threshold ElGamal over G1 with verifiable partial decryption.
//!
//! Key generation uses a trusted dealer: the secret is the constant term of a
//! random degree `t − 1` polynomial, trustee `i` receives its value at `i`, and
//! the dealer publishes Feldman commitments to the coefficients. Each
//! decryption share carries a Chaum–Pedersen proof that it was computed with
//! the same exponent as the trustee's public commitment.

use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algebra::{scalar_from_hash, AlgebraError, Backend, GroupElement, GroupId, GroupParams, ScalarField};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ElGamalError {
    #[error("threshold must satisfy 1 <= t <= n (t = {t}, n = {n})")]
    BadThreshold { t: u32, n: u32 },
    #[error("plaintext must be a G1 element")]
    NotInG1,
    #[error("need {need} decryption shares, got {have}")]
    TooFewShares { have: usize, need: usize },
    #[error("decryption share from trustee {0} failed verification")]
    InvalidShare(u32),
    #[error("duplicate decryption share index {0}")]
    DuplicateShare(u32),
    #[error("unknown trustee index {0}")]
    UnknownTrustee(u32),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// `(g1^r, pk^r · M)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Ciphertext<B: Backend> {
    pub c1: B::Element,
    pub c2: B::Element,
}

impl<B: Backend> Ciphertext<B> {
    /// Encryption of the identity under zero randomness.
    pub fn identity() -> Self {
        Ciphertext { c1: B::identity(GroupId::G1), c2: B::identity(GroupId::G1) }
    }

    /// Componentwise product: encrypts the product of plaintexts.
    pub fn combine(&self, other: &Self) -> Self {
        Ciphertext { c1: self.c1 * other.c1, c2: self.c2 * other.c2 }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.c1.encode();
        out.extend(self.c2.encode());
        out
    }
}

/// A trustee's Shamir share of the election secret.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrusteeShare<B: Backend> {
    pub index: u32,
    pub secret: B::Scalar,
    pub public_commit: B::Element,
}

/// Everything public about the trustee key set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TrusteeKeys<B: Backend> {
    pub threshold: u32,
    pub trustees: u32,
    pub pk: B::Element,
    /// Feldman commitments `g1^{a_j}` to the dealer polynomial.
    pub coefficient_commitments: Vec<B::Element>,
    /// `g1^{x_i}` for trustee `i = 1..n`, in index order.
    pub public_commits: Vec<B::Element>,
}

impl<B: Backend> TrusteeKeys<B> {
    pub fn public_commit(&self, index: u32) -> Option<&B::Element> {
        index.checked_sub(1).and_then(|i| self.public_commits.get(i as usize))
    }

    /// Checks each public commitment against the Feldman coefficient commitments.
    pub fn verify_dealing(&self) -> bool {
        if self.coefficient_commitments.first() != Some(&self.pk) {
            return false;
        }
        self.public_commits.iter().enumerate().all(|(i, pc)| {
            let x = B::Scalar::from_u64(i as u64 + 1);
            let mut xp = B::Scalar::one();
            let mut acc = B::identity(GroupId::G1);
            for c in &self.coefficient_commitments {
                acc = acc * c.pow(&xp);
                xp = xp * x;
            }
            acc == *pc
        })
    }
}

/// Chaum–Pedersen proof that `log_g1(public_commit) = log_c1(share)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EqDlogProof<B: Backend> {
    pub commit_g: B::Element,
    pub commit_c: B::Element,
    pub challenge: B::Scalar,
    pub response: B::Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DecryptionShare<B: Backend> {
    pub index: u32,
    pub share: B::Element,
    pub proof: EqDlogProof<B>,
}

/// Trusted-dealer Shamir sharing of a fresh secret.
pub fn keygen<B: Backend, R: RngCore + ?Sized>(
    params: &GroupParams<B>,
    t: u32,
    n: u32,
    rng: &mut R,
) -> Result<(TrusteeKeys<B>, Vec<TrusteeShare<B>>), ElGamalError> {
    if t == 0 || t > n {
        return Err(ElGamalError::BadThreshold { t, n });
    }
    let coeffs: Vec<B::Scalar> = (0..t).map(|_| B::Scalar::random(rng)).collect();
    let shares: Vec<TrusteeShare<B>> = (1..=n)
        .map(|i| {
            let secret = eval_poly::<B>(&coeffs, B::Scalar::from_u64(i as u64));
            TrusteeShare { index: i, secret, public_commit: params.g1.pow(&secret) }
        })
        .collect();
    let keys = TrusteeKeys {
        threshold: t,
        trustees: n,
        pk: params.g1.pow(&coeffs[0]),
        coefficient_commitments: coeffs.iter().map(|a| params.g1.pow(a)).collect(),
        public_commits: shares.iter().map(|s| s.public_commit).collect(),
    };
    Ok((keys, shares))
}

fn eval_poly<B: Backend>(coeffs: &[B::Scalar], x: B::Scalar) -> B::Scalar {
    coeffs.iter().rev().fold(B::Scalar::zero(), |acc, c| acc * x + *c)
}

/// `(g1^r, pk^r · M)`. The randomness is always supplied by the caller.
pub fn encrypt<B: Backend>(
    params: &GroupParams<B>,
    pk: &B::Element,
    message: &B::Element,
    r: &B::Scalar,
) -> Result<Ciphertext<B>, ElGamalError> {
    if message.group() != GroupId::G1 {
        return Err(ElGamalError::NotInG1);
    }
    Ok(Ciphertext { c1: params.g1.pow(r), c2: pk.pow(r) * *message })
}

/// Single-key decryption, used by tests and by the dealer-side oracle.
pub fn decrypt_with_secret<B: Backend>(ct: &Ciphertext<B>, secret: &B::Scalar) -> B::Element {
    ct.c2.div(&ct.c1.pow(secret))
}

fn cp_transcript<B: Backend>(
    params: &GroupParams<B>,
    public_commit: &B::Element,
    c1: &B::Element,
    share: &B::Element,
    commit_g: &B::Element,
    commit_c: &B::Element,
) -> Vec<u8> {
    [&params.g1, public_commit, c1, share, commit_g, commit_c]
        .iter()
        .flat_map(|e| e.encode())
        .collect()
}

/// `c1^{x_i}` with a non-interactive equal-discrete-log proof.
///
/// The proof nonce is derived from the secret and the ciphertext, so the
/// transcript is a pure function of its inputs.
pub fn partial_decrypt<B: Backend>(
    params: &GroupParams<B>,
    share: &TrusteeShare<B>,
    ct: &Ciphertext<B>,
) -> DecryptionShare<B> {
    let value = ct.c1.pow(&share.secret);
    let mut nonce_input = share.secret.to_bytes();
    nonce_input.extend(share.index.to_be_bytes());
    nonce_input.extend(ct.encode());
    let w = scalar_from_hash::<B>("cpdec/nonce", &nonce_input);
    let commit_g = params.g1.pow(&w);
    let commit_c = ct.c1.pow(&w);
    let challenge = scalar_from_hash::<B>(
        "cpdec",
        &cp_transcript(params, &share.public_commit, &ct.c1, &value, &commit_g, &commit_c),
    );
    DecryptionShare {
        index: share.index,
        share: value,
        proof: EqDlogProof { commit_g, commit_c, challenge, response: w + challenge * share.secret },
    }
}

pub fn verify_share<B: Backend>(
    params: &GroupParams<B>,
    public_commit: &B::Element,
    ct: &Ciphertext<B>,
    ds: &DecryptionShare<B>,
) -> bool {
    let p = &ds.proof;
    let expected = scalar_from_hash::<B>(
        "cpdec",
        &cp_transcript(params, public_commit, &ct.c1, &ds.share, &p.commit_g, &p.commit_c),
    );
    expected == p.challenge
        && params.g1.pow(&p.response) == p.commit_g * public_commit.pow(&p.challenge)
        && ct.c1.pow(&p.response) == p.commit_c * ds.share.pow(&p.challenge)
}

/// Lagrange coefficients at zero for the given distinct, non-zero indices.
pub fn lagrange_at_zero<B: Backend>(indices: &[u32]) -> Vec<B::Scalar> {
    indices
        .iter()
        .map(|&i| {
            let xi = B::Scalar::from_u64(i as u64);
            let (num, den) = indices.iter().filter(|&&j| j != i).fold(
                (B::Scalar::one(), B::Scalar::one()),
                |(num, den), &j| {
                    let xj = B::Scalar::from_u64(j as u64);
                    (num * xj, den * (xj - xi))
                },
            );
            num * den.invert().expect("indices are distinct")
        })
        .collect()
}

/// Verifies every share and recovers `M = c2 / c1^x` from any `t` of them.
pub fn combine<B: Backend>(
    params: &GroupParams<B>,
    keys: &TrusteeKeys<B>,
    ct: &Ciphertext<B>,
    shares: &[DecryptionShare<B>],
) -> Result<B::Element, ElGamalError> {
    let mut seen = std::collections::BTreeSet::new();
    for ds in shares {
        if !seen.insert(ds.index) {
            return Err(ElGamalError::DuplicateShare(ds.index));
        }
        let pc = keys.public_commit(ds.index).ok_or(ElGamalError::UnknownTrustee(ds.index))?;
        if !verify_share(params, pc, ct, ds) {
            return Err(ElGamalError::InvalidShare(ds.index));
        }
    }
    let need = keys.threshold as usize;
    if shares.len() < need {
        return Err(ElGamalError::TooFewShares { have: shares.len(), need });
    }
    let used = &shares[..need];
    let indices: Vec<u32> = used.iter().map(|d| d.index).collect();
    let lambdas = lagrange_at_zero::<B>(&indices);
    let blind = used
        .iter()
        .zip(&lambdas)
        .fold(B::identity(GroupId::G1), |acc, (ds, l)| acc * ds.share.pow(l));
    Ok(ct.c2.div(&blind))
}
