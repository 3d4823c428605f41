//! End-to-end verifiable vote-by-mail.
//!
//! Two ballot-auditing schemes share one cryptographic core:
//!
//! * **RemoteVote** prints two encrypted ballots side by side and lets a
//!   public beacon decide which column is opened for audit.
//! * **SAFE Vote** hides the ballot seed under a scratch-off panel and prints
//!   the per-cell commitment randomness in an encrypted QR payload, so a voter
//!   can regenerate every code offline.
//!
//! Both publish every ballot's commitments before the election, tally in two
//! stages (per-ballot homomorphic sum, then a verifiable mix and opening) and
//! leave a hash-chained bulletin board that [`verify::verify_election`] checks
//! without any authority secrets.
//!
//! Arithmetic is generic over [`algebra::Backend`]; the protocol layer uses
//! the transparent 61-bit backend through the aliases below.

pub mod algebra;
pub mod authority;
pub mod ballot;
pub mod board;
pub mod cce;
pub mod disputes;
pub mod elgamal;
pub mod hash;
pub mod manifest;
pub mod remotevote;
pub mod safevote;
pub mod tally;
pub mod verify;

#[cfg(test)]
mod testutil;

pub use hash::Bytes32;

/// Backend used by the protocol layer.
pub type Group = algebra::Dlog<{ algebra::MERSENNE_61 }>;
pub type Scalar = <Group as algebra::Backend>::Scalar;
pub type Element = <Group as algebra::Backend>::Element;
pub type Params = algebra::GroupParams<Group>;
pub type Cell = cce::Cell<Group>;
pub type Ciphertext = elgamal::Ciphertext<Group>;
pub type TrusteeKeys = elgamal::TrusteeKeys<Group>;
pub type TrusteeShare = elgamal::TrusteeShare<Group>;
pub type DecryptionShare = elgamal::DecryptionShare<Group>;
