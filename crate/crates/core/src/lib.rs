//! Deterministic simulator for credential-backed real estate transfers.
//!
//! The crate wires together a self-sovereign identity layer (credentials,
//! presentations, context-derived identities), a hash-chained registry, a
//! content-addressed document store, and the capability/transfer contract
//! pair that runs a property sale. Everything runs in-process on a logical
//! clock, so a scenario replays to the same bytes every time.

use serde::{Deserialize, Serialize};

pub mod codec;
pub mod contracts;
pub mod credential;
pub mod crypto;
pub mod issuance;
pub mod mnemonic;
pub mod registry;
pub mod scenario;
pub mod store;

pub use credential::{
    ContextIdentity, CredentialSchema, LinkageProof, Presentation, VerifiableCredential, Wallet,
};
pub use crypto::{digest, identity_digest, keypair_from_seed, DigestId, KeyPair, PublicKey, Signature, Signer};
pub use mnemonic::MnemonicPhrase;
pub use registry::{AnchorChain, AnchorKind, Genesis, LedgerAnchor, Resolution, ResolutionStatus};

/// Logical time. Only scripted events advance it.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Tick(pub u64);

impl Tick {
    pub fn saturating_sub(self, n: u64) -> Tick {
        Tick(self.0.saturating_sub(n))
    }

    pub fn plus(self, n: u64) -> Tick {
        Tick(self.0.saturating_add(n))
    }
}

impl std::fmt::Display for Tick {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// A map position as signed fixed-point microdegrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MapLocation {
    pub lat_micro: i64,
    pub lon_micro: i64,
}

impl MapLocation {
    pub fn new(lat_micro: i64, lon_micro: i64) -> Self {
        Self {
            lat_micro,
            lon_micro,
        }
    }

    pub fn encode(&self, enc: &mut codec::Encoder) {
        enc.i64(self.lat_micro).i64(self.lon_micro);
    }

    pub fn decode(dec: &mut codec::Decoder<'_>) -> Result<Self, codec::DecodeError> {
        Ok(Self::new(dec.i64()?, dec.i64()?))
    }
}

impl std::fmt::Display for MapLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{}", self.lat_micro, self.lon_micro)
    }
}
