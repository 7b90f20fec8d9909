//! Digests, key pairs and signatures.
//!
//! The reference configuration pins SHA-256 (multihash code `0x12`) for
//! digests and Ed25519 for signatures. Key pairs are derived deterministically
//! from a seed so every run can be replayed bit for bit.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer as _, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::codec::{DecodeError, Decoder, Encoder};

pub const MIN_SEED_LEN: usize = 16;
pub const MAX_SEED_LEN: usize = 1024;

const KEYPAIR_DOMAIN: &[u8] = b"deedchain/keypair/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("seed too short: {len} bytes, need at least {MIN_SEED_LEN}")]
    SeedTooShort { len: usize },
    #[error("seed too long: {len} bytes, at most {MAX_SEED_LEN}")]
    SeedTooLong { len: usize },
    #[error("malformed signature: expected 64 bytes, got {0}")]
    MalformedSignature(usize),
    #[error("malformed digest: {0}")]
    MalformedDigest(String),
    #[error("malformed key: {0}")]
    MalformedKey(String),
}

/// Digest algorithms, identified by their multihash code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DigestAlgorithm {
    Sha256,
}

impl DigestAlgorithm {
    pub const fn code(self) -> u8 {
        match self {
            DigestAlgorithm::Sha256 => 0x12,
        }
    }

    pub const fn digest_len(self) -> usize {
        match self {
            DigestAlgorithm::Sha256 => 32,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x12 => Some(DigestAlgorithm::Sha256),
            _ => None,
        }
    }
}

/// A self-describing digest: algorithm tag plus the fixed-length hash.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DigestId {
    algorithm: DigestAlgorithm,
    bytes: [u8; 32],
}

impl DigestId {
    /// All-zero sentinel, used as the predecessor of the first anchor.
    pub const ZERO: DigestId = DigestId {
        algorithm: DigestAlgorithm::Sha256,
        bytes: [0; 32],
    };

    pub fn new(algorithm: DigestAlgorithm, bytes: [u8; 32]) -> Self {
        Self { algorithm, bytes }
    }

    pub fn algorithm(&self) -> DigestAlgorithm {
        self.algorithm
    }

    pub fn bytes(&self) -> &[u8; 32] {
        &self.bytes
    }

    /// Multihash form: `code ‖ length ‖ digest`.
    pub fn to_multihash(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.bytes.len());
        out.push(self.algorithm.code());
        out.push(self.algorithm.digest_len() as u8);
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_multihash(raw: &[u8]) -> Result<Self, CryptoError> {
        let (&code, rest) = raw
            .split_first()
            .ok_or_else(|| CryptoError::MalformedDigest("empty".into()))?;
        let algorithm = DigestAlgorithm::from_code(code)
            .ok_or_else(|| CryptoError::MalformedDigest(format!("unknown algorithm 0x{code:02x}")))?;
        let (&len, body) = rest
            .split_first()
            .ok_or_else(|| CryptoError::MalformedDigest("missing length".into()))?;
        if len as usize != algorithm.digest_len() || body.len() != algorithm.digest_len() {
            return Err(CryptoError::MalformedDigest(format!(
                "length tag {len} does not match algorithm or body ({} bytes)",
                body.len()
            )));
        }
        let bytes: [u8; 32] = body.try_into().expect("length checked");
        Ok(Self { algorithm, bytes })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_multihash())
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let raw = hex::decode(s).map_err(|e| CryptoError::MalformedDigest(e.to_string()))?;
        Self::from_multihash(&raw)
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.to_multihash());
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let raw = dec.bytes()?;
        Self::from_multihash(raw).map_err(|_| dec.invalid("digest"))
    }

    /// Short prefix for log lines.
    pub fn short(&self) -> String {
        hex::encode(&self.bytes[..6])
    }
}

impl fmt::Debug for DigestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DigestId({})", self.to_hex())
    }
}

impl fmt::Display for DigestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for DigestId {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_hex(s)
    }
}

impl Serialize for DigestId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for DigestId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA-256 of `data`, tagged.
pub fn digest(data: &[u8]) -> DigestId {
    DigestId::new(DigestAlgorithm::Sha256, Sha256::digest(data).into())
}

/// Digest of several parts, each length-prefixed so the split is unambiguous.
pub fn digest_parts(parts: &[&[u8]]) -> DigestId {
    let mut enc = Encoder::new();
    for p in parts {
        enc.bytes(p);
    }
    digest(enc.as_slice())
}

macro_rules! hex_bytes {
    ($name:ident, $len:expr) => {
        impl $name {
            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                let raw = hex::decode(s).map_err(|e| CryptoError::MalformedKey(e.to_string()))?;
                let arr: [u8; $len] = raw.as_slice().try_into().map_err(|_| {
                    CryptoError::MalformedKey(format!(
                        "{}: expected {} bytes, got {}",
                        stringify!($name),
                        $len,
                        raw.len()
                    ))
                })?;
                Ok(Self(arr))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; 32]);
hex_bytes!(PublicKey, 32);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl PublicKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        Self(bytes)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey([u8; 32]);
hex_bytes!(PrivateKey, 32);

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature([u8; 64]);
hex_bytes!(Signature, 64);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

impl Signature {
    pub fn from_slice(raw: &[u8]) -> Result<Self, CryptoError> {
        raw.try_into()
            .map(Self)
            .map_err(|_| CryptoError::MalformedSignature(raw.len()))
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self(dec.fixed::<64>()?))
    }
}

impl PublicKey {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Self(dec.fixed::<32>()?))
    }

    /// Strict Ed25519 verification; malformed keys simply fail.
    pub fn verify(&self, message: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        vk.verify_strict(message, &sig).is_ok()
    }
}

#[derive(Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub private: PrivateKey,
    #[cfg(test)]
    pub derivation_seed: Option<Vec<u8>>,
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.public == other.public && self.private == other.private
    }
}

impl Eq for KeyPair {}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_private(private: [u8; 32]) -> Self {
        let sk = SigningKey::from_bytes(&private);
        Self {
            public: PublicKey(sk.verifying_key().to_bytes()),
            private: PrivateKey(private),
            #[cfg(test)]
            derivation_seed: None,
        }
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(message, &self.private)
    }

    /// The registry identity of this pair: `digest(public ‖ private)`.
    pub fn identity(&self) -> DigestId {
        identity_digest(self)
    }
}

/// Derives a key pair from `seed`. Same seed, same pair.
pub fn keypair_from_seed(seed: &[u8]) -> Result<KeyPair, CryptoError> {
    if seed.len() < MIN_SEED_LEN {
        return Err(CryptoError::SeedTooShort { len: seed.len() });
    }
    if seed.len() > MAX_SEED_LEN {
        return Err(CryptoError::SeedTooLong { len: seed.len() });
    }
    let mut h = Sha256::new();
    h.update(KEYPAIR_DOMAIN);
    h.update(seed);
    #[allow(unused_mut)]
    let mut pair = KeyPair::from_private(h.finalize().into());
    #[cfg(test)]
    {
        pair.derivation_seed = Some(seed.to_vec());
    }
    Ok(pair)
}

pub fn sign(message: &[u8], key: &PrivateKey) -> Signature {
    let sk = SigningKey::from_bytes(&key.0);
    Signature(sk.sign(message).to_bytes())
}

/// Verifies a raw signature. Wrong-length input is an error, a well-formed
/// but invalid signature is `Ok(false)`.
pub fn verify(message: &[u8], sig: &[u8], key: &PublicKey) -> Result<bool, CryptoError> {
    let sig = Signature::from_slice(sig)?;
    Ok(key.verify(message, &sig))
}

pub fn identity_digest(pair: &KeyPair) -> DigestId {
    let mut buf = Vec::with_capacity(64);
    buf.extend_from_slice(pair.public.as_bytes());
    buf.extend_from_slice(pair.private.as_bytes());
    digest(&buf)
}

/// A key pair together with the registry id it signs as.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signer {
    pub id: DigestId,
    pub keypair: KeyPair,
}

impl Signer {
    pub fn new(keypair: KeyPair) -> Self {
        Self {
            id: identity_digest(&keypair),
            keypair,
        }
    }

    pub fn with_id(id: DigestId, keypair: KeyPair) -> Self {
        Self { id, keypair }
    }

    pub fn public(&self) -> PublicKey {
        self.keypair.public
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        self.keypair.sign(message)
    }
}
