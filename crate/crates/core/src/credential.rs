//! Verifiable credentials, presentations and holder wallets.
//!
//! A credential never carries a private key. It binds `subject_id` (the
//! identity digest of the holder's key pair) and the holder's public key to a
//! set of attributes, and is signed by the issuer over its canonical bytes.

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{digest, DigestId, KeyPair, PublicKey, Signature, Signer};
use crate::registry::{AnchorChain, CredentialStatus};
use crate::Tick;

const VC_ID_DOMAIN: &str = "deedchain/vc-id/v1";
const VC_DOMAIN: &str = "deedchain/vc/v1";
const PRESENTATION_DOMAIN: &str = "deedchain/presentation/v1";
const LINKAGE_DOMAIN: &str = "deedchain/linkage/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CredentialSchema {
    Owner,
    Property,
    Buyer,
    Marketplace,
    ContextDerived,
}

impl CredentialSchema {
    pub fn tag(self) -> u8 {
        match self {
            CredentialSchema::Owner => 1,
            CredentialSchema::Property => 2,
            CredentialSchema::Buyer => 3,
            CredentialSchema::Marketplace => 4,
            CredentialSchema::ContextDerived => 5,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => CredentialSchema::Owner,
            2 => CredentialSchema::Property,
            3 => CredentialSchema::Buyer,
            4 => CredentialSchema::Marketplace,
            5 => CredentialSchema::ContextDerived,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CredentialSchema::Owner => "owner",
            CredentialSchema::Property => "property",
            CredentialSchema::Buyer => "buyer",
            CredentialSchema::Marketplace => "marketplace",
            CredentialSchema::ContextDerived => "context-derived",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CredentialError {
    #[error("credential id does not match its contents")]
    IdMismatch,
    #[error("issuer {0} is not a registered participant")]
    UnknownIssuer(String),
    #[error("issuer signature does not verify")]
    BadSignature,
    #[error("credential expired at tick {0}")]
    Expired(u64),
    #[error("credential is not anchored on the registry")]
    NotAnchored,
    #[error("credential has been revoked")]
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiableCredential {
    pub credential_id: DigestId,
    pub subject_id: DigestId,
    pub subject_public_key: PublicKey,
    pub issuer_id: DigestId,
    pub schema: CredentialSchema,
    pub attributes: BTreeMap<String, String>,
    pub issued_at: Tick,
    pub expiry: Option<Tick>,
    pub issuer_signature: Signature,
}

/// Everything a credential says, before it has an id or signature.
#[derive(Debug, Clone)]
pub struct CredentialClaims {
    pub subject_id: DigestId,
    pub subject_public_key: PublicKey,
    pub schema: CredentialSchema,
    pub attributes: BTreeMap<String, String>,
    pub issued_at: Tick,
    pub expiry: Option<Tick>,
}

fn encode_body(
    enc: &mut Encoder,
    subject_id: &DigestId,
    subject_public_key: &PublicKey,
    issuer_id: &DigestId,
    schema: CredentialSchema,
    attributes: &BTreeMap<String, String>,
    issued_at: Tick,
    expiry: Option<Tick>,
) {
    subject_id.encode(enc);
    subject_public_key.encode(enc);
    issuer_id.encode(enc);
    enc.u8(schema.tag())
        .str_map(attributes)
        .u64(issued_at.0)
        .opt_u64(expiry.map(|t| t.0));
}

impl VerifiableCredential {
    pub fn issue(issuer: &Signer, claims: CredentialClaims) -> Self {
        let mut vc = VerifiableCredential {
            credential_id: DigestId::ZERO,
            subject_id: claims.subject_id,
            subject_public_key: claims.subject_public_key,
            issuer_id: issuer.id,
            schema: claims.schema,
            attributes: claims.attributes,
            issued_at: claims.issued_at,
            expiry: claims.expiry,
            issuer_signature: Signature::from_slice(&[0; 64]).expect("64 bytes"),
        };
        vc.credential_id = vc.computed_id();
        vc.issuer_signature = issuer.sign(&vc.signing_bytes());
        vc
    }

    fn body(&self, enc: &mut Encoder) {
        encode_body(
            enc,
            &self.subject_id,
            &self.subject_public_key,
            &self.issuer_id,
            self.schema,
            &self.attributes,
            self.issued_at,
            self.expiry,
        );
    }

    /// Digest over every field except the id and signature.
    pub fn computed_id(&self) -> DigestId {
        let mut enc = Encoder::with_domain(VC_ID_DOMAIN);
        self.body(&mut enc);
        digest(enc.as_slice())
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_domain(VC_DOMAIN);
        self.credential_id.encode(&mut enc);
        self.body(&mut enc);
        enc.finish()
    }

    /// Canonical serialization: signing bytes followed by the signature.
    pub fn to_canonical(&self) -> Vec<u8> {
        let mut bytes = self.signing_bytes();
        let mut enc = Encoder::new();
        self.issuer_signature.encode(&mut enc);
        bytes.extend_from_slice(enc.as_slice());
        bytes
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        dec.expect_domain(VC_DOMAIN)?;
        let credential_id = DigestId::decode(&mut dec)?;
        let subject_id = DigestId::decode(&mut dec)?;
        let subject_public_key = PublicKey::decode(&mut dec)?;
        let issuer_id = DigestId::decode(&mut dec)?;
        let tag = dec.u8()?;
        let schema = CredentialSchema::from_tag(tag).ok_or_else(|| dec.invalid("schema tag"))?;
        let attributes = dec.str_map()?;
        let issued_at = Tick(dec.u64()?);
        let expiry = dec.opt_u64()?.map(Tick);
        let issuer_signature = Signature::decode(&mut dec)?;
        dec.finish()?;
        Ok(Self {
            credential_id,
            subject_id,
            subject_public_key,
            issuer_id,
            schema,
            attributes,
            issued_at,
            expiry,
            issuer_signature,
        })
    }

    pub fn digest(&self) -> DigestId {
        digest(&self.to_canonical())
    }

    /// Checks the credential against the registry at `now`.
    pub fn verify(&self, chain: &AnchorChain, now: Tick) -> Result<(), CredentialError> {
        if self.computed_id() != self.credential_id {
            return Err(CredentialError::IdMismatch);
        }
        let key = chain
            .participant_key(&self.issuer_id)
            .ok_or_else(|| CredentialError::UnknownIssuer(self.issuer_id.short()))?;
        if !key.verify(&self.signing_bytes(), &self.issuer_signature) {
            return Err(CredentialError::BadSignature);
        }
        if let Some(exp) = self.expiry {
            if exp <= now {
                return Err(CredentialError::Expired(exp.0));
            }
        }
        match chain.credential_status(&self.credential_id) {
            CredentialStatus::Valid => Ok(()),
            CredentialStatus::Revoked => Err(CredentialError::Revoked),
            CredentialStatus::NotFound => Err(CredentialError::NotAnchored),
        }
    }
}

/// A holder's signed disclosure of attributes from one or more credentials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    pub credential_refs: Vec<DigestId>,
    pub holder_id: DigestId,
    pub disclosed_attributes: BTreeMap<String, String>,
    #[serde(with = "hex_vec")]
    pub nonce: Vec<u8>,
    pub timestamp: Tick,
    pub device_binding: DigestId,
    pub location_binding: String,
    pub holder_signature: Signature,
}

/// Unsigned presentation contents.
#[derive(Debug, Clone)]
pub struct PresentationRequest {
    pub credential_refs: Vec<DigestId>,
    pub disclosed_attributes: BTreeMap<String, String>,
    pub nonce: Vec<u8>,
    pub timestamp: Tick,
    pub device_binding: DigestId,
    pub location_binding: String,
}

impl Presentation {
    pub fn sign(holder: &Signer, req: PresentationRequest) -> Self {
        let mut p = Presentation {
            credential_refs: req.credential_refs,
            holder_id: holder.id,
            disclosed_attributes: req.disclosed_attributes,
            nonce: req.nonce,
            timestamp: req.timestamp,
            device_binding: req.device_binding,
            location_binding: req.location_binding,
            holder_signature: Signature::from_slice(&[0; 64]).expect("64 bytes"),
        };
        p.holder_signature = holder.sign(&p.signing_bytes());
        p
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_domain(PRESENTATION_DOMAIN);
        enc.count(self.credential_refs.len());
        for r in &self.credential_refs {
            r.encode(&mut enc);
        }
        self.holder_id.encode(&mut enc);
        enc.str_map(&self.disclosed_attributes)
            .bytes(&self.nonce)
            .u64(self.timestamp.0);
        self.device_binding.encode(&mut enc);
        enc.str(&self.location_binding);
        enc.finish()
    }

    pub fn verify_signature(&self, key: &PublicKey) -> bool {
        key.verify(&self.signing_bytes(), &self.holder_signature)
    }

    /// True when every disclosed attribute appears, with the same value, in
    /// one of the referenced credentials.
    pub fn discloses_subset_of(&self, credentials: &[VerifiableCredential]) -> bool {
        let referenced: Vec<&VerifiableCredential> = credentials
            .iter()
            .filter(|c| self.credential_refs.contains(&c.credential_id))
            .collect();
        if referenced.len() != self.credential_refs.len() {
            return false;
        }
        self.disclosed_attributes.iter().all(|(k, v)| {
            referenced
                .iter()
                .any(|c| c.attributes.get(k).is_some_and(|cv| cv == v))
        })
    }
}

/// Proof that a context-derived subject was derived from a base credential.
/// Shown only to parties the holder chooses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageProof {
    pub base_credential_id: DigestId,
    pub base_subject_id: DigestId,
    pub context_subject_id: DigestId,
    pub context_label: String,
    #[serde(with = "hex_vec")]
    pub salt: Vec<u8>,
    pub base_signature: Signature,
}

impl LinkageProof {
    /// `digest(base_subject ‖ context_label ‖ salt)`.
    pub fn context_subject(base_subject: &DigestId, label: &str, salt: &[u8]) -> DigestId {
        let mut enc = Encoder::with_domain(LINKAGE_DOMAIN);
        base_subject.encode(&mut enc);
        enc.str(label).bytes(salt);
        digest(enc.as_slice())
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_domain(LINKAGE_DOMAIN);
        self.base_credential_id.encode(&mut enc);
        self.base_subject_id.encode(&mut enc);
        self.context_subject_id.encode(&mut enc);
        enc.str(&self.context_label).bytes(&self.salt);
        enc.finish()
    }

    /// Checks the proof against the base credential it claims.
    pub fn verify(&self, base: &VerifiableCredential) -> bool {
        base.credential_id == self.base_credential_id
            && base.subject_id == self.base_subject_id
            && Self::context_subject(&self.base_subject_id, &self.context_label, &self.salt)
                == self.context_subject_id
            && base
                .subject_public_key
                .verify(&self.signing_bytes(), &self.base_signature)
    }
}

/// A context-derived identity held in a wallet.
#[derive(Debug, Clone)]
pub struct ContextIdentity {
    pub label: String,
    pub signer: Signer,
    pub credential: VerifiableCredential,
    pub linkage: LinkageProof,
}

/// The holder side: keys, credentials, and a deterministic entropy source.
#[derive(Clone)]
pub struct Wallet {
    pub label: String,
    signer: Signer,
    rng: ChaCha20Rng,
    pub device_id: DigestId,
    pub location: String,
    pub credentials: Vec<VerifiableCredential>,
    pub contexts: BTreeMap<String, ContextIdentity>,
}

impl fmt::Debug for Wallet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Wallet")
            .field("label", &self.label)
            .field("subject", &self.signer.id)
            .field("credentials", &self.credentials.len())
            .finish_non_exhaustive()
    }
}

impl Wallet {
    pub fn new(label: impl Into<String>, keypair: KeyPair, location: impl Into<String>) -> Self {
        let signer = Signer::new(keypair);
        let mut enc = Encoder::with_domain("deedchain/wallet-rng/v1");
        enc.raw(signer.keypair.private.as_bytes());
        let seed = digest(enc.as_slice());
        let mut dev = Encoder::with_domain("deedchain/device/v1");
        signer.public().encode(&mut dev);
        Self {
            label: label.into(),
            rng: ChaCha20Rng::from_seed(*seed.bytes()),
            device_id: digest(dev.as_slice()),
            location: location.into(),
            signer,
            credentials: Vec::new(),
            contexts: BTreeMap::new(),
        }
    }

    pub fn signer(&self) -> &Signer {
        &self.signer
    }

    pub fn subject_id(&self) -> DigestId {
        self.signer.id
    }

    pub fn public_key(&self) -> PublicKey {
        self.signer.public()
    }

    pub fn fresh_bytes(&mut self) -> [u8; 32] {
        let mut out = [0u8; 32];
        self.rng.fill_bytes(&mut out);
        out
    }

    pub fn credential(&self, schema: CredentialSchema) -> Option<&VerifiableCredential> {
        self.credentials.iter().rev().find(|c| c.schema == schema)
    }

    /// Signs a presentation disclosing `names` from `credentials`, under the
    /// base identity.
    pub fn present(
        &self,
        credentials: &[&VerifiableCredential],
        names: &[&str],
        nonce: Vec<u8>,
        now: Tick,
    ) -> Presentation {
        present_with(
            &self.signer,
            credentials,
            names,
            nonce,
            now,
            self.device_id,
            &self.location,
        )
    }

    /// Same as [`Wallet::present`] but under a context-derived identity.
    pub fn present_as(&self, context: &str, nonce: Vec<u8>, now: Tick) -> Option<Presentation> {
        let ctx = self.contexts.get(context)?;
        Some(present_with(
            &ctx.signer,
            &[&ctx.credential],
            &["context"],
            nonce,
            now,
            self.device_id,
            &self.location,
        ))
    }
}

fn present_with(
    signer: &Signer,
    credentials: &[&VerifiableCredential],
    names: &[&str],
    nonce: Vec<u8>,
    now: Tick,
    device: DigestId,
    location: &str,
) -> Presentation {
    let mut disclosed = BTreeMap::new();
    for name in names {
        if let Some(v) = credentials.iter().find_map(|c| c.attributes.get(*name)) {
            disclosed.insert((*name).to_string(), v.clone());
        }
    }
    Presentation::sign(
        signer,
        PresentationRequest {
            credential_refs: credentials.iter().map(|c| c.credential_id).collect(),
            disclosed_attributes: disclosed,
            nonce,
            timestamp: now,
            device_binding: device,
            location_binding: location.to_string(),
        },
    )
}

pub(crate) mod hex_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keypair_from_seed;

    fn issuer() -> Signer {
        Signer::new(keypair_from_seed(b"issuer-seed-0000").unwrap())
    }

    fn sample(attrs: &[(&str, &str)]) -> VerifiableCredential {
        let holder = keypair_from_seed(b"holder-seed-0000").unwrap();
        VerifiableCredential::issue(
            &issuer(),
            CredentialClaims {
                subject_id: holder.identity(),
                subject_public_key: holder.public,
                schema: CredentialSchema::Owner,
                attributes: attrs
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                issued_at: Tick(3),
                expiry: Some(Tick(90)),
            },
        )
    }

    #[test]
    fn canonical_round_trip() {
        let vc = sample(&[("name", "Ada"), ("address", "1 Quay")]);
        let bytes = vc.to_canonical();
        let parsed = VerifiableCredential::from_canonical(&bytes).unwrap();
        assert_eq!(parsed, vc);
        assert_eq!(parsed.to_canonical(), bytes);
        assert_eq!(vc.computed_id(), vc.credential_id);
    }

    #[test]
    fn issuer_signature_covers_attributes() {
        let mut vc = sample(&[("name", "Ada")]);
        let key = issuer().public();
        assert!(key.verify(&vc.signing_bytes(), &vc.issuer_signature));
        vc.attributes.insert("name".into(), "Eve".into());
        assert!(!key.verify(&vc.signing_bytes(), &vc.issuer_signature));
        assert_ne!(vc.computed_id(), vc.credential_id);
    }

    #[test]
    fn presentation_signature_and_subset() {
        let vc = sample(&[("name", "Ada"), ("dob", "1815-12-10")]);
        let holder = Signer::new(keypair_from_seed(b"holder-seed-0000").unwrap());
        let wallet = Wallet::new("ada", holder.keypair.clone(), "porto");
        let p = wallet.present(&[&vc], &["name"], vec![1, 2, 3], Tick(5));
        assert!(p.verify_signature(&holder.public()));
        assert!(p.discloses_subset_of(std::slice::from_ref(&vc)));

        let mut forged = p.clone();
        forged
            .disclosed_attributes
            .insert("name".into(), "Mallory".into());
        assert!(!forged.discloses_subset_of(std::slice::from_ref(&vc)));
        assert!(!forged.verify_signature(&holder.public()));
    }

    #[test]
    fn presentation_needs_all_referenced_credentials() {
        let vc = sample(&[("name", "Ada")]);
        let wallet = Wallet::new("ada", keypair_from_seed(b"holder-seed-0000").unwrap(), "x");
        let mut p = wallet.present(&[&vc], &["name"], vec![], Tick(0));
        p.credential_refs.push(DigestId::ZERO);
        assert!(!p.discloses_subset_of(&[vc]));
    }

    #[test]
    fn wallet_entropy_is_deterministic() {
        let kp = keypair_from_seed(b"holder-seed-0000").unwrap();
        let mut a = Wallet::new("a", kp.clone(), "x");
        let mut b = Wallet::new("a", kp, "x");
        assert_eq!(a.fresh_bytes(), b.fresh_bytes());
        assert_ne!(a.fresh_bytes(), [0u8; 32]);
    }

    fn claims_strategy() -> impl proptest::strategy::Strategy<Value = CredentialClaims> {
        use proptest::prelude::*;
        let schemas = [CredentialSchema::Owner, CredentialSchema::Property, CredentialSchema::Buyer, CredentialSchema::ContextDerived];
        (
            0usize..4,
            proptest::collection::btree_map("[ab]{0,2}", "[ab]{0,2}", 0..3),
            0u64..3,
            proptest::option::of(0u64..3),
            0u8..2,
        )
            .prop_map(move |(schema, attributes, issued, expiry, holder)| {
                let pair = keypair_from_seed(&[holder; 16]).unwrap();
                CredentialClaims {
                    subject_id: pair.identity(),
                    subject_public_key: pair.public,
                    schema: schemas[schema],
                    attributes,
                    issued_at: Tick(issued),
                    expiry: expiry.map(Tick),
                }
            })
    }

    fn same_claims(a: &CredentialClaims, b: &CredentialClaims) -> bool {
        (a.subject_id, a.subject_public_key, a.schema, &a.attributes, a.issued_at, a.expiry)
            == (b.subject_id, b.subject_public_key, b.schema, &b.attributes, b.issued_at, b.expiry)
    }

    proptest::proptest! {
        #[test]
        fn canonical_encoding_is_injective(a in claims_strategy(), b in claims_strategy()) {
            let same = same_claims(&a, &b);
            let (va, vb) = (VerifiableCredential::issue(&issuer(), a), VerifiableCredential::issue(&issuer(), b));
            let (ba, bb) = (va.to_canonical(), vb.to_canonical());
            proptest::prop_assert_eq!(same, ba == bb);
            proptest::prop_assert_eq!(same, va.digest() == vb.digest());
            proptest::prop_assert_eq!(same, va.credential_id == vb.credential_id);
            proptest::prop_assert_eq!(VerifiableCredential::from_canonical(&ba).unwrap(), va);
        }
    }
}
