//! The verifiable data registry: a single append-only hash chain of signed
//! anchors.
//!
//! Anchors never carry personal attributes. Their summaries hold digests,
//! public keys and enumerated tags only. Identity anchors written by one of
//! the genesis authorities also register the subject's public key, which is
//! how later anchors and credentials resolve their signers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{digest, DigestId, PublicKey, Signature, Signer};
use crate::Tick;

const ANCHOR_DOMAIN: &str = "deedchain/anchor/v1";

/// Well-known summary keys.
pub mod keys {
    pub const SUBJECT: &str = "subject";
    pub const PUBLIC_KEY: &str = "public_key";
    pub const CREDENTIAL: &str = "credential";
    pub const SCHEMA: &str = "schema";
    pub const OWNER: &str = "owner";
    pub const OWNER_CREDENTIAL: &str = "owner_credential";
    pub const PREVIOUS_OWNER: &str = "previous_owner";
    pub const DESCRIPTION: &str = "description";
    pub const CONTRACT: &str = "contract";
    pub const EVENT: &str = "event";
    pub const PROPERTY: &str = "property";
    pub const DEED: &str = "deed";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorKind {
    IdentityAnchor,
    PropertyAnchor,
    Revocation,
    TransferRecord,
    ContractEvent,
}

impl AnchorKind {
    fn tag(self) -> u8 {
        match self {
            AnchorKind::IdentityAnchor => 1,
            AnchorKind::PropertyAnchor => 2,
            AnchorKind::Revocation => 3,
            AnchorKind::TransferRecord => 4,
            AnchorKind::ContractEvent => 5,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => AnchorKind::IdentityAnchor,
            2 => AnchorKind::PropertyAnchor,
            3 => AnchorKind::Revocation,
            4 => AnchorKind::TransferRecord,
            5 => AnchorKind::ContractEvent,
            _ => return None,
        })
    }

    fn binds_subject(self) -> bool {
        matches!(
            self,
            AnchorKind::IdentityAnchor | AnchorKind::PropertyAnchor | AnchorKind::TransferRecord
        )
    }

    fn issues_credential(self) -> bool {
        matches!(self, AnchorKind::IdentityAnchor | AnchorKind::PropertyAnchor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthorityRole {
    IdentityOffice,
    LandRegistry,
    MarketplaceRegistrar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Authority {
    pub role: AuthorityRole,
    pub id: DigestId,
    pub public_key: PublicKey,
}

/// The issuer authorities installed when the chain is created.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Genesis {
    pub authorities: Vec<Authority>,
}

impl Genesis {
    pub fn new(identity_office: &Signer, land_registry: &Signer, registrar: &Signer) -> Self {
        let auth = |role, s: &Signer| Authority {
            role,
            id: s.id,
            public_key: s.public(),
        };
        Self {
            authorities: vec![
                auth(AuthorityRole::IdentityOffice, identity_office),
                auth(AuthorityRole::LandRegistry, land_registry),
                auth(AuthorityRole::MarketplaceRegistrar, registrar),
            ],
        }
    }

    fn validate(&self) -> Result<(), RegistryError> {
        let mut roles: Vec<_> = self.authorities.iter().map(|a| a.role).collect();
        roles.sort();
        roles.dedup();
        let mut ids: Vec<_> = self.authorities.iter().map(|a| a.id).collect();
        ids.sort();
        ids.dedup();
        if self.authorities.len() != 3 || roles.len() != 3 || ids.len() != 3 {
            return Err(RegistryError::BadGenesis);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("author {0} is not a registered participant")]
    UnknownAuthor(String),
    #[error("clock regression: anchor at tick {got} after tick {last}")]
    ClockRegression { last: u64, got: u64 },
    #[error("subject {0} is already registered")]
    AlreadyRegistered(String),
    #[error("credential {0} is not anchored")]
    UnknownCredential(String),
    #[error("only the original issuer may revoke")]
    NotIssuer,
    #[error("credential already revoked")]
    AlreadyRevoked,
    #[error("genesis must install exactly three distinct authorities")]
    BadGenesis,
    #[error("malformed chain export at line {line}: {reason}")]
    Import { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerAnchor {
    pub index: u64,
    pub prev_digest: DigestId,
    pub kind: AnchorKind,
    pub payload_digest: DigestId,
    pub payload_summary: BTreeMap<String, String>,
    pub timestamp: Tick,
    pub author_id: DigestId,
    pub author_signature: Signature,
}

impl LedgerAnchor {
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_domain(ANCHOR_DOMAIN);
        enc.u64(self.index);
        self.prev_digest.encode(&mut enc);
        enc.u8(self.kind.tag());
        self.payload_digest.encode(&mut enc);
        enc.str_map(&self.payload_summary).u64(self.timestamp.0);
        self.author_id.encode(&mut enc);
        enc.finish()
    }

    pub fn to_canonical(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(&self.signing_bytes());
        self.author_signature.encode(&mut enc);
        enc.finish()
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        dec.expect_domain(ANCHOR_DOMAIN)?;
        let index = dec.u64()?;
        let prev_digest = DigestId::decode(&mut dec)?;
        let tag = dec.u8()?;
        let kind = AnchorKind::from_tag(tag).ok_or_else(|| dec.invalid("anchor kind"))?;
        let payload_digest = DigestId::decode(&mut dec)?;
        let payload_summary = dec.str_map()?;
        let timestamp = Tick(dec.u64()?);
        let author_id = DigestId::decode(&mut dec)?;
        let author_signature = Signature::decode(&mut dec)?;
        dec.finish()?;
        Ok(Self {
            index,
            prev_digest,
            kind,
            payload_digest,
            payload_summary,
            timestamp,
            author_id,
            author_signature,
        })
    }

    pub fn digest(&self) -> DigestId {
        digest(&self.to_canonical())
    }

    pub fn summary(&self, key: &str) -> Option<DigestId> {
        self.payload_summary
            .get(key)
            .and_then(|v| DigestId::from_hex(v).ok())
    }
}

/// Why a chain failed verification, located at the first bad anchor.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("anchor {index}: {reason}")]
pub struct ChainFault {
    pub index: u64,
    pub reason: FaultReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultReason {
    #[error("index out of sequence")]
    IndexMismatch,
    #[error("previous-digest link broken")]
    LinkBroken,
    #[error("timestamp regresses")]
    ClockRegression,
    #[error("head digest does not match last anchor")]
    HeadMismatch,
    #[error("author not registered")]
    UnknownAuthor,
    #[error("author signature invalid")]
    BadSignature,
    #[error("subject registered twice")]
    DuplicateRegistration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolutionStatus {
    NotFound,
    Valid,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Resolution {
    pub status: ResolutionStatus,
    /// Latest anchor binding the subject.
    pub anchor: Option<LedgerAnchor>,
}

impl Resolution {
    pub fn is_valid(&self) -> bool {
        self.status == ResolutionStatus::Valid
    }

    pub fn is_found(&self) -> bool {
        self.status != ResolutionStatus::NotFound
    }

    /// Current owner for property subjects.
    pub fn owner(&self) -> Option<DigestId> {
        self.anchor.as_ref().and_then(|a| a.summary(keys::OWNER))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CredentialStatus {
    NotFound,
    Valid,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorChain {
    genesis: Genesis,
    anchors: Vec<LedgerAnchor>,
    head_digest: DigestId,
    participants: BTreeMap<DigestId, PublicKey>,
}

/// If `anchor` registers a participant, returns `(subject, key)`.
fn registration(
    anchor: &LedgerAnchor,
    authorities: &[Authority],
) -> Option<(DigestId, PublicKey)> {
    if anchor.kind != AnchorKind::IdentityAnchor
        || !authorities.iter().any(|a| a.id == anchor.author_id)
    {
        return None;
    }
    let subject = anchor.summary(keys::SUBJECT)?;
    let key = PublicKey::from_hex(anchor.payload_summary.get(keys::PUBLIC_KEY)?).ok()?;
    Some((subject, key))
}

impl AnchorChain {
    pub fn new(genesis: Genesis) -> Result<Self, RegistryError> {
        genesis.validate()?;
        let participants = genesis
            .authorities
            .iter()
            .map(|a| (a.id, a.public_key))
            .collect();
        Ok(Self {
            genesis,
            anchors: Vec::new(),
            head_digest: DigestId::ZERO,
            participants,
        })
    }

    /// Rebuilds a chain from stored parts without verifying it. Call
    /// [`AnchorChain::verify`] before trusting the result.
    pub fn from_parts(
        genesis: Genesis,
        anchors: Vec<LedgerAnchor>,
        head_digest: DigestId,
    ) -> Result<Self, RegistryError> {
        let mut chain = Self::new(genesis)?;
        for a in &anchors {
            if let Some((subject, key)) = registration(a, &chain.genesis.authorities) {
                chain.participants.entry(subject).or_insert(key);
            }
        }
        chain.anchors = anchors;
        chain.head_digest = head_digest;
        Ok(chain)
    }

    pub fn genesis(&self) -> &Genesis {
        &self.genesis
    }

    pub fn anchors(&self) -> &[LedgerAnchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn head_digest(&self) -> DigestId {
        self.head_digest
    }

    pub fn authority(&self, role: AuthorityRole) -> &Authority {
        self.genesis
            .authorities
            .iter()
            .find(|a| a.role == role)
            .expect("genesis validated")
    }

    pub fn is_authority(&self, id: &DigestId) -> bool {
        self.genesis.authorities.iter().any(|a| a.id == *id)
    }

    pub fn participant_key(&self, id: &DigestId) -> Option<PublicKey> {
        self.participants.get(id).copied()
    }

    pub fn last_timestamp(&self) -> Option<Tick> {
        self.anchors.last().map(|a| a.timestamp)
    }

    pub fn append_anchor(
        &mut self,
        kind: AnchorKind,
        payload_digest: DigestId,
        payload_summary: BTreeMap<String, String>,
        author: &Signer,
        clock: Tick,
    ) -> Result<LedgerAnchor, RegistryError> {
        if self.participants.get(&author.id) != Some(&author.public()) {
            return Err(RegistryError::UnknownAuthor(author.id.short()));
        }
        if let Some(last) = self.last_timestamp() {
            if clock < last {
                return Err(RegistryError::ClockRegression {
                    last: last.0,
                    got: clock.0,
                });
            }
        }
        let mut anchor = LedgerAnchor {
            index: self.anchors.len() as u64,
            prev_digest: self.head_digest,
            kind,
            payload_digest,
            payload_summary,
            timestamp: clock,
            author_id: author.id,
            author_signature: Signature::from_slice(&[0; 64]).expect("64 bytes"),
        };
        let reg = registration(&anchor, &self.genesis.authorities);
        if let Some((subject, _)) = reg {
            if self.participants.contains_key(&subject) {
                return Err(RegistryError::AlreadyRegistered(subject.short()));
            }
        }
        anchor.author_signature = author.sign(&anchor.signing_bytes());
        self.head_digest = anchor.digest();
        if let Some((subject, key)) = reg {
            self.participants.insert(subject, key);
        }
        self.anchors.push(anchor.clone());
        Ok(anchor)
    }

    /// Checks every link, index, timestamp and signature.
    ///
    /// Structural checks (hash links, indices, head) run over the whole chain
    /// before any signature is verified, so a corrupted anchor is usually
    /// reported as the link break at its successor.
    pub fn verify(&self) -> Result<(), ChainFault> {
        let mut prev = DigestId::ZERO;
        let mut last_ts = Tick(0);
        for (i, a) in self.anchors.iter().enumerate() {
            let fault = |reason| ChainFault {
                index: i as u64,
                reason,
            };
            if a.index != i as u64 {
                return Err(fault(FaultReason::IndexMismatch));
            }
            if a.prev_digest != prev {
                return Err(fault(FaultReason::LinkBroken));
            }
            if a.timestamp < last_ts {
                return Err(fault(FaultReason::ClockRegression));
            }
            last_ts = a.timestamp;
            prev = a.digest();
        }
        if prev != self.head_digest {
            return Err(ChainFault {
                index: self.anchors.len().saturating_sub(1) as u64,
                reason: FaultReason::HeadMismatch,
            });
        }

        let mut participants: BTreeMap<DigestId, PublicKey> = self
            .genesis
            .authorities
            .iter()
            .map(|a| (a.id, a.public_key))
            .collect();
        for (i, a) in self.anchors.iter().enumerate() {
            let fault = |reason| ChainFault {
                index: i as u64,
                reason,
            };
            let key = participants
                .get(&a.author_id)
                .ok_or(fault(FaultReason::UnknownAuthor))?;
            if !key.verify(&a.signing_bytes(), &a.author_signature) {
                return Err(fault(FaultReason::BadSignature));
            }
            if let Some((subject, key)) = registration(a, &self.genesis.authorities) {
                if participants.insert(subject, key).is_some() {
                    return Err(fault(FaultReason::DuplicateRegistration));
                }
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.verify().is_ok()
    }

    fn revoked_subject(&self, subject: &DigestId) -> bool {
        self.anchors.iter().any(|a| {
            a.kind == AnchorKind::Revocation && a.summary(keys::SUBJECT).as_ref() == Some(subject)
        })
    }

    /// Latest binding for `subject` plus its revocation status. Once a
    /// subject is revoked it stays revoked.
    pub fn resolve(&self, subject: &DigestId) -> Resolution {
        let anchor = self
            .anchors
            .iter()
            .rev()
            .find(|a| a.kind.binds_subject() && a.summary(keys::SUBJECT).as_ref() == Some(subject))
            .cloned();
        let status = match &anchor {
            None => ResolutionStatus::NotFound,
            Some(_) if self.revoked_subject(subject) => ResolutionStatus::Revoked,
            Some(_) => ResolutionStatus::Valid,
        };
        Resolution { status, anchor }
    }

    /// The anchor that issued `credential_id`, if any.
    pub fn issuance_anchor(&self, credential_id: &DigestId) -> Option<&LedgerAnchor> {
        self.anchors.iter().find(|a| {
            a.kind.issues_credential() && a.summary(keys::CREDENTIAL).as_ref() == Some(credential_id)
        })
    }

    pub fn credential_status(&self, credential_id: &DigestId) -> CredentialStatus {
        if self.issuance_anchor(credential_id).is_none() {
            return CredentialStatus::NotFound;
        }
        let revoked = self.anchors.iter().any(|a| {
            a.kind == AnchorKind::Revocation
                && a.summary(keys::CREDENTIAL).as_ref() == Some(credential_id)
        });
        if revoked {
            CredentialStatus::Revoked
        } else {
            CredentialStatus::Valid
        }
    }

    pub fn revoke(
        &mut self,
        credential_id: &DigestId,
        issuer: &Signer,
        clock: Tick,
    ) -> Result<LedgerAnchor, RegistryError> {
        let issued = self
            .issuance_anchor(credential_id)
            .ok_or_else(|| RegistryError::UnknownCredential(credential_id.short()))?;
        if issued.author_id != issuer.id {
            return Err(RegistryError::NotIssuer);
        }
        let subject = issued.payload_summary.get(keys::SUBJECT).cloned();
        if self.credential_status(credential_id) == CredentialStatus::Revoked {
            return Err(RegistryError::AlreadyRevoked);
        }
        let mut summary = BTreeMap::new();
        summary.insert(keys::CREDENTIAL.to_string(), credential_id.to_hex());
        if let Some(s) = subject {
            summary.insert(keys::SUBJECT.to_string(), s);
        }
        self.append_anchor(AnchorKind::Revocation, *credential_id, summary, issuer, clock)
    }

    /// One JSON object per anchor, newline terminated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.anchors {
            out.push_str(&serde_json::to_string(a).expect("anchor serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a JSON-lines export. The head digest is taken from the last
    /// anchor; compare it with a separately stored head to detect truncation.
    pub fn from_jsonl(genesis: Genesis, text: &str) -> Result<Self, RegistryError> {
        let mut anchors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let a: LedgerAnchor = serde_json::from_str(line).map_err(|e| RegistryError::Import {
                line: i + 1,
                reason: e.to_string(),
            })?;
            anchors.push(a);
        }
        let head = anchors.last().map_or(DigestId::ZERO, LedgerAnchor::digest);
        Self::from_parts(genesis, anchors, head)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keypair_from_seed;

    fn signer(tag: &str) -> Signer {
        Signer::new(keypair_from_seed(format!("{tag:0>16}").as_bytes()).unwrap())
    }

    fn setup() -> (AnchorChain, Signer, Signer, Signer) {
        let (io, lr, mr) = (signer("io"), signer("lr"), signer("mr"));
        let chain = AnchorChain::new(Genesis::new(&io, &lr, &mr)).unwrap();
        (chain, io, lr, mr)
    }

    fn identity_summary(subject: &Signer, cred: DigestId) -> BTreeMap<String, String> {
        BTreeMap::from([
            (keys::SUBJECT.into(), subject.id.to_hex()),
            (keys::PUBLIC_KEY.into(), subject.public().to_hex()),
            (keys::CREDENTIAL.into(), cred.to_hex()),
        ])
    }

    #[test]
    fn genesis_needs_three_distinct_roles() {
        let io = signer("io");
        let g = Genesis::new(&io, &io, &signer("mr"));
        assert_eq!(AnchorChain::new(g).unwrap_err(), RegistryError::BadGenesis);
    }

    #[test]
    fn first_append_links_to_zero() {
        let (mut chain, io, _, _) = setup();
        let a = chain
            .append_anchor(AnchorKind::ContractEvent, digest(b"p"), BTreeMap::new(), &io, Tick(0))
            .unwrap();
        assert_eq!(a.index, 0);
        assert_eq!(a.prev_digest, DigestId::ZERO);
        let b = chain
            .append_anchor(AnchorKind::ContractEvent, digest(b"q"), BTreeMap::new(), &io, Tick(0))
            .unwrap();
        assert_eq!(b.index, 1);
        assert_eq!(b.prev_digest, a.digest());
        assert!(chain.is_valid());
    }

    #[test]
    fn unknown_author_and_clock_regression() {
        let (mut chain, io, _, _) = setup();
        let stranger = signer("stranger");
        assert!(matches!(
            chain.append_anchor(AnchorKind::ContractEvent, digest(b""), BTreeMap::new(), &stranger, Tick(0)),
            Err(RegistryError::UnknownAuthor(_))
        ));
        // registered id with the wrong key is still unknown
        let imposter = Signer::with_id(io.id, stranger.keypair.clone());
        assert!(matches!(
            chain.append_anchor(AnchorKind::ContractEvent, digest(b""), BTreeMap::new(), &imposter, Tick(0)),
            Err(RegistryError::UnknownAuthor(_))
        ));
        chain
            .append_anchor(AnchorKind::ContractEvent, digest(b""), BTreeMap::new(), &io, Tick(5))
            .unwrap();
        assert_eq!(
            chain
                .append_anchor(AnchorKind::ContractEvent, digest(b""), BTreeMap::new(), &io, Tick(4))
                .unwrap_err(),
            RegistryError::ClockRegression { last: 5, got: 4 }
        );
    }

    #[test]
    fn identity_anchor_registers_participant() {
        let (mut chain, io, _, _) = setup();
        let alice = signer("alice");
        assert!(chain.participant_key(&alice.id).is_none());
        chain
            .append_anchor(
                AnchorKind::IdentityAnchor,
                digest(b"vc"),
                identity_summary(&alice, digest(b"vc")),
                &io,
                Tick(1),
            )
            .unwrap();
        assert_eq!(chain.participant_key(&alice.id), Some(alice.public()));
        // alice can now author
        chain
            .append_anchor(AnchorKind::ContractEvent, digest(b"e"), BTreeMap::new(), &alice, Tick(1))
            .unwrap();
        // registering alice again is refused
        assert!(matches!(
            chain.append_anchor(
                AnchorKind::IdentityAnchor,
                digest(b"vc2"),
                identity_summary(&alice, digest(b"vc2")),
                &io,
                Tick(2)
            ),
            Err(RegistryError::AlreadyRegistered(_))
        ));
        assert!(chain.is_valid());
    }

    #[test]
    fn resolve_and_revoke_lifecycle() {
        let (mut chain, io, lr, _) = setup();
        let alice = signer("alice");
        let cred = digest(b"alice-vc");
        chain
            .append_anchor(AnchorKind::IdentityAnchor, cred, identity_summary(&alice, cred), &io, Tick(1))
            .unwrap();
        let r = chain.resolve(&alice.id);
        assert_eq!(r.status, ResolutionStatus::Valid);
        assert_eq!(r.anchor.unwrap().kind, AnchorKind::IdentityAnchor);
        assert_eq!(chain.resolve(&digest(b"nobody")).status, ResolutionStatus::NotFound);

        assert_eq!(chain.revoke(&cred, &lr, Tick(2)).unwrap_err(), RegistryError::NotIssuer);
        assert!(matches!(
            chain.revoke(&digest(b"nope"), &io, Tick(2)),
            Err(RegistryError::UnknownCredential(_))
        ));
        chain.revoke(&cred, &io, Tick(2)).unwrap();
        assert_eq!(chain.resolve(&alice.id).status, ResolutionStatus::Revoked);
        assert_eq!(chain.credential_status(&cred), CredentialStatus::Revoked);
        assert_eq!(chain.revoke(&cred, &io, Tick(3)).unwrap_err(), RegistryError::AlreadyRevoked);
        assert!(chain.is_valid());
    }

    #[test]
    fn jsonl_round_trip_is_bit_exact() {
        let (mut chain, io, _, _) = setup();
        let alice = signer("alice");
        let cred = digest(b"vc");
        chain
            .append_anchor(AnchorKind::IdentityAnchor, cred, identity_summary(&alice, cred), &io, Tick(1))
            .unwrap();
        chain
            .append_anchor(AnchorKind::ContractEvent, digest(b"e"), BTreeMap::new(), &alice, Tick(2))
            .unwrap();
        let text = chain.to_jsonl();
        let back = AnchorChain::from_jsonl(chain.genesis().clone(), &text).unwrap();
        assert_eq!(back, chain);
        assert_eq!(back.to_jsonl(), text);
        assert!(back.is_valid());
    }

    #[test]
    fn empty_chain_is_valid() {
        let (chain, ..) = setup();
        assert!(chain.is_valid());
        assert_eq!(chain.head_digest(), DigestId::ZERO);
    }

    #[test]
    fn relinked_forgery_fails_on_signature() {
        let (mut chain, io, _, _) = setup();
        for t in 0..3 {
            chain
                .append_anchor(AnchorKind::ContractEvent, digest(&[t]), BTreeMap::new(), &io, Tick(t as u64))
                .unwrap();
        }
        // rewrite anchor 1 and repair every link after it
        let mut anchors = chain.anchors().to_vec();
        anchors[1].payload_digest = digest(b"forged");
        for i in 2..anchors.len() {
            anchors[i].prev_digest = anchors[i - 1].digest();
        }
        let head = anchors.last().unwrap().digest();
        let forged = AnchorChain::from_parts(chain.genesis().clone(), anchors, head).unwrap();
        assert_eq!(
            forged.verify().unwrap_err(),
            ChainFault {
                index: 1,
                reason: FaultReason::BadSignature
            }
        );
    }

    #[test]
    fn canonical_round_trip() {
        let (mut chain, io, _, _) = setup();
        let a = chain
            .append_anchor(
                AnchorKind::ContractEvent,
                digest(b"x"),
                BTreeMap::from([("event".into(), "published".into())]),
                &io,
                Tick(9),
            )
            .unwrap();
        let bytes = a.to_canonical();
        let back = LedgerAnchor::from_canonical(&bytes).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_canonical(), bytes);
    }

    /// Applies one scripted operation, ignoring refusals.
    fn apply_op(chain: &mut AnchorChain, offices: &(Signer, Signer), people: &[Signer], op: (u8, u8, u8), clock: &mut u64) {
        let (io, lr) = offices;
        *clock += u64::from(op.2 % 3);
        let who = &people[op.1 as usize % people.len()];
        let cred = digest(format!("vc-{}", who.id.to_hex()).as_bytes());
        let _ = match op.0 % 4 {
            0 => chain.append_anchor(AnchorKind::IdentityAnchor, cred, identity_summary(who, cred), io, Tick(*clock)),
            1 => chain.revoke(&cred, io, Tick(*clock)),
            2 => chain.revoke(&cred, lr, Tick(*clock)),
            _ => chain.append_anchor(AnchorKind::ContractEvent, digest(&[op.1]), BTreeMap::new(), who, Tick(*clock)),
        };
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

        #[test]
        fn appends_never_rewrite_history_and_revocation_sticks(
            ops in proptest::collection::vec((0u8..4, 0u8..6, 0u8..3), 0..40)
        ) {
            let run = || {
                let (mut chain, io, lr, _) = setup();
                let people: Vec<Signer> = (0..6).map(|i| signer(&format!("person{i}"))).collect();
                let mut clock = 0;
                let mut history = Vec::new();
                for op in &ops {
                    apply_op(&mut chain, &(io.clone(), lr.clone()), &people, *op, &mut clock);
                    let status: Vec<_> = people.iter().map(|p| chain.resolve(&p.id).status).collect();
                    history.push((chain.anchors().to_vec(), status));
                }
                (chain, people, history)
            };
            let (chain, people, history) = run();
            chain.verify().unwrap();
            for (prefix, _) in &history {
                proptest::prop_assert_eq!(&chain.anchors()[..prefix.len()], &prefix[..]);
            }
            let (again, _, _) = run();
            proptest::prop_assert_eq!(again.anchors(), chain.anchors());
            for i in 0..people.len() {
                let revoked_at = history.iter().position(|(_, s)| s[i] == ResolutionStatus::Revoked);
                if let Some(k) = revoked_at {
                    for (_, later) in &history[k..] {
                        proptest::prop_assert_eq!(later[i], ResolutionStatus::Revoked);
                    }
                }
            }
        }
    }
}
