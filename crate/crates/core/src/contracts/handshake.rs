//! Challenge-response between an owner and the marketplace controller.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::capability::ContractType;
use super::fees::Rates;
use super::ContractError;
use crate::codec::Encoder;
use crate::credential::{CredentialSchema, Presentation, VerifiableCredential};
use crate::crypto::{digest, DigestId, PublicKey, Signer};
use crate::registry::AnchorChain;
use crate::Tick;

/// Attributes an owner must disclose to open a transfer.
pub const CHALLENGE_POLICY: [&str; 3] = ["name", "owner_subject", "map_location"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "reason")]
pub enum RejectReason {
    AttributeShortfall { missing: Vec<String> },
    Unresolved,
    Signature,
    Binding,
    Nonce,
    Timestamp,
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::AttributeShortfall { .. } => "attribute-shortfall",
            RejectReason::Unresolved => "unresolved",
            RejectReason::Signature => "signature",
            RejectReason::Binding => "binding",
            RejectReason::Nonce => "nonce",
            RejectReason::Timestamp => "timestamp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Open,
    Challenged,
    Verified,
    Rejected(RejectReason),
}

/// What the owner asks the marketplace for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub acct: ContractType,
    /// Property digest.
    pub property_id: DigestId,
    pub owner_public_key: PublicKey,
    pub device_binding: DigestId,
    pub location_binding: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandshakeSession {
    pub session_id: u64,
    pub request: AccessRequest,
    #[serde(with = "crate::credential::hex_vec")]
    pub nonce: Vec<u8>,
    pub challenge_policy: Vec<String>,
    pub presentation: Option<Presentation>,
    pub verdict: Verdict,
    pub opened_at: Tick,
}

impl HandshakeSession {
    pub fn is_verified(&self) -> bool {
        self.verdict == Verdict::Verified
    }
}

/// Single-use challenge nonces. A nonce is consumed the first time any
/// presentation carrying it is checked, whatever the outcome.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NonceRegistry {
    outstanding: BTreeMap<String, Tick>,
    used: BTreeSet<String>,
}

impl NonceRegistry {
    pub fn is_used(&self, nonce: &[u8]) -> bool {
        self.used.contains(&hex::encode(nonce))
    }

    pub fn used_count(&self) -> usize {
        self.used.len()
    }

    fn register(&mut self, nonce: &[u8], at: Tick) -> bool {
        let key = hex::encode(nonce);
        if self.used.contains(&key) || self.outstanding.contains_key(&key) {
            return false;
        }
        self.outstanding.insert(key, at);
        true
    }

    /// Consumes `nonce`, returning the tick it was issued at.
    fn consume(&mut self, nonce: &[u8]) -> Option<Tick> {
        let key = hex::encode(nonce);
        let issued = self.outstanding.remove(&key)?;
        self.used.insert(key);
        Some(issued)
    }
}

/// The marketplace's verifier and contract host.
pub struct MarketplaceController {
    pub signer: Signer,
    pub credential: VerifiableCredential,
    pub rates: Rates,
    rng: ChaCha20Rng,
    pub nonces: NonceRegistry,
    next_session: u64,
}

impl std::fmt::Debug for MarketplaceController {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MarketplaceController")
            .field("id", &self.signer.id)
            .field("rates", &self.rates)
            .finish_non_exhaustive()
    }
}

impl MarketplaceController {
    pub fn new(
        signer: Signer,
        credential: VerifiableCredential,
        rates: Rates,
        chain: &AnchorChain,
        clock: Tick,
    ) -> Result<Self, ContractError> {
        let ctl = Self {
            rng: ChaCha20Rng::from_seed(*controller_seed(&signer).bytes()),
            signer,
            credential,
            rates,
            nonces: NonceRegistry::default(),
            next_session: 0,
        };
        ctl.check_registered(chain, clock)?;
        Ok(ctl)
    }

    pub fn id(&self) -> DigestId {
        self.signer.id
    }

    fn check_registered(&self, chain: &AnchorChain, clock: Tick) -> Result<(), ContractError> {
        let vc = &self.credential;
        let ok = vc.schema == CredentialSchema::Marketplace
            && vc.subject_id == self.signer.id
            && vc.subject_public_key == self.signer.public()
            && vc.verify(chain, clock).is_ok();
        if ok {
            Ok(())
        } else {
            Err(ContractError::UnknownMarketplace)
        }
    }

    /// Issues a fresh challenge nonce.
    pub fn issue_nonce(&mut self, clock: Tick) -> Vec<u8> {
        loop {
            let mut n = vec![0u8; 16];
            self.rng.fill_bytes(&mut n);
            if self.nonces.register(&n, clock) {
                return n;
            }
        }
    }

    /// Consumes the presentation's nonce and checks its timestamp.
    pub fn redeem(&mut self, p: &Presentation, clock: Tick) -> Result<(), RejectReason> {
        let issued = self.nonces.consume(&p.nonce).ok_or(RejectReason::Nonce)?;
        self.check_timestamp(p, issued, clock)
    }

    fn check_timestamp(&self, p: &Presentation, issued: Tick, clock: Tick) -> Result<(), RejectReason> {
        let fresh = p.timestamp >= issued
            && p.timestamp <= clock
            && clock.0 - p.timestamp.0 <= self.rates.presentation_validity;
        if fresh {
            Ok(())
        } else {
            Err(RejectReason::Timestamp)
        }
    }

    /// Opens a session and answers it with a challenge.
    pub fn request_transfer_access(
        &mut self,
        request: AccessRequest,
        chain: &AnchorChain,
        clock: Tick,
    ) -> Result<HandshakeSession, ContractError> {
        self.check_registered(chain, clock)?;
        let session_id = self.next_session;
        self.next_session += 1;
        let nonce = self.issue_nonce(clock);
        Ok(HandshakeSession {
            session_id,
            request,
            nonce,
            challenge_policy: CHALLENGE_POLICY.iter().map(|s| s.to_string()).collect(),
            presentation: None,
            verdict: Verdict::Challenged,
            opened_at: clock,
        })
    }

    /// Runs the five checks in order and returns the decided session.
    ///
    /// 1. disclosed attributes cover the policy and come from credentials
    ///    that resolve on the ledger;
    /// 2. the holder signature verifies under the requesting key;
    /// 3. device and location bindings match the request;
    /// 4. the nonce is this session's and has not been used;
    /// 5. the timestamp is inside the validity window.
    pub fn verify_presentation(
        &mut self,
        session: &HandshakeSession,
        presentation: Presentation,
        credentials: &[VerifiableCredential],
        chain: &AnchorChain,
        clock: Tick,
    ) -> Result<HandshakeSession, ContractError> {
        if session.verdict != Verdict::Challenged {
            return Err(ContractError::StaleSession);
        }
        let mut decided = session.clone();
        decided.verdict = match self.five_checks(session, &presentation, credentials, chain, clock) {
            Ok(()) => Verdict::Verified,
            Err(r) => Verdict::Rejected(r),
        };
        // the session is decided, so its nonce is dead either way
        self.nonces.consume(&session.nonce);
        decided.presentation = Some(presentation);
        Ok(decided)
    }

    fn five_checks(
        &self,
        session: &HandshakeSession,
        p: &Presentation,
        credentials: &[VerifiableCredential],
        chain: &AnchorChain,
        clock: Tick,
    ) -> Result<(), RejectReason> {
        let missing: Vec<String> = session
            .challenge_policy
            .iter()
            .filter(|a| !p.disclosed_attributes.contains_key(*a))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(RejectReason::AttributeShortfall { missing });
        }
        let referenced_ok = credentials.iter().all(|c| c.verify(chain, clock).is_ok());
        let has_property = credentials.iter().any(|c| {
            c.schema == CredentialSchema::Property && c.subject_id == session.request.property_id
        });
        if !referenced_ok || !has_property || !p.discloses_subset_of(credentials) {
            return Err(RejectReason::Unresolved);
        }

        let key = session.request.owner_public_key;
        if chain.participant_key(&p.holder_id) != Some(key) || !p.verify_signature(&key) {
            return Err(RejectReason::Signature);
        }

        if p.device_binding != session.request.device_binding
            || p.location_binding != session.request.location_binding
        {
            return Err(RejectReason::Binding);
        }

        let issued = match self.nonces.outstanding.get(&hex::encode(&p.nonce)) {
            Some(t) if p.nonce == session.nonce => *t,
            _ => return Err(RejectReason::Nonce),
        };

        self.check_timestamp(p, issued, clock)
    }
}

fn controller_seed(signer: &Signer) -> DigestId {
    let mut enc = Encoder::with_domain("deedchain/controller-rng/v1");
    enc.raw(signer.keypair.private.as_bytes());
    digest(enc.as_slice())
}
