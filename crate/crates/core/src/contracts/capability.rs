//! Capability contracts: the owner's access policy for one transfer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::handshake::HandshakeSession;
use super::ContractError;
use crate::credential::{CredentialSchema, VerifiableCredential, Wallet};
use crate::crypto::{digest, DigestId, PublicKey, Signature, Signer};
use crate::registry::{keys, AnchorChain, AnchorKind};
use crate::store::{ContentId, ContentStore};
use crate::Tick;

pub const RELATION_OWNS: &str = "owns";
pub const PERMISSION_OFFER: &str = "offer";
const CAPABILITY_DOMAIN: &[u8] = b"deedchain/capability/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractType {
    Sale,
    Lease,
    PowerOfAttorney,
}

/// The sets `A` (agents), `P` (permissions) and `R` (attributes).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessControlState {
    pub agents: BTreeSet<PublicKey>,
    pub permissions: BTreeSet<String>,
    pub attributes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Grant {
    pub agent: PublicKey,
    pub permission: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scope {
    pub permission: String,
    pub scope: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Delegation {
    pub delegator: DigestId,
    pub delegatee: DigestId,
    pub permission: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BindingRelation {
    pub from: DigestId,
    pub to: DigestId,
    pub relation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapabilityState {
    Draft,
    Created,
    Deployed,
    Closed,
}

/// Caller-supplied capability fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapabilityParams {
    pub acct: ContractType,
    pub access_control: AccessControlState,
    pub access_policy: BTreeSet<Grant>,
    pub context_attributes: BTreeSet<String>,
    pub access_scope: BTreeSet<Scope>,
    pub delegations: BTreeSet<Delegation>,
    pub bindings: BTreeSet<BindingRelation>,
    pub st: Tick,
    pub end: Tick,
    pub rt: u64,
    pub property_vc: VerifiableCredential,
    pub dossier_cid: ContentId,
    /// Uninterpreted contract metadata.
    pub metadata: BTreeMap<String, String>,
}

impl CapabilityParams {
    /// A sale with the usual owner-only policy.
    pub fn sale(
        owner: &Wallet,
        property_vc: VerifiableCredential,
        dossier_cid: ContentId,
        st: Tick,
        end: Tick,
        rt: u64,
    ) -> Self {
        let owner_key = owner.public_key();
        let perms = ["accept", "extend", "terminate", PERMISSION_OFFER, "view"];
        let attrs = ["name", "owner_subject", "map_location"];
        Self {
            acct: ContractType::Sale,
            access_control: AccessControlState {
                agents: BTreeSet::from([owner_key]),
                permissions: perms.iter().map(|s| s.to_string()).collect(),
                attributes: attrs.iter().map(|s| s.to_string()).collect(),
            },
            access_policy: ["accept", "extend", "terminate"]
                .iter()
                .map(|p| Grant {
                    agent: owner_key,
                    permission: p.to_string(),
                })
                .collect(),
            context_attributes: attrs.iter().map(|s| s.to_string()).collect(),
            access_scope: BTreeSet::from([
                Scope {
                    permission: "view".into(),
                    scope: "dossier".into(),
                },
                Scope {
                    permission: PERMISSION_OFFER.into(),
                    scope: "public".into(),
                },
            ]),
            delegations: BTreeSet::new(),
            bindings: BTreeSet::from([BindingRelation {
                from: owner.subject_id(),
                to: property_vc.subject_id,
                relation: RELATION_OWNS.into(),
            }]),
            st,
            end,
            rt,
            property_vc,
            dossier_cid,
            metadata: BTreeMap::new(),
        }
    }

    fn sanity(&self) -> Result<(), ContractError> {
        let bad = |m: &str| Err(ContractError::InvalidParams(m.to_string()));
        let ac = &self.access_control;
        if self.st >= self.end {
            return bad("start must precede end");
        }
        if self.rt == 0 {
            return bad("reserve must be positive");
        }
        if !self.context_attributes.is_subset(&ac.attributes) {
            return bad("context attributes outside R");
        }
        if self
            .access_policy
            .iter()
            .any(|g| !ac.agents.contains(&g.agent) || !ac.permissions.contains(&g.permission))
        {
            return bad("access policy outside A x P");
        }
        if self.access_scope.iter().any(|s| !ac.permissions.contains(&s.permission)) {
            return bad("access scope outside P");
        }
        if self.delegations.iter().any(|d| !ac.permissions.contains(&d.permission)) {
            return bad("delegation outside P");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilityContract {
    pub capability_id: DigestId,
    pub owner_id: DigestId,
    pub owner_public_key: PublicKey,
    pub owner_name: String,
    pub acct: ContractType,
    pub access_control: AccessControlState,
    pub access_policy: BTreeSet<Grant>,
    pub context_attributes: BTreeSet<String>,
    pub access_scope: BTreeSet<Scope>,
    pub delegations: BTreeSet<Delegation>,
    pub bindings: BTreeSet<BindingRelation>,
    pub st: Tick,
    pub end: Tick,
    pub rt: u64,
    pub property_id: DigestId,
    pub property_vc_ref: DigestId,
    pub dossier_cid: ContentId,
    pub metadata: BTreeMap<String, String>,
    pub created_at: Tick,
    pub state: CapabilityState,
    pub owner_signature: Signature,
}

impl CapabilityContract {
    /// Canonical JSON of every authored field; the id and signature, and
    /// the mutable state, are excluded.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut body = self.clone();
        body.capability_id = DigestId::ZERO;
        body.state = CapabilityState::Draft;
        body.owner_signature = Signature::from_slice(&[0; 64]).expect("64 bytes");
        let mut out = CAPABILITY_DOMAIN.to_vec();
        out.extend(serde_json::to_vec(&body).expect("capability serializes"));
        out
    }

    pub fn computed_id(&self) -> DigestId {
        digest(&self.signing_bytes())
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        self.capability_id == self.computed_id()
            && key.verify(self.capability_id.bytes(), &self.owner_signature)
    }

    pub fn owns_binding(&self) -> BindingRelation {
        BindingRelation {
            from: self.owner_id,
            to: self.property_id,
            relation: RELATION_OWNS.into(),
        }
    }
}

/// Checks owner binding then timing, and on success anchors the capability.
///
/// Owner binding holds when the session's requesting key is the caller's,
/// the property credential is live, names the caller as owner, matches the
/// registry's current binding, `B` holds exactly that one `owns` relation,
/// and every delegation originates from the caller.
pub fn create_capability(
    owner: &Wallet,
    session: &HandshakeSession,
    params: CapabilityParams,
    host: &Signer,
    chain: &mut AnchorChain,
    store: &ContentStore,
    clock: Tick,
) -> Result<CapabilityContract, ContractError> {
    if !session.is_verified() {
        return Err(ContractError::SessionNotVerified);
    }
    params.sanity()?;

    let owner_id = owner.subject_id();
    let vc = &params.property_vc;
    let property_id = vc.subject_id;
    let owns: Vec<&BindingRelation> = params
        .bindings
        .iter()
        .filter(|b| b.relation == RELATION_OWNS)
        .collect();
    let bound = session.request.owner_public_key == owner.public_key()
        && vc.schema == CredentialSchema::Property
        && vc.verify(chain, clock).is_ok()
        && vc.subject_id == session.request.property_id
        && vc.attributes.get("owner_subject") == Some(&owner_id.to_hex())
        && chain.resolve(&property_id).is_valid()
        && chain.resolve(&property_id).owner() == Some(owner_id)
        && owns.len() == 1
        && owns[0].from == owner_id
        && owns[0].to == property_id
        && params.delegations.iter().all(|d| d.delegator == owner_id);
    if !bound {
        return Err(ContractError::NotOwner);
    }
    if clock >= params.st {
        return Err(ContractError::TimingViolation { now: clock, st: params.st });
    }
    if !store.contains(&params.dossier_cid) {
        return Err(ContractError::UnresolvedDossier);
    }

    let owner_name = session
        .presentation
        .as_ref()
        .and_then(|p| p.disclosed_attributes.get("name").cloned())
        .unwrap_or_default();
    let mut cap = CapabilityContract {
        capability_id: DigestId::ZERO,
        owner_id,
        owner_public_key: owner.public_key(),
        owner_name,
        acct: params.acct,
        access_control: params.access_control,
        access_policy: params.access_policy,
        context_attributes: params.context_attributes,
        access_scope: params.access_scope,
        delegations: params.delegations,
        bindings: params.bindings,
        st: params.st,
        end: params.end,
        rt: params.rt,
        property_id,
        property_vc_ref: params.property_vc.credential_id,
        dossier_cid: params.dossier_cid,
        metadata: params.metadata,
        created_at: clock,
        state: CapabilityState::Draft,
        owner_signature: Signature::from_slice(&[0; 64]).expect("64 bytes"),
    };
    cap.capability_id = cap.computed_id();
    cap.owner_signature = owner.signer().sign(cap.capability_id.bytes());
    cap.state = CapabilityState::Created;

    let summary = BTreeMap::from([
        (keys::CONTRACT.to_string(), cap.capability_id.to_hex()),
        (keys::EVENT.to_string(), "capability-created".to_string()),
        (keys::PROPERTY.to_string(), property_id.to_hex()),
    ]);
    chain.append_anchor(AnchorKind::ContractEvent, cap.capability_id, summary, host, clock)?;
    Ok(cap)
}
