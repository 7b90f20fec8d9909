//! Owner and property registration, and context-derived credentials.
//!
//! Registration secrets travel by simulated postal mail. The mail contents
//! are placed in the registration's [`Mailbox`], which stands for the
//! applicant's physical letterbox: the honest applicant reads it, an
//! impersonator does not have it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Encoder;
use crate::credential::{
    ContextIdentity, CredentialClaims, CredentialError, CredentialSchema, LinkageProof,
    Presentation, VerifiableCredential, Wallet,
};
use crate::crypto::{
    digest, digest_parts, identity_digest, keypair_from_seed, DigestId, KeyPair, PublicKey,
    Signature, Signer,
};
use crate::mnemonic::MnemonicPhrase;
use crate::registry::{keys, AnchorChain, AnchorKind, AuthorityRole, LedgerAnchor, RegistryError};
use crate::store::{ContentId, ContentStore, StoreError};
use crate::{MapLocation, Tick};

const ROTATE_DOMAIN: &str = "deedchain/rotate-keys/v1";
const CONFIRM_DOMAIN: &str = "deedchain/confirm-attributes/v1";
const PUBLIC_DESCRIPTION_DOMAIN: &str = "deedchain/public-description/v1";
const PROPERTY_BINDING_DOMAIN: &str = "deedchain/property-binding/v1";
pub const DESCRIPTION_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IssuanceError {
    #[error("event {event} is not legal in state {state}")]
    IllegalTransition { state: String, event: String },
    #[error("replacement key equals the temporary key")]
    ReusedKey,
    #[error("replacement passphrase equals the mailed one")]
    ReusedPassphrase,
    #[error("mailed secret not proven: {0}")]
    WrongSecret(&'static str),
    #[error("supplied key pair is inconsistent")]
    MalformedKeyPair,
    #[error("due diligence rejected the applicant")]
    DueDiligenceFailed,
    #[error("registration is not verified")]
    NotVerified,
    #[error("credential already issued")]
    AlreadyIssued,
    #[error("issuer is not the authority for this credential kind")]
    WrongIssuer,
    #[error("wallet key does not match the credential subject")]
    WalletKeyMismatch,
    #[error("context {0:?} already derived")]
    ContextExists(String),
    #[error("base credential invalid: {0}")]
    BaseCredential(CredentialError),
    #[error("owner credential is revoked")]
    RevokedOwnerCredential,
    #[error("owner credential invalid: {0}")]
    InvalidOwnerCredential(CredentialError),
    #[error("no proof documents supplied")]
    MissingProof,
    #[error("confirmation does not come from the preceding owner")]
    WrongConfirmer,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Vetting of physical documents at the office, injectable for tests.
pub trait DueDiligence {
    fn vet(&self, address: &str, attributes: &BTreeMap<String, String>) -> bool;
}

impl<F: Fn(&str, &BTreeMap<String, String>) -> bool> DueDiligence for F {
    fn vet(&self, address: &str, attributes: &BTreeMap<String, String>) -> bool {
        self(address, attributes)
    }
}

pub struct ApproveAll;

impl DueDiligence for ApproveAll {
    fn vet(&self, _: &str, _: &BTreeMap<String, String>) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegistrationState {
    Applied,
    MailOneSent,
    KeysRotated,
    MailTwoSent,
    PassphraseRotated,
    Verified,
    CredentialIssued,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistrationEvent {
    ReceiveMailOne,
    RotateKeys {
        new_pair: KeyPair,
        /// Temporary key's signature over the new public key.
        temp_proof: Signature,
    },
    ReceiveMailTwo,
    RotatePassphrase {
        mailed: MnemonicPhrase,
        replacement: MnemonicPhrase,
    },
    ConfirmAttributes {
        /// Final key's signature over the registered attributes.
        confirmation: Signature,
    },
}

impl RegistrationEvent {
    pub fn name(&self) -> &'static str {
        match self {
            RegistrationEvent::ReceiveMailOne => "receive_mail_one",
            RegistrationEvent::RotateKeys { .. } => "rotate_keys",
            RegistrationEvent::ReceiveMailTwo => "receive_mail_two",
            RegistrationEvent::RotatePassphrase { .. } => "rotate_passphrase",
            RegistrationEvent::ConfirmAttributes { .. } => "confirm_attributes",
        }
    }

    pub fn rotate_keys(temp: &KeyPair, new_pair: KeyPair) -> Self {
        let temp_proof = temp.sign(&rotation_message(&new_pair.public));
        RegistrationEvent::RotateKeys {
            new_pair,
            temp_proof,
        }
    }

    pub fn confirm_attributes(final_pair: &KeyPair, attributes: &BTreeMap<String, String>) -> Self {
        RegistrationEvent::ConfirmAttributes {
            confirmation: final_pair.sign(&confirmation_message(attributes)),
        }
    }
}

pub fn rotation_message(new_public: &PublicKey) -> Vec<u8> {
    let mut enc = Encoder::with_domain(ROTATE_DOMAIN);
    new_public.encode(&mut enc);
    enc.finish()
}

pub fn confirmation_message(attributes: &BTreeMap<String, String>) -> Vec<u8> {
    let mut enc = Encoder::with_domain(CONFIRM_DOMAIN);
    enc.str_map(attributes);
    enc.finish()
}

/// What the post has delivered to the applicant's address so far.
#[derive(Debug, Clone, Default)]
pub struct Mailbox {
    pub temp_keypair: Option<KeyPair>,
    pub mnemonic: Option<MnemonicPhrase>,
}

#[derive(Clone)]
pub struct OwnerRegistration {
    pub applicant_address: String,
    pub schema: CredentialSchema,
    pub attributes: BTreeMap<String, String>,
    state: RegistrationState,
    temp_keypair: Option<KeyPair>,
    final_keypair: Option<KeyPair>,
    mailed_mnemonic: Option<MnemonicPhrase>,
    mnemonic: Option<MnemonicPhrase>,
    office_secret: [u8; 32],
    credential_id: Option<DigestId>,
}

impl fmt::Debug for OwnerRegistration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OwnerRegistration")
            .field("address", &self.applicant_address)
            .field("schema", &self.schema)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

impl OwnerRegistration {
    /// Opens a registration after the office has vetted the applicant.
    pub fn apply(
        address: impl Into<String>,
        attributes: BTreeMap<String, String>,
        schema: CredentialSchema,
        office_secret: [u8; 32],
        diligence: &dyn DueDiligence,
    ) -> Result<Self, IssuanceError> {
        let address = address.into();
        if !diligence.vet(&address, &attributes) {
            return Err(IssuanceError::DueDiligenceFailed);
        }
        Ok(Self {
            applicant_address: address,
            schema,
            attributes,
            state: RegistrationState::Applied,
            temp_keypair: None,
            final_keypair: None,
            mailed_mnemonic: None,
            mnemonic: None,
            office_secret,
            credential_id: None,
        })
    }

    pub fn state(&self) -> RegistrationState {
        self.state
    }

    pub fn final_keypair(&self) -> Option<&KeyPair> {
        self.final_keypair.as_ref()
    }

    pub fn temp_public(&self) -> Option<PublicKey> {
        self.temp_keypair.as_ref().map(|k| k.public)
    }

    pub fn passphrase(&self) -> Option<&MnemonicPhrase> {
        self.mnemonic.as_ref()
    }

    pub fn credential_id(&self) -> Option<DigestId> {
        self.credential_id
    }

    /// The applicant's letterbox.
    pub fn mailbox(&self) -> Mailbox {
        Mailbox {
            temp_keypair: self.temp_keypair.clone(),
            mnemonic: self.mailed_mnemonic.clone(),
        }
    }

    fn office_derived(&self, purpose: &str, clock: Tick) -> DigestId {
        digest_parts(&[
            purpose.as_bytes(),
            &self.office_secret,
            self.applicant_address.as_bytes(),
            &clock.0.to_be_bytes(),
        ])
    }

    /// Applies one event. Illegal or unauthenticated events leave `self`
    /// untouched and return an error.
    pub fn advance(&self, event: &RegistrationEvent, clock: Tick) -> Result<Self, IssuanceError> {
        use RegistrationEvent as E;
        use RegistrationState as S;
        let mut next = self.clone();
        match (self.state, event) {
            (S::Applied, E::ReceiveMailOne) => {
                let seed = self.office_derived("mail-one/temp-key", clock);
                next.temp_keypair = Some(keypair_from_seed(seed.bytes()).expect("32-byte seed"));
                next.state = S::MailOneSent;
            }
            (S::MailOneSent, E::RotateKeys { new_pair, temp_proof }) => {
                let temp = self.temp_keypair.as_ref().expect("set with mail one");
                if KeyPair::from_private(*new_pair.private.as_bytes()).public != new_pair.public {
                    return Err(IssuanceError::MalformedKeyPair);
                }
                if new_pair.public == temp.public {
                    return Err(IssuanceError::ReusedKey);
                }
                if !temp.public.verify(&rotation_message(&new_pair.public), temp_proof) {
                    return Err(IssuanceError::WrongSecret("temporary key"));
                }
                next.final_keypair = Some(new_pair.clone());
                // rotation triggers the second mail request
                next.state = S::KeysRotated;
            }
            (S::KeysRotated, E::ReceiveMailTwo) => {
                let entropy = self.office_derived("mail-two/passphrase", clock);
                next.mailed_mnemonic = Some(
                    MnemonicPhrase::from_entropy(&entropy.bytes()[..16]).expect("16 bytes"),
                );
                next.state = S::MailTwoSent;
            }
            (S::MailTwoSent, E::RotatePassphrase { mailed, replacement }) => {
                if Some(mailed) != self.mailed_mnemonic.as_ref() {
                    return Err(IssuanceError::WrongSecret("mailed passphrase"));
                }
                if replacement == mailed {
                    return Err(IssuanceError::ReusedPassphrase);
                }
                next.mnemonic = Some(replacement.clone());
                next.state = S::PassphraseRotated;
            }
            (S::PassphraseRotated, E::ConfirmAttributes { confirmation }) => {
                let key = self.final_keypair.as_ref().expect("set on rotation");
                if !key
                    .public
                    .verify(&confirmation_message(&self.attributes), confirmation)
                {
                    return Err(IssuanceError::WrongSecret("account key"));
                }
                next.state = S::Verified;
            }
            (state, event) => {
                return Err(IssuanceError::IllegalTransition {
                    state: format!("{state:?}"),
                    event: event.name().to_string(),
                })
            }
        }
        Ok(next)
    }
}

fn issuer_role(schema: CredentialSchema) -> AuthorityRole {
    match schema {
        CredentialSchema::Marketplace => AuthorityRole::MarketplaceRegistrar,
        CredentialSchema::Property => AuthorityRole::LandRegistry,
        _ => AuthorityRole::IdentityOffice,
    }
}

/// Issues the identity credential for a verified registration and anchors
/// its digest, registering the holder's public key on the chain.
pub fn issue_owner_vc(
    reg: &OwnerRegistration,
    issuer: &Signer,
    chain: &mut AnchorChain,
    clock: Tick,
) -> Result<(VerifiableCredential, OwnerRegistration), IssuanceError> {
    match reg.state {
        RegistrationState::CredentialIssued => return Err(IssuanceError::AlreadyIssued),
        RegistrationState::Verified => {}
        _ => return Err(IssuanceError::NotVerified),
    }
    if chain.authority(issuer_role(reg.schema)).id != issuer.id {
        return Err(IssuanceError::WrongIssuer);
    }
    let pair = reg.final_keypair.as_ref().expect("verified implies rotated");
    let vc = VerifiableCredential::issue(
        issuer,
        CredentialClaims {
            subject_id: identity_digest(pair),
            subject_public_key: pair.public,
            schema: reg.schema,
            attributes: reg.attributes.clone(),
            issued_at: clock,
            expiry: None,
        },
    );
    let summary = BTreeMap::from([
        (keys::SUBJECT.to_string(), vc.subject_id.to_hex()),
        (keys::PUBLIC_KEY.to_string(), vc.subject_public_key.to_hex()),
        (keys::CREDENTIAL.to_string(), vc.credential_id.to_hex()),
        (keys::SCHEMA.to_string(), reg.schema.as_str().to_string()),
    ]);
    chain.append_anchor(AnchorKind::IdentityAnchor, vc.digest(), summary, issuer, clock)?;
    let mut next = reg.clone();
    next.state = RegistrationState::CredentialIssued;
    next.credential_id = Some(vc.credential_id);
    Ok((vc, next))
}

/// Seed for keys derived "from" an owner's public key.
pub fn derived_key_seed(owner_public: &PublicKey, purpose: &str, salt: &[u8]) -> DigestId {
    digest_parts(&[owner_public.as_bytes(), purpose.as_bytes(), salt])
}

/// Derives an unlinkable per-context credential from `base_vc`.
///
/// The context subject is `digest(base_subject ‖ label ‖ salt)` with a fresh
/// wallet salt. The credential is self-issued under a derived key and
/// anchored by the identity office, which checks the linkage proof privately;
/// the anchor itself carries only the new subject, key and credential id.
pub fn derive_context_credential(
    wallet: &mut Wallet,
    base_vc: &VerifiableCredential,
    context_label: &str,
    office: &Signer,
    chain: &mut AnchorChain,
    clock: Tick,
) -> Result<ContextIdentity, IssuanceError> {
    if wallet.subject_id() != base_vc.subject_id || wallet.public_key() != base_vc.subject_public_key
    {
        return Err(IssuanceError::WalletKeyMismatch);
    }
    if wallet.contexts.contains_key(context_label) {
        return Err(IssuanceError::ContextExists(context_label.to_string()));
    }
    if chain.authority(AuthorityRole::IdentityOffice).id != office.id {
        return Err(IssuanceError::WrongIssuer);
    }
    base_vc
        .verify(chain, clock)
        .map_err(IssuanceError::BaseCredential)?;

    let salt = wallet.fresh_bytes();
    let context_subject = LinkageProof::context_subject(&base_vc.subject_id, context_label, &salt);
    let seed = derived_key_seed(&wallet.public_key(), &format!("context:{context_label}"), &salt);
    let signer = Signer::with_id(
        context_subject,
        keypair_from_seed(seed.bytes()).expect("32-byte seed"),
    );
    let credential = VerifiableCredential::issue(
        &signer,
        CredentialClaims {
            subject_id: context_subject,
            subject_public_key: signer.public(),
            schema: CredentialSchema::ContextDerived,
            attributes: BTreeMap::from([("context".to_string(), context_label.to_string())]),
            issued_at: clock,
            expiry: None,
        },
    );
    let mut linkage = LinkageProof {
        base_credential_id: base_vc.credential_id,
        base_subject_id: base_vc.subject_id,
        context_subject_id: context_subject,
        context_label: context_label.to_string(),
        salt: salt.to_vec(),
        base_signature: Signature::from_slice(&[0; 64]).expect("64 bytes"),
    };
    linkage.base_signature = wallet.signer().sign(&linkage.signing_bytes());
    debug_assert!(linkage.verify(base_vc));

    let summary = BTreeMap::from([
        (keys::SUBJECT.to_string(), context_subject.to_hex()),
        (keys::PUBLIC_KEY.to_string(), signer.public().to_hex()),
        (keys::CREDENTIAL.to_string(), credential.credential_id.to_hex()),
        (
            keys::SCHEMA.to_string(),
            CredentialSchema::ContextDerived.as_str().to_string(),
        ),
    ]);
    chain.append_anchor(
        AnchorKind::IdentityAnchor,
        credential.digest(),
        summary,
        office,
        clock,
    )?;
    let ctx = ContextIdentity {
        label: context_label.to_string(),
        signer,
        credential,
        linkage,
    };
    wallet.contexts.insert(context_label.to_string(), ctx.clone());
    Ok(ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropertyState {
    Submitted,
    MailsDispatched,
    PriorOwnerConfirmed,
    OwnerConfirmed,
    Bound,
    Anchored,
}

#[derive(Clone)]
pub struct PropertyRegistration {
    pub owner_vc_ref: DigestId,
    pub owner_id: DigestId,
    pub proof_documents: Vec<ContentId>,
    pub preceding_owner_id: Option<DigestId>,
    pub map_location: MapLocation,
    state: PropertyState,
    property_keypair: KeyPair,
    property_id: Option<DigestId>,
}

impl fmt::Debug for PropertyRegistration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PropertyRegistration")
            .field("owner", &self.owner_id)
            .field("location", &self.map_location)
            .field("state", &self.state)
            .finish_non_exhaustive()
    }
}

/// Outcome of binding a property.
#[derive(Debug, Clone)]
pub struct BoundProperty {
    pub registration: PropertyRegistration,
    pub credential: VerifiableCredential,
    pub anchor: LedgerAnchor,
    pub description: ContentId,
}

impl PropertyRegistration {
    pub fn state(&self) -> PropertyState {
        self.state
    }

    /// Key pair mailed to the owner's verified address.
    pub fn mailed_property_keypair(&self) -> &KeyPair {
        &self.property_keypair
    }

    pub fn property_id(&self) -> Option<DigestId> {
        self.property_id
    }

    fn illegal(&self, event: &str) -> IssuanceError {
        IssuanceError::IllegalTransition {
            state: format!("{:?}", self.state),
            event: event.to_string(),
        }
    }

    /// Confirms the hand-over by the preceding owner. With no preceding
    /// owner on record this advances straight to owner confirmation.
    pub fn confirm_prior_owner(
        &self,
        presentation: Option<&Presentation>,
        chain: &AnchorChain,
    ) -> Result<Self, IssuanceError> {
        if self.state != PropertyState::MailsDispatched {
            return Err(self.illegal("confirm_prior_owner"));
        }
        let mut next = self.clone();
        let Some(prior) = self.preceding_owner_id else {
            next.state = PropertyState::OwnerConfirmed;
            return Ok(next);
        };
        let p = presentation.ok_or(IssuanceError::WrongConfirmer)?;
        if p.holder_id != prior {
            return Err(IssuanceError::WrongConfirmer);
        }
        let key = chain
            .participant_key(&prior)
            .ok_or(IssuanceError::WrongConfirmer)?;
        if !p.verify_signature(&key) || !chain.resolve(&prior).is_valid() {
            return Err(IssuanceError::WrongConfirmer);
        }
        next.state = PropertyState::PriorOwnerConfirmed;
        Ok(next)
    }

    /// Issues the property credential, pins the public description and
    /// anchors the composite binding digest.
    pub fn bind_property(
        &self,
        owner_wallet: &Wallet,
        land_registry: &Signer,
        chain: &mut AnchorChain,
        store: &mut ContentStore,
        clock: Tick,
    ) -> Result<BoundProperty, IssuanceError> {
        if !matches!(
            self.state,
            PropertyState::PriorOwnerConfirmed | PropertyState::OwnerConfirmed
        ) {
            return Err(self.illegal("bind_property"));
        }
        if owner_wallet.subject_id() != self.owner_id {
            return Err(IssuanceError::WalletKeyMismatch);
        }
        if chain.authority(AuthorityRole::LandRegistry).id != land_registry.id {
            return Err(IssuanceError::WrongIssuer);
        }
        let pair = &self.property_keypair;
        let property_id = identity_digest(pair);
        let binding = property_binding_digest(&property_id, &self.map_location, &self.owner_vc_ref, &pair.public);

        let credential = VerifiableCredential::issue(
            land_registry,
            CredentialClaims {
                subject_id: property_id,
                subject_public_key: pair.public,
                schema: CredentialSchema::Property,
                attributes: BTreeMap::from([
                    ("owner_credential".to_string(), self.owner_vc_ref.to_hex()),
                    ("owner_subject".to_string(), self.owner_id.to_hex()),
                    ("map_location".to_string(), self.map_location.to_string()),
                    ("property_key".to_string(), pair.public.to_hex()),
                ]),
                issued_at: clock,
                expiry: None,
            },
        );

        let mut desc = Encoder::with_domain(PUBLIC_DESCRIPTION_DOMAIN);
        property_id.encode(&mut desc);
        self.map_location.encode(&mut desc);
        desc.str(DESCRIPTION_SCHEMA_VERSION);
        let description = store.put(desc.as_slice());

        let summary = BTreeMap::from([
            (keys::SUBJECT.to_string(), property_id.to_hex()),
            (keys::OWNER.to_string(), self.owner_id.to_hex()),
            (keys::OWNER_CREDENTIAL.to_string(), self.owner_vc_ref.to_hex()),
            (keys::CREDENTIAL.to_string(), credential.credential_id.to_hex()),
            (keys::DESCRIPTION.to_string(), description.to_hex()),
        ]);
        let anchor = chain.append_anchor(AnchorKind::PropertyAnchor, binding, summary, land_registry, clock)?;

        let mut registration = self.clone();
        registration.property_id = Some(property_id);
        registration.state = PropertyState::Anchored;
        Ok(BoundProperty {
            registration,
            credential,
            anchor,
            description,
        })
    }
}

/// Digest over (property key digest, map location, owner credential id,
/// property public key).
pub fn property_binding_digest(
    property_id: &DigestId,
    location: &MapLocation,
    owner_vc: &DigestId,
    property_public: &PublicKey,
) -> DigestId {
    let mut enc = Encoder::with_domain(PROPERTY_BINDING_DOMAIN);
    property_id.encode(&mut enc);
    location.encode(&mut enc);
    owner_vc.encode(&mut enc);
    property_public.encode(&mut enc);
    digest(enc.as_slice())
}

/// Opens a property registration at the land registry and dispatches the
/// two verification mails. `salt` is fresh office entropy.
pub fn start_property_registration(
    owner_vc: &VerifiableCredential,
    proofs: Vec<ContentId>,
    map_location: MapLocation,
    preceding_owner_id: Option<DigestId>,
    chain: &AnchorChain,
    salt: &[u8],
    clock: Tick,
) -> Result<PropertyRegistration, IssuanceError> {
    match owner_vc.verify(chain, clock) {
        Ok(()) => {}
        Err(CredentialError::Revoked) => return Err(IssuanceError::RevokedOwnerCredential),
        Err(e) => return Err(IssuanceError::InvalidOwnerCredential(e)),
    }
    if proofs.is_empty() {
        return Err(IssuanceError::MissingProof);
    }
    let seed = derived_key_seed(&owner_vc.subject_public_key, "property", salt);
    Ok(PropertyRegistration {
        owner_vc_ref: owner_vc.credential_id,
        owner_id: owner_vc.subject_id,
        proof_documents: proofs,
        preceding_owner_id,
        map_location,
        state: PropertyState::MailsDispatched,
        property_keypair: keypair_from_seed(seed.bytes()).expect("32-byte seed"),
        property_id: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::Genesis;

    struct Offices {
        identity: Signer,
        land: Signer,
        registrar: Signer,
        chain: AnchorChain,
    }

    fn offices() -> Offices {
        let s = |t: &str| Signer::new(keypair_from_seed(format!("{t:0>16}").as_bytes()).unwrap());
        let (identity, land, registrar) = (s("identity"), s("land"), s("registrar"));
        let chain = AnchorChain::new(Genesis::new(&identity, &land, &registrar)).unwrap();
        Offices {
            identity,
            land,
            registrar,
            chain,
        }
    }

    fn attrs() -> BTreeMap<String, String> {
        BTreeMap::from([
            ("name".to_string(), "Ada Owner".to_string()),
            ("date_of_birth".to_string(), "1980-01-01".to_string()),
        ])
    }

    fn honest_run(label: &str) -> OwnerRegistration {
        let mut reg = OwnerRegistration::apply(
            format!("{label} street 1"),
            attrs(),
            CredentialSchema::Owner,
            [3; 32],
            &ApproveAll,
        )
        .unwrap();
        reg = reg.advance(&RegistrationEvent::ReceiveMailOne, Tick(1)).unwrap();
        let temp = reg.mailbox().temp_keypair.unwrap();
        let fresh = keypair_from_seed(format!("{label}-final-key-seed").as_bytes()).unwrap();
        reg = reg
            .advance(&RegistrationEvent::rotate_keys(&temp, fresh.clone()), Tick(2))
            .unwrap();
        reg = reg.advance(&RegistrationEvent::ReceiveMailTwo, Tick(3)).unwrap();
        let mailed = reg.mailbox().mnemonic.unwrap();
        let replacement = MnemonicPhrase::from_entropy(&[9; 16]).unwrap();
        reg = reg
            .advance(
                &RegistrationEvent::RotatePassphrase {
                    mailed,
                    replacement,
                },
                Tick(4),
            )
            .unwrap();
        reg.advance(&RegistrationEvent::confirm_attributes(&fresh, &reg.attributes), Tick(5))
            .unwrap()
    }

    #[test]
    fn mail_one_moves_to_mail_one_sent() {
        let reg = OwnerRegistration::apply("a", attrs(), CredentialSchema::Owner, [0; 32], &ApproveAll).unwrap();
        let next = reg.advance(&RegistrationEvent::ReceiveMailOne, Tick(0)).unwrap();
        assert_eq!(next.state(), RegistrationState::MailOneSent);
        assert_eq!(reg.state(), RegistrationState::Applied);
    }

    #[test]
    fn reusing_temp_key_is_refused() {
        let reg = OwnerRegistration::apply("a", attrs(), CredentialSchema::Owner, [0; 32], &ApproveAll)
            .unwrap()
            .advance(&RegistrationEvent::ReceiveMailOne, Tick(0))
            .unwrap();
        let temp = reg.mailbox().temp_keypair.unwrap();
        let err = reg
            .advance(&RegistrationEvent::rotate_keys(&temp, temp.clone()), Tick(1))
            .unwrap_err();
        assert_eq!(err, IssuanceError::ReusedKey);
    }

    #[test]
    fn due_diligence_outcome_is_injectable() {
        let reject = |_: &str, _: &BTreeMap<String, String>| false;
        assert_eq!(
            OwnerRegistration::apply("a", attrs(), CredentialSchema::Owner, [0; 32], &reject).unwrap_err(),
            IssuanceError::DueDiligenceFailed
        );
    }

    #[test]
    fn full_sequence_then_issue_once() {
        let mut o = offices();
        let reg = honest_run("ada");
        assert_eq!(reg.state(), RegistrationState::Verified);
        let (vc, issued) = issue_owner_vc(&reg, &o.identity, &mut o.chain, Tick(6)).unwrap();
        assert_eq!(issued.state(), RegistrationState::CredentialIssued);
        assert_eq!(vc.subject_id, identity_digest(reg.final_keypair().unwrap()));
        assert_ne!(Some(reg.final_keypair().unwrap().public), reg.temp_public());
        assert!(o.chain.resolve(&vc.subject_id).is_valid());
        vc.verify(&o.chain, Tick(6)).unwrap();
        assert_eq!(
            issue_owner_vc(&issued, &o.identity, &mut o.chain, Tick(7)).unwrap_err(),
            IssuanceError::AlreadyIssued
        );
    }

    /// The six honest steps, each built from what the holder has received so far.
    fn honest_step(step: usize, reg: &OwnerRegistration, own: &KeyPair) -> Option<RegistrationEvent> {
        let mail = reg.mailbox();
        let placeholder = keypair_from_seed(b"placeholder-temp-key").unwrap();
        Some(match step {
            0 => RegistrationEvent::ReceiveMailOne,
            1 => RegistrationEvent::rotate_keys(mail.temp_keypair.as_ref().unwrap_or(&placeholder), own.clone()),
            2 => RegistrationEvent::ReceiveMailTwo,
            3 => RegistrationEvent::RotatePassphrase {
                mailed: mail.mnemonic.unwrap_or_else(|| MnemonicPhrase::from_entropy(&[1; 16]).unwrap()),
                replacement: MnemonicPhrase::from_entropy(&[2; 16]).unwrap(),
            },
            4 => RegistrationEvent::confirm_attributes(own, &reg.attributes),
            _ => return None,
        })
    }

    fn binomial(n: u128, k: u128) -> u128 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn only_the_canonical_order_issues() {
        const DEPTH: usize = 8;
        const STEPS: usize = 6;
        let o = offices();
        let own = keypair_from_seed(b"holder-final-key-seed").unwrap();
        let start = OwnerRegistration::apply("h street 1", attrs(), CredentialSchema::Owner, [5; 32], &ApproveAll).unwrap();
        let key = |r: &OwnerRegistration| {
            let m = r.mailbox();
            format!("{:?}|{:?}|{:?}", r.state(), m.temp_keypair.map(|k| k.public), m.mnemonic.map(|p| p.phrase()))
        };
        let mut frontier: BTreeMap<String, (OwnerRegistration, u128)> = BTreeMap::from([(key(&start), (start, 1))]);
        for depth in 1..=DEPTH {
            let clock = Tick(depth as u64);
            let mut next: BTreeMap<String, (OwnerRegistration, u128)> = BTreeMap::new();
            for (reg, count) in frontier.values() {
                let ordinal = reg.state() as usize;
                for step in 0..STEPS {
                    let after = match honest_step(step, reg, &own) {
                        Some(e) => reg.advance(&e, clock).ok(),
                        None => issue_owner_vc(reg, &o.identity, &mut o.chain.clone(), clock).ok().map(|(_, r)| r),
                    };
                    // an event is accepted exactly when it is the next canonical one
                    assert_eq!(after.is_some(), step == ordinal, "step {step} in {:?}", reg.state());
                    let after = after.unwrap_or_else(|| reg.clone());
                    next.entry(key(&after)).or_insert_with(|| (after, 0)).1 += count;
                }
            }
            frontier = next;

            // Issued after `depth` events: the six canonical steps, a rejected
            // events (5 choices each) interleaved before completion, and b
            // events (all 6 rejected) after it.
            let n = depth as u128;
            let expected: u128 = if n < STEPS as u128 {
                0
            } else {
                (0..=n - 6).map(|b| 6u128.pow(b as u32) * binomial(n - 6 - b + 5, 5) * 5u128.pow((n - 6 - b) as u32)).sum()
            };
            let issued: u128 = frontier
                .values()
                .filter(|(r, _)| r.state() == RegistrationState::CredentialIssued)
                .map(|(_, c)| c)
                .sum();
            assert_eq!(issued, expected, "depth {depth}");
            assert_eq!(frontier.values().map(|(_, c)| c).sum::<u128>(), 6u128.pow(depth as u32));
        }
    }

    #[test]
    fn issue_before_verification_fails() {
        let mut o = offices();
        let mut reg = OwnerRegistration::apply("a", attrs(), CredentialSchema::Owner, [0; 32], &ApproveAll).unwrap();
        reg = reg.advance(&RegistrationEvent::ReceiveMailOne, Tick(0)).unwrap();
        let temp = reg.mailbox().temp_keypair.unwrap();
        let k = keypair_from_seed(b"0123456789abcdef").unwrap();
        reg = reg.advance(&RegistrationEvent::rotate_keys(&temp, k), Tick(0)).unwrap();
        reg = reg.advance(&RegistrationEvent::ReceiveMailTwo, Tick(0)).unwrap();
        assert_eq!(reg.state(), RegistrationState::MailTwoSent);
        assert_eq!(
            issue_owner_vc(&reg, &o.identity, &mut o.chain, Tick(1)).unwrap_err(),
            IssuanceError::NotVerified
        );
    }

    #[test]
    fn marketplace_credentials_come_from_registrar() {
        let mut o = offices();
        let mut reg = honest_run("mkt");
        reg.schema = CredentialSchema::Marketplace;
        assert_eq!(
            issue_owner_vc(&reg, &o.identity, &mut o.chain, Tick(6)).unwrap_err(),
            IssuanceError::WrongIssuer
        );
        let (vc, _) = issue_owner_vc(&reg, &o.registrar, &mut o.chain, Tick(6)).unwrap();
        assert_eq!(vc.issuer_id, o.registrar.id);
    }

    fn issued_wallet(o: &mut Offices, label: &str) -> (Wallet, VerifiableCredential) {
        let reg = honest_run(label);
        let (vc, _) = issue_owner_vc(&reg, &o.identity, &mut o.chain, Tick(6)).unwrap();
        let mut w = Wallet::new(label, reg.final_keypair().unwrap().clone(), "porto");
        w.credentials.push(vc.clone());
        (w, vc)
    }

    #[test]
    fn context_credentials_are_distinct_and_provable() {
        let mut o = offices();
        let (mut w, base) = issued_wallet(&mut o, "ada");
        let a = derive_context_credential(&mut w, &base, "sale-1", &o.identity, &mut o.chain, Tick(7)).unwrap();
        let b = derive_context_credential(&mut w, &base, "sale-2", &o.identity, &mut o.chain, Tick(7)).unwrap();
        assert_ne!(a.credential.subject_id, b.credential.subject_id);
        assert!(a.linkage.verify(&base));
        assert!(!a.linkage.verify(&b.credential));
        a.credential.verify(&o.chain, Tick(8)).unwrap();
        assert_eq!(
            derive_context_credential(&mut w, &base, "sale-1", &o.identity, &mut o.chain, Tick(8)).unwrap_err(),
            IssuanceError::ContextExists("sale-1".into())
        );

        // same label, different salt
        let s1 = LinkageProof::context_subject(&base.subject_id, "x", &[1; 32]);
        let s2 = LinkageProof::context_subject(&base.subject_id, "x", &[2; 32]);
        assert_ne!(s1, s2);
    }

    #[test]
    fn context_derivation_needs_matching_wallet() {
        let mut o = offices();
        let (_, base) = issued_wallet(&mut o, "ada");
        let mut other = Wallet::new("eve", keypair_from_seed(b"eve-eve-eve-eve-").unwrap(), "x");
        assert_eq!(
            derive_context_credential(&mut other, &base, "c", &o.identity, &mut o.chain, Tick(7)).unwrap_err(),
            IssuanceError::WalletKeyMismatch
        );
    }

    #[test]
    fn property_registration_paths() {
        let mut o = offices();
        let mut store = ContentStore::new(o.registrar.clone());
        let (ada, ada_vc) = issued_wallet(&mut o, "ada");
        let (bob, bob_vc) = issued_wallet(&mut o, "bob");
        let deed = store.put(b"deed of sale");
        let loc = MapLocation::new(41_150_000, -8_610_000);

        assert_eq!(
            start_property_registration(&ada_vc, vec![], loc, None, &o.chain, b"s", Tick(8)).unwrap_err(),
            IssuanceError::MissingProof
        );

        // genesis land: no preceding owner
        let reg = start_property_registration(&ada_vc, vec![deed], loc, None, &o.chain, b"s1", Tick(8)).unwrap();
        assert_eq!(reg.state(), PropertyState::MailsDispatched);
        assert!(matches!(
            reg.bind_property(&ada, &o.land, &mut o.chain, &mut store, Tick(8)),
            Err(IssuanceError::IllegalTransition { .. })
        ));
        let reg = reg.confirm_prior_owner(None, &o.chain).unwrap();
        assert_eq!(reg.state(), PropertyState::OwnerConfirmed);
        let bound = reg.bind_property(&ada, &o.land, &mut o.chain, &mut store, Tick(9)).unwrap();
        let pid = bound.registration.property_id().unwrap();
        let res = o.chain.resolve(&pid);
        assert_eq!(res.owner(), Some(ada_vc.subject_id));
        assert_eq!(
            res.anchor.as_ref().unwrap().summary(keys::OWNER_CREDENTIAL),
            Some(ada_vc.credential_id)
        );
        assert_eq!(
            res.anchor.unwrap().payload_digest,
            property_binding_digest(&pid, &loc, &ada_vc.credential_id, &bound.credential.subject_public_key)
        );
        assert!(store.contains(&bound.description));
        bound.credential.verify(&o.chain, Tick(9)).unwrap();

        // second property, same owner
        let reg2 = start_property_registration(&ada_vc, vec![deed], loc, None, &o.chain, b"s2", Tick(10))
            .unwrap()
            .confirm_prior_owner(None, &o.chain)
            .unwrap()
            .bind_property(&ada, &o.land, &mut o.chain, &mut store, Tick(10))
            .unwrap();
        let pid2 = reg2.registration.property_id().unwrap();
        assert_ne!(pid, pid2);
        assert_eq!(o.chain.resolve(&pid2).owner(), Some(ada_vc.subject_id));

        // bob buys land previously held by ada
        let reg = start_property_registration(&bob_vc, vec![deed], loc, Some(ada_vc.subject_id), &o.chain, b"s3", Tick(11)).unwrap();
        let stranger = bob.present(&[&bob_vc], &["name"], vec![1], Tick(11));
        assert_eq!(
            reg.confirm_prior_owner(Some(&stranger), &o.chain).unwrap_err(),
            IssuanceError::WrongConfirmer
        );
        let ok = ada.present(&[&ada_vc], &["name"], vec![2], Tick(11));
        let reg = reg.confirm_prior_owner(Some(&ok), &o.chain).unwrap();
        assert_eq!(reg.state(), PropertyState::PriorOwnerConfirmed);
        assert_eq!(
            reg.bind_property(&ada, &o.land, &mut o.chain, &mut store, Tick(12)).unwrap_err(),
            IssuanceError::WalletKeyMismatch
        );
        reg.bind_property(&bob, &o.land, &mut o.chain, &mut store, Tick(12)).unwrap();
        assert!(o.chain.is_valid());
    }

    #[test]
    fn revoked_owner_cannot_register_property() {
        let mut o = offices();
        let mut store = ContentStore::new(o.registrar.clone());
        let (_, vc) = issued_wallet(&mut o, "ada");
        o.chain.revoke(&vc.credential_id, &o.identity, Tick(7)).unwrap();
        let deed = store.put(b"deed");
        assert_eq!(
            start_property_registration(&vc, vec![deed], MapLocation::new(0, 0), None, &o.chain, b"s", Tick(8)).unwrap_err(),
            IssuanceError::RevokedOwnerCredential
        );
    }
}
