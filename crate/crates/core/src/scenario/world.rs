use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    check_invariants, ActorSpec, ContractReport, EventRecord, OfferReport, PropertyReport, Role,
    RunReport, ScenarioConfig, ScenarioScript, ScriptEvent,
};
use crate::contracts::{
    create_capability, deploy_transfer, tax_authority_account, AccessRequest, CapabilityContract,
    CapabilityParams, ContractType, Env, Grant, MarketplaceController, OfferStatus, OfferSubmission,
    OwnerAction, TransferContract, Treasury, Verdict, HandshakeSession,
};
use crate::credential::{CredentialSchema, VerifiableCredential, Wallet};
use crate::crypto::{digest, digest_parts, identity_digest, keypair_from_seed, DigestId, KeyPair, Signer};
use crate::issuance::{
    derive_context_credential, issue_owner_vc, start_property_registration, ApproveAll, BoundProperty,
    OwnerRegistration, PropertyRegistration, RegistrationEvent,
};
use crate::mnemonic::MnemonicPhrase;
use crate::registry::{AnchorChain, AnchorKind, Genesis, keys};
use crate::store::{ContentId, ContentStore, MediaItem, PropertyDossier};
use crate::{MapLocation, Tick};

fn yes() -> bool {
    true
}

/// A parsed script action. The acting actor comes from the event.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "action", content = "params", rename_all = "snake_case")]
pub enum Action {
    /// Full registration and issuance in one step.
    Onboard {},
    Apply {
        /// Claim the address of another actor.
        #[serde(default)]
        target: Option<String>,
    },
    ReceiveMailOne {},
    RotateKeys {},
    ReceiveMailTwo {},
    RotatePassphrase {},
    ConfirmAttributes {},
    Issue {},
    DeriveContext {
        label: String,
    },
    FundContext {
        label: String,
        amount: u64,
    },
    RegisterProperty {
        property: String,
        lat_micro: i64,
        lon_micro: i64,
        #[serde(default)]
        prior_owner: Option<String>,
        #[serde(default)]
        proofs: Option<Vec<String>>,
        #[serde(default)]
        description: String,
    },
    ConfirmPriorOwner {
        property: String,
    },
    BindProperty {
        property: String,
    },
    RequestAccess {
        property: String,
        marketplace: String,
        session: String,
    },
    Present {
        session: String,
        #[serde(default)]
        omit: Vec<String>,
        #[serde(default)]
        replay_from: Option<String>,
    },
    CreateCapability {
        session: String,
        contract: String,
        st: u64,
        end: u64,
        rt: u64,
        #[serde(default)]
        grant_owner_offer: bool,
        #[serde(default)]
        metadata: BTreeMap<String, String>,
    },
    Deploy {
        contract: String,
    },
    Approve {
        contract: String,
        #[serde(default = "yes")]
        accept: bool,
    },
    Offer {
        contract: String,
        context: String,
        amount: u64,
    },
    Withdraw {
        contract: String,
        context: String,
    },
    Control {
        contract: String,
        op: String,
        #[serde(default)]
        new_end: Option<u64>,
    },
    Accept {
        contract: String,
        /// Offer index; the best active offer when absent.
        #[serde(default)]
        offer: Option<usize>,
    },
    Refund {
        contract: String,
        context: String,
    },
    Pay {
        contract: String,
        context: String,
        #[serde(default)]
        shortfall: u64,
    },
    Revoke {
        #[serde(default)]
        target: Option<String>,
    },
    Tick {},
}

impl Action {
    pub fn parse(name: &str, params: &Value) -> Result<Self, String> {
        let params = if params.is_null() { json!({}) } else { params.clone() };
        serde_json::from_value(json!({ "action": name, "params": params })).map_err(|e| e.to_string())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Onboard {} => "onboard",
            Action::Apply { .. } => "apply",
            Action::ReceiveMailOne {} => "receive_mail_one",
            Action::RotateKeys {} => "rotate_keys",
            Action::ReceiveMailTwo {} => "receive_mail_two",
            Action::RotatePassphrase {} => "rotate_passphrase",
            Action::ConfirmAttributes {} => "confirm_attributes",
            Action::Issue {} => "issue",
            Action::DeriveContext { .. } => "derive_context",
            Action::FundContext { .. } => "fund_context",
            Action::RegisterProperty { .. } => "register_property",
            Action::ConfirmPriorOwner { .. } => "confirm_prior_owner",
            Action::BindProperty { .. } => "bind_property",
            Action::RequestAccess { .. } => "request_access",
            Action::Present { .. } => "present",
            Action::CreateCapability { .. } => "create_capability",
            Action::Deploy { .. } => "deploy",
            Action::Approve { .. } => "approve",
            Action::Offer { .. } => "offer",
            Action::Withdraw { .. } => "withdraw",
            Action::Control { .. } => "control",
            Action::Accept { .. } => "accept",
            Action::Refund { .. } => "refund",
            Action::Pay { .. } => "pay",
            Action::Revoke { .. } => "revoke",
            Action::Tick {} => "tick",
        }
    }

    fn contract(&self) -> Option<&str> {
        match self {
            Action::CreateCapability { contract, .. }
            | Action::Deploy { contract }
            | Action::Approve { contract, .. }
            | Action::Offer { contract, .. }
            | Action::Withdraw { contract, .. }
            | Action::Control { contract, .. }
            | Action::Accept { contract, .. }
            | Action::Refund { contract, .. }
            | Action::Pay { contract, .. } => Some(contract),
            _ => None,
        }
    }
}

pub struct Actor {
    pub spec: ActorSpec,
    /// The key the actor rotates to during registration.
    pub keypair: KeyPair,
    pub address: String,
    pub registration: Option<OwnerRegistration>,
    pub wallet: Option<Wallet>,
    pub base_vc: Option<VerifiableCredential>,
    /// Share ids this actor received as contract owner.
    pub shares: BTreeMap<String, DigestId>,
}

impl Actor {
    pub fn subject_id(&self) -> DigestId {
        identity_digest(&self.keypair)
    }
}

pub struct PropertyEntry {
    pub owner: String,
    pub registration: PropertyRegistration,
    pub proofs: Vec<ContentId>,
    pub description: String,
    pub bound: Option<BoundProperty>,
    pub dossier: Option<ContentId>,
}

pub struct SessionEntry {
    pub owner: String,
    pub marketplace: String,
    pub property: String,
    pub session: HandshakeSession,
}

pub struct ContractEntry {
    pub marketplace: String,
    pub owner: String,
    pub contract: TransferContract,
}

pub struct Offices {
    pub identity: Signer,
    pub land: Signer,
    pub registrar: Signer,
}

/// All state of one scenario run.
pub struct World {
    pub seed: String,
    pub config: ScenarioConfig,
    pub clock: Tick,
    pub offices: Offices,
    pub chain: AnchorChain,
    pub store: ContentStore,
    pub treasury: Treasury,
    pub actors: BTreeMap<String, Actor>,
    pub controllers: BTreeMap<String, MarketplaceController>,
    pub properties: BTreeMap<String, PropertyEntry>,
    pub sessions: BTreeMap<String, SessionEntry>,
    pub capabilities: BTreeMap<String, CapabilityContract>,
    pub contracts: BTreeMap<String, ContractEntry>,
    pub log: Vec<EventRecord>,
    office_secret: [u8; 32],
    office_rng: ChaCha20Rng,
}

impl fmt::Debug for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("World")
            .field("clock", &self.clock)
            .field("anchors", &self.chain.len())
            .field("contracts", &self.contracts.len())
            .finish_non_exhaustive()
    }
}

fn seeded_pair(parts: &[&[u8]]) -> KeyPair {
    keypair_from_seed(digest_parts(parts).bytes()).expect("32-byte seed")
}

/// Short error code from a Debug rendering: the variant path with any
/// struct fields and long payloads dropped.
fn error_code<E: fmt::Debug>(e: &E) -> String {
    let full = format!("{e:?}");
    let mut s = full.split(" {").next().unwrap_or_default().to_string();
    if s.len() > 48 || s.contains("DigestId") || s.contains('"') {
        s = s.split('(').take(2).collect::<Vec<_>>().join("(");
        s.truncate(48);
    }
    let open = s.matches('(').count().saturating_sub(s.matches(')').count());
    s.push_str(&")".repeat(open));
    s
}

type Outcome = Result<Done, (String, String)>;

#[derive(Default)]
struct Done {
    detail: String,
    nonce: Option<Vec<u8>>,
}

fn done(detail: impl Into<String>) -> Outcome {
    Ok(Done {
        detail: detail.into(),
        nonce: None,
    })
}

fn fail<E: fmt::Debug + fmt::Display>(e: E) -> (String, String) {
    (error_code(&e), e.to_string())
}

fn missing(what: &str, name: &str) -> (String, String) {
    ("Missing".to_string(), format!("no {what} {name:?}"))
}

impl World {
    pub fn new(script: &ScenarioScript) -> Self {
        let seed = script.seed.as_bytes();
        let offices = Offices {
            identity: Signer::new(seeded_pair(&[b"office/identity", seed])),
            land: Signer::new(seeded_pair(&[b"office/land-registry", seed])),
            registrar: Signer::new(seeded_pair(&[b"office/marketplace-registrar", seed])),
        };
        let chain = AnchorChain::new(Genesis::new(&offices.identity, &offices.land, &offices.registrar))
            .expect("distinct offices");
        let store = ContentStore::new(Self::store_operator(&script.seed));
        let mut treasury = Treasury::new();
        let mut actors = BTreeMap::new();
        for spec in &script.actors {
            let keypair = seeded_pair(&[b"actor/key", spec.seed.as_bytes()]);
            treasury.mint(
                identity_digest(&keypair),
                spec.balance.unwrap_or(script.config.initial_balance),
            );
            actors.insert(
                spec.label.clone(),
                Actor {
                    address: format!("{} residence", spec.label),
                    spec: spec.clone(),
                    keypair,
                    registration: None,
                    wallet: None,
                    base_vc: None,
                    shares: BTreeMap::new(),
                },
            );
        }
        Self {
            seed: script.seed.clone(),
            config: script.config.clone(),
            clock: Tick(0),
            offices,
            chain,
            store,
            treasury,
            actors,
            controllers: BTreeMap::new(),
            properties: BTreeMap::new(),
            sessions: BTreeMap::new(),
            capabilities: BTreeMap::new(),
            contracts: BTreeMap::new(),
            log: Vec::new(),
            office_secret: *digest_parts(&[b"office/secret", seed]).bytes(),
            office_rng: ChaCha20Rng::from_seed(*digest_parts(&[b"office/rng", seed]).bytes()),
        }
    }

    /// The content store operator of every world built from `seed`.
    pub fn store_operator(seed: &str) -> Signer {
        Signer::new(seeded_pair(&[b"store/operator", seed.as_bytes()]))
    }

    /// Tokens in external accounts plus tokens held by contracts.
    pub fn supply(&self) -> u64 {
        self.treasury.total() + self.contracts.values().map(|c| c.contract.held()).sum::<u64>()
    }

    pub fn step(&mut self, event: &ScriptEvent, action: Action) -> EventRecord {
        self.act(event.at_tick, &event.actor, action)
    }

    /// Executes one action at `tick` and appends its record to the log.
    pub fn act(&mut self, tick: u64, actor: &str, action: Action) -> EventRecord {
        self.clock = self.clock.max(Tick(tick));
        let clock = self.clock;
        let mut auto = Vec::new();
        for (name, entry) in self.contracts.iter_mut() {
            for t in entry.contract.poll(&mut self.treasury, clock) {
                auto.push(format!("{name}:{t}"));
            }
        }
        let op = action.name().to_string();
        let contract = action.contract().map(str::to_string);
        let outcome = if self.actors.contains_key(actor) {
            self.dispatch(actor, action, clock)
        } else {
            Err(missing("actor", actor))
        };
        let principal = self
            .actors
            .get(actor)
            .and_then(|a| a.wallet.as_ref())
            .map(|w| w.subject_id());
        let (result, detail, nonce) = match outcome {
            Ok(d) => ("ok".to_string(), d.detail, d.nonce.map(hex::encode)),
            Err((code, msg)) => (format!("error:{code}"), msg, None),
        };
        let record = EventRecord {
            seq: self.log.len(),
            tick: clock,
            actor: actor.to_string(),
            op,
            contract,
            principal,
            result,
            detail,
            nonce,
            auto,
            supply: self.supply(),
            minted: self.treasury.minted(),
            chain_len: self.chain.len(),
            head: self.chain.head_digest(),
        };
        self.log.push(record.clone());
        record
    }

    fn fresh_office_bytes(&mut self) -> [u8; 32] {
        let mut b = [0u8; 32];
        self.office_rng.fill_bytes(&mut b);
        b
    }

    fn wallet(&self, actor: &str) -> Result<&Wallet, (String, String)> {
        self.actors[actor]
            .wallet
            .as_ref()
            .ok_or_else(|| ("NoCredential".to_string(), format!("{actor} holds no credential")))
    }

    fn registration_step(&mut self, label: &str, step: &str, clock: Tick) -> Outcome {
        let actor = &self.actors[label];
        let honest = actor.spec.role != Role::Attacker;
        let reg = actor
            .registration
            .clone()
            .ok_or_else(|| ("NoRegistration".to_string(), format!("{label} has not applied")))?;
        let mailbox = if honest { reg.mailbox() } else { Default::default() };
        // an attacker never sees the mail, so it substitutes its own guesses
        let guess = seeded_pair(&[b"attacker/guess", actor.spec.seed.as_bytes()]);
        let event = match step {
            "receive_mail_one" => RegistrationEvent::ReceiveMailOne,
            "receive_mail_two" => RegistrationEvent::ReceiveMailTwo,
            "rotate_keys" => {
                let temp = mailbox.temp_keypair.unwrap_or(guess);
                RegistrationEvent::rotate_keys(&temp, actor.keypair.clone())
            }
            "rotate_passphrase" => {
                let mailed = match mailbox.mnemonic {
                    Some(m) => m,
                    None => MnemonicPhrase::from_entropy(&self.fresh_office_bytes()[..16]).expect("16 bytes"),
                };
                let entropy = digest_parts(&[b"passphrase", self.actors[label].spec.seed.as_bytes()]);
                RegistrationEvent::RotatePassphrase {
                    mailed,
                    replacement: MnemonicPhrase::from_entropy(&entropy.bytes()[..16]).expect("16 bytes"),
                }
            }
            "confirm_attributes" => {
                let key = reg.final_keypair().cloned().unwrap_or(guess);
                RegistrationEvent::confirm_attributes(&key, &reg.attributes)
            }
            other => unreachable!("not a registration step: {other}"),
        };
        let next = reg.advance(&event, clock).map_err(fail)?;
        let state = next.state();
        self.actors.get_mut(label).expect("actor").registration = Some(next);
        done(format!("{state:?}"))
    }

    fn apply(&mut self, label: &str, target: Option<&str>) -> Outcome {
        let address = match target {
            Some(t) => self.actors.get(t).ok_or_else(|| missing("actor", t))?.address.clone(),
            None => self.actors[label].address.clone(),
        };
        let name = target.unwrap_or(label).to_string();
        let schema = match self.actors[label].spec.role {
            Role::Buyer => CredentialSchema::Buyer,
            Role::Marketplace => CredentialSchema::Marketplace,
            Role::Owner | Role::Attacker => CredentialSchema::Owner,
        };
        let attributes = BTreeMap::from([
            ("name".to_string(), name),
            ("address".to_string(), address.clone()),
        ]);
        let reg = OwnerRegistration::apply(address, attributes, schema, self.office_secret, &ApproveAll)
            .map_err(fail)?;
        self.actors.get_mut(label).expect("actor").registration = Some(reg);
        done("Applied")
    }

    fn issue(&mut self, label: &str, clock: Tick) -> Outcome {
        let actor = &self.actors[label];
        let reg = actor
            .registration
            .as_ref()
            .ok_or_else(|| ("NoRegistration".to_string(), format!("{label} has not applied")))?;
        let issuer = if reg.schema == CredentialSchema::Marketplace {
            &self.offices.registrar
        } else {
            &self.offices.identity
        };
        let (vc, next) = issue_owner_vc(reg, issuer, &mut self.chain, clock).map_err(fail)?;
        let pair = next.final_keypair().expect("issued").clone();
        let mut wallet = Wallet::new(label, pair.clone(), format!("{label}-device-location"));
        wallet.credentials.push(vc.clone());
        if vc.schema == CredentialSchema::Marketplace {
            let ctl = MarketplaceController::new(
                Signer::new(pair),
                vc.clone(),
                self.config.rates,
                &self.chain,
                clock,
            )
            .map_err(fail)?;
            self.controllers.insert(label.to_string(), ctl);
        }
        let actor = self.actors.get_mut(label).expect("actor");
        actor.registration = Some(next);
        actor.wallet = Some(wallet);
        actor.base_vc = Some(vc.clone());
        done(format!("credential {}", vc.credential_id.short()))
    }

    fn contract_env<'a>(
        &'a mut self,
        name: &str,
    ) -> Result<(&'a mut TransferContract, Env<'a>, &'a mut BTreeMap<String, Actor>, &'a Offices), (String, String)> {
        let World {
            contracts,
            controllers,
            chain,
            store,
            treasury,
            actors,
            offices,
            ..
        } = self;
        let entry = contracts.get_mut(name).ok_or_else(|| missing("contract", name))?;
        let controller = controllers
            .get_mut(&entry.marketplace)
            .ok_or_else(|| missing("marketplace", &entry.marketplace))?;
        Ok((
            &mut entry.contract,
            Env {
                chain,
                store,
                treasury,
                controller,
            },
            actors,
            offices,
        ))
    }

    fn dispatch(&mut self, label: &str, action: Action, clock: Tick) -> Outcome {
        match action {
            Action::Onboard {} => {
                self.apply(label, None)?;
                for step in [
                    "receive_mail_one",
                    "rotate_keys",
                    "receive_mail_two",
                    "rotate_passphrase",
                    "confirm_attributes",
                ] {
                    self.registration_step(label, step, clock)?;
                }
                self.issue(label, clock)
            }
            Action::Apply { target } => self.apply(label, target.as_deref()),
            Action::ReceiveMailOne {} => self.registration_step(label, "receive_mail_one", clock),
            Action::RotateKeys {} => self.registration_step(label, "rotate_keys", clock),
            Action::ReceiveMailTwo {} => self.registration_step(label, "receive_mail_two", clock),
            Action::RotatePassphrase {} => self.registration_step(label, "rotate_passphrase", clock),
            Action::ConfirmAttributes {} => self.registration_step(label, "confirm_attributes", clock),
            Action::Issue {} => self.issue(label, clock),

            Action::DeriveContext { label: ctx } => {
                let World { actors, chain, offices, .. } = self;
                let actor = actors.get_mut(label).expect("actor");
                let base = actor
                    .base_vc
                    .clone()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let wallet = actor.wallet.as_mut().expect("wallet with credential");
                let c = derive_context_credential(wallet, &base, &ctx, &offices.identity, chain, clock)
                    .map_err(fail)?;
                done(format!("context {}", c.credential.subject_id.short()))
            }
            Action::FundContext { label: ctx, amount } => {
                let w = self.wallet(label)?;
                let to = w
                    .contexts
                    .get(&ctx)
                    .ok_or_else(|| missing("context", &ctx))?
                    .credential
                    .subject_id;
                let from = w.subject_id();
                self.treasury.transfer(&from, &to, amount).map_err(fail)?;
                done(format!("{amount} to {ctx}"))
            }

            Action::RegisterProperty {
                property,
                lat_micro,
                lon_micro,
                prior_owner,
                proofs,
                description,
            } => {
                let owner_vc = self.actors[label]
                    .base_vc
                    .clone()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let prior = match &prior_owner {
                    Some(p) => Some(self.actors.get(p).ok_or_else(|| missing("actor", p))?.subject_id()),
                    None => None,
                };
                let texts = proofs.unwrap_or_else(|| vec![format!("deed scan for {property}")]);
                let cids: Vec<ContentId> = texts.iter().map(|t| self.store.put(t.as_bytes())).collect();
                let salt = self.fresh_office_bytes();
                let reg = start_property_registration(
                    &owner_vc,
                    cids.clone(),
                    MapLocation::new(lat_micro, lon_micro),
                    prior,
                    &self.chain,
                    &salt,
                    clock,
                )
                .map_err(fail)?;
                self.properties.insert(
                    property.clone(),
                    PropertyEntry {
                        owner: label.to_string(),
                        registration: reg,
                        proofs: cids,
                        description,
                        bound: None,
                        dossier: None,
                    },
                );
                done(format!("{property} mails dispatched"))
            }
            Action::ConfirmPriorOwner { property } => {
                let entry = self.properties.get(&property).ok_or_else(|| missing("property", &property))?;
                let presentation = match entry.registration.preceding_owner_id {
                    None => None,
                    Some(_) => {
                        let nonce = self.office_rng.next_u64().to_be_bytes().to_vec();
                        let w = self.wallet(label)?;
                        let vc = self.actors[label].base_vc.as_ref().expect("wallet with credential");
                        Some(w.present(&[vc], &["name"], nonce, clock))
                    }
                };
                let next = entry
                    .registration
                    .confirm_prior_owner(presentation.as_ref(), &self.chain)
                    .map_err(fail)?;
                let state = next.state();
                self.properties.get_mut(&property).expect("property").registration = next;
                done(format!("{state:?}"))
            }
            Action::BindProperty { property } => {
                let World {
                    properties,
                    actors,
                    offices,
                    chain,
                    store,
                    ..
                } = self;
                let entry = properties.get_mut(&property).ok_or_else(|| missing("property", &property))?;
                let actor = actors.get_mut(label).expect("actor");
                let wallet = actor
                    .wallet
                    .as_mut()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let bound = entry
                    .registration
                    .bind_property(wallet, &offices.land, chain, store, clock)
                    .map_err(fail)?;
                let property_id = bound.registration.property_id().expect("anchored");
                let dossier = PropertyDossier {
                    property_id,
                    description: entry.description.clone(),
                    media: entry
                        .proofs
                        .iter()
                        .enumerate()
                        .map(|(i, c)| MediaItem {
                            label: format!("proof-{i}"),
                            content: *c,
                        })
                        .collect(),
                    map_location: entry.registration.map_location,
                    maintenance_notes: String::new(),
                    transfer_history: Vec::new(),
                };
                let cid = store.pin_dossier(&dossier, None).map_err(fail)?;
                wallet.credentials.push(bound.credential.clone());
                entry.registration = bound.registration.clone();
                entry.dossier = Some(cid);
                entry.owner = label.to_string();
                entry.bound = Some(bound);
                done(format!("property {}", property_id.short()))
            }

            Action::RequestAccess {
                property,
                marketplace,
                session,
            } => {
                let w = self.wallet(label)?;
                let property_id = self
                    .properties
                    .get(&property)
                    .and_then(|p| p.registration.property_id())
                    .ok_or_else(|| missing("bound property", &property))?;
                let request = AccessRequest {
                    acct: ContractType::Sale,
                    property_id,
                    owner_public_key: w.public_key(),
                    device_binding: w.device_id,
                    location_binding: w.location.clone(),
                };
                let ctl = self
                    .controllers
                    .get_mut(&marketplace)
                    .ok_or_else(|| missing("marketplace", &marketplace))?;
                let s = ctl.request_transfer_access(request, &self.chain, clock).map_err(fail)?;
                let detail = format!("challenged for {}", s.challenge_policy.join(","));
                self.sessions.insert(
                    session,
                    SessionEntry {
                        owner: label.to_string(),
                        marketplace,
                        property,
                        session: s,
                    },
                );
                done(detail)
            }
            Action::Present {
                session,
                omit,
                replay_from,
            } => {
                let entry = self.sessions.get(&session).ok_or_else(|| missing("session", &session))?;
                let w = self.wallet(label)?;
                let base = self.actors[label].base_vc.clone().expect("wallet with credential");
                let mut creds = vec![base];
                if let Some(pvc) = w.credentials.iter().find(|c| {
                    c.schema == CredentialSchema::Property && c.subject_id == entry.session.request.property_id
                }) {
                    creds.push(pvc.clone());
                }
                let presentation = match &replay_from {
                    Some(other) => self
                        .sessions
                        .get(other)
                        .and_then(|s| s.session.presentation.clone())
                        .ok_or_else(|| missing("presentation in session", other))?,
                    None => {
                        let names: Vec<&str> = entry
                            .session
                            .challenge_policy
                            .iter()
                            .map(String::as_str)
                            .filter(|n| !omit.iter().any(|o| o == n))
                            .collect();
                        let refs: Vec<&VerifiableCredential> = creds.iter().collect();
                        w.present(&refs, &names, entry.session.nonce.clone(), clock)
                    }
                };
                let ctl = self
                    .controllers
                    .get_mut(&entry.marketplace)
                    .ok_or_else(|| missing("marketplace", &entry.marketplace))?;
                let decided = ctl
                    .verify_presentation(&entry.session, presentation.clone(), &creds, &self.chain, clock)
                    .map_err(fail)?;
                let verdict = decided.verdict.clone();
                self.sessions.get_mut(&session).expect("session").session = decided;
                match verdict {
                    Verdict::Verified => Ok(Done {
                        detail: "Verified".into(),
                        nonce: Some(presentation.nonce),
                    }),
                    Verdict::Rejected(r) => Err((format!("Rejected({})", r.label()), format!("{r:?}"))),
                    other => Err(("Undecided".into(), format!("{other:?}"))),
                }
            }
            Action::CreateCapability {
                session,
                contract,
                st,
                end,
                rt,
                grant_owner_offer,
                metadata,
            } => {
                let entry = self.sessions.get(&session).ok_or_else(|| missing("session", &session))?;
                let w = self.actors[label]
                    .wallet
                    .as_ref()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let property = self.properties.get(&entry.property).ok_or_else(|| missing("property", &entry.property))?;
                let dossier = property.dossier.ok_or_else(|| missing("dossier for", &entry.property))?;
                let property_vc = w
                    .credentials
                    .iter()
                    .rev()
                    .find(|c| c.schema == CredentialSchema::Property && c.subject_id == entry.session.request.property_id)
                    .cloned()
                    .or_else(|| property.bound.as_ref().map(|b| b.credential.clone()))
                    .ok_or_else(|| missing("property credential for", &entry.property))?;
                let mut params = CapabilityParams::sale(w, property_vc, dossier, Tick(st), Tick(end), rt);
                params.metadata = metadata;
                if grant_owner_offer {
                    params.access_policy.insert(Grant {
                        agent: w.public_key(),
                        permission: crate::contracts::capability::PERMISSION_OFFER.into(),
                    });
                }
                let host = &self
                    .controllers
                    .get(&entry.marketplace)
                    .ok_or_else(|| missing("marketplace", &entry.marketplace))?
                    .signer;
                let cap = create_capability(w, &entry.session, params, host, &mut self.chain, &self.store, clock)
                    .map_err(fail)?;
                let detail = format!("capability {}", cap.capability_id.short());
                self.capabilities.insert(contract, cap);
                done(detail)
            }
            Action::Deploy { contract } => {
                let ctl = self.controllers.get(label).ok_or_else(|| missing("marketplace", label))?;
                let cap = self
                    .capabilities
                    .get_mut(&contract)
                    .ok_or_else(|| missing("capability", &contract))?;
                let (tc, approval) = deploy_transfer(ctl, cap, &self.chain, &self.store, clock).map_err(fail)?;
                let owner = self
                    .actors
                    .iter()
                    .find(|(_, a)| a.wallet.as_ref().map(|w| w.subject_id()) == Some(cap.owner_id))
                    .map(|(l, _)| l.clone())
                    .unwrap_or_default();
                self.contracts.insert(
                    contract,
                    ContractEntry {
                        marketplace: label.to_string(),
                        owner,
                        contract: tc,
                    },
                );
                done(format!(
                    "approval requested: reserve {} commission {} tax {}",
                    approval.reserve, approval.commission, approval.tax
                ))
            }
            Action::Approve { contract, accept } => {
                let (tc, mut env, actors, _) = self.contract_env(&contract)?;
                let actor = actors.get_mut(label).expect("actor");
                let wallet = actor
                    .wallet
                    .as_mut()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let share = tc.approve(wallet, accept, &mut env, clock).map_err(fail)?;
                actor.shares.insert(contract, share);
                done(format!("{:?}", tc.state))
            }
            Action::Offer {
                contract,
                context,
                amount,
            } => {
                let (tc, mut env, actors, _) = self.contract_env(&contract)?;
                let actor = &actors[label];
                let w = actor
                    .wallet
                    .as_ref()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let ctx = w.contexts.get(&context).ok_or_else(|| missing("context", &context))?;
                let nonce = env.controller.issue_nonce(clock);
                let presentation = w.present_as(&context, nonce.clone(), clock).expect("context exists");
                let sub = OfferSubmission {
                    presentation,
                    context_credential: ctx.credential.clone(),
                    linkage: ctx.linkage.clone(),
                    base_credential: actor.base_vc.clone().expect("wallet with credential"),
                    amount,
                };
                let receipt = tc.make_offer(&mut env, sub, clock).map_err(fail)?;
                Ok(Done {
                    detail: format!("offer {} deposit {}", receipt.index, receipt.deposit),
                    nonce: Some(nonce),
                })
            }
            Action::Withdraw { contract, context } => {
                let (tc, mut env, actors, _) = self.contract_env(&contract)?;
                let w = actors[label]
                    .wallet
                    .as_ref()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let nonce = env.controller.issue_nonce(clock);
                let p = w
                    .present_as(&context, nonce.clone(), clock)
                    .ok_or_else(|| missing("context", &context))?;
                let offer = tc.withdraw_offer(&mut env, &p, clock).map_err(fail)?;
                Ok(Done {
                    detail: format!("{:?}, deposit {}", offer.status, offer.deposit),
                    nonce: Some(nonce),
                })
            }
            Action::Control { contract, op, new_end } => {
                let action = match (op.as_str(), new_end) {
                    ("extend", Some(e)) => OwnerAction::Extend { new_end: Tick(e) },
                    ("suspend", _) => OwnerAction::Suspend,
                    ("resume", _) => OwnerAction::Resume,
                    ("terminate", _) => OwnerAction::Terminate,
                    _ => return Err(("BadParams".into(), format!("control op {op:?}"))),
                };
                let (tc, mut env, actors, _) = self.contract_env(&contract)?;
                let share = actor_share(&actors[label], &contract);
                tc.owner_control(&mut env, &share, action, clock).map_err(fail)?;
                done(format!("{:?}", tc.state))
            }
            Action::Accept { contract, offer } => {
                let (tc, mut env, actors, _) = self.contract_env(&contract)?;
                let share = actor_share(&actors[label], &contract);
                let idx = match offer {
                    Some(i) => tc.accept_offer(&mut env, &share, i, clock).map(|_| i),
                    None => tc.accept_highest(&mut env, &share, clock),
                }
                .map_err(fail)?;
                done(format!("winner {idx}"))
            }
            Action::Refund { contract, context } => {
                let (tc, mut env, actors, _) = self.contract_env(&contract)?;
                let w = actors[label]
                    .wallet
                    .as_ref()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let subject = w.contexts.get(&context).map(|c| c.credential.subject_id);
                let index = tc
                    .offers
                    .iter()
                    .position(|o| Some(o.bidder_context_id) == subject && o.status == OfferStatus::RefundPending)
                    .or_else(|| tc.offers.iter().position(|o| Some(o.bidder_context_id) == subject))
                    .unwrap_or(0);
                let nonce = env.controller.issue_nonce(clock);
                let p = w
                    .present_as(&context, nonce.clone(), clock)
                    .ok_or_else(|| missing("context", &context))?;
                let refund = tc.claim_refund(&mut env, &p, index, clock).map_err(fail)?;
                Ok(Done {
                    detail: format!("refunded {refund}"),
                    nonce: Some(nonce),
                })
            }
            Action::Pay {
                contract,
                context,
                shortfall,
            } => {
                let (tc, mut env, actors, offices) = self.contract_env(&contract)?;
                let w = actors[label]
                    .wallet
                    .as_ref()
                    .ok_or_else(|| ("NoCredential".to_string(), format!("{label} holds no credential")))?;
                let due = tc
                    .winner
                    .map(|i| tc.offers[i].amount - tc.offers[i].deposit)
                    .unwrap_or(0);
                let nonce = env.controller.issue_nonce(clock);
                let p = w
                    .present_as(&context, nonce.clone(), clock)
                    .ok_or_else(|| missing("context", &context))?;
                let s = tc
                    .finalize_transfer(&mut env, &p, due.saturating_sub(shortfall), &offices.land, clock)
                    .map_err(fail)?;
                Ok(Done {
                    detail: format!(
                        "deed {} commission {} tax {} owner {}",
                        s.deed_cid.to_hex(),
                        s.split.commission,
                        s.split.tax,
                        s.split.to_owner
                    ),
                    nonce: Some(nonce),
                })
            }
            Action::Revoke { target } => {
                let who = target.as_deref().unwrap_or(label);
                let vc = self
                    .actors
                    .get(who)
                    .and_then(|a| a.base_vc.as_ref())
                    .ok_or_else(|| missing("credential of", who))?;
                let issuer = if vc.schema == CredentialSchema::Marketplace {
                    &self.offices.registrar
                } else {
                    &self.offices.identity
                };
                self.chain.revoke(&vc.credential_id, issuer, clock).map_err(fail)?;
                done(format!("revoked {who}"))
            }
            Action::Tick {} => done(""),
        }
    }

    /// Test hook: credits a contract's escrow out of thin air.
    #[doc(hidden)]
    pub fn inject_escrow_for_test(&mut self, contract: &str, amount: u64) {
        if let Some(c) = self.contracts.get_mut(contract) {
            *c.contract.escrow.entry(DigestId::ZERO).or_default() += amount;
        }
    }

    /// Labels for every account the world knows about.
    fn account_labels(&self) -> BTreeMap<DigestId, String> {
        let mut out = BTreeMap::new();
        out.insert(tax_authority_account(), "tax-authority".to_string());
        for (label, a) in &self.actors {
            out.insert(a.subject_id(), label.clone());
            if let Some(w) = &a.wallet {
                for (ctx, c) in &w.contexts {
                    out.insert(c.credential.subject_id, format!("{label}/{ctx}"));
                }
            }
        }
        out
    }

    pub fn balance_sheet(&self) -> BTreeMap<String, u64> {
        let labels = self.account_labels();
        let mut out = BTreeMap::new();
        for (account, bal) in self.treasury.balances() {
            let name = labels.get(account).cloned().unwrap_or_else(|| format!("account:{}", account.short()));
            *out.entry(name).or_default() += bal;
        }
        for (name, c) in &self.contracts {
            out.insert(format!("contract:{name}"), c.contract.held());
        }
        out.insert("total".to_string(), self.supply());
        out
    }

    pub fn report(&self, script: &ScenarioScript, balances_before: BTreeMap<String, u64>) -> RunReport {
        let labels = self.account_labels();
        let name_of = |id: &DigestId| labels.get(id).cloned().unwrap_or_else(|| id.short());
        let contracts = self
            .contracts
            .iter()
            .map(|(name, e)| {
                let c = &e.contract;
                (
                    name.clone(),
                    ContractReport {
                        contract_id: c.contract_id,
                        state: c.state,
                        end: c.end,
                        offers: c
                            .offers
                            .iter()
                            .map(|o| OfferReport {
                                bidder: name_of(&o.bidder_context_id),
                                amount: o.amount,
                                deposit: o.deposit,
                                placed_at: o.placed_at,
                                status: o.status,
                            })
                            .collect(),
                        escrow: c.escrow_total(),
                        retained: c.retained,
                        winner: c.winner,
                        new_owner: c.new_owner.as_ref().map(name_of),
                        deed_cid: c.deed_cid.map(|d| d.to_hex()),
                    },
                )
            })
            .collect();
        let properties = self
            .properties
            .iter()
            .map(|(name, p)| {
                let id = p.registration.property_id();
                let owner = id.and_then(|i| self.chain.resolve(&i).owner()).map(|o| name_of(&o));
                let transfers = id.map_or(0, |i| {
                    self.chain
                        .anchors()
                        .iter()
                        .filter(|a| a.kind == AnchorKind::TransferRecord && a.summary(keys::SUBJECT) == Some(i))
                        .count()
                });
                (
                    name.clone(),
                    PropertyReport {
                        property_id: id,
                        owner,
                        transfers,
                    },
                )
            })
            .collect();
        let invariants = check_invariants(&self.log, self, script.events.len());
        RunReport {
            scenario: script.name.clone(),
            seed: script.seed.clone(),
            final_tick: self.clock,
            final_head: self.chain.head_digest(),
            chain_len: self.chain.len(),
            store_objects: self.store.len(),
            contracts,
            properties,
            balances_before,
            balances_after: self.balance_sheet(),
            all_passed: invariants.iter().all(|i| i.pass),
            invariants,
            events: self.log.clone(),
            script: script.clone(),
        }
    }
}

/// The actor's share id for `contract`, or a guess if it holds none.
fn actor_share(actor: &Actor, contract: &str) -> DigestId {
    actor
        .shares
        .get(contract)
        .copied()
        .unwrap_or_else(|| digest(format!("guess:{}:{contract}", actor.spec.label).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_codes_are_short() {
        use crate::contracts::{ContractError, RejectReason};
        assert_eq!(error_code(&ContractError::ConditionFailed(3)), "ConditionFailed(3)");
        assert_eq!(
            error_code(&ContractError::Presentation(RejectReason::AttributeShortfall { missing: vec!["x".into()] })),
            "Presentation(AttributeShortfall)"
        );
        assert_eq!(
            error_code(&ContractError::WrongPaymentAmount { expected: 1, got: 2 }),
            "WrongPaymentAmount"
        );
    }

    #[test]
    fn actions_parse_with_and_without_params() {
        assert_eq!(Action::parse("tick", &Value::Null).unwrap(), Action::Tick {});
        assert_eq!(
            Action::parse("approve", &json!({"contract": "c"})).unwrap(),
            Action::Approve {
                contract: "c".into(),
                accept: true
            }
        );
        assert!(Action::parse("fly", &Value::Null).is_err());
        assert!(Action::parse("offer", &json!({"contract": "c"})).is_err());
    }
}
