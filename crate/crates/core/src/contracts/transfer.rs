//! Transfer contracts: publication, offers, owner control and settlement.
//!
//! Every operation first calls [`TransferContract::poll`], which applies
//! the clock-driven transitions (start, payment timeout, lifetime elapse).

use std::cmp::Reverse;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::capability::{CapabilityContract, CapabilityState, PERMISSION_OFFER};
use super::fees::{Rates, Split};
use super::handshake::{MarketplaceController, RejectReason};
use super::treasury::{tax_authority_account, Treasury};
use super::ContractError;
use crate::codec::Encoder;
use crate::credential::{
    CredentialSchema, CredentialError, LinkageProof, Presentation, VerifiableCredential, Wallet,
};
use crate::crypto::{digest, digest_parts, DigestId, Signer};
use crate::registry::{keys, AnchorChain, AnchorKind, AuthorityRole, CredentialStatus, LedgerAnchor};
use crate::store::{ContentId, ContentStore, WatermarkRecord};
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferState {
    PendingOwnerApproval,
    Published,
    Running,
    Suspended,
    Terminated,
    WinnerSelected,
    AwaitingPayment,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OfferStatus {
    Active,
    Withdrawn,
    Fined,
    Winner,
    RefundPending,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offer {
    pub bidder_context_id: DigestId,
    pub amount: u64,
    pub deposit: u64,
    pub placed_at: Tick,
    pub status: OfferStatus,
    /// Opening of the bidder's durable identity, for the owner only.
    pub linkage: LinkageProof,
}

/// Offer book entry as shown to bidders and the marketplace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicOffer {
    pub index: usize,
    pub bidder_context_id: DigestId,
    pub amount: u64,
    pub placed_at: Tick,
    pub status: OfferStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalRequest {
    pub contract_id: DigestId,
    pub reserve: u64,
    pub commission: u64,
    pub tax: u64,
    pub owner_net_at_reserve: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
pub enum OwnerAction {
    Extend { new_end: Tick },
    Suspend,
    Resume,
    Terminate,
}

impl OwnerAction {
    pub fn name(&self) -> &'static str {
        match self {
            OwnerAction::Extend { .. } => "extend",
            OwnerAction::Suspend => "suspend",
            OwnerAction::Resume => "resume",
            OwnerAction::Terminate => "terminate",
        }
    }
}

/// Everything a bidder hands over to place an offer.
#[derive(Debug, Clone)]
pub struct OfferSubmission {
    /// Signed under the context identity, answering a controller nonce.
    pub presentation: Presentation,
    pub context_credential: VerifiableCredential,
    pub linkage: LinkageProof,
    pub base_credential: VerifiableCredential,
    pub amount: u64,
}

#[derive(Debug, Clone)]
pub struct OfferReceipt {
    pub index: usize,
    pub deposit: u64,
    pub dossier_envelope: Vec<u8>,
    pub watermark: WatermarkRecord,
}

#[derive(Debug, Clone)]
pub struct Settlement {
    pub transfer_anchor: LedgerAnchor,
    pub deed_cid: ContentId,
    pub dossier_cid: ContentId,
    pub split: Split,
    pub new_owner: DigestId,
}

/// Shared world state an operation may touch.
pub struct Env<'a> {
    pub chain: &'a mut AnchorChain,
    pub store: &'a mut ContentStore,
    pub treasury: &'a mut Treasury,
    pub controller: &'a mut MarketplaceController,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferContract {
    pub contract_id: DigestId,
    pub capability: CapabilityContract,
    pub marketplace_id: DigestId,
    /// `digest(share_id)`; the share id itself is held by the owner only.
    pub share_commitment: Option<DigestId>,
    pub rates: Rates,
    pub state: TransferState,
    pub end: Tick,
    pub suspended_from: Option<TransferState>,
    pub offers: Vec<Offer>,
    pub escrow: BTreeMap<DigestId, u64>,
    /// Fines, forfeited deposits and gas-fee shares.
    pub retained: u64,
    pub winner: Option<usize>,
    pub payment_deadline: Option<Tick>,
    /// Winner whose payment window lapsed since the last acceptance.
    pub timed_out_winner: Option<usize>,
    pub approval: ApprovalRequest,
    pub dossier_cid: ContentId,
    pub deed_cid: Option<ContentId>,
    pub new_owner: Option<DigestId>,
}

/// Checks the five deployment conditions and returns the contract awaiting
/// the owner's approval.
///
/// 1. the capability is signed by its owner's registered key;
/// 2. the registry binds the property to the owner and the dossier is in
///    the store;
/// 3. the start lies in the future;
/// 4. the rates are sound, giving commission and tax for the approval;
/// 5. neither the access policy nor a delegation lets the owner bid.
pub fn deploy_transfer(
    controller: &MarketplaceController,
    capability: &mut CapabilityContract,
    chain: &AnchorChain,
    store: &ContentStore,
    clock: Tick,
) -> Result<(TransferContract, ApprovalRequest), ContractError> {
    if capability.state != CapabilityState::Created {
        return Err(ContractError::CapabilityNotCreated);
    }
    let cap = &*capability;

    let by_owner = chain.participant_key(&cap.owner_id) == Some(cap.owner_public_key)
        && cap.signature_valid(&cap.owner_public_key);
    if !by_owner {
        return Err(ContractError::ConditionFailed(1));
    }

    let res = chain.resolve(&cap.property_id);
    let linked = res.is_valid()
        && res.owner() == Some(cap.owner_id)
        && chain.credential_status(&cap.property_vc_ref) == CredentialStatus::Valid
        && chain
            .issuance_anchor(&cap.property_vc_ref)
            .and_then(|a| a.summary(keys::SUBJECT))
            == Some(cap.property_id)
        && cap.bindings.contains(&cap.owns_binding())
        && store.contains(&cap.dossier_cid);
    if !linked {
        return Err(ContractError::ConditionFailed(2));
    }

    if cap.st <= clock {
        return Err(ContractError::ConditionFailed(3));
    }

    let rates = controller.rates;
    if rates.validate().is_err() {
        return Err(ContractError::ConditionFailed(4));
    }

    let owner_may_bid = cap
        .access_policy
        .iter()
        .any(|g| g.agent == cap.owner_public_key && g.permission == PERMISSION_OFFER)
        || cap
            .delegations
            .iter()
            .any(|d| d.delegatee == cap.owner_id && d.permission == PERMISSION_OFFER);
    if owner_may_bid {
        return Err(ContractError::ConditionFailed(5));
    }

    let mut enc = Encoder::with_domain("deedchain/transfer-contract/v1");
    cap.capability_id.encode(&mut enc);
    controller.id().encode(&mut enc);
    enc.u64(clock.0);
    let contract_id = digest(enc.as_slice());
    let split = rates.split(cap.rt);
    let approval = ApprovalRequest {
        contract_id,
        reserve: cap.rt,
        commission: split.commission,
        tax: split.tax,
        owner_net_at_reserve: split.to_owner,
    };

    capability.state = CapabilityState::Deployed;
    let contract = TransferContract {
        contract_id,
        capability: capability.clone(),
        marketplace_id: controller.id(),
        share_commitment: None,
        rates,
        state: TransferState::PendingOwnerApproval,
        end: capability.end,
        suspended_from: None,
        offers: Vec::new(),
        escrow: BTreeMap::new(),
        retained: 0,
        winner: None,
        payment_deadline: None,
        timed_out_winner: None,
        approval: approval.clone(),
        dossier_cid: capability.dossier_cid,
        deed_cid: None,
        new_owner: None,
    };
    Ok((contract, approval))
}

/// `digest(contract_id ‖ owner_id ‖ salt)`.
pub fn share_id_for(contract_id: &DigestId, owner_id: &DigestId, salt: &[u8]) -> DigestId {
    digest_parts(&[contract_id.bytes(), owner_id.bytes(), salt])
}

impl TransferContract {
    pub fn escrow_total(&self) -> u64 {
        self.escrow.values().sum()
    }

    /// Tokens held by the contract.
    pub fn held(&self) -> u64 {
        self.escrow_total() + self.retained
    }

    pub fn offer_book(&self) -> Vec<PublicOffer> {
        self.offers
            .iter()
            .enumerate()
            .map(|(index, o)| PublicOffer {
                index,
                bidder_context_id: o.bidder_context_id,
                amount: o.amount,
                placed_at: o.placed_at,
                status: o.status,
            })
            .collect()
    }

    /// Index of the best active offer: highest amount, earliest placed.
    pub fn highest_active(&self) -> Option<usize> {
        self.offers
            .iter()
            .enumerate()
            .filter(|(_, o)| o.status == OfferStatus::Active)
            .max_by_key(|(i, o)| (o.amount, Reverse(o.placed_at), Reverse(*i)))
            .map(|(i, _)| i)
    }

    pub fn dump(&self) -> String {
        serde_json::to_string_pretty(self).expect("contract serializes")
    }

    fn check_share(&self, share_id: &DigestId) -> Result<(), ContractError> {
        match self.share_commitment {
            Some(c) if c == digest(share_id.bytes()) => Ok(()),
            _ => Err(ContractError::BadShareId),
        }
    }

    fn illegal(&self, action: &str) -> ContractError {
        ContractError::IllegalTransition {
            state: self.state,
            action: action.to_string(),
        }
    }

    fn anchor_event(&self, chain: &mut AnchorChain, host: &Signer, event: &str, clock: Tick) -> Result<(), ContractError> {
        let summary = BTreeMap::from([
            (keys::CONTRACT.to_string(), self.contract_id.to_hex()),
            (keys::EVENT.to_string(), event.to_string()),
            (keys::PROPERTY.to_string(), self.capability.property_id.to_hex()),
        ]);
        let payload = digest(self.dump().as_bytes());
        chain.append_anchor(AnchorKind::ContractEvent, payload, summary, host, clock)?;
        Ok(())
    }

    /// Moves an offer's deposit out of escrow: `to_bidder` back to the
    /// bidder, the rest retained.
    fn release(&mut self, idx: usize, to_bidder: u64, treasury: &mut Treasury) {
        let o = &self.offers[idx];
        let (bidder, deposit) = (o.bidder_context_id, o.deposit);
        debug_assert!(to_bidder <= deposit);
        let slot = self.escrow.get_mut(&bidder).expect("escrowed");
        *slot -= deposit;
        if *slot == 0 {
            self.escrow.remove(&bidder);
        }
        treasury.credit(&bidder, to_bidder);
        self.retained += deposit - to_bidder;
    }

    fn refund_all_in_full(&mut self, treasury: &mut Treasury) {
        for i in 0..self.offers.len() {
            let s = self.offers[i].status;
            if matches!(s, OfferStatus::Active | OfferStatus::Winner | OfferStatus::RefundPending) {
                let d = self.offers[i].deposit;
                self.release(i, d, treasury);
                self.offers[i].status = OfferStatus::Refunded;
            }
        }
    }

    /// Applies clock-driven transitions and names the ones that fired.
    pub fn poll(&mut self, treasury: &mut Treasury, clock: Tick) -> Vec<&'static str> {
        let mut fired = Vec::new();
        if self.state == TransferState::Published && clock >= self.capability.st {
            self.state = TransferState::Running;
            fired.push("started");
        }
        if self.state == TransferState::AwaitingPayment
            && self.payment_deadline.is_some_and(|d| clock > d)
        {
            let w = self.winner.take().expect("winner while awaiting payment");
            self.release(w, 0, treasury);
            self.offers[w].status = OfferStatus::Fined;
            self.timed_out_winner = Some(w);
            for o in &mut self.offers {
                if o.status == OfferStatus::RefundPending {
                    o.status = OfferStatus::Active;
                }
            }
            self.payment_deadline = None;
            self.state = TransferState::Running;
            fired.push("payment-timeout");
        }
        let open = matches!(
            self.state,
            TransferState::Published | TransferState::Running | TransferState::Suspended
        );
        if open && clock > self.end {
            self.refund_all_in_full(treasury);
            self.state = TransferState::Terminated;
            self.capability.state = CapabilityState::Closed;
            fired.push("elapsed");
        }
        fired
    }

    /// Owner's decision on the approval request. Returns the share id.
    pub fn approve(
        &mut self,
        owner: &mut Wallet,
        accept: bool,
        env: &mut Env<'_>,
        clock: Tick,
    ) -> Result<DigestId, ContractError> {
        if self.state != TransferState::PendingOwnerApproval {
            return Err(self.illegal("approve"));
        }
        if owner.subject_id() != self.capability.owner_id {
            return Err(ContractError::NotOwner);
        }
        if !accept {
            self.state = TransferState::Terminated;
            self.capability.state = CapabilityState::Closed;
            return Err(ContractError::ApprovalDenied);
        }
        let salt = owner.fresh_bytes();
        let share_id = share_id_for(&self.contract_id, &self.capability.owner_id, &salt);
        self.share_commitment = Some(digest(share_id.bytes()));
        self.state = TransferState::Published;
        self.poll(env.treasury, clock);
        self.anchor_event(env.chain, &env.controller.signer, "published", clock)?;
        Ok(share_id)
    }

    pub fn make_offer(
        &mut self,
        env: &mut Env<'_>,
        sub: OfferSubmission,
        clock: Tick,
    ) -> Result<OfferReceipt, ContractError> {
        self.poll(env.treasury, clock);
        if !matches!(self.state, TransferState::Published | TransferState::Running) {
            return Err(ContractError::ContractNotOpen);
        }
        env.controller
            .redeem(&sub.presentation, clock)
            .map_err(ContractError::Presentation)?;

        let ctx = &sub.context_credential;
        if ctx.schema != CredentialSchema::ContextDerived {
            return Err(ContractError::Presentation(RejectReason::Unresolved));
        }
        ctx.verify(env.chain, clock).map_err(ContractError::CredentialInvalid)?;
        let p = &sub.presentation;
        if p.holder_id != ctx.subject_id
            || !p.credential_refs.contains(&ctx.credential_id)
            || !p.verify_signature(&ctx.subject_public_key)
        {
            return Err(ContractError::Presentation(RejectReason::Signature));
        }
        if sub.linkage.context_subject_id != ctx.subject_id || !sub.linkage.verify(&sub.base_credential) {
            return Err(ContractError::LinkageInvalid);
        }
        sub.base_credential
            .verify(env.chain, clock)
            .map_err(ContractError::CredentialInvalid)?;

        let base = sub.linkage.base_subject_id;
        let owner = self.capability.owner_id;
        let delegated_owner = self
            .capability
            .delegations
            .iter()
            .any(|d| d.delegatee == base && d.delegator == owner);
        if base == owner || ctx.subject_id == owner || delegated_owner {
            return Err(ContractError::OwnerSelfBid);
        }
        let live = |o: &&Offer| matches!(o.status, OfferStatus::Active | OfferStatus::Winner);
        if self
            .offers
            .iter()
            .filter(live)
            .any(|o| o.bidder_context_id == ctx.subject_id || o.linkage.base_subject_id == base)
        {
            return Err(ContractError::ActiveOfferExists);
        }
        if sub.amount < self.capability.rt {
            return Err(ContractError::BelowReserve {
                amount: sub.amount,
                reserve: self.capability.rt,
            });
        }

        let deposit = self.rates.deposit_for(sub.amount);
        if env.treasury.balance(&ctx.subject_id) < deposit {
            return Err(ContractError::InsufficientBalance {
                needed: deposit,
                available: env.treasury.balance(&ctx.subject_id),
            });
        }
        let (envelope, watermark) = env.store.get_watermarked(
            &self.dossier_cid,
            &self.capability.owner_name,
            &ctx.subject_id,
            &self.marketplace_id,
            env.chain,
            clock,
        )?;
        env.treasury.debit(&ctx.subject_id, deposit)?;
        *self.escrow.entry(ctx.subject_id).or_default() += deposit;
        self.offers.push(Offer {
            bidder_context_id: ctx.subject_id,
            amount: sub.amount,
            deposit,
            placed_at: clock,
            status: OfferStatus::Active,
            linkage: sub.linkage,
        });
        Ok(OfferReceipt {
            index: self.offers.len() - 1,
            deposit,
            dossier_envelope: envelope,
            watermark,
        })
    }

    /// Authenticates the holder of a presentation under its registered key.
    fn authenticate(env: &mut Env<'_>, p: &Presentation, clock: Tick) -> Result<DigestId, ContractError> {
        env.controller.redeem(p, clock).map_err(ContractError::Presentation)?;
        let key = env
            .chain
            .participant_key(&p.holder_id)
            .ok_or(ContractError::Presentation(RejectReason::Unresolved))?;
        if !p.verify_signature(&key) {
            return Err(ContractError::Presentation(RejectReason::Signature));
        }
        Ok(p.holder_id)
    }

    pub fn withdraw_offer(
        &mut self,
        env: &mut Env<'_>,
        presentation: &Presentation,
        clock: Tick,
    ) -> Result<Offer, ContractError> {
        self.poll(env.treasury, clock);
        if !matches!(
            self.state,
            TransferState::Published | TransferState::Running | TransferState::Suspended
        ) {
            return Err(ContractError::ContractNotOpen);
        }
        let bidder = Self::authenticate(env, presentation, clock)?;
        let idx = self
            .offers
            .iter()
            .position(|o| o.bidder_context_id == bidder && o.status == OfferStatus::Active)
            .ok_or(ContractError::NoActiveOffer)?;
        if clock >= self.end.saturating_sub(self.rates.last_minutes_window) {
            return Err(ContractError::TooLateToWithdraw);
        }
        let deposit = self.offers[idx].deposit;
        let fine = self.rates.withdrawal_fine(deposit);
        self.release(idx, deposit - fine, env.treasury);
        self.offers[idx].status = if fine > 0 {
            OfferStatus::Fined
        } else {
            OfferStatus::Withdrawn
        };
        Ok(self.offers[idx].clone())
    }

    pub fn owner_control(
        &mut self,
        env: &mut Env<'_>,
        share_id: &DigestId,
        action: OwnerAction,
        clock: Tick,
    ) -> Result<(), ContractError> {
        self.poll(env.treasury, clock);
        self.check_share(share_id)?;
        use TransferState as S;
        match (self.state, action) {
            (S::Published | S::Running | S::Suspended, OwnerAction::Extend { new_end }) => {
                if new_end <= self.end {
                    return Err(ContractError::InvalidExtension {
                        end: self.end,
                        requested: new_end,
                    });
                }
                self.end = new_end;
            }
            (S::Published | S::Running, OwnerAction::Suspend) => {
                self.suspended_from = Some(self.state);
                self.state = S::Suspended;
            }
            (S::Suspended, OwnerAction::Resume) => {
                self.state = self.suspended_from.take().unwrap_or(S::Running);
                self.poll(env.treasury, clock);
            }
            (
                S::Published | S::Running | S::Suspended | S::WinnerSelected | S::AwaitingPayment,
                OwnerAction::Terminate,
            ) => {
                self.refund_all_in_full(env.treasury);
                self.winner = None;
                self.payment_deadline = None;
                self.state = S::Terminated;
                self.capability.state = CapabilityState::Closed;
            }
            _ => return Err(self.illegal(action.name())),
        }
        self.anchor_event(env.chain, &env.controller.signer, action.name(), clock)
    }

    pub fn accept_offer(
        &mut self,
        env: &mut Env<'_>,
        share_id: &DigestId,
        index: usize,
        clock: Tick,
    ) -> Result<(), ContractError> {
        self.poll(env.treasury, clock);
        self.check_share(share_id)?;
        if self.state != TransferState::Running {
            return Err(self.illegal("accept"));
        }
        match self.offers.get(index) {
            Some(o) if o.status == OfferStatus::Active => {}
            _ => return Err(ContractError::NoSuchOffer(index)),
        }
        self.state = TransferState::WinnerSelected;
        self.winner = Some(index);
        self.timed_out_winner = None;
        for (i, o) in self.offers.iter_mut().enumerate() {
            if i == index {
                o.status = OfferStatus::Winner;
            } else if o.status == OfferStatus::Active {
                o.status = OfferStatus::RefundPending;
            }
        }
        self.payment_deadline = Some(clock.plus(self.rates.payment_timeout));
        self.state = TransferState::AwaitingPayment;
        self.anchor_event(env.chain, &env.controller.signer, "winner-selected", clock)
    }

    /// Accepts the best active offer, ties going to the earliest placed.
    pub fn accept_highest(
        &mut self,
        env: &mut Env<'_>,
        share_id: &DigestId,
        clock: Tick,
    ) -> Result<usize, ContractError> {
        self.poll(env.treasury, clock);
        self.check_share(share_id)?;
        if self.state != TransferState::Running {
            return Err(self.illegal("accept"));
        }
        let idx = self.highest_active().ok_or(ContractError::NoSuchOffer(self.offers.len()))?;
        self.accept_offer(env, share_id, idx, clock)?;
        Ok(idx)
    }

    /// Returns the deposit of a losing offer, minus the gas-fee share.
    pub fn claim_refund(
        &mut self,
        env: &mut Env<'_>,
        presentation: &Presentation,
        index: usize,
        clock: Tick,
    ) -> Result<u64, ContractError> {
        self.poll(env.treasury, clock);
        let bidder = Self::authenticate(env, presentation, clock).map_err(|e| match e {
            ContractError::Presentation(RejectReason::Signature | RejectReason::Unresolved) => {
                ContractError::IdentityMismatch
            }
            other => other,
        })?;
        let offer = self.offers.get(index).ok_or(ContractError::NoSuchOffer(index))?;
        if offer.bidder_context_id != bidder {
            return Err(ContractError::IdentityMismatch);
        }
        if offer.status != OfferStatus::RefundPending {
            return Err(ContractError::NothingToRefund);
        }
        let refund = offer.deposit - self.rates.gas_fee(offer.deposit);
        self.release(index, refund, env.treasury);
        self.offers[index].status = OfferStatus::Refunded;
        Ok(refund)
    }

    /// Owner-only opening of a bidder's durable identity.
    pub fn disclose_bidder(&self, share_id: &DigestId, index: usize) -> Result<LinkageProof, ContractError> {
        self.check_share(share_id)?;
        self.offers
            .get(index)
            .map(|o| o.linkage.clone())
            .ok_or(ContractError::NoSuchOffer(index))
    }

    /// Takes the winner's remaining payment, splits the proceeds and
    /// rebinds the property on the registry.
    pub fn finalize_transfer(
        &mut self,
        env: &mut Env<'_>,
        presentation: &Presentation,
        payment: u64,
        land_registry: &Signer,
        clock: Tick,
    ) -> Result<Settlement, ContractError> {
        self.poll(env.treasury, clock);
        if self.state != TransferState::AwaitingPayment && self.timed_out_winner.is_some() {
            return Err(ContractError::PaymentTimeout);
        }
        if self.state != TransferState::AwaitingPayment {
            return Err(self.illegal("pay"));
        }
        if env.chain.authority(AuthorityRole::LandRegistry).id != land_registry.id {
            return Err(ContractError::NotLandRegistry);
        }
        let payer = Self::authenticate(env, presentation, clock)?;
        let w = self.winner.expect("winner while awaiting payment");
        let offer = self.offers[w].clone();
        if payer != offer.bidder_context_id {
            return Err(ContractError::IdentityMismatch);
        }
        let expected = offer.amount - offer.deposit;
        if payment != expected {
            return Err(ContractError::WrongPaymentAmount { expected, got: payment });
        }
        let mut dossier = env.store.open_dossier(&self.dossier_cid, None)?;
        env.treasury.debit(&payer, payment)?;

        let slot = self.escrow.get_mut(&payer).expect("winner escrowed");
        *slot -= offer.deposit;
        if *slot == 0 {
            self.escrow.remove(&payer);
        }
        let split = self.rates.split(offer.amount);
        env.treasury.credit(&self.marketplace_id, split.commission);
        env.treasury.credit(&tax_authority_account(), split.tax);
        env.treasury.credit(&self.capability.owner_id, split.to_owner);

        let new_owner = offer.linkage.base_subject_id;
        let mut deed = Encoder::with_domain("deedchain/deed/v1");
        self.contract_id.encode(&mut deed);
        self.capability.property_id.encode(&mut deed);
        self.capability.owner_id.encode(&mut deed);
        new_owner.encode(&mut deed);
        deed.u64(offer.amount).u64(clock.0);
        let deed_cid = env.store.put(deed.as_slice());
        dossier.transfer_history.push(deed_cid);
        let dossier_cid = env.store.pin_dossier(&dossier, None)?;

        let summary = BTreeMap::from([
            (keys::SUBJECT.to_string(), self.capability.property_id.to_hex()),
            (keys::OWNER.to_string(), new_owner.to_hex()),
            (keys::PREVIOUS_OWNER.to_string(), self.capability.owner_id.to_hex()),
            (keys::CONTRACT.to_string(), self.contract_id.to_hex()),
            (keys::DEED.to_string(), deed_cid.to_hex()),
            (keys::DESCRIPTION.to_string(), dossier_cid.to_hex()),
        ]);
        let transfer_anchor =
            env.chain
                .append_anchor(AnchorKind::TransferRecord, deed_cid.0, summary, land_registry, clock)?;

        self.state = TransferState::Completed;
        self.capability.state = CapabilityState::Closed;
        self.payment_deadline = None;
        self.dossier_cid = dossier_cid;
        self.deed_cid = Some(deed_cid);
        self.new_owner = Some(new_owner);
        Ok(Settlement {
            transfer_anchor,
            deed_cid,
            dossier_cid,
            split,
            new_owner,
        })
    }
}

impl From<CredentialError> for ContractError {
    fn from(e: CredentialError) -> Self {
        ContractError::CredentialInvalid(e)
    }
}
