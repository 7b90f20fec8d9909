//! Contract layer: capability creation, the marketplace handshake and the
//! transfer contract lifecycle, over an abstract integer token.

pub mod capability;
pub mod fees;
pub mod handshake;
pub mod transfer;
pub mod treasury;


use thiserror::Error;

use crate::credential::CredentialError;
use crate::registry::RegistryError;
use crate::store::StoreError;
use crate::Tick;

pub use capability::{
    create_capability, AccessControlState, BindingRelation, CapabilityContract, CapabilityParams,
    CapabilityState, ContractType, Delegation, Grant, Scope,
};
pub use fees::{bps_of, Rates, Split};
pub use handshake::{
    AccessRequest, HandshakeSession, MarketplaceController, NonceRegistry, RejectReason, Verdict,
    CHALLENGE_POLICY,
};
pub use transfer::{
    deploy_transfer, share_id_for, ApprovalRequest, Env, Offer, OfferReceipt, OfferStatus,
    OfferSubmission, OwnerAction, PublicOffer, Settlement, TransferContract, TransferState,
};
pub use treasury::{tax_authority_account, Treasury};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("marketplace holds no valid marketplace credential")]
    UnknownMarketplace,
    #[error("session already decided")]
    StaleSession,
    #[error("handshake session is not verified")]
    SessionNotVerified,
    #[error("invalid capability parameters: {0}")]
    InvalidParams(String),
    #[error("caller is not bound to the property as owner")]
    NotOwner,
    #[error("start {st} is not after now {now}")]
    TimingViolation { now: Tick, st: Tick },
    #[error("dossier is not in the store")]
    UnresolvedDossier,
    #[error("capability is not in state Created")]
    CapabilityNotCreated,
    #[error("deployment condition {0} failed")]
    ConditionFailed(u8),
    #[error("owner denied approval")]
    ApprovalDenied,
    #[error("the owner may not bid on their own property")]
    OwnerSelfBid,
    #[error("offer {amount} is below the reserve {reserve}")]
    BelowReserve { amount: u64, reserve: u64 },
    #[error("insufficient balance: need {needed}, have {available}")]
    InsufficientBalance { needed: u64, available: u64 },
    #[error("contract is not open for offers")]
    ContractNotOpen,
    #[error("bidder already has a live offer")]
    ActiveOfferExists,
    #[error("presentation rejected: {}", .0.label())]
    Presentation(RejectReason),
    #[error("credential invalid: {0}")]
    CredentialInvalid(CredentialError),
    #[error("linkage proof does not tie the context credential to the base credential")]
    LinkageInvalid,
    #[error("inside the last-minutes window")]
    TooLateToWithdraw,
    #[error("no active offer for this bidder")]
    NoActiveOffer,
    #[error("share id does not match")]
    BadShareId,
    #[error("{action} is not legal in state {state:?}")]
    IllegalTransition {
        state: TransferState,
        action: String,
    },
    #[error("new end {requested} does not extend {end}")]
    InvalidExtension { end: Tick, requested: Tick },
    #[error("no such offer {0}")]
    NoSuchOffer(usize),
    #[error("presenter is not the bidder")]
    IdentityMismatch,
    #[error("nothing to refund")]
    NothingToRefund,
    #[error("payment {got} differs from the {expected} due")]
    WrongPaymentAmount { expected: u64, got: u64 },
    #[error("payment window elapsed")]
    PaymentTimeout,
    #[error("settlement must be recorded by the land registry")]
    NotLandRegistry,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
