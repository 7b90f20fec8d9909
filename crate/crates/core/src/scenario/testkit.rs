//! Builders shared by unit tests across the crate.

use serde_json::{json, Value};

use super::{Action, EventRecord, ScenarioConfig, ScenarioScript, ScriptEvent, World};
use crate::contracts::{Env, TransferContract};
use crate::credential::Wallet;
use crate::crypto::DigestId;

pub use super::generate::{ev, verified_session, CONTEXT as CTX, CONTRACT};

pub fn script(events: Vec<ScriptEvent>, config: ScenarioConfig) -> ScenarioScript {
    ScenarioScript {
        name: "kit".into(),
        seed: "kit-seed".into(),
        actors: super::generate::standard_actors(),
        events,
        config,
    }
}

/// A published sale with st 10, end 100, rt 1,000,000 and bidder contexts
/// funded with 1,300,000 each, all at or before t6.
pub fn published_sale() -> Vec<ScriptEvent> {
    super::generate::sale_prelude(10, 100, 1_000_000, 1_300_000)
}

/// Runs `events`, asserting each one succeeds.
pub fn world_after(events: &[ScriptEvent], config: ScenarioConfig) -> World {
    let s = script(events.to_vec(), config);
    let actions = s.parse_actions().expect("kit script parses");
    let mut w = World::new(&s);
    for (e, a) in events.iter().zip(actions) {
        let r = w.step(e, a);
        assert!(r.is_ok(), "setup event {} {} failed: {} {}", r.seq, r.op, r.result, r.detail);
    }
    w
}

pub fn act(w: &mut World, tick: u64, actor: &str, action: &str, params: Value) -> EventRecord {
    let a = Action::parse(action, &params).expect("action parses");
    w.act(tick, actor, a)
}

pub fn offer(w: &mut World, tick: u64, bidder: &str, amount: u64) -> EventRecord {
    act(w, tick, bidder, "offer", json!({"contract": CONTRACT, "context": CTX, "amount": amount}))
}

/// Direct access to a deployed contract with its environment.
pub fn with_contract<R>(
    w: &mut World,
    name: &str,
    f: impl FnOnce(&mut TransferContract, &mut Env<'_>, &mut std::collections::BTreeMap<String, super::Actor>) -> R,
) -> R {
    let World {
        contracts,
        controllers,
        chain,
        store,
        treasury,
        actors,
        ..
    } = w;
    let entry = contracts.get_mut(name).expect("contract");
    let controller = controllers.get_mut(&entry.marketplace).expect("marketplace");
    let mut env = Env {
        chain,
        store,
        treasury,
        controller,
    };
    f(&mut entry.contract, &mut env, actors)
}

pub fn wallet<'a>(w: &'a World, actor: &str) -> &'a Wallet {
    w.actors[actor].wallet.as_ref().expect("wallet")
}

pub fn context_id(w: &World, actor: &str) -> DigestId {
    wallet(w, actor).contexts[CTX].credential.subject_id
}

pub fn share(w: &World) -> DigestId {
    w.actors["alice"].shares[CONTRACT]
}
