use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EventRecord, World};
use crate::contracts::TransferState;
use crate::crypto::DigestId;
use crate::registry::{keys, AnchorKind};
use crate::store::ContentId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn result(name: &str, failure: Option<String>) -> InvariantResult {
    InvariantResult {
        name: name.to_string(),
        pass: failure.is_none(),
        detail: failure.unwrap_or_else(|| "ok".to_string()),
    }
}

/// Evaluates every run invariant over the log and final world state.
pub fn check_invariants(log: &[EventRecord], world: &World, expected_events: usize) -> Vec<InvariantResult> {
    vec![
        result("chain-integrity", world.chain.verify().err().map(|f| format!("{f:?}"))),
        result("append-only", append_only(log, world)),
        result("token-conservation", conservation(log, world)),
        result("nonce-single-use", nonce_single_use(log)),
        result("owner-exclusion", owner_exclusion(world)),
        result("ownership-uniqueness", ownership_uniqueness(world)),
        result("exactly-once-settlement", exactly_once(log, world)),
        result("store-immutability", store_immutability(world)),
        result("report-completeness", completeness(log, expected_events)),
    ]
}

fn append_only(log: &[EventRecord], world: &World) -> Option<String> {
    let anchors = world.chain.anchors();
    let mut last = 0;
    for r in log {
        if r.chain_len < last {
            return Some(format!("event {} shrank the chain to {}", r.seq, r.chain_len));
        }
        last = r.chain_len;
        let expected = match r.chain_len {
            0 => DigestId::ZERO,
            n => match anchors.get(n - 1) {
                Some(a) => a.digest(),
                None => return Some(format!("event {} saw {} anchors, chain has {}", r.seq, n, anchors.len())),
            },
        };
        if expected != r.head {
            return Some(format!("event {} head is not a prefix of the final chain", r.seq));
        }
    }
    None
}

fn conservation(log: &[EventRecord], world: &World) -> Option<String> {
    if let Some(r) = log.iter().find(|r| r.supply != r.minted) {
        return Some(format!("event {}: supply {} != minted {}", r.seq, r.supply, r.minted));
    }
    let (supply, minted) = (world.supply(), world.treasury.minted());
    (supply != minted).then(|| format!("final supply {supply} != minted {minted}"))
}

fn nonce_single_use(log: &[EventRecord]) -> Option<String> {
    let mut seen = BTreeSet::new();
    for r in log.iter().filter(|r| r.is_ok()) {
        if let Some(n) = &r.nonce {
            if !seen.insert(n.clone()) {
                return Some(format!("nonce {n} verified again at event {}", r.seq));
            }
        }
    }
    None
}

fn owner_exclusion(world: &World) -> Option<String> {
    for (name, e) in &world.contracts {
        let owner = e.contract.capability.owner_id;
        for (i, o) in e.contract.offers.iter().enumerate() {
            if o.linkage.base_subject_id == owner || o.bidder_context_id == owner {
                return Some(format!("{name}: offer {i} links to the owner"));
            }
        }
    }
    None
}

fn ownership_uniqueness(world: &World) -> Option<String> {
    let anchors = world.chain.anchors();
    for (name, p) in &world.properties {
        let Some(id) = p.registration.property_id() else { continue };
        let bindings = anchors
            .iter()
            .filter(|a| a.kind == AnchorKind::PropertyAnchor && a.summary(keys::SUBJECT) == Some(id))
            .count();
        if bindings != 1 {
            return Some(format!("{name}: {bindings} property anchors"));
        }
        if world.chain.resolve(&id).owner().is_none() {
            return Some(format!("{name}: no resolvable owner"));
        }
    }
    for (name, e) in &world.contracts {
        let c = &e.contract;
        let records = anchors
            .iter()
            .filter(|a| a.kind == AnchorKind::TransferRecord && a.summary(keys::CONTRACT) == Some(c.contract_id))
            .count();
        let expected = usize::from(c.state == TransferState::Completed);
        if records != expected {
            return Some(format!("{name}: {records} transfer records in state {:?}", c.state));
        }
    }
    None
}

fn exactly_once(log: &[EventRecord], world: &World) -> Option<String> {
    let mut settled: BTreeMap<&str, usize> = BTreeMap::new();
    for r in log.iter().filter(|r| r.is_ok()) {
        let Some(c) = r.contract.as_deref() else { continue };
        if let Some(at) = settled.get(c) {
            if r.op != "refund" {
                return Some(format!("{c}: {} succeeded after settlement at event {at}", r.op));
            }
        } else if r.op == "pay" {
            settled.insert(c, r.seq);
        }
    }
    for (name, e) in &world.contracts {
        if settled.contains_key(name.as_str()) != (e.contract.state == TransferState::Completed) {
            return Some(format!("{name}: settlement log disagrees with state {:?}", e.contract.state));
        }
    }
    None
}

fn store_immutability(world: &World) -> Option<String> {
    if let Err(e) = world.store.verify_all() {
        return Some(e.to_string());
    }
    for a in world.chain.anchors() {
        for key in [keys::DESCRIPTION, keys::DEED] {
            if let Some(d) = a.summary(key) {
                if !world.store.contains(&ContentId(d)) {
                    return Some(format!("anchor {} references missing {key}", a.index));
                }
            }
        }
    }
    None
}

fn completeness(log: &[EventRecord], expected: usize) -> Option<String> {
    if log.len() != expected {
        return Some(format!("{} records for {expected} events", log.len()));
    }
    log.iter()
        .enumerate()
        .find(|(i, r)| r.seq != *i)
        .map(|(i, _)| format!("record {i} out of sequence"))
}
