//! Scripted, deterministic replays of the whole transfer flow.
//!
//! A [`ScenarioScript`] declares actors and a tick-ordered event list. The
//! [`World`] executes each event, records one [`EventRecord`] per event and
//! finally runs the invariant checker. Operation failures are recorded in
//! the log, never thrown.

pub mod generate;
mod invariants;
mod snapshot;
mod world;

#[cfg(test)]
pub(crate) mod testkit;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::contracts::{OfferStatus, Rates, TransferState};
use crate::crypto::DigestId;
use crate::Tick;

pub use invariants::{check_invariants, InvariantResult};
pub use snapshot::{restore_state, snapshot_state, Manifest, RestoredState, SnapshotError};
pub use world::{Action, Actor, ContractEntry, PropertyEntry, SessionEntry, World};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("event {line}: {reason}")]
    Event { line: usize, reason: String },
    #[error("actor {0:?} declared twice")]
    DuplicateActor(String),
    #[error("malformed script: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Owner,
    Buyer,
    Marketplace,
    /// Never reads mail delivered to the address it claims.
    Attacker,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub role: Role,
    pub label: String,
    pub seed: String,
    #[serde(default)]
    pub balance: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEvent {
    pub at_tick: u64,
    pub actor: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rates: Rates,
    pub initial_balance: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rates: Rates::default(),
            initial_balance: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default)]
    pub name: String,
    pub seed: String,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
    #[serde(default)]
    pub config: ScenarioConfig,
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        let script: Self = serde_json::from_str(text).map_err(|e| ScriptError::Malformed(e.to_string()))?;
        script.parse_actions()?;
        Ok(script)
    }

    /// Validates ordering and actor references, and parses every action.
    pub fn parse_actions(&self) -> Result<Vec<Action>, ScriptError> {
        let mut labels = std::collections::BTreeSet::new();
        for a in &self.actors {
            if !labels.insert(a.label.as_str()) {
                return Err(ScriptError::DuplicateActor(a.label.clone()));
            }
        }
        let mut last = 0;
        let mut out = Vec::with_capacity(self.events.len());
        for (i, e) in self.events.iter().enumerate() {
            let line = i + 1;
            let fail = |reason: String| ScriptError::Event { line, reason };
            if e.at_tick < last {
                return Err(fail(format!("tick {} precedes {}", e.at_tick, last)));
            }
            last = e.at_tick;
            if !labels.contains(e.actor.as_str()) {
                return Err(fail(format!("undeclared actor {:?}", e.actor)));
            }
            out.push(Action::parse(&e.action, &e.params).map_err(fail)?);
        }
        Ok(out)
    }
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: usize,
    pub tick: Tick,
    pub actor: String,
    pub op: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contract: Option<String>,
    /// Subject id the actor acted under, when it had one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub principal: Option<DigestId>,
    pub result: String,
    pub detail: String,
    /// Nonce of a presentation this event verified.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonce: Option<String>,
    /// Clock-driven contract transitions applied before the operation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub auto: Vec<String>,
    pub supply: u64,
    pub minted: u64,
    pub chain_len: usize,
    pub head: DigestId,
}

impl EventRecord {
    pub fn is_ok(&self) -> bool {
        self.result == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferReport {
    pub bidder: String,
    pub amount: u64,
    pub deposit: u64,
    pub placed_at: Tick,
    pub status: OfferStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractReport {
    pub contract_id: DigestId,
    pub state: TransferState,
    pub end: Tick,
    pub offers: Vec<OfferReport>,
    pub escrow: u64,
    pub retained: u64,
    pub winner: Option<usize>,
    pub new_owner: Option<String>,
    pub deed_cid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property_id: Option<DigestId>,
    pub owner: Option<String>,
    pub transfers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: String,
    pub final_tick: Tick,
    pub final_head: DigestId,
    pub chain_len: usize,
    pub store_objects: usize,
    pub contracts: BTreeMap<String, ContractReport>,
    pub properties: BTreeMap<String, PropertyReport>,
    pub balances_before: BTreeMap<String, u64>,
    pub balances_after: BTreeMap<String, u64>,
    pub invariants: Vec<InvariantResult>,
    pub all_passed: bool,
    pub events: Vec<EventRecord>,
    pub script: ScenarioScript,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn invariant(&self, name: &str) -> Option<&InvariantResult> {
        self.invariants.iter().find(|i| i.name == name)
    }
}

/// Runs a script end to end. Only malformed scripts are errors.
pub fn run_scenario(script: &ScenarioScript) -> Result<RunReport, ScriptError> {
    let actions = script.parse_actions()?;
    let mut world = World::new(script);
    let before = world.balance_sheet();
    for (event, action) in script.events.iter().zip(actions) {
        world.step(event, action);
    }
    Ok(world.report(script, before))
}

/// Bundled scenario scripts, by name.
pub fn bundled_scenarios() -> Vec<(&'static str, &'static str)> {
    vec![
        ("happy_path", include_str!("../../scenarios/happy_path.json")),
        ("impersonation", include_str!("../../scenarios/impersonation.json")),
        ("replay_nonce", include_str!("../../scenarios/replay_nonce.json")),
        ("termination", include_str!("../../scenarios/termination.json")),
        ("timeout", include_str!("../../scenarios/timeout.json")),
    ]
}

pub fn bundled(name: &str) -> Option<ScenarioScript> {
    bundled_scenarios()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioScript::from_json(text).expect("bundled scripts parse"))
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::testkit::{ev, published_sale, script, world_after, CONTRACT, CTX};
    use super::*;
    use crate::registry::ResolutionStatus;

    fn failing(report: &RunReport) -> Vec<&str> {
        report.invariants.iter().filter(|i| !i.pass).map(|i| i.name.as_str()).collect()
    }

    #[test]
    fn bundled_scenarios_pass_every_invariant() {
        for (name, _) in bundled_scenarios() {
            let report = run_scenario(&bundled(name).unwrap()).unwrap();
            assert!(report.all_passed, "{name}: {:?}", failing(&report));
            assert_eq!(report.events.len(), report.script.events.len());
        }
    }

    #[test]
    fn reports_are_bytewise_reproducible() {
        for (name, _) in bundled_scenarios() {
            let s = bundled(name).unwrap();
            assert_eq!(run_scenario(&s).unwrap().to_json(), run_scenario(&s).unwrap().to_json(), "{name}");
        }
    }

    #[test]
    fn seed_changes_the_run() {
        let mut s = bundled("happy_path").unwrap();
        let a = run_scenario(&s).unwrap();
        s.seed.push('!');
        let b = run_scenario(&s).unwrap();
        assert_ne!(a.final_head, b.final_head);
        assert_eq!(a.contracts[CONTRACT].state, b.contracts[CONTRACT].state);
    }

    #[test]
    fn happy_path_completes_for_the_best_bidder() {
        let r = run_scenario(&bundled("happy_path").unwrap()).unwrap();
        let c = &r.contracts[CONTRACT];
        assert_eq!(c.state, TransferState::Completed);
        assert_eq!(c.new_owner.as_deref(), Some("dave"));
        assert_eq!(r.properties["villa"].owner.as_deref(), Some("dave"));
        assert_eq!(r.properties["villa"].transfers, 1);
        assert_eq!(r.balances_before["total"], r.balances_after["total"]);
    }

    #[test]
    fn empty_script_leaves_genesis_untouched() {
        let r = run_scenario(&script(Vec::new(), ScenarioConfig::default())).unwrap();
        assert!(r.all_passed);
        assert_eq!(r.chain_len, 0);
        assert_eq!(r.final_head, DigestId::ZERO);
        assert!(r.events.is_empty() && r.contracts.is_empty());
        assert_eq!(r.balances_before, r.balances_after);
    }

    #[test]
    fn impersonation_never_reaches_verified() {
        let s = bundled("impersonation").unwrap();
        let actions = s.parse_actions().unwrap();
        let mut w = World::new(&s);
        for (e, a) in s.events.iter().zip(actions) {
            w.step(e, a);
        }
        let mallory = &w.actors["mallory"];
        assert!(mallory.base_vc.is_none());
        assert_ne!(
            mallory.registration.as_ref().map(|r| r.state()),
            Some(crate::issuance::RegistrationState::Verified)
        );
        assert!(w.log.iter().any(|r| r.actor == "mallory" && r.op == "issue" && !r.is_ok()));
        assert!(w.log.iter().filter(|r| r.actor == "mallory").all(|r| !r.is_ok() || r.op == "apply"
            || r.op == "receive_mail_one"));
        let alice = w.actors["alice"].wallet.as_ref().unwrap().subject_id();
        assert_eq!(w.chain.resolve(&alice).status, ResolutionStatus::Valid);
    }

    #[test]
    fn replayed_presentation_is_rejected_on_nonce() {
        let r = run_scenario(&bundled("replay_nonce").unwrap()).unwrap();
        let results: Vec<&str> = r.events.iter().filter(|e| e.op == "present").map(|e| e.result.as_str()).collect();
        assert_eq!(
            results,
            ["ok", "error:Rejected(nonce)", "error:StaleSession", "error:Rejected(attribute-shortfall)"]
        );
    }

    #[test]
    fn injected_double_spend_fails_conservation() {
        let mut w = world_after(&published_sale(), ScenarioConfig::default());
        w.act(11, "bob", Action::parse("offer", &json!({"contract": CONTRACT, "context": CTX, "amount": 1_000_000})).unwrap());
        let n = w.log.len();
        assert!(check_invariants(&w.log, &w, n).iter().all(|i| i.pass));
        w.inject_escrow_for_test(CONTRACT, 10_000);
        let results = check_invariants(&w.log, &w, n);
        let bad: Vec<&str> = results.iter().filter(|i| !i.pass).map(|i| i.name.as_str()).collect();
        assert_eq!(bad, ["token-conservation"]);
    }

    #[test]
    fn injected_duplicate_nonce_fails_single_use() {
        let mut w = world_after(&published_sale(), ScenarioConfig::default());
        let mut log = w.log.clone();
        let verified = log.iter().find(|r| r.nonce.is_some()).unwrap().clone();
        let mut dup = log.last().unwrap().clone();
        dup.seq = log.len();
        dup.nonce = verified.nonce.clone();
        log.push(dup);
        w.log = log.clone();
        let results = check_invariants(&log, &w, log.len());
        let bad: Vec<&str> = results.iter().filter(|i| !i.pass).map(|i| i.name.as_str()).collect();
        assert_eq!(bad, ["nonce-single-use"]);
    }

    #[test]
    fn dropped_record_fails_completeness() {
        let w = world_after(&published_sale(), ScenarioConfig::default());
        let log = &w.log[1..];
        let r = check_invariants(log, &w, w.log.len());
        assert!(!r.iter().find(|i| i.name == "report-completeness").unwrap().pass);
    }

    #[test]
    fn malformed_scripts_name_the_event() {
        let base = || script(vec![ev(2, "alice", "tick", Value::Null)], ScenarioConfig::default());

        let mut s = base();
        s.events.push(ev(1, "alice", "tick", Value::Null));
        assert!(matches!(s.parse_actions(), Err(ScriptError::Event { line: 2, .. })));

        let mut s = base();
        s.events.push(ev(3, "zed", "tick", Value::Null));
        assert!(matches!(run_scenario(&s), Err(ScriptError::Event { line: 2, .. })));

        let mut s = base();
        s.events.push(ev(3, "alice", "teleport", Value::Null));
        assert!(matches!(s.parse_actions(), Err(ScriptError::Event { line: 2, .. })));

        let mut s = base();
        s.actors.push(s.actors[0].clone());
        assert_eq!(s.parse_actions(), Err(ScriptError::DuplicateActor("alice".into())));

        assert!(matches!(ScenarioScript::from_json("{\"seed\": 1}"), Err(ScriptError::Malformed(_))));
        let unknown_field = json!({"seed": "s", "actors": [], "extra": true}).to_string();
        assert!(ScenarioScript::from_json(&unknown_field).is_err());
    }

    #[test]
    fn operation_failures_are_logged_not_thrown() {
        let s = script(
            vec![ev(1, "bob", "offer", json!({"contract": "nope", "context": CTX, "amount": 5}))],
            ScenarioConfig::default(),
        );
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.events[0].result, "error:Missing");
        assert!(r.all_passed);
    }
}
