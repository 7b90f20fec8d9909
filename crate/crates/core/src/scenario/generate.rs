//! Script builders: the standard sale prelude and seeded random scripts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use super::{ActorSpec, Role, ScenarioConfig, ScenarioScript, ScriptEvent};

pub const CONTRACT: &str = "villa-sale";
pub const CONTEXT: &str = "villa-bid";
pub const BIDDERS: [&str; 3] = ["bob", "carol", "dave"];

pub fn ev(at_tick: u64, actor: &str, action: &str, params: Value) -> ScriptEvent {
    ScriptEvent {
        at_tick,
        actor: actor.into(),
        action: action.into(),
        params,
    }
}

/// alice (owner), mkt (marketplace), and bob, carol, dave (buyers).
pub fn standard_actors() -> Vec<ActorSpec> {
    let mut out = vec![
        ActorSpec {
            role: Role::Owner,
            label: "alice".into(),
            seed: "alice-seed".into(),
            balance: None,
        },
        ActorSpec {
            role: Role::Marketplace,
            label: "mkt".into(),
            seed: "mkt-seed".into(),
            balance: None,
        },
    ];
    out.extend(BIDDERS.iter().map(|b| ActorSpec {
        role: Role::Buyer,
        label: (*b).into(),
        seed: format!("{b}-seed"),
        balance: None,
    }));
    out
}

/// Onboarding, property binding and a verified handshake session `s1`,
/// all at ticks 1 to 3.
pub fn verified_session() -> Vec<ScriptEvent> {
    let mut e: Vec<ScriptEvent> = ["alice", "mkt"]
        .iter()
        .chain(BIDDERS.iter())
        .map(|a| ev(1, a, "onboard", Value::Null))
        .collect();
    e.push(ev(
        2,
        "alice",
        "register_property",
        json!({"property": "villa", "lat_micro": 41150000, "lon_micro": -8610000, "description": "villa"}),
    ));
    e.push(ev(2, "alice", "confirm_prior_owner", json!({"property": "villa"})));
    e.push(ev(2, "alice", "bind_property", json!({"property": "villa"})));
    e.push(ev(
        3,
        "alice",
        "request_access",
        json!({"property": "villa", "marketplace": "mkt", "session": "s1"}),
    ));
    e.push(ev(3, "alice", "present", json!({"session": "s1"})));
    e
}

/// A published sale of the villa with funded bidder contexts, up to t6.
pub fn sale_prelude(st: u64, end: u64, rt: u64, funding: u64) -> Vec<ScriptEvent> {
    let mut e = verified_session();
    e.push(ev(
        4,
        "alice",
        "create_capability",
        json!({"session": "s1", "contract": CONTRACT, "st": st, "end": end, "rt": rt}),
    ));
    e.push(ev(5, "mkt", "deploy", json!({"contract": CONTRACT})));
    e.push(ev(5, "alice", "approve", json!({"contract": CONTRACT})));
    for b in BIDDERS {
        e.push(ev(6, b, "derive_context", json!({"label": CONTEXT})));
        e.push(ev(6, b, "fund_context", json!({"label": CONTEXT, "amount": funding})));
    }
    e
}

/// A random sale: offers, withdrawals, owner control, acceptance, payment
/// and refunds in arbitrary order and timing, including illegal moves.
pub fn random_script(seed: u64, steps: usize) -> ScenarioScript {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut config = ScenarioConfig::default();
    config.rates.commission_bps = rng.gen_range(0..=1_000);
    config.rates.tax_bps = rng.gen_range(0..=1_000);
    config.rates.withdrawal_fine_bps = rng.gen_range(0..=10_000);
    config.rates.offer_deposit_bps = rng.gen_range(1..=2_000);
    config.rates.gas_fee_share_bps = rng.gen_range(0..=10_000);
    config.rates.payment_timeout = rng.gen_range(5..=30);

    let st = rng.gen_range(8..=12);
    let end = st + rng.gen_range(20..=80);
    let rt = rng.gen_range(1..=2_000_000);
    let funding = rng.gen_range(0..=2_000_000);
    let mut events = sale_prelude(st, end, rt, funding);
    // the owner tries to bid on its own sale under a fresh context
    events.push(ev(6, "alice", "derive_context", json!({"label": CONTEXT})));
    events.push(ev(6, "alice", "fund_context", json!({"label": CONTEXT, "amount": funding / 2})));

    let mut t = 6;
    for _ in 0..steps {
        t += rng.gen_range(0..=6);
        let bidder = *BIDDERS.choose(&mut rng).expect("bidders");
        let c = json!(CONTRACT);
        let e = match rng.gen_range(0..100) {
            0..=29 => {
                let amount = rt.saturating_sub(rng.gen_range(0..=2)) + rng.gen_range(0..=rt);
                ev(t, bidder, "offer", json!({"contract": c, "context": CONTEXT, "amount": amount}))
            }
            30..=39 => ev(t, bidder, "withdraw", json!({"contract": c, "context": CONTEXT})),
            40..=49 => {
                let offer = rng.gen_bool(0.5).then(|| rng.gen_range(0..4));
                events.push(ev(t, "alice", "accept", json!({"contract": c, "offer": offer})));
                if rng.gen_bool(0.5) {
                    pay_round(&mut rng, &mut events, t);
                }
                continue;
            }
            50..=59 => {
                pay_round(&mut rng, &mut events, t);
                continue;
            }
            60..=69 => ev(t, bidder, "refund", json!({"contract": c, "context": CONTEXT})),
            70..=84 => {
                let who = if rng.gen_bool(0.85) { "alice" } else { "mkt" };
                let op = ["extend", "suspend", "resume", "terminate"]
                    .choose_weighted(&mut rng, |op| if *op == "terminate" { 1 } else { 4 })
                    .expect("ops");
                let new_end = end + rng.gen_range(0..=40);
                ev(t, who, "control", json!({"contract": c, "op": op, "new_end": new_end}))
            }
            85..=89 => ev(t, bidder, "fund_context", json!({"label": CONTEXT, "amount": rng.gen_range(0..=500_000)})),
            90..=92 => ev(t, "alice", "offer", json!({"contract": c, "context": CONTEXT, "amount": rt + rng.gen_range(0..=rt)})),
            _ => ev(t, bidder, "tick", Value::Null),
        };
        events.push(e);
    }
    ScenarioScript {
        name: format!("random-{seed}"),
        seed: format!("random-seed-{seed}"),
        actors: standard_actors(),
        events,
        config,
    }
}

/// Every bidder tries to pay; only the winner's payment can land.
fn pay_round(rng: &mut ChaCha20Rng, events: &mut Vec<ScriptEvent>, t: u64) {
    for b in BIDDERS {
        let shortfall = if rng.gen_bool(0.8) { 0 } else { rng.gen_range(1..=10) };
        events.push(ev(t, b, "pay", json!({"contract": CONTRACT, "context": CONTEXT, "shortfall": shortfall})));
    }
}
