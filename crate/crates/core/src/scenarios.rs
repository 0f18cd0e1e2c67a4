//! Hand-checked micro-runs of the overlay protocol.
//!
//! Each scenario scripts a few multicasts over three groups A < B < C
//! with chosen latencies, runs the real simulator, and compares every
//! group's delivery sequence (ids and times) against a worked-out
//! expectation. They double as executable documentation of the three
//! ordering mechanisms: history deltas carried on messages,
//! acknowledgements from intermediate destinations, and notifications
//! to bypassed groups.

use crate::flexcast::Flexcast;
use crate::history::MessageId;
use crate::overlay::GroupSet;
use crate::simnet::{Injection, NetModel, Sim, SimConfig, SimOutput};
use crate::trace::{Entity, EventKind, TraceEvent};
use crate::verify::verify;

pub struct ScenarioReport {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
    pub trace: Vec<TraceEvent>,
}

const MS: u64 = 1_000_000;

fn inj(at_ms: u64, client: u32, ranks: &[u8]) -> Injection {
    let dst = GroupSet::from_ranks(ranks);
    Injection {
        at_ns: at_ms * MS,
        home: dst.min().unwrap(),
        id: MessageId::new(client, 0),
        dst,
    }
}

/// (group, client, at_ms): group delivered client's message at that
/// time.
type Expect = (u8, u32, u64);

fn deliveries(trace: &[TraceEvent]) -> Vec<Expect> {
    trace
        .iter()
        .filter(|e| e.kind == EventKind::Deliver)
        .map(|e| {
            let g = match e.entity {
                Entity::Group(g) => g.0,
                _ => unreachable!("groups deliver"),
            };
            (g, e.msg.client, e.at_ns / MS)
        })
        .collect()
}

fn run(name: &'static str, net: &NetModel, injections: &[Injection], expect: &[Expect]) -> ScenarioReport {
    let out: SimOutput = Sim::scripted(
        Flexcast::new(net.group_count()),
        net,
        SimConfig::default(),
        injections,
    )
    .run()
    .expect("scenario protocols are bug-free");
    let got = deliveries(&out.trace);
    let report = verify(&out.trace, net.group_count());
    let mut ok = report.all_ok();
    let mut detail = String::new();
    if !ok {
        for (what, c) in report.failures() {
            detail.push_str(&format!(
                "{} failed: {}\n",
                what,
                c.witness.as_deref().unwrap_or("no witness")
            ));
        }
    }
    if got != expect {
        ok = false;
        detail.push_str(&format!("expected {:?}\n     got {:?}\n", expect, got));
    }
    if ok {
        detail = format!("{} deliveries as expected", got.len());
    }
    ScenarioReport {
        name,
        ok,
        detail,
        trace: out.trace,
    }
}

/// A carried history delta blocks a later message until the earlier
/// one it depends on arrives over the slow link.
fn history_on_messages() -> ScenarioReport {
    let net = NetModel::from_ms(
        &[
            vec![0.0, 10.0, 100.0],
            vec![10.0, 0.0, 10.0],
            vec![100.0, 10.0, 0.0],
        ],
        0.0,
    );
    let injections = [
        inj(0, 1, &[0, 2]),
        inj(1, 2, &[0, 1]),
        inj(20, 3, &[1, 2]),
    ];
    // C hears of m1 inside m3's history and waits for it: both land at
    // the 100ms mark, in order.
    let expect = [
        (0, 1, 0),
        (0, 2, 1),
        (1, 2, 11),
        (1, 3, 20),
        (2, 1, 100),
        (2, 3, 100),
    ];
    run("history-on-messages", &net, &injections, &expect)
}

/// The middle destination's acknowledgement releases the top one.
fn ack_from_middle() -> ScenarioReport {
    let net = NetModel::from_ms(
        &[
            vec![0.0, 20.0, 10.0],
            vec![20.0, 0.0, 100.0],
            vec![10.0, 100.0, 0.0],
        ],
        0.0,
    );
    let injections = [inj(0, 1, &[1, 2]), inj(1, 2, &[0, 1, 2])];
    // C holds m2 for B's ack (arriving at 121) and for m1 itself
    // (arriving at 100).
    let expect = [
        (1, 1, 0),
        (0, 2, 1),
        (1, 2, 21),
        (2, 1, 100),
        (2, 2, 121),
    ];
    run("ack-from-middle", &net, &injections, &expect)
}

/// A bypassed group is notified and its acknowledgement stands in for
/// routing the message through it.
fn notified_bystander() -> ScenarioReport {
    let net = NetModel::from_ms(
        &[
            vec![0.0, 20.0, 10.0],
            vec![20.0, 0.0, 100.0],
            vec![10.0, 100.0, 0.0],
        ],
        0.0,
    );
    let injections = [inj(0, 1, &[1, 2]), inj(1, 2, &[0, 1]), inj(2, 3, &[0, 2])];
    // m3 skips B, but the entry group's history holds m2 addressed to
    // B: it notifies B and C waits for B's ack (22 + 100).
    let expect = [
        (1, 1, 0),
        (0, 2, 1),
        (0, 3, 2),
        (1, 2, 21),
        (2, 1, 100),
        (2, 3, 122),
    ];
    run("notified-bystander", &net, &injections, &expect)
}

/// Elementary two-message interleavings over each pair relationship;
/// all must pass the checkers with the documented orders.
fn pair_patterns() -> Vec<ScenarioReport> {
    let net = NetModel::uniform(3, 10.0, 0.0);
    vec![
        run(
            "pair-same-entry-same-dst",
            &net,
            &[inj(0, 1, &[0, 1]), inj(1, 2, &[0, 1])],
            &[(0, 1, 0), (0, 2, 1), (1, 1, 10), (1, 2, 11)],
        ),
        run(
            "pair-upper-groups",
            &net,
            &[inj(0, 1, &[1, 2]), inj(5, 2, &[1, 2])],
            &[(1, 1, 0), (1, 2, 5), (2, 1, 10), (2, 2, 15)],
        ),
        run(
            "pair-shared-entry-forked-dst",
            &net,
            &[inj(0, 1, &[0, 1]), inj(1, 2, &[0, 2])],
            &[(0, 1, 0), (0, 2, 1), (1, 1, 10), (2, 2, 21)],
        ),
        run(
            "pair-distinct-entries-common-top",
            &net,
            &[inj(0, 1, &[0, 2]), inj(1, 2, &[1, 2])],
            &[(0, 1, 0), (1, 2, 1), (2, 1, 10), (2, 2, 11)],
        ),
    ]
}

pub fn run_all() -> Vec<ScenarioReport> {
    let mut out = vec![history_on_messages(), ack_from_middle(), notified_bystander()];
    out.extend(pair_patterns());
    out
}
