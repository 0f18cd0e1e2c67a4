//! Trace checkers: replay a finished run's event log and confirm the
//! delivery guarantees held, with a concrete witness when they did
//! not.
//!
//! The checks only trust the trace. Multicasts are what client_send
//! events announce; deliveries are what groups logged. A quiescent run
//! (clients stopped, queues drained) must satisfy all of:
//!
//! * validity: every multicast reaches every destination,
//! * agreement: nobody delivers a message its co-destinations miss,
//! * integrity: deliveries are unique, addressed, and genuine,
//! * prefix consistency: any two groups deliver their common messages
//!   in the same relative order,
//! * acyclicity: the union of all delivery orders has no cycle,
//! * minimality: traffic only touches destinations, except for
//!   notification handshakes to groups that earlier traffic addressed.
//!
//! Relay-tree runs are expected to break minimality; the checker
//! quantifies rather than aborts.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::history::MessageId;
use crate::overlay::GroupSet;
use crate::trace::{Entity, EventKind, ProtoKind, TraceEvent};

#[derive(Clone, Debug)]
pub struct Check {
    pub ok: bool,
    pub violations: u64,
    pub witness: Option<String>,
}

impl Check {
    fn pass() -> Check {
        Check {
            ok: true,
            violations: 0,
            witness: None,
        }
    }

    fn note(&mut self, w: String) {
        self.ok = false;
        self.violations += 1;
        if self.witness.is_none() {
            self.witness = Some(w);
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub validity: Check,
    pub agreement: Check,
    pub integrity: Check,
    pub prefix: Check,
    pub acyclic: Check,
    pub minimality: Check,
}

impl VerifyReport {
    pub fn all_ok(&self) -> bool {
        self.ok_except_minimality() && self.minimality.ok
    }

    /// Everything a relay-tree protocol can honestly promise.
    pub fn ok_except_minimality(&self) -> bool {
        self.validity.ok
            && self.agreement.ok
            && self.integrity.ok
            && self.prefix.ok
            && self.acyclic.ok
    }

    pub fn failures(&self) -> Vec<(&'static str, &Check)> {
        [
            ("validity", &self.validity),
            ("agreement", &self.agreement),
            ("integrity", &self.integrity),
            ("prefix", &self.prefix),
            ("acyclic", &self.acyclic),
            ("minimality", &self.minimality),
        ]
        .into_iter()
        .filter(|(_, c)| !c.ok)
        .collect()
    }
}

/// Ordered-pair consistency is checked across all groups; the
/// orientation cross-check against the lowest common destination walks
/// message pairs and is capped to keep huge traces affordable.
const LCD_PAIR_CAP: usize = 3000;

pub fn verify(trace: &[TraceEvent], n: u8) -> VerifyReport {
    let mut multicasts: BTreeMap<MessageId, GroupSet> = BTreeMap::new();
    let mut order: Vec<Vec<MessageId>> = vec![Vec::new(); n as usize];
    let mut counts: HashMap<(u8, MessageId), u32> = HashMap::new();
    for e in trace {
        match e.kind {
            EventKind::ClientSend => {
                multicasts.entry(e.msg).or_insert(e.dst);
            }
            EventKind::Deliver => {
                if let Entity::Group(g) = e.entity {
                    let c = counts.entry((g.0, e.msg)).or_insert(0);
                    *c += 1;
                    if *c == 1 {
                        order[g.idx()].push(e.msg);
                    }
                }
            }
            _ => {}
        }
    }

    let dst_of = |id: MessageId, fallback: GroupSet| -> GroupSet {
        multicasts.get(&id).copied().unwrap_or(fallback)
    };

    let mut validity = Check::pass();
    for (&id, &dst) in &multicasts {
        for g in dst.iter() {
            if !counts.contains_key(&(g.0, id)) {
                validity.note(format!("{} never delivered at group {}", id, g));
            }
        }
    }

    let mut agreement = Check::pass();
    let mut delivered_at: BTreeMap<MessageId, GroupSet> = BTreeMap::new();
    for (&(g, id), _) in &counts {
        delivered_at
            .entry(id)
            .or_insert(GroupSet::EMPTY)
            .insert(crate::overlay::GroupId(g));
    }
    for (&id, &at) in &delivered_at {
        let dst = dst_of(id, at);
        for g in dst.iter() {
            if !at.contains(g) {
                agreement.note(format!(
                    "{} delivered at {} but not at destination {}",
                    id,
                    at,
                    g
                ));
            }
        }
    }

    let mut integrity = Check::pass();
    for (&(g, id), &c) in &counts {
        if c > 1 {
            integrity.note(format!("group {} delivered {} {} times", g, id, c));
        }
        match multicasts.get(&id) {
            None => integrity.note(format!("group {} delivered {} which was never multicast", g, id)),
            Some(dst) if !dst.contains(crate::overlay::GroupId(g)) => {
                integrity.note(format!("group {} delivered {} addressed to {}", g, id, dst))
            }
            _ => {}
        }
    }

    let prefix = check_prefix(&order, &multicasts);
    let acyclic = check_acyclic(&order);
    let minimality = check_minimality(trace, &multicasts);

    VerifyReport {
        validity,
        agreement,
        integrity,
        prefix,
        acyclic,
        minimality,
    }
}

fn check_prefix(order: &[Vec<MessageId>], multicasts: &BTreeMap<MessageId, GroupSet>) -> Check {
    let mut check = Check::pass();
    let n = order.len();
    let pos: Vec<HashMap<MessageId, usize>> = order
        .iter()
        .map(|o| o.iter().enumerate().map(|(i, &id)| (id, i)).collect())
        .collect();
    for g in 0..n {
        for h in g + 1..n {
            // Messages common to g and h, in g's order; their h
            // positions must increase.
            let mut last: Option<(usize, MessageId)> = None;
            for &id in &order[g] {
                let hp = match pos[h].get(&id) {
                    Some(&p) => p,
                    None => continue,
                };
                if let Some((lp, lid)) = last {
                    if hp < lp {
                        check.note(format!(
                            "groups {} and {} deliver {} and {} in opposite orders",
                            g, h, lid, id
                        ));
                    }
                }
                last = Some((hp, id));
            }
        }
    }

    // Cross-check: the lowest-ranked common destination of a message
    // pair fixes the pair's orientation for everyone.
    let mut seen: BTreeSet<MessageId> = BTreeSet::new();
    let mut firsts: Vec<MessageId> = Vec::new();
    'outer: for o in order {
        for &id in o {
            if seen.insert(id) {
                firsts.push(id);
                if firsts.len() >= LCD_PAIR_CAP {
                    break 'outer;
                }
            }
        }
    }
    for (i, &a) in firsts.iter().enumerate() {
        let da = match multicasts.get(&a) {
            Some(&d) => d,
            None => continue,
        };
        for &b in &firsts[i + 1..] {
            let db = match multicasts.get(&b) {
                Some(&d) => d,
                None => continue,
            };
            let common = da.intersect(db);
            if common.len() < 2 {
                continue;
            }
            let lcd = common.min().unwrap();
            let orient = |g: usize| -> Option<bool> {
                let pa = pos[g].get(&a)?;
                let pb = pos[g].get(&b)?;
                Some(pa < pb)
            };
            let at_lcd = match orient(lcd.idx()) {
                Some(o) => o,
                None => continue,
            };
            for g in common.iter().filter(|&g| g != lcd) {
                if let Some(o) = orient(g.idx()) {
                    if o != at_lcd {
                        check.note(format!(
                            "group {} orders {} and {} against their lowest common destination {}",
                            g, a, b, lcd
                        ));
                    }
                }
            }
        }
    }
    check
}

fn check_acyclic(order: &[Vec<MessageId>]) -> Check {
    let mut check = Check::pass();
    // Adjacent deliveries per group generate the order relation; a
    // cycle in its closure is a cycle over these edges.
    let mut edges: BTreeSet<(MessageId, MessageId)> = BTreeSet::new();
    let mut nodes: BTreeSet<MessageId> = BTreeSet::new();
    for o in order {
        for w in o.windows(2) {
            edges.insert((w[0], w[1]));
        }
        nodes.extend(o.iter().copied());
    }
    let mut succ: BTreeMap<MessageId, Vec<MessageId>> = BTreeMap::new();
    let mut indeg: BTreeMap<MessageId, usize> = nodes.iter().map(|&v| (v, 0)).collect();
    for &(a, b) in &edges {
        succ.entry(a).or_default().push(b);
        *indeg.get_mut(&b).unwrap() += 1;
    }
    let mut ready: Vec<MessageId> = indeg
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&v, _)| v)
        .collect();
    let mut done = 0usize;
    while let Some(v) = ready.pop() {
        done += 1;
        for &w in succ.get(&v).into_iter().flatten() {
            let d = indeg.get_mut(&w).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(w);
            }
        }
    }
    if done < nodes.len() {
        let leftover: BTreeSet<MessageId> = indeg
            .iter()
            .filter(|(_, &d)| d > 0)
            .map(|(&v, _)| v)
            .collect();
        check.note(format!(
            "delivery order has a cycle: {}",
            witness_cycle(&leftover, &succ)
        ));
    }
    check
}

fn witness_cycle(
    leftover: &BTreeSet<MessageId>,
    succ: &BTreeMap<MessageId, Vec<MessageId>>,
) -> String {
    // Every leftover node sits on or upstream of a cycle; walk until a
    // repeat.
    let start = *leftover.iter().next().unwrap();
    let mut path: Vec<MessageId> = vec![start];
    let mut at: HashMap<MessageId, usize> = HashMap::from([(start, 0)]);
    loop {
        let cur = *path.last().unwrap();
        let next = succ
            .get(&cur)
            .into_iter()
            .flatten()
            .find(|m| leftover.contains(m));
        let next = match next {
            Some(&m) => m,
            None => return "unreconstructed".to_string(),
        };
        if let Some(&i) = at.get(&next) {
            let cycle: Vec<String> = path[i..].iter().map(|m| m.to_string()).collect();
            return format!("{} -> {}", cycle.join(" -> "), next);
        }
        at.insert(next, path.len());
        path.push(next);
    }
}

fn check_minimality(trace: &[TraceEvent], multicasts: &BTreeMap<MessageId, GroupSet>) -> Check {
    let mut check = Check::pass();
    // Groups some earlier multicast was addressed to; notification
    // targets must come from here.
    let mut past_dests = GroupSet::EMPTY;
    // (group, message): group was notified about message.
    let mut notified: HashSet<(u8, MessageId)> = HashSet::new();
    for e in trace {
        match e.kind {
            EventKind::ClientSend => {
                past_dests = past_dests.union(e.dst);
                continue;
            }
            EventKind::Receive => {}
            _ => continue,
        }
        let g = match e.entity {
            Entity::Group(g) => g,
            _ => continue,
        };
        let kind = match e.proto {
            Some(k) => k,
            None => continue,
        };
        let dst = multicasts.get(&e.msg).copied().unwrap_or(e.dst);
        match kind {
            ProtoKind::Msg | ProtoKind::Forward | ProtoKind::Ack | ProtoKind::Stamp => {
                if !dst.contains(g) {
                    check.note(format!(
                        "group {} received {} {} addressed to {}",
                        g,
                        kind.word(),
                        e.msg,
                        dst
                    ));
                }
                if let Some(Entity::Group(s)) = e.peer {
                    let notified_sender =
                        kind == ProtoKind::Ack && notified.contains(&(s.0, e.msg));
                    if !dst.contains(s) && !notified_sender {
                        check.note(format!(
                            "non-destination group {} sent {} {}",
                            s,
                            kind.word(),
                            e.msg
                        ));
                    }
                }
            }
            ProtoKind::Notif => {
                if dst.contains(g) {
                    check.note(format!("destination {} was notified about {}", g, e.msg));
                }
                if !past_dests.contains(g) {
                    check.note(format!(
                        "group {} notified about {} without ever being addressed",
                        g, e.msg
                    ));
                }
                if let Some(Entity::Group(s)) = e.peer {
                    if !dst.contains(s) && !notified.contains(&(s.0, e.msg)) {
                        check.note(format!(
                            "group {} sent a notification for {} from outside its destinations",
                            s, e.msg
                        ));
                    }
                }
                notified.insert((g.0, e.msg));
            }
        }
    }
    check
}

/// Per-group overhead: share of payload-bearing receives that the
/// group never delivered. Zero for a protocol that only hands payloads
/// to destinations.
pub fn overhead(trace: &[TraceEvent], n: u8) -> Vec<f64> {
    let mut received = vec![0u64; n as usize];
    let mut delivered = vec![0u64; n as usize];
    for e in trace {
        let g = match e.entity {
            Entity::Group(g) => g,
            _ => continue,
        };
        match e.kind {
            EventKind::Receive => {
                if e.proto.map(|k| k.bears_payload()).unwrap_or(false) {
                    received[g.idx()] += 1;
                }
            }
            EventKind::Deliver => delivered[g.idx()] += 1,
            _ => {}
        }
    }
    (0..n as usize)
        .map(|i| {
            if received[i] == 0 {
                0.0
            } else {
                1.0 - delivered[i] as f64 / received[i] as f64
            }
        })
        .collect()
}
