//! Genuine atomic multicast over the complete-DAG group overlay.
//!
//! Groups are ranked; every lower rank is an ancestor of every higher
//! rank. A multicast enters at the lowest-ranked destination, which
//! delivers immediately and pushes it downstream with a history delta.
//! Higher-ranked destinations hold a message until (1) every
//! destination strictly between the entry point and themselves has
//! acknowledged it, including groups pulled in by notification, and
//! (2) nothing addressed to them that precedes it in the merged
//! history is still undelivered. Non-destination groups are notified
//! when a sender's history shows traffic addressed to them sandwiched
//! between two destinations; they acknowledge once their own backlog
//! clears, letting the upper destination proceed without the message
//! ever being routed through them.
//!
//! Notifications are tracked as (notifier, notified) pairs. A notified
//! group answers each notifier separately, and only after delivering
//! every message addressed to it that it knew of when that notification
//! arrived; the notification's delta is merged first, so the snapshot
//! covers everything the notifier knew was headed this way. The answer
//! is an Ack tagged with the notifier, and a destination holds a
//! message until every pair it knows of, with the notified group ranked
//! below it, has been answered. An untagged ack from the notified group
//! is not enough: it may predate the notification and miss the ordering
//! constraints the notifier knew about.
//!
//! Per-channel deltas ride on every message: a group remembers what it
//! already shipped to each descendant (watermarks) and sends only the
//! new records and edges. FIFO channels make that sound.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::history::{History, MessageId, MessageRecord, Watermark};
use crate::overlay::{GroupId, GroupSet};
use crate::simnet::{
    Delivery, Multicast, NetModel, Protocol, ProtocolError, Transition, WireMeta,
};
use crate::trace::ProtoKind;

/// (notifier, notified) pairs attached to a message in flight.
pub type NotifPairs = BTreeSet<(GroupId, GroupId)>;

#[derive(Clone, Debug)]
pub enum Wire {
    /// Entry group to a destination: the multicast plus a history delta
    /// and the notification pairs accumulated so far.
    Msg {
        m: Multicast,
        delta: History,
        notifs: NotifPairs,
    },
    /// Acknowledgement flowing from a lower destination (or a notified
    /// group) to a higher destination. `notif_from` names the notifier
    /// this ack answers; `None` marks a destination's own ack.
    Ack {
        id: MessageId,
        dst: GroupSet,
        delta: History,
        notifs: NotifPairs,
        notif_from: Option<GroupId>,
    },
    /// Heads-up to a non-destination that the sender's history holds
    /// traffic addressed to it; answered with a tagged Ack once nothing
    /// addressed to the receiver is left undelivered.
    Notif {
        id: MessageId,
        dst: GroupSet,
        delta: History,
    },
}

struct Entry {
    m: Multicast,
    /// Destinations below us that acked.
    acks: GroupSet,
    /// Notification pairs already answered.
    answered: NotifPairs,
    /// Notification pairs known for this message.
    notifs: NotifPairs,
}

#[derive(Default)]
struct Stash {
    acks: GroupSet,
    answered: NotifPairs,
    notifs: NotifPairs,
}

struct GroupState {
    g: GroupId,
    hst: History,
    /// Ids this group delivered. Never pruned: a slow ancestor may
    /// re-ship records the flush already removed from `hst`, and they
    /// must not look undelivered.
    delivered: BTreeSet<MessageId>,
    /// Undelivered queued multicasts, one FIFO per entry group.
    queues: BTreeMap<GroupId, VecDeque<MessageId>>,
    entries: BTreeMap<MessageId, Entry>,
    /// Acknowledgements that arrived before their Msg.
    stash: BTreeMap<MessageId, Stash>,
    /// Parked notifications: (record, notifier, remaining backlog).
    /// The backlog is the set of undelivered messages addressed to this
    /// group at notification arrival, after the notification's delta
    /// was merged; the answer fires once all of them are delivered.
    pend_notif: Vec<(MessageRecord, GroupId, BTreeSet<MessageId>)>,
    /// Notifications already answered, so resends stay idempotent.
    notif_done: BTreeSet<(MessageId, GroupId)>,
    /// What each descendant already knows of our history.
    sent: BTreeMap<GroupId, Watermark>,
}

impl GroupState {
    fn new(g: GroupId) -> GroupState {
        GroupState {
            g,
            hst: History::new(),
            delivered: BTreeSet::new(),
            queues: BTreeMap::new(),
            entries: BTreeMap::new(),
            stash: BTreeMap::new(),
            pend_notif: Vec::new(),
            notif_done: BTreeSet::new(),
            sent: BTreeMap::new(),
        }
    }

    fn delta_for(&mut self, d: GroupId) -> History {
        let wm = self.sent.entry(d).or_default();
        let delta = self.hst.diff_since(wm);
        wm.advance_to(&self.hst);
        delta
    }

    /// Notifications first (so the destination copies carry the full
    /// pair list), then the message or acknowledgement to each
    /// destination above us. `answer` names the notifier when this call
    /// is a notified group answering rather than a destination acking.
    fn send_descendants(
        &mut self,
        m: Multicast,
        mut notifs: NotifPairs,
        answer: Option<GroupId>,
        n: u8,
        out: &mut Transition<Wire>,
    ) -> NotifPairs {
        let g = self.g;
        let dst = m.rec.dst;
        let is_entry = g == m.rec.lca();
        for d in (g.0 + 1..n).map(GroupId) {
            if dst.contains(d) {
                continue;
            }
            let above: GroupSet = dst.minus(GroupSet::below(GroupId(d.0 + 1)));
            if above.is_empty() || !self.hst.contains_msg_to(d) {
                continue;
            }
            let delta = self.delta_for(d);
            notifs.insert((g, d));
            out.sends.push((
                d,
                Wire::Notif {
                    id: m.rec.id,
                    dst,
                    delta,
                },
            ));
        }
        if let Some(x) = answer {
            notifs.insert((x, g));
        }
        for d in dst.iter().filter(|&d| d > g) {
            let delta = self.delta_for(d);
            let w = if is_entry {
                Wire::Msg {
                    m,
                    delta,
                    notifs: notifs.clone(),
                }
            } else {
                Wire::Ack {
                    id: m.rec.id,
                    dst,
                    delta,
                    notifs: notifs.clone(),
                    notif_from: answer,
                }
            };
            out.sends.push((d, w));
        }
        notifs
    }

    /// Answer one notification: a tagged ack to every destination above
    /// us, carrying any further notifications this answer spawns.
    fn answer_notif(
        &mut self,
        rec: MessageRecord,
        notifier: GroupId,
        n: u8,
        out: &mut Transition<Wire>,
    ) {
        self.notif_done.insert((rec.id, notifier));
        self.send_descendants(
            Multicast {
                rec,
                payload_bytes: 0,
            },
            NotifPairs::new(),
            Some(notifier),
            n,
            out,
        );
    }

    fn a_deliver(
        &mut self,
        m: Multicast,
        notifs: NotifPairs,
        n: u8,
        out: &mut Transition<Wire>,
    ) -> Result<(), ProtocolError> {
        let id = m.rec.id;
        if self.delivered.contains(&id) {
            return Err(ProtocolError::DoubleDelivery { g: self.g, msg: id });
        }
        self.hst.add_delivered(m.rec);
        self.delivered.insert(id);
        out.delivered.push(Delivery {
            rec: m.rec,
            payload_bytes: m.payload_bytes,
        });
        self.send_descendants(m, notifs, None, n, out);
        if id.is_flush() {
            self.hst.prune_before_flush(self.g, id, &self.delivered);
            for wm in self.sent.values_mut() {
                wm.retain_known(&self.hst);
            }
            self.notif_done.retain(|(nid, _)| self.hst.contains(*nid));
        }
        // This delivery may be the last of some parked notification's
        // backlog; those answers fire now.
        let mut fire = Vec::new();
        self.pend_notif.retain_mut(|(rec, notifier, deps)| {
            deps.remove(&id);
            if deps.is_empty() {
                fire.push((*rec, *notifier));
                false
            } else {
                true
            }
        });
        for (rec, notifier) in fire {
            self.answer_notif(rec, notifier, n, out);
        }
        Ok(())
    }

    fn can_deliver(&self, id: MessageId) -> bool {
        let entry = &self.entries[&id];
        let dst = entry.m.rec.dst;
        let anc = GroupSet::below(self.g);
        let mut need = dst.intersect(anc);
        need.remove(entry.m.rec.lca());
        if !need.is_subset_of(entry.acks) {
            return false;
        }
        // Every known notification pair whose notified group sits below
        // us must have been answered; an answer to one notifier does
        // not vouch for another.
        for &(x, h) in &entry.notifs {
            if anc.contains(h) && !entry.answered.contains(&(x, h)) {
                return false;
            }
        }
        !self.hst.blocked_by_open(id, self.g, &self.delivered)
    }

    /// Deliver queue heads to a fixpoint: one head per queue per pass,
    /// entry groups in rank order.
    fn reprocess(&mut self, n: u8, out: &mut Transition<Wire>) -> Result<(), ProtocolError> {
        loop {
            let mut progressed = false;
            let keys: Vec<GroupId> = self.queues.keys().copied().collect();
            for k in keys {
                let head = match self.queues.get(&k).and_then(|q| q.front()) {
                    Some(&h) => h,
                    None => continue,
                };
                if !self.can_deliver(head) {
                    continue;
                }
                self.queues.get_mut(&k).unwrap().pop_front();
                let entry = self.entries.remove(&head).unwrap();
                self.a_deliver(entry.m, entry.notifs, n, out)?;
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        self.queues.retain(|_, q| !q.is_empty());
        Ok(())
    }

    fn footprint(&self) -> usize {
        self.hst.record_count() + self.hst.edge_count()
    }
}

pub struct Flexcast {
    groups: Vec<GroupState>,
}

impl Flexcast {
    pub fn new(n: u8) -> Flexcast {
        Flexcast {
            groups: (0..n).map(GroupId).map(GroupState::new).collect(),
        }
    }

    fn n(&self) -> u8 {
        self.groups.len() as u8
    }

    #[cfg(test)]
    fn state(&self, g: GroupId) -> &GroupState {
        &self.groups[g.idx()]
    }
}

impl Protocol for Flexcast {
    type Wire = Wire;
    const INGRESS: ProtoKind = ProtoKind::Msg;

    fn group_count(&self) -> u8 {
        self.n()
    }

    fn entry_group(&self, _home: GroupId, dst: GroupSet, _net: &NetModel) -> GroupId {
        dst.min().expect("empty destination set")
    }

    fn on_client(&mut self, g: GroupId, m: Multicast) -> Result<Transition<Wire>, ProtocolError> {
        if g != m.rec.lca() {
            return Err(ProtocolError::MisroutedClient { g, msg: m.rec.id });
        }
        let n = self.n();
        let mut out = Transition::default();
        // The entry group orders the message itself; nothing below it
        // can hold a copy yet, so no requeue scan is needed.
        self.groups[g.idx()].a_deliver(m, NotifPairs::new(), n, &mut out)?;
        Ok(out)
    }

    fn on_wire(&mut self, g: GroupId, from: GroupId, w: Wire) -> Result<Transition<Wire>, ProtocolError> {
        let n = self.n();
        let mut out = Transition::default();
        let st = &mut self.groups[g.idx()];
        match w {
            Wire::Msg { m, delta, notifs } => {
                let id = m.rec.id;
                if !m.rec.dst.contains(g) {
                    return Err(ProtocolError::Misdelivered { g, msg: id });
                }
                st.hst.merge(&delta)?;
                if !st.delivered.contains(&id) {
                    let mut entry = Entry {
                        m,
                        acks: GroupSet::EMPTY,
                        answered: NotifPairs::new(),
                        notifs,
                    };
                    if let Some(s) = st.stash.remove(&id) {
                        entry.acks = entry.acks.union(s.acks);
                        entry.answered.extend(s.answered);
                        entry.notifs.extend(s.notifs);
                    }
                    st.entries.insert(id, entry);
                    st.queues.entry(from).or_default().push_back(id);
                }
                st.reprocess(n, &mut out)?;
            }
            Wire::Ack {
                id,
                dst,
                delta,
                notifs,
                notif_from,
            } => {
                if !dst.contains(g) {
                    return Err(ProtocolError::Misdelivered { g, msg: id });
                }
                st.hst.merge(&delta)?;
                if let Some(entry) = st.entries.get_mut(&id) {
                    match notif_from {
                        Some(x) => {
                            entry.answered.insert((x, from));
                        }
                        None => {
                            entry.acks.insert(from);
                        }
                    }
                    entry.notifs.extend(notifs);
                } else if !st.delivered.contains(&id) {
                    let s = st.stash.entry(id).or_default();
                    match notif_from {
                        Some(x) => {
                            s.answered.insert((x, from));
                        }
                        None => {
                            s.acks.insert(from);
                        }
                    }
                    s.notifs.extend(notifs);
                }
                st.reprocess(n, &mut out)?;
            }
            Wire::Notif { id, dst, delta } => {
                debug_assert!(!dst.contains(g), "notified a destination");
                st.hst.merge(&delta)?;
                let rec = MessageRecord::new(id, dst);
                let seen = st.notif_done.contains(&(id, from))
                    || st.pend_notif.iter().any(|(r, x, _)| r.id == id && *x == from);
                if !seen {
                    // The delta was merged first, so this snapshot
                    // covers everything the notifier knew was headed
                    // our way. Waiting only for records already ordered
                    // before this message is not enough: the ordering
                    // can be created later, by a group ranked above the
                    // destination, after the destination committed.
                    // Flushes are left out: they are addressed to every
                    // group, so each destination orders them with its
                    // own dependency scan, and waiting on one here
                    // would chain the answer to the slowest message in
                    // the system.
                    let deps: BTreeSet<MessageId> = st
                        .hst
                        .open_dependencies(st.g, &st.delivered)
                        .into_iter()
                        .filter(|w| !w.is_flush())
                        .collect();
                    if deps.is_empty() {
                        st.answer_notif(rec, from, n, &mut out);
                    } else {
                        st.pend_notif.push((rec, from, deps));
                    }
                }
                // A merge can only add blockers, never clear acks, so
                // queued heads cannot have become deliverable here.
            }
        }
        Ok(out)
    }

    fn wire_meta(w: &Wire) -> WireMeta {
        match w {
            Wire::Msg { m, delta, notifs } => WireMeta {
                kind: ProtoKind::Msg,
                msg: m.rec.id,
                dst: m.rec.dst,
                bytes: delta.wire_bytes() + 2 * notifs.len() as u64 + m.payload_bytes,
            },
            Wire::Ack {
                id,
                dst,
                delta,
                notifs,
                ..
            } => WireMeta {
                kind: ProtoKind::Ack,
                msg: *id,
                dst: *dst,
                bytes: delta.wire_bytes() + 2 * notifs.len() as u64,
            },
            Wire::Notif { id, dst, delta } => WireMeta {
                kind: ProtoKind::Notif,
                msg: *id,
                dst: *dst,
                bytes: delta.wire_bytes(),
            },
        }
    }

    fn history_footprint(&self) -> usize {
        self.groups.iter().map(|s| s.footprint()).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: GroupId = GroupId(0);
    const B: GroupId = GroupId(1);
    const C: GroupId = GroupId(2);
    const D: GroupId = GroupId(3);

    fn mc(client: u32, seq: u32, ranks: &[u8]) -> Multicast {
        Multicast {
            rec: MessageRecord::new(MessageId::new(client, seq), GroupSet::from_ranks(ranks)),
            payload_bytes: 0,
        }
    }

    fn delivered_ids(tr: &Transition<Wire>) -> Vec<MessageId> {
        tr.delivered.iter().map(|d| d.rec.id).collect()
    }

    fn sends_to(tr: &Transition<Wire>, d: GroupId) -> Vec<&Wire> {
        tr.sends
            .iter()
            .filter(|(to, _)| *to == d)
            .map(|(_, w)| w)
            .collect()
    }

    #[test]
    fn entry_group_delivers_immediately() {
        let mut fx = Flexcast::new(2);
        let m = mc(0, 0, &[0, 1]);
        let tr = fx.on_client(A, m).unwrap();
        assert_eq!(delivered_ids(&tr), vec![m.rec.id]);
        let to_b = sends_to(&tr, B);
        assert_eq!(to_b.len(), 1);
        match to_b[0] {
            Wire::Msg { delta, notifs, .. } => {
                assert!(delta.contains(m.rec.id));
                assert_eq!(delta.record_count(), 1);
                assert!(notifs.is_empty());
            }
            other => panic!("expected Msg, got {:?}", other),
        }
    }

    #[test]
    fn misrouted_client_is_an_error() {
        let mut fx = Flexcast::new(3);
        assert!(matches!(
            fx.on_client(B, mc(0, 0, &[0, 1])),
            Err(ProtocolError::MisroutedClient { .. })
        ));
    }

    // Entry group A issues m1 then m2; the downstream copy of a later
    // multicast carries enough history to block until earlier traffic
    // addressed to the receiver lands.
    #[test]
    fn history_blocks_until_predecessor_arrives() {
        let mut fx = Flexcast::new(3);
        let m1 = mc(0, 0, &[0, 2]);
        let m2 = mc(0, 1, &[0, 1]);
        let m3 = mc(1, 0, &[1, 2]);

        let t1 = fx.on_client(A, m1).unwrap();
        let msg_m1_to_c = t1.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;
        let t2 = fx.on_client(A, m2).unwrap();
        let msg_m2_to_b = t2.sends.into_iter().find(|(to, _)| *to == B).unwrap().1;

        // B delivers m2 off the wire, then issues m3.
        let tb = fx.on_wire(B, A, msg_m2_to_b).unwrap();
        assert_eq!(delivered_ids(&tb), vec![m2.rec.id]);
        let t3 = fx.on_client(B, m3).unwrap();
        let msg_m3_to_c = t3.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;

        // B's copy to C carries the full chain m1 -> m2 -> m3.
        match &msg_m3_to_c {
            Wire::Msg { delta, .. } => {
                assert_eq!(delta.record_count(), 3);
                assert_eq!(delta.edge_count(), 2);
                assert!(delta.contains(m1.rec.id));
            }
            other => panic!("expected Msg, got {:?}", other),
        }

        // m3 first: C must hold it, m1 precedes it and is addressed here.
        let tc1 = fx.on_wire(C, B, msg_m3_to_c).unwrap();
        assert!(delivered_ids(&tc1).is_empty());
        // m1 lands: both deliver, in order.
        let tc2 = fx.on_wire(C, A, msg_m1_to_c).unwrap();
        assert_eq!(delivered_ids(&tc2), vec![m1.rec.id, m3.rec.id]);
    }

    // Middle destination must acknowledge before the top one delivers.
    #[test]
    fn middle_destination_ack_gates_delivery() {
        let mut fx = Flexcast::new(3);
        let m1 = mc(0, 0, &[1, 2]);
        let m2 = mc(1, 0, &[0, 1, 2]);

        let t1 = fx.on_client(B, m1).unwrap();
        let msg_m1_to_c = t1.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;
        let t2 = fx.on_client(A, m2).unwrap();
        let mut m2_wires: BTreeMap<GroupId, Wire> = t2.sends.into_iter().collect();
        let msg_m2_to_b = m2_wires.remove(&B).unwrap();
        let msg_m2_to_c = m2_wires.remove(&C).unwrap();

        // C gets m2 first: blocked by B's missing ack.
        let tc1 = fx.on_wire(C, A, msg_m2_to_c).unwrap();
        assert!(delivered_ids(&tc1).is_empty());

        // B delivers m2 (after its own m1) and acks to C.
        let tb = fx.on_wire(B, A, msg_m2_to_b).unwrap();
        assert_eq!(delivered_ids(&tb), vec![m2.rec.id]);
        let ack_to_c = tb.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;
        match &ack_to_c {
            Wire::Ack { id, delta, .. } => {
                assert_eq!(*id, m2.rec.id);
                // Delta from B to C: m2 plus the m1 -> m2 edge (B
                // already shipped m1 itself in its Msg).
                assert_eq!(delta.record_count(), 1);
                assert_eq!(delta.edge_count(), 1);
            }
            other => panic!("expected Ack, got {:?}", other),
        }

        // m1 lands next (it left B before the ack, and B -> C is
        // FIFO). m2 keeps waiting: the ack is the one missing piece.
        let tc2 = fx.on_wire(C, B, msg_m1_to_c).unwrap();
        assert_eq!(delivered_ids(&tc2), vec![m1.rec.id]);
        let tc3 = fx.on_wire(C, B, ack_to_c).unwrap();
        assert_eq!(delivered_ids(&tc3), vec![m2.rec.id]);
    }

    // A non-destination group is notified, answers with an ack once its
    // backlog clears, and the top destination orders on that ack.
    #[test]
    fn notified_group_acks_for_skipped_destination() {
        let mut fx = Flexcast::new(3);
        let m1 = mc(1, 0, &[1, 2]);
        let m2 = mc(0, 0, &[0, 1]);
        let m3 = mc(0, 1, &[0, 2]);

        let t1 = fx.on_client(B, m1).unwrap();
        let msg_m1_to_c = t1.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;
        let t2 = fx.on_client(A, m2).unwrap();
        let msg_m2_to_b = t2.sends.into_iter().find(|(to, _)| *to == B).unwrap().1;

        // m3 goes only to A and C, but A's history holds m2 addressed
        // to B: A notifies B and tells C about it.
        let t3 = fx.on_client(A, m3).unwrap();
        let notif_to_b = {
            let v = sends_to(&t3, B);
            assert_eq!(v.len(), 1);
            match v[0] {
                Wire::Notif { id, delta, .. } => {
                    assert_eq!(*id, m3.rec.id);
                    assert!(delta.contains(m3.rec.id));
                }
                other => panic!("expected Notif, got {:?}", other),
            }
            t3.sends
                .iter()
                .find(|(to, _)| *to == B)
                .unwrap()
                .1
                .clone()
        };
        let msg_m3_to_c = t3.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;
        match &msg_m3_to_c {
            Wire::Msg { notifs, delta, .. } => {
                let want: NotifPairs = [(A, B)].into_iter().collect();
                assert_eq!(*notifs, want);
                assert_eq!(delta.record_count(), 2); // m2, m3
                assert_eq!(delta.edge_count(), 1);
            }
            other => panic!("expected Msg, got {:?}", other),
        }

        // C holds m3: B is on the notification list and has not acked.
        let tc1 = fx.on_wire(C, A, msg_m3_to_c).unwrap();
        assert!(delivered_ids(&tc1).is_empty());

        // B delivered m1 already (it entered there); m2 arrives and is
        // delivered; then the notification finds no open backlog and
        // the ack fires towards C.
        let tb1 = fx.on_wire(B, A, msg_m2_to_b).unwrap();
        assert_eq!(delivered_ids(&tb1), vec![m2.rec.id]);
        let tb2 = fx.on_wire(B, A, notif_to_b).unwrap();
        assert!(delivered_ids(&tb2).is_empty());
        let ack_to_c = tb2.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;
        match &ack_to_c {
            Wire::Ack { id, delta, .. } => {
                assert_eq!(*id, m3.rec.id);
                // B already shipped m1 to C; the ack delta closes the
                // rest: m2, m3 and both chain edges.
                assert_eq!(delta.record_count(), 2);
                assert_eq!(delta.edge_count(), 2);
            }
            other => panic!("expected Ack, got {:?}", other),
        }

        // Order at C: m1 (B shipped it before the ack), then m3 once
        // the ack is in.
        let tc2 = fx.on_wire(C, B, msg_m1_to_c).unwrap();
        assert_eq!(delivered_ids(&tc2), vec![m1.rec.id]);
        let tc3 = fx.on_wire(C, B, ack_to_c).unwrap();
        assert_eq!(delivered_ids(&tc3), vec![m3.rec.id]);
    }

    // Notification arriving while the backlog is still open parks, and
    // fires on the delivery that clears it. The notification races
    // ahead on the B -> C channel while the backlog message crawls in
    // on A -> C.
    #[test]
    fn parked_notification_fires_on_delivery() {
        let mut fx = Flexcast::new(4);
        let m1 = mc(0, 0, &[0, 2]);
        let m0 = mc(0, 1, &[0, 1]);
        let m2 = mc(1, 0, &[1, 3]);

        let t1 = fx.on_client(A, m1).unwrap();
        let msg_m1_to_c = t1.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;
        // m0's delta hands B the record of m1, addressed to C.
        let t0 = fx.on_client(A, m0).unwrap();
        let msg_m0_to_b = t0.sends.into_iter().find(|(to, _)| *to == B).unwrap().1;
        fx.on_wire(B, A, msg_m0_to_b).unwrap();

        // m2 {B,D} skips C, but B's history holds m1 addressed to C
        // with D ranked above: B notifies C on the way.
        let t2 = fx.on_client(B, m2).unwrap();
        let notif_to_c = t2.sends.iter().find(|(to, _)| *to == C).unwrap().1.clone();
        assert!(matches!(notif_to_c, Wire::Notif { .. }));

        // C has not seen m1 itself yet: the notification parks.
        let tc1 = fx.on_wire(C, B, notif_to_c).unwrap();
        assert!(tc1.sends.is_empty());
        assert!(delivered_ids(&tc1).is_empty());

        // m1 lands: C delivers it and the parked notification acks.
        let tc2 = fx.on_wire(C, A, msg_m1_to_c).unwrap();
        assert_eq!(delivered_ids(&tc2), vec![m1.rec.id]);
        let ack = tc2.sends.iter().find(|(to, _)| *to == D);
        assert!(
            matches!(ack, Some((_, Wire::Ack { id, .. })) if *id == m2.rec.id),
            "parked notification should ack once m1 is delivered"
        );
    }

    // An ack racing ahead of its Msg is stashed and folded in later.
    #[test]
    fn early_ack_is_stashed() {
        let mut fx = Flexcast::new(3);
        let m = mc(0, 0, &[0, 1, 2]);
        let t = fx.on_client(A, m).unwrap();
        let mut wires: BTreeMap<GroupId, Wire> = t.sends.into_iter().collect();
        let msg_to_b = wires.remove(&B).unwrap();
        let msg_to_c = wires.remove(&C).unwrap();

        let tb = fx.on_wire(B, A, msg_to_b).unwrap();
        let ack_to_c = tb.sends.into_iter().find(|(to, _)| *to == C).unwrap().1;

        // Ack first, then the Msg: delivery happens as the Msg lands.
        let tc1 = fx.on_wire(C, B, ack_to_c).unwrap();
        assert!(delivered_ids(&tc1).is_empty());
        let tc2 = fx.on_wire(C, A, msg_to_c).unwrap();
        assert_eq!(delivered_ids(&tc2), vec![m.rec.id]);
    }

    #[test]
    fn flush_prunes_history_but_not_delivered_set() {
        use crate::history::FLUSH_CLIENT;
        let mut fx = Flexcast::new(2);
        for seq in 0..20 {
            let m = mc(0, seq, &[0, 1]);
            let t = fx.on_client(A, m).unwrap();
            let w = t.sends.into_iter().find(|(to, _)| *to == B).unwrap().1;
            fx.on_wire(B, A, w).unwrap();
        }
        assert_eq!(fx.state(B).hst.record_count(), 20);

        let flush = Multicast {
            rec: MessageRecord::new(
                MessageId::new(FLUSH_CLIENT, 0),
                GroupSet::from_ranks(&[0, 1]),
            ),
            payload_bytes: 0,
        };
        let t = fx.on_client(A, flush).unwrap();
        let w = t.sends.into_iter().find(|(to, _)| *to == B).unwrap().1;
        fx.on_wire(B, A, w).unwrap();

        // Everything before the flush was delivered at both groups;
        // only the flush record itself survives.
        assert_eq!(fx.state(A).hst.record_count(), 1);
        assert_eq!(fx.state(B).hst.record_count(), 1);
        assert_eq!(fx.state(B).delivered.len(), 21);
    }

    #[test]
    fn misdelivered_wire_is_an_error() {
        let mut fx = Flexcast::new(3);
        let m = mc(0, 0, &[0, 1]);
        let t = fx.on_client(A, m).unwrap();
        let w = t.sends.into_iter().find(|(to, _)| *to == B).unwrap().1;
        assert!(matches!(
            fx.on_wire(C, A, w),
            Err(ProtocolError::Misdelivered { .. })
        ));
    }
}
