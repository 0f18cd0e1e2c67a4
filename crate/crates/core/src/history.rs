//! Dependency histories: append-only DAGs of delivered messages.
//!
//! A history holds a set of message records M, a set of directed edges
//! D ((m1, m2) meaning m1 was ordered before m2), and the id of the
//! last locally delivered message. Groups exchange history *deltas*;
//! merging a delta is a plain set union on M and D, which makes
//! histories a join semilattice: merge order never matters.
//!
//! Edges in D may name ids whose records are absent. Full group
//! histories are closed (every edge endpoint has a record); deltas are
//! not, since records already shipped to a peer are not resent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::overlay::{GroupId, GroupSet};

/// Client id reserved for garbage-collection flush multicasts.
pub const FLUSH_CLIENT: u32 = u32::MAX;

/// Globally unique message id: issuing client plus per-client sequence
/// number. The derived lexicographic order is the protocol-wide
/// tie-break order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MessageId {
    pub client: u32,
    pub seq: u32,
}

impl MessageId {
    pub fn new(client: u32, seq: u32) -> MessageId {
        MessageId { client, seq }
    }

    pub fn is_flush(self) -> bool {
        self.client == FLUSH_CLIENT
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.client, self.seq)
    }
}

/// Identity and destination set of a multicast message.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct MessageRecord {
    pub id: MessageId,
    pub dst: GroupSet,
}

impl MessageRecord {
    pub fn new(id: MessageId, dst: GroupSet) -> MessageRecord {
        MessageRecord { id, dst }
    }

    /// Lowest-ranked destination; the root of the message's dissemination.
    pub fn lca(&self) -> GroupId {
        self.dst.min().expect("message with empty destination set")
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum HistoryError {
    /// Merging two histories would create a cycle in D. Correct
    /// protocol runs never produce one; this flags an implementation
    /// bug, not an operating condition.
    Inconsistent { edge: (MessageId, MessageId) },
}

impl fmt::Display for HistoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistoryError::Inconsistent { edge } => write!(
                f,
                "inconsistent histories: edge {} -> {} closes a cycle",
                edge.0, edge.1
            ),
        }
    }
}

impl std::error::Error for HistoryError {}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct History {
    records: BTreeMap<MessageId, GroupSet>,
    edges: BTreeSet<(MessageId, MessageId)>,
    succ: BTreeMap<MessageId, Vec<MessageId>>,
    pred: BTreeMap<MessageId, Vec<MessageId>>,
    last_delivered: Option<MessageId>,
}

impl History {
    pub fn new() -> History {
        History::default()
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn last_delivered(&self) -> Option<MessageId> {
        self.last_delivered
    }

    pub fn contains(&self, id: MessageId) -> bool {
        self.records.contains_key(&id)
    }

    pub fn dst_of(&self, id: MessageId) -> Option<GroupSet> {
        self.records.get(&id).copied()
    }

    pub fn records(&self) -> impl Iterator<Item = MessageRecord> + '_ {
        self.records
            .iter()
            .map(|(&id, &dst)| MessageRecord { id, dst })
    }

    pub fn edges(&self) -> impl Iterator<Item = (MessageId, MessageId)> + '_ {
        self.edges.iter().copied()
    }

    /// True if some record is addressed to `g`.
    pub fn contains_msg_to(&self, g: GroupId) -> bool {
        self.records.values().any(|dst| dst.contains(g))
    }

    fn insert_edge(&mut self, a: MessageId, b: MessageId) -> bool {
        if self.edges.insert((a, b)) {
            self.succ.entry(a).or_default().push(b);
            self.pred.entry(b).or_default().push(a);
            true
        } else {
            false
        }
    }

    /// Record a local delivery: append the record, chain it after the
    /// previous local delivery, and advance the local delivery marker.
    pub fn add_delivered(&mut self, rec: MessageRecord) {
        self.records.insert(rec.id, rec.dst);
        if let Some(prev) = self.last_delivered {
            if prev != rec.id {
                let added = self.insert_edge(prev, rec.id);
                // A back path from the new edge's target to its source
                // would mean two groups delivered these messages in
                // opposite orders; that is a protocol bug.
                debug_assert!(
                    !(added && self.reaches(rec.id, prev)),
                    "local delivery chain closed a cycle at {}",
                    rec.id
                );
            }
        }
        self.last_delivered = Some(rec.id);
    }

    /// Set-union merge of a received delta into this history. The
    /// incoming `last_delivered` is the sender's marker and is ignored.
    pub fn merge(&mut self, incoming: &History) -> Result<(), HistoryError> {
        for (&id, &dst) in &incoming.records {
            self.records.insert(id, dst);
        }
        let mut fresh = Vec::new();
        for &(a, b) in &incoming.edges {
            if self.insert_edge(a, b) {
                fresh.push((a, b));
            }
        }
        // The graph was acyclic before the merge, so any new cycle runs
        // through at least one freshly inserted edge.
        for &(a, b) in &fresh {
            if self.reaches(b, a) {
                return Err(HistoryError::Inconsistent { edge: (a, b) });
            }
        }
        Ok(())
    }

    /// True if there is a directed path from `from` to `to` in D.
    fn reaches(&self, from: MessageId, to: MessageId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if let Some(nexts) = self.succ.get(&v) {
                for &n in nexts {
                    if n == to {
                        return true;
                    }
                    if seen.insert(n) {
                        stack.push(n);
                    }
                }
            }
        }
        false
    }

    /// True if `m` transitively depends on `prior`: D orders `prior`
    /// somewhere before `m`.
    pub fn depend(&self, m: MessageId, prior: MessageId) -> bool {
        if m == prior {
            return false;
        }
        self.reaches(prior, m)
    }

    /// True if some record ordered before `m` is addressed to `g` and
    /// not delivered yet. One walk back over the predecessor edges,
    /// stopping at the first hit, instead of a forward search from
    /// every candidate.
    pub fn blocked_by_open(
        &self,
        m: MessageId,
        g: GroupId,
        delivered: &BTreeSet<MessageId>,
    ) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![m];
        while let Some(v) = stack.pop() {
            if let Some(prevs) = self.pred.get(&v) {
                for &p in prevs {
                    if seen.insert(p) {
                        if let Some(dst) = self.records.get(&p) {
                            if dst.contains(g) && !delivered.contains(&p) {
                                return true;
                            }
                        }
                        stack.push(p);
                    }
                }
            }
        }
        false
    }

    /// Records addressed to `g` that `g` has not delivered yet, in id
    /// order.
    pub fn open_dependencies(
        &self,
        g: GroupId,
        delivered: &BTreeSet<MessageId>,
    ) -> Vec<MessageId> {
        self.records
            .iter()
            .filter(|(id, dst)| dst.contains(g) && !delivered.contains(id))
            .map(|(&id, _)| id)
            .collect()
    }

    /// Delta of everything this history holds beyond the watermark.
    /// The caller advances the watermark separately once the delta is
    /// actually sent.
    pub fn diff_since(&self, wm: &Watermark) -> History {
        let mut out = History::new();
        for (&id, &dst) in &self.records {
            if !wm.ids.contains(&id) {
                out.records.insert(id, dst);
            }
        }
        for &(a, b) in &self.edges {
            if !wm.edges.contains(&(a, b)) {
                out.insert_edge(a, b);
            }
        }
        out.last_delivered = self.last_delivered;
        out
    }

    /// Drop every record ordered before `flush` that either is not
    /// addressed to `g` or was already delivered at `g`, along with all
    /// edges touching dropped records. `flush` itself stays behind as
    /// the dependency frontier; the local delivery marker is untouched.
    pub fn prune_before_flush(
        &mut self,
        g: GroupId,
        flush: MessageId,
        delivered: &BTreeSet<MessageId>,
    ) {
        // Backward cone of flush: everything with a path into it.
        let mut cone = BTreeSet::new();
        let mut stack = vec![flush];
        while let Some(v) = stack.pop() {
            if let Some(prevs) = self.pred.get(&v) {
                for &p in prevs {
                    if cone.insert(p) {
                        stack.push(p);
                    }
                }
            }
        }
        cone.remove(&flush);
        let doomed: BTreeSet<MessageId> = cone
            .into_iter()
            .filter(|id| match self.records.get(id) {
                Some(dst) => !dst.contains(g) || delivered.contains(id),
                // Dangling id without a record: nothing to keep.
                None => true,
            })
            .collect();
        if doomed.is_empty() {
            return;
        }
        for id in &doomed {
            self.records.remove(id);
        }
        self.edges
            .retain(|(a, b)| !doomed.contains(a) && !doomed.contains(b));
        self.succ.clear();
        self.pred.clear();
        let edges: Vec<_> = self.edges.iter().copied().collect();
        for (a, b) in edges {
            self.succ.entry(a).or_default().push(b);
            self.pred.entry(b).or_default().push(a);
        }
    }

    /// Wire size of this history as a delta under the byte model:
    /// 16 bytes per vertex, 16 per edge, plus a 24-byte envelope.
    pub fn wire_bytes(&self) -> u64 {
        24 + 16 * self.records.len() as u64 + 16 * self.edges.len() as u64
    }
}

/// Per-peer record of which history content was already shipped.
#[derive(Clone, Debug, Default)]
pub struct Watermark {
    ids: BTreeSet<MessageId>,
    edges: BTreeSet<(MessageId, MessageId)>,
}

impl Watermark {
    pub fn new() -> Watermark {
        Watermark::default()
    }

    /// Advance to cover everything `h` currently holds.
    pub fn advance_to(&mut self, h: &History) {
        self.ids = h.records.keys().copied().collect();
        self.edges = h.edges.clone();
    }

    /// Forget entries the (pruned) history no longer holds. Dropping
    /// them never changes a future diff: a diff only ships what the
    /// history holds beyond the watermark.
    pub fn retain_known(&mut self, h: &History) {
        self.ids.retain(|id| h.records.contains_key(id));
        self.edges.retain(|e| h.edges.contains(e));
    }

    pub fn len(&self) -> usize {
        self.ids.len() + self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty() && self.edges.is_empty()
    }
}
