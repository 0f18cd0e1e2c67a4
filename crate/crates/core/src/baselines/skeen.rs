//! Timestamp-vote atomic multicast (genuine: only destinations take
//! part).
//!
//! The client hands its multicast to the nearest destination. That
//! entry group stamps it with its logical clock and forwards it to the
//! other destinations, stamp piggybacked. Every destination stamps in
//! turn and sends its timestamp to all the others; the final timestamp
//! is the maximum vote, and each destination delivers in (final
//! timestamp, id) order.
//!
//! A message is released once it is finalized and no pending rival
//! with a local stamp could still undercut it. Rivals known only
//! through other groups' votes need no gate: the local clock has
//! absorbed every timestamp seen, so their own future stamp, and with
//! it their final timestamp, must land above it.

use std::collections::{BTreeMap, BTreeSet};

use crate::history::MessageId;
use crate::overlay::{GroupId, GroupSet};
use crate::simnet::{
    Delivery, Multicast, NetModel, Protocol, ProtocolError, Transition, WireMeta,
};
use crate::trace::ProtoKind;

#[derive(Clone, Debug)]
pub enum Wire {
    Forward { m: Multicast, lt: u64 },
    Stamp { id: MessageId, dst: GroupSet, lt: u64 },
}

struct Pend {
    m: Option<Multicast>,
    dst: GroupSet,
    lts: BTreeMap<GroupId, u64>,
}

impl Pend {
    fn finalized(&self) -> Option<u64> {
        if self.lts.len() == self.dst.len() as usize {
            self.lts.values().copied().max()
        } else {
            None
        }
    }

    fn lower_bound(&self) -> u64 {
        self.lts.values().copied().max().unwrap_or(0)
    }

    fn has_local(&self, g: GroupId) -> bool {
        self.lts.contains_key(&g)
    }
}

struct State {
    g: GroupId,
    clock: u64,
    pending: BTreeMap<MessageId, Pend>,
    delivered: BTreeSet<MessageId>,
}

impl State {
    fn stamp(&mut self, id: MessageId, from: GroupId, lt: u64) -> Result<(), ProtocolError> {
        let p = self.pending.get_mut(&id).expect("stamp without entry");
        if p.lts.insert(from, lt).is_some() {
            return Err(ProtocolError::DuplicateStamp {
                g: self.g,
                msg: id,
                from,
            });
        }
        Ok(())
    }

    /// Release finalized messages in (final timestamp, id) order while
    /// no locally-stamped rival could still slot in below.
    fn drain(&mut self, out: &mut Transition<Wire>) {
        loop {
            let best = self
                .pending
                .iter()
                .filter_map(|(&id, p)| p.finalized().map(|ft| (ft, id)))
                .min();
            let (ft, id) = match best {
                Some(b) => b,
                None => return,
            };
            let gated = self.pending.iter().any(|(&pid, p)| {
                pid != id
                    && p.finalized().is_none()
                    && p.has_local(self.g)
                    && (ft, id) > (p.lower_bound(), pid)
            });
            if gated {
                return;
            }
            let p = self.pending.remove(&id).unwrap();
            let m = p.m.expect("finalized without payload");
            self.delivered.insert(id);
            out.delivered.push(Delivery {
                rec: m.rec,
                payload_bytes: m.payload_bytes,
            });
        }
    }
}

pub struct Skeen {
    groups: Vec<State>,
}

impl Skeen {
    pub fn new(n: u8) -> Skeen {
        Skeen {
            groups: (0..n)
                .map(|i| State {
                    g: GroupId(i),
                    clock: 0,
                    pending: BTreeMap::new(),
                    delivered: BTreeSet::new(),
                })
                .collect(),
        }
    }
}

impl Protocol for Skeen {
    type Wire = Wire;
    const INGRESS: ProtoKind = ProtoKind::Forward;

    fn group_count(&self) -> u8 {
        self.groups.len() as u8
    }

    /// Nearest destination by latency from the client's home region,
    /// ties to the lowest rank. A home that is itself a destination
    /// wins at distance zero.
    fn entry_group(&self, home: GroupId, dst: GroupSet, net: &NetModel) -> GroupId {
        dst.iter()
            .min_by_key(|&d| (net.lat(home, d), d))
            .expect("empty destination set")
    }

    fn on_client(&mut self, g: GroupId, m: Multicast) -> Result<Transition<Wire>, ProtocolError> {
        let id = m.rec.id;
        let dst = m.rec.dst;
        if !dst.contains(g) {
            return Err(ProtocolError::MisroutedClient { g, msg: id });
        }
        let st = &mut self.groups[g.idx()];
        if st.delivered.contains(&id) {
            return Err(ProtocolError::DoubleDelivery { g, msg: id });
        }
        let mut out = Transition::default();
        st.clock += 1;
        let lt = st.clock;
        if dst.len() == 1 {
            st.delivered.insert(id);
            out.delivered.push(Delivery {
                rec: m.rec,
                payload_bytes: m.payload_bytes,
            });
            return Ok(out);
        }
        st.pending.insert(
            id,
            Pend {
                m: Some(m),
                dst,
                lts: BTreeMap::new(),
            },
        );
        st.stamp(id, g, lt)?;
        for d in dst.iter().filter(|&d| d != g) {
            out.sends.push((d, Wire::Forward { m, lt }));
        }
        st.drain(&mut out);
        Ok(out)
    }

    fn on_wire(&mut self, g: GroupId, from: GroupId, w: Wire) -> Result<Transition<Wire>, ProtocolError> {
        let mut out = Transition::default();
        let st = &mut self.groups[g.idx()];
        match w {
            Wire::Forward { m, lt } => {
                let id = m.rec.id;
                let dst = m.rec.dst;
                if !dst.contains(g) {
                    return Err(ProtocolError::Misdelivered { g, msg: id });
                }
                if st.delivered.contains(&id) {
                    return Err(ProtocolError::DoubleDelivery { g, msg: id });
                }
                st.clock = st.clock.max(lt) + 1;
                let own = st.clock;
                let p = st.pending.entry(id).or_insert(Pend {
                    m: None,
                    dst,
                    lts: BTreeMap::new(),
                });
                p.m = Some(m);
                st.stamp(id, from, lt)?;
                st.stamp(id, g, own)?;
                for d in dst.iter().filter(|&d| d != g) {
                    out.sends.push((d, Wire::Stamp { id, dst, lt: own }));
                }
                st.drain(&mut out);
            }
            Wire::Stamp { id, dst, lt } => {
                if !dst.contains(g) {
                    return Err(ProtocolError::Misdelivered { g, msg: id });
                }
                // Absorb the vote so no later local stamp can dip
                // under an already-released message.
                st.clock = st.clock.max(lt);
                if !st.delivered.contains(&id) {
                    st.pending.entry(id).or_insert(Pend {
                        m: None,
                        dst,
                        lts: BTreeMap::new(),
                    });
                    st.stamp(id, from, lt)?;
                    st.drain(&mut out);
                }
            }
        }
        Ok(out)
    }

    fn wire_meta(w: &Wire) -> WireMeta {
        match w {
            Wire::Forward { m, .. } => WireMeta {
                kind: ProtoKind::Forward,
                msg: m.rec.id,
                dst: m.rec.dst,
                bytes: 24 + m.payload_bytes,
            },
            Wire::Stamp { id, dst, .. } => WireMeta {
                kind: ProtoKind::Stamp,
                msg: *id,
                dst: *dst,
                bytes: 24,
            },
        }
    }
}
