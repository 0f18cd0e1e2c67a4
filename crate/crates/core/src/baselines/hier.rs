//! Fixed-tree atomic multicast.
//!
//! A multicast enters at the lowest common tree ancestor of its
//! destinations, which need not be a destination itself. Each group
//! sequences arrivals in order, delivers the ones addressed to it, and
//! relays each one down every child subtree holding a destination.
//! FIFO channels preserve the sequence on the way down, and because
//! the ancestor chains of any two nodes are totally ordered, any pair
//! of multicasts shares a unique highest relay point; everything below
//! inherits that point's order. Relays that are not destinations are
//! the price: they handle traffic that is not addressed to them.

use std::collections::BTreeSet;

use crate::history::MessageId;
use crate::overlay::{GroupId, TreeOverlay};
use crate::simnet::{
    Delivery, Multicast, NetModel, Protocol, ProtocolError, Transition, WireMeta,
};
use crate::trace::ProtoKind;

pub struct Hier {
    tree: TreeOverlay,
    delivered: Vec<BTreeSet<MessageId>>,
}

impl Hier {
    pub fn new(tree: TreeOverlay) -> Hier {
        let n = tree.len() as usize;
        Hier {
            tree,
            delivered: vec![BTreeSet::new(); n],
        }
    }

    fn route(&mut self, g: GroupId, m: Multicast) -> Result<Transition<Multicast>, ProtocolError> {
        let mut out = Transition::default();
        if m.rec.dst.contains(g) {
            if !self.delivered[g.idx()].insert(m.rec.id) {
                return Err(ProtocolError::DoubleDelivery { g, msg: m.rec.id });
            }
            out.delivered.push(Delivery {
                rec: m.rec,
                payload_bytes: m.payload_bytes,
            });
        }
        for c in self.tree.children(g).iter() {
            if !self.tree.subtree(c).intersect(m.rec.dst).is_empty() {
                out.sends.push((c, m));
            }
        }
        Ok(out)
    }
}

impl Protocol for Hier {
    type Wire = Multicast;
    const INGRESS: ProtoKind = ProtoKind::Forward;

    fn group_count(&self) -> u8 {
        self.tree.len()
    }

    fn entry_group(&self, _home: GroupId, dst: crate::overlay::GroupSet, _net: &NetModel) -> GroupId {
        self.tree.tree_lca(dst).expect("empty destination set")
    }

    fn on_client(&mut self, g: GroupId, m: Multicast) -> Result<Transition<Multicast>, ProtocolError> {
        let lca = self
            .tree
            .tree_lca(m.rec.dst)
            .map_err(|_| ProtocolError::MisroutedClient { g, msg: m.rec.id })?;
        if g != lca {
            return Err(ProtocolError::MisroutedClient { g, msg: m.rec.id });
        }
        self.route(g, m)
    }

    fn on_wire(&mut self, g: GroupId, _from: GroupId, m: Multicast) -> Result<Transition<Multicast>, ProtocolError> {
        if self.tree.subtree(g).intersect(m.rec.dst).is_empty() {
            return Err(ProtocolError::RoutingBug { g, msg: m.rec.id });
        }
        self.route(g, m)
    }

    fn wire_meta(w: &Multicast) -> WireMeta {
        WireMeta {
            kind: ProtoKind::Forward,
            msg: w.rec.id,
            dst: w.rec.dst,
            bytes: 24 + w.payload_bytes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::MessageRecord;
    use crate::overlay::GroupSet;

    fn chain3() -> TreeOverlay {
        // g0 is the root, g1 under it, g2 under g1.
        TreeOverlay::new(
            vec!["g0".into(), "g1".into(), "g2".into()],
            &[
                ("g1".to_string(), "g0".to_string()),
                ("g2".to_string(), "g1".to_string()),
            ],
        )
        .unwrap()
    }

    fn mc(client: u32, seq: u32, ranks: &[u8]) -> Multicast {
        Multicast {
            rec: MessageRecord::new(MessageId::new(client, seq), GroupSet::from_ranks(ranks)),
            payload_bytes: 0,
        }
    }

    #[test]
    fn relay_forwards_without_delivering() {
        let mut h = Hier::new(chain3());
        let m = mc(0, 0, &[0, 2]);
        // Enters at the root, delivered there, relayed through g1.
        let t0 = h.on_client(GroupId(0), m).unwrap();
        assert_eq!(t0.delivered.len(), 1);
        assert_eq!(t0.sends.len(), 1);
        let (to, w) = t0.sends.into_iter().next().unwrap();
        assert_eq!(to, GroupId(1));
        // g1 is not a destination: relay only.
        let t1 = h.on_wire(GroupId(1), GroupId(0), w).unwrap();
        assert!(t1.delivered.is_empty());
        assert_eq!(t1.sends.len(), 1);
        let (to, w) = t1.sends.into_iter().next().unwrap();
        assert_eq!(to, GroupId(2));
        let t2 = h.on_wire(GroupId(2), GroupId(1), w).unwrap();
        assert_eq!(t2.delivered.len(), 1);
        assert!(t2.sends.is_empty());
    }

    #[test]
    fn entry_is_the_lowest_common_tree_ancestor() {
        let h = Hier::new(chain3());
        let net = NetModel::uniform(3, 10.0, 1.0);
        assert_eq!(h.entry_group(GroupId(0), GroupSet::from_ranks(&[1, 2]), &net), GroupId(1));
        assert_eq!(h.entry_group(GroupId(2), GroupSet::from_ranks(&[0, 2]), &net), GroupId(0));
        assert_eq!(h.entry_group(GroupId(0), GroupSet::from_ranks(&[2]), &net), GroupId(2));
    }

    #[test]
    fn wrong_entry_is_rejected() {
        let mut h = Hier::new(chain3());
        assert!(matches!(
            h.on_client(GroupId(0), mc(0, 0, &[1, 2])),
            Err(ProtocolError::MisroutedClient { .. })
        ));
    }

    #[test]
    fn stray_forward_is_a_routing_bug() {
        let mut h = Hier::new(chain3());
        // A message for g0 alone has no business below it.
        assert!(matches!(
            h.on_wire(GroupId(1), GroupId(0), mc(0, 0, &[0])),
            Err(ProtocolError::RoutingBug { .. })
        ));
    }

    #[test]
    fn star_fans_out_once() {
        // Root g0 with three leaves.
        let tree = TreeOverlay::new(
            vec!["g0".into(), "g1".into(), "g2".into(), "g3".into()],
            &[
                ("g1".to_string(), "g0".to_string()),
                ("g2".to_string(), "g0".to_string()),
                ("g3".to_string(), "g0".to_string()),
            ],
        )
        .unwrap();
        let mut h = Hier::new(tree);
        let m = mc(0, 0, &[1, 3]);
        let t = h.on_client(GroupId(0), m).unwrap();
        // Root relays to exactly the two destination leaves and keeps
        // nothing for itself.
        assert!(t.delivered.is_empty());
        let mut tos: Vec<GroupId> = t.sends.iter().map(|(to, _)| *to).collect();
        tos.sort();
        assert_eq!(tos, vec![GroupId(1), GroupId(3)]);
    }
}
