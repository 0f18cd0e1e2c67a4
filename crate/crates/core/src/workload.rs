//! Client workload generators.
//!
//! The transactional generator models a warehouse-per-group OLTP mix:
//! five transaction kinds, most touching only the client's home
//! warehouse, a minority spanning 2-3 warehouses picked by a locality
//! cascade over network distance. The uniform generator draws small
//! destination sets uniformly and is used for property sweeps.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::overlay::{GroupId, GroupSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TxKind {
    NewOrder,
    Payment,
    OrderStatus,
    Delivery,
    StockLevel,
}

impl TxKind {
    pub fn name(self) -> &'static str {
        match self {
            TxKind::NewOrder => "new_order",
            TxKind::Payment => "payment",
            TxKind::OrderStatus => "order_status",
            TxKind::Delivery => "delivery",
            TxKind::StockLevel => "stock_level",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tx {
    pub kind: TxKind,
    pub dst: GroupSet,
}

#[derive(Clone, Debug)]
pub struct TxParams {
    pub home: GroupId,
    /// Other groups by increasing latency from home, ties by rank.
    pub nearest: Vec<GroupId>,
    /// Cascade parameter: k-th nearest warehouse drawn with probability
    /// locality * (1 - locality)^(k-1); the farthest absorbs the rest.
    pub locality: f64,
    /// Probability a payment touches a second warehouse.
    pub payment_remote: f64,
    /// Drop single-warehouse transactions, keeping only multi-warehouse
    /// new orders and payments in their relative proportions.
    pub global_only: bool,
    /// Transactions spanning more than this many warehouses are
    /// redrawn (same kind).
    pub max_dst: u8,
}

impl TxParams {
    pub fn new(home: GroupId, nearest: Vec<GroupId>, locality: f64) -> TxParams {
        TxParams {
            home,
            nearest,
            locality,
            payment_remote: 0.15,
            global_only: false,
            max_dst: 3,
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Uniform { n: u8, max_dst: u8 },
    Tpc(TxParams),
}

#[derive(Clone, Debug)]
pub struct Generator {
    kind: Kind,
}

impl Generator {
    /// Destination sets of uniform size 1..=max_dst, members uniform
    /// without replacement.
    pub fn uniform(n: u8, max_dst: u8) -> Generator {
        assert!(n > 0 && max_dst > 0 && max_dst <= n);
        Generator {
            kind: Kind::Uniform { n, max_dst },
        }
    }

    pub fn transactional(params: TxParams) -> Generator {
        assert!(
            !(params.global_only && params.nearest.is_empty()),
            "multi-warehouse mix needs at least two groups"
        );
        assert!((0.0..=1.0).contains(&params.locality));
        assert!((0.0..=1.0).contains(&params.payment_remote));
        Generator {
            kind: Kind::Tpc(params),
        }
    }

    pub fn next_dst(&self, rng: &mut ChaCha8Rng) -> GroupSet {
        self.next_tx(rng).dst
    }

    pub fn next_tx(&self, rng: &mut ChaCha8Rng) -> Tx {
        match &self.kind {
            Kind::Uniform { n, max_dst } => {
                let size = rng.random_range(1..=*max_dst) as usize;
                let dst: GroupSet = rand::seq::index::sample(rng, *n as usize, size)
                    .iter()
                    .map(|i| GroupId(i as u8))
                    .collect();
                Tx {
                    kind: TxKind::NewOrder,
                    dst,
                }
            }
            Kind::Tpc(p) => tpc_tx(p, rng),
        }
    }
}

fn tpc_tx(p: &TxParams, rng: &mut ChaCha8Rng) -> Tx {
    let kind = draw_kind(p, rng);
    loop {
        let dst = draw_dst(p, kind, rng);
        let ok = if p.global_only {
            dst.len() >= 2 && dst.len() <= p.max_dst as u32
        } else {
            dst.len() <= p.max_dst as u32
        };
        if ok {
            return Tx { kind, dst };
        }
        // Oversized (or, in global-only mode, local): redraw the
        // destination set, keeping the kind so the mix stays put.
    }
}

fn draw_kind(p: &TxParams, rng: &mut ChaCha8Rng) -> TxKind {
    let u: f64 = rng.random();
    if p.global_only {
        // Only the two potentially multi-warehouse kinds, in their
        // usual 45:43 proportion.
        if u < 0.45 / 0.88 {
            TxKind::NewOrder
        } else {
            TxKind::Payment
        }
    } else if u < 0.45 {
        TxKind::NewOrder
    } else if u < 0.88 {
        TxKind::Payment
    } else if u < 0.92 {
        TxKind::OrderStatus
    } else if u < 0.96 {
        TxKind::Delivery
    } else {
        TxKind::StockLevel
    }
}

fn draw_dst(p: &TxParams, kind: TxKind, rng: &mut ChaCha8Rng) -> GroupSet {
    let mut dst = GroupSet::single(p.home);
    match kind {
        TxKind::NewOrder => {
            let items = rng.random_range(5..=15);
            for _ in 0..items {
                if !p.nearest.is_empty() && rng.random_bool(0.02) {
                    dst.insert(cascade(p, rng));
                }
            }
        }
        TxKind::Payment => {
            if !p.nearest.is_empty() && rng.random_bool(p.payment_remote) {
                dst.insert(cascade(p, rng));
            }
        }
        TxKind::OrderStatus | TxKind::Delivery | TxKind::StockLevel => {}
    }
    dst
}

/// Geometric pick over the nearest-first warehouse order.
fn cascade(p: &TxParams, rng: &mut ChaCha8Rng) -> GroupId {
    let last = p.nearest.len() - 1;
    for (k, &w) in p.nearest.iter().enumerate() {
        if k == last || rng.random_bool(p.locality) {
            return w;
        }
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::collections::HashMap;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn params(n: u8, locality: f64) -> TxParams {
        // home = 0, nearest order = 1, 2, .. n-1
        TxParams::new(GroupId(0), (1..n).map(GroupId).collect(), locality)
    }

    #[test]
    fn mix_proportions_hold() {
        let g = Generator::transactional(params(4, 0.9));
        let mut r = rng(7);
        let mut counts: HashMap<TxKind, u32> = HashMap::new();
        let total = 100_000;
        for _ in 0..total {
            *counts.entry(g.next_tx(&mut r).kind).or_default() += 1;
        }
        let frac = |k| *counts.get(&k).unwrap_or(&0) as f64 / total as f64;
        assert!((frac(TxKind::NewOrder) - 0.45).abs() < 0.01);
        assert!((frac(TxKind::Payment) - 0.43).abs() < 0.01);
        assert!((frac(TxKind::OrderStatus) - 0.04).abs() < 0.005);
        assert!((frac(TxKind::Delivery) - 0.04).abs() < 0.005);
        assert!((frac(TxKind::StockLevel) - 0.04).abs() < 0.005);
    }

    #[test]
    fn single_warehouse_kinds_stay_home() {
        let g = Generator::transactional(params(6, 0.5));
        let mut r = rng(3);
        for _ in 0..20_000 {
            let tx = g.next_tx(&mut r);
            match tx.kind {
                TxKind::OrderStatus | TxKind::Delivery | TxKind::StockLevel => {
                    assert_eq!(tx.dst, GroupSet::single(GroupId(0)));
                }
                _ => {
                    assert!(tx.dst.contains(GroupId(0)));
                    assert!(tx.dst.len() <= 3);
                }
            }
        }
    }

    #[test]
    fn full_locality_only_reaches_nearest() {
        let g = Generator::transactional(params(5, 1.0));
        let mut r = rng(11);
        for _ in 0..20_000 {
            let tx = g.next_tx(&mut r);
            // Remote picks can only be the nearest warehouse.
            assert!(tx.dst.is_subset_of(GroupSet::from_ranks(&[0, 1])));
        }
    }

    #[test]
    fn cascade_is_geometric() {
        let p = params(4, 0.5);
        let mut r = rng(5);
        let mut counts = [0u32; 3];
        let total = 60_000;
        for _ in 0..total {
            counts[cascade(&p, &mut r).idx() - 1] += 1;
        }
        let f: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        // 0.5, 0.25, and the farthest absorbs the remaining 0.25.
        assert!((f[0] - 0.5).abs() < 0.01);
        assert!((f[1] - 0.25).abs() < 0.01);
        assert!((f[2] - 0.25).abs() < 0.01);
    }

    #[test]
    fn global_only_is_always_multi_warehouse() {
        let mut p = params(6, 0.8);
        p.global_only = true;
        let g = Generator::transactional(p);
        let mut r = rng(13);
        let mut new_orders = 0u32;
        let total = 50_000;
        for _ in 0..total {
            let tx = g.next_tx(&mut r);
            assert!(tx.dst.len() >= 2 && tx.dst.len() <= 3);
            assert!(tx.dst.contains(GroupId(0)));
            match tx.kind {
                TxKind::NewOrder => new_orders += 1,
                TxKind::Payment => {}
                other => panic!("unexpected kind {:?}", other),
            }
        }
        let frac = new_orders as f64 / total as f64;
        assert!((frac - 0.45 / 0.88).abs() < 0.01, "new_order share {}", frac);
    }

    #[test]
    fn uniform_draws_all_sizes() {
        let g = Generator::uniform(5, 3);
        let mut r = rng(2);
        let mut seen = [false; 3];
        for _ in 0..1000 {
            let dst = g.next_dst(&mut r);
            assert!(dst.len() >= 1 && dst.len() <= 3);
            assert!(dst.max().unwrap().idx() < 5);
            seen[dst.len() as usize - 1] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn same_seed_same_sequence() {
        let g = Generator::transactional(params(8, 0.7));
        let a: Vec<GroupSet> = {
            let mut r = rng(99);
            (0..500).map(|_| g.next_dst(&mut r)).collect()
        };
        let b: Vec<GroupSet> = {
            let mut r = rng(99);
            (0..500).map(|_| g.next_dst(&mut r)).collect()
        };
        assert_eq!(a, b);
    }
}
