//! Run statistics computed from traces.
//!
//! Latency samples are per destination rank: a transaction delivered
//! at three groups contributes its fastest delivery to rank 1, the
//! next to rank 2, and so on, each measured from the client's send.
//! Throughput trims a fraction of transactions from both ends of the
//! issue timeline to cut warmup and drain, then divides the surviving
//! completions by their issue-time span.

use std::collections::HashMap;

use crate::history::{MessageId, FLUSH_CLIENT};
use crate::overlay::GroupSet;
use crate::trace::{Entity, EventKind, TraceEvent};

/// Nearest-rank percentile over an ascending slice: the smallest
/// element at least p percent of the way in. NaN on empty input.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let k = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

#[derive(Clone, Debug)]
pub struct RankStats {
    pub rank: u32,
    pub samples: usize,
    pub p90_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TxStats {
    pub per_rank: Vec<RankStats>,
    pub throughput_tps: f64,
    /// Completed transactions before trimming.
    pub complete: usize,
    /// Transactions surviving the trim.
    pub kept: usize,
}

struct TxTimes {
    issue_ns: u64,
    dst: GroupSet,
    delivers: HashMap<u8, u64>,
}

/// Latency and throughput over completed transactions, flushes
/// excluded, trimming `trim_frac` of completions off both ends of the
/// issue timeline.
pub fn transaction_stats(trace: &[TraceEvent], trim_frac: f64) -> TxStats {
    let mut txs: HashMap<MessageId, TxTimes> = HashMap::new();
    for e in trace {
        if e.msg.client == FLUSH_CLIENT {
            continue;
        }
        match e.kind {
            EventKind::ClientSend => {
                txs.entry(e.msg).or_insert(TxTimes {
                    issue_ns: e.at_ns,
                    dst: e.dst,
                    delivers: HashMap::new(),
                });
            }
            EventKind::Deliver => {
                if let (Entity::Group(g), Some(tx)) = (e.entity, txs.get_mut(&e.msg)) {
                    tx.delivers.entry(g.0).or_insert(e.at_ns);
                }
            }
            _ => {}
        }
    }

    let mut complete: Vec<(MessageId, &TxTimes)> = txs
        .iter()
        .filter(|(_, t)| t.dst.iter().all(|g| t.delivers.contains_key(&g.0)))
        .map(|(&id, t)| (id, t))
        .collect();
    // Ties on issue time broken by id, so the trim cut is stable.
    complete.sort_by_key(|&(id, t)| (t.issue_ns, id));
    let total = complete.len();
    let cut = (trim_frac * total as f64).floor() as usize;
    let lo = cut.min(total);
    let hi = total.saturating_sub(cut).max(lo);
    let kept = &complete[lo..hi];

    let mut by_rank: Vec<Vec<f64>> = Vec::new();
    for (_, t) in kept {
        let mut times: Vec<u64> = t.dst.iter().map(|g| t.delivers[&g.0]).collect();
        times.sort_unstable();
        for (i, &at) in times.iter().enumerate() {
            if by_rank.len() <= i {
                by_rank.push(Vec::new());
            }
            by_rank[i].push((at - t.issue_ns) as f64 / 1e6);
        }
    }
    let per_rank = by_rank
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            RankStats {
                rank: i as u32 + 1,
                samples: v.len(),
                p90_ms: percentile(&v, 90.0),
                p95_ms: percentile(&v, 95.0),
                p99_ms: percentile(&v, 99.0),
            }
        })
        .collect();

    let throughput_tps = match (kept.first(), kept.last()) {
        (Some((_, a)), Some((_, b))) if b.issue_ns > a.issue_ns => {
            kept.len() as f64 / ((b.issue_ns - a.issue_ns) as f64 / 1e9)
        }
        _ => 0.0,
    };

    TxStats {
        per_rank,
        throughput_tps,
        complete: total,
        kept: kept.len(),
    }
}

/// How throughput kept up with a client-count change: the throughput
/// ratio normalized by the client ratio. 1.0 is perfect scaling, 0.5
/// is no gain from doubling.
pub fn scalability_factor(mt_i: f64, cf_i: f64, mt_j: f64, cf_j: f64) -> f64 {
    (mt_j / mt_i) * (cf_i / cf_j)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupBytes {
    pub msgs_per_s: f64,
    pub mean_bytes: f64,
    pub bytes_per_s: f64,
}

/// Receive-side traffic per group over the trace's time span, all
/// message kinds included.
pub fn byte_accounting(trace: &[TraceEvent], n: u8) -> Vec<GroupBytes> {
    let mut count = vec![0u64; n as usize];
    let mut bytes = vec![0u64; n as usize];
    for e in trace {
        if e.kind != EventKind::Receive {
            continue;
        }
        if let Entity::Group(g) = e.entity {
            count[g.idx()] += 1;
            bytes[g.idx()] += e.bytes;
        }
    }
    let span_s = match (trace.first(), trace.last()) {
        (Some(a), Some(b)) if b.at_ns > a.at_ns => (b.at_ns - a.at_ns) as f64 / 1e9,
        _ => 0.0,
    };
    (0..n as usize)
        .map(|i| GroupBytes {
            msgs_per_s: if span_s > 0.0 {
                count[i] as f64 / span_s
            } else {
                0.0
            },
            mean_bytes: if count[i] > 0 {
                bytes[i] as f64 / count[i] as f64
            } else {
                0.0
            },
            bytes_per_s: if span_s > 0.0 {
                bytes[i] as f64 / span_s
            } else {
                0.0
            },
        })
        .collect()
}

fn rank_avg(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks on ties; 0.0 when
/// either side is constant.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let rx = rank_avg(xs);
    let ry = rank_avg(ys);
    let mean = (n + 1) as f64 / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..n {
        let a = rx[i] - mean;
        let b = ry[i] - mean;
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

#[derive(Clone, Debug)]
pub struct RunRow {
    pub protocol: String,
    pub overlay: String,
    pub locality: f64,
    pub seed: u64,
    pub rank: u32,
    pub p90_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub throughput_tps: f64,
    pub overheads: Vec<f64>,
}

pub fn csv_header(n: u8) -> String {
    let mut h = String::from("protocol,overlay,locality,seed,rank,p90_ms,p95_ms,p99_ms,throughput_tps");
    for g in 0..n {
        h.push_str(&format!(",overhead_{}", g));
    }
    h
}

impl RunRow {
    pub fn csv_line(&self) -> String {
        let mut s = format!(
            "{},{},{:.3},{},{},{:.3},{:.3},{:.3},{:.3}",
            self.protocol,
            self.overlay,
            self.locality,
            self.seed,
            self.rank,
            self.p90_ms,
            self.p95_ms,
            self.p99_ms,
            self.throughput_tps
        );
        for o in &self.overheads {
            s.push_str(&format!(",{:.3}", o));
        }
        s
    }
}
