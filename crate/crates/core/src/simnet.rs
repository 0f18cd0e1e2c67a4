//! Deterministic discrete-event simulation of groups on a WAN.
//!
//! One process per group, point-to-point channels with per-pair one-way
//! latencies, FIFO order enforced per channel (arrival times are
//! clamped monotone even under jitter), and ties broken by insertion
//! sequence. Runs are fully reproducible from the seed: same config and
//! seed, same trace, byte for byte.
//!
//! Clients are closed-loop: each waits for a delivery reply from every
//! destination of its current multicast before issuing the next one.
//! Replies are recorded at delivery time; the reply leg itself is not
//! charged, so a destination's latency is its delivery time minus the
//! client's send time.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::history::{HistoryError, MessageId, MessageRecord, FLUSH_CLIENT};
use crate::overlay::{GroupId, GroupSet};
use crate::trace::{Entity, EventKind, ProtoKind, TraceEvent};
use crate::workload::Generator;

/// Stable seed derivation (splitmix64 over the pair).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Region-to-region one-way latencies, as read from a matrix file.
#[derive(Clone, Debug)]
pub struct LatencyMatrix {
    regions: Vec<String>,
    ns: Vec<Vec<u64>>,
}

#[derive(Debug)]
pub enum MatrixError {
    Bad(String),
}

impl fmt::Display for MatrixError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixError::Bad(s) => write!(f, "bad latency matrix: {}", s),
        }
    }
}

impl std::error::Error for MatrixError {}

impl LatencyMatrix {
    pub fn new(regions: Vec<String>, ms: Vec<Vec<f64>>) -> Result<LatencyMatrix, MatrixError> {
        let n = regions.len();
        if n == 0 {
            return Err(MatrixError::Bad("no regions".to_string()));
        }
        if n > 64 {
            return Err(MatrixError::Bad(format!("{} regions, max 64", n)));
        }
        if ms.len() != n {
            return Err(MatrixError::Bad(format!(
                "{} regions but {} latency rows",
                n,
                ms.len()
            )));
        }
        let mut ns = Vec::with_capacity(n);
        for (i, row) in ms.iter().enumerate() {
            if row.len() != n {
                return Err(MatrixError::Bad(format!(
                    "row {} has {} entries, expected {}",
                    i,
                    row.len(),
                    n
                )));
            }
            let mut out = Vec::with_capacity(n);
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(MatrixError::Bad(format!("negative or non-finite latency {}", v)));
                }
                out.push((v * 1e6).round() as u64);
            }
            ns.push(out);
        }
        Ok(LatencyMatrix { regions, ns })
    }

    /// Matrix file format: first line holds comma-separated region
    /// names; each of the following n lines holds n comma-separated
    /// one-way latencies in milliseconds. '#' starts a comment.
    pub fn parse(text: &str) -> Result<LatencyMatrix, MatrixError> {
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| MatrixError::Bad("empty file".to_string()))?;
        let regions: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut ms = Vec::new();
        for line in lines {
            let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            ms.push(row.map_err(|e| MatrixError::Bad(format!("bad latency value: {}", e)))?);
        }
        LatencyMatrix::new(regions, ms)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = self.regions.join(",");
        out.push('\n');
        for row in &self.ns {
            let cells: Vec<String> = row.iter().map(|&v| format!("{}", v as f64 / 1e6)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn index_of(&self, region: &str) -> Option<usize> {
        self.regions.iter().position(|r| r == region)
    }

    pub fn ns(&self, from: usize, to: usize) -> u64 {
        self.ns[from][to]
    }
}

/// Rank-indexed view of the network: group g sits in region
/// `region_of_rank[g]` of the underlying matrix.
#[derive(Clone, Debug)]
pub struct NetModel {
    n: u8,
    lat_ns: Vec<u64>,
    client_link_ns: Vec<u64>,
    region_names: Vec<String>,
}

impl NetModel {
    pub fn new(
        matrix: &LatencyMatrix,
        region_of_rank: &[usize],
        client_link_ms: f64,
    ) -> NetModel {
        let n = region_of_rank.len();
        let mut lat_ns = vec![0u64; n * n];
        for a in 0..n {
            for b in 0..n {
                lat_ns[a * n + b] = matrix.ns(region_of_rank[a], region_of_rank[b]);
            }
        }
        NetModel {
            n: n as u8,
            lat_ns,
            client_link_ns: vec![(client_link_ms * 1e6).round() as u64; n],
            region_names: region_of_rank
                .iter()
                .map(|&r| matrix.regions()[r].clone())
                .collect(),
        }
    }

    /// Uniform matrix for synthetic tests: `link_ms` between any two
    /// distinct groups.
    pub fn uniform(n: u8, link_ms: f64, client_link_ms: f64) -> NetModel {
        let mut lat_ns = vec![(link_ms * 1e6).round() as u64; n as usize * n as usize];
        for i in 0..n as usize {
            lat_ns[i * n as usize + i] = 0;
        }
        NetModel {
            n,
            lat_ns,
            client_link_ns: vec![(client_link_ms * 1e6).round() as u64; n as usize],
            region_names: (0..n).map(|i| format!("g{}", i)).collect(),
        }
    }

    /// Synthetic model with explicit per-pair latencies in ms.
    pub fn from_ms(rows: &[Vec<f64>], client_link_ms: f64) -> NetModel {
        let n = rows.len();
        let mut lat_ns = vec![0u64; n * n];
        for (a, row) in rows.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                lat_ns[a * n + b] = (v * 1e6).round() as u64;
            }
        }
        NetModel {
            n: n as u8,
            lat_ns,
            client_link_ns: vec![(client_link_ms * 1e6).round() as u64; n],
            region_names: (0..n).map(|i| format!("g{}", i)).collect(),
        }
    }

    pub fn group_count(&self) -> u8 {
        self.n
    }

    pub fn all_groups(&self) -> GroupSet {
        (0..self.n).map(GroupId).collect()
    }

    pub fn lat(&self, from: GroupId, to: GroupId) -> u64 {
        self.lat_ns[from.idx() * self.n as usize + to.idx()]
    }

    pub fn client_link(&self, home: GroupId) -> u64 {
        self.client_link_ns[home.idx()]
    }

    pub fn region_name(&self, g: GroupId) -> &str {
        &self.region_names[g.idx()]
    }

    /// Latency of a client based in `home`'s region reaching `entry`.
    pub fn ingress(&self, home: GroupId, entry: GroupId) -> u64 {
        if home == entry {
            self.client_link(home)
        } else {
            self.client_link(home) + self.lat(home, entry)
        }
    }

    /// Groups sorted by latency from `home` (excluding `home`), ties by
    /// rank. The order used by workload locality draws.
    pub fn nearest_order(&self, home: GroupId) -> Vec<GroupId> {
        let mut others: Vec<GroupId> = (0..self.n).map(GroupId).filter(|&g| g != home).collect();
        others.sort_by_key(|&g| (self.lat(home, g), g));
        others
    }
}

/// A client-issued multicast.
#[derive(Clone, Copy, Debug)]
pub struct Multicast {
    pub rec: MessageRecord,
    pub payload_bytes: u64,
}

/// One delivery a protocol performed.
#[derive(Clone, Copy, Debug)]
pub struct Delivery {
    pub rec: MessageRecord,
    pub payload_bytes: u64,
}

/// What a protocol handler did in response to one event.
#[derive(Debug)]
pub struct Transition<W> {
    pub sends: Vec<(GroupId, W)>,
    pub delivered: Vec<Delivery>,
}

impl<W> Default for Transition<W> {
    fn default() -> Self {
        Transition {
            sends: Vec::new(),
            delivered: Vec::new(),
        }
    }
}

/// Wire-message facts the simulator needs for tracing and accounting.
#[derive(Clone, Copy, Debug)]
pub struct WireMeta {
    pub kind: ProtoKind,
    pub msg: MessageId,
    pub dst: GroupSet,
    pub bytes: u64,
}

#[derive(Debug, PartialEq, Eq)]
pub enum ProtocolError {
    /// Client message entered at a group that is not its entry point.
    MisroutedClient { g: GroupId, msg: MessageId },
    /// Protocol message arrived at a group outside its destination set.
    Misdelivered { g: GroupId, msg: MessageId },
    /// A group delivered the same message twice.
    DoubleDelivery { g: GroupId, msg: MessageId },
    /// Two timestamp votes from the same group for the same message.
    DuplicateStamp { g: GroupId, msg: MessageId, from: GroupId },
    /// Tree routing pushed a message where no destination lives.
    RoutingBug { g: GroupId, msg: MessageId },
    /// History merge detected inconsistent orderings.
    History(HistoryError),
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolError::MisroutedClient { g, msg } => {
                write!(f, "misrouted client message {} at group {}", msg, g)
            }
            ProtocolError::Misdelivered { g, msg } => {
                write!(f, "message {} arrived at non-destination group {}", msg, g)
            }
            ProtocolError::DoubleDelivery { g, msg } => {
                write!(f, "group {} delivered {} twice", g, msg)
            }
            ProtocolError::DuplicateStamp { g, msg, from } => {
                write!(f, "group {} got two stamps for {} from {}", g, msg, from)
            }
            ProtocolError::RoutingBug { g, msg } => {
                write!(f, "routing bug: {} at group {} with no destination below", msg, g)
            }
            ProtocolError::History(e) => write!(f, "{}", e),
        }
    }
}

impl std::error::Error for ProtocolError {}

impl From<HistoryError> for ProtocolError {
    fn from(e: HistoryError) -> Self {
        ProtocolError::History(e)
    }
}

/// A multicast protocol as a family of per-group state machines driven
/// by the simulator.
pub trait Protocol {
    type Wire: Clone;

    /// Wire kind a client's own message counts as when it reaches its
    /// entry group.
    const INGRESS: ProtoKind;

    fn group_count(&self) -> u8;

    /// Group a client based at `home` sends a multicast to.
    fn entry_group(&self, home: GroupId, dst: GroupSet, net: &NetModel) -> GroupId;

    fn on_client(
        &mut self,
        g: GroupId,
        m: Multicast,
    ) -> Result<Transition<Self::Wire>, ProtocolError>;

    fn on_wire(
        &mut self,
        g: GroupId,
        from: GroupId,
        w: Self::Wire,
    ) -> Result<Transition<Self::Wire>, ProtocolError>;

    fn wire_meta(w: &Self::Wire) -> WireMeta;

    /// Current retained ordering-state size (vertices plus edges of the
    /// largest group history); 0 for protocols without histories.
    fn history_footprint(&self) -> usize {
        0
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    /// Client pause between completing one multicast and issuing the
    /// next.
    pub think_ns: u64,
    /// Clients stop issuing past this virtual time; in-flight traffic
    /// still drains.
    pub horizon_ns: Option<u64>,
    /// Clients stop issuing once this many multicasts were issued
    /// (flushes excluded).
    pub max_msgs: Option<u64>,
    /// Issue a flush multicast to every group after each `k` client
    /// multicasts.
    pub flush_every: Option<u64>,
    /// Uniform latency jitter as a fraction (0.1 = +/-10%).
    pub jitter: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            think_ns: 0,
            horizon_ns: None,
            max_msgs: None,
            flush_every: None,
            jitter: None,
        }
    }
}

pub struct ClientSpec {
    pub home: GroupId,
    pub gen: Generator,
}

/// A pre-scheduled multicast injection for scripted runs.
#[derive(Clone, Copy, Debug)]
pub struct Injection {
    pub at_ns: u64,
    pub home: GroupId,
    pub id: MessageId,
    pub dst: GroupSet,
}

pub struct SimOutput {
    pub trace: Vec<TraceEvent>,
    /// Peak of `Protocol::history_footprint` observed after any event.
    pub peak_history: usize,
    /// Client multicasts issued (flushes excluded).
    pub issued: u64,
    /// Client multicasts fully replied to.
    pub completed: u64,
}

struct Client {
    home: GroupId,
    gen: Generator,
    rng: ChaCha8Rng,
    next_seq: u32,
    outstanding: Option<Outstanding>,
}

struct Outstanding {
    id: MessageId,
    awaiting: GroupSet,
}

enum Body<W> {
    Wire { from: GroupId, to: GroupId, w: W },
    Arrive { client: u32, m: Multicast },
    Issue { client: u32 },
    Inject { m: Multicast, home: GroupId },
}

struct Ev<W> {
    at: u64,
    seq: u64,
    body: Body<W>,
}

impl<W> PartialEq for Ev<W> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl<W> Eq for Ev<W> {}
impl<W> PartialOrd for Ev<W> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<W> Ord for Ev<W> {
    // Reversed so BinaryHeap pops the earliest (time, insertion) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

pub struct Sim<'n, P: Protocol> {
    proto: P,
    net: &'n NetModel,
    cfg: SimConfig,
    clients: Vec<Client>,
    queue: BinaryHeap<Ev<P::Wire>>,
    next_ev_seq: u64,
    chan_last: HashMap<(u64, u8), u64>,
    jitter_rng: ChaCha8Rng,
    trace: Vec<TraceEvent>,
    issued: u64,
    completed: u64,
    flush_seq: u32,
    peak_history: usize,
}

impl<'n, P: Protocol> Sim<'n, P> {
    pub fn new(proto: P, net: &'n NetModel, cfg: SimConfig, specs: Vec<ClientSpec>) -> Self {
        let seed = cfg.seed;
        let clients = specs
            .into_iter()
            .enumerate()
            .map(|(i, s)| Client {
                home: s.home,
                gen: s.gen,
                rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64)),
                next_seq: 0,
                outstanding: None,
            })
            .collect();
        let mut sim = Sim {
            proto,
            net,
            cfg,
            clients,
            queue: BinaryHeap::new(),
            next_ev_seq: 0,
            chan_last: HashMap::new(),
            jitter_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6a69_7474)),
            trace: Vec::new(),
            issued: 0,
            completed: 0,
            flush_seq: 0,
            peak_history: 0,
        };
        for c in 0..sim.clients.len() {
            sim.push(0, Body::Issue { client: c as u32 });
        }
        sim
    }

    /// Drive a fixed injection schedule instead of closed-loop clients.
    pub fn scripted(
        proto: P,
        net: &'n NetModel,
        cfg: SimConfig,
        injections: &[Injection],
    ) -> Self {
        let mut sim = Sim::new(proto, net, cfg, Vec::new());
        for inj in injections {
            sim.push(
                inj.at_ns,
                Body::Inject {
                    m: Multicast {
                        rec: MessageRecord::new(inj.id, inj.dst),
                        payload_bytes: 0,
                    },
                    home: inj.home,
                },
            );
        }
        sim
    }

    fn push(&mut self, at: u64, body: Body<P::Wire>) {
        let seq = self.next_ev_seq;
        self.next_ev_seq += 1;
        self.queue.push(Ev { at, seq, body });
    }

    fn channel_latency(&mut self, base: u64) -> u64 {
        match self.cfg.jitter {
            None => base,
            Some(j) => {
                use rand::Rng;
                let f = 1.0 + j * (self.jitter_rng.random::<f64>() * 2.0 - 1.0);
                (base as f64 * f).round() as u64
            }
        }
    }

    /// FIFO clamp: arrivals on one channel are strictly increasing.
    fn schedule_on(&mut self, chan: (u64, u8), arrival: u64) -> u64 {
        let t = match self.chan_last.get(&chan) {
            Some(&last) if arrival <= last => last + 1,
            _ => arrival,
        };
        self.chan_last.insert(chan, t);
        t
    }

    fn log(&mut self, e: TraceEvent) {
        self.trace.push(e);
    }

    pub fn run(mut self) -> Result<SimOutput, ProtocolError> {
        while let Some(ev) = self.queue.pop() {
            self.handle(ev)?;
        }
        Ok(SimOutput {
            trace: self.trace,
            peak_history: self.peak_history,
            issued: self.issued,
            completed: self.completed,
        })
    }

    fn handle(&mut self, ev: Ev<P::Wire>) -> Result<(), ProtocolError> {
        let at = ev.at;
        match ev.body {
            Body::Issue { client } => self.issue(at, client),
            Body::Inject { m, home } => {
                self.launch(at, Entity::Client(m.rec.id.client), home, m);
                Ok(())
            }
            Body::Arrive { client, m } => {
                let entry = self.proto.entry_group(self.arrive_home(client, &m), m.rec.dst, self.net);
                self.log(TraceEvent {
                    at_ns: at,
                    kind: EventKind::Receive,
                    entity: Entity::Group(entry),
                    peer: Some(Entity::Client(client)),
                    msg: m.rec.id,
                    proto: Some(P::INGRESS),
                    dst: m.rec.dst,
                    bytes: 24 + m.payload_bytes,
                });
                let tr = self.proto.on_client(entry, m)?;
                self.apply(at, entry, tr)
            }
            Body::Wire { from, to, w } => {
                let meta = P::wire_meta(&w);
                self.log(TraceEvent {
                    at_ns: at,
                    kind: EventKind::Receive,
                    entity: Entity::Group(to),
                    peer: Some(Entity::Group(from)),
                    msg: meta.msg,
                    proto: Some(meta.kind),
                    dst: meta.dst,
                    bytes: meta.bytes,
                });
                let tr = self.proto.on_wire(to, from, w)?;
                self.apply(at, to, tr)
            }
        }
    }

    // Home group used for ingress latency of an Arrive event. Real
    // clients keep theirs; flush and scripted arrivals already paid
    // their ingress when scheduled, so this is only read for the entry
    // computation (which ignores it for rank- and tree-routed entry).
    fn arrive_home(&self, client: u32, m: &Multicast) -> GroupId {
        if (client as usize) < self.clients.len() {
            self.clients[client as usize].home
        } else {
            m.rec.lca()
        }
    }

    fn stopped(&self, at: u64) -> bool {
        if let Some(h) = self.cfg.horizon_ns {
            if at >= h {
                return true;
            }
        }
        if let Some(m) = self.cfg.max_msgs {
            if self.issued >= m {
                return true;
            }
        }
        false
    }

    fn issue(&mut self, at: u64, client: u32) -> Result<(), ProtocolError> {
        if self.stopped(at) {
            return Ok(());
        }
        let c = &mut self.clients[client as usize];
        let dst = c.gen.next_dst(&mut c.rng);
        let id = MessageId::new(client, c.next_seq);
        c.next_seq += 1;
        let home = c.home;
        let m = Multicast {
            rec: MessageRecord::new(id, dst),
            payload_bytes: 0,
        };
        c.outstanding = Some(Outstanding { id, awaiting: dst });
        self.issued += 1;
        self.launch(at, Entity::Client(client), home, m);
        if let Some(k) = self.cfg.flush_every {
            if k > 0 && self.issued % k == 0 {
                self.issue_flush(at);
            }
        }
        Ok(())
    }

    fn issue_flush(&mut self, at: u64) {
        let dst = self.net.all_groups();
        let id = MessageId::new(FLUSH_CLIENT, self.flush_seq);
        self.flush_seq += 1;
        let m = Multicast {
            rec: MessageRecord::new(id, dst),
            payload_bytes: 0,
        };
        let entry = self.proto.entry_group(GroupId(0), dst, self.net);
        // The flush issuer is co-located with its entry group.
        self.launch(at, Entity::Client(FLUSH_CLIENT), entry, m);
    }

    /// Log the client_send and schedule the arrival at the entry group.
    fn launch(&mut self, at: u64, from: Entity, home: GroupId, m: Multicast) {
        let entry = self.proto.entry_group(home, m.rec.dst, self.net);
        let client = match from {
            Entity::Client(c) => c,
            Entity::Group(_) => unreachable!("multicasts originate at clients"),
        };
        self.log(TraceEvent {
            at_ns: at,
            kind: EventKind::ClientSend,
            entity: from,
            peer: Some(Entity::Group(entry)),
            msg: m.rec.id,
            proto: None,
            dst: m.rec.dst,
            bytes: m.payload_bytes,
        });
        let base = self.net.ingress(home, entry);
        let lat = self.channel_latency(base);
        // Clients share the key space with groups, offset past any rank.
        let arrival = self.schedule_on((64 + client as u64, entry.0), at + lat);
        self.push(arrival, Body::Arrive { client, m });
    }

    fn apply(&mut self, at: u64, g: GroupId, tr: Transition<P::Wire>) -> Result<(), ProtocolError> {
        for d in tr.delivered {
            self.log(TraceEvent {
                at_ns: at,
                kind: EventKind::Deliver,
                entity: Entity::Group(g),
                peer: None,
                msg: d.rec.id,
                proto: None,
                dst: d.rec.dst,
                bytes: d.payload_bytes,
            });
            self.reply(at, g, d.rec.id);
        }
        for (to, w) in tr.sends {
            let meta = P::wire_meta(&w);
            self.log(TraceEvent {
                at_ns: at,
                kind: EventKind::Send,
                entity: Entity::Group(g),
                peer: Some(Entity::Group(to)),
                msg: meta.msg,
                proto: Some(meta.kind),
                dst: meta.dst,
                bytes: meta.bytes,
            });
            let lat = self.channel_latency(self.net.lat(g, to));
            let arrival = self.schedule_on((g.0 as u64, to.0), at + lat);
            self.push(arrival, Body::Wire { from: g, to, w });
        }
        let fp = self.proto.history_footprint();
        if fp > self.peak_history {
            self.peak_history = fp;
        }
        Ok(())
    }

    /// Deliveries reply to the issuing client at delivery time; the
    /// client issues its next multicast once every destination replied.
    fn reply(&mut self, at: u64, g: GroupId, id: MessageId) {
        let cid = id.client;
        if cid as usize >= self.clients.len() {
            return; // flush or scripted injection: nobody is waiting
        }
        let client = &mut self.clients[cid as usize];
        let done = match &mut client.outstanding {
            Some(o) if o.id == id && o.awaiting.contains(g) => {
                o.awaiting.remove(g);
                o.awaiting.is_empty()
            }
            _ => return,
        };
        self.log(TraceEvent {
            at_ns: at,
            kind: EventKind::ClientReply,
            entity: Entity::Client(cid),
            peer: Some(Entity::Group(g)),
            msg: id,
            proto: None,
            dst: GroupSet::EMPTY,
            bytes: 0,
        });
        if done {
            self.clients[cid as usize].outstanding = None;
            self.completed += 1;
            let next = at + self.cfg.think_ns;
            self.push(next, Body::Issue { client: cid });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::EventKind;

    // Minimal protocol for engine tests: the entry group delivers and
    // forwards a copy to every other destination, which delivers on
    // receipt.
    #[derive(Clone)]
    struct Blast {
        n: u8,
    }

    impl Protocol for Blast {
        type Wire = Multicast;
        const INGRESS: ProtoKind = ProtoKind::Forward;

        fn group_count(&self) -> u8 {
            self.n
        }

        fn entry_group(&self, _home: GroupId, dst: GroupSet, _net: &NetModel) -> GroupId {
            dst.min().unwrap()
        }

        fn on_client(&mut self, g: GroupId, m: Multicast) -> Result<Transition<Multicast>, ProtocolError> {
            let mut tr = Transition::default();
            tr.delivered.push(Delivery {
                rec: m.rec,
                payload_bytes: m.payload_bytes,
            });
            for d in m.rec.dst.iter().filter(|&d| d != g) {
                tr.sends.push((d, m));
            }
            Ok(tr)
        }

        fn on_wire(&mut self, _g: GroupId, _from: GroupId, w: Multicast) -> Result<Transition<Multicast>, ProtocolError> {
            Ok(Transition {
                sends: Vec::new(),
                delivered: vec![Delivery {
                    rec: w.rec,
                    payload_bytes: w.payload_bytes,
                }],
            })
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

    fn inj(at_ms: u64, id: (u32, u32), ranks: &[u8]) -> Injection {
        Injection {
            at_ns: at_ms * 1_000_000,
            home: GroupId(ranks[0]),
            id: MessageId::new(id.0, id.1),
            dst: GroupSet::from_ranks(ranks),
        }
    }

    #[test]
    fn scripted_latencies_add_up() {
        // Two groups 100ms apart, 1ms client link.
        let net = NetModel::uniform(2, 100.0, 1.0);
        let sim = Sim::scripted(
            Blast { n: 2 },
            &net,
            SimConfig::default(),
            &[inj(0, (0, 0), &[0, 1])],
        );
        let out = sim.run().unwrap();
        let delivers: Vec<(u64, GroupId)> = out
            .trace
            .iter()
            .filter(|e| e.kind == EventKind::Deliver)
            .map(|e| {
                (
                    e.at_ns,
                    match e.entity {
                        Entity::Group(g) => g,
                        _ => unreachable!(),
                    },
                )
            })
            .collect();
        assert_eq!(delivers, vec![(1_000_000, GroupId(0)), (101_000_000, GroupId(1))]);
    }

    #[test]
    fn fifo_holds_under_jitter() {
        let net = NetModel::uniform(2, 50.0, 0.0);
        for seed in 0..20 {
            let cfg = SimConfig {
                seed,
                jitter: Some(0.5),
                ..SimConfig::default()
            };
            // Many back-to-back sends on the same channel.
            let injections: Vec<Injection> =
                (0..30).map(|i| inj(i / 3, (0, i as u32), &[0, 1])).collect();
            let out = Sim::scripted(Blast { n: 2 }, &net, cfg, &injections).run().unwrap();
            let arrivals: Vec<(u64, MessageId)> = out
                .trace
                .iter()
                .filter(|e| {
                    e.kind == EventKind::Receive && e.entity == Entity::Group(GroupId(1))
                })
                .map(|e| (e.at_ns, e.msg))
                .collect();
            let sends: Vec<MessageId> = out
                .trace
                .iter()
                .filter(|e| {
                    e.kind == EventKind::Send && e.peer == Some(Entity::Group(GroupId(1)))
                })
                .map(|e| e.msg)
                .collect();
            let arrived: Vec<MessageId> = arrivals.iter().map(|&(_, m)| m).collect();
            assert_eq!(arrived, sends, "seed {}: fifo order violated", seed);
            for w in arrivals.windows(2) {
                assert!(w[0].0 < w[1].0, "seed {}: arrivals not strictly increasing", seed);
            }
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let net = NetModel::uniform(3, 20.0, 1.0);
        let mk = || {
            let cfg = SimConfig {
                seed: 42,
                jitter: Some(0.1),
                max_msgs: Some(50),
                ..SimConfig::default()
            };
            let clients = (0..3)
                .map(|i| ClientSpec {
                    home: GroupId(i),
                    gen: Generator::uniform(3, 3),
                })
                .collect();
            Sim::new(Blast { n: 3 }, &net, cfg, clients).run().unwrap()
        };
        let a = mk();
        let b = mk();
        let la: Vec<String> = a.trace.iter().map(|e| e.to_line()).collect();
        let lb: Vec<String> = b.trace.iter().map(|e| e.to_line()).collect();
        assert_eq!(la, lb);
        assert_eq!(a.issued, 50);
        assert_eq!(a.completed, 50);
    }

    #[test]
    fn matrix_parse_round_trip() {
        let text = "a,b\n0,10.5\n10.5,0\n";
        let m = LatencyMatrix::parse(text).unwrap();
        assert_eq!(m.regions(), &["a".to_string(), "b".to_string()]);
        assert_eq!(m.ns(0, 1), 10_500_000);
        let again = LatencyMatrix::parse(&m.to_file_string()).unwrap();
        assert_eq!(again.ns(0, 1), m.ns(0, 1));
    }

    #[test]
    fn matrix_rejects_ragged_and_negative() {
        assert!(LatencyMatrix::parse("a,b\n0,1\n").is_err());
        assert!(LatencyMatrix::parse("a,b\n0,1,2\n1,0\n").is_err());
        assert!(LatencyMatrix::parse("a,b\n0,-1\n1,0\n").is_err());
    }

    #[test]
    fn nearest_order_sorts_by_latency() {
        let net = NetModel::from_ms(
            &[
                vec![0.0, 30.0, 10.0],
                vec![30.0, 0.0, 5.0],
                vec![10.0, 5.0, 0.0],
            ],
            1.0,
        );
        assert_eq!(net.nearest_order(GroupId(0)), vec![GroupId(2), GroupId(1)]);
        assert_eq!(net.nearest_order(GroupId(1)), vec![GroupId(2), GroupId(0)]);
    }
}
