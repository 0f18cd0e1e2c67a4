//! Run traces: flat event logs every simulation produces.
//!
//! Checkers and metrics work from traces alone, so anything they need
//! (who sent what to whom, message kinds, modeled byte sizes, delivery
//! orders, client activity) is a field here. The file format is one
//! event per line with a fixed column order; parsing a written trace
//! yields the identical event sequence.

use std::fmt;

use crate::history::MessageId;
use crate::overlay::{GroupId, GroupSet};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EventKind {
    Send,
    Receive,
    Deliver,
    ClientSend,
    ClientReply,
}

impl EventKind {
    fn word(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Receive => "receive",
            EventKind::Deliver => "deliver",
            EventKind::ClientSend => "client_send",
            EventKind::ClientReply => "client_reply",
        }
    }
}

/// Wire-level kind of a protocol message.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProtoKind {
    /// Payload-bearing dissemination from a message's entry group.
    Msg,
    /// Delivery acknowledgment carrying history.
    Ack,
    /// History solicitation to a non-destination group.
    Notif,
    /// Timestamp vote.
    Stamp,
    /// Tree-routed payload forward.
    Forward,
}

impl ProtoKind {
    pub fn word(self) -> &'static str {
        match self {
            ProtoKind::Msg => "msg",
            ProtoKind::Ack => "ack",
            ProtoKind::Notif => "notif",
            ProtoKind::Stamp => "stamp",
            ProtoKind::Forward => "fwd",
        }
    }

    /// Kinds that carry the actual payload toward a delivery.
    pub fn bears_payload(self) -> bool {
        matches!(self, ProtoKind::Msg | ProtoKind::Forward)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Entity {
    Group(GroupId),
    Client(u32),
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Group(g) => write!(f, "g{}", g),
            Entity::Client(c) => write!(f, "c{}", c),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TraceEvent {
    /// Virtual time in nanoseconds.
    pub at_ns: u64,
    pub kind: EventKind,
    /// Where the event happened: sender for sends, receiver for
    /// receives, delivering group for delivers, the client for client
    /// events.
    pub entity: Entity,
    /// The other end: receiver for sends, sender for receives, entry
    /// group for client_send, replying group for client_reply.
    pub peer: Option<Entity>,
    pub msg: MessageId,
    /// Wire kind for send/receive events.
    pub proto: Option<ProtoKind>,
    /// Destination set of the subject message.
    pub dst: GroupSet,
    /// Modeled wire bytes (payload bytes for deliver events).
    pub bytes: u64,
}

impl TraceEvent {
    pub fn at_ms(&self) -> f64 {
        self.at_ns as f64 / 1e6
    }

    /// One line, stable column order:
    /// `ms kind entity peer msg proto dst bytes`.
    pub fn to_line(&self) -> String {
        let peer = match self.peer {
            Some(p) => p.to_string(),
            None => "-".to_string(),
        };
        let proto = match self.proto {
            Some(p) => p.word().to_string(),
            None => "-".to_string(),
        };
        let dst = if self.dst.is_empty() {
            "-".to_string()
        } else {
            self.dst.to_string()
        };
        format!(
            "{}.{:06} {} {} {} {} {} {} {}",
            self.at_ns / 1_000_000,
            self.at_ns % 1_000_000,
            self.kind.word(),
            self.entity,
            peer,
            self.msg,
            proto,
            dst,
            self.bytes
        )
    }

    pub fn parse_line(line: &str) -> Result<TraceEvent, TraceParseError> {
        let bad = |what: &str| TraceParseError(format!("{}: {:?}", what, line));
        let mut cols = line.split_whitespace();
        let at = cols.next().ok_or_else(|| bad("missing time"))?;
        let at_ns = parse_ms_ns(at).ok_or_else(|| bad("bad time"))?;
        let kind = match cols.next().ok_or_else(|| bad("missing kind"))? {
            "send" => EventKind::Send,
            "receive" => EventKind::Receive,
            "deliver" => EventKind::Deliver,
            "client_send" => EventKind::ClientSend,
            "client_reply" => EventKind::ClientReply,
            _ => return Err(bad("bad kind")),
        };
        let entity =
            parse_entity(cols.next().ok_or_else(|| bad("missing entity"))?).ok_or_else(|| bad("bad entity"))?;
        let peer = match cols.next().ok_or_else(|| bad("missing peer"))? {
            "-" => None,
            p => Some(parse_entity(p).ok_or_else(|| bad("bad peer"))?),
        };
        let msg = cols.next().ok_or_else(|| bad("missing msg"))?;
        let (c, s) = msg.split_once(':').ok_or_else(|| bad("bad msg id"))?;
        let msg = MessageId::new(
            c.parse().map_err(|_| bad("bad msg client"))?,
            s.parse().map_err(|_| bad("bad msg seq"))?,
        );
        let proto = match cols.next().ok_or_else(|| bad("missing proto"))? {
            "-" => None,
            "msg" => Some(ProtoKind::Msg),
            "ack" => Some(ProtoKind::Ack),
            "notif" => Some(ProtoKind::Notif),
            "stamp" => Some(ProtoKind::Stamp),
            "fwd" => Some(ProtoKind::Forward),
            _ => return Err(bad("bad proto")),
        };
        let dst = match cols.next().ok_or_else(|| bad("missing dst"))? {
            "-" => GroupSet::EMPTY,
            d => {
                let mut s = GroupSet::EMPTY;
                for part in d.split(',') {
                    let r: u8 = part.parse().map_err(|_| bad("bad dst rank"))?;
                    if r >= 64 {
                        return Err(bad("dst rank out of range"));
                    }
                    s.insert(GroupId(r));
                }
                s
            }
        };
        let bytes = cols
            .next()
            .ok_or_else(|| bad("missing bytes"))?
            .parse()
            .map_err(|_| bad("bad bytes"))?;
        if cols.next().is_some() {
            return Err(bad("trailing columns"));
        }
        Ok(TraceEvent {
            at_ns,
            kind,
            entity,
            peer,
            msg,
            proto,
            dst,
            bytes,
        })
    }
}

fn parse_ms_ns(s: &str) -> Option<u64> {
    let (ms, frac) = s.split_once('.')?;
    if frac.len() != 6 {
        return None;
    }
    let ms: u64 = ms.parse().ok()?;
    let frac: u64 = frac.parse().ok()?;
    Some(ms * 1_000_000 + frac)
}

fn parse_entity(s: &str) -> Option<Entity> {
    let (tag, num) = s.split_at(1);
    match tag {
        "g" => Some(Entity::Group(GroupId(num.parse().ok()?))),
        "c" => Some(Entity::Client(num.parse().ok()?)),
        _ => None,
    }
}

#[derive(Debug)]
pub struct TraceParseError(pub String);

impl fmt::Display for TraceParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trace parse error: {}", self.0)
    }
}

impl std::error::Error for TraceParseError {}

pub fn write_trace(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceParseError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(TraceEvent::parse_line)
        .collect()
}
