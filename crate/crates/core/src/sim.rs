//! Deterministic discrete-event message delivery.
//!
//! Time is an integer count of simulated milliseconds. Every delivery is a
//! queued [`Event`] ordered by `(deliver_at, seq)`; `seq` is assigned at send
//! time so equal-time events run in send order. All randomness (jitter and
//! drops) comes from one generator seeded by [`NetConfig::seed`], so a
//! configuration plus the sequence of sends fixes the whole trace.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::hash::Hash32;

/// Simulated milliseconds.
pub type SimTime = u64;

pub const SECOND: SimTime = 1_000;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("unknown destination {0}")]
    UnknownDestination(NodeId),
    #[error("drop rate {0} outside [0, 1]")]
    DropRate(f64),
    #[error("timer at {at} is in the past (now {now})")]
    PastTimer { at: SimTime, now: SimTime },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub seed: u64,
    pub base_delay: SimTime,
    pub jitter: SimTime,
    pub drop_rate: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            seed: 0,
            base_delay: 50,
            jitter: 20,
            drop_rate: 0.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if (0.0..=1.0).contains(&self.drop_rate) {
            Ok(())
        } else {
            Err(NetError::DropRate(self.drop_rate))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Message,
    Timer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub deliver_at: SimTime,
    pub seq: u64,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EventKind,
    pub payload: Vec<u8>,
}

#[derive(Debug)]
struct Queued(Event);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}
impl Queued {
    fn key(&self) -> (SimTime, u64) {
        (self.0.deliver_at, self.0.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Deliver,
    Timer,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub t: SimTime,
    pub seq: u64,
    pub kind: TraceKind,
    pub from: NodeId,
    pub to: NodeId,
    pub len: usize,
    pub digest: Hash32,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            TraceKind::Deliver => "deliver",
            TraceKind::Timer => "timer",
            TraceKind::Drop => "drop",
        };
        write!(
            f,
            "{} {} {} {}->{} len={} h={}",
            self.t,
            self.seq,
            kind,
            self.from,
            self.to,
            self.len,
            &self.digest.to_hex()[..16]
        )
    }
}

pub struct Network {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued>>,
    config: NetConfig,
    rng: ChaCha20Rng,
    nodes: BTreeSet<NodeId>,
    trace: Vec<TraceEntry>,
}

impl Network {
    pub fn new(config: NetConfig) -> Result<Self, NetError> {
        config.validate()?;
        Ok(Network {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            config,
            nodes: BTreeSet::new(),
            trace: Vec::new(),
        })
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn register(&mut self, node: NodeId) {
        self.nodes.insert(node);
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    fn seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    fn delay(&mut self) -> SimTime {
        let base = self.config.base_delay as i128;
        let jitter = self.config.jitter as i128;
        let offset = if jitter == 0 {
            0
        } else {
            self.rng.gen_range(-jitter..=jitter)
        };
        (base + offset).max(0) as SimTime
    }

    /// Queues `payload` for `to`, or drops it with probability `drop_rate`.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: Vec<u8>) -> Result<(), NetError> {
        if !self.nodes.contains(&to) {
            return Err(NetError::UnknownDestination(to));
        }
        let seq = self.seq();
        let dropped = self.config.drop_rate > 0.0 && self.rng.gen_bool(self.config.drop_rate);
        if dropped {
            self.trace.push(TraceEntry {
                t: self.now,
                seq,
                kind: TraceKind::Drop,
                from,
                to,
                len: payload.len(),
                digest: Hash32::of(&payload),
            });
            return Ok(());
        }
        let deliver_at = self.now + self.delay();
        self.queue.push(Reverse(Queued(Event {
            deliver_at,
            seq,
            from,
            to,
            kind: EventKind::Message,
            payload,
        })));
        Ok(())
    }

    /// Sends to every other registered node; each copy is delayed or dropped
    /// independently.
    pub fn broadcast(&mut self, from: NodeId, payload: &[u8]) {
        let targets: Vec<_> = self.nodes.iter().copied().filter(|&n| n != from).collect();
        self.multicast(from, &targets, payload)
            .expect("broadcast targets are registered");
    }

    pub fn multicast(
        &mut self,
        from: NodeId,
        to: &[NodeId],
        payload: &[u8],
    ) -> Result<(), NetError> {
        for &t in to {
            self.send(from, t, payload.to_vec())?;
        }
        Ok(())
    }

    /// Local timer: delivered to `node` itself at exactly `at`, never dropped.
    pub fn set_timer(
        &mut self,
        node: NodeId,
        at: SimTime,
        payload: Vec<u8>,
    ) -> Result<(), NetError> {
        if at < self.now {
            return Err(NetError::PastTimer { at, now: self.now });
        }
        let seq = self.seq();
        self.queue.push(Reverse(Queued(Event {
            deliver_at: at,
            seq,
            from: node,
            to: node,
            kind: EventKind::Timer,
            payload,
        })));
        Ok(())
    }

    /// Pops the next event due at or before `t_end`, advancing the clock.
    pub fn next_event(&mut self, t_end: SimTime) -> Option<Event> {
        if self.queue.peek()?.0 .0.deliver_at > t_end {
            return None;
        }
        let Reverse(Queued(ev)) = self.queue.pop()?;
        debug_assert!(ev.deliver_at >= self.now);
        self.now = ev.deliver_at;
        self.trace.push(TraceEntry {
            t: ev.deliver_at,
            seq: ev.seq,
            kind: match ev.kind {
                EventKind::Message => TraceKind::Deliver,
                EventKind::Timer => TraceKind::Timer,
            },
            from: ev.from,
            to: ev.to,
            len: ev.payload.len(),
            digest: Hash32::of(&ev.payload),
        });
        Some(ev)
    }

    /// Processes every event due by `t_end` through `handler` and moves the
    /// clock to `t_end`. Returns the trace entries recorded by this call.
    pub fn run_until(
        &mut self,
        t_end: SimTime,
        mut handler: impl FnMut(&mut Network, Event),
    ) -> Vec<TraceEntry> {
        let start = self.trace.len();
        while let Some(ev) = self.next_event(t_end) {
            handler(self, ev);
        }
        self.now = self.now.max(t_end);
        self.trace[start..].to_vec()
    }

    /// Advances the clock with no events in between; used by drivers that
    /// inject work at a given instant.
    pub fn advance_to(&mut self, t: SimTime) {
        debug_assert!(self.queue.peek().is_none_or(|e| e.0 .0.deliver_at >= t));
        self.now = self.now.max(t);
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }
}
