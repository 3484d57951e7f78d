use std::collections::{BTreeMap, HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::account::{AccountKeyPair, AccountPublicKey};
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Hash32;
use crate::ledger::{
    build_block, Block, Chain, Membership, Mempool, Res, Schedule, Tx, DEFAULT_MAX_TX_AGE,
};
use crate::sim::{Event, EventKind, NetConfig, Network, NodeId, SimTime, TraceEntry};

use super::audit::{audit, judge, tally, AuditReply};
use super::credit::{
    cycle_readjust, update_credits, ConsensusError, CreditConfig, CreditEvent, CreditTable,
    ElectionConfig,
};
use super::faults::{Fault, FaultScript};

/// Source of client transactions.
pub const GATEWAY: NodeId = NodeId(u32::MAX - 1);
const CONTROL: NodeId = NodeId(u32::MAX);

#[derive(Debug, Clone)]
pub struct ConsortiumConfig {
    pub net: NetConfig,
    pub credit: CreditConfig,
    pub election: ElectionConfig,
    /// Producer stops waiting for audit replies this long after slot start.
    pub audit_timeout: SimTime,
    /// Credit accounting for a slot runs this long after its start.
    pub slot_close: SimTime,
    pub max_tx_age: SimTime,
}

impl Default for ConsortiumConfig {
    fn default() -> Self {
        ConsortiumConfig {
            net: NetConfig::default(),
            credit: CreditConfig::default(),
            election: ElectionConfig::default(),
            audit_timeout: 5_000,
            slot_close: 9_000,
            max_tx_age: DEFAULT_MAX_TX_AGE,
        }
    }
}

/// A registered institution: id, keys and starting credit.
#[derive(Debug, Clone)]
pub struct NodeSetup {
    pub id: NodeId,
    pub keys: AccountKeyPair,
    pub credit: u64,
}

enum Msg {
    Tx(Tx),
    Rec(Block),
    Reply(AuditReply),
    Commit(Block),
    Abort(Block),
    SyncRequest(u64),
    SyncResponse(Snapshot),
}

enum Timer {
    SlotStart(SimTime),
    AuditTimeout(SimTime),
    SlotClose(SimTime),
    Fault(usize),
}

fn encode_schedule(s: &Schedule, w: &mut Writer) {
    w.u64(s.cycle_start).u64(s.slot_ms).u32(s.rpns.len() as u32);
    for n in &s.rpns {
        w.u32(n.0);
    }
    w.u32(s.atns.len() as u32);
    for n in &s.atns {
        w.u32(n.0);
    }
}

fn decode_schedule(r: &mut Reader<'_>) -> Result<Schedule, DecodeError> {
    let cycle_start = r.u64("cycle start")?;
    let slot_ms = r.u64("slot duration")?;
    let ids = |r: &mut Reader<'_>| -> Result<Vec<NodeId>, DecodeError> {
        let n = r.u32("node count")? as usize;
        (0..n).map(|_| r.u32("node").map(NodeId)).collect()
    };
    let rpns = ids(r)?;
    let atns = ids(r)?;
    Schedule::new(cycle_start, slot_ms, rpns, atns)
        .map_err(|e| DecodeError::invalid("schedule", e.to_string()))
}

fn decode_block(r: &mut Reader<'_>) -> Result<Block, DecodeError> {
    Block::from_bytes(r.bytes("block")?)
}

/// State handed to a recovering replica.
struct Snapshot {
    blocks: Vec<Block>,
    schedules: Vec<Schedule>,
    credits: Vec<(NodeId, u64)>,
    accounted: Option<SimTime>,
    aborts: Vec<Block>,
}

impl Msg {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Msg::Tx(tx) => {
                w.u8(0).bytes(&tx.to_bytes());
            }
            Msg::Rec(b) => {
                w.u8(1).bytes(&b.to_bytes());
            }
            Msg::Reply(r) => {
                w.u8(2).bytes(&r.to_bytes());
            }
            Msg::Commit(b) => {
                w.u8(3).bytes(&b.to_bytes());
            }
            Msg::Abort(b) => {
                w.u8(4).bytes(&b.to_bytes());
            }
            Msg::SyncRequest(h) => {
                w.u8(5).u64(*h);
            }
            Msg::SyncResponse(s) => {
                w.u8(6).u32(s.blocks.len() as u32);
                for b in &s.blocks {
                    w.bytes(&b.to_bytes());
                }
                w.u32(s.schedules.len() as u32);
                for sc in &s.schedules {
                    encode_schedule(sc, &mut w);
                }
                w.u32(s.credits.len() as u32);
                for (n, c) in &s.credits {
                    w.u32(n.0).u64(*c);
                }
                match s.accounted {
                    Some(t) => w.u8(1).u64(t),
                    None => w.u8(0),
                };
                w.u32(s.aborts.len() as u32);
                for b in &s.aborts {
                    w.bytes(&b.to_bytes());
                }
            }
        }
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let msg = match r.u8("message kind")? {
            0 => Msg::Tx(Tx::from_bytes(r.bytes("tx")?)?),
            1 => Msg::Rec(decode_block(&mut r)?),
            2 => Msg::Reply(AuditReply::from_bytes(r.bytes("reply")?)?),
            3 => Msg::Commit(decode_block(&mut r)?),
            4 => Msg::Abort(decode_block(&mut r)?),
            5 => Msg::SyncRequest(r.u64("height")?),
            6 => {
                let n = r.u32("block count")?;
                let blocks = (0..n)
                    .map(|_| decode_block(&mut r))
                    .collect::<Result<_, _>>()?;
                let n = r.u32("schedule count")?;
                let schedules = (0..n)
                    .map(|_| decode_schedule(&mut r))
                    .collect::<Result<_, _>>()?;
                let n = r.u32("credit count")?;
                let credits = (0..n)
                    .map(|_| Ok((NodeId(r.u32("node")?), r.u64("credit")?)))
                    .collect::<Result<_, DecodeError>>()?;
                let accounted = match r.u8("accounted flag")? {
                    0 => None,
                    _ => Some(r.u64("accounted")?),
                };
                let n = r.u32("abort count")?;
                let aborts = (0..n)
                    .map(|_| decode_block(&mut r))
                    .collect::<Result<_, _>>()?;
                Msg::SyncResponse(Snapshot {
                    blocks,
                    schedules,
                    credits,
                    accounted,
                    aborts,
                })
            }
            k => return Err(DecodeError::invalid("message kind", format!("unknown {k}"))),
        };
        r.finish()?;
        Ok(msg)
    }
}

impl Timer {
    fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match *self {
            Timer::SlotStart(t) => w.u8(0).u64(t),
            Timer::AuditTimeout(t) => w.u8(1).u64(t),
            Timer::SlotClose(t) => w.u8(2).u64(t),
            Timer::Fault(i) => w.u8(3).u64(i as u64),
        };
        w.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let kind = r.u8("timer kind")?;
        let v = r.u64("timer value")?;
        r.finish()?;
        match kind {
            0 => Ok(Timer::SlotStart(v)),
            1 => Ok(Timer::AuditTimeout(v)),
            2 => Ok(Timer::SlotClose(v)),
            3 => Ok(Timer::Fault(v as usize)),
            k => Err(DecodeError::invalid("timer kind", format!("unknown {k}"))),
        }
    }
}

struct Round {
    slot: SimTime,
    candidate: Block,
    replies: Vec<AuditReply>,
    done: bool,
}

struct Replica {
    id: NodeId,
    keys: AccountKeyPair,
    up: bool,
    syncing: bool,
    chain: Chain,
    membership: Membership,
    credits: CreditTable,
    mempool: Mempool,
    round: Option<Round>,
    aborts: BTreeMap<SimTime, Block>,
    accounted: Option<SimTime>,
    rng: ChaCha20Rng,
}

/// Read-only view of one replica.
pub struct ReplicaView<'a> {
    pub id: NodeId,
    pub up: bool,
    pub chain: &'a Chain,
    pub credits: &'a CreditTable,
    pub membership: &'a Membership,
}

/// The simulated consortium: every node runs the same state machine and
/// talks only through the [`Network`].
pub struct Consortium {
    config: ConsortiumConfig,
    net: Network,
    replicas: Vec<Replica>,
    index: HashMap<NodeId, usize>,
    faults: FaultScript,
    trace: Vec<String>,
    committed: BTreeMap<u64, Hash32>,
    violations: Vec<String>,
    traced_readjust: HashSet<SimTime>,
    traced_accounting: HashSet<SimTime>,
}

impl Consortium {
    /// Registers `nodes`, elects the first schedule at t=0 and arms the
    /// fault script.
    pub fn new(
        config: ConsortiumConfig,
        nodes: Vec<NodeSetup>,
        faults: FaultScript,
    ) -> Result<Self, ConsensusError> {
        let mut net = Network::new(config.net.clone())?;
        let keys: BTreeMap<NodeId, AccountPublicKey> = nodes
            .iter()
            .map(|n| (n.id, n.keys.public().clone()))
            .collect();
        let credits = CreditTable::new(
            nodes.iter().map(|n| (n.id, n.credit)).collect(),
            config.credit.threshold,
        );
        let first = cycle_readjust(&credits, 0, &config.election)?;
        let mut membership = Membership::new(keys);
        membership.push_schedule(first.clone())?;

        for (i, f) in faults.faults.iter().enumerate() {
            net.set_timer(CONTROL, f.at(), Timer::Fault(i).encode())
                .expect("fault times are not in the past at t=0");
        }
        net.register(GATEWAY);
        let mut replicas = Vec::new();
        let mut index = HashMap::new();
        for n in nodes {
            net.register(n.id);
            net.set_timer(n.id, 0, Timer::SlotStart(0).encode())
                .expect("t=0 is not in the past");
            let mut rng = ChaCha20Rng::seed_from_u64(config.net.seed);
            rng.set_stream(u64::from(n.id.0) + 1);
            index.insert(n.id, replicas.len());
            replicas.push(Replica {
                id: n.id,
                keys: n.keys,
                up: true,
                syncing: false,
                chain: Chain::new(),
                membership: membership.clone(),
                credits: credits.clone(),
                mempool: Mempool::new(config.max_tx_age),
                round: None,
                aborts: BTreeMap::new(),
                accounted: None,
                rng,
            });
        }
        let mut c = Consortium {
            config,
            net,
            replicas,
            index,
            faults,
            trace: Vec::new(),
            committed: BTreeMap::new(),
            violations: Vec::new(),
            traced_readjust: HashSet::new(),
            traced_accounting: HashSet::new(),
        };
        c.traced_readjust.insert(0);
        c.log(0, format!("elect cycle=0 {}", schedule_summary(&first)));
        Ok(c)
    }

    pub fn now(&self) -> SimTime {
        self.net.now()
    }

    fn log(&mut self, t: SimTime, line: String) {
        self.trace.push(format!("{t} {line}"));
    }

    /// Broadcasts a client transaction from the gateway at the current time.
    pub fn submit_tx(&mut self, tx: &Tx) {
        let now = self.now();
        self.log(now, format!("submit {} {}", tx.kind(), tx.id()));
        let payload = Msg::Tx(tx.clone()).encode();
        let targets: Vec<NodeId> = self.replicas.iter().map(|r| r.id).collect();
        self.net
            .multicast(GATEWAY, &targets, &payload)
            .expect("replicas are registered");
    }

    /// Processes every event due at or before `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) {
        while let Some(ev) = self.net.next_event(t_end) {
            self.handle(ev);
        }
        self.net.advance_to(t_end);
    }

    pub fn replica(&self, id: NodeId) -> Option<ReplicaView<'_>> {
        self.index.get(&id).map(|&i| self.view(i))
    }

    fn view(&self, i: usize) -> ReplicaView<'_> {
        let r = &self.replicas[i];
        ReplicaView {
            id: r.id,
            up: r.up,
            chain: &r.chain,
            credits: &r.credits,
            membership: &r.membership,
        }
    }

    pub fn replicas(&self) -> impl Iterator<Item = ReplicaView<'_>> {
        (0..self.replicas.len()).map(|i| self.view(i))
    }

    /// The longest chain held by a live replica, lowest id on ties.
    pub fn reference(&self) -> ReplicaView<'_> {
        let best = (0..self.replicas.len())
            .filter(|&i| self.replicas[i].up)
            .max_by_key(|&i| {
                (
                    self.replicas[i].chain.len(),
                    std::cmp::Reverse(self.replicas[i].id),
                )
            })
            .unwrap_or(0);
        self.view(best)
    }

    /// Consensus event trace, one line per event.
    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn net_trace(&self) -> &[TraceEntry] {
        self.net.trace()
    }

    /// Safety breaches observed so far: two replicas committing different
    /// blocks at one height, or a replica failing an internal step.
    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    /// Checks that live, synced replicas hold identical chains and credit
    /// tables and that every chain is a prefix of the committed history.
    pub fn check_replicas(&self) -> Result<(), String> {
        if let Some(v) = self.violations.first() {
            return Err(v.clone());
        }
        for r in &self.replicas {
            for b in r.chain.blocks() {
                if self.committed.get(&b.height) != Some(&b.hash()) {
                    return Err(format!("node {} diverges at height {}", r.id, b.height));
                }
            }
        }
        let live: Vec<&Replica> = self
            .replicas
            .iter()
            .filter(|r| r.up && !r.syncing)
            .collect();
        if let Some(first) = live.first() {
            for r in &live[1..] {
                if r.chain.head_hash() != first.chain.head_hash() {
                    return Err(format!(
                        "nodes {} and {} have different heads",
                        first.id, r.id
                    ));
                }
                if r.credits != first.credits {
                    return Err(format!(
                        "nodes {} and {} disagree on credits",
                        first.id, r.id
                    ));
                }
            }
        }
        Ok(())
    }

    fn handle(&mut self, ev: Event) {
        if ev.to == CONTROL {
            if let Ok(Timer::Fault(i)) = Timer::decode(&ev.payload) {
                self.apply_fault(i);
            }
            return;
        }
        let Some(&i) = self.index.get(&ev.to) else {
            return;
        };
        if !self.replicas[i].up {
            return;
        }
        match ev.kind {
            EventKind::Timer => match Timer::decode(&ev.payload) {
                Ok(Timer::SlotStart(t)) => self.slot_start(i, t),
                Ok(Timer::AuditTimeout(t)) => self.finalize(i, t),
                Ok(Timer::SlotClose(t)) => self.slot_close(i, t),
                _ => {}
            },
            EventKind::Message => match Msg::decode(&ev.payload) {
                Ok(Msg::Tx(tx)) => {
                    let now = self.now();
                    let _ = self.replicas[i].mempool.submit_tx(tx, now);
                }
                Ok(Msg::Rec(b)) => self.on_rec(i, ev.from, b),
                Ok(Msg::Reply(r)) => self.on_reply(i, r),
                Ok(Msg::Commit(b)) => self.on_commit(i, ev.from, b),
                Ok(Msg::Abort(b)) => self.on_abort(i, b),
                Ok(Msg::SyncRequest(h)) => self.on_sync_request(i, ev.from, h),
                Ok(Msg::SyncResponse(s)) => self.on_sync_response(i, s),
                Err(_) => {}
            },
        }
    }

    fn apply_fault(&mut self, k: usize) {
        let fault = self.faults.faults[k];
        let now = self.now();
        let Some(&i) = self.index.get(&fault.node()) else {
            self.log(now, format!("fault-ignored {fault}"));
            return;
        };
        self.log(now, format!("fault {fault}"));
        match fault {
            Fault::Crash { .. } => {
                let r = &mut self.replicas[i];
                r.up = false;
                r.round = None;
            }
            Fault::Recover { .. } => {
                if self.replicas[i].up {
                    return;
                }
                let slot = self.config.election.slot_ms;
                let current = now / slot * slot;
                let next = now.div_ceil(slot) * slot;
                let id = self.replicas[i].id;
                let r = &mut self.replicas[i];
                r.up = true;
                r.syncing = true;
                self.net
                    .set_timer(id, next, Timer::SlotStart(next).encode())
                    .expect("future timer");
                if current < next && now < current + self.config.slot_close {
                    self.net
                        .set_timer(
                            id,
                            current + self.config.slot_close,
                            Timer::SlotClose(current).encode(),
                        )
                        .expect("future timer");
                }
                let from = self.replicas[i].chain.len() as u64;
                self.broadcast(id, &Msg::SyncRequest(from));
            }
            Fault::ByzantineAudit { .. } => {}
        }
    }

    fn slot_start(&mut self, i: usize, t: SimTime) {
        let id = self.replicas[i].id;
        let slot = self.config.election.slot_ms;
        self.net
            .set_timer(id, t + slot, Timer::SlotStart(t + slot).encode())
            .expect("future timer");
        self.net
            .set_timer(id, t + self.config.slot_close, Timer::SlotClose(t).encode())
            .expect("future timer");
        if self.replicas[i].syncing {
            return;
        }
        if t.is_multiple_of(self.config.election.cycle_ms())
            && self.replicas[i].membership.schedule_at(t).is_none()
        {
            let r = &mut self.replicas[i];
            match cycle_readjust(&r.credits, t, &self.config.election) {
                Ok(s) => {
                    let summary = schedule_summary(&s);
                    if let Err(e) = r.membership.push_schedule(s) {
                        self.violations.push(format!("{t} node {id}: {e}"));
                        return;
                    }
                    if self.traced_readjust.insert(t) {
                        let cycle = t / self.config.election.cycle_ms();
                        self.log(t, format!("readjust cycle={cycle} {summary}"));
                    }
                }
                Err(e) => {
                    self.violations.push(format!("{t} node {id}: {e}"));
                    return;
                }
            }
        }
        let Some(schedule) = self.replicas[i].membership.schedule_at(t).cloned() else {
            return;
        };
        if schedule.producer_at(t) != Some(id) {
            return;
        }
        let r = &mut self.replicas[i];
        let pending = r.mempool.pending().to_vec();
        let candidate = build_block(&r.keys, id, pending, r.chain.tip(), t);
        let msg = Msg::Rec(candidate.clone()).encode();
        self.log(
            t,
            format!(
                "propose node={id} height={} txs={} d_hash={}",
                candidate.height,
                candidate.d_set.len(),
                candidate.d_hash
            ),
        );
        self.replicas[i].round = Some(Round {
            slot: t,
            candidate,
            replies: Vec::new(),
            done: false,
        });
        self.net
            .multicast(id, &schedule.atns, &msg)
            .expect("scheduled nodes are registered");
        self.net
            .set_timer(
                id,
                t + self.config.audit_timeout,
                Timer::AuditTimeout(t).encode(),
            )
            .expect("future timer");
    }

    fn on_rec(&mut self, i: usize, from: NodeId, candidate: Block) {
        let now = self.now();
        let r = &mut self.replicas[i];
        if r.syncing || from != candidate.producer {
            return;
        }
        let Some(schedule) = r.membership.schedule_at(candidate.t) else {
            return;
        };
        if !schedule.is_atn(r.id) {
            return;
        }
        let Some(rpn_pk) = r.membership.key(from).cloned() else {
            return;
        };
        let byzantine = self.faults.is_byzantine(r.id, now);
        let tip = r.chain.tip();
        let (res, reply) = audit(
            &r.keys,
            &rpn_pk,
            &candidate,
            &tip,
            &r.membership,
            now,
            byzantine,
            &mut r.rng,
        );
        let id = r.id;
        let verdict = match res {
            Res::Approve => "approve".to_owned(),
            Res::Reject(code) => format!("reject:{code}"),
        };
        self.log(
            now,
            format!("audit node={id} height={} {verdict}", candidate.height),
        );
        self.net
            .send(id, from, Msg::Reply(reply).encode())
            .expect("producer is registered");
    }

    fn on_reply(&mut self, i: usize, reply: AuditReply) {
        let r = &mut self.replicas[i];
        let Some(round) = r.round.as_mut().filter(|round| !round.done) else {
            return;
        };
        round.replies.push(reply);
        let slot = round.slot;
        let expected = r
            .membership
            .schedule_at(slot)
            .map_or(usize::MAX, |s| s.atns.len());
        if round.replies.len() >= expected {
            self.finalize(i, slot);
        }
    }

    fn finalize(&mut self, i: usize, slot: SimTime) {
        let now = self.now();
        let r = &mut self.replicas[i];
        let Some(round) = r.round.as_mut().filter(|x| x.slot == slot && !x.done) else {
            return;
        };
        round.done = true;
        let Some(schedule) = r.membership.schedule_at(slot) else {
            return;
        };
        let out = tally(
            &round.replies,
            &r.keys,
            &round.candidate,
            schedule,
            &r.membership,
        );
        let mut block = round.candidate.clone();
        block.endorsements = out.endorsements;
        let id = r.id;
        let height = block.height;
        if out.commit {
            match self.append(i, block.clone()) {
                Ok(()) => {
                    self.log(
                        now,
                        format!(
                            "commit node={id} height={height} t={} approvals={}/{} hash={}",
                            block.t,
                            out.approvals,
                            out.quorum,
                            block.hash()
                        ),
                    );
                    self.broadcast(id, &Msg::Commit(block));
                }
                Err(e) => self
                    .violations
                    .push(format!("{now} node {id} own block: {e}")),
            }
        } else {
            self.log(
                now,
                format!(
                    "abort node={id} height={height} approvals={}/{}",
                    out.approvals, out.quorum
                ),
            );
            self.replicas[i].aborts.insert(slot, block.clone());
            self.broadcast(id, &Msg::Abort(block));
        }
    }

    fn peer_ids(&self, id: NodeId) -> Vec<NodeId> {
        self.replicas
            .iter()
            .map(|r| r.id)
            .filter(|&n| n != id)
            .collect()
    }

    fn broadcast(&mut self, from: NodeId, msg: &Msg) {
        let peers = self.peer_ids(from);
        self.net
            .multicast(from, &peers, &msg.encode())
            .expect("replicas are registered");
    }

    /// Appends at replica `i`, feeding the cross-replica safety monitor.
    fn append(&mut self, i: usize, block: Block) -> Result<(), crate::ledger::ValidationError> {
        let r = &mut self.replicas[i];
        let ids: HashSet<Hash32> = block.tx_ids().into_iter().collect();
        let (height, hash) = (block.height, block.hash());
        r.chain.append_block(block, &r.membership)?;
        r.mempool.prune(&ids);
        let seen = *self.committed.entry(height).or_insert(hash);
        if seen != hash {
            let id = self.replicas[i].id;
            self.violations.push(format!(
                "node {id} committed a different block at height {height}"
            ));
        }
        Ok(())
    }

    fn on_commit(&mut self, i: usize, from: NodeId, block: Block) {
        let next = self.replicas[i].chain.len() as u64;
        if block.height == next {
            let _ = self.append(i, block);
        } else if block.height > next && !self.replicas[i].syncing {
            let id = self.replicas[i].id;
            self.net
                .send(id, from, Msg::SyncRequest(next).encode())
                .expect("sender is registered");
        }
    }

    fn on_abort(&mut self, i: usize, block: Block) {
        let r = &mut self.replicas[i];
        let mut candidate = block.clone();
        candidate.endorsements.clear();
        if judge(&candidate, &r.chain.tip(), &r.membership) != Res::Approve {
            return;
        }
        let digest = block.rec_digest();
        let Some(schedule) = r.membership.schedule_at(block.t) else {
            return;
        };
        let mut seen = HashSet::new();
        let sound = block.endorsements.iter().all(|e| {
            r.membership
                .node_of(&e.atn_pk)
                .is_some_and(|n| schedule.is_atn(n) && seen.insert(n))
                && e.verify(&digest)
        });
        if sound && block.approvals() < schedule.quorum() {
            r.aborts.insert(block.t, block);
        }
    }

    fn on_sync_request(&mut self, i: usize, from: NodeId, height: u64) {
        let r = &self.replicas[i];
        if r.syncing {
            return;
        }
        let snapshot = Snapshot {
            blocks: r
                .chain
                .blocks()
                .iter()
                .skip(height as usize)
                .cloned()
                .collect(),
            schedules: r.membership.schedules().to_vec(),
            credits: r.credits.scores().iter().map(|(&n, &c)| (n, c)).collect(),
            accounted: r.accounted,
            aborts: r.aborts.values().cloned().collect(),
        };
        let id = r.id;
        self.net
            .send(id, from, Msg::SyncResponse(snapshot).encode())
            .expect("requester is registered");
    }

    fn on_sync_response(&mut self, i: usize, s: Snapshot) {
        let now = self.now();
        if self.replicas[i].syncing {
            let r = &mut self.replicas[i];
            let mut membership = Membership::new(r.membership.keys().clone());
            for sc in s.schedules {
                if membership.push_schedule(sc).is_err() {
                    return;
                }
            }
            r.membership = membership;
            r.credits = CreditTable::new(s.credits.into_iter().collect(), r.credits.threshold());
            r.accounted = s.accounted;
            r.aborts = s.aborts.into_iter().map(|b| (b.t, b)).collect();
            r.syncing = false;
        }
        for b in s.blocks {
            if b.height == self.replicas[i].chain.len() as u64 && self.append(i, b).is_err() {
                break;
            }
        }
        let r = &self.replicas[i];
        let line = format!("sync node={} height={}", r.id, r.chain.len());
        self.log(now, line);
    }

    fn slot_close(&mut self, i: usize, slot: SimTime) {
        let r = &mut self.replicas[i];
        if r.syncing || r.accounted.is_some_and(|a| a >= slot) {
            return;
        }
        let Some(schedule) = r.membership.schedule_at(slot) else {
            return;
        };
        let Some(producer) = schedule.producer_at(slot) else {
            return;
        };
        let mut events = Vec::new();
        let endorsed = |b: &Block, events: &mut Vec<CreditEvent>| {
            for e in &b.endorsements {
                if let Some(n) = r.membership.node_of(&e.atn_pk) {
                    events.push(if e.res.is_approve() {
                        CreditEvent::CorrectAudit(n)
                    } else {
                        CreditEvent::IncorrectAudit(n)
                    });
                }
            }
        };
        let committed = r
            .chain
            .blocks()
            .iter()
            .rev()
            .take_while(|b| b.t >= slot)
            .find(|b| b.t == slot);
        if let Some(b) = committed {
            events.push(CreditEvent::BlockCommitted(producer));
            endorsed(b, &mut events);
        } else if let Some(b) = r.aborts.get(&slot) {
            endorsed(b, &mut events);
        } else {
            events.push(CreditEvent::MissedSlot(producer));
        }
        r.credits = update_credits(&r.credits, &events, &self.config.credit);
        r.accounted = Some(slot);
        r.aborts = r.aborts.split_off(&(slot + 1));
        if self.traced_accounting.insert(slot) {
            let now = self.now();
            for e in events
                .iter()
                .filter(|e| !matches!(e, CreditEvent::CorrectAudit(_)))
            {
                self.log(now, format!("credit slot={slot} {e}"));
            }
        }
    }
}

fn schedule_summary(s: &Schedule) -> String {
    let ids = |v: &[NodeId]| {
        v.iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    format!("rpns={} atns={}", ids(&s.rpns), ids(&s.atns))
}
