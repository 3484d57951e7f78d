use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::account::{AccountId, AccountPublicKey};
use crate::sim::{NodeId, SimTime};

pub const SLOT_MS: SimTime = 10_000;
pub const RPN_COUNT: usize = 30;
pub const ATN_COUNT: usize = 20;
pub const CYCLE_MS: SimTime = SLOT_MS * RPN_COUNT as SimTime;

/// Approvals needed from `atns` audit nodes: `⌈0.51·atns⌉`.
pub fn quorum(atns: usize) -> usize {
    (51 * atns).div_ceil(100)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("schedule needs at least one producer and one auditor")]
    Empty,
    #[error("node {0} listed twice")]
    Duplicate(NodeId),
    #[error("node {0} has no registered key")]
    UnknownNode(NodeId),
    #[error("cycle starting at {start} does not follow the cycle at {prev}")]
    OutOfOrder { start: SimTime, prev: SimTime },
    #[error("slot duration must be positive")]
    ZeroSlot,
}

/// Producer rotation and audit set for one cycle. Slot `s` starts at
/// `cycle_start + s·slot_ms` and belongs to `rpns[s]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub cycle_start: SimTime,
    pub slot_ms: SimTime,
    pub rpns: Vec<NodeId>,
    pub atns: Vec<NodeId>,
}

impl Schedule {
    pub fn new(
        cycle_start: SimTime,
        slot_ms: SimTime,
        rpns: Vec<NodeId>,
        atns: Vec<NodeId>,
    ) -> Result<Self, ScheduleError> {
        if rpns.is_empty() || atns.is_empty() {
            return Err(ScheduleError::Empty);
        }
        if slot_ms == 0 {
            return Err(ScheduleError::ZeroSlot);
        }
        let mut seen = BTreeSet::new();
        for &n in rpns.iter().chain(&atns) {
            if !seen.insert(n) {
                return Err(ScheduleError::Duplicate(n));
            }
        }
        Ok(Schedule {
            cycle_start,
            slot_ms,
            rpns,
            atns,
        })
    }

    pub fn cycle_ms(&self) -> SimTime {
        self.slot_ms * self.rpns.len() as SimTime
    }

    pub fn cycle_end(&self) -> SimTime {
        self.cycle_start + self.cycle_ms()
    }

    pub fn slot_start(&self, slot: usize) -> SimTime {
        self.cycle_start + self.slot_ms * slot as SimTime
    }

    /// Slot number beginning exactly at `t`, if any.
    pub fn slot_at(&self, t: SimTime) -> Option<usize> {
        let off = t.checked_sub(self.cycle_start)?;
        let slot = (off / self.slot_ms) as usize;
        (off % self.slot_ms == 0 && slot < self.rpns.len()).then_some(slot)
    }

    /// Producer scheduled for a block stamped `t`.
    pub fn producer_at(&self, t: SimTime) -> Option<NodeId> {
        self.slot_at(t).map(|s| self.rpns[s])
    }

    pub fn is_atn(&self, n: NodeId) -> bool {
        self.atns.contains(&n)
    }

    pub fn is_rpn(&self, n: NodeId) -> bool {
        self.rpns.contains(&n)
    }

    pub fn quorum(&self) -> usize {
        quorum(self.atns.len())
    }
}

/// Registered node keys plus the history of cycle schedules, enough to
/// check who may produce and audit any block.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Membership {
    keys: BTreeMap<NodeId, AccountPublicKey>,
    by_account: HashMap<AccountId, NodeId>,
    schedules: Vec<Schedule>,
}

impl Membership {
    pub fn new(keys: BTreeMap<NodeId, AccountPublicKey>) -> Self {
        let by_account = keys.iter().map(|(&n, pk)| (pk.id(), n)).collect();
        Membership {
            keys,
            by_account,
            schedules: Vec::new(),
        }
    }

    pub fn key(&self, n: NodeId) -> Option<&AccountPublicKey> {
        self.keys.get(&n)
    }

    pub fn keys(&self) -> &BTreeMap<NodeId, AccountPublicKey> {
        &self.keys
    }

    /// Node registered under exactly this key.
    pub fn node_of(&self, pk: &AccountPublicKey) -> Option<NodeId> {
        let n = *self.by_account.get(&pk.id())?;
        (self.keys.get(&n) == Some(pk)).then_some(n)
    }

    /// Appends the schedule for the next cycle.
    pub fn push_schedule(&mut self, s: Schedule) -> Result<(), ScheduleError> {
        if let Some(prev) = self.schedules.last() {
            if s.cycle_start < prev.cycle_end() {
                return Err(ScheduleError::OutOfOrder {
                    start: s.cycle_start,
                    prev: prev.cycle_start,
                });
            }
        }
        if let Some(&n) = s
            .rpns
            .iter()
            .chain(&s.atns)
            .find(|n| !self.keys.contains_key(n))
        {
            return Err(ScheduleError::UnknownNode(n));
        }
        self.schedules.push(s);
        Ok(())
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    /// Schedule whose cycle contains `t`.
    pub fn schedule_at(&self, t: SimTime) -> Option<&Schedule> {
        let idx = self.schedules.partition_point(|s| s.cycle_start <= t);
        let s = self.schedules[..idx].last()?;
        (t < s.cycle_end()).then_some(s)
    }

    pub fn current(&self) -> Option<&Schedule> {
        self.schedules.last()
    }
}
