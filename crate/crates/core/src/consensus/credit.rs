use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ledger::{Schedule, ScheduleError, ATN_COUNT, RPN_COUNT, SLOT_MS};
use crate::sim::{NetError, NodeId, SimTime};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsensusError {
    #[error("{eligible} eligible nodes, election needs {needed}")]
    TooFewNodes { eligible: usize, needed: usize },
    #[error("readjust requested at {0}, which is not a cycle boundary")]
    OffBoundary(SimTime),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Reward and penalty magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CreditConfig {
    pub initial: u64,
    pub reward: u64,
    pub miss_penalty: u64,
    pub audit_penalty: u64,
    pub threshold: u64,
}

impl Default for CreditConfig {
    fn default() -> Self {
        CreditConfig {
            initial: 100,
            reward: 1,
            miss_penalty: 5,
            audit_penalty: 10,
            threshold: 50,
        }
    }
}

/// Election shape: producer and auditor counts and timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElectionConfig {
    pub rpns: usize,
    pub atns: usize,
    pub slot_ms: SimTime,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        ElectionConfig {
            rpns: RPN_COUNT,
            atns: ATN_COUNT,
            slot_ms: SLOT_MS,
        }
    }
}

impl ElectionConfig {
    pub fn cycle_ms(&self) -> SimTime {
        self.slot_ms * self.rpns as SimTime
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CreditTable {
    scores: BTreeMap<NodeId, u64>,
    threshold: u64,
}

impl CreditTable {
    pub fn new(scores: BTreeMap<NodeId, u64>, threshold: u64) -> Self {
        CreditTable { scores, threshold }
    }

    pub fn uniform(nodes: impl IntoIterator<Item = NodeId>, config: &CreditConfig) -> Self {
        CreditTable {
            scores: nodes.into_iter().map(|n| (n, config.initial)).collect(),
            threshold: config.threshold,
        }
    }

    pub fn score(&self, n: NodeId) -> Option<u64> {
        self.scores.get(&n).copied()
    }

    pub fn scores(&self) -> &BTreeMap<NodeId, u64> {
        &self.scores
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn below_threshold(&self, n: NodeId) -> bool {
        self.score(n).is_some_and(|s| s < self.threshold)
    }

    /// All nodes ordered by score descending, then id ascending.
    pub fn ranking(&self) -> Vec<(NodeId, u64)> {
        let mut v: Vec<_> = self.scores.iter().map(|(&n, &s)| (n, s)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Nodes at or above the threshold, in rank order.
    pub fn eligible(&self) -> Vec<NodeId> {
        self.ranking()
            .into_iter()
            .filter(|&(_, s)| s >= self.threshold)
            .map(|(n, _)| n)
            .collect()
    }

    /// `node score` lines in rank order.
    pub fn dump_lines(&self) -> Vec<String> {
        self.ranking()
            .into_iter()
            .map(|(n, s)| format!("{n} {s}"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CreditEvent {
    BlockCommitted(NodeId),
    CorrectAudit(NodeId),
    MissedSlot(NodeId),
    IncorrectAudit(NodeId),
}

impl CreditEvent {
    pub fn node(self) -> NodeId {
        match self {
            CreditEvent::BlockCommitted(n)
            | CreditEvent::CorrectAudit(n)
            | CreditEvent::MissedSlot(n)
            | CreditEvent::IncorrectAudit(n) => n,
        }
    }
}

impl fmt::Display for CreditEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self {
            CreditEvent::BlockCommitted(_) => "block-committed",
            CreditEvent::CorrectAudit(_) => "correct-audit",
            CreditEvent::MissedSlot(_) => "missed-slot",
            CreditEvent::IncorrectAudit(_) => "incorrect-audit",
        };
        write!(f, "{kind} {}", self.node())
    }
}

/// Applies rewards and penalties in order; scores floor at zero. Events for
/// unknown nodes are ignored.
pub fn update_credits(
    table: &CreditTable,
    events: &[CreditEvent],
    config: &CreditConfig,
) -> CreditTable {
    let mut next = table.clone();
    for &e in events {
        let Some(score) = next.scores.get_mut(&e.node()) else {
            continue;
        };
        *score = match e {
            CreditEvent::BlockCommitted(_) | CreditEvent::CorrectAudit(_) => {
                score.saturating_add(config.reward)
            }
            CreditEvent::MissedSlot(_) => score.saturating_sub(config.miss_penalty),
            CreditEvent::IncorrectAudit(_) => score.saturating_sub(config.audit_penalty),
        };
    }
    next
}

/// Ranks eligible nodes and assigns the top `rpns` to production and the
/// next `atns` to audit.
pub fn elect(
    table: &CreditTable,
    cycle_start: SimTime,
    config: &ElectionConfig,
) -> Result<Schedule, ConsensusError> {
    let needed = config.rpns + config.atns;
    let eligible = table.eligible();
    if eligible.len() < needed {
        return Err(ConsensusError::TooFewNodes {
            eligible: eligible.len(),
            needed,
        });
    }
    let rpns = eligible[..config.rpns].to_vec();
    let atns = eligible[config.rpns..needed].to_vec();
    Ok(Schedule::new(cycle_start, config.slot_ms, rpns, atns)?)
}

/// Fresh election at a cycle boundary, excluding nodes below threshold.
pub fn cycle_readjust(
    table: &CreditTable,
    clock: SimTime,
    config: &ElectionConfig,
) -> Result<Schedule, ConsensusError> {
    if !clock.is_multiple_of(config.cycle_ms()) {
        return Err(ConsensusError::OffBoundary(clock));
    }
    elect(table, clock, config)
}
