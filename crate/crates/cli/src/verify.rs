//! Offline re-verification of an artifact directory.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use bpds_core::account::AccountPublicKey;
use bpds_core::hash::Hash32;
use bpds_core::ledger::{verify_dump, Block, DumpRecord, Membership, Schedule};
use bpds_core::sim::NodeId;

use crate::artifacts::{read, ACCESS_LOG, CHAIN, CREDITS, EXECUTION_LOG, ROSTER, SCHEDULES, STORE};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub blocks: usize,
    pub granted: usize,
    pub log_entries: usize,
}

fn bad(what: &str, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Invariant(format!("{what} line {}: {msg}", line + 1))
}

fn parse_node(s: &str) -> Option<NodeId> {
    s.parse().ok().map(NodeId)
}

fn parse_nodes(s: &str) -> Option<Vec<NodeId>> {
    s.split(',').map(parse_node).collect()
}

/// Rebuilds the consortium membership from the roster and schedule dumps.
pub fn load_membership(roster: &str, schedules: &str) -> Result<Membership, CliError> {
    let mut keys = BTreeMap::new();
    for (k, line) in roster.lines().enumerate() {
        let (n, pk) = line
            .split_once(' ')
            .ok_or_else(|| bad(ROSTER, k, "expected `node key`"))?;
        let n = parse_node(n).ok_or_else(|| bad(ROSTER, k, "bad node id"))?;
        let bytes = hex::decode(pk).map_err(|e| bad(ROSTER, k, e))?;
        let pk = AccountPublicKey::from_bytes(&bytes).map_err(|e| bad(ROSTER, k, e))?;
        keys.insert(n, pk);
    }
    let mut membership = Membership::new(keys);
    for (k, line) in schedules.lines().enumerate() {
        let f: Vec<&str> = line.split(' ').collect();
        let [start, slot, rpns, atns] = f[..] else {
            return Err(bad(SCHEDULES, k, "expected 4 fields"));
        };
        let start = start.parse().map_err(|e| bad(SCHEDULES, k, e))?;
        let slot = slot.parse().map_err(|e| bad(SCHEDULES, k, e))?;
        let rpns = parse_nodes(rpns).ok_or_else(|| bad(SCHEDULES, k, "bad producer list"))?;
        let atns = parse_nodes(atns).ok_or_else(|| bad(SCHEDULES, k, "bad auditor list"))?;
        let s = Schedule::new(start, slot, rpns, atns).map_err(|e| bad(SCHEDULES, k, e))?;
        membership
            .push_schedule(s)
            .map_err(|e| bad(SCHEDULES, k, e))?;
    }
    Ok(membership)
}

/// Checks the chain and the cross-module consistency of the logs. Missing
/// files are reported before any content check.
pub fn verify_dir(dir: &Path) -> Result<VerifyReport, CliError> {
    let roster = read(dir, ROSTER)?;
    let schedules = read(dir, SCHEDULES)?;
    let chain = read(dir, CHAIN)?;
    let credits = read(dir, CREDITS)?;
    let access_log = read(dir, ACCESS_LOG)?;
    let store = read(dir, STORE)?;
    let execution_log = read(dir, EXECUTION_LOG)?;

    let membership = load_membership(&roster, &schedules)?;
    let blocks = verify_dump(&chain, &membership).map_err(|f| {
        CliError::Invariant(format!(
            "chain: first invalid block at height {}: {}",
            f.height, f.reason
        ))
    })?;
    let mut tx_ids: HashSet<Hash32> = HashSet::new();
    for line in chain.lines() {
        let rec = DumpRecord::parse(line).expect("verified above");
        let block = Block::from_bytes(&rec.block).expect("verified above");
        tx_ids.extend(block.tx_ids());
    }

    // Granted contract requests must be on chain.
    let mut granted = 0;
    for (k, line) in execution_log.lines().enumerate() {
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() < 5 {
            return Err(bad(EXECUTION_LOG, k, "too few fields"));
        }
        if f[2] != "request" || f[4] != "granted" {
            continue;
        }
        granted += 1;
        let tx = f
            .iter()
            .find_map(|w| w.strip_prefix("tx="))
            .and_then(Hash32::from_hex)
            .ok_or_else(|| bad(EXECUTION_LOG, k, "granted request without a tx id"))?;
        if !tx_ids.contains(&tx) {
            return Err(bad(
                EXECUTION_LOG,
                k,
                format!("granted request {tx} is not on chain"),
            ));
        }
    }

    // Access log: append-only sequence with non-decreasing time.
    let mut last_t = 0u64;
    let mut stores = 0;
    for (k, line) in access_log.lines().enumerate() {
        let f: Vec<&str> = line.split(' ').collect();
        let [t, seq, _actor, action, _url] = f[..] else {
            return Err(bad(ACCESS_LOG, k, "expected 5 fields"));
        };
        let t: u64 = t.parse().map_err(|e| bad(ACCESS_LOG, k, e))?;
        if seq.parse::<usize>().ok() != Some(k) {
            return Err(bad(ACCESS_LOG, k, format!("sequence {seq} out of order")));
        }
        if t < last_t {
            return Err(bad(ACCESS_LOG, k, format!("time {t} precedes {last_t}")));
        }
        last_t = t;
        match action {
            "store" => stores += 1,
            "retrieve-granted" | "retrieve-denied" => {}
            other => return Err(bad(ACCESS_LOG, k, format!("unknown action `{other}`"))),
        }
    }
    let objects = store.lines().count();
    if objects != stores {
        return Err(CliError::Invariant(format!(
            "{STORE} holds {objects} objects but {ACCESS_LOG} records {stores} stores"
        )));
    }

    // Credit table: every node known and ranked by score, then id.
    let mut prev: Option<(u64, u32)> = None;
    for (k, line) in credits.lines().enumerate() {
        let (n, s) = line
            .split_once(' ')
            .ok_or_else(|| bad(CREDITS, k, "expected `node score`"))?;
        let n: u32 = n.parse().map_err(|e| bad(CREDITS, k, e))?;
        let s: u64 = s.parse().map_err(|e| bad(CREDITS, k, e))?;
        if membership.key(NodeId(n)).is_none() {
            return Err(bad(CREDITS, k, format!("node {n} not in roster")));
        }
        if let Some((ps, pn)) = prev {
            if (s, std::cmp::Reverse(n)) > (ps, std::cmp::Reverse(pn)) {
                return Err(bad(CREDITS, k, "not in rank order"));
            }
        }
        prev = Some((s, n));
    }

    Ok(VerifyReport {
        blocks,
        granted,
        log_entries: access_log.lines().count(),
    })
}
