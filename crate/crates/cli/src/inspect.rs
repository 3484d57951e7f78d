//! Human-readable renderings of artifact dumps.

use std::path::Path;

use bpds_core::ledger::{Block, DumpRecord};

use crate::artifacts::{read, ACCESS_LOG, ACTORS, CHAIN, CREDITS, EXECUTION_LOG};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InspectWhat {
    Chain,
    Credits,
    Logs,
}

/// Resolves an actor label from `actors.txt`; account ids pass through.
fn resolve_actor(dir: &Path, actor: &str) -> Result<String, CliError> {
    let actors = read(dir, ACTORS).unwrap_or_default();
    for line in actors.lines() {
        let f: Vec<&str> = line.split(' ').collect();
        if let [_, label, id] = f[..] {
            if label == actor || id == actor {
                return Ok(id.to_owned());
            }
        }
    }
    Ok(actor.to_owned())
}

pub fn inspect(dir: &Path, what: InspectWhat, actor: Option<&str>) -> Result<String, CliError> {
    let mut out = String::new();
    match what {
        InspectWhat::Chain => {
            for (k, line) in read(dir, CHAIN)?.lines().enumerate() {
                let rendered = DumpRecord::parse(line)
                    .ok()
                    .and_then(|r| Block::from_bytes(&r.block).ok())
                    .map(|b| {
                        format!(
                            "height={} t={} producer={} txs={} approvals={}/{} hash={}",
                            b.height,
                            b.t,
                            b.producer,
                            b.d_set.len(),
                            b.approvals(),
                            b.endorsements.len(),
                            &b.hash().to_hex()[..16]
                        )
                    })
                    .unwrap_or_else(|| format!("line={} undecodable", k + 1));
                out.push_str(&rendered);
                out.push('\n');
            }
        }
        InspectWhat::Credits => {
            let mut rows: Vec<(u32, u64)> = Vec::new();
            for (k, line) in read(dir, CREDITS)?.lines().enumerate() {
                let row = line
                    .split_once(' ')
                    .and_then(|(n, s)| Some((n.parse().ok()?, s.parse().ok()?)))
                    .ok_or_else(|| CliError::Invariant(format!("{CREDITS} line {}", k + 1)))?;
                rows.push(row);
            }
            rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            for (rank, (n, s)) in rows.iter().enumerate() {
                out.push_str(&format!("{:>3} node={n} score={s}\n", rank + 1));
            }
        }
        InspectWhat::Logs => {
            let who = actor.map(|a| resolve_actor(dir, a)).transpose()?;
            let keep = |field: Option<&str>| who.as_deref().is_none_or(|w| field == Some(w));
            for line in read(dir, ACCESS_LOG)?.lines() {
                if keep(line.split(' ').nth(2)) {
                    out.push_str("access ");
                    out.push_str(line);
                    out.push('\n');
                }
            }
            for line in read(dir, EXECUTION_LOG)?.lines() {
                if keep(line.split(' ').nth(3)) {
                    out.push_str("contract ");
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
    }
    Ok(out)
}
