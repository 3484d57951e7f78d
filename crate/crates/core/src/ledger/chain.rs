use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::codec::DecodeError;
use crate::hash::Hash32;
use crate::sim::{NodeId, SimTime};

use super::block::{check_body, check_link, Block, CachedSigCheck, Tip, ValidationError};
use super::membership::Membership;

/// First block that fails verification.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("block {height} invalid: {reason}")]
pub struct ChainFault {
    pub height: u64,
    pub reason: ValidationError,
}

/// Append-only sequence of committed blocks.
#[derive(Debug, Clone, Default)]
pub struct Chain {
    blocks: Vec<Block>,
    tip: Option<Tip>,
    tx_ids: HashSet<Hash32>,
}

impl Chain {
    pub fn new() -> Self {
        Chain::default()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> Option<&Block> {
        self.blocks.last()
    }

    pub fn tip(&self) -> Tip {
        self.tip.unwrap_or(Tip::GENESIS)
    }

    pub fn head_hash(&self) -> Hash32 {
        self.tip().hash
    }

    pub fn contains_tx(&self, id: &Hash32) -> bool {
        self.tx_ids.contains(id)
    }

    /// Validates `block` against the head, requires the approval quorum and
    /// extends the chain.
    pub fn append_block(
        &mut self,
        block: Block,
        membership: &Membership,
    ) -> Result<(), ValidationError> {
        let tip = self.tip();
        check_link(&block, &tip)?;
        check_body(&block, membership, true, &mut super::block::DirectSigCheck)?;
        let ids = block.tx_ids();
        if let Some(pos) = ids.iter().position(|id| self.tx_ids.contains(id)) {
            return Err(ValidationError::DuplicateTx { pos });
        }
        self.tx_ids.extend(ids);
        self.tip = Some(Tip::after(&block));
        self.blocks.push(block);
        Ok(())
    }

    /// Mutable access to committed blocks, for fault injection only. The
    /// chain keeps its cached head, so later appends still link to the
    /// original head while [`chain_verify`] sees the mutation.
    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    pub fn dump_lines(&self) -> Vec<String> {
        self.blocks.iter().map(Block::dump_line).collect()
    }
}

#[derive(Debug, Clone)]
struct VerifiedBlock {
    height: u64,
    prev_hash: Hash32,
    t: SimTime,
    tx_ids: Vec<Hash32>,
}

/// Re-validates chains from genesis, remembering blocks and signatures it
/// has already accepted so repeated checks of similar chains stay cheap.
/// Cached entries are keyed by the full block encoding, so any change to a
/// block forces it to be checked again.
pub struct ChainVerifier<'m> {
    membership: &'m Membership,
    verified: HashMap<Hash32, VerifiedBlock>,
    sigs: CachedSigCheck,
}

impl<'m> ChainVerifier<'m> {
    pub fn new(membership: &'m Membership) -> Self {
        ChainVerifier {
            membership,
            verified: HashMap::new(),
            sigs: CachedSigCheck::default(),
        }
    }

    pub fn verify(&mut self, blocks: &[Block]) -> Result<(), ChainFault> {
        let encoded: Vec<Vec<u8>> = blocks.iter().map(Block::to_bytes).collect();
        self.verify_encoded(&encoded)
    }

    /// Verifies encoded blocks in order; block `k` of the slice is expected
    /// at height `k`.
    pub fn verify_encoded<B: AsRef<[u8]>>(&mut self, blocks: &[B]) -> Result<(), ChainFault> {
        let mut tip = Tip::GENESIS;
        let mut ids = HashSet::new();
        for (k, bytes) in blocks.iter().enumerate() {
            let fault = |reason| ChainFault {
                height: k as u64,
                reason,
            };
            let hash = Hash32::of(bytes.as_ref());
            let entry = match self.verified.get(&hash) {
                Some(v) => v.clone(),
                None => {
                    let block = Block::from_bytes(bytes.as_ref())
                        .map_err(|e| fault(ValidationError::Decode(e)))?;
                    check_link(&block, &tip).map_err(fault)?;
                    check_body(&block, self.membership, true, &mut self.sigs).map_err(fault)?;
                    let v = VerifiedBlock {
                        height: block.height,
                        prev_hash: block.prev_hash,
                        t: block.t,
                        tx_ids: block.tx_ids(),
                    };
                    self.verified.insert(hash, v.clone());
                    v
                }
            };
            // Linkage is rechecked on cache hits; the body checks are not
            // position dependent.
            if entry.height != tip.next_height {
                return Err(fault(ValidationError::Height {
                    expected: tip.next_height,
                    got: entry.height,
                }));
            }
            if entry.prev_hash != tip.hash {
                return Err(fault(ValidationError::PrevHash));
            }
            if let Some(prev) = tip.t.filter(|&p| entry.t <= p) {
                return Err(fault(ValidationError::Timestamp { t: entry.t, prev }));
            }
            if let Some(pos) = entry.tx_ids.iter().position(|id| !ids.insert(*id)) {
                return Err(fault(ValidationError::DuplicateTx { pos }));
            }
            tip = Tip {
                next_height: entry.height + 1,
                hash,
                t: Some(entry.t),
            };
        }
        Ok(())
    }
}

/// Re-validates every block and link from genesis. An empty chain is valid.
pub fn chain_verify(blocks: &[Block], membership: &Membership) -> Result<(), ChainFault> {
    ChainVerifier::new(membership).verify(blocks)
}

/// Summary fields of one chain dump line plus the block bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpRecord {
    pub height: u64,
    pub prev_hash: String,
    pub d_hash: String,
    pub producer: NodeId,
    pub endorsements: usize,
    pub txs: usize,
    pub t: SimTime,
    pub block: Vec<u8>,
}

impl DumpRecord {
    pub fn parse(line: &str) -> Result<Self, DecodeError> {
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != 8 {
            return Err(DecodeError::invalid(
                "dump line",
                format!("{} fields", f.len()),
            ));
        }
        let num = |s: &str, what: &'static str| {
            s.parse::<u64>()
                .map_err(|_| DecodeError::invalid(what, format!("`{s}` is not a number")))
        };
        Ok(DumpRecord {
            height: num(f[0], "height")?,
            prev_hash: f[1].to_owned(),
            d_hash: f[2].to_owned(),
            producer: NodeId(
                u32::try_from(num(f[3], "producer")?)
                    .map_err(|_| DecodeError::invalid("producer", "out of range"))?,
            ),
            endorsements: num(f[4], "endorsements")? as usize,
            txs: num(f[5], "txs")? as usize,
            t: num(f[6], "t")?,
            block: hex::decode(f[7]).map_err(|e| DecodeError::invalid("block", e.to_string()))?,
        })
    }

    fn matches(&self, b: &Block) -> bool {
        self.height == b.height
            && self.prev_hash == b.prev_hash.to_hex()
            && self.d_hash == b.d_hash.to_hex()
            && self.producer == b.producer
            && self.endorsements == b.endorsements.len()
            && self.txs == b.d_set.len()
            && self.t == b.t
    }
}

/// Verifies a chain dump: every line must parse, agree with the block it
/// carries, and the blocks must form a valid chain. Returns the block count.
pub fn verify_dump(text: &str, membership: &Membership) -> Result<usize, ChainFault> {
    let mut blocks = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let fault = |reason| ChainFault {
            height: k as u64,
            reason,
        };
        let rec = DumpRecord::parse(line).map_err(|e| fault(ValidationError::Decode(e)))?;
        // A broken block is reported by the chain check at this height.
        if let Ok(b) = Block::from_bytes(&rec.block) {
            if !rec.matches(&b) {
                ChainVerifier::new(membership).verify_encoded(&blocks)?;
                return Err(fault(ValidationError::Summary));
            }
        }
        blocks.push(rec.block);
    }
    ChainVerifier::new(membership).verify_encoded(&blocks)?;
    Ok(blocks.len())
}
