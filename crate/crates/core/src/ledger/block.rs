use std::collections::HashSet;

use thiserror::Error;

use crate::account::{acct_sign, acct_verify, AccountKeyPair, AccountPublicKey, AccountSignature};
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Hash32;
use crate::sim::{NodeId, SimTime};

use super::membership::Membership;
use super::tx::{Admitted, Tx, TxError};

/// Machine-readable reason a block fails validation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("block does not decode: {0}")]
    Decode(DecodeError),
    #[error("height {got}, expected {expected}")]
    Height { expected: u64, got: u64 },
    #[error("prev_hash does not match the predecessor")]
    PrevHash,
    #[error("timestamp {t} not after predecessor at {prev}")]
    Timestamp { t: SimTime, prev: SimTime },
    #[error("node {producer} is not scheduled to produce at {t}")]
    NotScheduled { producer: NodeId, t: SimTime },
    #[error("d_hash does not match d_set and t")]
    DHash,
    #[error("producer signature does not verify")]
    ProducerSignature,
    #[error("transaction {pos} invalid: {error}")]
    InvalidTx { pos: usize, error: TxError },
    #[error("transaction {pos} already recorded")]
    DuplicateTx { pos: usize },
    #[error("transaction {pos} has inconsistent timestamps")]
    TxTimestamp { pos: usize },
    #[error("endorsement {pos} invalid")]
    Endorsement { pos: usize },
    #[error("{approvals} approvals, {quorum} required")]
    QuorumNotMet { approvals: usize, quorum: usize },
    #[error("dump summary fields disagree with the block")]
    Summary,
}

impl ValidationError {
    pub fn code(&self) -> u8 {
        match self {
            ValidationError::Decode(_) => 1,
            ValidationError::Height { .. } => 2,
            ValidationError::PrevHash => 3,
            ValidationError::Timestamp { .. } => 4,
            ValidationError::NotScheduled { .. } => 5,
            ValidationError::DHash => 6,
            ValidationError::ProducerSignature => 7,
            ValidationError::InvalidTx { .. } => 8,
            ValidationError::DuplicateTx { .. } => 9,
            ValidationError::TxTimestamp { .. } => 10,
            ValidationError::Endorsement { .. } => 11,
            ValidationError::QuorumNotMet { .. } => 12,
            ValidationError::Summary => 13,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ValidationError::Decode(_) => "decode",
            ValidationError::Height { .. } => "height",
            ValidationError::PrevHash => "prev-hash",
            ValidationError::Timestamp { .. } => "timestamp",
            ValidationError::NotScheduled { .. } => "not-scheduled",
            ValidationError::DHash => "d-hash",
            ValidationError::ProducerSignature => "producer-signature",
            ValidationError::InvalidTx { .. } => "invalid-tx",
            ValidationError::DuplicateTx { .. } => "duplicate-tx",
            ValidationError::TxTimestamp { .. } => "tx-timestamp",
            ValidationError::Endorsement { .. } => "endorsement",
            ValidationError::QuorumNotMet { .. } => "quorum-not-met",
            ValidationError::Summary => "summary",
        }
    }
}

impl From<DecodeError> for ValidationError {
    fn from(e: DecodeError) -> Self {
        ValidationError::Decode(e)
    }
}

/// Audit result: approve, or reject with a [`ValidationError::code`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Res {
    Approve,
    Reject(u8),
}

impl Res {
    pub fn is_approve(self) -> bool {
        self == Res::Approve
    }

    pub fn encode(self, w: &mut Writer) {
        match self {
            Res::Approve => w.u8(1).u8(0),
            Res::Reject(reason) => w.u8(0).u8(reason),
        };
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match (r.u8("verdict")?, r.u8("reason")?) {
            (1, 0) => Ok(Res::Approve),
            (0, reason) if reason != 0 => Ok(Res::Reject(reason)),
            (v, reason) => Err(DecodeError::invalid(
                "audit result",
                format!("verdict {v} with reason {reason}"),
            )),
        }
    }
}

/// `pk_atn ‖ SIG_sk_atn(Res ‖ t)`, bound to one candidate block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endorsement {
    pub atn_pk: AccountPublicKey,
    pub res: Res,
    pub t: SimTime,
    pub sig: AccountSignature,
}

fn endorsement_message(rec_digest: &Hash32, res: Res, t: SimTime) -> Vec<u8> {
    let mut w = Writer::new();
    w.fixed(b"bpds-audit").fixed(&rec_digest.0);
    res.encode(&mut w);
    w.u64(t);
    w.finish()
}

impl Endorsement {
    pub fn sign(atn: &AccountKeyPair, rec_digest: &Hash32, res: Res, t: SimTime) -> Self {
        Endorsement {
            atn_pk: atn.public().clone(),
            res,
            t,
            sig: acct_sign(atn, &endorsement_message(rec_digest, res, t)),
        }
    }

    pub fn message(&self, rec_digest: &Hash32) -> Vec<u8> {
        endorsement_message(rec_digest, self.res, self.t)
    }

    pub fn verify(&self, rec_digest: &Hash32) -> bool {
        acct_verify(&self.atn_pk, &self.message(rec_digest), &self.sig)
    }

    pub fn encode(&self, w: &mut Writer) {
        self.atn_pk.encode(w);
        self.res.encode(w);
        w.u64(self.t);
        self.sig.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Endorsement {
            atn_pk: AccountPublicKey::decode(r)?,
            res: Res::decode(r)?,
            t: r.u64("endorsement time")?,
            sig: AccountSignature::decode(r)?,
        })
    }
}

fn encode_d_set(d_set: &[Admitted], w: &mut Writer) {
    w.u32(d_set.len() as u32);
    for a in d_set {
        w.bytes(&a.tx.to_bytes()).u64(a.admitted_at);
    }
}

fn decode_d_set(r: &mut Reader<'_>) -> Result<Vec<Admitted>, DecodeError> {
    let n = r.u32("d_set length")? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let tx = Tx::from_bytes(r.bytes("transaction")?)?;
        out.push(Admitted {
            tx,
            admitted_at: r.u64("admission time")?,
        });
    }
    Ok(out)
}

/// `D_hash = H(D_set ‖ t)`.
pub fn compute_d_hash(d_set: &[Admitted], t: SimTime) -> Hash32 {
    let mut w = Writer::new();
    encode_d_set(d_set, &mut w);
    w.u64(t);
    Hash32::of(w.as_slice())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash32,
    pub d_set: Vec<Admitted>,
    pub d_hash: Hash32,
    pub producer: NodeId,
    pub producer_sig: AccountSignature,
    pub endorsements: Vec<Endorsement>,
    pub t: SimTime,
}

/// Where the next block must attach.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tip {
    pub next_height: u64,
    pub hash: Hash32,
    pub t: Option<SimTime>,
}

impl Tip {
    pub const GENESIS: Tip = Tip {
        next_height: 0,
        hash: Hash32::ZERO,
        t: None,
    };

    pub fn after(block: &Block) -> Tip {
        Tip {
            next_height: block.height + 1,
            hash: block.hash(),
            t: Some(block.t),
        }
    }

    pub fn of(prev: Option<&Block>) -> Tip {
        prev.map_or(Tip::GENESIS, Tip::after)
    }
}

impl Block {
    /// The record the producer signs and auditors endorse: everything but
    /// the signatures themselves.
    pub fn rec_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(b"bpds-rec")
            .u64(self.height)
            .fixed(&self.prev_hash.0)
            .u32(self.producer.0);
        encode_d_set(&self.d_set, &mut w);
        w.fixed(&self.d_hash.0);
        w.finish()
    }

    pub fn rec_digest(&self) -> Hash32 {
        Hash32::of(&self.rec_bytes())
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u64(self.height)
            .fixed(&self.prev_hash.0)
            .u32(self.producer.0)
            .u64(self.t);
        encode_d_set(&self.d_set, w);
        w.fixed(&self.d_hash.0);
        self.producer_sig.encode(w);
        w.u32(self.endorsements.len() as u32);
        for e in &self.endorsements {
            e.encode(w);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let height = r.u64("height")?;
        let prev_hash = Hash32(r.fixed::<32>("prev_hash")?);
        let producer = NodeId(r.u32("producer")?);
        let t = r.u64("block time")?;
        let d_set = decode_d_set(&mut r)?;
        let d_hash = Hash32(r.fixed::<32>("d_hash")?);
        let producer_sig = AccountSignature::decode(&mut r)?;
        let n = r.u32("endorsement count")? as usize;
        let mut endorsements = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            endorsements.push(Endorsement::decode(&mut r)?);
        }
        r.finish()?;
        Ok(Block {
            height,
            prev_hash,
            d_set,
            d_hash,
            producer,
            producer_sig,
            endorsements,
            t,
        })
    }

    pub fn hash(&self) -> Hash32 {
        Hash32::of(&self.to_bytes())
    }

    pub fn approvals(&self) -> usize {
        self.endorsements
            .iter()
            .filter(|e| e.res.is_approve())
            .count()
    }

    pub fn tx_ids(&self) -> Vec<Hash32> {
        self.d_set.iter().map(|a| a.tx.id()).collect()
    }

    /// `height prev_hash d_hash producer endorsements txs t block_hex`.
    pub fn dump_line(&self) -> String {
        format!(
            "{} {} {} {} {} {} {} {}",
            self.height,
            self.prev_hash,
            self.d_hash,
            self.producer,
            self.endorsements.len(),
            self.d_set.len(),
            self.t,
            hex::encode(self.to_bytes())
        )
    }
}

/// Assembles the slot's candidate block from queued transactions, dropping
/// any that fail per-transaction verification or repeat an earlier one.
pub fn build_block<I>(
    producer: &AccountKeyPair,
    producer_id: NodeId,
    candidates: I,
    tip: Tip,
    t: SimTime,
) -> Block
where
    I: IntoIterator<Item = Admitted>,
{
    let mut seen = HashSet::new();
    let d_set: Vec<Admitted> = candidates
        .into_iter()
        .filter(|a| {
            a.tx.t() <= a.admitted_at
                && a.admitted_at <= t
                && a.tx.check().is_ok()
                && seen.insert(a.tx.id())
        })
        .collect();
    let d_hash = compute_d_hash(&d_set, t);
    let mut block = Block {
        height: tip.next_height,
        prev_hash: tip.hash,
        d_set,
        d_hash,
        producer: producer_id,
        producer_sig: AccountSignature {
            commitment: Default::default(),
            response: Default::default(),
        },
        endorsements: Vec::new(),
        t,
    };
    block.producer_sig = acct_sign(producer, &block.rec_bytes());
    block
}

/// Signature checking strategy, so chain verification can skip
/// signatures it has already checked.
pub trait SigCheck {
    fn check(&mut self, pk: &AccountPublicKey, msg: &[u8], sig: &AccountSignature) -> bool;
}

pub struct DirectSigCheck;

impl SigCheck for DirectSigCheck {
    fn check(&mut self, pk: &AccountPublicKey, msg: &[u8], sig: &AccountSignature) -> bool {
        acct_verify(pk, msg, sig)
    }
}

/// Remembers signatures that verified.
#[derive(Debug, Default)]
pub struct CachedSigCheck {
    good: HashSet<Hash32>,
}

impl SigCheck for CachedSigCheck {
    fn check(&mut self, pk: &AccountPublicKey, msg: &[u8], sig: &AccountSignature) -> bool {
        let mut w = Writer::new();
        pk.encode(&mut w);
        w.bytes(msg);
        sig.encode(&mut w);
        let key = Hash32::of(w.as_slice());
        if self.good.contains(&key) {
            return true;
        }
        let ok = acct_verify(pk, msg, sig);
        if ok {
            self.good.insert(key);
        }
        ok
    }
}

/// Height, linkage and timestamp against the attachment point.
pub fn check_link(block: &Block, tip: &Tip) -> Result<(), ValidationError> {
    if block.height != tip.next_height {
        return Err(ValidationError::Height {
            expected: tip.next_height,
            got: block.height,
        });
    }
    if block.prev_hash != tip.hash {
        return Err(ValidationError::PrevHash);
    }
    if let Some(prev) = tip.t {
        if block.t <= prev {
            return Err(ValidationError::Timestamp { t: block.t, prev });
        }
    }
    Ok(())
}

/// Everything that depends only on the block and the membership: schedule,
/// d_hash, transactions, endorsements and, when `require_quorum`, the
/// approval count.
pub fn check_body<S: SigCheck>(
    block: &Block,
    membership: &Membership,
    require_quorum: bool,
    sigs: &mut S,
) -> Result<(), ValidationError> {
    let not_scheduled = ValidationError::NotScheduled {
        producer: block.producer,
        t: block.t,
    };
    let schedule = membership
        .schedule_at(block.t)
        .ok_or(not_scheduled.clone())?;
    if schedule.producer_at(block.t) != Some(block.producer) {
        return Err(not_scheduled);
    }
    let producer_pk = membership.key(block.producer).ok_or(not_scheduled)?;
    if compute_d_hash(&block.d_set, block.t) != block.d_hash {
        return Err(ValidationError::DHash);
    }

    let mut ids = HashSet::new();
    for (pos, a) in block.d_set.iter().enumerate() {
        if a.tx.t() > a.admitted_at || a.admitted_at > block.t {
            return Err(ValidationError::TxTimestamp { pos });
        }
        if !ids.insert(a.tx.id()) {
            return Err(ValidationError::DuplicateTx { pos });
        }
    }

    let mut endorsers = HashSet::new();
    for (pos, e) in block.endorsements.iter().enumerate() {
        let member = membership
            .node_of(&e.atn_pk)
            .filter(|&n| schedule.is_atn(n) && endorsers.insert(n));
        if member.is_none() || e.t < block.t {
            return Err(ValidationError::Endorsement { pos });
        }
    }
    if require_quorum {
        let (approvals, quorum) = (block.approvals(), schedule.quorum());
        if approvals < quorum {
            return Err(ValidationError::QuorumNotMet { approvals, quorum });
        }
    }

    let rec = block.rec_bytes();
    if !sigs.check(producer_pk, &rec, &block.producer_sig) {
        return Err(ValidationError::ProducerSignature);
    }
    for (pos, a) in block.d_set.iter().enumerate() {
        a.tx.check()
            .map_err(|error| ValidationError::InvalidTx { pos, error })?;
    }
    let digest = Hash32::of(&rec);
    for (pos, e) in block.endorsements.iter().enumerate() {
        if !sigs.check(&e.atn_pk, &e.message(&digest), &e.sig) {
            return Err(ValidationError::Endorsement { pos });
        }
    }
    Ok(())
}

/// Full structural and cryptographic check of `block` as the successor of
/// `prev` (`None` for the first block). Endorsements present must be valid,
/// but the approval quorum is left to [`super::Chain::append_block`].
pub fn validate_block(
    block: &Block,
    prev: Option<&Block>,
    membership: &Membership,
) -> Result<(), ValidationError> {
    check_link(block, &Tip::of(prev))?;
    check_body(block, membership, false, &mut DirectSigCheck)
}
