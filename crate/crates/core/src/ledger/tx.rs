use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use thiserror::Error;

use crate::account::{
    acct_sign, acct_verify, asym_decrypt, asym_encrypt, AccountError, AccountId, AccountKeyPair,
    AccountPublicKey, AccountSignature, AsymCiphertext,
};
use crate::ces::PARTS;
use crate::codec::{DecodeError, Reader, Writer};
use crate::emr::EmrIndex;
use crate::hash::Hash32;
use crate::sim::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("transaction signature does not verify")]
    SignatureInvalid,
    #[error("index does not match the committed digest")]
    HashMismatch,
    #[error("timestamp {t} is stale at {now}")]
    TimestampStale { t: SimTime, now: SimTime },
    #[error("timestamp {t} is ahead of the clock {now}")]
    TimestampFuture { t: SimTime, now: SimTime },
    #[error("part index {0} outside 1..=7")]
    IndexOutOfRange(u8),
    #[error("transaction {0:?} already admitted")]
    Duplicate(Hash32),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Account(#[from] AccountError),
}

/// Access actions a grant may cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Read,
    Write,
    Copy,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Read, Action::Write, Action::Copy];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Read => "read",
            Action::Write => "write",
            Action::Copy => "copy",
        }
    }

    fn code(self) -> u8 {
        match self {
            Action::Read => 0,
            Action::Write => 1,
            Action::Copy => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, DecodeError> {
        match code {
            0 => Ok(Action::Read),
            1 => Ok(Action::Write),
            2 => Ok(Action::Copy),
            _ => Err(DecodeError::invalid(
                "action",
                format!("unknown code {code}"),
            )),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "read" => Ok(Action::Read),
            "write" => Ok(Action::Write),
            "copy" => Ok(Action::Copy),
            _ => Err(format!("unknown action `{s}`")),
        }
    }
}

/// Release form of `Req`: the index encrypted to the patient, its digest,
/// and the patient's signature over `H(Index_i) ‖ t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReleaseTx {
    pub patient_pk: AccountPublicKey,
    pub index_ct: AsymCiphertext,
    pub index_hash: Hash32,
    pub sig: AccountSignature,
    pub t: SimTime,
}

fn release_message(index_hash: &Hash32, t: SimTime) -> Vec<u8> {
    let mut w = Writer::new();
    w.fixed(b"bpds-release").fixed(&index_hash.0).u64(t);
    w.finish()
}

impl ReleaseTx {
    pub fn create<R: RngCore + ?Sized>(
        patient: &AccountKeyPair,
        index: &EmrIndex,
        t: SimTime,
        rng: &mut R,
    ) -> Self {
        let index_hash = index.digest();
        ReleaseTx {
            patient_pk: patient.public().clone(),
            index_ct: asym_encrypt(patient.public(), &index.to_bytes(), rng),
            sig: acct_sign(patient, &release_message(&index_hash, t)),
            index_hash,
            t,
        }
    }

    pub fn patient(&self) -> AccountId {
        self.patient_pk.id()
    }

    pub fn signature_valid(&self) -> bool {
        acct_verify(
            &self.patient_pk,
            &release_message(&self.index_hash, self.t),
            &self.sig,
        )
    }

    /// Checks a plaintext index against the committed digest.
    pub fn check_index(&self, index: &EmrIndex) -> Result<(), TxError> {
        if index.digest() == self.index_hash {
            Ok(())
        } else {
            Err(TxError::HashMismatch)
        }
    }

    /// Decrypts the on-chain index with the patient's key.
    pub fn open(&self, patient: &AccountKeyPair) -> Result<EmrIndex, TxError> {
        let bytes = asym_decrypt(patient, &self.index_ct)?;
        let index = EmrIndex::from_bytes(&bytes)
            .map_err(|_| DecodeError::invalid("index", "malformed release index"))?;
        self.check_index(&index)?;
        Ok(index)
    }
}

/// Access form of `Req = (ID ‖ obj ‖ i ‖ t)`, signed by the requester.
/// `obj` names the patient whose record is requested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessTx {
    pub requester_pk: AccountPublicKey,
    pub obj: AccountId,
    pub i: u8,
    pub action: Action,
    pub t: SimTime,
    pub sig: AccountSignature,
}

fn access_message(
    requester: &AccountPublicKey,
    obj: &AccountId,
    i: u8,
    action: Action,
    t: SimTime,
) -> Vec<u8> {
    let mut w = Writer::new();
    w.fixed(b"bpds-access");
    requester.encode(&mut w);
    w.bytes(obj.as_str().as_bytes())
        .u8(i)
        .u8(action.code())
        .u64(t);
    w.finish()
}

impl AccessTx {
    /// Signs a request. The index range is checked on admission, not here.
    pub fn create(
        requester: &AccountKeyPair,
        obj: AccountId,
        i: u8,
        action: Action,
        t: SimTime,
    ) -> Self {
        let sig = acct_sign(
            requester,
            &access_message(requester.public(), &obj, i, action, t),
        );
        AccessTx {
            requester_pk: requester.public().clone(),
            obj,
            i,
            action,
            t,
            sig,
        }
    }

    pub fn requester(&self) -> AccountId {
        self.requester_pk.id()
    }

    pub fn signature_valid(&self) -> bool {
        let msg = access_message(&self.requester_pk, &self.obj, self.i, self.action, self.t);
        acct_verify(&self.requester_pk, &msg, &self.sig)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tx {
    Release(ReleaseTx),
    Access(AccessTx),
}

impl Tx {
    pub fn t(&self) -> SimTime {
        match self {
            Tx::Release(tx) => tx.t,
            Tx::Access(tx) => tx.t,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Tx::Release(_) => "release",
            Tx::Access(_) => "access",
        }
    }

    /// Stateless validity: range checks and the signature.
    pub fn check(&self) -> Result<(), TxError> {
        let signed = match self {
            Tx::Release(tx) => tx.signature_valid(),
            Tx::Access(tx) => {
                if !(1..=PARTS as u8).contains(&tx.i) {
                    return Err(TxError::IndexOutOfRange(tx.i));
                }
                tx.signature_valid()
            }
        };
        if signed {
            Ok(())
        } else {
            Err(TxError::SignatureInvalid)
        }
    }

    pub fn encode(&self, w: &mut Writer) {
        match self {
            Tx::Release(tx) => {
                w.u8(0);
                tx.patient_pk.encode(w);
                tx.index_ct.encode(w);
                w.fixed(&tx.index_hash.0);
                tx.sig.encode(w);
                w.u64(tx.t);
            }
            Tx::Access(tx) => {
                w.u8(1);
                tx.requester_pk.encode(w);
                w.bytes(tx.obj.as_str().as_bytes())
                    .u8(tx.i)
                    .u8(tx.action.code())
                    .u64(tx.t);
                tx.sig.encode(w);
            }
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8("tx kind")? {
            0 => Ok(Tx::Release(ReleaseTx {
                patient_pk: AccountPublicKey::decode(r)?,
                index_ct: AsymCiphertext::decode(r)?,
                index_hash: Hash32(r.fixed::<32>("index hash")?),
                sig: AccountSignature::decode(r)?,
                t: r.u64("tx time")?,
            })),
            1 => {
                let requester_pk = AccountPublicKey::decode(r)?;
                let obj = std::str::from_utf8(r.bytes("object")?)
                    .ok()
                    .and_then(AccountId::parse)
                    .ok_or_else(|| DecodeError::invalid("object", "not an account id"))?;
                Ok(Tx::Access(AccessTx {
                    requester_pk,
                    obj,
                    i: r.u8("part index")?,
                    action: Action::from_code(r.u8("action")?)?,
                    t: r.u64("tx time")?,
                    sig: AccountSignature::decode(r)?,
                }))
            }
            k => Err(DecodeError::invalid("tx kind", format!("unknown kind {k}"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::decode(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    pub fn id(&self) -> Hash32 {
        Hash32::of(&self.to_bytes())
    }
}

/// A transaction paired with the time a node queued it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admitted {
    pub tx: Tx,
    pub admitted_at: SimTime,
}

pub const DEFAULT_MAX_TX_AGE: SimTime = 60_000;

/// Pending transactions of one node, in admission order.
#[derive(Debug, Clone)]
pub struct Mempool {
    max_age: SimTime,
    queue: Vec<Admitted>,
    seen: HashSet<Hash32>,
}

impl Default for Mempool {
    fn default() -> Self {
        Mempool::new(DEFAULT_MAX_TX_AGE)
    }
}

impl Mempool {
    pub fn new(max_age: SimTime) -> Self {
        Mempool {
            max_age,
            queue: Vec::new(),
            seen: HashSet::new(),
        }
    }

    /// Queues `tx` with admission time `now` if it is well formed, signed,
    /// fresh and not seen before.
    pub fn submit_tx(&mut self, tx: Tx, now: SimTime) -> Result<Hash32, TxError> {
        let t = tx.t();
        if t > now {
            return Err(TxError::TimestampFuture { t, now });
        }
        if now - t > self.max_age {
            return Err(TxError::TimestampStale { t, now });
        }
        tx.check()?;
        let id = tx.id();
        if !self.seen.insert(id) {
            return Err(TxError::Duplicate(id));
        }
        self.queue.push(Admitted {
            tx,
            admitted_at: now,
        });
        Ok(id)
    }

    pub fn pending(&self) -> &[Admitted] {
        &self.queue
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Drops queued transactions that were committed elsewhere and remembers
    /// their ids so they cannot be re-admitted.
    pub fn prune(&mut self, committed: &HashSet<Hash32>) {
        self.seen.extend(committed.iter().copied());
        self.queue.retain(|a| !committed.contains(&a.tx.id()));
    }

    pub fn take_all(&mut self) -> Vec<Admitted> {
        std::mem::take(&mut self.queue)
    }
}
