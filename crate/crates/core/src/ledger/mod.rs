//! Consortium ledger: transactions, blocks, the append-only chain and its
//! verification.
//!
//! A block's `d_hash` covers its ordered transaction set and timestamp, the
//! producer signs the whole record (height, link, producer, `d_set`,
//! `d_hash`), and each audit endorsement signs its result against the digest
//! of that record. Blocks link by the hash of the previous block's full
//! encoding, endorsements included, so a change anywhere in a committed
//! block breaks the link to its successor.

mod block;
mod chain;
mod membership;
mod tx;

pub use block::{
    build_block, check_body, check_link, compute_d_hash, validate_block, Block, CachedSigCheck,
    DirectSigCheck, Endorsement, Res, SigCheck, Tip, ValidationError,
};
pub use chain::{chain_verify, verify_dump, Chain, ChainFault, ChainVerifier, DumpRecord};
pub use membership::{
    quorum, Membership, Schedule, ScheduleError, ATN_COUNT, CYCLE_MS, RPN_COUNT, SLOT_MS,
};
pub use tx::{AccessTx, Action, Admitted, Mempool, ReleaseTx, Tx, TxError, DEFAULT_MAX_TX_AGE};
