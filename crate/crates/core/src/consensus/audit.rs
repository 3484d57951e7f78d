use std::collections::HashSet;

use rand::RngCore;
use thiserror::Error;

use crate::account::{
    asym_decrypt, asym_encrypt, AccountError, AccountKeyPair, AccountPublicKey, AsymCiphertext,
};
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Hash32;
use crate::ledger::{check_body, check_link, Block, Endorsement, Membership, Res, Schedule, Tip};
use crate::sim::{NodeId, SimTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplyError {
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("reply time inside does not match the envelope")]
    TimeMismatch,
}

/// `Rep = E_pk_rpn((Res ‖ t) ‖ SIG_sk_atn(Res ‖ t) ‖ t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReply {
    pub ct: AsymCiphertext,
}

impl AuditReply {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.ct.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        Ok(AuditReply {
            ct: AsymCiphertext::from_bytes(bytes)?,
        })
    }
}

/// Objective verdict on a candidate attaching at `tip`.
pub fn judge(candidate: &Block, tip: &Tip, membership: &Membership) -> Res {
    let verdict = check_link(candidate, tip).and_then(|()| {
        check_body(
            candidate,
            membership,
            false,
            &mut crate::ledger::DirectSigCheck,
        )
    });
    match verdict {
        Ok(()) if candidate.endorsements.is_empty() => Res::Approve,
        Ok(()) => Res::Reject(crate::ledger::ValidationError::Endorsement { pos: 0 }.code()),
        Err(e) => Res::Reject(e.code()),
    }
}

/// Audits `candidate` and returns the reply encrypted to the producer. A
/// Byzantine auditor inverts its verdict but still replies well formed.
#[allow(clippy::too_many_arguments)]
pub fn audit<R: RngCore + ?Sized>(
    atn: &AccountKeyPair,
    rpn_pk: &AccountPublicKey,
    candidate: &Block,
    tip: &Tip,
    membership: &Membership,
    t: SimTime,
    byzantine: bool,
    rng: &mut R,
) -> (Res, AuditReply) {
    let honest = judge(candidate, tip, membership);
    let res = match (byzantine, honest) {
        (false, r) => r,
        (true, Res::Approve) => Res::Reject(crate::ledger::ValidationError::DHash.code()),
        (true, Res::Reject(_)) => Res::Approve,
    };
    let e = Endorsement::sign(atn, &candidate.rec_digest(), res, t);
    let mut w = Writer::new();
    e.encode(&mut w);
    w.u64(t);
    let reply = AuditReply {
        ct: asym_encrypt(rpn_pk, w.as_slice(), rng),
    };
    (res, reply)
}

pub fn open_reply(rpn: &AccountKeyPair, reply: &AuditReply) -> Result<Endorsement, ReplyError> {
    let plain = asym_decrypt(rpn, &reply.ct)?;
    let mut r = Reader::new(&plain);
    let e = Endorsement::decode(&mut r)?;
    let t = r.u64("reply time")?;
    r.finish()?;
    if t != e.t {
        return Err(ReplyError::TimeMismatch);
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyOutcome {
    pub commit: bool,
    pub approvals: usize,
    pub quorum: usize,
    /// Verified replies, approvals and rejections, in arrival order.
    pub endorsements: Vec<Endorsement>,
}

/// Opens every reply, keeps those signed by a distinct scheduled auditor
/// over this candidate, and commits iff approvals reach the quorum.
pub fn tally(
    replies: &[AuditReply],
    rpn: &AccountKeyPair,
    candidate: &Block,
    schedule: &Schedule,
    membership: &Membership,
) -> TallyOutcome {
    let digest: Hash32 = candidate.rec_digest();
    let mut seen: HashSet<NodeId> = HashSet::new();
    let mut endorsements = Vec::new();
    for reply in replies {
        let Ok(e) = open_reply(rpn, reply) else {
            continue;
        };
        let member = membership
            .node_of(&e.atn_pk)
            .filter(|&n| schedule.is_atn(n));
        let Some(n) = member else { continue };
        if e.t < candidate.t || !e.verify(&digest) || !seen.insert(n) {
            continue;
        }
        endorsements.push(e);
    }
    let approvals = endorsements.iter().filter(|e| e.res.is_approve()).count();
    let quorum = schedule.quorum();
    TallyOutcome {
        commit: approvals >= quorum,
        approvals,
        quorum,
        endorsements,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::account::Role;
    use crate::group::GroupProfile;
    use crate::ledger::{build_block, Chain, ValidationError, SLOT_MS};

    struct Fx {
        rng: ChaCha20Rng,
        nodes: Vec<AccountKeyPair>,
        membership: Membership,
    }

    fn fx() -> Fx {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let nodes: Vec<_> = (0..50)
            .map(|_| AccountKeyPair::generate(GroupProfile::Test, Role::Node, &mut rng))
            .collect();
        let keys: BTreeMap<_, _> = nodes
            .iter()
            .enumerate()
            .map(|(i, k)| (NodeId(i as u32), k.public().clone()))
            .collect();
        let mut membership = Membership::new(keys);
        membership
            .push_schedule(
                Schedule::new(
                    0,
                    SLOT_MS,
                    (0..30).map(NodeId).collect(),
                    (30..50).map(NodeId).collect(),
                )
                .unwrap(),
            )
            .unwrap();
        Fx {
            rng,
            nodes,
            membership,
        }
    }

    fn replies(f: &mut Fx, candidate: &Block, byzantine: usize) -> Vec<AuditReply> {
        let rpn_pk = f.nodes[0].public().clone();
        (30..50)
            .enumerate()
            .map(|(k, a)| {
                audit(
                    &f.nodes[a],
                    &rpn_pk,
                    candidate,
                    &Tip::GENESIS,
                    &f.membership,
                    candidate.t + 200,
                    k < byzantine,
                    &mut f.rng,
                )
                .1
            })
            .collect()
    }

    #[test]
    fn honest_audit_approves_and_commits() {
        let mut f = fx();
        let c = build_block(&f.nodes[0], NodeId(0), Vec::new(), Tip::GENESIS, 0);
        let reps = replies(&mut f, &c, 0);
        let schedule = f.membership.current().unwrap().clone();
        let out = tally(&reps, &f.nodes[0], &c, &schedule, &f.membership);
        assert_eq!(
            (out.commit, out.approvals, out.endorsements.len()),
            (true, 20, 20)
        );
        let mut block = c;
        block.endorsements = out.endorsements;
        let mut chain = Chain::new();
        chain.append_block(block, &f.membership).unwrap();
    }

    #[test]
    fn quorum_boundary() {
        let mut f = fx();
        let c = build_block(&f.nodes[0], NodeId(0), Vec::new(), Tip::GENESIS, 0);
        let schedule = f.membership.current().unwrap().clone();
        for (byz, commit) in [(9, true), (10, false), (0, true)] {
            let reps = replies(&mut f, &c, byz);
            let out = tally(&reps, &f.nodes[0], &c, &schedule, &f.membership);
            assert_eq!(out.approvals, 20 - byz);
            assert_eq!(out.commit, commit, "byzantine={byz}");
            assert_eq!(out.endorsements.len(), 20);
        }
    }

    #[test]
    fn corrupted_candidate_rejected_with_reason() {
        let mut f = fx();
        let mut c = build_block(&f.nodes[0], NodeId(0), Vec::new(), Tip::GENESIS, 0);
        c.d_hash.0[3] ^= 0x10;
        assert_eq!(
            judge(&c, &Tip::GENESIS, &f.membership),
            Res::Reject(ValidationError::DHash.code())
        );
        let reps = replies(&mut f, &c, 0);
        let schedule = f.membership.current().unwrap().clone();
        let out = tally(&reps, &f.nodes[0], &c, &schedule, &f.membership);
        assert!(!out.commit);
        assert_eq!(out.approvals, 0);
    }

    #[test]
    fn replies_for_another_producer_or_block_are_dropped() {
        let mut f = fx();
        let c = build_block(&f.nodes[0], NodeId(0), Vec::new(), Tip::GENESIS, 0);
        let other = build_block(&f.nodes[0], NodeId(0), Vec::new(), Tip::GENESIS, 0);
        let mut other = other;
        other.height = 5;
        let schedule = f.membership.current().unwrap().clone();
        let reps = replies(&mut f, &other, 0);
        assert_eq!(
            tally(&reps, &f.nodes[0], &c, &schedule, &f.membership)
                .endorsements
                .len(),
            0
        );
        let reps = replies(&mut f, &c, 0);
        assert_eq!(
            tally(&reps, &f.nodes[1], &c, &schedule, &f.membership)
                .endorsements
                .len(),
            0
        );
        let mut doubled = reps.clone();
        doubled.extend(reps);
        assert_eq!(
            tally(&doubled, &f.nodes[0], &c, &schedule, &f.membership).approvals,
            20
        );
    }
}
