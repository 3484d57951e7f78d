//! Patient-controlled permission contract.
//!
//! The patient presets grants (grantee, part indices, actions, validity
//! window). Each part's index is re-encrypted by the patient to the
//! contract's delegate key at release time, so the contract can answer a
//! covered request with `Message = E_pk_user(Index_i ‖ t)` without ever
//! holding the patient's own key.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rand::RngCore;
use thiserror::Error;

use crate::account::{
    acct_sign, acct_verify, asym_decrypt, asym_encrypt, AccountError, AccountId, AccountKeyPair,
    AccountPublicKey, AsymCiphertext, Role,
};
use crate::ces::IndexSet;
use crate::codec::{DecodeError, Reader, Writer};
use crate::emr::EmrIndex;
use crate::group::GroupProfile;
use crate::hash::Hash32;
use crate::ledger::{AccessTx, Action, Chain, ReleaseTx, Tx, TxError};
use crate::sim::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("caller is not the contract's patient")]
    Unauthorized,
    #[error("invalid grant: {0}")]
    InvalidGrant(String),
    #[error("part {0} has not been released")]
    NotReleased(u8),
    #[error("release belongs to another patient")]
    ForeignRelease,
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionGrant {
    pub grantee: AccountId,
    pub parts: IndexSet,
    pub actions: BTreeSet<Action>,
    pub valid_from: SimTime,
    pub valid_until: SimTime,
    pub revoked: bool,
}

impl PermissionGrant {
    pub fn new(
        grantee: AccountId,
        parts: IndexSet,
        actions: impl IntoIterator<Item = Action>,
        valid_from: SimTime,
        valid_until: SimTime,
    ) -> Result<Self, ContractError> {
        let actions: BTreeSet<Action> = actions.into_iter().collect();
        if parts.is_empty() {
            return Err(ContractError::InvalidGrant("no part indices".into()));
        }
        if actions.is_empty() {
            return Err(ContractError::InvalidGrant("no actions".into()));
        }
        if valid_from >= valid_until {
            return Err(ContractError::InvalidGrant(format!(
                "window {valid_from}..{valid_until} is empty"
            )));
        }
        Ok(PermissionGrant {
            grantee,
            parts,
            actions,
            valid_from,
            valid_until,
            revoked: false,
        })
    }

    fn matches(&self, who: &AccountId, i: u8, action: Action) -> bool {
        &self.grantee == who && self.parts.contains(i) && self.actions.contains(&action)
    }

    /// Window is inclusive at both ends.
    pub fn in_window(&self, t: SimTime) -> bool {
        self.valid_from <= t && t <= self.valid_until
    }

    /// The covering-grant predicate.
    pub fn covers(&self, who: &AccountId, i: u8, action: Action, t: SimTime) -> bool {
        !self.revoked && self.matches(who, i, action) && self.in_window(t)
    }

    fn encode(&self, w: &mut Writer) {
        w.bytes(self.grantee.as_str().as_bytes())
            .u8(self.parts.bits())
            .u8(self.actions.iter().fold(0, |m, a| m | 1 << *a as u8))
            .u64(self.valid_from)
            .u64(self.valid_until);
    }
}

impl fmt::Display for PermissionGrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let actions: Vec<&str> = self.actions.iter().map(|a| a.as_str()).collect();
        write!(
            f,
            "grantee={} parts={} actions={} window={}..{}{}",
            self.grantee,
            self.parts.to_decimal_list(),
            actions.join(","),
            self.valid_from,
            self.valid_until,
            if self.revoked { " revoked" } else { "" }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    /// The transaction is not in a committed block.
    NotRecorded,
    BadSignature,
    WrongObject,
    /// A grant matches, but not at this time.
    OutsideWindow,
    /// Only revoked grants match.
    Revoked,
    NoGrant,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::NotRecorded => "not-recorded",
            DenyReason::BadSignature => "bad-signature",
            DenyReason::WrongObject => "wrong-object",
            DenyReason::OutsideWindow => "outside-window",
            DenyReason::Revoked => "revoked",
            DenyReason::NoGrant => "no-grant",
        }
    }
}

/// Result of an access request. A denial carries only its reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Granted(AsymCiphertext),
    Denied(DenyReason),
}

impl Outcome {
    pub fn is_granted(&self) -> bool {
        matches!(self, Outcome::Granted(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionEntry {
    pub t: SimTime,
    pub op: &'static str,
    pub actor: AccountId,
    pub detail: String,
    pub outcome: String,
}

impl fmt::Display for ExecutionEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.t, self.op, self.actor, self.outcome, self.detail
        )
    }
}

/// Encodes `Index_i ‖ t` for the requester.
fn message_plain(index: &EmrIndex, t: SimTime) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(&index.to_bytes()).u64(t);
    w.finish()
}

/// Opens a granted `Message` with the requester's key.
pub fn open_message(
    user: &AccountKeyPair,
    message: &AsymCiphertext,
) -> Result<(EmrIndex, SimTime), ContractError> {
    let plain = asym_decrypt(user, message)?;
    let mut r = Reader::new(&plain);
    let index = EmrIndex::from_bytes(r.bytes("index")?)
        .map_err(|e| DecodeError::invalid("index", e.to_string()))?;
    let t = r.u64("message time")?;
    r.finish()?;
    Ok((index, t))
}

/// Lookup of committed transaction ids.
pub trait TxLookup {
    fn is_recorded(&self, id: &Hash32) -> bool;
}

impl TxLookup for Chain {
    fn is_recorded(&self, id: &Hash32) -> bool {
        self.contains_tx(id)
    }
}

impl TxLookup for HashSet<Hash32> {
    fn is_recorded(&self, id: &Hash32) -> bool {
        self.contains(id)
    }
}

struct VaultEntry {
    sealed: AsymCiphertext,
    release: Hash32,
}

pub struct Contract {
    patient_pk: AccountPublicKey,
    delegate: AccountKeyPair,
    grants: Vec<PermissionGrant>,
    vault: BTreeMap<u8, VaultEntry>,
    log: Vec<ExecutionEntry>,
}

impl fmt::Debug for Contract {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Contract")
            .field("patient", &self.patient_pk.id())
            .field("grants", &self.grants.len())
            .field("vault", &self.vault.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn command_message(domain: &[u8], body: &[u8], t: SimTime) -> Vec<u8> {
    let mut w = Writer::new();
    w.fixed(domain).bytes(body).u64(t);
    w.finish()
}

impl Contract {
    /// Deploys a contract for `patient_pk` with a fresh delegate key.
    pub fn deploy<R: RngCore + ?Sized>(
        patient_pk: AccountPublicKey,
        profile: GroupProfile,
        rng: &mut R,
    ) -> Self {
        Contract {
            patient_pk,
            delegate: AccountKeyPair::generate(profile, Role::Node, rng),
            grants: Vec::new(),
            vault: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    pub fn patient(&self) -> AccountId {
        self.patient_pk.id()
    }

    /// Key the patient re-encrypts indexes to.
    pub fn delegate_pk(&self) -> &AccountPublicKey {
        self.delegate.public()
    }

    pub fn grants(&self) -> &[PermissionGrant] {
        &self.grants
    }

    pub fn execution_log(&self) -> &[ExecutionEntry] {
        &self.log
    }

    pub fn released_parts(&self) -> Vec<u8> {
        self.vault.keys().copied().collect()
    }

    /// The caller proves it is the patient by signing the command; the
    /// signature must verify under the contract's patient key.
    fn authorize(&self, caller: &AccountKeyPair, msg: &[u8]) -> bool {
        acct_verify(&self.patient_pk, msg, &acct_sign(caller, msg))
    }

    fn record(
        &mut self,
        t: SimTime,
        op: &'static str,
        actor: AccountId,
        detail: String,
        outcome: &str,
    ) {
        self.log.push(ExecutionEntry {
            t,
            op,
            actor,
            detail,
            outcome: outcome.to_owned(),
        });
    }

    /// Adds grants. Coverage is the union over all non-revoked grants, so
    /// overlapping grants for one grantee merge.
    pub fn set_permissions(
        &mut self,
        caller: &AccountKeyPair,
        grants: Vec<PermissionGrant>,
        t: SimTime,
    ) -> Result<(), ContractError> {
        let mut w = Writer::new();
        w.u32(grants.len() as u32);
        for g in &grants {
            g.encode(&mut w);
        }
        let msg = command_message(b"bpds-set-permissions", w.as_slice(), t);
        let detail = grants
            .iter()
            .map(|g| g.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        if !self.authorize(caller, &msg) {
            self.record(t, "set-permissions", caller.id(), detail, "unauthorized");
            return Err(ContractError::Unauthorized);
        }
        self.grants.extend(grants.into_iter().map(|mut g| {
            g.revoked = false;
            g
        }));
        self.record(t, "set-permissions", caller.id(), detail, "ok");
        Ok(())
    }

    /// Marks every grant to `grantee` revoked. Revoking an unknown grantee
    /// is logged and otherwise ignored.
    pub fn revoke(
        &mut self,
        caller: &AccountKeyPair,
        grantee: &AccountId,
        t: SimTime,
    ) -> Result<(), ContractError> {
        let msg = command_message(b"bpds-revoke", grantee.as_str().as_bytes(), t);
        let detail = format!("grantee={grantee}");
        if !self.authorize(caller, &msg) {
            self.record(t, "revoke", caller.id(), detail, "unauthorized");
            return Err(ContractError::Unauthorized);
        }
        let mut found = false;
        for g in self.grants.iter_mut().filter(|g| &g.grantee == grantee) {
            g.revoked = true;
            found = true;
        }
        let outcome = if found {
            "ok"
        } else {
            "warning-unknown-grantee"
        };
        self.record(t, "revoke", caller.id(), detail, outcome);
        Ok(())
    }

    /// Stores the patient's re-encryption of a committed release. The index
    /// must match the digest the release committed to.
    pub fn deposit(
        &mut self,
        part: u8,
        release: &ReleaseTx,
        sealed: AsymCiphertext,
    ) -> Result<(), ContractError> {
        if release.patient_pk != self.patient_pk {
            return Err(ContractError::ForeignRelease);
        }
        if !release.signature_valid() {
            return Err(TxError::SignatureInvalid.into());
        }
        let plain = asym_decrypt(&self.delegate, &sealed)?;
        let index = EmrIndex::from_bytes(&plain)
            .map_err(|e| DecodeError::invalid("index", e.to_string()))?;
        release.check_index(&index)?;
        self.vault.insert(
            part,
            VaultEntry {
                sealed,
                release: Tx::Release(release.clone()).id(),
            },
        );
        Ok(())
    }

    /// Release transaction backing a vault entry.
    pub fn release_of(&self, part: u8) -> Option<Hash32> {
        self.vault.get(&part).map(|v| v.release)
    }

    /// Evaluates a recorded access request. The validity window is checked
    /// at the request's own timestamp; `now` stamps the returned message.
    pub fn handle_request<R: RngCore + ?Sized>(
        &mut self,
        req: &AccessTx,
        ledger: &impl TxLookup,
        now: SimTime,
        rng: &mut R,
    ) -> Result<Outcome, ContractError> {
        let who = req.requester();
        let detail = format!(
            "tx={} obj={} i={} action={} t={}",
            Tx::Access(req.clone()).id(),
            req.obj,
            req.i,
            req.action,
            req.t
        );
        let outcome = self.evaluate(req, ledger);
        let result = match outcome {
            Some(reason) => Ok(Outcome::Denied(reason)),
            None => match self.vault.get(&req.i) {
                None => Err(ContractError::NotReleased(req.i)),
                Some(entry) => {
                    let plain = asym_decrypt(&self.delegate, &entry.sealed)?;
                    let index = EmrIndex::from_bytes(&plain)
                        .map_err(|e| DecodeError::invalid("index", e.to_string()))?;
                    let ct = asym_encrypt(&req.requester_pk, &message_plain(&index, now), rng);
                    Ok(Outcome::Granted(ct))
                }
            },
        };
        let label = match &result {
            Ok(Outcome::Granted(_)) => "granted".to_owned(),
            Ok(Outcome::Denied(r)) => format!("denied:{}", r.as_str()),
            Err(ContractError::NotReleased(_)) => "error:not-released".to_owned(),
            Err(_) => "error".to_owned(),
        };
        self.record(now, "request", who, detail, &label);
        result
    }

    /// `None` when some non-revoked grant covers the request.
    fn evaluate(&self, req: &AccessTx, ledger: &impl TxLookup) -> Option<DenyReason> {
        if !ledger.is_recorded(&Tx::Access(req.clone()).id()) {
            return Some(DenyReason::NotRecorded);
        }
        if !req.signature_valid() {
            return Some(DenyReason::BadSignature);
        }
        if req.obj != self.patient() {
            return Some(DenyReason::WrongObject);
        }
        let who = req.requester();
        if self
            .grants
            .iter()
            .any(|g| g.covers(&who, req.i, req.action, req.t))
        {
            return None;
        }
        let matching = |revoked: bool| {
            self.grants
                .iter()
                .any(|g| g.revoked == revoked && g.matches(&who, req.i, req.action))
        };
        Some(if matching(false) {
            DenyReason::OutsideWindow
        } else if matching(true) {
            DenyReason::Revoked
        } else {
            DenyReason::NoGrant
        })
    }

    pub fn log_lines(&self) -> Vec<String> {
        self.log.iter().map(ToString::to_string).collect()
    }
}

#[cfg(test)]
mod tests {
    use num_bigint::BigUint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    use super::*;
    use crate::emr::build_index;

    struct Fx {
        rng: ChaCha20Rng,
        patient: AccountKeyPair,
        user: AccountKeyPair,
        contract: Contract,
        index5: EmrIndex,
    }

    fn fx() -> Fx {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let patient = AccountKeyPair::generate(GroupProfile::Test, Role::Patient, &mut rng);
        let user = AccountKeyPair::generate(GroupProfile::Test, Role::User, &mut rng);
        let mut contract = Contract::deploy(patient.public().clone(), GroupProfile::Test, &mut rng);
        let index5 = build_index("cloud://p/5/aa", &BigUint::from(55u8), 40).unwrap();
        let release = ReleaseTx::create(&patient, &index5, 40, &mut rng);
        let sealed = asym_encrypt(contract.delegate_pk(), &index5.to_bytes(), &mut rng);
        contract.deposit(5, &release, sealed).unwrap();
        Fx {
            rng,
            patient,
            user,
            contract,
            index5,
        }
    }

    fn grant(user: &AccountKeyPair, parts: &[u8], from: u64, until: u64) -> PermissionGrant {
        PermissionGrant::new(
            user.id(),
            IndexSet::new(parts.iter().copied()).unwrap(),
            [Action::Read],
            from,
            until,
        )
        .unwrap()
    }

    fn recorded(reqs: &[&AccessTx]) -> HashSet<Hash32> {
        reqs.iter().map(|r| Tx::Access((*r).clone()).id()).collect()
    }

    #[test]
    fn covered_request_gets_index() {
        let mut f = fx();
        let g = grant(&f.user, &[5], 100, 200);
        f.contract.set_permissions(&f.patient, vec![g], 90).unwrap();
        let req = AccessTx::create(&f.user, f.patient.id(), 5, Action::Read, 150);
        let chain = recorded(&[&req]);
        let out = f
            .contract
            .handle_request(&req, &chain, 160, &mut f.rng)
            .unwrap();
        let Outcome::Granted(ct) = out else {
            panic!("expected grant, got {out:?}")
        };
        assert_eq!(open_message(&f.user, &ct).unwrap(), (f.index5.clone(), 160));
        assert!(open_message(&f.patient, &ct).is_err());
    }

    #[test]
    fn window_is_inclusive() {
        let mut f = fx();
        f.contract
            .set_permissions(&f.patient, vec![grant(&f.user, &[5], 100, 200)], 0)
            .unwrap();
        for (t, ok) in [(99, false), (100, true), (200, true), (201, false)] {
            let req = AccessTx::create(&f.user, f.patient.id(), 5, Action::Read, t);
            let chain = recorded(&[&req]);
            let out = f
                .contract
                .handle_request(&req, &chain, 300, &mut f.rng)
                .unwrap();
            assert_eq!(out.is_granted(), ok, "t={t}");
            if !ok {
                assert_eq!(out, Outcome::Denied(DenyReason::OutsideWindow));
            }
        }
    }

    #[test]
    fn revoke_denies_and_is_idempotent() {
        let mut f = fx();
        f.contract
            .set_permissions(&f.patient, vec![grant(&f.user, &[5], 0, 1000)], 0)
            .unwrap();
        f.contract.revoke(&f.patient, &f.user.id(), 10).unwrap();
        let once = f.contract.grants().to_vec();
        f.contract.revoke(&f.patient, &f.user.id(), 11).unwrap();
        assert_eq!(f.contract.grants(), once.as_slice());

        let req = AccessTx::create(&f.user, f.patient.id(), 5, Action::Read, 20);
        let chain = recorded(&[&req]);
        assert_eq!(
            f.contract
                .handle_request(&req, &chain, 30, &mut f.rng)
                .unwrap(),
            Outcome::Denied(DenyReason::Revoked)
        );

        f.contract.revoke(&f.patient, &f.patient.id(), 40).unwrap();
        let last = f.contract.execution_log().last().unwrap();
        assert_eq!(last.outcome, "warning-unknown-grantee");
        assert_eq!(f.contract.execution_log().len(), 5);
    }

    #[test]
    fn only_patient_may_change_permissions() {
        let mut f = fx();
        let g = grant(&f.user, &[5], 0, 10);
        assert_eq!(
            f.contract.set_permissions(&f.user, vec![g], 0),
            Err(ContractError::Unauthorized)
        );
        assert_eq!(
            f.contract.revoke(&f.user, &f.user.id(), 0),
            Err(ContractError::Unauthorized)
        );
        assert!(f.contract.grants().is_empty());
        assert_eq!(f.contract.execution_log().len(), 2);
    }

    #[test]
    fn overlapping_grants_union() {
        let mut f = fx();
        let a = grant(&f.user, &[1, 2], 0, 100);
        let b = grant(&f.user, &[2, 5], 50, 150);
        f.contract
            .set_permissions(&f.patient, vec![a.clone(), b.clone()], 0)
            .unwrap();
        for i in 1..=7u8 {
            for t in [0, 49, 50, 100, 101, 150, 151] {
                let req = AccessTx::create(&f.user, f.patient.id(), i, Action::Read, t);
                let chain = recorded(&[&req]);
                let expected = [&a, &b]
                    .iter()
                    .any(|g| g.parts.contains(i) && g.valid_from <= t && t <= g.valid_until);
                let got = f.contract.handle_request(&req, &chain, 200, &mut f.rng);
                match got {
                    Ok(o) => assert_eq!(o.is_granted(), expected, "i={i} t={t}"),
                    Err(ContractError::NotReleased(p)) => {
                        assert!(expected && p == i && i != 5, "i={i} t={t}")
                    }
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }

    #[test]
    fn unrecorded_or_foreign_requests_denied() {
        let mut f = fx();
        f.contract
            .set_permissions(&f.patient, vec![grant(&f.user, &[5], 0, 100)], 0)
            .unwrap();
        let req = AccessTx::create(&f.user, f.patient.id(), 5, Action::Read, 10);
        assert_eq!(
            f.contract
                .handle_request(&req, &Chain::new(), 20, &mut f.rng)
                .unwrap(),
            Outcome::Denied(DenyReason::NotRecorded)
        );
        let other = AccessTx::create(&f.user, f.user.id(), 5, Action::Read, 10);
        let chain = recorded(&[&other]);
        assert_eq!(
            f.contract
                .handle_request(&other, &chain, 20, &mut f.rng)
                .unwrap(),
            Outcome::Denied(DenyReason::WrongObject)
        );
        let write = AccessTx::create(&f.user, f.patient.id(), 5, Action::Write, 10);
        let chain = recorded(&[&write]);
        assert_eq!(
            f.contract
                .handle_request(&write, &chain, 20, &mut f.rng)
                .unwrap(),
            Outcome::Denied(DenyReason::NoGrant)
        );
    }

    #[test]
    fn deposit_checks_digest() {
        let mut f = fx();
        let idx = build_index("cloud://p/3/bb", &BigUint::from(3u8), 50).unwrap();
        let release = ReleaseTx::create(&f.patient, &idx, 50, &mut f.rng);
        let wrong = build_index("cloud://p/3/cc", &BigUint::from(3u8), 50).unwrap();
        let sealed = asym_encrypt(f.contract.delegate_pk(), &wrong.to_bytes(), &mut f.rng);
        assert_eq!(
            f.contract.deposit(3, &release, sealed),
            Err(ContractError::Tx(TxError::HashMismatch))
        );
        let foreign = ReleaseTx::create(&f.user, &idx, 50, &mut f.rng);
        let sealed = asym_encrypt(f.contract.delegate_pk(), &idx.to_bytes(), &mut f.rng);
        assert_eq!(
            f.contract.deposit(3, &foreign, sealed),
            Err(ContractError::ForeignRelease)
        );
        assert_eq!(f.contract.released_parts(), vec![5]);
    }
}
