//! Emulated cloud storage with policy-gated document keys.
//!
//! Each stored part is encrypted under a fresh document key `k_i`. The store
//! acts as the reference monitor standing in for attribute-based encryption:
//! `k_i` is sealed together with its policy under a key only the store holds,
//! and is unsealed only for attribute sets that satisfy that policy. Every
//! store and retrieval attempt is appended to the access log.

mod policy;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use rand::RngCore;
use thiserror::Error;

use crate::account::AccountId;
use crate::ces::{CesTag, ExtractedSignature, TAG_LEN};
use crate::codec::{DecodeError, Reader, Writer};
use crate::sim::SimTime;
use crate::sym::{CryptoError, SymKey, KEY_LEN};

pub use policy::{policy_satisfies, AccessPolicy, AttributeSet, PolicyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CloudError {
    #[error("no object stored at {0}")]
    NotFound(String),
    #[error("attributes do not satisfy the object's policy")]
    AccessDenied,
    #[error("stored object failed authentication: {0}")]
    Integrity(#[from] CryptoError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("attribute key holds no attributes")]
    EmptyAttributes,
    #[error("clock moved backward: {now} < {last}")]
    ClockRegression { now: SimTime, last: SimTime },
    #[error("malformed stored object: {0}")]
    Decode(#[from] DecodeError),
}

/// Attribute set bound to an account, the retrieval credential.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeKey {
    holder: AccountId,
    attributes: AttributeSet,
}

impl AttributeKey {
    pub fn new<I, S>(holder: AccountId, attributes: I) -> Result<Self, CloudError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let attributes: AttributeSet = attributes.into_iter().map(Into::into).collect();
        if attributes.is_empty() {
            return Err(CloudError::EmptyAttributes);
        }
        Ok(AttributeKey { holder, attributes })
    }

    pub fn holder(&self) -> &AccountId {
        &self.holder
    }

    pub fn attributes(&self) -> &AttributeSet {
        &self.attributes
    }
}

/// `k_i` sealed with its policy under the store's key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedKey {
    pub policy: AccessPolicy,
    pub sealed: Vec<u8>,
}

/// `{E_ki(M_i ‖ h_i ‖ T), E'_A(k_i), δ_Ext}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredTriple {
    pub data_ct: Vec<u8>,
    pub wrapped_key: WrappedKey,
    pub esig: ExtractedSignature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Retrieved {
    pub m_i: Vec<u8>,
    pub h_i: BigUint,
    pub tag: CesTag,
    pub esig: ExtractedSignature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessAction {
    Store,
    RetrieveGranted,
    RetrieveDenied,
}

impl AccessAction {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessAction::Store => "store",
            AccessAction::RetrieveGranted => "retrieve-granted",
            AccessAction::RetrieveDenied => "retrieve-denied",
        }
    }
}

/// One access record. Entries are strictly ordered by `(t, seq)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessLogEntry {
    pub t: SimTime,
    pub seq: u64,
    pub actor: AccountId,
    pub url: String,
    pub action: AccessAction,
}

impl fmt::Display for AccessLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.t,
            self.seq,
            self.actor,
            self.action.as_str(),
            self.url
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct LogFilter {
    pub actor: Option<AccountId>,
    pub url: Option<String>,
    pub from: Option<SimTime>,
    pub until: Option<SimTime>,
}

impl LogFilter {
    pub fn matches(&self, e: &AccessLogEntry) -> bool {
        self.actor.as_ref().is_none_or(|a| a == &e.actor)
            && self.url.as_ref().is_none_or(|u| u == &e.url)
            && self.from.is_none_or(|t| e.t >= t)
            && self.until.is_none_or(|t| e.t <= t)
    }
}

pub struct CloudStore {
    monitor_key: SymKey,
    objects: BTreeMap<String, StoredTriple>,
    log: Vec<AccessLogEntry>,
}

impl fmt::Debug for CloudStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CloudStore")
            .field("objects", &self.objects.len())
            .field("log", &self.log.len())
            .finish()
    }
}

fn encode_plain(m_i: &[u8], h_i: &BigUint, tag: &CesTag) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(m_i).biguint(h_i).fixed(tag.as_bytes());
    w.finish()
}

fn decode_plain(bytes: &[u8]) -> Result<(Vec<u8>, BigUint, CesTag), DecodeError> {
    let mut r = Reader::new(bytes);
    let m = r.bytes("part")?.to_vec();
    let h = r.biguint("digest")?;
    let tag = CesTag::from_bytes(r.fixed::<TAG_LEN>("tag")?);
    r.finish()?;
    Ok((m, h, tag))
}

impl CloudStore {
    pub fn new<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        CloudStore {
            monitor_key: SymKey::random(rng),
            objects: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    fn append_log(&mut self, now: SimTime, actor: &AccountId, url: &str, action: AccessAction) {
        let seq = self.log.len() as u64;
        self.log.push(AccessLogEntry {
            t: now,
            seq,
            actor: actor.clone(),
            url: url.to_owned(),
            action,
        });
    }

    fn check_clock(&self, now: SimTime) -> Result<(), CloudError> {
        match self.log.last() {
            Some(last) if now < last.t => Err(CloudError::ClockRegression { now, last: last.t }),
            _ => Ok(()),
        }
    }

    /// Encrypts one part under a fresh key, seals the key under `policy`
    /// and returns the new object's url.
    #[allow(clippy::too_many_arguments)]
    pub fn store<R: RngCore + ?Sized>(
        &mut self,
        owner: &AccountId,
        part: u8,
        m_i: &[u8],
        h_i: &BigUint,
        tag: &CesTag,
        policy: &AccessPolicy,
        esig: &ExtractedSignature,
        rng: &mut R,
        now: SimTime,
    ) -> Result<String, CloudError> {
        policy.validate()?;
        self.check_clock(now)?;
        let k_i = SymKey::random(rng);
        let data_ct = k_i.seal(&encode_plain(m_i, h_i, tag), rng);
        let mut wrap = Writer::new();
        wrap.bytes(policy.to_string().as_bytes())
            .fixed(k_i.as_bytes());
        let sealed = self.monitor_key.seal(wrap.as_slice(), rng);

        let url = loop {
            let url = format!("cloud://{owner}/{part}/{:016x}", rng.next_u64());
            if !self.objects.contains_key(&url) {
                break url;
            }
        };
        self.objects.insert(
            url.clone(),
            StoredTriple {
                data_ct,
                wrapped_key: WrappedKey {
                    policy: policy.clone(),
                    sealed,
                },
                esig: esig.clone(),
            },
        );
        self.append_log(now, owner, &url, AccessAction::Store);
        Ok(url)
    }

    /// Releases the part at `url` if `key` satisfies its policy. Every call
    /// is logged once, as granted only when plaintext is returned.
    pub fn retrieve(
        &mut self,
        url: &str,
        key: &AttributeKey,
        now: SimTime,
    ) -> Result<Retrieved, CloudError> {
        self.check_clock(now)?;
        let result = self.open(url, key);
        let action = if result.is_ok() {
            AccessAction::RetrieveGranted
        } else {
            AccessAction::RetrieveDenied
        };
        self.append_log(now, key.holder(), url, action);
        result
    }

    fn open(&self, url: &str, key: &AttributeKey) -> Result<Retrieved, CloudError> {
        let triple = self
            .objects
            .get(url)
            .ok_or_else(|| CloudError::NotFound(url.to_owned()))?;
        if !triple.wrapped_key.policy.is_satisfied_by(key.attributes()) {
            return Err(CloudError::AccessDenied);
        }
        let unwrapped = self.monitor_key.open(&triple.wrapped_key.sealed)?;
        let mut r = Reader::new(&unwrapped);
        let bound_policy = r.bytes("policy")?;
        let k_i = SymKey::from_bytes(r.fixed::<KEY_LEN>("document key")?);
        r.finish()?;
        // A policy swapped in storage no longer matches the sealed copy.
        if bound_policy != triple.wrapped_key.policy.to_string().as_bytes() {
            return Err(CryptoError::Authentication.into());
        }
        let (m_i, h_i, tag) = decode_plain(&k_i.open(&triple.data_ct)?)?;
        Ok(Retrieved {
            m_i,
            h_i,
            tag,
            esig: triple.esig.clone(),
        })
    }

    pub fn get(&self, url: &str) -> Option<&StoredTriple> {
        self.objects.get(url)
    }

    /// Direct access to stored bytes, for fault injection.
    pub fn get_mut(&mut self, url: &str) -> Option<&mut StoredTriple> {
        self.objects.get_mut(url)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn audit_log(&self, filter: &LogFilter) -> Vec<&AccessLogEntry> {
        self.log.iter().filter(|e| filter.matches(e)).collect()
    }

    pub fn log(&self) -> &[AccessLogEntry] {
        &self.log
    }

    /// One line per object: `url policy_hex data_hex sealed_hex esig_hex`.
    pub fn dump_lines(&self) -> Vec<String> {
        self.objects
            .iter()
            .map(|(url, t)| {
                format!(
                    "{url} policy={} data={} key={} esig={}",
                    hex::encode(t.wrapped_key.policy.to_string()),
                    hex::encode(&t.data_ct),
                    hex::encode(&t.wrapped_key.sealed),
                    t.esig.to_hex()
                )
            })
            .collect()
    }

    pub fn log_lines(&self) -> Vec<String> {
        self.log.iter().map(ToString::to_string).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::account::{AccountKeyPair, Role};
    use crate::ces::{extract, keygen, sign, Ceas};
    use crate::group::GroupProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        rng: ChaCha20Rng,
        store: CloudStore,
        owner: AccountId,
        reader: AccountId,
        esig: ExtractedSignature,
        tag: CesTag,
    }

    fn fixture() -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let params = GroupProfile::Test.params();
        let ces = keygen(params, &mut rng);
        let m: Vec<Vec<u8>> = (1..=7u8).map(|i| vec![b'a' + i; 4]).collect();
        let tag = CesTag::random(&mut rng);
        let sig = sign(
            &ces,
            &m,
            Ceas::from_indices([2, 3, 5]).unwrap(),
            tag,
            &mut rng,
        )
        .unwrap();
        let (_, esig) = extract(ces.public(), &m, &sig, &[2, 3, 5]).unwrap();
        let owner = AccountKeyPair::generate(GroupProfile::Test, Role::Patient, &mut rng).id();
        let reader = AccountKeyPair::generate(GroupProfile::Test, Role::User, &mut rng).id();
        Fixture {
            store: CloudStore::new(&mut rng),
            rng,
            owner,
            reader,
            esig,
            tag,
        }
    }

    fn store_one(f: &mut Fixture, policy: &str, now: SimTime) -> String {
        let policy = AccessPolicy::parse(policy).unwrap();
        f.store
            .store(
                &f.owner,
                2,
                b"F",
                &BigUint::from(77u8),
                &f.tag,
                &policy,
                &f.esig,
                &mut f.rng,
                now,
            )
            .unwrap()
    }

    #[test]
    fn round_trip_and_gate() {
        let mut f = fixture();
        let url = store_one(&mut f, "cardiology AND researcher", 10);
        assert!(url.starts_with(&format!("cloud://{}/2/", f.owner)));
        assert_eq!(f.store.get(&url).unwrap().esig, f.esig);

        let good = AttributeKey::new(f.reader.clone(), ["cardiology", "researcher"]).unwrap();
        let got = f.store.retrieve(&url, &good, 20).unwrap();
        assert_eq!(
            (got.m_i.as_slice(), got.h_i.clone(), got.tag),
            (&b"F"[..], BigUint::from(77u8), f.tag)
        );
        assert_eq!(got.esig, f.esig);

        let weak = AttributeKey::new(f.reader.clone(), ["cardiology"]).unwrap();
        assert_eq!(
            f.store.retrieve(&url, &weak, 30),
            Err(CloudError::AccessDenied)
        );
        assert_eq!(
            f.store.retrieve("cloud://nope", &good, 40),
            Err(CloudError::NotFound("cloud://nope".into()))
        );
        let actions: Vec<_> = f.store.log().iter().map(|e| e.action).collect();
        assert_eq!(
            actions,
            vec![
                AccessAction::Store,
                AccessAction::RetrieveGranted,
                AccessAction::RetrieveDenied,
                AccessAction::RetrieveDenied
            ]
        );
    }

    #[test]
    fn identical_plaintexts_get_distinct_objects() {
        let mut f = fixture();
        let a = store_one(&mut f, "x", 1);
        let b = store_one(&mut f, "x", 2);
        assert_ne!(a, b);
        let (ta, tb) = (f.store.get(&a).unwrap(), f.store.get(&b).unwrap());
        assert_ne!(ta.data_ct, tb.data_ct);
        assert_ne!(ta.wrapped_key.sealed, tb.wrapped_key.sealed);
    }

    #[test]
    fn corrupted_ciphertext_fails_closed() {
        let mut f = fixture();
        let url = store_one(&mut f, "x", 1);
        let key = AttributeKey::new(f.reader.clone(), ["x"]).unwrap();
        f.store.get_mut(&url).unwrap().data_ct[14] ^= 0x40;
        assert_eq!(
            f.store.retrieve(&url, &key, 2),
            Err(CloudError::Integrity(CryptoError::Authentication))
        );
    }

    #[test]
    fn swapped_policy_detected() {
        let mut f = fixture();
        let url = store_one(&mut f, "admin", 1);
        f.store.get_mut(&url).unwrap().wrapped_key.policy = AccessPolicy::attr("anyone");
        let key = AttributeKey::new(f.reader.clone(), ["anyone"]).unwrap();
        assert!(matches!(
            f.store.retrieve(&url, &key, 2),
            Err(CloudError::Integrity(_))
        ));
    }

    #[test]
    fn log_filter_and_ordering() {
        let mut f = fixture();
        assert!(f.store.audit_log(&LogFilter::default()).is_empty());
        let url = store_one(&mut f, "x", 5);
        let denied = AttributeKey::new(f.reader.clone(), ["y"]).unwrap();
        let _ = f.store.retrieve(&url, &denied, 5);
        let all = f.store.audit_log(&LogFilter::default());
        assert_eq!(all.len(), 2);
        assert!(all
            .windows(2)
            .all(|w| (w[0].t, w[0].seq) < (w[1].t, w[1].seq)));
        let by_reader = f.store.audit_log(&LogFilter {
            actor: Some(f.reader.clone()),
            ..Default::default()
        });
        assert_eq!(by_reader.len(), 1);
        assert_eq!(by_reader[0].action, AccessAction::RetrieveDenied);
        assert!(matches!(
            f.store.retrieve(&url, &denied, 4),
            Err(CloudError::ClockRegression { .. })
        ));
        assert_eq!(f.store.dump_lines().len(), 1);
    }

    #[test]
    fn empty_attribute_key_rejected() {
        let f = fixture();
        assert_eq!(
            AttributeKey::new(f.reader, Vec::<String>::new()),
            Err(CloudError::EmptyAttributes)
        );
    }
}
