//! Content extraction signatures over a prime-order group.
//!
//! A doctor signs a seven-part record once ([`sign`]); the patient may later
//! drop any parts outside the mandatory set and hand out an
//! [`ExtractedSignature`] that still verifies over the parts kept
//! ([`extract`], [`verify_extracted`]). Each part `i` carries its own
//! ElGamal-style component `δ_i = (h_i - a·r)·k⁻¹ mod (p-1)` under one shared
//! nonce `k`, and verifies as `v^r · r^δ_i ≡ g^h_i (mod p)`.
//!
//! Because every part shares `k`, two parts of one signature leak the private
//! exponent; see [`recover_private_exponent`].

mod index_set;
mod nonce_reuse;
mod record;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::One;
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::DecodeError;
use crate::group::{gcd, mod_inv, mod_sub, GroupParams, ParamError};

pub use index_set::{Ceas, IndexSet};
pub use nonce_reuse::recover_private_exponent;

/// Number of submessages in a record.
pub const PARTS: usize = 7;
/// Tag width in bytes (80 bits).
pub const TAG_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CesError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("submessage index {0} outside [1, 7]")]
    IndexOutOfRange(u8),
    #[error("expected {PARTS} submessages, got {0}")]
    Arity(usize),
    #[error("extraction set {chosen} omits mandatory indices {missing}")]
    ExtractionPolicy { chosen: IndexSet, missing: IndexSet },
    #[error("mandatory index set is empty")]
    EmptyCeas,
    #[error("full signature does not verify")]
    InvalidSignature,
    #[error("malformed signature record: {0}")]
    Decode(#[from] DecodeError),
}

/// Random 80-bit CES tag `T`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CesTag([u8; TAG_LEN]);

impl CesTag {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; TAG_LEN];
        rng.fill_bytes(&mut bytes);
        CesTag(bytes)
    }

    pub const fn from_bytes(bytes: [u8; TAG_LEN]) -> Self {
        CesTag(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; TAG_LEN] {
        &self.0
    }
}

impl fmt::Debug for CesTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CesTag({})", hex::encode(self.0))
    }
}

/// Signer key pair: private exponent `a`, public value `v = g^a mod p`.
#[derive(Clone, PartialEq, Eq)]
pub struct CesKeyPair {
    public: CesPublicKey,
    a: BigUint,
}

impl fmt::Debug for CesKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CesKeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// `PK = {p, g, v}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CesPublicKey {
    pub params: GroupParams,
    pub v: BigUint,
}

impl CesKeyPair {
    pub fn public(&self) -> &CesPublicKey {
        &self.public
    }

    pub fn params(&self) -> &GroupParams {
        &self.public.params
    }

    pub fn private_exponent(&self) -> &BigUint {
        &self.a
    }
}

pub fn keygen<R: RngCore + ?Sized>(params: &GroupParams, rng: &mut R) -> CesKeyPair {
    let a = params.random_exponent(rng);
    keygen_with_exponent(params, a).expect("sampled exponent is in range")
}

/// Key pair for a caller-chosen exponent; `a` must lie in `[1, p-2]`.
pub fn keygen_with_exponent(params: &GroupParams, a: BigUint) -> Result<CesKeyPair, CesError> {
    if a < BigUint::one() || &a >= params.order() {
        return Err(ParamError::ExponentOutOfRange.into());
    }
    let v = params.gen_pow(&a);
    Ok(CesKeyPair {
        public: CesPublicKey {
            params: params.clone(),
            v,
        },
        a,
    })
}

/// Byte string hashed for position `i`: `len(m_i) ‖ m_i ‖ CEAS ‖ T ‖ i`.
pub fn submessage_preimage(m_i: &[u8], ceas: Ceas, tag: &CesTag, i: u8) -> Vec<u8> {
    let ceas = ceas.encoding();
    let mut out = Vec::with_capacity(8 + m_i.len() + ceas.len() + TAG_LEN + 1);
    out.extend_from_slice(&(m_i.len() as u64).to_be_bytes());
    out.extend_from_slice(m_i);
    out.extend_from_slice(ceas.as_bytes());
    out.extend_from_slice(tag.as_bytes());
    out.push(i);
    out
}

/// `h_i = H(M_i ‖ CEAS ‖ T ‖ i)` reduced into Z_p.
pub fn hash_submessage(
    params: &GroupParams,
    m_i: &[u8],
    ceas: Ceas,
    tag: &CesTag,
    i: u8,
) -> Result<BigUint, CesError> {
    index_set::check_index(i)?;
    let digest = Sha256::digest(submessage_preimage(m_i, ceas, tag, i));
    Ok(BigUint::from_bytes_be(&digest) % params.p())
}

/// Signature over all seven parts (`δ_Full`, with `r` carried explicitly).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullSignature {
    pub ceas: Ceas,
    pub tag: CesTag,
    pub r: BigUint,
    pub deltas: [BigUint; PARTS],
}

impl FullSignature {
    pub fn delta(&self, i: u8) -> Option<&BigUint> {
        index_set::check_index(i).ok()?;
        Some(&self.deltas[i as usize - 1])
    }
}

/// Signature over the kept parts `CI(M')` (`δ_Ext`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractedSignature {
    pub ceas: Ceas,
    pub ci: IndexSet,
    pub tag: CesTag,
    pub r: BigUint,
    pub deltas: BTreeMap<u8, BigUint>,
}

/// Kept parts of a record keyed by position.
pub type Submessages = BTreeMap<u8, Vec<u8>>;

/// `δ = (h - a·r)·k⁻¹ mod (p-1)`.
pub fn delta_for_digest(
    params: &GroupParams,
    a: &BigUint,
    r: &BigUint,
    k_inv: &BigUint,
    h: &BigUint,
) -> BigUint {
    let n = params.order();
    let ar = (a * r) % n;
    (mod_sub(h, &ar, n) * k_inv) % n
}

/// `v^r · r^δ ≡ g^h (mod p)`.
pub fn congruence_holds(
    params: &GroupParams,
    v: &BigUint,
    r: &BigUint,
    delta: &BigUint,
    h: &BigUint,
) -> bool {
    let lhs = params.mul(&params.pow(v, r), &params.pow(r, delta));
    lhs == params.gen_pow(h)
}

fn check_arity<M: AsRef<[u8]>>(m: &[M]) -> Result<(), CesError> {
    if m.len() == PARTS {
        Ok(())
    } else {
        Err(CesError::Arity(m.len()))
    }
}

/// Signs all seven parts under a fresh nonce drawn from `rng`.
pub fn sign<M: AsRef<[u8]>, R: RngCore + ?Sized>(
    sk: &CesKeyPair,
    m: &[M],
    ceas: Ceas,
    tag: CesTag,
    rng: &mut R,
) -> Result<FullSignature, CesError> {
    let params = sk.params().clone();
    sign_with_nonces(sk, m, ceas, tag, || params.random_exponent(rng))
}

/// Signs with nonces pulled from `next_nonce`, discarding candidates not
/// invertible modulo `p-1` (or outside `[1, p-2]`).
pub fn sign_with_nonces<M: AsRef<[u8]>>(
    sk: &CesKeyPair,
    m: &[M],
    ceas: Ceas,
    tag: CesTag,
    mut next_nonce: impl FnMut() -> BigUint,
) -> Result<FullSignature, CesError> {
    check_arity(m)?;
    let params = sk.params();
    let n = params.order();
    let (k, k_inv) = loop {
        let k = next_nonce();
        if k < BigUint::one() || &k >= n || !gcd(&k, n).is_one() {
            continue;
        }
        let k_inv = mod_inv(&k, n).expect("gcd(k, p-1) = 1");
        break (k, k_inv);
    };
    let r = params.gen_pow(&k);
    let mut deltas: [BigUint; PARTS] = Default::default();
    for (slot, (i, m_i)) in deltas.iter_mut().zip((1u8..).zip(m)) {
        let h = hash_submessage(params, m_i.as_ref(), ceas, &tag, i)?;
        *slot = delta_for_digest(params, &sk.a, &r, &k_inv, &h);
    }
    Ok(FullSignature {
        ceas,
        tag,
        r,
        deltas,
    })
}

fn well_formed_components<'a>(
    params: &GroupParams,
    r: &BigUint,
    deltas: impl IntoIterator<Item = &'a BigUint>,
) -> bool {
    params.is_unit(r) && deltas.into_iter().all(|d| d < params.order())
}

pub fn verify_full<M: AsRef<[u8]>>(pk: &CesPublicKey, m: &[M], sig: &FullSignature) -> bool {
    let params = &pk.params;
    if m.len() != PARTS || !well_formed_components(params, &sig.r, &sig.deltas) {
        return false;
    }
    let vr = params.pow(&pk.v, &sig.r);
    (1u8..).zip(m).zip(&sig.deltas).all(|((i, m_i), delta)| {
        let Ok(h) = hash_submessage(params, m_i.as_ref(), sig.ceas, &sig.tag, i) else {
            return false;
        };
        params.mul(&vr, &params.pow(&sig.r, delta)) == params.gen_pow(&h)
    })
}

/// Keeps the parts in `chosen` and their signature components.
pub fn extract<M: AsRef<[u8]>>(
    pk: &CesPublicKey,
    m: &[M],
    sig: &FullSignature,
    chosen: &[u8],
) -> Result<(Submessages, ExtractedSignature), CesError> {
    check_arity(m)?;
    let ci = IndexSet::new(chosen.iter().copied())?;
    let mandatory = sig.ceas.indices();
    if !mandatory.is_subset(ci) {
        return Err(CesError::ExtractionPolicy {
            chosen: ci,
            missing: mandatory.difference(ci),
        });
    }
    if !verify_full(pk, m, sig) {
        return Err(CesError::InvalidSignature);
    }
    let kept = ci
        .iter()
        .map(|i| (i, m[i as usize - 1].as_ref().to_vec()))
        .collect();
    let deltas = ci
        .iter()
        .map(|i| (i, sig.deltas[i as usize - 1].clone()))
        .collect();
    Ok((
        kept,
        ExtractedSignature {
            ceas: sig.ceas,
            ci,
            tag: sig.tag,
            r: sig.r.clone(),
            deltas,
        },
    ))
}

pub fn verify_extracted(
    pk: &CesPublicKey,
    m_prime: &Submessages,
    esig: &ExtractedSignature,
) -> bool {
    let params = &pk.params;
    if !esig.ceas.indices().is_subset(esig.ci) {
        return false;
    }
    let keys_match = |keys: &mut dyn Iterator<Item = u8>| keys.eq(esig.ci.iter());
    if !keys_match(&mut m_prime.keys().copied()) || !keys_match(&mut esig.deltas.keys().copied()) {
        return false;
    }
    if !well_formed_components(params, &esig.r, esig.deltas.values()) {
        return false;
    }
    let vr = params.pow(&pk.v, &esig.r);
    esig.ci.iter().all(|i| {
        let Ok(h) = hash_submessage(params, &m_prime[&i], esig.ceas, &esig.tag, i) else {
            return false;
        };
        params.mul(&vr, &params.pow(&esig.r, &esig.deltas[&i])) == params.gen_pow(&h)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    fn small() -> GroupParams {
        GroupParams::new(big(23), big(5)).unwrap()
    }

    fn record() -> Vec<Vec<u8>> {
        [
            "Alice Doe",
            "F",
            "47",
            "ID-5521",
            "asthma since 2009",
            "FEV1 71%",
            "salbutamol 100ug prn",
        ]
        .iter()
        .map(|s| s.as_bytes().to_vec())
        .collect()
    }

    fn ceas235() -> Ceas {
        Ceas::from_indices([2, 3, 5]).unwrap()
    }

    #[test]
    fn keygen_examples() {
        let params = small();
        assert_eq!(
            keygen_with_exponent(&params, big(6)).unwrap().public().v,
            big(8)
        );
        assert_eq!(
            keygen_with_exponent(&params, big(1)).unwrap().public().v,
            big(5)
        );
        assert_eq!(
            keygen_with_exponent(&params, big(22)),
            Err(CesError::Params(ParamError::ExponentOutOfRange))
        );
        assert!(keygen_with_exponent(&params, big(0)).is_err());
    }

    #[test]
    fn worked_delta() {
        let params = small();
        let k_inv = mod_inv(&big(3), params.order()).unwrap();
        assert_eq!(k_inv, big(15));
        let r = params.gen_pow(&big(3));
        assert_eq!(r, big(10));
        let delta = delta_for_digest(&params, &big(6), &r, &k_inv, &big(7));
        assert_eq!(delta, big(19));
        assert!(congruence_holds(&params, &big(8), &r, &delta, &big(7)));
        assert_eq!(params.gen_pow(&big(7)), big(17));
    }

    #[test]
    fn non_invertible_nonce_is_skipped() {
        let params = small();
        let sk = keygen_with_exponent(&params, big(6)).unwrap();
        let mut candidates = vec![big(3), big(11)];
        let sig = sign_with_nonces(
            &sk,
            &record(),
            ceas235(),
            CesTag::from_bytes([1; 10]),
            || candidates.pop().unwrap(),
        )
        .unwrap();
        // 11 is tried first and rejected because gcd(11, 22) = 11.
        assert_eq!(sig.r, big(10));
        assert!(candidates.is_empty());
        assert!(verify_full(sk.public(), &record(), &sig));
    }

    #[test]
    fn hash_depends_on_position_and_tag() {
        let params = crate::group::GroupProfile::Test.params();
        let tag_a = CesTag::from_bytes([7; 10]);
        let tag_b = CesTag::from_bytes([8; 10]);
        let h = |tag: &CesTag, i| hash_submessage(params, b"same", ceas235(), tag, i).unwrap();
        assert_eq!(h(&tag_a, 2), h(&tag_a, 2));
        assert_ne!(h(&tag_a, 2), h(&tag_a, 3));
        assert_ne!(h(&tag_a, 2), h(&tag_b, 2));
        assert_eq!(
            hash_submessage(params, b"x", ceas235(), &tag_a, 8),
            Err(CesError::IndexOutOfRange(8))
        );
    }

    #[test]
    fn arity_checked() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let params = crate::group::GroupProfile::Test.params();
        let sk = keygen(params, &mut rng);
        let six = &record()[..6];
        assert_eq!(
            sign(&sk, six, ceas235(), CesTag::random(&mut rng), &mut rng),
            Err(CesError::Arity(6))
        );
    }

    #[test]
    fn sign_verify_and_tamper() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let params = crate::group::GroupProfile::Test.params();
        let sk = keygen(params, &mut rng);
        let m = record();
        let sig = sign(&sk, &m, ceas235(), CesTag::random(&mut rng), &mut rng).unwrap();
        assert!(verify_full(sk.public(), &m, &sig));

        let mut flipped = m.clone();
        flipped[3][0] ^= 1;
        assert!(!verify_full(sk.public(), &flipped, &sig));

        let mut bumped = sig.clone();
        bumped.deltas[1] = (&bumped.deltas[1] + 1u32) % params.order();
        assert!(!verify_full(sk.public(), &m, &bumped));
    }

    #[test]
    fn extraction_rules() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let params = crate::group::GroupProfile::Test.params();
        let sk = keygen(params, &mut rng);
        let m = record();
        let sig = sign(&sk, &m, ceas235(), CesTag::random(&mut rng), &mut rng).unwrap();

        let (kept, esig) = extract(sk.public(), &m, &sig, &[2, 3, 5]).unwrap();
        assert_eq!(kept.keys().copied().collect::<Vec<_>>(), vec![2, 3, 5]);
        assert!(verify_extracted(sk.public(), &kept, &esig));

        let (kept, esig) = extract(sk.public(), &m, &sig, &[1, 2, 3, 4, 5, 6, 7]).unwrap();
        assert_eq!(
            esig.deltas.values().cloned().collect::<Vec<_>>(),
            sig.deltas.to_vec()
        );
        assert!(verify_extracted(sk.public(), &kept, &esig));

        assert!(matches!(
            extract(sk.public(), &m, &sig, &[2, 3]),
            Err(CesError::ExtractionPolicy { .. })
        ));
        assert_eq!(
            extract(sk.public(), &m, &sig, &[2, 3, 5, 9]),
            Err(CesError::IndexOutOfRange(9))
        );

        // Hand-built signature over {1, 4} misses the mandatory parts.
        let forged = ExtractedSignature {
            ceas: sig.ceas,
            ci: IndexSet::new([1, 4]).unwrap(),
            tag: sig.tag,
            r: sig.r.clone(),
            deltas: [(1, sig.deltas[0].clone()), (4, sig.deltas[3].clone())].into(),
        };
        let parts: Submessages = [(1, m[0].clone()), (4, m[3].clone())].into();
        assert!(!verify_extracted(sk.public(), &parts, &forged));

        let (mut kept, esig) = extract(sk.public(), &m, &sig, &[2, 3, 5, 6]).unwrap();
        kept.insert(6, b"different".to_vec());
        assert!(!verify_extracted(sk.public(), &kept, &esig));
    }

    #[test]
    fn extract_requires_valid_full_signature() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let params = crate::group::GroupProfile::Test.params();
        let sk = keygen(params, &mut rng);
        let m = record();
        let mut sig = sign(&sk, &m, ceas235(), CesTag::random(&mut rng), &mut rng).unwrap();
        sig.deltas[6] = BigUint::one();
        assert_eq!(
            extract(sk.public(), &m, &sig, &[2, 3, 5]),
            Err(CesError::InvalidSignature)
        );
    }
}
