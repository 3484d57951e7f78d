//! Account keys used for every encryption and signature outside the
//! extraction-signature scheme.
//!
//! Keys live in one of the [`GroupProfile`] groups. Encryption is hybrid:
//! an ephemeral Diffie-Hellman share `c1 = g^y` derives an AES-256-GCM key
//! from `pk^y`. Signatures are Schnorr `(R, s)` with `g^s = R·pk^e` and a
//! nonce derived from the secret and the message, so signing needs no
//! randomness.

use std::fmt;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::group::{GroupParams, GroupProfile};
use crate::sym::{CryptoError, SymKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Patient,
    Doctor,
    User,
    Node,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Patient => "patient",
            Role::Doctor => "doctor",
            Role::User => "user",
            Role::Node => "node",
        }
    }
}

/// Pseudonymous account identifier: a truncated hash of the public key.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccountId(String);

impl AccountId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts exactly the 16-hex-digit form produced from keys.
    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 16
            && s.bytes()
                .all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()))
        .then(|| AccountId(s.to_owned()))
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AccountId({})", self.0)
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct AccountPublicKey {
    profile: GroupProfile,
    y: BigUint,
}

impl fmt::Debug for AccountPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AccountPublicKey({})", self.id())
    }
}

impl AccountPublicKey {
    pub fn params(&self) -> &'static GroupParams {
        self.profile.params()
    }

    pub fn profile(&self) -> GroupProfile {
        self.profile
    }

    pub fn element(&self) -> &BigUint {
        &self.y
    }

    pub fn id(&self) -> AccountId {
        let digest = Sha256::digest(self.to_bytes());
        AccountId(hex::encode(&digest[..8]))
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u8(profile_code(self.profile)).biguint(&self.y);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let profile = match r.u8("key profile")? {
            0 => GroupProfile::Test,
            1 => GroupProfile::Production,
            other => return Err(DecodeError::invalid("key profile", other.to_string())),
        };
        let y = r.biguint("public key")?;
        if !profile.params().is_unit(&y) {
            return Err(DecodeError::invalid("public key", "not a group element"));
        }
        Ok(AccountPublicKey { profile, y })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let pk = Self::decode(&mut r)?;
        r.finish()?;
        Ok(pk)
    }
}

fn profile_code(p: GroupProfile) -> u8 {
    match p {
        GroupProfile::Test => 0,
        GroupProfile::Production => 1,
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct AccountKeyPair {
    pk: AccountPublicKey,
    sk: BigUint,
    role: Role,
}

impl fmt::Debug for AccountKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AccountKeyPair({:?}, {})", self.role, self.pk.id())
    }
}

impl AccountKeyPair {
    pub fn generate<R: RngCore + ?Sized>(profile: GroupProfile, role: Role, rng: &mut R) -> Self {
        let params = profile.params();
        let sk = params.random_exponent(rng);
        let y = params.gen_pow(&sk);
        AccountKeyPair {
            pk: AccountPublicKey { profile, y },
            sk,
            role,
        }
    }

    pub fn public(&self) -> &AccountPublicKey {
        &self.pk
    }

    pub fn id(&self) -> AccountId {
        self.pk.id()
    }

    pub fn role(&self) -> Role {
        self.role
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccountError {
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("key belongs to a different group profile")]
    ProfileMismatch,
}

/// Hybrid ciphertext: ephemeral share plus AEAD body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymCiphertext {
    pub ephemeral: BigUint,
    pub body: Vec<u8>,
}

impl AsymCiphertext {
    pub fn encode(&self, w: &mut Writer) {
        w.biguint(&self.ephemeral).bytes(&self.body);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AsymCiphertext {
            ephemeral: r.biguint("ephemeral share")?,
            body: r.bytes("ciphertext body")?.to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let ct = Self::decode(&mut r)?;
        r.finish()?;
        Ok(ct)
    }
}

fn kem_key(pk: &AccountPublicKey, ephemeral: &BigUint, shared: &BigUint) -> SymKey {
    let mut w = Writer::new();
    w.fixed(b"bpds-kem");
    pk.encode(&mut w);
    w.biguint(ephemeral).biguint(shared);
    SymKey::from_bytes(Sha256::digest(w.as_slice()).into())
}

pub fn asym_encrypt<R: RngCore + ?Sized>(
    pk: &AccountPublicKey,
    plaintext: &[u8],
    rng: &mut R,
) -> AsymCiphertext {
    let params = pk.params();
    let y = params.random_exponent(rng);
    let ephemeral = params.gen_pow(&y);
    let shared = params.pow(&pk.y, &y);
    let body = kem_key(pk, &ephemeral, &shared).seal(plaintext, rng);
    AsymCiphertext { ephemeral, body }
}

pub fn asym_decrypt(sk: &AccountKeyPair, ct: &AsymCiphertext) -> Result<Vec<u8>, AccountError> {
    let params = sk.pk.params();
    if !params.is_unit(&ct.ephemeral) {
        return Err(CryptoError::Authentication.into());
    }
    let shared = params.pow(&ct.ephemeral, &sk.sk);
    Ok(kem_key(&sk.pk, &ct.ephemeral, &shared).open(&ct.body)?)
}

/// Schnorr signature `(R, s)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountSignature {
    pub commitment: BigUint,
    pub response: BigUint,
}

impl AccountSignature {
    pub fn encode(&self, w: &mut Writer) {
        w.biguint(&self.commitment).biguint(&self.response);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(AccountSignature {
            commitment: r.biguint("signature commitment")?,
            response: r.biguint("signature response")?,
        })
    }
}

/// Hash of `parts` widened past the group order, then reduced modulo `p-1`.
fn hash_to_exponent(params: &GroupParams, domain: &[u8], parts: &[&[u8]]) -> BigUint {
    let mut w = Writer::new();
    w.fixed(domain);
    for p in parts {
        w.bytes(p);
    }
    let seed = w.finish();
    let blocks = params.byte_len() / 32 + 2;
    let mut wide = Vec::with_capacity(blocks * 32);
    for counter in 0..blocks as u32 {
        let mut h = Sha256::new();
        h.update(counter.to_be_bytes());
        h.update(&seed);
        wide.extend_from_slice(&h.finalize());
    }
    BigUint::from_bytes_be(&wide) % params.order()
}

fn challenge(pk: &AccountPublicKey, commitment: &BigUint, message: &[u8]) -> BigUint {
    hash_to_exponent(
        pk.params(),
        b"bpds-schnorr-challenge",
        &[&commitment.to_bytes_be(), &pk.to_bytes(), message],
    )
}

pub fn acct_sign(sk: &AccountKeyPair, message: &[u8]) -> AccountSignature {
    let params = sk.pk.params();
    let mut k = hash_to_exponent(
        params,
        b"bpds-schnorr-nonce",
        &[&sk.sk.to_bytes_be(), message],
    );
    if k.is_zero() {
        k = BigUint::from(1u8);
    }
    let commitment = params.gen_pow(&k);
    let e = challenge(&sk.pk, &commitment, message);
    let response = (k + e * &sk.sk) % params.order();
    AccountSignature {
        commitment,
        response,
    }
}

pub fn acct_verify(pk: &AccountPublicKey, message: &[u8], sig: &AccountSignature) -> bool {
    let params = pk.params();
    if !params.is_unit(&sig.commitment) || &sig.response >= params.order() {
        return false;
    }
    let e = challenge(pk, &sig.commitment, message);
    params.gen_pow(&sig.response) == params.mul(&sig.commitment, &params.pow(&pk.y, &e))
}
