//! Medical records, the doctor-to-patient envelope, and on-chain indexes.

use std::fmt;

use num_bigint::BigUint;
use rand::RngCore;
use thiserror::Error;

use crate::account::{
    asym_decrypt, asym_encrypt, AccountError, AccountKeyPair, AccountPublicKey, AsymCiphertext,
};
use crate::ces::{Ceas, CesError, CesTag, FullSignature, IndexSet, PARTS, TAG_LEN};
use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Hash32;
use crate::sim::SimTime;
use crate::sym::{CryptoError, SymKey, KEY_LEN};

pub const PART_NAMES: [&str; PARTS] = [
    "name",
    "gender",
    "age",
    "id_number",
    "medical_history",
    "examination",
    "prescription",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmrError {
    #[error("a record has exactly {PARTS} parts, got {0}")]
    Arity(usize),
    #[error("record part {0} is empty")]
    EmptyPart(u8),
    #[error("index url must be non-empty")]
    EmptyUrl,
    #[error(transparent)]
    Account(#[from] AccountError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Signature(#[from] CesError),
}

/// Seven ordered parts: name, gender, age, id number, history, examination,
/// prescription.
#[derive(Clone, PartialEq, Eq)]
pub struct EmrDocument {
    parts: Vec<Vec<u8>>,
}

impl fmt::Debug for EmrDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmrDocument({} parts)", self.parts.len())
    }
}

impl EmrDocument {
    pub fn new(parts: Vec<Vec<u8>>) -> Result<Self, EmrError> {
        if parts.len() != PARTS {
            return Err(EmrError::Arity(parts.len()));
        }
        if let Some(i) = parts.iter().position(Vec::is_empty) {
            return Err(EmrError::EmptyPart(i as u8 + 1));
        }
        Ok(EmrDocument { parts })
    }

    pub fn parts(&self) -> &[Vec<u8>] {
        &self.parts
    }

    /// Part `i` in `1..=7`.
    pub fn part(&self, i: u8) -> Option<&[u8]> {
        self.parts
            .get((i as usize).checked_sub(1)?)
            .map(Vec::as_slice)
    }
}

/// What a doctor hands the patient: record, digests, full signature, CEAS
/// and tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoContents {
    pub emr: EmrDocument,
    pub digests: Vec<BigUint>,
    pub full_sig: FullSignature,
    pub ceas: Ceas,
    pub tag: CesTag,
}

impl InfoContents {
    fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for part in self.emr.parts() {
            w.bytes(part);
        }
        for h in &self.digests {
            w.biguint(h);
        }
        w.bytes(&self.full_sig.to_bytes());
        w.u8(self.ceas.indices().len() as u8);
        for i in self.ceas.indices().iter() {
            w.u8(i);
        }
        w.fixed(self.tag.as_bytes());
        w.finish()
    }

    fn from_bytes(bytes: &[u8]) -> Result<Self, EmrError> {
        let mut r = Reader::new(bytes);
        let parts = (0..PARTS)
            .map(|_| r.bytes("emr part").map(<[u8]>::to_vec))
            .collect::<Result<Vec<_>, _>>()?;
        let digests = (0..PARTS)
            .map(|_| r.biguint("digest"))
            .collect::<Result<Vec<_>, _>>()?;
        let full_sig = FullSignature::from_bytes(r.bytes("full signature")?)?;
        let count = r.u8("ceas")?;
        let indices = (0..count)
            .map(|_| r.u8("ceas"))
            .collect::<Result<Vec<_>, _>>()?;
        let ceas = Ceas::new(IndexSet::new(indices)?)?;
        let tag = CesTag::from_bytes(r.fixed::<TAG_LEN>("tag")?);
        r.finish()?;
        Ok(InfoContents {
            emr: EmrDocument::new(parts)?,
            digests,
            full_sig,
            ceas,
            tag,
        })
    }
}

/// `Info = {E_Kdoc(M ‖ h_1..h_7 ‖ δ_Full ‖ CEAS ‖ T), E_pk_pat(K_doc)}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoEnvelope {
    pub payload_ct: Vec<u8>,
    pub key_ct: AsymCiphertext,
}

impl InfoEnvelope {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&self.payload_ct);
        self.key_ct.encode(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let payload_ct = r.bytes("payload")?.to_vec();
        let key_ct = AsymCiphertext::decode(&mut r)?;
        r.finish()?;
        Ok(InfoEnvelope { payload_ct, key_ct })
    }
}

#[allow(clippy::too_many_arguments)]
pub fn package_info<R: RngCore + ?Sized>(
    doctor_key: &SymKey,
    patient_pk: &AccountPublicKey,
    emr: &EmrDocument,
    digests: &[BigUint],
    full_sig: &FullSignature,
    ceas: Ceas,
    tag: CesTag,
    rng: &mut R,
) -> Result<InfoEnvelope, EmrError> {
    if digests.len() != PARTS {
        return Err(EmrError::Arity(digests.len()));
    }
    let contents = InfoContents {
        emr: emr.clone(),
        digests: digests.to_vec(),
        full_sig: full_sig.clone(),
        ceas,
        tag,
    };
    let payload_ct = doctor_key.seal(&contents.to_bytes(), rng);
    let key_ct = asym_encrypt(patient_pk, doctor_key.as_bytes(), rng);
    Ok(InfoEnvelope { payload_ct, key_ct })
}

pub fn open_info(
    patient: &AccountKeyPair,
    envelope: &InfoEnvelope,
) -> Result<InfoContents, EmrError> {
    let key_bytes = asym_decrypt(patient, &envelope.key_ct)?;
    let key: [u8; KEY_LEN] = key_bytes
        .try_into()
        .map_err(|_| CryptoError::Authentication)?;
    let payload = SymKey::from_bytes(key).open(&envelope.payload_ct)?;
    InfoContents::from_bytes(&payload)
}

/// `Index_i = (url_i ‖ h_i ‖ t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmrIndex {
    pub url: String,
    pub h: BigUint,
    pub t: SimTime,
}

impl EmrIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(self.url.as_bytes()).biguint(&self.h).u64(self.t);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmrError> {
        let mut r = Reader::new(bytes);
        let url = String::from_utf8(r.bytes("url")?.to_vec())
            .map_err(|_| DecodeError::invalid("url", "not utf-8"))?;
        let h = r.biguint("digest")?;
        let t = r.u64("timestamp")?;
        r.finish()?;
        if url.is_empty() {
            return Err(EmrError::EmptyUrl);
        }
        Ok(EmrIndex { url, h, t })
    }

    /// `H(Index_i)`.
    pub fn digest(&self) -> Hash32 {
        Hash32::of(&self.to_bytes())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

pub fn build_index(url: &str, h: &BigUint, now: SimTime) -> Result<EmrIndex, EmrError> {
    if url.is_empty() {
        return Err(EmrError::EmptyUrl);
    }
    Ok(EmrIndex {
        url: url.to_owned(),
        h: h.clone(),
        t: now,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::account::Role;
    use crate::ces::{hash_submessage, keygen, sign, verify_full};
    use crate::group::GroupProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sample_emr() -> EmrDocument {
        EmrDocument::new(
            [
                "P. Roe",
                "M",
                "61",
                "ID-1",
                "hypertension",
                "BP 150/95",
                "amlodipine 5mg",
            ]
            .iter()
            .map(|s| s.as_bytes().to_vec())
            .collect(),
        )
        .unwrap()
    }

    struct Fixture {
        rng: ChaCha20Rng,
        patient: AccountKeyPair,
        envelope: InfoEnvelope,
        contents: InfoContents,
        doctor_pk: crate::ces::CesPublicKey,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = GroupProfile::Test.params();
        let ces = keygen(params, &mut rng);
        let patient = AccountKeyPair::generate(GroupProfile::Test, Role::Patient, &mut rng);
        let emr = sample_emr();
        let ceas = Ceas::from_indices([2, 3, 5]).unwrap();
        let tag = CesTag::random(&mut rng);
        let sig = sign(&ces, emr.parts(), ceas, tag, &mut rng).unwrap();
        let digests: Vec<_> = (1..=7u8)
            .map(|i| hash_submessage(params, emr.part(i).unwrap(), ceas, &tag, i).unwrap())
            .collect();
        let k_doc = SymKey::random(&mut rng);
        let envelope = package_info(
            &k_doc,
            patient.public(),
            &emr,
            &digests,
            &sig,
            ceas,
            tag,
            &mut rng,
        )
        .unwrap();
        Fixture {
            contents: InfoContents {
                emr,
                digests,
                full_sig: sig,
                ceas,
                tag,
            },
            rng,
            patient,
            envelope,
            doctor_pk: ces.public().clone(),
        }
    }

    #[test]
    fn record_shape() {
        assert_eq!(
            EmrDocument::new(vec![b"x".to_vec(); 6]),
            Err(EmrError::Arity(6))
        );
        let mut parts = vec![b"x".to_vec(); 7];
        parts[4].clear();
        assert_eq!(EmrDocument::new(parts), Err(EmrError::EmptyPart(5)));
    }

    #[test]
    fn envelope_round_trip_and_signature() {
        let f = fixture(1);
        let opened = open_info(&f.patient, &f.envelope).unwrap();
        assert_eq!(opened, f.contents);
        assert!(verify_full(
            &f.doctor_pk,
            opened.emr.parts(),
            &opened.full_sig
        ));
        let decoded = InfoEnvelope::from_bytes(&f.envelope.to_bytes()).unwrap();
        assert_eq!(decoded, f.envelope);
    }

    #[test]
    fn envelope_failures() {
        let mut f = fixture(2);
        let stranger = AccountKeyPair::generate(GroupProfile::Test, Role::Patient, &mut f.rng);
        assert!(matches!(
            open_info(&stranger, &f.envelope),
            Err(EmrError::Account(_))
        ));

        let mut truncated = f.envelope.clone();
        truncated.payload_ct.pop();
        assert_eq!(
            open_info(&f.patient, &truncated),
            Err(EmrError::Crypto(CryptoError::Authentication))
        );

        // Key ciphertext from another session, same patient.
        let other = fixture(3);
        let other_key = SymKey::random(&mut f.rng);
        let mut swapped = f.envelope.clone();
        swapped.key_ct = asym_encrypt(f.patient.public(), other_key.as_bytes(), &mut f.rng);
        assert_eq!(
            open_info(&f.patient, &swapped),
            Err(EmrError::Crypto(CryptoError::Authentication))
        );
        drop(other);
    }

    #[test]
    fn index_fields_and_encoding() {
        let h = BigUint::from(12345u32);
        let a = build_index("cloud://7/2", &h, 120).unwrap();
        assert_eq!((a.url.as_str(), &a.h, a.t), ("cloud://7/2", &h, 120));
        let b = build_index("cloud://7/2", &h, 130).unwrap();
        assert_ne!(a.t, b.t);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(EmrIndex::from_bytes(&a.to_bytes()).unwrap(), a);
        assert_eq!(build_index("", &h, 1), Err(EmrError::EmptyUrl));
    }
}
