//! Binary records: `CEAS ‖ [CI] ‖ tag ‖ r ‖ deltas` with deltas in ascending
//! index order. Index sets are a count byte followed by one byte per index.

use std::collections::BTreeMap;

use super::{Ceas, CesError, CesTag, ExtractedSignature, FullSignature, IndexSet, PARTS, TAG_LEN};
use crate::codec::{DecodeError, Reader, Writer};

fn write_set(w: &mut Writer, set: IndexSet) {
    w.u8(set.len() as u8);
    for i in set.iter() {
        w.u8(i);
    }
}

fn read_set(r: &mut Reader<'_>, what: &'static str) -> Result<IndexSet, DecodeError> {
    let count = r.u8(what)?;
    let mut set = IndexSet::EMPTY;
    let mut last = 0u8;
    for _ in 0..count {
        let i = r.u8(what)?;
        if i <= last {
            return Err(DecodeError::invalid(what, "indices not strictly ascending"));
        }
        set.insert(i)
            .map_err(|e| DecodeError::invalid(what, e.to_string()))?;
        last = i;
    }
    Ok(set)
}

fn read_ceas(r: &mut Reader<'_>) -> Result<Ceas, DecodeError> {
    Ceas::new(read_set(r, "ceas")?).map_err(|e| DecodeError::invalid("ceas", e.to_string()))
}

impl FullSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_set(&mut w, self.ceas.indices());
        w.fixed(self.tag.as_bytes()).biguint(&self.r);
        for d in &self.deltas {
            w.biguint(d);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CesError> {
        let mut r = Reader::new(bytes);
        let ceas = read_ceas(&mut r)?;
        let tag = CesTag::from_bytes(r.fixed::<TAG_LEN>("tag")?);
        let r_val = r.biguint("r")?;
        let mut deltas: [_; PARTS] = Default::default();
        for d in deltas.iter_mut() {
            *d = r.biguint("delta")?;
        }
        r.finish()?;
        Ok(FullSignature {
            ceas,
            tag,
            r: r_val,
            deltas,
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

impl ExtractedSignature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        write_set(&mut w, self.ceas.indices());
        write_set(&mut w, self.ci);
        w.fixed(self.tag.as_bytes()).biguint(&self.r);
        for i in self.ci.iter() {
            w.biguint(
                self.deltas
                    .get(&i)
                    .expect("delta for every extracted index"),
            );
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CesError> {
        let mut r = Reader::new(bytes);
        let ceas = read_ceas(&mut r)?;
        let ci = read_set(&mut r, "ci")?;
        let tag = CesTag::from_bytes(r.fixed::<TAG_LEN>("tag")?);
        let r_val = r.biguint("r")?;
        let mut deltas = BTreeMap::new();
        for i in ci.iter() {
            deltas.insert(i, r.biguint("delta")?);
        }
        r.finish()?;
        Ok(ExtractedSignature {
            ceas,
            ci,
            tag,
            r: r_val,
            deltas,
        })
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, CesError> {
        let bytes =
            hex::decode(s.trim()).map_err(|e| DecodeError::invalid("hex", e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ces::{extract, keygen, sign};
    use crate::group::GroupProfile;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    proptest! {
        #[test]
        fn records_round_trip(seed in any::<u64>(), mask in 0u8..16) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let sk = keygen(GroupProfile::Test.params(), &mut rng);
            let m: Vec<Vec<u8>> = (0..7).map(|i| vec![i as u8; (seed % 13) as usize + 1]).collect();
            let ceas = Ceas::from_indices([2, 3, 5]).unwrap();
            let sig = sign(&sk, &m, ceas, CesTag::random(&mut rng), &mut rng).unwrap();
            prop_assert_eq!(FullSignature::from_bytes(&sig.to_bytes()).unwrap(), sig.clone());

            let chosen: Vec<u8> = [2, 3, 5]
                .into_iter()
                .chain([1u8, 4, 6, 7].into_iter().enumerate().filter(|(b, _)| mask & (1 << b) != 0).map(|(_, i)| i))
                .collect();
            let (_, esig) = extract(sk.public(), &m, &sig, &chosen).unwrap();
            prop_assert_eq!(ExtractedSignature::from_hex(&esig.to_hex()).unwrap(), esig);
        }
    }

    #[test]
    fn unordered_set_rejected() {
        // ceas = [3, 2]
        let bytes = [2u8, 3, 2];
        assert!(FullSignature::from_bytes(&bytes).is_err());
    }
}
