use std::fmt;

use super::{CesError, PARTS};

/// A set of submessage positions drawn from `1..=7`, kept as a bitmask so
/// iteration is always ascending.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct IndexSet(u8);

impl IndexSet {
    pub const EMPTY: IndexSet = IndexSet(0);
    pub const ALL: IndexSet = IndexSet(0b1111_1110);

    pub fn new<I: IntoIterator<Item = u8>>(indices: I) -> Result<Self, CesError> {
        let mut bits = 0u8;
        for i in indices {
            check_index(i)?;
            bits |= 1 << i;
        }
        Ok(IndexSet(bits))
    }

    /// All 128 subsets of `1..=7`, including the empty set.
    pub fn all_subsets() -> impl Iterator<Item = IndexSet> {
        (0u8..128).map(|m| IndexSet(m << 1))
    }

    /// Raw mask; bit `i` marks index `i`.
    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, i: u8) -> bool {
        (1..=PARTS as u8).contains(&i) && self.0 & (1 << i) != 0
    }

    pub fn insert(&mut self, i: u8) -> Result<(), CesError> {
        check_index(i)?;
        self.0 |= 1 << i;
        Ok(())
    }

    pub fn is_subset(self, other: IndexSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn difference(self, other: IndexSet) -> IndexSet {
        IndexSet(self.0 & !other.0)
    }

    pub fn union(self, other: IndexSet) -> IndexSet {
        IndexSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (1..=PARTS as u8).filter(move |&i| self.0 & (1 << i) != 0)
    }

    /// Ascending decimal indices joined by commas, e.g. `2,3,5`.
    pub fn to_decimal_list(self) -> String {
        self.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_decimal_list(s: &str) -> Result<Self, CesError> {
        let s = s.trim().trim_start_matches('{').trim_end_matches('}');
        if s.trim().is_empty() {
            return Ok(IndexSet::EMPTY);
        }
        let mut set = IndexSet::EMPTY;
        for part in s.split(',') {
            let i: u8 = part
                .trim()
                .parse()
                .map_err(|_| CesError::IndexOutOfRange(0))?;
            set.insert(i)?;
        }
        Ok(set)
    }
}

pub(crate) fn check_index(i: u8) -> Result<(), CesError> {
    if (1..=PARTS as u8).contains(&i) {
        Ok(())
    } else {
        Err(CesError::IndexOutOfRange(i))
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_decimal_list())
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_decimal_list())
    }
}

/// Content extraction access structure: the positions every extraction must
/// keep.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ceas(IndexSet);

impl Ceas {
    pub fn new(mandatory: IndexSet) -> Result<Self, CesError> {
        if mandatory.is_empty() {
            return Err(CesError::EmptyCeas);
        }
        Ok(Ceas(mandatory))
    }

    pub fn from_indices<I: IntoIterator<Item = u8>>(indices: I) -> Result<Self, CesError> {
        Ceas::new(IndexSet::new(indices)?)
    }

    pub fn indices(self) -> IndexSet {
        self.0
    }

    /// Canonical text form hashed into every digest.
    pub fn encoding(self) -> String {
        self.0.to_decimal_list()
    }
}

impl fmt::Debug for Ceas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ceas{}", self.0)
    }
}

impl fmt::Display for Ceas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascending_and_bounds() {
        let s = IndexSet::new([5, 2, 3]).unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![2, 3, 5]);
        assert_eq!(s.to_decimal_list(), "2,3,5");
        assert_eq!(IndexSet::new([0]), Err(CesError::IndexOutOfRange(0)));
        assert_eq!(IndexSet::new([8]), Err(CesError::IndexOutOfRange(8)));
    }

    #[test]
    fn subsets_enumeration() {
        assert_eq!(IndexSet::all_subsets().count(), 128);
        assert_eq!(IndexSet::ALL.len(), 7);
        let ceas = IndexSet::new([2, 3, 5]).unwrap();
        let supersets = IndexSet::all_subsets()
            .filter(|s| ceas.is_subset(*s))
            .count();
        assert_eq!(supersets, 16);
    }

    #[test]
    fn empty_ceas_rejected() {
        assert_eq!(Ceas::new(IndexSet::EMPTY), Err(CesError::EmptyCeas));
    }

    #[test]
    fn parse_list() {
        assert_eq!(
            IndexSet::parse_decimal_list("{2, 3,5}").unwrap(),
            IndexSet::new([2, 3, 5]).unwrap()
        );
        assert!(IndexSet::parse_decimal_list("2,9").is_err());
    }
}
