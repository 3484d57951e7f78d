//! Length-prefixed binary records.
//!
//! Every record in the system (signatures, envelopes, transactions, blocks)
//! is framed with this writer/reader pair so that hashing and transport
//! share one canonical byte form. Decoding is strict: non-canonical big
//! integers, short reads and trailing bytes are all rejected.

use num_bigint::BigUint;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of record while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("non-canonical integer encoding in {0}")]
    NonCanonical(&'static str),
    #[error("invalid value for {field}: {detail}")]
    Invalid { field: &'static str, detail: String },
}

impl DecodeError {
    pub fn invalid(field: &'static str, detail: impl Into<String>) -> Self {
        DecodeError::Invalid {
            field,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Raw bytes with no framing; only for fixed-width fields.
    pub fn fixed(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    /// `u32` length followed by the bytes.
    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("record field exceeds 4 GiB");
        self.u32(len);
        self.buf.extend_from_slice(bytes);
        self
    }

    /// Minimal big-endian magnitude, `u16` length prefix. Zero encodes as an
    /// empty field.
    pub fn biguint(&mut self, v: &BigUint) -> &mut Self {
        let bytes = if v.bits() == 0 {
            Vec::new()
        } else {
            v.to_bytes_be()
        };
        let len = u16::try_from(bytes.len()).expect("integer wider than 64 KiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(&bytes);
        self
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or(DecodeError::Truncated(what))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self, what: &'static str) -> Result<u8, DecodeError> {
        Ok(self.take(1, what)?[0])
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, DecodeError> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, DecodeError> {
        let b = self.take(8, what)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn fixed<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }

    pub fn bytes(&mut self, what: &'static str) -> Result<&'a [u8], DecodeError> {
        let len = self.u32(what)? as usize;
        self.take(len, what)
    }

    pub fn biguint(&mut self, what: &'static str) -> Result<BigUint, DecodeError> {
        let len = u16::from_be_bytes(self.take(2, what)?.try_into().unwrap()) as usize;
        let bytes = self.take(len, what)?;
        if bytes.first() == Some(&0) {
            return Err(DecodeError::NonCanonical(what));
        }
        Ok(BigUint::from_bytes_be(bytes))
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biguint_zero_is_empty_field() {
        let mut w = Writer::new();
        w.biguint(&BigUint::from(0u8));
        assert_eq!(w.as_slice(), &[0, 0]);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(r.biguint("x").unwrap(), BigUint::from(0u8));
        r.finish().unwrap();
    }

    #[test]
    fn leading_zero_rejected() {
        let bytes = [0u8, 2, 0, 7];
        assert_eq!(
            Reader::new(&bytes).biguint("x"),
            Err(DecodeError::NonCanonical("x"))
        );
    }

    #[test]
    fn trailing_and_truncated() {
        let mut w = Writer::new();
        w.u32(5).bytes(b"abc");
        let mut bytes = w.finish();
        bytes.push(9);
        let mut r = Reader::new(&bytes);
        r.u32("a").unwrap();
        r.bytes("b").unwrap();
        assert_eq!(r.finish(), Err(DecodeError::TrailingBytes(1)));

        let mut r = Reader::new(&bytes[..6]);
        r.u32("a").unwrap();
        assert!(matches!(r.bytes("b"), Err(DecodeError::Truncated(_))));
    }
}
