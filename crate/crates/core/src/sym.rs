//! Authenticated symmetric encryption (AES-256-GCM) with random 96-bit
//! nonces drawn from the caller's generator.

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce};
use rand::RngCore;
use thiserror::Error;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("authenticated decryption failed")]
    Authentication,
    #[error("ciphertext too short")]
    Truncated,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SymKey([u8; KEY_LEN]);

impl std::fmt::Debug for SymKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymKey(..)")
    }
}

impl SymKey {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; KEY_LEN];
        rng.fill_bytes(&mut k);
        SymKey(k)
    }

    pub const fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SymKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// `nonce ‖ ciphertext ‖ tag`.
    pub fn seal<R: RngCore + ?Sized>(&self, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let cipher = Aes256Gcm::new(&self.0.into());
        let ct = cipher
            .encrypt(Nonce::from_slice(&nonce), plaintext)
            .expect("AES-GCM encryption does not fail for in-memory buffers");
        let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
        out.extend_from_slice(&nonce);
        out.extend_from_slice(&ct);
        out
    }

    pub fn open(&self, sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if sealed.len() < NONCE_LEN {
            return Err(CryptoError::Truncated);
        }
        let (nonce, ct) = sealed.split_at(NONCE_LEN);
        Aes256Gcm::new(&self.0.into())
            .decrypt(Nonce::from_slice(nonce), ct)
            .map_err(|_| CryptoError::Authentication)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_and_integrity() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let key = SymKey::random(&mut rng);
        let sealed = key.seal(b"payload", &mut rng);
        assert_eq!(key.open(&sealed).unwrap(), b"payload");
        assert_eq!(
            key.open(&sealed[..sealed.len() - 1]),
            Err(CryptoError::Authentication)
        );
        assert_eq!(key.open(&sealed[..4]), Err(CryptoError::Truncated));
        let other = SymKey::random(&mut rng);
        assert_eq!(other.open(&sealed), Err(CryptoError::Authentication));
        let empty = key.seal(b"", &mut rng);
        assert_eq!(key.open(&empty).unwrap(), b"");
    }
}
