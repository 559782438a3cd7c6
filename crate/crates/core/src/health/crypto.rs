//! Client-side record encryption.
//!
//! Each record gets a random data key and is sealed with ChaCha20-Poly1305.
//! The data key is wrapped once per reader with an X25519 exchange between a
//! fresh ephemeral key and the reader's public key, so anyone holding only
//! public keys (the platform) can add readers for new documents but never
//! read one.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

use super::HealthError;

pub const TAG_LEN: usize = 16;

/// Key material that stays on the citizen's device.
#[derive(Clone)]
pub struct ClientKeys {
    secret: StaticSecret,
    public: XPublic,
}

impl std::fmt::Debug for ClientKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientKeys").field("key_id", &self.key_id()).finish_non_exhaustive()
    }
}

impl ClientKeys {
    pub fn generate(rng: &mut impl RngCore) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        let secret = StaticSecret::from(bytes);
        let public = XPublic::from(&secret);
        Self { secret, public }
    }

    pub fn public(&self) -> [u8; 32] {
        self.public.to_bytes()
    }

    pub fn key_id(&self) -> String {
        key_id(&self.public())
    }

    /// Raw secret bytes, for leakage tests.
    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes()
    }

    pub fn unwrap_key(&self, wrapped: &WrappedKey) -> Result<[u8; 32], HealthError> {
        let shared = self.secret.diffie_hellman(&XPublic::from(wrapped.ephemeral));
        let kek = kek(shared.as_bytes(), &wrapped.ephemeral, &self.public());
        let plain = open(&kek, &wrapped.nonce, &wrapped.sealed, b"wrap")?;
        plain.try_into().map_err(|_| HealthError::IntegrityFailure)
    }
}

pub fn key_id(public: &[u8; 32]) -> String {
    hex::encode(&Sha256::digest(public)[..8])
}

fn kek(shared: &[u8], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"record-key-wrap");
    h.update(shared);
    h.update(ephemeral);
    h.update(recipient);
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedKey {
    pub ephemeral: [u8; 32],
    pub nonce: [u8; 12],
    pub sealed: Vec<u8>,
}

impl WrappedKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(44 + self.sealed.len());
        out.extend_from_slice(&self.ephemeral);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.sealed);
        out
    }
}

pub fn wrap_key(data_key: &[u8; 32], recipient: &[u8; 32], rng: &mut impl RngCore) -> WrappedKey {
    let mut eph = [0u8; 32];
    rng.fill_bytes(&mut eph);
    let eph = StaticSecret::from(eph);
    let eph_pub = XPublic::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&XPublic::from(*recipient));
    let kek = kek(shared.as_bytes(), &eph_pub, recipient);
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    WrappedKey {
        ephemeral: eph_pub,
        nonce,
        sealed: seal(&kek, &nonce, data_key, b"wrap"),
    }
}

pub fn seal(key: &[u8; 32], nonce: &[u8; 12], plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
        .expect("in-memory encryption does not fail")
}

pub fn open(key: &[u8; 32], nonce: &[u8; 12], ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, HealthError> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| HealthError::IntegrityFailure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_round_trip_and_wrong_recipient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alice = ClientKeys::generate(&mut rng);
        let bob = ClientKeys::generate(&mut rng);
        let dk = [7u8; 32];
        let w = wrap_key(&dk, &alice.public(), &mut rng);
        assert_eq!(alice.unwrap_key(&w).unwrap(), dk);
        assert_eq!(bob.unwrap_key(&w), Err(HealthError::IntegrityFailure));
    }

    #[test]
    fn aead_detects_flipped_bit() {
        let k = [3u8; 32];
        let n = [1u8; 12];
        let mut ct = seal(&k, &n, b"payload", b"aad");
        assert_eq!(open(&k, &n, &ct, b"aad").unwrap(), b"payload");
        ct[0] ^= 1;
        assert!(open(&k, &n, &ct, b"aad").is_err());
    }
}
