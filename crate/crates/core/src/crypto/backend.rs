use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key};
use sha2::{Digest as _, Sha256};

use super::encoding::encode_fields;
use super::types::{KeyMaterial, KEY_LEN};
use super::CryptoError;

pub trait HashBackend: Send + Sync {
    fn digest(&self, input: &[u8]) -> KeyMaterial;
}

/// Authenticated encryption under a 256-bit key.
pub trait CipherBackend: Send + Sync {
    fn seal(&self, key: &KeyMaterial, plaintext: &[u8]) -> Vec<u8>;
    fn open(&self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Sha256Hash;

impl HashBackend for Sha256Hash {
    fn digest(&self, input: &[u8]) -> KeyMaterial {
        let out: [u8; KEY_LEN] = Sha256::digest(input).into();
        KeyMaterial::from_bytes(out)
    }
}

const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;

/// ChaCha20-Poly1305 with a synthetic nonce derived from key and plaintext.
///
/// Encryption is deterministic, which keeps simulation traces reproducible.
/// Equal plaintexts under one key produce equal ciphertexts; protocol
/// plaintexts always carry a fresh nonce so this is never observable in an
/// honest run. Layout: `nonce(12) || ciphertext || tag(16)`.
#[derive(Debug, Default, Clone, Copy)]
pub struct SivChaCha20Poly1305;

impl SivChaCha20Poly1305 {
    pub const OVERHEAD: usize = NONCE_LEN + TAG_LEN;
}

impl CipherBackend for SivChaCha20Poly1305 {
    fn seal(&self, key: &KeyMaterial, plaintext: &[u8]) -> Vec<u8> {
        let synthetic = Sha256Hash.digest(&encode_fields(&[b"siv", key.as_bytes(), plaintext]));
        let nonce = &synthetic.as_bytes()[..NONCE_LEN];
        let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()));
        let body = cipher.encrypt(nonce.into(), plaintext).expect("chacha20poly1305 encryption is infallible for in-memory buffers");
        let mut out = Vec::with_capacity(NONCE_LEN + body.len());
        out.extend_from_slice(nonce);
        out.extend_from_slice(&body);
        out
    }

    fn open(&self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if ciphertext.len() < Self::OVERHEAD {
            return Err(CryptoError::DecryptionFailure);
        }
        let (nonce, body) = ciphertext.split_at(NONCE_LEN);
        let cipher = ChaCha20Poly1305::new(Key::from_slice(key.as_bytes()));
        cipher.decrypt(nonce.into(), body).map_err(|_| CryptoError::DecryptionFailure)
    }
}
