//! Hashing, authenticated encryption, and the key-derivation formulas of the
//! keying suite.
//!
//! All derivations go through [`Suite`], which pairs a hash backend with a
//! cipher backend. The free functions at the bottom of this module use the
//! default suite (SHA-256, ChaCha20-Poly1305).

mod backend;
pub mod encoding;
mod types;

pub use backend::{CipherBackend, HashBackend, Sha256Hash, SivChaCha20Poly1305};
pub use types::{Digest, GroupId, IndexValue, KeyMaterial, NodeId, NodeKind, Nonce, ParseNodeIdError, SecretNumber, KEY_LEN, MAX_NODE_ID};

use encoding::FieldWriter;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("decryption failed")]
    DecryptionFailure,
}

static SHA256: Sha256Hash = Sha256Hash;
static CHACHA: SivChaCha20Poly1305 = SivChaCha20Poly1305;

#[derive(Clone, Copy)]
pub struct Suite {
    hash: &'static dyn HashBackend,
    cipher: &'static dyn CipherBackend,
}

impl Default for Suite {
    fn default() -> Self {
        Self { hash: &SHA256, cipher: &CHACHA }
    }
}

impl std::fmt::Debug for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Suite")
    }
}

impl Suite {
    pub fn new(hash: &'static dyn HashBackend, cipher: &'static dyn CipherBackend) -> Self {
        Self { hash, cipher }
    }

    pub fn hash(&self, input: &[u8]) -> KeyMaterial {
        self.hash.digest(input)
    }

    pub fn hash_fields(&self, fields: FieldWriter) -> KeyMaterial {
        self.hash(&fields.finish())
    }

    pub fn encrypt(&self, key: &KeyMaterial, plaintext: &[u8]) -> Vec<u8> {
        self.cipher.seal(key, plaintext)
    }

    pub fn decrypt(&self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.cipher.open(key, ciphertext)
    }

    /// ζ₀ = H(T_d, N₀) for the group's key generation message.
    pub fn derive_commitment_generator(&self, td: u64, n0_group: Nonce) -> Result<KeyMaterial, CryptoError> {
        if td == 0 {
            return Err(CryptoError::InvalidArgument("td must be positive"));
        }
        Ok(self.hash_fields(FieldWriter::new().u64(td).nonce(n0_group)))
    }

    /// The chain of key generators: `out[0] = ζ₀`, `out[k] = H(out[k-1])`.
    pub fn extend_chain(&self, zeta0: KeyMaterial, length: usize) -> Result<Vec<KeyMaterial>, CryptoError> {
        if length == 0 {
            return Err(CryptoError::InvalidArgument("chain length must be at least 1"));
        }
        let mut chain = Vec::with_capacity(length);
        chain.push(zeta0);
        for _ in 1..length {
            let next = self.hash(chain.last().unwrap().as_bytes());
            chain.push(next);
        }
        Ok(chain)
    }

    /// H(n₀), the retrieval hash carried in the ticket's outer half.
    pub fn nonce_hash(&self, n0: Nonce) -> KeyMaterial {
        self.hash_fields(FieldWriter::new().nonce(n0))
    }

    /// K_k = H(ζ_k, H(n₀)).
    pub fn derive_interval_key(&self, zeta_k: &KeyMaterial, nonce_hash: &KeyMaterial) -> KeyMaterial {
        self.hash_fields(FieldWriter::new().key(zeta_k).key(nonce_hash))
    }

    /// V_k = H(k) truncated to four bytes.
    pub fn index_value(&self, k: u32) -> IndexValue {
        let d = self.hash_fields(FieldWriter::new().u32(k));
        let mut v = [0u8; 4];
        v.copy_from_slice(&d.as_bytes()[..4]);
        IndexValue(v)
    }

    /// g(ζ_k) = H(ζ_k, H(n₀)) || H(k): the interval key and index value.
    pub fn derive_interval_pair(&self, zeta_k: &KeyMaterial, k: u32, n0: Nonce) -> (KeyMaterial, IndexValue) {
        let key = self.derive_interval_key(zeta_k, &self.nonce_hash(n0));
        (key, self.index_value(k))
    }

    /// K_S = H(K_k, n_s).
    pub fn derive_session_key(&self, k_interval: &KeyMaterial, n_s: SecretNumber) -> KeyMaterial {
        self.hash_fields(FieldWriter::new().key(k_interval).nonce(n_s.0))
    }

    /// K_TS = H(BS ⊕ n_s) over the 4-byte wire id and the 4-byte secret.
    pub fn derive_temp_key(&self, bs: NodeId, n_s: SecretNumber) -> Result<KeyMaterial, CryptoError> {
        if bs.kind != NodeKind::BaseStation {
            return Err(CryptoError::InvalidArgument("temporary key requires a base station id"));
        }
        let mixed = bs.wire() ^ n_s.0 .0;
        Ok(self.hash_fields(FieldWriter::new().u32(mixed)))
    }

    /// K_sp = H(K_S, n₀, n₁) when `n1` is given, otherwise K_ps = H(K_S, n₀).
    pub fn derive_private_session_key(&self, k_s: &KeyMaterial, n0: Nonce, n1: Option<Nonce>) -> KeyMaterial {
        let w = FieldWriter::new().key(k_s).nonce(n0);
        let w = match n1 {
            Some(n1) => w.nonce(n1),
            None => w,
        };
        self.hash_fields(w)
    }
}

pub fn hash(input: &[u8]) -> KeyMaterial {
    Suite::default().hash(input)
}

pub fn encrypt(key: &KeyMaterial, plaintext: &[u8]) -> Vec<u8> {
    Suite::default().encrypt(key, plaintext)
}

pub fn decrypt(key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    Suite::default().decrypt(key, ciphertext)
}

pub fn derive_commitment_generator(td: u64, n0_group: Nonce) -> Result<KeyMaterial, CryptoError> {
    Suite::default().derive_commitment_generator(td, n0_group)
}

pub fn extend_chain(zeta0: KeyMaterial, length: usize) -> Result<Vec<KeyMaterial>, CryptoError> {
    Suite::default().extend_chain(zeta0, length)
}

pub fn derive_interval_pair(zeta_k: &KeyMaterial, k: u32, n0: Nonce) -> (KeyMaterial, IndexValue) {
    Suite::default().derive_interval_pair(zeta_k, k, n0)
}

pub fn derive_session_key(k_interval: &KeyMaterial, n_s: SecretNumber) -> KeyMaterial {
    Suite::default().derive_session_key(k_interval, n_s)
}

pub fn derive_temp_key(bs: NodeId, n_s: SecretNumber) -> Result<KeyMaterial, CryptoError> {
    Suite::default().derive_temp_key(bs, n_s)
}

pub fn derive_private_session_key(k_s: &KeyMaterial, n0: Nonce, n1: Option<Nonce>) -> KeyMaterial {
    Suite::default().derive_private_session_key(k_s, n0, n1)
}
