use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::crypto::encoding::FieldWriter;
use crate::crypto::{CryptoError, KeyMaterial, NodeId, Nonce, SecretNumber, Suite};

/// Accounting unit sizes in bytes.
pub const CK_BYTES: u64 = 32;
pub const INT_BYTES: u64 = 4;
pub const F_BYTES: u64 = 8;

/// Semantic payload size of a message, in accounting units.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub ck: u64,
    pub int: u64,
    pub f: u64,
}

impl Units {
    pub const fn new(ck: u64, int: u64) -> Self {
        Self { ck, int, f: 0 }
    }

    pub fn bytes(&self) -> u64 {
        self.ck * CK_BYTES + self.int * INT_BYTES + self.f * F_BYTES
    }
}

impl Add for Units {
    type Output = Units;
    fn add(self, o: Units) -> Units {
        Units { ck: self.ck + o.ck, int: self.int + o.int, f: self.f + o.f }
    }
}

impl AddAssign for Units {
    fn add_assign(&mut self, o: Units) {
        *self = *self + o;
    }
}

/// Primitive invocations performed by one node during one step.
///
/// `retrieval_h` holds hashing done by a verifier to locate and rebuild an
/// interval key from a ticket (index search, tree descent, interval-key
/// derivation). It belongs to key retrieval, not to the authentication
/// exchange, and is kept out of `h`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub e: u64,
    pub h: u64,
    pub x: u64,
    #[serde(default)]
    pub retrieval_h: u64,
}

impl OpCounts {
    pub fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: OpCounts) {
        self.e += o.e;
        self.h += o.h;
        self.x += o.x;
        self.retrieval_h += o.retrieval_h;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Discovery,
    KeyManagement,
    Registration,
    LoginAuth,
    Data,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Discovery => "discovery",
            Phase::KeyManagement => "key-management",
            Phase::Registration => "registration",
            Phase::LoginAuth => "login-auth",
            Phase::Data => "data",
        };
        f.write_str(s)
    }
}

/// Aggregated cost of a run or of an analytical cost row.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub e: u64,
    pub h: u64,
    pub x: u64,
    pub m: u64,
    pub ex: u64,
    pub t: u64,
    pub retrieval_h: u64,
    pub unicast: u64,
    pub broadcast: u64,
    pub bytes: u64,
}

impl CostLedger {
    pub fn add_ops(&mut self, ops: &OpCounts) {
        self.e += ops.e;
        self.h += ops.h;
        self.x += ops.x;
        self.retrieval_h += ops.retrieval_h;
    }

    pub fn messages(&self) -> u64 {
        self.unicast + self.broadcast
    }
}

impl AddAssign for CostLedger {
    fn add_assign(&mut self, o: CostLedger) {
        self.e += o.e;
        self.h += o.h;
        self.x += o.x;
        self.m += o.m;
        self.ex += o.ex;
        self.t += o.t;
        self.retrieval_h += o.retrieval_h;
        self.unicast += o.unicast;
        self.broadcast += o.broadcast;
        self.bytes += o.bytes;
    }
}

pub type PhaseLedger = BTreeMap<Phase, CostLedger>;

/// Counting wrapper around a [`Suite`]. Every protocol-side primitive call
/// goes through a meter so a run's cost is exactly what was executed.
#[derive(Debug, Default, Clone)]
pub struct Meter {
    suite: Suite,
    counts: OpCounts,
}

impl Meter {
    pub fn new(suite: Suite) -> Self {
        Self { suite, counts: OpCounts::default() }
    }

    pub fn suite(&self) -> &Suite {
        &self.suite
    }

    pub fn counts(&self) -> OpCounts {
        self.counts
    }

    pub fn take(&mut self) -> OpCounts {
        std::mem::take(&mut self.counts)
    }

    pub fn encrypt(&mut self, key: &KeyMaterial, plaintext: &[u8]) -> Vec<u8> {
        self.counts.e += 1;
        self.suite.encrypt(key, plaintext)
    }

    pub fn decrypt(&mut self, key: &KeyMaterial, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.counts.e += 1;
        self.suite.decrypt(key, ciphertext)
    }

    pub fn hash_fields(&mut self, fields: FieldWriter) -> KeyMaterial {
        self.counts.h += 1;
        self.suite.hash_fields(fields)
    }

    pub fn nonce_hash(&mut self, n0: Nonce) -> KeyMaterial {
        self.counts.h += 1;
        self.suite.nonce_hash(n0)
    }

    pub fn interval_key(&mut self, zeta_k: &KeyMaterial, nonce_hash: &KeyMaterial) -> KeyMaterial {
        self.counts.h += 1;
        self.suite.derive_interval_key(zeta_k, nonce_hash)
    }

    /// Interval-key rebuild on the verifying side; tallied as retrieval work.
    pub fn retrieve_interval_key(&mut self, zeta_k: &KeyMaterial, nonce_hash: &KeyMaterial) -> KeyMaterial {
        self.counts.retrieval_h += 1;
        self.suite.derive_interval_key(zeta_k, nonce_hash)
    }

    pub fn retrieval_hashes(&mut self, n: u64) {
        self.counts.retrieval_h += n;
    }

    pub fn session_key(&mut self, k_interval: &KeyMaterial, n_s: SecretNumber) -> KeyMaterial {
        self.counts.h += 1;
        self.suite.derive_session_key(k_interval, n_s)
    }

    /// K_TS. The XOR that mixes the id and secret is part of the hash input
    /// and is not tallied separately.
    pub fn temp_key(&mut self, bs: NodeId, n_s: SecretNumber) -> Result<KeyMaterial, CryptoError> {
        self.counts.h += 1;
        self.suite.derive_temp_key(bs, n_s)
    }

    pub fn private_session_key(&mut self, k_s: &KeyMaterial, n0: Nonce, n1: Option<Nonce>) -> KeyMaterial {
        self.counts.h += 1;
        self.suite.derive_private_session_key(k_s, n0, n1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_to_bytes() {
        assert_eq!(Units::new(3, 10).bytes(), 136);
        assert_eq!(Units::new(3, 8).bytes(), 128);
        assert_eq!(Units::new(5, 12).bytes(), 208);
        assert_eq!(Units { ck: 4, int: 9, f: 4 }.bytes(), 4 * 32 + 9 * 4 + 4 * 8);
    }

    #[test]
    fn meter_counts_every_call() {
        let mut m = Meter::default();
        let k = KeyMaterial::from_bytes([1; 32]);
        let ct = m.encrypt(&k, b"x");
        assert!(m.decrypt(&KeyMaterial::from_bytes([2; 32]), &ct).is_err());
        m.nonce_hash(Nonce(1));
        m.retrieve_interval_key(&k, &k);
        assert_eq!(m.take(), OpCounts { e: 2, h: 1, x: 0, retrieval_h: 1 });
        assert!(m.counts().is_zero());
    }
}
