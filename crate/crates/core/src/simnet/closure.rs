//! Symbolic intruder knowledge.
//!
//! Knowledge is a set of byte strings closed under three analysis rules:
//! split a canonical field list or wire frame or ticket into its parts,
//! decrypt a known ciphertext under a known key, and hash known values into
//! key candidates. Every item carries a grade: `Observed` items were seen in
//! the clear, `Derived` items came out of a decryption or were handed to the
//! intruder as secrets. Hash synthesis needs at least one derived input, so a
//! transcript with no secrets in it costs no hashing at all.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::encoding::{split_fields, FieldWriter};
use crate::crypto::{self, KeyMaterial, NodeId, SivChaCha20Poly1305, Suite, KEY_LEN};
use crate::protocol::decode_frame;
use crate::ticket::parse_ticket;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Grade {
    Observed,
    Derived,
}

/// Longest hash chain walked when asking whether a value is derivable.
const CHAIN_WALK: usize = 130;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Knowledge {
    items: BTreeMap<Vec<u8>, Grade>,
}

impl Knowledge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: Vec<u8>, grade: Grade) -> bool {
        if item.is_empty() {
            return false;
        }
        match self.items.get(&item) {
            Some(g) if *g >= grade => false,
            _ => {
                self.items.insert(item, grade);
                true
            }
        }
    }

    pub fn contains(&self, item: &[u8]) -> bool {
        self.items.contains_key(item)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = (&[u8], Grade)> {
        self.items.iter().map(|(k, g)| (k.as_slice(), *g))
    }

    /// Whether `secret` is known or one synthesis step (or a walk down a
    /// hash chain) away from what is known.
    pub fn derives(&self, secret: &[u8]) -> bool {
        self.contains(secret) || self.derivable().contains(secret)
    }

    /// Everything one synthesis step away, plus the hash chains running
    /// forward from each derived or synthesized key.
    pub fn derivable(&self) -> BTreeSet<Vec<u8>> {
        let derived: Vec<&[u8]> = self.items.iter().filter(|(_, g)| **g == Grade::Derived).map(|(k, _)| k.as_slice()).collect();
        let small: Vec<&[u8]> = self.items.keys().map(Vec::as_slice).filter(|k| is_small(k)).collect();
        let seeds: Vec<Vec<u8>> = synthesize(&derived, &small)
            .into_iter()
            .map(|k| k.as_bytes().to_vec())
            .chain(derived.iter().filter(|d| d.len() == KEY_LEN).map(|d| d.to_vec()))
            .collect();
        let mut out = BTreeSet::new();
        for seed in seeds {
            let mut cur = seed;
            for _ in 0..=CHAIN_WALK {
                let next = crypto::hash(&cur).as_bytes().to_vec();
                if !out.insert(cur) {
                    break;
                }
                cur = next;
            }
        }
        out
    }
}

fn hash_fields(w: FieldWriter) -> KeyMaterial {
    Suite::default().hash_fields(w)
}

fn is_small(item: &[u8]) -> bool {
    matches!(item.len(), 1..=8 | KEY_LEN)
}

/// Hash candidates with at least one derived input: `H(d)`, `H(d)` over the
/// field encoding, `H(d ^ s)` for 4-byte values, and field-encoded pairs and
/// triples mixing derived and small items.
fn synthesize(derived: &[&[u8]], small: &[&[u8]]) -> Vec<KeyMaterial> {
    let mut out = Vec::new();
    for d in derived {
        out.push(crypto::hash(d));
        out.push(hash_fields(FieldWriter::new().bytes(d)));
        if !is_small(d) {
            continue;
        }
        for s in small {
            if d.len() == 4 && s.len() == 4 {
                let mixed: Vec<u8> = d.iter().zip(s.iter()).map(|(a, b)| a ^ b).collect();
                out.push(hash_fields(FieldWriter::new().bytes(&mixed)));
            }
            out.push(hash_fields(FieldWriter::new().bytes(d).bytes(s)));
            out.push(hash_fields(FieldWriter::new().bytes(s).bytes(d)));
            if d.len() == KEY_LEN && s.len() <= 8 {
                for s2 in small.iter().filter(|s2| s2.len() <= 8) {
                    out.push(hash_fields(FieldWriter::new().bytes(d).bytes(s).bytes(s2)));
                }
            }
        }
    }
    out
}

/// Parts obtainable from `item` without any key.
fn split(item: &[u8]) -> Vec<Vec<u8>> {
    let mut parts = Vec::new();
    if let Ok((_, _)) = decode_frame(item) {
        parts.push(item[1..5].to_vec());
        parts.push(item[5..9].to_vec());
        parts.push(item[9..].to_vec());
    }
    if let Some(fields) = split_fields(item) {
        parts.extend(fields.into_iter().map(<[u8]>::to_vec));
    }
    if let Ok(t) = parse_ticket(item) {
        parts.push(vec![t.mode as u8]);
        parts.push(t.inner_ct);
        parts.push(t.outer_ct);
    }
    parts.retain(|p| !p.is_empty() && p.as_slice() != item);
    parts
}

/// Fixed point of the analysis rules. Applying it to its own output returns
/// the same knowledge.
pub fn close(start: &Knowledge) -> Knowledge {
    let mut k = start.clone();
    let mut tried: BTreeSet<(Vec<u8>, [u8; KEY_LEN])> = BTreeSet::new();
    loop {
        let mut changed = false;
        let snapshot: Vec<(Vec<u8>, Grade)> = k.items.iter().map(|(i, g)| (i.clone(), *g)).collect();
        for (item, grade) in &snapshot {
            for p in split(item) {
                changed |= k.insert(p, *grade);
            }
        }
        let derived: Vec<Vec<u8>> = k.items.iter().filter(|(_, g)| **g == Grade::Derived).map(|(i, _)| i.clone()).collect();
        let derived_refs: Vec<&[u8]> = derived.iter().map(Vec::as_slice).collect();
        let small: Vec<Vec<u8>> = k.items.keys().filter(|i| is_small(i)).cloned().collect();
        let small_refs: Vec<&[u8]> = small.iter().map(Vec::as_slice).collect();
        let mut keys: Vec<KeyMaterial> = k.items.keys().filter_map(|i| KeyMaterial::from_slice(i)).collect();
        keys.extend(synthesize(&derived_refs, &small_refs));
        let cts: Vec<Vec<u8>> = k.items.keys().filter(|i| i.len() > SivChaCha20Poly1305::OVERHEAD).cloned().collect();
        for ct in &cts {
            for key in &keys {
                if !tried.insert((ct.clone(), *key.as_bytes())) {
                    continue;
                }
                if let Ok(pt) = crypto::decrypt(key, ct) {
                    changed |= k.insert(pt, Grade::Derived);
                    changed |= k.insert(key.as_bytes().to_vec(), Grade::Derived);
                }
            }
        }
        if !changed {
            return k;
        }
    }
}

/// What the intruder has captured and what it can work out from it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IntruderState {
    pub knowledge: Knowledge,
    /// Captured frames in capture order.
    pub recorded: Vec<Vec<u8>>,
    pub identities_known: BTreeSet<NodeId>,
}

impl IntruderState {
    pub fn new(identities: BTreeSet<NodeId>) -> Self {
        let mut knowledge = Knowledge::new();
        for id in &identities {
            knowledge.insert(id.to_be_bytes().to_vec(), Grade::Observed);
        }
        Self { knowledge, recorded: Vec::new(), identities_known: identities }
    }

    pub fn observe(&mut self, frame: &[u8]) {
        self.recorded.push(frame.to_vec());
        self.knowledge.insert(frame.to_vec(), Grade::Observed);
    }

    /// Hands the intruder a secret out of band.
    pub fn learn(&mut self, secret: &[u8]) {
        self.knowledge.insert(secret.to_vec(), Grade::Derived);
    }
}

pub fn intruder_closure(state: &IntruderState) -> Knowledge {
    close(&state.knowledge)
}
