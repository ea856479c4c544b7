//! Per-group chain of key generators.
//!
//! The group master broadcasts a key generation message every `T_d`; every
//! holder of the group key derives the same chain `ζ₀..ζ_L` from it. Each
//! chain covers `L` intervals of `T_d / L` ticks, and interval `k` is keyed by
//! `ζ_k`. One previous chain is retained so tickets issued late in an epoch
//! stay verifiable while sinks reissue them (see [`window`]).

mod tree;
pub mod window;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::crypto::{Digest, GroupId, KeyMaterial, NodeId, Nonce, Suite};

pub use tree::{build_hash_tree, build_index_vector, search_tree, select_hash_vector, HashTree, IndexVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeychainError {
    #[error("key message from {0} rejected: not the group master")]
    Unauthorized(NodeId),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("key message epoch {got} is not newer than current epoch {current}")]
    StaleEpoch { current: u64, got: u64 },
    #[error("no matching interval")]
    NotFound,
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Key generation information broadcast by the group master.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyMsg {
    pub sender: NodeId,
    pub td: u64,
    pub n0_group: Nonce,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyChain {
    pub group: GroupId,
    pub epoch: u64,
    /// `ζ₀..ζ_L`.
    pub zeta: Vec<KeyMaterial>,
    pub td: u64,
    pub interval_len: u64,
    pub created_at: u64,
    index: IndexVector,
    tree: Option<HashTree>,
}

impl KeyChain {
    /// Builds the chain for `intervals` (= L) intervals. `td` must be a positive multiple of L.
    pub fn new(group: GroupId, epoch: u64, td: u64, intervals: u32, n0_group: Nonce, created_at: u64) -> Result<Self, KeychainError> {
        Self::with_suite(&Suite::default(), group, epoch, td, intervals, n0_group, created_at)
    }

    pub fn with_suite(
        suite: &Suite,
        group: GroupId,
        epoch: u64,
        td: u64,
        intervals: u32,
        n0_group: Nonce,
        created_at: u64,
    ) -> Result<Self, KeychainError> {
        if intervals == 0 {
            return Err(KeychainError::InvalidArgument("chain length must be at least 1"));
        }
        if td == 0 || !td.is_multiple_of(intervals as u64) {
            return Err(KeychainError::InvalidArgument("td must be a positive multiple of the chain length"));
        }
        let zeta0 = suite.derive_commitment_generator(td, n0_group).map_err(|_| KeychainError::InvalidArgument("td must be positive"))?;
        let zeta = suite
            .extend_chain(zeta0, intervals as usize + 1)
            .map_err(|_| KeychainError::InvalidArgument("chain length must be at least 1"))?;
        let index = tree::index_vector_for(suite, intervals, &zeta[0]);
        let tree = tree::build_hash_tree_with(suite, &index).ok();
        Ok(Self { group, epoch, zeta, td, interval_len: td / intervals as u64, created_at, index, tree })
    }

    /// L, the number of intervals.
    pub fn intervals(&self) -> u32 {
        (self.zeta.len() - 1) as u32
    }

    pub fn generator(&self, k: u32) -> Option<&KeyMaterial> {
        (k < self.intervals()).then(|| &self.zeta[k as usize])
    }

    pub fn index(&self) -> &IndexVector {
        &self.index
    }

    /// Present only when L is a power of two and at least 4.
    pub fn tree(&self) -> Option<&HashTree> {
        self.tree.as_ref()
    }

    pub fn tree_root(&self) -> Option<Digest> {
        self.tree.as_ref().map(HashTree::root)
    }

    pub fn expires_at(&self) -> u64 {
        self.created_at + self.td
    }
}

/// Interval covering tick `t`, clamped to the last interval once the chain has run out.
pub fn interval_at(chain: &KeyChain, t: u64) -> Result<u32, KeychainError> {
    if t < chain.created_at {
        return Err(KeychainError::InvalidArgument("time precedes chain creation"));
    }
    let k = (t - chain.created_at) / chain.interval_len;
    Ok(k.min(chain.intervals() as u64 - 1) as u32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupContext {
    pub group_id: GroupId,
    pub master: NodeId,
    pub members: BTreeSet<NodeId>,
    pub group_key: KeyMaterial,
    pub current: KeyChain,
    pub previous: Option<KeyChain>,
}

impl GroupContext {
    /// Context for the first epoch, provisioned out of band together with the group key.
    pub fn provision(
        group_id: GroupId,
        master: NodeId,
        members: BTreeSet<NodeId>,
        group_key: KeyMaterial,
        first: &KeyMsg,
        intervals: u32,
        now: u64,
    ) -> Result<Self, KeychainError> {
        if first.sender != master {
            return Err(KeychainError::Unauthorized(first.sender));
        }
        let current = KeyChain::new(group_id, first.epoch, first.td, intervals, first.n0_group, now)?;
        Ok(Self { group_id, master, members, group_key, current, previous: None })
    }

    pub fn epoch(&self) -> u64 {
        self.current.epoch
    }

    /// The chain for `epoch` if it is still retained.
    pub fn chain(&self, epoch: u64) -> Option<&KeyChain> {
        std::iter::once(&self.current).chain(self.previous.as_ref()).find(|c| c.epoch == epoch)
    }

    /// Current chain first, then the retained previous one.
    pub fn chains(&self) -> impl Iterator<Item = &KeyChain> {
        std::iter::once(&self.current).chain(self.previous.as_ref())
    }

    pub fn group_hash(&self) -> Digest {
        group_hash(self.group_id)
    }
}

pub fn group_hash(group: GroupId) -> Digest {
    crate::crypto::hash(&group.to_be_bytes())
}

/// Rolls the group to the epoch announced by `key_msg`. The old current chain
/// becomes `previous`; anything older is dropped.
pub fn start_epoch(ctx: &GroupContext, key_msg: &KeyMsg, length: u32, now: u64) -> Result<GroupContext, KeychainError> {
    if key_msg.sender != ctx.master {
        return Err(KeychainError::Unauthorized(key_msg.sender));
    }
    if key_msg.epoch <= ctx.current.epoch {
        return Err(KeychainError::StaleEpoch { current: ctx.current.epoch, got: key_msg.epoch });
    }
    let next = KeyChain::new(ctx.group_id, key_msg.epoch, key_msg.td, length, key_msg.n0_group, now)?;
    Ok(GroupContext { current: next, previous: Some(ctx.current.clone()), ..ctx.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> GroupContext {
        let master = NodeId::base_station(1);
        let members = [master, NodeId::sink(1), NodeId::sink(2)].into_iter().collect();
        let msg = KeyMsg { sender: master, td: 64, n0_group: Nonce(5), epoch: 1 };
        GroupContext::provision(GroupId(1), master, members, KeyMaterial::from_bytes([7; 32]), &msg, 8, 0).unwrap()
    }

    fn msg(epoch: u64, n0: u32) -> KeyMsg {
        KeyMsg { sender: NodeId::base_station(1), td: 64, n0_group: Nonce(n0), epoch }
    }

    #[test]
    fn members_derive_identical_chains() {
        let a = start_epoch(&ctx(), &msg(2, 9), 8, 64).unwrap();
        let b = start_epoch(&ctx(), &msg(2, 9), 8, 64).unwrap();
        assert_eq!(a.current, b.current);
    }

    #[test]
    fn epochs_advance_and_previous_is_retained() {
        let c0 = ctx();
        let c1 = start_epoch(&c0, &msg(2, 9), 8, 64).unwrap();
        let c2 = start_epoch(&c1, &msg(3, 10), 8, 128).unwrap();
        assert_eq!(c2.epoch(), c0.epoch() + 2);
        assert_eq!(c2.previous.as_ref().unwrap(), &c1.current);
        assert!(c2.chain(2).is_some());
        assert!(c2.chain(1).is_none());
    }

    #[test]
    fn non_master_and_stale_rejected() {
        let c = ctx();
        let mut m = msg(2, 9);
        m.sender = NodeId::sink(1);
        assert_eq!(start_epoch(&c, &m, 8, 64), Err(KeychainError::Unauthorized(NodeId::sink(1))));
        assert!(matches!(start_epoch(&c, &msg(1, 9), 8, 64), Err(KeychainError::StaleEpoch { .. })));
    }

    #[test]
    fn chain_invariants() {
        let c = ctx().current;
        assert_eq!(c.zeta.len(), 9);
        assert_eq!(c.interval_len * c.intervals() as u64, c.td);
        for k in 0..8 {
            assert_eq!(c.zeta[k + 1], crate::crypto::hash(c.zeta[k].as_bytes()));
        }
        assert!(KeyChain::new(GroupId(1), 1, 65, 8, Nonce(1), 0).is_err());
        assert!(KeyChain::new(GroupId(1), 1, 64, 0, Nonce(1), 0).is_err());
    }

    #[test]
    fn interval_boundaries() {
        let c = KeyChain::new(GroupId(1), 1, 80, 8, Nonce(1), 100).unwrap();
        assert_eq!(interval_at(&c, 100).unwrap(), 0);
        assert_eq!(interval_at(&c, 179).unwrap(), 7);
        assert_eq!(interval_at(&c, 115).unwrap(), 1);
        assert_eq!(interval_at(&c, 1000).unwrap(), 7);
        assert!(interval_at(&c, 99).is_err());
        let mut last = 0;
        for t in 100..300 {
            let k = interval_at(&c, t).unwrap();
            assert!(k >= last);
            last = k;
        }
    }
}
