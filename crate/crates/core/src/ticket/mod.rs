//! Two-part authentication tickets.
//!
//! The inner half `{N_i, K_S, n₀, profile}` is sealed under the interval key
//! `K_k = H(ζ_k, H(n₀))`; the outer half `{N_i, H(n₀), H(G)?, retrieval info}`
//! is sealed under the group key. A verifier opens the outer half, locates the
//! interval from the retrieval info, rebuilds `K_k` and opens the inner half.

mod profile;
mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::encoding::{DecodeError, FieldReader, FieldWriter};
use crate::crypto::{Digest, GroupId, IndexValue, KeyMaterial, NodeId, Nonce, SivChaCha20Poly1305};
use crate::keychain::{group_hash, search_tree, select_hash_vector, GroupContext, KeyChain};
use crate::metrics::{Meter, Units};

pub use profile::{Permissions, Profile, ProfileRecord, ProfileStore};
pub use wire::{parse_ticket, serialize_ticket};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TicketError {
    #[error("registration denied for {0}")]
    RegistrationDenied(NodeId),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("invalid ticket: {0}")]
    InvalidTicket(&'static str),
    #[error("ticket belongs to another group")]
    WrongGroup,
    #[error("malformed ticket: {0}")]
    Parse(#[from] DecodeError),
}

/// Retrieval mode, configured per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum TicketMode {
    /// Scrambled index value, found by linear search in the index vector.
    Indexed = 1,
    /// Plain interval number.
    Interval = 2,
    /// Index value plus a partial hash-tree path.
    Tree = 3,
}

impl TryFrom<u8> for TicketMode {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(TicketMode::Indexed),
            2 => Ok(TicketMode::Interval),
            3 => Ok(TicketMode::Tree),
            _ => Err(format!("ticket mode must be 1, 2 or 3 (got {v})")),
        }
    }
}

impl From<TicketMode> for u8 {
    fn from(m: TicketMode) -> u8 {
        m as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetrievalInfo {
    Mode1 { index: IndexValue },
    Mode2 { interval: u32 },
    Mode3 { hash_vector: Vec<Digest>, index: IndexValue, root: Option<Digest> },
}

impl RetrievalInfo {
    pub fn mode(&self) -> TicketMode {
        match self {
            RetrievalInfo::Mode1 { .. } => TicketMode::Indexed,
            RetrievalInfo::Mode2 { .. } => TicketMode::Interval,
            RetrievalInfo::Mode3 { .. } => TicketMode::Tree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TicketInner {
    pub node: NodeId,
    pub session_key: KeyMaterial,
    pub n0: Nonce,
    pub profile: ProfileRecord,
}

impl TicketInner {
    fn encode(&self) -> Vec<u8> {
        let w = FieldWriter::new().node(self.node).key(&self.session_key).nonce(self.n0);
        self.profile.write(w).finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = FieldReader::new(bytes);
        let node = r.node()?;
        let session_key = r.key()?;
        let n0 = r.nonce()?;
        let profile = ProfileRecord::read(&mut r)?;
        r.finish()?;
        Ok(Self { node, session_key, n0, profile })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TicketOuter {
    pub node: NodeId,
    /// H(n₀): lets a verifier rebuild the interval key.
    pub nonce_hash: Digest,
    pub group_hash: Option<Digest>,
    pub retrieval: RetrievalInfo,
}

impl TicketOuter {
    fn encode(&self) -> Vec<u8> {
        let w = FieldWriter::new()
            .node(self.node)
            .key(&self.nonce_hash)
            .bytes(self.group_hash.as_ref().map(|g| g.as_bytes().as_slice()).unwrap_or(&[]));
        let w = match &self.retrieval {
            RetrievalInfo::Mode1 { index } => w.index(*index),
            RetrievalInfo::Mode2 { interval } => w.u32(*interval),
            RetrievalInfo::Mode3 { hash_vector, index, root } => {
                let w = w.index(*index).bytes(root.as_ref().map(|r| r.as_bytes().as_slice()).unwrap_or(&[]));
                hash_vector.iter().fold(w, |w, d| w.key(d))
            }
        };
        w.finish()
    }

    fn decode(mode: TicketMode, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = FieldReader::new(bytes);
        let node = r.node()?;
        let nonce_hash = r.key()?;
        let group_hash = optional_digest(r.bytes()?)?;
        let retrieval = match mode {
            TicketMode::Indexed => RetrievalInfo::Mode1 { index: r.index()? },
            TicketMode::Interval => RetrievalInfo::Mode2 { interval: r.u32()? },
            TicketMode::Tree => {
                let index = r.index()?;
                let root = optional_digest(r.bytes()?)?;
                let mut hash_vector = Vec::new();
                while !r.is_empty() {
                    hash_vector.push(r.key()?);
                }
                RetrievalInfo::Mode3 { hash_vector, index, root }
            }
        };
        r.finish()?;
        Ok(Self { node, nonce_hash, group_hash, retrieval })
    }
}

fn optional_digest(field: &[u8]) -> Result<Option<Digest>, DecodeError> {
    match field.len() {
        0 => Ok(None),
        32 => Ok(KeyMaterial::from_slice(field)),
        n => Err(DecodeError::BadLength { expected: 32, got: n }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ticket {
    pub mode: TicketMode,
    pub inner_ct: Vec<u8>,
    pub outer_ct: Vec<u8>,
}

impl Ticket {
    /// Accounted payload: identity, session key, nonce, profile, retrieval
    /// value and retrieval hash (2 CK + 4 Int), plus one CK for each optional
    /// digest (group hash, tree root, hash-vector entries). The identity is
    /// repeated in both halves but counted once.
    ///
    /// Optional digests are recovered from the outer ciphertext length, which
    /// is unambiguous because they add 32 bytes each and hash-vector entries
    /// add 34.
    pub fn accounted_units(&self) -> Units {
        let pt = self.outer_ct.len().saturating_sub(SivChaCha20Poly1305::OVERHEAD);
        let extra = match self.mode {
            TicketMode::Indexed | TicketMode::Interval => pt.saturating_sub(48) / 32,
            TicketMode::Tree => {
                let rem = pt.saturating_sub(50);
                (0..=2usize).find_map(|m| rem.checked_sub(32 * m).filter(|r| r % 34 == 0).map(|r| m + r / 34)).unwrap_or(0)
            }
        };
        Units::new(2 + extra as u64, 4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IssueOptions {
    pub include_group_hash: bool,
    pub include_root: bool,
}

impl Default for IssueOptions {
    fn default() -> Self {
        Self { include_group_hash: false, include_root: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub check_root: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { check_root: true }
    }
}

/// Issues a ticket for `node` at interval `k` of the group's current chain.
/// Returns the ticket and the session key `K_S = H(K_k, n_s)` sealed in it.
#[allow(clippy::too_many_arguments)]
pub fn issue_ticket(
    ctx: &GroupContext,
    store: &ProfileStore,
    node: NodeId,
    n0: Nonce,
    mode: TicketMode,
    k: u32,
    opts: IssueOptions,
    meter: &mut Meter,
) -> Result<(Ticket, KeyMaterial), TicketError> {
    let profile = store.get(node).ok_or(TicketError::RegistrationDenied(node))?;
    let chain = &ctx.current;
    check_issuable(chain, mode, k)?;
    let nonce_hash = meter.nonce_hash(n0);
    let k_interval = meter.interval_key(&chain.zeta[k as usize], &nonce_hash);
    let session_key = meter.session_key(&k_interval, profile.n_s);
    let inner = TicketInner { node, session_key, n0, profile: profile.record() };
    let ticket = seal(ctx, chain, &inner, nonce_hash, k_interval, mode, k, opts, meter);
    Ok((ticket, session_key))
}

/// Moving-window reissue by a sink, which holds no long-term node secrets:
/// the fresh session key is `H(K_k', K_S)` where `K_S` is the session key
/// being replaced.
pub fn reissue_ticket(
    ctx: &GroupContext,
    old: &TicketInner,
    mode: TicketMode,
    k: u32,
    opts: IssueOptions,
    meter: &mut Meter,
) -> Result<(Ticket, KeyMaterial), TicketError> {
    let chain = &ctx.current;
    check_issuable(chain, mode, k)?;
    let nonce_hash = meter.nonce_hash(old.n0);
    let k_interval = meter.interval_key(&chain.zeta[k as usize], &nonce_hash);
    let session_key = meter.hash_fields(FieldWriter::new().key(&k_interval).key(&old.session_key));
    let inner = TicketInner { session_key, ..old.clone() };
    let ticket = seal(ctx, chain, &inner, nonce_hash, k_interval, mode, k, opts, meter);
    Ok((ticket, session_key))
}

fn check_issuable(chain: &KeyChain, mode: TicketMode, k: u32) -> Result<(), TicketError> {
    if k >= chain.intervals() {
        return Err(TicketError::InvalidConfig("interval outside the current chain"));
    }
    if mode == TicketMode::Tree && chain.tree().is_none() {
        return Err(TicketError::InvalidConfig("mode 3 needs a power-of-two chain length of at least 4"));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn seal(
    ctx: &GroupContext,
    chain: &KeyChain,
    inner: &TicketInner,
    nonce_hash: Digest,
    k_interval: KeyMaterial,
    mode: TicketMode,
    k: u32,
    opts: IssueOptions,
    meter: &mut Meter,
) -> Ticket {
    let index = chain.index().values[k as usize];
    let retrieval = match mode {
        TicketMode::Indexed => RetrievalInfo::Mode1 { index },
        TicketMode::Interval => RetrievalInfo::Mode2 { interval: k },
        TicketMode::Tree => {
            let tree = chain.tree().expect("checked by check_issuable");
            let hash_vector = select_hash_vector(tree, k as usize).expect("k checked against chain length");
            RetrievalInfo::Mode3 { hash_vector, index, root: opts.include_root.then(|| tree.root()) }
        }
    };
    let outer = TicketOuter { node: inner.node, nonce_hash, group_hash: opts.include_group_hash.then(|| ctx.group_hash()), retrieval };
    let inner_ct = meter.encrypt(&k_interval, &inner.encode());
    let outer_ct = meter.encrypt(&ctx.group_key, &outer.encode());
    Ticket { mode, inner_ct, outer_ct }
}

/// Opens the outer half under a group key. Holders of the group key that do
/// not track the group's chain (non-associated sinks) stop here.
pub fn open_outer(group: GroupId, group_key: &KeyMaterial, ticket: &Ticket, meter: &mut Meter) -> Result<TicketOuter, TicketError> {
    let pt = meter
        .decrypt(group_key, &ticket.outer_ct)
        .map_err(|_| TicketError::InvalidTicket("outer half does not open under the group key"))?;
    let outer = TicketOuter::decode(ticket.mode, &pt).map_err(|_| TicketError::InvalidTicket("outer half malformed"))?;
    if let Some(gh) = outer.group_hash {
        if gh != group_hash(group) {
            return Err(TicketError::WrongGroup);
        }
    }
    Ok(outer)
}

/// Result of a successful verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedTicket {
    pub inner: TicketInner,
    pub outer: TicketOuter,
    pub epoch: u64,
    pub interval: u32,
}

pub fn verify_ticket(ctx: &GroupContext, ticket: &Ticket, opts: VerifyOptions, meter: &mut Meter) -> Result<VerifiedTicket, TicketError> {
    let outer = open_outer(ctx.group_id, &ctx.group_key, ticket, meter)?;
    open_inner(ctx, ticket, outer, opts, meter)
}

/// Resolves the interval against the current chain, then the retained
/// previous chain, and opens the inner half.
pub fn open_inner(
    ctx: &GroupContext,
    ticket: &Ticket,
    outer: TicketOuter,
    opts: VerifyOptions,
    meter: &mut Meter,
) -> Result<VerifiedTicket, TicketError> {
    let mut located = false;
    for chain in ctx.chains() {
        let Some(k) = locate(chain, &outer.retrieval, opts) else { continue };
        located = true;
        let key = meter.retrieve_interval_key(&chain.zeta[k as usize], &outer.nonce_hash);
        let Ok(pt) = meter.decrypt(&key, &ticket.inner_ct) else { continue };
        let inner = TicketInner::decode(&pt).map_err(|_| TicketError::InvalidTicket("inner half malformed"))?;
        if inner.node != outer.node {
            return Err(TicketError::InvalidTicket("identity differs between halves"));
        }
        return Ok(VerifiedTicket { inner, outer, epoch: chain.epoch, interval: k });
    }
    Err(TicketError::InvalidTicket(if located { "inner half does not open" } else { "retrieval info matches no interval" }))
}

fn locate(chain: &KeyChain, retrieval: &RetrievalInfo, opts: VerifyOptions) -> Option<u32> {
    match retrieval {
        RetrievalInfo::Mode1 { index } => chain.index().position(*index).map(|k| k as u32),
        RetrievalInfo::Mode2 { interval } => (*interval < chain.intervals()).then_some(*interval),
        RetrievalInfo::Mode3 { hash_vector, index, root } => {
            let tree = chain.tree()?;
            if opts.check_root {
                if let Some(root) = root {
                    if *root != tree.root() {
                        return None;
                    }
                }
            }
            search_tree(tree, hash_vector, *index).ok().map(|k| k as u32)
        }
    }
}
