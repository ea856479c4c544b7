//! Plaintexts sealed inside protocol ciphertexts.

use crate::crypto::encoding::{DecodeError, FieldReader, FieldWriter};
use crate::crypto::{Digest, KeyMaterial, NodeId, Nonce};
use crate::ticket::{parse_ticket, serialize_ticket, Ticket};

fn read_ticket(r: &mut FieldReader<'_>) -> Result<Ticket, DecodeError> {
    parse_ticket(r.bytes()?).map_err(|_| DecodeError::BadValue)
}

fn parse<T>(bytes: &[u8], f: impl FnOnce(&mut FieldReader<'_>) -> Result<T, DecodeError>) -> Result<T, DecodeError> {
    let mut r = FieldReader::new(bytes);
    let v = f(&mut r)?;
    r.finish()?;
    Ok(v)
}

pub fn nonce(n: Nonce) -> Vec<u8> {
    FieldWriter::new().nonce(n).finish()
}

pub fn read_nonce(bytes: &[u8]) -> Result<Nonce, DecodeError> {
    parse(bytes, |r| r.nonce())
}

/// `N || n0`, optionally followed by the password hash of a registered sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinPart {
    pub node: NodeId,
    pub n0: Nonce,
    pub password_hash: Option<Digest>,
}

impl JoinPart {
    pub fn encode(&self) -> Vec<u8> {
        let w = FieldWriter::new().node(self.node).nonce(self.n0);
        match &self.password_hash {
            Some(h) => w.key(h).finish(),
            None => w.finish(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        parse(bytes, |r| {
            let node = r.node()?;
            let n0 = r.nonce()?;
            let password_hash = if r.is_empty() { None } else { Some(r.key()?) };
            Ok(Self { node, n0, password_hash })
        })
    }
}

/// How `u0` answers the initiator's challenge: `n0+1` on activation, `H(n0)` on a cross-group switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum U0Response {
    Successor(Nonce),
    NonceHash(Digest),
}

/// `u0 = E_TS(response || n1 || T_k || T_R || K_S)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct U0 {
    pub response: U0Response,
    pub n1: Nonce,
    pub ticket: Ticket,
    pub registered_at: u64,
    pub session_key: KeyMaterial,
}

impl U0 {
    pub fn encode(&self) -> Vec<u8> {
        let w = FieldWriter::new();
        let w = match &self.response {
            U0Response::Successor(n) => w.nonce(*n),
            U0Response::NonceHash(h) => w.key(h),
        };
        w.nonce(self.n1).bytes(&serialize_ticket(&self.ticket)).u64(self.registered_at).key(&self.session_key).finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        parse(bytes, |r| {
            let response = match r.bytes()? {
                b if b.len() == 4 => U0Response::Successor(Nonce(u32::from_be_bytes(b.try_into().expect("4 bytes")))),
                b => U0Response::NonceHash(KeyMaterial::from_slice(b).ok_or(DecodeError::BadValue)?),
            };
            Ok(Self { response, n1: r.nonce()?, ticket: read_ticket(r)?, registered_at: r.u64()?, session_key: r.key()? })
        })
    }
}

/// The sink's part of a grant: `N || T_k || n1 || n2+1 || alert`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantSinkPart {
    pub initiator: NodeId,
    pub ticket: Ticket,
    pub n1: Nonce,
    pub n2_response: Nonce,
    pub alert: bool,
}

impl GrantSinkPart {
    pub fn encode(&self) -> Vec<u8> {
        FieldWriter::new()
            .node(self.initiator)
            .bytes(&serialize_ticket(&self.ticket))
            .nonce(self.n1)
            .nonce(self.n2_response)
            .flag(self.alert)
            .finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        parse(bytes, |r| {
            Ok(Self { initiator: r.node()?, ticket: read_ticket(r)?, n1: r.nonce()?, n2_response: r.nonce()?, alert: r.flag()? })
        })
    }
}

/// `S || n2`, sealed under the group key when a sink relays a request.
pub fn sink_challenge(sink: NodeId, n2: Nonce) -> Vec<u8> {
    FieldWriter::new().node(sink).nonce(n2).finish()
}

pub fn read_sink_challenge(bytes: &[u8]) -> Result<(NodeId, Nonce), DecodeError> {
    parse(bytes, |r| Ok((r.node()?, r.nonce()?)))
}

/// `N || H(n0)` in a switch request.
pub fn switch_part(node: NodeId, nonce_hash: &Digest) -> Vec<u8> {
    FieldWriter::new().node(node).key(nonce_hash).finish()
}

pub fn read_switch_part(bytes: &[u8]) -> Result<(NodeId, Digest), DecodeError> {
    parse(bytes, |r| Ok((r.node()?, r.key()?)))
}

/// `n0+1 || n1`, followed by piggybacked data for users.
pub fn switch_resp(n0_response: Nonce, n1: Nonce, data: &[u8]) -> Vec<u8> {
    FieldWriter::new().nonce(n0_response).nonce(n1).bytes(data).finish()
}

pub fn read_switch_resp(bytes: &[u8]) -> Result<(Nonce, Nonce, Vec<u8>), DecodeError> {
    parse(bytes, |r| Ok((r.nonce()?, r.nonce()?, r.bytes()?.to_vec())))
}

/// `U || n0` in a direct user join.
pub fn user_join(user: NodeId, n0: Nonce) -> Vec<u8> {
    FieldWriter::new().node(user).nonce(n0).finish()
}

pub fn read_user_join(bytes: &[u8]) -> Result<(NodeId, Nonce), DecodeError> {
    parse(bytes, |r| Ok((r.node()?, r.nonce()?)))
}

/// `K_S || n0+1` released by a sink to a sensor.
pub fn key_release(k_s: &KeyMaterial, response: Nonce) -> Vec<u8> {
    FieldWriter::new().key(k_s).nonce(response).finish()
}

pub fn read_key_release(bytes: &[u8]) -> Result<(KeyMaterial, Nonce), DecodeError> {
    parse(bytes, |r| Ok((r.key()?, r.nonce()?)))
}

/// `epoch || Td || n0` of a key generation message.
pub fn key_msg(epoch: u64, td: u64, n0_group: Nonce) -> Vec<u8> {
    FieldWriter::new().u64(epoch).u64(td).nonce(n0_group).finish()
}

pub fn read_key_msg(bytes: &[u8]) -> Result<(u64, u64, Nonce), DecodeError> {
    parse(bytes, |r| Ok((r.u64()?, r.u64()?, r.nonce()?)))
}

/// `T_k' || K_S'` of a moving-window reissue.
pub fn reissue(ticket: &Ticket, k_s: &KeyMaterial) -> Vec<u8> {
    FieldWriter::new().bytes(&serialize_ticket(ticket)).key(k_s).finish()
}

pub fn read_reissue(bytes: &[u8]) -> Result<(Ticket, KeyMaterial), DecodeError> {
    parse(bytes, |r| Ok((read_ticket(r)?, r.key()?)))
}

/// `seq || n || payload` of a sensor report.
pub fn data(seq: u32, n: Nonce, payload: &[u8]) -> Vec<u8> {
    FieldWriter::new().u32(seq).nonce(n).bytes(payload).finish()
}

pub fn read_data(bytes: &[u8]) -> Result<(u32, Nonce, Vec<u8>), DecodeError> {
    parse(bytes, |r| Ok((r.u32()?, r.nonce()?, r.bytes()?.to_vec())))
}

/// `N || seq || payload` delivered by a sink to its base station.
pub fn deliver(node: NodeId, seq: u32, payload: &[u8]) -> Vec<u8> {
    FieldWriter::new().node(node).u32(seq).bytes(payload).finish()
}

pub fn read_deliver(bytes: &[u8]) -> Result<(NodeId, u32, Vec<u8>), DecodeError> {
    parse(bytes, |r| Ok((r.node()?, r.u32()?, r.bytes()?.to_vec())))
}
