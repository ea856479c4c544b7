//! Wire messages and their canonical framing.
//!
//! Frame layout: `tag(1) || sender(4) || receiver(4) || fields`, where the
//! fields use the length-prefixed encoding of [`crate::crypto::encoding`].
//! The first field is the envelope timestamp (empty when timestamps are off).
//! A broadcast receiver is encoded as `0xFFFFFFFF`.

use serde::{Deserialize, Serialize};

use crate::crypto::encoding::{DecodeError, FieldReader, FieldWriter};
use crate::crypto::{GroupId, NodeId};
use crate::metrics::{Phase, Units};
use crate::ticket::{parse_ticket, serialize_ticket, Ticket};

const BROADCAST_WIRE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dest {
    Unicast(NodeId),
    Broadcast,
}

impl Dest {
    fn wire(self) -> u32 {
        match self {
            Dest::Unicast(n) => n.wire(),
            Dest::Broadcast => BROADCAST_WIRE,
        }
    }

    fn from_wire(raw: u32) -> Option<Self> {
        if raw == BROADCAST_WIRE {
            Some(Dest::Broadcast)
        } else {
            NodeId::from_wire(raw).map(Dest::Unicast)
        }
    }

    pub fn node(self) -> Option<NodeId> {
        match self {
            Dest::Unicast(n) => Some(n),
            Dest::Broadcast => None,
        }
    }
}

impl std::fmt::Display for Dest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dest::Unicast(n) => write!(f, "{n}"),
            Dest::Broadcast => f.write_str("*"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Envelope {
    pub sender: NodeId,
    pub receiver: Dest,
    pub timestamp: Option<u64>,
}

/// Which exchange a relayed grant belongs to: first activation or a cross-group switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Purpose {
    Join = 1,
    Switch = 2,
}

impl Purpose {
    fn from_u8(v: u8) -> Result<Self, DecodeError> {
        match v {
            1 => Ok(Purpose::Join),
            2 => Ok(Purpose::Switch),
            _ => Err(DecodeError::BadValue),
        }
    }

    pub fn phase(self) -> Phase {
        match self {
            Purpose::Join => Phase::Registration,
            Purpose::Switch => Phase::LoginAuth,
        }
    }
}

/// Initiator request relayed by a sink to its base station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardPayload {
    Join { bs_hint: NodeId, resend: bool, ct: Vec<u8> },
    Switch { resend: bool, ct: Vec<u8>, ticket: Ticket },
}

impl ForwardPayload {
    pub fn purpose(&self) -> Purpose {
        match self {
            ForwardPayload::Join { .. } => Purpose::Join,
            ForwardPayload::Switch { .. } => Purpose::Switch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// Periodic sink beacon.
    Hello { bs: NodeId, sink: NodeId },
    /// Key generation information, `E_G(epoch || Td || n0)`.
    KeyMsg { group: GroupId, ct: Vec<u8> },
    /// M1 of activation, `E_TS(N || n0)`.
    Join { bs_hint: NodeId, resend: bool, ct: Vec<u8> },
    /// M2: relayed request plus `E_G(S || n2)`.
    ForwardJoin { initiator: NodeId, sink_ct: Vec<u8>, payload: ForwardPayload },
    /// M3: `u0` for the initiator and `E_G(N || T_k || n1 || n2+1 || alert)` for the sink.
    Grant { purpose: Purpose, u0_ct: Vec<u8>, sink_ct: Vec<u8> },
    /// M4: `u0` relayed to the initiator.
    GrantForward { purpose: Purpose, u0_ct: Vec<u8> },
    /// M5: `E_G(n1+1)` from sink to base station.
    ConfirmToBs { purpose: Purpose, ct: Vec<u8> },
    /// M6: `E_S(n1+1)` from initiator to sink.
    Accept { purpose: Purpose, ct: Vec<u8> },
    /// `E_S(N || H(n0)) || T_k`.
    SwitchReq { resend: bool, ct: Vec<u8>, ticket: Ticket },
    /// `E_S(n0+1 || n1 [|| data])`.
    SwitchResp { ct: Vec<u8> },
    /// `E_S(n1+1)`.
    SwitchConfirm { ct: Vec<u8> },
    /// `E_TS(U || n0)`.
    UserJoin { resend: bool, ct: Vec<u8> },
    /// `E_TS(n0+1 || n1 || T_k || T_R || K_S)`.
    UserGrant { ct: Vec<u8> },
    /// `E_TS(n1+1)`.
    UserConfirm { ct: Vec<u8> },
    /// `T_k || E_S(n0)` from user to sensor.
    SensorAccessReq { resend: bool, ticket: Ticket, n0_ct: Vec<u8> },
    /// Sensor relays the ticket and the user's encrypted challenge to its sink.
    SensorForward { user: NodeId, ticket: Ticket, n0_ct: Vec<u8> },
    /// `E_NS(K_S || n0+1)` under the sensor's sink session key.
    SinkKeyRelease { user: NodeId, ks_ct: Vec<u8> },
    /// `E_ps(n0+1)` under the private session key.
    PrivateConfirm { ct: Vec<u8> },
    /// Moving-window reissue, `E_S(T_k' || K_S')` under the old session key.
    Reissue { ct: Vec<u8> },
    /// `E_S(seq || n || payload)`.
    SensorData { ct: Vec<u8> },
    /// `E_S(n+1)`.
    DataAck { ct: Vec<u8> },
    /// `E_G(N || seq || payload)` from sink to base station.
    SinkDeliver { ct: Vec<u8> },
}

impl ProtocolMessage {
    pub fn tag(&self) -> u8 {
        use ProtocolMessage::*;
        match self {
            Hello { .. } => 0x01,
            KeyMsg { .. } => 0x02,
            Join { .. } => 0x10,
            ForwardJoin { .. } => 0x11,
            Grant { .. } => 0x12,
            GrantForward { .. } => 0x13,
            ConfirmToBs { .. } => 0x14,
            Accept { .. } => 0x15,
            SwitchReq { .. } => 0x20,
            SwitchResp { .. } => 0x21,
            SwitchConfirm { .. } => 0x22,
            UserJoin { .. } => 0x30,
            UserGrant { .. } => 0x31,
            UserConfirm { .. } => 0x32,
            SensorAccessReq { .. } => 0x40,
            SensorForward { .. } => 0x41,
            SinkKeyRelease { .. } => 0x42,
            PrivateConfirm { .. } => 0x43,
            Reissue { .. } => 0x50,
            SensorData { .. } => 0x60,
            DataAck { .. } => 0x61,
            SinkDeliver { .. } => 0x62,
        }
    }

    pub fn name(&self) -> &'static str {
        use ProtocolMessage::*;
        match self {
            Hello { .. } => "Hello",
            KeyMsg { .. } => "KeyMsg",
            Join { .. } => "Join",
            ForwardJoin { .. } => "ForwardJoin",
            Grant { .. } => "Grant",
            GrantForward { .. } => "GrantForward",
            ConfirmToBs { .. } => "ConfirmToBS",
            Accept { .. } => "Accept",
            SwitchReq { .. } => "SwitchReq",
            SwitchResp { .. } => "SwitchResp",
            SwitchConfirm { .. } => "SwitchConfirm",
            UserJoin { .. } => "UserJoin",
            UserGrant { .. } => "UserGrant",
            UserConfirm { .. } => "UserConfirm",
            SensorAccessReq { .. } => "SensorAccessReq",
            SensorForward { .. } => "SensorForward",
            SinkKeyRelease { .. } => "SinkKeyRelease",
            PrivateConfirm { .. } => "PrivateConfirm",
            Reissue { .. } => "Reissue",
            SensorData { .. } => "SensorData",
            DataAck { .. } => "DataAck",
            SinkDeliver { .. } => "SinkDeliver",
        }
    }

    pub fn phase(&self) -> Phase {
        use ProtocolMessage::*;
        match self {
            Hello { .. } => Phase::Discovery,
            KeyMsg { .. } | Reissue { .. } => Phase::KeyManagement,
            Join { .. } | UserJoin { .. } | UserGrant { .. } | UserConfirm { .. } => Phase::Registration,
            ForwardJoin { payload, .. } => payload.purpose().phase(),
            Grant { purpose, .. } | GrantForward { purpose, .. } | ConfirmToBs { purpose, .. } | Accept { purpose, .. } => purpose.phase(),
            SwitchReq { .. }
            | SwitchResp { .. }
            | SwitchConfirm { .. }
            | SensorAccessReq { .. }
            | SensorForward { .. }
            | SinkKeyRelease { .. }
            | PrivateConfirm { .. } => Phase::LoginAuth,
            SensorData { .. } | DataAck { .. } | SinkDeliver { .. } => Phase::Data,
        }
    }

    fn write_fields(&self, w: FieldWriter) -> FieldWriter {
        use ProtocolMessage::*;
        match self {
            Hello { bs, sink } => w.node(*bs).node(*sink),
            KeyMsg { group, ct } => w.u32(group.0).bytes(ct),
            Join { bs_hint, resend, ct } => w.node(*bs_hint).flag(*resend).bytes(ct),
            ForwardJoin { initiator, sink_ct, payload } => {
                let w = w.node(*initiator).bytes(sink_ct).u8(payload.purpose() as u8);
                match payload {
                    ForwardPayload::Join { bs_hint, resend, ct } => w.node(*bs_hint).flag(*resend).bytes(ct),
                    ForwardPayload::Switch { resend, ct, ticket } => w.flag(*resend).bytes(ct).bytes(&serialize_ticket(ticket)),
                }
            }
            Grant { purpose, u0_ct, sink_ct } => w.u8(*purpose as u8).bytes(u0_ct).bytes(sink_ct),
            GrantForward { purpose, u0_ct } => w.u8(*purpose as u8).bytes(u0_ct),
            ConfirmToBs { purpose, ct } | Accept { purpose, ct } => w.u8(*purpose as u8).bytes(ct),
            SwitchReq { resend, ct, ticket } => w.flag(*resend).bytes(ct).bytes(&serialize_ticket(ticket)),
            UserJoin { resend, ct } => w.flag(*resend).bytes(ct),
            SensorAccessReq { resend, ticket, n0_ct } => w.flag(*resend).bytes(&serialize_ticket(ticket)).bytes(n0_ct),
            SensorForward { user, ticket, n0_ct } => w.node(*user).bytes(&serialize_ticket(ticket)).bytes(n0_ct),
            SinkKeyRelease { user, ks_ct } => w.node(*user).bytes(ks_ct),
            SwitchResp { ct }
            | SwitchConfirm { ct }
            | UserGrant { ct }
            | UserConfirm { ct }
            | PrivateConfirm { ct }
            | Reissue { ct }
            | SensorData { ct }
            | DataAck { ct }
            | SinkDeliver { ct } => w.bytes(ct),
        }
    }

    fn read_fields(tag: u8, r: &mut FieldReader<'_>) -> Result<Self, DecodeError> {
        use ProtocolMessage::*;
        let ticket = |r: &mut FieldReader<'_>| parse_ticket(r.bytes()?).map_err(|_| DecodeError::BadValue);
        Ok(match tag {
            0x01 => Hello { bs: r.node()?, sink: r.node()? },
            0x02 => KeyMsg { group: GroupId(r.u32()?), ct: r.bytes()?.to_vec() },
            0x10 => Join { bs_hint: r.node()?, resend: r.flag()?, ct: r.bytes()?.to_vec() },
            0x11 => {
                let initiator = r.node()?;
                let sink_ct = r.bytes()?.to_vec();
                let payload = match Purpose::from_u8(r.u8()?)? {
                    Purpose::Join => ForwardPayload::Join { bs_hint: r.node()?, resend: r.flag()?, ct: r.bytes()?.to_vec() },
                    Purpose::Switch => ForwardPayload::Switch { resend: r.flag()?, ct: r.bytes()?.to_vec(), ticket: ticket(r)? },
                };
                ForwardJoin { initiator, sink_ct, payload }
            }
            0x12 => Grant { purpose: Purpose::from_u8(r.u8()?)?, u0_ct: r.bytes()?.to_vec(), sink_ct: r.bytes()?.to_vec() },
            0x13 => GrantForward { purpose: Purpose::from_u8(r.u8()?)?, u0_ct: r.bytes()?.to_vec() },
            0x14 => ConfirmToBs { purpose: Purpose::from_u8(r.u8()?)?, ct: r.bytes()?.to_vec() },
            0x15 => Accept { purpose: Purpose::from_u8(r.u8()?)?, ct: r.bytes()?.to_vec() },
            0x20 => SwitchReq { resend: r.flag()?, ct: r.bytes()?.to_vec(), ticket: ticket(r)? },
            0x21 => SwitchResp { ct: r.bytes()?.to_vec() },
            0x22 => SwitchConfirm { ct: r.bytes()?.to_vec() },
            0x30 => UserJoin { resend: r.flag()?, ct: r.bytes()?.to_vec() },
            0x31 => UserGrant { ct: r.bytes()?.to_vec() },
            0x32 => UserConfirm { ct: r.bytes()?.to_vec() },
            0x40 => SensorAccessReq { resend: r.flag()?, ticket: ticket(r)?, n0_ct: r.bytes()?.to_vec() },
            0x41 => SensorForward { user: r.node()?, ticket: ticket(r)?, n0_ct: r.bytes()?.to_vec() },
            0x42 => SinkKeyRelease { user: r.node()?, ks_ct: r.bytes()?.to_vec() },
            0x43 => PrivateConfirm { ct: r.bytes()?.to_vec() },
            0x50 => Reissue { ct: r.bytes()?.to_vec() },
            0x60 => SensorData { ct: r.bytes()?.to_vec() },
            0x61 => DataAck { ct: r.bytes()?.to_vec() },
            0x62 => SinkDeliver { ct: r.bytes()?.to_vec() },
            _ => return Err(DecodeError::BadValue),
        })
    }
}

/// A message in flight. `accounted` is the semantic payload size fixed by the
/// sender when it built the message; it is not part of the wire frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub env: Envelope,
    pub body: ProtocolMessage,
    pub accounted: Units,
}

impl Message {
    pub fn wire_bytes(&self) -> Vec<u8> {
        encode_frame(&self.env, &self.body)
    }
}

pub fn encode_frame(env: &Envelope, body: &ProtocolMessage) -> Vec<u8> {
    let mut out = vec![body.tag()];
    out.extend_from_slice(&env.sender.to_be_bytes());
    out.extend_from_slice(&env.receiver.wire().to_be_bytes());
    let ts = env.timestamp.map(u64::to_be_bytes);
    let w = FieldWriter::new().bytes(ts.as_ref().map(|t| t.as_slice()).unwrap_or(&[]));
    out.extend_from_slice(&body.write_fields(w).finish());
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<(Envelope, ProtocolMessage), DecodeError> {
    if bytes.len() < 9 {
        return Err(DecodeError::Truncated);
    }
    let tag = bytes[0];
    let word = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().expect("4-byte slice"));
    let sender = NodeId::from_wire(word(1)).ok_or(DecodeError::BadValue)?;
    let receiver = Dest::from_wire(word(5)).ok_or(DecodeError::BadValue)?;
    let mut r = FieldReader::new(&bytes[9..]);
    let timestamp = match r.bytes()? {
        [] => None,
        ts => Some(u64::from_be_bytes(ts.try_into().map_err(|_| DecodeError::BadLength { expected: 8, got: ts.len() })?)),
    };
    let body = ProtocolMessage::read_fields(tag, &mut r)?;
    r.finish()?;
    Ok((Envelope { sender, receiver, timestamp }, body))
}
