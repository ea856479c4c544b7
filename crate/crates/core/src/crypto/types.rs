use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const KEY_LEN: usize = 32;

/// A 256-bit symmetric key, chain generator, or digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KeyMaterial([u8; KEY_LEN]);

/// Tree nodes and other commitments share the key representation.
pub type Digest = KeyMaterial;

impl KeyMaterial {
    pub const fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; KEY_LEN]>::try_from(bytes).ok().map(Self)
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl AsRef<[u8]> for KeyMaterial {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KeyMaterial({}..)", &self.to_hex()[..8])
    }
}

/// A 32-bit protocol nonce. Challenge responses use the wrapping successor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Nonce(pub u32);

impl Nonce {
    pub fn successor(self) -> Nonce {
        Nonce(self.0.wrapping_add(1))
    }

    pub fn to_be_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }
}

/// Long-term secret held by a sensor or user and by the base stations' profile store.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct SecretNumber(pub Nonce);

/// Scrambled per-interval index value, truncated to the 4-byte integer unit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct IndexValue(pub [u8; 4]);

impl IndexValue {
    pub fn as_bytes(&self) -> &[u8; 4] {
        &self.0
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    BaseStation,
    Sink,
    Sensor,
    User,
}

impl NodeKind {
    fn code(self) -> u32 {
        match self {
            NodeKind::BaseStation => 1,
            NodeKind::Sink => 2,
            NodeKind::Sensor => 3,
            NodeKind::User => 4,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            1 => NodeKind::BaseStation,
            2 => NodeKind::Sink,
            3 => NodeKind::Sensor,
            4 => NodeKind::User,
            _ => return None,
        })
    }

    pub fn prefix(self) -> &'static str {
        match self {
            NodeKind::BaseStation => "BS",
            NodeKind::Sink => "S",
            NodeKind::Sensor => "N",
            NodeKind::User => "U",
        }
    }
}

/// Largest per-kind identifier; the wire form packs the kind into the top byte.
pub const MAX_NODE_ID: u32 = (1 << 24) - 1;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub kind: NodeKind,
    pub id: u32,
}

impl NodeId {
    /// Panics if `id` does not fit in 24 bits; configuration loading validates ids first.
    pub fn new(kind: NodeKind, id: u32) -> Self {
        assert!(id <= MAX_NODE_ID, "node id {id} exceeds 24 bits");
        Self { kind, id }
    }

    pub fn base_station(id: u32) -> Self {
        Self::new(NodeKind::BaseStation, id)
    }

    pub fn sink(id: u32) -> Self {
        Self::new(NodeKind::Sink, id)
    }

    pub fn sensor(id: u32) -> Self {
        Self::new(NodeKind::Sensor, id)
    }

    pub fn user(id: u32) -> Self {
        Self::new(NodeKind::User, id)
    }

    pub fn wire(self) -> u32 {
        (self.kind.code() << 24) | self.id
    }

    pub fn from_wire(raw: u32) -> Option<Self> {
        let kind = NodeKind::from_code(raw >> 24)?;
        Some(Self { kind, id: raw & MAX_NODE_ID })
    }

    pub fn to_be_bytes(self) -> [u8; 4] {
        self.wire().to_be_bytes()
    }

    pub fn is_initiator(self) -> bool {
        matches!(self.kind, NodeKind::Sensor | NodeKind::User)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid node id {0:?}: expected BS<n>, S<n>, N<n> or U<n> with n < 2^24")]
pub struct ParseNodeIdError(pub String);

impl FromStr for NodeId {
    type Err = ParseNodeIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNodeIdError(s.to_string());
        let split = s.find(|c: char| c.is_ascii_digit()).ok_or_else(err)?;
        let kind = match &s[..split] {
            "BS" => NodeKind::BaseStation,
            "S" => NodeKind::Sink,
            "N" => NodeKind::Sensor,
            "U" => NodeKind::User,
            _ => return Err(err()),
        };
        let id: u32 = s[split..].parse().map_err(|_| err())?;
        if id > MAX_NODE_ID {
            return Err(err());
        }
        Ok(NodeId { kind, id })
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct GroupId(pub u32);

impl GroupId {
    pub fn to_be_bytes(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}
