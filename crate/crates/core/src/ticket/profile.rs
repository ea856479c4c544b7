use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::encoding::{DecodeError, FieldReader, FieldWriter};
use crate::crypto::{NodeId, SecretNumber};

/// Access-rights bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Permissions(pub u32);

impl Permissions {
    pub const REPORT: Permissions = Permissions(1);
    pub const READ_SINK: Permissions = Permissions(1 << 1);
    pub const READ_SENSOR: Permissions = Permissions(1 << 2);

    pub fn contains(self, other: Permissions) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for Permissions {
    type Output = Permissions;
    fn bitor(self, o: Permissions) -> Permissions {
        Permissions(self.0 | o.0)
    }
}

/// A profile as held in the base stations' store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub node: NodeId,
    pub n_s: SecretNumber,
    pub permissions: Permissions,
    pub registered_at: u64,
    /// H(password) for sensors registered with a password.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password_hash: Option<[u8; 32]>,
}

impl Profile {
    pub fn record(&self) -> ProfileRecord {
        ProfileRecord { node: self.node, permissions: self.permissions, registered_at: self.registered_at }
    }
}

/// The part of a profile carried inside tickets. The long-term secret stays in the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfileRecord {
    pub node: NodeId,
    pub permissions: Permissions,
    pub registered_at: u64,
}

impl ProfileRecord {
    pub(crate) fn write(&self, w: FieldWriter) -> FieldWriter {
        w.node(self.node).u32(self.permissions.0).u64(self.registered_at)
    }

    pub(crate) fn read(r: &mut FieldReader<'_>) -> Result<Self, DecodeError> {
        Ok(Self { node: r.node()?, permissions: Permissions(r.u32()?), registered_at: r.u64()? })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileStore {
    profiles: BTreeMap<NodeId, Profile>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// User profiles must grant at least one permission.
    pub fn register(&mut self, profile: Profile) -> Result<(), super::TicketError> {
        if profile.node.kind == crate::crypto::NodeKind::User && profile.permissions.is_empty() {
            return Err(super::TicketError::InvalidConfig("user profile without permissions"));
        }
        self.profiles.insert(profile.node, profile);
        Ok(())
    }

    pub fn get(&self, node: NodeId) -> Option<&Profile> {
        self.profiles.get(&node)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }
}
