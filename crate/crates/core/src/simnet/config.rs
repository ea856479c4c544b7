//! Declarative simulation configuration, parsed from TOML.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::crypto::NodeId;
use crate::protocol::{Intent, ProtocolConfig};
use crate::ticket::Permissions;

use super::SimError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStationSpec {
    pub id: NodeId,
    #[serde(default)]
    pub neighbors: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkSpec {
    pub id: NodeId,
    pub bs: NodeId,
    /// Base stations whose group key this sink also holds.
    #[serde(default)]
    pub foreign_groups: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitiatorSpec {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permissions: Option<Vec<PermissionName>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermissionName {
    Report,
    ReadSink,
    ReadSensor,
}

impl PermissionName {
    pub fn bits(self) -> Permissions {
        match self {
            PermissionName::Report => Permissions::REPORT,
            PermissionName::ReadSink => Permissions::READ_SINK,
            PermissionName::ReadSensor => Permissions::READ_SENSOR,
        }
    }
}

/// Radio link between an initiator and a sink, base station or sensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    #[serde(default)]
    pub base_stations: Vec<BaseStationSpec>,
    #[serde(default)]
    pub sinks: Vec<SinkSpec>,
    #[serde(default)]
    pub sensors: Vec<InitiatorSpec>,
    #[serde(default)]
    pub users: Vec<InitiatorSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledIntent {
    pub at: u64,
    #[serde(flatten)]
    pub intent: Intent,
}

/// Scripted intruder behavior, referring to topology roles only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioScript {
    /// Copy the victim's M1 and M6 from `sink` to `replay_to`.
    Replay { victim: NodeId, sink: NodeId, replay_to: NodeId },
    /// Tunnel between the victim near `near` and `remote`.
    Wormhole { victim: NodeId, near: NodeId, remote: NodeId, tunnel_delay: u64 },
    /// Drop everything addressed to `target` from tick `from`.
    BlackHole { target: NodeId, from: u64 },
}

fn default_delay() -> u64 {
    1
}

fn default_max_ticks() -> u64 {
    10_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default = "default_delay")]
    pub default_delay: u64,
    /// Hard stop.
    #[serde(default = "default_max_ticks")]
    pub max_ticks: u64,
    /// Keep running at least until this tick even when quiescent.
    #[serde(default)]
    pub min_ticks: u64,
    /// Random per-node clock offsets; forced off when timestamps are enabled.
    #[serde(default = "default_true")]
    pub clock_offsets: bool,
    #[serde(default)]
    pub workload: Vec<ScheduledIntent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intruder: Option<ScenarioScript>,
}

impl SimConfig {
    pub fn new(seed: u64, topology: Topology) -> Self {
        Self {
            seed,
            protocol: ProtocolConfig::default(),
            topology,
            default_delay: 1,
            max_ticks: default_max_ticks(),
            min_ticks: 0,
            clock_offsets: true,
            workload: Vec::new(),
            intruder: None,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn schedule(mut self, at: u64, intent: Intent) -> Self {
        self.workload.push(ScheduledIntent { at, intent });
        self
    }

    /// Checks the topology and workload for consistency.
    pub fn validate(&self) -> Result<(), SimError> {
        use crate::crypto::NodeKind::*;
        let err = |m: String| Err(SimError::Config(m));
        let p = &self.protocol;
        if p.chain_length == 0 || p.td == 0 || !p.td.is_multiple_of(p.chain_length as u64) {
            return err(format!("protocol.td ({}) must be a positive multiple of protocol.chain_length ({})", p.td, p.chain_length));
        }
        if p.mode == crate::ticket::TicketMode::Tree && !(p.chain_length >= 4 && p.chain_length.is_power_of_two()) {
            return err(format!("ticket mode 3 needs a power-of-two chain length of at least 4 (got {})", p.chain_length));
        }
        if self.default_delay == 0 {
            return err("default_delay must be at least 1".into());
        }
        let t = &self.topology;
        let mut seen = BTreeSet::new();
        let all = t
            .base_stations
            .iter()
            .map(|b| (b.id, BaseStation, "base_stations"))
            .chain(t.sinks.iter().map(|s| (s.id, Sink, "sinks")))
            .chain(t.sensors.iter().map(|s| (s.id, Sensor, "sensors")))
            .chain(t.users.iter().map(|u| (u.id, User, "users")));
        for (id, kind, table) in all {
            if id.kind != kind {
                return err(format!("{table}: {id} has the wrong kind of identifier"));
            }
            if !seen.insert(id) {
                return err(format!("{table}: duplicate node {id}"));
            }
        }
        let bss: BTreeMap<NodeId, &BaseStationSpec> = t.base_stations.iter().map(|b| (b.id, b)).collect();
        for b in &t.base_stations {
            for n in &b.neighbors {
                let Some(other) = bss.get(n) else { return err(format!("base_stations: {} lists unknown neighbor {n}", b.id)) };
                if !other.neighbors.contains(&b.id) || *n == b.id {
                    return err(format!("base_stations: neighbor relation {} - {n} must be symmetric", b.id));
                }
            }
        }
        for s in &t.sinks {
            if !bss.contains_key(&s.bs) {
                return err(format!("sinks: {} is associated with unknown base station {}", s.id, s.bs));
            }
            for g in &s.foreign_groups {
                if !bss.contains_key(g) || *g == s.bs {
                    return err(format!("sinks: {} lists invalid foreign group {g}", s.id));
                }
            }
        }
        for u in &t.users {
            if matches!(&u.permissions, Some(p) if p.is_empty()) {
                return err(format!("users: {} must hold at least one permission", u.id));
            }
        }
        for l in &t.links {
            for n in [l.a, l.b] {
                if !seen.contains(&n) {
                    return err(format!("links: unknown node {n}"));
                }
            }
            let ok = matches!(
                (l.a.kind, l.b.kind),
                (Sensor | User, Sink | BaseStation) | (Sink | BaseStation, Sensor | User) | (User, Sensor) | (Sensor, User)
            );
            if !ok {
                return err(format!("links: {} - {} is not an initiator link", l.a, l.b));
            }
            if l.delay == Some(0) {
                return err(format!("links: {} - {} has zero delay", l.a, l.b));
            }
        }
        for w in &self.workload {
            let actor = w.intent.actor();
            if !seen.contains(&actor) || !actor.is_initiator() {
                return err(format!("workload: actor {actor} is not a configured sensor or user"));
            }
            let target = match &w.intent {
                Intent::Activate { sink, .. } | Intent::Switch { sink, .. } => Some(*sink),
                Intent::UserJoin { bs, .. } => Some(*bs),
                Intent::AccessSensor { sensor, .. } => Some(*sensor),
                Intent::Report { .. } => None,
            };
            if let Some(t) = target {
                if !seen.contains(&t) {
                    return err(format!("workload: unknown target {t}"));
                }
            }
            if matches!(w.intent, Intent::UserJoin { .. } | Intent::AccessSensor { .. }) && actor.kind != User {
                return err(format!("workload: {actor} cannot run a user exchange"));
            }
        }
        Ok(())
    }
}
