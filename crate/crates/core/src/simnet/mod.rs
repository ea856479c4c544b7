//! Deterministic discrete-event simulator with a scripted Dolev-Yao intruder.

pub mod adversary;
pub mod closure;
pub mod config;
mod engine;
pub mod scenarios;
pub mod trace;

use thiserror::Error;

use crate::crypto::{KeyMaterial, NodeId, NodeKind, Suite};
use crate::keychain::{GroupContext, KeyChain};
use crate::protocol::RoleState;

pub use closure::{close, intruder_closure, Grade, IntruderState, Knowledge};
pub use config::{
    BaseStationSpec, InitiatorSpec, LinkSpec, PermissionName, ScenarioScript, ScheduledIntent, SimConfig, SinkSpec, Topology,
};
pub use engine::{group_of, run, Network, Provisioning, SimOutput, Simulator};
pub use scenarios::{ScenarioKind, ScenarioOutcome};
pub use trace::{Cast, EventRecord, MsgRecord, Origin, Status, TraceLog, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("malformed trace: {0}")]
    Trace(String),
}

/// A value the intruder must never be able to derive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Secret {
    pub label: String,
    pub bytes: Vec<u8>,
}

fn chain_secrets(out: &mut Vec<Secret>, chain: &KeyChain) {
    for (k, z) in chain.zeta.iter().enumerate() {
        out.push(Secret { label: format!("generator G{}/e{}/{k}", chain.group.0, chain.epoch), bytes: z.as_bytes().to_vec() });
    }
}

fn key(out: &mut Vec<Secret>, label: String, k: &KeyMaterial) {
    out.push(Secret { label, bytes: k.as_bytes().to_vec() });
}

/// Every session key, interval key, group key, chain generator, temporary
/// key and node secret that existed during the run.
pub fn secret_inventory(run: &SimOutput) -> Vec<Secret> {
    let suite = Suite::default();
    let mut out = Vec::new();
    let prov = &run.provisioning;
    for (bs, k) in &prov.group_keys {
        key(&mut out, format!("group-key {bs}"), k);
    }
    let mut chains: Vec<KeyChain> = Vec::new();
    for (bs, msg) in &prov.first_key_msgs {
        if let Ok(c) = KeyChain::new(group_of(*bs), msg.epoch, msg.td, run_chain_length(run), msg.n0_group, 0) {
            chains.push(c);
        }
    }
    let mut add_ctx = |g: &GroupContext| chains.extend(g.chains().cloned());
    for st in run.nodes.values() {
        match st {
            RoleState::BaseStation(b) => {
                add_ctx(&b.group);
                b.foreign.values().for_each(&mut add_ctx);
            }
            RoleState::Sink(s) => add_ctx(&s.group),
            _ => {}
        }
    }
    chains.sort_by_key(|c| (c.group, c.epoch));
    chains.dedup_by(|a, b| a.group == b.group && a.epoch == b.epoch);
    for c in &chains {
        chain_secrets(&mut out, c);
    }
    let bss: Vec<NodeId> = prov.group_keys.keys().copied().collect();
    for (node, n_s) in &prov.node_secrets {
        out.push(Secret { label: format!("node-secret {node}"), bytes: n_s.0.to_be_bytes().to_vec() });
        for bs in &bss {
            if let Ok(k) = suite.derive_temp_key(*bs, *n_s) {
                key(&mut out, format!("temp-key {node}/{bs}"), &k);
            }
        }
    }
    for st in run.nodes.values() {
        match st {
            RoleState::Sensor(s) | RoleState::User(s) => {
                for (bs, t) in &s.tickets {
                    key(&mut out, format!("session-key {}/{bs}", s.id), &t.session_key);
                    out.push(Secret { label: format!("ticket-nonce {}/{bs}", s.id), bytes: t.nonce.to_be_bytes().to_vec() });
                    let nh = suite.nonce_hash(t.nonce);
                    for c in &chains {
                        for (k, z) in c.zeta.iter().enumerate() {
                            let ik = suite.derive_interval_key(z, &nh);
                            key(&mut out, format!("interval-key {}/G{}/e{}/{k}", s.id, c.group.0, c.epoch), &ik);
                        }
                    }
                }
                for (peer, sess) in &s.sessions {
                    key(&mut out, format!("session-key {}@{peer}", s.id), &sess.key);
                    if let Some(p) = &sess.private_key {
                        key(&mut out, format!("private-key {}@{peer}", s.id), p);
                    }
                }
            }
            RoleState::Sink(s) => {
                for (peer, sess) in &s.sessions {
                    key(&mut out, format!("session-key {}@{peer}", s.id), &sess.key);
                    if let Some(p) = &sess.private_key {
                        key(&mut out, format!("private-key {}@{peer}", s.id), p);
                    }
                }
            }
            RoleState::BaseStation(_) => {}
        }
    }
    out
}

fn run_chain_length(run: &SimOutput) -> u32 {
    run.nodes
        .values()
        .find_map(|st| match st {
            RoleState::BaseStation(b) => Some(b.group.current.intervals()),
            _ => None,
        })
        .unwrap_or(1)
}

/// Labels of the secrets derivable from the intruder's knowledge.
pub fn knowledge_gain(run: &SimOutput) -> Vec<String> {
    let k = intruder_closure(&run.intruder);
    let reach = k.derivable();
    secret_inventory(run).into_iter().filter(|s| k.contains(&s.bytes) || reach.contains(&s.bytes)).map(|s| s.label).collect()
}

/// Node kinds print as role names in outcomes.
pub(crate) fn role_name(n: NodeId) -> &'static str {
    match n.kind {
        NodeKind::BaseStation => "base-station",
        NodeKind::Sink => "sink",
        NodeKind::Sensor => "sensor",
        NodeKind::User => "user",
    }
}
