//! JSON-lines trace log.

use serde::{Deserialize, Serialize};

use crate::crypto::NodeId;
use crate::metrics::{OpCounts, Phase, Units};
use crate::protocol::{Dest, EventKind};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cast {
    Unicast,
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Honest,
    Intruder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Delivered,
    /// Suppressed by the intruder.
    Blocked,
    /// No radio link to the addressee.
    Unlinked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsgRecord {
    pub tick: u64,
    /// Latest delivery tick; absent when nothing was delivered.
    pub deliver_tick: Option<u64>,
    pub from: NodeId,
    pub to: Dest,
    pub variant: String,
    pub size_bytes: usize,
    pub units: Units,
    pub accounted_bytes: u64,
    pub cast: Cast,
    pub receivers: u32,
    pub phase: Phase,
    pub origin: Origin,
    pub status: Status,
    /// Wire frame, hex.
    pub frame: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub tick: u64,
    pub kind: EventKind,
    pub node: NodeId,
    pub subject: NodeId,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum TraceRecord {
    Meta { seed: u64, instrumented: bool },
    Msg(MsgRecord),
    Ops { tick: u64, node: NodeId, phase: Phase, counts: OpCounts },
    Event(EventRecord),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceLog {
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| SimError::Trace(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn messages(&self) -> impl Iterator<Item = &MsgRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Msg(m) => Some(m),
            _ => None,
        })
    }

    pub fn honest_messages(&self) -> impl Iterator<Item = &MsgRecord> {
        self.messages().filter(|m| m.origin == Origin::Honest)
    }

    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &EventRecord> {
        self.events().filter(move |e| e.kind == kind)
    }

    /// Every frame that went on air, in order.
    pub fn frames(&self) -> impl Iterator<Item = Vec<u8>> + '_ {
        self.messages().filter_map(|m| hex::decode(&m.frame).ok())
    }
}
