//! Role state machines for base stations, sinks, sensors and users.
//!
//! [`step`] is the single transition function: it consumes a role state and
//! one input (a delivered message, a local workload intent, or a timer) and
//! returns the new state with the messages, events and timers it produced.
//! Failures never surface as errors; they become events or silent drops.

mod base_station;
mod initiator;
pub mod message;
pub mod payload;
mod sink;

use std::collections::BTreeSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::{GroupId, NodeId, Nonce};
use crate::metrics::{Meter, OpCounts, Phase, Units};
use crate::ticket::{IssueOptions, Ticket, TicketMode, VerifyOptions};

pub use base_station::{BaseStationState, UserStatus};
pub use initiator::{DataState, HeldTicket, InitiatorSession, InitiatorState};
pub use message::{decode_frame, encode_frame, Dest, Envelope, ForwardPayload, Message, ProtocolMessage, Purpose};
pub use sink::{SinkSession, SinkState};

/// Parameters shared by every node of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub mode: TicketMode,
    pub issue: IssueOptions,
    pub verify: VerifyOptions,
    pub chain_length: u32,
    pub td: u64,
    /// Initiator wait per hop of the response path.
    pub hop_wait: u64,
    pub max_resends: u32,
    /// How long a base station holds a join grant to batch duplicate relays.
    pub grant_hold: u64,
    pub hello_period: u64,
    pub timestamps: bool,
    pub max_hop_delay: u64,
    pub timestamp_tolerance: u64,
    /// Largest accepted age of `T_R` at first use; one interval when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tr_skew_bound: Option<u64>,
    pub black_hole_threshold: u32,
    pub ack_wait: u64,
    pub secret_mode: bool,
}

impl ProtocolConfig {
    pub fn interval_len(&self) -> u64 {
        self.td / self.chain_length as u64
    }

    pub fn tr_skew_bound(&self) -> u64 {
        self.tr_skew_bound.unwrap_or_else(|| self.interval_len())
    }

    /// Lifetime of a sink's unconfirmed challenge.
    pub fn pending_ttl(&self) -> u64 {
        self.interval_len()
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let td = 64;
        let chain_length = 8;
        Self {
            mode: TicketMode::Indexed,
            issue: IssueOptions::default(),
            verify: VerifyOptions::default(),
            chain_length,
            td,
            hop_wait: 4,
            max_resends: 2,
            grant_hold: 1,
            hello_period: 16,
            timestamps: false,
            max_hop_delay: 1,
            timestamp_tolerance: 0,
            tr_skew_bound: None,
            black_hole_threshold: 3,
            ack_wait: 4,
            secret_mode: false,
        }
    }
}

/// A workload entry handed to the acting node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Intent {
    /// Activation through a sink (sensor activation, or user activation out of base-station range).
    Activate { node: NodeId, sink: NodeId },
    /// Direct user activation with a base station in range.
    UserJoin { user: NodeId, bs: NodeId },
    /// Ticket-based session with another sink (same-group or cross-group).
    Switch { node: NodeId, sink: NodeId },
    /// User access to a sensor.
    AccessSensor { user: NodeId, sensor: NodeId },
    /// `count` sensor reports, one every `period` ticks.
    Report { sensor: NodeId, count: u32, period: u64 },
}

impl Intent {
    pub fn actor(&self) -> NodeId {
        match self {
            Intent::Activate { node, .. } | Intent::Switch { node, .. } => *node,
            Intent::UserJoin { user, .. } | Intent::AccessSensor { user, .. } => *user,
            Intent::Report { sensor, .. } => *sensor,
        }
    }

    pub fn phase(&self) -> Phase {
        match self {
            Intent::Activate { .. } | Intent::UserJoin { .. } => Phase::Registration,
            Intent::Switch { .. } | Intent::AccessSensor { .. } => Phase::LoginAuth,
            Intent::Report { .. } => Phase::Data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "timer", rename_all = "kebab-case")]
pub enum Timer {
    Hello,
    Rollover,
    GrantFlush { batch: u64, phase: Phase },
    ResponseTimeout { run: u64, attempt: u32, phase: Phase },
    ChallengeExpiry { peer: NodeId, nonce: Nonce, phase: Phase },
    WindowStep { epoch: u64, step: u32 },
    DiscardPrevious { group: GroupId, epoch: u64 },
    DataSend,
    AckTimeout { seq: u32, nonce: Nonce },
}

impl Timer {
    /// Periodic timers do not keep a simulation from reaching quiescence.
    pub fn is_periodic(&self) -> bool {
        matches!(self, Timer::Hello | Timer::Rollover)
    }

    pub fn phase(&self) -> Phase {
        match self {
            Timer::Hello => Phase::Discovery,
            Timer::Rollover | Timer::WindowStep { .. } | Timer::DiscardPrevious { .. } => Phase::KeyManagement,
            Timer::GrantFlush { phase, .. } | Timer::ResponseTimeout { phase, .. } | Timer::ChallengeExpiry { phase, .. } => *phase,
            Timer::DataSend | Timer::AckTimeout { .. } => Phase::Data,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Input {
    Deliver(Message),
    Start(Intent),
    Timer(Timer),
}

impl Input {
    fn phase(&self) -> Phase {
        match self {
            Input::Deliver(m) => m.body.phase(),
            Input::Start(i) => i.phase(),
            Input::Timer(t) => t.phase(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    SessionEstablished,
    TicketIssued,
    ChallengeFailed,
    TicketInvalidated,
    AttackDetected,
    IntruderIdentified,
    BlackHoleSuspected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    pub kind: EventKind,
    /// Node that raised the event.
    pub node: NodeId,
    pub subject: NodeId,
    pub detail: String,
}

/// Everything one step produced.
#[derive(Debug, Clone)]
pub struct Transition {
    pub outgoing: Vec<Message>,
    pub events: Vec<ProtocolEvent>,
    /// Timers to fire at the given local time.
    pub timers: Vec<(u64, Timer)>,
    pub ops: OpCounts,
    pub phase: Phase,
}

/// Per-step environment: local clock, the node's generator and the network parameters.
pub struct StepCtx<'a> {
    pub now: u64,
    pub rng: &'a mut dyn RngCore,
    pub cfg: &'a ProtocolConfig,
}

/// Output collector threaded through the role handlers.
pub(crate) struct Out {
    me: NodeId,
    now: u64,
    timestamps: bool,
    pub meter: Meter,
    msgs: Vec<Message>,
    events: Vec<ProtocolEvent>,
    timers: Vec<(u64, Timer)>,
}

impl Out {
    fn new(me: NodeId, ctx: &StepCtx<'_>) -> Self {
        Self {
            me,
            now: ctx.now,
            timestamps: ctx.cfg.timestamps,
            meter: Meter::default(),
            msgs: Vec::new(),
            events: Vec::new(),
            timers: Vec::new(),
        }
    }

    pub fn send(&mut self, to: NodeId, body: ProtocolMessage, accounted: Units) {
        self.push(Dest::Unicast(to), body, accounted);
    }

    pub fn broadcast(&mut self, body: ProtocolMessage, accounted: Units) {
        self.push(Dest::Broadcast, body, accounted);
    }

    fn push(&mut self, receiver: Dest, body: ProtocolMessage, accounted: Units) {
        let env = Envelope { sender: self.me, receiver, timestamp: self.timestamps.then_some(self.now) };
        self.msgs.push(Message { env, body, accounted });
    }

    pub fn event(&mut self, kind: EventKind, subject: NodeId, detail: impl Into<String>) {
        self.events.push(ProtocolEvent { kind, node: self.me, subject, detail: detail.into() });
    }

    pub fn timer(&mut self, at: u64, t: Timer) {
        self.timers.push((at, t));
    }
}

/// Draws a challenge nonce never issued before by this node.
pub(crate) fn fresh_nonce(issued: &mut BTreeSet<Nonce>, rng: &mut dyn RngCore) -> Nonce {
    loop {
        let n = Nonce(rng.next_u32());
        if issued.insert(n) {
            return n;
        }
    }
}

/// Accounted sizes of message bodies, in CK/Int units.
pub(crate) mod units {
    use super::Units;
    use crate::ticket::Ticket;

    /// `N || n0` of a join, plus one CK when the password hash rides along.
    pub fn join(ct: &[u8]) -> Units {
        let plain = ct.len().saturating_sub(crate::crypto::SivChaCha20Poly1305::OVERHEAD);
        Units::new(if plain > 12 { 1 } else { 0 }, 2)
    }

    pub fn ticket(t: &Ticket) -> Units {
        t.accounted_units()
    }

    /// `u0`: response (Int for `n0+1`, CK for `H(n0)`), `n1`, `T_R`, `K_S`, plus the ticket.
    pub fn u0(t: &Ticket, hashed_response: bool) -> Units {
        let response = if hashed_response { Units::new(1, 0) } else { Units::new(0, 1) };
        response + Units::new(1, 2) + ticket(t)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum RoleState {
    BaseStation(BaseStationState),
    Sink(SinkState),
    Sensor(InitiatorState),
    User(InitiatorState),
}

impl RoleState {
    pub fn id(&self) -> NodeId {
        match self {
            RoleState::BaseStation(s) => s.id,
            RoleState::Sink(s) => s.id,
            RoleState::Sensor(s) | RoleState::User(s) => s.id,
        }
    }
}

/// The transition function of every role.
pub fn step(mut state: RoleState, input: Input, ctx: &mut StepCtx<'_>) -> (RoleState, Transition) {
    let phase = input.phase();
    let mut out = Out::new(state.id(), ctx);
    let fresh = match &input {
        Input::Deliver(m) => timestamp_ok(m, ctx, &mut out),
        _ => true,
    };
    if fresh {
        match &mut state {
            RoleState::BaseStation(s) => s.handle(input, ctx, &mut out),
            RoleState::Sink(s) => s.handle(input, ctx, &mut out),
            RoleState::Sensor(s) | RoleState::User(s) => s.handle(input, ctx, &mut out),
        }
    }
    let tr = Transition { outgoing: out.msgs, events: out.events, timers: out.timers, ops: out.meter.take(), phase };
    (state, tr)
}

/// With timestamps enabled, a message older than one hop plus tolerance
/// reveals a relay and is dropped.
fn timestamp_ok(m: &Message, ctx: &StepCtx<'_>, out: &mut Out) -> bool {
    if !ctx.cfg.timestamps {
        return true;
    }
    let Some(ts) = m.env.timestamp else {
        out.event(EventKind::AttackDetected, m.env.sender, "missing-timestamp");
        return false;
    };
    let age = ctx.now.saturating_sub(ts);
    if age > ctx.cfg.max_hop_delay + ctx.cfg.timestamp_tolerance {
        out.event(EventKind::AttackDetected, m.env.sender, format!("stale-timestamp: {} arrived {age} ticks after sending", m.body.name()));
        return false;
    }
    true
}

/// Ticket framing check used by handlers that received a ticket field.
pub(crate) fn ticket_mode_ok(t: &Ticket, cfg: &ProtocolConfig) -> bool {
    t.mode == cfg.mode
}

#[cfg(test)]
mod tests;
