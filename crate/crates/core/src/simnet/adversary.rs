//! Intruder behavior. The engine shows every honest transmission to the
//! adversary, which may let it through, suppress it, and inject copies.

use crate::crypto::NodeId;
use crate::protocol::{Dest, Envelope, Message, ProtocolMessage};

use super::config::ScenarioScript;

/// A message the intruder puts on air, delivered `delay` ticks after capture.
#[derive(Debug, Clone)]
pub struct Injection {
    pub delay: u64,
    pub msg: Message,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub pass: bool,
    pub inject: Vec<Injection>,
}

impl Verdict {
    pub fn pass() -> Self {
        Self { pass: true, inject: Vec::new() }
    }

    pub fn block() -> Self {
        Self { pass: false, inject: Vec::new() }
    }
}

pub trait Adversary {
    fn intercept(&mut self, now: u64, msg: &Message) -> Verdict;
}

/// Eavesdrops only.
#[derive(Debug, Default, Clone, Copy)]
pub struct Passive;

impl Adversary for Passive {
    fn intercept(&mut self, _now: u64, _msg: &Message) -> Verdict {
        Verdict::pass()
    }
}

/// Retargets a captured message, keeping its body and timestamp.
fn spoof(msg: &Message, sender: NodeId, receiver: NodeId) -> Message {
    Message { env: Envelope { sender, receiver: Dest::Unicast(receiver), timestamp: msg.env.timestamp }, ..msg.clone() }
}

fn is_unicast(msg: &Message, from: NodeId, to: NodeId) -> bool {
    msg.env.sender == from && msg.env.receiver == Dest::Unicast(to)
}

/// Copies the victim's join request and challenge response to a second sink
/// and keeps that sink's replies away from the victim.
#[derive(Debug, Clone)]
pub struct Replay {
    pub victim: NodeId,
    pub sink: NodeId,
    pub replay_to: NodeId,
}

impl Adversary for Replay {
    fn intercept(&mut self, _now: u64, msg: &Message) -> Verdict {
        if is_unicast(msg, self.replay_to, self.victim) {
            return Verdict::block();
        }
        let replayable = matches!(msg.body, ProtocolMessage::Join { .. } | ProtocolMessage::Accept { .. });
        if replayable && is_unicast(msg, self.victim, self.sink) {
            let copy = spoof(msg, self.victim, self.replay_to);
            return Verdict { pass: true, inject: vec![Injection { delay: 1, msg: copy }] };
        }
        Verdict::pass()
    }
}

/// Two colluding intruders: one beside the victim posing as the near sink,
/// one in the remote region posing as the victim.
#[derive(Debug, Clone)]
pub struct Wormhole {
    pub victim: NodeId,
    pub near: NodeId,
    pub remote: NodeId,
    pub tunnel_delay: u64,
}

impl Adversary for Wormhole {
    fn intercept(&mut self, _now: u64, msg: &Message) -> Verdict {
        let delay = self.tunnel_delay + 1;
        if is_unicast(msg, self.victim, self.near) {
            let m = spoof(msg, self.victim, self.remote);
            return Verdict { pass: false, inject: vec![Injection { delay, msg: m }] };
        }
        if is_unicast(msg, self.remote, self.victim) {
            let m = spoof(msg, self.near, self.victim);
            return Verdict { pass: false, inject: vec![Injection { delay, msg: m }] };
        }
        Verdict::pass()
    }
}

/// Drops every unicast addressed to `target` from tick `from` on.
#[derive(Debug, Clone)]
pub struct BlackHole {
    pub target: NodeId,
    pub from: u64,
}

impl Adversary for BlackHole {
    fn intercept(&mut self, now: u64, msg: &Message) -> Verdict {
        if now >= self.from && msg.env.receiver == Dest::Unicast(self.target) {
            Verdict::block()
        } else {
            Verdict::pass()
        }
    }
}

pub fn from_script(script: &ScenarioScript) -> Box<dyn Adversary> {
    match *script {
        ScenarioScript::Replay { victim, sink, replay_to } => Box::new(Replay { victim, sink, replay_to }),
        ScenarioScript::Wormhole { victim, near, remote, tunnel_delay } => Box::new(Wormhole { victim, near, remote, tunnel_delay }),
        ScenarioScript::BlackHole { target, from } => Box::new(BlackHole { target, from }),
    }
}
