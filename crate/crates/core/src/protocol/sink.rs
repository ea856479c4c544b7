//! Sink behavior: relays joins, verifies tickets, holds initiator sessions,
//! forwards data and runs the moving-window reissue at each epoch rollover.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{GroupId, KeyMaterial, NodeId, NodeKind, Nonce};
use crate::keychain::window::{MovingWindow, WindowAction};
use crate::keychain::{start_epoch, GroupContext, KeyMsg};
use crate::metrics::Units;
use crate::ticket::{open_outer, reissue_ticket, verify_ticket, Permissions, Ticket, TicketError, TicketInner, VerifiedTicket};

use super::message::{ForwardPayload, ProtocolMessage as M, Purpose};
use super::payload::{self, GrantSinkPart};
use super::{fresh_nonce, ticket_mode_ok, units, EventKind, Input, Out, StepCtx, Timer};

/// An initiator session in accepting-data status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkSession {
    pub key: KeyMaterial,
    pub private_key: Option<KeyMaterial>,
    pub inner: TicketInner,
    pub n1: Nonce,
    /// Epoch and interval of the ticket currently backing the session.
    pub epoch: u64,
    pub interval: u32,
    pub established_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Awaiting {
    Accept(Purpose),
    SwitchConfirm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Pending {
    awaiting: Awaiting,
    verified: VerifiedTicket,
    private_key: Option<KeyMaterial>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkState {
    pub id: NodeId,
    pub bs: NodeId,
    pub group: GroupContext,
    /// Keys of groups this sink belongs to without tracking their chains.
    pub foreign_keys: BTreeMap<GroupId, KeyMaterial>,
    pub sessions: BTreeMap<NodeId, SinkSession>,
    pub window: Option<MovingWindow>,
    issued: BTreeSet<Nonce>,
    /// Outstanding `n2` challenges per relayed initiator.
    relays: BTreeMap<NodeId, BTreeSet<Nonce>>,
    pending: BTreeMap<(NodeId, Nonce), Pending>,
}

impl SinkState {
    pub fn new(id: NodeId, bs: NodeId, group: GroupContext, foreign_keys: BTreeMap<GroupId, KeyMaterial>) -> Self {
        Self {
            id,
            bs,
            group,
            foreign_keys,
            sessions: BTreeMap::new(),
            window: None,
            issued: BTreeSet::new(),
            relays: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn issued_nonces(&self) -> &BTreeSet<Nonce> {
        &self.issued
    }

    /// Challenges sent and not yet answered.
    pub fn pending_count(&self) -> usize {
        self.pending.len()
    }

    pub(super) fn handle(&mut self, input: Input, ctx: &mut StepCtx<'_>, out: &mut Out) {
        match input {
            Input::Start(_) => {}
            Input::Timer(t) => self.on_timer(t, ctx, out),
            Input::Deliver(m) => self.on_message(m.env.sender, m.body, ctx, out),
        }
    }

    fn on_timer(&mut self, t: Timer, ctx: &mut StepCtx<'_>, out: &mut Out) {
        match t {
            Timer::Hello => {
                out.broadcast(M::Hello { bs: self.bs, sink: self.id }, Units::new(0, 2));
                out.timer(ctx.now + ctx.cfg.hello_period, Timer::Hello);
            }
            Timer::ChallengeExpiry { peer, nonce, .. } => {
                if self.pending.remove(&(peer, nonce)).is_some() {
                    out.event(EventKind::ChallengeFailed, peer, "challenge expired unanswered");
                }
            }
            Timer::WindowStep { epoch, step } => self.window_step(epoch, step, ctx, out),
            _ => {}
        }
    }

    fn on_message(&mut self, from: NodeId, body: M, ctx: &mut StepCtx<'_>, out: &mut Out) {
        match body {
            M::KeyMsg { group, ct } if from == self.bs && group == self.group.group_id => self.on_key_msg(&ct, ctx, out),
            M::Join { bs_hint, resend, ct } if from.is_initiator() => {
                let sink_ct = self.challenge_bs(from, ctx, out);
                let u = Units::new(0, 2) + units::join(&ct);
                let payload = ForwardPayload::Join { bs_hint, resend, ct };
                out.send(self.bs, M::ForwardJoin { initiator: from, sink_ct, payload }, u);
            }
            M::Grant { purpose, u0_ct, sink_ct } if from == self.bs => self.on_grant(purpose, u0_ct, &sink_ct, ctx, out),
            M::Accept { purpose, ct } => self.on_confirm(from, Awaiting::Accept(purpose), &ct, ctx, out),
            M::SwitchConfirm { ct } => self.on_confirm(from, Awaiting::SwitchConfirm, &ct, ctx, out),
            M::SwitchReq { resend, ct, ticket } if from.is_initiator() => self.on_switch(from, resend, ct, ticket, ctx, out),
            M::SensorForward { user, ticket, n0_ct } => self.on_sensor_forward(from, user, &ticket, &n0_ct, ctx, out),
            M::SensorData { ct } => self.on_data(from, &ct, out),
            _ => {}
        }
    }

    /// `E_G(S || n2)`, remembered until the grant comes back.
    fn challenge_bs(&mut self, initiator: NodeId, ctx: &mut StepCtx<'_>, out: &mut Out) -> Vec<u8> {
        let n2 = fresh_nonce(&mut self.issued, ctx.rng);
        self.relays.entry(initiator).or_default().insert(n2);
        out.meter.encrypt(&self.group.group_key, &payload::sink_challenge(self.id, n2))
    }

    fn verify(&self, ticket: &Ticket, ctx: &StepCtx<'_>, out: &mut Out) -> Result<VerifiedTicket, TicketError> {
        if !ticket_mode_ok(ticket, ctx.cfg) {
            return Err(TicketError::InvalidTicket("unexpected retrieval mode"));
        }
        verify_ticket(&self.group, ticket, ctx.cfg.verify, &mut out.meter)
    }

    fn on_grant(&mut self, purpose: Purpose, u0_ct: Vec<u8>, sink_ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Ok(pt) = out.meter.decrypt(&self.group.group_key, sink_ct) else { return };
        let Ok(part) = GrantSinkPart::decode(&pt) else { return };
        let n2 = Nonce(part.n2_response.0.wrapping_sub(1));
        let relayed = self.relays.get_mut(&part.initiator).is_some_and(|set| set.remove(&n2));
        if !relayed {
            return out.event(EventKind::ChallengeFailed, self.bs, "grant answers no relayed request");
        }
        let verified = match self.verify(&part.ticket, ctx, out) {
            Ok(v) if v.inner.node == part.initiator => v,
            _ => return out.event(EventKind::ChallengeFailed, part.initiator, "granted ticket does not verify"),
        };
        let private_key = (purpose == Purpose::Switch && ctx.cfg.secret_mode)
            .then(|| out.meter.private_session_key(&verified.inner.session_key, verified.inner.n0, Some(part.n1)));
        let u = units::u0(&part.ticket, purpose == Purpose::Switch);
        out.send(part.initiator, M::GrantForward { purpose, u0_ct }, u);
        let ct = out.meter.encrypt(&self.group.group_key, &payload::nonce(part.n1.successor()));
        out.send(self.bs, M::ConfirmToBs { purpose, ct }, Units::new(0, 1));
        self.await_confirm(part.initiator, part.n1, Pending { awaiting: Awaiting::Accept(purpose), verified, private_key }, ctx, out);
    }

    fn await_confirm(&mut self, peer: NodeId, n1: Nonce, p: Pending, ctx: &StepCtx<'_>, out: &mut Out) {
        let phase = match p.awaiting {
            Awaiting::Accept(purpose) => purpose.phase(),
            Awaiting::SwitchConfirm => crate::metrics::Phase::LoginAuth,
        };
        self.pending.insert((peer, n1), p);
        out.timer(ctx.now + ctx.cfg.pending_ttl(), Timer::ChallengeExpiry { peer, nonce: n1, phase });
    }

    fn on_confirm(&mut self, from: NodeId, kind: Awaiting, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let candidates: Vec<(NodeId, Nonce)> =
            self.pending.iter().filter(|((peer, _), p)| *peer == from && p.awaiting == kind).map(|(k, _)| *k).collect();
        if candidates.is_empty() {
            return;
        }
        let mut tried = BTreeSet::new();
        for key in &candidates {
            let p = &self.pending[key];
            let k_s = p.verified.inner.session_key;
            if !tried.insert(k_s) {
                continue;
            }
            let Ok(pt) = out.meter.decrypt(&k_s, ct) else { continue };
            let Ok(r) = payload::read_nonce(&pt) else { continue };
            let hit = candidates.iter().find(|(_, n1)| n1.successor() == r && self.pending[&(from, *n1)].verified.inner.session_key == k_s);
            if let Some(&(_, n1)) = hit {
                let p = self.pending.remove(&(from, n1)).expect("candidate exists");
                self.open_session(from, n1, p, ctx, out);
                return;
            }
        }
        match kind {
            Awaiting::Accept(_) => {
                for key in candidates {
                    self.pending.remove(&key);
                }
                out.event(EventKind::TicketInvalidated, from, "wrong n1 response");
                out.event(EventKind::IntruderIdentified, from, "challenge response does not match the issued n1");
            }
            Awaiting::SwitchConfirm => out.event(EventKind::ChallengeFailed, from, "wrong n1 response"),
        }
    }

    fn open_session(&mut self, peer: NodeId, n1: Nonce, p: Pending, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let v = p.verified;
        let session = SinkSession {
            key: v.inner.session_key,
            private_key: p.private_key,
            inner: v.inner,
            n1,
            epoch: v.epoch,
            interval: v.interval,
            established_at: ctx.now,
        };
        self.sessions.insert(peer, session);
        out.event(EventKind::SessionEstablished, peer, "accepting data");
        // A session backed by the previous chain whose window step already ran
        // would otherwise keep that chain referenced.
        if let Some(w) = &self.window {
            let step_done = w.next_step().is_none_or(|s| s > v.interval + 2);
            if v.epoch < self.group.epoch() && step_done {
                self.reissue(peer, self.group.current.intervals() - 1, ctx, out);
            }
        }
    }

    fn on_switch(&mut self, from: NodeId, resend: bool, ct: Vec<u8>, ticket: Ticket, ctx: &mut StepCtx<'_>, out: &mut Out) {
        if !ticket_mode_ok(&ticket, ctx.cfg) {
            return;
        }
        match open_outer(self.group.group_id, &self.group.group_key, &ticket, &mut out.meter) {
            Ok(outer) => {
                if outer.node != from {
                    return;
                }
                let verified = match crate::ticket::open_inner(&self.group, &ticket, outer, ctx.cfg.verify, &mut out.meter) {
                    Ok(v) => v,
                    Err(_) => return out.event(EventKind::ChallengeFailed, from, "ticket does not verify"),
                };
                self.same_group_switch(from, &ct, verified, ctx, out);
            }
            Err(TicketError::WrongGroup) => out.event(EventKind::ChallengeFailed, from, "wrong-group"),
            Err(_) => {
                for (&gid, key) in &self.foreign_keys {
                    match open_outer(gid, key, &ticket, &mut out.meter) {
                        Ok(outer) if outer.node == from => {
                            let sink_ct = self.challenge_bs(from, ctx, out);
                            let u = Units::new(0, 2) + Units::new(1, 1) + units::ticket(&ticket);
                            let payload = ForwardPayload::Switch { resend, ct, ticket };
                            return out.send(self.bs, M::ForwardJoin { initiator: from, sink_ct, payload }, u);
                        }
                        Ok(_) => return,
                        Err(TicketError::WrongGroup) => return out.event(EventKind::ChallengeFailed, from, "wrong-group"),
                        Err(_) => continue,
                    }
                }
                out.event(EventKind::ChallengeFailed, from, "ticket opens under no known group key");
            }
        }
    }

    fn same_group_switch(&mut self, from: NodeId, ct: &[u8], verified: VerifiedTicket, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let inner = &verified.inner;
        let Ok(pt) = out.meter.decrypt(&inner.session_key, ct) else { return };
        let Ok((node, claimed)) = payload::read_switch_part(&pt) else { return };
        if node != from || out.meter.nonce_hash(inner.n0) != claimed {
            return;
        }
        let n1 = fresh_nonce(&mut self.issued, ctx.rng);
        let data: &[u8] =
            if from.kind == NodeKind::User && inner.profile.permissions.contains(Permissions::READ_SINK) { b"sink-data" } else { &[] };
        let resp = out.meter.encrypt(&inner.session_key, &payload::switch_resp(inner.n0.successor(), n1, data));
        out.send(from, M::SwitchResp { ct: resp }, Units::new(0, 2));
        self.await_confirm(from, n1, Pending { awaiting: Awaiting::SwitchConfirm, verified, private_key: None }, ctx, out);
    }

    fn on_sensor_forward(&mut self, from: NodeId, user: NodeId, ticket: &Ticket, n0_ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some(sensor_key) = self.sessions.get(&from).map(|s| s.key) else { return };
        let verified = match self.verify(ticket, ctx, out) {
            Ok(v) if v.inner.node == user => v,
            _ => return out.event(EventKind::ChallengeFailed, user, "user ticket does not verify"),
        };
        if !verified.inner.profile.permissions.contains(Permissions::READ_SENSOR) {
            return out.event(EventKind::ChallengeFailed, user, "user lacks sensor access permission");
        }
        let k_s = verified.inner.session_key;
        let Some(n0) = out.meter.decrypt(&k_s, n0_ct).ok().and_then(|pt| payload::read_nonce(&pt).ok()) else {
            return out.event(EventKind::ChallengeFailed, user, "challenge not sealed under the ticket's session key");
        };
        let ks_ct = out.meter.encrypt(&sensor_key, &payload::key_release(&k_s, n0.successor()));
        out.send(from, M::SinkKeyRelease { user, ks_ct }, Units::new(1, 1));
    }

    fn on_data(&mut self, from: NodeId, ct: &[u8], out: &mut Out) {
        let Some(key) = self.sessions.get(&from).map(|s| s.key) else { return };
        let Ok(pt) = out.meter.decrypt(&key, ct) else { return };
        let Ok((seq, n, data)) = payload::read_data(&pt) else { return };
        let ack = out.meter.encrypt(&key, &payload::nonce(n.successor()));
        out.send(from, M::DataAck { ct: ack }, Units::new(0, 1));
        let fwd = out.meter.encrypt(&self.group.group_key, &payload::deliver(from, seq, &data));
        out.send(self.bs, M::SinkDeliver { ct: fwd }, Units::new(0, 2));
    }

    fn on_key_msg(&mut self, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Ok(pt) = out.meter.decrypt(&self.group.group_key, ct) else { return };
        let Ok((epoch, td, n0_group)) = payload::read_key_msg(&pt) else { return };
        let msg = KeyMsg { sender: self.bs, td, n0_group, epoch };
        let length = ctx.cfg.chain_length;
        let Ok(next) = start_epoch(&self.group, &msg, length, ctx.now) else { return };
        self.group = next;
        let mut window = MovingWindow::begin(length);
        let installed = window.advance(1);
        debug_assert_eq!(installed, Ok(WindowAction::InstallNewChain));
        let interval_len = self.group.current.interval_len;
        for step in 2..=window.last_step() {
            out.timer(ctx.now + MovingWindow::step_offset(step, interval_len), Timer::WindowStep { epoch, step });
        }
        self.window = Some(window);
    }

    fn window_step(&mut self, epoch: u64, step: u32, ctx: &mut StepCtx<'_>, out: &mut Out) {
        if epoch != self.group.epoch() {
            return;
        }
        let Some(window) = self.window.as_mut() else { return };
        let Ok(WindowAction::Reissue { interval, discard_previous }) = window.advance(step) else { return };
        let Some(prev) = self.group.previous.as_ref().map(|c| c.epoch) else { return };
        let due: Vec<NodeId> = self.sessions.iter().filter(|(_, s)| s.epoch == prev && s.interval == interval).map(|(n, _)| *n).collect();
        for node in due {
            self.reissue(node, interval, ctx, out);
        }
        if discard_previous {
            let stale: Vec<NodeId> = self.sessions.iter().filter(|(_, s)| s.epoch == prev).map(|(n, _)| *n).collect();
            for node in stale {
                self.reissue(node, self.group.current.intervals() - 1, ctx, out);
            }
            self.group.previous = None;
            self.window = None;
        }
    }

    /// Replaces the ticket behind a session with one on the current chain at interval `k`.
    fn reissue(&mut self, node: NodeId, k: u32, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some(s) = self.sessions.get(&node) else { return };
        let Ok((ticket, k_s)) = reissue_ticket(&self.group, &s.inner, ctx.cfg.mode, k, ctx.cfg.issue, &mut out.meter) else {
            return;
        };
        let ct = out.meter.encrypt(&s.key, &payload::reissue(&ticket, &k_s));
        let u = Units::new(1, 0) + units::ticket(&ticket);
        out.send(node, M::Reissue { ct }, u);
        let epoch = self.group.epoch();
        let s = self.sessions.get_mut(&node).expect("checked above");
        s.key = k_s;
        s.inner.session_key = k_s;
        s.epoch = epoch;
        s.interval = k;
    }
}
