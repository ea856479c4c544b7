//! Sensor and user behavior. Both roles initiate every exchange they take
//! part in; sensors additionally relay user access requests and report data.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{Digest, KeyMaterial, NodeId, NodeKind, Nonce, SecretNumber};
use crate::metrics::{Phase, Units};
use crate::ticket::Ticket;

use super::message::{ProtocolMessage as M, Purpose};
use super::payload::{self, JoinPart, U0Response, U0};
use super::{fresh_nonce, units, EventKind, Input, Intent, Out, StepCtx, Timer};

/// A ticket together with the secrets needed to use it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeldTicket {
    pub ticket: Ticket,
    pub session_key: KeyMaterial,
    /// The nonce sealed inside the ticket.
    pub nonce: Nonce,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitiatorSession {
    pub key: KeyMaterial,
    pub private_key: Option<KeyMaterial>,
    pub established_at: u64,
}

/// Sensor report pipeline with black-hole detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataState {
    pub remaining: u32,
    pub period: u64,
    pub next_seq: u32,
    pub inflight: Option<(u32, Nonce, NodeId)>,
    pub failures: u32,
    pub sink: Option<NodeId>,
    pub suspected: BTreeSet<NodeId>,
    pub acked: u32,
    pub halted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum RunKind {
    Join { bs_hint: NodeId, k_ts: KeyMaterial },
    UserJoin { k_ts: KeyMaterial },
    Switch { issuer: NodeId, nonce_hash: Digest, expect_grant: bool },
    Access { issuer: NodeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunStatus {
    Waiting,
    Done,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Run {
    kind: RunKind,
    peer: NodeId,
    attempt: u32,
    nonces: Vec<Nonce>,
    status: RunStatus,
    phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitiatorState {
    pub id: NodeId,
    pub n_s: SecretNumber,
    pub password_hash: Option<Digest>,
    /// Sink to base station, learned from Hello beacons.
    pub heard: BTreeMap<NodeId, NodeId>,
    /// Tickets by issuing base station.
    pub tickets: BTreeMap<NodeId, HeldTicket>,
    pub sessions: BTreeMap<NodeId, InitiatorSession>,
    /// Sinks in order of first session establishment.
    pub sink_order: Vec<NodeId>,
    pub active: bool,
    pub data: Option<DataState>,
    issued: BTreeSet<Nonce>,
    pending: BTreeMap<(NodeId, Nonce), u64>,
    runs: BTreeMap<u64, Run>,
    next_run: u64,
    /// USeAP requests relayed to a sink, by user.
    relays: BTreeMap<NodeId, Vec<Vec<u8>>>,
}

impl InitiatorState {
    pub fn new(id: NodeId, n_s: SecretNumber, password_hash: Option<Digest>) -> Self {
        Self {
            id,
            n_s,
            password_hash,
            heard: BTreeMap::new(),
            tickets: BTreeMap::new(),
            sessions: BTreeMap::new(),
            sink_order: Vec::new(),
            active: false,
            data: None,
            issued: BTreeSet::new(),
            pending: BTreeMap::new(),
            runs: BTreeMap::new(),
            next_run: 0,
            relays: BTreeMap::new(),
        }
    }

    /// Nonces issued as challenges so far.
    pub fn issued_nonces(&self) -> &BTreeSet<Nonce> {
        &self.issued
    }

    /// Number of exchanges still waiting for a response.
    pub fn waiting_runs(&self) -> usize {
        self.runs.values().filter(|r| r.status == RunStatus::Waiting).count()
    }

    pub(super) fn handle(&mut self, input: Input, ctx: &mut StepCtx<'_>, out: &mut Out) {
        match input {
            Input::Start(intent) => self.start(intent, ctx, out),
            Input::Timer(t) => self.on_timer(t, ctx, out),
            Input::Deliver(m) => self.on_message(m.env.sender, m.body, ctx, out),
        }
    }

    fn start(&mut self, intent: Intent, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let phase = intent.phase();
        let (kind, peer) = match intent {
            Intent::Activate { sink, .. } => {
                let Some(&bs_hint) = self.heard.get(&sink) else {
                    return out.event(EventKind::ChallengeFailed, sink, "no Hello heard from sink");
                };
                let k_ts = match out.meter.temp_key(bs_hint, self.n_s) {
                    Ok(k) => k,
                    Err(_) => return,
                };
                (RunKind::Join { bs_hint, k_ts }, sink)
            }
            Intent::UserJoin { bs, .. } => {
                let Ok(k_ts) = out.meter.temp_key(bs, self.n_s) else {
                    return out.event(EventKind::ChallengeFailed, bs, "not a base station");
                };
                (RunKind::UserJoin { k_ts }, bs)
            }
            Intent::Switch { sink, .. } => {
                let Some(&bs) = self.heard.get(&sink) else {
                    return out.event(EventKind::ChallengeFailed, sink, "no Hello heard from sink");
                };
                let (issuer, expect_grant) = match self.tickets.contains_key(&bs) {
                    true => (bs, false),
                    false => match self.latest_ticket() {
                        Some(i) => (i, true),
                        None => return out.event(EventKind::ChallengeFailed, sink, "no ticket held"),
                    },
                };
                let nonce_hash = out.meter.nonce_hash(self.tickets[&issuer].nonce);
                (RunKind::Switch { issuer, nonce_hash, expect_grant }, sink)
            }
            Intent::AccessSensor { sensor, .. } => match self.latest_ticket() {
                Some(issuer) => (RunKind::Access { issuer }, sensor),
                None => return out.event(EventKind::ChallengeFailed, sensor, "no ticket held"),
            },
            Intent::Report { count, period, .. } => {
                self.data = Some(DataState {
                    remaining: count,
                    period,
                    next_seq: 0,
                    inflight: None,
                    failures: 0,
                    sink: None,
                    suspected: BTreeSet::new(),
                    acked: 0,
                    halted: false,
                });
                out.timer(ctx.now, Timer::DataSend);
                return;
            }
        };
        let id = self.next_run;
        self.next_run += 1;
        self.runs.insert(id, Run { kind, peer, attempt: 0, nonces: Vec::new(), status: RunStatus::Waiting, phase });
        self.send_attempt(id, ctx, out);
    }

    fn latest_ticket(&self) -> Option<NodeId> {
        self.tickets.iter().max_by_key(|(bs, t)| (t.registered_at, **bs)).map(|(bs, _)| *bs)
    }

    fn send_attempt(&mut self, id: u64, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let run = &self.runs[&id];
        let resend = run.attempt > 0;
        let peer = run.peer;
        let nonce = match &run.kind {
            RunKind::Switch { issuer, .. } => self.tickets[issuer].nonce,
            _ => fresh_nonce(&mut self.issued, ctx.rng),
        };
        // Hops on the path back to us once the request has left.
        let hops = match &run.kind {
            RunKind::UserJoin { .. } | RunKind::Switch { expect_grant: false, .. } => 2,
            _ => 4,
        };
        match &run.kind {
            RunKind::Join { bs_hint, k_ts } => {
                let part = JoinPart { node: self.id, n0: nonce, password_hash: self.password_hash };
                let ct = out.meter.encrypt(k_ts, &part.encode());
                let u = units::join(&ct);
                out.send(peer, M::Join { bs_hint: *bs_hint, resend, ct }, u);
            }
            RunKind::UserJoin { k_ts } => {
                let ct = out.meter.encrypt(k_ts, &payload::user_join(self.id, nonce));
                out.send(peer, M::UserJoin { resend, ct }, Units::new(0, 2));
            }
            RunKind::Switch { issuer, nonce_hash, .. } => {
                let held = &self.tickets[issuer];
                let ct = out.meter.encrypt(&held.session_key, &payload::switch_part(self.id, nonce_hash));
                let u = Units::new(1, 1) + units::ticket(&held.ticket);
                out.send(peer, M::SwitchReq { resend, ct, ticket: held.ticket.clone() }, u);
            }
            RunKind::Access { issuer } => {
                let held = &self.tickets[issuer];
                let n0_ct = out.meter.encrypt(&held.session_key, &payload::nonce(nonce));
                let u = Units::new(0, 1) + units::ticket(&held.ticket);
                out.send(peer, M::SensorAccessReq { resend, ticket: held.ticket.clone(), n0_ct }, u);
            }
        }
        let run = self.runs.get_mut(&id).expect("run exists");
        run.nonces.push(nonce);
        self.pending.insert((peer, nonce), id);
        let wait = ctx.cfg.hop_wait * hops;
        out.timer(ctx.now + wait, Timer::ResponseTimeout { run: id, attempt: run.attempt, phase: run.phase });
    }

    fn on_timer(&mut self, t: Timer, ctx: &mut StepCtx<'_>, out: &mut Out) {
        match t {
            Timer::ResponseTimeout { run, attempt, .. } => {
                let Some(r) = self.runs.get_mut(&run) else { return };
                if r.status != RunStatus::Waiting || r.attempt != attempt {
                    return;
                }
                if r.attempt >= ctx.cfg.max_resends {
                    r.status = RunStatus::Aborted;
                    let detail = format!("no response after {} attempts", r.attempt + 1);
                    out.event(EventKind::ChallengeFailed, r.peer, detail);
                    return;
                }
                r.attempt += 1;
                self.send_attempt(run, ctx, out);
            }
            Timer::DataSend => self.send_data(ctx, out),
            Timer::AckTimeout { nonce, .. } => self.ack_timeout(nonce, ctx, out),
            _ => {}
        }
    }

    /// Resolves a response to its run. Returns `None` (after raising the
    /// appropriate event) when the response must not be acted on.
    fn claim(&mut self, peer: NodeId, nonce: Nonce, out: &mut Out) -> Option<u64> {
        let Some(&id) = self.pending.get(&(peer, nonce)) else {
            out.event(EventKind::ChallengeFailed, peer, "response matches no pending challenge");
            return None;
        };
        match self.runs[&id].status {
            RunStatus::Waiting => Some(id),
            RunStatus::Done => {
                out.event(EventKind::AttackDetected, peer, "dual-response: second answer to a completed exchange");
                None
            }
            RunStatus::Aborted => None,
        }
    }

    /// Registration-time check; meaningful only when clocks are synchronized.
    fn registration_fresh(&self, registered_at: u64, peer: NodeId, ctx: &StepCtx<'_>, out: &mut Out) -> bool {
        if ctx.cfg.timestamps && ctx.now.saturating_sub(registered_at) > ctx.cfg.tr_skew_bound() {
            out.event(EventKind::AttackDetected, peer, format!("tr-skew: registration time {registered_at} at local time {}", ctx.now));
            return false;
        }
        true
    }

    fn establish(&mut self, id: u64, peer: NodeId, session: InitiatorSession, detail: &str, out: &mut Out) {
        if let Some(r) = self.runs.get_mut(&id) {
            r.status = RunStatus::Done;
        }
        if peer.kind == NodeKind::Sink && !self.sink_order.contains(&peer) {
            self.sink_order.push(peer);
        }
        self.sessions.insert(peer, session);
        out.event(EventKind::SessionEstablished, peer, detail);
    }

    fn on_message(&mut self, from: NodeId, body: M, ctx: &mut StepCtx<'_>, out: &mut Out) {
        match body {
            M::Hello { bs, sink } if sink == from => {
                self.heard.insert(sink, bs);
            }
            M::GrantForward { purpose: Purpose::Join, u0_ct } => self.on_join_grant(from, &u0_ct, ctx, out),
            M::GrantForward { purpose: Purpose::Switch, u0_ct } => self.on_switch_grant(from, &u0_ct, ctx, out),
            M::UserGrant { ct } => self.on_user_grant(from, &ct, ctx, out),
            M::SwitchResp { ct } => self.on_switch_resp(from, &ct, ctx, out),
            M::PrivateConfirm { ct } => self.on_private_confirm(from, &ct, ctx, out),
            M::Reissue { ct } => self.on_reissue(from, &ct, out),
            M::SensorAccessReq { ticket, n0_ct, .. } if self.id.kind == NodeKind::Sensor => {
                let Some(&sink) = self.sink_order.iter().find(|s| self.sessions.contains_key(s)) else {
                    return out.event(EventKind::ChallengeFailed, from, "no sink session to vouch for the user");
                };
                let u = Units::new(0, 1) + units::ticket(&ticket);
                self.relays.entry(from).or_default().push(n0_ct.clone());
                out.send(sink, M::SensorForward { user: from, ticket, n0_ct }, u);
            }
            M::SinkKeyRelease { user, ks_ct } => self.on_key_release(from, user, &ks_ct, ctx, out),
            M::DataAck { ct } => self.on_ack(from, &ct, ctx, out),
            _ => {}
        }
    }

    fn on_join_grant(&mut self, from: NodeId, u0_ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let keys: BTreeSet<KeyMaterial> = self
            .runs
            .values()
            .filter(|r| r.peer == from && r.status != RunStatus::Aborted)
            .filter_map(|r| match &r.kind {
                RunKind::Join { k_ts, .. } => Some(*k_ts),
                _ => None,
            })
            .collect();
        let Some(u0) = keys.iter().find_map(|k| out.meter.decrypt(k, u0_ct).ok()).and_then(|pt| U0::decode(&pt).ok()) else {
            return;
        };
        let U0Response::Successor(r) = u0.response else { return };
        let Some(id) = self.claim(from, Nonce(r.0.wrapping_sub(1)), out) else { return };
        let RunKind::Join { bs_hint, .. } = self.runs[&id].kind else { return };
        if !self.registration_fresh(u0.registered_at, from, ctx, out) {
            self.runs.get_mut(&id).expect("run exists").status = RunStatus::Aborted;
            return;
        }
        let issuer = self.heard.get(&from).copied().unwrap_or(bs_hint);
        let n0 = Nonce(r.0.wrapping_sub(1));
        let ct = out.meter.encrypt(&u0.session_key, &payload::nonce(u0.n1.successor()));
        out.send(from, M::Accept { purpose: Purpose::Join, ct }, Units::new(0, 1));
        let held = HeldTicket { ticket: u0.ticket, session_key: u0.session_key, nonce: n0, registered_at: u0.registered_at };
        self.tickets.insert(issuer, held);
        self.active = true;
        let session = InitiatorSession { key: u0.session_key, private_key: None, established_at: ctx.now };
        self.establish(id, from, session, "activated", out);
    }

    fn on_switch_grant(&mut self, from: NodeId, u0_ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some(&bs) = self.heard.get(&from) else { return };
        let Ok(k_ts) = out.meter.temp_key(bs, self.n_s) else { return };
        let Some(u0) = out.meter.decrypt(&k_ts, u0_ct).ok().and_then(|pt| U0::decode(&pt).ok()) else { return };
        let U0Response::NonceHash(h) = u0.response else { return };
        let run = self
            .pending
            .iter()
            .filter(|((p, _), _)| *p == from)
            .map(|(&(_, n), &id)| (n, id))
            .find(|(_, id)| matches!(&self.runs[id].kind, RunKind::Switch { nonce_hash, .. } if *nonce_hash == h));
        let Some((nonce, _)) = run else {
            return out.event(EventKind::ChallengeFailed, from, "grant answers no pending switch");
        };
        let Some(id) = self.claim(from, nonce, out) else { return };
        if !self.registration_fresh(u0.registered_at, from, ctx, out) {
            self.runs.get_mut(&id).expect("run exists").status = RunStatus::Aborted;
            return;
        }
        let ct = out.meter.encrypt(&u0.session_key, &payload::nonce(u0.n1.successor()));
        out.send(from, M::Accept { purpose: Purpose::Switch, ct }, Units::new(0, 1));
        let private_key = ctx.cfg.secret_mode.then(|| out.meter.private_session_key(&u0.session_key, nonce, Some(u0.n1)));
        let held = HeldTicket { ticket: u0.ticket, session_key: u0.session_key, nonce, registered_at: u0.registered_at };
        self.tickets.insert(bs, held);
        let session = InitiatorSession { key: u0.session_key, private_key, established_at: ctx.now };
        self.establish(id, from, session, "cross-group switch", out);
    }

    fn on_user_grant(&mut self, from: NodeId, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let keys: BTreeSet<KeyMaterial> = self
            .runs
            .values()
            .filter(|r| r.peer == from && r.status != RunStatus::Aborted)
            .filter_map(|r| match &r.kind {
                RunKind::UserJoin { k_ts } => Some(*k_ts),
                _ => None,
            })
            .collect();
        let Some((k_ts, u0)) = keys
            .iter()
            .find_map(|k| out.meter.decrypt(k, ct).ok().map(|pt| (*k, pt)))
            .and_then(|(k, pt)| U0::decode(&pt).ok().map(|u| (k, u)))
        else {
            return;
        };
        let U0Response::Successor(r) = u0.response else { return };
        let Some(id) = self.claim(from, Nonce(r.0.wrapping_sub(1)), out) else { return };
        if !self.registration_fresh(u0.registered_at, from, ctx, out) {
            self.runs.get_mut(&id).expect("run exists").status = RunStatus::Aborted;
            return;
        }
        let confirm = out.meter.encrypt(&k_ts, &payload::nonce(u0.n1.successor()));
        out.send(from, M::UserConfirm { ct: confirm }, Units::new(0, 1));
        let held = HeldTicket { ticket: u0.ticket, session_key: u0.session_key, nonce: u0.n1, registered_at: u0.registered_at };
        self.tickets.insert(from, held);
        self.active = true;
        self.runs.get_mut(&id).expect("run exists").status = RunStatus::Done;
        out.event(EventKind::SessionEstablished, from, "activated");
    }

    fn on_switch_resp(&mut self, from: NodeId, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let candidates: Vec<(u64, NodeId)> = self
            .runs
            .iter()
            .filter(|(_, r)| r.peer == from && r.status != RunStatus::Aborted)
            .filter_map(|(id, r)| match &r.kind {
                RunKind::Switch { issuer, .. } => Some((*id, *issuer)),
                _ => None,
            })
            .collect();
        for (_, issuer) in candidates {
            let Some(held) = self.tickets.get(&issuer).cloned() else { continue };
            let Ok(pt) = out.meter.decrypt(&held.session_key, ct) else { continue };
            let Ok((r, n1, _data)) = payload::read_switch_resp(&pt) else { return };
            if r != held.nonce.successor() {
                return out.event(EventKind::ChallengeFailed, from, "wrong response to n0");
            }
            let Some(id) = self.claim(from, held.nonce, out) else { return };
            let confirm = out.meter.encrypt(&held.session_key, &payload::nonce(n1.successor()));
            out.send(from, M::SwitchConfirm { ct: confirm }, Units::new(0, 1));
            let session = InitiatorSession { key: held.session_key, private_key: None, established_at: ctx.now };
            return self.establish(id, from, session, "same-group switch", out);
        }
    }

    fn on_private_confirm(&mut self, from: NodeId, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let candidates: Vec<(Nonce, KeyMaterial)> = self
            .pending
            .iter()
            .filter(|((p, _), id)| *p == from && self.runs[id].status != RunStatus::Aborted)
            .filter_map(|(&(_, n), id)| match &self.runs[id].kind {
                RunKind::Access { issuer } => self.tickets.get(issuer).map(|t| (n, t.session_key)),
                _ => None,
            })
            .collect();
        for (n0, k_s) in candidates {
            let k_ps = out.meter.private_session_key(&k_s, n0, None);
            let Ok(pt) = out.meter.decrypt(&k_ps, ct) else { continue };
            if payload::read_nonce(&pt) != Ok(n0.successor()) {
                return out.event(EventKind::ChallengeFailed, from, "wrong response to n0");
            }
            let Some(id) = self.claim(from, n0, out) else { return };
            let session = InitiatorSession { key: k_ps, private_key: Some(k_ps), established_at: ctx.now };
            return self.establish(id, from, session, "private session", out);
        }
    }

    fn on_reissue(&mut self, from: NodeId, ct: &[u8], out: &mut Out) {
        let Some(session) = self.sessions.get(&from) else { return };
        let Ok(pt) = out.meter.decrypt(&session.key, ct) else { return };
        let Ok((ticket, k_s)) = payload::read_reissue(&pt) else { return };
        let Some(&bs) = self.heard.get(&from) else { return };
        let Some(held) = self.tickets.get_mut(&bs) else { return };
        held.ticket = ticket;
        held.session_key = k_s;
        self.sessions.get_mut(&from).expect("checked above").key = k_s;
    }

    fn on_key_release(&mut self, from: NodeId, user: NodeId, ks_ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some(session) = self.sessions.get(&from) else { return };
        let Ok(pt) = out.meter.decrypt(&session.key, ks_ct) else { return };
        let Ok((k_s, r)) = payload::read_key_release(&pt) else { return };
        let Some(queued) = self.relays.get_mut(&user) else { return };
        let mut matched = None;
        for (i, n0_ct) in queued.iter().enumerate() {
            if let Ok(n) = out.meter.decrypt(&k_s, n0_ct).map(|p| payload::read_nonce(&p)) {
                if n == Ok(Nonce(r.0.wrapping_sub(1))) {
                    matched = Some(i);
                    break;
                }
            }
        }
        let Some(i) = matched else {
            return out.event(EventKind::ChallengeFailed, user, "released key does not match the user's challenge");
        };
        queued.remove(i);
        let n0 = Nonce(r.0.wrapping_sub(1));
        let k_ps = out.meter.private_session_key(&k_s, n0, None);
        let ct = out.meter.encrypt(&k_ps, &payload::nonce(r));
        out.send(user, M::PrivateConfirm { ct }, Units::new(0, 1));
        self.sessions.insert(user, InitiatorSession { key: k_ps, private_key: Some(k_ps), established_at: ctx.now });
        out.event(EventKind::SessionEstablished, user, "private session");
    }

    fn send_data(&mut self, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let sinks: Vec<NodeId> = self.sink_order.iter().copied().filter(|s| self.sessions.contains_key(s)).collect();
        let Some(d) = self.data.as_mut() else { return };
        if d.halted || d.inflight.is_some() || d.remaining == 0 {
            return;
        }
        if d.sink.is_none() {
            d.sink = sinks.iter().copied().find(|s| !d.suspected.contains(s));
        }
        let Some(sink) = d.sink else {
            d.halted = true;
            return;
        };
        let seq = d.next_seq;
        d.next_seq += 1;
        self.transmit(seq, sink, ctx, out);
    }

    fn transmit(&mut self, seq: u32, sink: NodeId, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let n = fresh_nonce(&mut self.issued, ctx.rng);
        let key = self.sessions[&sink].key;
        let ct = out.meter.encrypt(&key, &payload::data(seq, n, &seq.to_be_bytes()));
        out.send(sink, M::SensorData { ct }, Units::new(0, 2));
        let d = self.data.as_mut().expect("data pipeline running");
        d.inflight = Some((seq, n, sink));
        out.timer(ctx.now + ctx.cfg.ack_wait, Timer::AckTimeout { seq, nonce: n });
    }

    fn on_ack(&mut self, from: NodeId, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some((_, n, sink)) = self.data.as_ref().and_then(|d| d.inflight) else { return };
        if sink != from {
            return;
        }
        let key = self.sessions[&sink].key;
        let Ok(pt) = out.meter.decrypt(&key, ct) else { return };
        if payload::read_nonce(&pt) != Ok(n.successor()) {
            return;
        }
        let d = self.data.as_mut().expect("checked above");
        d.inflight = None;
        d.failures = 0;
        d.acked += 1;
        d.remaining -= 1;
        if d.remaining > 0 {
            out.timer(ctx.now + d.period, Timer::DataSend);
        }
    }

    fn ack_timeout(&mut self, nonce: Nonce, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let sinks: Vec<NodeId> = self.sink_order.iter().copied().filter(|s| self.sessions.contains_key(s)).collect();
        let Some(d) = self.data.as_mut() else { return };
        let Some((seq, n, sink)) = d.inflight else { return };
        if n != nonce {
            return;
        }
        d.failures += 1;
        let mut target = sink;
        if d.failures >= ctx.cfg.black_hole_threshold {
            d.suspected.insert(sink);
            let detail = format!("{} consecutive challenge failures", d.failures);
            out.event(EventKind::BlackHoleSuspected, sink, detail);
            d.failures = 0;
            match sinks.iter().copied().find(|s| !d.suspected.contains(s)) {
                Some(alt) => target = alt,
                None => {
                    d.halted = true;
                    d.inflight = None;
                    return;
                }
            }
            d.sink = Some(target);
        }
        self.transmit(seq, target, ctx, out);
    }
}
