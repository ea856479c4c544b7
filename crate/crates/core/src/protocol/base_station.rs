//! Base station behavior: group master for its own group, ticket issuer,
//! and verifier of tickets from neighbor groups on cross-group switches.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{GroupId, KeyMaterial, NodeId, NodeKind, Nonce};
use crate::keychain::{interval_at, start_epoch, GroupContext, KeyMsg};
use crate::metrics::Units;
use crate::ticket::{issue_ticket, verify_ticket, ProfileStore, Ticket, VerifiedTicket};

use super::message::{ForwardPayload, ProtocolMessage as M, Purpose};
use super::payload::{self, GrantSinkPart, JoinPart, U0Response, U0};
use super::{fresh_nonce, ticket_mode_ok, units, EventKind, Input, Out, StepCtx, Timer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserStatus {
    Idle,
    Active,
}

/// Relays of one initiator request, collected during the grant hold.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Batch {
    initiator: NodeId,
    payload: ForwardPayload,
    relays: Vec<(NodeId, Nonce)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseStationState {
    pub id: NodeId,
    pub group: GroupContext,
    /// Neighbor groups this station belongs to, by group id.
    pub foreign: BTreeMap<GroupId, GroupContext>,
    pub profiles: ProfileStore,
    pub users: BTreeMap<NodeId, UserStatus>,
    /// Data items received, by (sensor, sequence number).
    pub delivered: BTreeSet<(NodeId, u32)>,
    /// Grants whose sink confirmation has arrived.
    pub completed: u64,
    issued: BTreeSet<Nonce>,
    batches: BTreeMap<u64, Batch>,
    batch_of: BTreeMap<(Purpose, Vec<u8>), u64>,
    next_batch: u64,
    awaiting: BTreeMap<(NodeId, Nonce), NodeId>,
    user_pending: BTreeMap<NodeId, (Nonce, KeyMaterial)>,
}

impl BaseStationState {
    pub fn new(id: NodeId, group: GroupContext, foreign: BTreeMap<GroupId, GroupContext>, profiles: ProfileStore) -> Self {
        let users = BTreeMap::new();
        Self {
            id,
            group,
            foreign,
            profiles,
            users,
            delivered: BTreeSet::new(),
            completed: 0,
            issued: BTreeSet::new(),
            batches: BTreeMap::new(),
            batch_of: BTreeMap::new(),
            next_batch: 0,
            awaiting: BTreeMap::new(),
            user_pending: BTreeMap::new(),
        }
    }

    pub fn issued_nonces(&self) -> &BTreeSet<Nonce> {
        &self.issued
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
            Timer::Rollover => self.rollover(ctx, out),
            Timer::GrantFlush { batch, .. } => self.flush(batch, ctx, out),
            Timer::DiscardPrevious { group, epoch } => {
                let ctx_ref = if group == self.group.group_id { Some(&mut self.group) } else { self.foreign.get_mut(&group) };
                if let Some(g) = ctx_ref {
                    if g.epoch() == epoch {
                        g.previous = None;
                    }
                }
            }
            _ => {}
        }
    }

    fn rollover(&mut self, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let epoch = self.group.epoch() + 1;
        let n0_group = Nonce(ctx.rng.next_u32());
        let msg = KeyMsg { sender: self.id, td: ctx.cfg.td, n0_group, epoch };
        let Ok(next) = start_epoch(&self.group, &msg, ctx.cfg.chain_length, ctx.now) else { return };
        self.group = next;
        let ct = out.meter.encrypt(&self.group.group_key, &payload::key_msg(epoch, ctx.cfg.td, n0_group));
        out.broadcast(M::KeyMsg { group: self.group.group_id, ct }, Units::new(0, 3));
        out.timer(ctx.now + ctx.cfg.td, Timer::Rollover);
        let keep = (ctx.cfg.chain_length as u64).saturating_sub(1) * self.group.current.interval_len;
        out.timer(ctx.now + keep, Timer::DiscardPrevious { group: self.group.group_id, epoch });
    }

    fn on_message(&mut self, from: NodeId, body: M, ctx: &mut StepCtx<'_>, out: &mut Out) {
        match body {
            M::KeyMsg { group, ct } => self.on_neighbor_key_msg(from, group, &ct, ctx, out),
            M::ForwardJoin { initiator, sink_ct, payload } => self.on_forward(from, initiator, &sink_ct, payload, ctx, out),
            M::ConfirmToBs { ct, .. } => {
                let Ok(pt) = out.meter.decrypt(&self.group.group_key, &ct) else { return };
                let Ok(r) = payload::read_nonce(&pt) else { return };
                match self.awaiting.remove(&(from, Nonce(r.0.wrapping_sub(1)))) {
                    Some(_) => self.completed += 1,
                    None => out.event(EventKind::ChallengeFailed, from, "confirmation matches no grant"),
                }
            }
            M::UserJoin { ct, .. } if from.kind == NodeKind::User => self.on_user_join(from, &ct, ctx, out),
            M::UserConfirm { ct } => self.on_user_confirm(from, &ct, out),
            M::SinkDeliver { ct } => {
                let Ok(pt) = out.meter.decrypt(&self.group.group_key, &ct) else { return };
                if let Ok((node, seq, _)) = payload::read_deliver(&pt) {
                    self.delivered.insert((node, seq));
                }
            }
            _ => {}
        }
    }

    fn on_neighbor_key_msg(&mut self, from: NodeId, group: GroupId, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some(g) = self.foreign.get(&group) else { return };
        if g.master != from {
            return;
        }
        let Ok(pt) = out.meter.decrypt(&g.group_key, ct) else { return };
        let Ok((epoch, td, n0_group)) = payload::read_key_msg(&pt) else { return };
        let msg = KeyMsg { sender: from, td, n0_group, epoch };
        let Ok(next) = start_epoch(g, &msg, ctx.cfg.chain_length, ctx.now) else { return };
        let keep = (ctx.cfg.chain_length as u64).saturating_sub(1) * next.current.interval_len;
        self.foreign.insert(group, next);
        out.timer(ctx.now + keep, Timer::DiscardPrevious { group, epoch });
    }

    fn on_forward(
        &mut self,
        sink: NodeId,
        initiator: NodeId,
        sink_ct: &[u8],
        payload: ForwardPayload,
        ctx: &mut StepCtx<'_>,
        out: &mut Out,
    ) {
        if !self.group.members.contains(&sink) {
            return;
        }
        let Ok(pt) = out.meter.decrypt(&self.group.group_key, sink_ct) else { return };
        let Ok((claimed, n2)) = payload::read_sink_challenge(&pt) else { return };
        if claimed != sink {
            return;
        }
        let purpose = payload.purpose();
        let key = match &payload {
            ForwardPayload::Join { ct, .. } | ForwardPayload::Switch { ct, .. } => (purpose, ct.clone()),
        };
        if let Some(&id) = self.batch_of.get(&key) {
            let batch = self.batches.get_mut(&id).expect("indexed batch exists");
            if batch.initiator == initiator && !batch.relays.iter().any(|(s, _)| *s == sink) {
                batch.relays.push((sink, n2));
            }
            return;
        }
        let id = self.next_batch;
        self.next_batch += 1;
        self.batches.insert(id, Batch { initiator, payload, relays: vec![(sink, n2)] });
        self.batch_of.insert(key, id);
        out.timer(ctx.now + ctx.cfg.grant_hold, Timer::GrantFlush { batch: id, phase: purpose.phase() });
    }

    fn neighbor_hint_ok(&self, hint: NodeId) -> bool {
        hint == self.id || self.foreign.values().any(|g| g.master == hint)
    }

    fn flush(&mut self, id: u64, ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some(batch) = self.batches.remove(&id) else { return };
        self.batch_of.retain(|_, v| *v != id);
        let n = batch.initiator;
        let Some(profile) = self.profiles.get(n).cloned() else {
            return out.event(EventKind::ChallengeFailed, n, "no registered profile");
        };
        let grant = match &batch.payload {
            ForwardPayload::Join { bs_hint, ct, .. } => {
                if !self.neighbor_hint_ok(*bs_hint) {
                    return out.event(EventKind::ChallengeFailed, n, "join names an unknown base station");
                }
                let Ok(k_ts) = out.meter.temp_key(*bs_hint, profile.n_s) else { return };
                let Some(part) = out.meter.decrypt(&k_ts, ct).ok().and_then(|pt| JoinPart::decode(&pt).ok()) else {
                    return out.event(EventKind::ChallengeFailed, n, "join does not open under the temporary key");
                };
                if part.node != n {
                    return;
                }
                if let Some(expected) = profile.password_hash {
                    if part.password_hash.map(|h| *h.as_bytes()) != Some(expected) {
                        return out.event(EventKind::ChallengeFailed, n, "password hash mismatch");
                    }
                }
                if batch.relays.len() > 1 {
                    let sinks: Vec<String> = batch.relays.iter().map(|(s, _)| s.to_string()).collect();
                    let detail = format!("duplicate-M2: one M1 from {n} relayed by {}", sinks.join(", "));
                    out.event(EventKind::AttackDetected, n, detail);
                }
                Grant { k_ts, n0: part.n0, response: U0Response::Successor(part.n0.successor()) }
            }
            ForwardPayload::Switch { ct, ticket, .. } => {
                let Some(v) = self.verify_any(ticket, ctx, out) else {
                    return out.event(EventKind::ChallengeFailed, n, "switch ticket does not verify");
                };
                let Some((node, claimed)) =
                    out.meter.decrypt(&v.inner.session_key, ct).ok().and_then(|pt| payload::read_switch_part(&pt).ok())
                else {
                    return;
                };
                if node != n || v.inner.node != n || out.meter.nonce_hash(v.inner.n0) != claimed {
                    return;
                }
                let Ok(k_ts) = out.meter.temp_key(self.id, profile.n_s) else { return };
                Grant { k_ts, n0: v.inner.n0, response: U0Response::NonceHash(claimed) }
            }
        };
        let purpose = batch.payload.purpose();
        let alert = purpose == Purpose::Join && batch.relays.len() > 1;
        let Ok(k) = interval_at(&self.group.current, ctx.now) else { return };
        let (ticket, k_s) = match issue_ticket(&self.group, &self.profiles, n, grant.n0, ctx.cfg.mode, k, ctx.cfg.issue, &mut out.meter) {
            Ok(t) => t,
            Err(e) => return out.event(EventKind::ChallengeFailed, n, e.to_string()),
        };
        out.event(EventKind::TicketIssued, n, format!("interval {k} of epoch {}", self.group.epoch()));
        for (sink, n2) in batch.relays {
            let n1 = fresh_nonce(&mut self.issued, ctx.rng);
            let u0 = U0 { response: grant.response, n1, ticket: ticket.clone(), registered_at: ctx.now, session_key: k_s };
            let u0_ct = out.meter.encrypt(&grant.k_ts, &u0.encode());
            let part = GrantSinkPart { initiator: n, ticket: ticket.clone(), n1, n2_response: n2.successor(), alert };
            let sink_ct = out.meter.encrypt(&self.group.group_key, &part.encode());
            let u = units::u0(&ticket, purpose == Purpose::Switch) + units::ticket(&ticket) + Units::new(0, 3);
            out.send(sink, M::Grant { purpose, u0_ct, sink_ct }, u);
            self.awaiting.insert((sink, n1), n);
        }
    }

    /// Verifies against the own group first, then every neighbor group.
    fn verify_any(&self, ticket: &Ticket, ctx: &StepCtx<'_>, out: &mut Out) -> Option<VerifiedTicket> {
        if !ticket_mode_ok(ticket, ctx.cfg) {
            return None;
        }
        std::iter::once(&self.group)
            .chain(self.foreign.values())
            .find_map(|g| verify_ticket(g, ticket, ctx.cfg.verify, &mut out.meter).ok())
    }

    fn on_user_join(&mut self, user: NodeId, ct: &[u8], ctx: &mut StepCtx<'_>, out: &mut Out) {
        let Some(profile) = self.profiles.get(user).cloned() else {
            return out.event(EventKind::ChallengeFailed, user, "no registered profile");
        };
        let Ok(k_ts) = out.meter.temp_key(self.id, profile.n_s) else { return };
        let Some((claimed, n0)) = out.meter.decrypt(&k_ts, ct).ok().and_then(|pt| payload::read_user_join(&pt).ok()) else {
            return;
        };
        if claimed != user {
            return;
        }
        let n1 = fresh_nonce(&mut self.issued, ctx.rng);
        let Ok(k) = interval_at(&self.group.current, ctx.now) else { return };
        let (ticket, k_s) = match issue_ticket(&self.group, &self.profiles, user, n1, ctx.cfg.mode, k, ctx.cfg.issue, &mut out.meter) {
            Ok(t) => t,
            Err(e) => return out.event(EventKind::ChallengeFailed, user, e.to_string()),
        };
        out.event(EventKind::TicketIssued, user, format!("interval {k} of epoch {}", self.group.epoch()));
        let u = units::u0(&ticket, false);
        let u0 = U0 { response: U0Response::Successor(n0.successor()), n1, ticket, registered_at: ctx.now, session_key: k_s };
        let grant = out.meter.encrypt(&k_ts, &u0.encode());
        out.send(user, M::UserGrant { ct: grant }, u);
        self.users.entry(user).or_insert(UserStatus::Idle);
        self.user_pending.insert(user, (n1, k_ts));
    }

    fn on_user_confirm(&mut self, user: NodeId, ct: &[u8], out: &mut Out) {
        let Some(&(n1, k_ts)) = self.user_pending.get(&user) else { return };
        let Ok(pt) = out.meter.decrypt(&k_ts, ct) else { return };
        if payload::read_nonce(&pt) != Ok(n1.successor()) {
            return out.event(EventKind::ChallengeFailed, user, "wrong n1 response");
        }
        self.user_pending.remove(&user);
        self.users.insert(user, UserStatus::Active);
        out.event(EventKind::SessionEstablished, user, "user active");
    }
}

struct Grant {
    k_ts: KeyMaterial,
    n0: Nonce,
    response: U0Response,
}
