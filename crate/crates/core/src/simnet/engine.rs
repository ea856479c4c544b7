//! Network construction and the discrete-event loop.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::{self, GroupId, KeyMaterial, NodeId, NodeKind, Nonce, SecretNumber};
use crate::keychain::{GroupContext, KeyMsg};
use crate::protocol::{
    self, BaseStationState, Dest, InitiatorState, Input, Intent, Message, ProtocolEvent, RoleState, SinkState, StepCtx, Timer, Transition,
};
use crate::ticket::{Permissions, Profile, ProfileStore};

use super::adversary::{self, Adversary, Passive};
use super::closure::IntruderState;
use super::config::SimConfig;
use super::trace::{Cast, EventRecord, MsgRecord, Origin, Status, TraceLog, TraceRecord};
use super::SimError;

/// Setup-time secrets, kept for oracles and the secrecy check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Provisioning {
    /// Group key by master base station.
    pub group_keys: BTreeMap<NodeId, KeyMaterial>,
    pub node_secrets: BTreeMap<NodeId, SecretNumber>,
    pub clock_offsets: BTreeMap<NodeId, u64>,
    /// Key message of the first epoch, by master.
    pub first_key_msgs: BTreeMap<NodeId, KeyMsg>,
}

pub fn group_of(bs: NodeId) -> GroupId {
    GroupId(bs.id)
}

/// Initial role states plus the link table, both derived from the config.
pub struct Network {
    pub nodes: BTreeMap<NodeId, RoleState>,
    /// Directed link delays; every link appears in both directions.
    pub links: BTreeMap<(NodeId, NodeId), u64>,
    pub provisioning: Provisioning,
}

impl Network {
    pub fn build(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let t = &cfg.topology;
        let p = &cfg.protocol;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut prov = Provisioning::default();
        let offsets_on = cfg.clock_offsets && !p.timestamps;

        let all: Vec<NodeId> = t
            .base_stations
            .iter()
            .map(|b| b.id)
            .chain(t.sinks.iter().map(|s| s.id))
            .chain(t.sensors.iter().map(|s| s.id))
            .chain(t.users.iter().map(|u| u.id))
            .collect();
        for &n in &all {
            let off = if offsets_on { rng.gen_range(0..=p.td / 2) } else { 0 };
            prov.clock_offsets.insert(n, off);
        }

        let mut first_msgs = BTreeMap::new();
        for b in &t.base_stations {
            let mut key = [0u8; 32];
            rng.fill_bytes(&mut key);
            prov.group_keys.insert(b.id, KeyMaterial::from_bytes(key));
            first_msgs.insert(b.id, KeyMsg { sender: b.id, td: p.td, n0_group: Nonce(rng.next_u32()), epoch: 1 });
        }

        let mut profiles = ProfileStore::new();
        for (spec, kind) in t.sensors.iter().map(|s| (s, NodeKind::Sensor)).chain(t.users.iter().map(|u| (u, NodeKind::User))) {
            let n_s = SecretNumber(Nonce(rng.next_u32()));
            prov.node_secrets.insert(spec.id, n_s);
            let permissions = match (&spec.permissions, kind) {
                (Some(list), _) => list.iter().fold(Permissions::default(), |acc, p| acc | p.bits()),
                (None, NodeKind::User) => Permissions::READ_SINK | Permissions::READ_SENSOR,
                (None, _) => Permissions::REPORT,
            };
            let password_hash = spec.password.as_ref().map(|pw| *crypto::hash(pw.as_bytes()).as_bytes());
            profiles
                .register(Profile { node: spec.id, n_s, permissions, registered_at: 0, password_hash })
                .map_err(|e| SimError::Config(format!("{}: {e}", spec.id)))?;
        }

        let members = |bs: NodeId| -> BTreeSet<NodeId> {
            let spec = t.base_stations.iter().find(|b| b.id == bs).expect("validated base station");
            std::iter::once(bs).chain(spec.neighbors.iter().copied()).chain(t.sinks.iter().filter(|s| s.bs == bs).map(|s| s.id)).collect()
        };
        let context = |bs: NodeId, holder: NodeId| -> Result<GroupContext, SimError> {
            let now = prov.clock_offsets[&holder];
            GroupContext::provision(group_of(bs), bs, members(bs), prov.group_keys[&bs], &first_msgs[&bs], p.chain_length, now)
                .map_err(|e| SimError::Config(e.to_string()))
        };

        let mut nodes = BTreeMap::new();
        for b in &t.base_stations {
            let foreign = b.neighbors.iter().map(|n| Ok((group_of(*n), context(*n, b.id)?))).collect::<Result<_, SimError>>()?;
            let st = BaseStationState::new(b.id, context(b.id, b.id)?, foreign, profiles.clone());
            nodes.insert(b.id, RoleState::BaseStation(st));
        }
        for s in &t.sinks {
            let foreign = s.foreign_groups.iter().map(|g| (group_of(*g), prov.group_keys[g])).collect();
            nodes.insert(s.id, RoleState::Sink(SinkState::new(s.id, s.bs, context(s.bs, s.id)?, foreign)));
        }
        for s in &t.sensors {
            let pw = s.password.as_ref().map(|pw| crypto::hash(pw.as_bytes()));
            nodes.insert(s.id, RoleState::Sensor(InitiatorState::new(s.id, prov.node_secrets[&s.id], pw)));
        }
        for u in &t.users {
            nodes.insert(u.id, RoleState::User(InitiatorState::new(u.id, prov.node_secrets[&u.id], None)));
        }

        let mut links = BTreeMap::new();
        let mut link = |a: NodeId, b: NodeId, d: u64| {
            links.insert((a, b), d);
            links.insert((b, a), d);
        };
        for s in &t.sinks {
            link(s.id, s.bs, cfg.default_delay);
        }
        for b in &t.base_stations {
            for n in &b.neighbors {
                link(b.id, *n, cfg.default_delay);
            }
        }
        for l in &t.links {
            link(l.a, l.b, l.delay.unwrap_or(cfg.default_delay));
        }
        prov.first_key_msgs = first_msgs;
        Ok(Self { nodes, links, provisioning: prov })
    }
}

#[derive(Debug)]
enum Event {
    Deliver(Message),
    Timer { node: NodeId, timer: Timer },
    Start(Intent),
}

impl Event {
    fn keeps_alive(&self) -> bool {
        !matches!(self, Event::Timer { timer, .. } if timer.is_periodic())
    }
}

/// Everything a finished run leaves behind.
pub struct SimOutput {
    pub trace: TraceLog,
    pub nodes: BTreeMap<NodeId, RoleState>,
    pub intruder: IntruderState,
    pub provisioning: Provisioning,
    pub end_tick: u64,
    /// False when the run hit `max_ticks` with work still pending.
    pub quiescent: bool,
}

impl SimOutput {
    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.trace.events()
    }

    pub fn node(&self, id: NodeId) -> Option<&RoleState> {
        self.nodes.get(&id)
    }

    pub fn initiator(&self, id: NodeId) -> Option<&InitiatorState> {
        match self.nodes.get(&id)? {
            RoleState::Sensor(s) | RoleState::User(s) => Some(s),
            _ => None,
        }
    }

    pub fn sink(&self, id: NodeId) -> Option<&SinkState> {
        match self.nodes.get(&id)? {
            RoleState::Sink(s) => Some(s),
            _ => None,
        }
    }

    pub fn base_station(&self, id: NodeId) -> Option<&BaseStationState> {
        match self.nodes.get(&id)? {
            RoleState::BaseStation(s) => Some(s),
            _ => None,
        }
    }
}

pub struct Simulator {
    cfg: SimConfig,
    nodes: BTreeMap<NodeId, RoleState>,
    links: BTreeMap<(NodeId, NodeId), u64>,
    neighbors: BTreeMap<NodeId, Vec<NodeId>>,
    provisioning: Provisioning,
    rngs: BTreeMap<NodeId, ChaCha8Rng>,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    live: usize,
    last_delivery: BTreeMap<(NodeId, NodeId), u64>,
    adversary: Box<dyn Adversary>,
    intruder: IntruderState,
    trace: Vec<TraceRecord>,
}

impl Simulator {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        let net = Network::build(&cfg)?;
        let adversary: Box<dyn Adversary> = match &cfg.intruder {
            Some(s) => adversary::from_script(s),
            None => Box::new(Passive),
        };
        let mut neighbors: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for &(a, b) in net.links.keys() {
            neighbors.entry(a).or_default().push(b);
        }
        let rngs = net.nodes.keys().map(|&n| (n, ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(n.wire()) << 17)))).collect();
        let identities = net.nodes.keys().copied().collect();
        let mut sim = Self {
            trace: vec![TraceRecord::Meta { seed: cfg.seed, instrumented: true }],
            nodes: net.nodes,
            links: net.links,
            neighbors,
            provisioning: net.provisioning,
            rngs,
            queue: BTreeMap::new(),
            seq: 0,
            live: 0,
            last_delivery: BTreeMap::new(),
            adversary,
            intruder: IntruderState::new(identities),
            cfg,
        };
        let ids: Vec<(NodeId, NodeKind)> = sim.nodes.keys().map(|n| (*n, n.kind)).collect();
        for (n, kind) in ids {
            match kind {
                NodeKind::Sink => sim.push(0, Event::Timer { node: n, timer: Timer::Hello }),
                NodeKind::BaseStation => sim.push(sim.cfg.protocol.td, Event::Timer { node: n, timer: Timer::Rollover }),
                _ => {}
            }
        }
        for w in sim.cfg.workload.clone() {
            sim.push(w.at, Event::Start(w.intent));
        }
        Ok(sim)
    }

    /// Replaces the scripted intruder.
    pub fn with_adversary(mut self, adversary: Box<dyn Adversary>) -> Self {
        self.adversary = adversary;
        self
    }

    fn local(&self, node: NodeId, global: u64) -> u64 {
        global + self.provisioning.clock_offsets.get(&node).copied().unwrap_or(0)
    }

    fn local_to_global(&self, node: NodeId, local: u64, now: u64) -> u64 {
        let off = self.provisioning.clock_offsets.get(&node).copied().unwrap_or(0);
        local.saturating_sub(off).max(now)
    }

    fn push(&mut self, tick: u64, ev: Event) {
        if ev.keeps_alive() {
            self.live += 1;
        }
        self.queue.insert((tick, self.seq), ev);
        self.seq += 1;
    }

    pub fn run(mut self) -> SimOutput {
        let mut now = 0;
        let mut quiescent = true;
        while let Some(entry) = self.queue.first_entry() {
            let tick = entry.key().0;
            if tick > self.cfg.max_ticks {
                quiescent = self.live == 0;
                break;
            }
            if self.live == 0 && tick > self.cfg.min_ticks {
                break;
            }
            let ev = entry.remove();
            if ev.keeps_alive() {
                self.live -= 1;
            }
            now = tick;
            let (node, input) = match ev {
                Event::Deliver(m) => match m.env.receiver.node() {
                    Some(n) => (n, Input::Deliver(m)),
                    None => continue,
                },
                Event::Timer { node, timer } => (node, Input::Timer(timer)),
                Event::Start(intent) => (intent.actor(), Input::Start(intent)),
            };
            self.dispatch(now, node, input);
        }
        SimOutput {
            trace: TraceLog { records: self.trace },
            nodes: self.nodes,
            intruder: self.intruder,
            provisioning: self.provisioning,
            end_tick: now,
            quiescent,
        }
    }

    fn dispatch(&mut self, now: u64, node: NodeId, input: Input) {
        let Some(state) = self.nodes.remove(&node) else { return };
        let local = self.local(node, now);
        let rng = self.rngs.get_mut(&node).expect("rng per node");
        let mut ctx = StepCtx { now: local, rng, cfg: &self.cfg.protocol };
        let (state, tr) = protocol::step(state, input, &mut ctx);
        self.nodes.insert(node, state);
        self.apply(now, node, tr);
    }

    fn apply(&mut self, now: u64, node: NodeId, tr: Transition) {
        if !tr.ops.is_zero() {
            self.trace.push(TraceRecord::Ops { tick: now, node, phase: tr.phase, counts: tr.ops });
        }
        for ProtocolEvent { kind, node, subject, detail } in tr.events {
            self.trace.push(TraceRecord::Event(EventRecord { tick: now, kind, node, subject, detail }));
        }
        for (at, timer) in tr.timers {
            let g = self.local_to_global(node, at, now);
            self.push(g, Event::Timer { node, timer });
        }
        for msg in tr.outgoing {
            self.transmit(now, msg);
        }
    }

    fn transmit(&mut self, now: u64, msg: Message) {
        let verdict = self.adversary.intercept(now, &msg);
        let from = msg.env.sender;
        let (status, receivers, deliver_tick) = if !verdict.pass {
            (Status::Blocked, 0, None)
        } else {
            let targets: Vec<(NodeId, u64)> = match msg.env.receiver {
                Dest::Unicast(to) => self.links.get(&(from, to)).map(|d| (to, *d)).into_iter().collect(),
                Dest::Broadcast => {
                    let ns = self.neighbors.get(&from).cloned().unwrap_or_default();
                    ns.into_iter().map(|n| (n, self.links[&(from, n)])).collect()
                }
            };
            if targets.is_empty() && matches!(msg.env.receiver, Dest::Unicast(_)) {
                (Status::Unlinked, 0, None)
            } else {
                let mut last = None;
                for (to, d) in &targets {
                    let slot = self.last_delivery.entry((from, *to)).or_insert(0);
                    let at = (now + d).max(*slot);
                    *slot = at;
                    last = last.max(Some(at));
                    let mut copy = msg.clone();
                    if msg.env.receiver == Dest::Broadcast {
                        copy.env.receiver = Dest::Unicast(*to);
                    }
                    self.push(at, Event::Deliver(copy));
                }
                (Status::Delivered, targets.len() as u32, last)
            }
        };
        self.record(now, &msg, Origin::Honest, status, receivers, deliver_tick);
        for inj in verdict.inject {
            let at = now + inj.delay.max(1);
            let known = inj.msg.env.receiver.node().is_some_and(|n| self.nodes.contains_key(&n));
            let (status, receivers, tick) = if known { (Status::Delivered, 1, Some(at)) } else { (Status::Unlinked, 0, None) };
            self.record(now, &inj.msg, Origin::Intruder, status, receivers, tick);
            if known {
                self.push(at, Event::Deliver(inj.msg));
            }
        }
    }

    fn record(&mut self, now: u64, msg: &Message, origin: Origin, status: Status, receivers: u32, deliver_tick: Option<u64>) {
        let frame = msg.wire_bytes();
        self.intruder.observe(&frame);
        let cast = match msg.env.receiver {
            Dest::Unicast(_) => Cast::Unicast,
            Dest::Broadcast => Cast::Broadcast,
        };
        self.trace.push(TraceRecord::Msg(MsgRecord {
            tick: now,
            deliver_tick,
            from: msg.env.sender,
            to: msg.env.receiver,
            variant: msg.body.name().to_string(),
            size_bytes: frame.len(),
            units: msg.accounted,
            accounted_bytes: msg.accounted.bytes(),
            cast,
            receivers,
            phase: msg.body.phase(),
            origin,
            status,
            frame: hex::encode(&frame),
        }));
    }
}

/// Builds the network from `cfg` and runs it to quiescence or `max_ticks`.
pub fn run(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    Ok(Simulator::new(cfg.clone())?.run())
}
