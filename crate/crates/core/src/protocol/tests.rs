use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::crypto::{KeyMaterial, SecretNumber};
use crate::keychain::{GroupContext, KeyMsg};
use crate::ticket::{Permissions, Profile, ProfileStore};

const SECRET: SecretNumber = SecretNumber(Nonce(0x5eed));

fn bs() -> NodeId {
    NodeId::base_station(1)
}

fn s1() -> NodeId {
    NodeId::sink(1)
}

fn n1() -> NodeId {
    NodeId::sensor(1)
}

fn group() -> GroupContext {
    let members: BTreeSet<_> = [bs(), s1()].into_iter().collect();
    let msg = KeyMsg { sender: bs(), td: 64, n0_group: Nonce(9), epoch: 1 };
    GroupContext::provision(GroupId(1), bs(), members, KeyMaterial::from_bytes([7; 32]), &msg, 8, 0).unwrap()
}

/// Three nodes wired point to point with one tick per hop. `tamper` may
/// rewrite any message before delivery.
struct Net {
    nodes: BTreeMap<NodeId, RoleState>,
    queue: BTreeMap<(u64, u64), (NodeId, Input)>,
    seq: u64,
    rngs: BTreeMap<NodeId, ChaCha8Rng>,
    cfg: ProtocolConfig,
    sent: Vec<Message>,
    events: Vec<ProtocolEvent>,
}

impl Net {
    fn new(cfg: ProtocolConfig) -> Self {
        let mut profiles = ProfileStore::new();
        profiles
            .register(Profile { node: n1(), n_s: SECRET, permissions: Permissions::REPORT, registered_at: 0, password_hash: None })
            .unwrap();
        let nodes: BTreeMap<_, _> = [
            RoleState::BaseStation(BaseStationState::new(bs(), group(), BTreeMap::new(), profiles)),
            RoleState::Sink(SinkState::new(s1(), bs(), group(), BTreeMap::new())),
            RoleState::Sensor(InitiatorState::new(n1(), SECRET, None)),
        ]
        .into_iter()
        .map(|s| (s.id(), s))
        .collect();
        let rngs = nodes.keys().map(|&n| (n, ChaCha8Rng::seed_from_u64(n.wire() as u64))).collect();
        Self { nodes, queue: BTreeMap::new(), seq: 0, rngs, cfg, sent: Vec::new(), events: Vec::new() }
    }

    fn push(&mut self, at: u64, to: NodeId, input: Input) {
        self.seq += 1;
        self.queue.insert((at, self.seq), (to, input));
    }

    fn run(&mut self, mut tamper: impl FnMut(&mut Message)) {
        while let Some(((now, _), (to, input))) = self.queue.pop_first() {
            if now > 200 {
                break;
            }
            let state = self.nodes.remove(&to).unwrap();
            let rng = self.rngs.get_mut(&to).unwrap();
            let mut ctx = StepCtx { now, rng, cfg: &self.cfg };
            let (state, tr) = step(state, input, &mut ctx);
            self.nodes.insert(to, state);
            self.events.extend(tr.events);
            for (at, t) in tr.timers {
                if !t.is_periodic() {
                    self.push(at.max(now), to, Input::Timer(t));
                }
            }
            for mut m in tr.outgoing {
                tamper(&mut m);
                self.sent.push(m.clone());
                let targets: Vec<NodeId> = match m.env.receiver {
                    Dest::Unicast(n) => vec![n],
                    Dest::Broadcast => self.nodes.keys().copied().filter(|&n| n != to).collect(),
                };
                for t in targets {
                    self.push(now + 1, t, Input::Deliver(m.clone()));
                }
            }
        }
    }

    fn activate(&mut self, tamper: impl FnMut(&mut Message)) {
        self.push(0, s1(), Input::Timer(Timer::Hello));
        self.push(2, n1(), Input::Start(Intent::Activate { node: n1(), sink: s1() }));
        self.run(tamper);
    }

    fn sink(&self) -> &SinkState {
        match &self.nodes[&s1()] {
            RoleState::Sink(s) => s,
            _ => unreachable!(),
        }
    }

    fn sensor(&self) -> &InitiatorState {
        match &self.nodes[&n1()] {
            RoleState::Sensor(s) => s,
            _ => unreachable!(),
        }
    }

    fn exchange(&self) -> Vec<&'static str> {
        self.sent.iter().map(|m| m.body.name()).filter(|n| *n != "Hello").collect()
    }
}

#[test]
fn activation_runs_the_six_message_exchange() {
    let mut net = Net::new(ProtocolConfig::default());
    net.activate(|_| {});
    assert_eq!(net.exchange(), ["Join", "ForwardJoin", "Grant", "GrantForward", "ConfirmToBS", "Accept"]);
    let here = net.sensor().sessions[&s1()].key;
    assert_eq!(net.sink().sessions[&n1()].key, here);
    assert_eq!(net.sensor().tickets[&bs()].session_key, here);
}

#[test]
fn corrupted_accept_opens_no_session_at_the_sink() {
    let mut net = Net::new(ProtocolConfig::default());
    net.activate(|m| {
        if let ProtocolMessage::Accept { ct, .. } = &mut m.body {
            ct[20] ^= 1;
        }
    });
    assert!(net.sink().sessions.is_empty());
}

#[test]
fn corrupted_grant_is_retried_without_a_session() {
    let mut net = Net::new(ProtocolConfig::default());
    net.activate(|m| {
        if let ProtocolMessage::GrantForward { u0_ct, .. } = &mut m.body {
            let last = u0_ct.len() - 1;
            u0_ct[last] ^= 0x80;
        }
    });
    assert!(net.sensor().sessions.is_empty());
    assert!(net.sink().sessions.is_empty());
    let joins = net.exchange().iter().filter(|n| **n == "Join").count();
    assert_eq!(joins, 1 + ProtocolConfig::default().max_resends as usize);
}

#[test]
fn challenge_nonces_are_never_reused() {
    let mut net = Net::new(ProtocolConfig::default());
    net.activate(|m| {
        if let ProtocolMessage::GrantForward { u0_ct, .. } = &mut m.body {
            u0_ct[0] ^= 1;
        }
    });
    let issued = net.sensor().issued_nonces().len();
    assert_eq!(issued, 1 + ProtocolConfig::default().max_resends as usize);
}

#[test]
fn fresh_nonce_skips_values_already_issued() {
    struct Repeat(u32);
    impl RngCore for Repeat {
        fn next_u32(&mut self) -> u32 {
            self.0 += 1;
            self.0 / 3
        }
        fn next_u64(&mut self) -> u64 {
            self.next_u32() as u64
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            dest.fill(0)
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            dest.fill(0);
            Ok(())
        }
    }
    let mut rng = Repeat(0);
    let mut issued = BTreeSet::new();
    let drawn: Vec<Nonce> = (0..20).map(|_| fresh_nonce(&mut issued, &mut rng)).collect();
    let unique: BTreeSet<_> = drawn.iter().collect();
    assert_eq!(unique.len(), 20);
}

fn deliver_with_timestamp(ts: Option<u64>, now: u64) -> Transition {
    let cfg = ProtocolConfig { timestamps: true, ..ProtocolConfig::default() };
    let env = Envelope { sender: n1(), receiver: Dest::Unicast(s1()), timestamp: ts };
    let msg = Message { env, body: ProtocolMessage::SwitchConfirm { ct: vec![0; 40] }, accounted: Units::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ctx = StepCtx { now, rng: &mut rng, cfg: &cfg };
    step(RoleState::Sink(SinkState::new(s1(), bs(), group(), BTreeMap::new())), Input::Deliver(msg), &mut ctx).1
}

#[test]
fn stale_and_missing_timestamps_are_flagged() {
    let tr = deliver_with_timestamp(Some(10), 11);
    assert!(tr.events.is_empty());
    let tr = deliver_with_timestamp(Some(10), 12);
    assert_eq!(tr.events.len(), 1);
    assert_eq!(tr.events[0].kind, EventKind::AttackDetected);
    assert!(tr.events[0].detail.starts_with("stale-timestamp"));
    let tr = deliver_with_timestamp(None, 12);
    assert_eq!(tr.events[0].detail, "missing-timestamp");
    assert!(tr.outgoing.is_empty());
}

#[test]
fn frames_round_trip() {
    let mut net = Net::new(ProtocolConfig { timestamps: true, ..ProtocolConfig::default() });
    net.activate(|_| {});
    for m in &net.sent {
        let (env, body) = decode_frame(&m.wire_bytes()).unwrap();
        assert_eq!(env, m.env);
        assert_eq!(body, m.body);
    }
}

#[test]
fn intents_and_timers() {
    let cfg = ProtocolConfig::default();
    assert_eq!((cfg.interval_len(), cfg.pending_ttl()), (8, 8));
    let i = Intent::AccessSensor { user: NodeId::user(2), sensor: n1() };
    assert_eq!((i.actor(), i.phase()), (NodeId::user(2), Phase::LoginAuth));
    assert!(Timer::Hello.is_periodic() && Timer::Rollover.is_periodic());
    assert!(!Timer::DataSend.is_periodic());
}
