//! Configurations shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smsn::crypto::NodeId;
use smsn::protocol::{EventKind, Intent, ProtocolConfig};
use smsn::simnet::{self, BaseStationSpec, InitiatorSpec, LinkSpec, SimConfig, SinkSpec, Topology};

pub const LEN: u64 = 8;

/// Three sensors authenticated in intervals 0, 1 and 2 of an L = 3 chain,
/// run past one rollover and its whole moving window.
pub fn rollover_config() -> SimConfig {
    let bs = NodeId::base_station(1);
    let sink = NodeId::sink(1);
    let sensors: Vec<NodeId> = (1..=3).map(NodeId::sensor).collect();
    let topo = Topology {
        base_stations: vec![BaseStationSpec { id: bs, neighbors: vec![] }],
        sinks: vec![SinkSpec { id: sink, bs, foreign_groups: vec![] }],
        sensors: sensors.iter().map(|&id| InitiatorSpec { id, password: None, permissions: None }).collect(),
        links: sensors.iter().map(|&a| LinkSpec { a, b: sink, delay: None }).collect(),
        ..Topology::default()
    };
    let mut cfg = SimConfig::new(5, topo);
    cfg.protocol = ProtocolConfig { chain_length: 3, td: 3 * LEN, ..ProtocolConfig::default() };
    cfg.clock_offsets = false;
    // Past the last window step, short of the second rollover.
    cfg.min_ticks = 3 * LEN + 2 * LEN + 4;
    for (i, &node) in sensors.iter().enumerate() {
        cfg = cfg.schedule(2 + i as u64 * LEN, Intent::Activate { node, sink });
    }
    cfg
}

/// A random multi-group network with a mixed honest workload.
pub fn random_config(seed: u64) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bs = rng.gen_range(1..=3u32);
    let bss: Vec<NodeId> = (1..=n_bs).map(NodeId::base_station).collect();
    let mut sinks = Vec::new();
    for (i, &bs) in bss.iter().enumerate() {
        let neighbors: Vec<NodeId> = [i.checked_sub(1), Some(i + 1)].into_iter().flatten().filter_map(|j| bss.get(j).copied()).collect();
        for _ in 0..rng.gen_range(1..=2) {
            sinks.push(SinkSpec { id: NodeId::sink(sinks.len() as u32 + 1), bs, foreign_groups: neighbors.clone() });
        }
    }
    let sensors: Vec<NodeId> = (1..=rng.gen_range(1..=3)).map(NodeId::sensor).collect();
    let users: Vec<NodeId> = (1..=rng.gen_range(0..=2)).map(NodeId::user).collect();
    let spec = |id| InitiatorSpec { id, password: None, permissions: None };
    let link = |a, b| LinkSpec { a, b, delay: None };
    let mut links = Vec::new();
    for &n in sensors.iter().chain(&users) {
        links.extend(sinks.iter().map(|s| link(n, s.id)));
    }
    for &u in &users {
        links.push(link(u, bss[0]));
        links.extend(sensors.iter().map(|&n| link(u, n)));
    }
    let topo = Topology {
        base_stations: bss
            .iter()
            .enumerate()
            .map(|(i, &id)| BaseStationSpec {
                id,
                neighbors: [i.checked_sub(1), Some(i + 1)].into_iter().flatten().filter_map(|j| bss.get(j).copied()).collect(),
            })
            .collect(),
        sinks: sinks.clone(),
        sensors: sensors.iter().map(|&n| spec(n)).collect(),
        users: users.iter().map(|&u| spec(u)).collect(),
        links,
    };
    let mut cfg = SimConfig::new(seed, topo);
    cfg.protocol.timestamps = rng.gen_bool(0.3);
    let pick = |rng: &mut ChaCha8Rng| sinks[rng.gen_range(0..sinks.len())].id;
    for &n in &sensors {
        let first = pick(&mut rng);
        cfg = cfg.schedule(rng.gen_range(2..10), Intent::Activate { node: n, sink: first });
        let second = pick(&mut rng);
        if second != first {
            cfg = cfg.schedule(rng.gen_range(30..50), Intent::Switch { node: n, sink: second });
        }
        if rng.gen_bool(0.5) {
            cfg = cfg.schedule(rng.gen_range(60..80), Intent::Report { sensor: n, count: 3, period: 2 });
        }
    }
    for &u in &users {
        cfg = cfg.schedule(rng.gen_range(2..10), Intent::UserJoin { user: u, bs: bss[0] });
        cfg = cfg.schedule(rng.gen_range(30..50), Intent::Switch { node: u, sink: pick(&mut rng) });
        cfg = cfg.schedule(rng.gen_range(60..80), Intent::AccessSensor { user: u, sensor: sensors[rng.gen_range(0..sensors.len())] });
    }
    cfg
}

pub fn bs1() -> NodeId {
    NodeId::base_station(1)
}

pub fn spec(id: NodeId) -> InitiatorSpec {
    InitiatorSpec { id, password: None, permissions: None }
}

pub fn link(a: NodeId, b: NodeId) -> LinkSpec {
    LinkSpec { a, b, delay: None }
}

/// BS1 (S1, S2) next to BS2 (S3); S3 also holds the key of BS1's group.
pub fn topology() -> Topology {
    let (bs2, n1, u1) = (NodeId::base_station(2), NodeId::sensor(1), NodeId::user(1));
    let (s1, s2, s3) = (NodeId::sink(1), NodeId::sink(2), NodeId::sink(3));
    Topology {
        base_stations: vec![BaseStationSpec { id: bs1(), neighbors: vec![bs2] }, BaseStationSpec { id: bs2, neighbors: vec![bs1()] }],
        sinks: vec![
            SinkSpec { id: s1, bs: bs1(), foreign_groups: vec![] },
            SinkSpec { id: s2, bs: bs1(), foreign_groups: vec![] },
            SinkSpec { id: s3, bs: bs2, foreign_groups: vec![bs1()] },
        ],
        sensors: vec![spec(n1)],
        users: vec![spec(u1)],
        links: vec![link(n1, s1), link(n1, s2), link(n1, s3), link(u1, bs1()), link(u1, s2), link(u1, n1)],
    }
}

/// Protocol messages on the air, beacons and key distribution excluded.
pub fn exchange_messages(cfg: &SimConfig) -> usize {
    let out = simnet::run(cfg).unwrap();
    assert!(out.quiescent);
    assert_eq!(out.trace.events_of(EventKind::ChallengeFailed).count(), 0);
    out.trace.honest_messages().filter(|m| m.variant != "Hello" && m.variant != "KeyMsg").count()
}

/// Messages added by `intent` on top of `setup`.
pub fn cost_of(setup: &[(u64, Intent)], intent: Intent) -> usize {
    let mut base = SimConfig::new(11, topology());
    for (at, i) in setup {
        base = base.schedule(*at, i.clone());
    }
    let with = base.clone().schedule(40, intent);
    exchange_messages(&with) - exchange_messages(&base)
}

pub fn activate() -> (u64, Intent) {
    (2, Intent::Activate { node: NodeId::sensor(1), sink: NodeId::sink(1) })
}

pub fn user_join() -> (u64, Intent) {
    (2, Intent::UserJoin { user: NodeId::user(1), bs: bs1() })
}
