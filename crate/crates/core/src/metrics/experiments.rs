//! Table and figure generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::NodeId;
use crate::protocol::Intent;
use crate::simnet::{self, BaseStationSpec, InitiatorSpec, LinkSpec, SimConfig, SinkSpec, Topology};

use super::table::{eval_cost_model, message_total, row, schemes, RowPhase, SchemeCostRow, SMSN_USER_SENSOR, SMSN_USER_SINK};
use super::{measure_run, CostLedger, MetricsError, Phase, PhaseLedger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub scheme: String,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub x_label: String,
    pub value_label: String,
    pub points: Vec<Point>,
}

impl Dataset {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["scheme", "x", "value"]).expect("in-memory write");
        for p in &self.points {
            w.write_record([p.scheme.as_str(), &p.x.to_string(), &p.value.to_string()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn series(&self, scheme: &str) -> Vec<(f64, f64)> {
        self.points.iter().filter(|p| p.scheme == scheme).map(|p| (p.x, p.value)).collect()
    }

    pub fn value(&self, scheme: &str, x: f64) -> Option<f64> {
        self.points.iter().find(|p| p.scheme == scheme && p.x == x).map(|p| p.value)
    }
}

fn phase_cost(rows: &[SchemeCostRow], scheme: &str, phase: RowPhase, n: u64) -> Result<CostLedger, MetricsError> {
    row(rows, scheme, phase).map(|r| eval_cost_model(r, n)).ok_or_else(|| MetricsError::MissingRow(format!("{scheme} {phase:?}")))
}

/// Messages for one user's registration plus one login, in a network of `n` nodes.
fn messages_per_user(rows: &[SchemeCostRow], scheme: &str, n: u64) -> Result<u64, MetricsError> {
    let reg = phase_cost(rows, scheme, RowPhase::Registration, n)?;
    let login = phase_cost(rows, scheme, RowPhase::LoginAuth, n)?;
    Ok(message_total(&reg, n) + message_total(&login, n))
}

/// Total messages against the number of new user requests, at a fixed network size.
pub fn experiment_fig13(rows: &[SchemeCostRow], user_counts: &[u64], nodes: u64) -> Result<Dataset, MetricsError> {
    let mut points = Vec::new();
    for s in schemes(rows) {
        let per_user = messages_per_user(rows, &s, nodes)?;
        points.extend(user_counts.iter().map(|&u| Point { scheme: s.clone(), x: u as f64, value: (u * per_user) as f64 }));
    }
    Ok(Dataset { name: "fig13".into(), x_label: "users".into(), value_label: "messages".into(), points })
}

/// Total messages against network size, for a fixed number of user requests.
pub fn experiment_fig14(rows: &[SchemeCostRow], network_sizes: &[u64], users: u64) -> Result<Dataset, MetricsError> {
    let mut points = Vec::new();
    for s in schemes(rows) {
        for &n in network_sizes {
            points.push(Point { scheme: s.clone(), x: n as f64, value: (users * messages_per_user(rows, &s, n)?) as f64 });
        }
    }
    Ok(Dataset { name: "fig14".into(), x_label: "nodes".into(), value_label: "messages".into(), points })
}

/// Registration and login counts of the join/leave process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Churn {
    pub registrations: u64,
    pub logins: u64,
}

/// `users` users, all registered and active at the start. Each round every
/// inactive user rejoins (and re-registers) with probability `p`, every
/// active user leaves with probability `p`, then each active user logs in
/// once.
pub fn churn(users: u64, rounds: u64, p: f64, rng: &mut impl Rng) -> Churn {
    let mut active = vec![true; users as usize];
    let mut c = Churn { registrations: users, logins: 0 };
    for _ in 0..rounds {
        for a in active.iter_mut() {
            let flip = rng.gen_bool(p);
            if *a && flip {
                *a = false;
            } else if !*a && flip {
                *a = true;
                c.registrations += 1;
            }
        }
        c.logins += active.iter().filter(|a| **a).count() as u64;
    }
    c
}

/// Average bytes per login session under churn. All schemes at one `p`
/// see the same join/leave sequence.
pub fn experiment_fig15(rows: &[SchemeCostRow], ps: &[f64], nodes: u64, rounds: u64, seed: u64) -> Result<Dataset, MetricsError> {
    if let Some(p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(MetricsError::BadParameter(format!("probability {p} outside [0, 1]")));
    }
    let mut points = Vec::new();
    let names = schemes(rows);
    for (i, &p) in ps.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((i as u64) << 32));
        let c = churn(nodes, rounds, p, &mut rng);
        for s in &names {
            let reg = phase_cost(rows, s, RowPhase::Registration, nodes)?.bytes;
            let login = phase_cost(rows, s, RowPhase::LoginAuth, nodes)?.bytes;
            let total = c.registrations * reg + c.logins * login;
            let value = if c.logins == 0 { 0.0 } else { total as f64 / c.logins as f64 };
            points.push(Point { scheme: s.clone(), x: p, value });
        }
    }
    Ok(Dataset { name: "fig15".into(), x_label: "p".into(), value_label: "bytes-per-user".into(), points })
}

/// `0.05, 0.10, ..., 0.50`.
pub fn fig15_probabilities() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

/// Default sweep parameters.
pub mod defaults {
    pub const SEED: u64 = 0;
    pub const FIG13_NODES: u64 = 100;
    pub const FIG14_USERS: u64 = 10;
    pub const FIG15_NODES: u64 = 100;
    pub const FIG15_ROUNDS: u64 = 200;

    pub fn fig13_user_counts() -> Vec<u64> {
        (1..=100).collect()
    }

    pub fn fig14_network_sizes() -> Vec<u64> {
        (1..=20).map(|i| i * 10).collect()
    }
}

const BS1: NodeId = NodeId { kind: crate::crypto::NodeKind::BaseStation, id: 1 };
const S1: NodeId = NodeId { kind: crate::crypto::NodeKind::Sink, id: 1 };
const S2: NodeId = NodeId { kind: crate::crypto::NodeKind::Sink, id: 2 };
const N1: NodeId = NodeId { kind: crate::crypto::NodeKind::Sensor, id: 1 };

fn user(id: u32) -> NodeId {
    NodeId::user(id)
}

fn initiator(id: NodeId) -> InitiatorSpec {
    InitiatorSpec { id, password: None, permissions: None }
}

fn link(a: NodeId, b: NodeId) -> LinkSpec {
    LinkSpec { a, b, delay: None }
}

/// `users` users join at the base station and then switch to a second sink
/// of the same group.
pub fn user_sink_config(users: u32, seed: u64) -> SimConfig {
    let ids: Vec<NodeId> = (1..=users).map(user).collect();
    let topo = Topology {
        base_stations: vec![BaseStationSpec { id: BS1, neighbors: vec![] }],
        sinks: vec![SinkSpec { id: S1, bs: BS1, foreign_groups: vec![] }, SinkSpec { id: S2, bs: BS1, foreign_groups: vec![] }],
        users: ids.iter().map(|u| initiator(*u)).collect(),
        links: ids.iter().flat_map(|u| [link(*u, BS1), link(*u, S2)]).collect(),
        ..Topology::default()
    };
    let mut cfg = SimConfig::new(seed, topo);
    for (i, u) in ids.iter().enumerate() {
        cfg = cfg.schedule(2 + i as u64, Intent::UserJoin { user: *u, bs: BS1 });
        cfg = cfg.schedule(40 + i as u64, Intent::Switch { node: *u, sink: S2 });
    }
    cfg
}

/// One user joins at the base station, a sensor activates through a sink,
/// then the user opens a session with the sensor.
pub fn user_sensor_config(seed: u64) -> SimConfig {
    let u = user(1);
    let topo = Topology {
        base_stations: vec![BaseStationSpec { id: BS1, neighbors: vec![] }],
        sinks: vec![SinkSpec { id: S1, bs: BS1, foreign_groups: vec![] }],
        sensors: vec![initiator(N1)],
        users: vec![initiator(u)],
        links: vec![link(N1, S1), link(u, BS1), link(u, N1)],
    };
    SimConfig::new(seed, topo)
        .schedule(2, Intent::Activate { node: N1, sink: S1 })
        .schedule(2, Intent::UserJoin { user: u, bs: BS1 })
        .schedule(40, Intent::AccessSensor { user: u, sensor: N1 })
}

/// Only the user's join, so the registration phase holds nothing else.
pub fn user_registration_config(seed: u64) -> SimConfig {
    let mut cfg = user_sink_config(1, seed);
    cfg.workload.retain(|w| matches!(w.intent, Intent::UserJoin { .. }));
    cfg
}

pub fn run_ledger(cfg: &SimConfig) -> Result<PhaseLedger, MetricsError> {
    let out = simnet::run(cfg)?;
    measure_run(&out.trace)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table3Check {
    pub scheme: String,
    pub phase: RowPhase,
    pub expected: CostLedger,
    pub measured: CostLedger,
    pub matches: bool,
}

fn compare(scheme: &str, phase: RowPhase, expected: CostLedger, measured: CostLedger) -> Table3Check {
    let matches = expected.e == measured.e
        && expected.h == measured.h
        && expected.x == measured.x
        && expected.unicast == measured.unicast
        && expected.broadcast == measured.broadcast
        && expected.bytes == measured.bytes;
    Table3Check { scheme: scheme.to_string(), phase, expected, measured, matches }
}

/// Instrumented honest runs against the SMSN rows.
pub fn table3_check(rows: &[SchemeCostRow], seed: u64) -> Result<Vec<Table3Check>, MetricsError> {
    let reg = run_ledger(&user_registration_config(seed))?.remove(&Phase::Registration).unwrap_or_default();
    let sink_login = run_ledger(&user_sink_config(1, seed))?.remove(&Phase::LoginAuth).unwrap_or_default();
    let sensor_login = run_ledger(&user_sensor_config(seed))?.remove(&Phase::LoginAuth).unwrap_or_default();
    let mut out = Vec::new();
    for (scheme, phase, measured) in [
        (SMSN_USER_SINK, RowPhase::Registration, reg),
        (SMSN_USER_SINK, RowPhase::LoginAuth, sink_login),
        (SMSN_USER_SENSOR, RowPhase::Registration, reg),
        (SMSN_USER_SENSOR, RowPhase::LoginAuth, sensor_login),
    ] {
        out.push(compare(scheme, phase, phase_cost(rows, scheme, phase, 0)?, measured));
    }
    Ok(out)
}

/// Registration plus login messages of `users` simulated user-sink sessions.
pub fn simulated_user_sink_messages(users: u32, seed: u64) -> Result<u64, MetricsError> {
    let l = run_ledger(&user_sink_config(users, seed))?;
    Ok([Phase::Registration, Phase::LoginAuth].iter().filter_map(|p| l.get(p)).map(CostLedger::messages).sum())
}
