//! Runs the eight acceptance criteria and prints one line per criterion.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

use smsn::crypto::{GroupId, IndexValue, KeyMaterial, NodeId, Nonce, SecretNumber};
use smsn::keychain::{build_index_vector, search_tree, select_hash_vector, GroupContext, KeyChain, KeyMsg};
use smsn::metrics::experiments::{defaults, fig15_probabilities};
use smsn::metrics::table::{row, schemes, SMSN_USER_SENSOR, SMSN_USER_SINK, TSENG, YOO};
use smsn::metrics::{cost_rows, eval_cost_model, experiment_fig14, experiment_fig15, table3_check, Meter, Phase, RowPhase};
use smsn::protocol::{Dest, EventKind, Intent};
use smsn::simnet::scenarios::{default_config, run_scenario, scenario_wormhole};
use smsn::simnet::{self, knowledge_gain, ScenarioKind};
use smsn::ticket::{
    issue_ticket, parse_ticket, serialize_ticket, verify_ticket, IssueOptions, Permissions, Profile, ProfileStore, TicketMode,
    VerifyOptions,
};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn table3() -> Outcome {
    let checks = table3_check(&cost_rows(), defaults::SEED).map_err(|e| e.to_string())?;
    let want = [
        (SMSN_USER_SINK, RowPhase::Registration, 8, 5, 3, 136),
        (SMSN_USER_SINK, RowPhase::LoginAuth, 8, 2, 3, 128),
        (SMSN_USER_SENSOR, RowPhase::Registration, 8, 5, 3, 136),
        (SMSN_USER_SENSOR, RowPhase::LoginAuth, 9, 2, 4, 208),
    ];
    for (scheme, phase, e, h, uc, bytes) in want {
        let c = checks.iter().find(|c| c.scheme == scheme && c.phase == phase).ok_or(format!("{scheme} {phase:?} missing"))?;
        let m = c.measured;
        check(
            c.matches && (m.e, m.h, m.unicast, m.broadcast, m.bytes) == (e, h, uc, 0, bytes),
            format!("{scheme} {phase:?}: measured {}E+{}H {}UC {}BC {} bytes", m.e, m.h, m.unicast, m.broadcast, m.bytes),
        )?;
    }
    Ok("registration 8E+5H/3UC/136B, user-sink 8E+2H/3UC/128B, user-sensor 9E+2H/4UC/208B".into())
}

fn message_counts() -> Outcome {
    let n1 = NodeId::sensor(1);
    let u1 = NodeId::user(1);
    let got = [
        ("SAAP", common::cost_of(&[], common::activate().1), 6),
        ("SRP1", common::cost_of(&[common::activate()], Intent::Switch { node: n1, sink: NodeId::sink(2) }), 3),
        ("SRP2", common::cost_of(&[common::activate()], Intent::Switch { node: n1, sink: NodeId::sink(3) }), 6),
        ("UAAP", common::cost_of(&[], common::user_join().1), 3),
        ("USeAP", common::cost_of(&[common::activate(), common::user_join()], Intent::AccessSensor { user: u1, sensor: n1 }), 4),
    ];
    let line = got.iter().map(|(n, c, _)| format!("{n}={c}")).collect::<Vec<_>>().join(" ");
    check(got.iter().all(|(_, c, want)| c == want), line.clone())?;
    Ok(line)
}

fn attacks() -> Outcome {
    let seed = 7;
    let mut notes = Vec::new();
    for kind in [ScenarioKind::ReplaySameBs, ScenarioKind::ReplayCrossBs, ScenarioKind::BlackHole] {
        let cfg = default_config(kind, seed);
        let o = run_scenario(kind, &cfg).map_err(|e| e.to_string())?;
        check(o == run_scenario(kind, &cfg).map_err(|e| e.to_string())?, format!("{kind} not deterministic"))?;
        match kind {
            ScenarioKind::ReplaySameBs => check(
                o.detected_at.as_deref() == Some("base-station")
                    && o.events.iter().any(|e| e.detail.starts_with("duplicate-M2"))
                    && o.events.iter().any(|e| e.kind == EventKind::IntruderIdentified && e.node.to_string() == "S2"),
                format!("{kind}: {:?}", o.events),
            )?,
            ScenarioKind::ReplayCrossBs => check(
                o.detected_at.as_deref() == Some("sink") && o.stage.as_deref() == Some("challenge-response") && o.intruder_identified,
                format!("{kind}: {:?}", o.events),
            )?,
            _ => {
                let s: Vec<_> = o.events.iter().filter(|e| e.kind == EventKind::BlackHoleSuspected).collect();
                check(s.len() == 1 && s[0].detail.starts_with("3 consecutive") && o.rerouted, format!("{kind}: {:?}", o.events))?;
            }
        }
        check(o.verdict, format!("{kind}: verdict false"))?;
        notes.push(format!("{kind} ok"));
    }
    let cfg = default_config(ScenarioKind::Wormhole, seed);
    let o = scenario_wormhole(&cfg, 0).map_err(|e| e.to_string())?;
    check(o.completed && o.knowledge_gain.is_empty(), format!("wormhole d=0: completed={} gain={:?}", o.completed, o.knowledge_gain))?;
    let d = cfg.protocol.interval_len() + 1;
    let o = scenario_wormhole(&cfg, d).map_err(|e| e.to_string())?;
    check(!o.completed, format!("wormhole d={d} completed"))?;
    let mut ts = cfg.clone();
    ts.protocol.timestamps = true;
    for d in [1, 4, 9] {
        let o = scenario_wormhole(&ts, d).map_err(|e| e.to_string())?;
        check(o.detected && o.stage.as_deref() == Some("timestamp"), format!("wormhole d={d} with timestamps undetected"))?;
    }
    notes.push("wormhole d=0 completes gain-free, d>Td/L fails, timestamps detect".into());
    Ok(notes.join("; "))
}

fn sha(b: &[u8]) -> [u8; 32] {
    Sha256::digest(b).into()
}

fn context(l: u32) -> GroupContext {
    let bs = NodeId::base_station(1);
    let members: BTreeSet<_> = [bs, NodeId::sink(1)].into_iter().collect();
    let msg = KeyMsg { sender: bs, td: 16 * l as u64, n0_group: Nonce(3), epoch: 1 };
    GroupContext::provision(GroupId(1), bs, members, KeyMaterial::from_bytes([8; 32]), &msg, l, 0).unwrap()
}

fn keychain_properties() -> Outcome {
    const CASES: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(defaults::SEED);
    let mut store = ProfileStore::new();
    store
        .register(Profile {
            node: NodeId::sensor(1),
            n_s: SecretNumber(Nonce(77)),
            permissions: Permissions::REPORT,
            registered_at: 0,
            password_hash: None,
        })
        .unwrap();
    let contexts: Vec<(u32, GroupContext)> = [4, 8, 64].into_iter().map(|l| (l, context(l))).collect();
    for _ in 0..CASES {
        let (l, ctx) = &contexts[rng.gen_range(0..3)];
        let c = &ctx.current;
        let k = rng.gen_range(0..=*l);
        let i = rng.gen_range(0..=*l - k);
        let mut z = *c.zeta[k as usize].as_bytes();
        for _ in 0..i {
            z = sha(&z);
        }
        check(&z == c.zeta[(k + i) as usize].as_bytes(), format!("chain L={l} k={k} i={i}"))?;
    }
    let mut tickets = 0;
    for (l, ctx) in &contexts {
        for mode in [TicketMode::Indexed, TicketMode::Interval, TicketMode::Tree] {
            for k in 0..*l {
                let n0 = Nonce(rng.gen());
                let (t, ks) = issue_ticket(ctx, &store, NodeId::sensor(1), n0, mode, k, IssueOptions::default(), &mut Meter::default())
                    .map_err(|e| e.to_string())?;
                let v = verify_ticket(
                    ctx,
                    &parse_ticket(&serialize_ticket(&t)).map_err(|e| e.to_string())?,
                    VerifyOptions::default(),
                    &mut Meter::default(),
                )
                .map_err(|e| format!("L={l} {mode:?} k={k}: {e}"))?;
                check(v.interval == k && v.inner.session_key == ks && v.inner.n0 == n0, format!("ticket L={l} {mode:?} k={k}"))?;
                tickets += 1;
            }
        }
    }
    let mut forged = 0;
    for exp in 2..=6 {
        let l = 1u32 << exp;
        let chain = KeyChain::new(GroupId(1), 1, 16 * l as u64, l, Nonce(rng.gen()), 0).unwrap();
        let v = build_index_vector(&chain);
        let tree = chain.tree().ok_or("no tree")?;
        for k in 0..l as usize {
            let hv = select_hash_vector(tree, k).map_err(|e| e.to_string())?;
            check(search_tree(tree, &hv, v.values[k]) == Ok(k), format!("tree L={l} k={k}"))?;
            for _ in 0..CASES / 64 + 1 {
                let bad = IndexValue(rng.gen());
                if !v.values.contains(&bad) {
                    check(search_tree(tree, &hv, bad).is_err(), format!("forged index accepted L={l} k={k}"))?;
                    forged += 1;
                }
            }
            if !hv.is_empty() {
                let mut bad = hv.clone();
                bad[rng.gen_range(0..hv.len())] = KeyMaterial::from_bytes(rng.gen());
                check(search_tree(tree, &bad, v.values[k]).is_err(), format!("forged path accepted L={l} k={k}"))?;
            }
        }
    }
    Ok(format!("{CASES} chain cases, {tickets} ticket round trips, {forged} forged indices rejected"))
}

fn secrecy() -> Outcome {
    let mut keys = 0;
    for i in 0..100u64 {
        let cfg = common::random_config(defaults::SEED.wrapping_add(i).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let out = simnet::run(&cfg).map_err(|e| e.to_string())?;
        keys += simnet::secret_inventory(&out).len();
        let gain = knowledge_gain(&out);
        check(gain.is_empty(), format!("topology {i} (seed {}): {gain:?}", cfg.seed))?;
    }
    Ok(format!("100 topologies, {keys} secrets, none derivable"))
}

fn rollover() -> Outcome {
    let cfg = common::rollover_config();
    let out = simnet::run(&cfg).map_err(|e| e.to_string())?;
    let opened = out.trace.honest_messages().find(|m| m.variant == "KeyMsg").map(|m| m.tick + cfg.default_delay).ok_or("no rollover")?;
    let sink = out.sink(NodeId::sink(1)).ok_or("no sink")?;
    let bs = out.base_station(NodeId::base_station(1)).ok_or("no base station")?;
    for i in 1..=3u32 {
        let n = NodeId::sensor(i);
        let at: Vec<u64> =
            out.trace.honest_messages().filter(|m| m.variant == "Reissue" && m.to == Dest::Unicast(n)).map(|m| m.tick).collect();
        check(at == vec![opened + (i as u64 - 1) * common::LEN], format!("{n} reissued at {at:?}"))?;
        let s = &sink.sessions[&n];
        check((s.epoch, s.interval) == (2, i - 1), format!("{n} session on epoch {} interval {}", s.epoch, s.interval))?;
        let held = &out.initiator(n).ok_or("no sensor")?.tickets[&bs.id];
        let v = verify_ticket(&bs.group, &held.ticket, VerifyOptions::default(), &mut Meter::default()).map_err(|e| e.to_string())?;
        check(v.epoch == 2, format!("{n} ticket on epoch {}", v.epoch))?;
    }
    check(bs.group.previous.is_none() && sink.group.previous.is_none() && sink.window.is_none(), "previous chain still held")?;
    Ok("3 nodes reissued at window steps 2..4, previous chain dropped everywhere".into())
}

fn figure_shapes() -> Outcome {
    let rows = cost_rows();
    let f14 = experiment_fig14(&rows, &defaults::fig14_network_sizes(), defaults::FIG14_USERS).map_err(|e| e.to_string())?;
    for s in [TSENG, YOO] {
        check(f14.series(s).windows(2).all(|w| w[1].1 > w[0].1), format!("fig14 {s} not increasing"))?;
    }
    for s in [SMSN_USER_SINK, SMSN_USER_SENSOR] {
        let v = f14.series(s);
        check(v.iter().all(|p| p.1 == v[0].1), format!("fig14 {s} not flat"))?;
    }
    let ps = fig15_probabilities();
    let f15 = experiment_fig15(&rows, &ps, defaults::FIG15_NODES, defaults::FIG15_ROUNDS, defaults::SEED).map_err(|e| e.to_string())?;
    check(
        f15 == experiment_fig15(&rows, &ps, defaults::FIG15_NODES, defaults::FIG15_ROUNDS, defaults::SEED).unwrap(),
        "fig15 not deterministic",
    )?;
    for &p in &ps {
        let sink = f15.value(SMSN_USER_SINK, p).unwrap();
        for s in schemes(&rows).iter().filter(|s| *s != SMSN_USER_SINK) {
            let other = f15.value(s, p).unwrap();
            check(sink <= other, format!("fig15 p={p}: SMSN user-sink {sink:.2} > {s} {other:.2}"))?;
        }
    }
    let gaps: Vec<f64> = ps.iter().map(|&p| f15.value(SMSN_USER_SENSOR, p).unwrap() - f15.value(TSENG, p).unwrap()).collect();
    check(gaps[0] > 0.0, format!("fig15 user-sensor below Tseng at p=0.05 ({:.2})", gaps[0]))?;
    check(gaps.windows(2).all(|w| w[1] < w[0]), format!("fig15 gap not shrinking: {gaps:?}"))?;
    for s in schemes(&rows) {
        if eval_cost_model(row(&rows, &s, RowPhase::Registration).unwrap(), defaults::FIG15_NODES).bytes > 0 {
            check(f15.series(&s).windows(2).all(|w| w[1].1 >= w[0].1), format!("fig15 {s} decreasing in p"))?;
        }
    }
    let margin = f15.value(TSENG, 0.05).unwrap() - f15.value(SMSN_USER_SINK, 0.05).unwrap();
    Ok(format!("fig14 Tseng/Yoo increasing, SMSN flat; fig15 seed {} user-sink margin at p=0.05: {margin:.2} B", defaults::SEED))
}

fn determinism() -> Outcome {
    let mut n = 0;
    for kind in ScenarioKind::ALL {
        let cfg = default_config(kind, 21);
        let a = simnet::run(&cfg).map_err(|e| e.to_string())?.trace.to_jsonl();
        let b = simnet::run(&cfg).map_err(|e| e.to_string())?.trace.to_jsonl();
        check(a == b, format!("{kind}: traces differ"))?;
        n += a.len();
    }
    let cfg = common::random_config(99);
    check(simnet::run(&cfg).unwrap().trace.to_jsonl() == simnet::run(&cfg).unwrap().trace.to_jsonl(), "random topology traces differ")?;
    let ledger = smsn::metrics::measure_run(&simnet::run(&cfg).unwrap().trace).map_err(|e| e.to_string())?;
    check(ledger.contains_key(&Phase::Registration), "no registration phase measured")?;
    Ok(format!("5 configs run twice, {n} trace bytes identical"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (1, "SMSN cost-row reproduction", Duration::from_secs(1), table3),
        (2, "protocol message counts", Duration::from_secs(1), message_counts),
        (3, "attack verdicts", Duration::from_secs(5), attacks),
        (4, "key-chain and ticket properties", Duration::from_secs(10), keychain_properties),
        (5, "transcript secrecy", Duration::from_secs(30), secrecy),
        (6, "moving-window rollover", Duration::from_secs(1), rollover),
        (7, "figure 13-15 shapes", Duration::from_secs(10), figure_shapes),
        (8, "trace determinism", Duration::from_secs(2), determinism),
    ];
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed();
        let result = result.and_then(|d| if took <= budget { Ok(d) } else { Err(format!("{d}; over the {budget:?} budget")) });
        match &result {
            Ok(detail) => println!("criterion {n} PASS {name} ({:.2}s): {detail}", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL {name} ({:.2}s): {why}", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {}/8 criteria pass", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
