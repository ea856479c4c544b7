use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use smsn::crypto::{GroupId, KeyMaterial, NodeId, Nonce, SecretNumber};
use smsn::keychain::{GroupContext, KeyChain, KeyMsg};
use smsn::metrics::experiments::{defaults, fig15_probabilities};
use smsn::metrics::{
    cost_rows, experiment_fig13, experiment_fig14, experiment_fig15, measure_run, table3_check, Dataset, Meter, SchemeCostRow,
};
use smsn::protocol::ProtocolConfig;
use smsn::simnet::scenarios::{default_config, run_scenario, with_tunnel_delay};
use smsn::simnet::{self, ScenarioKind, SimConfig, SimError};
use smsn::ticket::{
    issue_ticket, parse_ticket, serialize_ticket, verify_ticket, IssueOptions, Permissions, Profile, ProfileStore, TicketMode,
    VerifyOptions,
};

#[derive(Parser)]
#[command(name = "smsn", version, about = "Ticket-based sensor network authentication simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(clap::Args)]
struct Opts {
    /// TOML file describing topology, workload and intruder script.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config (default 0 without a config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Ticket retrieval mode.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=3))]
    mode: Option<u8>,
    /// Number of intervals L per key chain.
    #[arg(long, visible_alias = "L", global = true)]
    chain_length: Option<u32>,
    /// Key chain lifetime in ticks.
    #[arg(long, global = true)]
    td: Option<u64>,
    /// Enables envelope timestamps.
    #[arg(long, global = true)]
    timestamps: bool,
    /// Wormhole tunnel delay in ticks.
    #[arg(long, global = true)]
    tunnel_delay: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Worker threads for figure sweeps.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Runs a configured network to quiescence and reports its trace and cost ledger.
    Run {
        /// Also write the raw trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Runs an attack scenario; exit 0 when the outcome is the expected verdict.
    Attack { scenario: String },
    /// Emits a cost dataset: 3 (table check), 13, 14 or 15.
    Perf { figure: u32 },
    /// Inspects key chains, hash trees and tickets.
    Keys {
        #[arg(value_enum)]
        action: KeysAction,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KeysAction {
    Chain,
    Tree,
    Ticket,
}

/// Bad input from the caller: exit code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn sim_err(e: SimError) -> anyhow::Error {
    match e {
        SimError::Config(m) => usage(format!("configuration error: {m}")),
        other => other.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<Usage>().is_some() { 2 } else { 3 })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Run { trace } => cmd_run(&cli.opts, trace.as_deref()),
        Command::Attack { scenario } => cmd_attack(&cli.opts, scenario),
        Command::Perf { figure } => cmd_perf(&cli.opts, *figure),
        Command::Keys { action } => cmd_keys(&cli.opts, *action),
    }
}

fn emit(opts: &Opts, text: &str) -> Result<()> {
    match &opts.output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn emit_json(opts: &Opts, v: &Value) -> Result<()> {
    emit(opts, &format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn read_config(path: &Path) -> Result<SimConfig> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    SimConfig::from_toml_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn apply_overrides(cfg: &mut SimConfig, opts: &Opts) -> Result<()> {
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let p = &mut cfg.protocol;
    if let Some(m) = opts.mode {
        p.mode = TicketMode::try_from(m).map_err(usage)?;
    }
    if let Some(l) = opts.chain_length {
        p.chain_length = l;
    }
    if let Some(td) = opts.td {
        p.td = td;
    }
    if opts.timestamps {
        p.timestamps = true;
    }
    cfg.validate().map_err(sim_err)
}

fn cmd_run(opts: &Opts, trace_path: Option<&Path>) -> Result<u8> {
    let path = opts.config.as_deref().ok_or_else(|| usage("run needs --config"))?;
    let mut cfg = read_config(path)?;
    apply_overrides(&mut cfg, opts)?;
    let out = simnet::run(&cfg).map_err(sim_err)?;
    let ledger = measure_run(&out.trace)?;
    if let Some(p) = trace_path {
        fs::write(p, out.trace.to_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    }
    let honest = out.trace.honest_messages().count();
    eprintln!("seed {}: {} honest messages, stopped at tick {}, quiescent={}", cfg.seed, honest, out.end_tick, out.quiescent);
    match opts.format {
        Format::Json => emit_json(
            opts,
            &json!({
                "seed": cfg.seed,
                "end_tick": out.end_tick,
                "quiescent": out.quiescent,
                "ledger": ledger,
                "trace": out.trace.records,
            }),
        )?,
        Format::Csv => {
            let mut text = String::from("phase,e,h,x,m,ex,t,retrieval_h,unicast,broadcast,bytes\n");
            for (phase, l) in &ledger {
                text += &format!(
                    "{phase},{},{},{},{},{},{},{},{},{},{}\n",
                    l.e, l.h, l.x, l.m, l.ex, l.t, l.retrieval_h, l.unicast, l.broadcast, l.bytes
                );
            }
            emit(opts, &text)?;
        }
    }
    Ok(if out.quiescent { 0 } else { 1 })
}

fn cmd_attack(opts: &Opts, name: &str) -> Result<u8> {
    let kind: ScenarioKind = name.parse().map_err(sim_err)?;
    let mut cfg = match &opts.config {
        Some(p) => read_config(p)?,
        None => default_config(kind, 0),
    };
    apply_overrides(&mut cfg, opts)?;
    if let Some(d) = opts.tunnel_delay {
        if kind != ScenarioKind::Wormhole {
            return Err(usage("--tunnel-delay only applies to the wormhole scenario"));
        }
        cfg = with_tunnel_delay(cfg, d);
    }
    let outcome = run_scenario(kind, &cfg).map_err(sim_err)?;
    eprintln!(
        "{kind}: attacked={} detected={} completed={} gain={} verdict={}",
        outcome.attacked,
        outcome.detected,
        outcome.completed,
        outcome.knowledge_gain.len(),
        if outcome.verdict { "expected" } else { "UNEXPECTED" }
    );
    emit_json(opts, &serde_json::to_value(&outcome)?)?;
    Ok(if outcome.verdict { 0 } else { 1 })
}

fn cmd_perf(opts: &Opts, figure: u32) -> Result<u8> {
    let rows = cost_rows();
    let seed = opts.seed.unwrap_or(defaults::SEED);
    if figure == 3 {
        let checks = table3_check(&rows, seed)?;
        let all = checks.iter().all(|c| c.matches);
        for c in &checks {
            eprintln!("{} {:?}: {}", c.scheme, c.phase, if c.matches { "match" } else { "MISMATCH" });
        }
        match opts.format {
            Format::Json => emit_json(opts, &json!({ "matches": all, "rows": checks }))?,
            Format::Csv => {
                let mut text = String::from("scheme,phase,expected_bytes,measured_bytes,matches\n");
                for c in &checks {
                    let phase = serde_json::to_value(c.phase)?;
                    let phase = phase.as_str().unwrap_or_default();
                    text += &format!("\"{}\",{phase},{},{},{}\n", c.scheme, c.expected.bytes, c.measured.bytes, c.matches);
                }
                emit(opts, &text)?;
            }
        }
        return Ok(if all { 0 } else { 1 });
    }
    let sweep: fn(&[SchemeCostRow], u64) -> Result<Dataset, smsn::metrics::MetricsError> = match figure {
        13 => |r, _| experiment_fig13(r, &defaults::fig13_user_counts(), defaults::FIG13_NODES),
        14 => |r, _| experiment_fig14(r, &defaults::fig14_network_sizes(), defaults::FIG14_USERS),
        15 => |r, s| experiment_fig15(r, &fig15_probabilities(), defaults::FIG15_NODES, defaults::FIG15_ROUNDS, s),
        other => return Err(usage(format!("unknown figure {other} (expected 3, 13, 14 or 15)"))),
    };
    let data = parallel_sweep(&rows, seed, opts.jobs.max(1), sweep)?;
    eprintln!("{}: {} points over {} schemes", data.name, data.points.len(), smsn::metrics::table::schemes(&rows).len());
    match opts.format {
        Format::Json => emit_json(opts, &serde_json::to_value(&data)?)?,
        Format::Csv => emit(opts, &data.to_csv())?,
    }
    Ok(0)
}

/// Schemes are independent, so each worker sweeps a slice of them. Points
/// come back in the order a single sweep would produce.
fn parallel_sweep(
    rows: &[SchemeCostRow],
    seed: u64,
    jobs: usize,
    sweep: fn(&[SchemeCostRow], u64) -> Result<Dataset, smsn::metrics::MetricsError>,
) -> Result<Dataset> {
    let names = smsn::metrics::table::schemes(rows);
    if jobs == 1 || names.len() < 2 {
        return Ok(sweep(rows, seed)?);
    }
    let chunks: Vec<Vec<SchemeCostRow>> = names
        .chunks(names.len().div_ceil(jobs))
        .map(|group| rows.iter().filter(|r| group.contains(&r.scheme)).cloned().collect())
        .collect();
    let parts = std::thread::scope(|s| {
        let handles: Vec<_> = chunks.iter().map(|c| s.spawn(move || sweep(c, seed))).collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| anyhow!("sweep worker panicked"))?.map_err(anyhow::Error::from))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut data = parts[0].clone();
    data.points = parts.into_iter().flat_map(|d| d.points).collect();
    let xs: Vec<f64> = {
        let mut seen = Vec::new();
        for p in &data.points {
            if !seen.contains(&p.x) {
                seen.push(p.x);
            }
        }
        seen
    };
    let scheme_pos = |s: &str| names.iter().position(|n| n == s).unwrap_or(usize::MAX);
    let x_pos = |x: f64| xs.iter().position(|v| *v == x).unwrap_or(usize::MAX);
    if data.name == "fig15" {
        data.points.sort_by_key(|p| (x_pos(p.x), scheme_pos(&p.scheme)));
    } else {
        data.points.sort_by_key(|p| (scheme_pos(&p.scheme), x_pos(p.x)));
    }
    Ok(data)
}

/// Group nonce derived from the seed so `keys` output is reproducible.
fn seed_nonce(seed: u64) -> Nonce {
    Nonce((seed ^ (seed >> 32)) as u32)
}

fn cmd_keys(opts: &Opts, action: KeysAction) -> Result<u8> {
    let defaults = ProtocolConfig::default();
    let seed = opts.seed.unwrap_or(0);
    let l = opts.chain_length.unwrap_or(defaults.chain_length);
    let td = opts.td.unwrap_or(l as u64 * defaults.interval_len().max(1));
    let n0 = seed_nonce(seed);
    let chain = KeyChain::new(GroupId(1), 1, td, l, n0, 0).map_err(|e| usage(e.to_string()))?;
    let hex = |d: &KeyMaterial| d.to_hex();
    let v = match action {
        KeysAction::Chain => {
            eprintln!("chain of {l} intervals, td {td}: {} digests", chain.zeta.len());
            json!({
                "seed": seed,
                "td": td,
                "intervals": l,
                "n0_group": n0.0,
                "zeta": chain.zeta.iter().map(hex).collect::<Vec<_>>(),
            })
        }
        KeysAction::Tree => {
            let tree = chain.tree().ok_or_else(|| usage("a hash tree needs a power-of-two chain length of at least 4"))?;
            eprintln!("tree over {} leaves, depth {}", tree.leaf_count(), tree.depth());
            json!({
                "seed": seed,
                "intervals": l,
                "depth": tree.depth(),
                "root": hex(&tree.root()),
                "index": chain.index().values.iter().map(|v| hex_fmt(v.0)).collect::<Vec<_>>(),
                "levels": (0..=tree.depth()).map(|d| tree.level(d).iter().map(hex).collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        }
        KeysAction::Ticket => ticket_round_trip(seed, chain, opts.mode.unwrap_or(defaults.mode as u8))?,
    };
    let ok = v.get("verified").and_then(Value::as_bool).unwrap_or(true);
    emit_json(opts, &v)?;
    if !ok {
        bail!("ticket failed to verify after a round trip");
    }
    Ok(0)
}

fn hex_fmt(bytes: impl AsRef<[u8]>) -> String {
    bytes.as_ref().iter().map(|b| format!("{b:02x}")).collect()
}

fn ticket_round_trip(seed: u64, chain: KeyChain, mode: u8) -> Result<Value> {
    let mode = TicketMode::try_from(mode).map_err(usage)?;
    let bs = NodeId::base_station(1);
    let node = NodeId::sensor(1);
    let members: BTreeSet<NodeId> = [bs, NodeId::sink(1)].into_iter().collect();
    let msg = KeyMsg { sender: bs, td: chain.td, n0_group: seed_nonce(seed), epoch: 1 };
    let group_key = smsn::crypto::hash(&seed.to_be_bytes());
    let ctx = GroupContext::provision(GroupId(1), bs, members, group_key, &msg, chain.intervals(), 0).map_err(|e| usage(e.to_string()))?;
    let mut store = ProfileStore::new();
    let n_s = SecretNumber(Nonce((seed as u32).wrapping_mul(2654435761) ^ 0x5eed));
    store
        .register(Profile { node, n_s, permissions: Permissions::REPORT, registered_at: 0, password_hash: None })
        .map_err(|e| anyhow!("{e}"))?;
    let k = (seed % chain.intervals() as u64) as u32;
    let mut meter = Meter::default();
    let n0 = Nonce(seed_nonce(seed).0.wrapping_add(1));
    let (ticket, session_key) =
        issue_ticket(&ctx, &store, node, n0, mode, k, IssueOptions::default(), &mut meter).map_err(|e| usage(e.to_string()))?;
    let bytes = serialize_ticket(&ticket);
    let parsed = parse_ticket(&bytes)?;
    let verified = verify_ticket(&ctx, &parsed, VerifyOptions::default(), &mut meter)?;
    let ok = parsed == ticket && verified.interval == k && verified.inner.session_key == session_key && verified.inner.node == node;
    eprintln!("mode {} ticket at interval {k}: {} bytes, verified={ok}", mode as u8, bytes.len());
    Ok(json!({
        "seed": seed,
        "mode": mode as u8,
        "interval": k,
        "node": node.to_string(),
        "ticket": hex_fmt(&bytes),
        "session_key": session_key.to_hex(),
        "verified": ok,
    }))
}
