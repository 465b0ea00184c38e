//! `dcstream`: dealer output, simulation runs, the privacy experiment and
//! model sweeps.
//!
//! Exit codes: `0` success, `2` bad configuration, `3` I/O failure,
//! `4` a run contradicted a property it must hold: a garbled recovery under
//! a verified level with on-path checks, or a privacy score off chance.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dcstream::group::GroupParams;
use dcstream::perf::{self, bandwidth_per_player};
use dcstream::privacy::{run_privacy_experiment, Observer};
use dcstream::report::RunReport;
use dcstream::setup::{BundleFile, SetupBundle};
use dcstream::sim::{
    run_simulation, simulate_traffic, GroupChoice, LatencyModel, LossModel, Rotation, SimConfig, SimError,
    TrafficConfig,
};
use dcstream::{PlayerId, ProtocolLevel, Variant};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "dcstream", version, about = "Two-party covert streaming over a DC-net: setup, simulation, experiments")]
struct Cli {
    /// Scenario file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, env = "DCSTREAM_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_parser = parse_level)]
    protocol: Option<ProtocolLevel>,
    #[arg(long, global = true, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the dealer and write one file per role.
    Setup {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Simulate a scenario; writes trace.jsonl, summary.csv and report.json.
    Simulate {
        /// Dealer output from `setup`; generated from the scenario if absent.
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<u64>,
    },
    /// Guess the correspondent pair from single-round transcripts.
    PrivacyTest {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, value_enum, default_value_t = GroupArg::Toy)]
        group: GroupArg,
        #[arg(long, value_enum, default_value_t = ObserverArg::Transcript)]
        observer: ObserverArg,
    },
    /// Model sweeps as CSV: latency.csv, loss.csv, bandwidth.csv.
    Perf {
        #[arg(long, value_enum, default_value_t = Sweep::All)]
        sweep: Sweep,
        /// Simulated rounds per measured point.
        #[arg(long, default_value_t = 2000)]
        rounds: u64,
        #[arg(long, default_value_t = 0.97)]
        u: f64,
        #[arg(long, default_value_t = 0.06)]
        s: f64,
        #[arg(long, default_value_t = 100.0)]
        unit_ms: f64,
        #[arg(long, default_value_t = 50.0)]
        rate: f64,
        #[arg(long, default_value_t = 100)]
        bytes: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupArg {
    Toy,
    Default,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObserverArg {
    Transcript,
    FullKnowledge,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Sweep {
    Latency,
    Loss,
    Bandwidth,
    All,
}

fn parse_level(s: &str) -> std::result::Result<ProtocolLevel, String> {
    s.parse()
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dcstream: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Setup { n, rounds } => cmd_setup(cli, *n, *rounds),
        Cmd::Simulate { bundle, rounds } => cmd_simulate(cli, bundle.as_deref(), *rounds),
        Cmd::PrivacyTest { n, trials, group, observer } => cmd_privacy(cli, *n, *trials, *group, *observer),
        Cmd::Perf { sweep, rounds, u, s, unit_ms, rate, bytes } => {
            cmd_perf(cli, *sweep, *rounds, perf::LatencyModel { u: *u, s: *s, unit_ms: *unit_ms }, *rate, *bytes)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_owned(), source }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(io_err(&path))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut w = create(dir, name)?;
    serde_json::to_writer(&mut w, value).map_err(|e| CliError::Io { path: path.clone(), source: e.into() })?;
    w.write_all(b"\n").and_then(|()| w.flush()).map_err(io_err(&path))
}

fn scenario(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = match &cli.config {
        Some(path) => SimConfig::parse(&fs::read_to_string(path).map_err(io_err(path))?)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    if let Some(level) = cli.protocol {
        cfg.level = level;
    }
    if let Some(variant) = cli.variant {
        cfg.variant = variant;
    }
    Ok(cfg)
}

fn cmd_setup(cli: &Cli, n: Option<usize>, rounds: Option<u64>) -> Result<()> {
    let mut cfg = scenario(cli)?;
    cfg.n = n.unwrap_or(cfg.n);
    cfg.rounds = rounds.unwrap_or(cfg.rounds);
    cfg.validate()?;
    let bundle = cfg.bundle()?;
    let dir = &cli.out;
    write_json(dir, "bundle.json", &bundle.to_file())?;
    for id in PlayerId::all(cfg.n) {
        let view = bundle.player_view(id).map_err(|e| CliError::Config(e.to_string()))?;
        write_json(dir, &format!("player-{}.json", id.0), &view)?;
    }
    let (a, b) = bundle.correspondents();
    for id in [a, b] {
        let view = bundle.correspondent_view(id).map_err(|e| CliError::Config(e.to_string()))?;
        write_json(dir, &format!("corr-{}.json", id.0), &view)?;
    }
    write_json(dir, "aggregator.json", &bundle.aggregator_view())?;
    eprintln!("wrote setup for n={} rounds={} protocol {} to {}", cfg.n, cfg.rounds, cfg.level, dir.display());
    Ok(())
}

fn load_bundle(path: &Path) -> Result<SetupBundle> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: BundleFile = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    SetupBundle::from_file(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cmd_simulate(cli: &Cli, bundle: Option<&Path>, rounds: Option<u64>) -> Result<()> {
    let mut cfg = scenario(cli)?;
    cfg.rounds = rounds.unwrap_or(cfg.rounds);
    cfg.validate()?;
    let bundle = match bundle {
        Some(path) => load_bundle(path)?,
        None => cfg.bundle()?,
    };
    let out = run_simulation(&cfg, &bundle)?;
    let dir = &cli.out;
    let path = dir.join("trace.jsonl");
    let mut w = create(dir, "trace.jsonl")?;
    dcstream::sim::trace::write_jsonl(&mut w, &out.rounds).and_then(|()| w.flush()).map_err(io_err(&path))?;
    let path = dir.join("summary.csv");
    let mut w = create(dir, "summary.csv")?;
    dcstream::sim::trace::write_summary_csv(&mut w, &out.rounds, cfg.n, cfg.correspondents)
        .and_then(|()| w.flush())
        .map_err(io_err(&path))?;
    if cfg.transcript {
        let path = dir.join("transcript.jsonl");
        let mut w = create(dir, "transcript.jsonl")?;
        dcstream::protocol::transcript::write_jsonl(&mut w, &out.events)
            .and_then(|()| w.flush())
            .map_err(io_err(&path))?;
    }
    let report = RunReport::from_traces(&cfg, &out.rounds);
    write_json(dir, "report.json", &report)?;
    let _ = writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.garbled() > 0 && cfg.level >= ProtocolLevel::Verified && cfg.variant != Variant::Optimistic {
        return Err(CliError::Verification(format!("{} garbled recoveries at protocol {}", report.garbled(), cfg.level)));
    }
    Ok(())
}

fn cmd_privacy(cli: &Cli, n: usize, trials: u64, group: GroupArg, observer: ObserverArg) -> Result<()> {
    if n < 3 {
        return Err(CliError::Config(format!("privacy test needs n >= 3, got {n}")));
    }
    if trials == 0 {
        return Err(CliError::Config("trials must be positive".into()));
    }
    let params = match group {
        GroupArg::Toy => GroupParams::toy(),
        GroupArg::Default => GroupChoice::Default.params(),
    };
    let observer = match observer {
        ObserverArg::Transcript => Observer::Transcript,
        ObserverArg::FullKnowledge => Observer::FullKnowledge,
    };
    let report = run_privacy_experiment(&params, n, trials, observer, cli.seed.unwrap_or(1))
        .map_err(|e| CliError::Config(e.to_string()))?;
    write_json(&cli.out, "privacy.json", &report)?;
    let _ = writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    match observer {
        Observer::Transcript if !report.within_sigmas(3.0) => {
            Err(CliError::Verification(format!("accuracy {:.4} is {:.2} sigma from chance", report.accuracy, report.z)))
        }
        Observer::FullKnowledge if report.correct != report.trials => {
            Err(CliError::Verification(format!("full-knowledge accuracy {:.4} below 1", report.accuracy)))
        }
        _ => Ok(()),
    }
}

const LATENCY_NS: [u32; 11] = [1, 2, 5, 10, 20, 50, 100, 200, 300, 500, 1000];
const LOSS_PS: [f64; 6] = [0.001, 0.005, 0.01, 0.02, 0.05, 0.1];
const LOSS_NS: [usize; 3] = [10, 50, 100];
const BANDWIDTH_NS: [usize; 7] = [2, 5, 10, 20, 50, 100, 200];

fn cmd_perf(cli: &Cli, sweep: Sweep, rounds: u64, latency: perf::LatencyModel, rate: f64, bytes: u32) -> Result<()> {
    if !(latency.s > 0.0 && latency.unit_ms > 0.0 && rate > 0.0) || rounds == 0 {
        return Err(CliError::Config("need s > 0, unit_ms > 0, rate > 0 and rounds > 0".into()));
    }
    let seed = cli.seed.unwrap_or(1);
    let dir = &cli.out;
    if matches!(sweep, Sweep::Latency | Sweep::All) {
        let path = dir.join("latency.csv");
        let mut w = create(dir, "latency.csv")?;
        let base = latency.expected_max_ms(1);
        let mut body = String::from("n,expected_max_ms,increase_ms\n");
        for n in LATENCY_NS {
            let m = latency.expected_max_ms(n);
            body.push_str(&format!("{n},{m:.6},{:.6}\n", m - base));
        }
        w.write_all(body.as_bytes()).and_then(|()| w.flush()).map_err(io_err(&path))?;
    }
    if matches!(sweep, Sweep::Loss | Sweep::All) {
        let path = dir.join("loss.csv");
        let mut w = create(dir, "loss.csv")?;
        let mut body = String::from("p,n,rounds,model_lossfree,measured_lossfree,abs_delta\n");
        for n in LOSS_NS {
            for p in LOSS_PS {
                let cfg = SimConfig {
                    name: format!("loss-{p}-{n}"),
                    n,
                    rounds,
                    rate,
                    level: ProtocolLevel::ZeroSum,
                    group: GroupChoice::Default,
                    latency: LatencyModel::Fixed { ms: 10.0 },
                    loss: LossModel::Bernoulli { p },
                    broadcast_loss: false,
                    rng_seed: seed,
                    ..SimConfig::default()
                };
                let out = run_simulation(&cfg, &cfg.bundle()?)?;
                let report = RunReport::from_traces(&cfg, &out.rounds);
                let l = &report.lossfree;
                body.push_str(&format!("{p},{n},{rounds},{:.6},{:.6},{:.6}\n", l.model, l.measured, (l.measured - l.model).abs()));
            }
        }
        w.write_all(body.as_bytes()).and_then(|()| w.flush()).map_err(io_err(&path))?;
    }
    if matches!(sweep, Sweep::Bandwidth | Sweep::All) {
        let path = dir.join("bandwidth.csv");
        let mut w = create(dir, "bandwidth.csv")?;
        let mut body = String::from(
            "n,f,packet_bytes,literal_total,literal_per_player,model_player_pps,model_player_bps,\
measured_player_bps_in,measured_player_bps_out,model_aggregator_pps,model_aggregator_bps,measured_aggregator_bps_in\n",
        );
        let seconds = rounds as f64 / rate;
        for n in BANDWIDTH_NS {
            let model = bandwidth_per_player(n as u32, rate, bytes).map_err(|e| CliError::Config(e.to_string()))?;
            let traffic = |rotation| {
                simulate_traffic(&TrafficConfig {
                    n,
                    rounds,
                    rate,
                    rotation,
                    packet_bytes: bytes,
                    loss: LossModel::Bernoulli { p: 0.0 },
                    broadcast_loss: false,
                    rng_seed: seed,
                })
            };
            let rot = traffic(Rotation::RoundRobin);
            let fixed = traffic(Rotation::Fixed);
            let players = &rot[1..];
            let mean_in = players.iter().map(|t| t.bps_in(seconds)).sum::<f64>() / n as f64;
            let mean_out = players.iter().map(|t| t.bps_out(seconds)).sum::<f64>() / n as f64;
            body.push_str(&format!(
                "{n},{rate},{bytes},{:.6},{:.6},{:.3},{:.3},{mean_in:.3},{mean_out:.3},{:.3},{:.3},{:.3}\n",
                model.literal_total,
                model.literal_per_player,
                model.rate_per_player_pps,
                model.rate_per_player_bps,
                model.aggregator_pps,
                model.aggregator_bps,
                fixed[0].bps_in(seconds),
            ));
        }
        w.write_all(body.as_bytes()).and_then(|()| w.flush()).map_err(io_err(&path))?;
    }
    eprintln!("wrote sweeps to {}", dir.display());
    Ok(())
}
