//! Command-line front end. [`run`] takes the argument vector and output
//! sinks so it can be driven from tests as well as from `main`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::analysis::{
    analytic_bandwidth, format_float, monte_carlo, trial_rng, DestinationModel, Mode, ModeResult,
    SimConfig, TrafficModel,
};
use crate::conflict::build_conflict_graph;
use crate::error::Error;
use crate::routing::{parse_permutation, trace_path, PermutationMap};
use crate::scheduler::{
    schedule, validate_schedule, Algorithm, Budget, OrderPolicy, ScheduleConfig, ScheduleDocument,
};
use crate::topology::{build_network, NetworkSpec, Topology};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

pub const BANDWIDTH_CSV_HEADER: &str = "size,mode,bw,stderr";

/// Uniform random full permutation of `size` lines, driven only by `rng`.
pub fn generate_random_permutation<R: Rng + ?Sized>(size: usize, rng: &mut R) -> crate::Result<PermutationMap> {
    if size < 4 || !size.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(size));
    }
    let mut destinations: Vec<usize> = (0..size).collect();
    destinations.shuffle(rng);
    PermutationMap::from_destinations(&destinations)
}

#[derive(Debug, Parser)]
#[command(name = "omin", version, about = "Optical MIN routing, crosstalk scheduling and bandwidth experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-message hop table.
    Route(RouteArgs),
    /// Conflict graph as a CSV edge list.
    Conflicts(RouteArgs),
    /// Partition messages into passes under a crosstalk budget.
    Schedule(ScheduleArgs),
    /// Bandwidth versus network size, analytic or simulated.
    Bandwidth(BandwidthArgs),
    /// Single-pass maturation and pass counts over random permutations.
    Simulate(SimulateArgs),
    /// Write a random permutation in the permutation file format.
    Permute(PermuteArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Output {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "traffic", required = true, multiple = false)]
struct Traffic {
    /// Permutation file (`SOURCE DESTINATION` per line).
    #[arg(long, group = "traffic")]
    perm: Option<PathBuf>,
    /// Use a random full permutation drawn from this seed instead.
    #[arg(long, group = "traffic")]
    random_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct NetArgs {
    #[arg(long)]
    size: usize,
    #[arg(long, default_value = "omega")]
    topology: String,
}

impl NetArgs {
    fn network(&self) -> crate::Result<NetworkSpec> {
        build_network(self.size, self.topology.parse()?)
    }
}

#[derive(Debug, Args)]
struct RouteArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    traffic: Traffic,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Order {
    Source,
    Degree,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    traffic: Traffic,
    /// Shared-stage budget per message, or `unlimited`.
    #[arg(long, default_value = "0")]
    budget: String,
    #[arg(long, default_value = "greedy")]
    algorithm: String,
    /// Message order for the plain greedy algorithm.
    #[arg(long, value_enum, default_value = "source")]
    order: Order,
    /// Largest message count accepted by the exact solver.
    #[arg(long, default_value_t = crate::scheduler::DEFAULT_EXACT_CAP)]
    exact_cap: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BandwidthMode {
    Analytic,
    Simulate,
}

#[derive(Debug, Args)]
struct BandwidthArgs {
    /// Comma-separated network sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, value_enum, default_value = "analytic")]
    mode: BandwidthMode,
    /// Comma-separated crosstalk modes: allow, free, budget=K.
    #[arg(long, value_delimiter = ',', default_value = "allow,free")]
    crosstalk: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    load: f64,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "omega")]
    topology: String,
    /// Run trials on one thread (output is identical either way).
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    net: NetArgs,
    /// Number of random permutations (trials).
    #[arg(long)]
    random_perms: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "0")]
    budget: String,
    #[arg(long, default_value = "greedy")]
    algorithm: String,
    #[arg(long, default_value_t = 1.0)]
    load: f64,
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Debug, Args)]
struct PermuteArgs {
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_traffic(traffic: &Traffic, net: &NetworkSpec) -> Outcome<PermutationMap> {
    match (&traffic.perm, traffic.random_seed) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("--perm {}: {e}", path.display())))?;
            parse_permutation(&text, net)
                .map_err(|e| Failure::Input(format!("--perm {}: {e}", path.display())))
        }
        (None, Some(seed)) => Ok(generate_random_permutation(net.size(), &mut trial_rng(seed, 0))?),
        (None, None) => Err(Failure::Input("one of --perm or --random-seed is required".into())),
    }
}

fn emit(report: &str, path: &Option<PathBuf>, stdout: &mut dyn Write) -> Outcome<()> {
    match path {
        Some(p) => fs::write(p, report).map_err(|e| Failure::Input(format!("--output {}: {e}", p.display()))),
        None => stdout
            .write_all(report.as_bytes())
            .map_err(|e| Failure::Internal(format!("writing standard output: {e}"))),
    }
}

fn to_json<T: Serialize>(value: &T) -> Outcome<String> {
    serde_json::to_string(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Internal(e.to_string()))
}

#[derive(Serialize)]
struct HopRow {
    stage: u32,
    switch: usize,
    in_port: u8,
    out_port: u8,
}

#[derive(Serialize)]
struct RouteRow {
    index: usize,
    source: usize,
    destination: usize,
    hops: Vec<HopRow>,
}

fn route(args: &RouteArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let net = args.net.network()?;
    let perm = load_traffic(&args.traffic, &net)?;
    let mut rows = Vec::with_capacity(perm.len());
    for (index, &msg) in perm.messages().iter().enumerate() {
        let path = trace_path(&net, msg)?;
        if path.delivered_to != msg.destination {
            return Err(Failure::Internal(format!(
                "message {index} delivered to {} instead of {}",
                path.delivered_to, msg.destination
            )));
        }
        rows.push(RouteRow {
            index,
            source: msg.source,
            destination: msg.destination,
            hops: path
                .hops
                .iter()
                .map(|h| HopRow {
                    stage: h.stage,
                    switch: h.switch,
                    in_port: h.in_port,
                    out_port: h.out_port,
                })
                .collect(),
        });
    }
    let report = match args.out.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("index,source,destination,stage,switch,in_port,out_port\n");
            for r in &rows {
                for h in &r.hops {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{}",
                        r.index, r.source, r.destination, h.stage, h.switch, h.in_port, h.out_port
                    );
                }
            }
            s
        }
    };
    emit(&report, &args.out.output, stdout)
}

#[derive(Serialize)]
struct EdgeRow {
    a: usize,
    b: usize,
    stages: Vec<u32>,
    kinds: Vec<&'static str>,
}

fn conflicts(args: &RouteArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let net = args.net.network()?;
    let perm = load_traffic(&args.traffic, &net)?;
    let graph = build_conflict_graph(&net, &perm)?;
    let report = match args.out.format.unwrap_or(Format::Csv) {
        Format::Csv => graph.to_csv(),
        Format::Json => to_json(
            &graph
                .edges()
                .iter()
                .map(|e| EdgeRow {
                    a: e.a,
                    b: e.b,
                    stages: e.shared.iter().map(|s| s.stage).collect(),
                    kinds: e.shared.iter().map(|s| s.kind.label()).collect(),
                })
                .collect::<Vec<_>>(),
        )?,
    };
    emit(&report, &args.out.output, stdout)
}

fn run_schedule(args: &ScheduleArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let net = args.net.network()?;
    let perm = load_traffic(&args.traffic, &net)?;
    let budget: Budget = args.budget.parse()?;
    let algorithm: Algorithm = args.algorithm.parse()?;
    let config = ScheduleConfig {
        budget,
        algorithm,
        order_policy: match args.order {
            Order::Source => OrderPolicy::SourceAscending,
            Order::Degree => OrderPolicy::DegreeDescending,
        },
        exact_cap: args.exact_cap,
    };
    let sched = schedule(&net, &perm, &config)?;
    let report = validate_schedule(&net, &perm, &sched.passes, budget)?;
    let doc = ScheduleDocument::new(&net, &perm, &sched, &report);
    emit(&to_json(&doc)?, &args.output, stdout)?;
    writeln!(stdout, "passes: {}", sched.pass_count())
        .map_err(|e| Failure::Internal(format!("writing standard output: {e}")))?;
    if !report.is_valid() {
        return Err(Failure::Internal(format!(
            "emitted schedule has {} violation(s)",
            report.violations.len()
        )));
    }
    Ok(())
}

fn bandwidth(args: &BandwidthArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let topology: Topology = args.topology.parse()?;
    let modes = args
        .crosstalk
        .iter()
        .map(|m| m.parse::<Mode>())
        .collect::<crate::Result<Vec<_>>>()?;
    let mut rows: Vec<ModeResult> = Vec::new();
    for &size in &args.sizes {
        let net = build_network(size, topology)?;
        match args.mode {
            BandwidthMode::Analytic => {
                let curve = analytic_bandwidth(net.stages(), args.load)?;
                let offered = args.load * size as f64;
                rows.push(ModeResult {
                    size,
                    topology,
                    load: args.load,
                    mode: "analytic".into(),
                    trials: 0,
                    seed: args.seed,
                    mean_bw: curve.bandwidth(),
                    stderr: 0.0,
                    passability: if offered > 0.0 { curve.bandwidth() / offered } else { 1.0 },
                });
            }
            BandwidthMode::Simulate => {
                let traffic = TrafficModel::new(args.load, DestinationModel::Uniform)?;
                let mut config = SimConfig::new(modes.clone(), args.trials, args.seed);
                config.parallel = !args.sequential;
                rows.extend(monte_carlo(&net, &traffic, &config)?.results);
            }
        }
    }
    let report = match args.out.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = format!("{BANDWIDTH_CSV_HEADER}\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    r.size,
                    r.mode,
                    format_float(r.mean_bw),
                    format_float(r.stderr)
                );
            }
            s
        }
    };
    emit(&report, &args.out.output, stdout)
}

fn simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let net = args.net.network()?;
    let budget: Budget = args.budget.parse()?;
    let algorithm: Algorithm = args.algorithm.parse()?;
    let mut modes = vec![Mode::Allow];
    if let Budget::Limited(k) = budget {
        if k > 0 {
            modes.push(Mode::Budget(k));
        }
    }
    modes.push(Mode::Free);
    let traffic = TrafficModel::new(args.load, DestinationModel::RandomPermutation)?;
    let mut config = SimConfig::new(modes, args.random_perms, args.seed);
    config.parallel = !args.sequential;
    config.schedule = Some(ScheduleConfig::new(budget, algorithm));
    let report = monte_carlo(&net, &traffic, &config)?;
    let text = match args.out.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report)?,
        Format::Csv => {
            let mut s = String::from("size,topology,load,mode,trials,seed,mean_bw,stderr,passability\n");
            for r in &report.results {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{}",
                    r.size,
                    r.topology,
                    format_float(r.load),
                    r.mode,
                    r.trials,
                    r.seed,
                    format_float(r.mean_bw),
                    format_float(r.stderr),
                    format_float(r.passability)
                );
            }
            s
        }
    };
    emit(&text, &args.out.output, stdout)
}

fn permute(args: &PermuteArgs, stdout: &mut dyn Write) -> Outcome<()> {
    let perm = generate_random_permutation(args.size, &mut trial_rng(args.seed, 0))?;
    emit(&perm.to_text(), &args.output, stdout)
}

/// Parses `argv` (program name first) and runs the subcommand, returning
/// the process exit status.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Route(a) => route(a, stdout),
        Command::Conflicts(a) => conflicts(a, stdout),
        Command::Schedule(a) => run_schedule(a, stdout),
        Command::Bandwidth(a) => bandwidth(a, stdout),
        Command::Simulate(a) => simulate(a, stdout),
        Command::Permute(a) => permute(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INPUT
        }
        Err(Failure::Internal(msg)) => {
            let _ = writeln!(stderr, "internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}
