use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use gossip_lab::experiments::{
    hybrid_scan, infection_growth_experiment, majority_pair_experiment, mean, run_sweep_with, write_csv,
    ExperimentSpec, InitialCondition, ProtocolKind, SweepOptions,
};
use gossip_lab::oracle::{
    central_binomial_check, drift_check, identity_grid, kl_bernoulli, twentieths_grid, two_party_min_rounds,
};
use gossip_lab::protocols::{MajorityParams, DEFAULT_ALPHA, DEFAULT_C3, DEFAULT_C_B};
use gossip_lab::schedulers::{ModelKind, PullDiscipline, Sampling};
use gossip_lab::{NoiseChannel, Opinion};

const MODELS: [&str; 6] = [
    "uniform-pull",
    "uniform-push",
    "uniform-gossip",
    "general-pull",
    "general-push",
    "population-uniform",
];

#[derive(Parser)]
#[command(
    name = "gossip-lab",
    version,
    about = "Simulate gossip consensus and broadcast protocols and check their exact bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicas of one protocol at a single (n, eps) cell; CSV records
    Simulate(RunArgs),
    /// Run replicas over every combination of n and eps values; CSV records
    Sweep(RunArgs),
    /// Content-free infection growth under a uniform model
    Infect(InfectArgs),
    /// Hybrid scan over canonical inputs for the largest decision gap
    Hybrid(HybridArgs),
    /// Run the Majority Protocol on both inputs of a majority pair
    MajorityPair(PairArgs),
    /// Exact checks and calculators
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Args)]
struct MajorityArgs {
    /// Phase-1 sample constant; k1 is the next odd integer >= c/eps^2
    #[arg(long, default_value_t = MajorityParams::default().c)]
    c: f64,
    /// Phase-1 length is ceil(alpha * log2 n) steps
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Target bias fraction at the end of phase 1
    #[arg(long, default_value_t = DEFAULT_C3)]
    c3: f64,
    /// Phase-2 sample constant; k2 = ceil(c4 * ln n / eps^2)
    #[arg(long, default_value_t = 5.0 / (DEFAULT_C3 * DEFAULT_C3))]
    c4: f64,
    /// Fixed phase-1 sample size [default: computed from --c]
    #[arg(long)]
    k1: Option<u64>,
    /// Allow even sample sizes, breaking ties with a fair coin [default: off]
    #[arg(long)]
    tie_break: bool,
    /// How pulled samples are drawn
    #[arg(long, default_value = "aggregate", value_parser = ["aggregate", "explicit"])]
    sampling: String,
    /// One k-PULL round per batch, or k sequential 1-PULL rounds
    #[arg(long, default_value = "parallel", value_parser = ["parallel", "sequential"])]
    discipline: String,
    /// Soak length in rounds [default: 10 * phase-1 length]
    #[arg(long)]
    soak_rounds: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Read an experiment spec from a JSON file; flags given explicitly override it [default: none]
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    /// Protocol to run
    #[arg(long, default_value = "majority", value_parser = ["majority", "broadcast", "copy-node-one"])]
    protocol: String,
    /// Communication model
    #[arg(long, default_value = "uniform-pull", value_parser = MODELS)]
    model: String,
    /// Number of nodes (comma-separated list for sweep)
    #[arg(long, default_value = "1024", value_delimiter = ',')]
    n: Vec<usize>,
    /// Channel quality; flip probability is 1/2 - eps (comma-separated list for sweep)
    #[arg(long, default_value = "0.25", value_delimiter = ',')]
    eps: Vec<f64>,
    /// Runs per (n, eps) cell
    #[arg(long, default_value_t = 10)]
    replicas: u64,
    /// Master seed
    #[arg(long, env = "GOSSIP_LAB_SEED", default_value_t = 0)]
    seed: u64,
    /// unanimous-0, unanimous-1, canonical:K, bias:B or random
    #[arg(long, default_value = "random")]
    initial: String,
    /// NoisyBroadcast source bit
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    source_bit: u8,
    /// NoisyBroadcast phase-1 constant; phase 1 lasts ceil(cb * n ln n / eps^2) pulls
    #[arg(long, default_value_t = DEFAULT_C_B)]
    cb: f64,
    /// Track infection from this node [default: none]
    #[arg(long)]
    infection_source: Option<usize>,
    /// Check that unanimity persists under continued phase-2 sampling [default: off]
    #[arg(long)]
    soak: bool,
    #[command(flatten)]
    majority: MajorityArgs,
    /// Write CSV records here [default: stdout]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Write the JSON summary here [default: not written]
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
    /// Report wall_time_ms as 0 so repeated runs are byte-identical [default: off]
    #[arg(long)]
    omit_wall_time: bool,
}

#[derive(Args)]
struct InfectArgs {
    /// Communication model
    #[arg(long, default_value = "uniform-gossip", value_parser = ["uniform-pull", "uniform-push", "uniform-gossip", "population-uniform"])]
    model: String,
    /// Number of nodes
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Nodes 0..initial-infected start infected
    #[arg(long, default_value_t = 1)]
    initial_infected: usize,
    /// Rounds per replica; a population round is n steps
    #[arg(long, default_value_t = 30)]
    rounds: u64,
    /// Independent replicas
    #[arg(long, default_value_t = 100)]
    replicas: u64,
    /// Master seed
    #[arg(long, env = "GOSSIP_LAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Write replica,round,infected CSV here [default: stdout]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Write the JSON summary here [default: not written]
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct HybridArgs {
    /// Consensus protocol to scan
    #[arg(long, default_value = "majority", value_parser = ["majority", "copy-node-one"])]
    protocol: String,
    /// Communication model [default: the protocol's own model]
    #[arg(long, value_parser = MODELS)]
    model: Option<String>,
    /// Number of nodes, at most 64
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Channel quality; flip probability is 1/2 - eps
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Runs per canonical input
    #[arg(long, default_value_t = 2000)]
    replicas: u64,
    /// Infection target is (1 - 2 delta) n nodes
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Master seed
    #[arg(long, env = "GOSSIP_LAB_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    majority: MajorityArgs,
    /// Write the JSON report here [default: stdout]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PairArgs {
    /// Number of nodes
    #[arg(long, default_value_t = 1024)]
    n: usize,
    /// Nodes on which the two inputs differ; n - b must be even
    #[arg(long, default_value_t = 2)]
    b: usize,
    /// Channel quality; flip probability is 1/2 - eps
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    /// Replicas per input
    #[arg(long, default_value_t = 100)]
    replicas: u64,
    /// Master seed
    #[arg(long, env = "GOSSIP_LAB_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    majority: MajorityArgs,
    /// Write the JSON report here [default: stdout]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Binomial tail vs incomplete beta integral over a grid
    Identity {
        /// Largest number of trials
        #[arg(long, default_value_t = 30)]
        lmax: u64,
        /// Success probabilities [default: 0.05, 0.10, ..., 0.95]
        #[arg(long, value_delimiter = ',')]
        probs: Option<Vec<f64>>,
        /// Write JSON here [default: stdout]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Exact phase-1 drift check of k1-Majority
    Drift {
        /// Slack in c = (e pi / 8)(1 + delta)^2
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Channel quality
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        /// Number of nodes
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        /// Write JSON here [default: stdout]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Central binomial coefficient C(2r, r) against its bracket
    Stirling {
        /// Half the row index
        #[arg(long, default_value_t = 1)]
        r: u64,
        /// Write JSON here [default: stdout]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Bernoulli KL divergence D(p || q) in nats
    Kl {
        /// First Bernoulli parameter
        #[arg(long, default_value_t = 0.6)]
        p: f64,
        /// Second Bernoulli parameter
        #[arg(long, default_value_t = 0.4)]
        q: f64,
        /// Write JSON here [default: stdout]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Minimum rounds for the two-party bit transfer
    TwoParty {
        /// Error budget, in (0, 1/21)
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Channel quality, in (0, 1/2)
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Write JSON here [default: stdout]
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Core(gossip_lab::Error),
    Io(io::Error),
}

impl From<gossip_lab::Error> for Failure {
    fn from(e: gossip_lab::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let sub = matches.subcommand().map(|(_, m)| m).expect("subcommand required");
    match dispatch(cli.command, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command, m: &ArgMatches) -> CliResult {
    match command {
        Command::Simulate(args) => run(args, m, true),
        Command::Sweep(args) => run(args, m, false),
        Command::Infect(args) => infect(args),
        Command::Hybrid(args) => hybrid(args),
        Command::MajorityPair(args) => pair(args),
        Command::Oracle(cmd) => oracle(cmd),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult {
    match out {
        Some(path) => fs::write(path, bytes)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).map_err(gossip_lab::Error::from)?;
    text.push('\n');
    emit(out, text.as_bytes())
}

/// Given on the command line or through the environment, as opposed to a
/// built-in default.
fn explicit(m: &ArgMatches, id: &str) -> bool {
    matches!(
        m.value_source(id),
        Some(ValueSource::CommandLine | ValueSource::EnvVariable)
    )
}

fn parse<T: std::str::FromStr<Err = gossip_lab::Error>>(s: &str) -> CliResult<T> {
    s.parse().map_err(Failure::Core)
}

fn apply_majority(params: &mut MajorityParams, args: &MajorityArgs, take: impl Fn(&str) -> bool) {
    if take("c") {
        params.c = args.c;
    }
    if take("alpha") {
        params.alpha = args.alpha;
    }
    if take("c3") {
        params.c3 = args.c3;
    }
    if take("c4") {
        params.c4 = args.c4;
    }
    if take("k1") {
        params.k1 = args.k1;
    }
    if take("tie_break") {
        params.tie_break = args.tie_break;
    }
    if take("sampling") {
        params.sampling = match args.sampling.as_str() {
            "explicit" => Sampling::Explicit,
            _ => Sampling::Aggregate,
        };
    }
    if take("discipline") {
        params.discipline = match args.discipline.as_str() {
            "sequential" => PullDiscipline::Sequential,
            _ => PullDiscipline::Parallel,
        };
    }
    if take("soak_rounds") {
        params.soak_rounds = args.soak_rounds;
    }
}

fn majority_params(args: &MajorityArgs) -> MajorityParams {
    let mut params = MajorityParams::default();
    apply_majority(&mut params, args, |_| true);
    params
}

fn build_spec(args: &RunArgs, m: &ArgMatches) -> CliResult<ExperimentSpec> {
    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::from_json(&fs::read_to_string(path)?)?,
        None => ExperimentSpec::default(),
    };
    let from_file = args.spec.is_some();
    let take = |id: &str| !from_file || explicit(m, id);
    if take("protocol") {
        spec.protocol = parse(&args.protocol)?;
    }
    if take("model") {
        spec.model = parse(&args.model)?;
    }
    if take("n") {
        spec.n_values = args.n.clone();
    }
    if take("eps") {
        spec.epsilon_values = args.eps.clone();
    }
    if take("replicas") {
        spec.replicas = args.replicas;
    }
    if take("seed") {
        spec.master_seed = args.seed;
    }
    if take("initial") {
        spec.initial_condition = parse::<InitialCondition>(&args.initial)?;
    }
    if take("source_bit") {
        spec.source_bit = if args.source_bit == 0 { Opinion::Zero } else { Opinion::One };
    }
    if take("cb") {
        spec.c_b = args.cb;
    }
    if take("infection_source") {
        spec.infection_source = args.infection_source;
    }
    if take("soak") {
        spec.soak = args.soak;
    }
    apply_majority(&mut spec.params, &args.majority, take);
    Ok(spec)
}

fn run(args: RunArgs, m: &ArgMatches, single_cell: bool) -> CliResult {
    let spec = build_spec(&args, m)?;
    if single_cell && (spec.n_values.len() != 1 || spec.epsilon_values.len() != 1) {
        return Err(Failure::Usage(
            "simulate takes a single --n and --eps; use sweep for grids".into(),
        ));
    }
    let result = run_sweep_with(
        &spec,
        SweepOptions {
            omit_wall_time: args.omit_wall_time,
        },
    )?;
    let mut csv = Vec::new();
    write_csv(&result.records, &mut csv)?;
    emit(args.out.as_deref(), &csv)?;
    if let Some(path) = &args.summary {
        emit_json(Some(path), &result.summary)?;
    }
    Ok(())
}

fn infect(args: InfectArgs) -> CliResult {
    let model: ModelKind = parse(&args.model)?;
    let report = infection_growth_experiment(model, args.n, args.initial_infected, args.rounds, args.replicas, args.seed)?;
    let mut csv = String::from("replica,round,infected\n");
    for (r, traj) in report.trajectories.iter().enumerate() {
        for (t, count) in traj.iter().enumerate() {
            csv.push_str(&format!("{r},{t},{count}\n"));
        }
    }
    emit(args.out.as_deref(), csv.as_bytes())?;
    if let Some(path) = &args.summary {
        let reach: Vec<_> = report
            .reach
            .iter()
            .map(|g| {
                let rounds: Vec<f64> = g.first_round.iter().flatten().map(|&r| r as f64).collect();
                json!({
                    "gamma": g.gamma,
                    "reached_fraction": g.reached_fraction(),
                    "mean_first_round": mean(&rounds),
                    "min_first_round": g.first_round.iter().flatten().min(),
                    "max_first_round": g.first_round.iter().flatten().max(),
                })
            })
            .collect();
        let summary = json!({
            "model": report.model,
            "n": report.n,
            "initial_infected": report.initial_infected,
            "rounds": report.rounds,
            "replicas": args.replicas,
            "max_infected": report.max_infected.iter().max(),
            "reach": reach,
        });
        emit_json(Some(path), &summary)?;
    }
    Ok(())
}

fn hybrid(args: HybridArgs) -> CliResult {
    let protocol: ProtocolKind = parse(&args.protocol)?;
    let model = match &args.model {
        Some(m) => parse(m)?,
        None => protocol.model(),
    };
    let channel = NoiseChannel::new(args.eps)?;
    let report = hybrid_scan(
        protocol,
        model,
        &channel,
        &majority_params(&args.majority),
        args.n,
        args.replicas,
        args.delta,
        args.seed,
    )?;
    emit_json(args.out.as_deref(), &report)
}

fn pair(args: PairArgs) -> CliResult {
    let channel = NoiseChannel::new(args.eps)?;
    let report = majority_pair_experiment(
        args.n,
        args.b,
        ProtocolKind::Majority,
        &channel,
        &majority_params(&args.majority),
        args.replicas,
        args.seed,
    )?;
    emit_json(args.out.as_deref(), &report)
}

fn oracle(cmd: OracleCommand) -> CliResult {
    match cmd {
        OracleCommand::Identity { lmax, probs, out } => {
            let probs = probs.unwrap_or_else(twentieths_grid);
            emit_json(out.as_deref(), &identity_grid(lmax, &probs)?)
        }
        OracleCommand::Drift { delta, eps, n, out } => emit_json(out.as_deref(), &drift_check(delta, eps, n)?),
        OracleCommand::Stirling { r, out } => {
            let check = central_binomial_check(r)?;
            let doc = json!({ "check": check, "holds": check.holds() });
            emit_json(out.as_deref(), &doc)
        }
        OracleCommand::Kl { p, q, out } => {
            let doc = json!({ "p": p, "q": q, "divergence": kl_bernoulli(p, q)? });
            emit_json(out.as_deref(), &doc)
        }
        OracleCommand::TwoParty { delta, eps, out } => emit_json(out.as_deref(), &two_party_min_rounds(delta, eps)?),
    }
}
