use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ldcc::allocation::{allocate, AllocationProblem};
use ldcc::beamforming::{solve_wmm_sca, BeamProblem, Method};
use ldcc::config::{ScenarioConfig, TradeoffChoice};
use ldcc::delivery::TransmissionPlan;
use ldcc::experiments::{
    channels_for, load_rate_map, run_cdf_experiment, run_sweep, write_aggregate_csv, write_cdf_csv, write_drops_csv,
    PreparedScheme, RunOptions, Scenario, SchemeName, SchemeSpec,
};
use ldcc::golden::reproduce_examples;
use ldcc::metrics::total_time;
use ldcc::{Error, Result};

const EXIT_INPUT: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "ldcc", version, about = "Location-dependent multi-antenna coded caching simulator")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Master seed; overrides `experiment.seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for experiments.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Scenario TOML file; the desk-scale preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Tradeoff {
    MulticastAware,
    LocalFirst,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate (or load) the per-state expected rate map.
    RateMap {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the memory allocation and print `state_index,m,t` rows.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// Trade-off preset; defaults to `caching.tradeoff`.
        #[arg(long, value_enum)]
        tradeoff: Option<Tradeoff>,
    },
    /// Build the delivery plan of one scheme for given user states.
    Plan {
        #[command(flatten)]
        common: Common,
        /// One-based state of every user, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        states: Vec<usize>,
        #[arg(long, default_value = "proposed_multicast_aware")]
        scheme: String,
    },
    /// Design beamformers for a plan file and report the delivery time.
    SolveBeams {
        #[command(flatten)]
        common: Common,
        /// Plan file written by `plan`.
        #[arg(long)]
        plan: PathBuf,
    },
    /// Run the configured Monte Carlo experiment or sweep.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Overrides `experiment.drops`.
        #[arg(long)]
        drops: Option<usize>,
    },
    /// Replay the worked examples and print one PASS/FAIL line each.
    ReproduceExamples,
}

/// File written by `plan` and read by `solve-beams`.
#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    provenance: String,
    scheme: SchemeName,
    /// Zero-based user states.
    user_states: Vec<usize>,
    plan_hash: String,
    plan: TransmissionPlan,
}

#[derive(Debug, Serialize)]
struct BeamSummary {
    users: Vec<usize>,
    method: Method,
    objective: f64,
    rates: Vec<f64>,
    total_power: f64,
    iterations: usize,
    rejected_steps: usize,
    stalled: bool,
}

#[derive(Debug, Serialize)]
struct BeamsFile {
    provenance: String,
    plan_hash: String,
    channel_seed: u64,
    total_time: f64,
    censored: bool,
    transmissions: Vec<BeamSummary>,
}

struct Context {
    seed: Option<u64>,
    threads: Option<usize>,
    verbose: bool,
}

impl Context {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn load_config(common: &Common, ctx: &Context) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = ctx.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<Option<&Path>> {
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
    }
    Ok(common.out.as_deref())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn rate_map(common: &Common, ctx: &Context) -> Result<()> {
    let cfg = load_config(common, ctx)?;
    let map = load_rate_map(&cfg)?;
    ctx.log(format!("rate map over {} states", map.len()));
    match out_dir(common)? {
        Some(dir) => map.write_csv(&cfg.provenance(), create(dir, "rate_map.csv")?),
        None => map.write_csv(&cfg.provenance(), io::stdout().lock()),
    }
}

fn run_allocate(common: &Common, tradeoff: Option<Tradeoff>, ctx: &Context) -> Result<()> {
    let cfg = load_config(common, ctx)?;
    let map = load_rate_map(&cfg)?;
    let choice = match tradeoff {
        Some(Tradeoff::MulticastAware) => TradeoffChoice::MulticastAware,
        Some(Tradeoff::LocalFirst) => TradeoffChoice::LocalFirst,
        None => cfg.caching.tradeoff,
    };
    let k = cfg.caching.user_count;
    let phi = cfg.caching.tradeoff_mode(choice).value(cfg.alpha(), k);
    let alloc = allocate(&AllocationProblem {
        rates: map.rates.clone(),
        total_memory: cfg.caching.total_memory(map.len()),
        user_count: k,
        tradeoff: phi,
    })?;
    ctx.log(format!("phi = {phi}, objective = {:e}", alloc.objective));
    alloc.write_csv(&cfg.provenance(), io::stdout().lock())?;
    if let Some(dir) = out_dir(common)? {
        alloc.write_csv(&cfg.provenance(), create(dir, "allocation.csv")?)?;
    }
    Ok(())
}

fn run_plan(common: &Common, states: &[usize], scheme: &str, ctx: &Context) -> Result<()> {
    let cfg = load_config(common, ctx)?;
    let scheme: SchemeName = scheme.parse()?;
    let scenario = Scenario::prepare(&cfg)?;
    if states.len() != scenario.user_count() {
        return Err(Error::Config(format!(
            "{} user states given for {} users",
            states.len(),
            scenario.user_count()
        )));
    }
    let user_states = states
        .iter()
        .map(|&s| {
            s.checked_sub(1)
                .filter(|&z| z < scenario.state_count())
                .ok_or_else(|| Error::Domain(format!("state {s} is outside 1..={}", scenario.state_count())))
        })
        .collect::<Result<Vec<usize>>>()?;
    let prepared = PreparedScheme::new(&scenario, SchemeSpec::new(scheme, cfg.caching.local_first_factor))?;
    let plan = prepared.plan(&user_states, scenario.alpha(), scenario.t_target())?;
    let file = PlanFile {
        provenance: cfg.provenance(),
        scheme,
        user_states,
        plan_hash: plan.content_hash()?,
        plan,
    };
    print!("{}", file.plan.describe());
    println!("plan_hash {}", file.plan_hash);
    if let Some(dir) = out_dir(common)? {
        let mut w = create(dir, "plan.json")?;
        serde_json::to_writer_pretty(&mut w, &file)?;
        w.flush()?;
    }
    Ok(())
}

fn solve_beams(common: &Common, plan_path: &Path, ctx: &Context) -> Result<()> {
    let cfg = load_config(common, ctx)?;
    let text = fs::read_to_string(plan_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", plan_path.display())))?;
    let file: PlanFile = serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad plan file: {e}")))?;
    let hash = file.plan.content_hash()?;
    if hash != file.plan_hash {
        return Err(Error::Config(format!("plan hash {hash} does not match the stored {}", file.plan_hash)));
    }
    let scenario = Scenario::prepare(&cfg)?;
    let seed = cfg.experiment.seed;
    let channels = channels_for(&scenario, &file.user_states, seed)?;
    let noise = cfg.environment.noise_power;
    let mut solutions = Vec::new();
    for (i, tx) in file.plan.transmissions.iter().enumerate() {
        let problem = BeamProblem::from_transmission(tx, &channels, scenario.transmit_power, noise)?;
        let sol = solve_wmm_sca(&problem, &cfg.beamforming)?;
        ctx.log(format!("transmission {}: objective {:e}", i + 1, sol.objective));
        solutions.push(sol);
    }
    let report = total_time(&file.plan, &solutions, file.scheme.as_str(), seed)?;
    let beams = BeamsFile {
        provenance: cfg.provenance(),
        plan_hash: hash.clone(),
        channel_seed: seed,
        total_time: report.total_time,
        censored: report.censored,
        transmissions: solutions
            .iter()
            .map(|s| BeamSummary {
                users: s.users.clone(),
                method: s.method,
                objective: s.objective,
                rates: s.rates.clone(),
                total_power: s.total_power(),
                iterations: s.trace.len().saturating_sub(1),
                rejected_steps: s.rejected_steps,
                stalled: s.stalled,
            })
            .collect(),
    };
    println!("plan_hash {hash}");
    println!("total_time {}", report.total_time);
    if let Some(dir) = out_dir(common)? {
        let mut w = create(dir, "beams.json")?;
        serde_json::to_writer_pretty(&mut w, &beams)?;
        w.flush()?;
    }
    Ok(())
}

fn experiment(common: &Common, drops: Option<usize>, ctx: &Context) -> Result<()> {
    let mut cfg = load_config(common, ctx)?;
    if let Some(d) = drops {
        cfg.experiment.drops = d;
        if let Some(sweep) = cfg.experiment.sweep.as_mut() {
            sweep.drops = Some(d);
        }
    }
    cfg.validate()?;
    let options = RunOptions { threads: ctx.threads };
    let schemes = cfg.experiment.schemes.clone();
    let results = match &cfg.experiment.sweep {
        Some(sweep) => {
            ctx.log(format!("sweeping {} over {} values", sweep.parameter.as_str(), sweep.values.len()));
            run_sweep(&cfg, sweep, &schemes, cfg.experiment.seed, options)?
        }
        None => {
            let scenario = Scenario::prepare(&cfg)?;
            ctx.log(format!("{} drops over {} states", cfg.experiment.drops, scenario.state_count()));
            vec![run_cdf_experiment(&scenario, &schemes, cfg.experiment.drops, cfg.experiment.seed, options)?]
        }
    };
    let header = cfg.provenance();
    write_aggregate_csv(&results, &header, io::stdout().lock())?;
    if let Some(dir) = out_dir(common)? {
        write_drops_csv(&results, &header, create(dir, "drops.csv")?)?;
        write_aggregate_csv(&results, &header, create(dir, "aggregate.csv")?)?;
        write_cdf_csv(&results, &header, create(dir, "cdf.csv")?)?;
    }
    Ok(())
}

fn examples() -> Result<()> {
    let checks = reproduce_examples();
    let passed = checks.iter().filter(|c| c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} {passed}/{} examples", if passed == checks.len() { "PASS" } else { "FAIL" }, checks.len());
    if passed == checks.len() {
        Ok(())
    } else {
        Err(Error::PlanInvariant(format!("{} of {} golden checks failed", checks.len() - passed, checks.len())))
    }
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Context { seed: cli.seed, threads: cli.threads, verbose: cli.verbose };
    match cli.command {
        Command::RateMap { common } => rate_map(&common, &ctx),
        Command::Allocate { common, tradeoff } => run_allocate(&common, tradeoff, &ctx),
        Command::Plan { common, states, scheme } => run_plan(&common, &states, &scheme, &ctx),
        Command::SolveBeams { common, plan } => solve_beams(&common, &plan, &ctx),
        Command::Experiment { common, drops } => experiment(&common, drops, &ctx),
        Command::ReproduceExamples => examples(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_RUNTIME })
        }
    }
}
