//! Command-line front end: `run`, `compare` and `check`.
//!
//! Exit codes: 0 success, 1 failed property check, 2 configuration error,
//! 3 numeric failure during a run.

pub mod checks;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Error;
use crate::mixing::{
    metropolis_hastings, optimal_spectral_gap_weights, uniform_clique_averaging, MixingMatrix, SPECTRAL_GAP_ITERS,
    SPECTRAL_GAP_STEP0,
};
use crate::objectives::{make_random_quadratics, make_replicated, make_two_class_ring_arranged, Problem};
use crate::simulator::{
    run_decoupled, run_dsgd, run_hadsgd, run_hadsgd_momentum, Algorithm, MetricsLog, RunConfig, StepMetrics,
};
use crate::topology::{
    build_complete, build_path, build_random_connected, build_ring, build_torus, CliquePartition, Topology,
};

pub use checks::{CheckOutcome, Suite};
pub use config::{ConfigError, Experiment, ExperimentConfig, LearningRate, MixingChoice, ObjectiveSpec, TopologySpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Fraction of the run averaged by `compare`.
pub const TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numeric(String),
    CheckFailed(Vec<&'static str>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::CheckFailed(names) => write!(f, "failed checks: {}", names.join(", ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

fn setup_error(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

fn numeric_error(e: Error) -> CliError {
    match e {
        Error::Divergence { step } => CliError::Numeric(format!("iterates became non-finite or diverged at step {step}")),
        other => CliError::Numeric(other.to_string()),
    }
}

/// Independent seeds for one repetition, derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepSeeds {
    pub graph: u64,
    pub data: u64,
    pub arrangement: u64,
    pub noise: u64,
    pub sketch: u64,
}

impl RepSeeds {
    pub fn derive(seed: u64, rep: usize) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(rep as u64);
        RepSeeds {
            graph: r.next_u64(),
            data: r.next_u64(),
            arrangement: r.next_u64(),
            noise: r.next_u64(),
            sketch: r.next_u64(),
        }
    }
}

pub fn build_topology(spec: &TopologySpec, seed: u64) -> crate::Result<Topology> {
    match spec {
        TopologySpec::Ring { n } => build_ring(*n),
        TopologySpec::Path { n } => build_path(*n),
        TopologySpec::Torus { rows, cols } => build_torus(*rows, *cols),
        TopologySpec::Complete { n } => build_complete(*n),
        TopologySpec::Random { n, keep_fraction } => build_random_connected(*n, *keep_fraction, seed),
        TopologySpec::EdgeFile { path } => Topology::load_edge_list(path),
    }
}

pub fn build_problem(e: &Experiment, n: usize, seeds: &RepSeeds) -> crate::Result<Problem> {
    let p = match e.objective {
        ObjectiveSpec::Random { d, m } => make_random_quadratics(n, d, m, seeds.data)?,
        ObjectiveSpec::Replicated { d, m, period } => make_replicated(n, d, m, period, seeds.data)?,
        ObjectiveSpec::TwoClass { d, .. } => {
            let arrangement = e.arrangement(seeds.arrangement).expect("two-class objective");
            make_two_class_ring_arranged(d, seeds.data, &arrangement)?
        }
    };
    if p.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "objective has {} nodes, topology has {n}",
            p.n()
        )));
    }
    p.with_noise_std(e.noise_var.sqrt())
}

pub fn build_mixing(choice: MixingChoice, t: &Topology) -> crate::Result<MixingMatrix> {
    match choice {
        MixingChoice::MetropolisHastings => Ok(metropolis_hastings(t)),
        MixingChoice::SpectralGap => optimal_spectral_gap_weights(t, SPECTRAL_GAP_ITERS, SPECTRAL_GAP_STEP0),
        MixingChoice::Pairs => {
            if !t.n().is_multiple_of(2) {
                return Err(Error::InvalidParameter(format!("pairs mixing needs an even n, got {}", t.n())));
            }
            let pairs = CliquePartition::new((0..t.n() / 2).map(|k| vec![2 * k, 2 * k + 1]).collect())?;
            uniform_clique_averaging(&pairs, t)
        }
    }
}

/// Runs one repetition. Setup problems are configuration errors; anything failing
/// inside the simulation is a numeric failure.
pub fn run_repetition(e: &Experiment, rep: usize) -> Result<MetricsLog, CliError> {
    let seeds = RepSeeds::derive(e.seed, rep);
    let t = build_topology(&e.topology, seeds.graph).map_err(setup_error)?;
    let p = build_problem(e, t.n(), &seeds).map_err(setup_error)?;
    let lr = match e.lr {
        LearningRate::Absolute(v) => v,
        LearningRate::Relative(v) => v / p.smoothness(),
    };
    let mut cfg = RunConfig::new(e.algorithm, e.steps, lr);
    cfg.period = e.period;
    cfg.sketch_dim = e.sketch_dim;
    cfg.sketch_seed = seeds.sketch;
    cfg.data_seed = seeds.data;
    cfg.noise_seed = seeds.noise;
    cfg.alternate = e.alternate;
    cfg.momentum = e.momentum;
    cfg.window = e.window;
    cfg.gme_source = e.gme_source;
    cfg.validate().map_err(setup_error)?;

    let result = match e.algorithm {
        Algorithm::Dsgd => {
            let w = build_mixing(e.mixing, &t).map_err(setup_error)?;
            run_dsgd(&p, &t, &w, &cfg)
        }
        Algorithm::Decoupled => {
            let wp = build_mixing(e.mixing, &t).map_err(setup_error)?;
            let wg = build_mixing(e.grad_mixing.unwrap_or(e.mixing), &t).map_err(setup_error)?;
            run_decoupled(&p, &t, &wp, &wg, &cfg)
        }
        Algorithm::HaDsgd => run_hadsgd(&p, &t, &cfg),
        Algorithm::HaDsgdMomentum => run_hadsgd_momentum(&p, &t, &cfg),
    };
    result.map_err(numeric_error)
}

/// Runs all repetitions in parallel, in repetition order.
pub fn run_experiment(e: &Experiment) -> Result<Vec<MetricsLog>, CliError> {
    (0..e.reps).into_par_iter().map(|rep| run_repetition(e, rep)).collect()
}

pub fn csv_path(e: &Experiment, rep: usize) -> PathBuf {
    e.out.join(format!("{}_rep{rep}.csv", e.name))
}

pub fn load_experiment(path: &Path) -> Result<Experiment, CliError> {
    Ok(Experiment::from_config(&ExperimentConfig::load(path)?)?)
}

fn format_metrics(m: &StepMetrics) -> String {
    format!(
        "dist_to_opt={:.6e} consensus={:.6e} gme={:.6e} loss={:.6e}",
        m.dist_to_opt, m.consensus, m.gme, m.loss
    )
}

/// Runs the experiment, writes one CSV per repetition and returns the final
/// window-averaged metrics of each.
pub fn cmd_run(config: &Path) -> Result<Vec<StepMetrics>, CliError> {
    let e = load_experiment(config)?;
    std::fs::create_dir_all(&e.out)
        .map_err(|err| CliError::Config(format!("cannot create output directory {}: {err}", e.out.display())))?;
    let logs = run_experiment(&e)?;
    let mut finals = Vec::with_capacity(logs.len());
    for (rep, log) in logs.iter().enumerate() {
        let path = csv_path(&e, rep);
        std::fs::write(&path, log.to_csv())
            .map_err(|err| CliError::Config(format!("cannot write {}: {err}", path.display())))?;
        let last = log.windowed().last().copied().unwrap_or_default();
        println!("{} rep {rep}: {} -> {}", e.name, format_metrics(&last), path.display());
        finals.push(last);
    }
    Ok(finals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricComparison {
    pub metric: &'static str,
    pub a: f64,
    pub b: f64,
}

impl MetricComparison {
    /// `-1` when `a` is smaller, `+1` when larger, `0` on ties.
    pub fn sign(&self) -> i8 {
        match self.a.partial_cmp(&self.b) {
            Some(std::cmp::Ordering::Less) => -1,
            Some(std::cmp::Ordering::Greater) => 1,
            _ => 0,
        }
    }
}

/// Keys that must agree for two experiments to be comparable.
const SHARED_KEYS: &[&str] = &[
    "topology",
    "n",
    "rows",
    "cols",
    "keep_fraction",
    "edge_file",
    "objective",
    "arrangement",
    "d",
    "m",
    "replicate_period",
    "noise_var",
    "steps",
    "reps",
    "seed",
];

fn tail_means(logs: &[MetricsLog]) -> StepMetrics {
    let mut acc = StepMetrics::default();
    for log in logs {
        let t = log.tail_mean(TAIL_FRACTION);
        acc.dist_to_opt += t.dist_to_opt;
        acc.dist_to_opt_mean += t.dist_to_opt_mean;
        acc.consensus += t.consensus;
        acc.gme += t.gme;
        acc.loss += t.loss;
    }
    let k = logs.len().max(1) as f64;
    StepMetrics {
        dist_to_opt: acc.dist_to_opt / k,
        dist_to_opt_mean: acc.dist_to_opt_mean / k,
        consensus: acc.consensus / k,
        gme: acc.gme / k,
        loss: acc.loss / k,
    }
}

/// Runs both experiments and compares the tail means (last 10 % of the
/// window-averaged metrics, averaged over repetitions).
pub fn cmd_compare(a: &Path, b: &Path) -> Result<Vec<MetricComparison>, CliError> {
    let (ca, cb) = (ExperimentConfig::load(a)?, ExperimentConfig::load(b)?);
    for key in SHARED_KEYS {
        if ca.get(key) != cb.get(key) {
            return Err(CliError::Config(format!(
                "configs differ in shared key `{key}`: {:?} vs {:?}",
                ca.get(key),
                cb.get(key)
            )));
        }
    }
    let (ea, eb) = (Experiment::from_config(&ca)?, Experiment::from_config(&cb)?);
    let (la, lb) = rayon::join(|| run_experiment(&ea), || run_experiment(&eb));
    let (ta, tb) = (tail_means(&la?), tail_means(&lb?));
    let rows = vec![
        MetricComparison { metric: "dist_to_opt", a: ta.dist_to_opt, b: tb.dist_to_opt },
        MetricComparison { metric: "consensus", a: ta.consensus, b: tb.consensus },
        MetricComparison { metric: "gme", a: ta.gme, b: tb.gme },
        MetricComparison { metric: "loss", a: ta.loss, b: tb.loss },
    ];
    println!("{:<12} {:>16} {:>16}  sign(a-b)", "metric", ea.name, eb.name);
    for r in &rows {
        let sign = match r.sign() {
            -1 => "-",
            1 => "+",
            _ => "0",
        };
        println!("{:<12} {:>16.6e} {:>16.6e}  {sign}", r.metric, r.a, r.b);
    }
    Ok(rows)
}

pub fn cmd_check(suite: Suite, inject_fault: bool) -> Result<Vec<CheckOutcome>, CliError> {
    let outcomes = checks::run_suite(suite, inject_fault);
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<&'static str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
    if failed.is_empty() {
        Ok(outcomes)
    } else {
        Err(CliError::CheckFailed(failed))
    }
}

#[derive(Debug, Parser)]
#[command(name = "hadsgd", version, about = "Decentralized SGD with heterogeneity-aware mixing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Fast,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write per-repetition metric CSVs.
    Run { config: PathBuf },
    /// Run two experiments and compare their tail metrics.
    Compare { a: PathBuf, b: PathBuf },
    /// Run the numeric property checks.
    Check {
        #[arg(value_enum, default_value = "fast")]
        suite: SuiteArg,
        /// Corrupt one mixing matrix so the update-identity check must fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

/// Parses arguments, dispatches and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config).map(|_| ()),
        Command::Compare { a, b } => cmd_compare(&a, &b).map(|_| ()),
        Command::Check { suite, inject_fault } => {
            let suite = match suite {
                SuiteArg::Fast => Suite::Fast,
                SuiteArg::All => Suite::All,
            };
            cmd_check(suite, inject_fault).map(|_| ())
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
