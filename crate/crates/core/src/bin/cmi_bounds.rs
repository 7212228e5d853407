use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cmi_bounds::bounds::{self, BoundInputs, BoundKind, BoundParams, InfoBudget};
use cmi_bounds::io::{format_value, write_atomic, Delimiter, ResultTable, RunConfig, RunKind};
use cmi_bounds::pipeline::{run_sweep, ExperimentReport};
use cmi_bounds::subset::toy::{toy_sampler, ErmLearner, GibbsLearner, ToyDistribution, ZeroOneLoss};
use cmi_bounds::subset::{
    exact_exponential_moment, mc_verify, tail_coverage, DiscreteLearner, DiscreteSubsetModel, ExpInequality,
    PriorChoice, TailBound, MAX_ENUMERATION_N,
};
use cmi_bounds::{Error, Result};

/// Writes a line to stdout, ignoring a closed pipe.
macro_rules! outln {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Worker threads for the parallel parts; defaults to one per core.
const THREADS_ENV: &str = "CMI_BOUNDS_THREADS";

const EXIT_USAGE: u8 = 1;
const EXIT_COMPUTATION: u8 = 2;
const EXIT_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "cmi-bounds", version, about = "Fast-rate and slow-rate generalization bounds in the random-subset setting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a (lambda, gamma) pair, print the feasibility frontier, or optimize the pair.
    Params(ParamsArgs),
    /// Evaluate one bound.
    Bound(BoundArgs),
    /// Check an exponential inequality or tail coverage on built-in toy learners.
    Verify(VerifyArgs),
    /// Run the posterior/prior experiment described by a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long, requires = "gamma", conflicts_with_all = ["frontier", "optimize"])]
    lambda: Option<f64>,
    #[arg(long, requires = "lambda")]
    gamma: Option<f64>,
    /// Print the largest feasible lambda and the gamma interval along a lambda grid.
    #[arg(long, conflicts_with = "optimize")]
    frontier: bool,
    /// Minimize the fast-rate bound over feasible pairs.
    #[arg(long, requires_all = ["train", "info", "n"])]
    optimize: bool,
    #[arg(long)]
    train: Option<f64>,
    #[arg(long)]
    info: Option<f64>,
    /// Which information measure `--info` holds.
    #[arg(long, value_enum, default_value_t = InfoKind::ConditionalKl)]
    info_kind: InfoKind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum InfoKind {
    ExpectedKl,
    ConditionalKl,
    InfoDensity,
    Cmi,
}

#[derive(Args)]
struct BoundArgs {
    /// Bound kind, e.g. fast-pacb or interp-avg.
    #[arg(long)]
    kind: BoundKind,
    /// Training loss; must be omitted or 0 for interpolating kinds.
    #[arg(long)]
    train: Option<f64>,
    /// KL, CMI or information density, as the kind requires.
    #[arg(long, allow_negative_numbers = true)]
    info: Option<f64>,
    /// Comma-separated samplewise CMIs for the samplewise kinds.
    #[arg(long, value_delimiter = ',')]
    samplewise: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    /// Defaults to the reference pair (1/2.98, 1.795) for kinds that use it.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Thm1,
    Slow,
    Interp,
    Tail,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ToyLearner {
    Gibbs,
    Erm,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    which: Which,
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Supersamples for exact checks, draws for Monte-Carlo and tail checks.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Defaults to erm for interp and gibbs otherwise.
    #[arg(long, value_enum)]
    learner: Option<ToyLearner>,
    /// Inverse temperature of the Gibbs learner.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value_t = bounds::REFERENCE_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = bounds::REFERENCE_GAMMA)]
    gamma: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output path; without either the table goes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated instead of space-separated columns.
    #[arg(long)]
    csv: bool,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

/// Non-error outcome: `Ok(true)` passed or feasible, `Ok(false)` failed.
type Outcome = Result<bool>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let outcome = match cli.command {
        Command::Params(a) => params(a),
        Command::Bound(a) => bound(a),
        Command::Verify(a) => verify(a),
        Command::Experiment(a) => experiment(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::Config(_) => EXIT_USAGE,
        Error::Infeasible { .. } => EXIT_FAILED,
        _ => EXIT_COMPUTATION,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn resolve_seed(seed: Option<u64>) -> (u64, &'static str) {
    match seed {
        Some(s) => (s, "given"),
        None => (rand::random(), "entropy"),
    }
}

fn sig6(x: f64) -> String {
    format_value(x).unwrap_or_else(|_| x.to_string())
}

fn params(a: ParamsArgs) -> Outcome {
    let lambda_star = bounds::max_feasible_lambda(1e-12)?;
    if let (Some(lambda), Some(gamma)) = (a.lambda, a.gamma) {
        let lhs = bounds::feasibility_lhs(lambda, gamma)?;
        let feasible = lhs <= 0.0;
        outln!("lambda {lambda}");
        outln!("gamma {gamma}");
        outln!("feasibility_lhs {lhs:e}");
        match bounds::feasible_gamma_interval(lambda)? {
            Some((lo, hi)) => outln!("gamma_interval {lo} {hi}"),
            None => outln!("gamma_interval none"),
        }
        outln!("max_feasible_lambda {lambda_star}");
        outln!("{}", if feasible { "feasible" } else { "infeasible" });
        return Ok(feasible);
    }
    if a.frontier {
        outln!("max_feasible_lambda {lambda_star}");
        outln!("lambda gamma_lo gamma_hi");
        for k in 1..=18 {
            let lambda = 0.02 * k as f64;
            if let Some((lo, hi)) = bounds::feasible_gamma_interval(lambda)? {
                outln!("{} {} {}", sig6(lambda), sig6(lo), sig6(hi));
            }
        }
        return Ok(true);
    }
    if a.optimize {
        let (train, info, n) = (a.train.unwrap_or(0.0), a.info.unwrap_or(0.0), a.n.unwrap_or(1));
        let budget = match a.info_kind {
            InfoKind::ExpectedKl => InfoBudget::ExpectedKl(info),
            InfoKind::ConditionalKl => InfoBudget::ConditionalKl(info),
            InfoKind::InfoDensity => InfoBudget::InfoDensity(info),
            InfoKind::Cmi => InfoBudget::Cmi(info),
        };
        let p = bounds::optimize_params(train, &budget, n, a.delta)?;
        let value = match a.info_kind {
            InfoKind::ExpectedKl | InfoKind::Cmi => bounds::fast_avg(train, info, &p)?,
            InfoKind::ConditionalKl => bounds::fast_pacb(train, info, &p)?,
            InfoKind::InfoDensity => bounds::fast_sd(train, info, &p)?,
        }
        .value;
        outln!("lambda {}", p.lambda);
        outln!("gamma {}", p.gamma);
        outln!("bound {value}");
        return Ok(true);
    }
    Err(usage("params needs --lambda and --gamma, --frontier, or --optimize"))
}

fn bound(a: BoundArgs) -> Outcome {
    let kind = a.kind;
    if kind.uses_samplewise() {
        if a.info.is_some() {
            return Err(usage(format!("{kind} takes --samplewise, not --info")));
        }
        if a.samplewise.is_none() {
            return Err(usage(format!("{kind} needs --samplewise")));
        }
    } else {
        if a.samplewise.is_some() {
            return Err(usage(format!("{kind} does not take --samplewise")));
        }
        if a.info.is_none() {
            return Err(usage(format!("{kind} needs --info")));
        }
    }
    if !kind.uses_lambda_gamma() && (a.lambda.is_some() || a.gamma.is_some()) {
        return Err(usage(format!("{kind} does not take --lambda/--gamma")));
    }
    if kind.uses_delta() != a.delta.is_some() {
        return Err(usage(if kind.uses_delta() {
            format!("{kind} needs --delta")
        } else {
            format!("{kind} does not take --delta")
        }));
    }
    if kind.is_interpolating() && a.train.is_some_and(|t| t != 0.0) {
        return Err(usage(format!("{kind} assumes zero training loss")));
    }
    if !kind.is_interpolating() && a.train.is_none() {
        return Err(usage(format!("{kind} needs --train")));
    }
    let samplewise = a.samplewise.unwrap_or_default();
    let n = match (a.n, kind.uses_samplewise()) {
        (Some(n), true) if n != samplewise.len() => {
            return Err(usage(format!("--n {n} disagrees with {} samplewise terms", samplewise.len())))
        }
        (Some(n), _) => n,
        (None, true) => samplewise.len(),
        (None, false) => return Err(usage(format!("{kind} needs --n"))),
    };
    let inputs = BoundInputs {
        train_loss: a.train.unwrap_or(0.0),
        info: a.info.unwrap_or(0.0),
        samplewise,
        n,
        delta: a.delta,
        lambda: Some(a.lambda.unwrap_or(bounds::REFERENCE_LAMBDA)),
        gamma: Some(a.gamma.unwrap_or(bounds::REFERENCE_GAMMA)),
    };
    let r = bounds::evaluate(kind, &inputs)?;
    outln!("{},{},{}", kind, r.value, r.vacuous());
    let mut human = format!("{kind} bound on the test loss: {}", sig6(r.value));
    if r.vacuous() {
        human.push_str(" (vacuous)");
    }
    if !r.valid {
        human.push_str(" (information term negative, floored)");
    }
    outln!("{human}");
    Ok(true)
}

fn toy_model<L>(n: usize, learner: L, noise: f64, prior: PriorChoice) -> Result<DiscreteSubsetModel<cmi_bounds::subset::toy::ToyInstance, L, ZeroOneLoss>>
where
    L: DiscreteLearner<cmi_bounds::subset::toy::ToyInstance> + Sync,
{
    let dist = ToyDistribution::new(vec![1, 0, 1], noise)?;
    Ok(DiscreteSubsetModel::new(n, learner, ZeroOneLoss, toy_sampler(dist, n), prior))
}

fn verify(a: VerifyArgs) -> Outcome {
    if a.n == 0 {
        return Err(usage("--n must be positive"));
    }
    let (seed, source) = resolve_seed(a.seed);
    outln!("seed {seed} ({source})");
    let learner = a
        .learner
        .unwrap_or(if a.which == Which::Interp { ToyLearner::Erm } else { ToyLearner::Gibbs });
    // the ERM toy is realizable so that it interpolates
    let noise = if learner == ToyLearner::Erm { 0.0 } else { 0.1 };
    match learner {
        ToyLearner::Gibbs => run_verify(&a, seed, GibbsLearner::new(3, a.beta)?, noise),
        ToyLearner::Erm => run_verify(&a, seed, ErmLearner::new(3)?, noise),
    }
}

fn run_verify<L>(a: &VerifyArgs, seed: u64, learner: L, noise: f64) -> Outcome
where
    L: DiscreteLearner<cmi_bounds::subset::toy::ToyInstance> + Sync + Clone,
{
    let exact = a.n <= MAX_ENUMERATION_N;
    let m = learner.num_hypotheses();
    let prior = if exact {
        PriorChoice::TrueMarginal
    } else {
        PriorChoice::Fixed(vec![1.0 / m as f64; m])
    };
    let model = toy_model(a.n, learner.clone(), noise, prior.clone())?;
    if a.which == Which::Tail {
        let trials = a.trials.unwrap_or(2000);
        let params = BoundParams::new(a.lambda, a.gamma, a.delta, a.n)?;
        params.ensure_feasible()?;
        let (lambda, gamma) = (a.lambda, a.gamma);
        let mut kinds = vec![
            ("slow-pacb", TailBound::SlowPacb),
            ("slow-sd", TailBound::SlowSd),
            ("fast-pacb", TailBound::FastPacb { lambda, gamma }),
            ("fast-sd", TailBound::FastSd { lambda, gamma }),
        ];
        if noise == 0.0 {
            kinds.push(("interp-pacb", TailBound::InterpPacb));
            kinds.push(("interp-sd", TailBound::InterpSd));
        }
        let mut all = true;
        for (name, kind) in kinds {
            let r = tail_coverage(kind, &model, a.delta, trials, seed)?;
            all &= r.passes();
            outln!(
                "tail {name} violations {}/{} rate {} allowed {} {}",
                r.violations,
                r.trials,
                sig6(r.rate()),
                sig6(r.allowed_rate()),
                verdict(r.passes())
            );
        }
        return Ok(all);
    }
    let inequality = match a.which {
        Which::Thm1 => ExpInequality::fast(&BoundParams::new(a.lambda, a.gamma, a.delta, a.n)?)?,
        Which::Slow => ExpInequality::SlowRate,
        _ => ExpInequality::Interpolating,
    };
    if exact {
        let supersamples = a.trials.unwrap_or(5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all = true;
        for k in 0..supersamples {
            let z = model.sample_supersample(&mut rng)?;
            let moment = exact_exponential_moment(&learner, &ZeroOneLoss, &z, &prior, inequality)?;
            // exact up to floating-point summation
            let pass = moment <= 1.0 + 1e-12;
            all &= pass;
            outln!("{} exact n {} supersample {k} moment {} {}", inequality.name(), a.n, sig6(moment), verdict(pass));
        }
        Ok(all)
    } else {
        let trials = a.trials.unwrap_or(20_000);
        let est = mc_verify(&model, inequality, trials, seed)?;
        outln!(
            "{} monte-carlo n {} trials {} mean {} se {} {}",
            inequality.name(),
            a.n,
            est.trials,
            sig6(est.mean),
            sig6(est.std_error),
            verdict(est.passes())
        );
        Ok(est.passes())
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool_version: &'static str,
    seed: u64,
    seed_source: &'a str,
    config_path: &'a Path,
    config: &'a RunConfig,
    sweep_column: &'a str,
    points: Vec<SweepPoint<'a>>,
}

#[derive(Serialize)]
struct SweepPoint<'a> {
    key: usize,
    report: &'a ExperimentReport,
}

fn experiment(a: ExperimentArgs) -> Outcome {
    let cfg = RunConfig::load(&a.config)?;
    if cfg.kind != RunKind::Experiment {
        return Err(Error::Config(format!(
            "{}: kind {:?} is not an experiment; use the matching subcommand",
            a.config.display(),
            cfg.kind
        )));
    }
    let (seed, source) = match (a.seed, cfg.seed) {
        (Some(s), _) => (s, "command line"),
        (None, Some(s)) => (s, "config"),
        (None, None) => resolve_seed(None),
    };
    let data = cfg.dataset(seed)?;
    cfg.check_data_size(&data)?;
    let sweep = cfg.effective_sweep();
    let points = run_sweep(&cfg.pipeline, &data, &sweep, seed)?;
    let table = ResultTable::from_reports(sweep.column(), &points)?;
    let delimiter = if a.csv || cfg.csv { Delimiter::Comma } else { Delimiter::Space };
    let text = table.render(delimiter)?;
    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION"),
        seed,
        seed_source: source,
        config_path: &a.config,
        config: &cfg,
        sweep_column: sweep.column(),
        points: points.iter().map(|(key, report)| SweepPoint { key: *key, report }).collect(),
    };
    let json = serde_json::to_string_pretty(&provenance).map_err(|e| Error::Config(e.to_string()))?;
    match a.output.or(cfg.output.clone()) {
        Some(path) => {
            write_atomic(&path, text.as_bytes())?;
            let mut sidecar = path.clone().into_os_string();
            sidecar.push(".json");
            write_atomic(Path::new(&sidecar), json.as_bytes())?;
            eprintln!("seed {seed} ({source}); wrote {} and {}", path.display(), PathBuf::from(sidecar).display());
        }
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            eprintln!("seed {seed} ({source})");
        }
    }
    Ok(true)
}
