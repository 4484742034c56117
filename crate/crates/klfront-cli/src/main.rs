//! `klfront` — batch command-line surface over the klfront library.
//!
//! Every analysis is a subcommand with an explicit seed and machine-readable
//! output. Exit codes: 0 success, 1 runtime or validation failure, 2 usage
//! error, 3 a verification suite found a violation. Identical arguments and
//! seed produce byte-identical output files regardless of `--jobs`.

use std::fs::File;
use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use klfront::bon::{aggregate_bon_curves, bon_curve, bon_curve_exact, BonCurve, DEFAULT_BON_NS};
use klfront::estimators::BootstrapConfig;
use klfront::frontier::{
    aggregate_frontiers, frontier_exact, frontier_with_eval, interpolate_gain_at_kl, FrontierMeta,
    FrontierPoint, FrontierTable, LambdaGrid,
};
use klfront::hacking::{ensemble_rate_experiment, hacking_gap, overoptimization_sweep, ResidualKind, ResidualSpec};
use klfront::io::{
    self as kio, read_checkpoint_log, read_frontier_csv, read_model_path, read_samples,
    FrontierCsvRow,
};
use klfront::oracle::{
    lipschitz_bound_check, verify_covariance_identity, verify_jeffreys_identity,
    verify_proxy_gap_identity, DiscreteModel,
};
use klfront::rng::stream_rng;
use klfront::types::{Estimate, Lambda, PromptSamples};

/// Exit code for "the computation ran, but a verification check failed".
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "klfront",
    version,
    about = "Reward-KL frontier analysis of KL-regularized (tilted) policies",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for parallel sections (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-prompt reward-KL frontiers from base-policy samples.
    Frontier(FrontierArgs),
    /// Empirical best-of-n gain curves from base-policy samples.
    Bon(BonArgs),
    /// Verify the tilting identities on a model file or randomized models.
    Oracle(OracleArgs),
    /// Sweep a proxy reward against its gold channel on an exact model.
    Hacking(HackingArgs),
    /// Measure how ensemble averaging shrinks the proxy alignment gap.
    Ensemble(EnsembleArgs),
    /// Compare an alignment checkpoint log against a frontier table.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Smallest lambda in the sweep grid.
    #[arg(long, default_value_t = 0.01)]
    lambda_min: f64,
    /// Largest lambda in the sweep grid.
    #[arg(long, default_value_t = 10.0)]
    lambda_max: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 25)]
    lambda_count: usize,
    /// Log-spaced grid; pass `--lambda-log false` for linear spacing.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    lambda_log: bool,
}

impl GridArgs {
    fn build(&self) -> klfront::Result<LambdaGrid> {
        if self.lambda_log {
            LambdaGrid::log_spaced(self.lambda_min, self.lambda_max, self.lambda_count)
        } else {
            LambdaGrid::linear(self.lambda_min, self.lambda_max, self.lambda_count)
        }
    }
}

#[derive(Args)]
struct BootstrapArgs {
    /// Bootstrap replicates behind each confidence interval; 0 disables CIs.
    #[arg(long, default_value_t = 1000)]
    replicates: u32,
    /// Two-sided confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// RNG seed; the fixed default keeps unattended runs reproducible.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BootstrapArgs {
    fn build(&self) -> klfront::Result<Option<BootstrapConfig>> {
        if self.replicates == 0 {
            Ok(None)
        } else {
            BootstrapConfig::new(self.replicates, self.ci_level, self.seed).map(Some)
        }
    }
}

#[derive(Args)]
struct FrontierArgs {
    /// NDJSON sample stream, one record per line ("-" reads stdin).
    #[arg(long, required_unless_present = "model", conflicts_with = "model")]
    input: Option<String>,
    /// Model JSON file: emit the exact frontier by enumeration instead of
    /// estimating from samples (bootstrap flags are then ignored).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Reward channel whose tilt defines the policy family.
    #[arg(long)]
    align_channel: String,
    /// Channel the gain is evaluated on (defaults to the align channel).
    #[arg(long, conflicts_with = "model")]
    eval_channel: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    /// Output path ("-" writes stdout); a `.json` extension selects JSON,
    /// anything else CSV.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct BonArgs {
    /// NDJSON sample stream ("-" reads stdin).
    #[arg(long, required_unless_present = "model", conflicts_with = "model")]
    input: Option<String>,
    /// Model JSON file: emit the exact best-of-n curve by enumeration
    /// instead of estimating from samples (bootstrap flags are then ignored).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Reward channel that best-of-n selects and scores on.
    #[arg(long)]
    align_channel: String,
    /// Comma-separated candidate counts, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_BON_NS)]
    bon_ns: Vec<u64>,
    #[command(flatten)]
    bootstrap: BootstrapArgs,
    /// Output CSV path ("-" writes stdout).
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct OracleArgs {
    /// Model JSON file to check; omit to check randomized models instead.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of randomized models when no file is given.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Largest outcome count for randomized models.
    #[arg(long, default_value_t = 100)]
    k_max: usize,
    /// Seed for the randomized model stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest tolerated |lhs - rhs| in the identity checks.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct HackingArgs {
    /// Model JSON file holding both reward channels.
    #[arg(long)]
    model: PathBuf,
    /// Ground-truth reward channel.
    #[arg(long)]
    gold_channel: String,
    /// Imperfect channel the policy is aligned to.
    #[arg(long)]
    proxy_channel: String,
    /// Largest tolerated |lhs - rhs| in the per-lambda identity checks.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Output CSV path for the sweep ("-" writes stdout).
    #[arg(long)]
    out: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ResidualKindArg {
    Uniform,
    Gaussian,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Model JSON file holding the gold channel.
    #[arg(long)]
    model: PathBuf,
    /// Ground-truth reward channel the proxies approximate.
    #[arg(long)]
    gold_channel: String,
    /// Mean-zero residual family for the synthetic proxies.
    #[arg(long, value_enum, default_value_t = ResidualKindArg::Uniform)]
    residual_kind: ResidualKindArg,
    /// Residual scale (uniform half-width or gaussian standard deviation).
    #[arg(long, default_value_t = 0.5)]
    residual_scale: f64,
    /// Comma-separated ensemble sizes, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4, 16, 64, 256])]
    sizes: Vec<usize>,
    /// Independent trials per ensemble size.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Regularization strength of the aligned policies.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Seed for the residual stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path for the rate report ("-" writes stdout).
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct CompareArgs {
    /// NDJSON checkpoint log ("-" reads stdin): one record per evaluated
    /// checkpoint with algorithm, checkpoint index, kl, and reward_gain.
    #[arg(long)]
    input: String,
    /// Frontier CSV to compare against (as written by `klfront frontier`).
    #[arg(long)]
    frontier: PathBuf,
    /// Slack before a checkpoint above the frontier counts as a violation.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    /// Optional per-checkpoint gap CSV ("-" writes stdout).
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(err) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot configure {jobs} worker threads: {err}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Frontier(args) => cmd_frontier(args),
        Command::Bon(args) => cmd_bon(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Hacking(args) => cmd_hacking(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

// ------------------------------------------------------------- IO plumbing

/// Open `path` for buffered reading; "-" drains stdin.
fn open_input(path: &str) -> anyhow::Result<Box<dyn BufRead>> {
    if path == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .lock()
            .read_to_end(&mut buf)
            .context("reading stdin")?;
        Ok(Box::new(Cursor::new(buf)))
    } else {
        let file = File::open(path).with_context(|| format!("opening {path}"))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Write `out` atomically, or stream to stdout when `out` is "-".
fn write_output(
    out: &str,
    write_fn: impl FnOnce(&mut dyn Write) -> klfront::Result<()>,
) -> anyhow::Result<()> {
    if out == "-" {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        write_fn(&mut lock)?;
        lock.flush()?;
        Ok(())
    } else {
        kio::write_atomic(Path::new(out), write_fn).with_context(|| format!("writing {out}"))
    }
}

fn load_samples(path: &str) -> anyhow::Result<Vec<PromptSamples>> {
    let groups = read_samples(open_input(path)?).context("reading samples")?;
    Ok(groups.into_values().collect())
}

// ------------------------------------------------------------ subcommands

fn cmd_frontier(args: FrontierArgs) -> anyhow::Result<ExitCode> {
    let grid = args.grid.build()?;
    let (tables, source) = match (&args.input, &args.model) {
        (Some(input), None) => {
            let cfg = args.bootstrap.build()?;
            let eval = args.eval_channel.as_deref().unwrap_or(&args.align_channel);
            let prompts = load_samples(input)?;
            let mut tables = prompts
                .iter()
                .map(|samples| {
                    frontier_with_eval(samples, &args.align_channel, eval, &grid, cfg.as_ref())
                })
                .collect::<klfront::Result<Vec<_>>>()?;
            if tables.len() > 1 {
                tables.push(aggregate_frontiers(&tables)?);
            }
            (tables, format!("{} prompt(s)", prompts.len()))
        }
        (None, Some(path)) => {
            let model = read_model_path(path)?;
            let table = frontier_exact(&model, &args.align_channel, &grid)?;
            (vec![table], "exact model".to_owned())
        }
        _ => unreachable!("clap enforces exactly one of --input/--model"),
    };

    if Path::new(&args.out).extension().is_some_and(|e| e == "json") {
        write_output(&args.out, |w| kio::write_frontier_json(w, &tables))?;
    } else {
        write_output(&args.out, |w| kio::write_frontier_csv(w, &tables))?;
    }
    eprintln!(
        "frontier: {source}, {} lambda(s), wrote {}",
        grid.len(),
        args.out
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bon(args: BonArgs) -> anyhow::Result<ExitCode> {
    let (curves, source) = match (&args.input, &args.model) {
        (Some(input), None) => {
            let cfg = args.bootstrap.build()?;
            let prompts = load_samples(input)?;
            let mut curves = prompts
                .iter()
                .map(|samples| bon_curve(samples, &args.align_channel, &args.bon_ns, cfg.as_ref()))
                .collect::<klfront::Result<Vec<BonCurve>>>()?;
            if curves.len() > 1 {
                curves.push(aggregate_bon_curves(&curves)?);
            }
            (curves, format!("{} prompt(s)", prompts.len()))
        }
        (None, Some(path)) => {
            let model = read_model_path(path)?;
            let curve = bon_curve_exact(&model, &args.align_channel, &args.bon_ns)?;
            (vec![curve], "exact model".to_owned())
        }
        _ => unreachable!("clap enforces exactly one of --input/--model"),
    };

    write_output(&args.out, |w| kio::write_bon_csv(w, &curves))?;
    eprintln!(
        "bon: {source}, n up to {}, wrote {}",
        args.bon_ns.last().copied().unwrap_or(0),
        args.out
    );
    Ok(ExitCode::SUCCESS)
}

/// Outcome counters for an identity suite run.
#[derive(Default)]
struct SuiteTally {
    checks: usize,
    failures: usize,
    max_diff: f64,
}

impl SuiteTally {
    fn record(&mut self, diff: f64, pass: bool, describe: impl Fn() -> String) {
        self.checks += 1;
        self.max_diff = self.max_diff.max(diff);
        if !pass {
            self.failures += 1;
            eprintln!("FAIL {}", describe());
        }
    }
}

fn cmd_oracle(args: OracleArgs) -> anyhow::Result<ExitCode> {
    let mut tally = SuiteTally::default();
    match &args.model {
        Some(path) => {
            let model = read_model_path(path)?;
            let grid = args.grid.build()?;
            oracle_check_model(&model, &grid, args.tolerance, "model", &mut tally)?;
        }
        None => {
            if args.k_max < 2 {
                bail!("--k-max must be at least 2");
            }
            if args.trials == 0 {
                bail!("--trials must be at least 1");
            }
            let (lo, hi) = (args.grid.lambda_min, args.grid.lambda_max);
            if !(lo.is_finite() && lo > 0.0 && hi.is_finite() && hi >= lo) {
                bail!("need 0 < --lambda-min <= --lambda-max");
            }
            for trial in 0..args.trials {
                let mut rng = stream_rng(args.seed, trial as u64);
                let model = random_model(&mut rng, args.k_max);
                let lambda = Lambda::new((rng.random_range(lo.ln()..=hi.ln())).exp())?;
                let single = LambdaGrid::new(vec![lambda])?;
                oracle_check_model(
                    &model,
                    &single,
                    args.tolerance,
                    &format!("trial {trial}"),
                    &mut tally,
                )?;
            }
        }
    }
    println!(
        "oracle: {} checks, max |lhs-rhs| {:.3e} (tolerance {:.1e}), {} failure(s)",
        tally.checks, tally.max_diff, args.tolerance, tally.failures
    );
    Ok(if tally.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

/// Run every applicable identity on every channel and ordered channel pair.
fn oracle_check_model(
    model: &DiscreteModel,
    grid: &LambdaGrid,
    tolerance: f64,
    label: &str,
    tally: &mut SuiteTally,
) -> anyhow::Result<()> {
    let channels: Vec<&str> = model.channels().collect();
    for &lambda in grid.values() {
        let lam = lambda.value();
        for &channel in &channels {
            let r = verify_jeffreys_identity(model, channel, lambda, tolerance)?;
            tally.record(r.abs_diff, r.pass, || {
                format!("jeffreys {label} channel={channel} lambda={lam:.6e} |diff|={:.3e}", r.abs_diff)
            });
        }
        for &align in &channels {
            for &eval in &channels {
                if align == eval {
                    continue;
                }
                let r = verify_covariance_identity(model, align, eval, lambda, tolerance)?;
                tally.record(r.abs_diff, r.pass, || {
                    format!(
                        "covariance {label} align={align} eval={eval} lambda={lam:.6e} |diff|={:.3e}",
                        r.abs_diff
                    )
                });
                let r = verify_proxy_gap_identity(model, align, eval, lambda, tolerance)?;
                tally.record(r.abs_diff, r.pass, || {
                    format!(
                        "proxy-gap {label} gold={align} proxy={eval} lambda={lam:.6e} |diff|={:.3e}",
                        r.abs_diff
                    )
                });
                let r = lipschitz_bound_check(model, align, eval, lambda, tolerance)?;
                tally.record(0.0, r.pass, || {
                    format!(
                        "lipschitz {label} gold={align} proxy={eval} lambda={lam:.6e} gap={:.3e} bound={:.3e}",
                        r.gap_abs, r.bound
                    )
                });
            }
        }
    }
    Ok(())
}

/// A randomized full-support model with two independent reward channels.
fn random_model(rng: &mut impl Rng, k_max: usize) -> DiscreteModel {
    let k = rng.random_range(2..=k_max);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let outcomes: Vec<String> = (0..k).map(|i| format!("o{i}")).collect();
    let r: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
    let s: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
    DiscreteModel::new(
        outcomes,
        probs,
        [("r".to_string(), r), ("s".to_string(), s)],
    )
    .expect("generated model is valid by construction")
}

fn cmd_hacking(args: HackingArgs) -> anyhow::Result<ExitCode> {
    let model = read_model_path(&args.model)?;
    let grid = args.grid.build()?;
    let rows = overoptimization_sweep(&model, &args.gold_channel, &args.proxy_channel, &grid)?;
    write_output(&args.out, |w| kio::write_sweep_csv(w, &rows))?;

    let mut failures = 0usize;
    for &lambda in grid.values() {
        let report = hacking_gap(&model, &args.gold_channel, &args.proxy_channel, lambda)?;
        let ok = report.identity_abs_diff <= args.tolerance && report.lipschitz.pass;
        if !ok {
            failures += 1;
        }
        println!(
            "hacking: lambda {:.6e} gap {:.6e} identity_diff {:.3e} bound {:.6e} {}",
            report.lambda,
            report.gap_lhs,
            report.identity_abs_diff,
            report.lipschitz.bound,
            if ok { "ok" } else { "FAIL" },
        );
    }
    eprintln!(
        "hacking: swept {} lambda(s), wrote {}, {} failure(s)",
        grid.len(),
        args.out,
        failures
    );
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

fn cmd_ensemble(args: EnsembleArgs) -> anyhow::Result<ExitCode> {
    let model = read_model_path(&args.model)?;
    let kind = match args.residual_kind {
        ResidualKindArg::Uniform => ResidualKind::Uniform {
            scale: args.residual_scale,
        },
        ResidualKindArg::Gaussian => ResidualKind::Gaussian {
            scale: args.residual_scale,
        },
    };
    let spec = ResidualSpec {
        kind,
        seed: args.seed,
    };
    let report = ensemble_rate_experiment(
        &model,
        &args.gold_channel,
        &spec,
        &args.sizes,
        args.trials,
        Lambda::new(args.lambda)?,
    )?;
    write_output(&args.out, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)
            .map_err(|e| klfront::Error::InvalidArgument(format!("unserializable report: {e}")))?;
        writeln!(w)?;
        Ok(())
    })?;
    eprintln!(
        "ensemble: sizes {:?}, {} trials, slope {:?}, wrote {}",
        report.ensemble_sizes, report.trials, report.fitted_slope, args.out
    );
    Ok(ExitCode::SUCCESS)
}

/// Rebuild an interpolatable frontier from CSV rows, preferring the
/// aggregate table when several prompts are present.
fn frontier_from_rows(rows: Vec<FrontierCsvRow>) -> anyhow::Result<FrontierTable> {
    let mut ids: Vec<&str> = rows.iter().map(|r| r.prompt_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let chosen = if ids.contains(&"AGGREGATE") {
        "AGGREGATE"
    } else if let [only] = ids.as_slice() {
        *only
    } else {
        bail!(
            "frontier csv holds {} prompt tables and no AGGREGATE row; \
             regenerate it over all prompts at once",
            ids.len()
        );
    };
    let points: Vec<FrontierPoint> = rows
        .iter()
        .filter(|r| r.prompt_id == chosen)
        .map(|r| FrontierPoint {
            lambda: r.lambda,
            kl: Estimate::point(r.kl, r.n),
            gain: Estimate::point(r.gain, r.n),
        })
        .collect();
    let n = points.iter().map(|p| p.gain.n).min().unwrap_or(0);
    Ok(FrontierTable {
        id: chosen.to_owned(),
        points,
        n_per_prompt: n,
        meta: FrontierMeta {
            seed: None,
            replicates: 0,
            ci_level: None,
            ci_aggregated_heuristically: false,
        },
    })
}

fn cmd_compare(args: CompareArgs) -> anyhow::Result<ExitCode> {
    let checkpoints = read_checkpoint_log(open_input(&args.input)?).context("reading checkpoints")?;
    let file = File::open(&args.frontier)
        .with_context(|| format!("opening {}", args.frontier.display()))?;
    let table = frontier_from_rows(read_frontier_csv(BufReader::new(file))?)?;
    if !(args.tolerance.is_finite() && args.tolerance >= 0.0) {
        bail!("--tolerance must be finite and nonnegative");
    }

    struct Row {
        algorithm: String,
        checkpoint: u64,
        kl: f64,
        reward_gain: f64,
        frontier_gain: f64,
        gap: f64,
        violation: bool,
    }
    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut violations = 0usize;
    for c in checkpoints {
        let frontier_gain = interpolate_gain_at_kl(&table, c.kl)?;
        let gap = frontier_gain - c.reward_gain;
        let violation = gap < -args.tolerance;
        if violation {
            violations += 1;
            println!(
                "violation: algorithm={} checkpoint={} kl={:.6e} gain={:.6e} exceeds frontier {:.6e} by {:.3e}",
                c.algorithm, c.checkpoint, c.kl, c.reward_gain, frontier_gain, -gap
            );
        }
        rows.push(Row {
            algorithm: c.algorithm,
            checkpoint: c.checkpoint,
            kl: c.kl,
            reward_gain: c.reward_gain,
            frontier_gain,
            gap,
            violation,
        });
    }

    if let Some(out) = &args.out {
        write_output(out, |w| {
            let mut csv = csv_writer(w);
            csv.write_record([
                "algorithm",
                "checkpoint",
                "kl",
                "reward_gain",
                "frontier_gain",
                "gap",
                "violation",
            ])
            .map_err(csv_failed)?;
            for r in &rows {
                csv.write_record([
                    r.algorithm.as_str(),
                    &r.checkpoint.to_string(),
                    &kio::fmt_f64(r.kl),
                    &kio::fmt_f64(r.reward_gain),
                    &kio::fmt_f64(r.frontier_gain),
                    &kio::fmt_f64(r.gap),
                    if r.violation { "true" } else { "false" },
                ])
                .map_err(csv_failed)?;
            }
            csv.flush()?;
            Ok(())
        })?;
    }
    println!(
        "compare: {} checkpoint(s) against frontier '{}', {} violation(s) (tolerance {:.1e})",
        rows.len(),
        table.id,
        violations,
        args.tolerance
    );
    Ok(if violations == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::Writer::from_writer(w)
}

fn csv_failed(err: csv::Error) -> klfront::Error {
    klfront::Error::InvalidArgument(format!("csv failure: {err}"))
}
