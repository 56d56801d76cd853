//! Command-line front end.
//!
//! Every study writes `<outdir>/<study>-<seed>.csv` and `<outdir>/summary.txt`.
//! Exit status: 0 when every check passes, 1 on a failed check, 2 on a bad
//! config or argument, 3 on an I/O failure.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::experiments::{
    power_of_two_grid, run_balancer_comparison, run_convergence_study, run_init_comparison,
    run_worstcase_complexity_comparison, ScheduleMode, R0_FLOOR,
};
use crate::optimizer::{run_balancer, Schedule, StepMode, Stochastic};
use crate::oracle::minimax_reference;
use crate::report::{fmt_float, Check, Summary, Table};
use crate::tasks::{gap_family, ParamVector, TaskFamily};
use crate::weighting::{AlphaSchedule, Balancer};
pub use config::{ConfigError, ExperimentConfig, Mode};

/// Fallback output directory when neither `--outdir` nor `outdir` is set.
pub const OUTDIR_ENV: &str = "MINIMAX_LAB_OUTDIR";
const DEFAULT_OUTDIR: &str = "minimax-lab-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

const DEFAULT_K_LIST: [usize; 4] = [100, 400, 1600, 6400];
const DEFAULT_TRAIN_K: usize = 1000;
const DEFAULT_BALANCER_K: usize = 2000;

#[derive(Debug, Parser)]
#[command(name = "minimax-lab", version, about = "Minimax multi-task pre-training studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress lines and the summary echo.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for parallel studies.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (falls back to the config, then $MINIMAX_LAB_OUTDIR).
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single run of one balancer; writes the iteration trace.
    Train(ConfigArg),
    /// Excess worst-case risk of the averaged iterate against the rate bound.
    Convergence(ConfigArg),
    /// Worst-case risk at the minimax point versus the average-risk minimiser.
    CompareInit(ConfigArg),
    /// Empirical ERM sample complexity from both initialisations.
    SampleComplexity(ConfigArg),
    /// Terminal risks of every balancer on one family.
    CompareBalancers(ConfigArg),
    /// Init comparison on the gap family with T tasks.
    Gap {
        #[arg(long = "T", default_value_t = 4)]
        tasks: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

impl Command {
    fn study(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Convergence(_) => "convergence",
            Command::CompareInit(_) => "compare-init",
            Command::SampleComplexity(_) => "sample-complexity",
            Command::CompareBalancers(_) => "compare-balancers",
            Command::Gap { .. } => "gap",
        }
    }

    fn config_path(&self) -> Option<&Path> {
        match self {
            Command::Train(c)
            | Command::Convergence(c)
            | Command::CompareInit(c)
            | Command::SampleComplexity(c)
            | Command::CompareBalancers(c) => Some(&c.config),
            Command::Gap { config, .. } => config.as_deref(),
        }
    }
}

/// Rendered study result.
#[derive(Debug)]
pub struct Outcome {
    pub csv: Vec<u8>,
    pub summary: Summary,
}

impl Outcome {
    fn from_table(table: &Table, summary: Summary) -> Self {
        Self {
            csv: table.to_csv_string().into_bytes(),
            summary,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Check(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } => Failure::Check(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the study and returns the exit
/// status.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CHECK_FAILED
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            EXIT_IO
        }
    }
}

fn run(cli: &Cli) -> Result<i32, Failure> {
    let study = cli.command.study();
    let cfg = match cli.command.config_path() {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = &cfg.study {
        if s != study {
            return Err(Failure::Config(format!(
                "config key 'study': '{s}' does not match subcommand '{study}'"
            )));
        }
    }
    if cli.jobs == Some(0) {
        return Err(Failure::Config("--jobs must be at least 1".into()));
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let outdir = cli
        .outdir
        .clone()
        .or_else(|| cfg.outdir.clone())
        .or_else(|| std::env::var_os(OUTDIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTDIR));

    let progress = |msg: &str| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    progress(&format!("running {study} (seed {seed})"));

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| Failure::Config(format!("cannot start worker pool: {e}")))?;
    let outcome = pool.install(|| match &cli.command {
        Command::Train(_) => train(&cfg, seed),
        Command::Convergence(_) => convergence(&cfg),
        Command::CompareInit(_) => compare_init(&cfg),
        Command::SampleComplexity(_) => sample_complexity(&cfg, seed),
        Command::CompareBalancers(_) => compare_balancers(&cfg),
        Command::Gap { tasks, .. } => gap(*tasks),
    })?;

    let csv_path = outdir.join(format!("{study}-{seed}.csv"));
    let summary_path = outdir.join("summary.txt");
    let rendered = outcome.summary.render();
    write_outputs(&outdir, &csv_path, &outcome.csv, &summary_path, &rendered)?;
    progress(&format!("wrote {}", csv_path.display()));
    progress(&format!("wrote {}", summary_path.display()));
    if !cli.quiet {
        print!("{rendered}");
    }

    Ok(if outcome.summary.all_passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

fn write_outputs(
    outdir: &Path,
    csv_path: &Path,
    csv: &[u8],
    summary_path: &Path,
    summary: &str,
) -> Result<(), Failure> {
    let io = |path: &Path, e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
    fs::create_dir_all(outdir).map_err(|e| io(outdir, e))?;
    fs::write(csv_path, csv).map_err(|e| io(csv_path, e))?;
    fs::write(summary_path, summary).map_err(|e| io(summary_path, e))?;
    Ok(())
}

fn theta0_of(cfg: &ExperimentConfig, family: &TaskFamily) -> Result<ParamVector, Failure> {
    match &cfg.theta0 {
        Some(v) => ParamVector::new(v.clone()).map_err(|e| Failure::Config(format!("config key 'theta0': {e}"))),
        None => Ok(ParamVector::zeros(family.dim())),
    }
}

/// `R₀` from the override or the oracle, floored.
fn r0_of(cfg: &ExperimentConfig, family: &TaskFamily, theta0: &ParamVector) -> Result<f64, Failure> {
    if let Some(r0) = cfg.alpha_overrides.r0 {
        return Ok(r0);
    }
    let oracle = minimax_reference(family).map_err(|e| {
        Failure::Config(format!("config key 'alpha.R0': required when no oracle is available ({e})"))
    })?;
    Ok(theta0.dist(&oracle.theta_star).max(R0_FLOOR))
}

fn schedule_of(
    cfg: &ExperimentConfig,
    family: &TaskFamily,
    theta0: &ParamVector,
    iterations: usize,
) -> Result<Schedule, Failure> {
    let needs_r0 = cfg.step_mode == Mode::Theoretical || cfg.alpha_mode == Mode::Theoretical;
    let r0 = if needs_r0 { r0_of(cfg, family, theta0)? } else { 0.0 };
    let o = cfg.alpha_overrides;
    let lipschitz = o.lipschitz.unwrap_or_else(|| family.lipschitz());
    let step = match cfg.step_mode {
        Mode::Constant => StepMode::Constant(cfg.step_value.expect("validated at parse time")),
        Mode::Theoretical => StepMode::Theoretical { r0, lipschitz },
    };
    let alpha = match cfg.alpha_mode {
        Mode::Constant => AlphaSchedule::constant(cfg.alpha_value.expect("validated at parse time"))?,
        Mode::Theoretical => AlphaSchedule::theoretical(
            r0,
            lipschitz,
            o.tasks.unwrap_or(family.len()),
            o.bound.unwrap_or_else(|| family.bound()),
        )?,
    };
    Ok(Schedule::new(step, alpha, iterations)?)
}

fn train(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, Failure> {
    let family = cfg.family()?;
    let theta0 = theta0_of(cfg, &family)?;
    let schedule = schedule_of(cfg, &family, &theta0, cfg.iterations.unwrap_or(DEFAULT_TRAIN_K))?;
    let stochastic = cfg.batch_size.map(|batch_size| Stochastic { batch_size, seed });

    let mut summary = Summary::new(format!("train {} on {}", cfg.balancer, family.name()));
    summary.fact("K", schedule.iterations());
    summary.fact("eta", fmt_float(schedule.step_size()));
    let trace = match run_balancer(&family, &theta0, cfg.balancer, &schedule, stochastic) {
        Ok(trace) => trace,
        Err(Error::Diverged {
            iteration,
            norm,
            trace,
        }) => {
            summary.check(Check::new(
                "run stays bounded",
                false,
                format!("diverged at iteration {iteration}, norm {norm:.3e}"),
            ));
            let mut csv = Vec::new();
            trace
                .write_csv(&mut csv)
                .map_err(|e| Failure::Io(e.to_string()))?;
            return Ok(Outcome { csv, summary });
        }
        Err(e) => return Err(e.into()),
    };

    let averaged_worst = family.worst_case_risk(trace.averaged())?.value;
    let final_worst = family.worst_case_risk(trace.final_theta())?.value;
    summary.fact("averaged_theta", trace.averaged());
    summary.fact("averaged_worst_risk", fmt_float(averaged_worst));
    summary.fact("final_theta", trace.final_theta());
    summary.fact("final_worst_risk", fmt_float(final_worst));
    summary.fact("gradient_evaluations", trace.gradient_evaluations());
    summary.check(Check::new(
        "run stays bounded",
        averaged_worst.is_finite() && final_worst.is_finite(),
        "",
    ));

    let exact_theory = cfg.balancer == Balancer::Minimax
        && cfg.step_mode == Mode::Theoretical
        && cfg.alpha_mode == Mode::Theoretical
        && stochastic.is_none();
    if exact_theory {
        if let (StepMode::Theoretical { r0, lipschitz }, Ok(oracle)) =
            (schedule.step_mode(), minimax_reference(&family))
        {
            let excess = averaged_worst - (oracle.value - oracle.error_bound);
            let bound = 2.0 * r0 * lipschitz / (schedule.iterations() as f64).sqrt();
            summary.fact("excess", fmt_float(excess));
            summary.check(Check::new(
                "averaged iterate within rate bound",
                excess <= bound,
                format!("{excess:.3e} <= {bound:.3e}"),
            ));
        }
    }

    let mut csv = Vec::new();
    trace
        .write_csv(&mut csv)
        .map_err(|e| Failure::Io(e.to_string()))?;
    Ok(Outcome { csv, summary })
}

fn convergence(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let family = cfg.family()?;
    let theta0 = theta0_of(cfg, &family)?;
    let mode = match cfg.step_mode {
        Mode::Theoretical => ScheduleMode::Theoretical,
        Mode::Constant => ScheduleMode::Constant {
            eta: cfg.step_value.expect("validated at parse time"),
            alpha: cfg.alpha_value.ok_or_else(|| {
                Failure::Config("config key 'alpha.value': required with a constant step".into())
            })?,
        },
    };
    let k_list = cfg.k_list.clone().unwrap_or_else(|| DEFAULT_K_LIST.to_vec());
    let report = run_convergence_study(&family, &theta0, &k_list, mode)?;
    Ok(Outcome::from_table(&report.table(), report.summary()))
}

fn compare_init(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let family = cfg.family()?;
    let report = run_init_comparison(&family)?;
    Ok(Outcome::from_table(&report.table(), report.summary()))
}

fn sample_complexity(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, Failure> {
    let family = cfg.family()?;
    let eps = cfg.eps.unwrap_or(0.05);
    if eps >= 1.0 {
        return Err(Failure::Config("config key 'eps': must be below 1".into()));
    }
    let delta = cfg.delta.unwrap_or(0.1);
    let n_grid = cfg.n_grid.clone().unwrap_or_else(|| power_of_two_grid(10));
    let trials = cfg.trials.unwrap_or(200);
    let report = run_worstcase_complexity_comparison(&family, eps, delta, &n_grid, trials, seed)?;
    let mut summary = report.summary();
    summary.fact("seed", seed);
    Ok(Outcome::from_table(&report.table(), summary))
}

fn compare_balancers(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let family = cfg.family()?;
    let theta0 = theta0_of(cfg, &family)?;
    let iterations = cfg.iterations.unwrap_or(DEFAULT_BALANCER_K);
    let schedule = schedule_of(cfg, &family, &theta0, iterations)?;
    let report = run_balancer_comparison(
        &family,
        &theta0,
        schedule.step_size(),
        iterations,
        &cfg.balancers,
        *schedule.alpha(),
    )?;
    let mut summary = report.summary();
    summary.fact("eta", fmt_float(schedule.step_size()));
    Ok(Outcome::from_table(&report.table(), summary))
}

fn gap(tasks: usize) -> Result<Outcome, Failure> {
    if tasks < 2 {
        return Err(Failure::Config("--T must be at least 2".into()));
    }
    let family = gap_family(tasks)?;
    let report = run_init_comparison(&family)?;
    let predicted = (1.0 + ((tasks - 1) as f64).sqrt()).powi(2) / 4.0;
    let mut summary = report.summary();
    summary.fact("T", tasks);
    summary.fact("predicted_ratio", format!("{predicted:.6}"));
    summary.check(Check::new(
        "ratio matches (1 + sqrt(T - 1))^2 / 4",
        (report.ratio / predicted - 1.0).abs() <= 0.01,
        format!("{:.6} vs {predicted:.6}", report.ratio),
    ));
    summary.check(Check::new(
        "ratio at least T/8",
        report.ratio >= tasks as f64 / 8.0,
        format!("{:.6} >= {}", report.ratio, tasks as f64 / 8.0),
    ));
    let mut table = Table::new([
        "T",
        "theta_max",
        "worst_risk_max",
        "theta_avg",
        "worst_risk_avg",
        "ratio",
        "predicted_ratio",
    ]);
    table.push(vec![
        tasks.to_string(),
        report.theta_max.to_string(),
        fmt_float(report.value_max),
        report.theta_avg.to_string(),
        fmt_float(report.value_avg),
        fmt_float(report.ratio),
        fmt_float(predicted),
    ]);
    Ok(Outcome::from_table(&table, summary))
}
