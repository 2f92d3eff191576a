//! Command-line front end for `mfgkit`: list environments, solve with a live
//! iteration log, tune hyperparameters, and dump tabular environments.
//!
//! Exit codes: 0 success, 2 usage or registry errors, 3 invalid input data,
//! 4 numerical failure (1 if an output file cannot be written).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfgkit::solvers::{Algorithm, IterationLog, ParamValue, Params, SolveSettings};
use mfgkit::tuner::{self, Metric, TuneSettings};
use mfgkit::{zoo, Environment};
use serde_json::json;

pub mod error;
pub mod record;
pub mod tabular;

pub use error::{CliError, CliResult, EXIT_DATA, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
pub use record::{read_run_record, AlgorithmSpec, EnvSource, RunRecord, SeriesPoint};
pub use tabular::{load_tabular_env, TabularEnvFile};

const FILE_ENV_NOTE: &str = "Environment files (--env-file) hold population-independent tables: \
rewards and transitions may vary with the stage but not with the population distribution. \
Population-coupled environments are available through the built-in registry and the library API.";

#[derive(Debug, Parser)]
#[command(name = "mfgkit", version, about = "Solve and tune finite mean-field games", after_help = FILE_ENV_NOTE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List built-in environments and their parameters.
    ListEnvs(ListEnvsArgs),
    /// Run one solver on one environment.
    #[command(after_help = FILE_ENV_NOTE)]
    Solve(SolveArgs),
    /// Random-search hyperparameters of a solver over a suite of environments.
    Tune(TuneArgs),
    /// Write an environment's tables, frozen at the uniform-policy flow, as an
    /// environment file.
    #[command(after_help = FILE_ENV_NOTE)]
    DumpEnv(DumpEnvArgs),
}

#[derive(Debug, Args)]
pub struct ListEnvsArgs {
    /// Also list algorithms with their default hyperparameters, and metrics.
    #[arg(long)]
    pub algs: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LogMode {
    Table,
    Jsonl,
    None,
}

#[derive(Debug, Args)]
pub struct EnvArgs {
    /// Built-in environment name.
    #[arg(long, required_unless_present = "env_file", conflicts_with = "env_file")]
    pub env: Option<String>,
    /// Tabular environment file (JSON, population-independent).
    #[arg(long, value_name = "PATH")]
    pub env_file: Option<PathBuf>,
    /// Environment keyword argument; repeatable.
    #[arg(long = "env-arg", value_name = "KEY=VALUE")]
    pub env_args: Vec<String>,
    /// Seed for seeded environments (overrides their `seed` argument default).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SettingsArgs {
    #[arg(long, default_value_t = SolveSettings::default().max_iter)]
    pub max_iter: usize,
    #[arg(long, default_value_t = SolveSettings::default().atol)]
    pub atol: f64,
    #[arg(long, default_value_t = SolveSettings::default().rtol)]
    pub rtol: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Algorithm name.
    #[arg(long)]
    pub alg: String,
    /// Hyperparameter; repeatable. `none` unsets optional parameters.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    #[command(flatten)]
    pub settings: SettingsArgs,
    /// Record (and log) every K-th iteration; the last one is always recorded.
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    /// Write the run record (JSON) here.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LogMode::Table)]
    pub log: LogMode,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Suite member as NAME or NAME:key=value,...; repeatable.
    #[arg(long = "env", value_name = "NAME[:KEY=VALUE,...]")]
    pub envs: Vec<String>,
    #[arg(long)]
    pub alg: String,
    #[arg(long, default_value = "shifted_geo_mean")]
    pub metric: String,
    #[arg(long, default_value_t = 20)]
    pub n_trials: usize,
    /// Wall-clock budget in seconds; at least one trial always runs.
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Seed of the sampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub settings: SettingsArgs,
    /// Write the tune report (JSON) here.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpEnvArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    #[arg(long, value_name = "PATH")]
    pub output: PathBuf,
}

/// Parses the arguments and runs the command, returning the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, out, err),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            code
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::ListEnvs(a) => cmd_list_envs(a, out),
        Command::Solve(a) => cmd_solve(a, out).map(|_| ()),
        Command::Tune(a) => cmd_tune(a, out).map(|_| ()),
        Command::DumpEnv(a) => cmd_dump_env(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Io(format!("cannot write output: {e}"))
}

/// Splits `key=value`; keys must be nonempty and unique.
pub fn parse_key_values<'a, I>(items: I) -> CliResult<BTreeMap<String, String>>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut map = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .filter(|(k, _)| !k.trim().is_empty())
            .ok_or_else(|| CliError::Usage(format!("malformed key=value argument `{item}`")))?;
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("`{}` given more than once", k.trim())));
        }
    }
    Ok(map)
}

pub fn parse_params(items: &[String]) -> CliResult<Params> {
    parse_key_values(items.iter().map(String::as_str))?
        .into_iter()
        .map(|(k, raw)| match ParamValue::parse(&raw) {
            Some(v) => Ok((k, v)),
            None => Err(CliError::Usage(format!("parameter `{k}`: cannot parse `{raw}` as a number"))),
        })
        .collect()
}

/// Parses a suite member `NAME[:key=value,...]`.
pub fn parse_suite_entry(raw: &str) -> CliResult<(String, BTreeMap<String, String>)> {
    match raw.split_once(':') {
        None => Ok((raw.to_string(), BTreeMap::new())),
        Some((name, rest)) => Ok((name.to_string(), parse_key_values(rest.split(',').filter(|s| !s.is_empty()))?)),
    }
}

fn build_registry_env(name: &str, kwargs: &BTreeMap<String, String>) -> CliResult<Environment> {
    zoo::make(name, kwargs).map_err(CliError::from_core)
}

fn resolve_env(args: &EnvArgs) -> CliResult<(Environment, EnvSource)> {
    let mut kwargs = parse_key_values(args.env_args.iter().map(String::as_str))?;
    match (&args.env, &args.env_file) {
        (_, Some(path)) => {
            if !kwargs.is_empty() {
                return Err(CliError::Usage("--env-arg cannot be combined with --env-file".into()));
            }
            let env = load_tabular_env(path)?;
            let source = EnvSource { name: "file".into(), kwargs, file: Some(path.display().to_string()) };
            Ok((env, source))
        }
        (Some(name), None) => {
            let seeded = zoo::REGISTRY
                .iter()
                .find(|e| e.name == name)
                .is_some_and(|e| e.params.iter().any(|p| p.name == "seed"));
            if let (Some(seed), true) = (args.seed, seeded) {
                let seed = seed.to_string();
                match kwargs.get("seed") {
                    Some(given) if *given != seed => {
                        return Err(CliError::Usage(format!(
                            "--seed {seed} conflicts with --env-arg seed={given}"
                        )))
                    }
                    _ => {
                        kwargs.insert("seed".into(), seed);
                    }
                }
            }
            let env = build_registry_env(name, &kwargs)?;
            Ok((env, EnvSource { name: name.clone(), kwargs, file: None }))
        }
        (None, None) => Err(CliError::Usage("one of --env or --env-file is required".into())),
    }
}

pub fn cmd_list_envs(args: &ListEnvsArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut text = String::from("environments:\n");
    for entry in zoo::REGISTRY {
        let sig: Vec<String> = entry.params.iter().map(|p| format!("{}={}", p.name, p.default)).collect();
        text.push_str(&format!("  {}({})\n      {}\n", entry.name, sig.join(", "), entry.summary));
        for p in entry.params {
            text.push_str(&format!("      {:<10} {}\n", p.name, p.help));
        }
    }
    if args.algs {
        text.push_str("algorithms:\n");
        for name in Algorithm::NAMES {
            let defaults = Algorithm::param_defaults(name).map_err(CliError::from_core)?;
            let sig: Vec<String> = defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
            text.push_str(&format!("  {name}({})\n", sig.join(", ")));
        }
        text.push_str("metrics:\n");
        for name in Metric::NAMES {
            text.push_str(&format!("  {name}\n"));
        }
    }
    out.write_all(text.as_bytes()).map_err(io)
}

fn write_log_row(out: &mut dyn Write, mode: LogMode, row: &IterationLog) -> std::io::Result<()> {
    match mode {
        LogMode::None => return Ok(()),
        LogMode::Table => writeln!(
            out,
            "{:>8}  {:>14.6e}  {:>14.6e}  {:>10.4}",
            row.iteration, row.exploitability, row.best_exploitability, row.elapsed_s
        )?,
        LogMode::Jsonl => writeln!(
            out,
            "{}",
            json!({
                "iter": row.iteration,
                "expl": row.exploitability,
                "best_expl": row.best_exploitability,
                "elapsed_s": row.elapsed_s,
            })
        )?,
    }
    out.flush()
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> CliResult<RunRecord> {
    let settings = SolveSettings {
        max_iter: args.settings.max_iter,
        atol: args.settings.atol,
        rtol: args.settings.rtol,
        record_every: args.record_every,
    };
    settings.validate().map_err(CliError::from_core)?;
    let params = parse_params(&args.params)?;
    let alg = Algorithm::from_params(&args.alg, &params).map_err(CliError::from_core)?;
    let (env, source) = resolve_env(&args.env)?;

    let start = Instant::now();
    if args.log == LogMode::Table {
        writeln!(out, "{:>8}  {:>14}  {:>14}  {:>10}", "iter", "expl", "best_expl", "elapsed_s").map_err(io)?;
    }
    let mut write_error = None;
    let result = alg.solve_with_log(&env, &settings, |row| {
        if write_error.is_none() {
            write_error = write_log_row(out, args.log, row).err();
        }
    });
    if let Some(e) = write_error {
        return Err(io(e));
    }
    let result = result.map_err(CliError::from_core)?;

    let final_policy = result.final_policy().to_nd(&env).map_err(CliError::from_core)?;
    let record = RunRecord {
        version: record::VERSION.to_string(),
        environment: source,
        algorithm: AlgorithmSpec { name: alg.name().to_string(), params: alg.params() },
        settings,
        series: result
            .iterations
            .iter()
            .zip(&result.exploitabilities)
            .zip(&result.runtimes)
            .map(|((&iteration, &exploitability), &elapsed_s)| SeriesPoint { iteration, exploitability, elapsed_s })
            .collect(),
        converged: result.converged,
        iterations_run: result.iterations_run,
        final_policy: tabular::to_nested(final_policy.view()),
    };

    let elapsed = start.elapsed().as_secs_f64();
    let summary = match args.log {
        LogMode::Jsonl => json!({
            "summary": {
                "algorithm": alg.name(),
                "converged": result.converged,
                "iterations": result.iterations_run,
                "final_expl": result.final_exploitability(),
                "best_expl": result.best_exploitability(),
                "elapsed_s": elapsed,
            }
        })
        .to_string(),
        _ => format!(
            "{}: {} after {} iterations; final expl {:.6e}, best expl {:.6e}, {:.3}s",
            alg.name(),
            if result.converged { "converged" } else { "stopped" },
            result.iterations_run,
            result.final_exploitability(),
            result.best_exploitability(),
            elapsed
        ),
    };
    writeln!(out, "{summary}").and_then(|_| out.flush()).map_err(io)?;

    if let Some(path) = &args.output {
        record::write_json(path, &record)?;
    }
    Ok(record)
}

pub fn cmd_tune(args: &TuneArgs, out: &mut dyn Write) -> CliResult<tuner::TuneReport> {
    let metric: Metric = args.metric.parse().map_err(CliError::from_core)?;
    Algorithm::param_defaults(&args.alg).map_err(CliError::from_core)?;
    if args.envs.is_empty() {
        return Err(CliError::Usage("the suite is empty; pass at least one --env".into()));
    }
    let suite = args
        .envs
        .iter()
        .map(|raw| {
            let (name, kwargs) = parse_suite_entry(raw)?;
            build_registry_env(&name, &kwargs)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let settings = TuneSettings {
        metric,
        n_trials: args.n_trials,
        timeout: args.timeout,
        seed: args.seed,
        solve: SolveSettings {
            max_iter: args.settings.max_iter,
            atol: args.settings.atol,
            rtol: args.settings.rtol,
            record_every: 1,
        },
    };

    let mut write_error = None;
    let report = tuner::tune_with_observer(&args.alg, &suite, None, &settings, |trial| {
        if write_error.is_some() {
            return;
        }
        let config = serde_json::to_string(&trial.config).expect("serializable");
        write_error = writeln!(
            out,
            "trial {:>3}  score {}  tie_break {}  {:.3}s  {}",
            trial.index, trial.score.value, trial.score.tie_break, trial.wall_time_s, config
        )
        .and_then(|_| out.flush())
        .err();
    });
    if let Some(e) = write_error {
        return Err(io(e));
    }
    let report = report.map_err(CliError::from_core)?;
    writeln!(
        out,
        "best trial {}  score {}  {}",
        report.best_index,
        report.best_score.value,
        serde_json::to_string(&report.best_config).expect("serializable")
    )
    .map_err(io)?;
    if let Some(path) = &args.output {
        record::write_json(path, &report)?;
    }
    Ok(report)
}

pub fn cmd_dump_env(args: &DumpEnvArgs, out: &mut dyn Write) -> CliResult<()> {
    let (env, _) = resolve_env(&args.env)?;
    let file = TabularEnvFile::snapshot_uniform(&env)?;
    tabular::write_tabular_env(&args.output, &file)?;
    writeln!(out, "wrote {}", args.output.display()).map_err(io)
}
