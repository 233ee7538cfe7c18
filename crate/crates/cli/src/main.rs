use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chrono::{NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use rationing_core::domain::build_time_grid;
use rationing_core::ingest::{
    reference_profiles_for_days, synthesize_traces, write_trace_csv, SyntheticConfig,
};
use rationing_core::milp::{brute_force, solve, toy_instance, ORACLE_CELL_CAP};
use rationing_core::policies::{PolicyKind, DEFAULT_BETA, DEFAULT_HORIZON_DAYS};
use rationing_core::rollout::{
    run_scenario, sweep_scenario, ExperimentConfig, Scenario, SweepRow, TraceSource,
};
use rationing_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rationing",
    version,
    about = "Threshold-based energy rationing for prepaid electricity"
)]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write a report.
    Simulate(SimulateArgs),
    /// Run a grid of experiments and write PSF and disconnection tables.
    Sweep(SweepArgs),
    /// Compare the solver against exhaustive enumeration on random toy windows.
    OracleCheck(OracleArgs),
    /// Write a synthetic trace file.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Clone)]
struct HouseholdArgs {
    /// Trace source: a `.csv` trace file or a `.toml` synthetic profile file.
    /// Defaults to the built-in reference household.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Priority ranks for a CSV trace, e.g. `A=2,B=4,C=3,D=1`.
    #[arg(long)]
    priorities: Option<String>,
    /// Seed offset for synthetic profiles.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Electricity rate in $/kWh.
    #[arg(long, default_value_t = 0.15)]
    rate: f64,
    #[arg(long, default_value_t = 15)]
    step_minutes: u32,
    #[arg(long, default_value_t = 30)]
    days: usize,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_HORIZON_DAYS)]
    horizon_days: usize,
    /// Per-solve time limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_limit: f64,
    /// Output root; each run gets its own subdirectory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment config file; replaces the experiment flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "optimal")]
    policy: String,
    /// Total recharge as a fraction of the full-demand cost.
    #[arg(long, default_value_t = 0.70)]
    amount: f64,
    /// Real recharges over the experiment.
    #[arg(long, default_value_t = 5)]
    frequency: u32,
    /// Also write the per-step ledger.
    #[arg(long)]
    ledger: bool,
    #[command(flatten)]
    household: HouseholdArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Recharge amounts in percent: `start:stop:step` or a list like `60,70,80`.
    #[arg(long, conflicts_with = "amount")]
    amounts: Option<String>,
    /// Single recharge amount as a fraction.
    #[arg(long)]
    amount: Option<f64>,
    /// Recharge frequencies: `start:stop:step` or a list.
    #[arg(long, conflicts_with = "frequency")]
    frequencies: Option<String>,
    #[arg(long)]
    frequency: Option<u32>,
    /// `all` or a comma-separated subset of baseline,fixed,optimal.
    #[arg(long, default_value = "all")]
    policies: String,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    household: HouseholdArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    loads: usize,
    /// Steps per instance, over all days.
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, default_value_t = 2)]
    days: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Where a mismatching instance is dumped.
    #[arg(long, default_value = ".")]
    dump_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Synthetic profile file; defaults to the reference household.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 15)]
    step_minutes: u32,
    #[arg(long, default_value_t = 30)]
    days: usize,
    /// Date of the first sample.
    #[arg(long, default_value = "2018-01-01")]
    start: NaiveDate,
    /// Trace CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Also write the profile document used.
    #[arg(long)]
    write_profiles: Option<PathBuf>,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            error: error.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Validation(_)
            | Error::Ingest { .. }
            | Error::Coverage { .. }
            | Error::Io { .. }
            | Error::Config(_)
            | Error::OracleCap { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            error,
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let raw_args: Vec<String> = std::env::args().collect();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a, &raw_args),
        Command::Sweep(a) => cmd_sweep(a, &raw_args),
        Command::OracleCheck(a) => cmd_oracle_check(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn parse_priorities(spec: &str) -> Result<BTreeMap<String, u32>, Failure> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (id, rank) = pair
                .split_once('=')
                .ok_or_else(|| Failure::config(anyhow::anyhow!("bad priority `{pair}`, expected ID=RANK")))?;
            let rank: u32 = rank
                .trim()
                .parse()
                .map_err(|_| Failure::config(anyhow::anyhow!("bad rank in `{pair}`")))?;
            Ok((id.trim().to_string(), rank))
        })
        .collect()
}

fn trace_source(h: &HouseholdArgs) -> Result<TraceSource, Failure> {
    let Some(path) = &h.trace else {
        if h.priorities.is_some() {
            return Err(Failure::config(anyhow::anyhow!(
                "--priorities needs a CSV --trace"
            )));
        }
        return Ok(TraceSource::Reference);
    };
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => Ok(TraceSource::Profiles { path: path.clone() }),
        Some("csv") => {
            let spec = h.priorities.as_deref().ok_or_else(|| {
                Failure::config(anyhow::anyhow!(
                    "CSV trace `{}` needs --priorities",
                    path.display()
                ))
            })?;
            Ok(TraceSource::Csv {
                path: path.clone(),
                priorities: parse_priorities(spec)?,
            })
        }
        _ => Err(Failure::config(anyhow::anyhow!(
            "trace `{}` must be a .csv trace or a .toml profile file",
            path.display()
        ))),
    }
}

fn policy_from(name: &str, h: &HouseholdArgs) -> Result<PolicyKind, Failure> {
    let policy = match PolicyKind::from_name(name)? {
        PolicyKind::Fixed { .. } => PolicyKind::Fixed { beta: h.beta },
        PolicyKind::Optimal { .. } => PolicyKind::Optimal {
            horizon_days: h.horizon_days,
        },
        p => p,
    };
    policy.validate()?;
    Ok(policy)
}

fn base_config(
    policy: PolicyKind,
    fraction: f64,
    frequency: u32,
    h: &HouseholdArgs,
) -> Result<ExperimentConfig, Failure> {
    Ok(ExperimentConfig {
        step_minutes: h.step_minutes,
        num_days: h.days,
        rate_per_kwh: h.rate,
        seed: h.seed,
        solver_time_limit_s: h.time_limit,
        traces: trace_source(h)?,
        ..ExperimentConfig::new(policy, fraction, frequency)
    })
}

#[derive(Debug, Serialize)]
struct Manifest {
    command_line: Vec<String>,
    config_hash: String,
    seed: u64,
    started_at: String,
    finished_at: String,
    version: String,
    outputs: Vec<String>,
}

fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Creates `<root>/<timestamp>-<hash prefix>`.
fn run_dir(root: &Path, hash: &str, started: &chrono::DateTime<Utc>) -> Result<PathBuf, Failure> {
    let dir = root.join(format!(
        "{}-{}",
        started.format("%Y%m%dT%H%M%S%.3fZ"),
        &hash[..12]
    ));
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory `{}`", dir.display()))
        .map_err(Failure::config)?;
    Ok(dir)
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(manifest).context("serializing manifest")?;
    fs::write(dir.join("manifest.json"), text).context("writing manifest.json")?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, raw: &[String]) -> CmdResult {
    let started = Utc::now();
    let cfg = match &a.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => {
            let policy = policy_from(&a.policy, &a.household)?;
            base_config(policy, a.amount, a.frequency, &a.household)?
        }
    };
    cfg.validate()?;
    let cfg_text = cfg.to_toml()?;
    let hash = config_hash(&cfg_text);
    let scenario = Scenario::from_config(&cfg)?;
    let outcome = run_scenario(&scenario, &cfg)?;

    let dir = run_dir(&a.household.out, &hash, &started)?;
    let mut outputs = vec![
        "config.toml".to_string(),
        "report.json".into(),
        "report.csv".into(),
    ];
    fs::write(dir.join("config.toml"), &cfg_text).context("writing config.toml")?;
    let full = serde_json::json!({
        "policy": cfg.policy.name(),
        "full_cost": outcome.full_cost,
        "recharges": outcome.recharges,
        "report": outcome.report,
        "day_stats": outcome.day_stats,
    });
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&full).context("serializing report")?,
    )
    .context("writing report.json")?;
    let csv_file = fs::File::create(dir.join("report.csv")).context("creating report.csv")?;
    outcome.report.write_csv(csv_file)?;
    if a.ledger {
        let f = fs::File::create(dir.join("ledger.csv")).context("creating ledger.csv")?;
        outcome.result.as_ref().expect("result kept").write_ledger(f)?;
        outputs.push("ledger.csv".into());
    }
    write_manifest(
        &dir,
        &Manifest {
            command_line: raw.to_vec(),
            config_hash: hash,
            seed: cfg.seed,
            started_at: started.to_rfc3339(),
            finished_at: Utc::now().to_rfc3339(),
            version: env!("CARGO_PKG_VERSION").into(),
            outputs,
        },
    )?;
    let r = &outcome.report;
    println!(
        "{}: psf {:.4}, energy {:.1}% of demand, {} disconnection(s)",
        cfg.policy.name(),
        r.psf,
        r.total_energy_fraction * 100.0,
        r.disconnection_count
    );
    println!("{}", dir.display());
    Ok(())
}

/// Parses `start:stop:step` or a comma list; rejects empty and repeated values.
fn parse_grid(spec: &str, what: &str) -> Result<Vec<f64>, Failure> {
    let bad = |msg: String| Failure::config(anyhow::anyhow!("{what}: {msg}"));
    let values: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number `{p}`")))
            })
            .collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad("expected start:stop:step".into()));
        };
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad(format!("empty range `{spec}`")));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| start + step * i as f64).collect()
    } else {
        spec.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number `{p}`")))
            })
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(bad("no values".into()));
    }
    let mut seen = BTreeSet::new();
    for v in &values {
        if !seen.insert(format!("{v:.9}")) {
            return Err(bad(format!("value {v} appears more than once")));
        }
    }
    Ok(values)
}

fn cmd_sweep(a: SweepArgs, raw: &[String]) -> CmdResult {
    let started = Utc::now();
    let fractions: Vec<f64> = match (&a.amounts, a.amount) {
        (Some(spec), _) => parse_grid(spec, "--amounts")?
            .into_iter()
            .map(|p| p / 100.0)
            .collect(),
        (None, Some(f)) => vec![f],
        (None, None) => vec![0.70],
    };
    let frequencies: Vec<u32> = match (&a.frequencies, a.frequency) {
        (Some(spec), _) => parse_grid(spec, "--frequencies")?
            .into_iter()
            .map(|f| {
                if f.fract() == 0.0 && f >= 1.0 {
                    Ok(f as u32)
                } else {
                    Err(Failure::config(anyhow::anyhow!(
                        "--frequencies: {f} is not a positive integer"
                    )))
                }
            })
            .collect::<Result<_, _>>()?,
        (None, Some(q)) => vec![q],
        (None, None) => vec![5],
    };
    let names: Vec<String> = if a.policies == "all" {
        vec!["baseline".into(), "fixed".into(), "optimal".into()]
    } else {
        a.policies.split(',').map(|s| s.trim().to_string()).collect()
    };
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        return Err(Failure::config(anyhow::anyhow!(
            "--policies lists a policy twice"
        )));
    }
    let policies: Vec<PolicyKind> = names
        .iter()
        .map(|n| policy_from(n, &a.household))
        .collect::<Result<_, _>>()?;

    let mut configs = Vec::new();
    for p in &policies {
        for &f in &fractions {
            for &q in &frequencies {
                let cfg = base_config(*p, f, q, &a.household)?;
                cfg.validate()?;
                configs.push(cfg);
            }
        }
    }
    let first = configs.first().expect("nonempty grid");
    let scenario = Scenario::from_config(first)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(Failure::config(anyhow::anyhow!("--jobs must be at least 1")));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("starting worker pool")?;
    let rows = pool.install(|| sweep_scenario(&scenario, &configs))?;

    let grid_text = configs
        .iter()
        .map(|c| c.to_toml())
        .collect::<Result<Vec<_>, _>>()?
        .join("\n");
    let hash = config_hash(&grid_text);
    let dir = run_dir(&a.household.out, &hash, &started)?;
    write_sweep_csv(&dir.join("sweep_psf.csv"), &rows, true)?;
    write_sweep_csv(&dir.join("sweep_disconnects.csv"), &rows, false)?;
    write_manifest(
        &dir,
        &Manifest {
            command_line: raw.to_vec(),
            config_hash: hash,
            seed: a.household.seed,
            started_at: started.to_rfc3339(),
            finished_at: Utc::now().to_rfc3339(),
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: vec!["sweep_psf.csv".into(), "sweep_disconnects.csv".into()],
        },
    )?;
    let failed: Vec<&SweepRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!(
            "warning: {} at {:.0}% / {} recharges failed: {}",
            r.policy,
            r.recharge_fraction * 100.0,
            r.recharge_frequency,
            r.error.as_deref().unwrap_or_default()
        );
    }
    println!("{} rows", rows.len());
    println!("{}", dir.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_RUNTIME,
            error: anyhow::anyhow!("{} of {} sweep rows failed", failed.len(), rows.len()),
        })
    }
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow], psf: bool) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating `{}`", path.display()))?;
    let header: &[&str] = if psf {
        &[
            "policy",
            "amount_pct",
            "frequency",
            "psf",
            "energy_fraction",
            "error",
        ]
    } else {
        &["policy", "amount_pct", "frequency", "disconnections", "error"]
    };
    w.write_record(header).context("writing sweep table")?;
    for r in rows {
        let amount = format!("{}", (r.recharge_fraction * 100.0 * 1e6).round() / 1e6);
        let freq = r.recharge_frequency.to_string();
        let err = r.error.clone().unwrap_or_default();
        let opt = |v: Option<String>| v.unwrap_or_default();
        let record = if psf {
            vec![
                r.policy.clone(),
                amount,
                freq,
                opt(r.psf.map(|v| v.to_string())),
                opt(r.total_energy_fraction.map(|v| v.to_string())),
                err,
            ]
        } else {
            vec![
                r.policy.clone(),
                amount,
                freq,
                opt(r.disconnection_count.map(|v| v.to_string())),
                err,
            ]
        };
        w.write_record(&record).context("writing sweep table")?;
    }
    w.flush().context("writing sweep table")?;
    Ok(())
}

fn cmd_oracle_check(a: OracleArgs) -> CmdResult {
    if a.n == 0 {
        return Err(Failure::config(anyhow::anyhow!("--n must be at least 1")));
    }
    let cells = a.loads * a.steps;
    if cells > ORACLE_CELL_CAP {
        return Err(Failure::config(anyhow::anyhow!(
            "{} loads x {} steps = {cells} cells exceeds the enumeration cap of {ORACLE_CELL_CAP}",
            a.loads,
            a.steps
        )));
    }
    for i in 0..a.n {
        let seed = a.seed.wrapping_add(i as u64);
        let inst = toy_instance(seed, a.loads, a.steps, a.days)?;
        let want = brute_force(&inst)?;
        let got = solve(&inst)?;
        if want.objective != got.objective {
            fs::create_dir_all(&a.dump_dir).context("creating dump directory")?;
            let path = a.dump_dir.join(format!("oracle_mismatch_seed{seed}.toml"));
            inst.dump(&path)?;
            println!("{i}/{} match", a.n);
            return Err(Failure {
                code: EXIT_MISMATCH,
                error: anyhow::anyhow!(
                    "seed {seed}: solver objective {} but enumeration finds {}; instance written to `{}`",
                    got.objective,
                    want.objective,
                    path.display()
                ),
            });
        }
    }
    println!("{}/{} match", a.n, a.n);
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CmdResult {
    let cfg = match &a.profiles {
        Some(p) => SyntheticConfig::from_path(p)?,
        None => reference_profiles_for_days(a.days),
    }
    .with_seed_offset(a.seed);
    let grid = build_time_grid(a.step_minutes, a.days)?;
    let traces = synthesize_traces(&cfg.load, &grid)?;
    let file = fs::File::create(&a.out)
        .with_context(|| format!("creating `{}`", a.out.display()))
        .map_err(Failure::config)?;
    write_trace_csv(&traces, &grid, a.start, std::io::BufWriter::new(file))?;
    if let Some(p) = &a.write_profiles {
        fs::write(p, cfg.to_toml()?).with_context(|| format!("writing `{}`", p.display()))?;
    }
    for (p, t) in cfg.load.iter().zip(&traces) {
        println!(
            "{} ({}): {:.2} kWh, rank {}",
            p.id,
            p.name,
            t.energy_kwh(&grid),
            p.priority
        );
    }
    Ok(())
}
