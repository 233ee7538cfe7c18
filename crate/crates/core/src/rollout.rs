//! Experiment driver: recharge schedules, single runs and parameter sweeps.
//!
//! The optimized policy re-solves every day over a window of `min(horizon, days left)`
//! days starting from the simulator's current balances, and applies only the first day's
//! thresholds. When the horizon covers the whole experiment it solves once and applies
//! the full plan.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    build_time_grid, full_demand_cost, validate_loads, LoadSpec, LoadTrace, PriorityFactors,
    RechargeSchedule, Tariff, TimeGrid, DEFAULT_EPS,
};
use crate::error::{Error, Result};
use crate::ingest::{load_traces, reference_profiles_for_days, synthesize_traces, SyntheticConfig};
use crate::metrics::MetricsReport;
use crate::milp::{Solver, SolverOptions};
use crate::policies::{baseline_plan, fixed_plan, optimized_plan, Forecast, PolicyKind};
use crate::simkernel::{simulate, SimInputs, Simulation, SimulationResult, ThresholdPlan, WalletState};

pub const MAX_RECHARGE_FRACTION: f64 = 1.5;
pub const MAX_RECHARGE_FREQUENCY: u32 = 28;

/// Where the load traces come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceSource {
    /// Built-in synthetic household.
    Reference,
    /// Synthetic loads from a profile document.
    Profiles { path: PathBuf },
    /// Raw trace file; every load in it needs a priority rank.
    Csv {
        path: PathBuf,
        priorities: BTreeMap<String, u32>,
    },
}

fn default_step_minutes() -> u32 {
    15
}
fn default_num_days() -> usize {
    30
}
fn default_rate() -> f64 {
    0.15
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_time_limit() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub policy: PolicyKind,
    /// Monthly top-up as a fraction of the full-demand cost.
    pub recharge_fraction: f64,
    /// Real top-ups per experiment.
    pub recharge_frequency: u32,
    #[serde(default = "default_step_minutes")]
    pub step_minutes: u32,
    #[serde(default = "default_num_days")]
    pub num_days: usize,
    /// Dollars per kWh.
    #[serde(default = "default_rate")]
    pub rate_per_kwh: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Offset added to synthetic profile seeds.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_time_limit")]
    pub solver_time_limit_s: f64,
    pub traces: TraceSource,
}

impl ExperimentConfig {
    pub fn new(policy: PolicyKind, recharge_fraction: f64, recharge_frequency: u32) -> Self {
        ExperimentConfig {
            policy,
            recharge_fraction,
            recharge_frequency,
            step_minutes: default_step_minutes(),
            num_days: default_num_days(),
            rate_per_kwh: default_rate(),
            eps: default_eps(),
            seed: 0,
            solver_time_limit_s: default_time_limit(),
            traces: TraceSource::Reference,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if !(self.recharge_fraction > 0.0 && self.recharge_fraction <= MAX_RECHARGE_FRACTION) {
            return Err(Error::Config(format!(
                "recharge fraction {} outside (0, {MAX_RECHARGE_FRACTION}]",
                self.recharge_fraction
            )));
        }
        if !(1..=MAX_RECHARGE_FREQUENCY).contains(&self.recharge_frequency) {
            return Err(Error::Config(format!(
                "recharge frequency {} outside 1..={MAX_RECHARGE_FREQUENCY}",
                self.recharge_frequency
            )));
        }
        if !(self.rate_per_kwh > 0.0) || !(self.eps > 0.0) || !(self.solver_time_limit_s > 0.0) {
            return Err(Error::Config("rate, eps and time limit must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Loads, traces and prices shared by every run over the same household.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub loads: Vec<LoadSpec>,
    pub traces: Vec<LoadTrace>,
    pub grid: TimeGrid,
    pub tariff: Tariff,
}

impl Scenario {
    pub fn new(loads: Vec<LoadSpec>, traces: Vec<LoadTrace>, grid: TimeGrid, tariff: Tariff) -> Result<Self> {
        validate_loads(&loads)?;
        if loads.len() != traces.len() || loads.iter().zip(&traces).any(|(l, t)| l.id != t.load_id) {
            return Err(Error::validation("loads and traces do not line up"));
        }
        if traces.iter().any(|t| t.len() != grid.total_steps) || tariff.rate_per_wh.len() != grid.total_steps
        {
            return Err(Error::validation("traces and tariff must cover the grid"));
        }
        Ok(Scenario {
            loads,
            traces,
            grid,
            tariff,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let grid = build_time_grid(cfg.step_minutes, cfg.num_days)?;
        let tariff = Tariff::constant_per_kwh(cfg.rate_per_kwh, grid.total_steps)?;
        let (loads, traces) = match &cfg.traces {
            TraceSource::Reference => synthetic(reference_profiles_for_days(cfg.num_days), cfg.seed, &grid)?,
            TraceSource::Profiles { path } => synthetic(SyntheticConfig::from_path(path)?, cfg.seed, &grid)?,
            TraceSource::Csv { path, priorities } => {
                let traces = load_traces(path, &grid)?;
                let loads = traces
                    .iter()
                    .map(|t| {
                        priorities
                            .get(&t.load_id)
                            .map(|&r| {
                                LoadSpec::new(t.load_id.clone(), t.load_id.clone(), r)
                                    .with_max_power(t.max_power())
                            })
                            .ok_or_else(|| {
                                Error::Config(format!("no priority given for load `{}`", t.load_id))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                if let Some(extra) = priorities
                    .keys()
                    .find(|k| !traces.iter().any(|t| &&t.load_id == k))
                {
                    return Err(Error::Config(format!(
                        "priority given for unknown load `{extra}`"
                    )));
                }
                (loads, traces)
            }
        };
        Scenario::new(loads, traces, grid, tariff)
    }

    pub fn full_cost(&self) -> f64 {
        full_demand_cost(&self.traces, &self.tariff, &self.grid)
    }
}

fn synthetic(cfg: SyntheticConfig, seed: u64, grid: &TimeGrid) -> Result<(Vec<LoadSpec>, Vec<LoadTrace>)> {
    let cfg = cfg.with_seed_offset(seed);
    Ok((cfg.load_specs(), synthesize_traces(&cfg.load, grid)?))
}

/// Equal real top-ups on days `floor(i * days / frequency)`, each split evenly into daily
/// virtual top-ups until the next real one.
pub fn build_recharge_schedule(
    fraction: f64,
    frequency: u32,
    num_days: usize,
    total_cost: f64,
) -> Result<RechargeSchedule> {
    if !(total_cost > 0.0) {
        return Err(Error::validation("full-demand cost must be positive"));
    }
    if !(fraction > 0.0) {
        return Err(Error::validation("recharge fraction must be positive"));
    }
    let freq = frequency as usize;
    if freq == 0 || freq > num_days {
        return Err(Error::validation(format!(
            "recharge frequency {frequency} must lie in 1..={num_days}"
        )));
    }
    let amount = fraction * total_cost / freq as f64;
    let days: Vec<usize> = (0..freq).map(|i| i * num_days / freq).collect();
    let mut real = vec![0.0; num_days];
    let mut virtual_ = vec![0.0; num_days];
    for (i, &d) in days.iter().enumerate() {
        let next = days.get(i + 1).copied().unwrap_or(num_days);
        real[d] = amount;
        let share = amount / (next - d) as f64;
        virtual_[d..next].iter_mut().for_each(|v| *v = share);
    }
    RechargeSchedule::new(real, virtual_)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayStats {
    pub day: usize,
    pub window_days: usize,
    pub objective: f64,
    pub optimal: bool,
    pub elapsed_ms: f64,
    pub labels_created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub full_cost: f64,
    pub recharges: RechargeSchedule,
    pub report: MetricsReport,
    pub day_stats: Vec<DayStats>,
    #[serde(skip)]
    pub result: Option<SimulationResult>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let scenario = Scenario::from_config(cfg)?;
    run_scenario(&scenario, cfg)
}

/// Runs one policy over a prepared scenario.
pub fn run_scenario(scn: &Scenario, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let grid = scn.grid;
    let full_cost = scn.full_cost();
    let recharges = build_recharge_schedule(
        cfg.recharge_fraction,
        cfg.recharge_frequency,
        grid.num_days,
        full_cost,
    )?;
    let inputs = SimInputs {
        traces: &scn.traces,
        tariff: &scn.tariff,
        recharges: &recharges,
        grid,
        eps: cfg.eps,
        guard: cfg.policy.guard(),
    };
    let ids: Vec<String> = scn.loads.iter().map(|l| l.id.clone()).collect();
    let mut day_stats = Vec::new();
    let result = match cfg.policy {
        PolicyKind::Baseline => simulate(&baseline_plan(ids, &grid), inputs, WalletState::default())?,
        PolicyKind::Fixed { beta } => {
            let plan = fixed_plan(&scn.loads, recharges.total_real(), beta, &grid)?;
            simulate(&plan, inputs, WalletState::default())?
        }
        PolicyKind::Optimal { horizon_days } => {
            let solver = Solver::new(SolverOptions {
                time_limit: Duration::from_secs_f64(cfg.solver_time_limit_s),
            });
            let forecast = Forecast {
                loads: &scn.loads,
                traces: &scn.traces,
                tariff: &scn.tariff,
                recharges: &recharges,
                grid,
                eps: cfg.eps,
            };
            run_rolling(inputs, &forecast, horizon_days, &solver, ids, &mut day_stats)?
        }
    };
    let gamma = PriorityFactors::for_loads(&scn.loads)?;
    let report = MetricsReport::build(&result, &scn.traces, &gamma, &grid)?;
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        full_cost,
        recharges,
        report,
        day_stats,
        result: Some(result),
    })
}

fn run_rolling(
    inputs: SimInputs<'_>,
    forecast: &Forecast<'_>,
    horizon_days: usize,
    solver: &Solver,
    ids: Vec<String>,
    day_stats: &mut Vec<DayStats>,
) -> Result<SimulationResult> {
    inputs.validate(&ThresholdPlan::uniform(ids.clone(), inputs.grid.num_days, 0.0))?;
    let grid = inputs.grid;
    let mut plan = ThresholdPlan::uniform(ids, grid.num_days, 0.0);
    let mut sim = Simulation::new(inputs, WalletState::default());
    let single = horizon_days >= grid.num_days;
    let mut day = 0;
    while day < grid.num_days {
        let sol = optimized_plan(day, sim.state(), horizon_days, forecast, solver)?;
        let asg = &sol.assignment;
        let window_days = asg.thresholds.num_days();
        let applied = if single { window_days } else { 1 };
        if !asg.optimal {
            log::warn!("day {day}: solver hit its time limit, using the best schedule found");
        }
        day_stats.push(DayStats {
            day,
            window_days,
            objective: asg.objective,
            optimal: asg.optimal,
            elapsed_ms: sol.stats.elapsed_ms,
            labels_created: sol.stats.labels_created,
        });
        for k in 0..plan.num_loads() {
            for d in 0..applied {
                plan.set(k, day + d, asg.thresholds.get(k, d));
            }
        }
        let start = grid.day_start(day);
        let end = grid.day_start(day + applied);
        sim.advance_to(end, &plan);
        for r in &sim.records()[start..end] {
            for (k, &a) in r.actuation.iter().enumerate() {
                if a != asg.actuation[k][r.t - start] {
                    return Err(Error::Consistency {
                        day,
                        message: format!(
                            "load `{}` at step {} was {} but the plan predicted {}",
                            plan.load_ids[k],
                            r.t,
                            if a { "on" } else { "off" },
                            if a { "off" } else { "on" }
                        ),
                    });
                }
            }
        }
        day += applied;
    }
    Ok(sim.finish())
}

/// One sweep cell; failures are kept as messages so the rest of the sweep still runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: String,
    pub recharge_fraction: f64,
    pub recharge_frequency: u32,
    pub psf: Option<f64>,
    pub total_energy_fraction: Option<f64>,
    pub disconnection_count: Option<usize>,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_outcome(cfg: &ExperimentConfig, outcome: Result<ExperimentOutcome>) -> Self {
        let mut row = SweepRow {
            policy: cfg.policy.name().to_string(),
            recharge_fraction: cfg.recharge_fraction,
            recharge_frequency: cfg.recharge_frequency,
            psf: None,
            total_energy_fraction: None,
            disconnection_count: None,
            error: None,
        };
        match outcome {
            Ok(o) => {
                row.psf = Some(o.report.psf);
                row.total_energy_fraction = Some(o.report.total_energy_fraction);
                row.disconnection_count = Some(o.report.disconnection_count);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }
}

/// Runs every config in parallel; rows come back in input order.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::Config("sweep needs at least one configuration".into()));
    }
    Ok(configs
        .par_iter()
        .map(|cfg| SweepRow::from_outcome(cfg, run_experiment(cfg)))
        .collect())
}

/// Like [`sweep`] over one prepared scenario.
pub fn sweep_scenario(scn: &Scenario, configs: &[ExperimentConfig]) -> Result<Vec<SweepRow>> {
    if configs.is_empty() {
        return Err(Error::Config("sweep needs at least one configuration".into()));
    }
    Ok(configs
        .par_iter()
        .map(|cfg| SweepRow::from_outcome(cfg, run_scenario(scn, cfg)))
        .collect())
}
