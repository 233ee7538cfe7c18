//! Core value types shared by the simulator, the optimizer and the experiment driver.
//!
//! Money is carried as `f64` dollars. Every comparison of a balance against zero goes
//! through [`BALANCE_TOL`] so that spends which land exactly on the balance are treated
//! as exhausting it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type LoadId = String;

/// Tolerance (dollars) for comparing balances against zero.
pub const BALANCE_TOL: f64 = 1e-9;

/// Default indicator margin for threshold comparisons, in dollars.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub id: LoadId,
    pub name: String,
    /// Position in the user's priority order, 1 = most important.
    pub priority_rank: u32,
    /// Rated power in watts; informational only.
    #[serde(default)]
    pub max_power_w: f64,
}

impl LoadSpec {
    pub fn new(id: impl Into<String>, name: impl Into<String>, priority_rank: u32) -> Self {
        LoadSpec {
            id: id.into(),
            name: name.into(),
            priority_rank,
            max_power_w: 0.0,
        }
    }

    pub fn with_max_power(mut self, watts: f64) -> Self {
        self.max_power_w = watts;
        self
    }
}

/// Checks that a load set has unique ids and ranks forming a permutation of `1..=K`.
pub fn validate_loads(loads: &[LoadSpec]) -> Result<()> {
    if loads.is_empty() {
        return Err(Error::validation("load set is empty"));
    }
    let mut ids = BTreeSet::new();
    for load in loads {
        if !ids.insert(load.id.as_str()) {
            return Err(Error::validation(format!("duplicate load id `{}`", load.id)));
        }
    }
    let ranks: BTreeMap<LoadId, u32> = loads.iter().map(|l| (l.id.clone(), l.priority_rank)).collect();
    check_ranks(&ranks)
}

fn check_ranks(ranks: &BTreeMap<LoadId, u32>) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::validation("priority ranks are empty"));
    }
    let mut seen = BTreeSet::new();
    for (id, &rank) in ranks {
        if rank == 0 {
            return Err(Error::validation(format!(
                "load `{id}` has rank 0; ranks start at 1"
            )));
        }
        if !seen.insert(rank) {
            return Err(Error::validation(format!(
                "duplicate priority rank {rank} (load `{id}`)"
            )));
        }
    }
    let k = ranks.len() as u32;
    if let Some(&max) = seen.iter().next_back() {
        if max > k {
            return Err(Error::validation(format!(
                "priority ranks must be a permutation of 1..={k}, found rank {max}"
            )));
        }
    }
    Ok(())
}

/// Per-appliance power series on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadTrace {
    pub load_id: LoadId,
    /// Mean power in watts for each step.
    pub power: Vec<f64>,
    /// `demand[t]` is set exactly when `power[t] > 0`.
    pub demand: Vec<bool>,
}

impl LoadTrace {
    pub fn from_power(load_id: impl Into<String>, power: Vec<f64>) -> Result<Self> {
        let load_id = load_id.into();
        if let Some((t, p)) = power
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::validation(format!(
                "load `{load_id}` has invalid power {p} at step {t}"
            )));
        }
        let demand = power.iter().map(|&p| p > 0.0).collect();
        Ok(LoadTrace {
            load_id,
            power,
            demand,
        })
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn demanded_steps(&self) -> usize {
        self.demand.iter().filter(|&&d| d).count()
    }

    /// Energy over the whole trace in kWh.
    pub fn energy_kwh(&self, grid: &TimeGrid) -> f64 {
        self.power.iter().sum::<f64>() * grid.step_hours / 1000.0
    }

    pub fn max_power(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    pub fn slice(&self, start: usize, end: usize) -> LoadTrace {
        LoadTrace {
            load_id: self.load_id.clone(),
            power: self.power[start..end].to_vec(),
            demand: self.demand[start..end].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step_minutes: u32,
    pub step_hours: f64,
    pub steps_per_day: usize,
    pub num_days: usize,
    pub total_steps: usize,
}

pub fn build_time_grid(step_minutes: u32, num_days: usize) -> Result<TimeGrid> {
    if step_minutes == 0 || 1440 % step_minutes != 0 {
        return Err(Error::validation(format!(
            "step of {step_minutes} minutes does not divide a day"
        )));
    }
    if num_days == 0 {
        return Err(Error::validation("grid needs at least one day"));
    }
    let steps_per_day = (1440 / step_minutes) as usize;
    Ok(TimeGrid {
        step_minutes,
        step_hours: f64::from(step_minutes) / 60.0,
        steps_per_day,
        num_days,
        total_steps: steps_per_day * num_days,
    })
}

impl TimeGrid {
    /// Same step length, different number of days.
    pub fn with_days(&self, num_days: usize) -> TimeGrid {
        TimeGrid {
            num_days,
            total_steps: self.steps_per_day * num_days,
            ..*self
        }
    }

    pub fn day_of(&self, t: usize) -> usize {
        t / self.steps_per_day
    }

    pub fn day_start(&self, day: usize) -> usize {
        day * self.steps_per_day
    }

    pub fn is_day_start(&self, t: usize) -> bool {
        t.is_multiple_of(self.steps_per_day)
    }

    pub fn day_steps(&self, day: usize) -> std::ops::Range<usize> {
        let start = self.day_start(day);
        start..start + self.steps_per_day
    }
}

/// Electricity price per step, in dollars per watt-hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub rate_per_wh: Vec<f64>,
}

impl Tariff {
    pub fn constant_per_kwh(rate_per_kwh: f64, steps: usize) -> Result<Self> {
        Tariff::new(vec![rate_per_kwh / 1000.0; steps])
    }

    pub fn new(rate_per_wh: Vec<f64>) -> Result<Self> {
        if let Some(r) = rate_per_wh.iter().find(|r| !(**r > 0.0) || !r.is_finite()) {
            return Err(Error::validation(format!("tariff rate {r} is not positive")));
        }
        Ok(Tariff { rate_per_wh })
    }

    pub fn rate(&self, t: usize) -> f64 {
        self.rate_per_wh[t]
    }

    pub fn max_rate(&self) -> f64 {
        self.rate_per_wh.iter().copied().fold(0.0, f64::max)
    }

    pub fn slice(&self, start: usize, end: usize) -> Tariff {
        Tariff {
            rate_per_wh: self.rate_per_wh[start..end].to_vec(),
        }
    }
}

/// Cost in dollars of running every load at its full demand.
pub fn full_demand_cost(traces: &[LoadTrace], tariff: &Tariff, grid: &TimeGrid) -> f64 {
    let mut cost = 0.0;
    for t in 0..grid.total_steps {
        let watts: f64 = traces.iter().map(|tr| tr.power[t]).sum();
        cost += tariff.rate(t) * grid.step_hours * watts;
    }
    cost
}

/// Real and virtual wallet top-ups, one entry per day.
///
/// Both wallets are only ever credited on the first step of a day, so the schedule is
/// stored per day rather than per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RechargeSchedule {
    pub real: Vec<f64>,
    #[serde(rename = "virtual")]
    pub virtual_: Vec<f64>,
}

impl RechargeSchedule {
    pub fn new(real: Vec<f64>, virtual_: Vec<f64>) -> Result<Self> {
        if real.len() != virtual_.len() {
            return Err(Error::validation(
                "real and virtual recharge schedules cover different numbers of days",
            ));
        }
        if let Some(a) = real
            .iter()
            .chain(virtual_.iter())
            .find(|a| !(**a >= 0.0) || !a.is_finite())
        {
            return Err(Error::validation(format!("recharge amount {a} is negative")));
        }
        Ok(RechargeSchedule { real, virtual_ })
    }

    pub fn empty(num_days: usize) -> Self {
        RechargeSchedule {
            real: vec![0.0; num_days],
            virtual_: vec![0.0; num_days],
        }
    }

    pub fn num_days(&self) -> usize {
        self.real.len()
    }

    pub fn real_at(&self, grid: &TimeGrid, t: usize) -> f64 {
        if grid.is_day_start(t) {
            self.real[grid.day_of(t)]
        } else {
            0.0
        }
    }

    pub fn virtual_at(&self, grid: &TimeGrid, t: usize) -> f64 {
        if grid.is_day_start(t) {
            self.virtual_[grid.day_of(t)]
        } else {
            0.0
        }
    }

    pub fn total_real(&self) -> f64 {
        self.real.iter().sum()
    }

    pub fn total_virtual(&self) -> f64 {
        self.virtual_.iter().sum()
    }

    pub fn slice_days(&self, start: usize, end: usize) -> RechargeSchedule {
        RechargeSchedule {
            real: self.real[start..end].to_vec(),
            virtual_: self.virtual_[start..end].to_vec(),
        }
    }

    /// Days on which the real wallet is topped up.
    pub fn real_days(&self) -> Vec<usize> {
        self.real
            .iter()
            .enumerate()
            .filter(|(_, a)| **a > 0.0)
            .map(|(d, _)| d)
            .collect()
    }
}

/// Normalised inverse-rank weights, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityFactors {
    pub gamma: BTreeMap<LoadId, f64>,
}

impl PriorityFactors {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.gamma.get(id).copied()
    }

    pub fn for_loads(loads: &[LoadSpec]) -> Result<Self> {
        let ranks = loads.iter().map(|l| (l.id.clone(), l.priority_rank)).collect();
        priority_factors(&ranks)
    }
}

/// `gamma_k = (1/rank_k) / sum_j (1/rank_j)`.
pub fn priority_factors(ranks: &BTreeMap<LoadId, u32>) -> Result<PriorityFactors> {
    check_ranks(ranks)?;
    let harmonic: f64 = ranks.values().map(|&r| 1.0 / f64::from(r)).sum();
    let gamma = ranks
        .iter()
        .map(|(id, &r)| (id.clone(), (1.0 / f64::from(r)) / harmonic))
        .collect();
    Ok(PriorityFactors { gamma })
}
