//! Fixed-step wallet/threshold simulator.
//!
//! Within a step the order is: top-ups, enable signals, candidate actuation, then the
//! spend for the energy drawn during the step. The balance recorded for step `t` is the
//! balance carried into `t + 1` before that step's top-up.
//!
//! With [`ShedGuard::Protective`] a step whose candidate actuation would leave the real
//! wallet at or below zero is shed entirely. This mirrors the optimizer's lookahead
//! constraint on the next-step real enable signal; the exact behaviour at the overdraw
//! boundary is a modelling choice of this crate (all loads are shed, none partially).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{LoadId, LoadTrace, RechargeSchedule, Tariff, TimeGrid, BALANCE_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WalletState {
    pub real: f64,
    #[serde(rename = "virtual")]
    pub virtual_: f64,
}

impl WalletState {
    pub fn new(real: f64, virtual_: f64) -> Self {
        WalletState { real, virtual_ }
    }
}

/// Dollar thresholds per load and day, compared against the virtual wallet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    pub load_ids: Vec<LoadId>,
    /// `values[k][day]`.
    pub values: Vec<Vec<f64>>,
}

impl ThresholdPlan {
    pub fn uniform(load_ids: Vec<LoadId>, num_days: usize, value: f64) -> Self {
        let values = vec![vec![value; num_days]; load_ids.len()];
        ThresholdPlan { load_ids, values }
    }

    /// One constant threshold per load for every day.
    pub fn per_load(load_ids: Vec<LoadId>, num_days: usize, per_load: &[f64]) -> Self {
        assert_eq!(load_ids.len(), per_load.len());
        let values = per_load.iter().map(|&v| vec![v; num_days]).collect();
        ThresholdPlan { load_ids, values }
    }

    pub fn num_loads(&self) -> usize {
        self.load_ids.len()
    }

    pub fn num_days(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn get(&self, load: usize, day: usize) -> f64 {
        self.values[load][day]
    }

    pub fn set(&mut self, load: usize, day: usize, value: f64) {
        self.values[load][day] = value;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShedGuard {
    /// Shed every load for a step that would otherwise overdraw the real wallet.
    Protective,
    /// No energy manager: loads run while the real wallet is positive.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Real balance after this step's spend.
    pub z: f64,
    /// Virtual balance after this step's spend.
    pub x: f64,
    pub enables_virtual: Vec<bool>,
    pub enables_real: bool,
    pub actuation: Vec<bool>,
    pub shed_all: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub load_ids: Vec<LoadId>,
    pub records: Vec<StepRecord>,
    pub final_state: WalletState,
    /// Inclusive `(start_step, end_step)` runs with a nonpositive real balance.
    pub disconnections: Vec<(usize, usize)>,
    pub energy_served_kwh: Vec<f64>,
}

impl SimulationResult {
    /// `a[k][t]`.
    pub fn actuation_matrix(&self) -> Vec<Vec<bool>> {
        (0..self.load_ids.len())
            .map(|k| self.records.iter().map(|r| r.actuation[k]).collect())
            .collect()
    }

    pub fn shed_steps(&self) -> usize {
        self.records.iter().filter(|r| r.shed_all).count()
    }

    /// Writes the per-step ledger as CSV: `t,z,x,shed_all,a_<load>...,ux_<load>...`.
    pub fn write_ledger<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "z".into(), "x".into(), "shed_all".into()];
        header.extend(self.load_ids.iter().map(|id| format!("a_{id}")));
        header.extend(self.load_ids.iter().map(|id| format!("ux_{id}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.t.to_string(),
                r.z.to_string(),
                r.x.to_string(),
                u8::from(r.shed_all).to_string(),
            ];
            row.extend(r.actuation.iter().map(|&a| u8::from(a).to_string()));
            row.extend(r.enables_virtual.iter().map(|&u| u8::from(u).to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("ledger", e))?;
        Ok(())
    }
}

/// Virtual enable: on iff the virtual balance is at or above the threshold.
///
/// Balances strictly inside `(threshold - eps, threshold)` have no valid indicator in the
/// big-M model; here they read as disabled.
pub fn virtual_enable(x: f64, threshold: f64, eps: f64) -> bool {
    debug_assert!(eps > 0.0);
    x >= threshold
}

/// Real enable: on iff the real balance is positive.
pub fn real_enable(z: f64) -> bool {
    z > BALANCE_TOL
}

/// Everything a simulation reads besides the plan and the wallet state.
#[derive(Debug, Clone, Copy)]
pub struct SimInputs<'a> {
    pub traces: &'a [LoadTrace],
    pub tariff: &'a Tariff,
    pub recharges: &'a RechargeSchedule,
    pub grid: TimeGrid,
    pub eps: f64,
    pub guard: ShedGuard,
}

impl SimInputs<'_> {
    pub fn validate(&self, plan: &ThresholdPlan) -> Result<()> {
        let n = self.grid.total_steps;
        if self.traces.len() != plan.num_loads() {
            return Err(Error::validation(format!(
                "plan covers {} loads, traces cover {}",
                plan.num_loads(),
                self.traces.len()
            )));
        }
        for (tr, id) in self.traces.iter().zip(&plan.load_ids) {
            if &tr.load_id != id {
                return Err(Error::validation(format!(
                    "trace `{}` does not line up with plan load `{id}`",
                    tr.load_id
                )));
            }
            if tr.len() != n {
                return Err(Error::validation(format!(
                    "trace `{}` has {} steps, grid has {n}",
                    tr.load_id,
                    tr.len()
                )));
            }
        }
        if plan.num_days() < self.grid.num_days {
            return Err(Error::validation(format!(
                "plan covers {} days, grid has {}",
                plan.num_days(),
                self.grid.num_days
            )));
        }
        if self.tariff.rate_per_wh.len() != n {
            return Err(Error::validation("tariff length does not match grid"));
        }
        if self.recharges.num_days() != self.grid.num_days {
            return Err(Error::validation("recharge schedule does not match grid"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::validation("eps must be positive"));
        }
        Ok(())
    }
}

/// Advances the wallets through step `t`.
pub fn step(
    state: WalletState,
    t: usize,
    plan: &ThresholdPlan,
    inputs: &SimInputs<'_>,
) -> (WalletState, StepRecord) {
    let grid = &inputs.grid;
    let day = grid.day_of(t);
    let z = state.real + inputs.recharges.real_at(grid, t);
    let x = state.virtual_ + inputs.recharges.virtual_at(grid, t);

    let enables_real = real_enable(z);
    let enables_virtual: Vec<bool> = (0..plan.num_loads())
        .map(|k| virtual_enable(x, plan.get(k, day), inputs.eps))
        .collect();
    let mut actuation: Vec<bool> = inputs
        .traces
        .iter()
        .zip(&enables_virtual)
        .map(|(tr, &ux)| tr.demand[t] && ux && enables_real)
        .collect();

    let price = inputs.tariff.rate(t) * grid.step_hours;
    let mut spend = step_spend(inputs.traces, &actuation, t, price);
    let mut shed_all = false;
    if inputs.guard == ShedGuard::Protective && spend > 0.0 && !real_enable(z - spend) {
        shed_all = true;
        actuation.iter_mut().for_each(|a| *a = false);
        spend = 0.0;
    }

    let next = WalletState::new(z - spend, x - spend);
    let record = StepRecord {
        t,
        z: next.real,
        x: next.virtual_,
        enables_virtual,
        enables_real,
        actuation,
        shed_all,
    };
    (next, record)
}

fn step_spend(traces: &[LoadTrace], actuation: &[bool], t: usize, price: f64) -> f64 {
    let watts: f64 = traces
        .iter()
        .zip(actuation)
        .filter(|(_, &a)| a)
        .map(|(tr, _)| tr.power[t])
        .sum();
    price * watts
}

/// Resumable simulation, advanced one step or one day at a time.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    inputs: SimInputs<'a>,
    state: WalletState,
    records: Vec<StepRecord>,
}

impl<'a> Simulation<'a> {
    pub fn new(inputs: SimInputs<'a>, initial: WalletState) -> Self {
        Simulation {
            inputs,
            state: initial,
            records: Vec::with_capacity(inputs.grid.total_steps),
        }
    }

    pub fn state(&self) -> WalletState {
        self.state
    }

    pub fn next_step(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn advance_to(&mut self, end: usize, plan: &ThresholdPlan) {
        let end = end.min(self.inputs.grid.total_steps);
        for t in self.next_step()..end {
            let (next, record) = step(self.state, t, plan, &self.inputs);
            self.state = next;
            self.records.push(record);
        }
    }

    pub fn finish(self) -> SimulationResult {
        let grid = self.inputs.grid;
        let energy_served_kwh = self
            .inputs
            .traces
            .iter()
            .enumerate()
            .map(|(k, tr)| {
                let wh: f64 = self
                    .records
                    .iter()
                    .filter(|r| r.actuation[k])
                    .map(|r| tr.power[r.t])
                    .sum::<f64>()
                    * grid.step_hours;
                wh / 1000.0
            })
            .collect();
        SimulationResult {
            load_ids: self.inputs.traces.iter().map(|t| t.load_id.clone()).collect(),
            disconnections: disconnection_runs(&self.records),
            final_state: self.state,
            records: self.records,
            energy_served_kwh,
        }
    }
}

pub fn simulate(
    plan: &ThresholdPlan,
    inputs: SimInputs<'_>,
    initial: WalletState,
) -> Result<SimulationResult> {
    inputs.validate(plan)?;
    let mut sim = Simulation::new(inputs, initial);
    sim.advance_to(inputs.grid.total_steps, plan);
    Ok(sim.finish())
}

/// Maximal runs of nonpositive real balance that follow a positive-balance step.
pub fn disconnection_runs(records: &[StepRecord]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut prev_positive = false;
    let mut open: Option<usize> = None;
    for r in records {
        let positive = real_enable(r.z);
        match (positive, open) {
            (false, None) if prev_positive => open = Some(r.t),
            (true, Some(start)) => {
                runs.push((start, r.t - 1));
                open = None;
            }
            _ => {}
        }
        prev_positive = positive;
    }
    if let (Some(start), Some(last)) = (open, records.last()) {
        runs.push((start, last.t));
    }
    runs
}
