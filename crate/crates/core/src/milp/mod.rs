//! Threshold-selection problem for one optimization window.
//!
//! The window model has binary actuation, virtual-enable and real-enable indicators tied
//! to the wallet balances through big-M constraints, with one free threshold per load
//! and day. [`solve`] exploits the structure of that model instead of handing it to a
//! generic MILP engine: once the actuation matrix is fixed the balances follow from a
//! linear recurrence, and the thresholds reduce to per-day feasibility intervals.

mod feasibility;
mod oracle;
mod score;
mod solver;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_loads, LoadSpec, LoadTrace, PriorityFactors, RechargeSchedule, Tariff, TimeGrid,
};
use crate::error::{Error, Result};
use crate::simkernel::{real_enable, virtual_enable, ThresholdPlan, WalletState};

pub use feasibility::{
    check_feasible, threshold_feasible, Constraint, FeasibilityReport, Infeasible, Violation,
};
pub use oracle::{brute_force, toy_instance, ORACLE_CELL_CAP};
pub use score::ExactScorer;
pub use solver::{solve, Solution, SolveStats, Solver, SolverOptions};

/// One optimization window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    pub grid: TimeGrid,
    pub loads: Vec<LoadSpec>,
    /// `power[k][t]` in watts.
    pub power: Vec<Vec<f64>>,
    /// `demand[k][t]`.
    pub demand: Vec<Vec<bool>>,
    /// Dollars per watt-hour, per step.
    pub rate_per_wh: Vec<f64>,
    /// Real-wallet top-up per day of the window.
    pub real_recharge: Vec<f64>,
    /// Virtual-wallet top-up per day of the window.
    pub virtual_recharge: Vec<f64>,
    /// Balances carried in before the window's first top-up.
    pub initial: WalletState,
    pub gamma: PriorityFactors,
    pub eps: f64,
    pub big_m: f64,
    pub big_m_neg: f64,
}

impl ModelInstance {
    /// Builds a window from traces already cut to `grid`.
    pub fn new(
        grid: TimeGrid,
        loads: Vec<LoadSpec>,
        traces: &[LoadTrace],
        tariff: &Tariff,
        recharges: &RechargeSchedule,
        initial: WalletState,
        eps: f64,
    ) -> Result<Self> {
        validate_loads(&loads)?;
        if traces.len() != loads.len() {
            return Err(Error::validation("one trace per load required"));
        }
        for (load, trace) in loads.iter().zip(traces) {
            if load.id != trace.load_id {
                return Err(Error::validation(format!(
                    "trace `{}` does not line up with load `{}`",
                    trace.load_id, load.id
                )));
            }
        }
        let gamma = PriorityFactors::for_loads(&loads)?;
        let mut inst = ModelInstance {
            grid,
            loads,
            power: traces.iter().map(|t| t.power.clone()).collect(),
            demand: traces.iter().map(|t| t.demand.clone()).collect(),
            rate_per_wh: tariff.rate_per_wh.clone(),
            real_recharge: recharges.real.clone(),
            virtual_recharge: recharges.virtual_.clone(),
            initial,
            gamma,
            eps,
            big_m: 0.0,
            big_m_neg: 0.0,
        };
        let (m_pos, m_neg) = compute_big_m(&inst);
        inst.big_m = m_pos;
        inst.big_m_neg = m_neg;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.total_steps;
        let k = self.loads.len();
        if self.power.len() != k || self.demand.len() != k {
            return Err(Error::validation("power/demand rows must match loads"));
        }
        for (row, drow) in self.power.iter().zip(&self.demand) {
            if row.len() != n || drow.len() != n {
                return Err(Error::validation("power/demand rows must cover the window"));
            }
            for (&p, &d) in row.iter().zip(drow) {
                if !(p >= 0.0) || d != (p > 0.0) {
                    return Err(Error::validation(
                        "demand must be set exactly where power is positive",
                    ));
                }
            }
        }
        if self.rate_per_wh.len() != n || self.rate_per_wh.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::validation("tariff must be positive on every step"));
        }
        let days = self.grid.num_days;
        if self.real_recharge.len() != days || self.virtual_recharge.len() != days {
            return Err(Error::validation("recharges must be given per window day"));
        }
        if self
            .real_recharge
            .iter()
            .chain(&self.virtual_recharge)
            .any(|a| !(*a >= 0.0))
        {
            return Err(Error::validation("recharges must be nonnegative"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::validation("eps must be positive"));
        }
        if !(self.big_m > 0.0) || self.big_m_neg > -self.big_m {
            return Err(Error::validation("big-M constants must satisfy m <= -M < 0"));
        }
        Ok(())
    }

    pub fn num_loads(&self) -> usize {
        self.loads.len()
    }

    pub fn num_steps(&self) -> usize {
        self.grid.total_steps
    }

    /// Price of one watt over step `t`.
    pub(crate) fn price(&self, t: usize) -> f64 {
        self.rate_per_wh[t] * self.grid.step_hours
    }

    pub(crate) fn real_recharge_at(&self, t: usize) -> f64 {
        if self.grid.is_day_start(t) {
            self.real_recharge[self.grid.day_of(t)]
        } else {
            0.0
        }
    }

    pub(crate) fn virtual_recharge_at(&self, t: usize) -> f64 {
        if self.grid.is_day_start(t) {
            self.virtual_recharge[self.grid.day_of(t)]
        } else {
            0.0
        }
    }

    pub fn demanded_steps(&self, load: usize) -> usize {
        self.demand[load].iter().filter(|&&d| d).count()
    }

    pub fn load_ids(&self) -> Vec<String> {
        self.loads.iter().map(|l| l.id.clone()).collect()
    }

    /// Writes the instance as a TOML document.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let inst: ModelInstance = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }
}

/// `M = sum Z + sum X + alpha_max * dT * sum P + |z0| + |x0| + 1`, `m = -M`.
///
/// Every reachable balance, and every difference between a balance and a threshold
/// picked inside its feasibility interval, stays below `M - 1` in magnitude.
pub fn compute_big_m(inst: &ModelInstance) -> (f64, f64) {
    let recharges: f64 = inst.real_recharge.iter().sum::<f64>() + inst.virtual_recharge.iter().sum::<f64>();
    let alpha_max = inst.rate_per_wh.iter().copied().fold(0.0, f64::max);
    let energy_wh: f64 = inst.power.iter().flatten().sum::<f64>() * inst.grid.step_hours;
    let carried = inst.initial.real.abs() + inst.initial.virtual_.abs();
    let m = recharges + alpha_max * energy_wh + carried + 1.0;
    (m, -m)
}

/// Wallet trajectories implied by a fixed actuation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Balances {
    /// Real balance at step `t` after its top-up, before its spend.
    pub real: Vec<f64>,
    /// Virtual balance at step `t` after its top-up, before its spend.
    #[serde(rename = "virtual")]
    pub virtual_: Vec<f64>,
    /// Real balance carried out of step `t`.
    pub real_end: Vec<f64>,
    pub virtual_end: Vec<f64>,
    pub spend: Vec<f64>,
}

/// Forward recurrence of both wallets under `actuation[k][t]`.
pub fn balances_from_actuation(inst: &ModelInstance, actuation: &[Vec<bool>]) -> Balances {
    let n = inst.num_steps();
    let mut b = Balances {
        real: Vec::with_capacity(n),
        virtual_: Vec::with_capacity(n),
        real_end: Vec::with_capacity(n),
        virtual_end: Vec::with_capacity(n),
        spend: Vec::with_capacity(n),
    };
    let mut z = inst.initial.real;
    let mut x = inst.initial.virtual_;
    for t in 0..n {
        z += inst.real_recharge_at(t);
        x += inst.virtual_recharge_at(t);
        b.real.push(z);
        b.virtual_.push(x);
        let watts: f64 = (0..inst.num_loads())
            .filter(|&k| actuation[k][t])
            .map(|k| inst.power[k][t])
            .sum();
        let spend = inst.price(t) * watts;
        z -= spend;
        x -= spend;
        b.real_end.push(z);
        b.virtual_end.push(x);
        b.spend.push(spend);
    }
    b
}

/// A complete solution of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `actuation[k][t]`.
    pub actuation: Vec<Vec<bool>>,
    /// `enables_virtual[k][t]`.
    pub enables_virtual: Vec<Vec<bool>>,
    /// Real enable per step; identical for every load.
    pub enables_real: Vec<bool>,
    /// Real enable of the balance carried into the next step (the overdraw lookahead).
    pub enables_real_next: Vec<bool>,
    pub balances: Balances,
    pub thresholds: ThresholdPlan,
    pub objective: f64,
    pub optimal: bool,
}

impl Assignment {
    /// Derives every indicator from an actuation matrix and a threshold plan.
    pub fn from_parts(
        inst: &ModelInstance,
        actuation: Vec<Vec<bool>>,
        thresholds: ThresholdPlan,
        objective: f64,
    ) -> Self {
        let balances = balances_from_actuation(inst, &actuation);
        let enables_real = balances.real.iter().map(|&z| real_enable(z)).collect();
        let enables_real_next = balances.real_end.iter().map(|&z| real_enable(z)).collect();
        let enables_virtual = (0..inst.num_loads())
            .map(|k| {
                (0..inst.num_steps())
                    .map(|t| {
                        let thr = thresholds.get(k, inst.grid.day_of(t));
                        virtual_enable(balances.virtual_[t], thr, inst.eps)
                    })
                    .collect()
            })
            .collect();
        Assignment {
            actuation,
            enables_virtual,
            enables_real,
            enables_real_next,
            balances,
            thresholds,
            objective,
            optimal: true,
        }
    }

    pub fn served_steps(&self) -> Vec<usize> {
        self.actuation
            .iter()
            .map(|row| row.iter().filter(|&&a| a).count())
            .collect()
    }
}
