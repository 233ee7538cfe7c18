//! Exact solver for the window model.
//!
//! Two facts shrink the search space. First, the virtual wallet only gets topped up on
//! the first step of a day and otherwise only falls, so within a day a threshold
//! enables a load for a leading stretch of steps and disables it afterwards. A day-level
//! decision for one load is therefore the number of its demanded steps that get served,
//! counted from the start of the day (subject to the threshold interval being nonempty).
//! Second, the thresholds are free per day, so the only state a day passes to the next
//! is the real balance.
//!
//! The search walks days chronologically. Each day's candidate decisions are built load by
//! load (descending weight) and reduced to the cost/value Pareto front. Partial
//! schedules are labels `(real balance, value)`: dominated labels are dropped, and labels
//! whose value plus a fractional-knapsack bound on the remaining days cannot reach the
//! incumbent are pruned. Values are exact integers (see [`ExactScorer`]), so ties
//! are resolved deterministically: the highest value, then the largest leftover balance.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::BALANCE_TOL;
use crate::error::{Error, Result};
use crate::simkernel::real_enable;

use super::feasibility::threshold_feasible;
use super::{check_feasible, Assignment, ExactScorer, ModelInstance};

/// Largest per-day decision product enumerated when the fast merge does not apply.
const ENUMERATION_CAP: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub time_limit: Duration,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            time_limit: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub elapsed_ms: f64,
    pub optimal: bool,
    pub labels_created: u64,
    pub max_frontier: usize,
    pub day_options: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub assignment: Assignment,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Default)]
pub struct Solver {
    pub options: SolverOptions,
}

pub fn solve(inst: &ModelInstance) -> Result<Assignment> {
    Solver::default().solve(inst).map(|s| s.assignment)
}

#[derive(Debug, Clone)]
struct DayOption {
    cost: f64,
    units: u128,
    /// Demanded steps served per load, counted from the start of the day.
    served: Vec<usize>,
    /// Nonzero step spends in time order.
    spends: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Label {
    z: f64,
    units: u128,
    parent: u32,
    option: u32,
}

/// Demanded steps of one load on one day, with their costs.
#[derive(Debug, Clone, Default)]
struct LoadDay {
    steps: Vec<usize>,
    costs: Vec<f64>,
}

struct Bound {
    cum_cost: Vec<f64>,
    cum_units: Vec<f64>,
    unit_value: Vec<f64>,
    unit_cost: Vec<f64>,
}

impl Bound {
    fn new(mut items: Vec<(f64, f64)>) -> Self {
        // (units, cost), best value per dollar first
        items.sort_by(|a, b| (b.0 / b.1).total_cmp(&(a.0 / a.1)));
        let mut cum_cost = vec![0.0];
        let mut cum_units = vec![0.0];
        for (u, c) in &items {
            cum_cost.push(cum_cost.last().unwrap() + c);
            cum_units.push(cum_units.last().unwrap() + u);
        }
        Bound {
            cum_cost,
            cum_units,
            unit_value: items.iter().map(|i| i.0).collect(),
            unit_cost: items.iter().map(|i| i.1).collect(),
        }
    }

    fn eval(&self, budget: f64) -> f64 {
        if !(budget > 0.0) {
            return 0.0;
        }
        let i = self.cum_cost.partition_point(|&c| c <= budget) - 1;
        let mut v = self.cum_units[i];
        if i < self.unit_cost.len() {
            v += self.unit_value[i] * ((budget - self.cum_cost[i]) / self.unit_cost[i]);
        }
        // slack for summation rounding
        v * (1.0 + 1e-12) + 1e-6
    }
}

impl Solver {
    pub fn new(options: SolverOptions) -> Self {
        Solver { options }
    }

    pub fn solve(&self, inst: &ModelInstance) -> Result<Solution> {
        inst.validate()?;
        let started = Instant::now();
        let deadline = started + self.options.time_limit;
        let scorer = ExactScorer::new(inst)?;
        let grid = &inst.grid;
        let k_n = inst.num_loads();
        let days = grid.num_days;

        // branching order: descending weight, i.e. ascending rank
        let mut order: Vec<usize> = (0..k_n).collect();
        order.sort_by_key(|&k| (inst.loads[k].priority_rank, k));

        let load_days: Vec<Vec<LoadDay>> = (0..days)
            .map(|d| {
                (0..k_n)
                    .map(|k| {
                        let mut ld = LoadDay::default();
                        for t in grid.day_steps(d) {
                            if inst.demand[k][t] {
                                ld.steps.push(t);
                                ld.costs.push(inst.price(t) * inst.power[k][t]);
                            }
                        }
                        ld
                    })
                    .collect()
            })
            .collect();

        let mut stats = SolveStats::default();
        let mut day_options = Vec::with_capacity(days);
        for d in 0..days {
            let opts = day_options_for(inst, &scorer, &load_days[d], &order, d)?;
            stats.day_options.push(opts.len());
            day_options.push(opts);
        }

        // bounds[d] covers days d.. ; future_recharge[d] = sum of real top-ups on days d..
        let mut bounds = Vec::with_capacity(days + 1);
        for d in 0..=days {
            let mut items = Vec::new();
            for ld_day in &load_days[d..] {
                for (k, ld) in ld_day.iter().enumerate() {
                    let w = scorer.step_value(k) as f64;
                    items.extend(ld.costs.iter().map(|&c| (w, c)));
                }
            }
            bounds.push(Bound::new(items));
        }
        let mut future_recharge = vec![0.0; days + 1];
        for d in (0..days).rev() {
            future_recharge[d] = future_recharge[d + 1] + inst.real_recharge[d];
        }

        let mut layers: Vec<Vec<Label>> = vec![vec![Label {
            z: inst.initial.real,
            units: scorer.constant(),
            parent: u32::MAX,
            option: u32::MAX,
        }]];
        let mut incumbent = Incumbent::default();
        incumbent.consider(0, 0, &layers[0], &day_options, inst);

        let mut timed_out = false;
        let mut counter: u64 = 0;
        'days: for d in 0..days {
            let opts = &day_options[d];
            let recharge = inst.real_recharge[d];
            let bound = &bounds[d + 1];
            let cutoff = incumbent.units as f64 - 0.5;
            let mut next: Vec<Label> = Vec::new();
            for (li, lab) in layers[d].iter().enumerate() {
                let z_start = lab.z + recharge;
                for (oi, opt) in opts.iter().enumerate() {
                    counter += 1;
                    if counter.is_multiple_of(4096) && Instant::now() > deadline {
                        timed_out = true;
                        break 'days;
                    }
                    let z_end = if opt.spends.is_empty() {
                        z_start
                    } else {
                        if !real_enable(z_start) || z_start - opt.cost < BALANCE_TOL - 1e-7 {
                            // options are sorted by cost
                            break;
                        }
                        let mut z = z_start;
                        for s in &opt.spends {
                            z -= s;
                        }
                        if !real_enable(z) {
                            continue;
                        }
                        z
                    };
                    let units = lab.units + opt.units;
                    let ub = units as f64 + bound.eval(z_end + future_recharge[d + 1]);
                    if ub < cutoff {
                        continue;
                    }
                    next.push(Label {
                        z: z_end,
                        units,
                        parent: li as u32,
                        option: oi as u32,
                    });
                }
            }
            stats.labels_created += next.len() as u64;
            let mut next = pareto(next);
            incumbent.consider(d + 1, d + 1, &next, &day_options, inst);
            let cutoff = incumbent.units as f64 - 0.5;
            next.retain(|l| l.units as f64 + bound.eval(l.z + future_recharge[d + 1]) >= cutoff);
            stats.max_frontier = stats.max_frontier.max(next.len());
            layers.push(next);
        }

        let choices: Vec<usize> = if timed_out {
            incumbent.path(&layers)
        } else {
            let last = layers.last().expect("at least one layer");
            let (best_idx, _) = last
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    a.1.units
                        .cmp(&b.1.units)
                        .then(a.1.z.total_cmp(&b.1.z))
                        .then(b.0.cmp(&a.0))
                })
                .ok_or_else(|| Error::Solver("no feasible schedule".into()))?;
            trace_back(&layers, days, best_idx)
        };

        let mut actuation = vec![vec![false; grid.total_steps]; k_n];
        let mut served = vec![0usize; k_n];
        for (d, &oi) in choices.iter().enumerate() {
            let opt = &day_options[d][oi];
            for k in 0..k_n {
                for &t in &load_days[d][k].steps[..opt.served[k]] {
                    actuation[k][t] = true;
                }
                served[k] += opt.served[k];
            }
        }
        let plan = threshold_feasible(inst, &actuation)
            .map_err(|e| Error::Solver(format!("reconstructed schedule is infeasible: {e}")))?;
        let objective = scorer.psf(scorer.units(&served));
        let mut assignment = Assignment::from_parts(inst, actuation, plan, objective);
        assignment.optimal = !timed_out;
        let report = check_feasible(inst, &assignment);
        if let Some(v) = report.violation {
            return Err(Error::Solver(format!("solution fails constraint check: {v}")));
        }
        stats.optimal = !timed_out;
        stats.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(Solution { assignment, stats })
    }
}

/// Best complete schedule known so far: a label plus greedy decisions for later days.
#[derive(Debug, Default)]
struct Incumbent {
    units: u128,
    layer: usize,
    label: usize,
    tail: Vec<usize>,
}

impl Incumbent {
    fn consider(
        &mut self,
        layer: usize,
        first_day: usize,
        labels: &[Label],
        day_options: &[Vec<DayOption>],
        _inst: &ModelInstance,
    ) {
        if labels.is_empty() {
            return;
        }
        let mut candidates = vec![0usize, labels.len() - 1];
        if let Some((i, _)) = labels.iter().enumerate().max_by_key(|(_, l)| l.units) {
            candidates.push(i);
        }
        candidates.dedup();
        for li in candidates {
            let lab = labels[li];
            let (units, tail) = greedy_tail(lab, first_day, day_options, _inst);
            if units > self.units || (self.tail.is_empty() && layer == 0 && units >= self.units) {
                self.units = units;
                self.layer = layer;
                self.label = li;
                self.tail = tail;
            }
        }
    }

    fn path(&self, layers: &[Vec<Label>]) -> Vec<usize> {
        let mut p = trace_back(layers, self.layer, self.label);
        p.extend(&self.tail);
        p
    }
}

/// Completes a label day by day with the most valuable affordable option.
fn greedy_tail(
    lab: Label,
    first_day: usize,
    day_options: &[Vec<DayOption>],
    inst: &ModelInstance,
) -> (u128, Vec<usize>) {
    let mut z = lab.z;
    let mut units = lab.units;
    let mut tail = Vec::new();
    for (d, opts) in day_options.iter().enumerate().skip(first_day) {
        let z_start = z + inst.real_recharge[d];
        let mut pick = (0usize, z_start);
        for (oi, opt) in opts.iter().enumerate().rev() {
            if opt.spends.is_empty() {
                pick = (oi, z_start);
                break;
            }
            if !real_enable(z_start) {
                continue;
            }
            let mut z_end = z_start;
            for s in &opt.spends {
                z_end -= s;
            }
            if real_enable(z_end) {
                pick = (oi, z_end);
                break;
            }
        }
        units += opts[pick.0].units;
        z = pick.1;
        tail.push(pick.0);
    }
    (units, tail)
}

fn trace_back(layers: &[Vec<Label>], layer: usize, label: usize) -> Vec<usize> {
    let mut choices = vec![0usize; layer];
    let mut li = label;
    for d in (1..=layer).rev() {
        let lab = layers[d][li];
        choices[d - 1] = lab.option as usize;
        li = lab.parent as usize;
    }
    choices
}

/// Keeps labels not dominated in (balance, value); result has balance descending.
fn pareto(mut labels: Vec<Label>) -> Vec<Label> {
    labels.sort_by(|a, b| {
        b.z.total_cmp(&a.z)
            .then(b.units.cmp(&a.units))
            .then(a.parent.cmp(&b.parent))
            .then(a.option.cmp(&b.option))
    });
    let mut out: Vec<Label> = Vec::with_capacity(labels.len());
    for l in labels {
        if out.last().is_none_or(|best| l.units > best.units) {
            out.push(l);
        }
    }
    out
}

/// Keeps options not dominated in (cost, value); result has cost ascending and the
/// empty option first.
fn pareto_options(mut opts: Vec<DayOption>) -> Vec<DayOption> {
    opts.sort_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(b.units.cmp(&a.units))
            .then(a.served.cmp(&b.served))
    });
    let mut out: Vec<DayOption> = Vec::with_capacity(opts.len());
    for o in opts {
        if out.last().is_none_or(|best| o.units > best.units) {
            out.push(o);
        }
    }
    out
}

fn day_options_for(
    inst: &ModelInstance,
    scorer: &ExactScorer,
    load_day: &[LoadDay],
    order: &[usize],
    day: usize,
) -> Result<Vec<DayOption>> {
    let k_n = load_day.len();
    let steps = inst.grid.day_steps(day);
    // A load's own spend on its last served step separates that step's balance from
    // the next demanded one; when it always clears 2*eps the interval is never empty.
    let auto_gap = load_day
        .iter()
        .all(|ld| ld.costs.iter().all(|&c| c >= 2.0 * inst.eps));

    let served_sets: Vec<Vec<usize>> = if auto_gap {
        let mut partial: Vec<(f64, u128, Vec<usize>)> = vec![(0.0, 0, vec![0; k_n])];
        for &k in order {
            let ld = &load_day[k];
            let w = scorer.step_value(k);
            let mut prefix = vec![0.0];
            for c in &ld.costs {
                prefix.push(prefix.last().unwrap() + c);
            }
            let mut merged = Vec::with_capacity(partial.len() * prefix.len());
            for (cost, units, served) in &partial {
                for (n, pc) in prefix.iter().enumerate() {
                    let mut s = served.clone();
                    s[k] = n;
                    merged.push((cost + pc, units + n as u128 * w, s));
                }
            }
            merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
            partial.clear();
            for m in merged {
                if partial.last().is_none_or(|p| m.1 > p.1) {
                    partial.push(m);
                }
            }
        }
        partial.into_iter().map(|p| p.2).collect()
    } else {
        let product: u64 = load_day
            .iter()
            .map(|ld| ld.steps.len() as u64 + 1)
            .try_fold(1u64, |acc, n| acc.checked_mul(n))
            .unwrap_or(u64::MAX);
        if product > ENUMERATION_CAP {
            return Err(Error::Solver(format!(
                "day {day} has {product} joint decisions, above the enumeration cap"
            )));
        }
        let mut all = Vec::with_capacity(product as usize);
        let mut served = vec![0usize; k_n];
        loop {
            all.push(served.clone());
            // mixed-radix increment
            let mut i = 0;
            loop {
                if i == k_n {
                    break;
                }
                if served[i] < load_day[i].steps.len() {
                    served[i] += 1;
                    break;
                }
                served[i] = 0;
                i += 1;
            }
            if i == k_n {
                break;
            }
        }
        all
    };

    let mut opts = Vec::with_capacity(served_sets.len());
    for served in served_sets {
        let mut spends = Vec::new();
        let mut rel_x = Vec::with_capacity(steps.len());
        let mut x = 0.0;
        for t in steps.clone() {
            rel_x.push(x);
            let watts: f64 = (0..k_n)
                .filter(|&k| is_served(&load_day[k], served[k], t))
                .map(|k| inst.power[k][t])
                .sum();
            let spend = inst.price(t) * watts;
            x -= spend;
            if watts > 0.0 {
                spends.push(spend);
            }
        }
        if !auto_gap && !interval_nonempty(load_day, &served, &rel_x, steps.start, inst.eps) {
            continue;
        }
        let cost = spends.iter().sum();
        let units = served
            .iter()
            .enumerate()
            .map(|(k, &n)| n as u128 * scorer.step_value(k))
            .sum();
        opts.push(DayOption {
            cost,
            units,
            served,
            spends,
        });
    }
    Ok(pareto_options(opts))
}

fn is_served(ld: &LoadDay, n: usize, t: usize) -> bool {
    ld.steps[..n].binary_search(&t).is_ok()
}

fn interval_nonempty(
    load_day: &[LoadDay],
    served: &[usize],
    rel_x: &[f64],
    day_start: usize,
    eps: f64,
) -> bool {
    load_day.iter().zip(served).all(|(ld, &n)| {
        if n == 0 || n == ld.steps.len() {
            return true;
        }
        let hi = rel_x[ld.steps[n - 1] - day_start];
        let lo = rel_x[ld.steps[n] - day_start] + eps;
        lo <= hi
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::tests::instance;

    #[test]
    fn zero_budget_serves_nothing() {
        let inst = instance(
            vec![vec![100.0, 200.0, 0.0, 50.0], vec![0.0, 30.0, 30.0, 30.0]],
            &[1, 2],
            360,
            1,
            vec![0.0],
            vec![0.0],
        );
        let a = solve(&inst).unwrap();
        assert_eq!(a.objective, 0.0);
        assert!(a.actuation.iter().flatten().all(|&x| !x));
        assert!(a.optimal);
    }

    #[test]
    fn ample_budget_serves_everything() {
        let inst = instance(
            vec![
                vec![100.0, 200.0, 0.0, 50.0, 10.0, 0.0, 0.0, 5.0],
                vec![0.0, 30.0, 30.0, 30.0, 0.0, 0.0, 1.0, 0.0],
            ],
            &[1, 2],
            360,
            2,
            vec![100.0, 0.0],
            vec![50.0, 50.0],
        );
        let a = solve(&inst).unwrap();
        assert!((a.objective - 1.0).abs() < 1e-12);
        assert_eq!(a.actuation, inst.demand);
    }

    #[test]
    fn prefers_heavier_load_at_equal_cost() {
        // each step costs 0.09; budget covers two of the four demanded steps
        let inst = instance(
            vec![vec![100.0, 100.0, 0.0, 0.0], vec![0.0, 0.0, 100.0, 100.0]],
            &[2, 1],
            360,
            1,
            vec![0.2],
            vec![0.2],
        );
        let a = solve(&inst).unwrap();
        assert_eq!(a.served_steps(), vec![0, 2]);
    }

    #[test]
    fn pareto_keeps_front_only() {
        let l = |z, units| Label {
            z,
            units,
            parent: 0,
            option: 0,
        };
        let front = pareto(vec![l(1.0, 5), l(2.0, 3), l(0.5, 5), l(2.0, 4), l(0.1, 9)]);
        let got: Vec<(f64, u128)> = front.iter().map(|l| (l.z, l.units)).collect();
        assert_eq!(got, vec![(2.0, 4), (1.0, 5), (0.1, 9)]);
    }

    #[test]
    fn bound_is_fractional_knapsack() {
        let b = Bound::new(vec![(10.0, 1.0), (3.0, 1.0), (8.0, 2.0)]);
        // sorted: 10/1, 8/2, 3/1
        assert!((b.eval(1.0) - 10.0).abs() < 1e-5);
        assert!((b.eval(2.0) - 14.0).abs() < 1e-5);
        assert!((b.eval(10.0) - 21.0).abs() < 1e-5);
        assert_eq!(b.eval(0.0), 0.0);
    }
}
