//! Threshold plans for the baseline, fixed-threshold and optimized cases.

use serde::{Deserialize, Serialize};

use crate::domain::{LoadId, LoadSpec, LoadTrace, RechargeSchedule, Tariff, TimeGrid};
use crate::error::{Error, Result};
use crate::milp::{ModelInstance, Solution, Solver};
use crate::simkernel::{ShedGuard, ThresholdPlan, WalletState};

/// Stand-in for an unbounded-below threshold. Never written to reports.
pub const BASELINE_THRESHOLD: f64 = -1e12;

pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_HORIZON_DAYS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Baseline,
    Fixed { beta: f64 },
    Optimal { horizon_days: usize },
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PolicyKind::Fixed { beta } if !(beta > 0.0 && beta < 1.0) => {
                Err(Error::validation(format!("beta must lie in (0, 1), got {beta}")))
            }
            PolicyKind::Optimal { horizon_days: 0 } => {
                Err(Error::validation("horizon must be at least one day"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::Fixed { .. } => "fixed",
            PolicyKind::Optimal { .. } => "optimal",
        }
    }

    /// Parses `baseline`, `fixed` or `optimal` with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "baseline" => Ok(PolicyKind::Baseline),
            "fixed" => Ok(PolicyKind::Fixed { beta: DEFAULT_BETA }),
            "optimal" | "optimized" => Ok(PolicyKind::Optimal {
                horizon_days: DEFAULT_HORIZON_DAYS,
            }),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }

    /// The baseline has no energy manager, so it runs without the overdraw guard.
    pub fn guard(&self) -> ShedGuard {
        match self {
            PolicyKind::Baseline => ShedGuard::Disabled,
            _ => ShedGuard::Protective,
        }
    }
}

/// Every load enabled whenever the real wallet is positive.
pub fn baseline_plan(load_ids: Vec<LoadId>, grid: &TimeGrid) -> ThresholdPlan {
    ThresholdPlan::uniform(load_ids, grid.num_days, BASELINE_THRESHOLD)
}

/// `threshold_k = rank_k / N * beta * total_recharge`, constant over the horizon.
pub fn fixed_plan(
    loads: &[LoadSpec],
    total_recharge: f64,
    beta: f64,
    grid: &TimeGrid,
) -> Result<ThresholdPlan> {
    if !(total_recharge > 0.0) {
        return Err(Error::validation("total recharge must be positive"));
    }
    let n = loads.len() as f64;
    let values: Vec<f64> = loads
        .iter()
        .map(|l| f64::from(l.priority_rank) / n * beta * total_recharge)
        .collect();
    Ok(ThresholdPlan::per_load(
        loads.iter().map(|l| l.id.clone()).collect(),
        grid.num_days,
        &values,
    ))
}

/// Full-horizon inputs the optimizer can see (perfect forecasts).
#[derive(Debug, Clone, Copy)]
pub struct Forecast<'a> {
    pub loads: &'a [LoadSpec],
    pub traces: &'a [LoadTrace],
    pub tariff: &'a Tariff,
    pub recharges: &'a RechargeSchedule,
    pub grid: TimeGrid,
    pub eps: f64,
}

/// Window of `min(horizon_days, days left)` days starting at `day`.
pub fn window_instance(
    day: usize,
    state: WalletState,
    horizon_days: usize,
    forecast: &Forecast<'_>,
) -> Result<ModelInstance> {
    let grid = forecast.grid;
    if day >= grid.num_days {
        return Err(Error::validation(format!("day {day} is past the horizon")));
    }
    let days = horizon_days.min(grid.num_days - day);
    let start = grid.day_start(day);
    let end = grid.day_start(day + days);
    let traces: Vec<LoadTrace> = forecast.traces.iter().map(|t| t.slice(start, end)).collect();
    ModelInstance::new(
        grid.with_days(days),
        forecast.loads.to_vec(),
        &traces,
        &forecast.tariff.slice(start, end),
        &forecast.recharges.slice_days(day, day + days),
        state,
        forecast.eps,
    )
}

/// Solves the window starting at `day`; the caller applies the first day's thresholds.
pub fn optimized_plan(
    day: usize,
    state: WalletState,
    horizon_days: usize,
    forecast: &Forecast<'_>,
    solver: &Solver,
) -> Result<Solution> {
    let inst = window_instance(day, state, horizon_days, forecast)?;
    solver.solve(&inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_time_grid, PriorityFactors};
    use crate::metrics::service_factor;
    use crate::milp::{brute_force, solve};
    use crate::simkernel::{simulate, SimInputs};
    use proptest::prelude::*;

    fn four_loads() -> Vec<LoadSpec> {
        vec![
            LoadSpec::new("A", "air compressor", 2),
            LoadSpec::new("B", "washing machine", 4),
            LoadSpec::new("C", "microwave", 3),
            LoadSpec::new("D", "refrigerator", 1),
        ]
    }

    #[test]
    fn fixed_thresholds_follow_rank() {
        let grid = build_time_grid(15, 30).unwrap();
        let x = 0.70 * 11.19;
        let plan = fixed_plan(&four_loads(), x, 0.05, &grid).unwrap();
        assert!((plan.get(3, 0) - 0.0979125).abs() < 1e-9);
        assert!((plan.get(1, 17) - 0.39165).abs() < 1e-9);
        assert!((plan.get(1, 0) - 4.0 * plan.get(3, 0)).abs() < 1e-12);
        let one = fixed_plan(&[LoadSpec::new("X", "x", 1)], 3.0, 0.05, &grid).unwrap();
        assert!((one.get(0, 5) - 0.15).abs() < 1e-12);
        assert!(fixed_plan(&four_loads(), 0.0, 0.05, &grid).is_err());
    }

    #[test]
    fn baseline_uses_sentinel() {
        let grid = build_time_grid(15, 3).unwrap();
        let plan = baseline_plan(vec!["A".into(), "B".into()], &grid);
        assert!(plan.values.iter().flatten().all(|&v| v == BASELINE_THRESHOLD));
        assert_eq!(PolicyKind::Baseline.guard(), ShedGuard::Disabled);
    }

    #[test]
    fn policy_names_and_validation() {
        assert_eq!(
            PolicyKind::from_name("fixed").unwrap(),
            PolicyKind::Fixed { beta: 0.05 }
        );
        assert!(PolicyKind::from_name("random").is_err());
        assert!(PolicyKind::Fixed { beta: 1.5 }.validate().is_err());
        assert!(PolicyKind::Optimal { horizon_days: 0 }.validate().is_err());
        assert!(PolicyKind::Optimal { horizon_days: 7 }.validate().is_ok());
    }

    fn toy(
        powers: Vec<Vec<f64>>,
        days: usize,
        real: Vec<f64>,
    ) -> (Vec<LoadSpec>, Vec<LoadTrace>, TimeGrid, Tariff, RechargeSchedule) {
        let loads: Vec<LoadSpec> = (0..powers.len())
            .map(|i| LoadSpec::new(format!("L{i}"), "", i as u32 + 1))
            .collect();
        let grid = build_time_grid(360, days).unwrap();
        let traces = powers
            .into_iter()
            .zip(&loads)
            .map(|(p, l)| LoadTrace::from_power(l.id.clone(), p).unwrap())
            .collect();
        let tariff = Tariff::constant_per_kwh(0.15, grid.total_steps).unwrap();
        let rs = RechargeSchedule::new(real.clone(), real).unwrap();
        (loads, traces, grid, tariff, rs)
    }

    #[test]
    fn optimized_window_extremes() {
        let p = vec![
            vec![100.0, 0.0, 300.0, 50.0, 0.0, 80.0, 80.0, 0.0],
            vec![40.0, 40.0, 0.0, 0.0, 200.0, 0.0, 10.0, 10.0],
        ];
        let (loads, traces, grid, tariff, rs) = toy(p.clone(), 2, vec![0.0, 0.0]);
        let fc = Forecast {
            loads: &loads,
            traces: &traces,
            tariff: &tariff,
            recharges: &rs,
            grid,
            eps: 1e-6,
        };
        let sol = optimized_plan(0, WalletState::default(), 7, &fc, &Solver::default()).unwrap();
        assert_eq!(sol.assignment.objective, 0.0);

        let (loads, traces, grid, tariff, rs) = toy(p, 2, vec![10.0, 10.0]);
        let fc = Forecast {
            loads: &loads,
            traces: &traces,
            tariff: &tariff,
            recharges: &rs,
            grid,
            eps: 1e-6,
        };
        let sol = optimized_plan(0, WalletState::default(), 7, &fc, &Solver::default()).unwrap();
        assert!((sol.assignment.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn optimized_toy_matches_oracle_in_simulation() {
        // costs per step are P * 0.15 / 1000 * 6 dollars
        let p = vec![
            vec![200.0, 0.0, 300.0, 50.0, 100.0, 80.0, 80.0, 0.0],
            vec![40.0, 400.0, 0.0, 0.0, 200.0, 0.0, 300.0, 10.0],
        ];
        let (loads, traces, grid, tariff, rs) = toy(p, 2, vec![0.3, 0.25]);
        let fc = Forecast {
            loads: &loads,
            traces: &traces,
            tariff: &tariff,
            recharges: &rs,
            grid,
            eps: 1e-6,
        };
        let inst = window_instance(0, WalletState::default(), 7, &fc).unwrap();
        let oracle = brute_force(&inst).unwrap();
        let sol = optimized_plan(0, WalletState::default(), 7, &fc, &Solver::default()).unwrap();
        let inputs = SimInputs {
            traces: &traces,
            tariff: &tariff,
            recharges: &rs,
            grid,
            eps: 1e-6,
            guard: ShedGuard::Protective,
        };
        let sim = simulate(&sol.assignment.thresholds, inputs, WalletState::default()).unwrap();
        assert_eq!(sim.actuation_matrix(), sol.assignment.actuation);
        let gamma = PriorityFactors::for_loads(&loads).unwrap();
        let realized: f64 = sim
            .actuation_matrix()
            .iter()
            .zip(&traces)
            .map(|(a, tr)| gamma.gamma[&tr.load_id] * service_factor(a, &tr.demand).unwrap())
            .sum();
        assert!((realized - oracle.objective).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fixed_thresholds_increase_with_rank(n in 1usize..8, x in 0.01f64..100.0, beta in 0.01f64..0.99) {
            let loads: Vec<LoadSpec> = (0..n).map(|i| LoadSpec::new(format!("L{i}"), "", (n - i) as u32)).collect();
            let grid = build_time_grid(60, 2).unwrap();
            let plan = fixed_plan(&loads, x, beta, &grid).unwrap();
            for i in 0..n {
                for j in 0..n {
                    if loads[i].priority_rank < loads[j].priority_rank {
                        prop_assert!(plan.get(i, 0) < plan.get(j, 0));
                    }
                }
            }
        }

        #[test]
        fn optimum_beats_unshed_fixed_plan(
            p in prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 10.0f64..600.0], 8), 2),
            z in prop::collection::vec(0.0f64..0.6, 2),
            beta in 0.02f64..0.5,
        ) {
            // the fixed plan's actuation is a feasible point whenever no step was shed
            let (loads, traces, grid, tariff, rs) = toy(p, 2, z.clone());
            let total: f64 = z.iter().sum();
            prop_assume!(total > 0.0);
            let plan = fixed_plan(&loads, total, beta, &grid).unwrap();
            let inputs = SimInputs { traces: &traces, tariff: &tariff, recharges: &rs, grid, eps: 1e-6, guard: ShedGuard::Protective };
            let sim = simulate(&plan, inputs, WalletState::default()).unwrap();
            prop_assume!(sim.shed_steps() == 0);
            let gamma = PriorityFactors::for_loads(&loads).unwrap();
            let fixed_psf: f64 = sim.actuation_matrix().iter().zip(&traces)
                .map(|(a, tr)| gamma.gamma[&tr.load_id] * service_factor(a, &tr.demand).unwrap())
                .sum();
            let fc = Forecast { loads: &loads, traces: &traces, tariff: &tariff, recharges: &rs, grid, eps: 1e-6 };
            let inst = window_instance(0, WalletState::default(), 2, &fc).unwrap();
            let best = solve(&inst).unwrap();
            prop_assert!(best.objective >= fixed_psf - 1e-9);
        }
    }
}
