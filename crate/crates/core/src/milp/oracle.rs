//! Exhaustive reference solver for tiny windows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{build_time_grid, LoadSpec, LoadTrace, RechargeSchedule, Tariff, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::simkernel::WalletState;

use super::feasibility::threshold_feasible;
use super::{check_feasible, Assignment, ExactScorer, ModelInstance};

/// Largest `loads * steps` the oracle accepts.
pub const ORACLE_CELL_CAP: usize = 20;

/// Enumerates every actuation matrix and keeps the best realizable one.
///
/// Ties on the objective go to the lexicographically smallest matrix in row-major
/// order with `false < true`.
pub fn brute_force(inst: &ModelInstance) -> Result<Assignment> {
    inst.validate()?;
    let k_n = inst.num_loads();
    let n = inst.num_steps();
    let cells = k_n * n;
    if cells > ORACLE_CELL_CAP {
        return Err(Error::OracleCap {
            cells,
            cap: ORACLE_CELL_CAP,
        });
    }
    let scorer = ExactScorer::new(inst)?;

    // cell i (row-major) maps to bit `cells - 1 - i`, so numeric order is lexicographic
    let bit = |k: usize, t: usize| 1u32 << (cells - 1 - (k * n + t));
    let mut demand_mask = 0u32;
    let mut load_masks = vec![0u32; k_n];
    for k in 0..k_n {
        for t in 0..n {
            if inst.demand[k][t] {
                demand_mask |= bit(k, t);
                load_masks[k] |= bit(k, t);
            }
        }
    }

    let mut best: Option<(u128, Assignment)> = None;
    let mut mask = 0u32;
    loop {
        if mask & !demand_mask == 0 {
            let served: Vec<usize> = load_masks
                .iter()
                .map(|&m| (mask & m).count_ones() as usize)
                .collect();
            let units = scorer.units(&served);
            if best.as_ref().is_none_or(|(b, _)| units > *b) {
                let actuation: Vec<Vec<bool>> = (0..k_n)
                    .map(|k| (0..n).map(|t| mask & bit(k, t) != 0).collect())
                    .collect();
                if let Ok(plan) = threshold_feasible(inst, &actuation) {
                    let asg = Assignment::from_parts(inst, actuation, plan, scorer.psf(units));
                    if check_feasible(inst, &asg).feasible {
                        best = Some((units, asg));
                    }
                }
            }
        }
        if cells == 0 || mask == u32::MAX >> (32 - cells) {
            break;
        }
        mask += 1;
    }
    best.map(|(_, a)| a)
        .ok_or_else(|| Error::Solver("no feasible actuation found".into()))
}

/// Random small window for solver/oracle comparisons.
///
/// `steps` counts steps over the whole window and must split evenly into `days` days
/// whose length divides 24 h. Cells are demanded with probability 0.6 at 20-600 W, ranks
/// are a random permutation, and each day's real and virtual top-ups are drawn between
/// zero and that day's full-demand cost at $0.15/kWh.
pub fn toy_instance(seed: u64, loads: usize, steps: usize, days: usize) -> Result<ModelInstance> {
    if loads == 0 || days == 0 || steps == 0 || !steps.is_multiple_of(days) {
        return Err(Error::validation(format!(
            "{steps} steps cannot be split over {days} days"
        )));
    }
    let per_day = steps / days;
    if 1440 % per_day != 0 {
        return Err(Error::validation(format!(
            "{per_day} steps per day do not divide 24 h"
        )));
    }
    let grid = build_time_grid((1440 / per_day) as u32, days)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks: Vec<u32> = (1..=loads as u32).collect();
    ranks.shuffle(&mut rng);
    let specs: Vec<LoadSpec> = ranks
        .iter()
        .enumerate()
        .map(|(k, &r)| LoadSpec::new(format!("L{k}"), format!("load {k}"), r))
        .collect();
    let traces: Vec<LoadTrace> = specs
        .iter()
        .map(|l| {
            let power = (0..steps)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        rng.gen_range(20.0..600.0_f64).round()
                    } else {
                        0.0
                    }
                })
                .collect();
            LoadTrace::from_power(l.id.clone(), power)
        })
        .collect::<Result<_>>()?;
    let tariff = Tariff::constant_per_kwh(0.15, steps)?;
    let mut real = Vec::with_capacity(days);
    let mut virtual_ = Vec::with_capacity(days);
    for d in 0..days {
        let day_cost: f64 = grid
            .day_steps(d)
            .map(|t| traces.iter().map(|tr| tr.power[t]).sum::<f64>() * tariff.rate(t) * grid.step_hours)
            .sum();
        real.push((rng.gen::<f64>() * day_cost * 1e4).round() / 1e4);
        virtual_.push((rng.gen::<f64>() * day_cost * 1e4).round() / 1e4);
    }
    let rs = RechargeSchedule::new(real, virtual_)?;
    ModelInstance::new(
        grid,
        specs,
        &traces,
        &tariff,
        &rs,
        WalletState::default(),
        DEFAULT_EPS,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::solve;
    use crate::milp::tests::instance;

    #[test]
    fn budget_for_two_of_three_steps() {
        // each demanded step costs 0.09
        let inst = instance(
            vec![vec![100.0, 100.0, 0.0, 100.0]],
            &[1],
            360,
            1,
            vec![0.2],
            vec![0.2],
        );
        let a = brute_force(&inst).unwrap();
        assert!((a.objective - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(a.actuation, vec![vec![true, true, false, false]]);
    }

    #[test]
    fn heavier_load_wins_equal_cost() {
        let inst = instance(
            vec![vec![100.0, 0.0, 0.0, 0.0], vec![0.0, 100.0, 0.0, 0.0]],
            &[2, 1],
            360,
            1,
            vec![0.1],
            vec![0.1],
        );
        let a = brute_force(&inst).unwrap();
        assert_eq!(a.served_steps(), vec![0, 1]);
        assert!((a.objective - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_demand_scores_one() {
        let inst = instance(vec![vec![0.0; 4]; 2], &[1, 2], 360, 1, vec![1.0], vec![1.0]);
        let a = brute_force(&inst).unwrap();
        assert_eq!(a.objective, 1.0);
        assert!(a.actuation.iter().flatten().all(|&x| !x));
    }

    #[test]
    fn zero_and_ample_budgets() {
        let p = vec![vec![100.0, 0.0, 50.0, 100.0], vec![10.0, 10.0, 0.0, 10.0]];
        let broke = instance(p.clone(), &[1, 2], 360, 1, vec![0.0], vec![0.0]);
        assert_eq!(brute_force(&broke).unwrap().objective, 0.0);
        let rich = instance(p, &[1, 2], 360, 1, vec![10.0], vec![10.0]);
        assert!((brute_force(&rich).unwrap().objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let inst = instance(vec![vec![1.0; 24]], &[1], 60, 1, vec![1.0], vec![1.0]);
        assert!(matches!(
            brute_force(&inst),
            Err(Error::OracleCap { cells: 24, cap: 20 })
        ));
    }

    #[test]
    fn toy_family_agrees_with_solver() {
        for seed in 0..40 {
            let inst = toy_instance(seed, 2, 8, 2).unwrap();
            let want = brute_force(&inst).unwrap();
            let got = solve(&inst).unwrap();
            assert_eq!(want.objective, got.objective, "seed {seed}");
        }
        assert!(toy_instance(0, 2, 7, 2).is_err());
        assert!(toy_instance(0, 2, 14, 2).is_err());
    }

    #[test]
    fn agrees_with_solver_on_examples() {
        let cases = [
            (vec![vec![100.0, 100.0, 0.0, 100.0]], vec![0.2]),
            (
                vec![vec![300.0, 0.0, 20.0, 100.0], vec![50.0, 50.0, 50.0, 0.0]],
                vec![0.3],
            ),
            (
                vec![vec![10.0, 900.0, 10.0, 10.0], vec![400.0, 0.0, 0.0, 400.0]],
                vec![0.4],
            ),
        ];
        for (p, z) in cases {
            let ranks: Vec<u32> = (1..=p.len() as u32).collect();
            let inst = instance(p, &ranks, 360, 1, z.clone(), z);
            let want = brute_force(&inst).unwrap();
            let got = solve(&inst).unwrap();
            assert!((want.objective - got.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_thresholds_satisfy_every_constraint() {
        for seed in 0..3 {
            let inst = toy_instance(seed, 2, 8, 2).unwrap();
            let scorer = ExactScorer::new(&inst).unwrap();
            let mut realizable = 0;
            for mask in 0u32..1 << 16 {
                let actuation: Vec<Vec<bool>> = (0..2)
                    .map(|k| (0..8).map(|t| mask >> (k * 8 + t) & 1 == 1).collect())
                    .collect();
                let Ok(plan) = threshold_feasible(&inst, &actuation) else {
                    continue;
                };
                let served: Vec<usize> = actuation
                    .iter()
                    .map(|r| r.iter().filter(|&&a| a).count())
                    .collect();
                let asg = Assignment::from_parts(&inst, actuation, plan, scorer.psf(scorer.units(&served)));
                let report = check_feasible(&inst, &asg);
                assert!(
                    report.feasible,
                    "seed {seed} mask {mask:#x}: {:?}",
                    report.violation
                );
                realizable += 1;
            }
            assert!(realizable > 0);
        }
    }
}
