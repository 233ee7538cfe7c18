use crate::error::{Error, Result};

use super::ModelInstance;

/// Priority service factor in exact integer units.
///
/// With `L = lcm_k(rank_k * D_k)` over loads with `D_k` demanded steps, each served step
/// of load `k` is worth `L / (rank_k * D_k)` units and a load with no demand contributes a
/// constant `L / rank_k` (its service factor is taken as 1). The PSF is the unit count
/// divided by `L * sum_j 1/rank_j`. Comparing unit counts makes equal objectives compare
/// equal regardless of summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactScorer {
    step_value: Vec<u128>,
    constant: u128,
    denominator: f64,
}

impl ExactScorer {
    pub fn new(inst: &ModelInstance) -> Result<Self> {
        let factors: Vec<u128> = (0..inst.num_loads())
            .map(|k| {
                let rank = u128::from(inst.loads[k].priority_rank);
                rank * inst.demanded_steps(k).max(1) as u128
            })
            .collect();
        let mut lcm: u128 = 1;
        for &f in &factors {
            lcm = checked_lcm(lcm, f)
                .ok_or_else(|| Error::Solver("objective scale overflows 128 bits".into()))?;
        }
        let mut step_value = Vec::with_capacity(factors.len());
        let mut constant = 0u128;
        for (k, &f) in factors.iter().enumerate() {
            if inst.demanded_steps(k) == 0 {
                constant += lcm / f;
                step_value.push(0);
            } else {
                step_value.push(lcm / f);
            }
        }
        let harmonic: f64 = inst.loads.iter().map(|l| 1.0 / f64::from(l.priority_rank)).sum();
        Ok(ExactScorer {
            step_value,
            constant,
            denominator: lcm as f64 * harmonic,
        })
    }

    pub fn step_value(&self, load: usize) -> u128 {
        self.step_value[load]
    }

    pub fn constant(&self) -> u128 {
        self.constant
    }

    /// Units earned by serving `served[k]` steps of each load.
    pub fn units(&self, served: &[usize]) -> u128 {
        self.constant
            + served
                .iter()
                .zip(&self.step_value)
                .map(|(&n, &w)| n as u128 * w)
                .sum::<u128>()
    }

    pub fn psf(&self, units: u128) -> f64 {
        units as f64 / self.denominator
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

fn checked_lcm(a: u128, b: u128) -> Option<u128> {
    (a / gcd(a, b)).checked_mul(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::tests::instance;

    #[test]
    fn units_match_weighted_service_factors() {
        // ranks 1,2; demand 3 and 2 steps
        let inst = instance(
            vec![vec![1.0, 1.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]],
            &[1, 2],
            360,
            1,
            vec![1.0],
            vec![1.0],
        );
        let s = ExactScorer::new(&inst).unwrap();
        // lcm(3, 4) = 12; values 4 and 3 per step
        assert_eq!(s.step_value(0), 4);
        assert_eq!(s.step_value(1), 3);
        let psf = s.psf(s.units(&[2, 1]));
        let direct = (2.0 / 3.0) * (2.0 / 3.0) + (1.0 / 3.0) * 0.5;
        assert!((psf - direct).abs() < 1e-12);
        assert!((s.psf(s.units(&[3, 2])) - 1.0).abs() < 1e-12);
        assert_eq!(s.psf(s.units(&[0, 0])), 0.0);
    }

    #[test]
    fn zero_demand_load_counts_as_served() {
        let inst = instance(
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]],
            &[2, 1],
            360,
            1,
            vec![1.0],
            vec![1.0],
        );
        let s = ExactScorer::new(&inst).unwrap();
        assert!((s.psf(s.units(&[0, 0])) - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.psf(s.units(&[1, 0])) - 1.0).abs() < 1e-12);
    }
}
