use std::fmt;

use crate::simkernel::{real_enable, ThresholdPlan};

use super::{balances_from_actuation, Assignment, ModelInstance};

/// Margin below the smallest on-balance used when a day has no forced-off step.
const OPEN_BELOW_MARGIN: f64 = 0.5;

/// Tolerance for the balance recurrences and the objective in [`check_feasible`].
const EQ_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Infeasible {
    pub reason: String,
    pub load: Option<usize>,
    pub t: Option<usize>,
}

impl Infeasible {
    fn at(reason: impl Into<String>, load: Option<usize>, t: Option<usize>) -> Self {
        Infeasible {
            reason: reason.into(),
            load,
            t,
        }
    }
}

impl fmt::Display for Infeasible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.reason)?;
        if let Some(k) = self.load {
            write!(f, " (load {k}")?;
            if let Some(t) = self.t {
                write!(f, ", step {t}")?;
            }
            write!(f, ")")?;
        } else if let Some(t) = self.t {
            write!(f, " (step {t})")?;
        }
        Ok(())
    }
}

/// Picks a threshold inside `[lower, upper]`.
///
/// `lower` already includes the `eps` margin above the largest forced-off balance.
pub(crate) fn pick_threshold(lower: Option<f64>, upper: Option<f64>, eps: f64, fallback: f64) -> Option<f64> {
    match (lower, upper) {
        (Some(lo), Some(hi)) if lo <= hi => Some((lo + (hi - lo) / 2.0).min(hi)),
        (Some(_), Some(_)) => None,
        (Some(lo), None) => Some(lo + eps),
        (None, Some(hi)) => Some(hi - OPEN_BELOW_MARGIN),
        (None, None) => Some(fallback),
    }
}

/// Finds thresholds that reproduce `actuation` exactly, or explains why none exist.
///
/// Within a day a load's threshold must sit at or below the virtual balance of every step
/// it runs, and at least `eps` above the balance of every demanded step it is kept off
/// while the real wallet is (and would stay) positive, since the forced-on constraint
/// would otherwise switch it on.
pub fn threshold_feasible(
    inst: &ModelInstance,
    actuation: &[Vec<bool>],
) -> Result<ThresholdPlan, Infeasible> {
    let k_n = inst.num_loads();
    let n = inst.num_steps();
    if actuation.len() != k_n || actuation.iter().any(|row| row.len() != n) {
        return Err(Infeasible::at("actuation matrix has the wrong shape", None, None));
    }
    for k in 0..k_n {
        for t in 0..n {
            if actuation[k][t] && !inst.demand[k][t] {
                return Err(Infeasible::at("load actuated without demand", Some(k), Some(t)));
            }
        }
    }
    let b = balances_from_actuation(inst, actuation);
    for t in 0..n {
        let any_on = (0..k_n).any(|k| actuation[k][t]);
        if any_on && !real_enable(b.real[t]) {
            return Err(Infeasible::at(
                "spend at a nonpositive real balance",
                None,
                Some(t),
            ));
        }
        if any_on && !real_enable(b.real_end[t]) {
            return Err(Infeasible::at("spend overdraws the real wallet", None, Some(t)));
        }
    }

    let grid = &inst.grid;
    let mut plan = ThresholdPlan::uniform(inst.load_ids(), grid.num_days, 0.0);
    for k in 0..k_n {
        for day in 0..grid.num_days {
            let mut upper: Option<f64> = None;
            let mut lower: Option<f64> = None;
            for t in grid.day_steps(day) {
                let x = b.virtual_[t];
                if actuation[k][t] {
                    upper = Some(upper.map_or(x, |u| u.min(x)));
                } else if inst.demand[k][t] && real_enable(b.real[t]) && real_enable(b.real_end[t]) {
                    lower = Some(lower.map_or(x, |l| l.max(x)));
                }
            }
            let lower = lower.map(|l| l + inst.eps);
            let fallback = b.virtual_[grid.day_start(day)];
            match pick_threshold(lower, upper, inst.eps, fallback) {
                Some(thr) => plan.set(k, day, thr),
                None => {
                    return Err(Infeasible::at(
                        format!("empty threshold interval on day {day}"),
                        Some(k),
                        None,
                    ))
                }
            }
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Shape,
    RealBalance,
    VirtualBalance,
    /// A positive real balance forces the real enable on.
    RealPositiveForcesEnable,
    /// The real enable needs a balance of at least `eps`.
    RealEnableNeedsBalance,
    /// A virtual balance at or above the threshold forces the virtual enable on.
    VirtualAboveForcesEnable,
    /// The virtual enable needs the balance to clear the threshold.
    VirtualEnableNeedsBalance,
    ActuationNeedsDemandAndVirtual,
    ActuationNeedsReal,
    ActuationNeedsRealNext,
    /// Demand with every enable set forces the load on.
    ActuationForcedOn,
    Objective,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::Shape => "shape",
            Constraint::RealBalance => "real wallet balance recurrence",
            Constraint::VirtualBalance => "virtual wallet balance recurrence",
            Constraint::RealPositiveForcesEnable => "real enable (positive balance forces enable)",
            Constraint::RealEnableNeedsBalance => "real enable (enable requires positive balance)",
            Constraint::VirtualAboveForcesEnable => "virtual enable (balance at threshold forces enable)",
            Constraint::VirtualEnableNeedsBalance => "virtual enable (enable requires balance at threshold)",
            Constraint::ActuationNeedsDemandAndVirtual => "actuation requires demand and virtual enable",
            Constraint::ActuationNeedsReal => "actuation requires real enable",
            Constraint::ActuationNeedsRealNext => "actuation requires next-step real enable",
            Constraint::ActuationForcedOn => "actuation forced on when demanded and enabled",
            Constraint::Objective => "objective value",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub load: Option<usize>,
    pub t: Option<usize>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constraint.name())?;
        match (self.load, self.t) {
            (Some(k), Some(t)) => write!(f, " violated for load {k} at step {t}"),
            (None, Some(t)) => write!(f, " violated at step {t}"),
            (Some(k), None) => write!(f, " violated for load {k}"),
            (None, None) => write!(f, " violated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub violation: Option<Violation>,
}

impl FeasibilityReport {
    fn ok() -> Self {
        FeasibilityReport {
            feasible: true,
            violation: None,
        }
    }

    fn fail(constraint: Constraint, load: Option<usize>, t: Option<usize>) -> Self {
        FeasibilityReport {
            feasible: false,
            violation: Some(Violation { constraint, load, t }),
        }
    }
}

fn b(v: bool) -> f64 {
    if v {
        1.0
    } else {
        0.0
    }
}

/// Evaluates every constraint of the window model against an assignment.
///
/// The big-M rows are checked with a feasibility tolerance equal to the instance's `eps`,
/// the way a MILP engine would accept them; the balance recurrences and the objective use
/// a `1e-9` tolerance. Thresholds are stored per day, so daily constancy holds by
/// construction.
pub fn check_feasible(inst: &ModelInstance, asg: &Assignment) -> FeasibilityReport {
    use Constraint::*;

    let k_n = inst.num_loads();
    let n = inst.num_steps();
    let shape_ok = asg.actuation.len() == k_n
        && asg.enables_virtual.len() == k_n
        && asg.actuation.iter().all(|r| r.len() == n)
        && asg.enables_virtual.iter().all(|r| r.len() == n)
        && asg.enables_real.len() == n
        && asg.enables_real_next.len() == n
        && asg.balances.real.len() == n
        && asg.balances.virtual_.len() == n
        && asg.balances.real_end.len() == n
        && asg.balances.virtual_end.len() == n
        && asg.thresholds.num_loads() == k_n
        && asg.thresholds.num_days() >= inst.grid.num_days;
    if !shape_ok {
        return FeasibilityReport::fail(Shape, None, None);
    }

    let bal = &asg.balances;
    let (big_m, m_neg, eps) = (inst.big_m, inst.big_m_neg, inst.eps);
    let tol = eps;

    // Balance recurrences.
    let mut z_prev = inst.initial.real;
    let mut x_prev = inst.initial.virtual_;
    for t in 0..n {
        let watts: f64 = (0..k_n)
            .filter(|&k| asg.actuation[k][t])
            .map(|k| inst.power[k][t])
            .sum();
        let spend = inst.price(t) * watts;
        if (bal.real[t] - (z_prev + inst.real_recharge_at(t))).abs() > EQ_TOL
            || (bal.real_end[t] - (bal.real[t] - spend)).abs() > EQ_TOL
        {
            return FeasibilityReport::fail(RealBalance, None, Some(t));
        }
        if (bal.virtual_[t] - (x_prev + inst.virtual_recharge_at(t))).abs() > EQ_TOL
            || (bal.virtual_end[t] - (bal.virtual_[t] - spend)).abs() > EQ_TOL
        {
            return FeasibilityReport::fail(VirtualBalance, None, Some(t));
        }
        z_prev = bal.real_end[t];
        x_prev = bal.virtual_end[t];
    }

    // Real enable indicators, for the step itself and for the carried-out balance.
    for t in 0..n {
        for (u, z) in [
            (asg.enables_real[t], bal.real[t]),
            (asg.enables_real_next[t], bal.real_end[t]),
        ] {
            if m_neg * b(u) > -z + tol {
                return FeasibilityReport::fail(RealPositiveForcesEnable, None, Some(t));
            }
            if (big_m + eps) * (1.0 - b(u)) < eps - z - tol {
                return FeasibilityReport::fail(RealEnableNeedsBalance, None, Some(t));
            }
        }
    }

    for k in 0..k_n {
        for t in 0..n {
            let thr = asg.thresholds.get(k, inst.grid.day_of(t));
            let x = bal.virtual_[t];
            let ux = asg.enables_virtual[k][t];
            if x - thr + eps > (big_m + eps) * b(ux) + tol {
                return FeasibilityReport::fail(VirtualAboveForcesEnable, Some(k), Some(t));
            }
            if x - thr < m_neg * (1.0 - b(ux)) - tol {
                return FeasibilityReport::fail(VirtualEnableNeedsBalance, Some(k), Some(t));
            }

            let a = asg.actuation[k][t];
            let d = inst.demand[k][t];
            if a && !(d && ux) {
                return FeasibilityReport::fail(ActuationNeedsDemandAndVirtual, Some(k), Some(t));
            }
            if a && !asg.enables_real[t] {
                return FeasibilityReport::fail(ActuationNeedsReal, Some(k), Some(t));
            }
            if a && !asg.enables_real_next[t] {
                return FeasibilityReport::fail(ActuationNeedsRealNext, Some(k), Some(t));
            }
            let lhs = u8::from(d && ux) + u8::from(asg.enables_real[t]) + u8::from(asg.enables_real_next[t]);
            if lhs > 2 + u8::from(a) {
                return FeasibilityReport::fail(ActuationForcedOn, Some(k), Some(t));
            }
        }
    }

    let mut psf = 0.0;
    for k in 0..k_n {
        let demanded = inst.demanded_steps(k);
        let sf = if demanded == 0 {
            1.0
        } else {
            asg.actuation[k].iter().filter(|&&a| a).count() as f64 / demanded as f64
        };
        psf += inst.gamma.get(&inst.loads[k].id).unwrap_or(0.0) * sf;
    }
    if (psf - asg.objective).abs() > EQ_TOL {
        return FeasibilityReport::fail(Objective, None, None);
    }
    FeasibilityReport::ok()
}
