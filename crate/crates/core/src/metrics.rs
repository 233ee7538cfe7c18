//! Service factors, energy tables, disconnections and report files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{LoadId, LoadTrace, PriorityFactors, TimeGrid};
use crate::error::{Error, Result};
use crate::simkernel::{disconnection_runs, SimulationResult, StepRecord};

/// Fraction of demanded steps that were served; 1 when nothing was demanded.
pub fn service_factor(actuation: &[bool], demand: &[bool]) -> Result<f64> {
    if actuation.len() != demand.len() {
        return Err(Error::validation("actuation and demand lengths differ"));
    }
    let mut served = 0usize;
    let mut demanded = 0usize;
    for (t, (&a, &d)) in actuation.iter().zip(demand).enumerate() {
        if a && !d {
            return Err(Error::validation(format!("served without demand at step {t}")));
        }
        served += usize::from(a);
        demanded += usize::from(d);
    }
    if demanded == 0 {
        Ok(1.0)
    } else {
        Ok(served as f64 / demanded as f64)
    }
}

/// `sum_k gamma_k * sf_k`.
pub fn psf(sf: &BTreeMap<LoadId, f64>, gamma: &PriorityFactors) -> Result<f64> {
    if sf.len() != gamma.gamma.len() || sf.keys().any(|k| !gamma.gamma.contains_key(k)) {
        return Err(Error::validation(
            "service factors and priority weights cover different loads",
        ));
    }
    Ok(sf.iter().map(|(k, v)| gamma.gamma[k] * v).sum())
}

/// `(events, steps)` over runs of nonpositive real balance that follow a positive step.
pub fn count_disconnections(records: &[StepRecord]) -> (usize, usize) {
    let runs = disconnection_runs(records);
    let steps = runs.iter().map(|(a, b)| b - a + 1).sum();
    (runs.len(), steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub load_id: LoadId,
    pub served_kwh: f64,
    pub demanded_kwh: f64,
    /// `None` when the load had no demand.
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    pub rows: Vec<EnergyRow>,
    pub served_kwh: f64,
    pub demanded_kwh: f64,
    pub fraction: f64,
}

pub fn energy_table(result: &SimulationResult, traces: &[LoadTrace], grid: &TimeGrid) -> EnergyTable {
    let rows: Vec<EnergyRow> = result
        .load_ids
        .iter()
        .zip(&result.energy_served_kwh)
        .zip(traces)
        .map(|((id, &served), tr)| {
            let demanded = tr.energy_kwh(grid);
            EnergyRow {
                load_id: id.clone(),
                served_kwh: served,
                demanded_kwh: demanded,
                fraction: (demanded > 0.0).then(|| served / demanded),
            }
        })
        .collect();
    let served_kwh: f64 = rows.iter().map(|r| r.served_kwh).sum();
    let demanded_kwh: f64 = rows.iter().map(|r| r.demanded_kwh).sum();
    let fraction = if demanded_kwh > 0.0 {
        served_kwh / demanded_kwh
    } else {
        0.0
    };
    EnergyTable {
        rows,
        served_kwh,
        demanded_kwh,
        fraction,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` marks a load without demand (counted as fully served in the PSF).
    pub sf: BTreeMap<LoadId, Option<f64>>,
    pub psf: f64,
    pub energy_kwh: BTreeMap<LoadId, f64>,
    pub energy_fraction: BTreeMap<LoadId, Option<f64>>,
    pub total_energy_kwh: f64,
    pub total_energy_fraction: f64,
    pub disconnection_count: usize,
    pub disconnected_steps: usize,
}

impl MetricsReport {
    pub fn build(
        result: &SimulationResult,
        traces: &[LoadTrace],
        gamma: &PriorityFactors,
        grid: &TimeGrid,
    ) -> Result<Self> {
        let actuation = result.actuation_matrix();
        let mut sf_values = BTreeMap::new();
        let mut sf = BTreeMap::new();
        for ((id, a), tr) in result.load_ids.iter().zip(&actuation).zip(traces) {
            let v = service_factor(a, &tr.demand)?;
            sf_values.insert(id.clone(), v);
            sf.insert(id.clone(), (tr.demanded_steps() > 0).then_some(v));
        }
        let table = energy_table(result, traces, grid);
        let (disconnection_count, disconnected_steps) = count_disconnections(&result.records);
        Ok(MetricsReport {
            psf: psf(&sf_values, gamma)?,
            sf,
            energy_kwh: table
                .rows
                .iter()
                .map(|r| (r.load_id.clone(), r.served_kwh))
                .collect(),
            energy_fraction: table
                .rows
                .iter()
                .map(|r| (r.load_id.clone(), r.fraction))
                .collect(),
            total_energy_kwh: table.served_kwh,
            total_energy_fraction: table.fraction,
            disconnection_count,
            disconnected_steps,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Table with one row per load plus a `total` row; percentages to two significant
    /// figures, `n/a` for loads without demand.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["load_id", "energy_kwh", "energy_pct", "sf"])?;
        let fmt = |v: Option<f64>, pct: bool| match v {
            Some(v) if pct => format_sig(v * 100.0, 2),
            Some(v) => format_sig(v, 2),
            None => "n/a".to_string(),
        };
        for (id, kwh) in &self.energy_kwh {
            w.write_record([
                id.as_str(),
                &format_sig(*kwh, 2),
                &fmt(self.energy_fraction[id], true),
                &fmt(self.sf[id], false),
            ])?;
        }
        w.write_record([
            "total",
            &format_sig(self.total_energy_kwh, 3),
            &format_sig(self.total_energy_fraction * 100.0, 2),
            &format_sig(self.psf, 2),
        ])?;
        w.flush().map_err(|e| Error::io("report.csv", e))?;
        Ok(())
    }
}

/// Rounds to `digits` significant figures and prints without trailing noise.
pub fn format_sig(x: f64, digits: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits - 1 - magnitude).max(0) as usize;
    let scale = 10f64.powi(digits - 1 - magnitude);
    let rounded = (x * scale).round() / scale;
    format!("{rounded:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_time_grid, priority_factors};
    use crate::simkernel::WalletState;

    fn ranks() -> PriorityFactors {
        let r: BTreeMap<LoadId, u32> = [("A", 2), ("B", 4), ("C", 3), ("D", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        priority_factors(&r).unwrap()
    }

    fn sf_map(v: &[(&str, f64)]) -> BTreeMap<LoadId, f64> {
        v.iter().map(|(k, x)| (k.to_string(), *x)).collect()
    }

    #[test]
    fn service_factor_cases() {
        // six demanded hours, three served
        let d = vec![true; 6];
        let a = [true, true, true, false, false, false];
        assert_eq!(service_factor(&a, &d).unwrap(), 0.5);
        assert_eq!(service_factor(&[false; 4], &[false; 4]).unwrap(), 1.0);
        assert_eq!(service_factor(&d, &d).unwrap(), 1.0);
        assert!(service_factor(&[true], &[false]).is_err());
    }

    #[test]
    fn psf_cases() {
        let g = ranks();
        let ones = sf_map(&[("A", 1.0), ("B", 1.0), ("C", 1.0), ("D", 1.0)]);
        assert!((psf(&ones, &g).unwrap() - 1.0).abs() < 1e-12);
        let half = sf_map(&[("A", 0.5), ("B", 0.5), ("C", 0.5), ("D", 0.5)]);
        assert!((psf(&half, &g).unwrap() - 0.5).abs() < 1e-12);
        let mixed = sf_map(&[("D", 1.0), ("A", 0.0), ("C", 1.0), ("B", 1.0)]);
        assert!((psf(&mixed, &g).unwrap() - 0.76).abs() < 1e-12);
        assert!(psf(&sf_map(&[("A", 1.0)]), &g).is_err());
    }

    fn record(t: usize, z: f64) -> StepRecord {
        StepRecord {
            t,
            z,
            x: z,
            enables_virtual: vec![],
            enables_real: z > 0.0,
            actuation: vec![],
            shed_all: false,
        }
    }

    #[test]
    fn disconnection_counts() {
        let pos: Vec<StepRecord> = (0..5).map(|t| record(t, 1.0)).collect();
        assert_eq!(count_disconnections(&pos), (0, 0));
        let zs = [1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
        let recs: Vec<StepRecord> = zs.iter().enumerate().map(|(t, &z)| record(t, z)).collect();
        assert_eq!(count_disconnections(&recs), (2, 3));
    }

    #[test]
    fn energy_table_zero_and_full() {
        let grid = build_time_grid(15, 1).unwrap();
        let traces = vec![
            LoadTrace::from_power("A", vec![1000.0; 96]).unwrap(),
            LoadTrace::from_power("B", vec![0.0; 96]).unwrap(),
        ];
        let none = SimulationResult {
            load_ids: vec!["A".into(), "B".into()],
            records: vec![],
            final_state: WalletState::default(),
            disconnections: vec![],
            energy_served_kwh: vec![0.0, 0.0],
        };
        let t = energy_table(&none, &traces, &grid);
        assert_eq!(t.served_kwh, 0.0);
        assert_eq!(t.rows[0].fraction, Some(0.0));
        assert_eq!(t.rows[1].fraction, None);
        let full = SimulationResult {
            energy_served_kwh: vec![24.0, 0.0],
            ..none
        };
        let t = energy_table(&full, &traces, &grid);
        assert!((t.fraction - 1.0).abs() < 1e-12);
    }

    #[test]
    fn significant_figures() {
        assert_eq!(format_sig(0.6964, 2), "0.70");
        assert_eq!(format_sig(43.2, 2), "43");
        assert_eq!(format_sig(97.4, 2), "97");
        assert_eq!(format_sig(100.0, 2), "100");
        assert_eq!(format_sig(52.13, 3), "52.1");
        assert_eq!(format_sig(0.0, 2), "0");
    }
}
