//! Trace files and the synthetic appliance generator.
//!
//! Raw files are CSV with header `timestamp,load_id,power_w`. Each sample holds its power
//! until the next sample of the same load (the last one holds for the preceding sample
//! interval), and the held power is averaged over each grid step. The horizon starts at
//! midnight of the earliest timestamp in the file.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{LoadSpec, LoadTrace, TimeGrid};
use crate::error::{Error, Result};

const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"];
const TIMESTAMP_OUT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Deserialize)]
struct RawRow {
    timestamp: String,
    load_id: String,
    power_w: String,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Reads a trace file and resamples every load onto `grid`.
pub fn load_traces(path: &Path, grid: &TimeGrid) -> Result<Vec<LoadTrace>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_traces(file, &path.display().to_string(), grid)
}

/// Like [`load_traces`], reading from any source; `source` names it in errors.
pub fn read_traces<R: Read>(reader: R, source: &str, grid: &TimeGrid) -> Result<Vec<LoadTrace>> {
    let ingest_err = |row: usize, message: String| Error::Ingest {
        path: source.to_string(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    // loads in order of first appearance
    let mut order: Vec<String> = Vec::new();
    let mut samples: BTreeMap<String, Vec<(NaiveDateTime, f64)>> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| ingest_err(row, e.to_string()))?;
        let ts = parse_timestamp(&rec.timestamp)
            .ok_or_else(|| ingest_err(row, format!("bad timestamp `{}`", rec.timestamp)))?;
        let power: f64 = rec
            .power_w
            .trim()
            .parse()
            .map_err(|_| ingest_err(row, format!("bad power `{}`", rec.power_w)))?;
        if !power.is_finite() || power < 0.0 {
            return Err(ingest_err(row, format!("negative or non-finite power {power}")));
        }
        if rec.load_id.is_empty() {
            return Err(ingest_err(row, "empty load id".into()));
        }
        let series = samples.entry(rec.load_id.clone()).or_insert_with(|| {
            order.push(rec.load_id.clone());
            Vec::new()
        });
        if let Some(&(prev, _)) = series.last() {
            if ts <= prev {
                return Err(ingest_err(
                    row,
                    format!(
                        "timestamps for load `{}` are not strictly increasing",
                        rec.load_id
                    ),
                ));
            }
        }
        series.push((ts, power));
    }
    let start = samples
        .values()
        .filter_map(|s| s.first().map(|p| p.0))
        .min()
        .ok_or_else(|| ingest_err(1, "no samples".into()))?;
    let origin = start.date().and_time(NaiveTime::MIN);
    order
        .iter()
        .map(|id| {
            let series: Vec<(f64, f64)> = samples[id]
                .iter()
                .map(|(ts, p)| ((*ts - origin).num_milliseconds() as f64 / 1000.0, *p))
                .collect();
            let power = resample(id, &series, grid)?;
            LoadTrace::from_power(id.clone(), power)
        })
        .collect()
}

/// Mean power per grid step from `(seconds since origin, watts)` samples.
pub fn resample(load_id: &str, samples: &[(f64, f64)], grid: &TimeGrid) -> Result<Vec<f64>> {
    let step_s = f64::from(grid.step_minutes) * 60.0;
    let horizon = step_s * grid.total_steps as f64;
    let coverage = |message: String| Error::Coverage {
        load_id: load_id.to_string(),
        message,
    };
    let first = samples.first().ok_or_else(|| coverage("no samples".into()))?;
    if first.0 > 0.0 {
        return Err(coverage(format!(
            "first sample is {} s after the horizon start",
            first.0
        )));
    }
    let last_len = if samples.len() >= 2 {
        samples[samples.len() - 1].0 - samples[samples.len() - 2].0
    } else {
        step_s
    };
    let end = samples.last().unwrap().0 + last_len;
    if end < horizon {
        return Err(coverage(format!(
            "samples end {:.0} s into a {:.0} s horizon",
            end, horizon
        )));
    }
    let mut energy = vec![0.0; grid.total_steps];
    for (i, &(s0, p)) in samples.iter().enumerate() {
        let s1 = samples.get(i + 1).map_or(end, |n| n.0);
        let (a, b) = (s0.max(0.0), s1.min(horizon));
        if p == 0.0 || b <= a {
            continue;
        }
        let mut t = (a / step_s) as usize;
        while t < grid.total_steps {
            let lo = a.max(t as f64 * step_s);
            let hi = b.min((t + 1) as f64 * step_s);
            if hi <= lo {
                break;
            }
            energy[t] += p * (hi - lo);
            t += 1;
        }
    }
    Ok(energy.into_iter().map(|e| e / step_s).collect())
}

/// Writes traces as a raw trace file, one row per load and step.
pub fn write_trace_csv<W: Write>(
    traces: &[LoadTrace],
    grid: &TimeGrid,
    start: NaiveDate,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "load_id", "power_w"])?;
    let origin = start.and_time(NaiveTime::MIN);
    let step = chrono::Duration::minutes(i64::from(grid.step_minutes));
    for t in 0..grid.total_steps {
        let ts = (origin + step * t as i32).format(TIMESTAMP_OUT).to_string();
        for tr in traces {
            w.write_record([ts.as_str(), tr.load_id.as_str(), &tr.power[t].to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("trace output", e))?;
    Ok(())
}

/// Daily usage shape of a synthetic appliance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DutyPattern {
    /// On-blocks per active day.
    pub blocks_per_day: u32,
    /// Preferred hours `[start, end)` for block starts.
    pub window_start_hour: f64,
    pub window_end_hour: f64,
    /// Chance that a given day has any usage.
    pub active_day_probability: f64,
    /// Relative spread of usage between active days, in `[0, 1)`.
    #[serde(default)]
    pub day_weight_spread: f64,
    /// Lag-one correlation of the active-day sequence, in `[0, 1)`; higher values give
    /// longer runs of active and idle days.
    #[serde(default)]
    pub day_persistence: f64,
}

impl DutyPattern {
    fn validate(&self, id: &str) -> Result<()> {
        let ok = self.blocks_per_day >= 1
            && (0.0..24.0).contains(&self.window_start_hour)
            && self.window_end_hour > self.window_start_hour
            && self.window_end_hour <= 24.0
            && self.active_day_probability > 0.0
            && self.active_day_probability <= 1.0
            && (0.0..1.0).contains(&self.day_weight_spread)
            && (0.0..1.0).contains(&self.day_persistence);
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid duty pattern for load `{id}`")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLoadProfile {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub priority: u32,
    pub target_energy_kwh: f64,
    pub on_power_w: f64,
    pub duty: DutyPattern,
    pub seed: u64,
}

impl SyntheticLoadProfile {
    pub fn load_spec(&self) -> LoadSpec {
        LoadSpec::new(self.id.clone(), self.name.clone(), self.priority).with_max_power(self.on_power_w)
    }
}

/// Profile document: a list of `[[load]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub load: Vec<SyntheticLoadProfile>,
}

impl SyntheticConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SyntheticConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.load.is_empty() {
            return Err(Error::Config("profile config has no [[load]] entries".into()));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Shifts every profile seed by `offset`.
    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        for p in &mut self.load {
            p.seed = p.seed.wrapping_add(offset);
        }
        self
    }

    /// Scales every energy target by `factor`.
    pub fn with_energy_scale(mut self, factor: f64) -> Self {
        for p in &mut self.load {
            p.target_energy_kwh *= factor;
        }
        self
    }

    pub fn load_specs(&self) -> Vec<LoadSpec> {
        self.load.iter().map(SyntheticLoadProfile::load_spec).collect()
    }
}

/// Length of the horizon the reference energy targets are set for.
pub const REFERENCE_DAYS: usize = 30;

/// The reference household with its energy targets scaled to a `days`-day horizon.
pub fn reference_profiles_for_days(days: usize) -> SyntheticConfig {
    if days == REFERENCE_DAYS {
        reference_profiles()
    } else {
        reference_profiles().with_energy_scale(days as f64 / REFERENCE_DAYS as f64)
    }
}

/// Four household appliances with the monthly energy, peak power and priority of the
/// reference case study.
pub fn reference_profiles() -> SyntheticConfig {
    let duty = |blocks, start, end, p, spread, persistence| DutyPattern {
        blocks_per_day: blocks,
        window_start_hour: start,
        window_end_hour: end,
        active_day_probability: p,
        day_weight_spread: spread,
        day_persistence: persistence,
    };
    SyntheticConfig {
        load: vec![
            SyntheticLoadProfile {
                id: "A".into(),
                name: "air compressor".into(),
                priority: 2,
                target_energy_kwh: 28.0,
                on_power_w: 1900.0,
                duty: duty(2, 8.0, 18.0, 0.2, 0.5, 0.3),
                seed: 110,
            },
            SyntheticLoadProfile {
                id: "B".into(),
                name: "washing machine".into(),
                priority: 4,
                target_energy_kwh: 2.0,
                on_power_w: 440.0,
                duty: duty(1, 9.0, 20.0, 0.3, 0.3, 0.0),
                seed: 211,
            },
            SyntheticLoadProfile {
                id: "C".into(),
                name: "microwave".into(),
                priority: 3,
                target_energy_kwh: 3.6,
                on_power_w: 1200.0,
                duty: duty(2, 7.0, 21.0, 0.8, 0.3, 0.0),
                seed: 312,
            },
            SyntheticLoadProfile {
                id: "D".into(),
                name: "refrigerator".into(),
                priority: 1,
                target_energy_kwh: 41.0,
                on_power_w: 380.0,
                duty: duty(12, 0.0, 24.0, 1.0, 0.2, 0.0),
                seed: 413,
            },
        ],
    }
}

/// Generates one trace per profile on `grid`.
///
/// Every step runs at the profile's on-power except one partial step that makes the total
/// energy hit the target exactly.
pub fn synthesize_traces(profiles: &[SyntheticLoadProfile], grid: &TimeGrid) -> Result<Vec<LoadTrace>> {
    if profiles.is_empty() {
        return Err(Error::validation("no synthetic profiles given"));
    }
    profiles.iter().map(|p| synthesize_one(p, grid)).collect()
}

fn synthesize_one(p: &SyntheticLoadProfile, grid: &TimeGrid) -> Result<LoadTrace> {
    if !(p.target_energy_kwh > 0.0) || !(p.on_power_w > 0.0) {
        return Err(Error::validation(format!(
            "profile `{}` needs positive target energy and on-power",
            p.id
        )));
    }
    p.duty.validate(&p.id)?;
    let step_wh = p.on_power_w * grid.step_hours;
    let target_wh = p.target_energy_kwh * 1000.0;
    let capacity_wh = step_wh * grid.total_steps as f64;
    if target_wh > capacity_wh * (1.0 + 1e-12) {
        return Err(Error::validation(format!(
            "profile `{}` asks for {} kWh but can deliver at most {} kWh",
            p.id,
            p.target_energy_kwh,
            capacity_wh / 1000.0
        )));
    }
    let full = ((target_wh / step_wh) + 1e-9).floor() as usize;
    let full = full.min(grid.total_steps);
    let remainder = (target_wh - full as f64 * step_wh).max(0.0);
    let partial = remainder > 1e-9 * step_wh && full < grid.total_steps;
    let needed = full + usize::from(partial);

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let spd = grid.steps_per_day;
    let days = grid.num_days;
    let q = p.duty.active_day_probability;
    let rho = p.duty.day_persistence;
    let mut active: Vec<bool> = Vec::with_capacity(days);
    for d in 0..days {
        let prob = match d.checked_sub(1).map(|i| active[i]) {
            None => q,
            Some(true) => q + rho * (1.0 - q),
            Some(false) => q * (1.0 - rho),
        };
        active.push(rng.gen_bool(prob));
    }
    if !active.iter().any(|&a| a) {
        active[rng.gen_range(0..days)] = true;
    }
    let spread = p.duty.day_weight_spread;
    let weights: Vec<f64> = active
        .iter()
        .map(|&a| {
            let w = 1.0 + spread * (2.0 * rng.gen::<f64>() - 1.0);
            if a {
                w
            } else {
                0.0
            }
        })
        .collect();
    let quotas = allocate(needed, &weights, spd);

    let w_start = ((p.duty.window_start_hour / 24.0) * spd as f64).floor() as usize;
    let w_end = (((p.duty.window_end_hour / 24.0) * spd as f64).ceil() as usize).clamp(w_start + 1, spd);
    let mut on = vec![false; grid.total_steps];
    for (day, &quota) in quotas.iter().enumerate() {
        if quota == 0 {
            continue;
        }
        let blocks = (p.duty.blocks_per_day as usize).min(quota);
        let base = day * spd;
        let mut day_on = vec![false; spd];
        for b in 0..blocks {
            let len = quota / blocks + usize::from(b < quota % blocks);
            let mut s = rng.gen_range(w_start..w_end);
            let mut placed = 0;
            while placed < len {
                if !day_on[s] {
                    day_on[s] = true;
                    placed += 1;
                }
                s = (s + 1) % spd;
            }
        }
        for (i, v) in day_on.into_iter().enumerate() {
            on[base + i] = v;
        }
    }

    let mut power: Vec<f64> = on.iter().map(|&o| if o { p.on_power_w } else { 0.0 }).collect();
    if partial {
        if let Some(t) = on.iter().rposition(|&o| o) {
            power[t] = remainder / grid.step_hours;
        }
    }
    LoadTrace::from_power(p.id.clone(), power)
}

/// Splits `total` steps over days in proportion to `weights`, at most `cap` per day.
fn allocate(total: usize, weights: &[f64], cap: usize) -> Vec<usize> {
    let mut quotas = vec![0usize; weights.len()];
    let mut left = total;
    let mut w: Vec<f64> = weights.to_vec();
    while left > 0 {
        let open: Vec<usize> = (0..w.len()).filter(|&d| quotas[d] < cap).collect();
        let mut sum: f64 = open.iter().map(|&d| w[d]).sum();
        if sum <= 0.0 {
            // every weighted day is full; spill into the rest
            for &d in &open {
                w[d] = 1.0;
            }
            sum = open.len() as f64;
        }
        let share = left as f64;
        let mut given = 0;
        let mut rema: Vec<(f64, usize)> = Vec::new();
        for &d in &open {
            let exact = share * w[d] / sum;
            let n = (exact.floor() as usize).min(cap - quotas[d]);
            quotas[d] += n;
            given += n;
            if quotas[d] < cap && w[d] > 0.0 {
                rema.push((exact - exact.floor(), d));
            }
        }
        left -= given;
        rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, d) in rema {
            if left == 0 {
                break;
            }
            if quotas[d] < cap {
                quotas[d] += 1;
                left -= 1;
            }
        }
    }
    quotas
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_time_grid;
    use proptest::prelude::*;

    fn csv_from(rows: &[(&str, &str, f64)]) -> String {
        let mut s = String::from("timestamp,load_id,power_w\n");
        for (ts, id, p) in rows {
            s.push_str(&format!("{ts},{id},{p}\n"));
        }
        s
    }

    #[test]
    fn constant_load_for_a_month() {
        let grid = build_time_grid(15, 30).unwrap();
        let mut s = String::from("timestamp,load_id,power_w\n");
        let origin = NaiveDate::from_ymd_opt(2018, 1, 1)
            .unwrap()
            .and_time(NaiveTime::MIN);
        for t in 0..grid.total_steps {
            let ts = origin + chrono::Duration::minutes(15 * t as i64);
            s.push_str(&format!("{},D,380\n", ts.format(TIMESTAMP_OUT)));
        }
        let traces = read_traces(s.as_bytes(), "mem", &grid).unwrap();
        assert_eq!(traces.len(), 1);
        assert!(traces[0].power.iter().all(|&p| p == 380.0));
        assert!(traces[0].demand.iter().all(|&d| d));
    }

    #[test]
    fn zero_power_means_no_demand() {
        let grid = build_time_grid(360, 1).unwrap();
        let s = csv_from(&[
            ("2018-01-01T00:00:00", "A", 0.0),
            ("2018-01-01T12:00:00", "A", 0.0),
        ]);
        let traces = read_traces(s.as_bytes(), "mem", &grid).unwrap();
        assert_eq!(traces[0].power, vec![0.0; 4]);
        assert!(traces[0].demand.iter().all(|&d| !d));
    }

    #[test]
    fn minute_samples_average_into_a_step() {
        let grid = build_time_grid(15, 1).unwrap();
        let s = csv_from(&[
            ("2018-01-01T00:00:00", "A", 600.0),
            ("2018-01-01T00:01:00", "A", 0.0),
            ("2018-01-01 23:59:00", "A", 0.0),
        ]);
        let traces = read_traces(s.as_bytes(), "mem", &grid).unwrap();
        assert!((traces[0].power[0] - 40.0).abs() < 1e-12);
        assert!(traces[0].demand[0]);
        assert!(traces[0].power[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn errors_name_the_row() {
        let grid = build_time_grid(360, 1).unwrap();
        let neg = csv_from(&[
            ("2018-01-01T00:00:00", "A", 5.0),
            ("2018-01-01T06:00:00", "A", -1.0),
        ]);
        match read_traces(neg.as_bytes(), "f.csv", &grid) {
            Err(Error::Ingest { row, path, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(path, "f.csv");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = "timestamp,load_id,power_w\nyesterday,A,1\n";
        assert!(matches!(
            read_traces(bad.as_bytes(), "f.csv", &grid),
            Err(Error::Ingest { row: 2, .. })
        ));
        let back = csv_from(&[
            ("2018-01-01T06:00:00", "A", 5.0),
            ("2018-01-01T00:00:00", "A", 1.0),
        ]);
        assert!(matches!(
            read_traces(back.as_bytes(), "f.csv", &grid),
            Err(Error::Ingest { row: 3, .. })
        ));
    }

    #[test]
    fn short_trace_is_a_coverage_error() {
        let grid = build_time_grid(360, 2).unwrap();
        let s = csv_from(&[
            ("2018-01-01T00:00:00", "A", 5.0),
            ("2018-01-01T06:00:00", "A", 5.0),
        ]);
        assert!(matches!(
            read_traces(s.as_bytes(), "f.csv", &grid),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn written_traces_read_back() {
        let cfg = reference_profiles();
        let grid = build_time_grid(15, 30).unwrap();
        let traces = synthesize_traces(&cfg.load, &grid).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(
            &traces,
            &grid,
            NaiveDate::from_ymd_opt(2018, 6, 1).unwrap(),
            &mut buf,
        )
        .unwrap();
        let back = read_traces(buf.as_slice(), "mem", &grid).unwrap();
        for (a, b) in traces.iter().zip(&back) {
            assert_eq!(a.load_id, b.load_id);
            for (x, y) in a.power.iter().zip(&b.power) {
                assert!((x - y).abs() < 1e-9 * x.max(1.0));
            }
        }
    }

    #[test]
    fn reference_profiles_hit_targets() {
        let grid = build_time_grid(15, 30).unwrap();
        let cfg = reference_profiles();
        let traces = synthesize_traces(&cfg.load, &grid).unwrap();
        let fridge = &traces[3];
        let e = fridge.energy_kwh(&grid);
        assert!((40.2..=41.8).contains(&e), "{e}");
        let micro = &traces[2];
        let e = micro.energy_kwh(&grid);
        assert!((3.53..=3.67).contains(&e), "{e}");
        for (p, tr) in cfg.load.iter().zip(&traces) {
            assert_eq!(tr.max_power(), p.on_power_w);
        }
    }

    #[test]
    fn zero_target_rejected() {
        let grid = build_time_grid(15, 30).unwrap();
        let mut p = reference_profiles().load.remove(0);
        p.target_energy_kwh = 0.0;
        assert!(synthesize_traces(&[p], &grid).is_err());
        assert!(synthesize_traces(&[], &grid).is_err());
    }

    #[test]
    fn profile_config_round_trip() {
        let cfg = reference_profiles();
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("[[load]]"));
        assert_eq!(SyntheticConfig::from_toml(&text).unwrap(), cfg);
        assert!(SyntheticConfig::from_toml("load = []").is_err());
    }

    #[test]
    fn allocation_respects_caps() {
        assert_eq!(allocate(10, &[1.0, 1.0, 0.0], 4), vec![4, 4, 2]);
        assert_eq!(allocate(6, &[1.0, 2.0], 10), vec![2, 4]);
        assert_eq!(allocate(0, &[1.0], 3), vec![0]);
    }

    proptest! {
        #[test]
        fn resampling_conserves_energy(
            powers in prop::collection::vec(0.0f64..3000.0, 2..60),
            gaps in prop::collection::vec(1u32..90, 60),
        ) {
            // irregular samples over one day on a 15-minute grid
            let grid = build_time_grid(15, 1).unwrap();
            let mut samples = Vec::new();
            let mut s = 0.0;
            for (p, g) in powers.iter().zip(&gaps) {
                samples.push((s, *p));
                s += f64::from(*g) * 60.0;
            }
            let horizon = 86_400.0;
            let last_len = samples[samples.len() - 1].0 - samples[samples.len() - 2].0;
            prop_assume!(samples.last().unwrap().0 + last_len >= horizon);
            let mut raw = 0.0;
            for (i, &(s0, p)) in samples.iter().enumerate() {
                let s1 = samples.get(i + 1).map_or(s0 + last_len, |n| n.0).min(horizon);
                if s1 > s0 {
                    raw += p * (s1 - s0);
                }
            }
            let out = resample("A", &samples, &grid).unwrap();
            let got: f64 = out.iter().sum::<f64>() * 900.0;
            prop_assert!((got - raw).abs() <= 1e-3 * raw.max(1.0));
        }

        #[test]
        fn synthesis_is_reproducible(seed in any::<u64>()) {
            let grid = build_time_grid(15, 30).unwrap();
            let cfg = reference_profiles().with_seed_offset(seed);
            let a = synthesize_traces(&cfg.load, &grid).unwrap();
            let b = synthesize_traces(&cfg.load, &grid).unwrap();
            prop_assert_eq!(&a, &b);
            for (p, tr) in cfg.load.iter().zip(&a) {
                let e = tr.energy_kwh(&grid);
                prop_assert!((e - p.target_energy_kwh).abs() <= 0.02 * p.target_energy_kwh);
            }
        }
    }
}
