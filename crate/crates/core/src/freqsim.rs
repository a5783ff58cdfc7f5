//! Aggregate system frequency response after a generation outage.
//!
//! Single-machine equivalent in per unit of the pre-outage load:
//!
//! ```text
//! 2H dΔf/dt = ΔPm − ΔPL − D Δf
//! ΔPm       = −(Km / R) (Fh Δf + (1 − Fh) x)
//! Tr dx/dt  = Δf − x
//! ```
//!
//! which is the reheat governor `Km (1 + Fh Tr s) / (R (1 + Tr s))` acting on
//! `−Δf`. `H = E / P_load` with `E` the kinetic energy of the hour.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::case::SystemCase;
use crate::error::{Error, Result};
use crate::solver::DecisionSchedule;
use crate::uncertainty::ChanceMargins;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfrParams {
    /// Load damping (pu/pu).
    pub d: f64,
    /// Droop (pu).
    pub r: f64,
    /// High-pressure turbine fraction.
    pub fh: f64,
    /// Reheat time constant (s).
    pub tr: f64,
    /// Mechanical power gain.
    pub km: f64,
    /// Integration step (s).
    pub dt: f64,
    /// Simulated time (s).
    pub horizon: f64,
}

impl Default for SfrParams {
    fn default() -> Self {
        SfrParams {
            d: 1.0,
            r: 0.05,
            fh: 0.3,
            tr: 8.0,
            km: 0.95,
            dt: 1e-3,
            horizon: 30.0,
        }
    }
}

impl SfrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tr > 0.0) {
            return Err(Error::field("sfr.tr", "must be > 0"));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::field("sfr.dt", "must lie in (0, 0.01]"));
        }
        if !(self.horizon >= 30.0) {
            return Err(Error::field("sfr.horizon", "must be >= 30 s"));
        }
        if !(self.r > 0.0) {
            return Err(Error::field("sfr.r", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrajectory {
    pub time: Vec<f64>,
    /// Frequency deviation (Hz).
    pub df: Vec<f64>,
    /// Slope over the first step (Hz/s).
    pub rocof_initial: f64,
    /// Lowest absolute frequency (Hz).
    pub nadir: f64,
    pub nadir_time: f64,
}

impl FrequencyTrajectory {
    /// Writes `t,df` rows, keeping every `stride`-th sample.
    pub fn write_csv(&self, path: &Path, stride: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "df"])?;
        for k in (0..self.time.len()).step_by(stride.max(1)) {
            w.write_record([self.time[k].to_string(), self.df[k].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Closed-form initial slope `−dP f0 / (2E)` in Hz/s.
pub fn rocof_formula(e: f64, dp: f64, f0: f64) -> f64 {
    -dp * f0 / (2.0 * e)
}

/// Integrates the response to a step loss of `dp` MW with fixed-step RK4.
pub fn simulate_outage(e: f64, p_load: f64, dp: f64, params: &SfrParams, f0: f64) -> Result<FrequencyTrajectory> {
    params.validate()?;
    if !(e > 0.0) {
        return Err(Error::field("kinetic_energy", "must be > 0"));
    }
    if !(p_load > 0.0) || dp < 0.0 || dp >= p_load {
        return Err(Error::field("outage", format!("need 0 <= dP < load, got dP {dp} with load {p_load}")));
    }
    let h = e / p_load;
    let dpl = dp / p_load;
    let p = *params;
    // state: (Δf pu, x pu)
    let rhs = |s: [f64; 2]| -> [f64; 2] {
        let pm = -(p.km / p.r) * (p.fh * s[0] + (1.0 - p.fh) * s[1]);
        [(pm - dpl - p.d * s[0]) / (2.0 * h), (s[0] - s[1]) / p.tr]
    };
    let steps = (p.horizon / p.dt).round() as usize;
    let mut time = Vec::with_capacity(steps + 1);
    let mut df = Vec::with_capacity(steps + 1);
    let mut s = [0.0, 0.0];
    time.push(0.0);
    df.push(0.0);
    let (mut nadir, mut nadir_time) = (0.0_f64, 0.0);
    for k in 1..=steps {
        let add = |a: [f64; 2], b: [f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
        let k1 = rhs(s);
        let k2 = rhs(add(s, k1, p.dt / 2.0));
        let k3 = rhs(add(s, k2, p.dt / 2.0));
        let k4 = rhs(add(s, k3, p.dt));
        for i in 0..2 {
            s[i] += p.dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = k as f64 * p.dt;
        let hz = s[0] * f0;
        time.push(t);
        df.push(hz);
        if hz < nadir {
            nadir = hz;
            nadir_time = t;
        }
    }
    let rocof_initial = if steps > 0 { df[1] / p.dt } else { 0.0 };
    Ok(FrequencyTrajectory {
        time,
        df,
        rocof_initial,
        nadir: f0 + nadir,
        nadir_time,
    })
}

/// Kinetic energy of hour `t`, the left-hand side of the inertia row.
pub fn kinetic_energy(case: &SystemCase, margins: &ChanceMargins, schedule: &DecisionSchedule, t: usize) -> f64 {
    schedule.inertia_supply(case, margins, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetric {
    pub scenario: String,
    pub hour: usize,
    /// MW·s
    pub kinetic_energy: f64,
    /// MW
    pub outage: f64,
    pub rocof: f64,
    pub nadir: f64,
}

/// Outage used for an hour: `fixed` when given, else the largest scheduled
/// SG output.
pub fn outage_size(case: &SystemCase, schedule: &DecisionSchedule, t: usize, fixed: Option<f64>) -> f64 {
    fixed.unwrap_or_else(|| {
        (0..case.sgs.len())
            .map(|g| schedule.p[g][t])
            .fold(0.0, f64::max)
    })
}

/// RoCoF and nadir for each scenario schedule at the requested hours.
pub fn scenario_frequency_metrics(
    case: &SystemCase,
    margins: &ChanceMargins,
    schedules: &[(String, &DecisionSchedule)],
    hours: &[usize],
    params: &SfrParams,
    outage: Option<f64>,
) -> Result<Vec<FrequencyMetric>> {
    let mut rows = Vec::new();
    for (name, s) in schedules {
        for &t in hours {
            if t >= case.periods() {
                return Err(Error::Invalid(format!("hour {t} outside the horizon")));
            }
            let e = kinetic_energy(case, margins, s, t);
            let dp = outage_size(case, s, t, outage);
            let traj = simulate_outage(e, case.total_demand(t), dp, params, case.params.f0)?;
            rows.push(FrequencyMetric {
                scenario: name.clone(),
                hour: t,
                kinetic_energy: e,
                outage: dp,
                rocof: traj.rocof_initial,
                nadir: traj.nadir,
            });
        }
    }
    Ok(rows)
}

/// Rows of `scenario` whose |RoCoF| exceeds that of `base` in the same hour.
pub fn rocof_regressions<'a>(rows: &'a [FrequencyMetric], base: &str, scenario: &str) -> Vec<&'a FrequencyMetric> {
    rows.iter()
        .filter(|r| r.scenario == scenario)
        .filter(|r| {
            rows.iter()
                .find(|b| b.scenario == base && b.hour == r.hour)
                .is_some_and(|b| r.rocof.abs() > b.rocof.abs() + 1e-9)
        })
        .collect()
}

pub fn write_metrics_csv(rows: &[FrequencyMetric], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Hours with the lowest and highest kinetic energy, lowest index first.
pub fn extreme_hours(case: &SystemCase, margins: &ChanceMargins, schedule: &DecisionSchedule) -> Vec<usize> {
    let e: Vec<f64> = (0..case.periods()).map(|t| kinetic_energy(case, margins, schedule, t)).collect();
    let pick = |better: fn(f64, f64) -> bool| {
        let mut k = 0;
        for t in 1..e.len() {
            if better(e[t], e[k]) {
                k = t;
            }
        }
        k
    };
    let lo = pick(|a, b| a < b);
    let hi = pick(|a, b| a > b);
    let mut v = vec![lo, hi];
    v.sort_unstable();
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_slope_matches_formula() {
        let tr = simulate_outage(45_000.0, 12_651.0, 1500.0, &SfrParams::default(), 60.0).unwrap();
        assert!((rocof_formula(45_000.0, 1500.0, 60.0) + 1.0).abs() < 1e-12);
        assert!((tr.rocof_initial + 1.0).abs() < 0.01);
        assert!(tr.nadir < 60.0);
    }

    #[test]
    fn no_disturbance_stays_flat() {
        let tr = simulate_outage(45_000.0, 12_651.0, 0.0, &SfrParams::default(), 60.0).unwrap();
        assert!(tr.df.iter().all(|&x| x == 0.0));
        assert_eq!(tr.nadir, 60.0);
    }

    #[test]
    fn zero_energy_rejected() {
        assert!(simulate_outage(0.0, 100.0, 10.0, &SfrParams::default(), 60.0).is_err());
    }
}
