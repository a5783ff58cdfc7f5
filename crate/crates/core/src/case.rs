//! Test-system description: network, units, load and system parameters.
//!
//! Quantities are held in MW, MWh and seconds. Line susceptances are per unit
//! on `params.base_mva`, so the DC flow on a line is `base_mva · B · (θi − θj)`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorParams {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Nominal frequency (Hz).
    pub f0: f64,
    /// Maximum admissible RoCoF (Hz/s).
    pub rocof_max: f64,
    /// Maximum admissible frequency deviation (Hz).
    pub df_max: f64,
    /// Minimum equivalent inertia (s).
    pub h_min: f64,
    /// Power base of the inertia requirement (MW).
    pub p_sys: f64,
    pub periods: usize,
    pub base_mva: f64,
    /// System-wide power-error parameters. When present they replace the
    /// aggregation of per-unit RES power errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate_error: Option<ErrorParams>,
}

impl SystemParams {
    /// Inertia requirement `Psys · Hmin` in MW·s.
    pub fn inertia_requirement(&self) -> f64 {
        self.p_sys * self.h_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    /// Per unit on the MVA base.
    pub susceptance: f64,
    /// Thermal limit (MW).
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    pub buses: Vec<BusId>,
    pub lines: Vec<Line>,
    pub slack_bus: BusId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgUnit {
    pub id: String,
    pub bus: BusId,
    /// $/MW²h
    pub a: f64,
    /// $/MWh
    pub b: f64,
    /// No-load cost, $/h
    pub c: f64,
    /// Start-up cost, $
    pub startup: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub min_up: usize,
    pub min_down: usize,
    /// Inertia constant (s).
    pub inertia: f64,
    pub eps: f64,
    pub u0: bool,
    pub p0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsUnit {
    pub id: String,
    pub bus: BusId,
    pub p_dis_max: f64,
    pub p_ch_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    /// One-way efficiency.
    pub efficiency: f64,
    /// Maximum emulated inertia constant (s).
    pub h_max: f64,
    pub e0: f64,
    pub eps_d: f64,
    pub eps_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResKind {
    Pv,
    Wt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResUnit {
    pub id: String,
    pub bus: BusId,
    pub kind: ResKind,
    pub p_max: f64,
    pub forecast: Vec<f64>,
    pub err_mean: Vec<f64>,
    pub err_std: Vec<f64>,
    pub inertia: Vec<f64>,
    pub inertia_err_mean: Vec<f64>,
    pub inertia_err_std: Vec<f64>,
    pub eps_h: f64,
    pub mppt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusLoad {
    pub bus: BusId,
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemCase {
    pub schema_version: u32,
    pub params: SystemParams,
    pub network: Network,
    #[serde(default)]
    pub sgs: Vec<SgUnit>,
    #[serde(default)]
    pub ess: Vec<EsUnit>,
    #[serde(default)]
    pub ress: Vec<ResUnit>,
    #[serde(default)]
    pub load: Vec<BusLoad>,
}

pub fn load_case(path: impl AsRef<Path>) -> Result<SystemCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SystemCase::from_json(&text)
}

pub fn save_case(case: &SystemCase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, case.to_json()).map_err(|e| Error::io(path, e))
}

impl SystemCase {
    pub fn from_json(text: &str) -> Result<Self> {
        let case: SystemCase = serde_json::from_str(text)?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("case serializes");
        s.push('\n');
        s
    }

    pub fn periods(&self) -> usize {
        self.params.periods
    }

    pub fn bus_index(&self, bus: BusId) -> Option<usize> {
        self.network.buses.iter().position(|&b| b == bus)
    }

    /// Demand per bus index and hour.
    pub fn demand_matrix(&self) -> Vec<Vec<f64>> {
        let t = self.periods();
        let mut d = vec![vec![0.0; t]; self.network.buses.len()];
        for l in &self.load {
            if let Some(i) = self.bus_index(l.bus) {
                for (h, v) in l.demand.iter().enumerate().take(t) {
                    d[i][h] += v;
                }
            }
        }
        d
    }

    pub fn total_demand(&self, t: usize) -> f64 {
        self.load.iter().map(|l| l.demand[t]).sum()
    }

    /// RES forecast injection per bus index and hour.
    pub fn res_matrix(&self) -> Vec<Vec<f64>> {
        let t = self.periods();
        let mut r = vec![vec![0.0; t]; self.network.buses.len()];
        for u in &self.ress {
            if let Some(i) = self.bus_index(u.bus) {
                for h in 0..t {
                    r[i][h] += u.forecast[h];
                }
            }
        }
        r
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::field(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            ));
        }
        validate_params(&self.params)?;
        validate_network(&self.network)?;
        let buses: HashSet<BusId> = self.network.buses.iter().copied().collect();
        let t = self.params.periods;
        let mut ids = HashSet::new();
        let mut check_id = |path: &str, id: &str| -> Result<()> {
            if id.is_empty() {
                return Err(Error::field(format!("{path}.id"), "empty id"));
            }
            if !ids.insert(id.to_string()) {
                return Err(Error::field(format!("{path}.id"), format!("duplicate unit id {id:?}")));
            }
            Ok(())
        };
        for (k, g) in self.sgs.iter().enumerate() {
            let path = format!("sgs[{k}]({})", g.id);
            check_id(&path, &g.id)?;
            validate_sg(&path, g, &buses)?;
        }
        for (k, e) in self.ess.iter().enumerate() {
            let path = format!("ess[{k}]({})", e.id);
            check_id(&path, &e.id)?;
            validate_es(&path, e, &buses)?;
        }
        for (k, r) in self.ress.iter().enumerate() {
            let path = format!("ress[{k}]({})", r.id);
            check_id(&path, &r.id)?;
            validate_res(&path, r, &buses, t)?;
        }
        let mut seen = HashSet::new();
        for (k, l) in self.load.iter().enumerate() {
            let path = format!("load[{k}]");
            if !buses.contains(&l.bus) {
                return Err(Error::field(format!("{path}.bus"), format!("unknown bus {}", l.bus)));
            }
            if !seen.insert(l.bus) {
                return Err(Error::field(format!("{path}.bus"), format!("bus {} listed twice", l.bus)));
            }
            series(&format!("{path}.demand"), &l.demand, t)?;
            for (h, v) in l.demand.iter().enumerate() {
                if *v < 0.0 {
                    return Err(Error::field(format!("{path}.demand[{h}]"), "negative demand"));
                }
            }
        }
        Ok(())
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::field(path, "not a finite number"))
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    finite(path, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::field(path, format!("must be > 0, got {v}")))
    }
}

fn nonneg(path: &str, v: f64) -> Result<()> {
    finite(path, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(Error::field(path, format!("must be >= 0, got {v}")))
    }
}

fn chance_level(path: &str, v: f64) -> Result<()> {
    finite(path, v)?;
    if v > 0.0 && v < 0.5 {
        Ok(())
    } else {
        Err(Error::field(path, format!("must lie in (0, 0.5), got {v}")))
    }
}

fn series(path: &str, s: &[f64], t: usize) -> Result<()> {
    if s.len() != t {
        return Err(Error::field(path, format!("length {} but {t} periods", s.len())));
    }
    for (h, v) in s.iter().enumerate() {
        finite(&format!("{path}[{h}]"), *v)?;
    }
    Ok(())
}

fn known_bus(path: &str, bus: BusId, buses: &HashSet<BusId>) -> Result<()> {
    if buses.contains(&bus) {
        Ok(())
    } else {
        Err(Error::field(format!("{path}.bus"), format!("unknown bus {bus}")))
    }
}

fn validate_params(p: &SystemParams) -> Result<()> {
    positive("params.f0", p.f0)?;
    positive("params.rocof_max", p.rocof_max)?;
    positive("params.df_max", p.df_max)?;
    positive("params.h_min", p.h_min)?;
    positive("params.p_sys", p.p_sys)?;
    positive("params.base_mva", p.base_mva)?;
    if p.periods < 1 {
        return Err(Error::field("params.periods", "must be >= 1"));
    }
    if let Some(e) = &p.aggregate_error {
        finite("params.aggregate_error.mean", e.mean)?;
        nonneg("params.aggregate_error.std", e.std)?;
    }
    Ok(())
}

fn validate_network(n: &Network) -> Result<()> {
    if n.buses.is_empty() {
        return Err(Error::field("network.buses", "no buses"));
    }
    let mut set = HashSet::new();
    for (k, b) in n.buses.iter().enumerate() {
        if !set.insert(*b) {
            return Err(Error::field(format!("network.buses[{k}]"), format!("duplicate bus {b}")));
        }
    }
    if !set.contains(&n.slack_bus) {
        return Err(Error::field("network.slack_bus", format!("unknown bus {}", n.slack_bus)));
    }
    let index: HashMap<BusId, usize> = n.buses.iter().enumerate().map(|(i, b)| (*b, i)).collect();
    let mut parent: Vec<usize> = (0..n.buses.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (k, l) in n.lines.iter().enumerate() {
        let path = format!("network.lines[{k}]");
        let (Some(&i), Some(&j)) = (index.get(&l.from), index.get(&l.to)) else {
            return Err(Error::field(
                path,
                format!("endpoint {}-{} is not a declared bus", l.from, l.to),
            ));
        };
        if i == j {
            return Err(Error::field(format!("{path}.to"), "line connects a bus to itself"));
        }
        positive(&format!("{path}.susceptance"), l.susceptance)?;
        positive(&format!("{path}.limit"), l.limit)?;
        let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
        parent[ri] = rj;
    }
    let roots: BTreeSet<usize> = (0..n.buses.len()).map(|i| root(&mut parent, i)).collect();
    if roots.len() > 1 {
        return Err(Error::field(
            "network.lines",
            format!("network is not connected ({} islands)", roots.len()),
        ));
    }
    Ok(())
}

fn validate_sg(path: &str, g: &SgUnit, buses: &HashSet<BusId>) -> Result<()> {
    known_bus(path, g.bus, buses)?;
    nonneg(&format!("{path}.a"), g.a)?;
    finite(&format!("{path}.b"), g.b)?;
    finite(&format!("{path}.c"), g.c)?;
    nonneg(&format!("{path}.startup"), g.startup)?;
    nonneg(&format!("{path}.p_min"), g.p_min)?;
    finite(&format!("{path}.p_max"), g.p_max)?;
    if g.p_min > g.p_max {
        return Err(Error::field(
            format!("{path}.p_min"),
            format!("p_min {} exceeds p_max {}", g.p_min, g.p_max),
        ));
    }
    nonneg(&format!("{path}.ramp_up"), g.ramp_up)?;
    nonneg(&format!("{path}.ramp_down"), g.ramp_down)?;
    if g.min_up < 1 {
        return Err(Error::field(format!("{path}.min_up"), "must be >= 1"));
    }
    if g.min_down < 1 {
        return Err(Error::field(format!("{path}.min_down"), "must be >= 1"));
    }
    nonneg(&format!("{path}.inertia"), g.inertia)?;
    chance_level(&format!("{path}.eps"), g.eps)?;
    nonneg(&format!("{path}.p0"), g.p0)?;
    if g.p0 > g.p_max {
        return Err(Error::field(format!("{path}.p0"), "exceeds p_max"));
    }
    if !g.u0 && g.p0 != 0.0 {
        return Err(Error::field(format!("{path}.p0"), "offline unit with nonzero output"));
    }
    Ok(())
}

fn validate_es(path: &str, e: &EsUnit, buses: &HashSet<BusId>) -> Result<()> {
    known_bus(path, e.bus, buses)?;
    nonneg(&format!("{path}.p_dis_max"), e.p_dis_max)?;
    nonneg(&format!("{path}.p_ch_max"), e.p_ch_max)?;
    nonneg(&format!("{path}.e_min"), e.e_min)?;
    finite(&format!("{path}.e0"), e.e0)?;
    finite(&format!("{path}.e_max"), e.e_max)?;
    if e.e0 < e.e_min {
        return Err(Error::field(format!("{path}.e0"), "below e_min"));
    }
    if e.e0 > e.e_max {
        return Err(Error::field(format!("{path}.e0"), "above e_max"));
    }
    finite(&format!("{path}.efficiency"), e.efficiency)?;
    if !(e.efficiency > 0.0 && e.efficiency <= 1.0) {
        return Err(Error::field(format!("{path}.efficiency"), "must lie in (0, 1]"));
    }
    nonneg(&format!("{path}.h_max"), e.h_max)?;
    chance_level(&format!("{path}.eps_d"), e.eps_d)?;
    chance_level(&format!("{path}.eps_c"), e.eps_c)?;
    Ok(())
}

fn validate_res(path: &str, r: &ResUnit, buses: &HashSet<BusId>, t: usize) -> Result<()> {
    known_bus(path, r.bus, buses)?;
    nonneg(&format!("{path}.p_max"), r.p_max)?;
    for (name, s) in [
        ("forecast", &r.forecast),
        ("err_mean", &r.err_mean),
        ("err_std", &r.err_std),
        ("inertia", &r.inertia),
        ("inertia_err_mean", &r.inertia_err_mean),
        ("inertia_err_std", &r.inertia_err_std),
        ("mppt", &r.mppt),
    ] {
        series(&format!("{path}.{name}"), s, t)?;
    }
    // allow for rounding when the profile was produced by scaling
    let slack = 1e-9 * r.p_max.max(1.0);
    for h in 0..t {
        if r.forecast[h] < 0.0 {
            return Err(Error::field(format!("{path}.forecast[{h}]"), "negative forecast"));
        }
        if r.forecast[h] > r.mppt[h] + slack {
            return Err(Error::field(format!("{path}.forecast[{h}]"), "exceeds mppt"));
        }
        if r.mppt[h] > r.p_max + slack {
            return Err(Error::field(format!("{path}.mppt[{h}]"), "exceeds p_max"));
        }
        if r.err_std[h] < 0.0 {
            return Err(Error::field(format!("{path}.err_std[{h}]"), "negative"));
        }
        if r.inertia_err_std[h] < 0.0 {
            return Err(Error::field(format!("{path}.inertia_err_std[{h}]"), "negative"));
        }
        if r.inertia[h] < 0.0 {
            return Err(Error::field(format!("{path}.inertia[{h}]"), "negative"));
        }
    }
    chance_level(&format!("{path}.eps_h"), r.eps_h)?;
    Ok(())
}

/// Rescales RES forecasts so that RES energy is `eta` of total demand energy.
///
/// Forecast, mppt and power-error parameters of every RES unit are multiplied
/// by one system-wide factor. Ratings, inertia series and all non-RES data are
/// left untouched.
pub fn scale_penetration(case: &SystemCase, eta: f64) -> Result<SystemCase> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::Invalid(format!("penetration {eta} outside [0, 1)")));
    }
    let t = case.periods();
    let demand: f64 = (0..t).map(|h| case.total_demand(h)).sum();
    if demand <= 0.0 {
        return Err(Error::Invalid("total demand is zero".into()));
    }
    let res: f64 = case.ress.iter().flat_map(|r| r.forecast.iter()).sum();
    let k = if eta == 0.0 {
        0.0
    } else if res <= 0.0 {
        return Err(Error::Invalid(format!(
            "penetration {eta} requested but RES forecast energy is zero"
        )));
    } else {
        let k = eta * demand / res;
        if (k - 1.0).abs() <= 1e-12 {
            1.0
        } else {
            k
        }
    };
    let mut out = case.clone();
    for r in out.ress.iter_mut() {
        for s in [&mut r.forecast, &mut r.mppt, &mut r.err_mean, &mut r.err_std] {
            s.iter_mut().for_each(|v| *v *= k);
        }
        if let Some((h, m)) = r
            .mppt
            .iter()
            .enumerate()
            .find(|(_, m)| **m > r.p_max * (1.0 + 1e-12))
        {
            return Err(Error::Infeasible {
                family: "penetration".into(),
                detail: format!(
                    "{} would need {m:.3} MW at hour {h}, above its {} MW rating",
                    r.id, r.p_max
                ),
            });
        }
    }
    Ok(out)
}
