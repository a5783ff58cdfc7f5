//! Unit settlement with make-whole uplift, RES opportunity payments,
//! reliability-must-run commitment and cross-scheme comparison.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::case::SystemCase;
use crate::error::{Error, Result};
use crate::model::ModelFlags;
use crate::pricing::PriceSeries;
use crate::solver::DecisionSchedule;
use crate::uncertainty::{expected_sg_cost, ChanceMargins};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitClass {
    Sg,
    Es,
    Res,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSettlement {
    pub unit: String,
    pub class: UnitClass,
    pub production_cost: f64,
    pub energy_revenue: f64,
    pub reserve_revenue: f64,
    pub inertia_revenue: f64,
    pub uplift: f64,
    pub opportunity: f64,
    pub net_profit: f64,
}

impl UnitSettlement {
    pub fn market_revenue(&self) -> f64 {
        self.energy_revenue + self.reserve_revenue + self.inertia_revenue
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ProductTotals {
    pub energy: f64,
    pub reserve: f64,
    pub inertia: f64,
}

impl ProductTotals {
    pub fn sum(&self) -> f64 {
        self.energy + self.reserve + self.inertia
    }
}

/// Settled quantity of reserve per unit of participation.
pub const RESERVE_CONVENTION: &str = "reserve settled on participation factor times one";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementReport {
    pub scheme: String,
    pub units: Vec<UnitSettlement>,
    /// What load pays at the published prices: `λ·D`, `γ` per hour and
    /// `χ` times the inertia requirement.
    pub load_charges: ProductTotals,
    /// What units receive at the same prices.
    pub unit_revenues: ProductTotals,
    pub total_uplift: f64,
    pub total_opportunity: f64,
    /// Unit revenues plus uplift plus opportunity payments.
    pub consumer_payment: f64,
    pub reserve_convention: String,
    /// RES units paid for inertia and for deloading in the same run.
    #[serde(default)]
    pub double_payment: Vec<String>,
}

impl SettlementReport {
    pub fn unit(&self, id: &str) -> Option<&UnitSettlement> {
        self.units.iter().find(|u| u.unit == id)
    }

    pub fn class_profit(&self, class: UnitClass) -> f64 {
        self.units.iter().filter(|u| u.class == class).map(|u| u.net_profit).sum()
    }

    /// Writes one CSV row per unit and a JSON summary.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join(format!("{stem}_units.csv"));
        let mut w = csv::Writer::from_path(&csv_path)?;
        for u in &self.units {
            w.serialize(u)?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))?;
        Ok(vec![csv_path, json])
    }

    pub fn read_units(path: &Path) -> Result<Vec<UnitSettlement>> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}

fn lambda_row<'a>(prices: &'a PriceSeries, bus: u32, id: &str) -> Result<&'a Vec<f64>> {
    let i = prices
        .buses
        .iter()
        .position(|&b| b == bus)
        .ok_or_else(|| Error::Invalid(format!("{id} sits at bus {bus}, which has no price")))?;
    Ok(&prices.lambda[i])
}

/// Deloading payment per RES unit: `Σ λ (mppt − forecast)`.
pub fn res_opportunity(case: &SystemCase, prices: &PriceSeries) -> Result<Vec<f64>> {
    case.ress
        .iter()
        .map(|r| {
            let lam = lambda_row(prices, r.bus, &r.id)?;
            Ok((0..case.periods())
                .map(|t| lam[t] * (r.mppt[t] - r.forecast[t]).max(0.0))
                .sum())
        })
        .collect()
}

fn finish(unit: String, class: UnitClass, cost: f64, rev: ProductTotals, opportunity: f64) -> UnitSettlement {
    let market = rev.sum();
    let uplift = (cost - market).max(0.0);
    UnitSettlement {
        unit,
        class,
        production_cost: cost,
        energy_revenue: rev.energy,
        reserve_revenue: rev.reserve,
        inertia_revenue: rev.inertia,
        uplift,
        opportunity,
        net_profit: market + uplift + opportunity - cost,
    }
}

/// Settles every unit at `prices` with uplift clamped per unit over the
/// horizon.
///
/// `pay_opportunity` adds the RES deloading payment.
pub fn settle(
    case: &SystemCase,
    margins: &ChanceMargins,
    flags: &ModelFlags,
    schedule: &DecisionSchedule,
    prices: &PriceSeries,
    label: &str,
    pay_opportunity: bool,
) -> Result<SettlementReport> {
    let nt = case.periods();
    if prices.periods() != nt || schedule.p.len() != case.sgs.len() {
        return Err(Error::Invalid("schedule, prices and case disagree on dimensions".into()));
    }
    let mut units = Vec::new();
    let mut revenues = ProductTotals::default();
    let mut add = |r: &ProductTotals| {
        revenues.energy += r.energy;
        revenues.reserve += r.reserve;
        revenues.inertia += r.inertia;
    };
    for (g, sg) in case.sgs.iter().enumerate() {
        let lam = lambda_row(prices, sg.bus, &sg.id)?;
        let mut cost = 0.0;
        let mut r = ProductTotals::default();
        for t in 0..nt {
            let (u, p, a) = (schedule.u[g][t], schedule.p[g][t], schedule.alpha[g][t]);
            cost += expected_sg_cost(sg, p, a, u, schedule.v[g][t], margins.errors.m_r[t], margins.errors.s_r[t]);
            r.energy += lam[t] * p;
            r.reserve += prices.gamma[t] * a;
            r.inertia += prices.chi[t] * sg.inertia * sg.p_max * u;
        }
        add(&r);
        units.push(finish(sg.id.clone(), UnitClass::Sg, cost, r, 0.0));
    }
    for (e, es) in case.ess.iter().enumerate() {
        let lam = lambda_row(prices, es.bus, &es.id)?;
        let mut r = ProductTotals::default();
        for t in 0..nt {
            r.energy += lam[t] * (schedule.p_dis[e][t] - schedule.p_ch[e][t]);
            r.reserve += prices.gamma[t] * (schedule.alpha_dis[e][t] - schedule.alpha_ch[e][t]);
            r.inertia += prices.chi[t] * schedule.h_e[e][t] * es.p_dis_max;
        }
        add(&r);
        units.push(finish(es.id.clone(), UnitClass::Es, 0.0, r, 0.0));
    }
    let opportunity = res_opportunity(case, prices)?;
    let mut double_payment = Vec::new();
    for (k, res) in case.ress.iter().enumerate() {
        let lam = lambda_row(prices, res.bus, &res.id)?;
        let mut r = ProductTotals::default();
        for t in 0..nt {
            r.energy += lam[t] * res.forecast[t];
            if flags.inertia {
                let h = res.inertia[t] + margins.res_inertia[k][t];
                r.inertia += prices.chi[t] * h * res.p_max;
            }
        }
        add(&r);
        let opp = if pay_opportunity { opportunity[k] } else { 0.0 };
        if opp > 0.0 && r.inertia > 0.0 {
            double_payment.push(res.id.clone());
        }
        units.push(finish(res.id.clone(), UnitClass::Res, 0.0, r, opp));
    }
    let demand = case.demand_matrix();
    let mut load = ProductTotals::default();
    for t in 0..nt {
        for (b, row) in demand.iter().enumerate() {
            load.energy += prices.lambda[b][t] * row[t];
        }
        load.reserve += prices.gamma[t];
        load.inertia += prices.chi[t] * flags.requirement(case, t);
    }
    let total_uplift: f64 = units.iter().map(|u| u.uplift).sum();
    let total_opportunity: f64 = units.iter().map(|u| u.opportunity).sum();
    Ok(SettlementReport {
        scheme: label.into(),
        load_charges: load,
        unit_revenues: revenues,
        consumer_payment: revenues.sum() + total_uplift + total_opportunity,
        total_uplift,
        total_opportunity,
        units,
        reserve_convention: RESERVE_CONVENTION.into(),
        double_payment,
    })
}

/// Commitment with reliability-must-run additions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmrOverlay {
    pub commitment: Vec<Vec<bool>>,
    /// `(unit id, hour)` pairs switched on.
    pub added: Vec<(String, usize)>,
}

/// Cost per MW at minimum output, the RMR merit order.
pub fn rmr_merit(a: f64, b: f64, c: f64, p_min: f64) -> f64 {
    if p_min > 0.0 {
        (a * p_min * p_min + b * p_min + c) / p_min
    } else {
        b
    }
}

/// Adds offline SGs in ascending cost at minimum output, ties by id, to
/// every hour whose inertia falls short of the requirement.
pub fn rmr_select(
    case: &SystemCase,
    margins: &ChanceMargins,
    requirement: &ModelFlags,
    base: &DecisionSchedule,
) -> Result<RmrOverlay> {
    let mut commitment = base.commitment();
    let mut order: Vec<usize> = (0..case.sgs.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&case.sgs[i], &case.sgs[j]);
        rmr_merit(a.a, a.b, a.c, a.p_min)
            .total_cmp(&rmr_merit(b.a, b.b, b.c, b.p_min))
            .then_with(|| a.id.cmp(&b.id))
    });
    let mut added = Vec::new();
    for t in 0..case.periods() {
        let req = requirement.requirement(case, t);
        let mut have = crate::model::inertia_supply(
            case,
            margins,
            t,
            |g| if commitment[g][t] { 1.0 } else { 0.0 },
            |e| base.h_e[e][t],
        );
        for &g in &order {
            if have >= req - 1e-9 * req.max(1.0) {
                break;
            }
            if !commitment[g][t] {
                commitment[g][t] = true;
                have += case.sgs[g].inertia * case.sgs[g].p_max;
                added.push((case.sgs[g].id.clone(), t));
            }
        }
        if have < req - 1e-9 * req.max(1.0) {
            return Err(Error::Infeasible {
                family: "inertia".into(),
                detail: format!("hour {t}: {have:.3} MW·s with every SG online, {req:.3} required"),
            });
        }
    }
    added.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    Ok(RmrOverlay { commitment, added })
}

/// Side-by-side totals of several settlements of the same case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: String,
    pub total_uplift: f64,
    pub consumer_payment: f64,
    pub sg_profit: f64,
    pub es_profit: f64,
    pub res_profit: f64,
    /// Differences against the first report.
    pub delta_uplift: f64,
    pub delta_consumer_payment: f64,
}

impl SchemeComparison {
    pub fn row(&self, scheme: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.scheme == scheme)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn compare_schemes(reports: &[SettlementReport]) -> Result<SchemeComparison> {
    if reports.len() < 2 {
        return Err(Error::Invalid("comparison needs at least two reports".into()));
    }
    let ids = |r: &SettlementReport| -> BTreeMap<String, UnitClass> {
        r.units.iter().map(|u| (u.unit.clone(), u.class)).collect()
    };
    let first = ids(&reports[0]);
    for r in &reports[1..] {
        if ids(r) != first {
            return Err(Error::Invalid(format!(
                "report {} covers a different unit set than {}",
                r.scheme, reports[0].scheme
            )));
        }
    }
    let base = &reports[0];
    Ok(SchemeComparison {
        rows: reports
            .iter()
            .map(|r| ComparisonRow {
                scheme: r.scheme.clone(),
                total_uplift: r.total_uplift,
                consumer_payment: r.consumer_payment,
                sg_profit: r.class_profit(UnitClass::Sg),
                es_profit: r.class_profit(UnitClass::Es),
                res_profit: r.class_profit(UnitClass::Res),
                delta_uplift: r.total_uplift - base.total_uplift,
                delta_consumer_payment: r.consumer_payment - base.consumer_payment,
            })
            .collect(),
    })
}

/// RES inertia constants after the chance adjustment, `[unit][hour]`.
pub fn adjusted_res_inertia(case: &SystemCase, margins: &ChanceMargins) -> Vec<Vec<f64>> {
    (0..case.ress.len())
        .map(|k| {
            (0..case.periods())
                .map(|t| case.ress[k].inertia[t] + margins.res_inertia[k][t])
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uplift_clamps_at_zero() {
        let rev = ProductTotals {
            energy: 120.0,
            ..Default::default()
        };
        let u = finish("G".into(), UnitClass::Sg, 100.0, rev, 0.0);
        assert_eq!((u.uplift, u.net_profit), (0.0, 20.0));
        let rev = ProductTotals {
            energy: 80.0,
            ..Default::default()
        };
        let u = finish("G".into(), UnitClass::Sg, 100.0, rev, 0.0);
        assert_eq!((u.uplift, u.net_profit), (20.0, 0.0));
    }

    #[test]
    fn merit_order_at_minimum_output() {
        assert!((rmr_merit(0.01, 20.0, 100.0, 10.0) - (1.0 + 200.0 + 100.0) / 10.0).abs() < 1e-12);
    }
}
