//! Commitment search, fixed-commitment QP with dual extraction, and the
//! Monte-Carlo check of the chance constraints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::case::SystemCase;
use crate::error::{Error, Result};
use crate::model::{assemble, inertia_supply, Census, Commit, Family, Model, ModelFlags, Spec};
use crate::qp::{self, QpSettings, QpSolution, QpStatus, RowRef};
use crate::uncertainty::{expected_sg_cost, ChanceMargins};

/// Primal decisions over the horizon, indexed `[unit][hour]` (`[bus][hour]` for angles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionSchedule {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub p_dis: Vec<Vec<f64>>,
    pub p_ch: Vec<Vec<f64>>,
    pub alpha_dis: Vec<Vec<f64>>,
    pub alpha_ch: Vec<Vec<f64>>,
    pub h_e: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub objective: f64,
}

/// Multipliers of the fixed-commitment QP, signed so that prices are positive
/// when raising the requirement raises cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRecord {
    /// `[bus][hour]`
    pub lambda: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub chi: Vec<f64>,
    pub mu_plus: Vec<Vec<f64>>,
    pub mu_minus: Vec<Vec<f64>>,
    pub upsilon_plus: Vec<Vec<f64>>,
    pub upsilon_minus: Vec<Vec<f64>>,
    pub rho_plus: Vec<Vec<f64>>,
    pub rho_minus: Vec<Vec<f64>>,
    /// Dual of `u = u*` (zero for offline units).
    pub kappa: Vec<Vec<f64>>,
    /// Duals of `u ≤ 1` and `u ≥ 0` when the commitment is relaxed.
    pub kappa_plus: Vec<Vec<f64>>,
    pub kappa_minus: Vec<Vec<f64>>,
    /// Line limit duals `[line][hour]`.
    pub flow_plus: Vec<Vec<f64>>,
    pub flow_minus: Vec<Vec<f64>>,
}

impl DualRecord {
    pub(crate) fn zeros(nb: usize, ng: usize, nl: usize, t: usize) -> Self {
        let z = |n: usize| vec![vec![0.0; t]; n];
        DualRecord {
            lambda: z(nb),
            gamma: vec![0.0; t],
            chi: vec![0.0; t],
            mu_plus: z(ng),
            mu_minus: z(ng),
            upsilon_plus: z(ng),
            upsilon_minus: z(ng),
            rho_plus: z(ng),
            rho_minus: z(ng),
            kappa: z(ng),
            kappa_plus: z(ng),
            kappa_minus: z(ng),
            flow_plus: z(nl),
            flow_minus: z(nl),
        }
    }

    /// Copies the multipliers of `model` into this record at absolute hours.
    pub(crate) fn absorb(&mut self, model: &Model, sol: &QpSolution) {
        for (tag, y) in model.eq_tags.iter().zip(&sol.y) {
            let (i, t) = (tag.index, tag.t);
            match tag.family {
                Family::Balance => self.lambda[i][t] = -y,
                Family::Reserve => self.gamma[t] = -y,
                Family::Commit => self.kappa[i][t] = *y,
                _ => {}
            }
        }
        for (tag, z) in model.ineq_tags.iter().zip(&sol.z) {
            let (i, t, z) = (tag.index, tag.t, *z);
            match tag.family {
                Family::Inertia => self.chi[t] = z,
                Family::CapUpper => self.mu_plus[i][t] = z,
                Family::CapLower => self.mu_minus[i][t] = z,
                Family::RampUp => self.upsilon_plus[i][t] = z,
                Family::RampDown => self.upsilon_minus[i][t] = z,
                Family::PartUpper => self.rho_plus[i][t] = z,
                Family::PartLower => self.rho_minus[i][t] = z,
                Family::CommitUpper => self.kappa_plus[i][t] = z,
                Family::CommitLower => self.kappa_minus[i][t] = z,
                Family::LineUpper => self.flow_plus[i][t] = z,
                Family::LineLower => self.flow_minus[i][t] = z,
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SolveMethod {
    BranchAndBound,
    /// Tangent-cut linearization of the cost, solved by the same search.
    PiecewiseLinear { segments: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative optimality gap.
    pub gap: f64,
    pub node_limit: usize,
    pub method: SolveMethod,
    pub qp: QpSettings,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap: 1e-4,
            node_limit: 20_000,
            method: SolveMethod::BranchAndBound,
            qp: QpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Node budget exhausted before the gap closed.
    Suboptimal,
}

/// Result of the commitment search, also the stable solution dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcSolution {
    pub status: SolveStatus,
    pub schedule: DecisionSchedule,
    pub duals: DualRecord,
    pub census: Census,
    pub gap: f64,
    pub bound: f64,
    pub node_count: usize,
    /// Objective of the linearized model when that method was used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearized_objective: Option<f64>,
}

fn qp_failure(model: &Model, sol: &QpSolution) -> Error {
    if let Some(inf) = &sol.infeasibility {
        let tag = match inf.row {
            RowRef::Eq(i) => model.eq_tags[i],
            RowRef::Ineq(i) => model.ineq_tags[i],
        };
        return Error::Infeasible {
            family: tag.family.label().to_string(),
            detail: format!(
                "largest relaxation residual {:.4} at index {} hour {} (total {:.4})",
                inf.violation, tag.index, tag.t, inf.total
            ),
        };
    }
    Error::Tolerance(format!(
        "qp stopped with {:?} after {} iterations (primal {:.2e}, dual {:.2e})",
        sol.status, sol.iterations, sol.primal_residual, sol.dual_residual
    ))
}

pub(crate) fn solve_model(model: &Model, settings: &QpSettings) -> Result<QpSolution> {
    let sol = qp::solve(&model.problem, settings);
    match sol.status {
        QpStatus::Optimal => Ok(sol),
        _ => Err(qp_failure(model, &sol)),
    }
}

fn sg_cost_total(case: &SystemCase, margins: &ChanceMargins, s: &DecisionSchedule) -> f64 {
    let mut total = 0.0;
    for (g, sg) in case.sgs.iter().enumerate() {
        for t in 0..case.periods() {
            total += expected_sg_cost(
                sg,
                s.p[g][t],
                s.alpha[g][t],
                s.u[g][t],
                s.v[g][t],
                margins.errors.m_r[t],
                margins.errors.s_r[t],
            );
        }
    }
    total
}

fn extract(case: &SystemCase, margins: &ChanceMargins, model: &Model, x: &[f64]) -> DecisionSchedule {
    let vals = |e: &Vec<Vec<crate::model::Expr>>| -> Vec<Vec<f64>> {
        e.iter().map(|row| row.iter().map(|v| v.value(x)).collect()).collect()
    };
    let v = &model.vars;
    let mut s = DecisionSchedule {
        u: vals(&v.u),
        v: vals(&v.v),
        w: vals(&v.w),
        p: vals(&v.p),
        alpha: vals(&v.alpha),
        p_dis: vals(&v.p_dis),
        p_ch: vals(&v.p_ch),
        alpha_dis: vals(&v.a_dis),
        alpha_ch: vals(&v.a_ch),
        h_e: vals(&v.h_e),
        soc: vals(&v.soc),
        theta: vals(&v.theta),
        objective: 0.0,
    };
    s.objective = sg_cost_total(case, margins, &s);
    for e in 0..case.ess.len() {
        for t in 0..case.periods() {
            if s.p_dis[e][t] > 1e-6 && s.p_ch[e][t] > 1e-6 {
                log::warn!(
                    "{} charges and discharges simultaneously at hour {t} ({:.3} / {:.3} MW)",
                    case.ess[e].id,
                    s.p_ch[e][t],
                    s.p_dis[e][t]
                );
            }
        }
    }
    s
}

/// Checks the commitment pattern against the logic and min up/down rows.
pub fn commitment_violation(case: &SystemCase, u: &[Vec<bool>]) -> Option<String> {
    for (g, sg) in case.sgs.iter().enumerate() {
        let t_all = case.periods();
        let mut v = vec![0u32; t_all];
        let mut w = vec![0u32; t_all];
        let mut prev = sg.u0;
        for t in 0..t_all {
            v[t] = (u[g][t] && !prev) as u32;
            w[t] = (!u[g][t] && prev) as u32;
            prev = u[g][t];
        }
        for t in 0..t_all {
            if t + 1 >= sg.min_up {
                let s: u32 = v[t + 1 - sg.min_up..=t].iter().sum();
                if s > u[g][t] as u32 {
                    return Some(format!("{} violates min up time at hour {t}", sg.id));
                }
            }
            if t + 1 >= sg.min_down {
                let s: u32 = w[t + 1 - sg.min_down..=t].iter().sum();
                if s + u[g][t] as u32 > 1 {
                    return Some(format!("{} violates min down time at hour {t}", sg.id));
                }
            }
        }
    }
    None
}

fn fixed_spec<'a>(
    case: &'a SystemCase,
    margins: &'a ChanceMargins,
    flags: &'a ModelFlags,
    u: &[Vec<bool>],
    pin: bool,
) -> Spec<'a> {
    let mut spec = Spec::full(case, margins, flags);
    spec.logic = false;
    // with u pinned the windows only add redundant multipliers on u
    spec.windows = !pin;
    spec.commit = u
        .iter()
        .map(|row| {
            row.iter()
                .map(|&on| match (on, pin) {
                    (false, _) => Commit::Fixed(0.0),
                    (true, true) => Commit::Pinned(1.0),
                    (true, false) => Commit::Fixed(1.0),
                })
                .collect()
        })
        .collect();
    spec
}

/// Solves the convex QP with commitments pinned to `u_star` and returns the
/// schedule together with the full multiplier record.
pub fn solve_fixed_qp(
    case: &SystemCase,
    margins: &ChanceMargins,
    flags: &ModelFlags,
    u_star: &[Vec<bool>],
    settings: &QpSettings,
) -> Result<(DecisionSchedule, DualRecord)> {
    check_shape(case, u_star)?;
    if let Some(msg) = commitment_violation(case, u_star) {
        let family = if msg.contains("min up") { "min_up" } else { "min_down" };
        return Err(Error::Infeasible {
            family: family.into(),
            detail: msg,
        });
    }
    redispatch(case, margins, flags, u_star, settings)
}

/// Fixed-commitment QP without the minimum up/down check, for commitments
/// assembled outside the market model such as reliability-must-run overlays.
pub fn redispatch(
    case: &SystemCase,
    margins: &ChanceMargins,
    flags: &ModelFlags,
    u_star: &[Vec<bool>],
    settings: &QpSettings,
) -> Result<(DecisionSchedule, DualRecord)> {
    check_shape(case, u_star)?;
    let model = assemble(&fixed_spec(case, margins, flags, u_star, true))?;
    let sol = solve_model(&model, settings)?;
    let schedule = extract(case, margins, &model, &sol.x);
    let t = case.periods();
    let mut duals = DualRecord::zeros(
        case.network.buses.len(),
        case.sgs.len(),
        case.network.lines.len(),
        t,
    );
    duals.absorb(&model, &sol);
    Ok((schedule, duals))
}

fn check_shape(case: &SystemCase, u: &[Vec<bool>]) -> Result<()> {
    if u.len() != case.sgs.len() || u.iter().any(|r| r.len() != case.periods()) {
        return Err(Error::Invalid(format!(
            "commitment must be {} units by {} hours",
            case.sgs.len(),
            case.periods()
        )));
    }
    Ok(())
}

/// Expected cost of a fixed commitment, or `None` when it admits no dispatch.
pub fn evaluate_commitment(
    case: &SystemCase,
    margins: &ChanceMargins,
    flags: &ModelFlags,
    u: &[Vec<bool>],
    settings: &QpSettings,
) -> Result<Option<DecisionSchedule>> {
    check_shape(case, u)?;
    let model = match assemble(&fixed_spec(case, margins, flags, u, false)) {
        Ok(m) => m,
        Err(Error::Infeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    match solve_model(&model, settings) {
        Ok(sol) => Ok(Some(extract(case, margins, &model, &sol.x))),
        Err(Error::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Continuous relaxation of every binary.
pub fn solve_relaxation(
    case: &SystemCase,
    margins: &ChanceMargins,
    flags: &ModelFlags,
    settings: &QpSettings,
) -> Result<DecisionSchedule> {
    let model = assemble(&Spec::full(case, margins, flags))?;
    let sol = solve_model(&model, settings)?;
    let mut s = extract(case, margins, &model, &sol.x);
    // with fractional status the startup cost is the relaxed one
    s.objective = sol.objective;
    Ok(s)
}

struct Node {
    bound: f64,
    id: usize,
    fixed: Vec<Option<bool>>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // max-heap: smaller bound first, then smaller id
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound
            .total_cmp(&self.bound)
            .then_with(|| o.id.cmp(&self.id))
    }
}

const INTEGRAL_TOL: f64 = 1e-6;

/// Solves the mixed-integer commitment problem by branch and bound on u.
pub fn solve_ccuc(
    case: &SystemCase,
    margins: &ChanceMargins,
    flags: &ModelFlags,
    options: &SolverOptions,
) -> Result<UcSolution> {
    let ng = case.sgs.len();
    let nt = case.periods();
    let pwl = match options.method {
        SolveMethod::BranchAndBound => None,
        SolveMethod::PiecewiseLinear { segments } => Some(segments),
    };
    let census = assemble(&Spec::full(case, margins, flags))?.census;

    // node relaxation: returns (objective, u values)
    let relax = |fixed: &[Option<bool>]| -> Result<Option<(f64, Vec<f64>)>> {
        let mut spec = Spec::full(case, margins, flags);
        spec.pwl = pwl;
        for g in 0..ng {
            for t in 0..nt {
                if let Some(on) = fixed[g * nt + t] {
                    spec.commit[g][t] = Commit::Fixed(if on { 1.0 } else { 0.0 });
                }
            }
        }
        let model = match assemble(&spec) {
            Ok(m) => m,
            Err(Error::Infeasible { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let sol = qp::solve(&model.problem, &options.qp);
        match sol.status {
            QpStatus::Optimal => {
                let mut u = Vec::with_capacity(ng * nt);
                for g in 0..ng {
                    for t in 0..nt {
                        u.push(model.vars.u[g][t].value(&sol.x));
                    }
                }
                Ok(Some((sol.objective, u)))
            }
            QpStatus::Infeasible => Ok(None),
            _ => Err(qp_failure(&model, &sol)),
        }
    };
    // value of an integral pattern under the (possibly linearized) objective
    let evaluate = |u: &[Vec<bool>]| -> Result<Option<f64>> {
        if pwl.is_none() {
            return Ok(evaluate_commitment(case, margins, flags, u, &options.qp)?.map(|s| s.objective));
        }
        let fixed: Vec<Option<bool>> = u.iter().flatten().map(|&b| Some(b)).collect();
        Ok(relax(&fixed)?.map(|r| r.0))
    };
    let to_pattern = |u: &[f64], round: fn(f64) -> bool| -> Vec<Vec<bool>> {
        (0..ng)
            .map(|g| (0..nt).map(|t| round(u[g * nt + t])).collect())
            .collect()
    };

    let root = match relax(&vec![None; ng * nt])? {
        Some(r) => r,
        None => {
            // explain with the elastic relaxation of the root
            let model = assemble(&Spec::full(case, margins, flags))?;
            return Err(solve_model(&model, &options.qp).err().unwrap_or_else(|| {
                Error::Infeasible {
                    family: "commitment".into(),
                    detail: "no integral commitment is feasible".into(),
                }
            }));
        }
    };

    let mut incumbent: Option<(f64, Vec<Vec<bool>>)> = None;
    let consider = |pattern: Vec<Vec<bool>>, inc: &mut Option<(f64, Vec<Vec<bool>>)>| -> Result<()> {
        if commitment_violation(case, &pattern).is_some() {
            return Ok(());
        }
        if let Some(obj) = evaluate(&pattern)? {
            if inc.as_ref().map_or(true, |(best, _)| obj < *best) {
                *inc = Some((obj, pattern));
            }
        }
        Ok(())
    };
    consider(to_pattern(&root.1, |x| x > INTEGRAL_TOL), &mut incumbent)?;
    consider(to_pattern(&root.1, |x| x >= 0.5), &mut incumbent)?;

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    heap.push(Node {
        bound: root.0,
        id: next_id,
        fixed: vec![None; ng * nt],
    });
    next_id += 1;
    let mut node_count = 0;
    let mut cache: Option<(usize, (f64, Vec<f64>))> = Some((0, root));
    let closed = |lb: f64, inc: &Option<(f64, Vec<Vec<bool>>)>| -> bool {
        inc.as_ref()
            .is_some_and(|(best, _)| best - lb <= options.gap * best.abs().max(1.0))
    };

    let mut exhausted = false;
    // smallest bound among nodes dropped because they were within the gap
    let mut pruned = f64::INFINITY;
    while let Some(node) = heap.pop() {
        if closed(node.bound, &incumbent) {
            heap.push(node);
            break;
        }
        if node_count >= options.node_limit {
            heap.push(node);
            exhausted = true;
            break;
        }
        node_count += 1;
        let relaxed = match cache.take() {
            Some((id, r)) if id == node.id => Some(r),
            _ => relax(&node.fixed)?,
        };
        let Some((obj, u)) = relaxed else { continue };
        if closed(obj, &incumbent) {
            pruned = pruned.min(obj);
            continue;
        }
        // most fractional, ties to the lowest (unit, hour)
        let mut pick: Option<(usize, f64)> = None;
        for (k, &x) in u.iter().enumerate() {
            if node.fixed[k].is_some() {
                continue;
            }
            let frac = (x - x.round()).abs();
            if frac > INTEGRAL_TOL && pick.map_or(true, |(_, f)| frac > f + 1e-12) {
                pick = Some((k, frac));
            }
        }
        let Some((k, _)) = pick else {
            consider(to_pattern(&u, |x| x >= 0.5), &mut incumbent)?;
            continue;
        };
        for on in [false, true] {
            let mut fixed = node.fixed.clone();
            fixed[k] = Some(on);
            heap.push(Node {
                bound: obj,
                id: next_id,
                fixed,
            });
            next_id += 1;
        }
        if node_count % 16 == 0 {
            consider(to_pattern(&u, |x| x > INTEGRAL_TOL), &mut incumbent)?;
        }
    }
    let mut lower = heap.iter().map(|n| n.bound).fold(pruned, f64::min);
    if let Some((b, _)) = &incumbent {
        lower = lower.min(*b);
    }

    let Some((best, pattern)) = incumbent else {
        if exhausted {
            return Err(Error::Tolerance(format!(
                "no integral commitment found within {} nodes",
                options.node_limit
            )));
        }
        return Err(Error::Infeasible {
            family: "commitment".into(),
            detail: "every commitment pattern is infeasible".into(),
        });
    };
    let (schedule, duals) = solve_fixed_qp(case, margins, flags, &pattern, &options.qp)?;
    let gap = ((best - lower) / best.abs().max(1.0)).max(0.0);
    log::info!(
        "commitment search: objective {:.6}, bound {:.6}, {} nodes",
        schedule.objective,
        lower,
        node_count
    );
    Ok(UcSolution {
        status: if exhausted && gap > options.gap {
            SolveStatus::Suboptimal
        } else {
            SolveStatus::Optimal
        },
        schedule,
        duals,
        census,
        gap,
        bound: lower.min(best),
        node_count,
        linearized_objective: pwl.map(|_| best),
    })
}

impl DecisionSchedule {
    pub fn commitment(&self) -> Vec<Vec<bool>> {
        self.u
            .iter()
            .map(|r| r.iter().map(|&x| x >= 0.5).collect())
            .collect()
    }

    /// Left-hand side of the inertia row in hour `t`.
    pub fn inertia_supply(&self, case: &SystemCase, margins: &ChanceMargins, t: usize) -> f64 {
        inertia_supply(case, margins, t, |g| self.u[g][t], |e| self.h_e[e][t])
    }

    /// Violated schedule invariants, empty when the schedule is consistent.
    pub fn violations(&self, case: &SystemCase, margins: &ChanceMargins, flags: &ModelFlags) -> Vec<String> {
        let mut out = Vec::new();
        let tol = 1e-6;
        let nt = case.periods();
        for (g, sg) in case.sgs.iter().enumerate() {
            let mut prev = if sg.u0 { 1.0 } else { 0.0 };
            for t in 0..nt {
                let (u, v, w) = (self.u[g][t], self.v[g][t], self.w[g][t]);
                if (u - prev - v + w).abs() > tol {
                    out.push(format!("{} logic at hour {t}", sg.id));
                }
                let a = self.alpha[g][t];
                if a < -tol || a > u + tol {
                    out.push(format!("{} participation {a} outside [0, u] at hour {t}", sg.id));
                }
                prev = u;
            }
        }
        if let Some(msg) = commitment_violation(case, &self.commitment()) {
            out.push(msg);
        }
        let f0 = case.params.f0;
        for (e, es) in case.ess.iter().enumerate() {
            let nadir = 2.0 * case.params.df_max * es.p_dis_max / f0;
            let mut prev = es.e0;
            for t in 0..nt {
                for (name, a) in [("alpha_dis", self.alpha_dis[e][t]), ("alpha_ch", self.alpha_ch[e][t])] {
                    if !(-tol..=1.0 + tol).contains(&a) {
                        out.push(format!("{} {name} {a} at hour {t}", es.id));
                    }
                }
                let s = self.soc[e][t];
                let margin = nadir * self.h_e[e][t];
                if s > es.e_max - margin + tol || s < es.e_min + margin - tol {
                    out.push(format!("{} energy {s} outside nadir band at hour {t}", es.id));
                }
                let m = margins.errors.m_r[t];
                let k = es.efficiency;
                let expect = prev + (self.p_ch[e][t] + m * self.alpha_ch[e][t]) * k
                    - (self.p_dis[e][t] + m * self.alpha_dis[e][t]) / k;
                if (s - expect).abs() > 1e-6 {
                    out.push(format!("{} energy balance at hour {t}", es.id));
                }
                prev = s;
            }
        }
        let demand = case.demand_matrix();
        let res = case.res_matrix();
        let base = case.params.base_mva;
        for t in 0..nt {
            for (b, bus) in case.network.buses.iter().enumerate() {
                let mut inj = res[b][t] - demand[b][t];
                for (g, sg) in case.sgs.iter().enumerate() {
                    if sg.bus == *bus {
                        inj += self.p[g][t];
                    }
                }
                for (e, es) in case.ess.iter().enumerate() {
                    if es.bus == *bus {
                        inj += self.p_dis[e][t] - self.p_ch[e][t];
                    }
                }
                for line in &case.network.lines {
                    let i = case.bus_index(line.from).unwrap();
                    let j = case.bus_index(line.to).unwrap();
                    let flow = base * line.susceptance * (self.theta[i][t] - self.theta[j][t]);
                    if i == b {
                        inj -= flow;
                    } else if j == b {
                        inj += flow;
                    }
                }
                if inj.abs() > 1e-6 {
                    out.push(format!("bus {bus} balance residual {inj:.3e} at hour {t}"));
                }
            }
            let r: f64 = (0..case.sgs.len()).map(|g| self.alpha[g][t]).sum::<f64>()
                + (0..case.ess.len())
                    .map(|e| self.alpha_dis[e][t] - self.alpha_ch[e][t])
                    .sum::<f64>();
            if (r - 1.0).abs() > 1e-6 {
                out.push(format!("participation sums to {r} at hour {t}"));
            }
            if flags.inertia {
                let lhs = self.inertia_supply(case, margins, t);
                let req = flags.requirement(case, t);
                if lhs < req - 1e-6 * req.max(1.0) {
                    out.push(format!("inertia {lhs:.3} below {req:.3} at hour {t}"));
                }
            }
        }
        out
    }
}

/// Empirical satisfaction of one chance-constraint instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceInstance {
    pub family: String,
    pub unit: String,
    pub hour: usize,
    pub eps: f64,
    pub rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceReport {
    pub samples: usize,
    pub seed: u64,
    pub instances: Vec<ChanceInstance>,
}

impl ChanceReport {
    pub fn all_pass(&self) -> bool {
        self.instances.iter().all(|i| i.pass)
    }

    pub fn worst(&self, family: &str) -> Option<&ChanceInstance> {
        self.instances
            .iter()
            .filter(|i| i.family == family)
            .min_by(|a, b| (a.rate - a.threshold).total_cmp(&(b.rate - b.threshold)))
    }
}

pub fn binomial_threshold(eps: f64, n: usize) -> f64 {
    1.0 - eps - 3.0 * (eps * (1.0 - eps) / n as f64).sqrt()
}

/// Samples the forecast errors and counts how often each chance constraint
/// holds under the affine recourse of `schedule`.
///
/// Families: `sg_upper`, `sg_lower` (SG limits), `es_discharge`,
/// `es_charge` (storage limits) and `inertia` (adequacy row). The inertia
/// family is only checked when the row is part of the model.
pub fn monte_carlo_chance_check(
    case: &SystemCase,
    schedule: &DecisionSchedule,
    flags: &ModelFlags,
    samples: usize,
    seed: u64,
) -> Result<ChanceReport> {
    if samples == 0 {
        return Err(Error::Invalid("at least one sample is required".into()));
    }
    let nt = case.periods();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |m: f64, s: f64| Normal::new(m, s).map_err(|e| Error::Invalid(e.to_string()));
    let mut instances = Vec::new();
    let f0 = case.params.f0;
    let tol = 1e-7;
    for t in 0..nt {
        // power error: aggregate override or independent unit errors
        let power: Vec<Normal<f64>> = match case.params.aggregate_error {
            Some(e) => vec![normal(e.mean, e.std)?],
            None => case
                .ress
                .iter()
                .map(|r| normal(r.err_mean[t], r.err_std[t]))
                .collect::<Result<_>>()?,
        };
        let inertia: Vec<Normal<f64>> = case
            .ress
            .iter()
            .map(|r| normal(r.inertia_err_mean[t], r.inertia_err_std[t]))
            .collect::<Result<_>>()?;
        let ng = case.sgs.len();
        let ne = case.ess.len();
        let mut ok_up = vec![0usize; ng];
        let mut ok_lo = vec![0usize; ng];
        let mut ok_d = vec![0usize; ne];
        let mut ok_c = vec![0usize; ne];
        let mut ok_h = 0usize;
        let fixed_inertia: f64 = case
            .sgs
            .iter()
            .enumerate()
            .map(|(g, sg)| schedule.u[g][t] * sg.inertia * sg.p_max)
            .sum::<f64>()
            + case
                .ess
                .iter()
                .enumerate()
                .map(|(e, es)| schedule.h_e[e][t] * es.p_dis_max)
                .sum::<f64>();
        let req = flags.requirement(case, t);
        for _ in 0..samples {
            let omega: f64 = power.iter().map(|d| d.sample(&mut rng)).sum();
            let mut h = fixed_inertia;
            for (r, d) in inertia.iter().enumerate() {
                let res = &case.ress[r];
                h += (res.inertia[t] - d.sample(&mut rng)) * res.p_max;
            }
            if h >= req - tol * req.max(1.0) {
                ok_h += 1;
            }
            for (g, sg) in case.sgs.iter().enumerate() {
                let u = schedule.u[g][t];
                let p = schedule.p[g][t] + schedule.alpha[g][t] * omega;
                if p <= u * sg.p_max + tol {
                    ok_up[g] += 1;
                }
                if p >= u * sg.p_min - tol {
                    ok_lo[g] += 1;
                }
            }
            for (e, es) in case.ess.iter().enumerate() {
                let held = 2.0 * schedule.h_e[e][t] * case.params.rocof_max * es.p_dis_max / f0;
                let pd = schedule.p_dis[e][t] + schedule.alpha_dis[e][t] * omega;
                let pc = schedule.p_ch[e][t] + schedule.alpha_ch[e][t] * omega;
                if pd + held <= es.p_dis_max + tol {
                    ok_d[e] += 1;
                }
                if pc + held <= es.p_ch_max + tol {
                    ok_c[e] += 1;
                }
            }
        }
        let mut push = |family: &str, unit: &str, eps: f64, ok: usize| {
            let rate = ok as f64 / samples as f64;
            let threshold = binomial_threshold(eps, samples);
            instances.push(ChanceInstance {
                family: family.into(),
                unit: unit.into(),
                hour: t,
                eps,
                rate,
                threshold,
                pass: rate >= threshold,
            });
        };
        for (g, sg) in case.sgs.iter().enumerate() {
            if schedule.u[g][t] >= 0.5 {
                push("sg_upper", &sg.id, sg.eps, ok_up[g]);
                push("sg_lower", &sg.id, sg.eps, ok_lo[g]);
            }
        }
        for (e, es) in case.ess.iter().enumerate() {
            push("es_discharge", &es.id, es.eps_d, ok_d[e]);
            push("es_charge", &es.id, es.eps_c, ok_c[e]);
        }
        if flags.inertia {
            let eps = case.ress.iter().map(|r| r.eps_h).fold(0.5, f64::min);
            push("inertia", "system", eps, ok_h);
        }
    }
    Ok(ChanceReport {
        samples,
        seed,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;
    use crate::uncertainty::MarginConvention;

    fn margins(case: &SystemCase) -> ChanceMargins {
        ChanceMargins::compute(case, MarginConvention::Consistent).unwrap()
    }

    #[test]
    fn census_matches_hand_count() {
        let case = cases::single_sg(&[80.0, 90.0]);
        let m = margins(&case);
        let model = crate::model::build_model(&case, &m, &ModelFlags::default()).unwrap();
        for (k, n) in [("logic", 2), ("ramp", 2), ("capacity", 4), ("balance", 2), ("reserve", 2), ("inertia", 2)] {
            assert_eq!(model.census.get(k), Some(&n), "{k}");
        }
        let off = crate::model::build_model(&case, &m, &ModelFlags::without_inertia()).unwrap();
        assert_eq!(off.census.get("inertia").copied().unwrap_or(0), 0);
    }

    #[test]
    fn single_unit_follows_load() {
        let load = [80.0, 80.0, 80.0];
        let case = cases::single_sg(&load);
        let m = margins(&case);
        let sol = solve_ccuc(&case, &m, &ModelFlags::default(), &SolverOptions::default()).unwrap();
        let g = &case.sgs[0];
        let mut expect = 0.0;
        for t in 0..3 {
            assert!((sol.schedule.u[0][t] - 1.0).abs() < 1e-9);
            assert!((sol.schedule.p[0][t] - 80.0).abs() < 1e-6);
            assert!((sol.duals.lambda[0][t] - (2.0 * g.a * 80.0 + g.b)).abs() < 1e-6);
            expect += g.a * 80.0 * 80.0 + g.b * 80.0 + g.c;
        }
        assert!((sol.schedule.objective - expect).abs() < 1e-6);
        assert!(sol.schedule.violations(&case, &m, &ModelFlags::default()).is_empty());
    }

    #[test]
    fn congestion_separates_prices() {
        let case = cases::congested_two_bus();
        let m = margins(&case);
        let sol = solve_ccuc(&case, &m, &ModelFlags::default(), &SolverOptions::default()).unwrap();
        for t in 0..2 {
            assert!(sol.duals.lambda[1][t] - sol.duals.lambda[0][t] > 1.0);
        }
    }

    fn enumerate(case: &SystemCase, m: &ChanceMargins) -> f64 {
        let (ng, nt) = (case.sgs.len(), case.periods());
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << (ng * nt)) {
            let u: Vec<Vec<bool>> = (0..ng)
                .map(|g| (0..nt).map(|t| mask >> (g * nt + t) & 1 == 1).collect())
                .collect();
            if commitment_violation(case, &u).is_some() {
                continue;
            }
            if let Some(s) = evaluate_commitment(case, m, &ModelFlags::default(), &u, &QpSettings::default()).unwrap() {
                best = best.min(s.objective);
            }
        }
        best
    }

    #[test]
    fn search_matches_enumeration() {
        for seed in [3, 11] {
            let case = cases::random_desk(seed);
            let m = margins(&case);
            let sol = solve_ccuc(&case, &m, &ModelFlags::default(), &SolverOptions::default()).unwrap();
            let best = enumerate(&case, &m);
            assert!(
                (sol.schedule.objective - best).abs() <= 1e-6 * best.abs().max(1.0),
                "seed {seed}: {} vs {best}",
                sol.schedule.objective
            );
            let relaxed = solve_relaxation(&case, &m, &ModelFlags::default(), &QpSettings::default()).unwrap();
            assert!(relaxed.objective <= sol.schedule.objective + 1e-6);
            assert!(sol.schedule.violations(&case, &m, &ModelFlags::default()).is_empty());
        }
    }

    #[test]
    fn linearized_path_lands_near_exact() {
        let case = cases::random_desk(5);
        let m = margins(&case);
        let exact = solve_ccuc(&case, &m, &ModelFlags::default(), &SolverOptions::default()).unwrap();
        let opts = SolverOptions {
            method: SolveMethod::PiecewiseLinear { segments: 8 },
            ..SolverOptions::default()
        };
        let pwl = solve_ccuc(&case, &m, &ModelFlags::default(), &opts).unwrap();
        assert!(pwl.linearized_objective.unwrap() <= pwl.schedule.objective + 1e-6);
        assert!(pwl.schedule.objective >= exact.schedule.objective - 1e-6);
        assert!(pwl.schedule.objective <= exact.schedule.objective * 1.01);
    }

    #[test]
    fn unit_without_recourse_never_violates_limits() {
        let case = cases::random_desk(2);
        let m = margins(&case);
        let sol = solve_ccuc(&case, &m, &ModelFlags::default(), &SolverOptions::default()).unwrap();
        let mut s = sol.schedule.clone();
        let first = (0..case.sgs.len()).find(|&g| s.u[g][0] > 0.5).unwrap();
        for g in 0..case.sgs.len() {
            s.alpha[g][0] = 0.0;
        }
        s.alpha[first][0] = 0.0;
        let report = monte_carlo_chance_check(&case, &s, &ModelFlags::default(), 10_000, 7).unwrap();
        for i in report.instances.iter().filter(|i| i.hour == 0 && i.family.starts_with("sg")) {
            assert_eq!(i.rate, 1.0, "{i:?}");
        }
    }
}
