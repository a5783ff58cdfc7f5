//! Deterministic inertia-aware commitment model assembled as a QP.
//!
//! One assembler serves every caller. Commitment variables can be free
//! (relaxed to [0, 1]), fixed constants substituted into the rows, or pinned
//! by an equality row whose dual is the commitment price κ. A unit whose
//! commitment is the constant 0 has no output or participation variables.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::case::SystemCase;
use crate::error::{Error, Result};
use crate::qp::QpProblem;
use crate::solver::DecisionSchedule;
use crate::uncertainty::ChanceMargins;

/// Model switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFlags {
    /// Include the inertia adequacy row in every hour.
    pub inertia: bool,
    /// Extra requirement per hour (MW·s), added to `Psys · Hmin`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inertia_offset: Vec<f64>,
}

impl Default for ModelFlags {
    fn default() -> Self {
        ModelFlags {
            inertia: true,
            inertia_offset: Vec::new(),
        }
    }
}

impl ModelFlags {
    pub fn without_inertia() -> Self {
        ModelFlags {
            inertia: false,
            inertia_offset: Vec::new(),
        }
    }

    pub fn requirement(&self, case: &SystemCase, t: usize) -> f64 {
        case.params.inertia_requirement() + self.inertia_offset.get(t).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Commit {
    Free,
    Fixed(f64),
    Pinned(f64),
}

/// A model quantity: a QP variable or a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
}

impl Expr {
    pub fn value(self, x: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => x[i],
            Expr::Const(v) => v,
        }
    }

    pub fn var(self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(i),
            Expr::Const(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logic,
    MinUp,
    MinDown,
    RampUp,
    RampDown,
    PartLower,
    PartUpper,
    CapUpper,
    CapLower,
    EsDischarge,
    EsCharge,
    SocUpper,
    SocLower,
    Soc,
    EsBound,
    LineUpper,
    LineLower,
    Balance,
    Reserve,
    Inertia,
    Commit,
    CommitUpper,
    CommitLower,
    StatusBound,
    Epigraph,
}

impl Family {
    pub fn label(self) -> &'static str {
        use Family::*;
        match self {
            Logic => "logic",
            MinUp => "min_up",
            MinDown => "min_down",
            RampUp => "ramp_up",
            RampDown => "ramp_down",
            PartLower => "participation_lower",
            PartUpper => "participation_upper",
            CapUpper => "capacity_upper",
            CapLower => "capacity_lower",
            EsDischarge => "es_discharge",
            EsCharge => "es_charge",
            SocUpper => "soc_upper",
            SocLower => "soc_lower",
            Soc => "soc",
            EsBound => "es_bound",
            LineUpper => "line_upper",
            LineLower => "line_lower",
            Balance => "balance",
            Reserve => "reserve",
            Inertia => "inertia",
            Commit => "commitment",
            CommitUpper => "commitment_upper",
            CommitLower => "commitment_lower",
            StatusBound => "status_bound",
            Epigraph => "epigraph",
        }
    }

    /// Census bucket; `None` for the second member of a two-sided pair.
    pub fn census_name(self) -> Option<&'static str> {
        use Family::*;
        Some(match self {
            Logic => "logic",
            MinUp => "min_up",
            MinDown => "min_down",
            RampUp => "ramp",
            PartUpper => "participation",
            CapUpper | CapLower => "capacity",
            EsDischarge | EsCharge => "es_power",
            SocUpper => "soc_limits",
            Soc => "soc",
            LineUpper => "line",
            Balance => "balance",
            Reserve => "reserve",
            Inertia => "inertia",
            Commit => "commitment",
            RampDown | PartLower | SocLower | LineLower | EsBound | CommitUpper | CommitLower
            | StatusBound | Epigraph => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowTag {
    pub family: Family,
    /// Unit, bus or line index depending on the family.
    pub index: usize,
    pub t: usize,
}

pub type Census = BTreeMap<String, usize>;

#[derive(Debug, Clone)]
pub struct VarMap {
    pub p: Vec<Vec<Expr>>,
    pub alpha: Vec<Vec<Expr>>,
    pub u: Vec<Vec<Expr>>,
    pub v: Vec<Vec<Expr>>,
    pub w: Vec<Vec<Expr>>,
    pub p_dis: Vec<Vec<Expr>>,
    pub p_ch: Vec<Vec<Expr>>,
    pub a_dis: Vec<Vec<Expr>>,
    pub a_ch: Vec<Vec<Expr>>,
    pub h_e: Vec<Vec<Expr>>,
    pub soc: Vec<Vec<Expr>>,
    pub theta: Vec<Vec<Expr>>,
}

/// An assembled model. Time indices inside are relative to `hours.start`.
#[derive(Debug, Clone)]
pub struct Model {
    pub problem: QpProblem,
    pub vars: VarMap,
    pub eq_tags: Vec<RowTag>,
    pub ineq_tags: Vec<RowTag>,
    pub census: Census,
    pub hours: Range<usize>,
    /// Output of each SG in the hour before `hours.start`.
    pub p_prev: Vec<f64>,
}

/// Cost data per SG; `u_cost[g][k]` multiplies u, `startup[g]` multiplies v.
#[derive(Debug, Clone)]
pub(crate) struct Costs {
    pub b: Vec<f64>,
    pub u_cost: Vec<Vec<f64>>,
    pub startup: Vec<f64>,
}

impl Costs {
    pub fn from_case(case: &SystemCase, hours: Range<usize>) -> Self {
        Costs {
            b: case.sgs.iter().map(|g| g.b).collect(),
            u_cost: case.sgs.iter().map(|g| vec![g.c; hours.len()]).collect(),
            startup: case.sgs.iter().map(|g| g.startup).collect(),
        }
    }
}

pub(crate) struct Spec<'a> {
    pub case: &'a SystemCase,
    pub margins: &'a ChanceMargins,
    pub flags: &'a ModelFlags,
    pub hours: Range<usize>,
    pub commit: Vec<Vec<Commit>>,
    /// Startup/shutdown variables with logic and minimum up/down rows.
    /// Without them startups are derived from the commitment constants.
    pub logic: bool,
    /// Minimum up/down windows.
    pub windows: bool,
    /// Replace the quadratic cost by this many tangent cuts per term.
    pub pwl: Option<usize>,
    pub u_prev: Vec<f64>,
    pub p_prev: Vec<f64>,
    pub es_fixed: Option<&'a DecisionSchedule>,
    pub costs: Costs,
}

impl<'a> Spec<'a> {
    pub fn full(case: &'a SystemCase, margins: &'a ChanceMargins, flags: &'a ModelFlags) -> Self {
        let t = case.periods();
        Spec {
            case,
            margins,
            flags,
            hours: 0..t,
            commit: vec![vec![Commit::Free; t]; case.sgs.len()],
            logic: true,
            windows: true,
            pwl: None,
            u_prev: case.sgs.iter().map(|g| if g.u0 { 1.0 } else { 0.0 }).collect(),
            p_prev: case.sgs.iter().map(|g| g.p0).collect(),
            es_fixed: None,
            costs: Costs::from_case(case, 0..t),
        }
    }
}

struct Lin {
    terms: Vec<(usize, f64)>,
    konst: f64,
}

impl Lin {
    fn new() -> Self {
        Lin {
            terms: Vec::new(),
            konst: 0.0,
        }
    }

    fn add(&mut self, e: Expr, coef: f64) -> &mut Self {
        match e {
            Expr::Var(i) => self.terms.push((i, coef)),
            Expr::Const(v) => self.konst += coef * v,
        }
        self
    }
}

struct Assembler {
    qp: QpProblem,
    eq_tags: Vec<RowTag>,
    ineq_tags: Vec<RowTag>,
    n: usize,
}

const CONST_TOL: f64 = 1e-9;

impl Assembler {
    fn var(&mut self) -> Expr {
        self.n += 1;
        Expr::Var(self.n - 1)
    }

    fn le(&mut self, tag: RowTag, lin: &Lin, rhs: f64) -> Result<()> {
        let rhs = rhs - lin.konst;
        if lin.terms.iter().all(|t| t.1 == 0.0) {
            if rhs < -CONST_TOL * (1.0 + rhs.abs()) {
                return Err(constant_violation(tag, -rhs));
            }
            return Ok(());
        }
        self.qp.g.push_row(&lin.terms);
        self.qp.h.push(rhs);
        self.ineq_tags.push(tag);
        Ok(())
    }

    fn eq(&mut self, tag: RowTag, lin: &Lin, rhs: f64) -> Result<()> {
        let rhs = rhs - lin.konst;
        if lin.terms.iter().all(|t| t.1 == 0.0) {
            if rhs.abs() > CONST_TOL * (1.0 + rhs.abs()) {
                return Err(constant_violation(tag, rhs.abs()));
            }
            return Ok(());
        }
        self.qp.a.push_row(&lin.terms);
        self.qp.b.push(rhs);
        self.eq_tags.push(tag);
        Ok(())
    }
}

fn constant_violation(tag: RowTag, by: f64) -> Error {
    Error::Infeasible {
        family: tag.family.label().to_string(),
        detail: format!(
            "row for index {} at hour {} is violated by {by:.6} with all its terms fixed",
            tag.index, tag.t
        ),
    }
}

/// Sum of committed SG, storage and margin-adjusted RES inertia (MW·s).
///
/// This is the left-hand side of the inertia adequacy row; the frequency
/// simulator uses it as the kinetic energy.
pub fn inertia_supply(
    case: &SystemCase,
    margins: &ChanceMargins,
    t: usize,
    u: impl Fn(usize) -> f64,
    h_e: impl Fn(usize) -> f64,
) -> f64 {
    let mut e = 0.0;
    for (g, sg) in case.sgs.iter().enumerate() {
        e += u(g) * sg.inertia * sg.p_max;
    }
    for (k, es) in case.ess.iter().enumerate() {
        e += h_e(k) * es.p_dis_max;
    }
    e + res_inertia(case, margins, t)
}

/// Margin-adjusted RES contribution `Σ (H + adj)·Pmax` in hour `t`.
pub fn res_inertia(case: &SystemCase, margins: &ChanceMargins, t: usize) -> f64 {
    case.ress
        .iter()
        .enumerate()
        .map(|(r, res)| (res.inertia[t] + margins.res_inertia[r][t]) * res.p_max)
        .sum()
}

pub(crate) fn assemble(spec: &Spec) -> Result<Model> {
    let case = spec.case;
    let m = spec.margins;
    let hours = spec.hours.clone();
    let nh = hours.len();
    let t_all = case.periods();
    if hours.end > t_all || nh == 0 {
        return Err(Error::Invalid(format!("hours {hours:?} outside horizon of {t_all}")));
    }
    for (name, len) in [
        ("sg_upper", m.sg_upper.len()),
        ("es_dis", m.es_dis.len()),
        ("res_inertia", m.res_inertia.len()),
    ] {
        let want = match name {
            "sg_upper" => case.sgs.len(),
            "es_dis" => case.ess.len(),
            _ => case.ress.len(),
        };
        if len != want {
            return Err(Error::Invalid(format!("margins.{name} has {len} units, case has {want}")));
        }
    }
    if spec.es_fixed.is_none() && hours.start != 0 && !case.ess.is_empty() {
        return Err(Error::Invalid("storage state needs the horizon start".into()));
    }
    let ng = case.sgs.len();
    let ne = case.ess.len();
    let nb = case.network.buses.len();

    let mut asm = Assembler {
        qp: QpProblem::new(0),
        eq_tags: Vec::new(),
        ineq_tags: Vec::new(),
        n: 0,
    };

    // variables
    let mut vars = VarMap {
        p: vec![Vec::with_capacity(nh); ng],
        alpha: vec![Vec::with_capacity(nh); ng],
        u: vec![Vec::with_capacity(nh); ng],
        v: vec![Vec::with_capacity(nh); ng],
        w: vec![Vec::with_capacity(nh); ng],
        p_dis: vec![Vec::with_capacity(nh); ne],
        p_ch: vec![Vec::with_capacity(nh); ne],
        a_dis: vec![Vec::with_capacity(nh); ne],
        a_ch: vec![Vec::with_capacity(nh); ne],
        h_e: vec![Vec::with_capacity(nh); ne],
        soc: vec![Vec::with_capacity(nh); ne],
        theta: vec![Vec::with_capacity(nh); nb],
    };
    for g in 0..ng {
        for k in 0..nh {
            let c = spec.commit[g][k];
            let u = match c {
                Commit::Fixed(v) => Expr::Const(v),
                Commit::Free | Commit::Pinned(_) => asm.var(),
            };
            let (p, a) = if u == Expr::Const(0.0) {
                (Expr::Const(0.0), Expr::Const(0.0))
            } else {
                (asm.var(), asm.var())
            };
            vars.u[g].push(u);
            vars.p[g].push(p);
            vars.alpha[g].push(a);
        }
    }
    // startups: variables when logic rows are present, else derived constants
    for g in 0..ng {
        let mut prev = spec.u_prev[g];
        for k in 0..nh {
            if spec.logic {
                let v = asm.var();
                let w = asm.var();
                vars.v[g].push(v);
                vars.w[g].push(w);
            } else {
                let cur = match spec.commit[g][k] {
                    Commit::Fixed(x) | Commit::Pinned(x) => x,
                    Commit::Free => prev,
                };
                vars.v[g].push(Expr::Const((cur - prev).max(0.0)));
                vars.w[g].push(Expr::Const((prev - cur).max(0.0)));
                prev = cur;
            }
        }
    }
    for e in 0..ne {
        for k in 0..nh {
            if let Some(s) = spec.es_fixed {
                let t = hours.start + k;
                vars.p_dis[e].push(Expr::Const(s.p_dis[e][t]));
                vars.p_ch[e].push(Expr::Const(s.p_ch[e][t]));
                vars.a_dis[e].push(Expr::Const(s.alpha_dis[e][t]));
                vars.a_ch[e].push(Expr::Const(s.alpha_ch[e][t]));
                vars.h_e[e].push(Expr::Const(s.h_e[e][t]));
                vars.soc[e].push(Expr::Const(s.soc[e][t]));
            } else {
                for list in [
                    &mut vars.p_dis,
                    &mut vars.p_ch,
                    &mut vars.a_dis,
                    &mut vars.a_ch,
                    &mut vars.soc,
                ] {
                    let x = asm.var();
                    list[e].push(x);
                }
                // without the inertia row storage has no reason to hold inertia
                let he = if spec.flags.inertia { asm.var() } else { Expr::Const(0.0) };
                vars.h_e[e].push(he);
            }
        }
    }
    for (b, bus) in case.network.buses.iter().enumerate() {
        for _ in 0..nh {
            let th = if *bus == case.network.slack_bus {
                Expr::Const(0.0)
            } else {
                asm.var()
            };
            vars.theta[b].push(th);
        }
    }
    // epigraph variables for the linearized cost: one for (P + Mα)², one for α²
    let mut epi: Vec<Vec<Option<(usize, usize)>>> = vec![vec![None; nh]; ng];
    if spec.pwl.is_some() {
        for g in 0..ng {
            for k in 0..nh {
                if vars.p[g][k].var().is_some() && case.sgs[g].a != 0.0 {
                    let (x, y) = (asm.var(), asm.var());
                    epi[g][k] = Some((x.var().unwrap(), y.var().unwrap()));
                }
            }
        }
    }
    let n = asm.n;
    asm.qp = QpProblem::new(n);

    // objective
    for (g, sg) in case.sgs.iter().enumerate() {
        for k in 0..nh {
            let t = hours.start + k;
            let (mm, ss) = (m.errors.m_r[t], m.errors.s_r[t]);
            if let (Expr::Var(ip), Expr::Var(ia)) = (vars.p[g][k], vars.alpha[g][k]) {
                let a = sg.a;
                if let Some((ex, ey)) = epi[g][k] {
                    asm.qp.c[ex] += a;
                    asm.qp.c[ey] += a * ss * ss;
                } else if a != 0.0 {
                    asm.qp.q.push((ip, ip, 2.0 * a));
                    asm.qp.q.push((ip.min(ia), ip.max(ia), 2.0 * a * mm));
                    asm.qp.q.push((ia, ia, 2.0 * a * (mm * mm + ss * ss)));
                }
                asm.qp.c[ip] += spec.costs.b[g];
                asm.qp.c[ia] += spec.costs.b[g] * mm;
            }
            match vars.u[g][k] {
                Expr::Var(i) => asm.qp.c[i] += spec.costs.u_cost[g][k],
                Expr::Const(v) => asm.qp.c0 += v * spec.costs.u_cost[g][k],
            }
            match vars.v[g][k] {
                Expr::Var(i) => asm.qp.c[i] += spec.costs.startup[g],
                Expr::Const(v) => asm.qp.c0 += v * spec.costs.startup[g],
            }
        }
    }

    let tag = |family, index, t| RowTag { family, index, t };

    // SG rows
    for (g, sg) in case.sgs.iter().enumerate() {
        let u_at = |k: isize| -> Expr {
            if k < 0 {
                Expr::Const(spec.u_prev[g])
            } else {
                vars.u[g][k as usize]
            }
        };
        for k in 0..nh {
            let t = hours.start + k;
            let (u, p, a) = (vars.u[g][k], vars.p[g][k], vars.alpha[g][k]);
            match spec.commit[g][k] {
                Commit::Pinned(x) => {
                    asm.eq(tag(Family::Commit, g, t), Lin::new().add(u, 1.0), x)?;
                }
                Commit::Free => {
                    let fam = if spec.logic { Family::StatusBound } else { Family::CommitUpper };
                    asm.le(tag(fam, g, t), Lin::new().add(u, 1.0), 1.0)?;
                    let fam = if spec.logic { Family::StatusBound } else { Family::CommitLower };
                    asm.le(tag(fam, g, t), Lin::new().add(u, -1.0), 0.0)?;
                }
                Commit::Fixed(_) => {}
            }
            if spec.logic {
                let (v, w) = (vars.v[g][k], vars.w[g][k]);
                asm.eq(
                    tag(Family::Logic, g, t),
                    Lin::new().add(u, 1.0).add(u_at(k as isize - 1), -1.0).add(v, -1.0).add(w, 1.0),
                    0.0,
                )?;
                for x in [v, w] {
                    asm.le(tag(Family::StatusBound, g, t), Lin::new().add(x, 1.0), 1.0)?;
                    asm.le(tag(Family::StatusBound, g, t), Lin::new().add(x, -1.0), 0.0)?;
                }
            }
            // minimum up/down windows, truncated at the horizon start
            if spec.windows && t + 1 >= sg.min_up && t + 1 - sg.min_up >= hours.start {
                let mut lin = Lin::new();
                for tau in (t + 1 - sg.min_up)..=t {
                    lin.add(vars.v[g][tau - hours.start], 1.0);
                }
                lin.add(u, -1.0);
                asm.le(tag(Family::MinUp, g, t), &lin, 0.0)?;
            }
            if spec.windows && t + 1 >= sg.min_down && t + 1 - sg.min_down >= hours.start {
                let mut lin = Lin::new();
                for tau in (t + 1 - sg.min_down)..=t {
                    lin.add(vars.w[g][tau - hours.start], 1.0);
                }
                lin.add(u, 1.0);
                asm.le(tag(Family::MinDown, g, t), &lin, 1.0)?;
            }
            // ramping, literal, with the previous output as a constant at the start
            let prev = if k == 0 {
                Expr::Const(spec.p_prev[g])
            } else {
                vars.p[g][k - 1]
            };
            asm.le(
                tag(Family::RampUp, g, t),
                Lin::new().add(p, 1.0).add(prev, -1.0),
                sg.ramp_up,
            )?;
            asm.le(
                tag(Family::RampDown, g, t),
                Lin::new().add(prev, 1.0).add(p, -1.0),
                sg.ramp_down,
            )?;
            // participation
            asm.le(tag(Family::PartLower, g, t), Lin::new().add(a, -1.0), 0.0)?;
            asm.le(tag(Family::PartUpper, g, t), Lin::new().add(a, 1.0).add(u, -1.0), 0.0)?;
            // capacity with chance margins
            asm.le(
                tag(Family::CapUpper, g, t),
                Lin::new().add(p, 1.0).add(u, -sg.p_max).add(a, m.sg_upper[g][t]),
                0.0,
            )?;
            asm.le(
                tag(Family::CapLower, g, t),
                Lin::new().add(p, -1.0).add(u, sg.p_min).add(a, m.sg_lower[g][t]),
                0.0,
            )?;
        }
    }

    if let Some(segments) = spec.pwl {
        let segments = segments.max(1);
        for (g, sg) in case.sgs.iter().enumerate() {
            for k in 0..nh {
                let Some((ex, ey)) = epi[g][k] else { continue };
                let t = hours.start + k;
                let (p, a) = (vars.p[g][k], vars.alpha[g][k]);
                let mm = m.errors.m_r[t];
                let top = sg.p_max + mm.abs();
                // tangents of x² at evenly spaced points, value x_j² + 2x_j(x − x_j)
                for j in 0..=segments {
                    let xj = top * j as f64 / segments as f64;
                    let mut lin = Lin::new();
                    lin.add(p, 2.0 * xj).add(a, 2.0 * xj * mm).add(Expr::Var(ex), -1.0);
                    asm.le(tag(Family::Epigraph, g, t), &lin, xj * xj)?;
                    let yj = j as f64 / segments as f64;
                    let mut lin = Lin::new();
                    lin.add(a, 2.0 * yj).add(Expr::Var(ey), -1.0);
                    asm.le(tag(Family::Epigraph, g, t), &lin, yj * yj)?;
                }
            }
        }
    }

    // storage rows
    let f0 = case.params.f0;
    for (e, es) in case.ess.iter().enumerate() {
        if spec.es_fixed.is_some() {
            break;
        }
        let rocof_k = 2.0 * case.params.rocof_max * es.p_dis_max / f0;
        let nadir_k = 2.0 * case.params.df_max * es.p_dis_max / f0;
        for k in 0..nh {
            let t = hours.start + k;
            let (pd, pc, ad, ac, he, soc) = (
                vars.p_dis[e][k],
                vars.p_ch[e][k],
                vars.a_dis[e][k],
                vars.a_ch[e][k],
                vars.h_e[e][k],
                vars.soc[e][k],
            );
            asm.le(
                tag(Family::EsDischarge, e, t),
                Lin::new().add(pd, 1.0).add(he, rocof_k).add(ad, m.es_dis[e][t]),
                es.p_dis_max,
            )?;
            asm.le(
                tag(Family::EsCharge, e, t),
                Lin::new().add(pc, 1.0).add(he, rocof_k).add(ac, m.es_ch[e][t]),
                es.p_ch_max,
            )?;
            asm.le(
                tag(Family::SocUpper, e, t),
                Lin::new().add(soc, 1.0).add(he, nadir_k),
                es.e_max,
            )?;
            asm.le(
                tag(Family::SocLower, e, t),
                Lin::new().add(soc, -1.0).add(he, nadir_k),
                -es.e_min,
            )?;
            let prev = if k == 0 { Expr::Const(es.e0) } else { vars.soc[e][k - 1] };
            let mm = m.errors.m_r[t];
            let kk = es.efficiency;
            asm.eq(
                tag(Family::Soc, e, t),
                Lin::new()
                    .add(soc, 1.0)
                    .add(prev, -1.0)
                    .add(pc, -kk)
                    .add(ac, -kk * mm)
                    .add(pd, 1.0 / kk)
                    .add(ad, mm / kk),
                0.0,
            )?;
            for x in [pd, pc, ad, ac, he] {
                asm.le(tag(Family::EsBound, e, t), Lin::new().add(x, -1.0), 0.0)?;
            }
            asm.le(tag(Family::EsBound, e, t), Lin::new().add(ad, 1.0), 1.0)?;
            asm.le(tag(Family::EsBound, e, t), Lin::new().add(ac, 1.0), 1.0)?;
            asm.le(tag(Family::EsBound, e, t), Lin::new().add(he, 1.0), es.h_max)?;
        }
    }

    // network
    let base = case.params.base_mva;
    let bus_of = |id| case.bus_index(id).expect("validated bus");
    let demand = case.demand_matrix();
    let res = case.res_matrix();
    for k in 0..nh {
        let t = hours.start + k;
        for (l, line) in case.network.lines.iter().enumerate() {
            let (i, j) = (bus_of(line.from), bus_of(line.to));
            let coef = base * line.susceptance;
            let mut lin = Lin::new();
            lin.add(vars.theta[i][k], coef).add(vars.theta[j][k], -coef);
            asm.le(tag(Family::LineUpper, l, t), &lin, line.limit)?;
            let mut lin = Lin::new();
            lin.add(vars.theta[i][k], -coef).add(vars.theta[j][k], coef);
            asm.le(tag(Family::LineLower, l, t), &lin, line.limit)?;
        }
        for b in 0..nb {
            let bus = case.network.buses[b];
            let mut lin = Lin::new();
            for (g, sg) in case.sgs.iter().enumerate() {
                if sg.bus == bus {
                    lin.add(vars.p[g][k], 1.0);
                }
            }
            for (e, es) in case.ess.iter().enumerate() {
                if es.bus == bus {
                    lin.add(vars.p_dis[e][k], 1.0).add(vars.p_ch[e][k], -1.0);
                }
            }
            for line in &case.network.lines {
                let coef = base * line.susceptance;
                let (i, j) = (bus_of(line.from), bus_of(line.to));
                if i == b {
                    lin.add(vars.theta[i][k], -coef).add(vars.theta[j][k], coef);
                } else if j == b {
                    lin.add(vars.theta[j][k], -coef).add(vars.theta[i][k], coef);
                }
            }
            asm.eq(tag(Family::Balance, b, t), &lin, demand[b][t] - res[b][t])?;
        }
        let mut lin = Lin::new();
        for g in 0..ng {
            lin.add(vars.alpha[g][k], 1.0);
        }
        for e in 0..ne {
            lin.add(vars.a_dis[e][k], 1.0).add(vars.a_ch[e][k], -1.0);
        }
        asm.eq(tag(Family::Reserve, 0, t), &lin, 1.0)?;
        if spec.flags.inertia {
            let mut lin = Lin::new();
            for (g, sg) in case.sgs.iter().enumerate() {
                lin.add(vars.u[g][k], -sg.inertia * sg.p_max);
            }
            for (e, es) in case.ess.iter().enumerate() {
                lin.add(vars.h_e[e][k], -es.p_dis_max);
            }
            let rhs = -spec.flags.requirement(case, t) + res_inertia(case, m, t);
            asm.le(tag(Family::Inertia, 0, t), &lin, rhs)?;
        }
    }

    let mut census = Census::new();
    for tag in asm.eq_tags.iter().chain(&asm.ineq_tags) {
        if let Some(name) = tag.family.census_name() {
            *census.entry(name.to_string()).or_default() += 1;
        }
    }
    Ok(Model {
        problem: asm.qp,
        vars,
        eq_tags: asm.eq_tags,
        ineq_tags: asm.ineq_tags,
        census,
        hours,
        p_prev: spec.p_prev.clone(),
    })
}

/// Builds the full-horizon model with every commitment relaxed to [0, 1].
pub fn build_model(case: &SystemCase, margins: &ChanceMargins, flags: &ModelFlags) -> Result<Model> {
    assemble(&Spec::full(case, margins, flags))
}

impl Model {
    pub fn value(&self, e: Expr, x: &[f64]) -> f64 {
        e.value(x)
    }
}
