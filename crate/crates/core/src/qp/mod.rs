//! Convex quadratic programming with a primal-dual interior-point method.
//!
//! Problems have the form
//!
//! ```text
//! minimize    ½ xᵀQx + cᵀx + c0
//! subject to  Ax = b
//!             Gx ≤ h
//! ```
//!
//! with the Lagrangian `L = f + yᵀ(Ax − b) + zᵀ(Gx − h)`, so `z ≥ 0` and the
//! stationarity condition reads `Qx + c + Aᵀy + Gᵀz = 0`.
//!
//! The solver is Mehrotra's predictor-corrector on the full quasi-definite KKT
//! system, factored with the sparse LDLᵀ in `ldl`. When the iteration fails
//! to converge, an elastic phase-1 LP decides whether the problem is
//! infeasible and which row is most violated.

mod ldl;

use ldl::{Symbolic, UpperCsc};

/// Compressed sparse rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Csr {
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn new(ncols: usize) -> Self {
        Csr {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row. Duplicate columns are summed and zeros dropped.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) {
        let mut row: Vec<(usize, f64)> = entries.to_vec();
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (j, v) in row {
            assert!(j < self.ncols, "column {j} out of range");
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        for (j, v) in merged {
            if v != 0.0 {
                self.indices.push(j);
                self.values.push(v);
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.row(i).map(|(j, v)| v * x[j]).sum()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.row_dot(i, x)).collect()
    }

    /// out += selfᵀ y
    pub fn tmul_add(&self, y: &[f64], out: &mut [f64]) {
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for (j, v) in self.row(i) {
                    out[j] += v * yi;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub n: usize,
    /// Upper-triangular entries `(i, j, v)` with `i <= j`; duplicates are summed.
    pub q: Vec<(usize, usize, f64)>,
    pub c: Vec<f64>,
    pub c0: f64,
    pub a: Csr,
    pub b: Vec<f64>,
    pub g: Csr,
    pub h: Vec<f64>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        QpProblem {
            n,
            q: Vec::new(),
            c: vec![0.0; n],
            c0: 0.0,
            a: Csr::new(n),
            b: Vec::new(),
            g: Csr::new(n),
            h: Vec::new(),
        }
    }

    pub fn add_eq(&mut self, row: &[(usize, f64)], rhs: f64) -> usize {
        self.a.push_row(row);
        self.b.push(rhs);
        self.b.len() - 1
    }

    pub fn add_le(&mut self, row: &[(usize, f64)], rhs: f64) -> usize {
        self.g.push_row(row);
        self.h.push(rhs);
        self.h.len() - 1
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.c0;
        for (j, cj) in self.c.iter().enumerate() {
            v += cj * x[j];
        }
        for &(i, j, q) in &self.q {
            if i == j {
                v += 0.5 * q * x[i] * x[i];
            } else {
                v += q * x[i] * x[j];
            }
        }
        v
    }

    fn q_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j, q) in &self.q {
            out[i] += q * x[j];
            if i != j {
                out[j] += q * x[i];
            }
        }
        out
    }

    /// Largest violation of any constraint, in the units of each row.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.a.nrows() {
            worst = worst.max((self.a.row_dot(i, x) - self.b[i]).abs());
        }
        for i in 0..self.g.nrows() {
            worst = worst.max(self.g.row_dot(i, x) - self.h[i]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub ruiz_iter: usize,
    /// Run the phase-1 LP when the main iteration fails.
    pub phase1: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-11,
            max_iter: 150,
            ruiz_iter: 15,
            phase1: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowRef {
    Eq(usize),
    Ineq(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    /// Most violated row in the elastic relaxation.
    pub row: RowRef,
    /// Its violation after normalizing the row to unit infinity norm.
    pub violation: f64,
    /// Total normalized violation.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub infeasibility: Option<Infeasibility>,
}

struct Scaled {
    p: QpProblem,
    d: Vec<f64>,
    ea: Vec<f64>,
    eg: Vec<f64>,
    sigma: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn clamp_scale(v: f64) -> f64 {
    if v < 1e-8 {
        1.0
    } else {
        v.clamp(1e-4, 1e4)
    }
}

/// Ruiz equilibration of the KKT matrix followed by cost scaling.
fn scale(problem: &QpProblem, iters: usize) -> Scaled {
    let mut p = problem.clone();
    let n = p.n;
    let mut d = vec![1.0; n];
    let mut ea = vec![1.0; p.a.nrows()];
    let mut eg = vec![1.0; p.g.nrows()];
    for _ in 0..iters {
        let mut col = vec![0.0f64; n];
        for &(i, j, v) in &p.q {
            col[i] = col[i].max(v.abs());
            col[j] = col[j].max(v.abs());
        }
        for m in [&p.a, &p.g] {
            for (j, v) in m.indices.iter().zip(&m.values) {
                col[*j] = col[*j].max(v.abs());
            }
        }
        let dc: Vec<f64> = col.iter().map(|&c| 1.0 / clamp_scale(c).sqrt()).collect();
        let ra: Vec<f64> = (0..p.a.nrows())
            .map(|i| 1.0 / clamp_scale(p.a.row(i).fold(0.0, |m, (_, v)| m.max(v.abs()))).sqrt())
            .collect();
        let rg: Vec<f64> = (0..p.g.nrows())
            .map(|i| 1.0 / clamp_scale(p.g.row(i).fold(0.0, |m, (_, v)| m.max(v.abs()))).sqrt())
            .collect();
        for e in p.q.iter_mut() {
            e.2 *= dc[e.0] * dc[e.1];
        }
        for (m, r) in [(&mut p.a, &ra), (&mut p.g, &rg)] {
            for i in 0..m.nrows() {
                for k in m.indptr[i]..m.indptr[i + 1] {
                    m.values[k] *= r[i] * dc[m.indices[k]];
                }
            }
        }
        for j in 0..n {
            p.c[j] *= dc[j];
            d[j] *= dc[j];
        }
        for i in 0..ra.len() {
            p.b[i] *= ra[i];
            ea[i] *= ra[i];
        }
        for i in 0..rg.len() {
            p.h[i] *= rg[i];
            eg[i] *= rg[i];
        }
    }
    let qmax = p.q.iter().fold(0.0f64, |m, e| m.max(e.2.abs()));
    let sigma = 1.0 / clamp_scale(qmax.max(inf_norm(&p.c)));
    for e in p.q.iter_mut() {
        e.2 *= sigma;
    }
    for v in p.c.iter_mut() {
        *v *= sigma;
    }
    p.c0 *= sigma;
    Scaled {
        p,
        d,
        ea,
        eg,
        sigma,
    }
}

struct Kkt {
    n: usize,
    me: usize,
    mi: usize,
    pattern: UpperCsc,
    sym: Symbolic,
    base: Vec<f64>,
    zdiag: Vec<usize>,
    xdiag: Vec<usize>,
    ydiag: Vec<usize>,
    signs: Vec<f64>,
    reg: f64,
}

/// Static regularization of the KKT diagonal. The lighter value is the
/// retry when the default stalls on an equality it cannot quite reach.
const REG: f64 = 1e-8;
const REG_LIGHT: f64 = 1e-10;

impl Kkt {
    fn new(p: &QpProblem, reg: f64) -> Self {
        let n = p.n;
        let me = p.a.nrows();
        let mi = p.g.nrows();
        let mut pairs = Vec::new();
        let mut vals = Vec::new();
        for &(i, j, v) in &p.q {
            pairs.push((i.min(j), i.max(j)));
            vals.push(v);
        }
        let xd0 = pairs.len();
        for j in 0..n {
            pairs.push((j, j));
            vals.push(0.0);
        }
        let mut yd = Vec::with_capacity(me);
        for r in 0..me {
            for (j, v) in p.a.row(r) {
                pairs.push((j, n + r));
                vals.push(v);
            }
            yd.push(pairs.len());
            pairs.push((n + r, n + r));
            vals.push(0.0);
        }
        let mut zd = Vec::with_capacity(mi);
        for r in 0..mi {
            for (j, v) in p.g.row(r) {
                pairs.push((j, n + me + r));
                vals.push(v);
            }
            zd.push(pairs.len());
            pairs.push((n + me + r, n + me + r));
            vals.push(0.0);
        }
        let dim = n + me + mi;
        let (pattern, slots) = UpperCsc::from_pairs(dim, &pairs);
        let mut base = vec![0.0; pattern.nnz()];
        for (s, v) in slots.iter().zip(&vals) {
            base[*s] += v;
        }
        let sym = Symbolic::analyze(&pattern);
        let mut signs = vec![1.0; dim];
        for s in signs.iter_mut().skip(n) {
            *s = -1.0;
        }
        Kkt {
            n,
            me,
            mi,
            pattern,
            sym,
            base,
            zdiag: zd.iter().map(|&k| slots[k]).collect(),
            xdiag: (0..n).map(|j| slots[xd0 + j]).collect(),
            ydiag: yd.iter().map(|&k| slots[k]).collect(),
            signs,
            reg,
        }
    }

    fn values(&self, winv: &[f64]) -> Vec<f64> {
        let mut v = self.base.clone();
        for (k, &w) in winv.iter().enumerate() {
            v[self.zdiag[k]] -= w;
        }
        v
    }

    fn regularize(&self, exact: &[f64]) -> Vec<f64> {
        let mut v = exact.to_vec();
        for &k in &self.xdiag {
            v[k] += self.reg;
        }
        for &k in self.ydiag.iter().chain(&self.zdiag) {
            v[k] -= self.reg;
        }
        v
    }
}

struct Factored<'a> {
    kkt: &'a Kkt,
    exact: Vec<f64>,
    factor: ldl::Factor,
}

impl<'a> Factored<'a> {
    fn new(kkt: &'a Kkt, winv: &[f64]) -> Self {
        let exact = kkt.values(winv);
        let reg = kkt.regularize(&exact);
        let factor = kkt.sym.factor(&reg, &kkt.signs, 1e-13, 1e-7);
        if factor.regularized > 0 {
            log::trace!("{} pivots regularized, {}", factor.regularized, factor.summary());
        }
        Factored { kkt, exact, factor }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.kkt.sym.solve(&self.factor, &mut x);
        let dim = rhs.len();
        let rn = inf_norm(rhs).max(1e-300);
        let residual = |x: &[f64], r: &mut Vec<f64>| {
            self.kkt.pattern.sym_mul(&self.exact, x, r);
            for i in 0..dim {
                r[i] = rhs[i] - r[i];
            }
            let n = inf_norm(r);
            if n.is_finite() {
                n
            } else {
                f64::INFINITY
            }
        };
        let mut r = vec![0.0; dim];
        let mut rnorm = residual(&x, &mut r);
        // refine while the residual keeps shrinking
        for _ in 0..8 {
            if rnorm <= 1e-14 * rn {
                break;
            }
            self.kkt.sym.solve(&self.factor, &mut r);
            let cand: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a + b).collect();
            let mut r2 = vec![0.0; dim];
            let n2 = residual(&cand, &mut r2);
            if !(n2 < rnorm) {
                break;
            }
            x = cand;
            r = r2;
            rnorm = n2;
        }
        x
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut a: f64 = 1.0;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

#[derive(Debug)]
enum Outcome {
    Converged(usize),
    Diverged(usize),
    Stalled(usize, f64),
}

impl Outcome {
    fn better_than(&self, other: &Outcome) -> bool {
        match (self, other) {
            (_, Outcome::Converged(_)) => false,
            (Outcome::Converged(_), _) => true,
            (Outcome::Stalled(_, a), Outcome::Stalled(_, b)) => a < b,
            (Outcome::Stalled(..), Outcome::Diverged(_)) => true,
            (Outcome::Diverged(_), _) => false,
        }
    }
}

fn ipm(p: &QpProblem, tol: f64, max_iter: usize, reg: f64) -> (Iterate, Outcome) {
    let kkt = Kkt::new(p, reg);
    let (n, me, mi) = (kkt.n, kkt.me, kkt.mi);
    let dim = n + me + mi;

    // initial point: least-squares slack solve, then shift into the cone
    let f0 = Factored::new(&kkt, &vec![1.0; mi]);
    let mut rhs = vec![0.0; dim];
    for j in 0..n {
        rhs[j] = -p.c[j];
    }
    rhs[n..n + me].copy_from_slice(&p.b);
    rhs[n + me..].copy_from_slice(&p.h);
    let sol = f0.solve(&rhs);
    let x = sol[..n].to_vec();
    let y = sol[n..n + me].to_vec();
    let gx = p.g.mul(&x);
    let mut s: Vec<f64> = (0..mi).map(|i| p.h[i] - gx[i]).collect();
    let mut z: Vec<f64> = sol[n + me..].to_vec();
    if mi > 0 {
        let ap = -s.iter().cloned().fold(f64::INFINITY, f64::min);
        if ap >= -1e-8 {
            s.iter_mut().for_each(|v| *v += 1.0 + ap);
        }
        let ad = -z.iter().cloned().fold(f64::INFINITY, f64::min);
        if ad >= -1e-8 {
            z.iter_mut().for_each(|v| *v += 1.0 + ad);
        }
    }
    let mut it = Iterate { x, y, z, s };

    let bn = inf_norm(&p.b);
    let hn = inf_norm(&p.h);
    let cn = inf_norm(&p.c);
    let mut best_merit = f64::INFINITY;
    let mut since_best = 0;
    // lowest-merit iterate so far; a stall falls back to it
    let mut best: Option<(f64, Iterate)> = None;

    for iter in 0..max_iter {
        let Iterate { x, y, z, s } = &mut it;
        let qx = p.q_mul(x);
        let mut rd: Vec<f64> = (0..n).map(|j| qx[j] + p.c[j]).collect();
        p.a.tmul_add(y, &mut rd);
        p.g.tmul_add(z, &mut rd);
        let ax = p.a.mul(x);
        let rp: Vec<f64> = (0..me).map(|i| ax[i] - p.b[i]).collect();
        let gx = p.g.mul(x);
        let rg: Vec<f64> = (0..mi).map(|i| gx[i] + s[i] - p.h[i]).collect();
        let sz = dot(s, z);
        let mu = if mi > 0 { sz / mi as f64 } else { 0.0 };
        let pobj = 0.5 * dot(x, &qx) + dot(&p.c, x);

        let ep = inf_norm(&rp) / (1.0 + bn.max(inf_norm(&ax)));
        let eg = inf_norm(&rg) / (1.0 + hn.max(inf_norm(&gx)));
        let ed = inf_norm(&rd) / (1.0 + cn.max(inf_norm(&qx)));
        let egap = sz / (1.0 + pobj.abs());
        if ep <= tol && eg <= tol && ed <= tol && egap <= tol {
            return (it, Outcome::Converged(iter));
        }
        let yz = inf_norm(y).max(inf_norm(z));
        if !yz.is_finite() || yz > 1e13 || !pobj.is_finite() {
            return (it, Outcome::Diverged(iter));
        }
        // Farkas direction for Ax = b, Gx ≤ h
        if yz > 1e6 {
            let mut cert = vec![0.0; n];
            p.a.tmul_add(y, &mut cert);
            p.g.tmul_add(z, &mut cert);
            let bound = dot(&p.b, y) + dot(&p.h, z);
            if bound < 0.0 && inf_norm(&cert) <= 1e-6 * (-bound) {
                return (it, Outcome::Diverged(iter));
            }
        }
        let merit = ep.max(eg).max(ed).max(egap);
        log::trace!("ipm {iter}: primal {ep:.1e}/{eg:.1e} dual {ed:.1e} gap {egap:.1e} mu {mu:.1e}");
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            let snap = Iterate { x: x.clone(), y: y.clone(), z: z.clone(), s: s.clone() };
            best = Some((merit, snap));
        }
        if merit < 0.5 * best_merit {
            best_merit = merit;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 30 {
                let (m, b) = best.expect("at least one iterate was scored");
                return (b, Outcome::Stalled(iter, m));
            }
        }

        let winv: Vec<f64> = (0..mi).map(|i| s[i] / z[i]).collect();
        let fac = Factored::new(&kkt, &winv);
        let mut rhs = vec![0.0; dim];
        let build_rhs = |rhs: &mut Vec<f64>, rsz_over_z: &[f64]| {
            for j in 0..n {
                rhs[j] = -rd[j];
            }
            for i in 0..me {
                rhs[n + i] = -rp[i];
            }
            for i in 0..mi {
                rhs[n + me + i] = -rg[i] + rsz_over_z[i];
            }
        };

        // predictor
        build_rhs(&mut rhs, s);
        let d = fac.solve(&rhs);
        let dz_a = &d[n + me..];
        let ds_a: Vec<f64> = (0..mi).map(|i| -s[i] - winv[i] * dz_a[i]).collect();
        let alpha_a = max_step(s, &ds_a).min(max_step(z, dz_a));
        let sigma = if mi > 0 {
            let mu_a = (0..mi)
                .map(|i| (s[i] + alpha_a * ds_a[i]) * (z[i] + alpha_a * dz_a[i]))
                .sum::<f64>()
                / mi as f64;
            (mu_a / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // corrector
        let rsz: Vec<f64> = (0..mi)
            .map(|i| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu)
            .collect();
        let rsz_z: Vec<f64> = (0..mi).map(|i| rsz[i] / z[i]).collect();
        build_rhs(&mut rhs, &rsz_z);
        let d = fac.solve(&rhs);
        let (dx, rest) = d.split_at(n);
        let (dy, dz) = rest.split_at(me);
        let ds: Vec<f64> = (0..mi).map(|i| -rsz_z[i] - winv[i] * dz[i]).collect();
        let alpha = (0.99 * max_step(s, &ds).min(max_step(z, dz))).min(1.0);
        for j in 0..n {
            x[j] += alpha * dx[j];
        }
        for i in 0..me {
            y[i] += alpha * dy[i];
        }
        for i in 0..mi {
            z[i] += alpha * dz[i];
            s[i] += alpha * ds[i];
        }
        if d.iter().any(|v| !v.is_finite()) {
            log::trace!("non-finite Newton step at iteration {iter}");
            return (it, Outcome::Diverged(iter));
        }
    }
    match best {
        Some((m, b)) => (b, Outcome::Stalled(max_iter, m)),
        None => (it, Outcome::Stalled(max_iter, f64::INFINITY)),
    }
}

/// Elastic relaxation of the constraints with rows normalized to unit norm.
fn phase1(problem: &QpProblem, settings: &QpSettings) -> Option<Infeasibility> {
    let n = problem.n;
    let me = problem.a.nrows();
    let mi = problem.g.nrows();
    let nv = n + 2 * me + mi;
    let mut lp = QpProblem::new(nv);
    for k in n..nv {
        lp.c[k] = 1.0;
        lp.add_le(&[(k, -1.0)], 0.0);
    }
    for i in 0..me {
        let nrm = problem.a.row(i).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        let nrm = if nrm > 0.0 { nrm } else { 1.0 };
        let mut row: Vec<(usize, f64)> = problem.a.row(i).map(|(j, v)| (j, v / nrm)).collect();
        row.push((n + i, 1.0));
        row.push((n + me + i, -1.0));
        lp.add_eq(&row, problem.b[i] / nrm);
    }
    for i in 0..mi {
        let nrm = problem.g.row(i).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        let nrm = if nrm > 0.0 { nrm } else { 1.0 };
        let mut row: Vec<(usize, f64)> = problem.g.row(i).map(|(j, v)| (j, v / nrm)).collect();
        row.push((n + 2 * me + i, -1.0));
        lp.add_le(&row, problem.h[i] / nrm);
    }
    let inner = QpSettings {
        phase1: false,
        ..*settings
    };
    let sol = solve(&lp, &inner);
    let total = sol.objective;
    let threshold = 1e-6;
    if sol.status == QpStatus::Optimal && total <= threshold {
        return None;
    }
    let mut best = (RowRef::Eq(0), -1.0);
    for i in 0..me {
        let v = sol.x[n + i] + sol.x[n + me + i];
        if v > best.1 {
            best = (RowRef::Eq(i), v);
        }
    }
    for i in 0..mi {
        let v = sol.x[n + 2 * me + i];
        if v > best.1 {
            best = (RowRef::Ineq(i), v);
        }
    }
    Some(Infeasibility {
        row: best.0,
        violation: best.1,
        total,
    })
}

pub fn solve(problem: &QpProblem, settings: &QpSettings) -> QpSolution {
    let sc = scale(problem, settings.ruiz_iter);
    let (mut it, mut outcome) = ipm(&sc.p, settings.tol, settings.max_iter, REG);
    if !matches!(outcome, Outcome::Converged(_)) {
        let (it2, out2) = ipm(&sc.p, settings.tol, settings.max_iter, REG_LIGHT);
        log::trace!("retry with lighter regularization: {:?} -> {:?}", outcome, out2);
        if out2.better_than(&outcome) {
            (it, outcome) = (it2, out2);
        }
    }
    let n = problem.n;
    let x: Vec<f64> = (0..n).map(|j| sc.d[j] * it.x[j]).collect();
    let y: Vec<f64> = (0..it.y.len())
        .map(|i| sc.ea[i] * it.y[i] / sc.sigma)
        .collect();
    let z: Vec<f64> = (0..it.z.len())
        .map(|i| sc.eg[i] * it.z[i] / sc.sigma)
        .collect();
    let s: Vec<f64> = (0..it.s.len()).map(|i| it.s[i] / sc.eg[i]).collect();

    let qx = problem.q_mul(&x);
    let mut rd: Vec<f64> = (0..n).map(|j| qx[j] + problem.c[j]).collect();
    problem.a.tmul_add(&y, &mut rd);
    problem.g.tmul_add(&z, &mut rd);
    let objective = problem.objective(&x);
    let gap = dot(&s, &z);

    let (status, iterations) = match outcome {
        Outcome::Converged(k) => (QpStatus::Optimal, k),
        Outcome::Diverged(k) => (QpStatus::NumericalError, k),
        // accept a stalled iterate that is already accurate to working precision
        Outcome::Stalled(k, merit) if merit <= 1e-7 => (QpStatus::Optimal, k),
        Outcome::Stalled(k, _) => (QpStatus::MaxIterations, k),
    };
    let mut sol = QpSolution {
        status,
        primal_residual: problem.max_violation(&x),
        dual_residual: inf_norm(&rd),
        gap,
        objective,
        x,
        y,
        z,
        s,
        iterations,
        infeasibility: None,
    };
    if status != QpStatus::Optimal && settings.phase1 {
        if let Some(inf) = phase1(problem, settings) {
            log::debug!("qp infeasible: {:?}", inf);
            sol.status = QpStatus::Infeasible;
            sol.infeasibility = Some(inf);
        }
    }
    sol
}
