//! Gaussian forecast errors, chance-constraint margins and the expected
//! quadratic generation cost.

use serde::{Deserialize, Serialize};

use crate::case::{SgUnit, SystemCase};
use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Upper tail `1 − Φ(x)` for `x ≥ 5` by the Laplace continued fraction.
fn upper_tail_cf(x: f64) -> f64 {
    let mut f = x;
    for k in (1..=80).rev() {
        f = x + k as f64 / f;
    }
    pdf(x) / f
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= 5.0 {
        return 1.0 - upper_tail_cf(x);
    }
    if x <= -5.0 {
        return upper_tail_cf(-x);
    }
    // Marsaglia's Taylor series
    let q = x * x;
    let (mut s, mut t, mut b) = (x, 0.0, x);
    let mut i = 1.0;
    while s != t {
        t = s;
        i += 2.0;
        b *= q / i;
        s = t + b;
    }
    0.5 + s * (-0.5 * q - LN_SQRT_2PI).exp()
}

/// Standard normal upper tail `1 − Φ(x)`, accurate in relative terms for large x.
pub fn normal_sf(x: f64) -> f64 {
    if x >= 5.0 {
        upper_tail_cf(x)
    } else {
        normal_cdf(-x)
    }
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return upper_quantile(1.0 - p);
    }
    let mut x = acklam(p);
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e / pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// `Φ⁻¹(1 − q)` computed from the upper tail, so small `q` keeps full precision.
pub fn upper_quantile(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if q > 0.5 {
        return -upper_quantile(1.0 - q);
    }
    let mut x = -acklam(q);
    for _ in 0..2 {
        // solve sf(x) = q; d sf/dx = −pdf
        let e = normal_sf(x) - q;
        let u = -e / pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// `Φ⁻¹(1 − eps)·sigma − mean`.
pub fn chance_margin(eps: f64, sigma: f64, mean: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("chance level {eps} outside (0, 1)")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Invalid(format!("negative standard deviation {sigma}")));
    }
    Ok(upper_quantile(eps) * sigma - mean)
}

/// Per-hour moments of the summed RES power and inertia errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateError {
    pub m_r: Vec<f64>,
    pub s_r: Vec<f64>,
    pub m_h: Vec<f64>,
    pub s_h: Vec<f64>,
}

/// Sums per-unit means and variances over independent RES errors.
pub fn aggregate_errors(case: &SystemCase) -> AggregateError {
    let t = case.periods();
    let mut agg = AggregateError {
        m_r: vec![0.0; t],
        s_r: vec![0.0; t],
        m_h: vec![0.0; t],
        s_h: vec![0.0; t],
    };
    for r in &case.ress {
        for h in 0..t {
            agg.m_r[h] += r.err_mean[h];
            agg.s_r[h] += r.err_std[h] * r.err_std[h];
            agg.m_h[h] += r.inertia_err_mean[h];
            agg.s_h[h] += r.inertia_err_std[h] * r.inertia_err_std[h];
        }
    }
    agg.s_r.iter_mut().for_each(|v| *v = v.sqrt());
    agg.s_h.iter_mut().for_each(|v| *v = v.sqrt());
    agg
}

/// Aggregated errors with the case-level power-error override applied.
pub fn system_errors(case: &SystemCase) -> AggregateError {
    let mut agg = aggregate_errors(case);
    if let Some(e) = case.params.aggregate_error {
        agg.m_r.iter_mut().for_each(|v| *v = e.mean);
        agg.s_r.iter_mut().for_each(|v| *v = e.std);
    }
    agg
}

/// How the margin signs are derived.
///
/// `Consistent` follows the recourse directions: SG output `P + αΩ`,
/// discharge `P_d + α_dΩ`, charge `P_c + α_cΩ` and RES inertia `H − ω_h`, so
/// each upper limit needs `zΣ + M`, the SG lower limit `zΣ − M`, and RES
/// inertia is credited at `H − (zΣ_h + M_h)`. `AsPrinted` uses `zΣ − M` for
/// every power margin and credits RES inertia at `H + (zΣ_h − M_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginConvention {
    #[default]
    Consistent,
    AsPrinted,
}

/// Margins indexed `[unit][hour]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceMargins {
    pub convention: MarginConvention,
    pub errors: AggregateError,
    /// SG upper-limit margin (MW per unit of α).
    pub sg_upper: Vec<Vec<f64>>,
    /// SG lower-limit margin.
    pub sg_lower: Vec<Vec<f64>>,
    pub es_dis: Vec<Vec<f64>>,
    pub es_ch: Vec<Vec<f64>>,
    /// Additive correction to each RES unit's inertia constant (s).
    pub res_inertia: Vec<Vec<f64>>,
}

impl ChanceMargins {
    pub fn compute(case: &SystemCase, convention: MarginConvention) -> Result<Self> {
        let errors = system_errors(case);
        let t = case.periods();
        let (mr, sr, mh, sh) = (&errors.m_r, &errors.s_r, &errors.m_h, &errors.s_h);
        let upper = |eps: f64, h: usize| -> Result<f64> {
            match convention {
                MarginConvention::Consistent => chance_margin(eps, sr[h], -mr[h]),
                MarginConvention::AsPrinted => chance_margin(eps, sr[h], mr[h]),
            }
        };
        let per_hour = |f: &dyn Fn(usize) -> Result<f64>| -> Result<Vec<f64>> { (0..t).map(f).collect() };
        let mut m = ChanceMargins {
            convention,
            sg_upper: Vec::new(),
            sg_lower: Vec::new(),
            es_dis: Vec::new(),
            es_ch: Vec::new(),
            res_inertia: Vec::new(),
            errors: errors.clone(),
        };
        for g in &case.sgs {
            m.sg_upper.push(per_hour(&|h| upper(g.eps, h))?);
            m.sg_lower.push(per_hour(&|h| chance_margin(g.eps, sr[h], mr[h]))?);
        }
        for e in &case.ess {
            m.es_dis.push(per_hour(&|h| upper(e.eps_d, h))?);
            m.es_ch.push(per_hour(&|h| upper(e.eps_c, h))?);
        }
        for r in &case.ress {
            m.res_inertia.push(per_hour(&|h| match convention {
                MarginConvention::Consistent => Ok(-chance_margin(r.eps_h, sh[h], -mh[h])?),
                MarginConvention::AsPrinted => chance_margin(r.eps_h, sh[h], mh[h]),
            })?);
        }
        Ok(m)
    }

    /// All margins zero, with the case's error moments kept for the cost.
    pub fn zero(case: &SystemCase) -> Self {
        let t = case.periods();
        let z = |n: usize| vec![vec![0.0; t]; n];
        ChanceMargins {
            convention: MarginConvention::Consistent,
            errors: system_errors(case),
            sg_upper: z(case.sgs.len()),
            sg_lower: z(case.sgs.len()),
            es_dis: z(case.ess.len()),
            es_ch: z(case.ess.len()),
            res_inertia: z(case.ress.len()),
        }
    }
}

/// Expected cost `a[(P + Mα)² + S²α²] + b(P + Mα) + u·c + v·s` of one SG-hour.
pub fn expected_sg_cost(unit: &SgUnit, p: f64, alpha: f64, u: f64, v: f64, m: f64, s: f64) -> f64 {
    let mean = p + m * alpha;
    unit.a * (mean * mean + s * s * alpha * alpha) + unit.b * mean + u * unit.c + v * unit.startup
}
