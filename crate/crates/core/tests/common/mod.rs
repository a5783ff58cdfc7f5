#![allow(dead_code)]

use inertia_uc::case::SystemCase;
use inertia_uc::cases;
use inertia_uc::model::ModelFlags;
use inertia_uc::qp::QpSettings;
use inertia_uc::solver::{evaluate_commitment, redispatch, DecisionSchedule};
use inertia_uc::uncertainty::{ChanceMargins, MarginConvention};

pub fn margins(case: &SystemCase) -> ChanceMargins {
    ChanceMargins::compute(case, MarginConvention::Consistent).unwrap()
}

/// Cheapest objective over every commitment, by enumeration.
pub fn brute_force(case: &SystemCase, m: &ChanceMargins, flags: &ModelFlags) -> Option<(f64, DecisionSchedule)> {
    let (ng, nt) = (case.sgs.len(), case.periods());
    let bits = ng * nt;
    assert!(bits <= 16, "enumeration too large");
    let mut best: Option<(f64, DecisionSchedule)> = None;
    for code in 0u32..(1 << bits) {
        let u: Vec<Vec<bool>> = (0..ng)
            .map(|g| (0..nt).map(|t| code >> (g * nt + t) & 1 == 1).collect())
            .collect();
        if let Ok(Some(s)) = evaluate_commitment(case, m, flags, &u, &QpSettings::default()) {
            if best.as_ref().map_or(true, |(b, _)| s.objective < *b) {
                best = Some((s.objective, s));
            }
        }
    }
    best
}

/// Central difference of the fixed-commitment cost in the requirement of
/// hour `t`.
pub fn fd_chi(case: &SystemCase, m: &ChanceMargins, u: &[Vec<bool>], t: usize, step: f64) -> f64 {
    let nt = case.periods();
    let cost = |delta: f64| {
        let mut f = ModelFlags::default();
        f.inertia_offset = vec![0.0; nt];
        f.inertia_offset[t] = delta;
        redispatch(case, m, &f, u, &QpSettings::default()).unwrap().0.objective
    };
    (cost(step) - cost(-step)) / (2.0 * step)
}

/// The curated desk cases with their names.
pub fn desk_suite() -> Vec<(String, SystemCase)> {
    let mut v = vec![
        ("single-sg".to_string(), cases::single_sg(&[60.0, 120.0, 90.0])),
        ("congested".to_string(), cases::congested_two_bus()),
    ];
    v.extend(cases::inertia_peaker_suite());
    v.extend(cases::min_gen_suite());
    v.extend((0..3).map(|i| (format!("firmed-{i}"), cases::storage_firmed(i))));
    v
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// `a <= b` up to a relative tolerance.
pub fn le_tol(a: f64, b: f64, tol: f64) -> bool {
    a <= b + tol * a.abs().max(b.abs()).max(1.0)
}
