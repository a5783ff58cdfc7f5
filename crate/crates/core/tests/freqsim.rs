use inertia_uc::freqsim::{rocof_formula, simulate_outage, SfrParams};
use proptest::prelude::*;

const LOAD: f64 = 12_651.0;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn initial_slope_follows_the_swing_equation(e in 5_000.0f64..200_000.0, dp in 10.0f64..3000.0) {
        let tr = simulate_outage(e, LOAD, dp, &SfrParams::default(), 60.0).unwrap();
        let f = rocof_formula(e, dp, 60.0);
        prop_assert!((tr.rocof_initial - f).abs() <= 0.01 * f.abs());
    }

    #[test]
    fn more_kinetic_energy_slows_and_lifts_the_response(e in 10_000.0f64..100_000.0, dp in 100.0f64..2000.0) {
        let p = SfrParams::default();
        let lo = simulate_outage(e, LOAD, dp, &p, 60.0).unwrap();
        let hi = simulate_outage(1.5 * e, LOAD, dp, &p, 60.0).unwrap();
        prop_assert!(hi.rocof_initial.abs() < lo.rocof_initial.abs());
        prop_assert!(hi.nadir >= lo.nadir - 1e-9);
    }

    #[test]
    fn larger_outages_fall_deeper(e in 10_000.0f64..100_000.0, dp in 100.0f64..2000.0) {
        let p = SfrParams::default();
        let a = simulate_outage(e, LOAD, dp, &p, 60.0).unwrap();
        let b = simulate_outage(e, LOAD, 1.2 * dp, &p, 60.0).unwrap();
        prop_assert!(b.nadir < a.nadir);
        prop_assert!(b.rocof_initial < a.rocof_initial);
    }
}

#[test]
fn nadir_converges_with_the_step() {
    let coarse = SfrParams { dt: 1e-2, ..SfrParams::default() };
    let fine = SfrParams { dt: 1e-3, ..SfrParams::default() };
    let finer = SfrParams { dt: 2.5e-4, ..SfrParams::default() };
    let run = |p: &SfrParams| simulate_outage(40_000.0, LOAD, 1200.0, p, 60.0).unwrap();
    let (a, b, c) = (run(&coarse), run(&fine), run(&finer));
    assert!((b.nadir - c.nadir).abs() < 1e-6);
    assert!((a.nadir - c.nadir).abs() < 1e-3);
    assert!((b.nadir_time - c.nadir_time).abs() <= 2e-3);
}

#[test]
fn settles_at_the_droop_steady_state() {
    // Δf∞ = −ΔP / (D + Km/R) in per unit once the reheat stage has caught up
    let p = SfrParams { horizon: 120.0, ..SfrParams::default() };
    let dp = 800.0;
    let tr = simulate_outage(50_000.0, LOAD, dp, &p, 60.0).unwrap();
    let expect = -(dp / LOAD) / (p.d + p.km / p.r) * 60.0;
    let last = *tr.df.last().unwrap();
    assert!((last - expect).abs() <= 1e-3 * expect.abs(), "{last} vs {expect}");
}

#[test]
fn published_annotations() {
    let p = SfrParams::default();
    let a = simulate_outage(37_220.0, LOAD, 1500.0, &p, 60.0).unwrap().rocof_initial;
    let b = simulate_outage(54_600.0, LOAD, 1500.0, &p, 60.0).unwrap().rocof_initial;
    assert!((a + 1.209).abs() <= 0.005 * 1.209, "{a}");
    assert!((b + 0.824).abs() <= 0.005 * 0.824, "{b}");
}

#[test]
fn bad_inputs_are_rejected() {
    let p = SfrParams::default();
    assert!(simulate_outage(1e4, LOAD, LOAD + 1.0, &p, 60.0).is_err());
    assert!(simulate_outage(1e4, LOAD, -1.0, &p, 60.0).is_err());
    let short = SfrParams { horizon: 5.0, ..p };
    assert!(simulate_outage(1e4, LOAD, 10.0, &short, 60.0).is_err());
}
