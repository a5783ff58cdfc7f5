mod common;

use common::margins;
use inertia_uc::case::SystemCase;
use inertia_uc::cases;
use inertia_uc::model::ModelFlags;
use inertia_uc::pricing::{aip_prices, mp_prices, PriceSeries};
use inertia_uc::settlement::{compare_schemes, rmr_select, settle, SettlementReport, UnitClass};
use inertia_uc::solver::{redispatch, solve_ccuc, DecisionSchedule, SolverOptions};
use proptest::prelude::*;

fn solved(case: &SystemCase, flags: &ModelFlags) -> (DecisionSchedule, PriceSeries) {
    let sol = solve_ccuc(case, &margins(case), flags, &SolverOptions::default()).unwrap();
    let prices = mp_prices(case, &sol.duals).unwrap();
    (sol.schedule, prices)
}

fn check_conservation(r: &SettlementReport) {
    let revenue: f64 = r.units.iter().map(|u| u.market_revenue()).sum();
    let uplift: f64 = r.units.iter().map(|u| u.uplift).sum();
    let opp: f64 = r.units.iter().map(|u| u.opportunity).sum();
    let tol = 1e-9 * r.consumer_payment.abs().max(1.0);
    assert!((revenue - r.unit_revenues.sum()).abs() <= tol);
    assert!((uplift - r.total_uplift).abs() <= tol);
    assert!((opp - r.total_opportunity).abs() <= tol);
    assert!((r.consumer_payment - (revenue + uplift + opp)).abs() <= tol);
    for u in &r.units {
        assert!(u.uplift >= 0.0);
        let profit = u.market_revenue() + u.uplift + u.opportunity - u.production_cost;
        assert!((profit - u.net_profit).abs() <= tol, "{}", u.unit);
        // make-whole: nobody ends below cost
        assert!(u.net_profit >= -tol, "{} {}", u.unit, u.net_profit);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn payments_balance_on_random_desks(seed in 0u64..5000) {
        let case = cases::random_desk(seed);
        let flags = ModelFlags::default();
        let (s, p) = solved(&case, &flags);
        let r = settle(&case, &margins(&case), &flags, &s, &p, "MP", false).unwrap();
        check_conservation(&r);
    }

    #[test]
    fn higher_prices_never_raise_uplift(k in 1.0f64..3.0, variant in 0usize..4) {
        let case = cases::inertia_peaker(variant);
        let flags = ModelFlags::default();
        let m = margins(&case);
        let (s, p) = solved(&case, &flags);
        let base = settle(&case, &m, &flags, &s, &p, "MP", false).unwrap();
        let mut q = p.clone();
        for v in q.lambda.iter_mut().flatten().chain(q.gamma.iter_mut()).chain(q.chi.iter_mut()) {
            if *v > 0.0 {
                *v *= k;
            }
        }
        let up = settle(&case, &m, &flags, &s, &q, "MP", false).unwrap();
        for (a, b) in base.units.iter().zip(&up.units) {
            prop_assert!(b.uplift <= a.uplift + 1e-9);
        }
    }
}

#[test]
fn aip_settlement_balances_and_beats_mp_uplift() {
    let case = cases::inertia_peaker(1);
    let m = margins(&case);
    let flags = ModelFlags::default();
    let sol = solve_ccuc(&case, &m, &flags, &SolverOptions::default()).unwrap();
    let mp = settle(&case, &m, &flags, &sol.schedule, &mp_prices(&case, &sol.duals).unwrap(), "MP", false).unwrap();
    let aip_p = aip_prices(&case, &m, &flags, &sol.schedule, &Default::default()).unwrap().prices;
    let aip = settle(&case, &m, &flags, &sol.schedule, &aip_p, "AIP", false).unwrap();
    check_conservation(&mp);
    check_conservation(&aip);
    let cmp = compare_schemes(&[mp.clone(), aip.clone()]).unwrap();
    let row = cmp.row("AIP").unwrap();
    assert!(row.delta_uplift < 0.0);
    assert!((row.total_uplift - aip.total_uplift).abs() < 1e-9);
    assert!(aip.unit("P1").unwrap().inertia_revenue > 0.0);
}

#[test]
fn rmr_overlay_restores_adequacy_without_inertia_payments() {
    let case = cases::deficit_case();
    let m = margins(&case);
    let without = ModelFlags::without_inertia();
    let (base, _) = solved(&case, &without);
    let overlay = rmr_select(&case, &m, &ModelFlags::default(), &base).unwrap();
    assert!(!overlay.added.is_empty());
    let (s, duals) = redispatch(&case, &m, &without, &overlay.commitment, &Default::default()).unwrap();
    let req = ModelFlags::default();
    for t in 0..case.periods() {
        assert!(s.inertia_supply(&case, &m, t) >= req.requirement(&case, t) - 1e-6);
    }
    let prices = mp_prices(&case, &duals).unwrap();
    assert!(prices.chi.iter().all(|&c| c == 0.0));
    let r = settle(&case, &m, &without, &s, &prices, "RMR", true).unwrap();
    check_conservation(&r);
    assert!(r.units.iter().all(|u| u.inertia_revenue == 0.0));
    assert!(r.double_payment.is_empty());
}

#[test]
fn rmr_choice_ignores_unit_order() {
    let case = cases::deficit_case();
    let m = margins(&case);
    let without = ModelFlags::without_inertia();
    let (base, _) = solved(&case, &without);
    let a = rmr_select(&case, &m, &ModelFlags::default(), &base).unwrap();

    let mut rev = case.clone();
    rev.sgs.reverse();
    let mut rb = base.clone();
    for v in [&mut rb.u, &mut rb.v, &mut rb.w, &mut rb.p, &mut rb.alpha] {
        v.reverse();
    }
    let b = rmr_select(&rev, &margins(&rev), &ModelFlags::default(), &rb).unwrap();
    assert_eq!(a.added, b.added);
}

#[test]
fn opportunity_and_inertia_together_are_flagged() {
    let case = cases::inertia_peaker(0);
    let m = margins(&case);
    let flags = ModelFlags::default();
    let (s, mut p) = solved(&case, &flags);
    p.chi.iter_mut().for_each(|c| *c = 1.0);
    let r = settle(&case, &m, &flags, &s, &p, "MP", true).unwrap();
    assert_eq!(r.double_payment, vec!["PV1".to_string()]);
    assert!(r.unit("PV1").unwrap().opportunity > 0.0);
    assert!(r.class_profit(UnitClass::Res) > 0.0);
}

#[test]
fn unit_rows_round_trip() {
    let case = cases::inertia_peaker(3);
    let flags = ModelFlags::default();
    let (s, p) = solved(&case, &flags);
    let r = settle(&case, &margins(&case), &flags, &s, &p, "MP", false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = r.write(dir.path(), "mp").unwrap();
    let csv = files.iter().find(|f| f.extension().is_some_and(|e| e == "csv")).unwrap();
    assert_eq!(SettlementReport::read_units(csv).unwrap(), r.units);
}
