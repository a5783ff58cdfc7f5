use inertia_uc::case::{load_case, save_case, scale_penetration, SystemCase};
use inertia_uc::cases;
use inertia_uc::error::Error;
use inertia_uc::uncertainty::{chance_margin, normal_cdf, ChanceMargins, MarginConvention};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn json_round_trip(seed in 0u64..100_000) {
        let case = cases::random_desk(seed);
        let back = SystemCase::from_json(&case.to_json()).unwrap();
        prop_assert_eq!(back, case);
    }

    #[test]
    fn penetration_hits_the_target_share(eta in 0.0f64..0.25) {
        let case = cases::inertia_peaker(3);
        let scaled = scale_penetration(&case, eta).unwrap();
        let t = case.periods();
        let res: f64 = scaled.ress.iter().flat_map(|r| r.forecast.iter()).sum();
        let demand: f64 = (0..t).map(|h| case.total_demand(h)).sum();
        prop_assert!((res / demand - eta).abs() < 1e-12);
        prop_assert_eq!(&scaled.sgs, &case.sgs);
    }

    #[test]
    fn margin_quantile_is_exact(eps in 0.001f64..0.5, sigma in 0.1f64..50.0) {
        // P(X <= margin) = 1 − eps for X ~ N(0, σ²)
        let z = chance_margin(eps, sigma, 0.0).unwrap();
        prop_assert!((normal_cdf(z / sigma) - (1.0 - eps)).abs() < 1e-12);
    }

    #[test]
    fn tighter_levels_need_wider_margins(a in 0.001f64..0.5, b in 0.001f64..0.5, sigma in 0.1f64..50.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(chance_margin(lo, sigma, 0.0).unwrap() >= chance_margin(hi, sigma, 0.0).unwrap());
    }
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case.json");
    let case = cases::storage_firmed(1);
    save_case(&case, &path).unwrap();
    assert_eq!(load_case(&path).unwrap(), case);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_case("/nonexistent/case.json").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn bad_line_endpoint_names_its_path() {
    let mut case = cases::congested_two_bus();
    case.network.lines[0].to = 77;
    match case.validate().unwrap_err() {
        Error::Validation { field, .. } => assert_eq!(field, "network.lines[0]"),
        e => panic!("{e}"),
    }
}

#[test]
fn short_forecast_names_the_unit() {
    let mut case = cases::inertia_peaker(0);
    case.ress[0].forecast.pop();
    let text = case.to_json();
    match SystemCase::from_json(&text).unwrap_err() {
        Error::Validation { field, .. } => assert!(field.starts_with("ress[0](PV1)"), "{field}"),
        e => panic!("{e}"),
    }
}

#[test]
fn overscaled_res_is_infeasible() {
    let err = scale_penetration(&cases::inertia_peaker(0), 0.95).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn both_conventions_agree_without_error_bias() {
    let mut case = cases::inertia_peaker(1);
    for r in case.ress.iter_mut() {
        r.err_mean.iter_mut().for_each(|m| *m = 0.0);
        r.inertia_err_mean.iter_mut().for_each(|m| *m = 0.0);
    }
    let a = ChanceMargins::compute(&case, MarginConvention::Consistent).unwrap();
    let b = ChanceMargins::compute(&case, MarginConvention::AsPrinted).unwrap();
    assert_eq!(a.sg_upper, b.sg_upper);
    assert_eq!(a.sg_lower, b.sg_lower);
    assert_eq!(a.es_dis, b.es_dis);
}
