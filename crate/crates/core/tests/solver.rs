mod common;

use common::{brute_force, margins};
use inertia_uc::case::SystemCase;
use inertia_uc::cases;
use inertia_uc::error::Error;
use inertia_uc::model::ModelFlags;
use inertia_uc::solver::{
    commitment_violation, monte_carlo_chance_check, solve_ccuc, solve_fixed_qp, solve_relaxation, SolveStatus,
    SolverOptions,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn search_agrees_with_enumeration(seed in 100u64..10_000) {
        let case = cases::random_desk(seed);
        let m = margins(&case);
        let flags = ModelFlags::default();
        let (best, _) = brute_force(&case, &m, &flags).unwrap();
        let scale = best.abs().max(1.0);

        let tight = SolverOptions { gap: 1e-8, ..SolverOptions::default() };
        let sol = solve_ccuc(&case, &m, &flags, &tight).unwrap();
        prop_assert!((sol.schedule.objective - best).abs() <= 1e-6 * scale);
        prop_assert_eq!(sol.status, SolveStatus::Optimal);

        // the default gap may stop early, but never by more than it reports
        let loose = solve_ccuc(&case, &m, &flags, &SolverOptions::default()).unwrap();
        prop_assert!(loose.gap <= SolverOptions::default().gap);
        prop_assert!(loose.schedule.objective - best <= loose.gap * scale + 1e-6 * scale);
        prop_assert!(loose.bound <= best + 1e-6 * scale);
    }

    #[test]
    fn relaxation_bounds_the_integer_optimum(seed in 100u64..10_000) {
        let case = cases::random_desk(seed);
        let m = margins(&case);
        let flags = ModelFlags::default();
        let lp = solve_relaxation(&case, &m, &flags, &Default::default()).unwrap();
        let ip = solve_ccuc(&case, &m, &flags, &SolverOptions::default()).unwrap();
        prop_assert!(lp.objective <= ip.schedule.objective + 1e-6 * ip.schedule.objective.abs());
    }

    #[test]
    fn dropping_the_inertia_row_never_costs_more(seed in 100u64..10_000) {
        let case = cases::random_desk(seed);
        let m = margins(&case);
        let tight = SolverOptions { gap: 1e-8, ..SolverOptions::default() };
        let with = solve_ccuc(&case, &m, &ModelFlags::default(), &tight).unwrap();
        let without = solve_ccuc(&case, &m, &ModelFlags::without_inertia(), &tight).unwrap();
        prop_assert!(without.schedule.objective <= with.schedule.objective * (1.0 + 1e-7));
    }
}

#[test]
fn fixed_qp_reproduces_the_search_optimum() {
    let case = cases::inertia_peaker(1);
    let m = margins(&case);
    let flags = ModelFlags::default();
    let sol = solve_ccuc(&case, &m, &flags, &SolverOptions::default()).unwrap();
    let (fixed, duals) = solve_fixed_qp(&case, &m, &flags, &sol.schedule.commitment(), &Default::default()).unwrap();
    assert!((fixed.objective - sol.schedule.objective).abs() <= 1e-6 * fixed.objective);
    assert_eq!(duals.chi.len(), case.periods());
}

#[test]
fn load_above_capacity_is_infeasible() {
    let case = cases::single_sg(&[80.0, 500.0]);
    let err = solve_ccuc(&case, &margins(&case), &ModelFlags::default(), &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Infeasible { .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn minimum_up_violation_is_named() {
    let case = cases::min_gen_marginal(0);
    // M1 must stay up for the whole horizon once started
    let u = vec![vec![true; 3], vec![true, false, false]];
    let msg = commitment_violation(&case, &u).unwrap();
    assert!(msg.contains("M1"), "{msg}");
    assert!(commitment_violation(&case, &[vec![true; 3], vec![true; 3]]).is_none());
}

#[test]
fn chance_limits_hold_on_the_synthetic_first_hours() {
    // two hours of the 118-bus system keep the search small
    let mut case: SystemCase = cases::synthetic_118(3);
    let keep = 2;
    for r in case.ress.iter_mut() {
        for s in [
            &mut r.forecast,
            &mut r.mppt,
            &mut r.err_mean,
            &mut r.err_std,
            &mut r.inertia,
            &mut r.inertia_err_mean,
            &mut r.inertia_err_std,
        ] {
            s.truncate(keep);
        }
    }
    for l in case.load.iter_mut() {
        l.demand.truncate(keep);
    }
    case.params.periods = keep;
    case.validate().unwrap();

    let m = margins(&case);
    let flags = ModelFlags::default();
    let opts = SolverOptions {
        node_limit: 3,
        gap: 1e-2,
        ..SolverOptions::default()
    };
    let sol = solve_ccuc(&case, &m, &flags, &opts).unwrap();
    assert!(sol.schedule.violations(&case, &m, &flags).is_empty());
    let rep = monte_carlo_chance_check(&case, &sol.schedule, &flags, 20_000, 5).unwrap();
    assert!(rep.all_pass(), "{:?}", rep.instances.iter().find(|i| !i.pass));
}
