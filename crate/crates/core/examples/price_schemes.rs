//! Energy, reserve and inertia prices under the three pricing schemes, with
//! the price identities checked against the solver multipliers.

use inertia_uc::cases;
use inertia_uc::model::ModelFlags;
use inertia_uc::pricing::{
    achp_prices, aip_prices, allocate_startup, mp_identity_checks, mp_prices, run_identity_checks, AllocationRule,
};
use inertia_uc::solver::{solve_ccuc, SolverOptions};
use inertia_uc::uncertainty::{ChanceMargins, MarginConvention};

fn main() -> inertia_uc::error::Result<()> {
    for case in [cases::inertia_peaker(1), cases::min_gen_marginal(0)] {
        let m = ChanceMargins::compute(&case, MarginConvention::Consistent)?;
        let flags = ModelFlags::default();
        let qp = Default::default();
        let sol = solve_ccuc(&case, &m, &flags, &SolverOptions::default())?;

        let mp = mp_prices(&case, &sol.duals)?;
        let alloc = allocate_startup(&case, &sol.schedule, AllocationRule::Uniform);
        let achp = achp_prices(&case, &m, &flags, &sol.schedule, &alloc, &qp)?;
        let aip = aip_prices(&case, &m, &flags, &sol.schedule, &qp)?;

        println!("units {:?}", case.sgs.iter().map(|g| &g.id).collect::<Vec<_>>());
        for (name, p) in [("MP", &mp), ("aCHP", &achp.prices), ("AIP", &aip.prices)] {
            println!(
                "  {name:<5} avg energy {:7.3}  reserve {:.3?}  inertia {:.4?}",
                p.average_lambda(&case),
                p.gamma,
                p.chi
            );
        }
        let mut checks = mp_identity_checks(&case, &m, &sol.schedule, &sol.duals);
        checks.extend(run_identity_checks(&case, &m, &achp));
        checks.extend(run_identity_checks(&case, &m, &aip));
        let bad = checks.iter().filter(|c| !c.holds()).count();
        println!("  {} identities checked, {bad} off by more than the tolerance", checks.len());
    }
    Ok(())
}
