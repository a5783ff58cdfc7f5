//! Settle one schedule under each scheme and under reliability-must-run
//! commitment, then compare uplift and consumer payments.

use inertia_uc::cases;
use inertia_uc::model::ModelFlags;
use inertia_uc::pricing::{price_schedule, AllocationRule, Scheme};
use inertia_uc::settlement::{compare_schemes, rmr_select, settle};
use inertia_uc::solver::{redispatch, solve_ccuc, SolverOptions};
use inertia_uc::uncertainty::{ChanceMargins, MarginConvention};

fn main() -> inertia_uc::error::Result<()> {
    let case = cases::inertia_peaker(2);
    let m = ChanceMargins::compute(&case, MarginConvention::Consistent)?;
    let flags = ModelFlags::default();
    let qp = Default::default();
    let sol = solve_ccuc(&case, &m, &flags, &SolverOptions::default())?;

    let mut reports = Vec::new();
    for scheme in [Scheme::Mp, Scheme::Achp, Scheme::Aip] {
        let p = price_schedule(&case, &m, &flags, &sol.schedule, &sol.duals, scheme, AllocationRule::Uniform, &qp)?;
        reports.push(settle(&case, &m, &flags, &sol.schedule, &p, &scheme.to_string(), false)?);
    }

    // market without the inertia row, adequacy restored out of market
    let without = ModelFlags::without_inertia();
    let base = solve_ccuc(&case, &m, &without, &SolverOptions::default())?;
    let overlay = rmr_select(&case, &m, &flags, &base.schedule)?;
    let (s, duals) = redispatch(&case, &m, &without, &overlay.commitment, &qp)?;
    let p = price_schedule(&case, &m, &without, &s, &duals, Scheme::Mp, AllocationRule::Uniform, &qp)?;
    reports.push(settle(&case, &m, &without, &s, &p, "RMR", true)?);
    println!("RMR added {:?}", overlay.added);

    for r in &reports {
        println!("{}", r.scheme);
        for u in &r.units {
            println!(
                "  {:<4} cost {:9.2} energy {:9.2} reserve {:8.2} inertia {:8.2} uplift {:8.2}",
                u.unit, u.production_cost, u.energy_revenue, u.reserve_revenue, u.inertia_revenue, u.uplift
            );
        }
    }
    for row in compare_schemes(&reports)?.rows {
        println!(
            "{:<5} uplift {:9.2} consumer payment {:10.2} ({:+.2})",
            row.scheme, row.total_uplift, row.consumer_payment, row.delta_consumer_payment
        );
    }
    Ok(())
}
