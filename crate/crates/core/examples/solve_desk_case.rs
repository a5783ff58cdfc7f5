//! Commitment with and without the inertia requirement on the peaker case.

use inertia_uc::cases;
use inertia_uc::model::ModelFlags;
use inertia_uc::solver::{solve_ccuc, SolveMethod, SolverOptions};
use inertia_uc::uncertainty::{ChanceMargins, MarginConvention};

fn main() -> inertia_uc::error::Result<()> {
    let case = cases::inertia_peaker(0);
    let m = ChanceMargins::compute(&case, MarginConvention::Consistent)?;
    for (label, flags) in [("with inertia", ModelFlags::default()), ("without", ModelFlags::without_inertia())] {
        let sol = solve_ccuc(&case, &m, &flags, &SolverOptions::default())?;
        println!("{label}: cost {:.2}, {} nodes", sol.schedule.objective, sol.node_count);
        for (g, sg) in case.sgs.iter().enumerate() {
            println!("  {:<3} u {:?} p {:.1?}", sg.id, sol.schedule.commitment()[g], sol.schedule.p[g]);
        }
        let req = ModelFlags::default();
        for t in 0..case.periods() {
            println!(
                "  hour {t}: inertia {:.0} of {:.0} MW·s",
                sol.schedule.inertia_supply(&case, &m, t),
                req.requirement(&case, t)
            );
        }
        println!("  census {:?}", sol.census);
    }

    let opts = SolverOptions {
        method: SolveMethod::PiecewiseLinear { segments: 8 },
        ..SolverOptions::default()
    };
    let pwl = solve_ccuc(&case, &m, &ModelFlags::default(), &opts)?;
    println!(
        "piecewise-linear cost: model {:.2}, true {:.2}",
        pwl.linearized_objective.unwrap_or(f64::NAN),
        pwl.schedule.objective
    );
    Ok(())
}
