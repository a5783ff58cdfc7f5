//! Chance-constraint margins of a case and a Monte-Carlo check of the solved
//! schedule against them.

use inertia_uc::cases;
use inertia_uc::model::ModelFlags;
use inertia_uc::solver::{monte_carlo_chance_check, solve_ccuc, SolverOptions};
use inertia_uc::uncertainty::{ChanceMargins, MarginConvention};

fn main() -> inertia_uc::error::Result<()> {
    let case = cases::inertia_peaker(1);
    for conv in [MarginConvention::Consistent, MarginConvention::AsPrinted] {
        let m = ChanceMargins::compute(&case, conv)?;
        println!("{conv:?}");
        for (g, sg) in case.sgs.iter().enumerate() {
            println!("  {:<3} upper {:?} lower {:?}", sg.id, m.sg_upper[g], m.sg_lower[g]);
        }
        println!("  RES inertia adjustment {:?}", m.res_inertia[0]);
    }

    let m = ChanceMargins::compute(&case, MarginConvention::Consistent)?;
    let flags = ModelFlags::default();
    let sol = solve_ccuc(&case, &m, &flags, &SolverOptions::default())?;
    let rep = monte_carlo_chance_check(&case, &sol.schedule, &flags, 100_000, 1)?;
    for fam in ["sg_upper", "sg_lower", "es_discharge", "es_charge", "inertia"] {
        if let Some(w) = rep.worst(fam) {
            println!("{fam:<13} worst {} hour {}: {:.4} (needs {:.4})", w.unit, w.hour, w.rate, w.threshold);
        }
    }
    Ok(())
}
