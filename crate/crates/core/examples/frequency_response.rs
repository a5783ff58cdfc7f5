//! Frequency after a large outage at two kinetic-energy levels.

use inertia_uc::freqsim::{rocof_formula, simulate_outage, SfrParams};

fn main() -> inertia_uc::error::Result<()> {
    let params = SfrParams::default();
    let (load, dp, f0) = (12_651.0, 1500.0, 60.0);
    for e in [37_220.0, 54_600.0] {
        let tr = simulate_outage(e, load, dp, &params, f0)?;
        println!(
            "E {e:>8.0} MW·s: RoCoF {:.3} Hz/s (closed form {:.3}), nadir {:.3} Hz at {:.2} s",
            tr.rocof_initial,
            rocof_formula(e, dp, f0),
            tr.nadir,
            tr.nadir_time
        );
        let path = std::env::temp_dir().join(format!("inertia_uc_freq_{e}.csv"));
        tr.write_csv(&path, 50)?;
        println!("  trajectory in {}", path.display());
    }
    Ok(())
}
