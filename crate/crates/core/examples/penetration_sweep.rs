//! Scenario matrix over RES penetration levels, written with hashed
//! manifests.
//!
//! cargo run --example penetration_sweep -- [case] [out]

use inertia_uc::scenario::{read_cell_manifest, run_matrix, ScenarioSpec};

fn main() -> inertia_uc::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let case = args.next().unwrap_or_else(|| "peaker-3".into());
    let out = args
        .next()
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("inertia_uc_sweep"));
    let mut spec = ScenarioSpec::new(case, out);
    spec.eta = vec![0.0, 0.1, 0.2];
    spec.mc_samples = 5000;
    let manifest = run_matrix(&spec)?;
    println!("{:<18} {:>12} {:>10} {:>8}", "cell", "cost", "uplift", "deficit");
    for cell in &manifest.cells {
        let m = read_cell_manifest(&spec.out.join(&cell.path))?;
        let name = cell.path.trim_end_matches("/manifest.json");
        match &m.failure {
            Some(f) => println!("{name:<18} failed at {}: {}", f.stage, f.message),
            None => println!(
                "{name:<18} {:>12.2} {:>10.2} {:>8}",
                m.summary.objective.unwrap_or(f64::NAN),
                m.summary.total_uplift.unwrap_or(f64::NAN),
                m.summary.deficit_hours.len()
            ),
        }
    }
    println!("manifests under {}", spec.out.display());
    Ok(())
}
