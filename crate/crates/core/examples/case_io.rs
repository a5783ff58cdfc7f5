//! Load a case file (or a built-in case), validate it and write it back.
//!
//! cargo run --example case_io -- data/peaker.json [out.json]

use inertia_uc::case::save_case;
use inertia_uc::scenario::resolve_case;

fn main() -> inertia_uc::error::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "peaker-1".into());
    let case = resolve_case(&name)?;
    println!(
        "{name}: {} periods, {} buses, SG {:?}",
        case.periods(),
        case.network.buses.len(),
        case.sgs.iter().map(|g| g.id.as_str()).collect::<Vec<_>>()
    );
    println!("inertia requirement {} MW·s", case.params.inertia_requirement());
    let out = std::env::args()
        .nth(2)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("inertia_uc_case.json"));
    save_case(&case, &out)?;
    println!("written to {}", out.display());
    Ok(())
}
