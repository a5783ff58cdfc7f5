//! One PASS/FAIL line per acceptance criterion. Exits non-zero on any FAIL.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force, desk_suite, fd_chi, le_tol, margins, rel_close};
use inertia_uc::case::SystemCase;
use inertia_uc::cases;
use inertia_uc::freqsim::{rocof_formula, simulate_outage, SfrParams};
use inertia_uc::model::ModelFlags;
use inertia_uc::pricing::{
    achp_prices, aip_prices, allocate_interval, allocate_startup, mp_identity_checks, mp_prices, run_identity_checks,
    AllocationRule, IdentityCheck,
};
use inertia_uc::qp::QpSettings;
use inertia_uc::settlement::settle;
use inertia_uc::solver::{monte_carlo_chance_check, solve_ccuc, SolverOptions, UcSolution};

type Outcome = (bool, String);

fn solve(case: &SystemCase, flags: &ModelFlags) -> UcSolution {
    solve_ccuc(case, &margins(case), flags, &SolverOptions::default()).unwrap()
}

fn random_desks() -> Vec<SystemCase> {
    (0..20).map(cases::random_desk).collect()
}

fn brute_force_equivalence() -> Outcome {
    let desks = random_desks();
    let mut worst: f64 = 0.0;
    let mut miqp_time = Duration::ZERO;
    let flags = ModelFlags::default();
    for (i, case) in desks.iter().enumerate() {
        let m = margins(case);
        // the search must close to well inside the comparison tolerance
        let opts = SolverOptions { gap: 1e-8, ..SolverOptions::default() };
        let t0 = Instant::now();
        let sol = solve_ccuc(case, &m, &flags, &opts).unwrap();
        miqp_time += t0.elapsed();
        let (best, _) = brute_force(case, &m, &flags).expect("desk cases are feasible");
        let rel = (sol.schedule.objective - best).abs() / best.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-6 {
            return (false, format!("desk {i}: MIQP {} vs enumeration {best}", sol.schedule.objective));
        }
    }
    let secs = miqp_time.as_secs_f64();
    (
        secs < 60.0,
        format!("{} cases, worst relative gap {worst:.1e}, MIQP time {secs:.2} s", desks.len()),
    )
}

fn chance_validity() -> Outcome {
    let n = 100_000;
    let mut solutions: Vec<(String, SystemCase)> = desk_suite();
    solutions.extend(random_desks().into_iter().enumerate().map(|(i, c)| (format!("desk-{i}"), c)));
    let flags = ModelFlags::default();
    let mut checked = 0;
    let mut worst = (f64::INFINITY, String::new());
    for (k, (name, case)) in solutions.iter().enumerate() {
        let sol = solve(case, &flags);
        let rep = monte_carlo_chance_check(case, &sol.schedule, &flags, n, 1000 + k as u64).unwrap();
        for inst in rep
            .instances
            .iter()
            .filter(|i| matches!(i.family.as_str(), "sg_upper" | "sg_lower" | "inertia"))
        {
            checked += 1;
            let slack = inst.rate - inst.threshold;
            if slack < worst.0 {
                worst = (slack, format!("{name} {} {} h{}", inst.family, inst.unit, inst.hour));
            }
            if !inst.pass {
                return (
                    false,
                    format!("{name} {} {} hour {}: rate {} < {}", inst.family, inst.unit, inst.hour, inst.rate, inst.threshold),
                );
            }
        }
    }
    (
        checked > 0,
        format!("{checked} constraint instances over {} solutions, N={n}, tightest {} (slack {:.4})", solutions.len(), worst.1, worst.0),
    )
}

fn kkt_identity() -> Outcome {
    let flags = ModelFlags::default();
    let qp = QpSettings::default();
    let mut total = 0;
    let mut bad: Vec<String> = Vec::new();
    let mut log = |name: &str, scheme: &str, checks: Vec<IdentityCheck>| {
        for c in checks.iter().filter(|c| c.interior) {
            total += 1;
            if !c.holds() {
                bad.push(format!(
                    "{name} {scheme} {} {} h{}: solver {} assembled {} pattern [{}]",
                    c.kind, c.unit, c.hour, c.solver, c.assembled, c.pattern
                ));
            }
        }
    };
    for (name, case) in desk_suite() {
        let m = margins(&case);
        let sol = solve(&case, &flags);
        log(&name, "MP", mp_identity_checks(&case, &m, &sol.schedule, &sol.duals));
        let alloc = allocate_startup(&case, &sol.schedule, AllocationRule::Uniform);
        let run = achp_prices(&case, &m, &flags, &sol.schedule, &alloc, &qp).unwrap();
        log(&name, "aCHP", run_identity_checks(&case, &m, &run));
        let run = aip_prices(&case, &m, &flags, &sol.schedule, &qp).unwrap();
        log(&name, "AIP", run_identity_checks(&case, &m, &run));
    }
    for b in &bad {
        println!("    mismatch: {b}");
    }
    (total > 0 && bad.is_empty(), format!("{total} interior identities, {} mismatches", bad.len()))
}

fn shadow_price() -> Outcome {
    let flags = ModelFlags::default();
    let mut binding = 0;
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        let case = cases::storage_firmed(i);
        let m = margins(&case);
        let sol = solve(&case, &flags);
        let u = sol.schedule.commitment();
        let step = 1e-3 * case.params.p_sys * case.params.h_min;
        for t in 0..case.periods() {
            let chi = sol.duals.chi[t];
            if chi <= 1e-6 {
                continue;
            }
            binding += 1;
            let fd = fd_chi(&case, &m, &u, t, step);
            let rel = (chi - fd).abs() / chi.abs();
            worst = worst.max(rel);
            if rel > 0.01 {
                return (false, format!("firmed-{i} hour {t}: chi {chi} vs difference {fd}"));
            }
        }
    }
    (binding > 0, format!("{binding} binding hours, worst relative error {worst:.1e}"))
}

fn scheme_ordering() -> Outcome {
    let flags = ModelFlags::default();
    let qp = QpSettings::default();
    let mut notes = Vec::new();
    let mut binding = 0;
    for (name, case) in cases::inertia_peaker_suite() {
        let m = margins(&case);
        let sol = solve(&case, &flags);
        let peaker = case.sgs.iter().position(|g| g.id == "P1").unwrap();
        if sol.schedule.u[peaker].iter().all(|&u| u < 0.5) {
            return (false, format!("{name}: peaker not committed"));
        }
        let mp = mp_prices(&case, &sol.duals).unwrap();
        let alloc = allocate_startup(&case, &sol.schedule, AllocationRule::Uniform);
        let achp = achp_prices(&case, &m, &flags, &sol.schedule, &alloc, &qp).unwrap().prices;
        let aip = aip_prices(&case, &m, &flags, &sol.schedule, &qp).unwrap().prices;
        let uplift = |p| settle(&case, &m, &flags, &sol.schedule, p, "x", false).unwrap().total_uplift;
        let (u_mp, u_achp, u_aip) = (uplift(&mp), uplift(&achp), uplift(&aip));
        if !(le_tol(u_achp, u_aip, 1e-6) && le_tol(u_aip, u_mp, 1e-6)) {
            return (false, format!("{name}: uplift aCHP {u_achp} AIP {u_aip} MP {u_mp}"));
        }
        for t in 0..case.periods() {
            if achp.chi[t] <= 1e-6 {
                continue;
            }
            binding += 1;
            let (a, b, c) = (achp.chi[t], aip.chi[t], mp.chi[t]);
            if !(le_tol(b, a, 1e-6) && le_tol(c, b, 1e-6) && c.abs() <= 1e-6 * a.max(1.0)) {
                return (false, format!("{name} hour {t}: chi aCHP {a} AIP {b} MP {c}"));
            }
        }
        notes.push(format!("{name} uplift {u_achp:.2}/{u_aip:.2}/{u_mp:.2}"));
    }
    (binding > 0, format!("{binding} binding hours; {}", notes.join(", ")))
}

fn energy_price_ordering() -> Outcome {
    let flags = ModelFlags::default();
    let qp = QpSettings::default();
    let mut notes = Vec::new();
    for (name, case) in cases::min_gen_suite() {
        let m = margins(&case);
        let sol = solve(&case, &flags);
        let mp = mp_prices(&case, &sol.duals).unwrap().average_lambda(&case);
        let alloc = allocate_startup(&case, &sol.schedule, AllocationRule::Uniform);
        let achp = achp_prices(&case, &m, &flags, &sol.schedule, &alloc, &qp)
            .unwrap()
            .prices
            .average_lambda(&case);
        let aip = aip_prices(&case, &m, &flags, &sol.schedule, &qp)
            .unwrap()
            .prices
            .average_lambda(&case);
        if !(achp >= mp && aip >= achp) {
            return (false, format!("{name}: MP {mp} aCHP {achp} AIP {aip}"));
        }
        notes.push(format!("{name} {mp:.2}/{achp:.2}/{aip:.2}"));
    }
    (true, format!("avg lambda MP/aCHP/AIP: {}", notes.join(", ")))
}

fn inertia_adequacy() -> Outcome {
    let with = ModelFlags::default();
    let mut all: Vec<(String, SystemCase)> = desk_suite();
    all.extend(random_desks().into_iter().enumerate().map(|(i, c)| (format!("desk-{i}"), c)));
    let mut hours = 0;
    for (name, case) in &all {
        let m = margins(case);
        let sol = solve(case, &with);
        for t in 0..case.periods() {
            hours += 1;
            let req = with.requirement(case, t);
            let sup = sol.schedule.inertia_supply(case, &m, t);
            if sup < req - 1e-6 * req.max(1.0) {
                return (false, format!("{name} hour {t}: supply {sup} < {req}"));
            }
        }
    }
    let case = cases::deficit_case();
    let m = margins(&case);
    let base = solve(&case, &ModelFlags::without_inertia());
    let short: Vec<usize> = (0..case.periods())
        .filter(|&t| base.schedule.inertia_supply(&case, &m, t) < with.requirement(&case, t) - 1e-6)
        .collect();
    (
        !short.is_empty(),
        format!("{hours} inertia-aware hours adequate; base short in hours {short:?} of the deficit case"),
    )
}

fn rocof_formula_check() -> Outcome {
    let p = SfrParams::default();
    let load = 12_651.0;
    let mut worst: f64 = 0.0;
    for &dp in &[100.0, 500.0, 1000.0, 1500.0, 2500.0] {
        for &e in &[20_000.0, 37_220.0, 54_600.0, 80_000.0, 150_000.0] {
            let tr = simulate_outage(e, load, dp, &p, 60.0).unwrap();
            let f = rocof_formula(e, dp, 60.0);
            worst = worst.max((tr.rocof_initial - f).abs() / f.abs());
        }
    }
    let low = simulate_outage(37_220.0, load, 1500.0, &p, 60.0).unwrap().rocof_initial;
    let high = simulate_outage(54_600.0, load, 1500.0, &p, 60.0).unwrap().rocof_initial;
    let ok = worst <= 0.01 && rel_close(low, -1.209, 0.005) && rel_close(high, -0.824, 0.005);
    (ok, format!("grid worst {worst:.1e}; {low:.4} and {high:.4} Hz/s"))
}

fn allocation_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..1000 {
        let len = rng.gen_range(1..=48usize);
        let s = BigRational::new(BigInt::from(rng.gen_range(1..1_000_000i64)), BigInt::from(rng.gen_range(1..1000i64)));
        let w: Vec<BigRational> = (0..len)
            .map(|_| BigRational::from_integer(BigInt::from(rng.gen_range(0..500i64))))
            .collect();
        for rule in [AllocationRule::Uniform, AllocationRule::FirstHour, AllocationRule::EnergyWeighted] {
            let parts = allocate_interval(&s, &w, rule);
            let total = parts.iter().fold(BigRational::zero(), |a, b| a + b);
            if parts.len() != len || total != s {
                return (false, format!("interval {k} rule {rule}: sum {total} != {s}"));
            }
        }
    }
    (true, "1000 intervals x 3 rules conserve the start-up cost exactly".into())
}

fn manifests(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.file_name().and_then(|n| n.to_str()), Some("manifest.json" | "matrix.json")) {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_inertia-uc");
    let run = |dir: &Path| {
        let status = Command::new(bin)
            .args(["run-matrix", "--case", "peaker-1", "--eta", "0.05,0.1", "--scenarios", "all"])
            .args(["--mc-samples", "5000", "--seed", "7", "--out"])
            .arg(dir)
            .env_remove("INERTIA_UC_CONFIG")
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        manifests(dir)
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ma, mb) = (run(a.path()), run(b.path()));
    let cells = ma.iter().filter(|(n, _)| n.ends_with("manifest.json")).count();
    (
        cells == 10 && ma == mb,
        format!("{cells} cell manifests, {} files identical: {}", ma.len(), ma == mb),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("brute-force equivalence", brute_force_equivalence),
        ("chance-constraint validity", chance_validity),
        ("KKT price identity", kkt_identity),
        ("shadow-price check", shadow_price),
        ("scheme ordering", scheme_ordering),
        ("energy-price ordering", energy_price_ordering),
        ("inertia adequacy", inertia_adequacy),
        ("RoCoF formula", rocof_formula_check),
        ("start-up allocation conservation", allocation_conservation),
        ("run-matrix determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let t0 = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {name}: {detail} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
