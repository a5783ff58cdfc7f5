//! Built-in test systems: small desk cases with known structure and a
//! synthetic 118-bus system with the published unit mix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case::{
    BusLoad, EsUnit, Line, Network, ResKind, ResUnit, SgUnit, SystemCase, SystemParams, SCHEMA_VERSION,
};
use crate::model::ModelFlags;
use crate::qp::QpSettings;
use crate::solver::evaluate_commitment;
use crate::uncertainty::{ChanceMargins, MarginConvention};

fn params(p_sys: f64, periods: usize) -> SystemParams {
    SystemParams {
        f0: 60.0,
        rocof_max: 0.5,
        df_max: 0.55,
        h_min: 3.5,
        p_sys,
        periods,
        base_mva: 100.0,
        aggregate_error: None,
    }
}

fn sg(id: &str, bus: u32, cost: (f64, f64, f64, f64), limits: (f64, f64), inertia: f64) -> SgUnit {
    let (a, b, c, startup) = cost;
    let (p_min, p_max) = limits;
    SgUnit {
        id: id.into(),
        bus,
        a,
        b,
        c,
        startup,
        p_min,
        p_max,
        ramp_up: p_max,
        ramp_down: p_max,
        min_up: 1,
        min_down: 1,
        inertia,
        eps: 0.05,
        u0: false,
        p0: 0.0,
    }
}

fn pv(id: &str, bus: u32, p_max: f64, forecast: Vec<f64>, std: f64) -> ResUnit {
    let t = forecast.len();
    ResUnit {
        id: id.into(),
        bus,
        kind: ResKind::Pv,
        p_max,
        mppt: forecast.iter().map(|f| f / 0.95).collect(),
        forecast,
        err_mean: vec![0.1 * std; t],
        err_std: vec![std; t],
        inertia: vec![3.0; t],
        inertia_err_mean: vec![0.05; t],
        inertia_err_std: vec![0.1; t],
        eps_h: 0.05,
    }
}

fn storage(id: &str, bus: u32, power: f64, energy: f64) -> EsUnit {
    EsUnit {
        id: id.into(),
        bus,
        p_dis_max: power,
        p_ch_max: power,
        e_min: 0.1 * energy,
        e_max: energy,
        efficiency: 0.95,
        h_max: 11.0,
        e0: 0.5 * energy,
        eps_d: 0.05,
        eps_c: 0.05,
    }
}

fn single_bus(load: Vec<f64>, p_sys: f64) -> (SystemParams, Network, Vec<BusLoad>) {
    (
        params(p_sys, load.len()),
        Network {
            buses: vec![1],
            lines: vec![],
            slack_bus: 1,
        },
        vec![BusLoad { bus: 1, demand: load }],
    )
}

/// One SG serving a flat or varying load on one bus, no RES.
pub fn single_sg(load: &[f64]) -> SystemCase {
    let (params, network, load) = single_bus(load.to_vec(), 50.0);
    let mut g = sg("G1", 1, (0.01, 20.0, 100.0, 50.0), (10.0, 200.0), 5.0);
    g.u0 = true;
    g.p0 = load[0].demand[0];
    SystemCase {
        schema_version: SCHEMA_VERSION,
        params,
        network,
        sgs: vec![g],
        ess: vec![],
        ress: vec![],
        load,
    }
}

/// Two buses joined by a line that binds: cheap generation at bus 1, load and
/// expensive generation at bus 2.
pub fn congested_two_bus() -> SystemCase {
    let mut cheap = sg("G1", 1, (0.005, 12.0, 40.0, 0.0), (10.0, 300.0), 5.0);
    cheap.u0 = true;
    cheap.p0 = 100.0;
    let mut dear = sg("G2", 2, (0.02, 35.0, 60.0, 0.0), (5.0, 200.0), 4.0);
    dear.u0 = true;
    dear.p0 = 50.0;
    SystemCase {
        schema_version: SCHEMA_VERSION,
        params: params(100.0, 2),
        network: Network {
            buses: vec![1, 2],
            lines: vec![Line {
                from: 1,
                to: 2,
                susceptance: 10.0,
                limit: 100.0,
            }],
            slack_bus: 1,
        },
        sgs: vec![cheap, dear],
        ess: vec![],
        ress: vec![],
        load: vec![
            BusLoad {
                bus: 1,
                demand: vec![20.0, 30.0],
            },
            BusLoad {
                bus: 2,
                demand: vec![150.0, 170.0],
            },
        ],
    }
}

/// Cheap base unit plus an expensive high-inertia peaker that only the
/// inertia requirement brings online. `variant` varies load, storage and
/// uncertainty.
pub fn inertia_peaker(variant: usize) -> SystemCase {
    let loads = [
        vec![150.0, 180.0, 160.0],
        vec![120.0, 200.0, 240.0],
        vec![170.0, 150.0, 190.0, 210.0],
        vec![140.0, 160.0, 180.0],
    ];
    let load = loads[variant % loads.len()].clone();
    let t = load.len();
    let (params, network, load) = single_bus(load, 400.0);
    let mut base = sg("B1", 1, (0.005, 15.0, 50.0, 80.0), (20.0, 300.0), 3.0);
    base.u0 = true;
    base.p0 = 150.0;
    let mid = sg("M1", 1, (0.008, 22.0, 30.0, 40.0), (10.0, 60.0), 3.0);
    let peaker = sg("P1", 1, (0.01, 40.0, 150.0, 100.0), (30.0, 100.0), 8.0);
    let forecast: Vec<f64> = (0..t).map(|h| 20.0 + 10.0 * (h % 2) as f64).collect();
    let mut case = SystemCase {
        schema_version: SCHEMA_VERSION,
        params,
        network,
        sgs: vec![base, mid, peaker],
        ess: vec![],
        ress: vec![pv("PV1", 1, 60.0, forecast, 3.0)],
        load,
    };
    if variant % 2 == 1 {
        case.ess.push(storage("ES1", 1, 5.0, 20.0));
    }
    case
}

pub fn inertia_peaker_suite() -> Vec<(String, SystemCase)> {
    (0..4).map(|v| (format!("peaker-{v}"), inertia_peaker(v))).collect()
}

/// Peaker case whose inertia requirement exceeds what the economic
/// commitment provides in every hour.
pub fn deficit_case() -> SystemCase {
    inertia_peaker(0)
}

/// Peaker case without the peaker: storage inertia closes the gap left by
/// the synchronous units, so the inertia row binds with the commitment fixed.
pub fn storage_firmed(variant: usize) -> SystemCase {
    let sizes = [(20.0, 40.0), (30.0, 30.0), (15.0, 60.0)];
    let (power, energy) = sizes[variant % sizes.len()];
    let mut case = inertia_peaker(1);
    case.sgs.retain(|g| g.id != "P1");
    case.ess = vec![storage("ES1", 1, power, energy)];
    case
}

/// A mid-merit unit started for the first-hour peak and held online by its
/// minimum up time runs at minimum output while a cheaper unit sets the
/// marginal price.
pub fn min_gen_marginal(variant: usize) -> SystemCase {
    let loads = [
        vec![175.0, 120.0, 110.0],
        vec![180.0, 130.0, 150.0],
        vec![180.0, 140.0, 120.0, 150.0],
    ];
    let load = loads[variant % loads.len()].clone();
    let t = load.len();
    let (params, network, load) = single_bus(load, 100.0);
    let mut base = sg("B1", 1, (0.01, 14.0, 60.0, 50.0), (20.0, 150.0), 4.0);
    base.u0 = true;
    base.p0 = 140.0;
    let mut mid = sg("M1", 1, (0.02, 24.0, 90.0, 200.0), (40.0, 120.0), 5.0);
    mid.min_up = t;
    mid.min_down = t;
    let forecast: Vec<f64> = (0..t).map(|h| 15.0 + 5.0 * h as f64).collect();
    SystemCase {
        schema_version: SCHEMA_VERSION,
        params,
        network,
        sgs: vec![base, mid],
        ess: vec![],
        ress: vec![pv("PV1", 1, 50.0, forecast, 2.0)],
        load,
    }
}

pub fn min_gen_suite() -> Vec<(String, SystemCase)> {
    (0..3).map(|v| (format!("min-gen-{v}"), min_gen_marginal(v))).collect()
}

/// Random desk case with at most three SGs, three buses, four hours and
/// twelve commitment binaries. The draw is repeated until the all-online
/// commitment is feasible, so every returned case has a solution.
pub fn random_desk(seed: u64) -> SystemCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let case = draw_desk(&mut rng);
        let Ok(margins) = ChanceMargins::compute(&case, MarginConvention::Consistent) else {
            continue;
        };
        let all_on = vec![vec![true; case.periods()]; case.sgs.len()];
        if let Ok(Some(_)) = evaluate_commitment(
            &case,
            &margins,
            &ModelFlags::default(),
            &all_on,
            &QpSettings::default(),
        ) {
            return case;
        }
    }
}

fn draw_desk(rng: &mut ChaCha8Rng) -> SystemCase {
    let n_sg = rng.gen_range(2..=3usize);
    let n_bus = rng.gen_range(1..=3usize);
    let t = if n_sg == 3 { 4 } else { rng.gen_range(2..=4) };
    let buses: Vec<u32> = (1..=n_bus as u32).collect();
    let mut lines = Vec::new();
    for i in 1..n_bus as u32 {
        lines.push(Line {
            from: i,
            to: i + 1,
            susceptance: rng.gen_range(5.0..20.0),
            limit: rng.gen_range(80.0..400.0),
        });
    }
    if n_bus == 3 {
        lines.push(Line {
            from: 1,
            to: 3,
            susceptance: rng.gen_range(5.0..20.0),
            limit: rng.gen_range(80.0..400.0),
        });
    }
    let mut sgs = Vec::new();
    for g in 0..n_sg {
        let p_max: f64 = rng.gen_range(80.0..200.0);
        let p_min = (p_max * rng.gen_range(0.1..0.35)).round();
        let u0 = rng.gen_bool(0.5);
        sgs.push(SgUnit {
            id: format!("G{}", g + 1),
            bus: buses[rng.gen_range(0..n_bus)],
            a: rng.gen_range(0.002..0.03),
            b: rng.gen_range(10.0..35.0),
            c: rng.gen_range(10.0..150.0),
            startup: rng.gen_range(0.0..200.0),
            p_min,
            p_max: p_max.round(),
            ramp_up: rng.gen_range(p_max * 0.5..p_max).max(p_min).round(),
            ramp_down: rng.gen_range(p_max * 0.5..p_max).max(p_min).round(),
            min_up: rng.gen_range(1..=2),
            min_down: rng.gen_range(1..=2),
            inertia: rng.gen_range(3.0..8.0),
            eps: 0.05,
            u0,
            p0: if u0 { p_min + (p_max - p_min) * 0.3 } else { 0.0 },
        });
    }
    let cap: f64 = sgs.iter().map(|g| g.p_max).sum();
    let forecast: Vec<f64> = (0..t).map(|_| rng.gen_range(5.0..30.0)).collect();
    let mut ress = vec![pv("PV1", buses[rng.gen_range(0..n_bus)], 40.0, forecast, rng.gen_range(1.0..4.0))];
    ress[0].err_mean = (0..t).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut ess = Vec::new();
    if rng.gen_bool(0.5) {
        ess.push(storage("ES1", buses[rng.gen_range(0..n_bus)], 15.0, 40.0));
    }
    let mut load = Vec::new();
    let totals: Vec<f64> = (0..t).map(|_| rng.gen_range(0.25..0.7) * cap).collect();
    let shares: Vec<f64> = (0..n_bus).map(|_| rng.gen_range(0.2..1.0)).collect();
    let sum: f64 = shares.iter().sum();
    for (b, s) in buses.iter().zip(&shares) {
        load.push(BusLoad {
            bus: *b,
            demand: totals.iter().map(|d| (d * s / sum).round()).collect(),
        });
    }
    let full: f64 = sgs.iter().map(|g| g.inertia * g.p_max).sum();
    let p_sys = rng.gen_range(0.2..0.6) * full / 3.5;
    SystemCase {
        schema_version: SCHEMA_VERSION,
        params: params(p_sys.round(), t),
        network: Network {
            buses,
            lines,
            slack_bus: 1,
        },
        sgs,
        ess,
        ress,
        load,
    }
}

/// Synthetic system with the published unit mix of the modified 118-bus
/// network: 28 SGs, 8 PVs, 2 WTs and 10 ESs over 24 hours. Topology, unit
/// data and profiles are generated deterministically from `seed`.
pub fn synthetic_118(seed: u64) -> SystemCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bus = 118u32;
    let buses: Vec<u32> = (1..=n_bus).collect();
    let mut lines = Vec::new();
    for i in 1..n_bus {
        lines.push(Line {
            from: i,
            to: i + 1,
            susceptance: rng.gen_range(20.0..60.0),
            limit: 3000.0,
        });
    }
    for _ in 0..68 {
        let i = rng.gen_range(1..=n_bus);
        let j = rng.gen_range(1..=n_bus);
        if i.abs_diff(j) > 1 {
            lines.push(Line {
                from: i.min(j),
                to: i.max(j),
                susceptance: rng.gen_range(10.0..40.0),
                limit: 2000.0,
            });
        }
    }
    let periods = 24;
    // evening-peaking daily shape, peak equal to the inertia base
    let p_sys = 12651.0;
    let shape: Vec<f64> = (0..periods)
        .map(|h| {
            let x = h as f64;
            0.62 + 0.2 * (-(x - 19.0) * (x - 19.0) / 18.0).exp() + 0.18 * (-(x - 11.0) * (x - 11.0) / 30.0).exp()
        })
        .collect();
    let peak = shape.iter().cloned().fold(f64::MIN, f64::max);
    let total: Vec<f64> = shape.iter().map(|s| s / peak * p_sys).collect();

    let mut sgs = Vec::new();
    // (count, pmax, pmin share, b, c, startup, H, min up/down)
    let classes = [
        (4, 1500.0, 0.5, 10.0, 900.0, 9000.0, 8.0, 8),
        (8, 700.0, 0.4, 16.0, 500.0, 3000.0, 6.0, 5),
        (8, 400.0, 0.35, 22.0, 300.0, 1200.0, 5.0, 3),
        (8, 150.0, 0.25, 30.0, 120.0, 300.0, 3.5, 1),
    ];
    let mut k = 0;
    for (count, p_max, share, b, c, s, h, tm) in classes {
        for _ in 0..count {
            k += 1;
            let scale: f64 = rng.gen_range(0.9..1.1);
            let p_max = (p_max * scale).round();
            let p_min = (p_max * share).round();
            let on = k <= 20;
            sgs.push(SgUnit {
                id: format!("SG{k}"),
                bus: rng.gen_range(1..=n_bus),
                a: rng.gen_range(0.5..1.5) * 2.0 / p_max,
                b: b * rng.gen_range(0.9..1.1),
                c: c * rng.gen_range(0.9..1.1),
                startup: s * rng.gen_range(0.9..1.1),
                p_min,
                p_max,
                ramp_up: (p_max * 0.6).round().max(p_min),
                ramp_down: (p_max * 0.6).round().max(p_min),
                min_up: tm,
                min_down: tm,
                inertia: (h * rng.gen_range(0.85..1.15_f64)).clamp(3.0, 10.0),
                eps: 0.05,
                u0: on,
                p0: if on { p_min } else { 0.0 },
            });
        }
    }
    let mut ress = Vec::new();
    for i in 0..10 {
        let wt = i >= 8;
        let p_max = if wt { 900.0 } else { 500.0 };
        let deload = if wt { 0.10 } else { 0.05 };
        let mppt: Vec<f64> = (0..periods)
            .map(|h| {
                let x = h as f64;
                let cf = if wt {
                    0.45 + 0.2 * (x / 24.0 * std::f64::consts::TAU).cos()
                } else {
                    (((x - 6.0) / 13.0 * std::f64::consts::PI).sin()).max(0.0)
                };
                (cf * p_max * rng.gen_range(0.9..1.0)).max(0.0)
            })
            .collect();
        let forecast: Vec<f64> = mppt.iter().map(|m| m * (1.0 - deload)).collect();
        ress.push(ResUnit {
            id: format!("{}{}", if wt { "WT" } else { "PV" }, i + 1),
            bus: rng.gen_range(1..=n_bus),
            kind: if wt { ResKind::Wt } else { ResKind::Pv },
            p_max,
            err_mean: forecast.iter().map(|f| 0.02 * f).collect(),
            err_std: forecast.iter().map(|f| 0.05 * f + 1.0).collect(),
            inertia: vec![3.0; periods],
            inertia_err_mean: vec![0.05; periods],
            inertia_err_std: vec![0.1; periods],
            eps_h: 0.05,
            forecast,
            mppt,
        });
    }
    let ess = (0..10)
        .map(|i| storage(&format!("ES{}", i + 1), rng.gen_range(1..=n_bus), 100.0, 400.0))
        .collect();
    let load_buses: Vec<u32> = buses.iter().copied().filter(|b| b % 2 == 1).collect();
    let weights: Vec<f64> = load_buses.iter().map(|_| rng.gen_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let load = load_buses
        .iter()
        .zip(&weights)
        .map(|(b, w)| BusLoad {
            bus: *b,
            demand: total.iter().map(|d| d * w / wsum).collect(),
        })
        .collect();
    SystemCase {
        schema_version: SCHEMA_VERSION,
        params: params(p_sys, periods),
        network: Network {
            buses,
            lines,
            slack_bus: 1,
        },
        sgs,
        ess,
        ress,
        load,
    }
}

/// Named built-in cases accepted by the command line in place of a file.
pub fn builtin(name: &str) -> Option<SystemCase> {
    let (stem, idx) = match name.rsplit_once('-') {
        Some((s, i)) if i.chars().all(|c| c.is_ascii_digit()) => (s, i.parse::<usize>().ok()),
        _ => (name, None),
    };
    Some(match (stem, idx) {
        ("single-sg", None) => single_sg(&[80.0, 80.0, 80.0]),
        ("congested", None) => congested_two_bus(),
        ("peaker", Some(v)) => inertia_peaker(v),
        ("deficit", None) => deficit_case(),
        ("firmed", Some(v)) => storage_firmed(v),
        ("min-gen", Some(v)) => min_gen_marginal(v),
        ("desk", Some(s)) => random_desk(s as u64),
        ("synthetic", Some(seed)) => synthetic_118(seed as u64),
        _ => return None,
    })
}
