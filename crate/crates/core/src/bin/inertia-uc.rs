use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use inertia_uc::case::{scale_penetration, SystemCase};
use inertia_uc::error::{Error, Result};
use inertia_uc::freqsim::{extreme_hours, scenario_frequency_metrics, simulate_outage, write_metrics_csv, SfrParams};
use inertia_uc::model::ModelFlags;
use inertia_uc::pricing::{price_schedule, AllocationRule, Scheme};
use inertia_uc::scenario::{parse_scenarios, resolve_case, run_matrix, ScenarioKind, ScenarioSpec};
use inertia_uc::settlement::settle;
use inertia_uc::solver::{solve_ccuc, SolveMethod, SolverOptions, UcSolution};
use inertia_uc::uncertainty::{ChanceMargins, MarginConvention};

/// Inertia-constrained unit commitment, pricing and settlement.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a case file and print its size.
    Validate(CaseArgs),
    /// Solve the commitment problem and write the solution as JSON.
    Solve {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        solve: SolveArgs,
        /// Use a piecewise-linear cost with this many segments.
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long, env = "INERTIA_UC_OUT", default_value = "solution.json")]
        out: PathBuf,
    },
    /// Solve, then price under one scheme.
    Price {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        #[arg(long, env = "INERTIA_UC_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Solve, price and settle under one scheme.
    Settle {
        #[command(flatten)]
        case: CaseArgs,
        #[command(flatten)]
        solve: SolveArgs,
        #[command(flatten)]
        scheme: SchemeArgs,
        /// Pay RES the lost energy revenue from deloading.
        #[arg(long)]
        pay_opportunity: bool,
        #[arg(long, env = "INERTIA_UC_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Frequency response to an outage, from given values or a solved case.
    Simulate(SimulateArgs),
    /// Run every (penetration, scenario) cell and write hashed manifests.
    RunMatrix(MatrixArgs),
}

#[derive(Args)]
struct CaseArgs {
    /// Case file or built-in case name.
    #[arg(long, env = "INERTIA_UC_CASE")]
    case: String,
    /// Rescale RES forecasts to this share of demand.
    #[arg(long, env = "INERTIA_UC_ETA")]
    eta: Option<f64>,
    #[arg(long, value_enum, default_value = "consistent")]
    convention: Convention,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Convention {
    Consistent,
    AsPrinted,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, env = "INERTIA_UC_GAP", default_value_t = 1e-4)]
    gap: f64,
    #[arg(long, env = "INERTIA_UC_NODES", default_value_t = 20_000)]
    nodes: usize,
    /// Drop the inertia requirement.
    #[arg(long)]
    no_inertia: bool,
}

#[derive(Args)]
struct SchemeArgs {
    /// mp, achp or aip
    #[arg(long, default_value = "mp")]
    scheme: Scheme,
    #[arg(long, env = "INERTIA_UC_ALLOCATION", default_value = "uniform")]
    allocation: AllocationRule,
}

#[derive(Args)]
struct SimulateArgs {
    /// Case to solve; its extreme-inertia hours are simulated.
    #[arg(long, env = "INERTIA_UC_CASE", conflicts_with = "energy")]
    case: Option<String>,
    #[arg(long, env = "INERTIA_UC_ETA")]
    eta: Option<f64>,
    /// Kinetic energy (MW·s).
    #[arg(long, requires_all = ["load"])]
    energy: Option<f64>,
    /// Pre-outage load (MW).
    #[arg(long)]
    load: Option<f64>,
    /// Lost generation (MW); defaults to the largest scheduled unit output.
    #[arg(long)]
    outage: Option<f64>,
    #[arg(long, default_value_t = 60.0)]
    f0: f64,
    #[arg(long, env = "INERTIA_UC_GAP", default_value_t = 1e-4)]
    gap: f64,
    #[arg(long, env = "INERTIA_UC_NODES", default_value_t = 20_000)]
    nodes: usize,
    /// Output CSV (trajectory or metrics).
    #[arg(long, env = "INERTIA_UC_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long, env = "INERTIA_UC_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "INERTIA_UC_CASE")]
    case: Option<String>,
    /// Comma-separated penetration levels.
    #[arg(long, env = "INERTIA_UC_ETA", value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Comma-separated subset of base,rmr,mp,achp,aip, or `all`.
    #[arg(long, env = "INERTIA_UC_SCENARIOS")]
    scenarios: Option<String>,
    #[arg(long, env = "INERTIA_UC_GAP")]
    gap: Option<f64>,
    #[arg(long, env = "INERTIA_UC_NODES")]
    nodes: Option<usize>,
    #[arg(long, env = "INERTIA_UC_ALLOCATION")]
    allocation: Option<AllocationRule>,
    #[arg(long, env = "INERTIA_UC_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "INERTIA_UC_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "INERTIA_UC_MC_SAMPLES")]
    mc_samples: Option<usize>,
}

fn load(args: &CaseArgs) -> Result<(SystemCase, ChanceMargins)> {
    let mut case = resolve_case(&args.case)?;
    if let Some(eta) = args.eta {
        case = scale_penetration(&case, eta)?;
    }
    let convention = match args.convention {
        Convention::Consistent => MarginConvention::Consistent,
        Convention::AsPrinted => MarginConvention::AsPrinted,
    };
    let margins = ChanceMargins::compute(&case, convention)?;
    Ok((case, margins))
}

fn flags(solve: &SolveArgs) -> ModelFlags {
    if solve.no_inertia {
        ModelFlags::without_inertia()
    } else {
        ModelFlags::default()
    }
}

fn options(solve: &SolveArgs) -> SolverOptions {
    SolverOptions {
        gap: solve.gap,
        node_limit: solve.nodes,
        ..SolverOptions::default()
    }
}

fn report(sol: &UcSolution) {
    println!(
        "status {:?}  objective {:.4}  gap {:.2e}  nodes {}",
        sol.status, sol.schedule.objective, sol.gap, sol.node_count
    );
}

fn write_text(path: &Path, text: String) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(args) => {
            let (case, _) = load(&args)?;
            println!(
                "ok: {} buses, {} lines, {} SG, {} ES, {} RES, {} periods",
                case.network.buses.len(),
                case.network.lines.len(),
                case.sgs.len(),
                case.ess.len(),
                case.ress.len(),
                case.periods()
            );
        }
        Command::Solve {
            case,
            solve,
            segments,
            out,
        } => {
            let (c, m) = load(&case)?;
            let mut opts = options(&solve);
            if let Some(segments) = segments {
                opts.method = SolveMethod::PiecewiseLinear { segments };
            }
            let sol = solve_ccuc(&c, &m, &flags(&solve), &opts)?;
            report(&sol);
            write_text(&out, serde_json::to_string_pretty(&sol)? + "\n")?;
        }
        Command::Price {
            case,
            solve,
            scheme,
            out,
        } => {
            let (c, m) = load(&case)?;
            let f = flags(&solve);
            let sol = solve_ccuc(&c, &m, &f, &options(&solve))?;
            report(&sol);
            let prices = price_schedule(
                &c,
                &m,
                &f,
                &sol.schedule,
                &sol.duals,
                scheme.scheme,
                scheme.allocation,
                &Default::default(),
            )?;
            prices.write(&out, &format!("prices_{}", scheme.scheme))?;
            println!("average energy price {:.4}", prices.average_lambda(&c));
            for n in &prices.notes {
                println!("note: {n}");
            }
        }
        Command::Settle {
            case,
            solve,
            scheme,
            pay_opportunity,
            out,
        } => {
            let (c, m) = load(&case)?;
            let f = flags(&solve);
            let sol = solve_ccuc(&c, &m, &f, &options(&solve))?;
            report(&sol);
            let prices = price_schedule(
                &c,
                &m,
                &f,
                &sol.schedule,
                &sol.duals,
                scheme.scheme,
                scheme.allocation,
                &Default::default(),
            )?;
            let label = scheme.scheme.to_string();
            let rep = settle(&c, &m, &f, &sol.schedule, &prices, &label, pay_opportunity)?;
            rep.write(&out, &format!("settlement_{label}"))?;
            println!(
                "uplift {:.4}  opportunity {:.4}  consumer payment {:.4}",
                rep.total_uplift, rep.total_opportunity, rep.consumer_payment
            );
        }
        Command::Simulate(args) => simulate(args)?,
        Command::RunMatrix(args) => {
            let spec = matrix_spec(args)?;
            let manifest = run_matrix(&spec)?;
            let mut failed = 0;
            for cell in &manifest.cells {
                let m = inertia_uc::scenario::read_cell_manifest(&spec.out.join(&cell.path))?;
                if let Some(f) = &m.failure {
                    failed += 1;
                    println!("{}: failed at {}: {}", cell.path, f.stage, f.message);
                } else {
                    println!("{}: ok", cell.path);
                }
            }
            println!("{} cells, {} failed", manifest.cells.len(), failed);
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let params = SfrParams::default();
    if let Some(e) = args.energy {
        let load = args.load.unwrap_or_default();
        let dp = args
            .outage
            .ok_or_else(|| Error::Invalid("--outage is required with --energy".into()))?;
        let tr = simulate_outage(e, load, dp, &params, args.f0)?;
        println!(
            "rocof {:.4} Hz/s  nadir {:.4} Hz at {:.3} s",
            tr.rocof_initial, tr.nadir, tr.nadir_time
        );
        if let Some(out) = args.out {
            tr.write_csv(&out, 10)?;
        }
        return Ok(());
    }
    let name = args
        .case
        .ok_or_else(|| Error::Invalid("give either --energy/--load/--outage or --case".into()))?;
    let (case, margins) = load(&CaseArgs {
        case: name,
        eta: args.eta,
        convention: Convention::Consistent,
    })?;
    let opts = SolverOptions {
        gap: args.gap,
        node_limit: args.nodes,
        ..SolverOptions::default()
    };
    let with = solve_ccuc(&case, &margins, &ModelFlags::default(), &opts)?;
    let without = solve_ccuc(&case, &margins, &ModelFlags::without_inertia(), &opts)?;
    let mut hours = extreme_hours(&case, &margins, &without.schedule);
    hours.extend(extreme_hours(&case, &margins, &with.schedule));
    hours.sort_unstable();
    hours.dedup();
    let rows = scenario_frequency_metrics(
        &case,
        &margins,
        &[
            (ScenarioKind::Base.to_string(), &without.schedule),
            ("inertia".to_string(), &with.schedule),
        ],
        &hours,
        &params,
        args.outage,
    )?;
    for r in &rows {
        println!(
            "{:>8} hour {:>3}  E {:>10.1}  dP {:>8.1}  rocof {:>8.4}  nadir {:.4}",
            r.scenario, r.hour, r.kinetic_energy, r.outage, r.rocof, r.nadir
        );
    }
    if let Some(out) = args.out {
        write_metrics_csv(&rows, &out)?;
    }
    Ok(())
}

fn matrix_spec(args: MatrixArgs) -> Result<ScenarioSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)?
        }
        None => {
            let case = args
                .case
                .clone()
                .ok_or_else(|| Error::Invalid("--case or --config is required".into()))?;
            ScenarioSpec::new(case, "out")
        }
    };
    if let Some(v) = args.case {
        spec.case = v;
    }
    if let Some(v) = args.eta {
        spec.eta = v;
    }
    if let Some(v) = args.scenarios {
        spec.scenarios = parse_scenarios(&v)?;
    }
    if let Some(v) = args.gap {
        spec.gap = v;
    }
    if let Some(v) = args.nodes {
        spec.nodes = v;
    }
    if let Some(v) = args.allocation {
        spec.allocation = v;
    }
    if let Some(v) = args.out {
        spec.out = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    if let Some(v) = args.mc_samples {
        spec.mc_samples = v;
    }
    spec.validate()?;
    Ok(spec)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("INERTIA_UC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
