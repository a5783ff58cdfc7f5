//! Scenario matrix: for each penetration level and scenario, solve, price,
//! settle, check the chance constraints and simulate the frequency response,
//! writing every artifact to its own cell directory with a hashed manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::case::{load_case, scale_penetration, SystemCase};
use crate::cases;
use crate::error::{Error, Result};
use crate::freqsim::{extreme_hours, scenario_frequency_metrics, write_metrics_csv, SfrParams};
use crate::model::ModelFlags;
use crate::pricing::{price_schedule, AllocationRule, PriceSeries, Scheme};
use crate::qp::QpSettings;
use crate::settlement::{rmr_select, settle};
use crate::solver::{monte_carlo_chance_check, redispatch, solve_ccuc, DecisionSchedule, SolverOptions, UcSolution};
use crate::uncertainty::{ChanceMargins, MarginConvention};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Base,
    Rmr,
    Mp,
    Achp,
    Aip,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Base,
        ScenarioKind::Rmr,
        ScenarioKind::Mp,
        ScenarioKind::Achp,
        ScenarioKind::Aip,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::Base => "base",
            ScenarioKind::Rmr => "rmr",
            ScenarioKind::Mp => "mp",
            ScenarioKind::Achp => "achp",
            ScenarioKind::Aip => "aip",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.label() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parse(format!("unknown scenario {s:?}")))
    }
}

/// Parses a comma list of scenarios; `all` selects every scenario.
pub fn parse_scenarios(s: &str) -> Result<Vec<ScenarioKind>> {
    if s.trim() == "all" {
        return Ok(ScenarioKind::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Case file path or built-in case name.
    pub case: String,
    /// RES penetration levels; an empty list runs the case as given.
    #[serde(default)]
    pub eta: Vec<f64>,
    pub scenarios: Vec<ScenarioKind>,
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub allocation: AllocationRule,
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub convention: MarginConvention,
    /// Outage size (MW); the largest scheduled SG output when absent.
    #[serde(default)]
    pub outage: Option<f64>,
    #[serde(default)]
    pub sfr: Option<SfrParams>,
}

fn default_gap() -> f64 {
    1e-4
}
fn default_nodes() -> usize {
    20_000
}
fn default_samples() -> usize {
    10_000
}

impl ScenarioSpec {
    pub fn new(case: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        ScenarioSpec {
            case: case.into(),
            eta: Vec::new(),
            scenarios: ScenarioKind::ALL.to_vec(),
            gap: default_gap(),
            nodes: default_nodes(),
            allocation: AllocationRule::Uniform,
            out: out.into(),
            seed: 0,
            mc_samples: default_samples(),
            convention: MarginConvention::Consistent,
            outage: None,
            sfr: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::field("scenarios", "empty scenario set"));
        }
        for (i, e) in self.eta.iter().enumerate() {
            if !(0.0..1.0).contains(e) {
                return Err(Error::field(format!("eta[{i}]"), format!("must lie in [0, 1), got {e}")));
            }
        }
        if !(self.gap >= 0.0) {
            return Err(Error::field("gap", "must be >= 0"));
        }
        if self.mc_samples == 0 {
            return Err(Error::field("mc_samples", "must be >= 1"));
        }
        Ok(())
    }
}

/// Loads a case file, or a built-in case when no such file exists.
pub fn resolve_case(name: &str) -> Result<SystemCase> {
    let path = Path::new(name);
    if path.exists() {
        return load_case(path);
    }
    cases::builtin(name).ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or built-in case"),
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub online_units: Option<Vec<usize>>,
    /// Hours whose inertia falls below the requirement.
    #[serde(default)]
    pub deficit_hours: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_uplift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chance_all_pass: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rmr_added: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellManifest {
    pub schema_version: u32,
    pub case: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub scenario: ScenarioKind,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
    pub artifacts: Vec<Artifact>,
    pub summary: CellSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub case: String,
    pub cells: Vec<Artifact>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn cell_dir(eta: Option<f64>, kind: ScenarioKind) -> PathBuf {
    match eta {
        Some(e) => PathBuf::from(format!("eta-{e}")).join(kind.label()),
        None => PathBuf::from(kind.label()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

struct Cell<'a> {
    spec: &'a ScenarioSpec,
    case: &'a SystemCase,
    dir: PathBuf,
    files: Vec<PathBuf>,
    summary: CellSummary,
}

impl Cell<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> std::result::Result<T, StageFailure> {
        f(self).map_err(|e| StageFailure {
            stage: name.into(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        })
    }
}

fn solver_options(spec: &ScenarioSpec) -> SolverOptions {
    SolverOptions {
        gap: spec.gap,
        node_limit: spec.nodes,
        ..SolverOptions::default()
    }
}

fn deficit_hours(case: &SystemCase, margins: &ChanceMargins, s: &DecisionSchedule) -> Vec<usize> {
    let req = ModelFlags::default();
    (0..case.periods())
        .filter(|&t| {
            let r = req.requirement(case, t);
            s.inertia_supply(case, margins, t) < r - 1e-6 * r.max(1.0)
        })
        .collect()
}

fn run_cell(cell: &mut Cell, kind: ScenarioKind) -> std::result::Result<(), StageFailure> {
    let spec = cell.spec;
    let case = cell.case;
    let margins = cell.stage("margins", |_| ChanceMargins::compute(case, spec.convention))?;
    let opts = solver_options(spec);
    let qp = QpSettings::default();
    let with_inertia = ModelFlags::default();
    let without = ModelFlags::without_inertia();
    let flags = match kind {
        ScenarioKind::Base | ScenarioKind::Rmr => &without,
        _ => &with_inertia,
    };
    let mut sol: UcSolution = cell.stage("solve", |_| solve_ccuc(case, &margins, flags, &opts))?;
    if kind == ScenarioKind::Rmr {
        let overlay = cell.stage("rmr", |_| rmr_select(case, &margins, &with_inertia, &sol.schedule))?;
        let (schedule, duals) = cell.stage("redispatch", |_| {
            redispatch(case, &margins, &without, &overlay.commitment, &qp)
        })?;
        sol.schedule = schedule;
        sol.duals = duals;
        cell.summary.rmr_added = overlay.added;
    }
    cell.summary.objective = Some(sol.schedule.objective);
    cell.summary.node_count = Some(sol.node_count);
    cell.summary.gap = Some(sol.gap);
    cell.summary.online_units = Some(
        (0..case.periods())
            .map(|t| sol.schedule.u.iter().filter(|u| u[t] >= 0.5).count())
            .collect(),
    );
    cell.summary.deficit_hours = deficit_hours(case, &margins, &sol.schedule);
    cell.stage("write schedule", |c| {
        let p = c.dir.join("schedule.json");
        write_json(&p, &sol)?;
        c.files.push(p);
        Ok(())
    })?;

    let scheme = match kind {
        ScenarioKind::Achp => Scheme::Achp,
        ScenarioKind::Aip => Scheme::Aip,
        _ => Scheme::Mp,
    };
    let prices: PriceSeries = cell.stage("price", |_| {
        price_schedule(case, &margins, flags, &sol.schedule, &sol.duals, scheme, spec.allocation, &qp)
    })?;
    cell.stage("write prices", |c| {
        let files = prices.write(&c.dir, "prices")?;
        c.files.extend(files);
        Ok(())
    })?;

    let report = cell.stage("settle", |_| {
        settle(
            case,
            &margins,
            flags,
            &sol.schedule,
            &prices,
            kind.label(),
            kind == ScenarioKind::Rmr,
        )
    })?;
    cell.summary.total_uplift = Some(report.total_uplift);
    cell.stage("write settlement", |c| {
        let files = report.write(&c.dir, "settlement")?;
        c.files.extend(files);
        Ok(())
    })?;

    let chance = cell.stage("chance check", |_| {
        monte_carlo_chance_check(case, &sol.schedule, flags, spec.mc_samples, spec.seed)
    })?;
    cell.summary.chance_all_pass = Some(chance.all_pass());
    cell.stage("write chance check", |c| {
        let p = c.dir.join("chance.json");
        write_json(&p, &chance)?;
        c.files.push(p);
        Ok(())
    })?;

    cell.stage("frequency", |c| {
        let hours = extreme_hours(case, &margins, &sol.schedule);
        let rows = scenario_frequency_metrics(
            case,
            &margins,
            &[(kind.label().to_string(), &sol.schedule)],
            &hours,
            &spec.sfr.unwrap_or_default(),
            spec.outage,
        )?;
        let p = c.dir.join("frequency.csv");
        write_metrics_csv(&rows, &p)?;
        c.files.push(p);
        let p = c.dir.join("inertia.csv");
        let mut w = csv::Writer::from_path(&p)?;
        w.write_record(["hour", "kinetic_energy", "requirement"])?;
        for t in 0..case.periods() {
            w.write_record([
                t.to_string(),
                sol.schedule.inertia_supply(case, &margins, t).to_string(),
                ModelFlags::default().requirement(case, t).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
        c.files.push(p);
        Ok(())
    })?;
    Ok(())
}

/// Runs one `(eta, scenario)` cell and writes its manifest.
pub fn run_one(spec: &ScenarioSpec, base: &SystemCase, eta: Option<f64>, kind: ScenarioKind) -> Result<PathBuf> {
    let rel = cell_dir(eta, kind);
    let dir = spec.out.join(&rel);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let scaled = match eta {
        Some(e) => scale_penetration(base, e),
        None => Ok(base.clone()),
    };
    let mut failure = None;
    let mut files = Vec::new();
    let mut summary = CellSummary::default();
    match scaled {
        Err(e) => {
            failure = Some(StageFailure {
                stage: "penetration".into(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            })
        }
        Ok(case) => {
            let mut cell = Cell {
                spec,
                case: &case,
                dir: dir.clone(),
                files: Vec::new(),
                summary: CellSummary::default(),
            };
            if let Err(f) = run_cell(&mut cell, kind) {
                log::warn!("{} failed at stage {}: {}", rel.display(), f.stage, f.message);
                failure = Some(f);
            }
            files = cell.files;
            summary = cell.summary;
        }
    }
    let mut artifacts = Vec::new();
    for f in &files {
        artifacts.push(Artifact {
            path: f.file_name().unwrap().to_string_lossy().into_owned(),
            sha256: sha256_file(f)?,
        });
    }
    artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = CellManifest {
        schema_version: MANIFEST_VERSION,
        case: spec.case.clone(),
        eta,
        scenario: kind,
        status: if failure.is_some() { "failed" } else { "ok" }.into(),
        failure,
        artifacts,
        summary,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Runs every cell of the matrix concurrently and writes `matrix.json`
/// listing the cell manifests with their hashes.
pub fn run_matrix(spec: &ScenarioSpec) -> Result<RunManifest> {
    spec.validate()?;
    let base = resolve_case(&spec.case)?;
    fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
    let etas: Vec<Option<f64>> = if spec.eta.is_empty() {
        vec![None]
    } else {
        spec.eta.iter().map(|e| Some(*e)).collect()
    };
    let cells: Vec<(Option<f64>, ScenarioKind)> = etas
        .iter()
        .flat_map(|e| spec.scenarios.iter().map(move |k| (*e, *k)))
        .collect();
    let results: Vec<Result<PathBuf>> = std::thread::scope(|s| {
        let handles: Vec<_> = cells
            .iter()
            .map(|&(eta, kind)| {
                let base = &base;
                s.spawn(move || run_one(spec, base, eta, kind))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Invalid("scenario cell panicked".into()))))
            .collect()
    });
    let mut entries = Vec::new();
    for r in results {
        let path = r?;
        let rel = path.strip_prefix(&spec.out).unwrap_or(&path);
        entries.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(&path)?,
        });
    }
    let manifest = RunManifest {
        schema_version: MANIFEST_VERSION,
        case: spec.case.clone(),
        cells: entries,
    };
    write_json(&spec.out.join("matrix.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_cell_manifest(path: &Path) -> Result<CellManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
