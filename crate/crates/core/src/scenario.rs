//! Scenario files: a terrain, a vehicle, one query and solver overrides.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "name": "example1_flat",
//!   "terrain": "../terrains/flat.json",
//!   "vehicle": "../vehicles/six_wheel.json",
//!   "query": { "pose": { "x": 0.0, "y": 0.0, "yaw": 0.0 } },
//!   "params": { "dt": 0.001 },
//!   "mode": "vertical",
//!   "trace": false
//! }
//! ```
//!
//! File references are resolved against the scenario's directory. A path
//! query reads `{ "path": { "file": "...", "samples": 21 } }`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{
    estimate_pose_with, pose_along_path_with, PoseResult, SolverParams, TraceRecord,
};
use crate::terrain::{SurfacePath, TerrainSurface};
use crate::vehicle::{ForceMode, Heading, VehicleModel};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathQuery {
    pub file: PathBuf,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Query {
    Pose(Heading),
    Path(PathQuery),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub terrain: PathBuf,
    pub vehicle: PathBuf,
    pub query: Query,
    #[serde(default)]
    pub params: SolverParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ForceMode>,
    #[serde(default)]
    pub trace: bool,
    /// Release height of the COM for pose queries, m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_start: Option<f64>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        message: format!("cannot read file: {e}"),
    })
}

fn with_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Schema { message, .. } => Error::Schema {
            path: path.display().to_string(),
            message,
        },
        other => other,
    }
}

impl Scenario {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: origin.display().to_string(),
            message: e.to_string(),
        })?;
        if sc.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Schema {
                path: origin.display().to_string(),
                message: format!(
                    "unsupported schema_version {} (expected {SCENARIO_SCHEMA_VERSION})",
                    sc.schema_version
                ),
            });
        }
        Ok(sc)
    }

    /// Parameters with the scenario's force mode applied.
    pub fn effective_params(&self) -> SolverParams {
        let mut p = self.params.clone();
        if let Some(mode) = self.mode {
            p.force_mode = mode;
        }
        p
    }
}

/// A scenario with its referenced files loaded.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub name: String,
    pub scenario: Scenario,
    pub surface: TerrainSurface,
    pub model: VehicleModel,
    pub path: Option<SurfacePath>,
}

impl LoadedScenario {
    pub fn load(file: &Path) -> Result<Self> {
        let scenario = Scenario::from_json(&read(file)?, file)?;
        let base = file.parent().unwrap_or(Path::new("."));
        let terrain_file = base.join(&scenario.terrain);
        let surface =
            TerrainSurface::from_json(&read(&terrain_file)?).map_err(with_path(&terrain_file))?;
        let vehicle_file = base.join(&scenario.vehicle);
        let model =
            VehicleModel::from_json(&read(&vehicle_file)?).map_err(with_path(&vehicle_file))?;
        let path = match &scenario.query {
            Query::Pose(_) => None,
            Query::Path(q) => {
                let path_file = base.join(&q.file);
                Some(SurfacePath::from_json(&read(&path_file)?).map_err(with_path(&path_file))?)
            }
        };
        let name = scenario.name.clone().unwrap_or_else(|| {
            file.file_stem()
                .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
        });
        Ok(LoadedScenario {
            name,
            scenario,
            surface,
            model,
            path,
        })
    }
}

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Forces tracing on when set.
    pub trace: bool,
    pub mode: Option<ForceMode>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    /// Path parameter; absent for single pose queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    pub result: PoseResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub scenario: String,
    pub mode: ForceMode,
    pub wheel_count: usize,
    pub mass: f64,
    pub poses: Vec<PoseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub schema_version: u32,
    pub scenario: String,
    pub kind: String,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(scenario: &str, err: &Error) -> Self {
        ErrorRecord {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.to_string(),
            kind: err.kind().to_string(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: ScenarioReport,
    pub files: Vec<PathBuf>,
}

/// Summary table: one row per pose, angles in degrees.
pub fn summary_csv(report: &ScenarioReport) -> String {
    let mut out = String::from("u,x,y,yaw_deg,z,roll_deg,pitch_deg,contacts");
    for j in 1..=report.wheel_count {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for rec in &report.poses {
        let r = &rec.result;
        let u = rec.u.map(|u| u.to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{u},{},{},{},{},{},{},{}",
            r.heading.x,
            r.heading.y,
            r.heading.yaw.to_degrees(),
            r.q_e[0],
            r.roll_deg(),
            r.pitch_deg(),
            r.contact_bitmap()
        );
        for f in &r.forces {
            let _ = write!(out, ",{f}");
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct PathTraceRecord<'a> {
    u: f64,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Writes an [`ErrorRecord`] for a failed scenario into `out_dir`.
pub fn write_error_record(out_dir: &Path, scenario: &str, err: &Error) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let file = out_dir.join(format!("{scenario}.error.json"));
    write_json(&file, &ErrorRecord::new(scenario, err))?;
    Ok(file)
}

/// Runs a loaded scenario without writing anything.
pub fn execute(
    loaded: &LoadedScenario,
    opts: &RunOptions,
    mut on_step: impl FnMut(Option<f64>, &TraceRecord),
) -> Result<ScenarioReport> {
    let mut params = loaded.scenario.effective_params();
    if let Some(mode) = opts.mode {
        params.force_mode = mode;
    }
    let poses = match (&loaded.scenario.query, &loaded.path) {
        (Query::Pose(h), _) => {
            let result = estimate_pose_with(
                *h,
                &loaded.model,
                &loaded.surface,
                &params,
                loaded.scenario.z_start,
                |r| on_step(None, r),
            )?;
            vec![PoseRecord { u: None, result }]
        }
        (Query::Path(q), Some(path)) => {
            let samples = opts.samples.unwrap_or(q.samples);
            pose_along_path_with(
                path,
                &loaded.model,
                &loaded.surface,
                &params,
                samples,
                |u, r| on_step(Some(u), r),
            )?
            .into_iter()
            .map(|p| PoseRecord {
                u: Some(p.u),
                result: p.result,
            })
            .collect()
        }
        (Query::Path(_), None) => {
            return Err(Error::InvalidInput(
                "path query without a loaded path".into(),
            ))
        }
    };
    Ok(ScenarioReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: loaded.name.clone(),
        mode: params.force_mode,
        wheel_count: loaded.model.wheel_count(),
        mass: loaded.model.mass,
        poses,
    })
}

/// Loads and runs the scenario at `file`, writing `<name>.result.json`,
/// `<name>.summary.csv` and, when tracing, `<name>.trace.ndjson` into
/// `opts.out_dir`.
pub fn run_scenario(file: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let loaded = LoadedScenario::load(file)?;
    run_loaded(&loaded, opts)
}

pub fn run_loaded(loaded: &LoadedScenario, opts: &RunOptions) -> Result<RunOutcome> {
    fs::create_dir_all(&opts.out_dir)?;
    let mut files = Vec::new();
    let tracing = opts.trace || loaded.scenario.trace;

    let report = if tracing {
        let trace_file = opts.out_dir.join(format!("{}.trace.ndjson", loaded.name));
        let mut w = BufWriter::new(fs::File::create(&trace_file)?);
        let mut io_err: Option<std::io::Error> = None;
        let report = execute(loaded, opts, |u, rec| {
            if io_err.is_some() {
                return;
            }
            let line = match u {
                Some(u) => serde_json::to_string(&PathTraceRecord { u, record: rec }),
                None => serde_json::to_string(rec),
            }
            .expect("trace records serialise");
            if let Err(e) = writeln!(w, "{line}") {
                io_err = Some(e);
            }
        });
        w.flush()?;
        if let Some(e) = io_err {
            return Err(e.into());
        }
        files.push(trace_file);
        report?
    } else {
        execute(loaded, opts, |_, _| {})?
    };

    let json_file = opts.out_dir.join(format!("{}.result.json", loaded.name));
    write_json(&json_file, &report)?;
    files.push(json_file);
    let csv_file = opts.out_dir.join(format!("{}.summary.csv", loaded.name));
    fs::write(&csv_file, summary_csv(&report))?;
    files.push(csv_file);
    Ok(RunOutcome { report, files })
}
