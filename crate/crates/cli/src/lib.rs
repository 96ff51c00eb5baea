//! Command-line entry points and the HTTP service for `sarplan`.
//!
//! The CLI and the service share [`plan_request`] and [`audit_request`], so
//! the same inputs produce byte-identical documents either way.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use sarplan::audit::{self, AuditError, AuditThresholds, ManifestFormat};
use sarplan::georef::{self, GeorefError};
use sarplan::planner::{plan_mission, PlanError};
use sarplan::terrain::{parse_asc_dem, TerrainError};
use sarplan::{CameraModel, DemRaster, GeoPolygon, PlanParams, TargetProfile};

pub mod service;

/// A failure, classified by who has to act on it.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or unreadable input; `field` names the offending input where known.
    #[error("{message}")]
    Input { message: String, field: Option<String> },
    #[error("{0}")]
    Infeasible(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn input(message: impl Into<String>, field: Option<&str>) -> Self {
        CliError::Input {
            message: message.into(),
            field: field.map(str::to_string),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 1,
            CliError::Infeasible(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn field(&self) -> Option<&str> {
        match self {
            CliError::Input { field, .. } => field.as_deref(),
            _ => None,
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Infeasible(_) => CliError::Infeasible(e.to_string()),
            // a patch wider than the bound means decomposition is broken, not the input
            PlanError::PatchRange { .. } => CliError::Internal(e.to_string()),
            PlanError::Camera(_) => CliError::input(e.to_string(), Some("camera")),
            PlanError::Terrain(_) => CliError::input(e.to_string(), Some("dem")),
            PlanError::Geo(_) => CliError::input(e.to_string(), Some("aoi")),
            _ => {
                let field = e.field();
                CliError::input(e.to_string(), field.as_deref())
            }
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        let field = match &e {
            AuditError::Header(_) | AuditError::Rows(_) | AuditError::DuplicateId(_) => {
                Some("manifest_rows".to_string())
            }
            AuditError::EmptyAoi | AuditError::Geo(_) => Some("aoi".to_string()),
            AuditError::Threshold { field, .. } => Some(field.clone()),
            AuditError::YearOutOfRange(_) => Some("timestamp".to_string()),
        };
        CliError::Input {
            message: e.to_string(),
            field,
        }
    }
}

impl From<GeorefError> for CliError {
    fn from(e: GeorefError) -> Self {
        CliError::input(e.to_string(), Some("srt"))
    }
}

fn read_text(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {what} {}: {e}", path.display()), Some(what)))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display()), None))
}

pub fn load_dem(path: &Path) -> Result<DemRaster, CliError> {
    let text = read_text(path, "dem")?;
    parse_asc_dem(&text).map_err(|e: TerrainError| CliError::input(format!("{}: {e}", path.display()), Some("dem")))
}

fn parse_part<T: serde::de::DeserializeOwned>(value: Value, field: &str) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::input(format!("invalid {field}: {e}"), Some(field)))
}

/// A plan request as posted to `/api/plan`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanBody {
    pub aoi: Value,
    pub camera: Value,
    #[serde(default)]
    pub target_profile: Option<Value>,
    #[serde(default)]
    pub params: Option<Value>,
    /// Must name the preloaded DEM when given.
    #[serde(default)]
    pub dem: Option<String>,
}

/// Fully parsed planning inputs, minus the DEM.
#[derive(Debug, Clone)]
pub struct PlanInputs {
    pub aoi: GeoPolygon,
    pub camera: CameraModel,
    pub profile: TargetProfile,
    pub params: PlanParams,
}

impl PlanInputs {
    pub fn from_body(body: PlanBody) -> Result<Self, CliError> {
        let aoi = GeoPolygon::from_geojson(&body.aoi).map_err(|e| CliError::input(e.to_string(), Some("aoi")))?;
        Ok(Self {
            aoi,
            camera: parse_part(body.camera, "camera")?,
            profile: body
                .target_profile
                .map(|v| parse_part(v, "target_profile"))
                .transpose()?
                .unwrap_or_default(),
            params: body
                .params
                .map(|v| parse_part(v, "params"))
                .transpose()?
                .unwrap_or_default(),
        })
    }
}

/// Runs the planner and renders the mission-plan document.
pub fn plan_request(inputs: &PlanInputs, dem: &DemRaster) -> Result<String, CliError> {
    let plan = plan_mission(&inputs.aoi, dem, &inputs.camera, &inputs.profile, &inputs.params)?;
    plan.to_json_string().map_err(|e| CliError::Internal(e.to_string()))
}

/// An audit request as posted to `/api/audit`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditBody {
    pub manifest_rows: Vec<Value>,
    #[serde(default)]
    pub aoi: Option<Value>,
    pub camera: Value,
    #[serde(default)]
    pub target_profile: Option<Value>,
    #[serde(default)]
    pub thresholds: Option<Value>,
}

/// Audits manifest text and renders the report document.
pub fn audit_request(
    manifest: &str,
    format: ManifestFormat,
    aoi: Option<&GeoPolygon>,
    camera: &CameraModel,
    profile: &TargetProfile,
    thresholds: &AuditThresholds,
) -> Result<audit::AuditReport, CliError> {
    let records = audit::load_manifest(manifest, format)?;
    Ok(audit::run_audit(&records, aoi, camera, profile, thresholds)?)
}

pub fn audit_body(body: AuditBody) -> Result<audit::AuditReport, CliError> {
    let camera: CameraModel = parse_part(body.camera, "camera")?;
    let profile: TargetProfile = body
        .target_profile
        .map(|v| parse_part(v, "target_profile"))
        .transpose()?
        .unwrap_or_default();
    let thresholds: AuditThresholds = body
        .thresholds
        .map(|v| parse_part(v, "thresholds"))
        .transpose()?
        .unwrap_or_default();
    let aoi = body
        .aoi
        .map(|v| GeoPolygon::from_geojson(&v).map_err(|e| CliError::input(e.to_string(), Some("aoi"))))
        .transpose()?;
    let mut jsonl = String::new();
    for row in &body.manifest_rows {
        jsonl.push_str(&row.to_string());
        jsonl.push('\n');
    }
    audit_request(
        &jsonl,
        ManifestFormat::Jsonl,
        aoi.as_ref(),
        &camera,
        &profile,
        &thresholds,
    )
}

#[derive(Debug, Parser)]
#[command(name = "sarplan", version, about = "Drone search-survey planning and imagery audit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a terrain-following coverage mission.
    Plan(PlanArgs),
    /// Audit a collected image manifest.
    Audit(AuditArgs),
    /// Geotag video frames from subtitle telemetry.
    SrtTag(SrtTagArgs),
    /// Serve the planning and audit API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Physical size of the search target in metres.
    #[arg(long, default_value_t = TargetProfile::DEFAULT_TARGET_SIZE_M)]
    pub target_size: f64,
    /// Mean detector box side in pixels.
    #[arg(long, default_value_t = TargetProfile::HERIDAL_MEAN_PX)]
    pub target_px: f64,
    /// Standard deviation of detector box sides in pixels.
    #[arg(long, default_value_t = TargetProfile::HERIDAL_STD_PX)]
    pub target_std_px: f64,
}

impl TargetArgs {
    fn profile(&self) -> Result<TargetProfile, CliError> {
        TargetProfile::new(self.target_size, self.target_px, self.target_std_px)
            .map_err(|e| CliError::input(e.to_string(), Some("target_profile")))
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub aoi: PathBuf,
    #[arg(long)]
    pub dem: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    /// JSON file of planning parameters; flags below override it.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub front_overlap: Option<f64>,
    #[arg(long)]
    pub side_overlap: Option<f64>,
    #[arg(long)]
    pub gsd_tolerance: Option<f64>,
    #[arg(long)]
    pub drones: Option<usize>,
    #[arg(long)]
    pub max_sortie_s: Option<f64>,
    #[arg(long)]
    pub heading: Option<f64>,
    /// Mission-plan JSON; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for one waypoint CSV per drone sortie.
    #[arg(long)]
    pub waypoints: Option<PathBuf>,
}

impl PlanArgs {
    pub fn inputs(&self) -> Result<PlanInputs, CliError> {
        let aoi = GeoPolygon::from_geojson_str(&read_text(&self.aoi, "aoi")?)
            .map_err(|e| CliError::input(format!("{}: {e}", self.aoi.display()), Some("aoi")))?;
        let camera = CameraModel::from_json(&read_text(&self.camera, "camera")?)
            .map_err(|e| CliError::input(format!("{}: {e}", self.camera.display()), Some("camera")))?;
        let mut params: PlanParams = match &self.params {
            Some(p) => serde_json::from_str(&read_text(p, "params")?)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display()), Some("params")))?,
            None => PlanParams::default(),
        };
        if let Some(v) = self.front_overlap {
            params.front_overlap = v;
        }
        if let Some(v) = self.side_overlap {
            params.side_overlap = v;
        }
        if let Some(v) = self.gsd_tolerance {
            params.gsd_tolerance = v;
        }
        if let Some(v) = self.drones {
            params.num_drones = v;
        }
        if let Some(v) = self.max_sortie_s {
            params.max_sortie_s = v;
        }
        if self.heading.is_some() {
            params.heading_override_deg = self.heading;
        }
        Ok(PlanInputs {
            aoi,
            camera,
            profile: self.target.profile()?,
            params,
        })
    }
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// CSV or JSON-lines manifest (by extension).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub camera: PathBuf,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Search area for the coverage statistics.
    #[arg(long)]
    pub aoi: Option<PathBuf>,
    /// JSON file of audit thresholds; flags below override it.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub cell_size: Option<f64>,
    #[arg(long)]
    pub interior_margin: Option<f64>,
    /// Report JSON; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SrtTagArgs {
    #[arg(long)]
    pub srt: PathBuf,
    /// Video frame rate.
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Seconds between tagged frames.
    #[arg(long, default_value_t = 1.0)]
    pub interval: f64,
    /// Frame-tag CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// DEM preloaded for every plan request.
    #[arg(long)]
    pub dem: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

/// What a finished command produced, for the caller to print.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub stderr: String,
}

fn emit(out: &Option<PathBuf>, text: String, outcome: &mut Outcome) -> Result<(), CliError> {
    match out {
        Some(path) => write_text(path, &text),
        None => {
            outcome.stdout.push_str(&text);
            Ok(())
        }
    }
}

pub fn run_plan(args: &PlanArgs) -> Result<Outcome, CliError> {
    let inputs = args.inputs()?;
    let dem = load_dem(&args.dem)?;
    let plan = plan_mission(&inputs.aoi, &dem, &inputs.camera, &inputs.profile, &inputs.params)?;
    let doc = plan.to_json_string().map_err(|e| CliError::Internal(e.to_string()))?;
    let mut outcome = Outcome::default();
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    if let Some(dir) = &args.waypoints {
        fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display()), None))?;
        for (drone, sortie, csv) in plan.waypoint_csvs().map_err(|e| CliError::Internal(e.to_string()))? {
            write_text(&dir.join(format!("drone{drone}_sortie{sortie}.csv")), &csv)?;
        }
    }
    log::info!(
        "{} patches, {} images, {} sorties",
        plan.patches.len(),
        plan.totals.images,
        plan.totals.sorties
    );
    emit(&args.out, doc, &mut outcome)?;
    Ok(outcome)
}

pub fn run_audit(args: &AuditArgs) -> Result<Outcome, CliError> {
    let manifest = read_text(&args.manifest, "manifest")?;
    let camera = CameraModel::from_json(&read_text(&args.camera, "camera")?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.camera.display()), Some("camera")))?;
    let aoi = match &args.aoi {
        Some(p) => Some(
            GeoPolygon::from_geojson_str(&read_text(p, "aoi")?)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display()), Some("aoi")))?,
        ),
        None => None,
    };
    let mut thresholds: AuditThresholds = match &args.thresholds {
        Some(p) => serde_json::from_str(&read_text(p, "thresholds")?)
            .map_err(|e| CliError::input(format!("{}: {e}", p.display()), Some("thresholds")))?,
        None => AuditThresholds::default(),
    };
    if let Some(v) = args.cell_size {
        thresholds.cell_size_m = v;
    }
    if let Some(v) = args.interior_margin {
        thresholds.interior_margin_m = v;
    }
    let report = audit_request(
        &manifest,
        ManifestFormat::from_path(&args.manifest),
        aoi.as_ref(),
        &camera,
        &args.target.profile()?,
        &thresholds,
    )?;
    let mut outcome = Outcome::default();
    let summary = report.summary_table();
    emit(&args.out, report.to_json_string(), &mut outcome)?;
    if args.out.is_some() {
        outcome.stdout.push_str(&summary);
    } else {
        outcome.stderr.push_str(&summary);
    }
    Ok(outcome)
}

pub fn run_srt_tag(args: &SrtTagArgs) -> Result<Outcome, CliError> {
    let parsed = georef::parse_srt(&read_text(&args.srt, "srt")?)?;
    if parsed.skipped_blocks > 0 {
        log::warn!("{} caption blocks carried no position", parsed.skipped_blocks);
    }
    let tags = georef::geotag_frames(&parsed.track, args.fps, args.interval)?;
    let mut outcome = Outcome::default();
    emit(&args.out, georef::frame_tags_csv(&tags), &mut outcome)?;
    Ok(outcome)
}

/// Runs every subcommand except `serve`, which needs an async runtime.
pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Plan(a) => run_plan(a),
        Command::Audit(a) => run_audit(a),
        Command::SrtTag(a) => run_srt_tag(a),
        Command::Serve(_) => Err(CliError::Internal("serve is handled by the binary".into())),
    }
}
