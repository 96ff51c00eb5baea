//! Post-flight audit of a collected image set: per-image findings against
//! the acquisition rules, sun elevation, and footprint coverage of the
//! search area.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Datelike, NaiveDateTime, TimeZone, Timelike, Utc};
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::camera::{acceptable_px_band, footprint_dimensions, projected_target_px, CameraModel, TargetProfile};
use crate::defaults;
use crate::geo::{heading_unit, GeoError, GeoPoint, GeoPolygon, LocalPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("unreadable manifest header: {0}")]
    Header(String),
    #[error("{}", format_rows(.0))]
    Rows(Vec<RowError>),
    #[error("duplicate image_id {0:?}")]
    DuplicateId(String),
    #[error("the search area contains no coverage cells")]
    EmptyAoi,
    #[error("year {0} is outside 1950..=2100")]
    YearOutOfRange(i32),
    #[error("invalid threshold `{field}`: {message}")]
    Threshold { field: String, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

fn format_rows(rows: &[RowError]) -> String {
    let lines: Vec<String> = rows.iter().map(|r| format!("line {}: {}", r.line, r.message)).collect();
    format!("{} bad manifest rows; {}", rows.len(), lines.join("; "))
}

/// A manifest row that could not be read; `line` is 1-based in the input text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestRecord {
    pub image_id: String,
    pub timestamp: DateTime<Utc>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub agl_m: Option<f64>,
    pub gimbal_pitch_deg: Option<f64>,
    pub heading_deg: Option<f64>,
    pub drone_id: String,
}

impl ManifestRecord {
    pub fn position(&self) -> Option<GeoPoint> {
        GeoPoint::new(self.lat?, self.lon?).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestFormat {
    Csv,
    Jsonl,
}

impl ManifestFormat {
    /// Guesses the format from a file name: `.jsonl`/`.ndjson` or CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "jsonl" || ext == "ndjson" => ManifestFormat::Jsonl,
            _ => ManifestFormat::Csv,
        }
    }
}

const REQUIRED_COLUMNS: [&str; 3] = ["image_id", "timestamp", "drone_id"];
const OPTIONAL_COLUMNS: [&str; 5] = ["lat", "lon", "agl_m", "gimbal_pitch_deg", "heading_deg"];

/// Raw field values of one row before validation.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    image_id: Option<String>,
    timestamp: Option<String>,
    lat: Option<f64>,
    lon: Option<f64>,
    agl_m: Option<f64>,
    gimbal_pitch_deg: Option<f64>,
    heading_deg: Option<f64>,
    drone_id: Option<String>,
}

/// Accepts RFC 3339, or `YYYY-MM-DD HH:MM:SS` (or with `T`) taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| Utc.from_utc_datetime(&n))
}

fn validate_raw(raw: RawRecord) -> Result<ManifestRecord, String> {
    let image_id = raw
        .image_id
        .filter(|s| !s.trim().is_empty())
        .ok_or("image_id is empty")?;
    let drone_id = raw
        .drone_id
        .filter(|s| !s.trim().is_empty())
        .ok_or("drone_id is empty")?;
    let ts = raw.timestamp.ok_or("timestamp is missing")?;
    let timestamp = parse_timestamp(&ts).ok_or_else(|| format!("unreadable timestamp {ts:?}"))?;
    match (raw.lat, raw.lon) {
        (Some(_), None) | (None, Some(_)) => return Err("lat and lon must be given together".into()),
        (Some(lat), Some(lon)) => {
            GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
        }
        (None, None) => {}
    }
    if let Some(agl) = raw.agl_m {
        if !(agl.is_finite() && agl > 0.0) {
            return Err(format!("agl_m must be positive, got {agl}"));
        }
    }
    if let Some(p) = raw.gimbal_pitch_deg {
        if !(-180.0..=0.0).contains(&p) {
            return Err(format!("gimbal_pitch_deg must be within [-180, 0], got {p}"));
        }
    }
    let heading_deg = match raw.heading_deg {
        Some(h) if !h.is_finite() => return Err("heading_deg must be finite".into()),
        Some(h) => Some(h.rem_euclid(360.0)),
        None => None,
    };
    Ok(ManifestRecord {
        image_id: image_id.trim().to_string(),
        timestamp,
        lat: raw.lat,
        lon: raw.lon,
        agl_m: raw.agl_m,
        gimbal_pitch_deg: raw.gimbal_pitch_deg,
        heading_deg,
        drone_id: drone_id.trim().to_string(),
    })
}

/// Rows with their 1-based line numbers.
type NumberedRows = Vec<(usize, Result<RawRecord, String>)>;

fn parse_csv_rows(text: &str) -> Result<NumberedRows, AuditError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| AuditError::Header(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    for name in &header {
        if !REQUIRED_COLUMNS.contains(&name.as_str()) && !OPTIONAL_COLUMNS.contains(&name.as_str()) {
            return Err(AuditError::Header(format!("unknown column {name:?}")));
        }
    }
    for required in REQUIRED_COLUMNS {
        if !header.iter().any(|h| h == required) {
            return Err(AuditError::Header(format!("missing column {required:?}")));
        }
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                rows.push((line, Err(e.to_string())));
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut raw = RawRecord::default();
        let mut problem = None;
        for (name, value) in header.iter().zip(record.iter()) {
            if value.is_empty() {
                continue;
            }
            let number = || {
                value
                    .parse::<f64>()
                    .map_err(|_| format!("{name} is not a number: {value:?}"))
            };
            let slot = match name.as_str() {
                "image_id" => {
                    raw.image_id = Some(value.to_string());
                    continue;
                }
                "timestamp" => {
                    raw.timestamp = Some(value.to_string());
                    continue;
                }
                "drone_id" => {
                    raw.drone_id = Some(value.to_string());
                    continue;
                }
                "lat" => &mut raw.lat,
                "lon" => &mut raw.lon,
                "agl_m" => &mut raw.agl_m,
                "gimbal_pitch_deg" => &mut raw.gimbal_pitch_deg,
                _ => &mut raw.heading_deg,
            };
            match number() {
                Ok(v) => *slot = Some(v),
                Err(e) => {
                    problem.get_or_insert(e);
                }
            }
        }
        rows.push((line, problem.map_or(Ok(raw), Err)));
    }
    Ok(rows)
}

fn parse_jsonl_rows(text: &str) -> NumberedRows {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str::<RawRecord>(l).map_err(|e| e.to_string())))
        .collect()
}

/// Reads a manifest. Every bad row is reported, not just the first.
pub fn load_manifest(text: &str, format: ManifestFormat) -> Result<Vec<ManifestRecord>, AuditError> {
    let rows = match format {
        ManifestFormat::Csv => parse_csv_rows(text)?,
        ManifestFormat::Jsonl => parse_jsonl_rows(text),
    };
    let mut records = Vec::with_capacity(rows.len());
    let mut errors = Vec::new();
    for (line, raw) in rows {
        match raw.and_then(validate_raw) {
            Ok(r) => records.push(r),
            Err(message) => errors.push(RowError { line, message }),
        }
    }
    if !errors.is_empty() {
        return Err(AuditError::Rows(errors));
    }
    let mut seen = BTreeSet::new();
    for r in &records {
        if !seen.insert(r.image_id.as_str()) {
            return Err(AuditError::DuplicateId(r.image_id.clone()));
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FindingCode {
    #[serde(rename = "E-GEO-MISSING")]
    GeoMissing,
    #[serde(rename = "W-OBLIQUE")]
    Oblique,
    #[serde(rename = "W-GSD-COARSE")]
    GsdCoarse,
    #[serde(rename = "W-GSD-FINE")]
    GsdFine,
    #[serde(rename = "W-SUN-LOW")]
    SunLow,
    #[serde(rename = "W-LABEL")]
    Label,
    #[serde(rename = "W-TIME-ORDER")]
    TimeOrder,
}

impl FindingCode {
    pub const ALL: [FindingCode; 7] = [
        FindingCode::GeoMissing,
        FindingCode::Oblique,
        FindingCode::GsdCoarse,
        FindingCode::GsdFine,
        FindingCode::SunLow,
        FindingCode::Label,
        FindingCode::TimeOrder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FindingCode::GeoMissing => "E-GEO-MISSING",
            FindingCode::Oblique => "W-OBLIQUE",
            FindingCode::GsdCoarse => "W-GSD-COARSE",
            FindingCode::GsdFine => "W-GSD-FINE",
            FindingCode::SunLow => "W-SUN-LOW",
            FindingCode::Label => "W-LABEL",
            FindingCode::TimeOrder => "W-TIME-ORDER",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            FindingCode::GeoMissing => Severity::Error,
            _ => Severity::Warning,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub image_id: String,
    pub code: FindingCode,
    pub severity: Severity,
    pub detail: String,
    pub measured: Option<f64>,
}

impl Finding {
    fn new(image_id: &str, code: FindingCode, detail: String, measured: Option<f64>) -> Self {
        Self {
            image_id: image_id.to_string(),
            code,
            severity: code.severity(),
            detail,
            measured,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditThresholds {
    pub nadir_tolerance_deg: f64,
    pub sun_min_elevation_deg: f64,
    /// Minimum digits in the sequence part of an image label.
    pub label_min_digits: usize,
    pub cell_size_m: f64,
    /// Cells at least this far inside the search area boundary are also
    /// reported separately; 0 disables the interior statistic.
    pub interior_margin_m: f64,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        Self {
            nadir_tolerance_deg: defaults::NADIR_TOLERANCE_DEG,
            sun_min_elevation_deg: defaults::SUN_MIN_ELEVATION_DEG,
            label_min_digits: defaults::LABEL_MIN_DIGITS,
            cell_size_m: defaults::COVERAGE_CELL_M,
            interior_margin_m: 0.0,
        }
    }
}

impl AuditThresholds {
    pub fn validate(&self) -> Result<(), AuditError> {
        let bad = |field: &str, message: String| AuditError::Threshold {
            field: field.into(),
            message,
        };
        if !(self.nadir_tolerance_deg >= 0.0 && self.nadir_tolerance_deg < 90.0) {
            return Err(bad(
                "nadir_tolerance_deg",
                format!("must be within [0, 90), got {}", self.nadir_tolerance_deg),
            ));
        }
        if !(-90.0..=90.0).contains(&self.sun_min_elevation_deg) {
            return Err(bad(
                "sun_min_elevation_deg",
                format!("must be within [-90, 90], got {}", self.sun_min_elevation_deg),
            ));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(bad(
                "cell_size_m",
                format!("must be positive, got {}", self.cell_size_m),
            ));
        }
        if !(self.interior_margin_m.is_finite() && self.interior_margin_m >= 0.0) {
            return Err(bad(
                "interior_margin_m",
                format!("must be non-negative, got {}", self.interior_margin_m),
            ));
        }
        Ok(())
    }
}

/// Per-image checks that need no other records.
pub fn check_image(
    rec: &ManifestRecord,
    cam: &CameraModel,
    profile: &TargetProfile,
    thr: &AuditThresholds,
) -> Vec<Finding> {
    let mut out = Vec::new();
    let id = rec.image_id.as_str();
    match rec.position() {
        None => out.push(Finding::new(
            id,
            FindingCode::GeoMissing,
            "image has no position".into(),
            None,
        )),
        Some(p) => {
            if let Ok(sun) = solar_elevation(rec.timestamp, p) {
                if sun < thr.sun_min_elevation_deg {
                    out.push(Finding::new(
                        id,
                        FindingCode::SunLow,
                        format!(
                            "sun {sun:.1} deg above the horizon, below {}",
                            thr.sun_min_elevation_deg
                        ),
                        Some(sun),
                    ));
                }
            }
        }
    }
    if let Some(pitch) = rec.gimbal_pitch_deg {
        let off = (pitch + 90.0).abs();
        if off > thr.nadir_tolerance_deg {
            out.push(Finding::new(
                id,
                FindingCode::Oblique,
                format!("camera {off:.1} deg off nadir, tolerance {}", thr.nadir_tolerance_deg),
                Some(pitch),
            ));
        }
    }
    if let Some(agl) = rec.agl_m {
        if let Ok(px) = projected_target_px(cam, agl, profile.target_size_m) {
            let (lo, hi) = acceptable_px_band(profile);
            if px < lo {
                out.push(Finding::new(
                    id,
                    FindingCode::GsdCoarse,
                    format!("target spans {px:.1} px at {agl} m, below {lo} px"),
                    Some(px),
                ));
            } else if px > hi {
                out.push(Finding::new(
                    id,
                    FindingCode::GsdFine,
                    format!("target spans {px:.1} px at {agl} m, above {hi} px"),
                    Some(px),
                ));
            }
        }
    }
    if !label_matches(&rec.image_id, &rec.drone_id, thr.label_min_digits) {
        out.push(Finding::new(
            id,
            FindingCode::Label,
            format!(
                "label does not follow \"{}-\" plus a sequence of at least {} digits",
                rec.drone_id, thr.label_min_digits
            ),
            None,
        ));
    }
    out
}

/// True when `image_id` is `<drone_id>-<digits>` with at least `min_digits` digits.
pub fn label_matches(image_id: &str, drone_id: &str, min_digits: usize) -> bool {
    let pattern = format!(r"^{}-\d{{{},}}$", regex::escape(drone_id), min_digits.max(1));
    Regex::new(&pattern).is_ok_and(|re| re.is_match(image_id))
}

/// All per-image findings plus time-order findings. A record is out of order
/// when its timestamp is earlier than one listed before it for the same drone.
pub fn check_manifest(
    records: &[ManifestRecord],
    cam: &CameraModel,
    profile: &TargetProfile,
    thr: &AuditThresholds,
) -> Vec<Finding> {
    let mut findings: Vec<Finding> = records
        .par_iter()
        .flat_map_iter(|r| check_image(r, cam, profile, thr))
        .collect();
    let mut latest: BTreeMap<&str, DateTime<Utc>> = BTreeMap::new();
    for r in records {
        match latest.get(r.drone_id.as_str()) {
            Some(&prev) if r.timestamp < prev => findings.push(Finding::new(
                &r.image_id,
                FindingCode::TimeOrder,
                format!(
                    "taken at {} but listed after an image of drone {} taken at {}",
                    r.timestamp.to_rfc3339(),
                    r.drone_id,
                    prev.to_rfc3339()
                ),
                None,
            )),
            Some(&prev) if prev >= r.timestamp => {}
            _ => {
                latest.insert(&r.drone_id, r.timestamp);
            }
        }
    }
    findings
}

/// Sun position terms at one instant and place, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarPosition {
    pub declination_deg: f64,
    pub hour_angle_deg: f64,
    pub elevation_deg: f64,
}

/// Elevation from latitude, declination and hour angle, written in the
/// `atan2` form so that at zero hour angle it is exactly `90 - |lat - decl|`.
pub fn elevation_from_hour_angle(lat_deg: f64, declination_deg: f64, hour_angle_deg: f64) -> f64 {
    let (phi, delta, h) = (
        lat_deg.to_radians(),
        declination_deg.to_radians(),
        hour_angle_deg.to_radians(),
    );
    let up = phi.sin() * delta.sin() + phi.cos() * delta.cos() * h.cos();
    let east = delta.cos() * h.sin();
    let north = phi.sin() * delta.cos() * h.cos() - phi.cos() * delta.sin();
    up.atan2(east.hypot(north)).to_degrees()
}

/// NOAA fractional-year approximation of the sun's position.
pub fn solar_position(t: DateTime<Utc>, p: GeoPoint) -> Result<SolarPosition, AuditError> {
    let year = t.year();
    if !(1950..=2100).contains(&year) {
        return Err(AuditError::YearOutOfRange(year));
    }
    let days_in_year = if chrono::NaiveDate::from_ymd_opt(year, 2, 29).is_some() {
        366.0
    } else {
        365.0
    };
    let hour = t.hour() as f64 + t.minute() as f64 / 60.0 + (t.second() as f64 + t.nanosecond() as f64 * 1e-9) / 3600.0;
    let g = 2.0 * std::f64::consts::PI / days_in_year * (t.ordinal0() as f64 + (hour - 12.0) / 24.0);
    let eqtime_min = 229.18
        * (0.000075 + 0.001868 * g.cos()
            - 0.032077 * g.sin()
            - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();
    let true_solar_min = hour * 60.0 + eqtime_min + 4.0 * p.lon_deg;
    let hour_angle_deg = true_solar_min / 4.0 - 180.0;
    let declination_deg = decl.to_degrees();
    Ok(SolarPosition {
        declination_deg,
        hour_angle_deg,
        elevation_deg: elevation_from_hour_angle(p.lat_deg, declination_deg, hour_angle_deg),
    })
}

/// Geometric sun elevation above the horizon, degrees (no refraction).
pub fn solar_elevation(t: DateTime<Utc>, p: GeoPoint) -> Result<f64, AuditError> {
    Ok(solar_position(t, p)?.elevation_deg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageStats {
    pub fraction_ge1: f64,
    pub fraction_ge2: f64,
    pub gap_cells: usize,
    pub cell_size_m: f64,
    pub aoi_cells: usize,
    pub images_stamped: usize,
    /// Images lacking a position, AGL, heading or nadir pitch.
    pub images_excluded: usize,
    pub interior_margin_m: f64,
    pub interior_cells: usize,
    pub interior_fraction_ge2: Option<f64>,
}

/// Coverage depth of every search-area cell: rasterises the area at
/// `cell_size_m` and stamps each usable image footprint.
pub fn coverage_analysis(
    records: &[ManifestRecord],
    aoi: &GeoPolygon,
    cam: &CameraModel,
    thr: &AuditThresholds,
) -> Result<CoverageStats, AuditError> {
    thr.validate()?;
    let frame = aoi.local_frame();
    let poly = aoi.project(&frame)?;
    let (min_e, min_n, max_e, max_n) = poly.bounds();
    let cs = thr.cell_size_m;
    let ncols = ((max_e - min_e) / cs).ceil().max(1.0) as usize;
    let nrows = ((max_n - min_n) / cs).ceil().max(1.0) as usize;
    let centre = |r: usize, c: usize| LocalPoint::new(min_e + (c as f64 + 0.5) * cs, min_n + (r as f64 + 0.5) * cs);

    let inside: Vec<bool> = (0..nrows * ncols)
        .into_par_iter()
        .map(|i| poly.contains(centre(i / ncols, i % ncols)))
        .collect();
    let aoi_cells = inside.iter().filter(|&&b| b).count();
    if aoi_cells == 0 {
        return Err(AuditError::EmptyAoi);
    }

    let mut depth = vec![0u32; nrows * ncols];
    let mut stamped = 0;
    let mut excluded = 0;
    for r in records {
        let usable = match (r.position(), r.agl_m, r.heading_deg, r.gimbal_pitch_deg) {
            (Some(p), Some(agl), Some(h), Some(pitch)) if (pitch + 90.0).abs() <= thr.nadir_tolerance_deg => {
                Some((p, agl, h))
            }
            _ => None,
        };
        let Some((p, agl, heading)) = usable else {
            excluded += 1;
            continue;
        };
        let (Ok(c), Ok((w, h))) = (frame.project(p), footprint_dimensions(cam, agl)) else {
            excluded += 1;
            continue;
        };
        stamped += 1;
        let up = heading_unit(heading);
        let right = LocalPoint::new(up.north_m, -up.east_m);
        let (hw, hh) = (0.5 * w, 0.5 * h);
        let reach_e = hw * right.east_m.abs() + hh * up.east_m.abs();
        let reach_n = hw * right.north_m.abs() + hh * up.north_m.abs();
        let col0 = ((c.east_m - reach_e - min_e) / cs - 0.5).floor().max(0.0) as usize;
        let col1 = (((c.east_m + reach_e - min_e) / cs - 0.5).ceil().max(-1.0) + 1.0).min(ncols as f64) as usize;
        let row0 = ((c.north_m - reach_n - min_n) / cs - 0.5).floor().max(0.0) as usize;
        let row1 = (((c.north_m + reach_n - min_n) / cs - 0.5).ceil().max(-1.0) + 1.0).min(nrows as f64) as usize;
        for row in row0..row1 {
            for col in col0..col1 {
                let d = centre(row, col) - c;
                if d.dot(right).abs() <= hw && d.dot(up).abs() <= hh {
                    depth[row * ncols + col] += 1;
                }
            }
        }
    }

    let mut ge1 = 0;
    let mut ge2 = 0;
    let mut interior = 0;
    let mut interior_ge2 = 0;
    let margin = thr.interior_margin_m;
    for i in 0..depth.len() {
        if !inside[i] {
            continue;
        }
        ge1 += usize::from(depth[i] >= 1);
        ge2 += usize::from(depth[i] >= 2);
        if margin > 0.0 && poly.distance_to_boundary(centre(i / ncols, i % ncols)) >= margin {
            interior += 1;
            interior_ge2 += usize::from(depth[i] >= 2);
        }
    }
    let n = aoi_cells as f64;
    Ok(CoverageStats {
        fraction_ge1: ge1 as f64 / n,
        fraction_ge2: ge2 as f64 / n,
        gap_cells: aoi_cells - ge1,
        cell_size_m: cs,
        aoi_cells,
        images_stamped: stamped,
        images_excluded: excluded,
        interior_margin_m: margin,
        interior_cells: interior,
        interior_fraction_ge2: (margin > 0.0 && interior > 0).then(|| interior_ge2 as f64 / interior as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditTotals {
    pub images: usize,
    pub errors: usize,
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub findings: Vec<Finding>,
    /// Absent when no search area was given.
    pub coverage: Option<CoverageStats>,
    pub totals: AuditTotals,
    pub params_echo: Value,
}

/// Inputs echoed into a report.
pub fn audit_params_echo(cam: &CameraModel, profile: &TargetProfile, thr: &AuditThresholds) -> Value {
    let band = acceptable_px_band(profile);
    json!({
        "camera": cam.spec(),
        "target_profile": profile,
        "thresholds": thr,
        "acceptable_px_band": [band.0, band.1],
        "sun_threshold_note": "stand-in for mid-day; not a measured value",
        "defaults": defaults::table(),
    })
}

/// Sorts findings by image and code and totals them.
pub fn build_report(
    images: usize,
    mut findings: Vec<Finding>,
    coverage: Option<CoverageStats>,
    params_echo: Value,
) -> AuditReport {
    findings.sort_by(|a, b| a.image_id.cmp(&b.image_id).then(a.code.as_str().cmp(b.code.as_str())));
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    AuditReport {
        totals: AuditTotals {
            images,
            errors,
            warnings: findings.len() - errors,
        },
        findings,
        coverage,
        params_echo,
    }
}

/// Loads nothing itself: checks records, computes coverage when a search
/// area is given, and assembles the report.
pub fn run_audit(
    records: &[ManifestRecord],
    aoi: Option<&GeoPolygon>,
    cam: &CameraModel,
    profile: &TargetProfile,
    thr: &AuditThresholds,
) -> Result<AuditReport, AuditError> {
    thr.validate()?;
    let findings = check_manifest(records, cam, profile, thr);
    let coverage = aoi.map(|a| coverage_analysis(records, a, cam, thr)).transpose()?;
    Ok(build_report(
        records.len(),
        findings,
        coverage,
        audit_params_echo(cam, profile, thr),
    ))
}

impl AuditReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    /// Plain-text summary: counts per code, then coverage.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:<8} {:>6}", "code", "severity", "count");
        for code in FindingCode::ALL {
            let n = self.findings.iter().filter(|f| f.code == code).count();
            let sev = match code.severity() {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            let _ = writeln!(out, "{:<14} {:<8} {:>6}", code.as_str(), sev, n);
        }
        let _ = writeln!(
            out,
            "images {}  errors {}  warnings {}",
            self.totals.images, self.totals.errors, self.totals.warnings
        );
        if let Some(c) = &self.coverage {
            let _ = writeln!(
                out,
                "coverage >=1: {:.4}  >=2: {:.4}  gap cells: {} of {} ({} m cells)",
                c.fraction_ge1, c.fraction_ge2, c.gap_cells, c.aoi_cells, c.cell_size_m
            );
        }
        out
    }
}
