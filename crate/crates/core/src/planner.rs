//! Coverage planning: boustrophedon flight lines and camera triggers per
//! terrain patch, battery-bounded sortie segmentation, and allocation of
//! patches across a fleet.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::camera::{
    acceptable_px_band, altitude_for_target, footprint_dimensions, CameraError, CameraModel, TargetProfile,
};
use crate::defaults;
use crate::geo::{bearing_deg, heading_unit, GeoError, GeoPoint, GeoPolygon, LocalFrame, LocalPoint};
use crate::terrain::{
    decompose_stairstep, max_elev_range_for_gsd_tolerance, Cell, CellRect, DemRaster, LocalGrid, TerrainError,
    TerrainPatch,
};

/// Headings tried by [`choose_heading`], degrees.
pub const CANDIDATE_HEADINGS_DEG: [f64; 12] = [
    0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0, 105.0, 120.0, 135.0, 150.0, 165.0,
];

/// Direction changes at or above this angle cost a turn penalty.
pub const TURN_THRESHOLD_DEG: f64 = 45.0;

/// A pass count may fall short of the exact quotient by this fraction of one
/// spacing; the footprints still overlap the edge by a wide margin.
const COUNT_SLACK: f64 = 0.05;

/// Relative tolerance when comparing total line length between headings.
const LENGTH_TIE_TOLERANCE: f64 = 1e-6;

/// Trimmed line ends stop this far short of forbidden ground, so the end
/// point itself lies over an allowed cell.
const EDGE_GAP_M: f64 = 1e-6;

/// Segments shorter than this are discarded.
const MIN_SEGMENT_M: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{field}`: {message}")]
pub struct ParamError {
    pub field: String,
    pub message: String,
}

impl ParamError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("flight AGL {agl_m:.2} m is below the canopy clearance floor {clearance_m:.2} m")]
    ClearanceFloor { agl_m: f64, clearance_m: f64 },
    #[error("patch {patch_id} spans {range_m:.3} m of elevation, more than the {max_m:.3} m allowed")]
    PatchRange { patch_id: usize, range_m: f64, max_m: f64 },
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl PlanError {
    /// True for errors caused by the mission being impossible rather than by bad input.
    pub fn is_infeasible(&self) -> bool {
        matches!(self, PlanError::Infeasible(_))
    }

    /// Name of the offending input field, where one applies.
    pub fn field(&self) -> Option<String> {
        match self {
            PlanError::Param(e) => Some(e.field.clone()),
            PlanError::ClearanceFloor { .. } => Some("canopy_clearance_m".into()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanParams {
    pub front_overlap: f64,
    pub side_overlap: f64,
    pub gsd_tolerance: f64,
    pub canopy_clearance_m: f64,
    pub cruise_speed_mps: f64,
    pub turn_penalty_s: f64,
    pub climb_rate_mps: f64,
    pub max_sortie_s: f64,
    pub num_drones: usize,
    pub heading_override_deg: Option<f64>,
    /// Launch point; defaults to the search area's frame origin.
    pub home: Option<GeoPoint>,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            front_overlap: defaults::OVERLAP,
            side_overlap: defaults::OVERLAP,
            gsd_tolerance: defaults::GSD_TOLERANCE,
            canopy_clearance_m: defaults::CANOPY_CLEARANCE_M,
            cruise_speed_mps: defaults::CRUISE_SPEED_MPS,
            turn_penalty_s: defaults::TURN_PENALTY_S,
            climb_rate_mps: defaults::CLIMB_RATE_MPS,
            max_sortie_s: defaults::MAX_SORTIE_S,
            num_drones: 1,
            heading_override_deg: None,
            home: None,
        }
    }
}

impl PlanParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (field, v) in [
            ("front_overlap", self.front_overlap),
            ("side_overlap", self.side_overlap),
        ] {
            if !(defaults::OVERLAP_MIN..=defaults::OVERLAP_MAX).contains(&v) {
                return Err(ParamError::new(
                    field,
                    format!(
                        "must be within [{}, {}], got {v}",
                        defaults::OVERLAP_MIN,
                        defaults::OVERLAP_MAX
                    ),
                ));
            }
        }
        if !(self.gsd_tolerance > 0.0 && self.gsd_tolerance <= 0.5) {
            return Err(ParamError::new(
                "gsd_tolerance",
                format!("must be within (0, 0.5], got {}", self.gsd_tolerance),
            ));
        }
        for (field, v) in [
            ("canopy_clearance_m", self.canopy_clearance_m),
            ("cruise_speed_mps", self.cruise_speed_mps),
            ("climb_rate_mps", self.climb_rate_mps),
            ("max_sortie_s", self.max_sortie_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ParamError::new(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.turn_penalty_s.is_finite() && self.turn_penalty_s >= 0.0) {
            return Err(ParamError::new(
                "turn_penalty_s",
                format!("must be non-negative, got {}", self.turn_penalty_s),
            ));
        }
        if self.num_drones == 0 {
            return Err(ParamError::new("num_drones", "must be at least 1"));
        }
        if let Some(h) = self.heading_override_deg {
            if !h.is_finite() {
                return Err(ParamError::new("heading_override_deg", "must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlightLine {
    pub start: LocalPoint,
    pub end: LocalPoint,
    pub altitude_amsl_m: f64,
    /// Image centres in flight order.
    pub triggers: Vec<LocalPoint>,
}

impl FlightLine {
    pub fn length_m(&self) -> f64 {
        self.start.distance(self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchPlan {
    pub patch_id: usize,
    pub agl_m: f64,
    pub altitude_amsl_m: f64,
    pub heading_deg: f64,
    pub lines: Vec<FlightLine>,
    pub est_length_m: f64,
    pub est_duration_s: f64,
    pub est_images: usize,
    /// Set when no sweep line crossed the patch and a single line through the
    /// cell nearest its centroid was used instead.
    pub centroid_fallback: bool,
}

/// Spacing derived from camera geometry and overlaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spacing {
    pub line_m: f64,
    pub trigger_m: f64,
}

impl Spacing {
    pub fn new(cam: &CameraModel, agl_m: f64, params: &PlanParams) -> Result<Self, CameraError> {
        let (w, h) = footprint_dimensions(cam, agl_m)?;
        Ok(Self {
            line_m: w * (1.0 - params.side_overlap),
            trigger_m: h * (1.0 - params.front_overlap),
        })
    }
}

/// Number of evenly spaced passes needed to span `extent` at `spacing`.
pub fn pass_count(extent: f64, spacing: f64) -> usize {
    ((extent / spacing - COUNT_SLACK).ceil()).max(1.0) as usize
}

/// Positions of `pass_count` passes at exactly `spacing`, centred on `[lo, hi]`.
fn centred_positions(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = pass_count(hi - lo, spacing);
    let mid = 0.5 * (lo + hi);
    (0..n)
        .map(|i| mid + (i as f64 - 0.5 * (n as f64 - 1.0)) * spacing)
        .collect()
}

/// Cell geometry of one patch plus the neighbouring cells a line must not cross.
pub struct PatchSweep {
    /// Patch cells inflated by half a line spacing.
    cover: Vec<CellRect>,
    /// Bare patch cells, for the extent across the sweep direction.
    cells: Vec<CellRect>,
    /// Cells whose ground is outside the patch's altitude band, or unknown.
    blockers: Vec<CellRect>,
    /// Extent of the DEM; lines never leave it.
    dem_rect: CellRect,
    spacing: f64,
}

impl PatchSweep {
    /// `band` is the inclusive ground elevation range a line may overfly.
    pub fn new(patch: &TerrainPatch, dem: &DemRaster, grid: &LocalGrid, band: (f64, f64), spacing: f64) -> Self {
        let cells: Vec<CellRect> = patch.cells.iter().map(|&c| grid.cell_rect(c)).collect();
        let cover: Vec<CellRect> = cells.iter().map(|r| r.inflate(0.5 * spacing)).collect();

        let (r0, r1) = patch
            .cells
            .iter()
            .fold((usize::MAX, 0), |(a, b), c| (a.min(c.0), b.max(c.0)));
        let (c0, c1) = patch
            .cells
            .iter()
            .fold((usize::MAX, 0), |(a, b), c| (a.min(c.1), b.max(c.1)));
        let reach_r = (0.5 * spacing / grid.cell_h_m).ceil() as usize + 1;
        let reach_c = (0.5 * spacing / grid.cell_w_m).ceil() as usize + 1;
        let members: std::collections::BTreeSet<Cell> = patch.cells.iter().copied().collect();
        let mut blockers = Vec::new();
        for row in r0.saturating_sub(reach_r)..=(r1 + reach_r).min(dem.nrows - 1) {
            for col in c0.saturating_sub(reach_c)..=(c1 + reach_c).min(dem.ncols - 1) {
                if members.contains(&(row, col)) {
                    continue;
                }
                let ok = dem.value((row, col)).is_some_and(|v| v >= band.0 && v <= band.1);
                if !ok {
                    // padded so a line grazing the cell edge is treated as crossing it
                    blockers.push(grid.cell_rect((row, col)).inflate(EDGE_GAP_M));
                }
            }
        }
        let dem_rect = CellRect {
            min_e: grid.west_m,
            max_e: grid.west_m + grid.ncols as f64 * grid.cell_w_m,
            max_n: grid.north_m,
            min_n: grid.north_m - grid.nrows as f64 * grid.cell_h_m,
        };
        Self {
            cover,
            cells,
            blockers,
            dem_rect,
            spacing,
        }
    }

    /// Sweep segments for a heading, grouped by pass in order across the
    /// patch. Each segment is `(t0, t1, offset)` along the heading.
    fn passes(&self, heading_deg: f64) -> Vec<(f64, Vec<(f64, f64)>)> {
        let u = heading_unit(heading_deg);
        let r = LocalPoint::new(u.north_m, -u.east_m);
        let (lo, hi) = extent_along(&self.cells, r);
        let offsets = centred_positions(lo, hi, self.spacing);
        let first = offsets[0];
        let index_range = |rect: &CellRect| {
            let (a, b) = extent_along(std::slice::from_ref(rect), r);
            let i0 = ((a - first) / self.spacing).ceil().max(0.0) as usize;
            let i1 = ((b - first) / self.spacing).floor();
            if i1 < 0.0 {
                return 0..0;
            }
            i0..(i1 as usize + 1).min(offsets.len())
        };

        let mut cover: Vec<Vec<(f64, f64)>> = vec![Vec::new(); offsets.len()];
        for rect in &self.cover {
            for i in index_range(rect) {
                if let Some(iv) = rect.clip_line(r * offsets[i], u) {
                    cover[i].push(iv);
                }
            }
        }
        let mut blocked: Vec<Vec<(f64, f64)>> = vec![Vec::new(); offsets.len()];
        for rect in &self.blockers {
            for i in index_range(rect) {
                if let Some(iv) = rect.clip_line(r * offsets[i], u) {
                    blocked[i].push(iv);
                }
            }
        }

        offsets
            .iter()
            .enumerate()
            .map(|(i, &o)| {
                let mut segs = union(std::mem::take(&mut cover[i]));
                segs = subtract(segs, union(std::mem::take(&mut blocked[i])));
                if let Some((a, b)) = self.dem_rect.clip_line(r * o, u) {
                    segs = intersect(segs, (a, b));
                } else {
                    segs.clear();
                }
                segs.retain(|&(a, b)| b - a >= MIN_SEGMENT_M);
                (o, segs)
            })
            .collect()
    }

    /// `(segment count, total length)` of the sweep at a heading.
    pub fn cost(&self, heading_deg: f64) -> (usize, f64) {
        self.passes(heading_deg).iter().fold((0, 0.0), |(n, len), (_, segs)| {
            (n + segs.len(), len + segs.iter().map(|(a, b)| b - a).sum::<f64>())
        })
    }

    /// Segments in serpentine flight order as `(start, end)` points.
    pub fn segments(&self, heading_deg: f64) -> Vec<(LocalPoint, LocalPoint)> {
        let u = heading_unit(heading_deg);
        let r = LocalPoint::new(u.north_m, -u.east_m);
        let mut out = Vec::new();
        let mut forward = true;
        for (o, segs) in self.passes(heading_deg) {
            if segs.is_empty() {
                continue;
            }
            let base = r * o;
            let pts = segs.iter().map(|&(a, b)| (base + u * a, base + u * b));
            if forward {
                out.extend(pts);
            } else {
                out.extend(pts.rev().map(|(s, e)| (e, s)));
            }
            forward = !forward;
        }
        out
    }
}

fn extent_along(rects: &[CellRect], dir: LocalPoint) -> (f64, f64) {
    rects
        .iter()
        .flat_map(|r| r.corners())
        .map(|p| p.dot(dir))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn union(mut ivs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    ivs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(ivs.len());
    for (a, b) in ivs {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Removes closed intervals `cut` (sorted, disjoint) from `keep` (sorted,
/// disjoint). Cut ends stay [`EDGE_GAP_M`] clear of the removed intervals.
fn subtract(keep: Vec<(f64, f64)>, cut: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for (mut a, b) in keep {
        for &(c, d) in &cut {
            if d < a || c > b {
                continue;
            }
            if c - EDGE_GAP_M > a {
                out.push((a, c - EDGE_GAP_M));
            }
            a = a.max(d + EDGE_GAP_M);
        }
        if a < b {
            out.push((a, b));
        }
    }
    out
}

fn intersect(ivs: Vec<(f64, f64)>, (lo, hi): (f64, f64)) -> Vec<(f64, f64)> {
    ivs.into_iter()
        .filter_map(|(a, b)| {
            let (a, b) = (a.max(lo + EDGE_GAP_M), b.min(hi - EDGE_GAP_M));
            (a < b).then_some((a, b))
        })
        .collect()
}

/// Picks the sweep heading: fewest segments, then shortest total length, then
/// smallest angle. An override is returned as is.
pub fn choose_heading(sweep: &PatchSweep, heading_override_deg: Option<f64>) -> f64 {
    if let Some(h) = heading_override_deg {
        return h;
    }
    let mut best = (CANDIDATE_HEADINGS_DEG[0], sweep.cost(CANDIDATE_HEADINGS_DEG[0]));
    for &h in &CANDIDATE_HEADINGS_DEG[1..] {
        let (n, len) = sweep.cost(h);
        let (bn, blen) = best.1;
        let shorter = len < blen * (1.0 - LENGTH_TIE_TOLERANCE);
        if n < bn || (n == bn && shorter) {
            best = (h, (n, len));
        }
    }
    best.0
}

/// Triggers at exactly `spacing`, centred on the segment.
pub fn place_triggers(start: LocalPoint, end: LocalPoint, spacing: f64) -> Vec<LocalPoint> {
    let len = start.distance(end);
    if len == 0.0 {
        return vec![start];
    }
    centred_positions(0.0, len, spacing)
        .into_iter()
        .map(|t| start.lerp(end, t / len))
        .collect()
}

/// Everything needed to plan the patches of one mission.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub dem: &'a DemRaster,
    pub frame: &'a LocalFrame,
    pub cam: &'a CameraModel,
    pub params: &'a PlanParams,
    /// Design height above canopy, from the target profile.
    pub agl_m: f64,
    /// Largest ground elevation range a patch may span.
    pub max_range_m: f64,
}

impl<'a> PlanContext<'a> {
    pub fn new(
        dem: &'a DemRaster,
        frame: &'a LocalFrame,
        cam: &'a CameraModel,
        profile: &TargetProfile,
        params: &'a PlanParams,
    ) -> Result<Self, PlanError> {
        params.validate()?;
        let agl_m = altitude_for_target(cam, profile);
        if agl_m < params.canopy_clearance_m {
            return Err(PlanError::ClearanceFloor {
                agl_m,
                clearance_m: params.canopy_clearance_m,
            });
        }
        let max_range_m = max_elev_range_for_gsd_tolerance(agl_m + params.canopy_clearance_m, params.gsd_tolerance)?;
        Ok(Self {
            dem,
            frame,
            cam,
            params,
            agl_m,
            max_range_m,
        })
    }

    pub fn spacing(&self) -> Result<Spacing, PlanError> {
        Ok(Spacing::new(self.cam, self.agl_m, self.params)?)
    }
}

pub fn plan_patch(
    patch: &TerrainPatch,
    dem: &DemRaster,
    frame: &LocalFrame,
    cam: &CameraModel,
    profile: &TargetProfile,
    params: &PlanParams,
) -> Result<PatchPlan, PlanError> {
    let ctx = PlanContext::new(dem, frame, cam, profile, params)?;
    plan_patch_in(&ctx, patch)
}

/// Plans one patch: altitude, heading, serpentine lines and triggers.
pub fn plan_patch_in(ctx: &PlanContext<'_>, patch: &TerrainPatch) -> Result<PatchPlan, PlanError> {
    if patch.cells.is_empty() {
        return Err(PlanError::Infeasible(format!("patch {} has no cells", patch.id)));
    }
    if patch.elev_range_m() > ctx.max_range_m + 1e-9 {
        return Err(PlanError::PatchRange {
            patch_id: patch.id,
            range_m: patch.elev_range_m(),
            max_m: ctx.max_range_m,
        });
    }
    let spacing = ctx.spacing()?;
    let grid = ctx.dem.local_grid(ctx.frame);
    let band = (patch.elev_max_m - ctx.max_range_m, patch.elev_max_m);
    let sweep = PatchSweep::new(patch, ctx.dem, &grid, band, spacing.line_m);
    let heading = choose_heading(&sweep, ctx.params.heading_override_deg);
    let altitude = patch.elev_max_m + ctx.params.canopy_clearance_m + ctx.agl_m;

    let mut segments = sweep.segments(heading);
    let fallback = segments.is_empty();
    if fallback {
        segments.push(centroid_line(patch, &grid, heading));
    }
    let lines: Vec<FlightLine> = segments
        .into_iter()
        .map(|(start, end)| FlightLine {
            start,
            end,
            altitude_amsl_m: altitude,
            triggers: place_triggers(start, end, spacing.trigger_m),
        })
        .collect();

    let path: Vec<LocalPoint> = lines.iter().flat_map(|l| [l.start, l.end]).collect();
    let est_length_m = path.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>();
    let turns = count_turns(&path);
    Ok(PatchPlan {
        patch_id: patch.id,
        agl_m: ctx.agl_m,
        altitude_amsl_m: altitude,
        heading_deg: heading,
        est_images: lines.iter().map(|l| l.triggers.len()).sum(),
        est_duration_s: est_length_m / ctx.params.cruise_speed_mps + turns as f64 * ctx.params.turn_penalty_s,
        est_length_m,
        lines,
        centroid_fallback: fallback,
    })
}

/// A line through the patch cell nearest the patch centroid, clipped to that cell.
fn centroid_line(patch: &TerrainPatch, grid: &LocalGrid, heading_deg: f64) -> (LocalPoint, LocalPoint) {
    let centres: Vec<LocalPoint> = patch.cells.iter().map(|&c| grid.cell_rect(c).center()).collect();
    let n = centres.len() as f64;
    let centroid = centres
        .iter()
        .fold(LocalPoint::default(), |acc, &p| acc + p * (1.0 / n));
    let (i, _) = centres
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.distance(centroid)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let rect = grid.cell_rect(patch.cells[i]);
    let u = heading_unit(heading_deg);
    let c = rect.center();
    let (a, b) = rect.clip_line(c, u).unwrap_or((0.0, 0.0));
    (c + u * a, c + u * b)
}

/// Interior vertices of a polyline where the heading changes by at least
/// [`TURN_THRESHOLD_DEG`]. Zero-length legs are skipped.
pub fn count_turns(path: &[LocalPoint]) -> usize {
    let mut last: Option<LocalPoint> = None;
    let mut turns = 0;
    for w in path.windows(2) {
        let d = w[1] - w[0];
        let len = d.east_m.hypot(d.north_m);
        if len <= 1e-9 {
            continue;
        }
        let dir = d * (1.0 / len);
        if let Some(prev) = last {
            if is_turn(prev, dir) {
                turns += 1;
            }
        }
        last = Some(dir);
    }
    turns
}

fn is_turn(a: LocalPoint, b: LocalPoint) -> bool {
    a.dot(b).clamp(-1.0, 1.0).acos().to_degrees() >= TURN_THRESHOLD_DEG - 1e-9
}

/// Patch durations, makespan and per-drone loads of an allocation.
pub fn makespan(durations: &[f64], assignment: &[usize], num_drones: usize) -> f64 {
    let mut loads = vec![0.0; num_drones];
    for (&d, &k) in durations.iter().zip(assignment) {
        loads[k] += d;
    }
    loads.into_iter().fold(0.0, f64::max)
}

/// Longest-processing-time-first allocation. Returns the drone index of each
/// patch, in input order.
pub fn allocate_drones(durations: &[f64], num_drones: usize) -> Vec<usize> {
    let k = num_drones.max(1);
    let mut order: Vec<usize> = (0..durations.len()).collect();
    // stable: equal durations keep input order
    order.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]));
    let mut loads = vec![0.0; k];
    let mut assignment = vec![0; durations.len()];
    for i in order {
        let mut best = 0;
        for d in 1..k {
            if loads[d] < loads[best] {
                best = d;
            }
        }
        loads[best] += durations[i];
        assignment[i] = best;
    }
    assignment
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Transit,
    Photo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoutePoint {
    pub point: LocalPoint,
    pub alt_amsl_m: f64,
    pub action: Action,
}

impl RoutePoint {
    pub fn transit(point: LocalPoint, alt_amsl_m: f64) -> Self {
        Self {
            point,
            alt_amsl_m,
            action: Action::Transit,
        }
    }

    fn lerp(&self, other: &RoutePoint, t: f64) -> RoutePoint {
        RoutePoint::transit(
            self.point.lerp(other.point, t),
            self.alt_amsl_m + (other.alt_amsl_m - self.alt_amsl_m) * t,
        )
    }
}

/// Time to fly between two points: horizontal at cruise speed plus vertical at climb rate.
pub fn leg_time(a: &RoutePoint, b: &RoutePoint, params: &PlanParams) -> f64 {
    a.point.distance(b.point) / params.cruise_speed_mps + (b.alt_amsl_m - a.alt_amsl_m).abs() / params.climb_rate_mps
}

/// The route flown over one patch: line endpoints as transits, triggers as photos.
pub fn patch_route(plan: &PatchPlan) -> Vec<RoutePoint> {
    let mut route = Vec::new();
    for line in &plan.lines {
        route.push(RoutePoint::transit(line.start, line.altitude_amsl_m));
        route.extend(line.triggers.iter().map(|&p| RoutePoint {
            point: p,
            alt_amsl_m: line.altitude_amsl_m,
            action: Action::Photo,
        }));
        route.push(RoutePoint::transit(line.end, line.altitude_amsl_m));
    }
    route
}

/// One battery's worth of flying: outbound transit from home, a stretch of
/// the work route, and the return.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sortie {
    pub drone: usize,
    pub work: Vec<RoutePoint>,
    pub duration_s: f64,
    /// Horizontal distance including both home transits.
    pub length_m: f64,
}

/// Turn penalty charged on entering leg `i` of a route.
fn turn_penalties(route: &[RoutePoint], params: &PlanParams) -> Vec<f64> {
    let mut pen = vec![0.0; route.len()];
    let mut last: Option<LocalPoint> = None;
    for i in 0..route.len().saturating_sub(1) {
        let d = route[i + 1].point - route[i].point;
        let len = d.east_m.hypot(d.north_m);
        if len <= 1e-9 {
            continue;
        }
        let dir = d * (1.0 / len);
        if last.is_some_and(|prev| is_turn(prev, dir)) {
            pen[i] = params.turn_penalty_s;
        }
        last = Some(dir);
    }
    pen
}

/// Flies as far along `route` as one battery allows, starting at `route[0]`.
/// Returns the sortie and, if the route is not finished, the index of the next
/// unvisited vertex together with the point where the next sortie resumes.
pub fn fly_sortie(
    route: &[RoutePoint],
    home: &RoutePoint,
    params: &PlanParams,
) -> Result<(Sortie, Option<(usize, RoutePoint)>), PlanError> {
    let transit = |p: &RoutePoint| leg_time(home, p, params);
    let pen = turn_penalties(route, params);
    let mut cur = route[0];
    let mut work = vec![cur];
    let mut elapsed = transit(&cur);
    let mut length = home.point.distance(cur.point);
    if 2.0 * elapsed >= params.max_sortie_s {
        return Err(infeasible_point(&cur, 2.0 * elapsed, params));
    }
    let finish = |work: Vec<RoutePoint>, elapsed: f64, length: f64, last: &RoutePoint| Sortie {
        drone: 0,
        duration_s: elapsed + transit(last),
        length_m: length + last.point.distance(home.point),
        work,
    };

    for i in 0..route.len() - 1 {
        let next = route[i + 1];
        let p = if i == 0 { 0.0 } else { pen[i] };
        let leg = leg_time(&cur, &next, params);
        if elapsed + p + leg + transit(&next) <= params.max_sortie_s {
            elapsed += p + leg;
            length += cur.point.distance(next.point);
            work.push(next);
            cur = next;
            continue;
        }
        let f = |t: f64| elapsed + p + t * leg + transit(&cur.lerp(&next, t));
        if f(0.0) > params.max_sortie_s {
            // the turn itself does not fit; end here and take the turn next sortie
            return Ok((finish(work, elapsed, length, &cur), Some((i + 1, cur))));
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if f(mid) <= params.max_sortie_s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo == 0.0 {
            return Err(infeasible_point(&cur, 2.0 * transit(&cur), params));
        }
        let cut = cur.lerp(&next, lo);
        elapsed += p + lo * leg;
        length += cur.point.distance(cut.point);
        work.push(cut);
        return Ok((finish(work, elapsed, length, &cut), Some((i + 1, cut))));
    }
    Ok((finish(work, elapsed, length, &cur), None))
}

fn infeasible_point(p: &RoutePoint, round_trip_s: f64, params: &PlanParams) -> PlanError {
    PlanError::Infeasible(format!(
        "round trip to ({:.1}, {:.1}) takes {:.1} s, sortie limit is {:.1} s",
        p.point.east_m, p.point.north_m, round_trip_s, params.max_sortie_s
    ))
}

/// Splits a work route into sorties under `max_sortie_s`. The work stretches,
/// joined at their shared cut points, reproduce the route.
pub fn segment_route(route: &[RoutePoint], home: &RoutePoint, params: &PlanParams) -> Result<Vec<Sortie>, PlanError> {
    if route.is_empty() {
        return Ok(Vec::new());
    }
    for p in route {
        let round_trip = 2.0 * leg_time(home, p, params);
        if round_trip >= params.max_sortie_s {
            return Err(infeasible_point(p, round_trip, params));
        }
    }
    let mut sorties = Vec::new();
    let mut rest: Vec<RoutePoint> = route.to_vec();
    loop {
        let (sortie, resume) = fly_sortie(&rest, home, params)?;
        sorties.push(sortie);
        match resume {
            None => break,
            Some((next, at)) => {
                let mut tail = Vec::with_capacity(rest.len() - next + 1);
                tail.push(at);
                tail.extend_from_slice(&rest[next..]);
                rest = tail;
            }
        }
    }
    Ok(sorties)
}

pub fn segment_sorties(plan: &PatchPlan, home: &RoutePoint, params: &PlanParams) -> Result<Vec<Sortie>, PlanError> {
    segment_route(&patch_route(plan), home, params)
}

/// Joins patch routes flown by one drone. Between patches the drone climbs to
/// the higher of the two altitudes, transits, then descends.
pub fn drone_route(plans: &[&PatchPlan]) -> Vec<RoutePoint> {
    let mut route: Vec<RoutePoint> = Vec::new();
    for plan in plans {
        let next = patch_route(plan);
        let (Some(last), Some(first)) = (route.last().copied(), next.first().copied()) else {
            route.extend(next);
            continue;
        };
        let cruise = last.alt_amsl_m.max(first.alt_amsl_m);
        if cruise > last.alt_amsl_m {
            route.push(RoutePoint::transit(last.point, cruise));
        }
        if cruise > first.alt_amsl_m {
            route.push(RoutePoint::transit(first.point, cruise));
        }
        route.extend(next);
    }
    route
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Totals {
    pub length_m: f64,
    pub duration_s: f64,
    pub images: usize,
    pub sorties: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionPlan {
    pub frame: LocalFrame,
    pub params: PlanParams,
    pub camera: CameraModel,
    pub profile: TargetProfile,
    pub agl_m: f64,
    pub max_range_m: f64,
    pub spacing: Spacing,
    pub home: RoutePoint,
    pub patches: Vec<PatchPlan>,
    /// Elevation bounds of each planned patch, parallel to `patches`.
    pub patch_bounds: Vec<(f64, f64)>,
    /// Drone index per entry of `patches`.
    pub assignments: Vec<usize>,
    pub sorties: Vec<Sortie>,
    pub unplannable_cells: Vec<Cell>,
    pub totals: Totals,
    pub warnings: Vec<String>,
}

/// Decomposes the search area, plans each patch, allocates patches to drones
/// and cuts each drone's route into sorties.
pub fn plan_mission(
    aoi: &GeoPolygon,
    dem: &DemRaster,
    cam: &CameraModel,
    profile: &TargetProfile,
    params: &PlanParams,
) -> Result<MissionPlan, PlanError> {
    let frame = aoi.local_frame();
    let ctx = PlanContext::new(dem, &frame, cam, profile, params)?;
    let spacing = ctx.spacing()?;
    let mut warnings = Vec::new();
    if cam.non_square_pixels() {
        warnings.push("camera pixels are not square; ground sampling uses the sensor width".to_string());
    }

    let decomposition = decompose_stairstep(dem, aoi, ctx.max_range_m)?;
    let nodata = decomposition
        .unplannable
        .iter()
        .filter(|&&c| dem.value(c).is_none())
        .count();
    let cliffs = decomposition.unplannable.len() - nodata;
    log::debug!(
        "agl {:.2} m, max patch range {:.2} m: {} patches, {} nodata cells, {} cliff cells",
        ctx.agl_m,
        ctx.max_range_m,
        decomposition.patches.len(),
        nodata,
        cliffs
    );
    if nodata > 0 {
        warnings.push(format!(
            "{nodata} search-area cells have no elevation data and were not planned"
        ));
    }
    if cliffs > 0 {
        warnings.push(format!(
            "{cliffs} cliff cells could not be stair-stepped and were not planned"
        ));
    }
    if decomposition.patches.is_empty() {
        warnings.push("no plannable terrain in the search area; the plan is empty".to_string());
    }

    let patches: Vec<PatchPlan> = decomposition
        .patches
        .par_iter()
        .map(|p| plan_patch_in(&ctx, p))
        .collect::<Result<_, _>>()?;
    for p in patches.iter().filter(|p| p.centroid_fallback) {
        warnings.push(format!(
            "patch {} is narrower than one line; flown as a single line",
            p.patch_id
        ));
    }

    let durations: Vec<f64> = patches.iter().map(|p| p.est_duration_s).collect();
    let assignments = allocate_drones(&durations, params.num_drones);

    let home_geo = params.home.unwrap_or(frame.origin);
    let home_alt = dem.elevation_at(home_geo).ok().unwrap_or_else(|| {
        decomposition
            .patches
            .iter()
            .map(|p| p.elev_min_m)
            .fold(f64::INFINITY, f64::min)
    });
    let home_alt = if home_alt.is_finite() { home_alt } else { 0.0 };
    let home = RoutePoint::transit(frame.project(home_geo)?, home_alt);

    let mut sorties = Vec::new();
    for drone in 0..params.num_drones {
        let mut mine: Vec<&PatchPlan> = patches
            .iter()
            .zip(&assignments)
            .filter(|(_, &d)| d == drone)
            .map(|(p, _)| p)
            .collect();
        mine.sort_by(|a, b| b.est_duration_s.total_cmp(&a.est_duration_s));
        for mut s in segment_route(&drone_route(&mine), &home, params)? {
            s.drone = drone;
            sorties.push(s);
        }
    }

    log::debug!("{} sorties across {} drones", sorties.len(), params.num_drones);
    let totals = Totals {
        length_m: sorties.iter().map(|s| s.length_m).sum(),
        duration_s: sorties.iter().map(|s| s.duration_s).sum(),
        images: patches.iter().map(|p| p.est_images).sum(),
        sorties: sorties.len(),
    };
    Ok(MissionPlan {
        frame,
        params: params.clone(),
        camera: *cam,
        profile: *profile,
        agl_m: ctx.agl_m,
        max_range_m: ctx.max_range_m,
        spacing,
        home,
        patch_bounds: decomposition
            .patches
            .iter()
            .map(|p| (p.elev_min_m, p.elev_max_m))
            .collect(),
        patches,
        assignments,
        sorties,
        unplannable_cells: decomposition.unplannable,
        totals,
        warnings,
    })
}

impl MissionPlan {
    /// Makespan of the drone allocation, in patch-duration seconds.
    pub fn makespan_s(&self) -> f64 {
        let durations: Vec<f64> = self.patches.iter().map(|p| p.est_duration_s).collect();
        makespan(&durations, &self.assignments, self.params.num_drones)
    }

    fn geo(&self, p: LocalPoint) -> Result<GeoPoint, GeoError> {
        self.frame.unproject(p)
    }

    fn waypoint(&self, p: LocalPoint) -> Result<Value, GeoError> {
        let g = self.geo(p)?;
        Ok(json!({"e": p.east_m, "n": p.north_m, "lat": g.lat_deg, "lon": g.lon_deg}))
    }

    /// The mission-plan document shared by the command line and the service.
    pub fn to_document(&self) -> Result<Value, GeoError> {
        let mut patches = Vec::with_capacity(self.patches.len());
        for (i, p) in self.patches.iter().enumerate() {
            let mut lines = Vec::with_capacity(p.lines.len());
            for l in &p.lines {
                let mut geo = Vec::with_capacity(l.triggers.len());
                for &t in &l.triggers {
                    let g = self.geo(t)?;
                    geo.push(json!([g.lat_deg, g.lon_deg]));
                }
                lines.push(json!({
                    "start": self.waypoint(l.start)?,
                    "end": self.waypoint(l.end)?,
                    "triggers": l.triggers.iter().map(|t| json!([t.east_m, t.north_m])).collect::<Vec<_>>(),
                    "triggers_geo": geo,
                }));
            }
            let (lo, hi) = self.patch_bounds[i];
            patches.push(json!({
                "id": p.patch_id,
                "agl_m": p.agl_m,
                "altitude_amsl_m": p.altitude_amsl_m,
                "heading_deg": p.heading_deg,
                "elev_min_m": lo,
                "elev_max_m": hi,
                "centroid_fallback": p.centroid_fallback,
                "lines": lines,
                "est": {
                    "length_m": p.est_length_m,
                    "duration_s": p.est_duration_s,
                    "images": p.est_images,
                },
            }));
        }

        let mut sorties = Vec::with_capacity(self.sorties.len());
        let mut per_drone: BTreeMap<usize, usize> = BTreeMap::new();
        for s in &self.sorties {
            let index = per_drone.entry(s.drone).or_default();
            let mut work = Vec::with_capacity(s.work.len());
            for w in &s.work {
                let mut v = self.waypoint(w.point)?;
                v["alt_amsl_m"] = json!(w.alt_amsl_m);
                v["action"] = json!(w.action);
                work.push(v);
            }
            sorties.push(json!({
                "drone": s.drone,
                "sortie": *index,
                "duration_s": s.duration_s,
                "length_m": s.length_m,
                "work": work,
            }));
            *index += 1;
        }

        let mut home = self.waypoint(self.home.point)?;
        home["alt_amsl_m"] = json!(self.home.alt_amsl_m);
        let band = acceptable_px_band(&self.profile);
        Ok(json!({
            "frame_origin": self.frame.origin,
            "params_echo": {
                "params": self.params,
                "camera": self.camera.spec(),
                "target_profile": self.profile,
                "derived": {
                    "agl_m": self.agl_m,
                    "max_elev_range_m": self.max_range_m,
                    "line_spacing_m": self.spacing.line_m,
                    "trigger_spacing_m": self.spacing.trigger_m,
                    "acceptable_px_band": [band.0, band.1],
                    "camera_pitch_deg": defaults::CAMERA_PITCH_DEG,
                },
                "defaults": defaults::table(),
            },
            "home": home,
            "patches": patches,
            "assignments": self
                .patches
                .iter()
                .zip(&self.assignments)
                .map(|(p, &d)| json!({"patch_id": p.patch_id, "drone": d}))
                .collect::<Vec<_>>(),
            "sorties": sorties,
            "unplannable_cells": self.unplannable_cells.len(),
            "totals": self.totals,
            "warnings": self.warnings,
        }))
    }

    pub fn to_json_string(&self) -> Result<String, GeoError> {
        let mut s = serde_json::to_string_pretty(&self.to_document()?).expect("plan documents serialize");
        s.push('\n');
        Ok(s)
    }

    /// Waypoint CSV for each sortie as `(drone, sortie index, text)`.
    pub fn waypoint_csvs(&self) -> Result<Vec<(usize, usize, String)>, GeoError> {
        let mut out = Vec::with_capacity(self.sorties.len());
        let mut per_drone: BTreeMap<usize, usize> = BTreeMap::new();
        for s in &self.sorties {
            let index = per_drone.entry(s.drone).or_default();
            out.push((s.drone, *index, self.sortie_csv(s)?));
            *index += 1;
        }
        Ok(out)
    }

    fn sortie_csv(&self, sortie: &Sortie) -> Result<String, GeoError> {
        let mut points = Vec::with_capacity(sortie.work.len() + 2);
        points.push(self.home);
        points.extend_from_slice(&sortie.work);
        points.push(self.home);

        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["lat", "lon", "alt_amsl_m", "heading_deg", "action"])
            .expect("in-memory csv");
        let mut heading = 0.0;
        for (i, p) in points.iter().enumerate() {
            // heading of travel leaving this point; vertical legs keep the last one
            if let Some(next) = points.get(i + 1) {
                if p.point.distance(next.point) > 1e-9 {
                    heading = bearing_deg(p.point, next.point);
                }
            }
            let g = self.geo(p.point)?;
            let action = match p.action {
                Action::Transit => "transit",
                Action::Photo => "photo",
            };
            wtr.write_record([
                format!("{:.8}", g.lat_deg),
                format!("{:.8}", g.lon_deg),
                format!("{:.2}", p.alt_amsl_m),
                format!("{heading:.2}"),
                action.to_string(),
            ])
            .expect("in-memory csv");
        }
        Ok(String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("csv output is utf-8"))
    }
}
