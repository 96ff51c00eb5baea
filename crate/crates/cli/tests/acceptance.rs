//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail. Every oracle here is computed independently of the
//! library code it checks.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use clap::Parser;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use sarplan::audit::{self, AuditThresholds, FindingCode, ManifestFormat};
use sarplan::camera::{altitude_for_target, projected_target_px};
use sarplan::georef::{self, SrtDialect, SrtEntry, SrtTrack};
use sarplan::planner::{allocate_drones, drone_route, makespan, plan_mission, Action, PatchPlan, RoutePoint};
use sarplan::terrain::{decompose_stairstep, parse_asc_dem};
use sarplan::{CameraModel, CameraSpec, DemRaster, GeoPoint, GeoPolygon, MissionPlan, PlanParams, TargetProfile};
use sarplan_cli::service::{router, AppState};
use sarplan_cli::{load_dem, run, Cli};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const R_EARTH: f64 = 6_378_137.0;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

fn survey_camera() -> CameraModel {
    CameraModel::from_json(&read("camera.json")).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Independent equirectangular projection about `origin`.
fn to_metres(origin: (f64, f64), lat: f64, lon: f64) -> (f64, f64) {
    let k = R_EARTH * std::f64::consts::PI / 180.0;
    ((lon - origin.1) * k * origin.0.to_radians().cos(), (lat - origin.0) * k)
}

fn from_metres(origin: (f64, f64), e: f64, n: f64) -> (f64, f64) {
    let k = R_EARTH * std::f64::consts::PI / 180.0;
    (origin.0 + n / k, origin.1 + e / (k * origin.0.to_radians().cos()))
}

/// Even-odd crossing test.
fn inside(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut odd = false;
    let mut j = ring.len() - 1;
    for i in 0..ring.len() {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > y) != (yj > y) && x < xi + (y - yi) * (xj - xi) / (yj - yi) {
            odd = !odd;
        }
        j = i;
    }
    odd
}

fn distance_to_ring(ring: &[(f64, f64)], x: f64, y: f64) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..ring.len() {
        let (ax, ay) = ring[i];
        let (bx, by) = ring[(i + 1) % ring.len()];
        let (dx, dy) = (bx - ax, by - ay);
        let t = (((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
        best = best.min((x - ax - t * dx).hypot(y - ay - t * dy));
    }
    best
}

fn polygon_from_metres(origin: (f64, f64), ring: &[(f64, f64)]) -> GeoPolygon {
    let pts = ring
        .iter()
        .map(|&(e, n)| {
            let (lat, lon) = from_metres(origin, e, n);
            GeoPoint::new(lat, lon).unwrap()
        })
        .collect();
    GeoPolygon::new(pts, vec![]).unwrap()
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn ring_area(ring: &[(f64, f64)]) -> f64 {
    let mut a = 0.0;
    for i in 0..ring.len() {
        let (x0, y0) = ring[i];
        let (x1, y1) = ring[(i + 1) % ring.len()];
        a += x0 * y1 - x1 * y0;
    }
    0.5 * a.abs()
}

/// Random convex ring in metres with the given area, centred near the origin.
fn random_convex(rng: &mut ChaCha8Rng, area_m2: f64) -> Vec<(f64, f64)> {
    let aspect = rng.gen_range(1.0..3.0f64);
    let rot = rng.gen_range(0.0..std::f64::consts::PI);
    let n = rng.gen_range(6..16);
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let r = rng.gen_range(0.6..1.0f64);
            let (x, y) = (r * aspect * t.cos(), r * t.sin());
            (x * rot.cos() - y * rot.sin(), x * rot.sin() + y * rot.cos())
        })
        .collect();
    let hull = convex_hull(pts);
    let k = (area_m2 / ring_area(&hull)).sqrt();
    hull.into_iter().map(|(x, y)| (x * k, y * k)).collect()
}

fn flat_dem(centre: (f64, f64), half_span_deg: f64, cellsize: f64, elev: f64) -> DemRaster {
    let n = (2.0 * half_span_deg / cellsize).round() as usize;
    DemRaster::from_fn(
        n,
        n,
        centre.1 - half_span_deg,
        centre.0 - half_span_deg,
        cellsize,
        |_, _| elev,
    )
    .unwrap()
}

/// Smooth random hills: a sum of Gaussian bumps on a base plane.
fn hilly_dem(seed: u64, centre: (f64, f64), n: usize, cellsize: f64, relief: f64) -> DemRaster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..8)
        .map(|_| {
            (
                rng.gen_range(0.0..n as f64),
                rng.gen_range(0.0..n as f64),
                rng.gen_range(n as f64 / 12.0..n as f64 / 4.0),
                rng.gen_range(-relief..relief),
            )
        })
        .collect();
    let half = n as f64 * cellsize / 2.0;
    DemRaster::from_fn(n, n, centre.1 - half, centre.0 - half, cellsize, |r, c| {
        let v: f64 = bumps
            .iter()
            .map(|&(br, bc, s, h)| h * (-((r as f64 - br).powi(2) + (c as f64 - bc).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        ((300.0 + v) * 100.0).round() / 100.0
    })
    .unwrap()
}

/// Depth of image coverage over 1 m cells of the search area, from the
/// plan's trigger points and footprints derived here from the camera spec.
struct CoverageOracle {
    ge1_all: f64,
    ge2_interior: f64,
    aoi_cells: usize,
    interior_cells: usize,
}

fn coverage_oracle(plan: &MissionPlan, ring_m: &[(f64, f64)], spec: &CameraSpec, margin_m: f64) -> CoverageOracle {
    let agl = plan.agl_m;
    let (w, h) = (
        agl * spec.sensor_w_mm / spec.focal_mm,
        agl * spec.sensor_h_mm / spec.focal_mm,
    );
    let (min_x, max_x) = ring_m
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (min_y, max_y) = ring_m
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let x0 = min_x.floor();
    let y0 = min_y.floor();
    let nx = (max_x.ceil() - x0) as usize;
    let ny = (max_y.ceil() - y0) as usize;
    let mut depth = vec![0u16; nx * ny];
    for p in &plan.patches {
        for line in &p.lines {
            let (dx, dy) = (
                line.end.east_m - line.start.east_m,
                line.end.north_m - line.start.north_m,
            );
            let len = dx.hypot(dy);
            let (ux, uy) = if len > 0.0 { (dx / len, dy / len) } else { (0.0, 1.0) };
            let reach = 0.5 * w.hypot(h) + 1.0;
            for t in &line.triggers {
                let (cx, cy) = (t.east_m, t.north_m);
                let i0 = ((cx - reach - x0).floor().max(0.0)) as usize;
                let i1 = ((cx + reach - x0).ceil().max(0.0) as usize).min(nx);
                let j0 = ((cy - reach - y0).floor().max(0.0)) as usize;
                let j1 = ((cy + reach - y0).ceil().max(0.0) as usize).min(ny);
                for j in j0..j1 {
                    for i in i0..i1 {
                        let (px, py) = (x0 + i as f64 + 0.5 - cx, y0 + j as f64 + 0.5 - cy);
                        let along = px * ux + py * uy;
                        let across = px * uy - py * ux;
                        if along.abs() <= 0.5 * h && across.abs() <= 0.5 * w {
                            depth[j * nx + i] += 1;
                        }
                    }
                }
            }
        }
    }
    let (mut cells, mut ge1, mut interior, mut ge2) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (x0 + i as f64 + 0.5, y0 + j as f64 + 0.5);
            if !inside(ring_m, x, y) {
                continue;
            }
            cells += 1;
            let d = depth[j * nx + i];
            ge1 += usize::from(d >= 1);
            if distance_to_ring(ring_m, x, y) >= margin_m {
                interior += 1;
                ge2 += usize::from(d >= 2);
            }
        }
    }
    CoverageOracle {
        ge1_all: ge1 as f64 / cells as f64,
        ge2_interior: ge2 as f64 / interior.max(1) as f64,
        aoi_cells: cells,
        interior_cells: interior,
    }
}

/// Cells that count as interior lie at least this far inside the boundary.
const INTERIOR_MARGIN_M: f64 = 10.0;

fn coverage_guarantee() -> Outcome {
    let started = Instant::now();
    let centre = (34.5, 135.8);
    let dem = flat_dem(centre, 0.03, 0.0001, 50.0);
    let spec = *survey_camera().spec();
    let cam = survey_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst1, mut worst2) = (1.0f64, 1.0f64);
    let mut cells = 0;
    for k in 0..25 {
        let area = rng.gen_range(0.1e6..2.0e6);
        let ring = random_convex(&mut rng, area);
        let aoi = polygon_from_metres(centre, &ring);
        let plan = plan_mission(&aoi, &dem, &cam, &TargetProfile::default(), &PlanParams::default())
            .map_err(|e| format!("AOI {k}: {e}"))?;
        // re-express the ring in the plan's own frame
        let origin = (plan.frame.origin.lat_deg, plan.frame.origin.lon_deg);
        let ring_local: Vec<(f64, f64)> = aoi
            .exterior()
            .iter()
            .map(|p| to_metres(origin, p.lat_deg, p.lon_deg))
            .collect();
        let o = coverage_oracle(&plan, &ring_local, &spec, INTERIOR_MARGIN_M);
        ensure(o.interior_cells > 0, || format!("AOI {k} has no interior"))?;
        cells += o.aoi_cells;
        worst1 = worst1.min(o.ge1_all);
        worst2 = worst2.min(o.ge2_interior);
        ensure(o.ge1_all >= 1.0, || {
            format!("AOI {k} ({area:.0} m2): depth>=1 on {:.6} of cells", o.ge1_all)
        })?;
        ensure(o.ge2_interior >= 0.99, || {
            format!(
                "AOI {k} ({area:.0} m2): interior depth>=2 on {:.6} of cells",
                o.ge2_interior
            )
        })?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "25 AOIs, {cells} cells; min depth>=1 {worst1:.4}, min interior ({INTERIOR_MARGIN_M} m) depth>=2 {worst2:.4}; {secs:.1} s"
    ))
}

fn stair_step() -> Outcome {
    let cam = survey_camera();
    let spec = *cam.spec();
    let profile = TargetProfile::default();
    let params = PlanParams::default();
    let centre = (35.2, 138.6);
    let (mut patches_total, mut samples, mut worst_dev) = (0usize, 0usize, 0.0f64);
    let (mut px_lo, mut px_hi) = (f64::MAX, f64::MIN);
    for seed in 0..10u64 {
        let dem = hilly_dem(seed, centre, 90, 0.0001, 40.0);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let area = rng.gen_range(0.15e6..0.35e6);
        let ring = random_convex(&mut rng, area);
        let aoi = polygon_from_metres(centre, &ring);
        let plan = plan_mission(&aoi, &dem, &cam, &profile, &params).map_err(|e| format!("DEM {seed}: {e}"))?;

        // decomposition: elevation bound and partition of the AOI cells
        let max_range = params.gsd_tolerance * (plan.agl_m + params.canopy_clearance_m);
        let decomposition = decompose_stairstep(&dem, &aoi, max_range).map_err(|e| e.to_string())?;
        let origin = (plan.frame.origin.lat_deg, plan.frame.origin.lon_deg);
        let ring_local: Vec<(f64, f64)> = aoi
            .exterior()
            .iter()
            .map(|p| to_metres(origin, p.lat_deg, p.lon_deg))
            .collect();
        let mut expected = BTreeSet::new();
        for r in 0..dem.nrows {
            for c in 0..dem.ncols {
                let lat = dem.yllcorner + (dem.nrows - r) as f64 * dem.cellsize - 0.5 * dem.cellsize;
                let lon = dem.xllcorner + (c as f64 + 0.5) * dem.cellsize;
                let (x, y) = to_metres(origin, lat, lon);
                if inside(&ring_local, x, y) {
                    expected.insert((r, c));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for p in &decomposition.patches {
            let vals: Vec<f64> = p.cells.iter().map(|&c| dem.value(c).unwrap()).collect();
            let range = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
            ensure(range <= max_range + 1e-9, || {
                format!("DEM {seed}: patch {} spans {range} m", p.id)
            })?;
            for &c in &p.cells {
                ensure(seen.insert(c), || format!("DEM {seed}: cell {c:?} in two patches"))?;
            }
        }
        for &c in &decomposition.unplannable {
            ensure(seen.insert(c), || {
                format!("DEM {seed}: unplannable cell {c:?} also in a patch")
            })?;
        }
        ensure(seen == expected, || {
            format!(
                "DEM {seed}: {} decomposed cells vs {} AOI cells",
                seen.len(),
                expected.len()
            )
        })?;
        patches_total += decomposition.patches.len();

        // AGL along every flight line, sampled every metre, against nearest-cell ground
        let nominal = plan.agl_m + params.canopy_clearance_m;
        for p in &plan.patches {
            for line in &p.lines {
                let len = line.length_m();
                let steps = (len.ceil() as usize).max(1);
                for s in 0..=steps {
                    let q = line.start.lerp(line.end, s as f64 / steps as f64);
                    let (lat, lon) = from_metres(origin, q.east_m, q.north_m);
                    let row = ((dem.yllcorner + dem.nrows as f64 * dem.cellsize - lat) / dem.cellsize).floor() as usize;
                    let col = ((lon - dem.xllcorner) / dem.cellsize).floor() as usize;
                    let ground = dem
                        .value((row, col))
                        .ok_or_else(|| format!("DEM {seed}: line over nodata"))?;
                    let agl = line.altitude_amsl_m - ground;
                    let dev = (agl - nominal) / nominal;
                    worst_dev = worst_dev.max(dev.abs());
                    ensure(dev.abs() <= params.gsd_tolerance + 1e-9, || {
                        format!(
                            "DEM {seed} patch {}: AGL {agl:.3} m vs nominal {nominal:.3} m",
                            p.patch_id
                        )
                    })?;
                    let px = profile.target_size_m * spec.focal_mm * spec.image_w_px as f64 / (spec.sensor_w_mm * agl);
                    px_lo = px_lo.min(px);
                    px_hi = px_hi.max(px);
                    ensure((41.0..=87.0).contains(&px), || format!("DEM {seed}: target {px:.2} px"))?;
                    samples += 1;
                }
            }
        }
    }
    Ok(format!(
        "10 DEMs, {patches_total} patches, {samples} AGL samples; worst deviation {:.2}%, target {px_lo:.1}..{px_hi:.1} px",
        worst_dev * 100.0
    ))
}

fn altitude_inverse() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let cam = CameraModel::new(CameraSpec {
            focal_mm: rng.gen_range(2.0..50.0),
            sensor_w_mm: rng.gen_range(4.0..36.0),
            sensor_h_mm: rng.gen_range(3.0..24.0),
            image_w_px: rng.gen_range(640..9000),
            image_h_px: rng.gen_range(480..6000),
            shutter_s: None,
        })
        .map_err(|e| e.to_string())?;
        let profile =
            TargetProfile::new(rng.gen_range(0.2..3.0), 64.0, rng.gen_range(1.0..40.0)).map_err(|e| e.to_string())?;
        let h = altitude_for_target(&cam, &profile);
        let px = projected_target_px(&cam, h, profile.target_size_m).map_err(|e| e.to_string())?;
        worst = worst.max((px - 64.0).abs());
    }
    ensure(worst <= 0.5, || format!("worst round trip error {worst} px"))?;
    // 0.7 m * 8.8 mm * 5472 px / (13.2 mm * 64 px)
    let desk: f64 = 0.7 * 8.8 * 5472.0 / (13.2 * 64.0);
    let h = altitude_for_target(&survey_camera(), &TargetProfile::default());
    ensure((h - 39.9).abs() <= 0.1 && (desk - 39.9).abs() <= 0.1, || {
        format!("worked camera gives {h} m")
    })?;
    Ok(format!(
        "1000 combinations, worst error {worst:.2e} px; worked camera {h:.3} m"
    ))
}

fn fixture_plan_inputs() -> (GeoPolygon, DemRaster) {
    (
        GeoPolygon::from_geojson_str(&read("aoi_1km2.geojson")).unwrap(),
        load_dem(&fixture("flat_dem.asc")).unwrap(),
    )
}

fn image_count() -> Outcome {
    let (aoi, dem) = fixture_plan_inputs();
    let plan = plan_mission(
        &aoi,
        &dem,
        &survey_camera(),
        &TargetProfile::default(),
        &PlanParams::default(),
    )
    .map_err(|e| e.to_string())?;
    let n = plan.totals.images as f64;
    ensure((n - 2600.0).abs() <= 260.0, || format!("{n} images"))?;
    ensure((1000.0..=50_000.0).contains(&n), || format!("{n} images"))?;
    Ok(format!("{n} images for 1 km2"))
}

fn brute_force(durations: &[f64], k: usize) -> f64 {
    fn go(i: usize, d: &[f64], loads: &mut [f64], best: &mut f64) {
        let current = loads.iter().cloned().fold(0.0, f64::max);
        if current >= *best {
            return;
        }
        if i == d.len() {
            *best = current;
            return;
        }
        let mut tried = Vec::new();
        for j in 0..loads.len() {
            // drones with equal load are interchangeable
            if tried.contains(&loads[j]) {
                continue;
            }
            tried.push(loads[j]);
            loads[j] += d[i];
            go(i + 1, d, loads, best);
            loads[j] -= d[i];
        }
    }
    let mut best = f64::INFINITY;
    go(0, durations, &mut vec![0.0; k], &mut best);
    best
}

fn allocation_quality() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut instances = 0;
    for k in [2usize, 3] {
        for _ in 0..300 {
            let n = rng.gen_range(1..=12);
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(10.0..1200.0)).collect();
            let assignment = allocate_drones(&d, k);
            let lpt = makespan(&d, &assignment, k);
            let opt = brute_force(&d, k);
            let bound = 4.0 / 3.0 - 1.0 / (3.0 * k as f64);
            worst = worst.max(lpt / opt);
            ensure(lpt <= bound * opt + 1e-9, || {
                format!("k={k} {d:?}: LPT {lpt} vs optimum {opt}")
            })?;
            instances += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{instances} instances, worst LPT/optimum {worst:.4}; {secs:.2} s"
    ))
}

fn turn_at(a: &RoutePoint, b: &RoutePoint, prev: Option<(f64, f64)>) -> (Option<(f64, f64)>, bool) {
    let (dx, dy) = (b.point.east_m - a.point.east_m, b.point.north_m - a.point.north_m);
    let len = dx.hypot(dy);
    if len <= 1e-9 {
        return (prev, false);
    }
    let dir = (dx / len, dy / len);
    let turn = prev.is_some_and(|p| (p.0 * dir.0 + p.1 * dir.1).clamp(-1.0, 1.0).acos().to_degrees() >= 45.0 - 1e-9);
    (Some(dir), turn)
}

/// Flight time of home -> work -> home, recomputed from the points alone.
fn sortie_time(work: &[RoutePoint], home: &RoutePoint, p: &PlanParams) -> f64 {
    let leg = |a: &RoutePoint, b: &RoutePoint| {
        (b.point.east_m - a.point.east_m).hypot(b.point.north_m - a.point.north_m) / p.cruise_speed_mps
            + (b.alt_amsl_m - a.alt_amsl_m).abs() / p.climb_rate_mps
    };
    let mut t = leg(home, &work[0]) + leg(&work[work.len() - 1], home);
    let mut dir = None;
    for w in work.windows(2) {
        let (d, turn) = turn_at(&w[0], &w[1], dir);
        dir = d;
        t += leg(&w[0], &w[1]) + if turn { p.turn_penalty_s } else { 0.0 };
    }
    t
}

/// Checks that the sorties' work stretches, joined at shared cut points,
/// reproduce `original` vertex for vertex with cuts lying on its legs.
fn rejoins(work: &[&[RoutePoint]], original: &[RoutePoint]) -> Result<(), String> {
    let mut joined: Vec<RoutePoint> = Vec::new();
    for (i, w) in work.iter().enumerate() {
        if i > 0 {
            ensure(joined.last() == w.first(), || {
                "sortie does not resume where the last one ended".into()
            })?;
        }
        joined.extend_from_slice(&w[usize::from(i > 0)..]);
    }
    let mut i = 0;
    for p in &joined {
        if i < original.len() && p == &original[i] {
            i += 1;
            continue;
        }
        ensure(i > 0 && i < original.len() && p.action == Action::Transit, || {
            format!("unexpected point {p:?}")
        })?;
        let (a, b) = (&original[i - 1], &original[i]);
        let d = |u: &RoutePoint, v: &RoutePoint| {
            (u.point.east_m - v.point.east_m).hypot(u.point.north_m - v.point.north_m)
                + (u.alt_amsl_m - v.alt_amsl_m).abs()
        };
        ensure((d(a, p) + d(p, b) - d(a, b)).abs() <= 1e-6, || {
            format!("cut point {p:?} is off its leg")
        })?;
    }
    ensure(i == original.len(), || {
        format!("{i} of {} route points flown", original.len())
    })
}

fn sortie_safety() -> Outcome {
    let cam = survey_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let centre = (-12.3, 44.1);
    let flat = flat_dem(centre, 0.012, 0.0001, 20.0);
    let (mut sorties, mut cuts) = (0usize, 0usize);
    for k in 0..100u64 {
        let hilly;
        let dem = if k % 2 == 0 {
            &flat
        } else {
            hilly = hilly_dem(k, centre, 200, 0.0001, 6.0);
            &hilly
        };
        let area = rng.gen_range(0.02e6..0.3e6);
        let ring = random_convex(&mut rng, area);
        let aoi = polygon_from_metres(centre, &ring);
        let params = PlanParams {
            num_drones: rng.gen_range(1..=4),
            max_sortie_s: rng.gen_range(240.0..1200.0),
            cruise_speed_mps: rng.gen_range(5.0..15.0),
            turn_penalty_s: rng.gen_range(0.0..12.0),
            ..PlanParams::default()
        };
        let plan =
            plan_mission(&aoi, dem, &cam, &TargetProfile::default(), &params).map_err(|e| format!("plan {k}: {e}"))?;
        for drone in 0..params.num_drones {
            let mut mine: Vec<&PatchPlan> = plan
                .patches
                .iter()
                .zip(&plan.assignments)
                .filter(|(_, &d)| d == drone)
                .map(|(p, _)| p)
                .collect();
            mine.sort_by(|a, b| b.est_duration_s.total_cmp(&a.est_duration_s));
            let original = drone_route(&mine);
            let flown: Vec<&[RoutePoint]> = plan
                .sorties
                .iter()
                .filter(|s| s.drone == drone)
                .map(|s| s.work.as_slice())
                .collect();
            for s in plan.sorties.iter().filter(|s| s.drone == drone) {
                let t = sortie_time(&s.work, &plan.home, &params);
                ensure(t <= params.max_sortie_s + 1e-6, || {
                    format!("plan {k}: sortie takes {t} s of {}", params.max_sortie_s)
                })?;
                ensure((t - s.duration_s).abs() <= 1e-6 * t.max(1.0), || {
                    format!("plan {k}: sortie reports {} s, recomputed {t} s", s.duration_s)
                })?;
            }
            cuts += flown.len().saturating_sub(1);
            rejoins(&flown, &original).map_err(|e| format!("plan {k} drone {drone}: {e}"))?;
        }
        sorties += plan.sorties.len();
    }
    Ok(format!("100 plans, {sorties} sorties, {cuts} mid-route cuts"))
}

fn parser_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..200 {
        let (nc, nr) = (rng.gen_range(2..30), rng.gen_range(2..30));
        let values: Vec<f64> = (0..nc * nr)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    -9999.0
                } else {
                    rng.gen_range(-400.0..9000.0f64)
                }
            })
            .collect();
        let dem = DemRaster::new(
            nc,
            nr,
            rng.gen_range(-180.0..170.0),
            rng.gen_range(-80.0..70.0),
            rng.gen_range(1e-5..0.01),
            -9999.0,
            values,
        )
        .map_err(|e| e.to_string())?;
        let text = dem.to_asc_string();
        let back = parse_asc_dem(&text).map_err(|e| format!("DEM {k}: {e}"))?;
        ensure(back == dem, || format!("DEM {k} changed on round trip"))?;
        ensure(back.to_asc_string() == text, || {
            format!("DEM {k} text changed on round trip")
        })?;
    }
    for k in 0..200 {
        let mut t = 0u64;
        let entries: Vec<SrtEntry> = (0..rng.gen_range(1..40))
            .map(|_| {
                t += rng.gen_range(1..2000);
                let start = t;
                t += rng.gen_range(1..2000);
                SrtEntry {
                    start_ms: start,
                    end_ms: t,
                    lat: rng.gen_range(-90.0..=90.0),
                    lon: rng.gen_range(-180.0..=180.0),
                    alt_m: rng.gen_range(-100.0..5000.0),
                }
            })
            .collect();
        let track = SrtTrack { entries };
        for dialect in [SrtDialect::Bracketed, SrtDialect::GpsTriple] {
            let text = georef::to_srt(&track, dialect);
            let back = georef::parse_srt(&text).map_err(|e| format!("SRT {k}: {e}"))?;
            ensure(back.track == track && back.skipped_blocks == 0, || {
                format!("SRT {k} {dialect:?} changed")
            })?;
            ensure(georef::to_srt(&back.track, dialect) == text, || {
                format!("SRT {k} {dialect:?} text changed")
            })?;
        }
    }
    let a = georef::parse_srt(&read("flight_dialect_a.srt")).map_err(|e| e.to_string())?;
    let b = georef::parse_srt(&read("flight_dialect_b.srt")).map_err(|e| e.to_string())?;
    ensure(a.track == b.track, || "dialect fixtures decode differently".into())?;
    ensure(a.track.entries.len() == 12, || {
        format!("{} fixture entries", a.track.entries.len())
    })?;
    Ok(format!(
        "200 DEMs, 200 tracks x 2 dialects; fixtures agree on {} entries",
        a.track.entries.len()
    ))
}

fn audit_fixture(name: &str) -> Result<String, String> {
    let records =
        audit::load_manifest(&read(name), ManifestFormat::from_path(Path::new(name))).map_err(|e| e.to_string())?;
    let aoi = GeoPolygon::from_geojson_str(&read("aoi_small.geojson")).map_err(|e| e.to_string())?;
    let report = audit::run_audit(
        &records,
        Some(&aoi),
        &survey_camera(),
        &TargetProfile::default(),
        &AuditThresholds::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(report.to_json_string())
}

fn audit_completeness() -> Outcome {
    let seeded = audit_fixture("manifest_seeded.csv")?;
    let v: Value = serde_json::from_str(&seeded).unwrap();
    let codes: Vec<String> = v["findings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["code"].as_str().unwrap().to_string())
        .collect();
    for code in FindingCode::ALL {
        let n = codes.iter().filter(|c| *c == code.as_str()).count();
        ensure(n == 1, || format!("seeded fixture has {n} {} findings", code.as_str()))?;
    }
    ensure(codes.len() == FindingCode::ALL.len(), || {
        format!("seeded fixture has {} findings", codes.len())
    })?;
    for clean in ["manifest_clean.csv", "manifest_clean.jsonl"] {
        let report: Value = serde_json::from_str(&audit_fixture(clean)?).unwrap();
        let n = report["findings"].as_array().unwrap().len();
        ensure(n == 0, || format!("{clean} has {n} findings"))?;
    }
    for _ in 0..3 {
        ensure(audit_fixture("manifest_seeded.csv")? == seeded, || {
            "report bytes differ between runs".into()
        })?;
    }
    Ok(format!(
        "seeded: one finding for each of {} codes; clean: none; reports byte-stable",
        codes.len()
    ))
}

fn solar_check() -> Outcome {
    // geometric elevations from the NREL solar position algorithm
    let refs = [
        ("2003-10-17T19:30:30Z", 39.742476, -105.1786, 39.872),
        ("2023-12-21T18:00:00Z", 40.0, -75.0, 24.937),
        ("2023-06-21T12:00:00Z", 51.5, 0.0, 61.935),
    ];
    let mut worst = 0.0f64;
    for (t, lat, lon, expected) in refs {
        let time = audit::parse_timestamp(t).unwrap();
        let e = audit::solar_elevation(time, GeoPoint::new(lat, lon).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((e - expected).abs());
        ensure((e - expected).abs() <= 0.5, || format!("{t}: {e:.3} vs {expected}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_identity = 0.0f64;
    for _ in 0..10_000 {
        let lat = rng.gen_range(-90.0..=90.0f64);
        let decl = rng.gen_range(-23.45..=23.45f64);
        let e = audit::elevation_from_hour_angle(lat, decl, 0.0);
        worst_identity = worst_identity.max((e - (90.0 - (lat - decl).abs())).abs());
    }
    ensure(worst_identity <= 1e-9, || {
        format!("H = 0 identity off by {worst_identity}")
    })?;
    Ok(format!(
        "worst almanac error {worst:.3} deg; H = 0 identity within {worst_identity:.1e}"
    ))
}

fn cli_service_parity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("plan.json");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let args = [
        "sarplan".to_string(),
        "plan".into(),
        "--aoi".into(),
        s(&fixture("aoi_1km2.geojson")),
        "--dem".into(),
        s(&fixture("flat_dem.asc")),
        "--camera".into(),
        s(&fixture("camera.json")),
        "--target-size".into(),
        "0.7".into(),
        "--target-px".into(),
        "64".into(),
        "--drones".into(),
        "3".into(),
        "--out".into(),
        s(&out),
    ];
    run(&Cli::parse_from(args)).map_err(|e| e.to_string())?;
    let from_cli = std::fs::read(&out).map_err(|e| e.to_string())?;

    let body = json!({
        "aoi": serde_json::from_str::<Value>(&read("aoi_1km2.geojson")).unwrap(),
        "camera": serde_json::from_str::<Value>(&read("camera.json")).unwrap(),
        "target_profile": { "target_size_m": 0.7, "bbox_mean_px": 64.0, "bbox_std_px": 23.0 },
        "params": { "num_drones": 3 },
    });
    let app = router(Arc::new(AppState {
        dem: load_dem(&fixture("flat_dem.asc")).map_err(|e| e.to_string())?,
        dem_id: "flat_dem".into(),
    }));
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    let (status, from_service) = rt.block_on(async {
        let req = Request::post("/api/plan")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let resp = app.oneshot(req).await.unwrap();
        let status = resp.status();
        (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
    });
    ensure(status == StatusCode::OK, || format!("service answered {status}"))?;
    ensure(from_cli == from_service, || {
        format!("documents differ ({} vs {} bytes)", from_cli.len(), from_service.len())
    })?;
    Ok(format!("{} byte plan document identical", from_cli.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("coverage guarantee", coverage_guarantee),
        ("stair-step correctness", stair_step),
        ("altitude inverse", altitude_inverse),
        ("image-count sanity", image_count),
        ("allocation quality", allocation_quality),
        ("sortie safety", sortie_safety),
        ("parser round-trips", parser_round_trips),
        ("audit completeness", audit_completeness),
        ("solar check", solar_check),
        ("CLI/service parity", cli_service_parity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
