//! Elevation rasters and stair-step decomposition of a search area into
//! patches of roughly level ground, each of which can be flown at one
//! constant altitude.

use std::cmp::Ordering;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint, GeoPolygon, LocalFrame, LocalPoint};

/// `(row, col)` of a DEM cell; row 0 is the northernmost row.
pub type Cell = (usize, usize);

/// Default smallest patch kept when it is walled in by steps it cannot merge across.
pub const DEFAULT_MIN_PATCH_CELLS: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing header key {0}")]
    MissingHeader(&'static str),
    #[error("invalid raster: {0}")]
    Invalid(String),
    #[error("point ({lat}, {lon}) is outside the DEM extent")]
    OutsideExtent { lat: f64, lon: f64 },
    #[error("nodata cell in the interpolation neighbourhood of ({lat}, {lon})")]
    NoData { lat: f64, lon: f64 },
    #[error("search area does not overlap the DEM")]
    AoiOutsideDem,
    #[error("no DEM cell centre falls inside the search area")]
    EmptyAoi,
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// An ESRI ASCII grid in geographic coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DemRaster {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major, row 0 north.
    pub values: Vec<f64>,
}

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

fn header_slot(key: &str) -> Option<usize> {
    HEADER_KEYS.iter().position(|k| k.eq_ignore_ascii_case(key))
}

fn parse_number(token: &str, line: usize) -> Result<f64, TerrainError> {
    token.parse::<f64>().map_err(|_| TerrainError::Parse {
        line,
        message: format!("non-numeric token {token:?}"),
    })
}

/// Parses ESRI ASCII grid text. Header keys are case-insensitive and may
/// appear in any order; every data row must hold exactly `ncols` values.
pub fn parse_asc_dem(text: &str) -> Result<DemRaster, TerrainError> {
    let mut header: [Option<f64>; 6] = [None; 6];
    let mut values = Vec::new();
    let mut data_rows = 0usize;
    let mut in_data = false;
    let mut ncols = 0usize;
    let mut nodata = -9999.0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let first = tokens.next().unwrap_or_default();
        if !in_data && first.starts_with(|c: char| c.is_ascii_alphabetic()) {
            let slot = header_slot(first).ok_or_else(|| TerrainError::Parse {
                line: line_no,
                message: format!("unknown header key {first:?}"),
            })?;
            let value = tokens.next().ok_or_else(|| TerrainError::Parse {
                line: line_no,
                message: format!("header key {first:?} has no value"),
            })?;
            header[slot] = Some(parse_number(value, line_no)?);
            continue;
        }
        if !in_data {
            in_data = true;
            for (i, key) in HEADER_KEYS.iter().enumerate().take(5) {
                if header[i].is_none() {
                    return Err(TerrainError::MissingHeader(key));
                }
            }
            let count = |v: f64, name: &str| -> Result<usize, TerrainError> {
                if v.fract() == 0.0 && v >= 2.0 {
                    Ok(v as usize)
                } else {
                    Err(TerrainError::Invalid(format!(
                        "{name} must be an integer >= 2, got {v}"
                    )))
                }
            };
            ncols = count(header[0].unwrap_or_default(), "ncols")?;
            count(header[1].unwrap_or_default(), "nrows")?;
            nodata = header[5].unwrap_or(nodata);
        }
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != ncols {
            return Err(TerrainError::Parse {
                line: line_no,
                message: format!("expected {ncols} values, found {}", row.len()),
            });
        }
        for token in row {
            let v = parse_number(token, line_no)?;
            if v != nodata && !v.is_finite() {
                return Err(TerrainError::Parse {
                    line: line_no,
                    message: format!("non-finite elevation {token:?}"),
                });
            }
            values.push(v);
        }
        data_rows += 1;
    }

    if !in_data {
        if let Some(i) = (0..5).find(|&i| header[i].is_none()) {
            return Err(TerrainError::MissingHeader(HEADER_KEYS[i]));
        }
    }
    let nrows = header[1].unwrap_or_default() as usize;
    if data_rows != nrows {
        return Err(TerrainError::Parse {
            line: text.lines().count(),
            message: format!("expected {nrows} data rows, found {data_rows}"),
        });
    }
    DemRaster::new(
        ncols,
        nrows,
        header[2].unwrap_or_default(),
        header[3].unwrap_or_default(),
        header[4].unwrap_or_default(),
        nodata,
        values,
    )
}

impl DemRaster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if ncols < 2 || nrows < 2 {
            return Err(TerrainError::Invalid(format!(
                "raster must be at least 2x2, got {ncols}x{nrows}"
            )));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(TerrainError::Invalid(format!(
                "cellsize must be positive, got {cellsize}"
            )));
        }
        if values.len() != ncols * nrows {
            return Err(TerrainError::Invalid(format!(
                "expected {} values, got {}",
                ncols * nrows,
                values.len()
            )));
        }
        if values.iter().any(|&v| v != nodata && !v.is_finite()) {
            return Err(TerrainError::Invalid("non-finite elevation".into()));
        }
        Ok(Self {
            ncols,
            nrows,
            xllcorner,
            yllcorner,
            cellsize,
            nodata,
            values,
        })
    }

    pub fn from_fn(
        ncols: usize,
        nrows: usize,
        xllcorner: f64,
        yllcorner: f64,
        cellsize: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, TerrainError> {
        let values = (0..nrows)
            .flat_map(|r| (0..ncols).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(ncols, nrows, xllcorner, yllcorner, cellsize, -9999.0, values)
    }

    pub fn to_asc_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xllcorner {}", self.xllcorner);
        let _ = writeln!(out, "yllcorner {}", self.yllcorner);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        let _ = writeln!(out, "NODATA_value {}", self.nodata);
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn north_edge(&self) -> f64 {
        self.yllcorner + self.nrows as f64 * self.cellsize
    }

    pub fn east_edge(&self) -> f64 {
        self.xllcorner + self.ncols as f64 * self.cellsize
    }

    /// Stored elevation, or `None` for nodata and out-of-range indices.
    pub fn value(&self, (row, col): Cell) -> Option<f64> {
        if row >= self.nrows || col >= self.ncols {
            return None;
        }
        let v = self.values[row * self.ncols + col];
        (v != self.nodata).then_some(v)
    }

    pub fn cell_center(&self, (row, col): Cell) -> GeoPoint {
        GeoPoint {
            lat_deg: self.north_edge() - (row as f64 + 0.5) * self.cellsize,
            lon_deg: self.xllcorner + (col as f64 + 0.5) * self.cellsize,
        }
    }

    /// The cell containing `p`; points on the east/south outer edge belong to the last cell.
    pub fn cell_at(&self, p: GeoPoint) -> Option<Cell> {
        let col = (p.lon_deg - self.xllcorner) / self.cellsize;
        let row = (self.north_edge() - p.lat_deg) / self.cellsize;
        if !(0.0..=self.ncols as f64).contains(&col) || !(0.0..=self.nrows as f64).contains(&row) {
            return None;
        }
        Some((
            (row.floor() as usize).min(self.nrows - 1),
            (col.floor() as usize).min(self.ncols - 1),
        ))
    }

    /// Bilinear interpolation between the four nearest cell centres. Within
    /// half a cell of the outer edge the nearest centres are extrapolated flat.
    pub fn elevation_at(&self, p: GeoPoint) -> Result<f64, TerrainError> {
        let outside = || TerrainError::OutsideExtent {
            lat: p.lat_deg,
            lon: p.lon_deg,
        };
        if p.lon_deg < self.xllcorner
            || p.lon_deg > self.east_edge()
            || p.lat_deg < self.yllcorner
            || p.lat_deg > self.north_edge()
        {
            return Err(outside());
        }
        let fx = ((p.lon_deg - self.xllcorner) / self.cellsize - 0.5).clamp(0.0, (self.ncols - 1) as f64);
        let fy = ((self.north_edge() - p.lat_deg) / self.cellsize - 0.5).clamp(0.0, (self.nrows - 1) as f64);
        // snap round-off so a query at a cell centre returns the stored value exactly
        let snap = |f: f64| if (f - f.round()).abs() < 1e-9 { f.round() } else { f };
        let (fx, fy) = (snap(fx), snap(fy));
        let c0 = (fx.floor() as usize).min(self.ncols - 2);
        let r0 = (fy.floor() as usize).min(self.nrows - 2);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let mut acc = 0.0;
        for (dr, wy) in [(0, 1.0 - ty), (1, ty)] {
            for (dc, wx) in [(0, 1.0 - tx), (1, tx)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let v = self.value((r0 + dr, c0 + dc)).ok_or(TerrainError::NoData {
                    lat: p.lat_deg,
                    lon: p.lon_deg,
                })?;
                acc += w * v;
            }
        }
        Ok(acc)
    }

    /// Cell layout expressed in a local frame.
    pub fn local_grid(&self, frame: &LocalFrame) -> LocalGrid {
        let (m_lon, m_lat) = frame.metres_per_degree();
        LocalGrid {
            west_m: (self.xllcorner - frame.origin.lon_deg) * m_lon,
            north_m: (self.north_edge() - frame.origin.lat_deg) * m_lat,
            cell_w_m: self.cellsize * m_lon,
            cell_h_m: self.cellsize * m_lat,
            nrows: self.nrows,
            ncols: self.ncols,
        }
    }
}

/// Axis-aligned rectangle in local metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRect {
    pub min_e: f64,
    pub min_n: f64,
    pub max_e: f64,
    pub max_n: f64,
}

impl CellRect {
    pub fn inflate(self, margin: f64) -> CellRect {
        CellRect {
            min_e: self.min_e - margin,
            min_n: self.min_n - margin,
            max_e: self.max_e + margin,
            max_n: self.max_n + margin,
        }
    }

    pub fn corners(&self) -> [LocalPoint; 4] {
        [
            LocalPoint::new(self.min_e, self.min_n),
            LocalPoint::new(self.max_e, self.min_n),
            LocalPoint::new(self.max_e, self.max_n),
            LocalPoint::new(self.min_e, self.max_n),
        ]
    }

    pub fn center(&self) -> LocalPoint {
        LocalPoint::new(0.5 * (self.min_e + self.max_e), 0.5 * (self.min_n + self.max_n))
    }

    /// Parameter interval where `origin + t * dir` lies in the closed rectangle.
    pub fn clip_line(&self, origin: LocalPoint, dir: LocalPoint) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (o, d, min, max) in [
            (origin.east_m, dir.east_m, self.min_e, self.max_e),
            (origin.north_m, dir.north_m, self.min_n, self.max_n),
        ] {
            if d.abs() < 1e-12 {
                if o < min || o > max {
                    return None;
                }
            } else {
                let (a, b) = ((min - o) / d, (max - o) / d);
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}

/// DEM cell geometry in a local frame. Equirectangular projection maps each
/// cell onto an axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGrid {
    pub west_m: f64,
    pub north_m: f64,
    pub cell_w_m: f64,
    pub cell_h_m: f64,
    pub nrows: usize,
    pub ncols: usize,
}

impl LocalGrid {
    pub fn cell_rect(&self, (row, col): Cell) -> CellRect {
        CellRect {
            min_e: self.west_m + col as f64 * self.cell_w_m,
            max_e: self.west_m + (col + 1) as f64 * self.cell_w_m,
            max_n: self.north_m - row as f64 * self.cell_h_m,
            min_n: self.north_m - (row + 1) as f64 * self.cell_h_m,
        }
    }

    /// Fractional `(row, col)` coordinates of a local point.
    pub fn fractional(&self, p: LocalPoint) -> (f64, f64) {
        (
            (self.north_m - p.north_m) / self.cell_h_m,
            (p.east_m - self.west_m) / self.cell_w_m,
        )
    }

    pub fn cell_at(&self, p: LocalPoint) -> Option<Cell> {
        let (r, c) = self.fractional(p);
        if r < 0.0 || c < 0.0 || r >= self.nrows as f64 || c >= self.ncols as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }
}

/// Upper bound on a patch's elevation range that keeps the ground sampling
/// distance within `gsd_tolerance_fraction` of nominal.
pub fn max_elev_range_for_gsd_tolerance(agl_nominal_m: f64, gsd_tolerance_fraction: f64) -> Result<f64, TerrainError> {
    if !(agl_nominal_m.is_finite() && agl_nominal_m > 0.0) {
        return Err(TerrainError::Precondition(format!(
            "nominal AGL must be positive, got {agl_nominal_m}"
        )));
    }
    if !(gsd_tolerance_fraction > 0.0 && gsd_tolerance_fraction <= 0.5) {
        return Err(TerrainError::Precondition(format!(
            "GSD tolerance must lie in (0, 0.5], got {gsd_tolerance_fraction}"
        )));
    }
    Ok(gsd_tolerance_fraction * agl_nominal_m)
}

/// A 4-connected set of cells whose elevations span at most the decomposition threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerrainPatch {
    pub id: usize,
    /// Sorted by `(row, col)`.
    pub cells: Vec<Cell>,
    pub elev_min_m: f64,
    pub elev_max_m: f64,
}

impl TerrainPatch {
    pub fn elev_range_m(&self) -> f64 {
        self.elev_max_m - self.elev_min_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StairStepConfig {
    pub max_range_m: f64,
    /// Values above 1 report lone cliff cells as unplannable instead of as
    /// single-cell patches.
    pub min_patch_cells: usize,
}

impl StairStepConfig {
    pub fn new(max_range_m: f64) -> Self {
        Self {
            max_range_m,
            min_patch_cells: DEFAULT_MIN_PATCH_CELLS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decomposition {
    pub patches: Vec<TerrainPatch>,
    /// Nodata cells and cliff cells, sorted.
    pub unplannable: Vec<Cell>,
}

impl Decomposition {
    pub fn cell_count(&self) -> usize {
        self.unplannable.len() + self.patches.iter().map(|p| p.cells.len()).sum::<usize>()
    }
}

/// Cells whose centres fall inside the search area, sorted by `(row, col)`.
pub fn aoi_cells(dem: &DemRaster, aoi: &GeoPolygon) -> Result<Vec<Cell>, TerrainError> {
    let (s, w, n, e) = aoi.bounds();
    if e < dem.xllcorner || w > dem.east_edge() || n < dem.yllcorner || s > dem.north_edge() {
        return Err(TerrainError::AoiOutsideDem);
    }
    let frame = aoi.local_frame();
    let local = aoi.project(&frame)?;
    let grid = dem.local_grid(&frame);

    let cs = dem.cellsize;
    let col_lo = (((w - dem.xllcorner) / cs - 0.5).floor().max(0.0)) as usize;
    let col_hi = ((((e - dem.xllcorner) / cs - 0.5).ceil()).max(0.0) as usize).min(dem.ncols - 1);
    let row_lo = (((dem.north_edge() - n) / cs - 0.5).floor().max(0.0)) as usize;
    let row_hi = ((((dem.north_edge() - s) / cs - 0.5).ceil()).max(0.0) as usize).min(dem.nrows - 1);

    let mut cells = Vec::new();
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            if local.contains(grid.cell_rect((row, col)).center()) {
                cells.push((row, col));
            }
        }
    }
    Ok(cells)
}

pub fn decompose_stairstep(dem: &DemRaster, aoi: &GeoPolygon, max_range_m: f64) -> Result<Decomposition, TerrainError> {
    decompose_stairstep_with(dem, aoi, &StairStepConfig::new(max_range_m))
}

pub fn decompose_stairstep_with(
    dem: &DemRaster,
    aoi: &GeoPolygon,
    config: &StairStepConfig,
) -> Result<Decomposition, TerrainError> {
    if !(config.max_range_m.is_finite() && config.max_range_m > 0.0) {
        return Err(TerrainError::Precondition(format!(
            "max elevation range must be positive, got {}",
            config.max_range_m
        )));
    }
    let cells = aoi_cells(dem, aoi)?;
    if cells.is_empty() {
        return Err(TerrainError::EmptyAoi);
    }
    Ok(decompose_cells(dem, &cells, config))
}

/// Merge candidate between two adjacent regions, ordered by merged range then by
/// the cell pair that introduced it.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    range: f64,
    a: usize,
    b: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .range
            .total_cmp(&self.range)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Union-find over window cells with per-root elevation bounds.
struct Regions {
    parent: Vec<usize>,
    size: Vec<usize>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Regions {
    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn merged_range(&self, ra: usize, rb: usize) -> f64 {
        self.max[ra].max(self.max[rb]) - self.min[ra].min(self.min[rb])
    }

    fn union(&mut self, ra: usize, rb: usize) {
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        self.min[big] = self.min[big].min(self.min[small]);
        self.max[big] = self.max[big].max(self.max[small]);
    }
}

/// Decomposes an explicit AOI cell list. `aoi` must be sorted and in range.
///
/// Adjacent regions are merged cheapest-first, where the cost of a merge is the
/// elevation range of the result, until the cheapest remaining merge exceeds the
/// bound. The merge order does not depend on the bound, so a larger bound only
/// extends the sequence and the patch partition coarsens monotonically.
pub fn decompose_cells(dem: &DemRaster, aoi: &[Cell], config: &StairStepConfig) -> Decomposition {
    let mut unplannable: Vec<Cell> = aoi.iter().copied().filter(|&c| dem.value(c).is_none()).collect();
    if aoi.is_empty() {
        return Decomposition::default();
    }
    let row0 = aoi.iter().map(|c| c.0).min().unwrap_or(0);
    let row1 = aoi.iter().map(|c| c.0).max().unwrap_or(0);
    let col0 = aoi.iter().map(|c| c.1).min().unwrap_or(0);
    let col1 = aoi.iter().map(|c| c.1).max().unwrap_or(0);
    let (nrows, ncols) = (row1 - row0 + 1, col1 - col0 + 1);
    let mut elev: Vec<Option<f64>> = vec![None; nrows * ncols];
    for &(r, c) in aoi {
        elev[(r - row0) * ncols + (c - col0)] = dem.value((r, c));
    }

    let mut regions = Regions {
        parent: (0..elev.len()).collect(),
        size: vec![1; elev.len()],
        min: elev.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
        max: elev.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
    };
    let mut heap = BinaryHeap::new();
    let mut hemmed = vec![false; elev.len()];
    for r in 0..nrows {
        for c in 0..ncols {
            let a = r * ncols + c;
            let Some(va) = elev[a] else { continue };
            let right = (c + 1 < ncols).then(|| a + 1);
            let down = (r + 1 < nrows).then(|| a + ncols);
            for b in right.into_iter().chain(down) {
                if let Some(vb) = elev[b] {
                    hemmed[a] = true;
                    hemmed[b] = true;
                    heap.push(Candidate {
                        range: (va - vb).abs(),
                        a,
                        b,
                    });
                }
            }
        }
    }

    // Keys only grow as regions absorb others, so a stale key is a lower bound:
    // re-queue it with the current range and keep popping.
    while let Some(cand) = heap.pop() {
        if cand.range > config.max_range_m {
            break;
        }
        let (ra, rb) = (regions.find(cand.a), regions.find(cand.b));
        if ra == rb {
            continue;
        }
        let range = regions.merged_range(ra, rb);
        if range > cand.range {
            heap.push(Candidate { range, ..cand });
            continue;
        }
        regions.union(ra, rb);
    }

    let mut members: BTreeMap<usize, Vec<Cell>> = BTreeMap::new();
    for (i, v) in elev.iter().enumerate() {
        if v.is_some() {
            let root = regions.find(i);
            members
                .entry(root)
                .or_default()
                .push((i / ncols + row0, i % ncols + col0));
        }
    }

    let mut patches = Vec::new();
    for (root, cells) in members {
        // Cliff rule: a lone cell that no neighbour could be merged with is a
        // cliff face, unless it is an isolated fragment of the search area.
        if cells.len() == 1 && config.min_patch_cells > 1 && hemmed[root] {
            unplannable.push(cells[0]);
            continue;
        }
        patches.push(TerrainPatch {
            id: 0,
            cells,
            elev_min_m: regions.min[root],
            elev_max_m: regions.max[root],
        });
    }
    patches.sort_by_key(|p| p.cells[0]);
    for (i, p) in patches.iter_mut().enumerate() {
        p.id = i;
    }
    unplannable.sort_unstable();
    Decomposition { patches, unplannable }
}

/// Outline rings of a cell set as lattice vertices `(col_line, row_line)`.
/// Interior lies to the left: outer rings counterclockwise on the map, holes clockwise.
pub fn cell_set_rings(cells: &[Cell]) -> Vec<Vec<(usize, usize)>> {
    let set: BTreeSet<Cell> = cells.iter().copied().collect();
    let has = |r: isize, c: isize| r >= 0 && c >= 0 && set.contains(&(r as usize, c as usize));

    // Directed edges keyed by start vertex. Vertex = (x = col line, y = row line).
    let mut edges: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for &(r, c) in &set {
        let (ri, ci) = (r as isize, c as isize);
        // counterclockwise on the map: south edge west->east, east edge south->north, ...
        if !has(ri + 1, ci) {
            edges.entry((c, r + 1)).or_default().push((c + 1, r + 1));
        }
        if !has(ri, ci + 1) {
            edges.entry((c + 1, r + 1)).or_default().push((c + 1, r));
        }
        if !has(ri - 1, ci) {
            edges.entry((c + 1, r)).or_default().push((c, r));
        }
        if !has(ri, ci - 1) {
            edges.entry((c, r)).or_default().push((c, r + 1));
        }
    }

    let mut rings = Vec::new();
    while let Some((&start, _)) = edges.iter().find(|(_, v)| !v.is_empty()) {
        let mut ring = vec![start];
        let mut prev = start;
        let mut cur = edges.get_mut(&start).and_then(Vec::pop).unwrap_or(start);
        while cur != start {
            ring.push(cur);
            let incoming = (cur.0 as isize - prev.0 as isize, cur.1 as isize - prev.1 as isize);
            let outs = edges.get_mut(&cur).filter(|o| !o.is_empty());
            let Some(outs) = outs else { break };
            // at pinch vertices take the left turn (map frame; y grows southward here)
            let pick = (0..outs.len())
                .max_by_key(|&i| {
                    let d = (outs[i].0 as isize - cur.0 as isize, outs[i].1 as isize - cur.1 as isize);
                    let cross = -(incoming.0 * d.1 - incoming.1 * d.0);
                    let dot = incoming.0 * d.0 + incoming.1 * d.1;
                    (cross, dot)
                })
                .unwrap_or(0);
            let next = outs.swap_remove(pick);
            prev = cur;
            cur = next;
        }
        edges.retain(|_, v| !v.is_empty());
        rings.push(simplify_lattice_ring(ring));
    }
    rings
}

fn simplify_lattice_ring(ring: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let n = ring.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let a = ring[(i + n - 1) % n];
        let b = ring[i];
        let c = ring[(i + 1) % n];
        let collinear = (b.0 as isize - a.0 as isize) * (c.1 as isize - b.1 as isize)
            == (b.1 as isize - a.1 as isize) * (c.0 as isize - b.0 as isize);
        if !collinear {
            out.push(b);
        }
    }
    out
}

/// Patch outlines as a GeoJSON FeatureCollection with `{id, elev_min_m, elev_max_m}` properties.
pub fn patches_to_geojson(dem: &DemRaster, patches: &[TerrainPatch]) -> Value {
    let features: Vec<Value> = patches
        .iter()
        .map(|p| {
            let mut rings = cell_set_rings(&p.cells);
            // outer ring (largest area) first
            rings.sort_by_key(|r| Reverse(lattice_area2(r).unsigned_abs()));
            let coords: Vec<Value> = rings
                .iter()
                .map(|ring| {
                    let mut pts: Vec<Value> = ring
                        .iter()
                        .map(|&(x, y)| {
                            json!([
                                dem.xllcorner + x as f64 * dem.cellsize,
                                dem.north_edge() - y as f64 * dem.cellsize
                            ])
                        })
                        .collect();
                    if let Some(first) = pts.first().cloned() {
                        pts.push(first);
                    }
                    Value::Array(pts)
                })
                .collect();
            json!({
                "type": "Feature",
                "properties": { "id": p.id, "elev_min_m": p.elev_min_m, "elev_max_m": p.elev_max_m },
                "geometry": { "type": "Polygon", "coordinates": coords },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// Twice the signed map-frame area of a lattice ring (positive = counterclockwise).
fn lattice_area2(ring: &[(usize, usize)]) -> i64 {
    let n = ring.len();
    let mut acc = 0i64;
    for i in 0..n {
        let (x0, y0) = (ring[i].0 as i64, -(ring[i].1 as i64));
        let (x1, y1) = (ring[(i + 1) % n].0 as i64, -(ring[(i + 1) % n].1 as i64));
        acc += x0 * y1 - x1 * y0;
    }
    acc
}
