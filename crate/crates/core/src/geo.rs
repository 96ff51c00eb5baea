//! Geodesy and planar geometry shared by the rest of the crate.
//!
//! Search areas are small (tens of kilometres at most), so every module works
//! in a local equirectangular tangent plane anchored at a [`LocalFrame`]
//! origin. Distances are metres east/north of that origin.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// WGS84 equatorial radius used by the tangent-plane projection.
pub const EARTH_RADIUS_M: f64 = 6_378_137.0;

/// Largest lat/lon offset from the frame origin accepted by [`LocalFrame::project`].
pub const MAX_PROJECT_OFFSET_DEG: f64 = 0.5;

/// Largest east/north offset accepted by [`LocalFrame::unproject`].
pub const MAX_UNPROJECT_OFFSET_M: f64 = 50_000.0;

const BOUNDARY_EPS_M: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("point ({lat}, {lon}) is more than {MAX_PROJECT_OFFSET_DEG} deg from the frame origin")]
    ProjectRange { lat: f64, lon: f64 },
    #[error("local point ({east}, {north}) is more than {MAX_UNPROJECT_OFFSET_M} m from the frame origin")]
    UnprojectRange { east: f64, north: f64 },
    #[error("invalid polygon: {0}")]
    Polygon(String),
    #[error("invalid GeoJSON: {0}")]
    GeoJson(String),
}

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint")]
pub struct GeoPoint {
    #[serde(rename = "lat")]
    pub lat_deg: f64,
    #[serde(rename = "lon")]
    pub lon_deg: f64,
}

#[derive(Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawGeoPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(GeoError::Latitude(lat_deg));
        }
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(GeoError::Longitude(lon_deg));
        }
        Ok(Self { lat_deg, lon_deg })
    }
}

/// Metres east and north of a [`LocalFrame`] origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint {
    #[serde(rename = "e")]
    pub east_m: f64,
    #[serde(rename = "n")]
    pub north_m: f64,
}

impl LocalPoint {
    pub const fn new(east_m: f64, north_m: f64) -> Self {
        Self { east_m, north_m }
    }

    pub fn distance(self, other: LocalPoint) -> f64 {
        (self.east_m - other.east_m).hypot(self.north_m - other.north_m)
    }

    pub fn dot(self, other: LocalPoint) -> f64 {
        self.east_m * other.east_m + self.north_m * other.north_m
    }

    /// Point on the segment `self -> other` at fraction `t`.
    pub fn lerp(self, other: LocalPoint, t: f64) -> LocalPoint {
        LocalPoint::new(
            self.east_m + (other.east_m - self.east_m) * t,
            self.north_m + (other.north_m - self.north_m) * t,
        )
    }

    pub fn offset(self, east_m: f64, north_m: f64) -> LocalPoint {
        LocalPoint::new(self.east_m + east_m, self.north_m + north_m)
    }
}

impl std::ops::Sub for LocalPoint {
    type Output = LocalPoint;

    fn sub(self, rhs: LocalPoint) -> LocalPoint {
        LocalPoint::new(self.east_m - rhs.east_m, self.north_m - rhs.north_m)
    }
}

impl std::ops::Add for LocalPoint {
    type Output = LocalPoint;

    fn add(self, rhs: LocalPoint) -> LocalPoint {
        LocalPoint::new(self.east_m + rhs.east_m, self.north_m + rhs.north_m)
    }
}

impl std::ops::Mul<f64> for LocalPoint {
    type Output = LocalPoint;

    fn mul(self, k: f64) -> LocalPoint {
        LocalPoint::new(self.east_m * k, self.north_m * k)
    }
}

/// Unit vector pointing along a compass heading (degrees clockwise from north).
pub fn heading_unit(heading_deg: f64) -> LocalPoint {
    let h = heading_deg.to_radians();
    LocalPoint::new(h.sin(), h.cos())
}

/// Compass bearing of `to - from`, in `[0, 360)`.
pub fn bearing_deg(from: LocalPoint, to: LocalPoint) -> f64 {
    let d = to - from;
    let b = d.east_m.atan2(d.north_m).to_degrees();
    if b < 0.0 {
        b + 360.0
    } else {
        b
    }
}

/// Equirectangular tangent plane anchored at `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin: GeoPoint,
}

impl LocalFrame {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin }
    }

    /// Scale factors `(metres per degree longitude, metres per degree latitude)`.
    pub fn metres_per_degree(&self) -> (f64, f64) {
        (self.metres_per_deg_lon(), Self::metres_per_deg_lat())
    }

    fn metres_per_deg_lat() -> f64 {
        EARTH_RADIUS_M * std::f64::consts::PI / 180.0
    }

    fn metres_per_deg_lon(&self) -> f64 {
        Self::metres_per_deg_lat() * self.origin.lat_deg.to_radians().cos()
    }

    pub fn project(&self, p: GeoPoint) -> Result<LocalPoint, GeoError> {
        let dlat = p.lat_deg - self.origin.lat_deg;
        let dlon = p.lon_deg - self.origin.lon_deg;
        if dlat.abs() >= MAX_PROJECT_OFFSET_DEG || dlon.abs() >= MAX_PROJECT_OFFSET_DEG {
            return Err(GeoError::ProjectRange {
                lat: p.lat_deg,
                lon: p.lon_deg,
            });
        }
        Ok(LocalPoint::new(
            dlon * self.metres_per_deg_lon(),
            dlat * Self::metres_per_deg_lat(),
        ))
    }

    pub fn unproject(&self, p: LocalPoint) -> Result<GeoPoint, GeoError> {
        if !(p.east_m.abs() < MAX_UNPROJECT_OFFSET_M && p.north_m.abs() < MAX_UNPROJECT_OFFSET_M) {
            return Err(GeoError::UnprojectRange {
                east: p.east_m,
                north: p.north_m,
            });
        }
        GeoPoint::new(
            self.origin.lat_deg + p.north_m / Self::metres_per_deg_lat(),
            self.origin.lon_deg + p.east_m / self.metres_per_deg_lon(),
        )
    }
}

fn signed_area(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = ring[i];
        let (x1, y1) = ring[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc * 0.5
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn ring_self_intersects(ring: &[(f64, f64)]) -> bool {
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

fn rings_cross(r1: &[(f64, f64)], r2: &[(f64, f64)]) -> bool {
    let (n1, n2) = (r1.len(), r2.len());
    (0..n1).any(|i| (0..n2).any(|j| segments_intersect(r1[i], r1[(i + 1) % n1], r2[j], r2[(j + 1) % n2])))
}

/// Even-odd containment without boundary handling.
fn ray_cast(ring: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - qx).hypot(p.1 - qy)
}

/// Validates a ring and returns it with the requested orientation.
fn normalize_ring(mut ring: Vec<(f64, f64)>, ccw: bool, what: &str) -> Result<Vec<(f64, f64)>, GeoError> {
    if ring.len() >= 2 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(GeoError::Polygon(format!("{what} needs at least 3 distinct vertices")));
    }
    if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(GeoError::Polygon(format!("{what} has non-finite coordinates")));
    }
    let area = signed_area(&ring);
    if area == 0.0 {
        return Err(GeoError::Polygon(format!("{what} has zero area")));
    }
    if ring_self_intersects(&ring) {
        return Err(GeoError::Polygon(format!("{what} is self-intersecting")));
    }
    if (area > 0.0) != ccw {
        ring.reverse();
    }
    Ok(ring)
}

type Ring = Vec<(f64, f64)>;

fn validate_rings(exterior: Ring, holes: Vec<Ring>) -> Result<(Ring, Vec<Ring>), GeoError> {
    let exterior = normalize_ring(exterior, true, "exterior ring")?;
    let mut out = Vec::with_capacity(holes.len());
    for (i, hole) in holes.into_iter().enumerate() {
        let hole = normalize_ring(hole, false, &format!("hole {i}"))?;
        if rings_cross(&exterior, &hole) || !hole.iter().all(|&p| ray_cast(&exterior, p)) {
            return Err(GeoError::Polygon(format!(
                "hole {i} is not strictly inside the exterior"
            )));
        }
        out.push(hole);
    }
    Ok((exterior, out))
}

/// A WGS84 polygon: exterior counterclockwise, holes clockwise, rings stored
/// without the closing duplicate vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPolygon {
    exterior: Vec<GeoPoint>,
    holes: Vec<Vec<GeoPoint>>,
}

fn to_xy(ring: &[GeoPoint]) -> Vec<(f64, f64)> {
    ring.iter().map(|p| (p.lon_deg, p.lat_deg)).collect()
}

fn from_xy(ring: Vec<(f64, f64)>) -> Vec<GeoPoint> {
    ring.into_iter()
        .map(|(lon, lat)| GeoPoint {
            lat_deg: lat,
            lon_deg: lon,
        })
        .collect()
}

impl GeoPolygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Result<Self, GeoError> {
        let (ext, hs) = validate_rings(to_xy(&exterior), holes.iter().map(|h| to_xy(h)).collect())?;
        Ok(Self {
            exterior: from_xy(ext),
            holes: hs.into_iter().map(from_xy).collect(),
        })
    }

    pub fn exterior(&self) -> &[GeoPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<GeoPoint>] {
        &self.holes
    }

    /// `(min_lat, min_lon, max_lat, max_lon)` of the exterior ring.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.exterior.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.lat_deg), b.min(p.lon_deg), c.max(p.lat_deg), d.max(p.lon_deg)),
        )
    }

    /// The planning frame for this area: the centre of its bounding box.
    pub fn local_frame(&self) -> LocalFrame {
        let (s, w, n, e) = self.bounds();
        LocalFrame::new(GeoPoint {
            lat_deg: 0.5 * (s + n),
            lon_deg: 0.5 * (w + e),
        })
    }

    pub fn project(&self, frame: &LocalFrame) -> Result<LocalPolygon, GeoError> {
        let ring =
            |r: &[GeoPoint]| -> Result<Vec<LocalPoint>, GeoError> { r.iter().map(|&p| frame.project(p)).collect() };
        let exterior = ring(&self.exterior)?;
        let holes = self.holes.iter().map(|h| ring(h)).collect::<Result<Vec<_>, _>>()?;
        Ok(LocalPolygon { exterior, holes })
    }

    /// Reads a GeoJSON Polygon geometry, a Feature holding one, or a
    /// FeatureCollection whose single feature is a Polygon.
    pub fn from_geojson_str(text: &str) -> Result<Self, GeoError> {
        let value: Value = serde_json::from_str(text).map_err(|e| GeoError::GeoJson(e.to_string()))?;
        Self::from_geojson(&value)
    }

    pub fn from_geojson(value: &Value) -> Result<Self, GeoError> {
        let kind = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| GeoError::GeoJson("missing \"type\"".into()))?;
        match kind {
            "Polygon" => Self::from_coordinates(
                value
                    .get("coordinates")
                    .ok_or_else(|| GeoError::GeoJson("Polygon without coordinates".into()))?,
            ),
            "Feature" => Self::from_geojson(
                value
                    .get("geometry")
                    .ok_or_else(|| GeoError::GeoJson("Feature without geometry".into()))?,
            ),
            "FeatureCollection" => {
                let features = value
                    .get("features")
                    .and_then(Value::as_array)
                    .ok_or_else(|| GeoError::GeoJson("FeatureCollection without features".into()))?;
                match features.as_slice() {
                    [only] => Self::from_geojson(only),
                    _ => Err(GeoError::GeoJson(format!(
                        "expected exactly one feature, found {}",
                        features.len()
                    ))),
                }
            }
            other => Err(GeoError::GeoJson(format!("unsupported geometry type {other:?}"))),
        }
    }

    fn from_coordinates(coords: &Value) -> Result<Self, GeoError> {
        let rings = coords
            .as_array()
            .ok_or_else(|| GeoError::GeoJson("coordinates must be an array of rings".into()))?;
        let mut parsed = Vec::with_capacity(rings.len());
        for ring in rings {
            let positions = ring
                .as_array()
                .ok_or_else(|| GeoError::GeoJson("ring must be an array of positions".into()))?;
            let mut out = Vec::with_capacity(positions.len());
            for pos in positions {
                let pair = pos.as_array().filter(|a| a.len() >= 2);
                let (lon, lat) = match pair.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                    Some((Some(lon), Some(lat))) => (lon, lat),
                    _ => return Err(GeoError::GeoJson("position must be [lon, lat]".into())),
                };
                out.push(GeoPoint::new(lat, lon)?);
            }
            parsed.push(out);
        }
        let mut iter = parsed.into_iter();
        let exterior = iter
            .next()
            .ok_or_else(|| GeoError::GeoJson("polygon has no rings".into()))?;
        Self::new(exterior, iter.collect())
    }

    /// GeoJSON Polygon geometry with closed rings in `[lon, lat]` order.
    pub fn to_geojson(&self) -> Value {
        let ring = |r: &[GeoPoint]| -> Value {
            let mut pts: Vec<Value> = r.iter().map(|p| json!([p.lon_deg, p.lat_deg])).collect();
            pts.push(json!([r[0].lon_deg, r[0].lat_deg]));
            Value::Array(pts)
        };
        let mut rings = vec![ring(&self.exterior)];
        rings.extend(self.holes.iter().map(|h| ring(h)));
        json!({ "type": "Polygon", "coordinates": rings })
    }
}

impl Serialize for GeoPolygon {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_geojson().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GeoPolygon {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        GeoPolygon::from_geojson(&value).map_err(serde::de::Error::custom)
    }
}

/// A polygon in local metres. Built either by projecting a [`GeoPolygon`] or
/// directly from planar rings.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolygon {
    exterior: Vec<LocalPoint>,
    holes: Vec<Vec<LocalPoint>>,
}

impl LocalPolygon {
    pub fn new(exterior: Vec<LocalPoint>, holes: Vec<Vec<LocalPoint>>) -> Result<Self, GeoError> {
        let xy = |r: &[LocalPoint]| r.iter().map(|p| (p.east_m, p.north_m)).collect::<Vec<_>>();
        let (ext, hs) = validate_rings(xy(&exterior), holes.iter().map(|h| xy(h)).collect())?;
        let back = |r: Vec<(f64, f64)>| r.into_iter().map(|(e, n)| LocalPoint::new(e, n)).collect();
        Ok(Self {
            exterior: back(ext),
            holes: hs.into_iter().map(back).collect(),
        })
    }

    /// Axis-aligned rectangle `[e0, e1] x [n0, n1]`.
    pub fn rectangle(e0: f64, n0: f64, e1: f64, n1: f64) -> Result<Self, GeoError> {
        Self::new(
            vec![
                LocalPoint::new(e0, n0),
                LocalPoint::new(e1, n0),
                LocalPoint::new(e1, n1),
                LocalPoint::new(e0, n1),
            ],
            vec![],
        )
    }

    pub fn exterior(&self) -> &[LocalPoint] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<LocalPoint>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[LocalPoint]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(Vec::as_slice))
    }

    /// `(min_e, min_n, max_e, max_n)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.exterior.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p.east_m), b.min(p.north_m), c.max(p.east_m), d.max(p.north_m)),
        )
    }

    /// Distance from `p` to the nearest edge of any ring.
    pub fn distance_to_boundary(&self, p: LocalPoint) -> f64 {
        let q = (p.east_m, p.north_m);
        self.rings()
            .flat_map(|ring| {
                let n = ring.len();
                (0..n).map(move |i| {
                    let a = ring[i];
                    let b = ring[(i + 1) % n];
                    point_segment_distance(q, (a.east_m, a.north_m), (b.east_m, b.north_m))
                })
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: LocalPoint) -> bool {
        point_in_polygon(self, p)
    }

    pub fn area_m2(&self) -> f64 {
        polygon_area_m2(self)
    }
}

/// Even-odd containment; points on any ring boundary count as inside.
pub fn point_in_polygon(poly: &LocalPolygon, p: LocalPoint) -> bool {
    let q = (p.east_m, p.north_m);
    let mut inside = false;
    for ring in poly.rings() {
        let xy: Vec<(f64, f64)> = ring.iter().map(|v| (v.east_m, v.north_m)).collect();
        let n = xy.len();
        if (0..n).any(|i| point_segment_distance(q, xy[i], xy[(i + 1) % n]) <= BOUNDARY_EPS_M) {
            return true;
        }
        if ray_cast(&xy, q) {
            inside = !inside;
        }
    }
    inside
}

/// Shoelace area of the exterior minus the holes.
pub fn polygon_area_m2(poly: &LocalPolygon) -> f64 {
    let xy = |r: &[LocalPoint]| r.iter().map(|v| (v.east_m, v.north_m)).collect::<Vec<_>>();
    let ext = signed_area(&xy(&poly.exterior)).abs();
    let holes: f64 = poly.holes.iter().map(|h| signed_area(&xy(h)).abs()).sum();
    ext - holes
}
