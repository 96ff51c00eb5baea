//! Georeferencing of nadir stills and geotagging of video frames from
//! subtitle (`.srt`) telemetry tracks.

use std::fmt::Write as _;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::camera::{footprint_dimensions, ground_sampling_distance, CameraError, CameraModel};
use crate::defaults;
use crate::geo::{heading_unit, GeoError, GeoPoint, LocalFrame, LocalPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeorefError {
    #[error("image is not nadir: pitch {pitch_deg} deg is more than {tolerance_deg} deg from -90")]
    Oblique { pitch_deg: f64, tolerance_deg: f64 },
    #[error("pixel ({px}, {py}) is outside the {w}x{h} image")]
    PixelOutOfRange { px: f64, py: f64, w: u32, h: u32 },
    #[error("invalid image metadata: {0}")]
    Meta(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error("subtitle block {block}: {message}")]
    Srt { block: usize, message: String },
    #[error("no subtitle block carries a position")]
    EmptyTrack,
    #[error("{0}")]
    Precondition(String),
}

/// Pose and camera of one nadir still.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMeta {
    pub image_id: String,
    pub center: GeoPoint,
    pub agl_m: f64,
    /// Direction the top edge of the image faces, degrees clockwise from north.
    pub heading_deg: f64,
    /// -90 is straight down.
    pub gimbal_pitch_deg: f64,
    pub timestamp: Option<DateTime<Utc>>,
    pub cam: CameraModel,
}

impl ImageMeta {
    fn check(&self, tolerance_deg: f64) -> Result<(), GeorefError> {
        if !(self.agl_m.is_finite() && self.agl_m > 0.0) {
            return Err(GeorefError::Meta(format!("agl_m must be positive, got {}", self.agl_m)));
        }
        if !self.heading_deg.is_finite() {
            return Err(GeorefError::Meta("heading_deg must be finite".into()));
        }
        if !self.gimbal_pitch_deg.is_finite() || (self.gimbal_pitch_deg + 90.0).abs() > tolerance_deg {
            return Err(GeorefError::Oblique {
                pitch_deg: self.gimbal_pitch_deg,
                tolerance_deg,
            });
        }
        Ok(())
    }

    fn axes(&self) -> (LocalPoint, LocalPoint) {
        let up = heading_unit(self.heading_deg);
        let right = LocalPoint::new(up.north_m, -up.east_m);
        (right, up)
    }
}

/// Ground corners of a nadir image: top-left, top-right, bottom-right, bottom-left.
pub fn image_footprint(meta: &ImageMeta) -> Result<[GeoPoint; 4], GeorefError> {
    image_footprint_with(meta, defaults::NADIR_TOLERANCE_DEG)
}

pub fn image_footprint_with(meta: &ImageMeta, nadir_tolerance_deg: f64) -> Result<[GeoPoint; 4], GeorefError> {
    meta.check(nadir_tolerance_deg)?;
    let (w, h) = footprint_dimensions(&meta.cam, meta.agl_m)?;
    let (right, up) = meta.axes();
    let frame = LocalFrame::new(meta.center);
    let corner = |sx: f64, sy: f64| frame.unproject(right * (sx * 0.5 * w) + up * (sy * 0.5 * h));
    Ok([
        corner(-1.0, 1.0)?,
        corner(1.0, 1.0)?,
        corner(1.0, -1.0)?,
        corner(-1.0, -1.0)?,
    ])
}

/// Ground position of pixel `(px, py)`, with `+x` right and `+y` down in the image.
pub fn pixel_to_ground(meta: &ImageMeta, px: f64, py: f64) -> Result<GeoPoint, GeorefError> {
    meta.check(defaults::NADIR_TOLERANCE_DEG)?;
    let (w, h) = (meta.cam.image_w_px(), meta.cam.image_h_px());
    if !(px >= 0.0 && px < w as f64 && py >= 0.0 && py < h as f64) {
        return Err(GeorefError::PixelOutOfRange { px, py, w, h });
    }
    let gsd = ground_sampling_distance(&meta.cam, meta.agl_m)?;
    let dx = (px - (w as f64 - 1.0) / 2.0) * gsd;
    let dy = (py - (h as f64 - 1.0) / 2.0) * gsd;
    let hd = meta.heading_deg.to_radians();
    let (s, c) = hd.sin_cos();
    let offset = LocalPoint::new(dx * c - dy * s, -dx * s - dy * c);
    Ok(LocalFrame::new(meta.center).unproject(offset)?)
}

/// GeoJSON FeatureCollection of image footprints with an `image_id` property.
pub fn footprints_geojson(metas: &[ImageMeta]) -> Result<Value, GeorefError> {
    let mut features = Vec::with_capacity(metas.len());
    for m in metas {
        let corners = image_footprint(m)?;
        let mut ring: Vec<Value> = corners.iter().map(|p| json!([p.lon_deg, p.lat_deg])).collect();
        ring.push(ring[0].clone());
        features.push(json!({
            "type": "Feature",
            "properties": {"image_id": m.image_id},
            "geometry": {"type": "Polygon", "coordinates": [ring]},
        }));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrtEntry {
    pub start_ms: u64,
    pub end_ms: u64,
    pub lat: f64,
    pub lon: f64,
    pub alt_m: f64,
}

impl SrtEntry {
    fn mid_s(&self) -> f64 {
        (self.start_ms + self.end_ms) as f64 / 2000.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SrtTrack {
    pub entries: Vec<SrtEntry>,
}

/// A parsed track plus the number of blocks that carried no recognised position.
#[derive(Debug, Clone, PartialEq)]
pub struct SrtParse {
    pub track: SrtTrack,
    pub skipped_blocks: usize,
}

/// Caption layouts understood by the parser and emitted by [`to_srt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrtDialect {
    /// `[latitude: 34.1] [longitude: 135.9] [altitude: 612.3]`
    Bracketed,
    /// `GPS(135.9,34.1,612.3)`, longitude first.
    GpsTriple,
}

fn time_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(\d{1,3}):([0-5]\d):([0-5]\d)[,.](\d{3})\s*-->\s*(\d{1,3}):([0-5]\d):([0-5]\d)[,.](\d{3})")
            .expect("valid regex")
    })
}

const NUM: &str = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?";

fn bracket_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([^\[\]]*)\]").expect("valid regex"))
}

fn key_value_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"([A-Za-z_]+)\s*:\s*({NUM})")).expect("valid regex"))
}

fn gps_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(r"(?i)GPS\s*\(\s*({NUM})\s*,\s*({NUM})\s*,\s*({NUM})\s*\)")).expect("valid regex")
    })
}

fn parse_ms(caps: &regex::Captures<'_>, first: usize) -> u64 {
    let field = |i: usize| caps[first + i].parse::<u64>().unwrap_or(0);
    ((field(0) * 60 + field(1)) * 60 + field(2)) * 1000 + field(3)
}

/// Position in one caption, trying the bracketed dialect first.
fn caption_position(caption: &str) -> Option<(f64, f64, f64)> {
    let (mut lat, mut lon, mut alt) = (None, None, None);
    for bracket in bracket_re().captures_iter(caption) {
        for kv in key_value_re().captures_iter(&bracket[1]) {
            let value = kv[2].parse::<f64>().ok();
            match kv[1].to_ascii_lowercase().as_str() {
                "latitude" => lat = value,
                // some firmware spells it this way
                "longitude" | "longtitude" => lon = value,
                "altitude" => alt = value,
                _ => {}
            }
        }
    }
    if let (Some(lat), Some(lon), Some(alt)) = (lat, lon, alt) {
        return Some((lat, lon, alt));
    }
    let caps = gps_re().captures(caption)?;
    let v = |i: usize| caps[i].parse::<f64>().ok();
    Some((v(2)?, v(1)?, v(3)?))
}

/// Parses subtitle telemetry. Blocks without a recognised position are
/// counted and skipped; blocks with a bad header are errors.
pub fn parse_srt(text: &str) -> Result<SrtParse, GeorefError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut entries: Vec<SrtEntry> = Vec::new();
    let mut skipped = 0;
    let mut block_lines: Vec<&str> = Vec::new();
    let mut block = 0;

    let mut flush = |lines: &mut Vec<&str>, block: usize| -> Result<(), GeorefError> {
        if lines.is_empty() {
            return Ok(());
        }
        let err = |message: String| GeorefError::Srt { block, message };
        if lines[0].trim().parse::<u64>().is_err() {
            return Err(err(format!("expected a block index, found {:?}", lines[0])));
        }
        let Some(time) = lines.get(1) else {
            return Err(err("missing timestamp line".into()));
        };
        let Some(caps) = time_re().captures(time.trim()) else {
            return Err(err(format!("malformed timestamp line {time:?}")));
        };
        let (start_ms, end_ms) = (parse_ms(&caps, 1), parse_ms(&caps, 5));
        if end_ms <= start_ms {
            return Err(err(format!("end {end_ms} ms is not after start {start_ms} ms")));
        }
        let caption = lines[2..].join("\n");
        lines.clear();
        match caption_position(&caption) {
            Some((lat, lon, alt_m))
                if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) && alt_m.is_finite() =>
            {
                if let Some(prev) = entries.last() {
                    if start_ms <= prev.start_ms {
                        return Err(err(format!(
                            "start {start_ms} ms does not follow the previous block's {} ms",
                            prev.start_ms
                        )));
                    }
                }
                entries.push(SrtEntry {
                    start_ms,
                    end_ms,
                    lat,
                    lon,
                    alt_m,
                });
            }
            _ => skipped += 1,
        }
        Ok(())
    };

    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut block_lines, block)?;
            continue;
        }
        if block_lines.is_empty() {
            block += 1;
        }
        block_lines.push(line);
    }
    flush(&mut block_lines, block)?;

    if entries.is_empty() {
        return Err(GeorefError::EmptyTrack);
    }
    Ok(SrtParse {
        track: SrtTrack { entries },
        skipped_blocks: skipped,
    })
}

fn format_time(ms: u64) -> String {
    format!(
        "{:02}:{:02}:{:02},{:03}",
        ms / 3_600_000,
        ms / 60_000 % 60,
        ms / 1000 % 60,
        ms % 1000
    )
}

/// Writes a track in the given caption dialect. Coordinates use the shortest
/// representation that parses back to the same value.
pub fn to_srt(track: &SrtTrack, dialect: SrtDialect) -> String {
    let mut out = String::new();
    for (i, e) in track.entries.iter().enumerate() {
        let caption = match dialect {
            SrtDialect::Bracketed => format!("[latitude: {}] [longitude: {}] [altitude: {}]", e.lat, e.lon, e.alt_m),
            SrtDialect::GpsTriple => format!("GPS({},{},{})", e.lon, e.lat, e.alt_m),
        };
        let _ = write!(
            out,
            "{}\n{} --> {}\n{}\n\n",
            i + 1,
            format_time(e.start_ms),
            format_time(e.end_ms),
            caption
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameTag {
    pub frame_index: u64,
    pub video_time_ms: u64,
    pub position: GeoPoint,
    pub alt_m: f64,
}

/// Samples the track every `sample_interval_s` from t = 0 until the last
/// caption ends. Positions interpolate linearly between caption midpoints and
/// clamp outside them.
pub fn geotag_frames(track: &SrtTrack, fps: f64, sample_interval_s: f64) -> Result<Vec<FrameTag>, GeorefError> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(GeorefError::Precondition(format!("fps must be positive, got {fps}")));
    }
    // millisecond timestamps must stay strictly increasing
    if !(sample_interval_s.is_finite() && sample_interval_s >= 0.001) {
        return Err(GeorefError::Precondition(format!(
            "sample interval must be at least 1 ms, got {sample_interval_s} s"
        )));
    }
    let entries = &track.entries;
    let Some(last) = entries.last() else {
        return Err(GeorefError::EmptyTrack);
    };
    let end_s = last.end_ms as f64 / 1000.0;
    let mut tags = Vec::new();
    let mut seg = 0;
    for k in 0u64.. {
        let t = k as f64 * sample_interval_s;
        if k > 0 && t >= end_s {
            break;
        }
        while seg + 1 < entries.len() && entries[seg + 1].mid_s() <= t {
            seg += 1;
        }
        let a = &entries[seg];
        let (lat, lon, alt) = match entries.get(seg + 1) {
            Some(b) if t > a.mid_s() => {
                let f = (t - a.mid_s()) / (b.mid_s() - a.mid_s());
                (
                    a.lat + (b.lat - a.lat) * f,
                    a.lon + (b.lon - a.lon) * f,
                    a.alt_m + (b.alt_m - a.alt_m) * f,
                )
            }
            _ => (a.lat, a.lon, a.alt_m),
        };
        tags.push(FrameTag {
            frame_index: (t * fps + 1e-9).floor() as u64,
            video_time_ms: (t * 1000.0).round() as u64,
            position: GeoPoint::new(lat, lon)?,
            alt_m: alt,
        });
    }
    Ok(tags)
}

/// Frame-tag table with header `frame_index,video_time_ms,lat,lon,alt_m`.
pub fn frame_tags_csv(tags: &[FrameTag]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["frame_index", "video_time_ms", "lat", "lon", "alt_m"])
        .expect("in-memory csv");
    for t in tags {
        wtr.write_record([
            t.frame_index.to_string(),
            t.video_time_ms.to_string(),
            format!("{:.8}", t.position.lat_deg),
            format!("{:.8}", t.position.lon_deg),
            format!("{:.3}", t.alt_m),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}
