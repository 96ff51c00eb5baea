//! Nadir camera optics: ground sampling distance, image footprints and the
//! altitude at which a target renders at the detector's expected size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum relative mismatch between horizontal and vertical pixel pitch
/// before a camera is flagged as non-square.
pub const PIXEL_SQUARENESS_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("camera field {field} must be positive and finite, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("altitude must be positive, got {0} m")]
    Altitude(f64),
    #[error("camera has no shutter time; cannot bound motion blur")]
    MissingShutter,
    #[error("blur budget must be positive, got {0} px")]
    BlurBudget(f64),
    #[error("target profile: {0}")]
    Profile(String),
    #[error("camera file: {0}")]
    Parse(String),
}

fn positive(field: &'static str, value: f64) -> Result<f64, CameraError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(CameraError::NonPositive { field, value })
    }
}

/// The on-disk camera description. Field names are part of the file format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub focal_mm: f64,
    pub sensor_w_mm: f64,
    pub sensor_h_mm: f64,
    pub image_w_px: u32,
    pub image_h_px: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shutter_s: Option<f64>,
}

/// A validated pinhole camera pointed straight down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraSpec", into = "CameraSpec")]
pub struct CameraModel {
    spec: CameraSpec,
    non_square_pixels: bool,
}

impl TryFrom<CameraSpec> for CameraModel {
    type Error = CameraError;

    fn try_from(spec: CameraSpec) -> Result<Self, CameraError> {
        CameraModel::new(spec)
    }
}

impl From<CameraModel> for CameraSpec {
    fn from(cam: CameraModel) -> CameraSpec {
        cam.spec
    }
}

impl CameraModel {
    pub fn new(spec: CameraSpec) -> Result<Self, CameraError> {
        positive("focal_mm", spec.focal_mm)?;
        positive("sensor_w_mm", spec.sensor_w_mm)?;
        positive("sensor_h_mm", spec.sensor_h_mm)?;
        positive("image_w_px", spec.image_w_px as f64)?;
        positive("image_h_px", spec.image_h_px as f64)?;
        if let Some(s) = spec.shutter_s {
            positive("shutter_s", s)?;
        }
        let pitch_w = spec.sensor_w_mm / spec.image_w_px as f64;
        let pitch_h = spec.sensor_h_mm / spec.image_h_px as f64;
        let non_square_pixels = (pitch_w / pitch_h - 1.0).abs() > PIXEL_SQUARENESS_TOLERANCE;
        Ok(Self {
            spec,
            non_square_pixels,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CameraError> {
        let spec: CameraSpec = serde_json::from_str(text).map_err(|e| CameraError::Parse(e.to_string()))?;
        Self::new(spec)
    }

    pub fn spec(&self) -> &CameraSpec {
        &self.spec
    }

    pub fn focal_mm(&self) -> f64 {
        self.spec.focal_mm
    }

    pub fn sensor_w_mm(&self) -> f64 {
        self.spec.sensor_w_mm
    }

    pub fn sensor_h_mm(&self) -> f64 {
        self.spec.sensor_h_mm
    }

    pub fn image_w_px(&self) -> u32 {
        self.spec.image_w_px
    }

    pub fn image_h_px(&self) -> u32 {
        self.spec.image_h_px
    }

    pub fn shutter_s(&self) -> Option<f64> {
        self.spec.shutter_s
    }

    /// Set when horizontal and vertical pixel pitch differ by more than
    /// [`PIXEL_SQUARENESS_TOLERANCE`]; width-based GSD is then approximate.
    pub fn non_square_pixels(&self) -> bool {
        self.non_square_pixels
    }
}

/// Statistics of the detector's training targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTargetProfile")]
pub struct TargetProfile {
    pub target_size_m: f64,
    pub bbox_mean_px: f64,
    pub bbox_std_px: f64,
}

#[derive(Deserialize)]
struct RawTargetProfile {
    target_size_m: f64,
    bbox_mean_px: f64,
    bbox_std_px: f64,
}

impl TryFrom<RawTargetProfile> for TargetProfile {
    type Error = CameraError;

    fn try_from(raw: RawTargetProfile) -> Result<Self, CameraError> {
        TargetProfile::new(raw.target_size_m, raw.bbox_mean_px, raw.bbox_std_px)
    }
}

impl TargetProfile {
    /// HERIDAL person boxes: 64 px mean side, 23 px standard deviation.
    pub const HERIDAL_MEAN_PX: f64 = 64.0;
    pub const HERIDAL_STD_PX: f64 = 23.0;
    /// Configurable default physical extent of a prone or crouched person.
    pub const DEFAULT_TARGET_SIZE_M: f64 = 0.7;

    pub fn new(target_size_m: f64, bbox_mean_px: f64, bbox_std_px: f64) -> Result<Self, CameraError> {
        for (name, v) in [
            ("target_size_m", target_size_m),
            ("bbox_mean_px", bbox_mean_px),
            ("bbox_std_px", bbox_std_px),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CameraError::Profile(format!("{name} must be positive, got {v}")));
            }
        }
        if bbox_std_px >= bbox_mean_px {
            return Err(CameraError::Profile(format!(
                "bbox_std_px ({bbox_std_px}) must be below bbox_mean_px ({bbox_mean_px})"
            )));
        }
        Ok(Self {
            target_size_m,
            bbox_mean_px,
            bbox_std_px,
        })
    }

    pub fn heridal(target_size_m: f64) -> Result<Self, CameraError> {
        Self::new(target_size_m, Self::HERIDAL_MEAN_PX, Self::HERIDAL_STD_PX)
    }
}

impl Default for TargetProfile {
    fn default() -> Self {
        Self {
            target_size_m: Self::DEFAULT_TARGET_SIZE_M,
            bbox_mean_px: Self::HERIDAL_MEAN_PX,
            bbox_std_px: Self::HERIDAL_STD_PX,
        }
    }
}

fn check_altitude(agl_m: f64) -> Result<f64, CameraError> {
    if agl_m.is_finite() && agl_m > 0.0 {
        Ok(agl_m)
    } else {
        Err(CameraError::Altitude(agl_m))
    }
}

/// Ground metres per pixel across the image width.
pub fn ground_sampling_distance(cam: &CameraModel, agl_m: f64) -> Result<f64, CameraError> {
    let agl = check_altitude(agl_m)?;
    Ok((cam.sensor_w_mm() / 1000.0 * agl) / (cam.focal_mm() / 1000.0 * cam.image_w_px() as f64))
}

/// Same as [`ground_sampling_distance`] but from the sensor height; agrees with
/// it to within the squareness tolerance.
pub fn ground_sampling_distance_vertical(cam: &CameraModel, agl_m: f64) -> Result<f64, CameraError> {
    let agl = check_altitude(agl_m)?;
    Ok((cam.sensor_h_mm() * agl) / (cam.focal_mm() * cam.image_h_px() as f64))
}

/// Flat-ground nadir footprint `(width_m, height_m)`; width spans the image's
/// horizontal axis.
pub fn footprint_dimensions(cam: &CameraModel, agl_m: f64) -> Result<(f64, f64), CameraError> {
    let agl = check_altitude(agl_m)?;
    Ok((
        agl * cam.sensor_w_mm() / cam.focal_mm(),
        agl * cam.sensor_h_mm() / cam.focal_mm(),
    ))
}

pub fn projected_target_px(cam: &CameraModel, agl_m: f64, target_size_m: f64) -> Result<f64, CameraError> {
    Ok(target_size_m / ground_sampling_distance(cam, agl_m)?)
}

/// Altitude above ground at which `profile.target_size_m` spans
/// `profile.bbox_mean_px` pixels.
pub fn altitude_for_target(cam: &CameraModel, profile: &TargetProfile) -> f64 {
    (profile.target_size_m / profile.bbox_mean_px) * (cam.focal_mm() * cam.image_w_px() as f64 / cam.sensor_w_mm())
}

/// One standard deviation either side of the mean box size.
pub fn acceptable_px_band(profile: &TargetProfile) -> (f64, f64) {
    (
        profile.bbox_mean_px - profile.bbox_std_px,
        profile.bbox_mean_px + profile.bbox_std_px,
    )
}

/// Highest ground speed that keeps motion blur within `max_blur_px`.
pub fn max_ground_speed(cam: &CameraModel, gsd_m: f64, max_blur_px: f64) -> Result<f64, CameraError> {
    let shutter = cam.shutter_s().ok_or(CameraError::MissingShutter)?;
    if !(max_blur_px.is_finite() && max_blur_px > 0.0) {
        return Err(CameraError::BlurBudget(max_blur_px));
    }
    Ok(max_blur_px * gsd_m / shutter)
}
