//! Default parameter values. The same table is echoed into every plan and
//! audit document so a result can be reproduced from its output alone.

use serde_json::{json, Value};

use crate::camera::TargetProfile;

pub const OVERLAP: f64 = 0.60;
pub const OVERLAP_MIN: f64 = 0.5;
pub const OVERLAP_MAX: f64 = 0.9;
pub const GSD_TOLERANCE: f64 = 0.10;
pub const CANOPY_CLEARANCE_M: f64 = 10.0;
pub const CRUISE_SPEED_MPS: f64 = 10.0;
pub const TURN_PENALTY_S: f64 = 8.0;
pub const CLIMB_RATE_MPS: f64 = 2.5;
pub const MAX_SORTIE_S: f64 = 1200.0;
/// Camera pitch for every planned image: straight down.
pub const CAMERA_PITCH_DEG: f64 = -90.0;
pub const NADIR_TOLERANCE_DEG: f64 = 5.0;
/// Stand-in for "mid-day"; images with the sun lower than this are flagged.
pub const SUN_MIN_ELEVATION_DEG: f64 = 40.0;
pub const LABEL_MIN_DIGITS: usize = 4;
pub const COVERAGE_CELL_M: f64 = 1.0;

pub fn table() -> Value {
    json!({
        "front_overlap": OVERLAP,
        "side_overlap": OVERLAP,
        "overlap_range": [OVERLAP_MIN, OVERLAP_MAX],
        "gsd_tolerance": GSD_TOLERANCE,
        "canopy_clearance_m": CANOPY_CLEARANCE_M,
        "cruise_speed_mps": CRUISE_SPEED_MPS,
        "turn_penalty_s": TURN_PENALTY_S,
        "climb_rate_mps": CLIMB_RATE_MPS,
        "max_sortie_s": MAX_SORTIE_S,
        "target_size_m": TargetProfile::DEFAULT_TARGET_SIZE_M,
        "bbox_mean_px": TargetProfile::HERIDAL_MEAN_PX,
        "bbox_std_px": TargetProfile::HERIDAL_STD_PX,
        "nadir_tolerance_deg": NADIR_TOLERANCE_DEG,
        "sun_min_elevation_deg": SUN_MIN_ELEVATION_DEG,
        "label_min_digits": LABEL_MIN_DIGITS,
        "coverage_cell_m": COVERAGE_CELL_M,
    })
}
