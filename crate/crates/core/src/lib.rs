//! Terrain-aware coverage planning and imagery audit for drone search surveys.

pub mod audit;
pub mod camera;
pub mod defaults;
pub mod geo;
pub mod georef;
pub mod planner;
pub mod terrain;

pub use camera::{CameraModel, CameraSpec, TargetProfile};
pub use geo::{GeoPoint, GeoPolygon, LocalFrame, LocalPoint, LocalPolygon};
pub use planner::{MissionPlan, PatchPlan, PlanError, PlanParams};
pub use terrain::{DemRaster, TerrainPatch};
