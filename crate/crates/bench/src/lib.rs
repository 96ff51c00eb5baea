//! Synthetic inputs shared by the benchmarks.

use sarplan::audit::{parse_timestamp, ManifestRecord};
use sarplan::{DemRaster, GeoPoint, GeoPolygon, LocalFrame, LocalPoint};

pub const CENTRE: (f64, f64) = (35.2, 138.6);

/// Rolling terrain of `n` x `n` cells of 0.0001 deg with `relief_m` of relief.
pub fn rolling_dem(n: usize, relief_m: f64) -> DemRaster {
    let half = n as f64 * 0.0001 / 2.0;
    DemRaster::from_fn(n, n, CENTRE.1 - half, CENTRE.0 - half, 0.0001, |r, c| {
        let (x, y) = (c as f64 / n as f64, r as f64 / n as f64);
        let v = (x * 9.0).sin() * (y * 7.0).cos() + 0.5 * (x * 23.0 + y * 17.0).sin();
        (200.0 + relief_m * v * 100.0).round() / 100.0
    })
    .expect("valid raster")
}

/// Square search area of `side_m` metres centred on [`CENTRE`].
pub fn square_aoi(side_m: f64) -> GeoPolygon {
    let frame = LocalFrame::new(GeoPoint::new(CENTRE.0, CENTRE.1).expect("valid centre"));
    let h = side_m / 2.0;
    let ring = [(-h, -h), (h, -h), (h, h), (-h, h)]
        .iter()
        .map(|&(e, n)| frame.unproject(LocalPoint::new(e, n)).expect("inside the frame"))
        .collect();
    GeoPolygon::new(ring, vec![]).expect("valid polygon")
}

/// A lawnmower grid of nadir images over [`square_aoi`] of the same side.
pub fn image_grid(side_m: f64, spacing_m: f64) -> Vec<ManifestRecord> {
    let frame = LocalFrame::new(GeoPoint::new(CENTRE.0, CENTRE.1).expect("valid centre"));
    let n = (side_m / spacing_m).ceil() as usize + 1;
    let t0 = parse_timestamp("2023-05-01T03:00:00Z").expect("valid time");
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let p = LocalPoint::new(
                -side_m / 2.0 + j as f64 * spacing_m,
                -side_m / 2.0 + i as f64 * spacing_m,
            );
            let g = frame.unproject(p).expect("inside the frame");
            out.push(ManifestRecord {
                image_id: format!("D1-{:05}", out.len()),
                timestamp: t0,
                lat: Some(g.lat_deg),
                lon: Some(g.lon_deg),
                agl_m: Some(40.0),
                gimbal_pitch_deg: Some(-90.0),
                heading_deg: Some(0.0),
                drone_id: "D1".into(),
            });
        }
    }
    out
}
