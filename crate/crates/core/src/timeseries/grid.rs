use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub latitude: f64,
    pub longitude: f64,
}

impl LatLon {
    pub fn new(latitude: f64, longitude: f64) -> Self {
        Self {
            latitude,
            longitude,
        }
    }
}

/// Square grid of sample points centred on a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: LatLon,
    pub span_km: f64,
    pub points_per_side: usize,
}

/// One generated grid point with its (row, col) position; row runs south to
/// north, col runs west to east.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub row: usize,
    pub col: usize,
    pub coord: LatLon,
}

impl GridPoint {
    /// Column-name suffix used by the replay format, e.g. `_3_3`.
    pub fn suffix(&self) -> String {
        format!("_{}_{}", self.row, self.col)
    }
}

impl GridSpec {
    pub fn spacing_km(&self) -> f64 {
        if self.points_per_side > 1 {
            self.span_km / (self.points_per_side - 1) as f64
        } else {
            0.0
        }
    }
}

/// Equidistant grid using a local equirectangular km-to-degree conversion.
pub fn build_grid(spec: &GridSpec) -> Result<Vec<GridPoint>> {
    if spec.points_per_side == 0 {
        return Err(Error::InvalidGrid("points_per_side must be >= 1".into()));
    }
    if !(spec.span_km >= 0.0) || !spec.span_km.is_finite() {
        return Err(Error::InvalidGrid(format!("span_km {} must be >= 0", spec.span_km)));
    }
    let n = spec.points_per_side;
    let spacing = spec.spacing_km();
    let half = (n - 1) as f64 / 2.0;
    let cos_lat = spec.center.latitude.to_radians().cos();
    if cos_lat.abs() < 1e-12 {
        return Err(Error::InvalidGrid("grid centre at a pole".into()));
    }
    let mut points = Vec::with_capacity(n * n);
    for row in 0..n {
        let north_km = (row as f64 - half) * spacing;
        for col in 0..n {
            let east_km = (col as f64 - half) * spacing;
            let dlat = (north_km / EARTH_RADIUS_KM).to_degrees();
            let dlon = (east_km / (EARTH_RADIUS_KM * cos_lat)).to_degrees();
            points.push(GridPoint {
                row,
                col,
                coord: LatLon::new(spec.center.latitude + dlat, spec.center.longitude + dlon),
            });
        }
    }
    Ok(points)
}
