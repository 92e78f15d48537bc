//! Coordinates and distances.
//!
//! Everything downstream of ingestion works in a local planar frame measured
//! in meters. Geographic coordinates are converted with an equirectangular
//! projection anchored at a per-region origin, which is accurate to well
//! under a percent over a city-sized extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// WGS84 latitude/longitude in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::NonFinite);
        }
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lat: f64,
            lon: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        GeoPoint::new(raw.lat, raw.lon).map_err(serde::de::Error::custom)
    }
}

/// Meters east (`x`) and north (`y`) of a region origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const ORIGIN: PlanarPoint = PlanarPoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn translate(self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

/// A named projection anchor, typically one city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub origin: GeoPoint,
}

impl Region {
    pub fn new(name: impl Into<String>, origin: GeoPoint) -> Self {
        Self {
            name: name.into(),
            origin,
        }
    }

    fn lon_scale(&self) -> f64 {
        EARTH_RADIUS_M * self.origin.lat.to_radians().cos()
    }
}

/// Equirectangular projection of `g` about the region origin.
pub fn project(g: GeoPoint, region: &Region) -> PlanarPoint {
    let dlat = (g.lat - region.origin.lat).to_radians();
    let dlon = (g.lon - region.origin.lon).to_radians();
    PlanarPoint::new(region.lon_scale() * dlon, EARTH_RADIUS_M * dlat)
}

/// Inverse of [`project`].
pub fn unproject(p: PlanarPoint, region: &Region) -> Result<GeoPoint> {
    if !p.is_finite() {
        return Err(Error::NonFinite);
    }
    let lat = region.origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
    let lon = region.origin.lon + (p.x / region.lon_scale()).to_degrees();
    GeoPoint::new(lat, lon)
}

/// Euclidean distance in the planar frame.
#[inline]
pub fn dist(a: PlanarPoint, b: PlanarPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Great-circle distance on the mean-radius sphere.
pub fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}
