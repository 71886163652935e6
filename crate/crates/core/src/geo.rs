//! Great-circle geometry on WGS84 coordinates.

/// Mean earth radius in kilometers (IUGG).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two (lat, lon) points in kilometers.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let s = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * s.sqrt().asin()
}

/// Axis-aligned lat/lon bounding box.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }
}

impl Default for BoundingBox {
    /// Greater New York City area.
    fn default() -> Self {
        BoundingBox { min_lat: 40.4, max_lat: 41.1, min_lon: -74.3, max_lon: -73.5 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_at_same_point() {
        assert_eq!(haversine_km((40.75, -73.99), (40.75, -73.99)), 0.0);
    }

    #[test]
    fn one_degree_latitude_is_about_111_km() {
        let d = haversine_km((40.0, -74.0), (41.0, -74.0));
        assert!((d - 111.2).abs() < 0.3, "got {d}");
    }

    #[test]
    fn bounding_box_contains_edges() {
        let b = BoundingBox { min_lat: 0.0, max_lat: 1.0, min_lon: 0.0, max_lon: 1.0 };
        assert!(b.contains(0.0, 1.0));
        assert!(!b.contains(1.0001, 0.5));
    }
}
