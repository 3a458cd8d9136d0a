//! Distances and neighborhood queries over planar or spherical point sets.
//!
//! Planar points are meters east/north. Spherical points are degrees
//! (`x` = longitude, `y` = latitude) on a sphere of fixed radius.
//!
//! Neighborhood membership everywhere in this crate is strict: a point at
//! exactly the query radius is outside.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in meters, used for every haversine computation.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance, for coordinates in meters.
    pub fn distance_planar(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistanceModel {
    /// Great-circle distance on a sphere; coordinates in degrees.
    Haversine { sphere_radius: f64 },
    /// Euclidean distance; coordinates in meters.
    Planar,
}

impl Default for DistanceModel {
    fn default() -> Self {
        DistanceModel::Planar
    }
}

impl DistanceModel {
    pub const fn earth() -> Self {
        DistanceModel::Haversine {
            sphere_radius: EARTH_RADIUS_M,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistanceModel::Haversine { sphere_radius } => {
                if !(sphere_radius.is_finite() && sphere_radius > 0.0) {
                    return Err(Error::invalid(format!(
                        "sphere radius must be positive, got {sphere_radius}"
                    )));
                }
                Ok(())
            }
            DistanceModel::Planar => Ok(()),
        }
    }

    /// Check that `p` is a valid location under this model.
    pub fn check_point(&self, p: Point) -> Result<()> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite coordinates ({}, {})",
                p.x, p.y
            )));
        }
        if let DistanceModel::Haversine { .. } = self {
            if !(-90.0..=90.0).contains(&p.y) || !(-180.0..=180.0).contains(&p.x) {
                return Err(Error::invalid(format!(
                    "lon/lat ({}, {}) out of range",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    /// Distance in meters without validating the inputs.
    #[inline]
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        match *self {
            DistanceModel::Planar => (b.x - a.x).hypot(b.y - a.y),
            DistanceModel::Haversine { sphere_radius } => {
                let phi1 = a.y.to_radians();
                let phi2 = b.y.to_radians();
                let dphi = phi2 - phi1;
                let dlambda = (b.x - a.x).to_radians();
                let s_phi = (0.5 * dphi).sin();
                let s_lambda = (0.5 * dlambda).sin();
                let h = s_phi * s_phi + phi1.cos() * phi2.cos() * s_lambda * s_lambda;
                2.0 * sphere_radius * h.sqrt().min(1.0).asin()
            }
        }
    }

    /// Local east/north offset of `p` from `origin` in meters.
    ///
    /// Exact for the planar model; an equirectangular tangent-plane
    /// approximation for the sphere.
    pub fn local_offset(&self, origin: Point, p: Point) -> (f64, f64) {
        match *self {
            DistanceModel::Planar => (p.x - origin.x, p.y - origin.y),
            DistanceModel::Haversine { sphere_radius } => {
                let mut dlon = p.x - origin.x;
                if dlon > 180.0 {
                    dlon -= 360.0;
                } else if dlon < -180.0 {
                    dlon += 360.0;
                }
                let east = sphere_radius * dlon.to_radians() * origin.y.to_radians().cos();
                let north = sphere_radius * (p.y - origin.y).to_radians();
                (east, north)
            }
        }
    }

    /// Inverse of [`DistanceModel::local_offset`].
    pub fn offset_point(&self, origin: Point, east: f64, north: f64) -> Point {
        match *self {
            DistanceModel::Planar => Point::new(origin.x + east, origin.y + north),
            DistanceModel::Haversine { sphere_radius } => {
                let lat = origin.y + (north / sphere_radius).to_degrees();
                let coslat = origin.y.to_radians().cos().max(1e-12);
                let mut lon = origin.x + (east / (sphere_radius * coslat)).to_degrees();
                if lon > 180.0 {
                    lon -= 360.0;
                } else if lon < -180.0 {
                    lon += 360.0;
                }
                Point::new(lon, lat.clamp(-90.0, 90.0))
            }
        }
    }
}

/// Validated distance between two points, in meters.
pub fn distance(a: Point, b: Point, model: &DistanceModel) -> Result<f64> {
    model.validate()?;
    model.check_point(a)?;
    model.check_point(b)?;
    Ok(model.distance(a, b))
}

/// A radius-query hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub distance: f64,
}

type CellKey = (i64, i64);

/// Uniform-grid bucket index over points carrying `u64` payload ids.
///
/// Immutable after [`SpatialIndex::build`]; queries take `&self` and may run
/// concurrently.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    model: DistanceModel,
    cell_size: f64,
    /// Grid pitch in coordinate units (meters or degrees).
    pitch: f64,
    points: Vec<(u64, Point)>,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl SpatialIndex {
    pub fn build<I>(model: DistanceModel, cell_size: f64, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, Point)>,
    {
        model.validate()?;
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::invalid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        let pitch = match model {
            DistanceModel::Planar => cell_size,
            DistanceModel::Haversine { sphere_radius } => (cell_size / sphere_radius).to_degrees(),
        };
        let points: Vec<(u64, Point)> = items.into_iter().collect();
        if points.len() > u32::MAX as usize {
            return Err(Error::invalid("too many points for one index"));
        }
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        for (i, &(_, p)) in points.iter().enumerate() {
            model.check_point(p)?;
            cells
                .entry(Self::key_for(pitch, p))
                .or_default()
                .push(i as u32);
        }
        Ok(Self {
            model,
            cell_size,
            pitch,
            points,
            cells,
        })
    }

    #[inline]
    fn key_for(pitch: f64, p: Point) -> CellKey {
        ((p.x / pitch).floor() as i64, (p.y / pitch).floor() as i64)
    }

    pub fn model(&self) -> DistanceModel {
        self.model
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// All points with `distance(center, p) < r`, sorted by distance then id.
    pub fn radius_query(&self, center: Point, r: f64) -> Result<Vec<Neighbor>> {
        if r.is_nan() || r <= 0.0 {
            return Err(Error::invalid(format!(
                "query radius must be positive, got {r}"
            )));
        }
        self.model.check_point(center)?;
        let mut hits = Vec::new();
        if self.points.is_empty() {
            return Ok(hits);
        }
        let mut visit = |idx: &[u32]| {
            for &i in idx {
                let (id, p) = self.points[i as usize];
                let d = self.model.distance(center, p);
                if d < r {
                    hits.push(Neighbor { id, distance: d });
                }
            }
        };
        match self.cell_ranges(center, r) {
            Some(ranges) => {
                for (xs, ys) in ranges {
                    for iy in ys.0..=ys.1 {
                        for ix in xs.0..=xs.1 {
                            if let Some(idx) = self.cells.get(&(ix, iy)) {
                                visit(idx);
                            }
                        }
                    }
                }
            }
            None => {
                for idx in self.cells.values() {
                    visit(idx);
                }
            }
        }
        hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
        Ok(hits)
    }

    /// Cell rectangles covering the query disc, or `None` when scanning every
    /// occupied cell is cheaper (or the disc wraps a pole).
    fn cell_ranges(&self, c: Point, r: f64) -> Option<Vec<((i64, i64), (i64, i64))>> {
        if !r.is_finite() {
            return None;
        }
        let budget = self.cells.len() as f64;
        let to_cells = |lo: f64, hi: f64| -> (f64, f64) {
            ((lo / self.pitch).floor() - 1.0, (hi / self.pitch).floor() + 1.0)
        };
        let ranges: Vec<((f64, f64), (f64, f64))> = match self.model {
            DistanceModel::Planar => {
                vec![(to_cells(c.x - r, c.x + r), to_cells(c.y - r, c.y + r))]
            }
            DistanceModel::Haversine { sphere_radius } => {
                let ang = r / sphere_radius;
                if ang >= std::f64::consts::FRAC_PI_2 {
                    return None;
                }
                let dlat = ang.to_degrees();
                let (lat_lo, lat_hi) = (c.y - dlat, c.y + dlat);
                if lat_lo <= -90.0 || lat_hi >= 90.0 {
                    return None;
                }
                let s = ang.sin() / c.y.to_radians().cos();
                if s >= 1.0 {
                    return None;
                }
                let dlon = s.asin().to_degrees();
                let ys = to_cells(lat_lo, lat_hi);
                let (lon_lo, lon_hi) = (c.x - dlon, c.x + dlon);
                if lon_lo < -180.0 {
                    vec![
                        (to_cells(lon_lo + 360.0, 180.0), ys),
                        (to_cells(-180.0, lon_hi), ys),
                    ]
                } else if lon_hi > 180.0 {
                    vec![
                        (to_cells(lon_lo, 180.0), ys),
                        (to_cells(-180.0, lon_hi - 360.0), ys),
                    ]
                } else {
                    vec![(to_cells(lon_lo, lon_hi), ys)]
                }
            }
        };
        let total: f64 = ranges
            .iter()
            .map(|(xs, ys)| (xs.1 - xs.0 + 1.0) * (ys.1 - ys.0 + 1.0))
            .sum();
        if total > budget {
            return None;
        }
        Some(
            ranges
                .into_iter()
                .map(|(xs, ys)| ((xs.0 as i64, xs.1 as i64), (ys.0 as i64, ys.1 as i64)))
                .collect(),
        )
    }
}
