//! Spherical geodesy on WGS84 coordinates.
//!
//! Distances use the haversine formula on a sphere of radius
//! [`EARTH_RADIUS_M`]. Point-to-segment distances use an equirectangular
//! projection centred on the segment, which is accurate to centimetres for
//! the sub-kilometre segments this crate works with.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::math;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const DEG: f64 = core::f64::consts::PI / 180.0;

/// Meters spanned by one degree of latitude (and of longitude at the equator).
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * DEG;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("bearing is undefined between coincident points")]
    DegenerateBearing,
    #[error("bounding box crosses the antimeridian or a pole")]
    UnsupportedRegion,
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::OutOfRange { lat, lon });
        }
        Ok(Self { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// The point with both axes rounded to `decimals` places.
    pub fn rounded(&self, decimals: i32) -> Self {
        Self {
            lat: math::round_to(self.lat, decimals),
            lon: math::round_to(self.lon, decimals),
        }
    }

    /// True when both axes differ by at most `tol_deg` degrees.
    #[inline]
    pub fn approx_eq(&self, other: &GeoPoint, tol_deg: f64) -> bool {
        (self.lat - other.lat).abs() <= tol_deg && (self.lon - other.lon).abs() <= tol_deg
    }

    /// `[lat, lon]` with a fixed number of decimals, as used in prompts.
    pub fn bracketed(&self, decimals: usize) -> alloc::string::String {
        alloc::format!("[{:.*}, {:.*}]", decimals, self.lat, decimals, self.lon)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.7}, {:.7}]", self.lat, self.lon)
    }
}

impl Serialize for GeoPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.lat, self.lon].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GeoPoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [lat, lon] = <[f64; 2]>::deserialize(deserializer)?;
        GeoPoint::new(lat, lon).map_err(serde::de::Error::custom)
    }
}

/// An ordered sequence of points. May be empty (e.g. a decoded empty string);
/// operations that need points document their own minimum.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polyline(Vec<GeoPoint>);

impl Polyline {
    pub fn new(points: Vec<GeoPoint>) -> Self {
        Self(points)
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.0
    }

    pub fn into_points(self) -> Vec<GeoPoint> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&GeoPoint> {
        self.0.first()
    }

    pub fn last(&self) -> Option<&GeoPoint> {
        self.0.last()
    }

    pub fn push(&mut self, p: GeoPoint) {
        self.0.push(p);
    }

    /// Sum of consecutive haversine distances.
    pub fn path_length(&self) -> f64 {
        path_length(&self.0)
    }

    pub fn reversed(&self) -> Self {
        let mut pts = self.0.clone();
        pts.reverse();
        Self(pts)
    }
}

impl From<Vec<GeoPoint>> for Polyline {
    fn from(points: Vec<GeoPoint>) -> Self {
        Self(points)
    }
}

impl FromIterator<GeoPoint> for Polyline {
    fn from_iter<I: IntoIterator<Item = GeoPoint>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Sum of consecutive haversine distances over a point slice.
pub fn path_length(points: &[GeoPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| haversine_distance(&w[0], &w[1]))
        .sum()
}

/// Axis-aligned latitude/longitude box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BBox {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self, GeoError> {
        let lat_ok = |v: f64| (-90.0..=90.0).contains(&v);
        let lon_ok = |v: f64| (-180.0..=180.0).contains(&v);
        if !(lat_ok(south) && lat_ok(north) && lon_ok(west) && lon_ok(east)) {
            return Err(GeoError::UnsupportedRegion);
        }
        if south > north || west > east {
            return Err(GeoError::UnsupportedRegion);
        }
        Ok(Self {
            south,
            west,
            north,
            east,
        })
    }

    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lat >= self.south && p.lat <= self.north && p.lon >= self.west && p.lon <= self.east
    }

    /// True when `other` lies inside `self` (boundaries may touch).
    pub fn encloses(&self, other: &BBox) -> bool {
        self.south <= other.south
            && self.west <= other.west
            && self.north >= other.north
            && self.east >= other.east
    }
}

/// Great-circle distance in meters.
pub fn haversine_distance(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat * DEG;
    let phi2 = b.lat * DEG;
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon) * DEG;
    let s1 = math::sin(dphi / 2.0);
    let s2 = math::sin(dlambda / 2.0);
    let h = s1 * s1 + math::cos(phi1) * math::cos(phi2) * s2 * s2;
    2.0 * EARTH_RADIUS_M * math::asin(math::sqrt(h.clamp(0.0, 1.0)))
}

/// Initial great-circle bearing from `a` to `b` in degrees, `[0, 360)`,
/// clockwise from north.
pub fn initial_bearing(a: &GeoPoint, b: &GeoPoint) -> Result<f64, GeoError> {
    if a == b {
        return Err(GeoError::DegenerateBearing);
    }
    let phi1 = a.lat * DEG;
    let phi2 = b.lat * DEG;
    let dlambda = (b.lon - a.lon) * DEG;
    let y = math::sin(dlambda) * math::cos(phi2);
    let x = math::cos(phi1) * math::sin(phi2) - math::sin(phi1) * math::cos(phi2) * math::cos(dlambda);
    Ok(normalize_bearing(math::atan2(y, x) / DEG))
}

/// Maps any angle in degrees into `[0, 360)`.
pub fn normalize_bearing(deg: f64) -> f64 {
    let r = deg % 360.0;
    let r = if r < 0.0 { r + 360.0 } else { r };
    // -1e-17 % 360 + 360 rounds to exactly 360.0
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Longitude difference `to - from` wrapped into `[-180, 180]`.
fn lon_delta(from: f64, to: f64) -> f64 {
    let mut d = to - from;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d
}

/// Closest point of a segment to a query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProjection {
    /// Foot point on the segment.
    pub point: GeoPoint,
    /// Distance in meters from the query point to `point`.
    pub distance: f64,
    /// Fraction along the segment, `0` at `a`, `1` at `b`.
    pub t: f64,
}

/// Projects `p` onto segment `a`–`b` in a local equirectangular frame centred
/// on the segment midpoint.
pub fn project_to_segment(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> SegmentProjection {
    let at_a = SegmentProjection {
        point: *a,
        distance: haversine_distance(p, a),
        t: 0.0,
    };
    if a == b {
        return at_a;
    }
    let mid_lat = (a.lat + b.lat) / 2.0 * DEG;
    let kx = math::cos(mid_lat);
    let bx = lon_delta(a.lon, b.lon) * kx;
    let by = b.lat - a.lat;
    let px = lon_delta(a.lon, p.lon) * kx;
    let py = p.lat - a.lat;
    let len2 = bx * bx + by * by;
    let t = (px * bx + py * by) / len2;
    if t <= 0.0 {
        return at_a;
    }
    let at_b = SegmentProjection {
        point: *b,
        distance: haversine_distance(p, b),
        t: 1.0,
    };
    if t >= 1.0 {
        return at_b;
    }
    let mut lon = a.lon + t * lon_delta(a.lon, b.lon);
    if lon > 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    let foot = GeoPoint {
        lat: a.lat + t * by,
        lon,
    };
    let inner = SegmentProjection {
        point: foot,
        distance: haversine_distance(p, &foot),
        t,
    };
    // The projected foot is within millimetres of optimal; never report more
    // than the distance to either endpoint.
    [inner, at_a, at_b]
        .into_iter()
        .min_by(|x, y| x.distance.total_cmp(&y.distance))
        .unwrap_or(inner)
}

/// Distance in meters from `p` to the segment `a`–`b`.
pub fn point_to_segment_distance(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> f64 {
    project_to_segment(p, a, b).distance
}

/// Minimum distance from `p` to a polyline's segments; a single-point
/// polyline degenerates to a point distance. `None` when empty.
pub fn point_to_polyline_distance(p: &GeoPoint, line: &[GeoPoint]) -> Option<f64> {
    match line.len() {
        0 => None,
        1 => Some(haversine_distance(p, &line[0])),
        _ => line
            .windows(2)
            .map(|w| point_to_segment_distance(p, &w[0], &w[1]))
            .min_by(f64::total_cmp),
    }
}

/// Eight-way compass direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cardinal {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Cardinal {
    pub const ALL: [Cardinal; 8] = [
        Cardinal::N,
        Cardinal::NE,
        Cardinal::E,
        Cardinal::SE,
        Cardinal::S,
        Cardinal::SW,
        Cardinal::W,
        Cardinal::NW,
    ];

    /// Nearest of the eight canonical bearings. A bearing exactly on a sector
    /// boundary belongs to the counter-clockwise sector (22.5 maps to N).
    pub fn from_bearing(bearing: f64) -> Cardinal {
        let b = normalize_bearing(bearing);
        let idx = math::ceil((b - 22.5) / 45.0) as i64;
        Self::ALL[idx.rem_euclid(8) as usize]
    }

    /// N=0, NE=45, ..., NW=315.
    pub fn canonical_bearing(self) -> f64 {
        self as u8 as f64 * 45.0
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            Cardinal::N => "N",
            Cardinal::NE => "NE",
            Cardinal::E => "E",
            Cardinal::SE => "SE",
            Cardinal::S => "S",
            Cardinal::SW => "SW",
            Cardinal::W => "W",
            Cardinal::NW => "NW",
        }
    }

    /// Lower-case word, e.g. `"southeast"`.
    pub fn word(self) -> &'static str {
        match self {
            Cardinal::N => "north",
            Cardinal::NE => "northeast",
            Cardinal::E => "east",
            Cardinal::SE => "southeast",
            Cardinal::S => "south",
            Cardinal::SW => "southwest",
            Cardinal::W => "west",
            Cardinal::NW => "northwest",
        }
    }

    /// Parses a direction word or abbreviation, case-insensitively.
    pub fn parse(s: &str) -> Option<Cardinal> {
        let s = s.trim();
        Self::ALL.into_iter().find(|c| {
            s.eq_ignore_ascii_case(c.word())
                || s.eq_ignore_ascii_case(c.abbrev())
                || matches!(
                    (c, s.to_ascii_lowercase().as_str()),
                    (Cardinal::NE, "north-east")
                        | (Cardinal::SE, "south-east")
                        | (Cardinal::SW, "south-west")
                        | (Cardinal::NW, "north-west")
                )
        })
    }
}

impl fmt::Display for Cardinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

/// `cardinal_8` as a free function.
pub fn cardinal_8(bearing: f64) -> Cardinal {
    Cardinal::from_bearing(bearing)
}

/// Smallest angle between two bearings, in `[0, 180]`.
pub fn circular_angle_error(expected: f64, actual: f64) -> f64 {
    let diff = (expected - actual).abs();
    let diff = diff % 360.0;
    diff.min(360.0 - diff)
}

/// The rectangle spanned by `a` and `b`, pushed outward by `buffer_m` meters
/// on every side. Degrees per meter are taken at the box's mean latitude.
pub fn expanded_bbox(a: &GeoPoint, b: &GeoPoint, buffer_m: f64) -> Result<BBox, GeoError> {
    let buffer_m = buffer_m.max(0.0);
    let south = a.lat.min(b.lat);
    let north = a.lat.max(b.lat);
    let west = a.lon.min(b.lon);
    let east = a.lon.max(b.lon);
    if east - west > 180.0 {
        // the short way between the points crosses the antimeridian
        return Err(GeoError::UnsupportedRegion);
    }
    let mean_lat = (south + north) / 2.0;
    let dlat = buffer_m / METERS_PER_DEGREE;
    let coslat = math::cos(mean_lat * DEG);
    if coslat <= 1e-9 {
        return Err(GeoError::UnsupportedRegion);
    }
    let dlon = buffer_m / (METERS_PER_DEGREE * coslat);
    BBox::new(south - dlat, west - dlon, north + dlat, east + dlon)
}

/// Point a fraction `f` of the way along the great circle from `a` to `b`.
pub fn intermediate_point(a: &GeoPoint, b: &GeoPoint, f: f64) -> GeoPoint {
    let delta = haversine_distance(a, b) / EARTH_RADIUS_M;
    if delta == 0.0 {
        return *a;
    }
    let (phi1, l1) = (a.lat * DEG, a.lon * DEG);
    let (phi2, l2) = (b.lat * DEG, b.lon * DEG);
    let sd = math::sin(delta);
    let wa = math::sin((1.0 - f) * delta) / sd;
    let wb = math::sin(f * delta) / sd;
    let x = wa * math::cos(phi1) * math::cos(l1) + wb * math::cos(phi2) * math::cos(l2);
    let y = wa * math::cos(phi1) * math::sin(l1) + wb * math::cos(phi2) * math::sin(l2);
    let z = wa * math::sin(phi1) + wb * math::sin(phi2);
    let lat = math::atan2(z, math::sqrt(x * x + y * y)) / DEG;
    let lon = math::atan2(y, x) / DEG;
    GeoPoint {
        lat: lat.clamp(-90.0, 90.0),
        lon: lon.clamp(-180.0, 180.0),
    }
}
