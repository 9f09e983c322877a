//! Reconstruction baselines that need no language model.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_distance, intermediate_point, GeoPoint, Polyline};
use crate::math;
use crate::roadnet::RoadNetwork;
use crate::traces::MaskedTask;

pub mod hmm;
pub mod polyline;

pub use hmm::{hmm_map_match, viterbi, viterbi_chains, HmmParams, MatchResult, ViterbiPath};
pub use polyline::{decode_polyline, encode_polyline, PolylineError};

/// Point spacing of the linear line fed to map matching, meters.
pub const DEFAULT_INTERPOLATION_SPACING_M: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BaselineError {
    #[error("interpolation spacing must be positive")]
    InvalidSpacing,
    #[error("HMM parameters must be positive")]
    InvalidParams,
    #[error("road network is empty")]
    EmptyNetwork,
    #[error("map matching needs at least two observations")]
    TooFewObservations,
    #[error("no observation has a road candidate")]
    MatchInfeasible,
}

/// Evenly spaced points on the great circle from `p_s` to `p_e`, both
/// included; `ceil(d / spacing) + 1` points.
pub fn linear_interpolate(
    p_s: &GeoPoint,
    p_e: &GeoPoint,
    spacing: f64,
) -> Result<Polyline, BaselineError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(BaselineError::InvalidSpacing);
    }
    let d = haversine_distance(p_s, p_e);
    if d == 0.0 {
        return Ok(Polyline::new(alloc::vec![*p_s, *p_e]));
    }
    let count = (math::ceil(d / spacing) as usize).max(1) + 1;
    let last = (count - 1) as f64;
    let mut pts: Vec<GeoPoint> = (0..count)
        .map(|i| intermediate_point(p_s, p_e, i as f64 / last))
        .collect();
    pts[0] = *p_s;
    pts[count - 1] = *p_e;
    Ok(Polyline::new(pts))
}

/// Linear+HMM output; `fallback` marks the raw linear line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHmmOutput {
    pub polyline: Polyline,
    pub road_ids: Vec<i64>,
    pub fallback: bool,
}

/// Map-matches the 25 m linear interpolation; falls back to the linear line
/// when matching is impossible.
pub fn linear_plus_hmm(
    task: &MaskedTask,
    net: &RoadNetwork,
    params: &HmmParams,
) -> Result<LinearHmmOutput, BaselineError> {
    let line = linear_interpolate(&task.p_s, &task.p_e, DEFAULT_INTERPOLATION_SPACING_M)?;
    match hmm_map_match(net, &line, params) {
        Ok(m) if m.polyline.len() >= 2 => Ok(LinearHmmOutput {
            polyline: m.polyline,
            road_ids: m.road_ids,
            fallback: false,
        }),
        Ok(_)
        | Err(
            BaselineError::EmptyNetwork
            | BaselineError::MatchInfeasible
            | BaselineError::TooFewObservations,
        ) => Ok(LinearHmmOutput {
            polyline: line,
            road_ids: Vec::new(),
            fallback: true,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn linear_degenerate_and_midpoint() {
        let a = pt(10.0, 10.0);
        let same = linear_interpolate(&a, &a, 25.0).unwrap();
        assert_eq!(same.points(), &[a, a]);
        let line = linear_interpolate(&pt(0.0, 0.0), &pt(0.0, 0.01), 1.0e6).unwrap();
        assert_eq!(line.len(), 2);
        let half = linear_interpolate(&pt(0.0, 0.0), &pt(0.0, 0.01), 600.0).unwrap();
        assert_eq!(half.len(), 3);
        assert!((half.points()[1].lon() - 0.005).abs() < 1e-9);
        assert!(half.points()[1].lat().abs() < 1e-9);
        assert_eq!(
            linear_interpolate(&a, &a, 0.0),
            Err(BaselineError::InvalidSpacing)
        );
    }

    #[test]
    fn linear_point_count() {
        let (a, b) = (pt(48.2, 16.37), pt(48.21, 16.38));
        let d = haversine_distance(&a, &b);
        let line = linear_interpolate(&a, &b, 25.0).unwrap();
        assert_eq!(line.len(), libm::ceil(d / 25.0) as usize + 1);
        assert_eq!(line.first(), Some(&a));
        assert_eq!(line.last(), Some(&b));
    }
}
