use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::NavStep;
use crate::geo::{haversine_distance, GeoPoint, Polyline};
use crate::metrics::VERTEX_MATCH_TOLERANCE_DEG;
use crate::roadnet::RoadNetwork;

/// Off-geometry points farther than this from every vertex are dropped.
pub const GROUNDING_RADIUS_M: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRoad {
    pub id: i64,
    pub name: Option<String>,
    pub geometry: Polyline,
}

/// The geometry shown to the model for one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeometrySlice {
    pub roads: Vec<SliceRoad>,
    pub intersections: Vec<(i64, GeoPoint)>,
}

impl GeometrySlice {
    /// Slice of the given roads and nodes; unknown ids are skipped.
    pub fn from_ids(net: &RoadNetwork, road_ids: &[i64], node_ids: &[i64]) -> Self {
        let mut roads: Vec<SliceRoad> = Vec::new();
        for id in road_ids {
            if roads.iter().any(|r| r.id == *id) {
                continue;
            }
            if let Some(r) = net.road(*id) {
                roads.push(SliceRoad {
                    id: r.id,
                    name: r.name.clone(),
                    geometry: r.geometry.clone(),
                });
            }
        }
        let mut intersections: Vec<(i64, GeoPoint)> = Vec::new();
        for n in node_ids {
            if intersections.iter().any(|x| x.0 == *n) {
                continue;
            }
            if let Some(p) = net.node_location(*n) {
                intersections.push((*n, p));
            }
        }
        Self {
            roads,
            intersections,
        }
    }

    pub fn road_ids(&self) -> Vec<i64> {
        self.roads.iter().map(|r| r.id).collect()
    }

    pub fn node_ids(&self) -> Vec<i64> {
        self.intersections.iter().map(|x| x.0).collect()
    }

    /// Road vertices followed by intersection locations.
    pub fn vertices(&self) -> Vec<GeoPoint> {
        let mut v: Vec<GeoPoint> = self
            .roads
            .iter()
            .flat_map(|r| r.geometry.points().iter().copied())
            .collect();
        v.extend(self.intersections.iter().map(|x| x.1));
        v
    }

    pub fn is_empty(&self) -> bool {
        self.roads.is_empty() && self.intersections.is_empty()
    }
}

/// Geometry for step `k` (0-based): the road it traverses, its target node,
/// and the road it hands over to. The hand-over road is the next step's
/// road, or for the last step the last other road the step mentions.
pub fn geometry_slice(net: &RoadNetwork, steps: &[NavStep], k: usize) -> GeometrySlice {
    let Some(step) = steps.get(k) else {
        return GeometrySlice::default();
    };
    let mut roads: Vec<i64> = step.road_id().into_iter().collect();
    let next = match steps.get(k + 1) {
        Some(n) => n.road_id(),
        None => step
            .road_ids
            .iter()
            .rev()
            .find(|id| Some(**id) != step.road_id())
            .copied(),
    };
    roads.extend(next);
    let nodes: Vec<i64> = step.target.node_id().into_iter().collect();
    GeometrySlice::from_ids(net, &roads, &nodes)
}

fn find_match(p: &GeoPoint, set: &[GeoPoint]) -> Option<GeoPoint> {
    set.iter()
        .find(|v| p.approx_eq(v, VERTEX_MATCH_TOLERANCE_DEG))
        .copied()
}

/// Pins generated points to the slice. Anchors and vertices (within 1e-6°)
/// are kept at their exact values; other points move to the nearest vertex
/// within [`GROUNDING_RADIUS_M`] or are dropped. Consecutive duplicates are
/// collapsed.
pub fn ground_coordinates(
    points: &[GeoPoint],
    slice: &GeometrySlice,
    anchors: &[GeoPoint],
) -> Vec<GeoPoint> {
    let vertices = slice.vertices();
    let mut out: Vec<GeoPoint> = Vec::new();
    for p in points {
        let grounded = find_match(p, anchors)
            .or_else(|| find_match(p, &vertices))
            .or_else(|| {
                vertices
                    .iter()
                    .map(|v| (haversine_distance(p, v), *v))
                    .filter(|(d, _)| *d <= GROUNDING_RADIUS_M)
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, v)| v)
            });
        if let Some(g) = grounded {
            if out.last() != Some(&g) {
                out.push(g);
            }
        }
    }
    out
}
