//! Road networks around a masked segment: Overpass query text, graph
//! construction from `out geom` JSON, endpoint snapping and the textual
//! context representations handed to a language model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::geo::{
    haversine_distance, initial_bearing, project_to_segment, BBox, Cardinal, GeoError, GeoPoint,
    Polyline,
};
use crate::math;
use crate::traces::Activity;

/// Default Overpass interpreter URL.
pub const DEFAULT_OVERPASS_ENDPOINT: &str = "https://overpass-api.de/api/interpreter";

/// Point features (stations, platforms) link to anything within this range.
pub const POINT_FEATURE_LINK_M: f64 = 50.0;

/// Distance scale of the snap confidence `exp(-d / scale)`.
pub const SNAP_CONFIDENCE_SCALE_M: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoadnetError {
    #[error("malformed Overpass payload: {0}")]
    Parse(String),
    #[error("road network has no roads")]
    NoRoads,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

const WALKING_HIGHWAYS: &[&str] = &[
    "footway",
    "pedestrian",
    "path",
    "steps",
    "living_street",
    "track",
    "bridleway",
    "road",
    "residential",
    "service",
    "unclassified",
    "tertiary",
    "tertiary_link",
    "secondary",
    "secondary_link",
    "primary",
    "primary_link",
    "cycleway",
    "trunk",
    "trunk_link",
];

const CYCLING_HIGHWAYS: &[&str] = &[
    "cycleway",
    "path",
    "living_street",
    "track",
    "residential",
    "service",
    "unclassified",
    "tertiary",
    "tertiary_link",
    "secondary",
    "secondary_link",
    "primary",
    "primary_link",
];

const DRIVING_HIGHWAYS: &[&str] = &[
    "motorway",
    "motorway_link",
    "trunk",
    "trunk_link",
    "primary",
    "primary_link",
    "secondary",
    "secondary_link",
    "tertiary",
    "tertiary_link",
    "unclassified",
    "residential",
    "service",
];

/// Highway values fetched for an activity; `None` means no highway filter.
pub fn highway_filter(activity: Activity) -> Option<&'static [&'static str]> {
    match activity {
        Activity::Walking | Activity::Hiking => Some(WALKING_HIGHWAYS),
        Activity::Cycling => Some(CYCLING_HIGHWAYS),
        Activity::Driving | Activity::Bus => Some(DRIVING_HIGHWAYS),
        Activity::Train | Activity::Boat | Activity::Flying => None,
    }
}

/// Overpass QL for the activity's road types inside `bbox`.
pub fn overpass_query(activity: Activity, bbox: &BBox) -> String {
    let b = format!(
        "({:.7},{:.7},{:.7},{:.7})",
        bbox.south, bbox.west, bbox.north, bbox.east
    );
    let mut q = String::from("[out:json][timeout:30];\n(\n");
    match activity {
        Activity::Train => {
            for sel in [
                r#"node["public_transport"="station"]"#,
                r#"node["railway"="station"]"#,
                r#"node["railway"="subway_entrance"]"#,
                r#"node["public_transport"~"platform|stop_position"]"#,
                r#"way["public_transport"="platform"]"#,
            ] {
                let _ = writeln!(q, "  {sel}{b};");
            }
        }
        _ => match highway_filter(activity) {
            Some(list) => {
                let _ = writeln!(q, "  way[highway~\"{}\"]{b};", list.join("|"));
            }
            None => {
                let _ = writeln!(q, "  way{b};");
            }
        },
    }
    q.push_str(");\nout geom;\n");
    q
}

/// One OSM way (or point feature) in the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub id: i64,
    pub name: Option<String>,
    pub highway_type: String,
    pub oneway: bool,
    pub geometry: Polyline,
    pub node_ids: Vec<i64>,
    /// Source tags, kept for the raw representation.
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl Road {
    /// Name, or `"Road <id>"` when unnamed.
    pub fn display_name(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("Road {}", self.id),
        }
    }

    pub fn length(&self) -> f64 {
        self.geometry.path_length()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub node_id: i64,
    pub location: GeoPoint,
    pub incident_roads: BTreeSet<i64>,
}

/// A neighbouring road reachable through a shared node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Connection {
    pub road_id: i64,
    pub node_id: i64,
}

/// Roads, their shared-node intersections and symmetric adjacency.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadNetwork {
    roads: BTreeMap<i64, Road>,
    intersections: BTreeMap<i64, Intersection>,
    adjacency: BTreeMap<i64, Vec<Connection>>,
}

impl RoadNetwork {
    /// Builds intersections (nodes used by two or more roads) and adjacency.
    /// Roads with duplicate ids keep the first occurrence; roads whose node
    /// list does not match their geometry are dropped.
    pub fn from_roads(roads: impl IntoIterator<Item = Road>) -> Self {
        let mut by_id: BTreeMap<i64, Road> = BTreeMap::new();
        for road in roads {
            if road.geometry.is_empty() || road.node_ids.len() != road.geometry.len() {
                continue;
            }
            by_id.entry(road.id).or_insert(road);
        }
        let mut users: BTreeMap<i64, (GeoPoint, BTreeSet<i64>)> = BTreeMap::new();
        for road in by_id.values() {
            for (nid, p) in road.node_ids.iter().zip(road.geometry.points()) {
                users
                    .entry(*nid)
                    .or_insert_with(|| (*p, BTreeSet::new()))
                    .1
                    .insert(road.id);
            }
        }
        let intersections: BTreeMap<i64, Intersection> = users
            .into_iter()
            .filter(|(_, (_, r))| r.len() >= 2)
            .map(|(node_id, (location, incident_roads))| {
                (
                    node_id,
                    Intersection {
                        node_id,
                        location,
                        incident_roads,
                    },
                )
            })
            .collect();
        let mut adjacency: BTreeMap<i64, Vec<Connection>> =
            by_id.keys().map(|id| (*id, Vec::new())).collect();
        for ix in intersections.values() {
            for a in &ix.incident_roads {
                for b in &ix.incident_roads {
                    if a != b {
                        adjacency.entry(*a).or_default().push(Connection {
                            road_id: *b,
                            node_id: ix.node_id,
                        });
                    }
                }
            }
        }
        for list in adjacency.values_mut() {
            list.sort();
            list.dedup();
        }
        Self {
            roads: by_id,
            intersections,
            adjacency,
        }
    }

    pub fn roads(&self) -> &BTreeMap<i64, Road> {
        &self.roads
    }

    pub fn road(&self, id: i64) -> Option<&Road> {
        self.roads.get(&id)
    }

    pub fn intersections(&self) -> &BTreeMap<i64, Intersection> {
        &self.intersections
    }

    pub fn intersection(&self, node_id: i64) -> Option<&Intersection> {
        self.intersections.get(&node_id)
    }

    /// Neighbours of a road, ordered by (road id, node id).
    pub fn connections(&self, road_id: i64) -> &[Connection] {
        self.adjacency.get(&road_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn adjacency(&self) -> &BTreeMap<i64, Vec<Connection>> {
        &self.adjacency
    }

    pub fn is_empty(&self) -> bool {
        self.roads.is_empty()
    }

    /// True when the two roads share at least one intersection.
    pub fn are_adjacent(&self, a: i64, b: i64) -> bool {
        self.connections(a).iter().any(|c| c.road_id == b)
    }

    /// Location of a node on any road (intersection or not).
    pub fn node_location(&self, node_id: i64) -> Option<GeoPoint> {
        if let Some(ix) = self.intersections.get(&node_id) {
            return Some(ix.location);
        }
        self.roads.values().find_map(|r| {
            r.node_ids
                .iter()
                .position(|n| *n == node_id)
                .map(|i| r.geometry.points()[i])
        })
    }

    /// Intersection on `road_id` nearest to `p`.
    pub fn nearest_intersection_on_road(&self, road_id: i64, p: &GeoPoint) -> Option<i64> {
        let road = self.roads.get(&road_id)?;
        road.node_ids
            .iter()
            .filter(|n| self.intersections.contains_key(n))
            .map(|n| (haversine_distance(p, &self.intersections[n].location), *n))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, n)| n)
    }
}

fn tag_str(tags: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    tags.get(key).and_then(|v| match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    })
}

fn parse_err(msg: impl Into<String>) -> RoadnetError {
    RoadnetError::Parse(msg.into())
}

fn lat_lon(v: &Value) -> Option<GeoPoint> {
    let lat = v.get("lat")?.as_f64()?;
    let lon = v.get("lon")?.as_f64()?;
    GeoPoint::new(lat, lon).ok()
}

fn all_tags(tags: &serde_json::Map<String, Value>) -> BTreeMap<String, String> {
    tags.keys()
        .filter_map(|k| tag_str(tags, k).map(|v| (k.clone(), v)))
        .collect()
}

/// Builds a network from an Overpass `out geom` JSON response.
pub fn build_graph(payload: &[u8]) -> Result<RoadNetwork, RoadnetError> {
    let root: Value =
        serde_json::from_slice(payload).map_err(|e| parse_err(e.to_string()))?;
    let elements = root
        .get("elements")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("missing `elements` array"))?;
    let empty = serde_json::Map::new();
    let mut roads: Vec<Road> = Vec::new();
    let mut seen: BTreeSet<(bool, i64)> = BTreeSet::new();
    let mut features: Vec<Road> = Vec::new();
    for el in elements {
        let kind = el
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err("element without `type`"))?;
        let id = el
            .get("id")
            .and_then(Value::as_i64)
            .ok_or_else(|| parse_err("element without integer `id`"))?;
        let tags = el.get("tags").and_then(Value::as_object).unwrap_or(&empty);
        match kind {
            "way" => {
                if !seen.insert((true, id)) {
                    continue;
                }
                let Some(geom) = el.get("geometry").and_then(Value::as_array) else {
                    continue;
                };
                let Some(points) = geom.iter().map(lat_lon).collect::<Option<Vec<_>>>() else {
                    continue;
                };
                let Some(node_ids) = el
                    .get("nodes")
                    .and_then(Value::as_array)
                    .and_then(|ns| ns.iter().map(Value::as_i64).collect::<Option<Vec<_>>>())
                else {
                    continue;
                };
                if points.is_empty() || points.len() != node_ids.len() {
                    continue;
                }
                let oneway_tag = tag_str(tags, "oneway");
                let reverse = oneway_tag.as_deref() == Some("-1");
                let oneway = reverse
                    || matches!(oneway_tag.as_deref(), Some("yes" | "true" | "1"))
                    || tag_str(tags, "junction").as_deref() == Some("roundabout");
                let (mut points, mut node_ids) = (points, node_ids);
                if reverse {
                    points.reverse();
                    node_ids.reverse();
                }
                let highway_type = tag_str(tags, "highway")
                    .or_else(|| tag_str(tags, "railway"))
                    .or_else(|| tag_str(tags, "public_transport"))
                    .unwrap_or_else(|| "unknown".to_string());
                roads.push(Road {
                    id,
                    name: tag_str(tags, "name"),
                    highway_type,
                    oneway,
                    geometry: Polyline::new(points),
                    node_ids,
                    tags: all_tags(tags),
                });
            }
            "node" => {
                if tags.is_empty() || !seen.insert((false, id)) {
                    continue;
                }
                let Some(p) = lat_lon(el) else { continue };
                let highway_type = tag_str(tags, "railway")
                    .or_else(|| tag_str(tags, "public_transport"))
                    .or_else(|| tag_str(tags, "highway"))
                    .unwrap_or_else(|| "unknown".to_string());
                features.push(Road {
                    id,
                    name: tag_str(tags, "name"),
                    highway_type,
                    oneway: false,
                    geometry: Polyline::new(alloc::vec![p]),
                    node_ids: alloc::vec![id],
                    tags: all_tags(tags),
                });
            }
            _ => {}
        }
    }
    link_point_features(&mut features, &roads);
    roads.extend(features);
    Ok(RoadNetwork::from_roads(roads))
}

/// Extends each point feature's geometry with every other element vertex
/// within [`POINT_FEATURE_LINK_M`], so proximity becomes a shared node.
fn link_point_features(features: &mut [Road], ways: &[Road]) {
    let mut vertices: Vec<(i64, GeoPoint)> = Vec::new();
    for r in ways {
        vertices.extend(r.node_ids.iter().copied().zip(r.geometry.points().iter().copied()));
    }
    for f in features.iter() {
        vertices.push((f.node_ids[0], f.geometry.points()[0]));
    }
    vertices.sort_by_key(|v| v.0);
    vertices.dedup_by_key(|v| v.0);
    for f in features.iter_mut() {
        let own = f.geometry.points()[0];
        let mut near: Vec<(f64, i64, GeoPoint)> = vertices
            .iter()
            .filter(|(n, _)| *n != f.node_ids[0])
            .map(|(n, p)| (haversine_distance(&own, p), *n, *p))
            .filter(|(d, _, _)| *d <= POINT_FEATURE_LINK_M)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, n, p) in near {
            f.node_ids.push(n);
            f.geometry.push(p);
        }
    }
}

/// Result of snapping a coordinate to the nearest road.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapResult {
    pub road_id: i64,
    pub snapped_point: GeoPoint,
    pub distance: f64,
    pub confidence: f64,
    /// Bearing of the matched geometry segment; absent on single-point roads.
    pub entry_bearing: Option<f64>,
    pub segment_index: usize,
}

/// `exp(-d/30)` rounded to two decimals, never below 0.01.
pub fn snap_confidence(distance_m: f64) -> f64 {
    math::round_to(math::exp(-distance_m / SNAP_CONFIDENCE_SCALE_M), 2).max(0.01)
}

/// Nearest road by point-to-segment distance; ties go to the lower road id.
pub fn snap_point(net: &RoadNetwork, p: &GeoPoint) -> Result<SnapResult, RoadnetError> {
    let mut best: Option<SnapResult> = None;
    for road in net.roads.values() {
        let pts = road.geometry.points();
        let candidates: Vec<(usize, GeoPoint, f64, Option<f64>)> = if pts.len() == 1 {
            alloc::vec![(0, pts[0], haversine_distance(p, &pts[0]), None)]
        } else {
            pts.windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let proj = project_to_segment(p, &w[0], &w[1]);
                    (i, proj.point, proj.distance, initial_bearing(&w[0], &w[1]).ok())
                })
                .collect()
        };
        for (seg, point, distance, bearing) in candidates {
            if best.as_ref().is_none_or(|b| distance < b.distance) {
                best = Some(SnapResult {
                    road_id: road.id,
                    snapped_point: point,
                    distance,
                    confidence: snap_confidence(distance),
                    entry_bearing: bearing,
                    segment_index: seg,
                });
            }
        }
    }
    best.ok_or(RoadnetError::NoRoads)
}

/// Cardinal direction from a road's first to last geometry point.
pub fn road_direction(road: &Road) -> Result<Cardinal, RoadnetError> {
    let (Some(a), Some(b)) = (road.geometry.first(), road.geometry.last()) else {
        return Err(GeoError::DegenerateBearing.into());
    };
    Ok(Cardinal::from_bearing(initial_bearing(a, b)?))
}

/// Textual network representation handed to the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    RawJson,
    AdjacencyList,
    TopologyOnly,
    TopologyDirection,
}

impl Representation {
    pub const ALL: [Representation; 4] = [
        Representation::RawJson,
        Representation::AdjacencyList,
        Representation::TopologyOnly,
        Representation::TopologyDirection,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Representation::RawJson => "raw-json",
            Representation::AdjacencyList => "adjacency-list",
            Representation::TopologyOnly => "topology-only",
            Representation::TopologyDirection => "topology-direction",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Representation::ALL
            .into_iter()
            .find(|r| r.as_str() == s.trim())
            .ok_or_else(|| format!("unknown representation {s:?}"))
    }
}

/// JSON string literal with escaping.
pub(crate) fn json_str(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_else(|_| String::from("\"\""))
}

#[derive(Serialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

struct RawRoad<'a>(&'a Road);

impl Serialize for RawRoad<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let r = self.0;
        let tag = |k: &str| r.tags.get(k).cloned();
        let geometry: Vec<RawPoint> = r
            .geometry
            .points()
            .iter()
            .map(|p| RawPoint {
                lat: math::round_to(p.lat(), 7),
                lon: math::round_to(p.lon(), 7),
            })
            .collect();
        let mut m = serializer.serialize_map(Some(12))?;
        m.serialize_entry("id", &r.id)?;
        m.serialize_entry("name", &r.display_name())?;
        m.serialize_entry("type", &r.highway_type)?;
        m.serialize_entry("geometry", &geometry)?;
        m.serialize_entry("oneway", if r.oneway { "yes" } else { "no" })?;
        for key in ["access", "surface", "lanes", "maxspeed", "bridge", "tunnel"] {
            m.serialize_entry(key, &tag(key))?;
        }
        m.serialize_entry("nodes_osmid", &r.node_ids)?;
        m.end()
    }
}

struct RawRoads<'a>(&'a BTreeMap<i64, Road>);

impl Serialize for RawRoads<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.0.iter().map(|(id, r)| (id.to_string(), RawRoad(r))))
    }
}

fn road_header(r: &Road) -> String {
    let oneway = if r.oneway { ", Oneway: yes" } else { "" };
    format!(
        "Road: {} (ID: {}, Type: {}{oneway})",
        r.display_name(),
        r.id,
        r.highway_type
    )
}

/// Renders the network in one of the four representations. Output is
/// deterministic: roads and connections are emitted in id order.
/// `destination` feeds the per-connection bearings of the direction variant.
pub fn render_context(net: &RoadNetwork, repr: Representation, destination: &GeoPoint) -> String {
    match repr {
        Representation::RawJson => {
            let mut out = String::from(
                "--- RAW ROAD NETWORK DATA ---\nRaw Road Network Data (Full OSM JSON):\n\n",
            );
            out.push_str(
                &serde_json::to_string_pretty(&RawRoads(&net.roads)).unwrap_or_default(),
            );
            out.push('\n');
            out
        }
        Representation::AdjacencyList => render_listing(net, true),
        Representation::TopologyOnly => render_listing(net, false),
        Representation::TopologyDirection => render_topology_direction(net, destination),
    }
}

fn render_listing(net: &RoadNetwork, with_geometry: bool) -> String {
    let mut out = if with_geometry {
        String::from(
            "--- ROAD NETWORK (ADJACENCY LIST) ---\nRoad Network (Adjacency List with Full Geometry):\n",
        )
    } else {
        String::from("--- ROAD NETWORK (TOPOLOGY ONLY) ---\nRoad Network (Topology Only - No Geometry):\n")
    };
    for road in net.roads.values() {
        out.push('\n');
        out.push_str(&road_header(road));
        out.push('\n');
        let conns = net.connections(road.id);
        if conns.is_empty() {
            out.push_str("  Connects to: none\n");
        } else {
            out.push_str("  Connects to:\n");
            for c in conns {
                let _ = write!(out, "    -> Road {} at intersection {}", c.road_id, c.node_id);
                if with_geometry {
                    if let Some(ix) = net.intersection(c.node_id) {
                        let _ = write!(out, " ({})", ix.location.bracketed(7));
                    }
                }
                out.push('\n');
            }
        }
        if with_geometry {
            let pts = road.geometry.points();
            let joined: Vec<String> = pts.iter().map(|p| p.bracketed(7)).collect();
            let _ = writeln!(
                out,
                "  Full Geometry ({} points): {}",
                pts.len(),
                joined.join(" -> ")
            );
        }
    }
    out
}

fn render_topology_direction(net: &RoadNetwork, destination: &GeoPoint) -> String {
    let mut out = String::from("--- ROAD NETWORK (TOPOLOGY + DIRECTION) ---\n{\"roads\": {");
    let mut first = true;
    for road in net.roads.values() {
        out.push_str(if first { "\n" } else { ",\n" });
        first = false;
        let _ = write!(out, "  \"{}\": {{", road.id);
        if let Some(name) = &road.name {
            let _ = write!(out, "\"name\":{},", json_str(name));
        }
        let _ = write!(out, "\"type\":{},", json_str(&road.highway_type));
        if road.oneway {
            out.push_str("\"oneway\":true,");
        }
        out.push_str("\"connects_to\":[");
        let conns = net.connections(road.id);
        for (i, c) in conns.iter().enumerate() {
            out.push_str(if i > 0 { ",\n    " } else { "\n    " });
            let _ = write!(
                out,
                "{{\"road_id\":\"{}\",\"intersection_id\":\"{}\"",
                c.road_id, c.node_id
            );
            if let Some(ix) = net.intersection(c.node_id) {
                let loc = ix.location;
                let bearing = initial_bearing(&loc, destination).unwrap_or(0.0);
                let _ = write!(
                    out,
                    ",\"coords\":[{:.6},{:.6}],\"bearing_to_dest\":{:.1}",
                    loc.lat(),
                    loc.lon(),
                    bearing
                );
            }
            out.push('}');
        }
        out.push_str(if conns.is_empty() { "]" } else { "\n  ]" });
        if let Ok(dir) = road_direction(road) {
            let _ = write!(out, ",\"direction\":\"{}\"", dir.abbrev());
        }
        out.push('}');
    }
    out.push_str("\n}}\n");
    out
}

/// Whitespace-delimited token count, a cheap proxy for prompt size.
pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}
