use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geo::{point_to_polyline_distance, GeoPoint};
use crate::math;
use crate::roadnet::{json_str, RoadNetwork, SnapResult};
use crate::traces::Activity;

/// Step 1 must start, and the last step end, within this distance.
pub const ANCHOR_RADIUS_M: f64 = 60.0;
/// Roads farther than this from the start may never open step 1.
pub const HARD_ANCHOR_RADIUS_M: f64 = 100.0;
pub const PREFERENCE_STEP_CAP: usize = 10;
/// Route length band as fractions of the direct distance.
pub const LENGTH_BAND: (f64, f64) = (0.95, 1.45);
/// POIs farther than this from every road are not attached.
pub const POI_ATTACH_RADIUS_M: f64 = 50.0;
/// At most this many POIs are listed per road.
pub const MAX_POIS_PER_ROAD: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceProfile {
    pub name: String,
    pub description: String,
    /// Most important first.
    pub priorities: Vec<String>,
    /// Categories listed first when a road has many POIs.
    #[serde(default)]
    pub poi_categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: String,
    pub name: String,
    pub category: String,
    pub location: GeoPoint,
}

/// `(round(0.95 d), round(1.45 d))` in meters.
pub fn length_band(direct_m: f64) -> (i64, i64) {
    (
        math::round(LENGTH_BAND.0 * direct_m) as i64,
        math::round(LENGTH_BAND.1 * direct_m) as i64,
    )
}

/// Attaches each POI to its nearest road within [`POI_ATTACH_RADIUS_M`].
/// Per road, preferred categories come first, then POI id order; lists are
/// capped at [`MAX_POIS_PER_ROAD`].
pub fn attach_pois(
    net: &RoadNetwork,
    pois: &[Poi],
    profile: &PreferenceProfile,
) -> BTreeMap<i64, Vec<Poi>> {
    let mut out: BTreeMap<i64, Vec<Poi>> = BTreeMap::new();
    for poi in pois {
        let nearest = net
            .roads()
            .values()
            .filter_map(|r| {
                point_to_polyline_distance(&poi.location, r.geometry.points()).map(|d| (d, r.id))
            })
            .filter(|(d, _)| *d <= POI_ATTACH_RADIUS_M)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, road)) = nearest {
            out.entry(road).or_default().push(poi.clone());
        }
    }
    let rank = |p: &Poi| {
        profile
            .poi_categories
            .iter()
            .position(|c| *c == p.category)
            .unwrap_or(usize::MAX)
    };
    for list in out.values_mut() {
        list.sort_by(|a, b| rank(a).cmp(&rank(b)).then(a.id.cmp(&b.id)));
        list.truncate(MAX_POIS_PER_ROAD);
    }
    out
}

fn display_name(net: &RoadNetwork, id: i64) -> String {
    net.road(id)
        .and_then(|r| r.name.clone())
        .unwrap_or_else(|| String::from("Unnamed road"))
}

/// Road network as one JSON object keyed by road id, with `nearby_pois`
/// on roads that have any.
pub fn render_preference_network(net: &RoadNetwork, pois: &BTreeMap<i64, Vec<Poi>>) -> String {
    let mut s = String::from("{");
    for (i, road) in net.roads().values().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(
            s,
            "\"{id}\":{{\"id\":{id},\"name\":{},\"type\":{},\"connects_to\":[",
            json_str(&display_name(net, road.id)),
            json_str(&road.highway_type),
            id = road.id
        );
        for (k, c) in net.connections(road.id).iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            let _ = write!(
                s,
                "{{\"road_id\":{},\"intersection_id\":{}}}",
                c.road_id, c.node_id
            );
        }
        s.push(']');
        if let Some(list) = pois.get(&road.id).filter(|l| !l.is_empty()) {
            s.push_str(",\"nearby_pois\":[");
            for (k, p) in list.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                let _ = write!(
                    s,
                    "{{\"id\":{},\"name\":{},\"category\":{}}}",
                    json_str(&p.id),
                    json_str(&p.name),
                    json_str(&p.category)
                );
            }
            s.push(']');
        }
        s.push('}');
    }
    s.push('}');
    s
}

/// Route-generation prompt under a user profile.
#[allow(clippy::too_many_arguments)]
pub fn build_preference_prompt(
    start: &GeoPoint,
    end: &GeoPoint,
    activity: Activity,
    profile: &PreferenceProfile,
    network_text: &str,
    direct_distance_m: f64,
    net: &RoadNetwork,
    start_snap: &SnapResult,
    end_snap: &SnapResult,
) -> String {
    let (lo, hi) = length_band(direct_distance_m);
    let mut s = String::from("PREFERENCE-AWARE CONTEXT (for planning):\n\n");
    let _ = writeln!(s, "USER PROFILE: {}", profile.name);
    let _ = writeln!(s, "Description: {}\n", profile.description);
    s.push_str("ROUTING PRIORITIES (ordered):\n");
    for p in &profile.priorities {
        let _ = writeln!(s, "- {p}");
    }
    s.push_str("\nROUTE LENGTH + EFFORT CONSTRAINTS:\n");
    let _ = writeln!(
        s,
        "- Direct distance: ~{} m",
        math::floor(direct_distance_m) as i64
    );
    let _ = writeln!(s, "- Target total length: {lo}-{hi} m (hard max: {hi} m)");
    s.push_str("- Keep detours purposeful; no loops or backtracking\n");
    s.push_str("- Deviate toward POIs only when the profile calls for it\n");
    let _ = writeln!(
        s,
        "- Do not exceed {PREFERENCE_STEP_CAP} steps; typical is 3-7\n"
    );
    s.push_str("ANCHORING CONSTRAINTS:\n");
    let r = ANCHOR_RADIUS_M as i64;
    let _ = writeln!(
        s,
        "- step_1 MUST begin on a road within {r} m of the start coordinate."
    );
    let _ = writeln!(
        s,
        "  * Prefer starting on: {} (id={}), distance={}m",
        display_name(net, start_snap.road_id),
        start_snap.road_id,
        math::round(start_snap.distance) as i64
    );
    let _ = writeln!(
        s,
        "- The final step MUST end within {r} m of the destination."
    );
    let _ = writeln!(
        s,
        "  * Prefer finishing on: {} (id={}), distance={}m",
        display_name(net, end_snap.road_id),
        end_snap.road_id,
        math::round(end_snap.distance) as i64
    );
    let _ = writeln!(
        s,
        "- Never open step_1 on a road more than {} m from the start, and finish exactly at the destination.\n",
        HARD_ANCHOR_RADIUS_M as i64
    );
    let _ = writeln!(s, "Start: {}", start.bracketed(7));
    let _ = writeln!(s, "End: {}", end.bracketed(7));
    let _ = writeln!(s, "Activity: {}\n", activity.as_str().to_uppercase());
    s.push_str("--- ROAD NETWORK ---\n");
    s.push_str(network_text);
    s.push('\n');
    s
}
