use alloc::format;
use alloc::string::String;
use core::fmt::Write as _;

use super::{ContextSummary, GeometrySlice, NavStep};
use crate::geo::{haversine_distance, Cardinal, GeoPoint};
use crate::math;
use crate::roadnet::{RoadNetwork, SnapResult};
use crate::traces::{GapKind, MaskedTask};

/// Step cap for a gap kind.
pub fn step_cap(kind: GapKind, small: usize, large: usize) -> usize {
    match kind {
        GapKind::Small => small,
        GapKind::Large => large,
    }
}

/// Label used for a snapped road: its name, or `unnamed <type>`.
pub(crate) fn road_label(net: &RoadNetwork, road_id: i64) -> String {
    match net.road(road_id) {
        Some(r) => match &r.name {
            Some(n) => n.clone(),
            None => format!("unnamed {}", r.highway_type),
        },
        None => String::from("unknown road"),
    }
}

/// Everything the Stage-1 prompt is assembled from.
#[derive(Debug, Clone, Copy)]
pub struct Stage1Inputs<'a> {
    pub task: &'a MaskedTask,
    pub before: Option<&'a ContextSummary>,
    pub after: Option<&'a ContextSummary>,
    pub start: &'a SnapResult,
    pub end: &'a SnapResult,
    pub network: &'a RoadNetwork,
    /// Network rendering including its section header.
    pub network_text: &'a str,
    pub step_cap: usize,
}

fn node_line(node: Option<i64>) -> String {
    match node {
        Some(n) => format!("(node_id_original={n})"),
        None => String::from("none"),
    }
}

/// Builds the path-selection prompt. Output depends only on the inputs.
pub fn build_stage1_prompt(inp: &Stage1Inputs<'_>) -> String {
    let t = inp.task;
    let distance = math::round(haversine_distance(&t.p_s, &t.p_e)) as i64;
    let mut s = String::new();
    s.push_str(
        "You are routing a traveler through a road network. Build one connected path \
         from the start point to the end point.\n\n",
    );
    let _ = writeln!(s, "Start: {}", t.p_s.bracketed(7));
    let _ = writeln!(s, "End: {}", t.p_e.bracketed(7));
    let _ = writeln!(s, "Activity: {}", t.activity.as_str().to_uppercase());
    let _ = writeln!(s, "Distance: {distance}m\n");

    for (header, summary) in [
        ("--- CONTEXT BEFORE ---", inp.before),
        ("--- CONTEXT AFTER ---", inp.after),
    ] {
        let _ = writeln!(s, "{header}");
        match summary {
            Some(c) => {
                let _ = writeln!(s, "{}\n", c.narrative);
            }
            None => s.push_str("- Not available\n\n"),
        }
    }

    let start_node = inp
        .network
        .nearest_intersection_on_road(inp.start.road_id, &inp.start.snapped_point);
    s.push_str("--- START POINT ANALYSIS ---\n");
    let _ = writeln!(
        s,
        "Snapped to: {} (id={}), confidence = {:.2}",
        road_label(inp.network, inp.start.road_id),
        inp.start.road_id,
        inp.start.confidence
    );
    match inp.start.entry_bearing {
        Some(b) => {
            let _ = writeln!(
                s,
                "Bearing at entry: ~{b:.1}° ({}ward)",
                Cardinal::from_bearing(b).word()
            );
        }
        None => s.push_str("Bearing at entry: unknown\n"),
    }
    let _ = writeln!(s, "Next candidate node: {}\n", node_line(start_node));

    let end_node = inp
        .network
        .nearest_intersection_on_road(inp.end.road_id, &inp.end.snapped_point);
    s.push_str("--- END POINT ANALYSIS ---\n");
    let _ = writeln!(
        s,
        "Snapped to: {} (id={}), confidence = {:.2}",
        road_label(inp.network, inp.end.road_id),
        inp.end.road_id,
        inp.end.confidence
    );
    match inp.end.entry_bearing {
        Some(b) => {
            let _ = writeln!(s, "Required approach bearing: ~{}°", math::round(b) as i64 % 360);
        }
        None => s.push_str("Required approach bearing: unknown\n"),
    }
    let _ = writeln!(s, "Nearest junction: {}\n", node_line(end_node));

    s.push_str(inp.network_text.trim_end());
    s.push_str("\n\n--- TASK ---\n");
    s.push_str(
        "Pick a plausible path for this activity and distance. Describe it as numbered \
         steps naming each road, its id, and the intersection where the step ends.\n\n",
    );
    s.push_str("--- EVALUATION REQUIREMENTS ---\n");
    s.push_str("1. Consecutive roads must share an intersection.\n");
    let _ = writeln!(s, "2. Max {} steps (distance = {distance}m).", inp.step_cap);
    s.push_str(
        "3. Every step states a direction (e.g., east, southeast), a road name with its id \
         (e.g., residential (id=123)), and the target intersection (node_id_original=N).\n",
    );
    s.push_str("4. Favour continuing straight over turning.\n");
    s.push_str("5. Do not include coordinate lists in step descriptions.\n\n");
    s.push_str("--- OUTPUT FORMAT ---\n");
    s.push_str("REASONING: why this path was chosen.\n");
    s.push_str("STEP-BY-STEP NAVIGATION: one line per step, written as step_1: ..., step_2: ...\n");
    s
}

fn fmt7(x: f64) -> String {
    format!("{x:.7}")
}

/// The geometry excerpt as indented JSON with 7-decimal coordinates.
pub(crate) fn render_slice(slice: &GeometrySlice) -> String {
    let mut s = String::from("{\n \"roads\": [");
    for (i, r) in slice.roads.iter().enumerate() {
        s.push_str(if i == 0 { "\n" } else { ",\n" });
        s.push_str("   {\n");
        let _ = writeln!(s, "     \"id\": {},", r.id);
        let _ = writeln!(
            s,
            "     \"name\": {},",
            crate::roadnet::json_str(r.name.as_deref().unwrap_or("unnamed"))
        );
        s.push_str("     \"geometry\": [");
        for (k, p) in r.geometry.points().iter().enumerate() {
            s.push_str(if k == 0 { "\n" } else { ",\n" });
            let _ = write!(s, "       [{}, {}]", fmt7(p.lat()), fmt7(p.lon()));
        }
        s.push_str("\n     ]\n   }");
    }
    s.push_str("\n ],\n \"intersections\": [");
    for (i, (id, p)) in slice.intersections.iter().enumerate() {
        s.push_str(if i == 0 { "\n" } else { ",\n" });
        let _ = write!(
            s,
            "   {{\"id\": {id}, \"lat\": {}, \"lon\": {}}}",
            fmt7(p.lat()),
            fmt7(p.lon())
        );
    }
    s.push_str("\n ]\n}");
    s
}

/// Builds the coordinate-generation prompt for one step. `destination` is
/// given for the final step only.
pub fn build_stage2_prompt(
    step: &NavStep,
    slice: &GeometrySlice,
    start: &GeoPoint,
    destination: Option<&GeoPoint>,
) -> String {
    let k = step.index;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "**TASK:** Generate coordinates for step_{k} from the geometry below.\n"
    );
    let _ = writeln!(s, "**STEP_{k} DESCRIPTION:**\n{}\n", step.text);
    let _ = writeln!(s, "**GEOMETRY (excerpt):**\n{}\n", render_slice(slice));
    let origin = if k <= 1 {
        String::from("snapped start")
    } else {
        format!("from step_{}", k - 1)
    };
    let _ = writeln!(s, "Starting coordinate: {} ({origin})", start.bracketed(7));
    if let Some(d) = destination {
        let _ = writeln!(s, "Destination: {} (end of the final step)", d.bracketed(7));
    }
    s.push_str("\n**GENERATE ONLY THE CONTINUATION OF THIS LIST, STARTING WITH A COMMA:**\n");
    let _ = writeln!(s, "[{}", start.bracketed(7));
    s
}
