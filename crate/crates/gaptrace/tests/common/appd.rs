//! A small cycleway network around the worked Stage-1/Stage-2 example, with
//! the example's replies scripted verbatim.

use gaptrace_core::geo::GeoPoint;
use gaptrace_core::llm::ScriptedProvider;
use gaptrace_core::roadnet::{build_graph, RoadNetwork};
use gaptrace_core::traces::{Activity, GapKind, MaskedTask, TimedPoint};
use serde_json::json;

pub const START: (f64, f64) = (-37.6015900, 145.0244730);
pub const END: (f64, f64) = (-37.6024230, 145.0274570);

pub const ROAD_START: i64 = 1347174722;
pub const ROAD_MIDDLE: i64 = 1347175623;
pub const ROAD_SOUTHEAST: i64 = 1347176650;
pub const LANDOVER: i64 = 1155201336;

const N_ENTRY: i64 = 12461706443;
const N_JOINT: i64 = 12461729290;
const N_STEP2: i64 = 12461734106;
const N_LANDOVER: i64 = 12461663891;

pub fn pt(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

fn way(id: i64, name: Option<&str>, highway: &str, nodes: &[(i64, f64, f64)]) -> serde_json::Value {
    let mut tags = json!({"highway": highway});
    if let Some(n) = name {
        tags["name"] = json!(n);
    }
    json!({
        "type": "way",
        "id": id,
        "nodes": nodes.iter().map(|n| n.0).collect::<Vec<_>>(),
        "geometry": nodes.iter().map(|n| json!({"lat": n.1, "lon": n.2})).collect::<Vec<_>>(),
        "tags": tags,
    })
}

fn start_road() -> Vec<(i64, f64, f64)> {
    vec![
        (9001, -37.6015624, 145.0240544),
        (9002, -37.6015847, 145.0243368),
        (9003, -37.6015981, 145.0245062),
        (N_ENTRY, -37.6016014, 145.0245667),
        (9004, -37.6016000, 145.0246000),
    ]
}

fn middle_road() -> Vec<(i64, f64, f64)> {
    vec![
        (N_ENTRY, -37.6016014, 145.0245667),
        (9011, -37.6016227, 145.0247631),
        (9012, -37.6015604, 145.0248218),
        (9013, -37.6015206, 145.0248792),
        (N_JOINT, -37.6015129, 145.0249834),
    ]
}

fn southeast_road() -> Vec<(i64, f64, f64)> {
    vec![
        (N_JOINT, -37.6015129, 145.0249834),
        (N_STEP2, -37.6015000, 145.0250000),
        (9021, -37.6015257, 145.0250507),
        (9022, -37.6015590, 145.0251463),
        (9023, -37.6015986, 145.0251966),
        (9024, -37.6016346, 145.0252310),
        (9025, -37.6016781, 145.0252713),
        (9026, -37.6018500, 145.0263000),
        (N_LANDOVER, -37.6021000, 145.0274570),
    ]
}

fn landover() -> Vec<(i64, f64, f64)> {
    vec![
        (9031, -37.6015000, 145.0274570),
        (N_LANDOVER, -37.6021000, 145.0274570),
        (9032, END.0, END.1),
        (9033, -37.6030000, 145.0274570),
    ]
}

/// Overpass-shaped JSON for the fixture.
pub fn network_payload() -> Vec<u8> {
    let elements = vec![
        way(ROAD_START, None, "cycleway", &start_road()),
        way(ROAD_MIDDLE, None, "cycleway", &middle_road()),
        way(ROAD_SOUTHEAST, None, "cycleway", &southeast_road()),
        way(LANDOVER, Some("Landover Road"), "residential", &landover()),
        way(
            1347176804,
            None,
            "cycleway",
            &[(N_JOINT, -37.6015129, 145.0249834), (9041, -37.6013000, 145.0249800)],
        ),
        way(
            1377168420,
            None,
            "footway",
            &[(N_JOINT, -37.6015129, 145.0249834), (9042, -37.6013000, 145.0251000)],
        ),
    ];
    serde_json::to_vec(&json!({"version": 0.6, "elements": elements})).unwrap()
}

pub fn network() -> RoadNetwork {
    build_graph(&network_payload()).unwrap()
}

fn timed(points: &[(f64, f64)], t0: i64) -> Vec<TimedPoint> {
    points
        .iter()
        .enumerate()
        .map(|(i, (lat, lon))| TimedPoint::new(pt(*lat, *lon), Some(t0 + 3 * i as i64)))
        .collect()
}

/// The masked task: approach from the west, hidden run along the three
/// cycleways, exit south on Landover Road.
pub fn task() -> MaskedTask {
    let prefix = timed(
        &[
            (-37.6015470, 145.0238290),
            (-37.6015560, 145.0239420),
            (-37.6015650, 145.0240550),
            (-37.6015740, 145.0241680),
            (-37.6015820, 145.0242810),
            (-37.6015860, 145.0243770),
            START,
        ],
        1_714_550_400,
    );
    let mut hidden: Vec<(f64, f64)> = vec![(-37.6015981, 145.0245062)];
    hidden.extend(middle_road().iter().map(|n| (n.1, n.2)));
    hidden.extend(southeast_road().iter().skip(1).map(|n| (n.1, n.2)));
    let ground_truth = timed(&hidden, 1_714_550_421);
    let suffix = timed(
        &[
            END,
            (-37.6026030, 145.0274570),
            (-37.6027830, 145.0274570),
            (-37.6029630, 145.0274570),
            (-37.6031430, 145.0274570),
            (-37.6033230, 145.0274570),
        ],
        1_714_550_460,
    );
    let masked_length = gaptrace_core::traces::timed_path_length(&ground_truth);
    MaskedTask {
        task_id: "appd-small".into(),
        trace_id: "appd".into(),
        gap_kind: GapKind::Small,
        activity: Activity::Cycling,
        region: "Melbourne".into(),
        p_s: pt(START.0, START.1),
        p_e: pt(END.0, END.1),
        prefix,
        ground_truth,
        suffix,
        masked_length,
    }
}

pub const STAGE1_REPLY: &str = "**REASONING:**
The start point is on cycleway (id=1347174722), heading east,
consistent with pre-segment direction (~95).
The direct continuation is via cycleway (id=1347175623),
then southeast via cycleway (id=1347176650),
leading to the endpoint on Landover Road (id=1155201336).
This minimizes turns and keeps within cycleway infrastructure.

**STEP-BY-STEP NAVIGATION:**

step_1: From start point, travel east along cycleway (id=1347174722)
        until reaching intersection with cycleway (id=1347175623)
        (node_id_original=12461706443)

step_2: Continue straight east onto cycleway (id=1347175623)
        until intersection with cycleway (id=1347176650)
        (node_id_original=12461734106)

step_3: Continue southeast onto cycleway (id=1347176650)
        until reaching endpoint on Landover Road (id=1155201336)
        (node_id_original=12461663891)

**VALIDATION:**
- Step count = 3 (within 3-step limit).
- Each step includes direction, road name + ID, and intersection anchor.
- All roads are connected via listed node IDs.
- No coordinates included in step descriptions.
- Endpoint matches required destination on Landover Road.
";

pub const STAGE2_STEP2_REPLY: &str = "step_2: Continue straight east onto connecting cycleway (id=1347175623)
until intersection with cycleway (id=1347176650) (node_id_original=12461729290)
- [[-37.6016000, 145.0246000],
  [-37.6016014, 145.0245667],
  [-37.6016227, 145.0247631],
  [-37.6015604, 145.0248218],
  [-37.6015206, 145.0248792],
  [-37.6015129, 145.0249834],
  [-37.6015000, 145.0250000]]
";

pub const STAGE2_STEP1_REPLY: &str = "step_1: From start point, travel east along cycleway (id=1347174722)
- [[-37.6015981, 145.0245062],
  [-37.6016014, 145.0245667],
  [-37.6016000, 145.0246000]]
";

pub const STAGE2_STEP3_REPLY: &str = "step_3: Continue southeast onto cycleway (id=1347176650)
- [[-37.6015000, 145.0250000],
  [-37.6015257, 145.0250507],
  [-37.6015590, 145.0251463],
  [-37.6015986, 145.0251966],
  [-37.6016346, 145.0252310],
  [-37.6016781, 145.0252713],
  [-37.6018500, 145.0263000],
  [-37.6021000, 145.0274570],
  [-37.6024230, 145.0274570]]
";

/// Replies keyed on the Stage-2 task line; anything else gets the plan.
pub fn provider() -> ScriptedProvider {
    ScriptedProvider::new()
        .on("Generate coordinates for step_1 ", STAGE2_STEP1_REPLY)
        .on("Generate coordinates for step_2 ", STAGE2_STEP2_REPLY)
        .on("Generate coordinates for step_3 ", STAGE2_STEP3_REPLY)
        .on("", STAGE1_REPLY)
}
