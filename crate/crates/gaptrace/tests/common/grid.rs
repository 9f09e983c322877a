//! A 16 x 16 block grid of residential streets with GPX traces that follow
//! staircase routes through it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gaptrace::overpass::{cache_key, task_query};
use gaptrace_core::geo::{expanded_bbox, BBox, GeoPoint};
use gaptrace_core::traces::MaskedTask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const SIZE: usize = 16;
pub const BLOCK_M: f64 = 100.0;
const ORIGIN: (f64, f64) = (-37.80, 144.95);
const M_PER_DEG: f64 = 6_371_000.0 * std::f64::consts::PI / 180.0;

fn round7(x: f64) -> f64 {
    (x * 1e7).round() / 1e7
}

pub fn node_point(i: usize, j: usize) -> (f64, f64) {
    let lat = ORIGIN.0 + i as f64 * BLOCK_M / M_PER_DEG;
    let lon = ORIGIN.1 + j as f64 * BLOCK_M / (M_PER_DEG * ORIGIN.0.to_radians().cos());
    (round7(lat), round7(lon))
}

pub fn node_id(i: usize, j: usize) -> i64 {
    1_000_000 + (i * 100 + j) as i64
}

fn street(id: i64, name: String, nodes: Vec<(usize, usize)>) -> serde_json::Value {
    json!({
        "type": "way",
        "id": id,
        "nodes": nodes.iter().map(|&(i, j)| node_id(i, j)).collect::<Vec<_>>(),
        "geometry": nodes.iter().map(|&(i, j)| {
            let (lat, lon) = node_point(i, j);
            json!({"lat": lat, "lon": lon})
        }).collect::<Vec<_>>(),
        "tags": {"highway": "residential", "name": name},
    })
}

fn streets() -> Vec<(Vec<(usize, usize)>, serde_json::Value)> {
    let mut out = Vec::new();
    for i in 0..SIZE {
        let nodes: Vec<_> = (0..SIZE).map(|j| (i, j)).collect();
        out.push((nodes.clone(), street(5000 + i as i64, format!("Row {i} Street"), nodes)));
    }
    for j in 0..SIZE {
        let nodes: Vec<_> = (0..SIZE).map(|i| (i, j)).collect();
        out.push((nodes.clone(), street(6000 + j as i64, format!("Column {j} Avenue"), nodes)));
    }
    out
}

/// Overpass JSON with every street that has a vertex inside `bbox`.
pub fn overpass_payload(bbox: Option<&BBox>) -> Vec<u8> {
    let elements: Vec<serde_json::Value> = streets()
        .into_iter()
        .filter(|(nodes, _)| {
            bbox.is_none_or(|b| {
                nodes.iter().any(|&(i, j)| {
                    let (lat, lon) = node_point(i, j);
                    b.contains(&GeoPoint::new(lat, lon).unwrap())
                })
            })
        })
        .map(|(_, w)| w)
        .collect();
    serde_json::to_vec(&json!({"version": 0.6, "elements": elements})).unwrap()
}

/// Writes the cached Overpass response each task's query would receive.
pub fn seed_cache(tasks: &[MaskedTask], cache_dir: &Path) {
    fs::create_dir_all(cache_dir).unwrap();
    for t in tasks {
        let bbox = expanded_bbox(&t.p_s, &t.p_e, t.gap_kind.bbox_buffer_m()).unwrap();
        let q = task_query(t).unwrap();
        fs::write(cache_dir.join(format!("{}.json", cache_key(&q))), overpass_payload(Some(&bbox))).unwrap();
    }
}

/// Grid nodes of a staircase route: `east` blocks east, `north` blocks
/// north, repeated until the grid edge.
pub fn staircase(start: (usize, usize), east: usize, north: usize) -> Vec<(usize, usize)> {
    let mut route = vec![start];
    let (mut i, mut j) = start;
    'outer: loop {
        for _ in 0..east {
            if j + 1 >= SIZE {
                break 'outer;
            }
            j += 1;
            route.push((i, j));
        }
        for _ in 0..north {
            if i + 1 >= SIZE {
                break 'outer;
            }
            i += 1;
            route.push((i, j));
        }
    }
    route
}

/// Samples a route every ~20 m with up to 2.5 m of seeded jitter.
pub fn sample_route(route: &[(usize, usize)], seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = 2.5 / M_PER_DEG;
    let mut out = Vec::new();
    for w in route.windows(2) {
        let a = node_point(w[0].0, w[0].1);
        let b = node_point(w[1].0, w[1].1);
        for k in 0..5 {
            let f = k as f64 / 5.0;
            out.push((
                round7(a.0 + f * (b.0 - a.0) + rng.random_range(-jitter..jitter)),
                round7(a.1 + f * (b.1 - a.1) + rng.random_range(-jitter..jitter)),
            ));
        }
    }
    let last = route[route.len() - 1];
    out.push(node_point(last.0, last.1));
    out
}

pub fn gpx(name: &str, date: &str, points: &[(f64, f64)]) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<gpx version=\"1.1\" creator=\"fixture\" xmlns=\"http://www.topografix.com/GPX/1/1\">\n");
    let _ = writeln!(s, "  <metadata><time>{date}T07:00:00Z</time></metadata>");
    let _ = writeln!(s, "  <trk><name>{name}</name><trkseg>");
    for (k, (lat, lon)) in points.iter().enumerate() {
        let (m, sec) = (k / 12, (k % 12) * 5);
        let _ = writeln!(
            s,
            "    <trkpt lat=\"{lat:.7}\" lon=\"{lon:.7}\"><time>{date}T07:{m:02}:{sec:02}Z</time></trkpt>"
        );
    }
    s.push_str("  </trkseg></trk>\n</gpx>\n");
    s
}

/// Input directory layout written by [`write_world`].
pub struct World {
    pub gpx_dir: PathBuf,
    pub region_map: PathBuf,
    /// Trace ids expected to pass filtering.
    pub accepted: Vec<&'static str>,
}

/// Five usable traces plus one too short, one too old, and one unreadable.
pub fn write_world(root: &Path) -> World {
    let gpx_dir = root.join("gpx");
    fs::create_dir_all(&gpx_dir).unwrap();
    let traces: [(&str, &str, &str, Vec<(usize, usize)>); 7] = [
        ("t00", "Evening bike ride", "2024-05-01", staircase((0, 0), 3, 2)),
        ("t01", "Commute by bike", "2024-05-02", staircase((1, 0), 2, 3)),
        ("t02", "Sunday cycling loop", "2024-06-10", staircase((0, 2), 4, 1)),
        ("t03", "Lunch walk", "2024-07-03", staircase((2, 1), 1, 1)),
        ("t04", "Gravel bike ride", "2024-08-15", staircase((0, 5), 1, 2)),
        ("t05", "Short ride", "2024-05-01", staircase((4, 4), 1, 1)[..3].to_vec()),
        ("t06", "Old bike ride", "2023-03-01", staircase((0, 0), 2, 2)),
    ];
    for (k, (id, name, date, route)) in traces.iter().enumerate() {
        let pts = sample_route(route, k as u64 + 1);
        fs::write(gpx_dir.join(format!("{id}.gpx")), gpx(name, date, &pts)).unwrap();
    }
    fs::write(gpx_dir.join("t07.gpx"), "<gpx><trk><trkseg><trkpt lat=\"x\"").unwrap();
    fs::write(gpx_dir.join("notes.txt"), "not a trace").unwrap();
    let region_map = root.join("regions.csv");
    fs::write(
        &region_map,
        "trace_id,region,upload_date\nt00,Melbourne,\nt01,Melbourne,\nt02,Geelong,\nt03,Geelong,\nt04,Geelong,2024-08-20\n",
    )
    .unwrap();
    World {
        gpx_dir,
        region_map,
        accepted: vec!["t00", "t01", "t02", "t03", "t04"],
    }
}
