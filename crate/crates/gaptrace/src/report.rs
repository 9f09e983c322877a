//! Aggregate CSV tables and per-task GeoJSON overlays.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gaptrace_core::geo::GeoPoint;
use gaptrace_core::llm::Reconstruction;
use gaptrace_core::metrics::{aggregate, gap_table, EvalRecord, GroupBy, AGGREGATE_COLUMNS};
use gaptrace_core::traces::MaskedTask;
use serde_json::{json, Value};

use crate::io::{write_atomic, write_jsonl, IoError};

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    // Writing into a Vec cannot fail.
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Means per (method, group) for one grouping, as CSV.
pub fn aggregate_csv(records: &[EvalRecord], by: GroupBy) -> Vec<u8> {
    let mut header = vec!["method", by.as_str(), "count"];
    header.extend(AGGREGATE_COLUMNS);
    let rows = aggregate(records, by).into_iter().map(|r| {
        let mut row = vec![r.method, r.group, r.count.to_string()];
        row.extend(r.means.into_iter().map(cell));
        row
    });
    csv_bytes(&header, rows)
}

/// Small / Large / Overall PoT F1 and MAE F1 per method, as CSV.
pub fn gap_table_csv(records: &[EvalRecord]) -> Vec<u8> {
    let header = [
        "method",
        "small_pot_f1",
        "small_mae_f1",
        "large_pot_f1",
        "large_mae_f1",
        "overall_pot_f1",
        "overall_mae_f1",
    ];
    let rows = gap_table(records).into_iter().map(|r| {
        vec![
            r.method,
            cell(r.small_pot_f1),
            cell(r.small_mae_f1),
            cell(r.large_pot_f1),
            cell(r.large_mae_f1),
            cell(r.overall_pot_f1),
            cell(r.overall_mae_f1),
        ]
    });
    csv_bytes(&header, rows)
}

fn line(points: &[GeoPoint]) -> Value {
    json!({
        "type": "LineString",
        "coordinates": points.iter().map(|p| [p.lon(), p.lat()]).collect::<Vec<_>>(),
    })
}

fn point(p: &GeoPoint) -> Value {
    json!({"type": "Point", "coordinates": [p.lon(), p.lat()]})
}

const METHOD_COLORS: [&str; 6] = ["#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"];

/// Ground truth, each method's reconstruction, and the gap endpoints.
/// Coordinates are `[lon, lat]`.
pub fn task_geojson(task: &MaskedTask, recs: &[&Reconstruction], records: &[&EvalRecord]) -> Value {
    let gt: Vec<GeoPoint> = task.ground_truth.iter().map(|p| p.point).collect();
    let mut features = vec![json!({
        "type": "Feature",
        "geometry": line(&gt),
        "properties": {
            "layer": "ground_truth",
            "task_id": task.task_id,
            "gap_kind": task.gap_kind.as_str(),
            "masked_length_m": task.masked_length,
            "stroke": "#1f77b4",
            "stroke-width": 4,
        },
    })];
    for (i, rec) in recs.iter().enumerate() {
        let record = records.iter().find(|r| r.method == rec.method);
        features.push(json!({
            "type": "Feature",
            "geometry": line(rec.points.points()),
            "properties": {
                "layer": "reconstruction",
                "method": rec.method,
                "fallback": rec.fallback_flag,
                "pot_f1": record.and_then(|r| r.pot_f1),
                "mae_f1": record.and_then(|r| r.mae_f1),
                "stroke": METHOD_COLORS[i % METHOD_COLORS.len()],
                "stroke-width": 2,
            },
        }));
    }
    for (role, p, color) in [("start", &task.p_s, "#2ca02c"), ("end", &task.p_e, "#d62728")] {
        features.push(json!({
            "type": "Feature",
            "geometry": point(p),
            "properties": {"layer": "endpoint", "role": role, "marker-color": color},
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}

/// File-system-safe version of a task id.
pub fn file_stem(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Paths written by [`write_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub aggregates: Vec<PathBuf>,
    pub gap_table: PathBuf,
    pub records: PathBuf,
    pub geojson: Vec<PathBuf>,
}

/// Writes aggregate CSVs, the sorted per-task records, and one GeoJSON per
/// evaluated task. Tasks without a task definition still get a record row
/// but no overlay.
pub fn write_report(
    out_dir: &Path,
    records: &[EvalRecord],
    tasks: &[MaskedTask],
    recs: &[Reconstruction],
) -> Result<ReportBundle, IoError> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| (&a.method, &a.task_id).cmp(&(&b.method, &b.task_id)));
    let mut aggregates = Vec::new();
    for by in GroupBy::ALL {
        let p = out_dir.join(format!("aggregate_by_{}.csv", by.as_str()));
        write_atomic(&p, &aggregate_csv(&sorted, by))?;
        aggregates.push(p);
    }
    let gap_path = out_dir.join("gap_table.csv");
    write_atomic(&gap_path, &gap_table_csv(&sorted))?;
    let records_path = out_dir.join("records.jsonl");
    write_jsonl(&records_path, &sorted)?;

    let tasks_by_id: BTreeMap<&str, &MaskedTask> =
        tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut recs_by_task: BTreeMap<&str, Vec<&Reconstruction>> = BTreeMap::new();
    for r in recs {
        recs_by_task.entry(r.task_id.as_str()).or_default().push(r);
    }
    for list in recs_by_task.values_mut() {
        list.sort_by(|a, b| a.method.cmp(&b.method));
    }
    let mut records_by_task: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in &sorted {
        records_by_task.entry(r.task_id.as_str()).or_default().push(r);
    }
    let mut geojson = Vec::new();
    for (task_id, rows) in &records_by_task {
        let Some(task) = tasks_by_id.get(task_id) else {
            log::warn!("no task definition for {task_id}; overlay skipped");
            continue;
        };
        let doc = task_geojson(task, recs_by_task.get(task_id).map_or(&[][..], |v| v), rows);
        let p = out_dir.join("geojson").join(format!("{}.geojson", file_stem(task_id)));
        let mut bytes = serde_json::to_vec_pretty(&doc).expect("serializable geojson");
        bytes.push(b'\n');
        write_atomic(&p, &bytes)?;
        geojson.push(p);
    }
    Ok(ReportBundle {
        aggregates,
        gap_table: gap_path,
        records: records_path,
        geojson,
    })
}
