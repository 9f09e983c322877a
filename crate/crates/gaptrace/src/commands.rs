//! The pipeline stages behind each subcommand. Every function takes plain
//! paths and settings so tests can drive them without the argument parser.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use gaptrace_core::baselines::{decode_polyline, linear_interpolate, linear_plus_hmm, DEFAULT_INTERPOLATION_SPACING_M};
use gaptrace_core::llm::{run_two_stage, ChatProvider, FailingProvider, GraphWalkProvider, Reconstruction};
use gaptrace_core::metrics::{evaluate, EvalRecord};
use gaptrace_core::roadnet::RoadNetwork;
use gaptrace_core::traces::{
    derive_seed, filter_trace, make_masked_task, stratified_split, GapKind, KeywordClassifier, MaskedTask, RawTrace,
    SplitKey, TimedPoint, Trajectory,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::gpx::parse_gpx;
use crate::io::{
    read_jsonl, read_jsonl_lenient, read_region_map, write_atomic, write_jsonl, JsonlAppender, COORDINATE_DECIMALS,
};
use crate::overpass::{cache_key, cached_network, task_query, OverpassClient};
use crate::provider::HttpChatProvider;
use crate::report::{write_report, ReportBundle};

/// Region recorded for traces missing from the region map.
pub const UNKNOWN_REGION: &str = "unknown";

fn write_manifest(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

/// `<file>.<suffix>` next to `path`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// One line of the ingest rejection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionEntry {
    pub trace_id: String,
    pub file: String,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub files: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub unreadable: usize,
}

fn gpx_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let is_gpx = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("gpx"));
        if is_gpx && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Parses every `*.gpx` in `gpx_dir` (file stem = trace id), filters, and
/// writes accepted trajectories plus a rejection log. Unreadable files are
/// logged as rejections of kind `Unreadable`; the run carries on.
pub fn ingest(
    gpx_dir: &Path,
    region_map: Option<&Path>,
    cfg: &RunConfig,
    out: &Path,
    rejections_out: &Path,
) -> Result<IngestSummary> {
    let regions = match region_map {
        Some(p) => read_region_map(p)?,
        None => BTreeMap::new(),
    };
    let classifier = KeywordClassifier::default();
    let files = gpx_files(gpx_dir)?;
    let mut accepted: Vec<Trajectory> = Vec::new();
    let mut rejected: Vec<RejectionEntry> = Vec::new();
    let mut unreadable = 0;
    for path in &files {
        let trace_id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let reject = |kind: &str, detail: String| RejectionEntry {
            trace_id: trace_id.clone(),
            file: file.clone(),
            kind: kind.to_string(),
            detail,
        };
        let parsed = fs::read(path)
            .map_err(|e| e.to_string())
            .and_then(|b| parse_gpx(&b).map_err(|e| e.to_string()));
        let track = match parsed {
            Ok(t) => t,
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                unreadable += 1;
                rejected.push(reject("Unreadable", e));
                continue;
            }
        };
        let entry = regions.get(&trace_id);
        let region = entry.map_or(UNKNOWN_REGION, |e| e.region.as_str());
        let upload_date = entry.and_then(|e| e.upload_date).or(track.metadata_date);
        let points: Vec<TimedPoint> = track
            .points
            .iter()
            .map(|p| TimedPoint::new(p.point.rounded(COORDINATE_DECIMALS), p.time))
            .collect();
        let raw = match RawTrace::new(&trace_id, track.name, track.description, upload_date, region, points) {
            Ok(r) => r,
            Err(e) => {
                rejected.push(reject("Invalid", e.to_string()));
                continue;
            }
        };
        match filter_trace(&raw, &classifier, &cfg.filter) {
            Ok(t) => accepted.push(t),
            Err(r) => rejected.push(reject(r.kind(), r.to_string())),
        }
    }
    write_jsonl(out, &accepted)?;
    write_jsonl(rejections_out, &rejected)?;
    let summary = IngestSummary {
        files: files.len(),
        accepted: accepted.len(),
        rejected: rejected.len() - unreadable,
        unreadable,
    };
    debug_assert_eq!(summary.files, summary.accepted + summary.rejected + summary.unreadable);
    Ok(summary)
}

/// One variant that could not be placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleEntry {
    pub trace_id: String,
    pub gap_kind: GapKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MaskSummary {
    pub trajectories: usize,
    pub tasks: usize,
    pub infeasible: usize,
}

/// Small and large masked variants per trajectory, seeded per variant.
/// Writes the tasks, `<out>.infeasible.jsonl` and `<out>.manifest.json`.
pub fn mask(dataset: &Path, cfg: &RunConfig, out: &Path) -> Result<MaskSummary> {
    let trajectories: Vec<Trajectory> = read_jsonl(dataset)?;
    let mut tasks = Vec::new();
    let mut infeasible = Vec::new();
    for traj in &trajectories {
        for kind in [GapKind::Small, GapKind::Large] {
            let seed = derive_seed(cfg.seed, &traj.trace_id, kind);
            match make_masked_task(traj, kind, seed, &cfg.mask) {
                Ok(t) => tasks.push(t),
                Err(e) => {
                    log::info!("{} {kind}: {e}", traj.trace_id);
                    infeasible.push(InfeasibleEntry {
                        trace_id: traj.trace_id.clone(),
                        gap_kind: kind,
                        detail: e.to_string(),
                    });
                }
            }
        }
    }
    tasks.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    write_jsonl(out, &tasks)?;
    write_jsonl(&sidecar(out, "infeasible.jsonl"), &infeasible)?;
    let summary = MaskSummary {
        trajectories: trajectories.len(),
        tasks: tasks.len(),
        infeasible: infeasible.len(),
    };
    write_manifest(
        &sidecar(out, "manifest.json"),
        &serde_json::json!({
            "command": "mask",
            "seed": cfg.seed,
            "mask": cfg.mask,
            "summary": summary,
        }),
    )?;
    Ok(summary)
}

/// Stratified train/dev/test split of the task file into `out_dir/splits.json`.
pub fn split(tasks: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let tasks: Vec<MaskedTask> = read_jsonl(tasks)?;
    let keys: Vec<SplitKey> = tasks.iter().map(SplitKey::from).collect();
    let splits = stratified_split(&keys, cfg.split_ratios, cfg.seed)?;
    let path = out_dir.join("splits.json");
    let doc = serde_json::json!({"seed": cfg.seed, "ratios": cfg.split_ratios, "splits": splits});
    write_manifest(&path, &doc)?;
    Ok(path)
}

/// Per-task outcome of `fetch-net`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStatus {
    pub task_id: String,
    pub cache_key: String,
    pub status: String,
    #[serde(default)]
    pub roads: usize,
    #[serde(default)]
    pub error: Option<String>,
}

/// Fetches (or finds cached) networks for every task. Failures are recorded
/// as `network-missing` and do not stop the loop.
pub fn fetch_net(tasks: &Path, client: &OverpassClient, status_out: &Path) -> Result<Vec<NetworkStatus>> {
    let tasks: Vec<MaskedTask> = read_jsonl(tasks)?;
    let mut out = Vec::with_capacity(tasks.len());
    for task in &tasks {
        let key = task_query(task).map(|q| cache_key(&q)).unwrap_or_default();
        let status = match client.network_for_task(task) {
            Ok(net) => NetworkStatus {
                task_id: task.task_id.clone(),
                cache_key: key,
                status: "ok".into(),
                roads: net.roads().len(),
                error: None,
            },
            Err(e) => {
                log::warn!("{}: {e}", task.task_id);
                NetworkStatus {
                    task_id: task.task_id.clone(),
                    cache_key: key,
                    status: "network-missing".into(),
                    roads: 0,
                    error: Some(e.to_string()),
                }
            }
        };
        out.push(status);
    }
    write_jsonl(status_out, &out)?;
    Ok(out)
}

/// Reconstruction method selected for `run`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Linear,
    LinearHmm,
    /// Two-stage LLM pipeline with a named provider.
    Llm(String),
    /// Pre-computed encoded polylines, one `task_id<TAB>polyline` per line.
    PolylineFile(PathBuf),
}

impl Method {
    /// The name written into reconstructions and records.
    pub fn label(&self) -> String {
        match self {
            Method::Linear => "linear".into(),
            Method::LinearHmm => "linear-hmm".into(),
            Method::Llm(p) => format!("llm:{p}"),
            Method::PolylineFile(p) => format!(
                "polyline-file:{}",
                p.file_stem().unwrap_or_default().to_string_lossy()
            ),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Method::Linear),
            "linear-hmm" | "linear+hmm" => Ok(Method::LinearHmm),
            _ => {
                if let Some(p) = s.strip_prefix("llm:").filter(|p| !p.is_empty()) {
                    Ok(Method::Llm(p.to_string()))
                } else if let Some(p) = s.strip_prefix("polyline-file:").filter(|p| !p.is_empty()) {
                    Ok(Method::PolylineFile(PathBuf::from(p)))
                } else {
                    Err(format!(
                        "unknown method {s:?} (expected linear, linear-hmm, llm:<provider> or polyline-file:<path>)"
                    ))
                }
            }
        }
    }
}

/// Reads `task_id<TAB>encoded` lines; blank lines and `#` comments are skipped.
pub fn read_polyline_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, enc) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}:{}: expected task_id<TAB>polyline", path.display(), i + 1))?;
        out.insert(id.trim().to_string(), enc.to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub tasks: usize,
    pub resumed: usize,
    pub produced: usize,
    pub fallbacks: usize,
    pub skipped: usize,
}

/// Settings for [`run`] beyond the config file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub method: Method,
    pub parallelism: usize,
    pub resume: bool,
}

enum Runner {
    Linear,
    LinearHmm,
    Llm(Box<dyn ChatProvider + Send + Sync>),
    Polylines(BTreeMap<String, String>),
}

fn provider_for(name: &str, cfg: &RunConfig, out: &Path) -> Result<(Box<dyn ChatProvider + Send + Sync>, usize)> {
    match name {
        "stub" => Ok((Box::new(GraphWalkProvider), usize::MAX)),
        "fail" => Ok((Box::new(FailingProvider), usize::MAX)),
        _ => {
            let pc = cfg
                .providers
                .get(name)
                .ok_or_else(|| anyhow!("provider {name:?} is not configured"))?
                .clone();
            let cap = pc.max_parallel_requests;
            let p = HttpChatProvider::new(name, pc)?.with_audit_log(&sidecar(out, "audit.jsonl"))?;
            Ok((Box::new(p), cap))
        }
    }
}

fn load_network(cache_dir: &Path, task: &MaskedTask) -> Result<RoadNetwork, String> {
    cached_network(cache_dir, task).map_err(|e| format!("network missing: {e}"))
}

fn reconstruct(runner: &Runner, label: &str, task: &MaskedTask, cfg: &RunConfig) -> Option<Reconstruction> {
    Some(match runner {
        Runner::Linear => match linear_interpolate(&task.p_s, &task.p_e, DEFAULT_INTERPOLATION_SPACING_M) {
            Ok(line) => Reconstruction::simple(&task.task_id, label, line, false),
            Err(e) => Reconstruction::linear_fallback(task, label, e.to_string()),
        },
        Runner::LinearHmm => match load_network(&cfg.cache_dir, task) {
            Err(e) => Reconstruction::linear_fallback(task, label, e),
            Ok(net) => match linear_plus_hmm(task, &net, &cfg.hmm) {
                Ok(out) => Reconstruction::simple(&task.task_id, label, out.polyline, out.fallback),
                Err(e) => Reconstruction::linear_fallback(task, label, e.to_string()),
            },
        },
        Runner::Llm(provider) => match load_network(&cfg.cache_dir, task) {
            Err(e) => Reconstruction::linear_fallback(task, label, e),
            Ok(net) => run_two_stage(task, &net, provider.as_ref(), &cfg.pipeline, label),
        },
        Runner::Polylines(map) => {
            let Some(enc) = map.get(&task.task_id) else {
                log::warn!("{}: no polyline supplied", task.task_id);
                return None;
            };
            match decode_polyline(enc) {
                Ok(line) => Reconstruction::simple(&task.task_id, label, line, false),
                Err(e) => {
                    log::warn!("{}: bad polyline: {e}", task.task_id);
                    return None;
                }
            }
        }
    })
}

/// Produces one reconstruction per task. Results are appended as they
/// finish, so a killed run can be resumed; on completion the file is
/// rewritten sorted by task id. With `resume`, tasks already present in
/// `out` for this method are skipped.
pub fn run(tasks_path: &Path, cfg: &RunConfig, opts: &RunOptions, out: &Path) -> Result<RunSummary> {
    let tasks: Vec<MaskedTask> = read_jsonl(tasks_path)?;
    let label = opts.method.label();
    let (runner, cap) = match &opts.method {
        Method::Linear => (Runner::Linear, usize::MAX),
        Method::LinearHmm => (Runner::LinearHmm, usize::MAX),
        Method::Llm(name) => {
            let (p, cap) = provider_for(name, cfg, out)?;
            (Runner::Llm(p), cap)
        }
        Method::PolylineFile(p) => (Runner::Polylines(read_polyline_file(p)?), usize::MAX),
    };

    let mut done: Vec<Reconstruction> = Vec::new();
    if opts.resume {
        let (prior, bad) = read_jsonl_lenient::<Reconstruction>(out)?;
        if bad > 0 {
            log::warn!("{}: dropped {bad} incomplete line(s)", out.display());
        }
        let ids: BTreeSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
        done = prior
            .into_iter()
            .filter(|r| r.method == label && ids.contains(r.task_id.as_str()))
            .collect();
    }
    // clean slate holding only the complete lines, then append
    write_jsonl(out, &done)?;
    let completed: BTreeSet<String> = done.iter().map(|r| r.task_id.clone()).collect();
    let pending: Vec<&MaskedTask> = tasks.iter().filter(|t| !completed.contains(&t.task_id)).collect();

    let appender = JsonlAppender::open(out, false)?;
    let threads = opts.parallelism.max(1).min(cap);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let results: Vec<Option<bool>> = pool.install(|| {
        pending
            .par_iter()
            .map(|task| -> Result<Option<bool>> {
                let Some(rec) = reconstruct(&runner, &label, task, cfg) else {
                    return Ok(None);
                };
                appender.append(&rec)?;
                Ok(Some(rec.fallback_flag))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    drop(appender);

    let mut all: Vec<Reconstruction> = read_jsonl(out)?;
    all.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    all.dedup_by(|a, b| a.task_id == b.task_id);
    write_jsonl(out, &all)?;

    let summary = RunSummary {
        tasks: tasks.len(),
        resumed: completed.len(),
        produced: results.iter().filter(|r| r.is_some()).count(),
        fallbacks: results.iter().filter(|r| **r == Some(true)).count(),
        skipped: results.iter().filter(|r| r.is_none()).count(),
    };
    write_manifest(
        &sidecar(out, "manifest.json"),
        &serde_json::json!({
            "command": "run",
            "method": label,
            "seed": cfg.seed,
            "pipeline": cfg.pipeline,
            "hmm": cfg.hmm,
            "reconstructions": all.len(),
        }),
    )?;
    Ok(summary)
}

/// Scores every (method, task) pair. Each method found in the
/// reconstruction files is evaluated on every task; tasks without a
/// reconstruction get a flagged record with no metrics. Networks are read
/// from the cache only, and only for plan-bearing reconstructions.
pub fn eval(tasks_path: &Path, reconstructions: &[PathBuf], cfg: &RunConfig, out: &Path) -> Result<Vec<EvalRecord>> {
    let tasks: Vec<MaskedTask> = read_jsonl(tasks_path)?;
    let task_ids: BTreeSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    let mut by_method: BTreeMap<String, BTreeMap<String, Reconstruction>> = BTreeMap::new();
    for path in reconstructions {
        for rec in read_jsonl::<Reconstruction>(path)? {
            if !task_ids.contains(rec.task_id.as_str()) {
                log::warn!("{}: reconstruction for unknown task {}", path.display(), rec.task_id);
                continue;
            }
            let slot = by_method.entry(rec.method.clone()).or_default();
            if slot.contains_key(&rec.task_id) {
                bail!("{}: duplicate reconstruction for {} / {}", path.display(), rec.method, rec.task_id);
            }
            slot.insert(rec.task_id.clone(), rec);
        }
    }
    let needs_net: BTreeSet<&str> = by_method
        .values()
        .flat_map(|m| m.values())
        .filter(|r| r.plan.is_some())
        .map(|r| r.task_id.as_str())
        .collect();
    let nets: BTreeMap<&str, RoadNetwork> = tasks
        .par_iter()
        .filter(|t| needs_net.contains(t.task_id.as_str()))
        .filter_map(|t| match cached_network(&cfg.cache_dir, t) {
            Ok(n) => Some((t.task_id.as_str(), n)),
            Err(e) => {
                log::warn!("{}: {e}; network diagnostics skipped", t.task_id);
                None
            }
        })
        .collect();

    let mut records = Vec::new();
    for (method, recs) in &by_method {
        let mut batch: Vec<EvalRecord> = tasks
            .par_iter()
            .map(|t| {
                evaluate(
                    t,
                    method,
                    recs.get(&t.task_id),
                    nets.get(t.task_id.as_str()),
                    &cfg.metrics,
                )
            })
            .collect();
        records.append(&mut batch);
    }
    records.sort_by(|a, b| (&a.method, &a.task_id).cmp(&(&b.method, &b.task_id)));
    write_jsonl(out, &records)?;
    Ok(records)
}

/// Writes the report bundle for an eval output.
pub fn report(records: &Path, tasks: &Path, reconstructions: &[PathBuf], out_dir: &Path) -> Result<ReportBundle> {
    let records: Vec<EvalRecord> = read_jsonl(records)?;
    let tasks: Vec<MaskedTask> = read_jsonl(tasks)?;
    let mut recs = Vec::new();
    for p in reconstructions {
        recs.extend(read_jsonl::<Reconstruction>(p)?);
    }
    Ok(write_report(out_dir, &records, &tasks, &recs)?)
}
