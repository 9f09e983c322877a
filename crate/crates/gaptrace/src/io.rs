//! JSON Lines persistence, atomic writes, and coordinate rounding.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use gaptrace_core::geo::GeoPoint;
use gaptrace_core::traces::{CalendarDate, MaskedTask, TimedPoint, Trajectory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Decimal places kept for coordinates in dataset and task files.
pub const COORDINATE_DECIMALS: i32 = 7;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Creates the parent directory of `path` if needed.
pub fn ensure_parent(path: &Path) -> Result<(), IoError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    ensure_parent(path)?;
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.flush().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// One JSON document per line.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        // Serializing plain data structures cannot fail.
        serde_json::to_writer(&mut out, item).expect("serializable record");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    write_atomic(path, &to_jsonl(items))
}

/// Reads every non-blank line; any malformed line is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| IoError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Reads what survives of a file that may have been cut off mid-write:
/// malformed lines are skipped and counted. A missing file is empty.
pub fn read_jsonl_lenient<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize), IoError> {
    if !path.exists() {
        return Ok((Vec::new(), 0));
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in bytes.split(|b| *b == b'\n') {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice(line) {
            Ok(v) => out.push(v),
            Err(_) => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Line-at-a-time appender shared between worker threads.
pub struct JsonlAppender {
    path: PathBuf,
    file: Mutex<BufWriter<File>>,
}

impl JsonlAppender {
    /// Opens for append. When `truncate` is set any previous content is dropped.
    pub fn open(path: &Path, truncate: bool) -> Result<Self, IoError> {
        ensure_parent(path)?;
        let mut opts = OpenOptions::new();
        opts.create(true);
        if truncate {
            opts.write(true).truncate(true);
        } else {
            opts.append(true);
        }
        let file = opts.open(path).map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append<T: Serialize>(&self, item: &T) -> Result<(), IoError> {
        let mut line = serde_json::to_vec(item).expect("serializable record");
        line.push(b'\n');
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&line).map_err(io_err(&self.path))?;
        f.flush().map_err(io_err(&self.path))
    }
}

fn round_point(p: &GeoPoint) -> GeoPoint {
    p.rounded(COORDINATE_DECIMALS)
}

fn round_timed(points: &mut [TimedPoint]) {
    for p in points {
        p.point = round_point(&p.point);
    }
}

/// Rounds coordinates to [`COORDINATE_DECIMALS`] and recomputes the length
/// so it stays consistent with the stored points.
pub fn round_trajectory(t: &mut Trajectory) {
    round_timed(&mut t.points);
    t.total_length = gaptrace_core::traces::timed_path_length(&t.points);
}

/// Rounds every coordinate of a task, keeping the masked length equal to
/// the path length of the stored ground truth.
pub fn round_task(t: &mut MaskedTask) {
    round_timed(&mut t.prefix);
    round_timed(&mut t.ground_truth);
    round_timed(&mut t.suffix);
    t.p_s = round_point(&t.p_s);
    t.p_e = round_point(&t.p_e);
    t.masked_length = gaptrace_core::traces::timed_path_length(&t.ground_truth);
}

/// Per-trace metadata supplied next to a GPX directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEntry {
    pub trace_id: String,
    pub region: String,
    #[serde(default)]
    pub upload_date: Option<CalendarDate>,
}

/// Reads a CSV with header `trace_id,region[,upload_date]`.
pub fn read_region_map(path: &Path) -> Result<BTreeMap<String, RegionEntry>, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<RegionRow>() {
        let row = row.map_err(csv_err)?;
        let upload_date = match row.upload_date.as_deref().filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => Some(s.parse::<CalendarDate>().map_err(|e| IoError::Invalid {
                path: path.to_path_buf(),
                message: format!("trace {}: {e}", row.trace_id),
            })?),
        };
        out.insert(
            row.trace_id.clone(),
            RegionEntry {
                trace_id: row.trace_id,
                region: row.region,
                upload_date,
            },
        );
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RegionRow {
    trace_id: String,
    region: String,
    #[serde(default)]
    upload_date: Option<String>,
}
