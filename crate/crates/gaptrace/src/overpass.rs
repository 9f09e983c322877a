//! Overpass fetching with an on-disk response cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use gaptrace_core::geo::expanded_bbox;
use gaptrace_core::roadnet::{build_graph, overpass_query, RoadNetwork, RoadnetError};
use gaptrace_core::traces::MaskedTask;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("rate limited (HTTP {0})")]
    RateLimited(u16),
    #[error("HTTP {0}")]
    Status(u16),
    #[error("transport: {0}")]
    Io(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::RateLimited(_) | TransportError::Io(_) => true,
            TransportError::Status(s) => *s >= 500,
        }
    }
}

/// Sends a query body and returns the response bytes.
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: &str, body: &str) -> Result<Vec<u8>, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(180))
    }
}

impl Transport for UreqTransport {
    fn post(&self, endpoint: &str, body: &str) -> Result<Vec<u8>, TransportError> {
        let mut resp = self
            .agent
            .post(endpoint)
            .header("Content-Type", "application/x-www-form-urlencoded")
            .send(format!("data={}", form_encode(body)))
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => resp
                .body_mut()
                .with_config()
                .limit(512 * 1024 * 1024)
                .read_to_vec()
                .map_err(|e| TransportError::Io(e.to_string())),
            429 | 504 => Err(TransportError::RateLimited(status)),
            s => Err(TransportError::Status(s)),
        }
    }
}

fn form_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len() * 3);
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            b' ' => out.push('+'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

/// Pause between retries; replaceable so tests need not wait.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("giving up after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: TransportError },
    #[error("{path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Graph(#[from] RoadnetError),
    #[error("no cached network for this task")]
    NotCached,
    #[error("cannot build a bounding box for the task: {0}")]
    BadTask(String),
}

/// Hex SHA-256 of the query text.
pub fn cache_key(query: &str) -> String {
    Sha256::digest(query.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// The query for a task: its endpoints' box grown by the gap kind's buffer.
pub fn task_query(task: &MaskedTask) -> Result<String, FetchError> {
    let bbox = expanded_bbox(&task.p_s, &task.p_e, task.gap_kind.bbox_buffer_m())
        .map_err(|e| FetchError::BadTask(e.to_string()))?;
    Ok(overpass_query(task.activity, &bbox))
}

pub struct OverpassClient {
    endpoint: String,
    cache_dir: PathBuf,
    transport: Box<dyn Transport>,
    sleeper: Box<dyn Sleeper>,
    max_retries: u32,
    base_delay: Duration,
    // one request in flight per client, hence per endpoint
    in_flight: Mutex<()>,
}

impl OverpassClient {
    pub fn new(endpoint: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Self {
        Self::with_transport(
            endpoint,
            cache_dir,
            Box::new(UreqTransport::default()),
            Box::new(ThreadSleeper),
        )
    }

    pub fn with_transport(
        endpoint: impl Into<String>,
        cache_dir: impl Into<PathBuf>,
        transport: Box<dyn Transport>,
        sleeper: Box<dyn Sleeper>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            cache_dir: cache_dir.into(),
            transport,
            sleeper,
            max_retries: 5,
            base_delay: Duration::from_secs(2),
            in_flight: Mutex::new(()),
        }
    }

    pub fn cache_path(&self, query: &str) -> PathBuf {
        cache_path(&self.cache_dir, query)
    }

    /// Response for `query`, from cache when a readable copy exists.
    /// A cached file that is not valid JSON is discarded and refetched.
    pub fn fetch(&self, query: &str) -> Result<Vec<u8>, FetchError> {
        let path = self.cache_path(query);
        if let Some(bytes) = read_valid_cache(&path) {
            return Ok(bytes);
        }
        let _guard = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        // another thread may have filled the cache while we waited
        if let Some(bytes) = read_valid_cache(&path) {
            return Ok(bytes);
        }
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.transport.post(&self.endpoint, query) {
                Ok(bytes) if serde_json::from_slice::<serde::de::IgnoredAny>(&bytes).is_ok() => {
                    write_atomic(&path, &bytes).map_err(|e| FetchError::Cache {
                        path: path.clone(),
                        source: std::io::Error::other(e.to_string()),
                    })?;
                    return Ok(bytes);
                }
                Ok(_) => {
                    let last = TransportError::Io("response is not JSON".into());
                    if attempt > self.max_retries {
                        return Err(FetchError::Exhausted { attempts: attempt, last });
                    }
                }
                Err(e) if e.retryable() && attempt <= self.max_retries => {
                    log::warn!("overpass attempt {attempt} failed: {e}");
                }
                Err(e) => return Err(FetchError::Exhausted { attempts: attempt, last: e }),
            }
            self.sleeper.sleep(self.base_delay * 2u32.pow(attempt - 1));
        }
    }

    /// Fetches (or reads from cache) and builds the task's network.
    pub fn network_for_task(&self, task: &MaskedTask) -> Result<RoadNetwork, FetchError> {
        let bytes = self.fetch(&task_query(task)?)?;
        Ok(build_graph(&bytes)?)
    }
}

fn cache_path(dir: &Path, query: &str) -> PathBuf {
    dir.join(format!("{}.json", cache_key(query)))
}

fn read_valid_cache(path: &Path) -> Option<Vec<u8>> {
    let bytes = fs::read(path).ok()?;
    if serde_json::from_slice::<serde::de::IgnoredAny>(&bytes).is_ok() {
        Some(bytes)
    } else {
        log::warn!("discarding corrupt cache file {}", path.display());
        None
    }
}

/// Cache-only network lookup, used by commands that must not hit the network.
pub fn cached_network(cache_dir: &Path, task: &MaskedTask) -> Result<RoadNetwork, FetchError> {
    let path = cache_path(cache_dir, &task_query(task)?);
    let bytes = read_valid_cache(&path).ok_or(FetchError::NotCached)?;
    Ok(build_graph(&bytes)?)
}
