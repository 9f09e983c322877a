//! GPX 1.0/1.1 track reader.

use chrono::{DateTime, NaiveDate};
use gaptrace_core::geo::GeoPoint;
use gaptrace_core::traces::{CalendarDate, TimedPoint};
use quick_xml::escape::resolve_predefined_entity;
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpxError {
    #[error("malformed XML at byte {position}: {source}")]
    Xml {
        position: u64,
        #[source]
        source: quick_xml::Error,
    },
    #[error("track point {index}: {message}")]
    BadPoint { index: usize, message: String },
    #[error("unparseable timestamp {0:?}")]
    BadTime(String),
    #[error("document has no <gpx> root")]
    NotGpx,
}

/// Everything read from one file. Track points from every `<trk>` and
/// `<trkseg>` are flattened in document order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GpxTrack {
    pub name: String,
    pub description: String,
    /// Date of `<metadata><time>`, if present.
    pub metadata_date: Option<CalendarDate>,
    pub points: Vec<TimedPoint>,
}

#[derive(Default)]
struct PendingPoint {
    point: Option<GeoPoint>,
    time: Option<i64>,
}

fn coordinate(e: &BytesStart<'_>, key: &str, index: usize) -> Result<f64, GpxError> {
    let bad = |message: String| GpxError::BadPoint { index, message };
    let attr = e
        .try_get_attribute(key)
        .map_err(|err| bad(err.to_string()))?
        .ok_or_else(|| bad(format!("missing {key}")))?;
    let raw = attr.normalized_value(XmlVersion::Implicit1_0).map_err(|err| bad(err.to_string()))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| bad(format!("{key}={raw:?} is not a number")))
}

fn point_start(e: &BytesStart<'_>, index: usize) -> Result<GeoPoint, GpxError> {
    let lat = coordinate(e, "lat", index)?;
    let lon = coordinate(e, "lon", index)?;
    GeoPoint::new(lat, lon).map_err(|err| GpxError::BadPoint {
        index,
        message: err.to_string(),
    })
}

fn parse_time(s: &str) -> Result<DateTime<chrono::FixedOffset>, GpxError> {
    let s = s.trim();
    DateTime::parse_from_rfc3339(s)
        .or_else(|_| DateTime::parse_from_rfc3339(&format!("{s}Z")))
        .map_err(|_| GpxError::BadTime(s.to_string()))
}

fn calendar(date: NaiveDate) -> Option<CalendarDate> {
    use chrono::Datelike;
    CalendarDate::new(date.year(), date.month() as u8, date.day() as u8).ok()
}

/// Parses a GPX document. Points without timestamps are kept with
/// `time: None`; a malformed timestamp is an error.
pub fn parse_gpx(bytes: &[u8]) -> Result<GpxTrack, GpxError> {
    let mut reader = Reader::from_reader(bytes);
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut text = String::new();
    let mut track = GpxTrack::default();
    let mut pending: Option<PendingPoint> = None;
    let mut trk_name: Option<String> = None;
    let mut trk_desc: Option<String> = None;
    let mut meta_name: Option<String> = None;
    let mut meta_desc: Option<String> = None;
    let mut seen_root = false;
    loop {
        let event = reader.read_event_into(&mut buf).map_err(|source| GpxError::Xml {
            position: reader.error_position(),
            source,
        })?;
        match event {
            Event::Start(e) => {
                let name = e.local_name().as_ref().to_string();
                if name == "gpx" {
                    seen_root = true;
                }
                if name == "trkpt" {
                    pending = Some(PendingPoint {
                        point: Some(point_start(&e, track.points.len())?),
                        time: None,
                    });
                }
                path.push(name);
                text.clear();
            }
            Event::Empty(e) => {
                let name = e.local_name();
                if name.as_ref() == "trkpt" {
                    let p = point_start(&e, track.points.len())?;
                    track.points.push(TimedPoint::new(p, None));
                }
            }
            Event::Text(e) => text.push_str(&e.xml10_content()),
            Event::CData(e) => text.push_str(&e),
            Event::GeneralRef(e) => {
                if let Ok(Some(c)) = e.resolve_char_ref() {
                    text.push(c);
                } else if let Some(s) = resolve_predefined_entity(&e) {
                    text.push_str(s);
                }
            }
            Event::End(_) => {
                let Some(name) = path.pop() else { continue };
                let parent = path.last().map(String::as_str);
                let value = text.trim().to_string();
                match (name.as_str(), parent) {
                    ("time", Some("trkpt")) => {
                        if let Some(p) = pending.as_mut() {
                            p.time = Some(parse_time(&value)?.timestamp());
                        }
                    }
                    ("time", Some("metadata")) => {
                        track.metadata_date = calendar(parse_time(&value)?.date_naive());
                    }
                    ("name", Some("metadata")) => meta_name = meta_name.or(Some(value)),
                    ("desc", Some("metadata")) => meta_desc = meta_desc.or(Some(value)),
                    ("name", Some("trk")) => trk_name = trk_name.or(Some(value)),
                    ("desc", Some("trk")) => trk_desc = trk_desc.or(Some(value)),
                    ("trkpt", _) => {
                        if let Some(PendingPoint {
                            point: Some(p),
                            time,
                        }) = pending.take()
                        {
                            track.points.push(TimedPoint::new(p, time));
                        }
                    }
                    _ => {}
                }
                text.clear();
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !seen_root {
        return Err(GpxError::NotGpx);
    }
    track.name = trk_name.or(meta_name).unwrap_or_default();
    track.description = trk_desc.or(meta_desc).unwrap_or_default();
    Ok(track)
}
