//! Encoded polyline format at 1e-5 precision.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geo::{GeoError, GeoPoint, Polyline};
use crate::math;

const SCALE: f64 = 1e5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolylineError {
    #[error("byte {byte:#04x} at offset {offset} is outside the polyline alphabet")]
    BadCharacter { offset: usize, byte: u8 },
    #[error("encoded stream ends inside a value")]
    Truncated,
    #[error("value at offset {0} overflows")]
    Overflow(usize),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

fn encode_value(v: i64, out: &mut String) {
    let mut x = (if v < 0 { !(v << 1) } else { v << 1 }) as u64;
    while x >= 0x20 {
        out.push(char::from((0x20 | (x & 0x1f)) as u8 + 63));
        x >>= 5;
    }
    out.push(char::from(x as u8 + 63));
}

fn quantize(x: f64) -> i64 {
    math::round(x * SCALE) as i64
}

/// Encodes points after rounding each coordinate to 1e-5 degrees.
pub fn encode_polyline(line: &Polyline) -> String {
    let mut out = String::new();
    let (mut plat, mut plon) = (0i64, 0i64);
    for p in line.points() {
        let (lat, lon) = (quantize(p.lat()), quantize(p.lon()));
        encode_value(lat - plat, &mut out);
        encode_value(lon - plon, &mut out);
        plat = lat;
        plon = lon;
    }
    out
}

/// Decodes an encoded polyline. An empty string yields an empty polyline.
pub fn decode_polyline(encoded: &str) -> Result<Polyline, PolylineError> {
    let bytes = encoded.as_bytes();
    let mut values: Vec<i64> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let mut acc: u64 = 0;
        let mut shift = 0u32;
        loop {
            let Some(&b) = bytes.get(i) else {
                return Err(PolylineError::Truncated);
            };
            if !(63..=126).contains(&b) {
                return Err(PolylineError::BadCharacter { offset: i, byte: b });
            }
            let chunk = u64::from(b - 63);
            if shift > 60 {
                return Err(PolylineError::Overflow(start));
            }
            acc |= (chunk & 0x1f) << shift;
            shift += 5;
            i += 1;
            if chunk < 0x20 {
                break;
            }
        }
        let v = if acc & 1 == 1 { !(acc >> 1) as i64 } else { (acc >> 1) as i64 };
        values.push(v);
    }
    if !values.len().is_multiple_of(2) {
        return Err(PolylineError::Truncated);
    }
    let mut points = Vec::with_capacity(values.len() / 2);
    let (mut lat, mut lon) = (0i64, 0i64);
    for pair in values.chunks_exact(2) {
        lat += pair[0];
        lon += pair[1];
        points.push(GeoPoint::new(lat as f64 / SCALE, lon as f64 / SCALE)?);
    }
    Ok(Polyline::new(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn published_example() {
        let line = decode_polyline("_p~iF~ps|U_ulLnnqC_mqNvxq`@").unwrap();
        let want = [(38.5, -120.2), (40.7, -120.95), (43.252, -126.453)];
        assert_eq!(line.len(), 3);
        for (p, (lat, lon)) in line.points().iter().zip(want) {
            assert_eq!((p.lat(), p.lon()), (lat, lon));
        }
        assert_eq!(encode_polyline(&line), "_p~iF~ps|U_ulLnnqC_mqNvxq`@");
    }

    #[test]
    fn empty_and_errors() {
        assert!(decode_polyline("").unwrap().is_empty());
        assert_eq!(encode_polyline(&Polyline::new(vec![])), "");
        assert_eq!(decode_polyline("_p~iF~ps|"), Err(PolylineError::Truncated));
        assert_eq!(decode_polyline("_p~iF"), Err(PolylineError::Truncated));
        assert!(matches!(
            decode_polyline("_p~iF ~ps|U"),
            Err(PolylineError::BadCharacter { offset: 5, .. })
        ));
    }
}
