//! Canonical JSON encoding for reports.
//!
//! Object keys are sorted and every float is written in scientific notation
//! with 17 significant digits, so equal reports are equal byte for byte.

use std::io;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};

use crate::error::Result;

/// Version tag embedded in every report.
pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn write_i64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: i64) -> io::Result<()> {
        CompactFormatter.write_i64(w, value)
    }
}

/// Serializes `value` with sorted keys and 17-significant-digit floats.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    // Round-tripping through `Value` sorts keys (its map is a BTreeMap).
    let tree = serde_json::to_value(value)?;
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SignificantDigits);
    tree.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_floats_fixed_width() {
        let s = to_canonical_json(&json!({"b": 0.1, "a": [1, 2.5], "c": {"z": true, "y": "s"}}))
            .unwrap();
        assert_eq!(
            s,
            "{\"a\":[1,2.5000000000000000e0],\"b\":1.0000000000000001e-1,\"c\":{\"y\":\"s\",\"z\":true}}\n"
        );
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 5.920529220333998e-3, 1e-300, 123456.789] {
            let s = to_canonical_json(&v).unwrap();
            let back: f64 = s.trim().parse().unwrap();
            assert_eq!(back, v);
        }
    }
}
