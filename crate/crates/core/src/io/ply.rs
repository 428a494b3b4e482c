//! ASCII PLY for sparse clouds: `x y z` floats and an `intensity` byte.

use std::fmt::Write;
use std::path::Path;

use super::{read_bytes, write_bytes, IoError};
use crate::geometry::WorldPoint;
use crate::sfm::{CloudPoint, PointCloud};

const PROPERTIES: [&str; 4] = ["property float x", "property float y", "property float z", "property uchar intensity"];

/// Six significant digits with trailing zeros kept, as C's `%#.6g`.
fn format_g6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

pub fn encode_ply(cloud: &PointCloud) -> String {
    let mut out = format!("ply\nformat ascii 1.0\nelement vertex {}\n", cloud.points.len());
    for p in PROPERTIES {
        out.push_str(p);
        out.push('\n');
    }
    out.push_str("end_header\n");
    for p in &cloud.points {
        let w = p.position;
        writeln!(out, "{} {} {} {}", format_g6(w.x), format_g6(w.y), format_g6(w.z), p.intensity).expect("write to string");
    }
    out
}

/// Accepts the layout written by [`encode_ply`]; `comment` lines are skipped.
pub fn decode_ply(text: &str) -> Result<PointCloud, IoError> {
    let mut lines = text.lines().filter(|l| !l.starts_with("comment"));
    if lines.next() != Some("ply") {
        return Err(IoError::UnsupportedFormat("missing ply magic".into()));
    }
    match lines.next() {
        Some("format ascii 1.0") => {}
        Some(f) => return Err(IoError::UnsupportedFormat(f.to_string())),
        None => return Err(IoError::CorruptHeader("missing format line".into())),
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("element vertex "))
        .ok_or_else(|| IoError::CorruptHeader("missing vertex element".into()))?
        .trim()
        .parse()
        .map_err(|_| IoError::CorruptHeader("bad vertex count".into()))?;
    for expected in PROPERTIES {
        match lines.next() {
            Some(l) if l == expected => {}
            Some(l) => return Err(IoError::SchemaMismatch(format!("expected {expected:?}, found {l:?}"))),
            None => return Err(IoError::CorruptHeader("header ends early".into())),
        }
    }
    match lines.next() {
        Some("end_header") => {}
        Some(l) => return Err(IoError::SchemaMismatch(format!("unexpected header line {l:?}"))),
        None => return Err(IoError::CorruptHeader("missing end_header".into())),
    }
    let mut points = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        if i >= count {
            return Err(IoError::CorruptFile(format!("more than {count} vertices")));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || IoError::CorruptFile(format!("vertex {i}: {line:?}"));
        let [x, y, z, v] = fields[..] else { return Err(bad()) };
        let coord = |s: &str| s.parse::<f64>().map_err(|_| bad());
        points.push(CloudPoint { position: WorldPoint::new(coord(x)?, coord(y)?, coord(z)?), intensity: v.parse().map_err(|_| bad())? });
    }
    if points.len() != count {
        return Err(IoError::CorruptFile(format!("header declares {count} vertices, found {}", points.len())));
    }
    Ok(PointCloud { points })
}

pub fn write_ply(cloud: &PointCloud, path: &Path) -> Result<(), IoError> {
    write_bytes(path, encode_ply(cloud).as_bytes())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, IoError> {
    let bytes = read_bytes(path)?;
    decode_ply(std::str::from_utf8(&bytes).map_err(|e| IoError::CorruptFile(e.to_string()))?)
}
