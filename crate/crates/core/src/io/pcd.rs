//! Reader and writer for a fixed PCD subset: fields `x y z`, 32-bit
//! floats, ASCII or little-endian binary body. Coordinates are stored in
//! single precision, so writing and re-reading is exact only for values
//! already representable as f32.

use super::IoError;
use crate::geometry::Point3;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Body encoding of a PCD file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcdEncoding {
    Ascii,
    Binary,
}

/// Writes `points` to `path` in the PCD subset this crate reads back.
/// Non-finite coordinates are rejected.
pub fn write_pcd(path: &Path, points: &[Point3], enc: PcdEncoding) -> Result<(), IoError> {
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(IoError::format(
            path,
            format!("refusing to write non-finite point ({}, {}, {})", p.x, p.y, p.z),
        ));
    }
    let n = points.len();
    let data = match enc {
        PcdEncoding::Ascii => "ascii",
        PcdEncoding::Binary => "binary",
    };
    let mut buf: Vec<u8> = Vec::with_capacity(256 + n * 13);
    write!(
        buf,
        "# .PCD v0.7 - Point Cloud Data file format\n\
         VERSION 0.7\n\
         FIELDS x y z\n\
         SIZE 4 4 4\n\
         TYPE F F F\n\
         COUNT 1 1 1\n\
         WIDTH {n}\n\
         HEIGHT 1\n\
         VIEWPOINT 0 0 0 1 0 0 0\n\
         POINTS {n}\n\
         DATA {data}\n"
    )
    .expect("writing to Vec cannot fail");
    match enc {
        PcdEncoding::Ascii => {
            for p in points {
                // f32 Display round-trips, so read(write(x)) is exact for
                // single-precision values.
                writeln!(buf, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)
                    .expect("writing to Vec cannot fail");
            }
        }
        PcdEncoding::Binary => {
            for p in points {
                buf.extend_from_slice(&(p.x as f32).to_le_bytes());
                buf.extend_from_slice(&(p.y as f32).to_le_bytes());
                buf.extend_from_slice(&(p.z as f32).to_le_bytes());
            }
        }
    }
    fs::write(path, buf).map_err(|e| IoError::io(path, e))
}

struct Header {
    fields: Vec<String>,
    sizes: Vec<u32>,
    types: Vec<String>,
    counts: Vec<u32>,
    width: Option<u64>,
    height: Option<u64>,
    points: Option<u64>,
    data: Option<String>,
}

/// Reads a PCD file written by [`write_pcd`] (or any file within the same
/// subset). Returns an error on unknown layouts or non-finite coordinates.
pub fn read_pcd(path: &Path) -> Result<Vec<Point3>, IoError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;

    let mut header = Header {
        fields: Vec::new(),
        sizes: Vec::new(),
        types: Vec::new(),
        counts: Vec::new(),
        width: None,
        height: None,
        points: None,
        data: None,
    };
    let mut offset = 0usize; // byte offset of the body
    let mut line_no = 0usize;
    while offset < bytes.len() {
        line_no += 1;
        let rest = &bytes[offset..];
        let line_end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
        let raw = &rest[..line_end];
        offset += line_end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| IoError::parse(path, line_no, "header line is not valid UTF-8"))?
            .trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or("");
        let vals: Vec<&str> = it.collect();
        let parse_u32s = |vals: &[&str]| -> Result<Vec<u32>, IoError> {
            vals.iter()
                .map(|v| {
                    v.parse::<u32>()
                        .map_err(|_| IoError::parse(path, line_no, format!("bad integer '{v}'")))
                })
                .collect()
        };
        match key {
            "VERSION" | "VIEWPOINT" => {}
            "FIELDS" => header.fields = vals.iter().map(|s| s.to_string()).collect(),
            "SIZE" => header.sizes = parse_u32s(&vals)?,
            "TYPE" => header.types = vals.iter().map(|s| s.to_string()).collect(),
            "COUNT" => header.counts = parse_u32s(&vals)?,
            "WIDTH" => {
                header.width = Some(vals.first().and_then(|v| v.parse().ok()).ok_or_else(|| {
                    IoError::parse(path, line_no, "WIDTH needs one integer value")
                })?)
            }
            "HEIGHT" => {
                header.height = Some(vals.first().and_then(|v| v.parse().ok()).ok_or_else(|| {
                    IoError::parse(path, line_no, "HEIGHT needs one integer value")
                })?)
            }
            "POINTS" => {
                header.points = Some(vals.first().and_then(|v| v.parse().ok()).ok_or_else(|| {
                    IoError::parse(path, line_no, "POINTS needs one integer value")
                })?)
            }
            "DATA" => {
                header.data = Some(
                    vals.first()
                        .ok_or_else(|| IoError::parse(path, line_no, "DATA needs a value"))?
                        .to_string(),
                );
                break; // body starts right after this line
            }
            other => {
                return Err(IoError::parse(path, line_no, format!("unknown header key '{other}'")))
            }
        }
    }

    if header.fields != ["x", "y", "z"] {
        return Err(IoError::format(
            path,
            format!("unsupported FIELDS {:?}, need exactly [x, y, z]", header.fields),
        ));
    }
    if header.sizes != [4, 4, 4] || header.types != ["F", "F", "F"] {
        return Err(IoError::format(path, "unsupported layout, need three 32-bit floats"));
    }
    if !header.counts.is_empty() && header.counts != [1, 1, 1] {
        return Err(IoError::format(path, "unsupported COUNT, need 1 per field"));
    }
    let n = match (header.points, header.width, header.height) {
        (Some(p), _, _) => p,
        (None, Some(w), Some(h)) => w * h,
        _ => return Err(IoError::format(path, "missing POINTS (or WIDTH and HEIGHT)")),
    };
    if let (Some(w), Some(h), Some(p)) = (header.width, header.height, header.points) {
        if w * h != p {
            return Err(IoError::format(
                path,
                format!("WIDTH*HEIGHT = {} disagrees with POINTS = {p}", w * h),
            ));
        }
    }
    let n = usize::try_from(n).map_err(|_| IoError::format(path, "point count overflows"))?;

    let body = &bytes[offset.min(bytes.len())..];
    let mut points = Vec::with_capacity(n);
    match header.data.as_deref() {
        Some("ascii") => {
            let text = std::str::from_utf8(body)
                .map_err(|_| IoError::format(path, "ascii body is not valid UTF-8"))?;
            for (i, line) in text.lines().enumerate() {
                let line_no = line_no + 1 + i;
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let vals: Vec<&str> = line.split_whitespace().collect();
                if vals.len() != 3 {
                    return Err(IoError::parse(
                        path,
                        line_no,
                        format!("expected 3 values per point, got {}", vals.len()),
                    ));
                }
                let mut coords = [0f64; 3];
                for (k, v) in vals.iter().enumerate() {
                    let f: f32 = v.parse().map_err(|_| {
                        IoError::parse(path, line_no, format!("bad float '{v}'"))
                    })?;
                    coords[k] = f as f64;
                }
                points.push(Point3::new(coords[0], coords[1], coords[2]));
            }
        }
        Some("binary") => {
            let need = n * 12;
            if body.len() < need {
                return Err(IoError::format(
                    path,
                    format!("binary body truncated at byte {}, need {need} bytes", body.len()),
                ));
            }
            for i in 0..n {
                let at = i * 12;
                let f = |o: usize| {
                    f32::from_le_bytes([body[at + o], body[at + o + 1], body[at + o + 2], body[at + o + 3]])
                        as f64
                };
                points.push(Point3::new(f(0), f(4), f(8)));
            }
        }
        Some(other) => {
            return Err(IoError::format(path, format!("unsupported DATA encoding '{other}'")))
        }
        None => return Err(IoError::format(path, "missing DATA line")),
    }

    if points.len() != n {
        return Err(IoError::format(
            path,
            format!("declared {n} points but body holds {}", points.len()),
        ));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(IoError::format(path, format!("non-finite coordinates at point {i}")));
    }
    Ok(points)
}
