//! JSONL / JSON record schemas of a replay dataset: the frame manifest,
//! camera intrinsics, 2D detections, ground-truth boxes, and tracker
//! results. Serialization order follows field declaration order, so a
//! given value set always produces identical bytes.

use super::IoError;
use crate::geometry::{Box2d, CameraModel, GeometryError, Point3, Pose};
use crate::obstacle::Source;
use crate::tracking::{MotionClass, TrackedObstacle};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

/// A pose sample: stamp, position, and orientation quaternion as
/// `[w, x, y, z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdomRecord {
    pub t: f64,
    pub pos: [f64; 3],
    pub quat: [f64; 4],
}

impl OdomRecord {
    pub fn from_pose(pose: &Pose) -> Self {
        OdomRecord {
            t: pose.stamp,
            pos: [pose.position.x, pose.position.y, pose.position.z],
            quat: pose.quat_wxyz(),
        }
    }

    pub fn to_pose(&self) -> Result<Pose, GeometryError> {
        Pose::new(self.t, Point3::new(self.pos[0], self.pos[1], self.pos[2]), self.quat)
    }
}

/// One line of `manifest.jsonl`: where to find each stream of a frame.
/// File paths are relative to the dataset root; `depth` and `det2d` are
/// optional streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub stamp: f64,
    pub lidar: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub det2d: Option<String>,
    pub odom: OdomRecord,
}

/// Camera description stored as `camera.json` next to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera pose in the robot body frame (`t` is ignored).
    pub extrinsic: OdomRecord,
    /// Meters per raw pixel unit (0.001 for millimeter depth).
    pub depth_scale: f64,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl CameraRecord {
    pub fn from_model(cam: &CameraModel) -> Self {
        CameraRecord {
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            width: cam.width,
            height: cam.height,
            extrinsic: OdomRecord::from_pose(&cam.extrinsic),
            depth_scale: cam.depth_scale,
            depth_min: cam.depth_min,
            depth_max: cam.depth_max,
        }
    }

    pub fn to_model(&self) -> Result<CameraModel, GeometryError> {
        Ok(CameraModel {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            extrinsic: self.extrinsic.to_pose()?,
            depth_scale: self.depth_scale,
            depth_min: self.depth_min,
            depth_max: self.depth_max,
        })
    }
}

/// One line of a per-frame 2D detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Det2dRecord {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Det2dRecord {
    pub fn from_box(b: &Box2d) -> Self {
        Det2dRecord {
            u_min: b.u_min,
            v_min: b.v_min,
            u_max: b.u_max,
            v_max: b.v_max,
            label: b.label.clone(),
            score: b.score,
        }
    }

    pub fn to_box(&self) -> Result<Box2d, GeometryError> {
        let mut b = Box2d::new(self.u_min, self.v_min, self.u_max, self.v_max)?;
        b.label = self.label.clone();
        b.score = self.score;
        Ok(b)
    }
}

/// A ground-truth box with identity and motion label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtBox {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub track_id: u64,
    pub is_dynamic: bool,
}

/// One line of `gt.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtFrame {
    pub stamp: f64,
    pub boxes: Vec<GtBox>,
}

/// One tracked obstacle in a results line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultObstacle {
    pub id: u64,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub velocity: [f64; 3],
    pub motion_class: MotionClass,
    pub source: Source,
}

impl ResultObstacle {
    pub fn from_tracked(t: &TrackedObstacle) -> Self {
        ResultObstacle {
            id: t.id,
            center: [t.bbox.center.x, t.bbox.center.y, t.bbox.center.z],
            size: t.bbox.size,
            velocity: [t.velocity.x, t.velocity.y, t.velocity.z],
            motion_class: t.motion_class,
            source: t.source,
        }
    }
}

/// One line of `results.jsonl`: everything the pipeline reported for a
/// frame. `notice` explains degraded operation (for example a dropped
/// visual stream) when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFrame {
    pub stamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
    pub obstacles: Vec<ResultObstacle>,
}

// --- generic JSONL plumbing ---

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    let file = fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| IoError::format(path, format!("serialize failed: {e}")))?;
        w.write_all(line.as_bytes()).map_err(|e| IoError::io(path, e))?;
        w.write_all(b"\n").map_err(|e| IoError::io(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| IoError::parse(path, i + 1, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

fn check_increasing(path: &Path, stamps: impl Iterator<Item = f64>) -> Result<(), IoError> {
    let mut prev: Option<f64> = None;
    for (i, s) in stamps.enumerate() {
        if !s.is_finite() {
            return Err(IoError::parse(path, i + 1, format!("non-finite stamp {s}")));
        }
        if let Some(p) = prev {
            if s <= p {
                return Err(IoError::parse(
                    path,
                    i + 1,
                    format!("stamps must be strictly increasing, got {p} then {s}"),
                ));
            }
        }
        prev = Some(s);
    }
    Ok(())
}

// --- typed readers and writers ---

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), IoError> {
    write_jsonl(path, entries)
}

/// Reads and validates `manifest.jsonl`; stamps must strictly increase.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IoError> {
    let entries: Vec<ManifestEntry> = read_jsonl(path)?;
    check_increasing(path, entries.iter().map(|e| e.stamp))?;
    Ok(entries)
}

pub fn write_camera_json(path: &Path, cam: &CameraModel) -> Result<(), IoError> {
    let record = CameraRecord::from_model(cam);
    let text = serde_json::to_string_pretty(&record)
        .map_err(|e| IoError::format(path, format!("serialize failed: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| IoError::io(path, e))
}

pub fn read_camera_json(path: &Path) -> Result<CameraModel, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let record: CameraRecord =
        serde_json::from_str(&text).map_err(|e| IoError::parse(path, e.line(), e.to_string()))?;
    record.to_model().map_err(|e| IoError::format(path, e.to_string()))
}

pub fn write_det2d(path: &Path, boxes: &[Box2d]) -> Result<(), IoError> {
    let records: Vec<Det2dRecord> = boxes.iter().map(Det2dRecord::from_box).collect();
    write_jsonl(path, &records)
}

pub fn read_det2d(path: &Path) -> Result<Vec<Box2d>, IoError> {
    let records: Vec<Det2dRecord> = read_jsonl(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| r.to_box().map_err(|e| IoError::parse(path, i + 1, e.to_string())))
        .collect()
}

pub fn write_gt(path: &Path, frames: &[GtFrame]) -> Result<(), IoError> {
    write_jsonl(path, frames)
}

/// Reads `gt.jsonl`; stamps must strictly increase so frames pair with the
/// manifest unambiguously.
pub fn read_gt(path: &Path) -> Result<Vec<GtFrame>, IoError> {
    let frames: Vec<GtFrame> = read_jsonl(path)?;
    check_increasing(path, frames.iter().map(|f| f.stamp))?;
    Ok(frames)
}

pub fn write_results(path: &Path, frames: &[ResultFrame]) -> Result<(), IoError> {
    write_jsonl(path, frames)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultFrame>, IoError> {
    let frames: Vec<ResultFrame> = read_jsonl(path)?;
    check_increasing(path, frames.iter().map(|f| f.stamp))?;
    Ok(frames)
}
