//! Replay dataset access: a directory with `manifest.jsonl`, optional
//! `camera.json`, and the per-frame files the manifest points at.

use super::records::{read_camera_json, read_det2d, read_manifest, ManifestEntry};
use super::{read_depth_png, read_pcd, IoError};
use crate::depth::DepthFrame;
use crate::geometry::{Box2d, CameraModel, CloudFrame, PointCloud, Pose};
use std::path::{Path, PathBuf};

/// Largest stamp distance a pose query may bridge, seconds.
pub const MAX_POSE_GAP: f64 = 0.02;

/// Everything one frame of a dataset provides.
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub stamp: f64,
    /// Laser scan in the sensor frame.
    pub cloud: PointCloud,
    pub depth: Option<DepthFrame>,
    pub det2d: Vec<Box2d>,
    /// Robot body pose at the frame stamp.
    pub odom: Pose,
}

/// An opened dataset directory.
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub camera: Option<CameraModel>,
}

impl Dataset {
    /// Opens `root`, reading the manifest and, when present, the camera
    /// description.
    pub fn open(root: &Path) -> Result<Self, IoError> {
        let manifest_path = root.join("manifest.jsonl");
        let entries = read_manifest(&manifest_path)?;
        let camera_path = root.join("camera.json");
        let camera = if camera_path.exists() { Some(read_camera_json(&camera_path)?) } else { None };
        Ok(Dataset { root: root.to_path_buf(), entries, camera })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads every stream of frame `idx`.
    pub fn load_frame(&self, idx: usize) -> Result<FrameBundle, IoError> {
        let entry = &self.entries[idx];
        let points = read_pcd(&self.root.join(&entry.lidar))?;
        let cloud = PointCloud::new(entry.stamp, CloudFrame::Sensor, points);

        let depth = match &entry.depth {
            Some(rel) => {
                let cam = self.camera.as_ref().ok_or_else(|| {
                    IoError::format(
                        &self.root.join("camera.json"),
                        "manifest references depth images but the dataset has no camera.json",
                    )
                })?;
                let path = self.root.join(rel);
                let (w, h, values) = read_depth_png(&path)?;
                Some(
                    DepthFrame::new(w, h, values, entry.stamp, cam.clone())
                        .map_err(|msg| IoError::format(&path, msg))?,
                )
            }
            None => None,
        };

        let det2d = match &entry.det2d {
            Some(rel) => read_det2d(&self.root.join(rel))?,
            None => Vec::new(),
        };

        let odom = entry
            .odom
            .to_pose()
            .map_err(|e| IoError::format(&self.root.join("manifest.jsonl"), e.to_string()))?;

        Ok(FrameBundle { stamp: entry.stamp, cloud, depth, det2d, odom })
    }
}

/// A time-ordered pose sequence with interpolated lookup.
pub struct PoseStream {
    poses: Vec<Pose>,
}

impl PoseStream {
    /// Requires at least one pose and strictly increasing stamps.
    pub fn new(poses: Vec<Pose>) -> Result<Self, String> {
        if poses.is_empty() {
            return Err("pose stream needs at least one pose".into());
        }
        for w in poses.windows(2) {
            if w[1].stamp <= w[0].stamp {
                return Err(format!(
                    "pose stamps must be strictly increasing, got {} then {}",
                    w[0].stamp, w[1].stamp
                ));
            }
        }
        Ok(PoseStream { poses })
    }

    pub fn from_manifest(entries: &[ManifestEntry]) -> Result<Self, String> {
        let poses: Result<Vec<Pose>, _> = entries.iter().map(|e| e.odom.to_pose()).collect();
        PoseStream::new(poses.map_err(|e| e.to_string())?)
    }

    /// Pose at `stamp`, interpolating between the bracketing samples.
    /// Fails when the nearest sample is more than `MAX_POSE_GAP` away —
    /// extrapolating over a large gap would silently fabricate motion.
    pub fn pose_at(&self, stamp: f64) -> Result<Pose, String> {
        let first = self.poses.first().expect("non-empty by construction");
        let last = self.poses.last().expect("non-empty by construction");
        if stamp <= first.stamp {
            return if first.stamp - stamp <= MAX_POSE_GAP {
                Ok(Pose { stamp, ..*first })
            } else {
                Err(format!(
                    "stamp {stamp} precedes the pose stream start {} by more than {MAX_POSE_GAP}s",
                    first.stamp
                ))
            };
        }
        if stamp >= last.stamp {
            return if stamp - last.stamp <= MAX_POSE_GAP {
                Ok(Pose { stamp, ..*last })
            } else {
                Err(format!(
                    "stamp {stamp} exceeds the pose stream end {} by more than {MAX_POSE_GAP}s",
                    last.stamp
                ))
            };
        }
        // Binary search for the bracketing pair.
        let hi = self.poses.partition_point(|p| p.stamp < stamp);
        let (a, b) = (&self.poses[hi - 1], &self.poses[hi]);
        let near = (stamp - a.stamp).min(b.stamp - stamp);
        if near > MAX_POSE_GAP {
            return Err(format!(
                "stamp {stamp} is {near:.3}s from the nearest pose sample, max {MAX_POSE_GAP}s"
            ));
        }
        let t = (stamp - a.stamp) / (b.stamp - a.stamp);
        let mut pose = a.interpolate(b, t);
        pose.stamp = stamp;
        Ok(pose)
    }
}
