//! LiDAR-visual fusion. Per frame, three phases:
//!
//! 1. each visual box absorbs every unclaimed LiDAR box it overlaps (3D IoU
//!    at or above the gate) into their minimal enclosing box;
//! 2. each merged box is reprojected into the image; when two or more 2D
//!    detections land inside it, the box splits into per-detection children;
//! 3. LiDAR boxes nobody claimed pass through verbatim.
//!
//! Visual boxes with no LiDAR support are dropped. All matching iterates in
//! a canonical box order, so the output never depends on input list order.
//! When one sensor stream is absent (or the streams' stamps disagree), the
//! surviving stream passes through unfused and the result says so.

use crate::geometry::{
    box2d_cmp, box_cmp, iou3d, min_enclosing_box, Aabb3, Box2d, CameraModel, Point3, Pose,
    project_to_image,
};
use crate::obstacle::{Obstacle3d, Source};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("split requires at least two 2D boxes, got {0}")]
    TooFewSplitBoxes(usize),
}

/// Tuning for the fusion stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Minimum 3D IoU for a LiDAR box to join a visual box's merge group.
    pub iou_thresh_3d: f64,
    /// Minimum fraction of a 2D detection's area that must fall inside a
    /// merged box's image projection for the detection to drive a split.
    /// Fractional-overlap semantics: a person box fully inside a wide
    /// merged projection scores 1.0 even though their plain IoU is small.
    pub iou_thresh_2d: f64,
    /// Largest tolerated LiDAR/visual timestamp difference, seconds.
    pub max_stamp_gap: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { iou_thresh_3d: 0.25, iou_thresh_2d: 0.5, max_stamp_gap: 0.05 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.iou_thresh_3d) {
            return Err(format!("iou_thresh_3d must be in [0, 1], got {}", self.iou_thresh_3d));
        }
        if !(0.0..=1.0).contains(&self.iou_thresh_2d) {
            return Err(format!("iou_thresh_2d must be in [0, 1], got {}", self.iou_thresh_2d));
        }
        if !(self.max_stamp_gap >= 0.0) {
            return Err(format!("max_stamp_gap must be non-negative, got {}", self.max_stamp_gap));
        }
        Ok(())
    }
}

/// Which sensor streams actually contributed this frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Full,
    LidarOnly,
    VisualOnly,
    /// Neither stream present; output is empty.
    Empty,
}

/// Phase-1 provenance: which visual box absorbed which LiDAR boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    pub visual: usize,
    pub lidar: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    pub obstacles: Vec<Obstacle3d>,
    pub mode: FusionMode,
    /// Present when the frame fell back from full fusion.
    pub notice: Option<String>,
    pub merges: Vec<MergeRecord>,
    /// Indices of LiDAR inputs emitted verbatim in phase 3.
    pub passthrough: Vec<usize>,
}

/// Fraction of `det`'s area covered by `proj`. Unlike IoU this stays high
/// when the detection is a small part of a wide merged projection.
fn overlap_fraction(proj: &Box2d, det: &Box2d) -> f64 {
    let du = (proj.u_max.min(det.u_max) - proj.u_min.max(det.u_min)).max(0.0);
    let dv = (proj.v_max.min(det.v_max) - proj.v_min.max(det.v_min)).max(0.0);
    du * dv / det.area()
}

/// Clamps `child` into `parent`, keeping a positive extent on every axis.
fn clip_box(parent: &Aabb3, child: &Aabb3) -> Aabb3 {
    let (pmin, pmax) = (parent.min(), parent.max());
    let (cmin, cmax) = (child.min(), child.max());
    let mut lo = Point3::new(cmin.x.max(pmin.x), cmin.y.max(pmin.y), cmin.z.max(pmin.z));
    let mut hi = Point3::new(cmax.x.min(pmax.x), cmax.y.min(pmax.y), cmax.z.min(pmax.z));
    // Degenerate only when the child pad poked past the parent face; nudge
    // back to a minimal sliver inside the parent.
    for axis in 0..3 {
        let (l, h) = match axis {
            0 => (&mut lo.x, &mut hi.x),
            1 => (&mut lo.y, &mut hi.y),
            _ => (&mut lo.z, &mut hi.z),
        };
        if *h <= *l {
            let mid = (*l + *h) * 0.5;
            *l = mid - 1e-4;
            *h = mid + 1e-4;
        }
    }
    Aabb3::from_min_max(lo, hi).expect("clipped box has positive extent")
}

/// Splits a merged box into one child per 2D detection by partitioning the
/// parent's points along the image's horizontal axis at the midpoints
/// between consecutive detections. Children re-fit to their points and
/// clamp into the parent; a detection whose slice captures no points
/// produces no child.
pub fn split_bboxes(
    parent: &Obstacle3d,
    matches_2d: &[Box2d],
    cam: &CameraModel,
    body_pose: &Pose,
) -> Result<Vec<Obstacle3d>, FusionError> {
    if matches_2d.len() < 2 {
        return Err(FusionError::TooFewSplitBoxes(matches_2d.len()));
    }
    let mut boxes: Vec<&Box2d> = matches_2d.iter().collect();
    boxes.sort_by(|a, b| {
        a.center_u()
            .partial_cmp(&b.center_u())
            .unwrap_or(Ordering::Equal)
            .then_with(|| box2d_cmp(a, b))
    });
    let boundaries: Vec<f64> = boxes
        .windows(2)
        .map(|w| (w[0].center_u() + w[1].center_u()) * 0.5)
        .collect();

    let cam_in_world = cam.pose_in_world(body_pose);
    let mut groups: Vec<Vec<Point3>> = vec![Vec::new(); boxes.len()];
    for p in &parent.points {
        let p_cam = cam_in_world.inverse_transform_point(p);
        let Some((u, _)) = cam.project_camera_point(&p_cam) else {
            continue; // point behind the camera contributes to no child
        };
        let slot = boundaries.iter().take_while(|b| u >= **b).count();
        groups[slot].push(*p);
    }

    let mut children = Vec::new();
    for pts in groups {
        if pts.is_empty() {
            log::debug!("split: 2D box slice captured no points, no child emitted");
            continue;
        }
        let tight = Aabb3::from_points(&pts).expect("nonempty group");
        children.push(Obstacle3d {
            bbox: clip_box(&parent.bbox, &tight),
            points: pts,
            source: Source::Fused,
            stamp: parent.stamp,
        });
    }
    Ok(children)
}

/// Runs the three fusion phases for one frame. `None` for a sensor stream
/// means it produced nothing this frame (dropout, missing file, disabled
/// sensor); the other stream then passes through unfused.
pub fn fuse(
    lidar: Option<&[Obstacle3d]>,
    visual: Option<&[Obstacle3d]>,
    visual_2d: &[Box2d],
    cam: Option<&CameraModel>,
    body_pose: &Pose,
    cfg: &FusionConfig,
) -> FusionResult {
    let passthrough_result = |obs: &[Obstacle3d], mode: FusionMode, notice: Option<String>| {
        let mut sorted: Vec<Obstacle3d> = obs.to_vec();
        sorted.sort_by(|a, b| box_cmp(&a.bbox, &b.bbox));
        let passthrough = if mode == FusionMode::LidarOnly {
            (0..obs.len()).collect()
        } else {
            Vec::new()
        };
        FusionResult { obstacles: sorted, mode, notice, merges: Vec::new(), passthrough }
    };

    let (lidar, visual) = match (lidar, visual) {
        (None, None) => {
            return FusionResult {
                obstacles: Vec::new(),
                mode: FusionMode::Empty,
                notice: Some("no sensor stream this frame".into()),
                merges: Vec::new(),
                passthrough: Vec::new(),
            }
        }
        (Some(l), None) => {
            return passthrough_result(
                l,
                FusionMode::LidarOnly,
                Some("visual stream absent".into()),
            )
        }
        (None, Some(v)) => {
            return passthrough_result(
                v,
                FusionMode::VisualOnly,
                Some("lidar stream absent".into()),
            )
        }
        (Some(l), Some(v)) => (l, v),
    };

    // Stamp agreement gate: stale visual detections must not merge into the
    // current LiDAR frame.
    if let (Some(lo), Some(vo)) = (lidar.first(), visual.first()) {
        let gap = (lo.stamp - vo.stamp).abs();
        if gap > cfg.max_stamp_gap {
            return passthrough_result(
                lidar,
                FusionMode::LidarOnly,
                Some(format!(
                    "lidar/visual stamp gap {gap:.3}s exceeds {:.3}s, visual dropped",
                    cfg.max_stamp_gap
                )),
            );
        }
    }

    // Canonical iteration orders make the result independent of input order.
    let mut visual_order: Vec<usize> = (0..visual.len()).collect();
    visual_order.sort_by(|&a, &b| box_cmp(&visual[a].bbox, &visual[b].bbox));
    let mut lidar_order: Vec<usize> = (0..lidar.len()).collect();
    lidar_order.sort_by(|&a, &b| box_cmp(&lidar[a].bbox, &lidar[b].bbox));

    // Phase 1: each visual box absorbs every unclaimed overlapping LiDAR box.
    let mut claimed = vec![false; lidar.len()];
    let mut merges = Vec::new();
    let mut fused: Vec<Obstacle3d> = Vec::new();
    for &vi in &visual_order {
        let vbox = &visual[vi];
        let group: Vec<usize> = lidar_order
            .iter()
            .copied()
            .filter(|&li| !claimed[li] && iou3d(&vbox.bbox, &lidar[li].bbox) >= cfg.iou_thresh_3d)
            .collect();
        if group.is_empty() {
            continue; // visual box without LiDAR support is dropped
        }
        let mut boxes = vec![vbox.bbox];
        let mut points = vbox.points.clone();
        for &li in &group {
            claimed[li] = true;
            boxes.push(lidar[li].bbox);
            points.extend_from_slice(&lidar[li].points);
        }
        let bbox = min_enclosing_box(&boxes).expect("nonempty merge group");
        fused.push(Obstacle3d { bbox, points, source: Source::Fused, stamp: vbox.stamp });
        merges.push(MergeRecord { visual: vi, lidar: group });
    }

    // Phase 2: split merged boxes that cover several 2D detections.
    let mut obstacles: Vec<Obstacle3d> = Vec::new();
    for fb in fused {
        let split = cam.and_then(|cam| {
            let proj = project_to_image(&fb.bbox, cam, body_pose)?;
            let matched: Vec<Box2d> = visual_2d
                .iter()
                .filter(|det| overlap_fraction(&proj, det) >= cfg.iou_thresh_2d)
                .cloned()
                .collect();
            if matched.len() < 2 {
                return None;
            }
            match split_bboxes(&fb, &matched, cam, body_pose) {
                Ok(children) if !children.is_empty() => Some(children),
                _ => None,
            }
        });
        match split {
            Some(children) => obstacles.extend(children),
            None => obstacles.push(fb),
        }
    }

    // Phase 3: unclaimed LiDAR boxes pass through verbatim.
    let mut passthrough = Vec::new();
    for &li in &lidar_order {
        if !claimed[li] {
            obstacles.push(lidar[li].clone());
            passthrough.push(li);
        }
    }

    obstacles.sort_by(|a, b| box_cmp(&a.bbox, &b.bbox));
    FusionResult { obstacles, mode: FusionMode::Full, notice: None, merges, passthrough }
}
