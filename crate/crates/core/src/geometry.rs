//! Core geometric types shared by every pipeline stage: points, poses,
//! axis-aligned boxes in 3D and pixel space, and the pinhole camera model.
//!
//! Conventions: world and body frames are right-handed with +z up. The
//! camera frame is optical (+z forward along the view axis, +x right,
//! +y down); pixel u grows right, v grows down.

use nalgebra::{Point3 as NaPoint3, UnitQuaternion, Vector3};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate box: size [{0}, {1}, {2}] must be positive")]
    DegenerateBox(f64, f64, f64),
    #[error("degenerate 2D box: ({0}, {1})..({2}, {3})")]
    DegenerateBox2d(f64, f64, f64, f64),
    #[error("quaternion norm {0} too far from 1")]
    NonUnitQuaternion(f64),
}

/// Smallest box extent kept on any axis; flat or single-point clusters are
/// padded up to this instead of producing zero-volume boxes.
pub const MIN_BOX_EXTENT: f64 = 0.01;

/// A 3D point or vector with f64 components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn add(&self, o: &Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(&self, o: &Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn scale(&self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, o: &Point3) -> f64 {
        self.sub(o).norm()
    }

    pub fn to_na(&self) -> NaPoint3<f64> {
        NaPoint3::new(self.x, self.y, self.z)
    }

    pub fn from_na(p: &NaPoint3<f64>) -> Self {
        Point3::new(p.x, p.y, p.z)
    }
}

/// Total order on finite coordinates (x, then y, then z). Used wherever a
/// deterministic, input-order-independent iteration over boxes is needed.
pub fn point_cmp(a: &Point3, b: &Point3) -> Ordering {
    let key = |p: &Point3| [p.x, p.y, p.z];
    key(a)
        .iter()
        .zip(key(b).iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Rigid transform (rotation + translation) with a timestamp, e.g. a robot
/// body pose from odometry or a fixed sensor extrinsic.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub stamp: f64,
    pub position: Point3,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    /// Builds a pose from a (w, x, y, z) quaternion, rejecting quaternions
    /// whose norm is further than 1e-6 from 1 and renormalizing the rest.
    pub fn new(stamp: f64, position: Point3, quat_wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        let [w, x, y, z] = quat_wxyz;
        if !position.is_finite() || !quat_wxyz.iter().all(|v| v.is_finite()) || !stamp.is_finite() {
            return Err(GeometryError::NonFinite("pose"));
        }
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(GeometryError::NonUnitQuaternion(norm));
        }
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        Ok(Pose { stamp, position, orientation: q })
    }

    pub fn identity(stamp: f64) -> Self {
        Pose { stamp, position: Point3::ORIGIN, orientation: UnitQuaternion::identity() }
    }

    pub fn from_position_yaw(stamp: f64, position: Point3, yaw: f64) -> Self {
        Pose { stamp, position, orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw) }
    }

    /// (w, x, y, z) components of the orientation.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Maps a point from this pose's local frame into its parent frame.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        let r = self.orientation.transform_vector(&Vector3::new(p.x, p.y, p.z));
        Point3::new(r.x + self.position.x, r.y + self.position.y, r.z + self.position.z)
    }

    /// Maps a parent-frame point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: &Point3) -> Point3 {
        let d = Vector3::new(
            p.x - self.position.x,
            p.y - self.position.y,
            p.z - self.position.z,
        );
        let r = self.orientation.inverse_transform_vector(&d);
        Point3::new(r.x, r.y, r.z)
    }

    /// `self` then `child`: the returned pose maps child-local points all the
    /// way into this pose's parent frame. Keeps `child`'s stamp.
    pub fn compose(&self, child: &Pose) -> Pose {
        Pose {
            stamp: child.stamp,
            position: self.transform_point(&child.position),
            orientation: self.orientation * child.orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_q = self.orientation.inverse();
        let p = inv_q.transform_vector(&Vector3::new(
            -self.position.x,
            -self.position.y,
            -self.position.z,
        ));
        Pose { stamp: self.stamp, position: Point3::new(p.x, p.y, p.z), orientation: inv_q }
    }

    /// Linear position / slerp orientation blend, `t` in [0, 1].
    pub fn interpolate(&self, other: &Pose, t: f64) -> Pose {
        let pos = self.position.add(&other.position.sub(&self.position).scale(t));
        let q = self
            .orientation
            .try_slerp(&other.orientation, t, 1e-12)
            .unwrap_or(self.orientation);
        Pose {
            stamp: self.stamp + (other.stamp - self.stamp) * t,
            position: pos,
            orientation: q,
        }
    }
}

/// Frame a point cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFrame {
    Sensor,
    World,
}

/// Timestamped set of 3D points in a declared frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub stamp: f64,
    pub frame: CloudFrame,
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(stamp: f64, frame: CloudFrame, points: Vec<Point3>) -> Self {
        PointCloud { stamp, frame, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Transforms a sensor-frame cloud into the world frame. Rigid, so pairwise
/// distances are preserved.
pub fn to_world(cloud: &PointCloud, sensor_pose: &Pose) -> PointCloud {
    debug_assert_eq!(cloud.frame, CloudFrame::Sensor, "to_world expects a sensor-frame cloud");
    PointCloud {
        stamp: cloud.stamp,
        frame: CloudFrame::World,
        points: cloud.points.iter().map(|p| sensor_pose.transform_point(p)).collect(),
    }
}

/// Axis-aligned 3D box stored as center + per-axis size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb3 {
    pub center: Point3,
    pub size: [f64; 3],
}

impl Aabb3 {
    pub fn new(center: Point3, size: [f64; 3]) -> Result<Self, GeometryError> {
        if !center.is_finite() || !size.iter().all(|s| s.is_finite()) {
            return Err(GeometryError::NonFinite("box"));
        }
        if size.iter().any(|s| *s <= 0.0) {
            return Err(GeometryError::DegenerateBox(size[0], size[1], size[2]));
        }
        Ok(Aabb3 { center, size })
    }

    /// Box spanning `min..max` corners.
    pub fn from_min_max(min: Point3, max: Point3) -> Result<Self, GeometryError> {
        let center = min.add(&max).scale(0.5);
        Aabb3::new(center, [max.x - min.x, max.y - min.y, max.z - min.z])
    }

    /// Tight box around a nonempty point set; each axis extent is padded up
    /// to [`MIN_BOX_EXTENT`] so flat or single-point sets stay valid boxes.
    pub fn from_points(points: &[Point3]) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyInput("from_points"));
        }
        let mut min = points[0];
        let mut max = points[0];
        for p in points {
            if !p.is_finite() {
                return Err(GeometryError::NonFinite("from_points"));
            }
            min = Point3::new(min.x.min(p.x), min.y.min(p.y), min.z.min(p.z));
            max = Point3::new(max.x.max(p.x), max.y.max(p.y), max.z.max(p.z));
        }
        let center = min.add(&max).scale(0.5);
        let size = [
            (max.x - min.x).max(MIN_BOX_EXTENT),
            (max.y - min.y).max(MIN_BOX_EXTENT),
            (max.z - min.z).max(MIN_BOX_EXTENT),
        ];
        Aabb3::new(center, size)
    }

    pub fn min(&self) -> Point3 {
        Point3::new(
            self.center.x - self.size[0] * 0.5,
            self.center.y - self.size[1] * 0.5,
            self.center.z - self.size[2] * 0.5,
        )
    }

    pub fn max(&self) -> Point3 {
        Point3::new(
            self.center.x + self.size[0] * 0.5,
            self.center.y + self.size[1] * 0.5,
            self.center.z + self.size[2] * 0.5,
        )
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    pub fn corners(&self) -> [Point3; 8] {
        let lo = self.min();
        let hi = self.max();
        [
            Point3::new(lo.x, lo.y, lo.z),
            Point3::new(hi.x, lo.y, lo.z),
            Point3::new(lo.x, hi.y, lo.z),
            Point3::new(hi.x, hi.y, lo.z),
            Point3::new(lo.x, lo.y, hi.z),
            Point3::new(hi.x, lo.y, hi.z),
            Point3::new(lo.x, hi.y, hi.z),
            Point3::new(hi.x, hi.y, hi.z),
        ]
    }

    pub fn contains_point(&self, p: &Point3, slack: f64) -> bool {
        let lo = self.min();
        let hi = self.max();
        p.x >= lo.x - slack
            && p.x <= hi.x + slack
            && p.y >= lo.y - slack
            && p.y <= hi.y + slack
            && p.z >= lo.z - slack
            && p.z <= hi.z + slack
    }

    pub fn contains_box(&self, other: &Aabb3, slack: f64) -> bool {
        self.contains_point(&other.min(), slack) && self.contains_point(&other.max(), slack)
    }
}

/// Deterministic total order on boxes: center lexicographic, then size.
pub fn box_cmp(a: &Aabb3, b: &Aabb3) -> Ordering {
    point_cmp(&a.center, &b.center).then_with(|| {
        a.size
            .iter()
            .zip(b.size.iter())
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    })
}

/// Intersection-over-union of two axis-aligned 3D boxes, in [0, 1].
pub fn iou3d(a: &Aabb3, b: &Aabb3) -> f64 {
    let (amin, amax) = (a.min(), a.max());
    let (bmin, bmax) = (b.min(), b.max());
    let dx = (amax.x.min(bmax.x) - amin.x.max(bmin.x)).max(0.0);
    let dy = (amax.y.min(bmax.y) - amin.y.max(bmin.y)).max(0.0);
    let dz = (amax.z.min(bmax.z) - amin.z.max(bmin.z)).max(0.0);
    let inter = dx * dy * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    inter / union
}

/// Pixel-space axis-aligned box, optionally carrying a detector class label
/// and confidence score.
#[derive(Debug, Clone, PartialEq)]
pub struct Box2d {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
    pub label: Option<String>,
    pub score: Option<f64>,
}

impl Box2d {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self, GeometryError> {
        if ![u_min, v_min, u_max, v_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("2D box"));
        }
        if u_min >= u_max || v_min >= v_max {
            return Err(GeometryError::DegenerateBox2d(u_min, v_min, u_max, v_max));
        }
        Ok(Box2d { u_min, v_min, u_max, v_max, label: None, score: None })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center_u(&self) -> f64 {
        (self.u_min + self.u_max) * 0.5
    }
}

/// Deterministic total order on 2D boxes: left edge, then top edge, then
/// right and bottom.
pub fn box2d_cmp(a: &Box2d, b: &Box2d) -> Ordering {
    [a.u_min, a.v_min, a.u_max, a.v_max]
        .iter()
        .zip([b.u_min, b.v_min, b.u_max, b.v_max].iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Intersection-over-union of two pixel-space boxes, in [0, 1].
pub fn iou2d(a: &Box2d, b: &Box2d) -> f64 {
    let du = (a.u_max.min(b.u_max) - a.u_min.max(b.u_min)).max(0.0);
    let dv = (a.v_max.min(b.v_max) - a.v_min.max(b.v_min)).max(0.0);
    let inter = du * dv;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Smallest axis-aligned box containing every input box.
pub fn min_enclosing_box(boxes: &[Aabb3]) -> Result<Aabb3, GeometryError> {
    if boxes.is_empty() {
        return Err(GeometryError::EmptyInput("min_enclosing_box"));
    }
    let mut lo = boxes[0].min();
    let mut hi = boxes[0].max();
    for b in &boxes[1..] {
        let (bmin, bmax) = (b.min(), b.max());
        lo = Point3::new(lo.x.min(bmin.x), lo.y.min(bmin.y), lo.z.min(bmin.z));
        hi = Point3::new(hi.x.max(bmax.x), hi.y.max(bmax.y), hi.z.max(bmax.z));
    }
    Aabb3::from_min_max(lo, hi)
}

/// Pinhole camera intrinsics plus its mounting pose on the robot body and
/// the depth decoding parameters for its range images.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera pose in the robot body frame (optical axes: +z forward).
    pub extrinsic: Pose,
    /// Meters per raw depth unit (e.g. 0.001 for millimeter images).
    pub depth_scale: f64,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl CameraModel {
    /// Camera pose in the world frame given the current body pose.
    pub fn pose_in_world(&self, body_pose: &Pose) -> Pose {
        body_pose.compose(&self.extrinsic)
    }

    /// Projects a camera-frame point to continuous pixel coordinates.
    /// Returns None when the point is not strictly in front of the camera.
    pub fn project_camera_point(&self, p_cam: &Point3) -> Option<(f64, f64)> {
        if p_cam.z <= 1e-9 {
            return None;
        }
        Some((
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Back-projects pixel center (u, v) at depth `d` (meters) into the
    /// camera frame.
    pub fn unproject(&self, u: f64, v: f64, d: f64) -> Point3 {
        Point3::new((u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d)
    }
}

/// Projects a world-frame box into the image: pixel-space AABB over the
/// corners that land in front of the camera, clamped to the image bounds.
/// None when no corner is in front or the clamped box has no area.
pub fn project_to_image(b: &Aabb3, cam: &CameraModel, body_pose: &Pose) -> Option<Box2d> {
    let cam_in_world = cam.pose_in_world(body_pose);
    let mut u_lo = f64::INFINITY;
    let mut v_lo = f64::INFINITY;
    let mut u_hi = f64::NEG_INFINITY;
    let mut v_hi = f64::NEG_INFINITY;
    let mut any = false;
    for corner in b.corners() {
        let p_cam = cam_in_world.inverse_transform_point(&corner);
        if let Some((u, v)) = cam.project_camera_point(&p_cam) {
            u_lo = u_lo.min(u);
            v_lo = v_lo.min(v);
            u_hi = u_hi.max(u);
            v_hi = v_hi.max(v);
            any = true;
        }
    }
    if !any {
        return None;
    }
    let u_lo = u_lo.clamp(0.0, cam.width as f64);
    let u_hi = u_hi.clamp(0.0, cam.width as f64);
    let v_lo = v_lo.clamp(0.0, cam.height as f64);
    let v_hi = v_hi.clamp(0.0, cam.height as f64);
    Box2d::new(u_lo, v_lo, u_hi, v_hi).ok()
}
