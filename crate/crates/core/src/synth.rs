//! Synthetic dataset generation. A scene is a set of static and moving
//! primitives plus a robot trajectory; rendering is analytic ray casting,
//! so every sensor frame has exact geometry with configurable noise on
//! top. Scenes are serializable, and rendering is fully determined by the
//! scene plus a seed: each frame and stream derives its own RNG stream,
//! so regenerating a dataset is byte-identical.

use crate::geometry::{project_to_image, Aabb3, Box2d, CameraModel, Point3, Pose};
use crate::io::{
    write_camera_json, write_det2d, write_gt, write_manifest, write_pcd, GtBox, GtFrame, IoError,
    ManifestEntry, OdomRecord, PcdEncoding,
};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Primitive shapes a scene object can take. A cylinder stands upright;
/// its `size` is interpreted as [diameter, diameter, height].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    Cylinder,
}

/// A fixed scene object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticSpec {
    pub shape: ShapeKind,
    pub center: [f64; 3],
    pub size: [f64; 3],
}

/// A moving scene object: it walks a 2D polyline at constant speed,
/// bouncing between the endpoints. `phase` in [0, 1) offsets the start
/// along the round trip so objects sharing a period stay out of step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicSpec {
    pub shape: ShapeKind,
    pub size: [f64; 3],
    pub z_center: f64,
    pub path: Vec<[f64; 2]>,
    pub speed: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Robot trajectory key: reach `pos` with heading `yaw` at time `t`.
/// Between keys the pose interpolates linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotKey {
    pub t: f64,
    pub pos: [f64; 3],
    pub yaw: f64,
}

/// Spinning range sensor mounted at the body origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarSpec {
    pub channels: u32,
    pub azimuth_res_deg: f64,
    pub fov_v_deg: f64,
    pub max_range: f64,
    pub noise_sigma: f64,
}

/// Camera parameters in dataset form (see `CameraRecord`).
pub use crate::io::CameraRecord;

/// A complete synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub duration: f64,
    /// Frames per second.
    pub rate: f64,
    /// Include the ground plane z = 0.
    pub ground: bool,
    pub robot: Vec<RobotKey>,
    pub statics: Vec<StaticSpec>,
    pub dynamics: Vec<DynamicSpec>,
    pub lidar: LidarSpec,
    pub camera: Option<CameraRecord>,
    pub depth_noise_sigma: f64,
    pub det2d_jitter_px: f64,
    pub det2d_dropout: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.duration > 0.0) || !(self.rate > 0.0) {
            return Err("duration and rate must be positive".into());
        }
        if self.robot.is_empty() {
            return Err("robot trajectory needs at least one key".into());
        }
        for w in self.robot.windows(2) {
            if w[1].t <= w[0].t {
                return Err("robot keys must have strictly increasing times".into());
            }
        }
        if self.lidar.channels == 0 || !(self.lidar.azimuth_res_deg > 0.0) {
            return Err("lidar needs at least one channel and a positive azimuth step".into());
        }
        if !(self.lidar.max_range > 0.0) || self.lidar.noise_sigma < 0.0 {
            return Err("lidar range must be positive and noise non-negative".into());
        }
        for d in &self.dynamics {
            if d.path.is_empty() {
                return Err("dynamic object needs at least one path vertex".into());
            }
            if d.speed < 0.0 {
                return Err("dynamic speed must be non-negative".into());
            }
            check_footprint(d.shape, &d.size)?;
        }
        for s in &self.statics {
            check_footprint(s.shape, &s.size)?;
        }
        if self.depth_noise_sigma < 0.0 || self.det2d_jitter_px < 0.0 {
            return Err("noise parameters must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.det2d_dropout) {
            return Err("det2d_dropout must be in [0, 1]".into());
        }
        Ok(())
    }

    /// Number of frames the scene renders to.
    pub fn frame_count(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }

    /// Stamp of frame `i`; the first frame sits one period after t = 0.
    pub fn stamp(&self, i: usize) -> f64 {
        (i as f64 + 1.0) / self.rate
    }
}

/// A cylinder's footprint must be square: the raycaster reads `size[0]` as
/// its diameter, so a rectangular footprint would silently poke the surface
/// outside the object's stated bounding box.
fn check_footprint(shape: ShapeKind, size: &[f64; 3]) -> Result<(), String> {
    if size.iter().any(|s| !(*s > 0.0)) {
        return Err("object sizes must be positive".into());
    }
    if shape == ShapeKind::Cylinder && (size[0] - size[1]).abs() > 1e-9 {
        return Err(format!("cylinder footprint must be square, got {} x {}", size[0], size[1]));
    }
    Ok(())
}

/// Quaternion (w, x, y, z) of a forward-looking camera mount: optical z
/// along body +x, optical x along body −y, optical y along body −z.
pub fn optical_mount_quat() -> [f64; 4] {
    let m = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m));
    [q.w, q.i, q.j, q.k]
}

/// Robot body pose at time `t`, linearly interpolated between keys and
/// clamped at the ends.
pub fn robot_pose_at(spec: &SceneSpec, t: f64) -> Pose {
    let keys = &spec.robot;
    let make = |k: &RobotKey, stamp: f64| {
        Pose::from_position_yaw(stamp, Point3::new(k.pos[0], k.pos[1], k.pos[2]), k.yaw)
    };
    if t <= keys[0].t {
        return make(&keys[0], t);
    }
    if t >= keys[keys.len() - 1].t {
        return make(&keys[keys.len() - 1], t);
    }
    let hi = keys.partition_point(|k| k.t < t);
    let (a, b) = (&keys[hi - 1], &keys[hi]);
    let f = (t - a.t) / (b.t - a.t);
    let pos = Point3::new(
        a.pos[0] + f * (b.pos[0] - a.pos[0]),
        a.pos[1] + f * (b.pos[1] - a.pos[1]),
        a.pos[2] + f * (b.pos[2] - a.pos[2]),
    );
    let yaw = a.yaw + f * (b.yaw - a.yaw);
    Pose::from_position_yaw(t, pos, yaw)
}

/// 2D position along a ping-pong polyline after traveling `dist` meters
/// from the first vertex.
fn path_point(path: &[[f64; 2]], dist: f64) -> [f64; 2] {
    let mut lengths = Vec::with_capacity(path.len().saturating_sub(1));
    let mut total = 0.0;
    for w in path.windows(2) {
        let l = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        lengths.push(l);
        total += l;
    }
    if total <= 1e-12 {
        return path[0];
    }
    // Reflect onto a single traversal: 0..total forward, total..2*total back.
    let lap = dist.rem_euclid(2.0 * total);
    let mut s = if lap <= total { lap } else { 2.0 * total - lap };
    for (i, l) in lengths.iter().enumerate() {
        if s <= *l || i == lengths.len() - 1 {
            let f = if *l > 1e-12 { (s / l).min(1.0) } else { 0.0 };
            let (a, b) = (path[i], path[i + 1]);
            return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])];
        }
        s -= l;
    }
    path[path.len() - 1]
}

fn path_length(path: &[[f64; 2]]) -> f64 {
    path.windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

/// Center of a dynamic object at time `t`.
pub fn dynamic_center_at(d: &DynamicSpec, t: f64) -> Point3 {
    let total = path_length(&d.path);
    let dist = d.speed * t + d.phase * 2.0 * total;
    let xy = path_point(&d.path, dist);
    Point3::new(xy[0], xy[1], d.z_center)
}

/// One object resolved at a frame time, ready for ray casting.
#[derive(Debug, Clone)]
pub struct Instance {
    pub shape: ShapeKind,
    pub aabb: Aabb3,
    pub dynamic: bool,
    pub track_id: u64,
}

/// All objects at time `t`: dynamics first (track ids 0..n), then statics.
pub fn instances_at(spec: &SceneSpec, t: f64) -> Vec<Instance> {
    let mut out = Vec::with_capacity(spec.dynamics.len() + spec.statics.len());
    for (i, d) in spec.dynamics.iter().enumerate() {
        let center = dynamic_center_at(d, t);
        out.push(Instance {
            shape: d.shape,
            aabb: Aabb3::new(center, d.size).expect("dynamic spec sizes are positive"),
            dynamic: d.speed > 1e-9 && path_length(&d.path) > 1e-9,
            track_id: i as u64,
        });
    }
    for (i, s) in spec.statics.iter().enumerate() {
        out.push(Instance {
            shape: s.shape,
            aabb: Aabb3::new(Point3::new(s.center[0], s.center[1], s.center[2]), s.size)
                .expect("static spec sizes are positive"),
            dynamic: false,
            track_id: (spec.dynamics.len() + i) as u64,
        });
    }
    out
}

const RAY_EPS: f64 = 1e-9;

/// Slab test; returns the entry parameter of `o + t*d` into the box, for
/// unnormalized `d`. Rays starting inside report no hit.
pub fn ray_box(o: &Point3, d: &Vector3<f64>, b: &Aabb3) -> Option<f64> {
    let (min, max) = (b.min(), b.max());
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let (ov, mn, mx) = ([o.x, o.y, o.z], [min.x, min.y, min.z], [max.x, max.y, max.z]);
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if ov[a] < mn[a] || ov[a] > mx[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (mut ta, mut tb) = ((mn[a] - ov[a]) * inv, (mx[a] - ov[a]) * inv);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    (t0 >= RAY_EPS).then_some(t0)
}

/// Intersection with an upright cylinder inscribed in `b` (axis through
/// the box center, diameter `size[0]`, height `size[2]`): curved side
/// plus the two caps.
pub fn ray_cylinder(o: &Point3, d: &Vector3<f64>, b: &Aabb3) -> Option<f64> {
    let c = b.center;
    let r = b.size[0] * 0.5;
    let (z0, z1) = (c.z - b.size[2] * 0.5, c.z + b.size[2] * 0.5);
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t >= RAY_EPS && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };
    // Curved side.
    let (ox, oy) = (o.x - c.x, o.y - c.y);
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let half_b = ox * d.x + oy * d.y;
        let cc = ox * ox + oy * oy - r * r;
        let disc = half_b * half_b - a * cc;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-half_b - sq) / a, (-half_b + sq) / a] {
                let z = o.z + t * d.z;
                if z >= z0 && z <= z1 {
                    consider(t);
                }
            }
        }
    }
    // Caps.
    if d.z.abs() > 1e-15 {
        for zp in [z0, z1] {
            let t = (zp - o.z) / d.z;
            let (x, y) = (o.x + t * d.x - c.x, o.y + t * d.y - c.y);
            if x * x + y * y <= r * r {
                consider(t);
            }
        }
    }
    best
}

/// Intersection with the ground plane z = 0.
pub fn ray_ground(o: &Point3, d: &Vector3<f64>) -> Option<f64> {
    if d.z.abs() < 1e-15 {
        return None;
    }
    let t = -o.z / d.z;
    (t >= RAY_EPS).then_some(t)
}

fn ray_instance(o: &Point3, d: &Vector3<f64>, inst: &Instance) -> Option<f64> {
    match inst.shape {
        ShapeKind::Box => ray_box(o, d, &inst.aabb),
        ShapeKind::Cylinder => ray_cylinder(o, d, &inst.aabb),
    }
}

/// Nearest hit parameter over all instances (and the ground when enabled).
fn cast_scene(o: &Point3, d: &Vector3<f64>, instances: &[Instance], ground: bool) -> Option<f64> {
    let mut best: Option<f64> = None;
    for inst in instances {
        if let Some(t) = ray_instance(o, d, inst) {
            if best.map_or(true, |b| t < b) {
                best = Some(t);
            }
        }
    }
    if ground {
        if let Some(t) = ray_ground(o, d) {
            if best.map_or(true, |b| t < b) {
                best = Some(t);
            }
        }
    }
    best
}

/// Renders one spinning-lidar sweep in the sensor frame. Beams are emitted
/// channel-major over evenly spaced elevations and azimuths; range noise
/// acts along each beam.
pub fn render_lidar(
    spec: &SceneSpec,
    instances: &[Instance],
    robot: &Pose,
    rng: &mut ChaCha8Rng,
) -> Vec<Point3> {
    let lidar = &spec.lidar;
    let n_az = (360.0 / lidar.azimuth_res_deg).round().max(1.0) as usize;
    let fov = lidar.fov_v_deg.to_radians();
    let origin = robot.position;
    let mut points = Vec::new();
    for ch in 0..lidar.channels {
        let el = if lidar.channels == 1 {
            0.0
        } else {
            -fov / 2.0 + fov * ch as f64 / (lidar.channels - 1) as f64
        };
        let (sin_el, cos_el) = el.sin_cos();
        for j in 0..n_az {
            let az = (j as f64 * lidar.azimuth_res_deg).to_radians();
            let dir_sensor = Vector3::new(cos_el * az.cos(), cos_el * az.sin(), sin_el);
            let dir_world = robot.orientation * dir_sensor;
            let Some(t) = cast_scene(&origin, &dir_world, instances, spec.ground) else {
                continue;
            };
            if t > lidar.max_range {
                continue;
            }
            let noise: f64 = rng.sample(StandardNormal);
            let r = t + lidar.noise_sigma * noise;
            if r > RAY_EPS {
                points.push(Point3::new(dir_sensor.x * r, dir_sensor.y * r, dir_sensor.z * r));
            }
        }
    }
    points
}

/// Renders the depth image (raw units, row-major, 0 = invalid). Rays go
/// through pixel centers; because the camera-frame direction has unit
/// forward component, the hit parameter is exactly the z-depth.
pub fn render_depth(
    spec: &SceneSpec,
    instances: &[Instance],
    robot: &Pose,
    cam: &CameraModel,
    rng: &mut ChaCha8Rng,
) -> Vec<u16> {
    let cam_pose = cam.pose_in_world(robot);
    let origin = cam_pose.position;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut out = vec![0u16; w * h];
    for v in 0..h {
        for u in 0..w {
            let dir_cam = Vector3::new(
                (u as f64 + 0.5 - cam.cx) / cam.fx,
                (v as f64 + 0.5 - cam.cy) / cam.fy,
                1.0,
            );
            let dir_world = cam_pose.orientation * dir_cam;
            let Some(depth) = cast_scene(&origin, &dir_world, instances, spec.ground) else {
                continue;
            };
            let noise: f64 = rng.sample(StandardNormal);
            let depth = depth + spec.depth_noise_sigma * noise;
            if depth < cam.depth_min || depth > cam.depth_max {
                continue;
            }
            let raw = (depth / cam.depth_scale).round();
            if raw >= 1.0 && raw <= 65535.0 {
                out[v * w + u] = raw as u16;
            }
        }
    }
    out
}

/// Emulates an image-space object detector over the dynamic instances:
/// projected boxes for unoccluded objects, with per-edge jitter and
/// random dropout.
pub fn render_det2d(
    spec: &SceneSpec,
    instances: &[Instance],
    robot: &Pose,
    cam: &CameraModel,
    rng: &mut ChaCha8Rng,
) -> Vec<Box2d> {
    let cam_pose = cam.pose_in_world(robot);
    let origin = cam_pose.position;
    let mut out = Vec::new();
    for inst in instances.iter().filter(|i| i.dynamic) {
        let Some(proj) = project_to_image(&inst.aabb, cam, robot) else {
            continue;
        };
        // Occlusion: another object intersecting the sightline to the
        // center, clearly in front, hides this one. The direction is
        // unnormalized (|dir| = distance), so the hit parameter is the
        // fraction of the way to the center.
        let step = inst.aabb.center.sub(&origin);
        let dir = Vector3::new(step.x, step.y, step.z);
        let dist = dir.norm();
        let occluded = instances.iter().any(|other| {
            other.track_id != inst.track_id
                && ray_instance(&origin, &dir, other).is_some_and(|t| t * dist < dist - 0.05)
        });
        if occluded {
            continue;
        }
        if rng.gen::<f64>() < spec.det2d_dropout {
            continue;
        }
        let mut edges = [proj.u_min, proj.v_min, proj.u_max, proj.v_max];
        for e in &mut edges {
            let noise: f64 = rng.sample(StandardNormal);
            *e += spec.det2d_jitter_px * noise;
        }
        let u_min = edges[0].clamp(0.0, cam.width as f64);
        let v_min = edges[1].clamp(0.0, cam.height as f64);
        let u_max = edges[2].clamp(0.0, cam.width as f64);
        let v_max = edges[3].clamp(0.0, cam.height as f64);
        if u_max - u_min >= 2.0 && v_max - v_min >= 2.0 {
            out.push(
                Box2d::new(u_min, v_min, u_max, v_max)
                    .expect("extents checked above")
                    .with_label("person")
                    .with_score(0.9),
            );
        }
    }
    out
}

/// Ground truth at time `t`: every object's box, identity, and motion flag.
pub fn gt_at(spec: &SceneSpec, t: f64) -> GtFrame {
    let boxes = instances_at(spec, t)
        .into_iter()
        .map(|inst| GtBox {
            center: [inst.aabb.center.x, inst.aabb.center.y, inst.aabb.center.z],
            size: inst.aabb.size,
            track_id: inst.track_id,
            is_dynamic: inst.dynamic,
        })
        .collect();
    GtFrame { stamp: t, boxes }
}

/// Derives an independent RNG seed for one (frame, stream) pair from the
/// dataset seed. SplitMix64 finalizer over a mixed input.
pub fn derive_seed(seed: u64, frame: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ frame.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_LIDAR: u64 = 1;
const STREAM_DEPTH: u64 = 2;
const STREAM_DET2D: u64 = 3;

/// Renders the whole scene to a dataset directory: `manifest.jsonl`,
/// `gt.jsonl`, per-frame PCD scans, and (when a camera is configured)
/// `camera.json`, depth PNGs, and 2D detection files. Returns the frame
/// count.
pub fn write_dataset(spec: &SceneSpec, root: &Path, seed: u64) -> Result<usize, IoError> {
    spec.validate().map_err(|msg| IoError::format(root, msg))?;
    let cam = match &spec.camera {
        Some(rec) => Some(
            rec.to_model()
                .map_err(|e| IoError::format(root, format!("bad camera spec: {e}")))?,
        ),
        None => None,
    };

    let mk = |rel: &str| -> Result<(), IoError> {
        std::fs::create_dir_all(root.join(rel)).map_err(|e| IoError::io(&root.join(rel), e))
    };
    mk("lidar")?;
    if cam.is_some() {
        mk("depth")?;
        mk("det2d")?;
    }

    let n = spec.frame_count();
    let mut manifest = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    for i in 0..n {
        let stamp = spec.stamp(i);
        let robot = robot_pose_at(spec, stamp);
        let instances = instances_at(spec, stamp);

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, STREAM_LIDAR));
        let scan = render_lidar(spec, &instances, &robot, &mut rng);
        let lidar_rel = format!("lidar/{i:06}.pcd");
        write_pcd(&root.join(&lidar_rel), &scan, PcdEncoding::Binary)?;

        let (depth_rel, det2d_rel) = if let Some(cam) = &cam {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, STREAM_DEPTH));
            let depth = render_depth(spec, &instances, &robot, cam, &mut rng);
            let depth_rel = format!("depth/{i:06}.png");
            crate::io::write_depth_png(&root.join(&depth_rel), cam.width, cam.height, &depth)?;

            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64, STREAM_DET2D));
            let dets = render_det2d(spec, &instances, &robot, cam, &mut rng);
            let det2d_rel = format!("det2d/{i:06}.jsonl");
            write_det2d(&root.join(&det2d_rel), &dets)?;
            (Some(depth_rel), Some(det2d_rel))
        } else {
            (None, None)
        };

        manifest.push(ManifestEntry {
            stamp,
            lidar: lidar_rel,
            depth: depth_rel,
            det2d: det2d_rel,
            odom: OdomRecord::from_pose(&robot),
        });
        gt.push(gt_at(spec, stamp));
    }

    write_manifest(&root.join("manifest.jsonl"), &manifest)?;
    write_gt(&root.join("gt.jsonl"), &gt)?;
    if let Some(cam) = &cam {
        write_camera_json(&root.join("camera.json"), cam)?;
    }
    Ok(n)
}

fn default_camera() -> CameraRecord {
    CameraRecord {
        fx: 168.6,
        fy: 216.5,
        cx: 160.0,
        cy: 120.0,
        width: 320,
        height: 240,
        extrinsic: OdomRecord { t: 0.0, pos: [0.08, 0.0, 0.03], quat: optical_mount_quat() },
        depth_scale: 0.001,
        depth_min: 0.3,
        depth_max: 10.0,
    }
}

fn default_lidar() -> LidarSpec {
    LidarSpec {
        channels: 32,
        azimuth_res_deg: 0.5,
        fov_v_deg: 59.0,
        max_range: 15.0,
        noise_sigma: 0.01,
    }
}

fn pillar(x: f64, y: f64, shape: ShapeKind) -> StaticSpec {
    StaticSpec { shape, center: [x, y, 1.0], size: [0.4, 0.4, 2.0] }
}

/// The benchmark scene: three pillars and four box walkers — two at
/// 1.0 m/s that only the camera can prove dynamic, plus a crossing pair
/// at 1.7 m/s — observed by a slowly drifting robot.
///
/// The layout is governed by three single-viewpoint facts of life.
/// First, a box seen square-on shows one face, and one face makes a
/// paper-thin cluster whose bounding box tells nothing about the
/// obstacle's depth, so every walker stays at least 20° off the grid
/// axes as seen from the robot, where two faces are always visible.
/// Second, anything that shares a bearing with a nearer object stands
/// in its shadow, so each walker owns a bearing band that overlaps no
/// other object's band: the 1.0 m/s pair walks near-radial paths on
/// the right of the camera view (bands of roughly −30°…−21° and
/// −43°…−35°), while the crossing pair gets the left half. Third, a
/// flat face translating parallel to itself looks stationary to a
/// nearest-neighbor displacement test — only out-of-plane motion
/// registers — so the crossing pair walks the ±45° diagonals at a
/// brisk 1.7 m/s, which gives both visible faces of each box an
/// out-of-plane step of 0.12 m per frame — clear of the displacement
/// threshold even under voxel quantization — and the motion check
/// keeps working during the pair's brief excursions past the camera's
/// field of view. The pair shares one speed, one path length, and one phase,
/// with the intersection placed at complementary arc positions
/// (1.925 m and 0.275 m of 2.2 m), keeping the two at least 1.1 m of
/// arc apart at every instant of their synchronized ping-pong cycles —
/// the paths cross, the walkers never collide, and their clusters
/// never bleed into each other.
pub fn benchmark_scene() -> SceneSpec {
    SceneSpec {
        name: "benchmark".into(),
        duration: 30.0,
        rate: 10.0,
        ground: false,
        robot: vec![
            RobotKey { t: 0.0, pos: [0.0, 0.0, 0.5], yaw: 0.0 },
            RobotKey { t: 30.0, pos: [0.25, -0.05, 0.5], yaw: 0.0 },
        ],
        statics: vec![
            pillar(2.2, -3.2, ShapeKind::Box),
            pillar(7.0, 0.5, ShapeKind::Cylinder),
            pillar(1.2, -2.4, ShapeKind::Box),
        ],
        dynamics: vec![
            DynamicSpec {
                shape: ShapeKind::Box,
                size: [0.46, 0.42, 1.6],
                z_center: 0.9,
                path: vec![[3.05, -1.42], [5.90, -2.62]],
                speed: 1.0,
                phase: 0.0,
            },
            DynamicSpec {
                shape: ShapeKind::Box,
                size: [0.42, 0.46, 1.55],
                z_center: 0.875,
                path: vec![[3.30, -2.66], [4.35, -3.45]],
                speed: 1.0,
                phase: 0.5,
            },
            DynamicSpec {
                shape: ShapeKind::Box,
                size: [0.44, 0.44, 1.5],
                z_center: 0.85,
                path: vec![[4.575, 2.349], [6.130, 3.904]],
                speed: 1.7,
                phase: 0.0,
            },
            DynamicSpec {
                shape: ShapeKind::Box,
                size: [0.45, 0.44, 1.62],
                z_center: 0.91,
                path: vec![[6.130, 3.516], [4.575, 5.071]],
                speed: 1.7,
                phase: 0.0,
            },
        ],
        lidar: default_lidar(),
        camera: Some(default_camera()),
        depth_noise_sigma: 0.02,
        det2d_jitter_px: 2.0,
        det2d_dropout: 0.05,
    }
}

/// Two walkers 0.7 m apart moving in lockstep away from the camera: close
/// enough that range clustering fuses them into one blob, while the image
/// detector still reports two boxes.
pub fn close_pair_scene() -> SceneSpec {
    SceneSpec {
        name: "close-pair".into(),
        duration: 6.0,
        rate: 10.0,
        ground: false,
        robot: vec![RobotKey { t: 0.0, pos: [0.0, 0.0, 0.5], yaw: 0.0 }],
        statics: vec![],
        dynamics: vec![
            DynamicSpec {
                shape: ShapeKind::Cylinder,
                size: [0.46, 0.46, 1.7],
                z_center: 0.85,
                path: vec![[2.5, -0.35], [4.5, -0.35]],
                speed: 1.0,
                phase: 0.0,
            },
            DynamicSpec {
                shape: ShapeKind::Cylinder,
                size: [0.42, 0.42, 1.65],
                z_center: 0.825,
                path: vec![[2.5, 0.35], [4.5, 0.35]],
                speed: 1.0,
                phase: 0.0,
            },
        ],
        lidar: default_lidar(),
        camera: Some(default_camera()),
        depth_noise_sigma: 0.01,
        det2d_jitter_px: 1.0,
        det2d_dropout: 0.0,
    }
}

/// A small, fast scene (one walker, one pillar) for smoke and determinism
/// tests. The walker path sits diagonally off the sensor axis so both of
/// its faces stay visible, same as the benchmark scene.
pub fn mini_scene() -> SceneSpec {
    SceneSpec {
        name: "mini".into(),
        duration: 2.0,
        rate: 10.0,
        ground: false,
        robot: vec![RobotKey { t: 0.0, pos: [0.0, 0.0, 0.5], yaw: 0.0 }],
        statics: vec![pillar(2.6, -1.5, ShapeKind::Box)],
        dynamics: vec![DynamicSpec {
            shape: ShapeKind::Box,
            size: [0.46, 0.42, 1.6],
            z_center: 0.9,
            path: vec![[2.2, 0.9], [3.1, 1.8]],
            speed: 0.9,
            phase: 0.0,
        }],
        lidar: default_lidar(),
        camera: Some(default_camera()),
        depth_noise_sigma: 0.01,
        det2d_jitter_px: 1.0,
        det2d_dropout: 0.0,
    }
}
