//! Frame-to-frame tracking: appearance-feature association, a 9-state
//! constant-acceleration Kalman filter per track, and a two-check dynamic/
//! static classifier smoothed by a k-of-n vote.
//!
//! State layout is [px py pz vx vy vz ax ay az]. Observations are full
//! state: the detected box center plus velocity and acceleration obtained
//! by finite differences of the recent detected centers.

use crate::geometry::{box_cmp, iou2d, iou3d, project_to_image, Aabb3, Box2d, CameraModel, Point3, Pose};
use crate::obstacle::{Obstacle3d, Source};
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{HashMap, VecDeque};

pub type StateVec = SVector<f64, 9>;
pub type StateMat = SMatrix<f64, 9, 9>;

/// Appearance feature: box center (3), box size (3), point count (1),
/// per-axis point standard deviation (3).
pub type FeatureVec = [f64; 10];

/// Tuning for association, filtering, classification, and track lifecycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    /// Per-dimension weights of the association similarity.
    pub sim_weights: [f64; 10],
    /// Minimum 3D IoU between a track's last box and a detection for an
    /// association to be accepted.
    pub assoc_iou_gate: f64,
    /// Process noise variance per position axis (per prediction step).
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_acc: f64,
    /// Observation noise variance per position axis.
    pub r_pos: f64,
    pub r_vel: f64,
    pub r_acc: f64,
    /// Speed a track must exceed for the motion check, m/s.
    pub vel_thresh: f64,
    /// Point displacement that counts as "moved", meters.
    pub disp_thresh: f64,
    /// Fraction of points that must have moved for the motion check.
    pub disp_majority: f64,
    /// Minimum 2D IoU between a track's reprojected box and a 2D detection
    /// for the image-evidence check.
    pub cls_iou2d_thresh: f64,
    /// Consecutive missed frames before a track retires.
    pub retire_after: u32,
    /// A track is dynamic when at least k of its last n frame verdicts say so.
    pub vote_k: u32,
    pub vote_n: u32,
    /// Snapshots of past detections kept per track.
    pub history_len: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            sim_weights: [1.0; 10],
            assoc_iou_gate: 0.1,
            q_pos: 0.01,
            q_vel: 0.1,
            q_acc: 0.5,
            r_pos: 0.1,
            r_vel: 0.5,
            r_acc: 1.0,
            vel_thresh: 0.25,
            disp_thresh: 0.10,
            disp_majority: 0.5,
            cls_iou2d_thresh: 0.5,
            retire_after: 3,
            vote_k: 3,
            vote_n: 5,
            history_len: 5,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.sim_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("sim_weights must be finite and non-negative".into());
        }
        if self.sim_weights.iter().all(|w| *w == 0.0) {
            return Err("sim_weights must have at least one positive entry".into());
        }
        if !(0.0..=1.0).contains(&self.assoc_iou_gate) {
            return Err(format!("assoc_iou_gate must be in [0, 1], got {}", self.assoc_iou_gate));
        }
        for (name, v) in [
            ("q_pos", self.q_pos),
            ("q_vel", self.q_vel),
            ("q_acc", self.q_acc),
        ] {
            if !(v >= 0.0) {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("r_pos", self.r_pos),
            ("r_vel", self.r_vel),
            ("r_acc", self.r_acc),
        ] {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.vel_thresh >= 0.0) {
            return Err(format!("vel_thresh must be non-negative, got {}", self.vel_thresh));
        }
        if !(self.disp_thresh > 0.0) {
            return Err(format!("disp_thresh must be positive, got {}", self.disp_thresh));
        }
        if !(0.0..=1.0).contains(&self.disp_majority) {
            return Err(format!("disp_majority must be in [0, 1], got {}", self.disp_majority));
        }
        if !(0.0..=1.0).contains(&self.cls_iou2d_thresh) {
            return Err(format!(
                "cls_iou2d_thresh must be in [0, 1], got {}",
                self.cls_iou2d_thresh
            ));
        }
        if self.retire_after == 0 {
            return Err("retire_after must be at least 1".into());
        }
        if self.vote_k == 0 || self.vote_k > self.vote_n {
            return Err(format!("need 1 <= vote_k <= vote_n, got {}/{}", self.vote_k, self.vote_n));
        }
        if self.history_len == 0 {
            return Err("history_len must be at least 1".into());
        }
        Ok(())
    }
}

/// Appearance feature of one detection.
pub fn feature_vec(o: &Obstacle3d) -> FeatureVec {
    let n = o.points.len() as f64;
    let mut mean = Point3::ORIGIN;
    for p in &o.points {
        mean = mean.add(p);
    }
    mean = mean.scale(1.0 / n);
    let mut var = [0.0f64; 3];
    for p in &o.points {
        let d = p.sub(&mean);
        var[0] += d.x * d.x;
        var[1] += d.y * d.y;
        var[2] += d.z * d.z;
    }
    let std = [(var[0] / n).sqrt(), (var[1] / n).sqrt(), (var[2] / n).sqrt()];
    [
        o.bbox.center.x,
        o.bbox.center.y,
        o.bbox.center.z,
        o.bbox.size[0],
        o.bbox.size[1],
        o.bbox.size[2],
        n,
        std[0],
        std[1],
        std[2],
    ]
}

/// Weighted cosine similarity. Zero-norm vectors (all dimensions identical
/// after standardization) compare as identical to each other.
fn weighted_cosine(a: &FeatureVec, b: &FeatureVec, w: &[f64; 10]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..10 {
        dot += w[i] * a[i] * b[i];
        na += w[i] * a[i] * a[i];
        nb += w[i] * b[i] * b[i];
    }
    if na < 1e-24 && nb < 1e-24 {
        return 1.0;
    }
    if na < 1e-24 || nb < 1e-24 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Per-dimension z-score over the given population; dimensions with no
/// spread become 0 so they cannot dominate the similarity.
fn standardize(population: &[FeatureVec]) -> Vec<FeatureVec> {
    let n = population.len().max(1) as f64;
    let mut mean = [0.0f64; 10];
    for f in population {
        for i in 0..10 {
            mean[i] += f[i];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = [0.0f64; 10];
    for f in population {
        for i in 0..10 {
            let d = f[i] - mean[i];
            var[i] += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    population
        .iter()
        .map(|f| {
            let mut z = [0.0f64; 10];
            for i in 0..10 {
                z[i] = if std[i] > 1e-12 { (f[i] - mean[i]) / std[i] } else { 0.0 };
            }
            z
        })
        .collect()
}

/// Association outcome; indices refer to the input slices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    pub pairs: Vec<(usize, usize)>, // (track, detection)
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Matches detections to tracks. Features (tracks' latest and the current
/// detections together) are standardized per dimension, each detection
/// nominates its most similar track by weighted cosine, and nominations are
/// resolved in descending similarity order. A nomination is accepted only
/// when the track is unclaimed and the boxes overlap at least the IoU gate;
/// there is no fallback to a second-best track.
pub fn associate(
    track_features: &[FeatureVec],
    track_boxes: &[Aabb3],
    det_features: &[FeatureVec],
    det_boxes: &[Aabb3],
    cfg: &TrackConfig,
) -> Association {
    assert_eq!(track_features.len(), track_boxes.len());
    assert_eq!(det_features.len(), det_boxes.len());
    let mut out = Association::default();
    if track_features.is_empty() || det_features.is_empty() {
        out.unmatched_tracks = (0..track_features.len()).collect();
        out.unmatched_detections = (0..det_features.len()).collect();
        return out;
    }

    let mut population: Vec<FeatureVec> = Vec::with_capacity(track_features.len() + det_features.len());
    population.extend_from_slice(track_features);
    population.extend_from_slice(det_features);
    let z = standardize(&population);
    let (z_tracks, z_dets) = z.split_at(track_features.len());

    // Each detection nominates its single best track.
    let mut nominations: Vec<(usize, usize, f64)> = Vec::new(); // (det, track, sim)
    for (di, zd) in z_dets.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (ti, zt) in z_tracks.iter().enumerate() {
            let sim = weighted_cosine(zd, zt, &cfg.sim_weights);
            let better = match best {
                None => true,
                Some((bi, bs)) => {
                    sim > bs
                        || (sim == bs && box_cmp(&track_boxes[ti], &track_boxes[bi]) == Ordering::Less)
                }
            };
            if better {
                best = Some((ti, sim));
            }
        }
        let (ti, sim) = best.expect("at least one track");
        nominations.push((di, ti, sim));
    }
    nominations.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(Ordering::Equal)
            .then_with(|| box_cmp(&det_boxes[a.0], &det_boxes[b.0]))
    });

    let mut track_claimed = vec![false; track_features.len()];
    let mut det_matched = vec![false; det_features.len()];
    for (di, ti, sim) in nominations {
        if track_claimed[ti] {
            log::debug!("assoc: det {di} lost nomination, track {ti} already claimed");
            continue;
        }
        let iou = iou3d(&track_boxes[ti], &det_boxes[di]);
        if iou >= cfg.assoc_iou_gate.max(f64::MIN_POSITIVE) {
            track_claimed[ti] = true;
            det_matched[di] = true;
            out.pairs.push((ti, di));
        } else {
            log::debug!("assoc: det {di} -> track {ti} gated out (sim {sim:.3}, iou {iou:.3})");
        }
    }
    out.unmatched_tracks = (0..track_features.len()).filter(|&t| !track_claimed[t]).collect();
    out.unmatched_detections = (0..det_features.len()).filter(|&d| !det_matched[d]).collect();
    out
}

/// Kalman state with its covariance and the stamp of the last update.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub x: StateVec,
    pub p: StateMat,
    pub stamp: f64,
}

/// Initial covariance for the unobserved velocity/acceleration blocks.
const INIT_VEL_VAR: f64 = 1.0;
const INIT_ACC_VAR: f64 = 1.0;

impl KalmanState {
    /// Fresh state at a detection: observed position, zero velocity and
    /// acceleration with inflated covariance.
    pub fn from_first_detection(pos: &Point3, stamp: f64, cfg: &TrackConfig) -> Self {
        let mut x = StateVec::zeros();
        x[0] = pos.x;
        x[1] = pos.y;
        x[2] = pos.z;
        let mut p = StateMat::zeros();
        for i in 0..3 {
            p[(i, i)] = cfg.r_pos;
            p[(i + 3, i + 3)] = INIT_VEL_VAR;
            p[(i + 6, i + 6)] = INIT_ACC_VAR;
        }
        KalmanState { x, p, stamp }
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x[0], self.x[1], self.x[2])
    }

    pub fn velocity(&self) -> Point3 {
        Point3::new(self.x[3], self.x[4], self.x[5])
    }
}

fn symmetrize(m: &mut StateMat) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}

/// Constant-acceleration transition over `dt` seconds.
pub fn transition_matrix(dt: f64) -> StateMat {
    let mut a = StateMat::identity();
    for i in 0..6 {
        a[(i, i + 3)] = dt;
    }
    for i in 0..3 {
        a[(i, i + 6)] = 0.5 * dt * dt;
    }
    a
}

fn process_noise(cfg: &TrackConfig) -> StateMat {
    let mut q = StateMat::zeros();
    for i in 0..3 {
        q[(i, i)] = cfg.q_pos;
        q[(i + 3, i + 3)] = cfg.q_vel;
        q[(i + 6, i + 6)] = cfg.q_acc;
    }
    q
}

fn observation_noise(cfg: &TrackConfig) -> StateMat {
    let mut r = StateMat::zeros();
    for i in 0..3 {
        r[(i, i)] = cfg.r_pos;
        r[(i + 3, i + 3)] = cfg.r_vel;
        r[(i + 6, i + 6)] = cfg.r_acc;
    }
    r
}

/// Propagates the state `dt` seconds forward under constant acceleration.
pub fn kf_predict(state: &KalmanState, dt: f64, cfg: &TrackConfig) -> KalmanState {
    let a = transition_matrix(dt);
    let x = a * state.x;
    let mut p = a * state.p * a.transpose() + process_noise(cfg);
    symmetrize(&mut p);
    KalmanState { x, p, stamp: state.stamp + dt }
}

/// Full-state observation built from the current detected center and
/// finite differences over previously detected centers (most recent last).
/// With no history the velocity and acceleration entries stay zero, which
/// pairs with the inflated initial covariance of a fresh track.
pub fn make_observation(pos: &Point3, prev: &[(Point3, f64)], stamp: f64) -> StateVec {
    let mut z = StateVec::zeros();
    z[0] = pos.x;
    z[1] = pos.y;
    z[2] = pos.z;
    if let Some((p1, t1)) = prev.last() {
        let dt1 = stamp - t1;
        if dt1 > 1e-9 {
            let v = pos.sub(p1).scale(1.0 / dt1);
            z[3] = v.x;
            z[4] = v.y;
            z[5] = v.z;
            if prev.len() >= 2 {
                let (p2, t2) = prev[prev.len() - 2];
                let dt2 = t1 - t2;
                if dt2 > 1e-9 {
                    let v_prev = p1.sub(&p2).scale(1.0 / dt2);
                    let acc = v.sub(&v_prev).scale(1.0 / dt1);
                    z[6] = acc.x;
                    z[7] = acc.y;
                    z[8] = acc.z;
                }
            }
        }
    }
    z
}

/// Measurement update with an identity observation model and Joseph-form
/// covariance update, which keeps P symmetric positive semi-definite.
pub fn kf_update(state: &KalmanState, z: &StateVec, cfg: &TrackConfig) -> KalmanState {
    let r = observation_noise(cfg);
    let s = state.p + r;
    let s_inv = s.try_inverse().expect("S = P + R with positive R is invertible");
    let k = state.p * s_inv;
    let x = state.x + k * (z - state.x);
    let i_k = StateMat::identity() - k;
    let mut p = i_k * state.p * i_k.transpose() + k * r * k.transpose();
    symmetrize(&mut p);
    KalmanState { x, p, stamp: state.stamp }
}

/// Dynamic/static/unknown label of a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionClass {
    Unclassified,
    Static,
    Dynamic,
}

/// Per-frame evidence available to the dynamic classifier.
pub struct ClassifyContext<'a> {
    pub visual_2d: &'a [Box2d],
    pub cam: Option<&'a CameraModel>,
    pub body_pose: &'a Pose,
    /// The track's cluster points from the previous frame, if any.
    pub prev_points: Option<&'a [Point3]>,
}

/// Nearest-neighbor index over the previous frame's points on a uniform
/// grid with cell edge equal to the displacement threshold: any neighbor
/// within the threshold is guaranteed to sit in one of the 27 cells around
/// the query.
struct DisplacementGrid<'a> {
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    points: &'a [Point3],
    inv: f64,
}

impl<'a> DisplacementGrid<'a> {
    fn build(points: &'a [Point3], cell: f64) -> Self {
        let inv = 1.0 / cell;
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let key = (
                (p.x * inv).floor() as i64,
                (p.y * inv).floor() as i64,
                (p.z * inv).floor() as i64,
            );
            cells.entry(key).or_default().push(i as u32);
        }
        DisplacementGrid { cells, points, inv }
    }

    /// True when no previous point lies within `thresh` of `p`.
    fn displaced(&self, p: &Point3, thresh: f64) -> bool {
        let t2 = thresh * thresh;
        let (kx, ky, kz) = (
            (p.x * self.inv).floor() as i64,
            (p.y * self.inv).floor() as i64,
            (p.z * self.inv).floor() as i64,
        );
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in bucket {
                            let d = p.sub(&self.points[j as usize]);
                            if d.dot(&d) <= t2 {
                                return false;
                            }
                        }
                    }
                }
            }
        }
        true
    }
}

/// Single-frame dynamic verdict for a track. Two checks, either suffices:
///
/// 1. image evidence: the track's current box reprojects onto a 2D
///    detection. The box passed here should be the box the track reports
///    this frame (the associated detection's box), not the filtered
///    estimate: the filter needs a few frames to recover whenever a
///    walker reverses direction, and during that lag a smoothed box
///    reprojects away from the image evidence that is plainly there.
/// 2. motion evidence: filtered speed above the threshold AND the majority
///    of current points displaced beyond the threshold relative to the
///    previous frame's points.
///
/// Check 2 is skipped when there are no previous points. Raising either
/// motion threshold can only turn the verdict off, never on.
pub fn frame_verdict(
    est_box: &Aabb3,
    velocity: &Point3,
    cur_points: &[Point3],
    ctx: &ClassifyContext<'_>,
    cfg: &TrackConfig,
) -> bool {
    // Check 1: reprojection against 2D detections.
    if let Some(cam) = ctx.cam {
        if let Some(proj) = project_to_image(est_box, cam, ctx.body_pose) {
            let best = ctx
                .visual_2d
                .iter()
                .map(|det| iou2d(&proj, det))
                .fold(0.0f64, f64::max);
            log::debug!(
                "verdict: box ({:.2},{:.2}) proj [{:.0},{:.0}]x[{:.0},{:.0}] best iou2d {:.3} of {} dets",
                est_box.center.x, est_box.center.y,
                proj.u_min, proj.u_max, proj.v_min, proj.v_max,
                best, ctx.visual_2d.len()
            );
            if best >= cfg.cls_iou2d_thresh {
                return true;
            }
        } else {
            log::debug!(
                "verdict: box ({:.2},{:.2}) does not project into the image",
                est_box.center.x, est_box.center.y
            );
        }
    }
    // Check 2: speed plus point displacement.
    if velocity.norm() > cfg.vel_thresh {
        if let Some(prev) = ctx.prev_points {
            if !prev.is_empty() && !cur_points.is_empty() {
                let grid = DisplacementGrid::build(prev, cfg.disp_thresh);
                let moved = cur_points.iter().filter(|p| grid.displaced(p, cfg.disp_thresh)).count();
                let frac = moved as f64 / cur_points.len() as f64;
                log::debug!(
                    "verdict: box ({:.2},{:.2}) speed {:.2} disp frac {:.2} ({}/{} pts)",
                    est_box.center.x, est_box.center.y, velocity.norm(), frac, moved, cur_points.len()
                );
                if frac > cfg.disp_majority {
                    return true;
                }
            }
        }
    } else {
        log::debug!(
            "verdict: box ({:.2},{:.2}) speed {:.2} below threshold",
            est_box.center.x, est_box.center.y, velocity.norm()
        );
    }
    false
}

/// k-of-n vote over the retained frame verdicts. Dynamic as soon as k of
/// the last n say dynamic; static once a full window disagrees; otherwise
/// not enough evidence yet.
fn vote_class(votes: &VecDeque<bool>, cfg: &TrackConfig) -> MotionClass {
    let trues = votes.iter().filter(|v| **v).count() as u32;
    if trues >= cfg.vote_k {
        MotionClass::Dynamic
    } else if votes.len() as u32 >= cfg.vote_n {
        MotionClass::Static
    } else {
        MotionClass::Unclassified
    }
}

/// Stored observation of a track at one frame.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub bbox: Aabb3,
    pub points: Vec<Point3>,
    pub stamp: f64,
    pub feature: FeatureVec,
}

/// One tracked object.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub state: KalmanState,
    pub history: VecDeque<Snapshot>,
    pub votes: VecDeque<bool>,
    pub misses: u32,
    pub motion_class: MotionClass,
    pub hits: u64,
}

impl Track {
    fn latest(&self) -> &Snapshot {
        self.history.back().expect("track always has at least one snapshot")
    }
}

/// Per-frame tracker output for one obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedObstacle {
    pub id: u64,
    pub bbox: Aabb3,
    pub velocity: Point3,
    pub motion_class: MotionClass,
    pub source: Source,
    pub stamp: f64,
}

/// Tracker holding all live tracks across frames.
pub struct Tracker {
    cfg: TrackConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackConfig) -> Result<Self, String> {
        cfg.validate()?;
        Ok(Tracker { cfg, tracks: Vec::new(), next_id: 0 })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advances the tracker by one frame of fused detections. Returns one
    /// output per detection observed this frame, sorted by track id.
    pub fn step(
        &mut self,
        detections: &[Obstacle3d],
        visual_2d: &[Box2d],
        cam: Option<&CameraModel>,
        body_pose: &Pose,
    ) -> Vec<TrackedObstacle> {
        let det_features: Vec<FeatureVec> = detections.iter().map(feature_vec).collect();
        let det_boxes: Vec<Aabb3> = detections.iter().map(|d| d.bbox).collect();
        let track_features: Vec<FeatureVec> = self.tracks.iter().map(|t| t.latest().feature).collect();
        // Gate against where the filter expects each obstacle NOW, not
        // where it was last seen: a thin detection (an obstacle showing
        // only its front face) moving along its thin axis clears its own
        // footprint between frames, so the stale box would never overlap.
        let frame_stamp = detections.first().map(|d| d.stamp);
        let track_boxes: Vec<Aabb3> = self
            .tracks
            .iter()
            .map(|t| {
                let last = t.latest().bbox;
                let dt = match frame_stamp {
                    Some(stamp) if stamp > t.state.stamp => stamp - t.state.stamp,
                    _ => return last,
                };
                let predicted = kf_predict(&t.state, dt, &self.cfg);
                Aabb3::new(predicted.position(), last.size).unwrap_or(last)
            })
            .collect();

        let assoc = associate(&track_features, &track_boxes, &det_features, &det_boxes, &self.cfg);
        let mut outputs = Vec::new();

        for &(ti, di) in &assoc.pairs {
            let det = &detections[di];
            let track = &mut self.tracks[ti];
            let mut dt = det.stamp - track.state.stamp;
            if dt <= 0.0 {
                log::debug!("non-increasing stamp on track {}, clamping dt", track.id);
                dt = 1e-3;
            }
            let predicted = kf_predict(&track.state, dt, &self.cfg);
            let prev_centers: Vec<(Point3, f64)> =
                track.history.iter().map(|s| (s.bbox.center, s.stamp)).collect();
            let z = make_observation(&det.bbox.center, &prev_centers, det.stamp);
            let mut state = kf_update(&predicted, &z, &self.cfg);
            state.stamp = det.stamp;

            let prev_points = track.latest().points.clone();
            let ctx = ClassifyContext {
                visual_2d,
                cam,
                body_pose,
                prev_points: Some(&prev_points),
            };
            let verdict = frame_verdict(&det.bbox, &state.velocity(), &det.points, &ctx, &self.cfg);

            track.state = state;
            track.misses = 0;
            track.hits += 1;
            track.votes.push_back(verdict);
            while track.votes.len() > self.cfg.vote_n as usize {
                track.votes.pop_front();
            }
            track.motion_class = vote_class(&track.votes, &self.cfg);
            track.history.push_back(Snapshot {
                bbox: det.bbox,
                points: det.points.clone(),
                stamp: det.stamp,
                feature: det_features[di],
            });
            while track.history.len() > self.cfg.history_len {
                track.history.pop_front();
            }

            outputs.push(TrackedObstacle {
                id: track.id,
                bbox: det.bbox,
                velocity: track.state.velocity(),
                motion_class: track.motion_class,
                source: det.source,
                stamp: det.stamp,
            });
        }

        // Age unmatched tracks and retire the stale ones.
        for &ti in &assoc.unmatched_tracks {
            self.tracks[ti].misses += 1;
        }
        let retire_after = self.cfg.retire_after;
        self.tracks.retain(|t| t.misses < retire_after);

        // Spawn tracks for unclaimed detections, in canonical box order so
        // id assignment does not depend on detection list order.
        let mut fresh = assoc.unmatched_detections;
        fresh.sort_by(|&a, &b| box_cmp(&det_boxes[a], &det_boxes[b]));
        for di in fresh {
            let det = &detections[di];
            let state = KalmanState::from_first_detection(&det.bbox.center, det.stamp, &self.cfg);
            let ctx = ClassifyContext { visual_2d, cam, body_pose, prev_points: None };
            let verdict = frame_verdict(&det.bbox, &state.velocity(), &det.points, &ctx, &self.cfg);
            let mut votes = VecDeque::new();
            votes.push_back(verdict);
            let motion_class = vote_class(&votes, &self.cfg);
            let id = self.next_id;
            self.next_id += 1;
            let mut history = VecDeque::new();
            history.push_back(Snapshot {
                bbox: det.bbox,
                points: det.points.clone(),
                stamp: det.stamp,
                feature: det_features[di],
            });
            self.tracks.push(Track {
                id,
                state,
                history,
                votes,
                misses: 0,
                motion_class,
                hits: 1,
            });
            outputs.push(TrackedObstacle {
                id,
                bbox: det.bbox,
                velocity: Point3::ORIGIN,
                motion_class,
                source: det.source,
                stamp: det.stamp,
            });
        }

        outputs.sort_by_key(|o| o.id);
        outputs
    }
}
