//! Visual obstacle detection from depth images. Two independent detectors
//! run per frame: clustering of the back-projected depth cloud, and a
//! column/depth histogram detector that separates objects by depth band.
//! Only boxes the two detectors agree on survive into the ensemble output.

use crate::geometry::{
    box2d_cmp, box_cmp, iou3d, min_enclosing_box, Aabb3, Box2d, CameraModel, CloudFrame, Point3,
    PointCloud, Pose,
};
use crate::obstacle::{cluster_obstacles, Obstacle3d, Source};
use crate::lidar::voxel_downsample;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Tuning for the visual depth detectors and their ensemble agreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthDetectConfig {
    /// Voxel edge for downsampling the back-projected cloud, meters.
    pub voxel_size: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// Depth-bin height of the column histogram, meters.
    pub u_bin_size: f64,
    /// Minimum pixels in a (column, depth-bin) cell to count as occupied.
    pub u_hit_thresh: u32,
    /// Minimum side length of an accepted 2D box, pixels.
    pub min_box_px: u32,
    /// Minimum 3D IoU for the two detectors to agree on a box.
    pub ensemble_iou_thresh: f64,
    /// Slack around a region's depth band when scanning pixel columns for
    /// its vertical extent, meters.
    pub depth_continuity_tol: f64,
    /// Drop back-projected points below this world height; None disables.
    /// Same role as the LiDAR ground gate: a visible floor would otherwise
    /// bridge obstacles into one cluster.
    pub ground_z: Option<f64>,
}

impl Default for DepthDetectConfig {
    fn default() -> Self {
        DepthDetectConfig {
            voxel_size: 0.1,
            dbscan_eps: 0.25,
            dbscan_min_pts: 8,
            u_bin_size: 0.2,
            u_hit_thresh: 20,
            min_box_px: 8,
            ensemble_iou_thresh: 0.25,
            depth_continuity_tol: 0.3,
            ground_z: Some(0.15),
        }
    }
}

impl DepthDetectConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.voxel_size > 0.0) {
            return Err(format!("voxel_size must be positive, got {}", self.voxel_size));
        }
        if !(self.dbscan_eps > 0.0) {
            return Err(format!("dbscan_eps must be positive, got {}", self.dbscan_eps));
        }
        if self.dbscan_min_pts == 0 {
            return Err("dbscan_min_pts must be at least 1".into());
        }
        if !(self.u_bin_size > 0.0) {
            return Err(format!("u_bin_size must be positive, got {}", self.u_bin_size));
        }
        if self.u_hit_thresh == 0 {
            return Err("u_hit_thresh must be at least 1".into());
        }
        if self.min_box_px == 0 {
            return Err("min_box_px must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.ensemble_iou_thresh) {
            return Err(format!(
                "ensemble_iou_thresh must be in [0, 1], got {}",
                self.ensemble_iou_thresh
            ));
        }
        if !(self.depth_continuity_tol >= 0.0) {
            return Err(format!(
                "depth_continuity_tol must be non-negative, got {}",
                self.depth_continuity_tol
            ));
        }
        Ok(())
    }
}

/// One depth image: row-major raw samples (0 = no return) plus the camera
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u16>,
    pub stamp: f64,
    pub cam: CameraModel,
}

impl DepthFrame {
    pub fn new(
        width: u32,
        height: u32,
        values: Vec<u16>,
        stamp: f64,
        cam: CameraModel,
    ) -> Result<Self, String> {
        if values.len() != (width as usize) * (height as usize) {
            return Err(format!(
                "depth buffer holds {} samples, expected {}x{}",
                values.len(),
                width,
                height
            ));
        }
        if cam.width != width || cam.height != height {
            return Err(format!(
                "camera is {}x{} but image is {}x{}",
                cam.width, cam.height, width, height
            ));
        }
        Ok(DepthFrame { width, height, values, stamp, cam })
    }

    #[inline]
    pub fn raw(&self, u: u32, v: u32) -> u16 {
        self.values[v as usize * self.width as usize + u as usize]
    }

    /// Depth in meters at (u, v), if the sample is a return inside the
    /// camera's valid range.
    #[inline]
    pub fn depth_at(&self, u: u32, v: u32) -> Option<f64> {
        let raw = self.raw(u, v);
        if raw == 0 {
            return None;
        }
        let d = raw as f64 * self.cam.depth_scale;
        (self.cam.depth_min..=self.cam.depth_max).contains(&d).then_some(d)
    }
}

/// Back-projects every valid in-range pixel into a world-frame cloud.
/// Pixel centers sit at (u + 0.5, v + 0.5).
pub fn depth_to_cloud(frame: &DepthFrame, body_pose: &Pose) -> PointCloud {
    let cam_in_world = frame.cam.pose_in_world(body_pose);
    let mut points = Vec::new();
    for v in 0..frame.height {
        for u in 0..frame.width {
            if let Some(d) = frame.depth_at(u, v) {
                let p_cam = frame.cam.unproject(u as f64 + 0.5, v as f64 + 0.5, d);
                points.push(cam_in_world.transform_point(&p_cam));
            }
        }
    }
    PointCloud { stamp: frame.stamp, frame: CloudFrame::World, points }
}

/// Depth-cloud detector: back-project, downsample, cluster. Runs through
/// the same clustering path as the LiDAR cascade.
pub fn dbscan_depth_detect(
    frame: &DepthFrame,
    body_pose: &Pose,
    cfg: &DepthDetectConfig,
) -> Vec<Obstacle3d> {
    let cloud = depth_to_cloud(frame, body_pose);
    let reps = voxel_downsample(&cloud.points, cfg.voxel_size);
    let points: Vec<Point3> = match cfg.ground_z {
        Some(gz) => reps.into_iter().filter(|p| p.z >= gz).collect(),
        None => reps,
    };
    cluster_obstacles(&points, cfg.dbscan_eps, cfg.dbscan_min_pts, Source::Visual, frame.stamp)
}

/// Column/depth histogram: counts[bin][u] is the number of valid pixels in
/// image column u whose depth falls in that bin.
#[derive(Debug, Clone, PartialEq)]
pub struct UDepthMap {
    pub width: u32,
    pub n_bins: u32,
    pub bin_size: f64,
    pub depth_min: f64,
    pub counts: Vec<u32>,
}

impl UDepthMap {
    #[inline]
    pub fn count(&self, bin: u32, u: u32) -> u32 {
        self.counts[bin as usize * self.width as usize + u as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Builds the column/depth histogram for one frame. Every valid in-range
/// pixel lands in exactly one bin.
pub fn build_udepth(frame: &DepthFrame, cfg: &DepthDetectConfig) -> UDepthMap {
    let span = frame.cam.depth_max - frame.cam.depth_min;
    let n_bins = (span / cfg.u_bin_size).ceil().max(1.0) as u32;
    let mut counts = vec![0u32; n_bins as usize * frame.width as usize];
    for v in 0..frame.height {
        for u in 0..frame.width {
            if let Some(d) = frame.depth_at(u, v) {
                let bin =
                    (((d - frame.cam.depth_min) / cfg.u_bin_size) as u32).min(n_bins - 1);
                counts[bin as usize * frame.width as usize + u as usize] += 1;
            }
        }
    }
    UDepthMap { width: frame.width, n_bins, bin_size: cfg.u_bin_size, depth_min: frame.cam.depth_min, counts }
}

/// A horizontal run of occupied histogram cells in one depth bin.
#[derive(Debug, Clone, Copy)]
struct Segment {
    bin: u32,
    u0: u32,
    u1: u32, // inclusive
}

/// Connected region of segments across adjacent depth bins.
#[derive(Debug, Clone)]
struct Region {
    u0: u32,
    u1: u32,
    bin0: u32,
    bin1: u32,
}

fn extract_segments(map: &UDepthMap, hit_thresh: u32) -> Vec<Segment> {
    let mut segs = Vec::new();
    for bin in 0..map.n_bins {
        let mut run_start: Option<u32> = None;
        for u in 0..map.width {
            let hit = map.count(bin, u) >= hit_thresh;
            match (hit, run_start) {
                (true, None) => run_start = Some(u),
                (false, Some(s)) => {
                    segs.push(Segment { bin, u0: s, u1: u - 1 });
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            segs.push(Segment { bin, u0: s, u1: map.width - 1 });
        }
    }
    segs
}

/// Where a surface bends away from the camera — at a box corner, say — the
/// edge column's hits straddle two depth bins, and neither half may clear
/// the hit threshold. The runs on either side of that column then abut
/// instead of overlapping, so a strict overlap test would cut one object
/// into a front slab and a discarded sliver. Distinct obstacles are far
/// wider apart than this in image space.
const COLUMN_MERGE_GAP: u32 = 2;

/// Groups segments whose column ranges overlap — or abut within
/// [`COLUMN_MERGE_GAP`] columns — in the same or adjacent depth bins.
fn merge_segments(segs: &[Segment]) -> Vec<Region> {
    let mut parent: Vec<usize> = (0..segs.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..segs.len() {
        for j in (i + 1)..segs.len() {
            let (a, b) = (&segs[i], &segs[j]);
            let adjacent = a.bin.abs_diff(b.bin) <= 1;
            let overlap = a.u0 <= b.u1.saturating_add(COLUMN_MERGE_GAP)
                && b.u0 <= a.u1.saturating_add(COLUMN_MERGE_GAP);
            if adjacent && overlap {
                let (ra, rb) = (find(&mut parent, i), find(&mut parent, j));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
    }
    let mut regions: std::collections::BTreeMap<usize, Region> = std::collections::BTreeMap::new();
    for i in 0..segs.len() {
        let root = find(&mut parent, i);
        let s = &segs[i];
        regions
            .entry(root)
            .and_modify(|r| {
                r.u0 = r.u0.min(s.u0);
                r.u1 = r.u1.max(s.u1);
                r.bin0 = r.bin0.min(s.bin);
                r.bin1 = r.bin1.max(s.bin);
            })
            .or_insert(Region { u0: s.u0, u1: s.u1, bin0: s.bin, bin1: s.bin });
    }
    let mut out: Vec<Region> = regions.into_values().collect();
    out.sort_by(|a, b| (a.u0, a.bin0, a.u1, a.bin1).cmp(&(b.u0, b.bin0, b.u1, b.bin1)));
    out
}

/// Index of the q-quantile entry in a sorted list of n items (nearest rank).
fn percentile_idx(n: usize, q: f64) -> usize {
    (((n - 1) as f64) * q).round() as usize
}

/// Histogram detector: finds depth-band regions in the column histogram,
/// recovers each region's vertical pixel extent by scanning its columns,
/// and back-projects the 2D box and observed depth range into a world box.
pub fn u_depth_detect(
    frame: &DepthFrame,
    body_pose: &Pose,
    cfg: &DepthDetectConfig,
) -> Vec<Obstacle3d> {
    let map = build_udepth(frame, cfg);
    let segments = extract_segments(&map, cfg.u_hit_thresh);
    let regions = merge_segments(&segments);
    let cam_in_world = frame.cam.pose_in_world(body_pose);
    let mut out = Vec::new();

    for region in &regions {
        let band_lo = frame.cam.depth_min + region.bin0 as f64 * cfg.u_bin_size
            - cfg.depth_continuity_tol;
        let band_hi = frame.cam.depth_min + (region.bin1 + 1) as f64 * cfg.u_bin_size
            + cfg.depth_continuity_tol;

        // Longest in-band vertical run per column.
        struct ColRun {
            v0: u32,
            v1: u32,
        }
        let mut runs: Vec<(u32, ColRun)> = Vec::new();
        for u in region.u0..=region.u1 {
            let mut best: Option<ColRun> = None;
            let mut cur: Option<ColRun> = None;
            for v in 0..frame.height {
                let in_band = frame
                    .depth_at(u, v)
                    .filter(|d| (band_lo..=band_hi).contains(d));
                match (in_band, cur.as_mut()) {
                    (Some(_), Some(run)) => run.v1 = v,
                    (Some(_), None) => cur = Some(ColRun { v0: v, v1: v }),
                    (None, Some(_)) => {
                        let run = cur.take().unwrap();
                        if best.as_ref().map_or(true, |b| run.v1 - run.v0 > b.v1 - b.v0) {
                            best = Some(run);
                        }
                    }
                    (None, None) => {}
                }
            }
            if let Some(run) = cur.take() {
                if best.as_ref().map_or(true, |b| run.v1 - run.v0 > b.v1 - b.v0) {
                    best = Some(run);
                }
            }
            if let Some(b) = best {
                runs.push((u, b));
            }
        }
        if runs.is_empty() {
            continue;
        }

        // Vertical extent: trimmed across columns so a stray run does not
        // stretch the box.
        let mut tops: Vec<u32> = runs.iter().map(|(_, r)| r.v0).collect();
        let mut bots: Vec<u32> = runs.iter().map(|(_, r)| r.v1).collect();
        tops.sort_unstable();
        bots.sort_unstable();
        let v_min = tops[percentile_idx(tops.len(), 0.10)];
        let v_max = bots[percentile_idx(bots.len(), 0.90)];
        if v_max < v_min {
            continue;
        }

        let width_px = region.u1 - region.u0 + 1;
        let height_px = v_max - v_min + 1;
        if width_px < cfg.min_box_px || height_px < cfg.min_box_px {
            continue;
        }
        // Supporting points: subsampled pixels from the contributing runs,
        // always keeping each run's endpoints so the box spans the full
        // observed extent. A near-ground cutoff mirrors the cloud detector;
        // without it the in-band floor pixels below the object drag the box
        // down to the ground plane.
        let mut points = Vec::new();
        for (u, r) in &runs {
            let v0 = r.v0.max(v_min);
            let v1 = r.v1.min(v_max);
            let mut rows: Vec<u32> = (v0..=v1).step_by(4).collect();
            if rows.last() != Some(&v1) {
                rows.push(v1);
            }
            for v in rows {
                if let Some(d) = frame.depth_at(*u, v) {
                    if (band_lo..=band_hi).contains(&d) {
                        let p_cam = frame.cam.unproject(*u as f64 + 0.5, v as f64 + 0.5, d);
                        let p = cam_in_world.transform_point(&p_cam);
                        if cfg.ground_z.map_or(true, |gz| p.z >= gz) {
                            points.push(p);
                        }
                    }
                }
            }
        }
        if points.len() > 512 {
            let stride = points.len().div_ceil(512);
            points = points.into_iter().step_by(stride).collect();
        }
        if points.is_empty() {
            continue;
        }

        // World box: tight AABB over the observed evidence. Boxing the view
        // frustum corners instead would quote the whole depth band's lateral
        // spread at the far plane and double the box for any object that
        // also shows the camera a receding side face.
        let bbox = match Aabb3::from_points(&points) {
            Ok(b) => b,
            Err(_) => continue,
        };
        out.push(Obstacle3d { bbox, points, source: Source::Visual, stamp: frame.stamp });
    }
    out
}

/// Keeps only boxes the two visual detectors agree on: pairs are matched
/// greedily by descending 3D IoU above the threshold, each side claimed at
/// most once, and every matched pair merges into its minimal enclosing box
/// with the union of supporting points.
pub fn ensemble_match(
    dbscan_dets: &[Obstacle3d],
    udepth_dets: &[Obstacle3d],
    iou_thresh: f64,
) -> Vec<Obstacle3d> {
    let mut pairs = Vec::new();
    for (i, a) in dbscan_dets.iter().enumerate() {
        for (j, b) in udepth_dets.iter().enumerate() {
            let iou = iou3d(&a.bbox, &b.bbox);
            if iou >= iou_thresh && iou > 0.0 {
                pairs.push((i, j, iou));
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap_or(Ordering::Equal)
            .then_with(|| box_cmp(&dbscan_dets[x.0].bbox, &dbscan_dets[y.0].bbox))
            .then_with(|| box_cmp(&udepth_dets[x.1].bbox, &udepth_dets[y.1].bbox))
    });
    let mut a_used = vec![false; dbscan_dets.len()];
    let mut b_used = vec![false; udepth_dets.len()];
    let mut out = Vec::new();
    for (i, j, _) in pairs {
        if a_used[i] || b_used[j] {
            continue;
        }
        a_used[i] = true;
        b_used[j] = true;
        let a = &dbscan_dets[i];
        let b = &udepth_dets[j];
        let bbox = min_enclosing_box(&[a.bbox, b.bbox]).expect("two boxes");
        let mut points = a.points.clone();
        points.extend_from_slice(&b.points);
        out.push(Obstacle3d { bbox, points, source: Source::Visual, stamp: a.stamp });
    }
    out.sort_by(|a, b| box_cmp(&a.bbox, &b.bbox));
    out
}

/// Everything the visual stage produced for one frame; the ensemble list is
/// what flows into fusion.
#[derive(Debug, Clone)]
pub struct DepthDetections {
    pub dbscan: Vec<Obstacle3d>,
    pub udepth: Vec<Obstacle3d>,
    pub ensemble: Vec<Obstacle3d>,
}

/// Runs both visual detectors and their agreement filter on one frame.
pub fn detect_depth(
    frame: &DepthFrame,
    body_pose: &Pose,
    cfg: &DepthDetectConfig,
) -> DepthDetections {
    let dbscan = dbscan_depth_detect(frame, body_pose, cfg);
    let udepth = u_depth_detect(frame, body_pose, cfg);
    let ensemble = ensemble_match(&dbscan, &udepth, cfg.ensemble_iou_thresh);
    if log::log_enabled!(log::Level::Debug) {
        for d in &dbscan {
            log::debug!(
                "depth cloud det ({:.2},{:.2}) sz ({:.2},{:.2},{:.2})",
                d.bbox.center.x, d.bbox.center.y, d.bbox.size[0], d.bbox.size[1], d.bbox.size[2]
            );
        }
        for d in &udepth {
            log::debug!(
                "depth u-det ({:.2},{:.2}) sz ({:.2},{:.2},{:.2})",
                d.bbox.center.x, d.bbox.center.y, d.bbox.size[0], d.bbox.size[1], d.bbox.size[2]
            );
        }
        log::debug!(
            "depth ensemble: {} cloud + {} u-depth -> {} agreed",
            dbscan.len(), udepth.len(), ensemble.len()
        );
    }
    DepthDetections { dbscan, udepth, ensemble }
}

/// Sorts 2D boxes by the deterministic left-edge/top-edge order. Shared by
/// consumers that must not depend on detector output order.
pub fn sort_boxes_2d(boxes: &mut [Box2d]) {
    boxes.sort_by(box2d_cmp);
}
