//! LiDAR detection cascade: range gate, stochastic distance thinning,
//! capped voxel downsampling, optional ground removal, then clustering
//! into axis-aligned obstacle boxes.

use crate::geometry::{to_world, Point3, PointCloud, Pose};
use crate::obstacle::{cluster_obstacles, Obstacle3d, Source};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Tuning for the LiDAR detection cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    /// Hard range gate in meters; points at exactly this range are kept.
    pub max_range: f64,
    /// Scale of the stochastic thinning: keep probability exp(-d / sigma^2).
    pub sigma_dist: f64,
    /// Occupied-voxel budget for the capped downsample.
    pub n_max: usize,
    /// Starting voxel edge for the capped downsample, meters.
    pub voxel_size_init: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// Drop world-frame points below this height before clustering; None
    /// disables ground removal. Without it a visible floor bridges every
    /// obstacle standing on it into one cluster.
    pub ground_z: Option<f64>,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            max_range: 15.0,
            sigma_dist: 10.0,
            n_max: 3000,
            voxel_size_init: 0.1,
            dbscan_eps: 0.35,
            dbscan_min_pts: 6,
            ground_z: Some(0.15),
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_range > 0.0) {
            return Err(format!("max_range must be positive, got {}", self.max_range));
        }
        if !(self.sigma_dist > 0.0) {
            return Err(format!("sigma_dist must be positive, got {}", self.sigma_dist));
        }
        if self.n_max == 0 {
            return Err("n_max must be at least 1".into());
        }
        if !(self.voxel_size_init > 0.0) {
            return Err(format!("voxel_size_init must be positive, got {}", self.voxel_size_init));
        }
        if !(self.dbscan_eps > 0.0) {
            return Err(format!("dbscan_eps must be positive, got {}", self.dbscan_eps));
        }
        if self.dbscan_min_pts == 0 {
            return Err("dbscan_min_pts must be at least 1".into());
        }
        Ok(())
    }
}

/// Keeps points within `max_range` of `robot` (inclusive). Cloud and robot
/// position must be expressed in the same frame.
pub fn range_filter(cloud: &PointCloud, robot: &Point3, max_range: f64) -> PointCloud {
    PointCloud {
        stamp: cloud.stamp,
        frame: cloud.frame,
        points: cloud
            .points
            .iter()
            .filter(|p| p.distance(robot) <= max_range)
            .copied()
            .collect(),
    }
}

/// Stochastic thinning that favors points near the robot: each point at
/// distance d survives with probability exp(-d / sigma_dist^2). Points at
/// d = 0 always survive. Deterministic for a fixed seed.
pub fn distance_filter(
    cloud: &PointCloud,
    robot: &Point3,
    sigma_dist: f64,
    seed: u64,
) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_sigma2 = 1.0 / (sigma_dist * sigma_dist);
    PointCloud {
        stamp: cloud.stamp,
        frame: cloud.frame,
        points: cloud
            .points
            .iter()
            .filter(|p| {
                let keep = (-p.distance(robot) * inv_sigma2).exp();
                rng.gen::<f64>() < keep
            })
            .copied()
            .collect(),
    }
}

fn voxel_key(p: &Point3, inv: f64) -> (i64, i64, i64) {
    (
        (p.x * inv).floor() as i64,
        (p.y * inv).floor() as i64,
        (p.z * inv).floor() as i64,
    )
}

/// One pass of centroid voxel downsampling at a fixed edge length. Output
/// is sorted by voxel key, so it is independent of input point order up to
/// centroid floating-point summation order.
pub fn voxel_downsample(points: &[Point3], voxel: f64) -> Vec<Point3> {
    let inv = 1.0 / voxel;
    let mut cells: HashMap<(i64, i64, i64), (Point3, usize)> = HashMap::new();
    for p in points {
        let e = cells.entry(voxel_key(p, inv)).or_insert((Point3::ORIGIN, 0));
        e.0 = e.0.add(p);
        e.1 += 1;
    }
    let mut keyed: Vec<((i64, i64, i64), Point3)> = cells
        .into_iter()
        .map(|(k, (sum, n))| (k, sum.scale(1.0 / n as f64)))
        .collect();
    keyed.sort_unstable_by_key(|(k, _)| *k);
    keyed.into_iter().map(|(_, c)| c).collect()
}

/// Centroid voxel downsample that respects an occupied-voxel budget: the
/// edge length starts at `voxel_init` and doubles until the occupied count
/// is at most `n_max`. Doubling is the only adaptation, so the result is
/// fully determined by the input.
pub fn voxel_cap_filter(cloud: &PointCloud, n_max: usize, voxel_init: f64) -> PointCloud {
    let mut voxel = voxel_init;
    loop {
        let reps = voxel_downsample(&cloud.points, voxel);
        if reps.len() <= n_max {
            if voxel > voxel_init {
                log::debug!(
                    "voxel cap: edge grew {voxel_init} -> {voxel} for {} points",
                    cloud.points.len()
                );
            }
            return PointCloud { stamp: cloud.stamp, frame: cloud.frame, points: reps };
        }
        voxel *= 2.0;
    }
}

/// Runs the full LiDAR cascade on a sensor-frame scan and returns world-
/// frame obstacles. `seed` drives only the stochastic distance thinning.
pub fn detect_lidar(
    scan: &PointCloud,
    sensor_pose: &Pose,
    cfg: &LidarConfig,
    seed: u64,
) -> Vec<Obstacle3d> {
    let gated = range_filter(scan, &Point3::ORIGIN, cfg.max_range);
    let world = to_world(&gated, sensor_pose);
    let thinned = distance_filter(&world, &sensor_pose.position, cfg.sigma_dist, seed);
    let capped = voxel_cap_filter(&thinned, cfg.n_max, cfg.voxel_size_init);
    let points: Vec<Point3> = match cfg.ground_z {
        Some(gz) => capped.points.into_iter().filter(|p| p.z >= gz).collect(),
        None => capped.points,
    };
    cluster_obstacles(&points, cfg.dbscan_eps, cfg.dbscan_min_pts, Source::Lidar, scan.stamp)
}
