//! Detected obstacle representation shared by the LiDAR, visual, and fused
//! stages: a world-frame box plus the cluster points that produced it.

use crate::dbscan::dbscan;
use crate::geometry::{Aabb3, GeometryError, Point3, MIN_BOX_EXTENT};
use serde::{Deserialize, Serialize};

/// Which stage produced an obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Lidar,
    Visual,
    Fused,
}

/// A detected obstacle: tight world-frame box, the supporting cluster
/// points, the producing stage, and the frame timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle3d {
    pub bbox: Aabb3,
    pub points: Vec<Point3>,
    pub source: Source,
    pub stamp: f64,
}

impl Obstacle3d {
    /// Builds an obstacle from a nonempty cluster; the box is the padded
    /// tight fit around the points, so every point lies inside it.
    pub fn from_cluster(
        points: Vec<Point3>,
        source: Source,
        stamp: f64,
    ) -> Result<Self, GeometryError> {
        let bbox = Aabb3::from_points(&points)?;
        Ok(Obstacle3d { bbox, points, source, stamp })
    }

    /// True when all points sit inside the box within the padding slack.
    pub fn is_consistent(&self) -> bool {
        !self.points.is_empty()
            && self
                .points
                .iter()
                .all(|p| self.bbox.contains_point(p, MIN_BOX_EXTENT))
    }
}

/// Clusters a world-frame point set and emits one obstacle per cluster.
/// Points labeled noise produce nothing. Both the LiDAR detector and the
/// depth-cloud detector run through this exact path.
pub fn cluster_obstacles(
    points: &[Point3],
    eps: f64,
    min_pts: usize,
    source: Source,
    stamp: f64,
) -> Vec<Obstacle3d> {
    dbscan(points, eps, min_pts)
        .into_iter()
        .map(|idxs| {
            let cluster: Vec<Point3> = idxs.iter().map(|&i| points[i]).collect();
            Obstacle3d::from_cluster(cluster, source, stamp)
                .expect("cluster is nonempty and finite")
        })
        .collect()
}
