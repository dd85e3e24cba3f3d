//! Density-based clustering over 3D points with a uniform-grid neighbor
//! index. Semantics are the classic formulation: a point is core when its
//! closed eps-ball (itself included) holds at least `min_pts` points;
//! clusters are the connected components of core points plus any border
//! points claimed during expansion.

use crate::geometry::Point3;
use std::collections::HashMap;
use std::collections::VecDeque;

const UNVISITED: i32 = -2;
const NOISE: i32 = -1;

/// Grid index with cell edge = eps, so all neighbors of a point lie in the
/// 27 cells around its own.
struct CellGrid {
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    inv_eps: f64,
}

impl CellGrid {
    fn build(points: &[Point3], eps: f64) -> Self {
        let inv_eps = 1.0 / eps;
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, inv_eps)).or_default().push(i as u32);
        }
        CellGrid { cells, inv_eps }
    }

    fn key(p: &Point3, inv_eps: f64) -> (i64, i64, i64) {
        (
            (p.x * inv_eps).floor() as i64,
            (p.y * inv_eps).floor() as i64,
            (p.z * inv_eps).floor() as i64,
        )
    }

    /// Indices within the closed eps-ball of `points[i]`, self included.
    fn neighbors(&self, points: &[Point3], i: usize, eps2: f64, out: &mut Vec<u32>) {
        out.clear();
        let p = &points[i];
        let (kx, ky, kz) = Self::key(p, self.inv_eps);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &j in bucket {
                            let q = &points[j as usize];
                            let d = p.sub(q);
                            if d.dot(&d) <= eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Clusters `points` and returns each cluster as ascending point indices;
/// noise points appear in no cluster. Distances compare inclusively
/// (`dist <= eps`). Output is deterministic for a given input order, and
/// core/noise assignment does not depend on that order at all.
pub fn dbscan(points: &[Point3], eps: f64, min_pts: usize) -> Vec<Vec<usize>> {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    if points.is_empty() {
        return Vec::new();
    }
    let grid = CellGrid::build(points, eps);
    let eps2 = eps * eps;
    let mut label = vec![UNVISITED; points.len()];
    let mut next_cluster: i32 = 0;
    let mut hood = Vec::new();
    let mut queue: VecDeque<u32> = VecDeque::new();

    for i in 0..points.len() {
        if label[i] != UNVISITED {
            continue;
        }
        grid.neighbors(points, i, eps2, &mut hood);
        if hood.len() < min_pts {
            label[i] = NOISE;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        label[i] = cluster;
        queue.clear();
        queue.extend(hood.iter().copied());
        while let Some(j) = queue.pop_front() {
            let j = j as usize;
            if label[j] == NOISE {
                label[j] = cluster; // border point claimed by this cluster
                continue;
            }
            if label[j] != UNVISITED {
                continue;
            }
            label[j] = cluster;
            grid.neighbors(points, j, eps2, &mut hood);
            if hood.len() >= min_pts {
                queue.extend(hood.iter().copied());
            }
        }
    }

    let mut clusters = vec![Vec::new(); next_cluster as usize];
    for (i, &l) in label.iter().enumerate() {
        if l >= 0 {
            clusters[l as usize].push(i);
        }
    }
    clusters
}
