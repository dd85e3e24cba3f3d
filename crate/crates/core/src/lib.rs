//! Offline multi-sensor dynamic obstacle detection and tracking.
//!
//! The crate replays recorded (or synthesized) robot sensor logs — laser
//! scans, depth images, optional 2D detections, and odometry — through a
//! detection and tracking engine:
//!
//! 1. [`lidar`] clusters each laser scan into world-frame boxes after
//!    range gating, stochastic distance thinning, capped voxel
//!    downsampling, and ground removal.
//! 2. [`depth`] detects obstacles in the depth image twice — once by
//!    clustering the back-projected cloud, once from column/depth
//!    histogram regions — and keeps the boxes both detectors agree on.
//! 3. [`fusion`] merges the laser and visual box sets, splitting merged
//!    clusters that image-space detections show to be several objects.
//! 4. [`tracking`] associates boxes across frames, smooths each track
//!    with a constant-acceleration Kalman filter, and labels tracks
//!    dynamic or static from image and motion evidence.
//!
//! [`synth`] renders fully deterministic synthetic datasets for testing,
//! [`eval`] scores results against ground truth, [`io`] defines the
//! dataset formats, and [`pipeline`] ties the stages into a replay run.
//!
//! Every stage is deterministic given its configuration and seed: ordered
//! outputs, per-frame derived RNG streams, and no dependence on hash-map
//! iteration order.

pub mod dbscan;
pub mod depth;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod lidar;
pub mod obstacle;
pub mod pipeline;
pub mod synth;
pub mod tracking;
