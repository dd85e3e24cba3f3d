//! End-to-end replay pipeline: per frame, run range-sensor detection and
//! visual depth detection, fuse the two box sets, and feed the tracker.
//! The pipeline is deterministic for a given dataset, configuration, and
//! seed; stage latencies are collected separately and never written into
//! result files.

use crate::depth::{detect_depth, DepthDetectConfig};
use crate::fusion::{fuse, FusionConfig, FusionMode};
use crate::geometry::{Box2d, CameraModel};
use crate::io::{Dataset, FrameBundle, IoError, ResultFrame, ResultObstacle};
use crate::lidar::{detect_lidar, LidarConfig};
use crate::obstacle::Obstacle3d;
use crate::synth::derive_seed;
use crate::tracking::{TrackConfig, TrackedObstacle, Tracker};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

/// Which sensor streams the pipeline consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Fuse laser and visual detections (the normal configuration).
    Full,
    /// Laser only; depth images and 2D detections are ignored entirely.
    LidarOnly,
    /// Depth camera only; laser scans are ignored.
    VisualOnly,
}

/// Complete pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lidar: LidarConfig,
    pub depth: DepthDetectConfig,
    pub fusion: FusionConfig,
    pub tracking: TrackConfig,
    /// Base seed for the stochastic thinning stage; each frame derives its
    /// own stream from it.
    pub seed: u64,
    pub mode: PipelineMode,
    /// Skip frames whose files are missing or malformed instead of
    /// aborting the run.
    pub skip_bad_frames: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lidar: LidarConfig::default(),
            depth: DepthDetectConfig::default(),
            fusion: FusionConfig::default(),
            tracking: TrackConfig::default(),
            seed: 0,
            mode: PipelineMode::Full,
            skip_bad_frames: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.lidar.validate()?;
        self.depth.validate()?;
        self.fusion.validate()?;
        self.tracking.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// RNG stream tag for the thinning stage, distinct from the dataset
/// renderer's streams so a shared base seed cannot correlate them.
const STREAM_THINNING: u64 = 101;

/// Seed the LiDAR thinning stage uses for `frame_index` under `base` —
/// the same derivation `Pipeline` applies, exposed so the stage can be
/// run in isolation and still reproduce a full run bit for bit.
pub fn thinning_seed(base: u64, frame_index: u64) -> u64 {
    derive_seed(base, frame_index, STREAM_THINNING)
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    sum: f64,
    sumsq: f64,
    n: u64,
}

impl Acc {
    fn push(&mut self, seconds: f64) {
        let ms = seconds * 1e3;
        self.sum += ms;
        self.sumsq += ms * ms;
        self.n += 1;
    }

    fn stats(&self) -> StageStats {
        if self.n == 0 {
            return StageStats { mean_ms: 0.0, std_ms: 0.0, count: 0 };
        }
        let mean = self.sum / self.n as f64;
        let var = (self.sumsq / self.n as f64 - mean * mean).max(0.0);
        StageStats { mean_ms: mean, std_ms: var.sqrt(), count: self.n }
    }
}

/// Latency summary of one pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub count: u64,
}

/// Per-stage latency accumulators for a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunTimings {
    load: Acc,
    lidar: Acc,
    depth: Acc,
    fuse: Acc,
    track: Acc,
}

impl RunTimings {
    pub fn summary(&self) -> Vec<(&'static str, StageStats)> {
        vec![
            ("load", self.load.stats()),
            ("lidar", self.lidar.stats()),
            ("depth", self.depth.stats()),
            ("fuse", self.fuse.stats()),
            ("track", self.track.stats()),
        ]
    }

    /// Human-readable latency table (for terminal output only).
    pub fn table_string(&self) -> String {
        let mut out = String::from("stage      mean_ms    std_ms   frames\n");
        for (name, s) in self.summary() {
            out.push_str(&format!("{name:<8} {:>9.3} {:>9.3} {:>8}\n", s.mean_ms, s.std_ms, s.count));
        }
        out
    }
}

/// What one frame produced.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub stamp: f64,
    pub tracked: Vec<TrackedObstacle>,
    pub notice: Option<String>,
}

/// Streaming pipeline state across frames.
pub struct Pipeline {
    cfg: PipelineConfig,
    cam: Option<CameraModel>,
    tracker: Tracker,
    timings: RunTimings,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, cam: Option<CameraModel>) -> Result<Self, String> {
        cfg.validate()?;
        let tracker = Tracker::new(cfg.tracking.clone())?;
        Ok(Pipeline { cfg, cam, tracker, timings: RunTimings::default() })
    }

    pub fn timings(&self) -> &RunTimings {
        &self.timings
    }

    /// Processes one frame. `frame_index` is the dataset index; it keys
    /// the per-frame RNG stream so a rerun (even one that skips different
    /// frames) draws identical noise per frame.
    pub fn process_frame(&mut self, frame: &FrameBundle, frame_index: u64) -> FrameOutcome {
        let mode = self.cfg.mode;

        let t = Instant::now();
        let lidar_obstacles: Option<Vec<Obstacle3d>> = if mode == PipelineMode::VisualOnly {
            None
        } else {
            let seed = thinning_seed(self.cfg.seed, frame_index);
            Some(detect_lidar(&frame.cloud, &frame.odom, &self.cfg.lidar, seed))
        };
        self.timings.lidar.push(t.elapsed().as_secs_f64());

        let t = Instant::now();
        let visual_obstacles: Option<Vec<Obstacle3d>> = if mode == PipelineMode::LidarOnly {
            None
        } else {
            frame
                .depth
                .as_ref()
                .map(|d| detect_depth(d, &frame.odom, &self.cfg.depth).ensemble)
        };
        self.timings.depth.push(t.elapsed().as_secs_f64());

        // The laser-only configuration ignores image evidence everywhere,
        // including the motion classifier.
        let (visual_2d, cam): (&[Box2d], Option<&CameraModel>) = if mode == PipelineMode::LidarOnly {
            (&[], None)
        } else {
            (&frame.det2d, self.cam.as_ref())
        };

        let t = Instant::now();
        let fused = fuse(
            lidar_obstacles.as_deref(),
            visual_obstacles.as_deref(),
            visual_2d,
            cam,
            &frame.odom,
            &self.cfg.fusion,
        );
        self.timings.fuse.push(t.elapsed().as_secs_f64());

        let t = Instant::now();
        let tracked = self.tracker.step(&fused.obstacles, visual_2d, cam, &frame.odom);
        self.timings.track.push(t.elapsed().as_secs_f64());

        // A notice marks unexpected degradation; running in a reduced mode
        // on purpose is not one.
        let notice = match (mode, fused.mode) {
            (PipelineMode::Full, FusionMode::Full) => None,
            (PipelineMode::Full, _) => fused.notice,
            _ => None,
        };

        FrameOutcome { stamp: frame.stamp, tracked, notice }
    }
}

/// Everything a dataset run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub frames: Vec<ResultFrame>,
    /// (frame index, reason) for frames skipped under `skip_bad_frames`.
    pub skipped: Vec<(usize, String)>,
    pub timings: RunTimings,
}

/// Replays a dataset directory through the pipeline.
pub fn run_dataset(root: &Path, cfg: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    let ds = Dataset::open(root)?;
    let mut pipeline = Pipeline::new(cfg.clone(), ds.camera.clone()).map_err(PipelineError::Config)?;
    let mut frames = Vec::with_capacity(ds.len());
    let mut skipped = Vec::new();
    for i in 0..ds.len() {
        let t = Instant::now();
        let bundle = match ds.load_frame(i) {
            Ok(b) => b,
            Err(e) if cfg.skip_bad_frames => {
                log::warn!("skipping frame {i}: {e}");
                skipped.push((i, e.to_string()));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        pipeline.timings.load.push(t.elapsed().as_secs_f64());

        let outcome = pipeline.process_frame(&bundle, i as u64);
        frames.push(ResultFrame {
            stamp: outcome.stamp,
            notice: outcome.notice,
            obstacles: outcome.tracked.iter().map(ResultObstacle::from_tracked).collect(),
        });
    }
    let timings = pipeline.timings;
    Ok(RunOutput { frames, skipped, timings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obstacle::Source;
    use crate::synth::{mini_scene, write_dataset};
    use std::path::PathBuf;
    use std::sync::OnceLock;
    use tempfile::TempDir;

    /// The mini dataset is rendered once and shared by every test here.
    fn mini_dataset() -> &'static PathBuf {
        static DATASET: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
        let (_dir, path) = DATASET.get_or_init(|| {
            let dir = TempDir::new().unwrap();
            let root = dir.path().join("mini");
            write_dataset(&mini_scene(), &root, 11).unwrap();
            (dir, root)
        });
        path
    }

    #[test]
    fn full_run_tracks_walker_and_pillar() {
        let out = run_dataset(mini_dataset(), &PipelineConfig::default()).unwrap();
        assert_eq!(out.frames.len(), 20);
        assert!(out.skipped.is_empty());
        for f in &out.frames {
            assert!(f.notice.is_none(), "unexpected notice {:?}", f.notice);
        }
        // By the last frame both scene objects are tracked.
        let last = out.frames.last().unwrap();
        assert!(last.obstacles.len() >= 2, "got {:?}", last.obstacles);
        // Walker and pillar centers both appear among tracked obstacles.
        let near = |c: [f64; 3], x: f64, y: f64| (c[0] - x).abs() < 0.5 && (c[1] - y).abs() < 0.5;
        assert!(last.obstacles.iter().any(|o| near(o.center, 2.5, 1.2)), "pillar missing");
        let gt = crate::io::read_gt(&mini_dataset().join("gt.jsonl")).unwrap();
        let walker = &gt.last().unwrap().boxes[0];
        assert!(
            last.obstacles.iter().any(|o| near(o.center, walker.center[0], walker.center[1])),
            "walker missing near {:?} in {:?}",
            walker.center,
            last.obstacles
        );
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = PipelineConfig::default();
        let a = run_dataset(mini_dataset(), &cfg).unwrap();
        let b = run_dataset(mini_dataset(), &cfg).unwrap();
        let ser = |out: &RunOutput| serde_json::to_string(&out.frames).unwrap();
        assert_eq!(ser(&a), ser(&b));
    }

    #[test]
    fn lidar_only_uses_no_visual_evidence() {
        let cfg = PipelineConfig { mode: PipelineMode::LidarOnly, ..PipelineConfig::default() };
        let out = run_dataset(mini_dataset(), &cfg).unwrap();
        assert_eq!(out.frames.len(), 20);
        for f in &out.frames {
            assert!(f.notice.is_none());
            for o in &f.obstacles {
                assert_eq!(o.source, Source::Lidar, "visual-sourced obstacle in laser-only run");
            }
        }
        assert!(out.frames.iter().any(|f| !f.obstacles.is_empty()));
    }

    #[test]
    fn visual_only_uses_no_laser_evidence() {
        let cfg = PipelineConfig { mode: PipelineMode::VisualOnly, ..PipelineConfig::default() };
        let out = run_dataset(mini_dataset(), &cfg).unwrap();
        for f in &out.frames {
            for o in &f.obstacles {
                assert_eq!(o.source, Source::Visual, "laser-sourced obstacle in visual-only run");
            }
        }
        assert!(out.frames.iter().any(|f| !f.obstacles.is_empty()));
    }

    #[test]
    fn bad_frame_aborts_or_skips_per_config() {
        // Copy the dataset and truncate one scan file.
        let src = mini_dataset();
        let dir = TempDir::new().unwrap();
        let root = dir.path().join("broken");
        copy_tree(src, &root);
        let victim = root.join("lidar/000007.pcd");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();

        let strict = PipelineConfig::default();
        let err = run_dataset(&root, &strict).unwrap_err();
        assert!(err.to_string().contains("000007"), "{err}");

        let lenient = PipelineConfig { skip_bad_frames: true, ..PipelineConfig::default() };
        let out = run_dataset(&root, &lenient).unwrap();
        assert_eq!(out.frames.len(), 19);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].0, 7);
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let err = serde_json::from_str::<PipelineConfig>("{\"bogus\": 1}");
        assert!(err.is_err());
        let ok = serde_json::from_str::<PipelineConfig>("{\"seed\": 5, \"mode\": \"lidar_only\"}").unwrap();
        assert_eq!(ok.seed, 5);
        assert_eq!(ok.mode, PipelineMode::LidarOnly);
        // Nested sections accept partial overrides too.
        let nested: PipelineConfig =
            serde_json::from_str("{\"lidar\": {\"max_range\": 12.0}}").unwrap();
        assert_eq!(nested.lidar.max_range, 12.0);
        assert_eq!(nested.lidar.n_max, LidarConfig::default().n_max);
    }

    #[test]
    fn timings_cover_all_frames() {
        let out = run_dataset(mini_dataset(), &PipelineConfig::default()).unwrap();
        for (name, s) in out.timings.summary() {
            assert_eq!(s.count, 20, "stage {name} missing samples");
            assert!(s.mean_ms >= 0.0);
        }
        let table = out.timings.table_string();
        assert!(table.contains("track"), "{table}");
    }

    fn copy_tree(src: &Path, dst: &Path) {
        std::fs::create_dir_all(dst).unwrap();
        for entry in std::fs::read_dir(src).unwrap() {
            let entry = entry.unwrap();
            let to = dst.join(entry.file_name());
            if entry.file_type().unwrap().is_dir() {
                copy_tree(&entry.path(), &to);
            } else {
                std::fs::copy(entry.path(), &to).unwrap();
            }
        }
    }
}
