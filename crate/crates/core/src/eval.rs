//! Detection quality evaluation: box matching against ground truth,
//! precision/recall/F1 across an IoU threshold sweep, and report writers.
//!
//! Matching is deterministic for a given input: candidate pairs are
//! ordered by IoU with canonical box-order tie-breaks, and the optimal
//! matcher visits vertices in index order.

use crate::geometry::{box_cmp, iou3d, Aabb3, Point3};
use crate::io::{GtFrame, IoError, ResultFrame};
use crate::tracking::MotionClass;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

/// How predicted boxes are assigned to ground-truth boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Claim pairs in descending IoU order.
    Greedy,
    /// Maximum-cardinality assignment over pairs above the threshold.
    Optimal,
}

/// Outcome of matching one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    /// Matched (prediction index, ground-truth index) pairs.
    pub pairs: Vec<(usize, usize)>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// Center distance of each matched pair, in pair order.
    pub tp_center_dist: Vec<f64>,
}

/// Kuhn's augmenting-path maximum bipartite matching.
/// `adj[u]` lists the right-side vertices prediction `u` may match.
fn max_matching(adj: &[Vec<usize>], n_right: usize) -> Vec<Option<usize>> {
    fn try_augment(
        u: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        match_right: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            let free = match match_right[v] {
                None => true,
                Some(w) => try_augment(w, adj, seen, match_right),
            };
            if free {
                match_right[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut match_right = vec![None; n_right];
    for u in 0..adj.len() {
        let mut seen = vec![false; n_right];
        try_augment(u, adj, &mut seen, &mut match_right);
    }
    match_right
}

/// Matches predictions to ground truth at one IoU threshold.
pub fn match_frame(
    preds: &[Aabb3],
    gts: &[Aabb3],
    iou_thresh: f64,
    strategy: MatchStrategy,
) -> FrameMatch {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    match strategy {
        MatchStrategy::Greedy => {
            let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
            for (pi, p) in preds.iter().enumerate() {
                for (gi, g) in gts.iter().enumerate() {
                    let iou = iou3d(p, g);
                    if iou >= iou_thresh {
                        candidates.push((pi, gi, iou));
                    }
                }
            }
            candidates.sort_by(|a, b| {
                b.2.partial_cmp(&a.2)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| box_cmp(&preds[a.0], &preds[b.0]))
                    .then_with(|| box_cmp(&gts[a.1], &gts[b.1]))
            });
            let mut pred_used = vec![false; preds.len()];
            let mut gt_used = vec![false; gts.len()];
            for (pi, gi, _) in candidates {
                if !pred_used[pi] && !gt_used[gi] {
                    pred_used[pi] = true;
                    gt_used[gi] = true;
                    pairs.push((pi, gi));
                }
            }
        }
        MatchStrategy::Optimal => {
            let adj: Vec<Vec<usize>> = preds
                .iter()
                .map(|p| {
                    gts.iter()
                        .enumerate()
                        .filter(|(_, g)| iou3d(p, g) >= iou_thresh)
                        .map(|(gi, _)| gi)
                        .collect()
                })
                .collect();
            let match_right = max_matching(&adj, gts.len());
            for (gi, m) in match_right.iter().enumerate() {
                if let Some(pi) = m {
                    pairs.push((*pi, gi));
                }
            }
            pairs.sort_unstable();
        }
    }

    let tp = pairs.len();
    let tp_center_dist = pairs
        .iter()
        .map(|&(pi, gi)| preds[pi].center.distance(&gts[gi].center))
        .collect();
    FrameMatch {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        pairs,
        tp_center_dist,
    }
}

/// Aggregated detection metrics at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdMetrics {
    pub iou_thresh: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// tp / (tp + fp); 0 when nothing was predicted.
    pub precision: f64,
    /// tp / (tp + fn); 0 when there is no ground truth.
    pub recall: f64,
    pub f1: f64,
    /// Mean center distance over true positives; absent without any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_pos_err: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Evaluates paired (prediction, ground truth) frames at one threshold.
pub fn evaluate_at(
    frames: &[(Vec<Aabb3>, Vec<Aabb3>)],
    iou_thresh: f64,
    strategy: MatchStrategy,
) -> ThresholdMetrics {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut dist_sum = 0.0;
    for (preds, gts) in frames {
        let m = match_frame(preds, gts, iou_thresh, strategy);
        tp += m.tp as u64;
        fp += m.fp as u64;
        fn_ += m.fn_ as u64;
        dist_sum += m.tp_center_dist.iter().sum::<f64>();
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ThresholdMetrics {
        iou_thresh,
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        mean_pos_err: (tp > 0).then(|| dist_sum / tp as f64),
    }
}

/// Threshold grid from `start` to `end` inclusive, built on integer steps
/// so repeated float addition cannot drift the grid.
pub fn sweep_thresholds(start: f64, end: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && start > 0.0 && end >= start, "bad sweep grid");
    let n = ((end - start) / step).round() as usize;
    (0..=n)
        .map(|i| start + i as f64 * step)
        .filter(|t| *t <= end + 1e-9)
        .collect()
}

/// Evaluates paired frames over a threshold grid.
pub fn evaluate_sweep(
    frames: &[(Vec<Aabb3>, Vec<Aabb3>)],
    thresholds: &[f64],
    strategy: MatchStrategy,
) -> Vec<ThresholdMetrics> {
    thresholds.iter().map(|t| evaluate_at(frames, *t, strategy)).collect()
}

/// Stamp tolerance when pairing result frames with ground-truth frames.
pub const STAMP_PAIR_TOL: f64 = 1e-6;

/// Pairs result frames with ground-truth frames by stamp. Every result
/// frame must find exactly one ground-truth frame; extra ground-truth
/// frames (for example when the pipeline skipped bad input) are allowed
/// and reported as the second return value.
pub fn pair_frames<'a>(
    results: &'a [ResultFrame],
    gt: &'a [GtFrame],
) -> Result<(Vec<(&'a ResultFrame, &'a GtFrame)>, usize), String> {
    let mut pairs = Vec::with_capacity(results.len());
    let mut gi = 0usize;
    for r in results {
        while gi < gt.len() && gt[gi].stamp < r.stamp - STAMP_PAIR_TOL {
            gi += 1;
        }
        if gi >= gt.len() || (gt[gi].stamp - r.stamp).abs() > STAMP_PAIR_TOL {
            return Err(format!("no ground-truth frame at stamp {}", r.stamp));
        }
        pairs.push((r, &gt[gi]));
        gi += 1;
    }
    let unpaired_gt = gt.len() - pairs.len();
    Ok((pairs, unpaired_gt))
}

fn result_box(center: &[f64; 3], size: &[f64; 3]) -> Option<Aabb3> {
    Aabb3::new(Point3::new(center[0], center[1], center[2]), *size).ok()
}

/// Boxes of the obstacles a result frame classified as dynamic.
pub fn dynamic_pred_boxes(frame: &ResultFrame) -> Vec<Aabb3> {
    frame
        .obstacles
        .iter()
        .filter(|o| o.motion_class == MotionClass::Dynamic)
        .filter_map(|o| result_box(&o.center, &o.size))
        .collect()
}

/// All predicted boxes of a result frame, regardless of motion class.
pub fn all_pred_boxes(frame: &ResultFrame) -> Vec<Aabb3> {
    frame.obstacles.iter().filter_map(|o| result_box(&o.center, &o.size)).collect()
}

/// Ground-truth boxes flagged dynamic.
pub fn dynamic_gt_boxes(frame: &GtFrame) -> Vec<Aabb3> {
    frame
        .boxes
        .iter()
        .filter(|b| b.is_dynamic)
        .filter_map(|b| result_box(&b.center, &b.size))
        .collect()
}

/// Writes one `ThresholdMetrics` JSON object per line.
pub fn write_report_jsonl(path: &Path, metrics: &[ThresholdMetrics]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    for m in metrics {
        let line = serde_json::to_string(m)
            .map_err(|e| IoError::format(path, format!("serialize failed: {e}")))?;
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| IoError::io(path, e))
}

/// Writes the sweep as a CSV table.
pub fn write_metrics_csv(path: &Path, metrics: &[ThresholdMetrics]) -> Result<(), IoError> {
    let mut buf = Vec::new();
    writeln!(buf, "iou_thresh,tp,fp,fn,precision,recall,f1,mean_pos_err")
        .expect("writing to Vec cannot fail");
    for m in metrics {
        let err = m.mean_pos_err.map_or(String::new(), |e| format!("{e}"));
        writeln!(
            buf,
            "{},{},{},{},{},{},{},{}",
            m.iou_thresh, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1, err
        )
        .expect("writing to Vec cannot fail");
    }
    std::fs::write(path, buf).map_err(|e| IoError::io(path, e))
}
