//! CLEAR-MOT evaluation: per-frame correspondence with persistence,
//! optimal IOU assignment, event counting and derived scores.

use crate::geometry::{iou, BBox};
use crate::tracker::Track;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty ground truth: MOTA denominator undefined")]
    EmptyGroundTruth,
}

/// Fraction of its frames a ground-truth trajectory must be matched to
/// count as mostly tracked.
pub const MT_THRESHOLD: f64 = 0.8;
/// Below this coverage a trajectory counts as mostly lost.
pub const ML_THRESHOLD: f64 = 0.2;

/// Event counts and derived CLEAR-MOT scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mota: f64,
    /// Mean IOU of matched pairs.
    pub motp: f64,
    pub mostly_tracked: f64,
    pub mostly_lost: f64,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub fragmentations: usize,
    /// Total ground-truth boxes (the MOTA denominator).
    pub gt_boxes: usize,
    /// Association throughput; filled in by the caller, 0 when unmeasured.
    pub hz: f64,
    pub iou_threshold: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "MOTA,MOTP,MT,ML,FP,FN,IDSW,Frag,Hz";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4},{},{},{},{},{:.1}",
            self.mota,
            self.motp,
            self.mostly_tracked,
            self.mostly_lost,
            self.false_positives,
            self.false_negatives,
            self.id_switches,
            self.fragmentations,
            self.hz
        )
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "# iou_threshold={}\n# mt_cutoff={MT_THRESHOLD}\n# ml_cutoff={ML_THRESHOLD}\n\
             MOTA={:.4}\nMOTP={:.4}\nMT={:.4}\nML={:.4}\nFP={}\nFN={}\nIDSW={}\nFrag={}\nGT={}\nHz={:.1}\n",
            self.iou_threshold,
            self.mota,
            self.motp,
            self.mostly_tracked,
            self.mostly_lost,
            self.false_positives,
            self.false_negatives,
            self.id_switches,
            self.fragmentations,
            self.gt_boxes,
            self.hz
        )
    }
}

const FORBIDDEN: f64 = 1e9;

/// Exact min-cost one-to-one assignment (Jonker-style Hungarian with
/// potentials). `cost[r][c]`, rows need not equal columns. Returns the
/// column assigned to each row, `None` when a row stays unassigned.
pub fn hungarian_min(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        // transpose, solve, invert
        let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
        let by_col = hungarian_min(&t);
        let mut out = vec![None; rows];
        for (c, r) in by_col.iter().enumerate() {
            if let Some(r) = r {
                out[*r] = Some(c);
            }
        }
        return out;
    }

    // potentials over 1-indexed rows/cols; way[j] backtracks augmenting paths
    let n = rows;
    let m = cols;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut assigned_row = vec![0usize; m + 1]; // row occupying column j (0 = free)
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut out = vec![None; rows];
    for j in 1..=m {
        let r = assigned_row[j];
        if r != 0 && cost[r - 1][j - 1] < FORBIDDEN / 2.0 {
            out[r - 1] = Some(j - 1);
        }
    }
    out
}

fn tracks_by_frame(hyp: &[Track]) -> BTreeMap<usize, Vec<(u64, BBox)>> {
    let mut out: BTreeMap<usize, Vec<(u64, BBox)>> = BTreeMap::new();
    for t in hyp {
        for &(frame, bbox) in &t.entries {
            out.entry(frame).or_default().push((t.id, bbox));
        }
    }
    for boxes in out.values_mut() {
        boxes.sort_by_key(|&(id, _)| id);
    }
    out
}

/// Run the CLEAR-MOT procedure.
///
/// Correspondences from the previous frame persist while both sides are
/// present and still overlap at least `iou_threshold`; remaining pairs are
/// resolved by exact assignment maximizing total IOU among pairs at or
/// above the threshold.
pub fn evaluate(
    gt: &BTreeMap<usize, Vec<(u64, BBox)>>,
    hyp: &[Track],
    iou_threshold: f64,
) -> Result<MetricsReport, MetricsError> {
    let gt_boxes: usize = gt.values().map(Vec::len).sum();
    if gt_boxes == 0 {
        return Err(MetricsError::EmptyGroundTruth);
    }
    let hyp_frames = tracks_by_frame(hyp);

    let frames: BTreeSet<usize> = gt.keys().chain(hyp_frames.keys()).copied().collect();

    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut idsw = 0usize;
    let mut motp_sum = 0.0f64;
    let mut matched_total = 0usize;

    // last hypothesis id ever matched to each gt identity
    let mut last_hyp: HashMap<u64, u64> = HashMap::new();
    // matches alive in the previous frame
    let mut prev_matches: HashMap<u64, u64> = HashMap::new();
    // per gt identity: (present frames, matched frames, fragment bookkeeping)
    #[derive(Default)]
    struct TrajStats {
        present: usize,
        matched: usize,
        was_matched: bool,
        in_gap: bool,
        frags: usize,
    }
    let mut traj: BTreeMap<u64, TrajStats> = BTreeMap::new();

    let empty_gt: Vec<(u64, BBox)> = Vec::new();
    let empty_hyp: Vec<(u64, BBox)> = Vec::new();
    for &frame in &frames {
        let gt_now = gt
            .get(&frame)
            .map(|v| {
                let mut v: Vec<(u64, BBox)> = v.clone();
                v.sort_by_key(|&(id, _)| id);
                v
            })
            .unwrap_or_else(|| empty_gt.clone());
        let hyp_now = hyp_frames.get(&frame).unwrap_or(&empty_hyp);

        let mut gt_used = vec![false; gt_now.len()];
        let mut hyp_used = vec![false; hyp_now.len()];
        let mut frame_matches: HashMap<u64, u64> = HashMap::new();

        // persistence pass
        for (gi, &(gid, gbox)) in gt_now.iter().enumerate() {
            if let Some(&hid) = prev_matches.get(&gid) {
                if let Some(hi) = hyp_now.iter().position(|&(id, _)| id == hid) {
                    if !hyp_used[hi] {
                        let overlap = iou(&gbox, &hyp_now[hi].1);
                        if overlap >= iou_threshold {
                            gt_used[gi] = true;
                            hyp_used[hi] = true;
                            frame_matches.insert(gid, hid);
                            motp_sum += overlap;
                            matched_total += 1;
                        }
                    }
                }
            }
        }

        // optimal assignment for the rest
        let free_gt: Vec<usize> = (0..gt_now.len()).filter(|&i| !gt_used[i]).collect();
        let free_hyp: Vec<usize> = (0..hyp_now.len()).filter(|&i| !hyp_used[i]).collect();
        if !free_gt.is_empty() && !free_hyp.is_empty() {
            let cost: Vec<Vec<f64>> = free_gt
                .iter()
                .map(|&gi| {
                    free_hyp
                        .iter()
                        .map(|&hi| {
                            let o = iou(&gt_now[gi].1, &hyp_now[hi].1);
                            if o >= iou_threshold {
                                1.0 - o
                            } else {
                                FORBIDDEN
                            }
                        })
                        .collect()
                })
                .collect();
            for (row, col) in hungarian_min(&cost).into_iter().enumerate() {
                if let Some(col) = col {
                    let gi = free_gt[row];
                    let hi = free_hyp[col];
                    let (gid, gbox) = gt_now[gi];
                    let (hid, hbox) = hyp_now[hi];
                    gt_used[gi] = true;
                    hyp_used[hi] = true;
                    frame_matches.insert(gid, hid);
                    motp_sum += iou(&gbox, &hbox);
                    matched_total += 1;
                }
            }
        }

        fp += hyp_used.iter().filter(|&&u| !u).count();
        fn_ += gt_used.iter().filter(|&&u| !u).count();

        // identity switches and trajectory coverage
        for &(gid, _) in gt_now.iter() {
            let stats = traj.entry(gid).or_default();
            stats.present += 1;
            match frame_matches.get(&gid) {
                Some(&hid) => {
                    stats.matched += 1;
                    if let Some(&prev) = last_hyp.get(&gid) {
                        if prev != hid {
                            idsw += 1;
                        }
                    }
                    last_hyp.insert(gid, hid);
                    if stats.in_gap {
                        stats.frags += 1;
                        stats.in_gap = false;
                    }
                    stats.was_matched = true;
                }
                None => {
                    if stats.was_matched {
                        stats.in_gap = true;
                    }
                }
            }
        }
        prev_matches = frame_matches;
    }

    let n_traj = traj.len();
    let mut mt = 0usize;
    let mut ml = 0usize;
    let mut frag = 0usize;
    for stats in traj.values() {
        let coverage = stats.matched as f64 / stats.present as f64;
        if coverage >= MT_THRESHOLD {
            mt += 1;
        } else if coverage <= ML_THRESHOLD {
            ml += 1;
        }
        frag += stats.frags;
    }

    Ok(MetricsReport {
        mota: 1.0 - (fp + fn_ + idsw) as f64 / gt_boxes as f64,
        motp: if matched_total > 0 { motp_sum / matched_total as f64 } else { 0.0 },
        mostly_tracked: mt as f64 / n_traj as f64,
        mostly_lost: ml as f64 / n_traj as f64,
        false_positives: fp,
        false_negatives: fn_,
        id_switches: idsw,
        fragmentations: frag,
        gt_boxes,
        hz: 0.0,
        iou_threshold,
    })
}

/// Frames per second over a list of per-frame timings.
pub fn throughput(frame_seconds: &[f64]) -> f64 {
    let total: f64 = frame_seconds.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    frame_seconds.len() as f64 / total
}
