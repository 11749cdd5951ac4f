//! Three-step association: forward field prediction, backward field
//! prediction, then appearance rescue. Tracks are born from leftover
//! detections and terminated after `max_age` unmatched frames.

use crate::faf::{crop_descriptor_masked, AppearanceDescriptor, CosineSimilarity, FeatureMap, SimilarityModel};
use crate::fmf::{predict_box_masked, Aggregator, Direction, MotionField};
use crate::geometry::{iou, BBox};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("bundle grid mismatch: field {0}x{1}, feature maps {2}x{3} / {4}x{5}")]
    GridMismatch(usize, usize, usize, usize, usize, usize),
    #[error(transparent)]
    Field(#[from] crate::fmf::FieldError),
    #[error(transparent)]
    Appearance(#[from] crate::faf::AppearanceError),
}

/// One detector output box for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackState {
    Active,
    Terminated,
}

/// One identity: a time-ordered box sequence with lifecycle state.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub entries: Vec<(usize, BBox)>,
    pub state: TrackState,
    pub birth_frame: usize,
    pub last_frame: usize,
    misses: usize,
}

impl Track {
    fn new(id: u64, frame: usize, bbox: BBox) -> Self {
        Self {
            id,
            entries: vec![(frame, bbox)],
            state: TrackState::Active,
            birth_frame: frame,
            last_frame: frame,
            misses: 0,
        }
    }

    /// Rebuild a track from stored entries (used by the result parsers).
    pub fn from_entries(
        id: u64,
        entries: Vec<(usize, BBox)>,
        state: TrackState,
        birth_frame: usize,
        last_frame: usize,
    ) -> Self {
        Self { id, entries, state, birth_frame, last_frame, misses: 0 }
    }

    pub fn last_box(&self) -> BBox {
        self.entries.last().expect("track always has at least one entry").1
    }

    fn push(&mut self, frame: usize, bbox: BBox) {
        debug_assert!(frame > self.last_frame);
        self.entries.push((frame, bbox));
        self.last_frame = frame;
        self.misses = 0;
    }
}

/// Which ablation of the association pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrackerMode {
    FmfOnly,
    FafOnly,
    #[default]
    FmfFaf,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackerConfig {
    /// IOU threshold for field-predicted candidates.
    pub tau1: f64,
    /// Appearance similarity threshold.
    pub tau2: f64,
    pub aggregator: Aggregator,
    /// Frames a track survives without a match before termination.
    pub max_age: usize,
    pub mode: TrackerMode,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            tau1: 0.45,
            tau2: 0.5,
            aggregator: Aggregator::Median,
            max_age: 1,
            mode: TrackerMode::FmfFaf,
        }
    }
}

/// Per-frame inputs: detections of the latter frame plus the model outputs
/// (motion field between the two frames, appearance maps of both frames).
///
/// `feature_scale` maps image coordinates onto the feature-map grid
/// (a feature map downsampled by `s` has `feature_scale = s`).
#[derive(Debug, Clone)]
pub struct FrameBundle {
    pub frame_index: usize,
    pub detections: Vec<Detection>,
    pub field: MotionField,
    pub fmap_prev: FeatureMap,
    pub fmap_next: FeatureMap,
    pub feature_scale: f64,
}

/// Which rule matched a track to a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchBranch {
    /// Step 1, exactly one IOU candidate.
    ForwardSingle,
    /// Step 1, ambiguity resolved by appearance.
    ForwardAppearance,
    /// Step 1, appearance below threshold, top IOU candidate taken.
    ForwardTopIou,
    /// Step 2, exactly one IOU candidate.
    BackwardSingle,
    /// Step 2, ambiguity resolved by appearance.
    BackwardAppearance,
    /// Step 2, appearance below threshold, top IOU candidate taken.
    BackwardTopIou,
    /// Step 3, appearance-only rescue.
    AppearanceRescue,
}

/// What happened to each track and detection within one frame.
#[derive(Debug, Clone, Default)]
pub struct FrameReport {
    pub frame_index: usize,
    pub matches: Vec<(u64, usize, MatchBranch)>,
    pub births: Vec<u64>,
    pub terminations: Vec<u64>,
    /// Number of similarity evaluations performed this frame.
    pub similarity_calls: usize,
}

/// Mutable tracker state folded over the frame bundles of one sequence.
#[derive(Debug, Default)]
pub struct TrackerState {
    pub tracks: Vec<Track>,
    next_id: u64,
}

impl TrackerState {
    pub fn new() -> Self {
        Self { tracks: Vec::new(), next_id: 1 }
    }

    /// Seed the state with one track per first-frame detection.
    pub fn init(detections: &[Detection]) -> Self {
        let mut state = Self::new();
        for d in detections {
            state.spawn(d.frame_index, d.bbox);
        }
        state
    }

    fn spawn(&mut self, frame: usize, bbox: BBox) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.tracks.push(Track::new(id, frame, bbox));
        id
    }

    fn active_indices(&self) -> Vec<usize> {
        (0..self.tracks.len())
            .filter(|&i| self.tracks[i].state == TrackState::Active)
            .collect()
    }
}

struct DescriptorCache<'a> {
    fmap: &'a FeatureMap,
    scale: f64,
    // descriptor plus the number of unoccluded map cells it pooled; zero
    // means the box's own appearance is fully hidden behind smaller peers
    slots: Vec<Option<(AppearanceDescriptor, usize)>>,
    // every box of this frame, in feature-map coordinates; slot i's crop is
    // masked by the peer boxes at the other indices in `peers`
    boxes: Vec<BBox>,
    peers: Vec<usize>,
}

impl<'a> DescriptorCache<'a> {
    fn new(fmap: &'a FeatureMap, scale: f64, boxes: Vec<BBox>, peers: Vec<usize>) -> Self {
        let n = boxes.len();
        let boxes = boxes.iter().map(|b| b.downscale(scale)).collect();
        Self { fmap, scale, slots: vec![None; n], boxes, peers }
    }

    fn get(&mut self, i: usize, bbox: &BBox) -> Result<&(AppearanceDescriptor, usize), TrackError> {
        if self.slots[i].is_none() {
            let occluders: Vec<BBox> = self
                .peers
                .iter()
                .filter(|&&p| p != i)
                .map(|&p| self.boxes[p])
                .collect();
            let d = crop_descriptor_masked(self.fmap, &bbox.downscale(self.scale), &occluders)?;
            self.slots[i] = Some(d);
        }
        Ok(self.slots[i].as_ref().unwrap())
    }
}

/// Outcome of the one/none/many candidate logic within Steps 1 and 2.
enum StepOutcome {
    Matched(usize, MatchBranch),
    Deferred,
}

/// Advance the tracker by one frame.
pub fn advance(
    state: &mut TrackerState,
    bundle: &FrameBundle,
    cfg: &TrackerConfig,
) -> Result<FrameReport, TrackError> {
    advance_with_model(state, bundle, cfg, &CosineSimilarity)
}

/// `advance` with an explicit similarity model.
pub fn advance_with_model(
    state: &mut TrackerState,
    bundle: &FrameBundle,
    cfg: &TrackerConfig,
    sim: &dyn SimilarityModel,
) -> Result<FrameReport, TrackError> {
    check_grids(bundle)?;
    let mut report = FrameReport { frame_index: bundle.frame_index, ..Default::default() };

    let dets = &bundle.detections;
    let mut det_free: Vec<bool> = vec![true; dets.len()];
    let mut track_order = state.active_indices();
    track_order.sort_by_key(|&i| state.tracks[i].id);
    let mut unmatched: Vec<usize> = track_order.clone();
    let mut matched: Vec<(usize, usize, MatchBranch)> = Vec::new();

    let mut track_desc = DescriptorCache::new(
        &bundle.fmap_prev,
        bundle.feature_scale,
        state.tracks.iter().map(|t| t.last_box()).collect(),
        track_order.clone(),
    );
    let mut det_desc = DescriptorCache::new(
        &bundle.fmap_next,
        bundle.feature_scale,
        dets.iter().map(|d| d.bbox).collect(),
        (0..dets.len()).collect(),
    );

    let use_field = cfg.mode != TrackerMode::FafOnly;
    let use_appearance = cfg.mode != TrackerMode::FmfOnly;

    // Step 1: forward prediction of each track's last box. Other tracks'
    // boxes mask out field cells they contest in the former frame.
    if use_field {
        let track_boxes: Vec<BBox> =
            track_order.iter().map(|&ti| state.tracks[ti].last_box()).collect();
        let mut still = Vec::new();
        for (k, &ti) in unmatched.iter().enumerate() {
            let last = state.tracks[ti].last_box();
            let mut others = track_boxes.clone();
            others.swap_remove(k);
            let predicted = match predict_box_masked(
                &bundle.field,
                Direction::Forward,
                &last,
                cfg.aggregator,
                &others,
            ) {
                Ok(p) => p,
                Err(_) => {
                    still.push(ti);
                    continue;
                }
            };
            let scored: Vec<(usize, f64)> = dets
                .iter()
                .enumerate()
                .filter(|(di, _)| det_free[*di])
                .map(|(di, d)| (di, iou(&predicted, &d.bbox)))
                .collect();
            match resolve_candidates(
                ti, &scored, &det_free, dets, cfg, use_appearance, sim,
                &mut track_desc, &mut det_desc, &mut report.similarity_calls, state,
                MatchBranch::ForwardSingle, MatchBranch::ForwardAppearance, MatchBranch::ForwardTopIou,
            )? {
                StepOutcome::Matched(di, branch) => {
                    det_free[di] = false;
                    matched.push((ti, di, branch));
                }
                StepOutcome::Deferred => still.push(ti),
            }
        }
        unmatched = still;
    }

    // Step 2: backward prediction of each unmatched detection, masked by
    // the other detections of the latter frame.
    if use_field {
        let det_boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
        let mut still = Vec::new();
        for &ti in &unmatched {
            let last = state.tracks[ti].last_box();
            let mut scored = Vec::new();
            for (di, d) in dets.iter().enumerate() {
                if !det_free[di] {
                    continue;
                }
                let mut others = det_boxes.clone();
                others.swap_remove(di);
                let back = predict_box_masked(
                    &bundle.field,
                    Direction::Backward,
                    &d.bbox,
                    cfg.aggregator,
                    &others,
                );
                if let Ok(back) = back {
                    scored.push((di, iou(&back, &last)));
                }
            }
            match resolve_candidates(
                ti, &scored, &det_free, dets, cfg, use_appearance, sim,
                &mut track_desc, &mut det_desc, &mut report.similarity_calls, state,
                MatchBranch::BackwardSingle, MatchBranch::BackwardAppearance, MatchBranch::BackwardTopIou,
            )? {
                StepOutcome::Matched(di, branch) => {
                    det_free[di] = false;
                    matched.push((ti, di, branch));
                }
                StepOutcome::Deferred => still.push(ti),
            }
        }
        unmatched = still;
    }

    // Step 3: appearance-only rescue for whatever is left.
    // In the appearance-only ablation this is the whole association and
    // runs globally greedy in descending similarity.
    if use_appearance && cfg.mode == TrackerMode::FafOnly {
        let mut scored: Vec<(f64, usize, usize)> = Vec::new();
        for &ti in &unmatched {
            let last = state.tracks[ti].last_box();
            let (td, tvis) = track_desc.get(ti, &last)?.clone();
            if tvis == 0 {
                continue;
            }
            for (di, d) in dets.iter().enumerate() {
                if !det_free[di] {
                    continue;
                }
                let &(ref dd, dvis) = det_desc.get(di, &d.bbox)?;
                if dvis == 0 {
                    continue;
                }
                let s = sim.score(&td, dd);
                report.similarity_calls += 1;
                if s > cfg.tau2 {
                    scored.push((s, di, ti));
                }
            }
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(state.tracks[a.2].id.cmp(&state.tracks[b.2].id))
        });
        let mut track_taken = vec![false; state.tracks.len()];
        for (_, di, ti) in scored {
            if det_free[di] && !track_taken[ti] {
                det_free[di] = false;
                track_taken[ti] = true;
                matched.push((ti, di, MatchBranch::AppearanceRescue));
            }
        }
        unmatched.retain(|&ti| !track_taken[ti]);
    } else if use_appearance {
        let mut still = Vec::new();
        for &ti in &unmatched {
            let last = state.tracks[ti].last_box();
            let (td, tvis) = track_desc.get(ti, &last)?.clone();
            if tvis == 0 {
                still.push(ti);
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (di, d) in dets.iter().enumerate() {
                if !det_free[di] {
                    continue;
                }
                let &(ref dd, dvis) = det_desc.get(di, &d.bbox)?;
                if dvis == 0 {
                    continue;
                }
                let s = sim.score(&td, dd);
                report.similarity_calls += 1;
                if best.map_or(true, |(_, bs)| s > bs) {
                    best = Some((di, s));
                }
            }
            match best {
                Some((di, s)) if s > cfg.tau2 => {
                    det_free[di] = false;
                    matched.push((ti, di, MatchBranch::AppearanceRescue));
                }
                _ => still.push(ti),
            }
        }
        unmatched = still;
    }

    // commit matches, spawn new tracks, age out the rest
    for (ti, di, branch) in matched {
        let track = &mut state.tracks[ti];
        track.push(bundle.frame_index, dets[di].bbox);
        report.matches.push((track.id, di, branch));
    }
    for (di, d) in dets.iter().enumerate() {
        if det_free[di] {
            let id = state.spawn(bundle.frame_index, d.bbox);
            report.births.push(id);
        }
    }
    for &ti in &unmatched {
        let track = &mut state.tracks[ti];
        track.misses += 1;
        if track.misses >= cfg.max_age {
            track.state = TrackState::Terminated;
            report.terminations.push(track.id);
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn resolve_candidates(
    ti: usize,
    scored: &[(usize, f64)],
    det_free: &[bool],
    dets: &[Detection],
    cfg: &TrackerConfig,
    use_appearance: bool,
    sim: &dyn SimilarityModel,
    track_desc: &mut DescriptorCache,
    det_desc: &mut DescriptorCache,
    sim_calls: &mut usize,
    state: &TrackerState,
    single: MatchBranch,
    appearance: MatchBranch,
    top_iou: MatchBranch,
) -> Result<StepOutcome, TrackError> {
    let mut candidates: Vec<(usize, f64)> =
        scored.iter().copied().filter(|&(_, s)| s > cfg.tau1).collect();
    // descending score, ties to the lowest detection index
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    if candidates.len() == 1 {
        return Ok(StepOutcome::Matched(candidates[0].0, single));
    }
    if use_appearance {
        let last = state.tracks[ti].last_box();
        let (td, tvis) = track_desc.get(ti, &last)?.clone();
        // a fully occluded track abstains from appearance resolution
        if tvis > 0 {
            let mut best: Option<(usize, f64)> = None;
            for (di, d) in dets.iter().enumerate() {
                if !det_free[di] {
                    continue;
                }
                let &(ref dd, dvis) = det_desc.get(di, &d.bbox)?;
                if dvis == 0 {
                    continue;
                }
                let s = sim.score(&td, dd);
                *sim_calls += 1;
                if best.map_or(true, |(_, bs)| s > bs) {
                    best = Some((di, s));
                }
            }
            if let Some((di, s)) = best {
                if s > cfg.tau2 {
                    return Ok(StepOutcome::Matched(di, appearance));
                }
            }
        }
    }
    if let Some(&(di, _)) = candidates.first() {
        return Ok(StepOutcome::Matched(di, top_iou));
    }
    Ok(StepOutcome::Deferred)
}

fn check_grids(bundle: &FrameBundle) -> Result<(), TrackError> {
    if bundle.fmap_prev.width != bundle.fmap_next.width
        || bundle.fmap_prev.height != bundle.fmap_next.height
        || bundle.fmap_prev.channels != bundle.fmap_next.channels
    {
        return Err(TrackError::GridMismatch(
            bundle.field.width,
            bundle.field.height,
            bundle.fmap_prev.width,
            bundle.fmap_prev.height,
            bundle.fmap_next.width,
            bundle.fmap_next.height,
        ));
    }
    let expect_w = (bundle.field.width as f64 / bundle.feature_scale).ceil() as usize;
    let expect_h = (bundle.field.height as f64 / bundle.feature_scale).ceil() as usize;
    if bundle.fmap_prev.width != expect_w || bundle.fmap_prev.height != expect_h {
        return Err(TrackError::GridMismatch(
            bundle.field.width,
            bundle.field.height,
            bundle.fmap_prev.width,
            bundle.fmap_prev.height,
            bundle.fmap_next.width,
            bundle.fmap_next.height,
        ));
    }
    Ok(())
}

/// Everything a full-sequence run produces.
#[derive(Debug, Default)]
pub struct SequenceResult {
    pub tracks: Vec<Track>,
    pub reports: Vec<FrameReport>,
}

/// Initialize from first-frame detections and fold `advance` over the
/// bundles. Deterministic given inputs and config.
pub fn run_sequence<I>(
    initial_detections: &[Detection],
    bundles: I,
    cfg: &TrackerConfig,
) -> Result<SequenceResult, TrackError>
where
    I: IntoIterator<Item = FrameBundle>,
{
    let mut state = TrackerState::init(initial_detections);
    let mut reports = Vec::new();
    for bundle in bundles {
        reports.push(advance(&mut state, &bundle, cfg)?);
    }
    Ok(SequenceResult { tracks: state.tracks, reports })
}
