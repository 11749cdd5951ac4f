//! End-to-end acceptance suite. Each test prints one pass line; a failed
//! assertion fails the corresponding criterion.

use fmftrack::faf::{bce_loss, FeatureMap};
use fmftrack::fmf::{
    box_displacement, encode_ground_truth, mse_loss, Aggregator, BoxMatch, Direction,
};
use fmftrack::geometry::{covered_pixels, iou, BBox};
use fmftrack::io;
use fmftrack::metrics::{evaluate, MetricsReport};
use fmftrack::simulator::{self, ScenarioConfig};
use fmftrack::tracker::{
    advance, Detection, FrameBundle, MatchBranch, Track, TrackerConfig, TrackerMode, TrackerState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

fn pass(n: usize, msg: &str) {
    println!("[PASS] criterion {n}: {msg}");
}

fn noiseless_cfg(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        frame_count: 200,
        width: 1280,
        height: 720,
        agent_count: 20,
        box_min: 24.0,
        box_max: 48.0,
        speed_min: 1.0,
        speed_max: 4.0,
        feature_stride: 8,
        ..Default::default()
    }
}

fn run_pipeline(cfg: &ScenarioConfig, tracker_cfg: &TrackerConfig) -> (MetricsReport, Vec<f64>) {
    let scenario = simulator::generate(cfg).expect("scenario generation");
    let mut state = TrackerState::init(&scenario.detections_at(1));
    let mut timings = Vec::new();
    let mut from = 1;
    while from + cfg.pair_stride <= cfg.frame_count {
        let bundle = scenario.bundle_for(from);
        let start = Instant::now();
        advance(&mut state, &bundle, tracker_cfg).expect("advance");
        timings.push(start.elapsed().as_secs_f64());
        from += cfg.pair_stride;
    }
    let report = evaluate(&scenario.ground_truth_map(), &state.tracks, 0.5).expect("evaluate");
    (report, timings)
}

#[test]
fn criterion_1_oracle_fixed_point() {
    let start = Instant::now();
    for seed in 0..20u64 {
        let (report, _) = run_pipeline(&noiseless_cfg(seed), &TrackerConfig::default());
        assert_eq!(report.mota, 1.0, "seed {seed}: MOTA {} != 1.0", report.mota);
        assert_eq!(report.id_switches, 0, "seed {seed}");
        assert_eq!(report.fragmentations, 0, "seed {seed}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "20 noiseless seeds took {elapsed:.1} s (budget 30 s)");
    pass(1, &format!("20 noiseless seeds all MOTA=1.0, IDSW=Frag=0, in {elapsed:.1} s"));
}

/// Boxes sampled on a 1/16-pixel grid so every center displacement is
/// exactly representable in the field's 32-bit channels.
fn grid_box(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> BBox {
    let q = |v: f64| (v * 16.0).round() / 16.0;
    BBox::new(
        q(rng.gen_range(lo..hi)),
        q(rng.gen_range(lo..hi)),
        q(rng.gen_range(4.0..20.0)),
        q(rng.gen_range(4.0..20.0)),
    )
}

#[test]
fn criterion_2_antisymmetry_and_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 1000 {
        let box1 = grid_box(&mut rng, 0.0, 100.0);
        let box2 = grid_box(&mut rng, 130.0, 230.0);
        if iou(&box1, &box2) > 0.0 {
            continue;
        }
        let m = BoxMatch { box1, box2, identity: 1 };
        let field = encode_ground_truth(&[m], 256, 256).unwrap();
        // backward channels are exactly the negated forward channels
        for (x, y) in covered_pixels(&box1, 256, 256) {
            let i = field.idx(x, y);
            assert!(field.occupancy1[i]);
        }
        for (fx1, fx2) in [(&field.fx1, &field.fx2), (&field.fy1, &field.fy2)] {
            let fwd: Vec<f32> = covered_pixels(&box1, 256, 256)
                .iter()
                .map(|&(x, y)| fx1[field.idx(x, y)])
                .collect();
            let bwd: Vec<f32> = covered_pixels(&box2, 256, 256)
                .iter()
                .map(|&(x, y)| fx2[field.idx(x, y)])
                .collect();
            assert!(fwd.iter().all(|&v| v == fwd[0]));
            assert!(bwd.iter().all(|&v| v == -fwd[0]));
        }
        // encode -> decode recovers the exact center displacement
        let (c1x, c1y) = box1.center();
        let (c2x, c2y) = box2.center();
        for agg in [Aggregator::Mean, Aggregator::Median] {
            let (dx, dy) = box_displacement(&field, Direction::Forward, &box1, agg).unwrap();
            assert!((dx - (c2x - c1x)).abs() < 1e-9, "dx err {}", (dx - (c2x - c1x)).abs());
            assert!((dy - (c2y - c1y)).abs() < 1e-9);
            let (bx, by) = box_displacement(&field, Direction::Backward, &box2, agg).unwrap();
            assert!((bx + (c2x - c1x)).abs() < 1e-9);
            assert!((by + (c2y - c1y)).abs() < 1e-9);
        }
        checked += 1;
    }
    pass(2, "1000 pairs: backward = -forward exactly, decode error < 1e-9 px");
}

#[test]
fn criterion_3_loss_functions() {
    // MSE: zero on identical fields, 200 on a 50-pixel off-by-2 channel
    let b1 = BBox::new(0.0, 0.0, 10.0, 5.0);
    let matches = [BoxMatch { box1: b1, box2: b1.shift(30.0, 0.0), identity: 1 }];
    let truth = encode_ground_truth(&matches, 64, 64).unwrap();
    assert_eq!(mse_loss(&truth, &truth, &matches).unwrap(), 0.0);
    let mut pred = truth.clone();
    for (x, y) in covered_pixels(&b1, 64, 64) {
        let i = pred.idx(x, y);
        pred.fx1[i] += 2.0;
    }
    assert_eq!(mse_loss(&pred, &truth, &matches).unwrap(), 200.0);

    // BCE: ln 2 at h=0.5, near zero on perfect predictions
    let loss = bce_loss(&[0.5; 8], &[0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    let perfect = bce_loss(&[1e-9, 1.0 - 1e-9], &[0, 1]).unwrap();
    assert!(perfect < 1e-6);
    pass(3, "MSE 0 / 200 exact; BCE ln2 within 1e-12 and ~0 on perfect scores");
}

// ---- criterion 4: branch coverage ------------------------------------

fn code_map(w: usize, h: usize, regions: &[(BBox, usize)]) -> FeatureMap {
    // paints one-hot codes; channel index identifies the region
    let channels = 8;
    let mut fmap = FeatureMap::zeros(w, h, channels);
    for (bbox, c) in regions {
        for (x, y) in covered_pixels(bbox, w, h) {
            let i = fmap.idx(*c, x, y);
            fmap.values[i] = 1.0;
        }
    }
    fmap
}

fn det(frame: usize, bbox: BBox) -> Detection {
    Detection { frame_index: frame, bbox, confidence: 0.9 }
}

fn bundle(
    frame: usize,
    matches: &[BoxMatch],
    dets: Vec<Detection>,
    fmap_prev: FeatureMap,
    fmap_next: FeatureMap,
) -> FrameBundle {
    FrameBundle {
        frame_index: frame,
        detections: dets,
        field: encode_ground_truth(matches, 128, 128).unwrap(),
        fmap_prev,
        fmap_next,
        feature_scale: 1.0,
    }
}

fn branch_of(report: &fmftrack::tracker::FrameReport, track_id: u64) -> MatchBranch {
    report
        .matches
        .iter()
        .find(|&&(id, _, _)| id == track_id)
        .map(|&(_, _, b)| b)
        .unwrap_or_else(|| panic!("track {track_id} unmatched in frame report"))
}

#[test]
fn criterion_4_branch_coverage() {
    let cfg = TrackerConfig::default();
    let plain = || FeatureMap::zeros(128, 128, 8);

    // single candidate -> ForwardSingle
    let a1 = BBox::new(10.0, 10.0, 12.0, 12.0);
    let a2 = a1.shift(3.0, 1.0);
    let mut state = TrackerState::init(&[det(1, a1)]);
    let m = [BoxMatch { box1: a1, box2: a2, identity: 1 }];
    let r = advance(&mut state, &bundle(2, &m, vec![det(2, a2)], plain(), plain()), &cfg).unwrap();
    assert_eq!(branch_of(&r, 1), MatchBranch::ForwardSingle);

    // two tracks whose predictions overlap both detections -> ambiguity.
    // distinct appearance codes resolve it: ForwardAppearance
    let a1 = BBox::new(20.0, 20.0, 16.0, 16.0);
    let b1 = BBox::new(26.0, 20.0, 16.0, 16.0);
    let a2 = b1; // they swap places: predictions overlap both detections
    let b2 = a1;
    let mut state = TrackerState::init(&[det(1, a1), det(1, b1)]);
    let m = [
        BoxMatch { box1: a1, box2: a2, identity: 1 },
        BoxMatch { box1: b1, box2: b2, identity: 2 },
    ];
    let prev = code_map(128, 128, &[(a1, 0), (b1, 1)]);
    let next = code_map(128, 128, &[(a2, 0), (b2, 1)]);
    let r = advance(&mut state, &bundle(2, &m, vec![det(2, a2), det(2, b2)], prev, next), &cfg).unwrap();
    assert_eq!(branch_of(&r, 1), MatchBranch::ForwardAppearance);
    assert!(r.similarity_calls > 0);

    // same geometry but appearance maps disagree across frames -> max
    // similarity stays at 0.5, falls back to the top IOU candidate
    let mut state = TrackerState::init(&[det(1, a1), det(1, b1)]);
    let prev = code_map(128, 128, &[(a1, 0), (b1, 1)]);
    let next = code_map(128, 128, &[(a2, 2), (b2, 3)]);
    let r = advance(&mut state, &bundle(2, &m, vec![det(2, a2), det(2, b2)], prev, next), &cfg).unwrap();
    assert_eq!(branch_of(&r, 1), MatchBranch::ForwardTopIou);

    // forward channels empty at the track's box, backward prediction maps
    // the detection back onto it -> backward rescue (single candidate)
    let t1 = BBox::new(40.0, 40.0, 12.0, 12.0);
    let d2 = t1.shift(30.0, 0.0);
    let mut state = TrackerState::init(&[det(1, t1)]);
    let mut field = encode_ground_truth(&[], 128, 128).unwrap();
    for (x, y) in covered_pixels(&d2, 128, 128) {
        let i = field.idx(x, y);
        field.fx2[i] = -30.0;
        field.occupancy2[i] = true;
    }
    let prev = code_map(128, 128, &[(t1, 0)]);
    let next = code_map(128, 128, &[(d2, 1)]); // orthogonal: sim 0.5, not > tau2
    let b = FrameBundle {
        frame_index: 2,
        detections: vec![det(2, d2)],
        field,
        fmap_prev: prev,
        fmap_next: next,
        feature_scale: 1.0,
    };
    let r = advance(&mut state, &b, &cfg).unwrap();
    assert_eq!(branch_of(&r, 1), MatchBranch::BackwardSingle);

    // appearance-only rescue (the FAF path): no field information at all
    let faf_cfg = TrackerConfig { mode: TrackerMode::FafOnly, ..cfg };
    let t1 = BBox::new(40.0, 40.0, 12.0, 12.0);
    let d2 = t1.shift(40.0, 20.0);
    let mut state = TrackerState::init(&[det(1, t1)]);
    let prev = code_map(128, 128, &[(t1, 5)]);
    let next = code_map(128, 128, &[(d2, 5)]);
    let r = advance(&mut state, &bundle(2, &[], vec![det(2, d2)], prev, next), &faf_cfg).unwrap();
    assert_eq!(branch_of(&r, 1), MatchBranch::AppearanceRescue);

    // birth of an unexplained detection
    let newcomer = BBox::new(90.0, 90.0, 10.0, 10.0);
    let mut state = TrackerState::init(&[det(1, a1)]);
    let m = [BoxMatch { box1: a1, box2: a1, identity: 1 }];
    let r = advance(
        &mut state,
        &bundle(2, &m, vec![det(2, a1), det(2, newcomer)], plain(), plain()),
        &cfg,
    )
    .unwrap();
    assert_eq!(r.births.len(), 1);

    // termination after max_age unmatched frames
    let mut state = TrackerState::init(&[det(1, a1)]);
    let r = advance(&mut state, &bundle(2, &[], vec![], plain(), plain()), &cfg).unwrap();
    assert_eq!(r.terminations, vec![1]);

    pass(4, "all association branches reached and named in the frame reports");
}

// ---- criterion 5: metrics oracle -------------------------------------

mod clearmot_oracle {
    //! Brute-force CLEAR-MOT evaluator: per-frame one-to-one assignments
    //! found by exhaustive enumeration, maximizing (matched count, total
    //! IOU) lexicographically. Kept fully independent of the library's
    //! Hungarian-based implementation.

    use fmftrack::geometry::{iou, BBox};
    use std::collections::{BTreeMap, BTreeSet, HashMap};

    #[derive(Debug, PartialEq, Default)]
    pub struct Events {
        pub fp: usize,
        pub fn_: usize,
        pub idsw: usize,
        pub frag: usize,
        pub matched: usize,
        pub motp_sum_rounded: i64,
    }

    fn best_assignment(
        gt: &[(u64, BBox)],
        hyp: &[(u64, BBox)],
        free_gt: &[usize],
        free_hyp: &[usize],
        threshold: f64,
    ) -> Vec<(usize, usize)> {
        fn recurse(
            row: usize,
            free_gt: &[usize],
            free_hyp: &[usize],
            used: &mut Vec<bool>,
            current: &mut Vec<(usize, usize)>,
            best: &mut (usize, f64, Vec<(usize, usize)>),
            total: f64,
            iou_of: &dyn Fn(usize, usize) -> f64,
            threshold: f64,
        ) {
            if row == free_gt.len() {
                let count = current.len();
                if count > best.0 || (count == best.0 && total > best.1 + 1e-12) {
                    *best = (count, total, current.clone());
                }
                return;
            }
            // leave this gt unmatched
            recurse(row + 1, free_gt, free_hyp, used, current, best, total, iou_of, threshold);
            for (k, &hi) in free_hyp.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let o = iou_of(free_gt[row], hi);
                if o >= threshold {
                    used[k] = true;
                    current.push((free_gt[row], hi));
                    recurse(row + 1, free_gt, free_hyp, used, current, best, total + o, iou_of, threshold);
                    current.pop();
                    used[k] = false;
                }
            }
        }
        let iou_of = |gi: usize, hi: usize| iou(&gt[gi].1, &hyp[hi].1);
        let mut best = (0usize, f64::MIN, Vec::new());
        let mut used = vec![false; free_hyp.len()];
        let mut current = Vec::new();
        recurse(0, free_gt, free_hyp, &mut used, &mut current, &mut best, 0.0, &iou_of, threshold);
        best.2
    }

    pub fn evaluate(
        gt_frames: &BTreeMap<usize, Vec<(u64, BBox)>>,
        hyp_frames: &BTreeMap<usize, Vec<(u64, BBox)>>,
        threshold: f64,
    ) -> Events {
        let mut ev = Events::default();
        let mut last_hyp: HashMap<u64, u64> = HashMap::new();
        let mut prev: HashMap<u64, u64> = HashMap::new();
        struct Traj {
            was_matched: bool,
            in_gap: bool,
        }
        let mut traj: HashMap<u64, Traj> = HashMap::new();
        let frames: BTreeSet<usize> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
        let empty = Vec::new();
        for &f in &frames {
            let mut gt = gt_frames.get(&f).cloned().unwrap_or_default();
            gt.sort_by_key(|&(id, _)| id);
            let mut hyp = hyp_frames.get(&f).cloned().unwrap_or_else(|| empty.clone());
            hyp.sort_by_key(|&(id, _)| id);

            let mut gt_done = vec![false; gt.len()];
            let mut hyp_done = vec![false; hyp.len()];
            let mut now: HashMap<u64, u64> = HashMap::new();

            for (gi, &(gid, gbox)) in gt.iter().enumerate() {
                if let Some(&hid) = prev.get(&gid) {
                    if let Some(hi) = hyp.iter().position(|&(id, _)| id == hid) {
                        if !hyp_done[hi] && iou(&gbox, &hyp[hi].1) >= threshold {
                            gt_done[gi] = true;
                            hyp_done[hi] = true;
                            now.insert(gid, hid);
                            ev.matched += 1;
                            ev.motp_sum_rounded += (iou(&gbox, &hyp[hi].1) * 1e9).round() as i64;
                        }
                    }
                }
            }
            let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_done[i]).collect();
            let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&i| !hyp_done[i]).collect();
            for (gi, hi) in best_assignment(&gt, &hyp, &free_gt, &free_hyp, threshold) {
                gt_done[gi] = true;
                hyp_done[hi] = true;
                now.insert(gt[gi].0, hyp[hi].0);
                ev.matched += 1;
                ev.motp_sum_rounded += (iou(&gt[gi].1, &hyp[hi].1) * 1e9).round() as i64;
            }
            ev.fp += hyp_done.iter().filter(|&&d| !d).count();
            ev.fn_ += gt_done.iter().filter(|&&d| !d).count();

            for &(gid, _) in &gt {
                let t = traj.entry(gid).or_insert(Traj { was_matched: false, in_gap: false });
                match now.get(&gid) {
                    Some(&hid) => {
                        if let Some(&p) = last_hyp.get(&gid) {
                            if p != hid {
                                ev.idsw += 1;
                            }
                        }
                        last_hyp.insert(gid, hid);
                        if t.in_gap {
                            ev.frag += 1;
                            t.in_gap = false;
                        }
                        t.was_matched = true;
                    }
                    None => {
                        if t.was_matched {
                            t.in_gap = true;
                        }
                    }
                }
            }
            prev = now;
        }
        ev
    }
}

fn random_small_scene(
    seed: u64,
) -> (BTreeMap<usize, Vec<(u64, BBox)>>, Vec<Track>, BTreeMap<usize, Vec<(u64, BBox)>>) {
    use fmftrack::tracker::TrackState;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = rng.gen_range(1..=5usize);
    let frames = rng.gen_range(2..=20usize);
    let mut gt: BTreeMap<usize, Vec<(u64, BBox)>> = BTreeMap::new();
    let mut hyp_entries: BTreeMap<u64, Vec<(usize, BBox)>> = BTreeMap::new();
    let mut hyp_frames: BTreeMap<usize, Vec<(u64, BBox)>> = BTreeMap::new();

    for obj in 1..=objects as u64 {
        let mut cx = rng.gen_range(20.0..180.0);
        let mut cy = rng.gen_range(20.0..180.0);
        let (w, h) = (rng.gen_range(8.0..20.0), rng.gen_range(8.0..20.0));
        let (vx, vy) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        // the hypothesis sometimes relabels an object mid-sequence
        let switch_at = if rng.gen_bool(0.4) { rng.gen_range(2..=frames) } else { usize::MAX };
        for frame in 1..=frames {
            if rng.gen_bool(0.15) {
                // absent from gt this frame
                cx += vx;
                cy += vy;
                continue;
            }
            let gbox = BBox::new(cx - w / 2.0, cy - h / 2.0, w, h);
            gt.entry(frame).or_default().push((obj, gbox));
            if !rng.gen_bool(0.15) {
                let hyp_id = if frame >= switch_at { obj + 100 } else { obj };
                let hbox = gbox.shift(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                hyp_entries.entry(hyp_id).or_default().push((frame, hbox));
                hyp_frames.entry(frame).or_default().push((hyp_id, hbox));
            }
            cx += vx;
            cy += vy;
        }
    }
    // occasional false positives
    for frame in 1..=frames {
        if rng.gen_bool(0.2) {
            let b = BBox::new(rng.gen_range(0.0..180.0), rng.gen_range(0.0..180.0), 10.0, 10.0);
            let id = 900 + frame as u64;
            hyp_entries.entry(id).or_default().push((frame, b));
            hyp_frames.entry(frame).or_default().push((id, b));
        }
    }
    let tracks = hyp_entries
        .into_iter()
        .map(|(id, entries)| {
            let birth = entries.first().unwrap().0;
            let last = entries.last().unwrap().0;
            Track::from_entries(id, entries, TrackState::Terminated, birth, last)
        })
        .collect();
    (gt, tracks, hyp_frames)
}

#[test]
fn criterion_5_metrics_oracle() {
    let mut compared = 0;
    for seed in 0..100u64 {
        let (gt, tracks, hyp_frames) = random_small_scene(seed);
        if gt.values().map(Vec::len).sum::<usize>() == 0 {
            continue;
        }
        let report = evaluate(&gt, &tracks, 0.5).unwrap();
        let oracle = clearmot_oracle::evaluate(&gt, &hyp_frames, 0.5);
        assert_eq!(report.false_positives, oracle.fp, "seed {seed}");
        assert_eq!(report.false_negatives, oracle.fn_, "seed {seed}");
        assert_eq!(report.id_switches, oracle.idsw, "seed {seed}");
        assert_eq!(report.fragmentations, oracle.frag, "seed {seed}");
        compared += 1;
    }
    assert!(compared >= 95);

    // hand-counted swap scenario: 2 tracks x 10 frames, ids swap at frame 6
    let b = |x: f64| BBox::new(x, 0.0, 10.0, 10.0);
    let gt: BTreeMap<usize, Vec<(u64, BBox)>> =
        (1..=10).map(|f| (f, vec![(1, b(f as f64)), (2, b(100.0 + f as f64))])).collect();
    use fmftrack::tracker::TrackState;
    let box_of = |gt_id: u64, f: usize| if gt_id == 1 { b(f as f64) } else { b(100.0 + f as f64) };
    let hyp = vec![
        Track::from_entries(
            1,
            (1..=10).map(|f| (f, box_of(if f <= 5 { 1 } else { 2 }, f))).collect(),
            TrackState::Terminated,
            1,
            10,
        ),
        Track::from_entries(
            2,
            (1..=10).map(|f| (f, box_of(if f <= 5 { 2 } else { 1 }, f))).collect(),
            TrackState::Terminated,
            1,
            10,
        ),
    ];
    let report = evaluate(&gt, &hyp, 0.5).unwrap();
    assert_eq!(report.id_switches, 2);
    assert_eq!(report.mota, 0.9);
    pass(5, &format!("{compared} random scenes match the brute-force oracle; swap scene MOTA 0.9, IDSW 2"));
}

// ---- criterion 6: ablation direction ---------------------------------

fn crossing_cfg(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        frame_count: 100,
        width: 512,
        height: 512,
        agent_count: 30,
        box_min: 14.0,
        box_max: 22.0,
        speed_min: 3.0,
        speed_max: 6.0,
        center_jitter: 2.0,
        feature_stride: 4,
        ..Default::default()
    }
}

fn run_mode(cfg: &ScenarioConfig, mode: TrackerMode) -> (usize, f64) {
    let tracker_cfg = TrackerConfig { mode, ..Default::default() };
    let (report, timings) = run_pipeline(cfg, &tracker_cfg);
    (report.id_switches, timings.iter().sum())
}

#[test]
fn criterion_6_ablation_direction() {
    let mut idsw_fmf = 0usize;
    let mut idsw_full = 0usize;
    let mut time_fmf = 0.0f64;
    let mut time_faf = 0.0f64;
    for seed in 0..20u64 {
        let cfg = crossing_cfg(seed);
        let (i1, t1) = run_mode(&cfg, TrackerMode::FmfOnly);
        let (i2, _) = run_mode(&cfg, TrackerMode::FmfFaf);
        let (_, t3) = run_mode(&cfg, TrackerMode::FafOnly);
        idsw_fmf += i1;
        idsw_full += i2;
        time_fmf += t1;
        time_faf += t3;
    }
    assert!(
        idsw_full <= idsw_fmf,
        "fmf_faf id switches {idsw_full} > fmf-only {idsw_fmf}"
    );
    assert!(
        time_fmf < time_faf,
        "fmf-only {time_fmf:.2}s not faster than faf-only {time_faf:.2}s"
    );
    pass(
        6,
        &format!(
            "IDSW fmf {idsw_fmf} -> fmf_faf {idsw_full}; association time fmf {time_fmf:.2}s < faf {time_faf:.2}s"
        ),
    );
}

// ---- criterion 7: scaling --------------------------------------------

#[test]
fn criterion_7_association_scaling() {
    let mut mean_by_count = BTreeMap::new();
    for &objects in &[10usize, 25, 50, 100] {
        let cfg = ScenarioConfig {
            seed: 7,
            frame_count: 60,
            width: 1280,
            height: 720,
            agent_count: objects,
            box_min: 20.0,
            box_max: 40.0,
            feature_stride: 8,
            ..Default::default()
        };
        let (_, timings) = run_pipeline(&cfg, &TrackerConfig::default());
        let mean = timings.iter().sum::<f64>() / timings.len() as f64;
        mean_by_count.insert(objects, mean);
    }
    let ratio = mean_by_count[&100] / mean_by_count[&10];
    assert!(ratio < 100.0, "time(100)/time(10) = {ratio:.1}");
    let hz50 = 1.0 / mean_by_count[&50];
    // 25 Hz at 50 objects is a soft target: measured value reported, not asserted
    println!(
        "  measured: association {hz50:.1} Hz at 50 objects, scaling ratio {ratio:.2} (soft target 25 Hz)"
    );
    pass(7, &format!("sub-quadratic scaling, ratio {ratio:.2}; {hz50:.1} Hz at 50 objects"));
}

// ---- criterion 8: format fidelity ------------------------------------

#[test]
fn criterion_8_format_fidelity() {
    // parse-write identity on generated data
    let cfg = ScenarioConfig {
        seed: 3,
        frame_count: 10,
        width: 200,
        height: 150,
        agent_count: 4,
        box_min: 12.0,
        box_max: 24.0,
        channels: 8,
        feature_stride: 2,
        ..Default::default()
    };
    let scenario = simulator::generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let seq = io::SequenceDir::new(dir.path());
    scenario.export(&seq).unwrap();

    // re-import reproduces every box and identity
    let gt = seq.read_ground_truth().unwrap();
    for t in &scenario.tracks {
        for &(frame, bbox) in &t.entries {
            let entry = gt[&frame].iter().find(|e| e.identity == t.identity).unwrap();
            assert_eq!(entry.bbox, bbox);
        }
    }
    let dets = seq.read_detections().unwrap().by_frame;
    for (frame, expected) in &scenario.detections {
        let got = &dets[frame];
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(expected) {
            assert_eq!(g.bbox, e.bbox);
        }
    }

    // binary codecs bit-exact
    let field = scenario.field_between(1, 2);
    assert_eq!(io::read_field(&io::write_field(&field).unwrap()).unwrap(), field);
    let fmap = scenario.fmap_for(1);
    assert_eq!(io::read_fmap(&io::write_fmap(&fmap).unwrap()).unwrap(), fmap);

    // results roundtrip is byte-identical
    let (report, _) = {
        let scenario2 = simulator::generate(&cfg).unwrap();
        let mut state = TrackerState::init(&scenario2.detections_at(1));
        for from in 1..cfg.frame_count {
            advance(&mut state, &scenario2.bundle_for(from), &TrackerConfig::default()).unwrap();
        }
        let text = io::write_results(&state.tracks);
        let parsed = io::parse_results(std::io::Cursor::new(&text)).unwrap();
        assert_eq!(io::write_results(&parsed), text);
        (evaluate(&scenario2.ground_truth_map(), &state.tracks, 0.5).unwrap(), text)
    };
    assert_eq!(report.mota, 1.0);

    // golden-file byte equality for one exported scenario
    let golden_root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/seq");
    let golden_cfg = ScenarioConfig::parse(
        &std::fs::read_to_string(golden_root.join("scenario.cfg")).unwrap(),
    )
    .unwrap();
    let regenerated = simulator::generate(&golden_cfg).unwrap();
    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh = io::SequenceDir::new(fresh_dir.path());
    regenerated.export(&fresh).unwrap();
    for rel in [
        "seqinfo.ini",
        "gt/gt.txt",
        "det/det.txt",
        "fmf/fmf_000001_000002.bin",
        "fmf/fmf_000002_000003.bin",
        "faf/faf_000001.bin",
        "faf/faf_000002.bin",
        "faf/faf_000003.bin",
    ] {
        let golden = std::fs::read(golden_root.join(rel)).unwrap();
        let got = std::fs::read(fresh_dir.path().join(rel)).unwrap();
        assert_eq!(golden, got, "byte mismatch in {rel}");
    }
    pass(8, "parse-write identity, bit-exact codecs, golden files byte-equal");
}
