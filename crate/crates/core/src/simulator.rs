//! Synthetic scene generator and oracle: ground-truth trajectories, noisy
//! detections, exact-or-noised motion fields and identity-coded feature
//! maps standing in for the trained network's outputs.

use crate::faf::FeatureMap;
use crate::fmf::{encode_ground_truth, BoxMatch, MotionField};
use crate::geometry::{covered_range, BBox};
use crate::io::{write_field, write_fmap, write_seqinfo, IoError, SequenceDir, SequenceInfo};
use crate::tracker::{Detection, FrameBundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("agent boxes up to {0}x{0} px do not fit a {1}x{2} frame")]
    BoxTooLarge(f64, usize, usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config line {0}: cannot parse {1:?}")]
    BadConfigLine(usize, String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotionKind {
    #[default]
    Linear,
    Sinusoidal,
}

/// Everything that shapes a synthetic scenario. All randomness derives
/// from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub agent_count: usize,
    pub motion: MotionKind,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Sinusoidal lateral amplitude in pixels.
    pub amplitude: f64,
    pub box_min: f64,
    pub box_max: f64,
    pub entry_prob: f64,
    pub exit_prob: f64,
    pub center_jitter: f64,
    pub size_jitter: f64,
    pub miss_prob: f64,
    /// Expected false positives per frame.
    pub fp_rate: f64,
    pub field_noise: f64,
    pub appearance_noise: f64,
    pub pair_stride: usize,
    pub channels: usize,
    /// Feature maps are generated at 1/feature_stride of the image grid.
    pub feature_stride: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            frame_count: 100,
            width: 640,
            height: 480,
            agent_count: 8,
            motion: MotionKind::Linear,
            speed_min: 1.0,
            speed_max: 4.0,
            amplitude: 8.0,
            box_min: 24.0,
            box_max: 48.0,
            entry_prob: 0.0,
            exit_prob: 0.0,
            center_jitter: 0.0,
            size_jitter: 0.0,
            miss_prob: 0.0,
            fp_rate: 0.0,
            field_noise: 0.0,
            appearance_noise: 0.0,
            pair_stride: 1,
            channels: 64,
            feature_stride: 4,
        }
    }
}

impl ScenarioConfig {
    /// Parse a plain `key=value` config file over the defaults.
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(SimError::BadConfigLine(lineno + 1, line.to_string()));
            };
            cfg.set(k.trim(), v.trim())
                .map_err(|_| SimError::BadConfigLine(lineno + 1, line.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ()> {
        fn p<T: std::str::FromStr>(v: &str) -> Result<T, ()> {
            v.parse().map_err(|_| ())
        }
        match key {
            "seed" => self.seed = p(value)?,
            "frame_count" => self.frame_count = p(value)?,
            "width" => self.width = p(value)?,
            "height" => self.height = p(value)?,
            "agent_count" => self.agent_count = p(value)?,
            "motion" => {
                self.motion = match value {
                    "linear" => MotionKind::Linear,
                    "sinusoidal" => MotionKind::Sinusoidal,
                    _ => return Err(()),
                }
            }
            "speed_min" => self.speed_min = p(value)?,
            "speed_max" => self.speed_max = p(value)?,
            "amplitude" => self.amplitude = p(value)?,
            "box_min" => self.box_min = p(value)?,
            "box_max" => self.box_max = p(value)?,
            "entry_prob" => self.entry_prob = p(value)?,
            "exit_prob" => self.exit_prob = p(value)?,
            "center_jitter" => self.center_jitter = p(value)?,
            "size_jitter" => self.size_jitter = p(value)?,
            "miss_prob" => self.miss_prob = p(value)?,
            "fp_rate" => self.fp_rate = p(value)?,
            "field_noise" => self.field_noise = p(value)?,
            "appearance_noise" => self.appearance_noise = p(value)?,
            "pair_stride" => self.pair_stride = p(value)?,
            "channels" => self.channels = p(value)?,
            "feature_stride" => self.feature_stride = p(value)?,
            _ => return Err(()),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("entry_prob", self.entry_prob),
            ("exit_prob", self.exit_prob),
            ("miss_prob", self.miss_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidConfig(format!("{name}={p} outside [0,1]")));
            }
        }
        for (name, s) in [
            ("center_jitter", self.center_jitter),
            ("size_jitter", self.size_jitter),
            ("field_noise", self.field_noise),
            ("appearance_noise", self.appearance_noise),
            ("fp_rate", self.fp_rate),
        ] {
            if s < 0.0 {
                return Err(SimError::InvalidConfig(format!("{name}={s} negative")));
            }
        }
        if self.width == 0 || self.height == 0 || self.frame_count == 0 {
            return Err(SimError::InvalidConfig("dimensions and frame count must be positive".into()));
        }
        if self.pair_stride == 0 || self.feature_stride == 0 || self.channels == 0 {
            return Err(SimError::InvalidConfig("strides and channels must be positive".into()));
        }
        if self.box_min <= 0.0 || self.box_max < self.box_min {
            return Err(SimError::InvalidConfig(format!(
                "bad box size range [{}, {}]",
                self.box_min, self.box_max
            )));
        }
        if self.box_max >= self.width as f64 || self.box_max >= self.height as f64 {
            return Err(SimError::BoxTooLarge(self.box_max, self.width, self.height));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> String {
        let motion = match self.motion {
            MotionKind::Linear => "linear",
            MotionKind::Sinusoidal => "sinusoidal",
        };
        format!(
            "seed={}\nframe_count={}\nwidth={}\nheight={}\nagent_count={}\nmotion={motion}\n\
             speed_min={}\nspeed_max={}\namplitude={}\nbox_min={}\nbox_max={}\n\
             entry_prob={}\nexit_prob={}\ncenter_jitter={}\nsize_jitter={}\nmiss_prob={}\n\
             fp_rate={}\nfield_noise={}\nappearance_noise={}\npair_stride={}\nchannels={}\nfeature_stride={}\n",
            self.seed,
            self.frame_count,
            self.width,
            self.height,
            self.agent_count,
            self.speed_min,
            self.speed_max,
            self.amplitude,
            self.box_min,
            self.box_max,
            self.entry_prob,
            self.exit_prob,
            self.center_jitter,
            self.size_jitter,
            self.miss_prob,
            self.fp_rate,
            self.field_noise,
            self.appearance_noise,
            self.pair_stride,
            self.channels,
            self.feature_stride,
        )
    }
}

/// One ground-truth trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GtTrack {
    pub identity: u64,
    pub entries: Vec<(usize, BBox)>,
}

/// A generated scene. Motion fields and feature maps are materialized on
/// demand so long high-resolution sequences never live in memory at once.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub tracks: Vec<GtTrack>,
    pub detections: BTreeMap<usize, Vec<Detection>>,
    /// Unit appearance code per identity, pairwise cosine below 0.7.
    pub identity_codes: BTreeMap<u64, Vec<f32>>,
}

struct Agent {
    identity: u64,
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    w: f64,
    h: f64,
    phase: f64,
    freq: f64,
    perp: (f64, f64),
    alive: bool,
}

fn sub_rng(seed: u64, a: u64, b: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e3779b97f4a7c15)
            ^ a.wrapping_mul(0xbf58476d1ce4e5b9)
            ^ b.wrapping_mul(0x94d049bb133111eb)
            ^ tag,
    )
}

const CODE_COSINE_LIMIT: f32 = 0.7;

/// A pool of `dim` unit codes with pairwise cosine exactly -1/(dim-1):
/// a centered orthonormal basis under a random signed permutation. Keeps
/// the similarity of any two identities strictly below 1/2, so a cosine
/// verifier with a 0.5 threshold never confuses two pool codes.
fn code_pool(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f32>> {
    let mut axes: Vec<usize> = (0..dim).collect();
    for i in (1..dim).rev() {
        axes.swap(i, rng.gen_range(0..=i));
    }
    let signs: Vec<f64> = (0..dim).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let off = -1.0 / dim as f64;
    let norm = (1.0 - 1.0 / dim as f64).sqrt();
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let centered = off + if axes[j] == i { 1.0 } else { 0.0 };
                    (signs[j] * centered / norm) as f32
                })
                .collect()
        })
        .collect()
}

fn sample_identity_code(rng: &mut ChaCha8Rng, dim: usize, existing: &BTreeMap<u64, Vec<f32>>) -> Vec<f32> {
    let normal = Normal::new(0.0f64, 1.0).unwrap();
    'outer: for _ in 0..1000 {
        let mut v: Vec<f32> = (0..dim).map(|_| normal.sample(rng) as f32).collect();
        let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        if norm < 1e-9 {
            continue;
        }
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
        for code in existing.values() {
            let dot: f32 = v.iter().zip(code).map(|(a, b)| a * b).sum();
            if dot > CODE_COSINE_LIMIT {
                continue 'outer;
            }
        }
        return v;
    }
    panic!("could not sample a sufficiently distinct identity code");
}

/// Generate a scenario. Fully deterministic given the config.
pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SimError> {
    cfg.validate()?;
    let mut rng = sub_rng(cfg.seed, 0, 0, 1);
    let mut codes = BTreeMap::new();
    let mut agents: Vec<Agent> = Vec::new();
    let mut next_identity = 1u64;
    let pool = code_pool(&mut rng, cfg.channels);

    let spawn = |rng: &mut ChaCha8Rng, codes: &mut BTreeMap<u64, Vec<f32>>, next_identity: &mut u64| {
        let w = rng.gen_range(cfg.box_min..=cfg.box_max);
        let h = rng.gen_range(cfg.box_min..=cfg.box_max);
        let cx = rng.gen_range(w / 2.0..cfg.width as f64 - w / 2.0);
        let cy = rng.gen_range(h / 2.0..cfg.height as f64 - h / 2.0);
        let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
        let dir = rng.gen_range(0.0..std::f64::consts::TAU);
        let (vx, vy) = (speed * dir.cos(), speed * dir.sin());
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let period = rng.gen_range(30.0..60.0);
        let identity = *next_identity;
        *next_identity += 1;
        let code = match pool.get(identity as usize - 1) {
            Some(c) => c.clone(),
            None => sample_identity_code(rng, cfg.channels, codes),
        };
        codes.insert(identity, code);
        Agent {
            identity,
            cx,
            cy,
            vx,
            vy,
            w,
            h,
            phase,
            freq: std::f64::consts::TAU / period,
            perp: (-dir.sin(), dir.cos()),
            alive: true,
        }
    };

    for _ in 0..cfg.agent_count {
        agents.push(spawn(&mut rng, &mut codes, &mut next_identity));
    }

    let mut tracks: BTreeMap<u64, GtTrack> = BTreeMap::new();
    let mut detections: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
    let jitter = Normal::new(0.0f64, 1.0).unwrap();

    for frame in 1..=cfg.frame_count {
        if frame > 1 {
            // retire and admit agents, then move everyone
            for agent in agents.iter_mut().filter(|a| a.alive) {
                if cfg.exit_prob > 0.0 && rng.gen_bool(cfg.exit_prob) {
                    agent.alive = false;
                }
            }
            if cfg.entry_prob > 0.0 && rng.gen_bool(cfg.entry_prob) {
                agents.push(spawn(&mut rng, &mut codes, &mut next_identity));
            }
            let t = frame as f64;
            for agent in agents.iter_mut().filter(|a| a.alive) {
                let (mut dx, mut dy) = (agent.vx, agent.vy);
                if cfg.motion == MotionKind::Sinusoidal {
                    let s = cfg.amplitude
                        * ((agent.freq * t + agent.phase).sin()
                            - (agent.freq * (t - 1.0) + agent.phase).sin());
                    dx += agent.perp.0 * s;
                    dy += agent.perp.1 * s;
                }
                agent.cx += dx;
                agent.cy += dy;
                // reflect at frame borders so boxes stay inside
                let (lo_x, hi_x) = (agent.w / 2.0, cfg.width as f64 - agent.w / 2.0);
                let (lo_y, hi_y) = (agent.h / 2.0, cfg.height as f64 - agent.h / 2.0);
                if agent.cx < lo_x {
                    agent.cx = (2.0 * lo_x - agent.cx).min(hi_x);
                    agent.vx = -agent.vx;
                    agent.perp.0 = -agent.perp.0;
                } else if agent.cx > hi_x {
                    agent.cx = (2.0 * hi_x - agent.cx).max(lo_x);
                    agent.vx = -agent.vx;
                    agent.perp.0 = -agent.perp.0;
                }
                if agent.cy < lo_y {
                    agent.cy = (2.0 * lo_y - agent.cy).min(hi_y);
                    agent.vy = -agent.vy;
                    agent.perp.1 = -agent.perp.1;
                } else if agent.cy > hi_y {
                    agent.cy = (2.0 * hi_y - agent.cy).max(lo_y);
                    agent.vy = -agent.vy;
                    agent.perp.1 = -agent.perp.1;
                }
            }
        }

        let frame_dets = detections.entry(frame).or_default();
        for agent in agents.iter().filter(|a| a.alive) {
            let bbox = BBox::new(agent.cx - agent.w / 2.0, agent.cy - agent.h / 2.0, agent.w, agent.h);
            tracks
                .entry(agent.identity)
                .or_insert_with(|| GtTrack { identity: agent.identity, entries: Vec::new() })
                .entries
                .push((frame, bbox));
            // detector model: miss, then jitter
            if cfg.miss_prob > 0.0 && rng.gen_bool(cfg.miss_prob) {
                continue;
            }
            let mut b = bbox;
            if cfg.center_jitter > 0.0 {
                b.left += cfg.center_jitter * jitter.sample(&mut rng);
                b.top += cfg.center_jitter * jitter.sample(&mut rng);
            }
            if cfg.size_jitter > 0.0 {
                b.width = (b.width + cfg.size_jitter * jitter.sample(&mut rng)).max(1.0);
                b.height = (b.height + cfg.size_jitter * jitter.sample(&mut rng)).max(1.0);
            }
            frame_dets.push(Detection { frame_index: frame, bbox: b, confidence: 0.9 });
        }
        if cfg.fp_rate > 0.0 {
            let n = Poisson::new(cfg.fp_rate).unwrap().sample(&mut rng) as usize;
            for _ in 0..n {
                let w = rng.gen_range(cfg.box_min..=cfg.box_max);
                let h = rng.gen_range(cfg.box_min..=cfg.box_max);
                let left = rng.gen_range(0.0..(cfg.width as f64 - w));
                let top = rng.gen_range(0.0..(cfg.height as f64 - h));
                frame_dets.push(Detection {
                    frame_index: frame,
                    bbox: BBox::new(left, top, w, h),
                    confidence: 0.3,
                });
            }
        }
    }

    Ok(Scenario {
        config: cfg.clone(),
        tracks: tracks.into_values().collect(),
        detections,
        identity_codes: codes,
    })
}

impl Scenario {
    /// Ground truth in the shape the metrics module consumes.
    pub fn ground_truth_map(&self) -> BTreeMap<usize, Vec<(u64, BBox)>> {
        let mut out: BTreeMap<usize, Vec<(u64, BBox)>> = BTreeMap::new();
        for t in &self.tracks {
            for &(frame, bbox) in &t.entries {
                out.entry(frame).or_default().push((t.identity, bbox));
            }
        }
        out
    }

    fn boxes_at(&self, frame: usize) -> Vec<(u64, BBox)> {
        let mut out = Vec::new();
        for t in &self.tracks {
            if let Some(&(_, bbox)) = t.entries.iter().find(|&&(f, _)| f == frame) {
                out.push((t.identity, bbox));
            }
        }
        out
    }

    /// Matched box pairs between two frames (identities present in both).
    pub fn matches_between(&self, from: usize, to: usize) -> Vec<BoxMatch> {
        let b2 = self.boxes_at(to);
        self.boxes_at(from)
            .into_iter()
            .filter_map(|(id, box1)| {
                b2.iter()
                    .find(|&&(id2, _)| id2 == id)
                    .map(|&(_, box2)| BoxMatch { box1, box2, identity: id })
            })
            .collect()
    }

    /// Motion field between two frames: exact ground-truth encoding plus
    /// i.i.d. Gaussian noise on occupied pixels.
    pub fn field_between(&self, from: usize, to: usize) -> MotionField {
        let cfg = &self.config;
        let matches = self.matches_between(from, to);
        let mut field = encode_ground_truth(&matches, cfg.width, cfg.height)
            .expect("scenario grids are validated at generation");
        if cfg.field_noise > 0.0 {
            let mut rng = sub_rng(cfg.seed, from as u64, to as u64, 2);
            let normal = Normal::new(0.0f64, cfg.field_noise).unwrap();
            for i in 0..field.fx1.len() {
                if field.occupancy1[i] {
                    field.fx1[i] += normal.sample(&mut rng) as f32;
                    field.fy1[i] += normal.sample(&mut rng) as f32;
                }
                if field.occupancy2[i] {
                    field.fx2[i] += normal.sample(&mut rng) as f32;
                    field.fy2[i] += normal.sample(&mut rng) as f32;
                }
            }
        }
        field
    }

    /// Feature map of one frame at `1/feature_stride` resolution: each
    /// identity's code painted over its (downscaled) box, smallest box
    /// winning contested pixels, plus Gaussian noise; background zero.
    pub fn fmap_for(&self, frame: usize) -> FeatureMap {
        let cfg = &self.config;
        let s = cfg.feature_stride as f64;
        let fw = (cfg.width as f64 / s).ceil() as usize;
        let fh = (cfg.height as f64 / s).ceil() as usize;
        let mut fmap = FeatureMap::zeros(fw, fh, cfg.channels);
        let mut owner_area = vec![f64::INFINITY; fw * fh];

        let mut boxes = self.boxes_at(frame);
        boxes.sort_by_key(|&(id, _)| id);
        let plane = fw * fh;
        for (id, bbox) in boxes {
            let code = &self.identity_codes[&id];
            let small = bbox.downscale(s);
            let Some((x0, y0, x1, y1)) = covered_range(&small, fw, fh) else {
                continue;
            };
            let area = small.area();
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * fw + x;
                    if area < owner_area[i] {
                        owner_area[i] = area;
                        for (c, &v) in code.iter().enumerate() {
                            fmap.values[c * plane + i] = v;
                        }
                    }
                }
            }
        }
        if cfg.appearance_noise > 0.0 {
            let mut rng = sub_rng(cfg.seed, frame as u64, 0, 3);
            let normal = Normal::new(0.0f64, cfg.appearance_noise).unwrap();
            for i in 0..plane {
                if owner_area[i].is_finite() {
                    for c in 0..cfg.channels {
                        fmap.values[c * plane + i] += normal.sample(&mut rng) as f32;
                    }
                }
            }
        }
        fmap
    }

    /// The frame indices the tracker visits: 1, 1+stride, 1+2*stride, ...
    pub fn tracked_frames(&self) -> Vec<usize> {
        (1..=self.config.frame_count).step_by(self.config.pair_stride).collect()
    }

    pub fn detections_at(&self, frame: usize) -> Vec<Detection> {
        self.detections.get(&frame).cloned().unwrap_or_default()
    }

    /// Tracker input for the pair (`from`, `from + stride`).
    pub fn bundle_for(&self, from: usize) -> FrameBundle {
        let to = from + self.config.pair_stride;
        FrameBundle {
            frame_index: to,
            detections: self.detections_at(to),
            field: self.field_between(from, to),
            fmap_prev: self.fmap_for(from),
            fmap_next: self.fmap_for(to),
            feature_scale: self.config.feature_stride as f64,
        }
    }

    /// Write the scenario to a sequence directory: metadata, gt/det text
    /// files, field files per frame pair and feature-map files per frame.
    pub fn export(&self, dir: &SequenceDir) -> Result<(), SimError> {
        let cfg = &self.config;
        let info = SequenceInfo {
            name: format!("synth-{:04}", cfg.seed),
            frame_count: cfg.frame_count,
            image_width: cfg.width,
            image_height: cfg.height,
            frame_rate: 30.0,
        };
        dir.write_file(&dir.seqinfo_path(), write_seqinfo(&info).as_bytes())?;

        let mut gt = String::new();
        for t in &self.tracks {
            for &(frame, b) in &t.entries {
                gt.push_str(&format!(
                    "{frame},{},{},{},{},{},1,1,1.0\n",
                    t.identity, b.left, b.top, b.width, b.height
                ));
            }
        }
        dir.write_file(&dir.gt_path(), gt.as_bytes())?;

        let mut det = String::new();
        for (frame, dets) in &self.detections {
            for d in dets {
                det.push_str(&format!(
                    "{frame},-1,{},{},{},{},{},-1,-1,-1\n",
                    d.bbox.left, d.bbox.top, d.bbox.width, d.bbox.height, d.confidence
                ));
            }
        }
        dir.write_file(&dir.det_path(), det.as_bytes())?;

        for from in 1..=cfg.frame_count.saturating_sub(cfg.pair_stride) {
            let to = from + cfg.pair_stride;
            let bytes = write_field(&self.field_between(from, to))?;
            dir.write_file(&dir.field_path(from, to), &bytes)?;
        }
        for frame in 1..=cfg.frame_count {
            let bytes = write_fmap(&self.fmap_for(frame))?;
            dir.write_file(&dir.fmap_path(frame), &bytes)?;
        }
        Ok(())
    }
}
