//! Frame-wise appearance features: per-box descriptor pooling, similarity
//! scoring, BCE verification loss and training-pair composition.
//!
//! The label convention follows the verification setup: label 0 marks a
//! same-object pair, label 1 a cross-object pair.

use crate::geometry::{covered_range, BBox};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AppearanceError {
    #[error("box {0:?} lies fully outside the {1}x{2} feature map")]
    BoxOutsideMap(BBox, usize, usize),
    #[error("prediction/label length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty sample set")]
    EmptyInput,
}

/// Whole-frame appearance tensor, `channels` planes of `width`x`height`
/// values stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, values: vec![0.0; width * height * channels] }
    }

    #[inline]
    pub fn idx(&self, c: usize, x: usize, y: usize) -> usize {
        c * self.width * self.height + y * self.width + x
    }
}

/// Unit-norm per-box appearance vector pooled from a feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceDescriptor(pub Vec<f32>);

impl AppearanceDescriptor {
    /// Build from an arbitrary vector by L2 normalization; an all-zero
    /// vector becomes the uniform unit vector.
    pub fn from_vec(mut v: Vec<f32>) -> Self {
        let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x = (*x as f64 / norm) as f32;
            }
        } else {
            let u = (1.0 / (v.len() as f64).sqrt()) as f32;
            v.fill(u);
        }
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Training sample for the verification loss: a descriptor pair with
/// label 0 (same object) or 1 (different objects).
#[derive(Debug, Clone, PartialEq)]
pub struct ReIdSample {
    pub pair: (AppearanceDescriptor, AppearanceDescriptor),
    pub label: u8,
}

/// Pluggable similarity contract so a learned verifier can replace the
/// default cosine model.
pub trait SimilarityModel {
    /// Score in [0, 1]; higher means more likely the same object.
    fn score(&self, a: &AppearanceDescriptor, b: &AppearanceDescriptor) -> f64;
}

/// Default model: cosine similarity rescaled from [-1, 1] to [0, 1].
#[derive(Debug, Clone, Copy, Default)]
pub struct CosineSimilarity;

impl SimilarityModel for CosineSimilarity {
    fn score(&self, a: &AppearanceDescriptor, b: &AppearanceDescriptor) -> f64 {
        similarity(a, b)
    }
}

/// Rescaled cosine similarity of two unit descriptors, in [0, 1].
pub fn similarity(a: &AppearanceDescriptor, b: &AppearanceDescriptor) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let dot: f64 = a.0.iter().zip(&b.0).map(|(&x, &y)| x as f64 * y as f64).sum();
    ((1.0 + dot) / 2.0).clamp(0.0, 1.0)
}

/// Pool a per-box descriptor: per-channel mean over the box's covered
/// pixels, then L2-normalized.
///
/// A box inside the map that covers no cell center falls back to the cell
/// containing its center.
pub fn crop_descriptor(fmap: &FeatureMap, b: &BBox) -> Result<AppearanceDescriptor, AppearanceError> {
    Ok(crop_descriptor_masked(fmap, b, &[])?.0)
}

/// [`crop_descriptor`] with occlusion masking.
///
/// Map cells contested by a smaller box hold that box's appearance, so
/// cells covered by a strictly smaller `occluder` are excluded from the
/// pool. Falls back to the unmasked crop when masking leaves nothing;
/// the second return value is the number of unoccluded cells pooled,
/// zero when that fallback was taken (the box's appearance is hidden).
pub fn crop_descriptor_masked(
    fmap: &FeatureMap,
    b: &BBox,
    occluders: &[BBox],
) -> Result<(AppearanceDescriptor, usize), AppearanceError> {
    let (x0, y0, x1, y1) = match covered_range(b, fmap.width, fmap.height) {
        Some(r) => r,
        None => {
            let (cx, cy) = b.center();
            if cx < 0.0 || cy < 0.0 || cx >= fmap.width as f64 || cy >= fmap.height as f64 {
                return Err(AppearanceError::BoxOutsideMap(*b, fmap.width, fmap.height));
            }
            let px = (cx as usize).min(fmap.width - 1);
            let py = (cy as usize).min(fmap.height - 1);
            (px, py, px, py)
        }
    };
    let area = b.area();
    let masks: Vec<(usize, usize, usize, usize)> = occluders
        .iter()
        .filter(|o| o.area() < area)
        .filter_map(|o| covered_range(o, fmap.width, fmap.height))
        .collect();
    let occluded = |x: usize, y: usize| {
        masks.iter().any(|&(mx0, my0, mx1, my1)| x >= mx0 && x <= mx1 && y >= my0 && y <= my1)
    };

    let mut pooled = vec![0.0f32; fmap.channels];
    let mut visible = 0usize;
    for pass in 0..2 {
        let mut count = 0usize;
        for c in 0..fmap.channels {
            let plane = c * fmap.width * fmap.height;
            let mut sum = 0.0f64;
            for y in y0..=y1 {
                let row = plane + y * fmap.width;
                for x in x0..=x1 {
                    if pass == 0 && occluded(x, y) {
                        continue;
                    }
                    sum += fmap.values[row + x] as f64;
                    if c == 0 {
                        count += 1;
                    }
                }
            }
            if count == 0 {
                break;
            }
            pooled[c] = (sum / count as f64) as f32;
        }
        if count > 0 {
            if pass == 0 {
                visible = count;
            }
            break;
        }
    }
    Ok((AppearanceDescriptor::from_vec(pooled), visible))
}

const BCE_CLAMP: f64 = 1e-7;

/// Binary cross-entropy over verifier scores, labels 0 (same) / 1 (different).
/// Scores are clamped to [1e-7, 1 - 1e-7] before taking logs.
pub fn bce_loss(predictions: &[f64], labels: &[u8]) -> Result<f64, AppearanceError> {
    if predictions.len() != labels.len() {
        return Err(AppearanceError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(AppearanceError::EmptyInput);
    }
    let mut total = 0.0f64;
    for (&h, &s) in predictions.iter().zip(labels) {
        let h = h.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let s = s as f64;
        total += s * h.ln() + (1.0 - s) * (1.0 - h).ln();
    }
    Ok(-total / predictions.len() as f64)
}

/// Compose verification training pairs from two identified frames.
///
/// One positive (label 0) per identity present in both frames; negatives
/// (label 1) drawn uniformly without replacement from all cross-identity
/// (frame-1, frame-2) pairs, capped at four per positive. Deterministic
/// given the seed.
pub fn compose_training_pairs(
    fmap1: &FeatureMap,
    boxes1: &[(u64, BBox)],
    fmap2: &FeatureMap,
    boxes2: &[(u64, BBox)],
    seed: u64,
) -> Result<Vec<ReIdSample>, AppearanceError> {
    let desc1: Vec<(u64, AppearanceDescriptor)> = boxes1
        .iter()
        .map(|(id, b)| crop_descriptor(fmap1, b).map(|d| (*id, d)))
        .collect::<Result<_, _>>()?;
    let desc2: Vec<(u64, AppearanceDescriptor)> = boxes2
        .iter()
        .map(|(id, b)| crop_descriptor(fmap2, b).map(|d| (*id, d)))
        .collect::<Result<_, _>>()?;

    let mut samples = Vec::new();
    for (id1, d1) in &desc1 {
        if let Some((_, d2)) = desc2.iter().find(|(id2, _)| id2 == id1) {
            samples.push(ReIdSample { pair: (d1.clone(), d2.clone()), label: 0 });
        }
    }
    let positives = samples.len();

    let mut negatives: Vec<(usize, usize)> = Vec::new();
    for (i, (id1, _)) in desc1.iter().enumerate() {
        for (j, (id2, _)) in desc2.iter().enumerate() {
            if id1 != id2 {
                negatives.push((i, j));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    negatives.shuffle(&mut rng);
    negatives.truncate(4 * positives);
    for (i, j) in negatives {
        samples.push(ReIdSample { pair: (desc1[i].1.clone(), desc2[j].1.clone()), label: 1 });
    }
    Ok(samples)
}
