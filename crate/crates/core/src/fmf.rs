//! Frame-wise motion fields: ground-truth encoding from matched box pairs,
//! per-box displacement decoding, and the masked MSE verification loss.
//!
//! A field holds four dense channels between a former and a latter frame:
//! the forward x/y displacement painted over each box's pixels in the
//! former frame, and the negated displacement painted over the box's pixels
//! in the latter frame.

use crate::geometry::{covered_range, BBox};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("grid dimensions must be positive, got {0}x{1}")]
    EmptyGrid(usize, usize),
    #[error("duplicate identity {0} in match list")]
    DuplicateIdentity(u64),
    #[error("box {0:?} lies fully outside the {1}x{2} grid")]
    BoxOutsideGrid(BBox, usize, usize),
    #[error("field dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Which pair of channels to read when decoding a displacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Former-frame channels: displacement from former to latter frame.
    Forward,
    /// Latter-frame channels: displacement from latter back to former frame.
    Backward,
}

/// How per-pixel channel values are reduced to one displacement per box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregator {
    Mean,
    #[default]
    Median,
}

/// A matched box pair: the same identity observed in two frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMatch {
    pub box1: BBox,
    pub box2: BBox,
    pub identity: u64,
}

/// Dense bi-directional motion field between two frames.
///
/// Channel values are stored as `f32` row-major; occupancy masks mark the
/// pixels covered by any annotated box in the respective frame. Values on
/// unoccupied pixels are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub width: usize,
    pub height: usize,
    pub fx1: Vec<f32>,
    pub fy1: Vec<f32>,
    pub fx2: Vec<f32>,
    pub fy2: Vec<f32>,
    pub occupancy1: Vec<bool>,
    pub occupancy2: Vec<bool>,
}

impl MotionField {
    /// All-zero field with empty occupancy.
    pub fn zeros(width: usize, height: usize) -> Result<Self, FieldError> {
        if width == 0 || height == 0 {
            return Err(FieldError::EmptyGrid(width, height));
        }
        let n = width * height;
        Ok(Self {
            width,
            height,
            fx1: vec![0.0; n],
            fy1: vec![0.0; n],
            fx2: vec![0.0; n],
            fy2: vec![0.0; n],
            occupancy1: vec![false; n],
            occupancy2: vec![false; n],
        })
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    fn channels(&self, direction: Direction) -> (&[f32], &[f32], &[bool]) {
        match direction {
            Direction::Forward => (&self.fx1, &self.fy1, &self.occupancy1),
            Direction::Backward => (&self.fx2, &self.fy2, &self.occupancy2),
        }
    }
}

/// Encode the ground-truth field for a set of matched boxes.
///
/// Every pixel of `box1` carries the center displacement from `box1` to
/// `box2` in the forward channels; every pixel of `box2` carries the
/// negation in the backward channels. Where boxes overlap, the box with
/// the smallest area owns the pixel (ties go to the earlier match).
pub fn encode_ground_truth(
    matches: &[BoxMatch],
    width: usize,
    height: usize,
) -> Result<MotionField, FieldError> {
    let mut field = MotionField::zeros(width, height)?;
    let mut seen = std::collections::HashSet::new();
    for m in matches {
        if !seen.insert(m.identity) {
            return Err(FieldError::DuplicateIdentity(m.identity));
        }
    }

    // Paint larger boxes first so the smallest covering box ends up owning
    // each contested pixel; equal areas painted in reverse list order so
    // the earliest match wins ties.
    let paint_order = |areas: Vec<f64>| -> Vec<usize> {
        let mut order: Vec<usize> = (0..areas.len()).collect();
        order.sort_by(|&a, &b| {
            areas[b].partial_cmp(&areas[a]).unwrap().then(b.cmp(&a))
        });
        order
    };
    let order1 = paint_order(matches.iter().map(|m| m.box1.area()).collect());
    let order2 = paint_order(matches.iter().map(|m| m.box2.area()).collect());

    for &mi in &order1 {
        let m = &matches[mi];
        let (c1x, c1y) = m.box1.center();
        let (c2x, c2y) = m.box2.center();
        let dx = (c2x - c1x) as f32;
        let dy = (c2y - c1y) as f32;
        if let Some((x0, y0, x1, y1)) = covered_range(&m.box1, width, height) {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * width + x;
                    field.fx1[i] = dx;
                    field.fy1[i] = dy;
                    field.occupancy1[i] = true;
                }
            }
        }
    }
    for &mi in &order2 {
        let m = &matches[mi];
        let (c1x, c1y) = m.box1.center();
        let (c2x, c2y) = m.box2.center();
        let dx = (c2x - c1x) as f32;
        let dy = (c2y - c1y) as f32;
        if let Some((x0, y0, x1, y1)) = covered_range(&m.box2, width, height) {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let i = y * width + x;
                    field.fx2[i] = -dx;
                    field.fy2[i] = -dy;
                    field.occupancy2[i] = true;
                }
            }
        }
    }
    Ok(field)
}

fn aggregate(values: &mut Vec<f64>, aggregator: Aggregator) -> f64 {
    match aggregator {
        Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregator::Median => {
            let n = values.len();
            let mid = n / 2;
            values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            if n % 2 == 1 {
                values[mid]
            } else {
                (values[mid - 1] + values[mid]) / 2.0
            }
        }
    }
}

/// Decode the displacement of a box from the field.
///
/// Aggregates channel values over the box's covered pixels, restricted to
/// occupancy-true pixels when any are covered; falls back to all covered
/// pixels otherwise. Errors when the box covers no grid cell at all.
pub fn box_displacement(
    field: &MotionField,
    direction: Direction,
    b: &BBox,
    aggregator: Aggregator,
) -> Result<(f64, f64), FieldError> {
    box_displacement_masked(field, direction, b, aggregator, &[])
}

/// [`box_displacement`] with occlusion masking.
///
/// Cells contested by a smaller box store that box's displacement, so when
/// the caller knows which other boxes share the frame it can pass them as
/// `occluders`: cells covered by a strictly smaller occluder are skipped.
/// Falls back to the unmasked decode when masking leaves nothing.
pub fn box_displacement_masked(
    field: &MotionField,
    direction: Direction,
    b: &BBox,
    aggregator: Aggregator,
    occluders: &[BBox],
) -> Result<(f64, f64), FieldError> {
    let Some((x0, y0, x1, y1)) = covered_range(b, field.width, field.height) else {
        return Err(FieldError::BoxOutsideGrid(*b, field.width, field.height));
    };
    let (cx, cy, occ) = field.channels(direction);

    let area = b.area();
    let masks: Vec<(usize, usize, usize, usize)> = occluders
        .iter()
        .filter(|o| o.area() < area)
        .filter_map(|o| covered_range(o, field.width, field.height))
        .collect();
    let occluded = |x: usize, y: usize| {
        masks.iter().any(|&(mx0, my0, mx1, my1)| x >= mx0 && x <= mx1 && y >= my0 && y <= my1)
    };

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for pass in 0..3 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * field.width + x;
                let keep = match pass {
                    0 => occ[i] && !occluded(x, y),
                    1 => occ[i],
                    _ => true,
                };
                if keep {
                    xs.push(cx[i] as f64);
                    ys.push(cy[i] as f64);
                }
            }
        }
        if !xs.is_empty() {
            break;
        }
    }
    Ok((aggregate(&mut xs, aggregator), aggregate(&mut ys, aggregator)))
}

/// Translate `b` by the displacement decoded from the field.
pub fn predict_box(
    field: &MotionField,
    direction: Direction,
    b: &BBox,
    aggregator: Aggregator,
) -> Result<BBox, FieldError> {
    let (dx, dy) = box_displacement(field, direction, b, aggregator)?;
    Ok(b.shift(dx, dy))
}

/// [`predict_box`] with occlusion masking; see [`box_displacement_masked`].
pub fn predict_box_masked(
    field: &MotionField,
    direction: Direction,
    b: &BBox,
    aggregator: Aggregator,
    occluders: &[BBox],
) -> Result<BBox, FieldError> {
    let (dx, dy) = box_displacement_masked(field, direction, b, aggregator, occluders)?;
    Ok(b.shift(dx, dy))
}

/// Masked MSE between a predicted and a ground-truth field.
///
/// Sums squared channel differences over each match's box pixels in both
/// frames; background pixels contribute nothing. Accumulates in `f64`.
pub fn mse_loss(
    predicted: &MotionField,
    truth: &MotionField,
    matches: &[BoxMatch],
) -> Result<f64, FieldError> {
    if predicted.width != truth.width || predicted.height != truth.height {
        return Err(FieldError::DimensionMismatch(
            predicted.width,
            predicted.height,
            truth.width,
            truth.height,
        ));
    }
    let w = predicted.width;
    let h = predicted.height;
    let mut total = 0.0f64;
    for m in matches {
        for (b, px, py, tx, ty) in [
            (&m.box1, &predicted.fx1, &predicted.fy1, &truth.fx1, &truth.fy1),
            (&m.box2, &predicted.fx2, &predicted.fy2, &truth.fx2, &truth.fy2),
        ] {
            if let Some((x0, y0, x1, y1)) = covered_range(b, w, h) {
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let i = y * w + x;
                        let ex = px[i] as f64 - tx[i] as f64;
                        let ey = py[i] as f64 - ty[i] as f64;
                        total += ex * ex + ey * ey;
                    }
                }
            }
        }
    }
    Ok(total)
}
