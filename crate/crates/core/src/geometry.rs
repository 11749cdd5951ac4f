//! Axis-aligned bounding-box arithmetic: overlap, translation and
//! rasterization support for motion-field encoding.

/// Axis-aligned box in continuous pixel coordinates.
///
/// `width` and `height` must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        debug_assert!(width > 0.0 && height > 0.0, "degenerate box {width}x{height}");
        Self { left, top, width, height }
    }

    pub fn right(&self) -> f64 {
        self.left + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.top + self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0.0
            && self.height > 0.0
            && self.left.is_finite()
            && self.top.is_finite()
            && self.width.is_finite()
            && self.height.is_finite()
    }

    /// Translate the box by `(dx, dy)`; size is unchanged.
    pub fn shift(&self, dx: f64, dy: f64) -> Self {
        Self { left: self.left + dx, top: self.top + dy, ..*self }
    }

    /// Uniformly scale all coordinates by `1 / factor`, mapping an
    /// image-space box onto a grid downsampled by `factor`.
    pub fn downscale(&self, factor: f64) -> Self {
        Self {
            left: self.left / factor,
            top: self.top / factor,
            width: self.width / factor,
            height: self.height / factor,
        }
    }
}

/// Intersection-over-union of two boxes. 0 when disjoint, 1 iff identical.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.left.max(b.left)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.top.max(b.top)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter / union
}

/// Inclusive integer pixel range covered by `b` on a `grid_w`x`grid_h` grid,
/// or `None` when no cell center falls inside the box.
///
/// A cell `(x, y)` is covered when its center `(x + 0.5, y + 0.5)` lies
/// inside the box under the half-open-from-the-left rule: strictly right of
/// `left`, at most `right` (and the same vertically). The range is clipped
/// to the grid.
pub fn covered_range(b: &BBox, grid_w: usize, grid_h: usize) -> Option<(usize, usize, usize, usize)> {
    // x > left - 0.5 and x <= right - 0.5, as integers
    let x0 = (b.left - 0.5).floor() as i64 + 1;
    let x1 = (b.right() - 0.5).floor() as i64;
    let y0 = (b.top - 0.5).floor() as i64 + 1;
    let y1 = (b.bottom() - 0.5).floor() as i64;
    let x0 = x0.max(0);
    let y0 = y0.max(0);
    let x1 = x1.min(grid_w as i64 - 1);
    let y1 = y1.min(grid_h as i64 - 1);
    if x0 > x1 || y0 > y1 {
        None
    } else {
        Some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
    }
}

/// All integer pixels whose cell center lies inside `b`, clipped to the grid.
pub fn covered_pixels(b: &BBox, grid_w: usize, grid_h: usize) -> Vec<(usize, usize)> {
    match covered_range(b, grid_w, grid_h) {
        None => Vec::new(),
        Some((x0, y0, x1, y1)) => {
            let mut out = Vec::with_capacity((x1 - x0 + 1) * (y1 - y0 + 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    out.push((x, y));
                }
            }
            out
        }
    }
}
