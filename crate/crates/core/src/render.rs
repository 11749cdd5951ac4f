//! Static overlays of detected and field-predicted boxes for one frame
//! pair, emitted as SVG (text-diffable) or raw PPM (pixel-exact).

use crate::fmf::{predict_box, Aggregator, Direction};
use crate::geometry::BBox;
use crate::io::{IoError, SequenceDir};
use crate::tracker::Track;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("no motion field file starting at frame {0}")]
    MissingField(usize),
    #[error("frame {0} outside sequence of {1} frames")]
    FrameOutOfRange(usize, usize),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Color(pub u8, pub u8, pub u8);

/// Detections of the former frame.
pub const DETECTION_FORMER: Color = Color(40, 90, 255);
/// Detections of the latter frame.
pub const DETECTION_LATTER: Color = Color(230, 40, 230);
/// Field-predicted boxes.
pub const PREDICTED: Color = Color(250, 210, 40);

#[derive(Debug, Clone)]
pub struct OverlayBox {
    pub bbox: BBox,
    pub color: Color,
    pub label: Option<String>,
}

/// A resolved overlay: canvas size plus labeled boxes in draw order.
#[derive(Debug, Clone)]
pub struct OverlayScene {
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<OverlayBox>,
}

/// Build the overlay for the pair starting at `frame`: former- and
/// latter-frame detections plus the forward-predicted position of every
/// hypothesis box present at `frame`.
pub fn render_overlay(
    seq: &SequenceDir,
    hyp: &[Track],
    frame: usize,
) -> Result<OverlayScene, RenderError> {
    let info = seq.read_seqinfo()?;
    if frame == 0 || frame >= info.frame_count {
        return Err(RenderError::FrameOutOfRange(frame, info.frame_count));
    }
    // pairing stride is discovered from the files on disk
    let (field, latter) = (1..=8)
        .find_map(|stride| {
            let to = frame + stride;
            seq.read_field(frame, to).ok().map(|f| (f, to))
        })
        .ok_or(RenderError::MissingField(frame))?;

    let detections = seq.read_detections()?.by_frame;
    let mut boxes = Vec::new();
    if let Some(dets) = detections.get(&frame) {
        for d in dets {
            boxes.push(OverlayBox { bbox: d.bbox, color: DETECTION_FORMER, label: None });
        }
    }
    if let Some(dets) = detections.get(&latter) {
        for d in dets {
            boxes.push(OverlayBox { bbox: d.bbox, color: DETECTION_LATTER, label: None });
        }
    }
    for t in hyp {
        if let Some(&(_, bbox)) = t.entries.iter().find(|&&(f, _)| f == frame) {
            if let Ok(p) = predict_box(&field, Direction::Forward, &bbox, Aggregator::Median) {
                boxes.push(OverlayBox { bbox: p, color: PREDICTED, label: Some(format!("{}", t.id)) });
            }
        }
    }
    Ok(OverlayScene { width: info.image_width, height: info.image_height, boxes })
}

impl OverlayScene {
    pub fn to_svg(&self) -> String {
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"{w}\" height=\"{h}\" fill=\"#181818\"/>\n",
            w = self.width,
            h = self.height
        );
        for b in &self.boxes {
            let Color(r, g, bl) = b.color;
            out.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"rgb({r},{g},{bl})\" stroke-width=\"2\"/>\n",
                b.bbox.left, b.bbox.top, b.bbox.width, b.bbox.height
            ));
            if let Some(label) = &b.label {
                out.push_str(&format!(
                    "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"rgb({r},{g},{bl})\" font-size=\"12\">{label}</text>\n",
                    b.bbox.left + 2.0,
                    b.bbox.top - 3.0
                ));
            }
        }
        out.push_str("</svg>\n");
        out
    }

    /// Binary P6 PPM with 1-px box outlines; background dark gray.
    pub fn to_ppm(&self) -> Vec<u8> {
        let (w, h) = (self.width, self.height);
        let mut pixels = vec![24u8; w * h * 3];
        let mut put = |x: i64, y: i64, c: Color| {
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                let i = (y as usize * w + x as usize) * 3;
                pixels[i] = c.0;
                pixels[i + 1] = c.1;
                pixels[i + 2] = c.2;
            }
        };
        for b in &self.boxes {
            let x0 = b.bbox.left.round() as i64;
            let y0 = b.bbox.top.round() as i64;
            let x1 = b.bbox.right().round() as i64;
            let y1 = b.bbox.bottom().round() as i64;
            for x in x0..=x1 {
                put(x, y0, b.color);
                put(x, y1, b.color);
            }
            for y in y0..=y1 {
                put(x0, y, b.color);
                put(x1, y, b.color);
            }
        }
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        out.extend_from_slice(&pixels);
        out
    }
}
