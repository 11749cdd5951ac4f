//! MOTChallenge text formats, sequence metadata, and binary codecs for
//! motion fields and feature maps.
//!
//! All text formats are UTF-8, newline-delimited, comma-separated. The
//! binary codecs are little-endian on every platform.

use crate::faf::FeatureMap;
use crate::fmf::MotionField;
use crate::geometry::BBox;
use crate::tracker::{Detection, Track, TrackState};
use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: malformed record: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: duplicate entry for frame {frame}, identity {identity}")]
    DuplicateEntry { line: usize, frame: usize, identity: u64 },
    #[error("missing key {0:?} in sequence metadata")]
    MissingKey(&'static str),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("truncated payload: needed {needed} bytes, had {had}")]
    Truncated { needed: usize, had: usize },
    #[error("dimensions overflow the codec limits: {0}x{1}x{2}")]
    DimensionOverflow(usize, usize, usize),
    #[error("non-finite value in encoded data")]
    NonFinite,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// MOT sequence metadata (the `seqinfo.ini` keys the pipeline needs).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInfo {
    pub name: String,
    pub frame_count: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub frame_rate: f64,
}

/// Parse result with the count of skipped degenerate boxes.
#[derive(Debug, Default)]
pub struct ParsedDetections {
    pub by_frame: BTreeMap<usize, Vec<Detection>>,
    pub skipped: usize,
}

fn split_fields(text: &str) -> Vec<&str> {
    text.split(',').map(str::trim).collect()
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, line: usize, text: &str) -> Result<T, IoError> {
    fields
        .get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| IoError::Malformed { line, text: text.to_string() })
}

/// Parse the detection layout `frame,id,left,top,width,height,conf,x,y,z`.
/// The id and trailing fields are ignored; degenerate boxes are skipped
/// and counted.
pub fn parse_detections<R: BufRead>(reader: R) -> Result<ParsedDetections, IoError> {
    let mut out = ParsedDetections::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line_num = lineno + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&text);
        if fields.len() < 7 {
            return Err(IoError::Malformed { line: line_num, text });
        }
        let frame: usize = field(&fields, 0, line_num, &text)?;
        let left: f64 = field(&fields, 2, line_num, &text)?;
        let top: f64 = field(&fields, 3, line_num, &text)?;
        let width: f64 = field(&fields, 4, line_num, &text)?;
        let height: f64 = field(&fields, 5, line_num, &text)?;
        let confidence: f64 = field(&fields, 6, line_num, &text)?;
        if width <= 0.0 || height <= 0.0 {
            out.skipped += 1;
            continue;
        }
        out.by_frame.entry(frame).or_default().push(Detection {
            frame_index: frame,
            bbox: BBox::new(left, top, width, height),
            confidence,
        });
    }
    Ok(out)
}

/// One ground-truth annotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtEntry {
    pub identity: u64,
    pub bbox: BBox,
    pub considered: bool,
}

/// Parse the ground-truth layout; identity must be positive and the
/// consider flag (column 7) of 0 excludes the entry.
pub fn parse_ground_truth<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<usize, Vec<GtEntry>>, IoError> {
    let mut out: BTreeMap<usize, Vec<GtEntry>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line_num = lineno + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&text);
        if fields.len() < 7 {
            return Err(IoError::Malformed { line: line_num, text });
        }
        let frame: usize = field(&fields, 0, line_num, &text)?;
        let identity: i64 = field(&fields, 1, line_num, &text)?;
        if identity <= 0 {
            return Err(IoError::Malformed { line: line_num, text });
        }
        let identity = identity as u64;
        let left: f64 = field(&fields, 2, line_num, &text)?;
        let top: f64 = field(&fields, 3, line_num, &text)?;
        let width: f64 = field(&fields, 4, line_num, &text)?;
        let height: f64 = field(&fields, 5, line_num, &text)?;
        let consider: i64 = field(&fields, 6, line_num, &text)?;
        if width <= 0.0 || height <= 0.0 {
            return Err(IoError::Malformed { line: line_num, text });
        }
        if !seen.insert((frame, identity)) {
            return Err(IoError::DuplicateEntry { line: line_num, frame, identity });
        }
        if consider == 0 {
            continue;
        }
        out.entry(frame).or_default().push(GtEntry {
            identity,
            bbox: BBox::new(left, top, width, height),
            considered: true,
        });
    }
    Ok(out)
}

/// Write tracks in the submission layout, sorted by frame then id, with
/// two-decimal box coordinates and confidence fixed at 1.
pub fn write_results(tracks: &[Track]) -> String {
    let mut rows: Vec<(usize, u64, BBox)> = Vec::new();
    for t in tracks {
        for &(frame, bbox) in &t.entries {
            rows.push((frame, t.id, bbox));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = String::new();
    for (frame, id, b) in rows {
        out.push_str(&format!(
            "{frame},{id},{:.2},{:.2},{:.2},{:.2},1,-1,-1,-1\n",
            b.left, b.top, b.width, b.height
        ));
    }
    out
}

/// Read a results file back into tracks grouped by id.
pub fn parse_results<R: BufRead>(reader: R) -> Result<Vec<Track>, IoError> {
    let mut by_id: BTreeMap<u64, Vec<(usize, BBox)>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line_num = lineno + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&text);
        if fields.len() < 6 {
            return Err(IoError::Malformed { line: line_num, text });
        }
        let frame: usize = field(&fields, 0, line_num, &text)?;
        let id: u64 = field(&fields, 1, line_num, &text)?;
        let left: f64 = field(&fields, 2, line_num, &text)?;
        let top: f64 = field(&fields, 3, line_num, &text)?;
        let width: f64 = field(&fields, 4, line_num, &text)?;
        let height: f64 = field(&fields, 5, line_num, &text)?;
        if width <= 0.0 || height <= 0.0 {
            return Err(IoError::Malformed { line: line_num, text });
        }
        by_id.entry(id).or_default().push((frame, BBox::new(left, top, width, height)));
    }
    let mut tracks = Vec::new();
    for (id, mut entries) in by_id {
        entries.sort_by_key(|&(frame, _)| frame);
        let birth_frame = entries.first().map(|&(f, _)| f).unwrap_or(0);
        let last_frame = entries.last().map(|&(f, _)| f).unwrap_or(0);
        tracks.push(Track::from_entries(id, entries, TrackState::Terminated, birth_frame, last_frame));
    }
    Ok(tracks)
}

const FMF_MAGIC: [u8; 4] = *b"FMF1";
const FAF_MAGIC: [u8; 4] = *b"FAF1";
const MAX_DIM: usize = 1 << 20;

struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.data.len() {
            return Err(IoError::Truncated { needed: self.pos + n, had: self.data.len() });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, IoError> {
        let bytes = self.take(n * 4)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}

/// Serialize a motion field: magic `FMF1`, u32 width/height, the four
/// channels row-major as f32, then the two occupancy masks packed
/// LSB-first and padded to byte boundaries.
pub fn write_field(f: &MotionField) -> Result<Vec<u8>, IoError> {
    if f.width > MAX_DIM || f.height > MAX_DIM || f.width * f.height > MAX_DIM * 64 {
        return Err(IoError::DimensionOverflow(f.width, f.height, 1));
    }
    let n = f.width * f.height;
    let mut out = Vec::with_capacity(12 + n * 16 + 2 * n.div_ceil(8));
    out.extend_from_slice(&FMF_MAGIC);
    out.extend_from_slice(&(f.width as u32).to_le_bytes());
    out.extend_from_slice(&(f.height as u32).to_le_bytes());
    for channel in [&f.fx1, &f.fy1, &f.fx2, &f.fy2] {
        for &v in channel.iter() {
            if !v.is_finite() {
                return Err(IoError::NonFinite);
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&pack_bits(&f.occupancy1));
    out.extend_from_slice(&pack_bits(&f.occupancy2));
    Ok(out)
}

pub fn read_field(data: &[u8]) -> Result<MotionField, IoError> {
    let mut r = ByteReader { data, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != FMF_MAGIC {
        return Err(IoError::BadMagic { expected: FMF_MAGIC, found: magic });
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    if width > MAX_DIM || height > MAX_DIM || width.saturating_mul(height) > MAX_DIM * 64 {
        return Err(IoError::DimensionOverflow(width, height, 1));
    }
    let n = width * height;
    let fx1 = r.f32s(n)?;
    let fy1 = r.f32s(n)?;
    let fx2 = r.f32s(n)?;
    let fy2 = r.f32s(n)?;
    let occupancy1 = unpack_bits(r.take(n.div_ceil(8))?, n);
    let occupancy2 = unpack_bits(r.take(n.div_ceil(8))?, n);
    Ok(MotionField { width, height, fx1, fy1, fx2, fy2, occupancy1, occupancy2 })
}

/// Serialize a feature map: magic `FAF1`, u32 width/height/channels, then
/// channel-major f32 values.
pub fn write_fmap(f: &FeatureMap) -> Result<Vec<u8>, IoError> {
    if f.width > MAX_DIM || f.height > MAX_DIM || f.channels > MAX_DIM {
        return Err(IoError::DimensionOverflow(f.width, f.height, f.channels));
    }
    let mut out = Vec::with_capacity(16 + f.values.len() * 4);
    out.extend_from_slice(&FAF_MAGIC);
    out.extend_from_slice(&(f.width as u32).to_le_bytes());
    out.extend_from_slice(&(f.height as u32).to_le_bytes());
    out.extend_from_slice(&(f.channels as u32).to_le_bytes());
    for &v in &f.values {
        if !v.is_finite() {
            return Err(IoError::NonFinite);
        }
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read_fmap(data: &[u8]) -> Result<FeatureMap, IoError> {
    let mut r = ByteReader { data, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != FAF_MAGIC {
        return Err(IoError::BadMagic { expected: FAF_MAGIC, found: magic });
    }
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let channels = r.u32()? as usize;
    if width > MAX_DIM || height > MAX_DIM || channels > MAX_DIM {
        return Err(IoError::DimensionOverflow(width, height, channels));
    }
    let values = r.f32s(width * height * channels)?;
    Ok(FeatureMap { width, height, channels, values })
}

/// Parse `seqinfo.ini`-style `key=value` metadata. Section headers and
/// unknown keys are ignored; all required keys must be present.
pub fn parse_seqinfo<R: BufRead>(reader: R) -> Result<SequenceInfo, IoError> {
    let mut map = BTreeMap::new();
    for line in reader.lines() {
        let text = line?;
        let t = text.trim();
        if t.is_empty() || t.starts_with('[') || t.starts_with(';') {
            continue;
        }
        if let Some((k, v)) = t.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let get = |key: &'static str| map.get(key).ok_or(IoError::MissingKey(key));
    let parse_num = |key: &'static str| -> Result<f64, IoError> {
        get(key)?.parse().map_err(|_| IoError::MissingKey(key))
    };
    Ok(SequenceInfo {
        name: get("name")?.clone(),
        frame_count: parse_num("seqLength")? as usize,
        image_width: parse_num("imWidth")? as usize,
        image_height: parse_num("imHeight")? as usize,
        frame_rate: parse_num("frameRate")?,
    })
}

pub fn write_seqinfo(info: &SequenceInfo) -> String {
    format!(
        "[Sequence]\nname={}\nseqLength={}\nimWidth={}\nimHeight={}\nframeRate={}\n",
        info.name, info.frame_count, info.image_width, info.image_height, info.frame_rate
    )
}

/// Standard layout of an exported sequence directory.
pub struct SequenceDir {
    pub root: PathBuf,
}

impl SequenceDir {
    pub fn new<P: AsRef<Path>>(root: P) -> Self {
        Self { root: root.as_ref().to_path_buf() }
    }

    pub fn seqinfo_path(&self) -> PathBuf {
        self.root.join("seqinfo.ini")
    }

    pub fn gt_path(&self) -> PathBuf {
        self.root.join("gt").join("gt.txt")
    }

    pub fn det_path(&self) -> PathBuf {
        self.root.join("det").join("det.txt")
    }

    pub fn field_path(&self, from: usize, to: usize) -> PathBuf {
        self.root.join("fmf").join(format!("fmf_{from:06}_{to:06}.bin"))
    }

    pub fn fmap_path(&self, frame: usize) -> PathBuf {
        self.root.join("faf").join(format!("faf_{frame:06}.bin"))
    }

    pub fn read_seqinfo(&self) -> Result<SequenceInfo, IoError> {
        let f = std::fs::File::open(self.seqinfo_path())?;
        parse_seqinfo(std::io::BufReader::new(f))
    }

    pub fn read_detections(&self) -> Result<ParsedDetections, IoError> {
        let f = std::fs::File::open(self.det_path())?;
        parse_detections(std::io::BufReader::new(f))
    }

    pub fn read_ground_truth(&self) -> Result<BTreeMap<usize, Vec<GtEntry>>, IoError> {
        let f = std::fs::File::open(self.gt_path())?;
        parse_ground_truth(std::io::BufReader::new(f))
    }

    pub fn read_field(&self, from: usize, to: usize) -> Result<MotionField, IoError> {
        let mut data = Vec::new();
        std::fs::File::open(self.field_path(from, to))?.read_to_end(&mut data)?;
        read_field(&data)
    }

    pub fn read_fmap(&self, frame: usize) -> Result<FeatureMap, IoError> {
        let mut data = Vec::new();
        std::fs::File::open(self.fmap_path(frame))?.read_to_end(&mut data)?;
        read_fmap(&data)
    }

    pub fn write_file(&self, path: &Path, data: &[u8]) -> Result<(), IoError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(data)?;
        Ok(())
    }
}
