//! Sequence I/O, synthetic test sequences, and the evaluation protocol:
//! center location error, overlap, one-pass evaluation, precision and
//! success curves with their headline scores.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{load_external_channels, FeatureBackend, Frame};
use crate::rng::SplitMix64;
use crate::tracker::{initialize, step, DecisionRecord, Geometry, Rect, TrackerConfig};

pub use crate::features::FeatureStack;

/// Number of thresholds in both benchmark curves.
pub const CURVE_POINTS: usize = 51;

/// Pixel threshold at which the headline precision is read.
pub const PRECISION_PIXELS: usize = 20;

/// A loaded (or generated) sequence with per-frame ground truth. Absent
/// targets are `None`.
#[derive(Debug, Clone)]
pub struct AnnotatedSequence {
    pub name: String,
    frames: Vec<FrameSource>,
    pub truth: Vec<Option<Rect>>,
}

#[derive(Debug, Clone)]
enum FrameSource {
    File(PathBuf),
    Memory(Frame),
}

impl AnnotatedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Loads or clones frame `i` as grayscale.
    pub fn frame(&self, i: usize) -> Result<Frame> {
        match &self.frames[i] {
            FrameSource::Memory(f) => Ok(f.clone()),
            FrameSource::File(path) => load_frame(path),
        }
    }

    /// File stem of frame `i`, when the sequence is file-backed; used to
    /// locate per-frame external feature files.
    pub fn stem(&self, i: usize) -> Option<String> {
        match &self.frames[i] {
            FrameSource::File(path) => path.file_stem().map(|s| s.to_string_lossy().into_owned()),
            FrameSource::Memory(_) => None,
        }
    }
}

fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
    Frame::new(w as usize, h as usize, data)
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];
const ANNOTATION_FILES: &[&str] = &["groundtruth.txt", "groundtruth_rect.txt"];

fn parse_truth_line(path: &Path, lineno: usize, line: &str) -> Result<Option<Rect>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(Error::AnnotationParse {
            path: path.display().to_string(),
            line: lineno,
            msg: format!("expected 4 comma-separated values, got {}", fields.len()),
        });
    }
    if fields.iter().any(|f| f.eq_ignore_ascii_case("nan")) {
        return Ok(None);
    }
    let mut vals = [0.0f64; 4];
    for (i, f) in fields.iter().enumerate() {
        vals[i] = f.parse().map_err(|_| Error::AnnotationParse {
            path: path.display().to_string(),
            line: lineno,
            msg: format!("cannot parse '{f}' as a number"),
        })?;
    }
    if vals[2] < 0.0 || vals[3] < 0.0 {
        return Err(Error::AnnotationParse {
            path: path.display().to_string(),
            line: lineno,
            msg: "negative box size".into(),
        });
    }
    Ok(Some(Rect::new(vals[0], vals[1], vals[2], vals[3])))
}

/// Loads a sequence directory: image files (sorted lexicographically) plus
/// a ground-truth file of `x,y,w,h` lines, `NaN` marking absent targets.
pub fn load_sequence(dir: &Path) -> Result<AnnotatedSequence> {
    let mut frames = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            frames.push(path);
        }
    }
    frames.sort();
    if frames.is_empty() {
        return Err(Error::EmptySequence {
            dir: dir.display().to_string(),
        });
    }

    let ann_path = ANNOTATION_FILES
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.exists())
        .ok_or_else(|| Error::MissingAnnotations {
            dir: dir.display().to_string(),
        })?;
    let text = std::fs::read_to_string(&ann_path)?;
    let mut truth = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        truth.push(parse_truth_line(&ann_path, i + 1, line)?);
    }
    // Reconcile counts: extra lines are dropped, missing tail frames are
    // marked absent.
    if truth.len() > frames.len() {
        truth.truncate(frames.len());
    }
    while truth.len() < frames.len() {
        truth.push(None);
    }

    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    Ok(AnnotatedSequence {
        name,
        frames: frames.into_iter().map(FrameSource::File).collect(),
        truth,
    })
}

/// Parameters of the synthetic test-bed generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Blob diameter in pixels at frame 0.
    pub blob_size: f64,
    pub start: (f64, f64),
    pub velocity: (f64, f64),
    /// Per-frame multiplicative growth of the blob (1.0 = constant size).
    pub scale_ramp: f64,
    /// Background noise amplitude.
    pub noise: f64,
    /// Frames rendered without the blob (full occlusion).
    pub occluded: Vec<usize>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            frames: 50,
            blob_size: 18.0,
            start: (40.0, 64.0),
            velocity: (1.0, 0.5),
            scale_ramp: 1.0,
            noise: 0.08,
            occluded: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("empty synthetic spec".into()));
        }
        if !(self.blob_size > 1.0) || !(self.scale_ramp > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "synthetic spec out of range: {self:?}"
            )));
        }
        let final_size = self.blob_size * self.scale_ramp.powi(self.frames as i32 - 1);
        if final_size >= self.width.min(self.height) as f64 {
            return Err(Error::InvalidParameter(
                "blob grows larger than the frame".into(),
            ));
        }
        Ok(())
    }

    /// Exact ground-truth box of frame `k`.
    pub fn truth_at(&self, k: usize) -> Rect {
        let size = self.blob_size * self.scale_ramp.powi(k as i32);
        let cx = self.start.0 + self.velocity.0 * k as f64;
        let cy = self.start.1 + self.velocity.1 * k as f64;
        Rect::from_center((cx, cy), (size, size))
    }
}

fn render_synth_frame(spec: &SynthSpec, k: usize, rng: &mut SplitMix64) -> Frame {
    let (w, h) = (spec.width, spec.height);
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            data[y * w + x] = 0.45
                + spec.noise * (rng.next_f64() - 0.5)
                + 0.05 * (((x / 4) + (y / 4)) % 2) as f64;
        }
    }
    let truth = spec.truth_at(k);
    let (cx, cy) = truth.center();
    let radius = truth.w / 2.0;
    if spec.occluded.contains(&k) {
        // A flat occluder wipes the target area (and its texture).
        let cover = radius * 1.4;
        for y in 0..h {
            for x in 0..w {
                if (x as f64 - cx).abs() < cover && (y as f64 - cy).abs() < cover {
                    data[y * w + x] = 0.5;
                }
            }
        }
    } else {
        let smooth = |t: f64| t.clamp(0.0, 1.0);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let r = (dx * dx + dy * dy).sqrt();
                if r < radius + 1.0 {
                    let core = smooth(radius * 0.55 - r + 1.0);
                    let ring = smooth(radius - r) * (1.0 - smooth(radius * 0.8 - r));
                    let v = 0.15 + 0.85 * core + 0.55 * ring;
                    data[y * w + x] = v.min(1.0);
                }
            }
        }
    }
    Frame::new(w, h, data).expect("valid synth dimensions")
}

/// Renders a deterministic blob-on-noise sequence with exact ground truth.
/// The same seed reproduces the frames bit for bit; the background noise
/// field is re-seeded per frame, so it stays fixed across the sequence
/// (static-camera texture) and a zero-velocity sequence has bitwise
/// identical frames.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<AnnotatedSequence> {
    spec.validate()?;
    let mut frames = Vec::with_capacity(spec.frames);
    let mut truth = Vec::with_capacity(spec.frames);
    for k in 0..spec.frames {
        let mut rng = SplitMix64::new(seed);
        frames.push(FrameSource::Memory(render_synth_frame(spec, k, &mut rng)));
        truth.push(Some(spec.truth_at(k)));
    }
    Ok(AnnotatedSequence {
        name: format!("synthetic-{seed}"),
        frames,
        truth,
    })
}

/// Materializes a sequence to disk in the loader's layout: zero-padded
/// PNG frames plus `groundtruth.txt`.
pub fn write_sequence(seq: &AnnotatedSequence, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for i in 0..seq.len() {
        let frame = seq.frame(i)?;
        let mut img = image::GrayImage::new(frame.width() as u32, frame.height() as u32);
        for (j, px) in img.pixels_mut().enumerate() {
            px.0[0] = (frame.data()[j].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        img.save(dir.join(format!("{:06}.png", i + 1)))?;
    }
    let mut lines = String::new();
    for t in &seq.truth {
        match t {
            Some(r) => lines.push_str(&format!("{},{},{},{}\n", r.x, r.y, r.w, r.h)),
            None => lines.push_str("NaN,NaN,NaN,NaN\n"),
        }
    }
    std::fs::write(dir.join("groundtruth.txt"), lines)?;
    Ok(())
}

/// Boxes and gate decisions of one tracked sequence.
#[derive(Debug, Clone)]
pub struct TrackResult {
    pub boxes: Vec<Rect>,
    pub decisions: Vec<DecisionRecord>,
    /// Per-iteration solver traces, populated when the tracker config sets
    /// `collect_traces`.
    pub traces: Vec<crate::solver::IterationTrace>,
}

/// Per-frame center distances and their mean, skipping absent truth.
pub fn center_error(boxes: &[Rect], truth: &[Option<Rect>]) -> Result<(Vec<f64>, f64)> {
    if boxes.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "box/truth length mismatch: {} vs {}",
            boxes.len(),
            truth.len()
        )));
    }
    let mut errors = Vec::new();
    for (b, t) in boxes.iter().zip(truth) {
        if let Some(t) = t {
            let (bx, by) = b.center();
            let (tx, ty) = t.center();
            errors.push(((bx - tx).powi(2) + (by - ty).powi(2)).sqrt());
        }
    }
    if errors.is_empty() {
        return Err(Error::InvalidParameter("no frames with valid truth".into()));
    }
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok((errors, mean))
}

fn iou(a: &Rect, b: &Rect) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Per-frame intersection-over-union, skipping absent truth.
pub fn overlap(boxes: &[Rect], truth: &[Option<Rect>]) -> Result<Vec<f64>> {
    if boxes.len() != truth.len() {
        return Err(Error::InvalidParameter(format!(
            "box/truth length mismatch: {} vs {}",
            boxes.len(),
            truth.len()
        )));
    }
    Ok(boxes
        .iter()
        .zip(truth)
        .filter_map(|(b, t)| t.as_ref().map(|t| iou(b, t)))
        .collect())
}

/// Fraction of frames with CLE <= t for integer thresholds 0..=50 px,
/// plus the headline score at 20 px.
pub fn precision_curve(errors: &[f64]) -> Result<(Vec<f64>, f64)> {
    if errors.is_empty() {
        return Err(Error::InvalidParameter("empty error list".into()));
    }
    let curve: Vec<f64> = (0..CURVE_POINTS)
        .map(|t| errors.iter().filter(|&&e| e <= t as f64).count() as f64 / errors.len() as f64)
        .collect();
    let at_20 = curve[PRECISION_PIXELS];
    Ok((curve, at_20))
}

/// Fraction of frames with IoU > t over 51 thresholds in [0, 1], plus the
/// area under that curve (the mean over the grid).
pub fn success_curve(overlaps: &[f64]) -> Result<(Vec<f64>, f64)> {
    if overlaps.is_empty() {
        return Err(Error::InvalidParameter("empty overlap list".into()));
    }
    let curve: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| {
            let t = i as f64 / (CURVE_POINTS - 1) as f64;
            overlaps.iter().filter(|&&o| o > t).count() as f64 / overlaps.len() as f64
        })
        .collect();
    let auc = curve.iter().sum::<f64>() / curve.len() as f64;
    Ok((curve, auc))
}

/// Headline numbers and curves of one run.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsBundle {
    pub mean_cle: f64,
    pub precision_at_20: f64,
    pub auc: f64,
    /// Success rate at the conventional 0.5 overlap threshold.
    pub sr_at_0_5: f64,
    pub precision_curve: Vec<f64>,
    pub success_curve: Vec<f64>,
    pub per_frame_cle: Vec<f64>,
    pub per_frame_iou: Vec<f64>,
}

impl MetricsBundle {
    pub fn from_result(result: &TrackResult, truth: &[Option<Rect>]) -> Result<Self> {
        let (per_frame_cle, mean_cle) = center_error(&result.boxes, truth)?;
        let per_frame_iou = overlap(&result.boxes, truth)?;
        let (precision, precision_at_20) = precision_curve(&per_frame_cle)?;
        let (success, auc) = success_curve(&per_frame_iou)?;
        let sr_at_0_5 =
            per_frame_iou.iter().filter(|&&o| o > 0.5).count() as f64 / per_frame_iou.len() as f64;
        Ok(Self {
            mean_cle,
            precision_at_20,
            auc,
            sr_at_0_5,
            precision_curve: precision,
            success_curve: success,
            per_frame_cle,
            per_frame_iou,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// `threshold,precision,success` rows: pixel thresholds for precision,
    /// `threshold/50` overlap thresholds for success.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("threshold,precision,success\n");
        for i in 0..CURVE_POINTS {
            out.push_str(&format!(
                "{},{},{}\n",
                i, self.precision_curve[i], self.success_curve[i]
            ));
        }
        out
    }
}

/// Supplies the per-frame external channel stacks for sequences tracked
/// with the external feature backend.
pub struct ExternalFeatures {
    dir: PathBuf,
}

impl ExternalFeatures {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir }
    }

    fn load(
        &self,
        seq: &AnnotatedSequence,
        i: usize,
        grid: crate::spectral::Grid2,
    ) -> Result<FeatureStack> {
        let stem = seq.stem(i).ok_or_else(|| {
            Error::InvalidParameter("external features require a file-backed sequence".into())
        })?;
        load_external_channels(&self.dir.join(format!("{stem}.cfb")), grid)
    }
}

/// One-pass evaluation: initialize on the first frame's truth, track every
/// subsequent frame with no re-initialization, and score the result.
pub fn run_ope(
    seq: &AnnotatedSequence,
    config: &TrackerConfig,
    external: Option<&ExternalFeatures>,
) -> Result<(TrackResult, MetricsBundle)> {
    if seq.is_empty() {
        return Err(Error::EmptySequence {
            dir: seq.name.clone(),
        });
    }
    let init_box = seq
        .truth
        .first()
        .cloned()
        .flatten()
        .ok_or_else(|| Error::InvalidParameter("first frame has no truth box".into()))?;

    let first = seq.frame(0)?;
    let needs_external = config.features.backend == FeatureBackend::External;
    if needs_external && external.is_none() {
        return Err(Error::InvalidParameter(
            "external feature backend configured without a feature directory".into(),
        ));
    }

    // Geometry is fixed by the init box; external files must match its grid.
    let mut state = if needs_external {
        let geometry = Geometry::derive((init_box.w, init_box.h), config)?;
        let stack = external.unwrap().load(seq, 0, geometry.feature_grid)?;
        initialize(&first, init_box, config, Some(&stack))?
    } else {
        initialize(&first, init_box, config, None)?
    };

    let mut boxes = vec![state.current_box()];
    let mut decisions = vec![state.initial_decision()];
    for i in 1..seq.len() {
        let frame = seq.frame(i)?;
        let stack = if needs_external {
            Some(
                external
                    .unwrap()
                    .load(seq, i, state.geometry.feature_grid)?,
            )
        } else {
            None
        };
        let (rect, record) = step(&mut state, &frame, stack.as_ref())?;
        boxes.push(rect);
        decisions.push(record);
    }

    let result = TrackResult {
        boxes,
        decisions,
        traces: std::mem::take(&mut state.traces),
    };
    let metrics = MetricsBundle::from_result(&result, &seq.truth)?;
    Ok((result, metrics))
}
