//! OCR engines behind one interface: an adapter that shells out to an
//! external recognizer, and a small built-in nearest-prototype recognizer
//! for self-contained evaluation runs.
//!
//! The reference recognizer segments lines into connected components, so it
//! only works on scripts rendered with separated glyphs (such as the
//! synthetic atlas). Joined cursive writing defeats it.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{auto_ink_mask, label_components, Labels};
use crate::raster::{Raster, RasterError, Rect};
use crate::synth::RenderedLine;
use crate::textnorm::normalize_lenient;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine exited with {status}: {stderr}")]
    EngineFailure { status: String, stderr: String },
    #[error("engine did not finish within {0:?}")]
    EngineTimeout(Duration),
    #[error("engine output is not valid UTF-8")]
    InvalidUtf8,
    #[error("command template must contain exactly one {{image}} placeholder")]
    BadTemplate,
    #[error("no training samples")]
    NoSamples,
    #[error("glyph {index} of line {line} has no usable label")]
    UnlabeledGlyph { line: usize, index: usize },
    #[error("line image contains no ink")]
    EmptyLine,
    #[error("bad engine config: {0}")]
    BadConfig(String),
    #[error("bad model: {0}")]
    BadModel(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Training configuration for the external fine-tuning run

/// Fine-tuning parameters, written as `KEY VALUE` lines for the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub name: String,
    pub learning_rate: f64,
    pub max_iterations: u64,
    pub start_model: String,
    pub lang_type: String,
    pub ratio_train: f64,
}

impl EngineConfig {
    fn preset(name: &str, ratio_train: f64) -> Self {
        Self {
            name: name.to_string(),
            learning_rate: 0.0001,
            max_iterations: 10000,
            start_model: "syr".to_string(),
            lang_type: "RTL".to_string(),
            ratio_train,
        }
    }

    pub fn esyr() -> Self {
        Self::preset("esyr", 0.9)
    }

    pub fn esyr_lesstrain() -> Self {
        Self::preset("esyr_lesstrain", 0.8)
    }

    pub fn esyr_short() -> Self {
        Self::preset("esyr_short", 0.7)
    }

    pub fn presets() -> [Self; 3] {
        [Self::esyr(), Self::esyr_lesstrain(), Self::esyr_short()]
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.name.trim().is_empty() {
            return Err(EngineError::BadConfig("name is empty".into()));
        }
        if !(self.ratio_train > 0.0 && self.ratio_train < 1.0) {
            return Err(EngineError::BadConfig(format!(
                "RATIO_TRAIN {} outside (0, 1)",
                self.ratio_train
            )));
        }
        Ok(())
    }

    pub fn to_config_file(&self) -> String {
        format!(
            "MODEL_NAME {}\nSTART_MODEL {}\nLANG_TYPE {}\nLEARNING_RATE {}\nMAX_ITERATIONS {}\nRATIO_TRAIN {}\n",
            self.name,
            self.start_model,
            self.lang_type,
            self.learning_rate,
            self.max_iterations,
            self.ratio_train
        )
    }

    /// Parses `KEY VALUE` lines. Blank lines and `#` comments are skipped;
    /// unknown keys are rejected; missing keys fall back to the `esyr`
    /// preset.
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        let mut cfg = Self::esyr();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k, v.trim()))
                .ok_or_else(|| EngineError::BadConfig(format!("line {}: expected KEY VALUE", no + 1)))?;
            let bad = |what: &str| EngineError::BadConfig(format!("line {}: bad {what} {value:?}", no + 1));
            match key {
                "MODEL_NAME" => cfg.name = value.to_string(),
                "START_MODEL" => cfg.start_model = value.to_string(),
                "LANG_TYPE" => cfg.lang_type = value.to_string(),
                "LEARNING_RATE" => cfg.learning_rate = value.parse().map_err(|_| bad(key))?,
                "MAX_ITERATIONS" => cfg.max_iterations = value.parse().map_err(|_| bad(key))?,
                "RATIO_TRAIN" => cfg.ratio_train = value.parse().map_err(|_| bad(key))?,
                other => {
                    return Err(EngineError::BadConfig(format!(
                        "line {}: unknown key {other}",
                        no + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// External process adapter

pub const IMAGE_PLACEHOLDER: &str = "{image}";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalEngine {
    template: String,
    timeout: Duration,
}

impl ExternalEngine {
    /// `template` is a shell-style command line with one `{image}`.
    pub fn new(template: impl Into<String>, timeout: Duration) -> Result<Self, EngineError> {
        let template = template.into();
        if template.matches(IMAGE_PLACEHOLDER).count() != 1 {
            return Err(EngineError::BadTemplate);
        }
        shlex::split(&template).ok_or(EngineError::BadTemplate)?;
        Ok(Self { template, timeout })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }
}

/// Runs the command with the image path substituted as a single argument
/// and returns its normalized standard output.
pub fn run_external(engine: &ExternalEngine, image: &Path) -> Result<String, EngineError> {
    let path = image.to_string_lossy();
    let argv: Vec<String> = shlex::split(&engine.template)
        .ok_or(EngineError::BadTemplate)?
        .into_iter()
        .map(|a| a.replace(IMAGE_PLACEHOLDER, &path))
        .collect();
    let (program, args) = argv.split_first().ok_or(EngineError::BadTemplate)?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;

    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        stderr.read_to_end(&mut buf).map(|_| buf)
    });

    let deadline = Instant::now() + engine.timeout;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(EngineError::EngineTimeout(engine.timeout));
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let out = out_reader.join().expect("reader thread")?;
    let err = err_reader.join().expect("reader thread")?;
    if !status.success() {
        return Err(EngineError::EngineFailure {
            status: status.to_string(),
            stderr: String::from_utf8_lossy(&err).trim().to_string(),
        });
    }
    let text = String::from_utf8(out).map_err(|_| EngineError::InvalidUtf8)?;
    Ok(normalize_lenient(&text))
}

// ---------------------------------------------------------------------------
// Reference recognizer

pub const PROTO_SIZE: usize = 16;

/// 16×16 binary bitmap, row-major, one bit per cell.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GlyphBits([u64; 4]);

impl GlyphBits {
    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * PROTO_SIZE + x;
        (self.0[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        let i = y * PROTO_SIZE + x;
        if on {
            self.0[i / 64] |= 1 << (i % 64);
        } else {
            self.0[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn hamming(&self, other: &GlyphBits) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|w| format!("{w:016x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<GlyphBits> {
        if s.len() != 64 || !s.is_ascii() {
            return None;
        }
        let mut words = [0u64; 4];
        for (i, w) in words.iter_mut().enumerate() {
            *w = u64::from_str_radix(&s[i * 16..(i + 1) * 16], 16).ok()?;
        }
        Some(GlyphBits(words))
    }
}

impl fmt::Debug for GlyphBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..PROTO_SIZE {
            let row: String = (0..PROTO_SIZE).map(|x| if self.get(x, y) { '#' } else { '.' }).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

impl Serialize for GlyphBits {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for GlyphBits {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        GlyphBits::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex digits"))
    }
}

/// Ink coverage of each 16×16 cell, sampled on a 4×4 grid per cell, with
/// cells at least half covered switched on.
fn normalize_glyph(bbox: Rect, is_ink: impl Fn(usize, usize) -> bool) -> GlyphBits {
    const SUB: usize = 4;
    let mut bits = GlyphBits::default();
    let (w, h) = (bbox.w as f64, bbox.h as f64);
    let n = (PROTO_SIZE * SUB) as f64;
    for cy in 0..PROTO_SIZE {
        for cx in 0..PROTO_SIZE {
            let mut hits = 0;
            for sy in 0..SUB {
                for sx in 0..SUB {
                    let fx = ((cx * SUB + sx) as f64 + 0.5) * w / n;
                    let fy = ((cy * SUB + sy) as f64 + 0.5) * h / n;
                    let x = bbox.x as usize + (fx as usize).min(bbox.w as usize - 1);
                    let y = bbox.y as usize + (fy as usize).min(bbox.h as usize - 1);
                    hits += usize::from(is_ink(x, y));
                }
            }
            bits.set(cx, cy, 2 * hits >= SUB * SUB);
        }
    }
    bits
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prototype {
    pub codepoint: char,
    pub bits: GlyphBits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    /// Sorted by codepoint.
    pub prototypes: Vec<Prototype>,
    /// Gap (pixels, at training scale) above which a space is emitted;
    /// `None` when training lines had no spaces.
    pub space_gap_px: Option<f64>,
    /// Median glyph height at training scale; gaps are rescaled by the
    /// observed median component height at recognition time.
    pub glyph_height_px: f64,
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Builds one prototype per codepoint as the thresholded mean of its
/// normalized crops, and the space threshold as the midpoint between the
/// median intra-word and inter-word gaps.
pub fn train_reference(samples: &[RenderedLine]) -> Result<ReferenceModel, EngineError> {
    if samples.is_empty() {
        return Err(EngineError::NoSamples);
    }
    let mut sums: BTreeMap<char, (Vec<u32>, u32)> = BTreeMap::new();
    let (mut intra, mut inter, mut heights) = (Vec::new(), Vec::new(), Vec::new());

    for (li, line) in samples.iter().enumerate() {
        let chars: Vec<char> = line.text.as_str().chars().collect();
        let glyph_chars: Vec<char> = chars.iter().copied().filter(|&c| c != ' ').collect();
        if glyph_chars.len() != line.glyph_boxes.len() {
            return Err(EngineError::UnlabeledGlyph {
                line: li,
                index: glyph_chars.len().min(line.glyph_boxes.len()),
            });
        }
        let mask = auto_ink_mask(&line.image);
        let iw = line.image.width();
        for (gi, (gb, &c)) in line.glyph_boxes.iter().zip(&glyph_chars).enumerate() {
            let r = gb.rect;
            let inside = r.x >= 0
                && r.y >= 0
                && r.w > 0
                && r.h > 0
                && r.right() as usize <= iw
                && r.bottom() as usize <= line.image.height();
            if gb.codepoint != c || c.is_control() || !inside {
                return Err(EngineError::UnlabeledGlyph { line: li, index: gi });
            }
            let bits = normalize_glyph(r, |x, y| mask[y * iw + x]);
            let entry = sums.entry(c).or_insert_with(|| (vec![0; PROTO_SIZE * PROTO_SIZE], 0));
            for y in 0..PROTO_SIZE {
                for x in 0..PROTO_SIZE {
                    entry.0[y * PROTO_SIZE + x] += u32::from(bits.get(x, y));
                }
            }
            entry.1 += 1;
            heights.push(r.h as f64);
        }
        // Gaps between consecutive glyphs, split by whether a space
        // separates them in the text.
        let mut gi = 0;
        let mut saw_space = false;
        for &c in &chars {
            if c == ' ' {
                saw_space = true;
                continue;
            }
            if gi > 0 {
                let gap = (line.glyph_boxes[gi - 1].rect.x - line.glyph_boxes[gi].rect.right()) as f64;
                if saw_space { inter.push(gap) } else { intra.push(gap) }
            }
            saw_space = false;
            gi += 1;
        }
    }

    let prototypes = sums
        .into_iter()
        .map(|(codepoint, (counts, n))| {
            let mut bits = GlyphBits::default();
            for y in 0..PROTO_SIZE {
                for x in 0..PROTO_SIZE {
                    bits.set(x, y, 2 * counts[y * PROTO_SIZE + x] >= n);
                }
            }
            Prototype { codepoint, bits }
        })
        .collect();
    let space_gap_px = match (median(&mut intra), median(&mut inter)) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        (None, Some(b)) => Some(b / 2.0),
        _ => None,
    };
    Ok(ReferenceModel {
        prototypes,
        space_gap_px,
        glyph_height_px: median(&mut heights).unwrap_or(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizedGlyph {
    pub codepoint: char,
    pub bbox: Rect,
    /// 1 − Hamming distance / 256 to the winning prototype.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recognition {
    pub text: String,
    pub glyphs: Vec<RecognizedGlyph>,
}

impl ReferenceModel {
    pub fn from_json(s: &str) -> Result<Self, EngineError> {
        let m: ReferenceModel = serde_json::from_str(s).map_err(|e| EngineError::BadModel(e.to_string()))?;
        if m.prototypes.is_empty() {
            return Err(EngineError::BadModel("no prototypes".into()));
        }
        if !(m.glyph_height_px.is_finite() && m.glyph_height_px > 0.0) {
            return Err(EngineError::BadModel("glyph height must be positive".into()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn classify(&self, bits: &GlyphBits) -> (char, f64) {
        let best = self
            .prototypes
            .iter()
            .min_by_key(|p| p.bits.hamming(bits))
            .expect("model has prototypes");
        let d = best.bits.hamming(bits);
        (best.codepoint, 1.0 - d as f64 / (PROTO_SIZE * PROTO_SIZE) as f64)
    }

    /// Segments, orders right to left, and classifies every component.
    pub fn recognize_detailed(&self, line: &Raster) -> Result<Recognition, EngineError> {
        let gray = crate::imaging::to_grayscale(line);
        let mask = auto_ink_mask(&gray);
        let labels: Labels = label_components(&mask, gray.width(), gray.height());
        if labels.components.is_empty() {
            return Err(EngineError::EmptyLine);
        }
        let mut comps: Vec<_> = labels.components.iter().collect();
        comps.sort_by(|a, b| {
            b.bbox
                .right()
                .cmp(&a.bbox.right())
                .then(b.bbox.x.cmp(&a.bbox.x))
                .then(a.bbox.y.cmp(&b.bbox.y))
        });

        let mut heights: Vec<f64> = comps.iter().map(|c| c.bbox.h as f64).collect();
        let scale = median(&mut heights).unwrap_or(1.0) / self.glyph_height_px;
        let space_gap = self.space_gap_px.map(|g| g * scale);

        let mut text = String::new();
        let mut glyphs = Vec::with_capacity(comps.len());
        let mut prev_left: Option<i64> = None;
        for c in comps {
            let bits = normalize_glyph(c.bbox, |x, y| labels.label_at(x, y) == c.label);
            let (codepoint, confidence) = self.classify(&bits);
            if let (Some(left), Some(th)) = (prev_left, space_gap) {
                if (left - c.bbox.right()) as f64 > th {
                    text.push(' ');
                }
            }
            prev_left = Some(prev_left.map_or(c.bbox.x, |l| l.min(c.bbox.x)));
            text.push(codepoint);
            glyphs.push(RecognizedGlyph {
                codepoint,
                bbox: c.bbox,
                confidence,
            });
        }
        Ok(Recognition {
            text: normalize_lenient(&text),
            glyphs,
        })
    }
}

pub fn recognize_reference(model: &ReferenceModel, line: &Raster) -> Result<String, EngineError> {
    Ok(model.recognize_detailed(line)?.text)
}

// ---------------------------------------------------------------------------
// Uniform handle

#[derive(Debug, Clone)]
pub enum EngineHandle {
    External(ExternalEngine),
    Reference(ReferenceModel),
}

impl EngineHandle {
    /// Recognizes the line image stored at `image`.
    pub fn recognize(&self, image: &Path) -> Result<String, EngineError> {
        match self {
            EngineHandle::External(e) => run_external(e, image),
            EngineHandle::Reference(m) => match recognize_reference(m, &Raster::read_png(image)?) {
                Err(EngineError::EmptyLine) => Ok(String::new()),
                other => other,
            },
        }
    }
}

/// One entry of an engines file: `{"kind": "external", "command": ...,
/// "timeout_secs": ...}` or `{"kind": "reference", "model": <path>}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EngineSpec {
    External {
        command: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
    },
    Reference {
        model: PathBuf,
    },
}

fn default_timeout_secs() -> f64 {
    60.0
}

impl EngineSpec {
    /// Builds the handle; relative model paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<EngineHandle, EngineError> {
        match self {
            EngineSpec::External { command, timeout_secs } => {
                if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                    return Err(EngineError::BadConfig(format!("timeout {timeout_secs}")));
                }
                Ok(EngineHandle::External(ExternalEngine::new(
                    command.clone(),
                    Duration::from_secs_f64(*timeout_secs),
                )?))
            }
            EngineSpec::Reference { model } => {
                let text = std::fs::read_to_string(base.join(model))?;
                Ok(EngineHandle::Reference(ReferenceModel::from_json(&text)?))
            }
        }
    }
}

/// Reads a JSON object mapping engine names to [`EngineSpec`]s.
pub fn load_engines(path: &Path) -> Result<BTreeMap<String, EngineHandle>, EngineError> {
    let text = std::fs::read_to_string(path)?;
    let specs: BTreeMap<String, EngineSpec> =
        serde_json::from_str(&text).map_err(|e| EngineError::BadConfig(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    specs
        .into_iter()
        .map(|(name, spec)| Ok((name, spec.load(base)?)))
        .collect()
}
