//! Sample registry: ingest image/ground-truth pairs, track curation state,
//! produce seeded splits, summarize volunteers, and export the directory
//! layout an external trainer consumes.
//!
//! The registry persists as `manifest.jsonl` (one sample per line). Sample
//! ids follow `<batch><author>_<seq>`, e.g. `a01_07`: batch `a` is the
//! first scan, `b` a re-scan.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engines::EngineConfig;
use crate::rng::SplitMix64;
use crate::textnorm::{GroundTruth, TextError};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const GT_SUFFIX: &str = ".gt.txt";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("image without ground truth: {0}")]
    OrphanImage(String),
    #[error("ground truth without image: {0}")]
    OrphanTruth(String),
    #[error("file name does not match the sample id pattern: {0}")]
    BadName(String),
    #[error("ground truth of {id}: {source}")]
    BadGroundTruth { id: String, source: TextError },
    #[error("no eligible samples")]
    EmptyRegistry,
    #[error("samples missing from the assignment: {0:?}")]
    UnassignedSamples(Vec<String>),
    #[error("unknown sample {0}")]
    NotFound(String),
    #[error("revision conflict on {id}: expected {expected}, current {current}")]
    RevisionConflict { id: String, expected: u64, current: u64 },
    #[error("sample {0} cannot be clean without an image file")]
    MissingImage(String),
    #[error("invalid split spec: {0}")]
    BadSplitSpec(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("volunteer record {row}: {message}")]
    Volunteer { row: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Ids

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Batch {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
}

impl Batch {
    pub fn letter(self) -> char {
        match self {
            Batch::A => 'a',
            Batch::B => 'b',
        }
    }
}

/// Digit widths of the author and sequence fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdPattern {
    pub author_digits: usize,
    pub seq_digits: usize,
}

impl Default for IdPattern {
    fn default() -> Self {
        Self {
            author_digits: 2,
            seq_digits: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleId {
    pub batch: Batch,
    pub author: u32,
    pub seq: u32,
    text: String,
}

impl SampleId {
    pub fn parse(s: &str, pattern: IdPattern) -> Option<SampleId> {
        let mut chars = s.chars();
        let batch = match chars.next()? {
            'a' => Batch::A,
            'b' => Batch::B,
            _ => return None,
        };
        let (author, seq) = chars.as_str().split_once('_')?;
        let digits = |f: &str, n: usize| {
            (f.len() == n && f.bytes().all(|b| b.is_ascii_digit())).then(|| f.parse::<u32>().ok())?
        };
        Some(SampleId {
            batch,
            author: digits(author, pattern.author_digits)?,
            seq: digits(seq, pattern.seq_digits)?,
            text: s.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

// ---------------------------------------------------------------------------
// Samples

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Raw,
    Clean,
    Rejected,
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Status::Raw),
            "clean" => Ok(Status::Clean),
            "rejected" => Ok(Status::Rejected),
            other => Err(format!("unknown status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Eval,
    Test,
    #[default]
    Unassigned,
}

impl FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitTag::Train),
            "eval" => Ok(SplitTag::Eval),
            "test" => Ok(SplitTag::Test),
            "unassigned" => Ok(SplitTag::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One manifest line. Paths are relative to the registry root unless
/// absolute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub batch: Batch,
    pub author: u32,
    pub seq: u32,
    pub image: PathBuf,
    #[serde(rename = "gt")]
    pub ground_truth: GroundTruth,
    pub status: Status,
    pub revision: u64,
    pub split: SplitTag,
    /// Output of the last reprocessing run, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processed: Option<PathBuf>,
}

/// Field changes applied by [`Registry::update`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleUpdate {
    pub ground_truth: Option<GroundTruth>,
    pub status: Option<Status>,
    pub split: Option<SplitTag>,
    pub processed: Option<PathBuf>,
}

impl SampleUpdate {
    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_none() && self.status.is_none() && self.split.is_none() && self.processed.is_none()
    }
}

// ---------------------------------------------------------------------------
// Registry

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registry {
    root: PathBuf,
    pattern: IdPattern,
    samples: BTreeMap<String, Sample>,
}

impl Registry {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            pattern: IdPattern::default(),
            samples: BTreeMap::new(),
        }
    }

    pub fn with_pattern(mut self, pattern: IdPattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.get(id)
    }

    /// Samples in id order.
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.samples.values()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.root.join(path)
    }

    /// Adds or replaces a sample, checking the id against the pattern.
    pub fn insert(&mut self, sample: Sample) -> Result<(), DatasetError> {
        let id = SampleId::parse(&sample.id, self.pattern).ok_or_else(|| DatasetError::BadName(sample.id.clone()))?;
        if id.batch != sample.batch || id.author != sample.author || id.seq != sample.seq {
            return Err(DatasetError::BadName(sample.id.clone()));
        }
        self.samples.insert(sample.id.clone(), sample);
        Ok(())
    }

    /// Applies `update` if `expected_revision` matches (or is `None`) and
    /// bumps the revision by one.
    pub fn update(
        &mut self,
        id: &str,
        update: SampleUpdate,
        expected_revision: Option<u64>,
    ) -> Result<&Sample, DatasetError> {
        let root = self.root.clone();
        let sample = self
            .samples
            .get_mut(id)
            .ok_or_else(|| DatasetError::NotFound(id.to_string()))?;
        if let Some(expected) = expected_revision {
            if expected != sample.revision {
                return Err(DatasetError::RevisionConflict {
                    id: id.to_string(),
                    expected,
                    current: sample.revision,
                });
            }
        }
        if update.status == Some(Status::Clean) && !root.join(&sample.image).is_file() {
            return Err(DatasetError::MissingImage(id.to_string()));
        }
        if let Some(gt) = update.ground_truth {
            sample.ground_truth = gt;
        }
        if let Some(st) = update.status {
            sample.status = st;
        }
        if let Some(sp) = update.split {
            sample.split = sp;
        }
        if let Some(p) = update.processed {
            sample.processed = Some(p);
        }
        sample.revision += 1;
        Ok(sample)
    }

    /// Parses manifest text into samples (ids checked against `pattern`).
    pub fn parse_manifest(text: &str, pattern: IdPattern) -> Result<Vec<Sample>, DatasetError> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| DatasetError::Manifest { line: i + 1, message };
            let s: Sample = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
            let id = SampleId::parse(&s.id, pattern).ok_or_else(|| bad(format!("bad id {:?}", s.id)))?;
            if id.batch != s.batch || id.author != s.author || id.seq != s.seq {
                return Err(bad(format!("id {:?} disagrees with batch/author/seq", s.id)));
            }
            if !seen.insert(s.id.clone()) {
                return Err(bad(format!("duplicate id {:?}", s.id)));
            }
            out.push(s);
        }
        Ok(out)
    }

    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for s in self.samples.values() {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// Loads `<root>/manifest.jsonl`.
    pub fn load(root: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut reg = Registry::new(root);
        let text = std::fs::read_to_string(reg.root.join(MANIFEST_FILE))?;
        for s in Self::parse_manifest(&text, reg.pattern)? {
            reg.samples.insert(s.id.clone(), s);
        }
        Ok(reg)
    }

    /// Writes the manifest atomically (temp file + rename).
    pub fn save(&self) -> Result<(), DatasetError> {
        std::fs::create_dir_all(&self.root)?;
        let tmp = self.root.join(format!(".{MANIFEST_FILE}.tmp"));
        std::fs::write(&tmp, self.to_manifest())?;
        std::fs::rename(&tmp, self.root.join(MANIFEST_FILE))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Ingest

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    pub pattern: IdPattern,
    pub initial_status: Status,
}

/// Pairs every `<id>.png` with `<id>.gt.txt` in `dir`. Other files are
/// ignored. The registry root is `dir`.
pub fn ingest(dir: &Path, opts: IngestOptions) -> Result<Registry, DatasetError> {
    let mut pngs = BTreeSet::new();
    let mut gts = BTreeSet::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(GT_SUFFIX) {
            gts.insert(stem.to_string());
        } else if let Some(stem) = name.strip_suffix(".png") {
            pngs.insert(stem.to_string());
        }
    }
    let mut reg = Registry::new(dir).with_pattern(opts.pattern);
    for id in pngs.union(&gts) {
        let parsed = SampleId::parse(id, opts.pattern).ok_or_else(|| DatasetError::BadName(id.clone()))?;
        match (pngs.contains(id), gts.contains(id)) {
            (true, false) => return Err(DatasetError::OrphanImage(id.clone())),
            (false, true) => return Err(DatasetError::OrphanTruth(id.clone())),
            _ => {}
        }
        let bytes = std::fs::read(dir.join(format!("{id}{GT_SUFFIX}")))?;
        let ground_truth = GroundTruth::from_file_bytes(&bytes).map_err(|source| DatasetError::BadGroundTruth {
            id: id.clone(),
            source,
        })?;
        reg.samples.insert(
            id.clone(),
            Sample {
                id: id.clone(),
                batch: parsed.batch,
                author: parsed.author,
                seq: parsed.seq,
                image: PathBuf::from(format!("{id}.png")),
                ground_truth,
                status: opts.initial_status,
                revision: 0,
                split: SplitTag::Unassigned,
                processed: None,
            },
        );
    }
    Ok(reg)
}

// ---------------------------------------------------------------------------
// Splits

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub ratio_train: f64,
    pub seed: u64,
    /// Keep each author's samples on one side of the split.
    pub by_author: bool,
}

impl SplitSpec {
    pub fn new(ratio_train: f64, seed: u64) -> Result<Self, DatasetError> {
        if !(ratio_train > 0.0 && ratio_train < 1.0) {
            return Err(DatasetError::BadSplitSpec(format!("ratio {ratio_train} outside (0, 1)")));
        }
        Ok(Self {
            ratio_train,
            seed,
            by_author: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// Sorted ids.
    pub train: Vec<String>,
    /// Sorted ids.
    pub eval: Vec<String>,
}

impl Assignment {
    pub fn tag_of(&self, id: &str) -> Option<SplitTag> {
        if self.train.binary_search_by(|x| x.as_str().cmp(id)).is_ok() {
            Some(SplitTag::Train)
        } else if self.eval.binary_search_by(|x| x.as_str().cmp(id)).is_ok() {
            Some(SplitTag::Eval)
        } else {
            None
        }
    }
}

/// `floor(N · ratio)` as an integer, robust to representation error in the
/// ratio (e.g. 624 · 0.7 = 436.8 must not become 436.79999 → 436 by
/// accident, nor 10 · 0.9 = 9.000000000000002 → 9 by luck).
pub fn train_count(n: usize, ratio: f64) -> usize {
    let exact = n as f64 * ratio;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        exact.floor() as usize
    }
}

/// Seeded split of the clean samples: ids sorted, shuffled by SplitMix64
/// Fisher–Yates, first `floor(N · ratio)` to train.
pub fn split(registry: &Registry, spec: &SplitSpec) -> Result<Assignment, DatasetError> {
    let mut ids: Vec<String> = registry
        .samples()
        .filter(|s| s.status == Status::Clean)
        .map(|s| s.id.clone())
        .collect();
    if ids.is_empty() {
        return Err(DatasetError::EmptyRegistry);
    }
    let n_train = train_count(ids.len(), spec.ratio_train);
    let mut rng = SplitMix64::new(spec.seed);
    let (mut train, mut eval) = if spec.by_author {
        let mut by_author: BTreeMap<u32, Vec<String>> = BTreeMap::new();
        for s in registry.samples().filter(|s| s.status == Status::Clean) {
            by_author.entry(s.author).or_default().push(s.id.clone());
        }
        let mut authors: Vec<u32> = by_author.keys().copied().collect();
        rng.shuffle(&mut authors);
        let (mut train, mut eval) = (Vec::new(), Vec::new());
        for a in authors {
            let group = by_author.remove(&a).expect("author present");
            if train.len() < n_train {
                train.extend(group);
            } else {
                eval.extend(group);
            }
        }
        (train, eval)
    } else {
        rng.shuffle(&mut ids);
        let eval = ids.split_off(n_train);
        (ids, eval)
    };
    train.sort();
    eval.sort();
    Ok(Assignment { train, eval })
}

/// Records the assignment on the samples (only those whose tag changes get
/// a new revision).
pub fn apply_assignment(registry: &mut Registry, assignment: &Assignment) -> Result<(), DatasetError> {
    for (ids, tag) in [(&assignment.train, SplitTag::Train), (&assignment.eval, SplitTag::Eval)] {
        for id in ids {
            let current = registry.get(id).ok_or_else(|| DatasetError::NotFound(id.clone()))?.split;
            if current != tag {
                registry.update(
                    id,
                    SampleUpdate {
                        split: Some(tag),
                        ..Default::default()
                    },
                    None,
                )?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Volunteers and statistics

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolunteerRecord {
    pub gender: Gender,
    pub age: u32,
    pub occupation: String,
    /// `None` when unknown (`N/A` in the CSV).
    #[serde(with = "origin_na")]
    pub origin: Option<String>,
}

mod origin_na {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<String>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.as_deref().unwrap_or("N/A"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
        let s = String::deserialize(d)?;
        let s = s.trim();
        Ok((!s.is_empty() && s != "N/A").then(|| s.to_string()))
    }
}

/// Reads `volunteers.csv` (`gender,age,occupation,origin`).
pub fn parse_volunteers(reader: impl std::io::Read) -> Result<Vec<VolunteerRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<VolunteerRecord>().enumerate() {
        let bad = |message: String| DatasetError::Volunteer { row: i + 1, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.age == 0 {
            return Err(bad("age must be positive".into()));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_volunteers(records: &[VolunteerRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 fields")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sample_count: usize,
    pub author_count: usize,
    pub batch_counts: BTreeMap<Batch, usize>,
    pub status_counts: BTreeMap<Status, usize>,
    pub volunteer_count: usize,
    pub gender_counts: BTreeMap<Gender, usize>,
    /// Arithmetic mean rounded to one decimal; absent without volunteers.
    pub mean_age: Option<f64>,
}

pub fn stats(registry: &Registry, volunteers: &[VolunteerRecord]) -> CorpusStats {
    let mut batch_counts = BTreeMap::new();
    let mut status_counts = BTreeMap::new();
    let mut authors = BTreeSet::new();
    for s in registry.samples() {
        *batch_counts.entry(s.batch).or_insert(0) += 1;
        *status_counts.entry(s.status).or_insert(0) += 1;
        authors.insert(s.author);
    }
    let mut gender_counts = BTreeMap::new();
    for v in volunteers {
        *gender_counts.entry(v.gender).or_insert(0) += 1;
    }
    let mean_age = (!volunteers.is_empty()).then(|| {
        let mean = volunteers.iter().map(|v| v.age as f64).sum::<f64>() / volunteers.len() as f64;
        (mean * 10.0).round() / 10.0
    });
    CorpusStats {
        sample_count: registry.len(),
        author_count: authors.len(),
        batch_counts,
        status_counts,
        volunteer_count: volunteers.len(),
        gender_counts,
        mean_age,
    }
}

// ---------------------------------------------------------------------------
// Training layout export

pub const CONFIG_FILE: &str = "training.conf";
pub const TRAIN_LIST: &str = "list.train";
pub const EVAL_LIST: &str = "list.eval";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    /// Directory holding the `<id>.png` / `<id>.gt.txt` pairs.
    pub ground_truth_dir: PathBuf,
    pub config: PathBuf,
    pub train_list: PathBuf,
    pub eval_list: PathBuf,
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

/// Writes the clean samples as
///
/// ```text
/// <out>/training.conf              KEY VALUE lines from `cfg`
/// <out>/list.train, list.eval      one id per line
/// <out>/<name>-ground-truth/       <id>.png + <id>.gt.txt pairs
/// ```
///
/// The processed image stage is exported when present, the raw image
/// otherwise. Output is a pure function of the inputs.
pub fn export_training_layout(
    registry: &Registry,
    assignment: &Assignment,
    cfg: &EngineConfig,
    out: &Path,
) -> Result<ExportManifest, DatasetError> {
    let clean: Vec<&Sample> = registry.samples().filter(|s| s.status == Status::Clean).collect();
    let unassigned: Vec<String> = clean
        .iter()
        .filter(|s| assignment.tag_of(&s.id).is_none())
        .map(|s| s.id.clone())
        .collect();
    if !unassigned.is_empty() {
        return Err(DatasetError::UnassignedSamples(unassigned));
    }
    for id in assignment.train.iter().chain(&assignment.eval) {
        match registry.get(id) {
            Some(s) if s.status == Status::Clean => {}
            _ => return Err(DatasetError::NotFound(id.clone())),
        }
    }

    let gt_dir = out.join(format!("{}-ground-truth", cfg.name));
    std::fs::create_dir_all(&gt_dir)?;
    for s in &clean {
        let src = registry.resolve(s.processed.as_ref().unwrap_or(&s.image));
        std::fs::copy(&src, gt_dir.join(format!("{}.png", s.id)))?;
        std::fs::write(gt_dir.join(format!("{}{GT_SUFFIX}", s.id)), s.ground_truth.to_file_string())?;
    }
    let list = |ids: &[String]| ids.iter().map(|i| format!("{i}\n")).collect::<String>();
    std::fs::write(out.join(CONFIG_FILE), cfg.to_config_file())?;
    std::fs::write(out.join(TRAIN_LIST), list(&assignment.train))?;
    std::fs::write(out.join(EVAL_LIST), list(&assignment.eval))?;
    Ok(ExportManifest {
        ground_truth_dir: gt_dir,
        config: out.join(CONFIG_FILE),
        train_list: out.join(TRAIN_LIST),
        eval_list: out.join(EVAL_LIST),
        train: assignment.train.clone(),
        eval: assignment.eval.clone(),
    })
}
