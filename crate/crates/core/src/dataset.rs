//! Grounding manifests: loading, validation, category taxonomy and
//! patient-disjoint train/val/test splitting.
//!
//! A manifest is JSON-lines, one record per line:
//!
//! ```text
//! {"sample_id":"s1","patient_id":"p1","image_ref":"img/s1.png","image_width":448,
//!  "image_height":448,"category":"Pleural Effusion","phrase":"small left effusion",
//!  "gt_box":[10,20,200,240]}
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelBox;
use crate::seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate sample_id {sample_id:?}")]
    DuplicateId { line: usize, sample_id: String },
    #[error("line {line}: box {bbox:?} of sample {sample_id:?} is outside the {width}x{height} image")]
    BoxOutOfBounds {
        line: usize,
        sample_id: String,
        bbox: [f64; 4],
        width: u32,
        height: u32,
    },
    #[error("need at least 3 distinct patients to split, found {0}")]
    TooFewPatients(usize),
    #[error("split ratios must be positive, got {0:?}")]
    InvalidRatios((u32, u32, u32)),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
}

/// The eight finding categories, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Pneumonia,
    Pneumothorax,
    Consolidation,
    Atelectasis,
    Edema,
    Cardiomegaly,
    LungOpacity,
    PleuralEffusion,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Pneumonia,
        Category::Pneumothorax,
        Category::Consolidation,
        Category::Atelectasis,
        Category::Edema,
        Category::Cardiomegaly,
        Category::LungOpacity,
        Category::PleuralEffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Pneumonia => "Pneumonia",
            Category::Pneumothorax => "Pneumothorax",
            Category::Consolidation => "Consolidation",
            Category::Atelectasis => "Atelectasis",
            Category::Edema => "Edema",
            Category::Cardiomegaly => "Cardiomegaly",
            Category::LungOpacity => "Lung Opacity",
            Category::PleuralEffusion => "Pleural Effusion",
        }
    }

    /// Position in [`Category::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = DatasetError;

    /// Matches names ignoring whitespace and ASCII case, so `LungOpacity`,
    /// `Lung Opacity` and `lung opacity` are all accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squash = |t: &str| -> String {
            t.chars()
                .filter(|c| !c.is_whitespace())
                .flat_map(char::to_lowercase)
                .collect()
        };
        let key = squash(s);
        Category::ALL
            .into_iter()
            .find(|c| squash(c.name()) == key)
            .ok_or_else(|| DatasetError::UnknownCategory(s.to_string()))
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One phrase/box grounding record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSample {
    pub sample_id: String,
    pub patient_id: String,
    pub image_ref: String,
    pub image_width: u32,
    pub image_height: u32,
    pub category: Category,
    pub phrase: String,
    #[serde(with = "box_array")]
    pub gt_box: PixelBox,
}

mod box_array {
    use super::PixelBox;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &PixelBox, s: S) -> Result<S::Ok, S::Error> {
        b.to_array().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PixelBox, D::Error> {
        let c = <[f64; 4]>::deserialize(d)?;
        PixelBox::from_array(c).map_err(serde::de::Error::custom)
    }
}

impl GroundingSample {
    /// Checks record-level invariants (everything except id uniqueness).
    pub fn validate(&self, line: usize) -> Result<(), DatasetError> {
        let schema = |message: &str| DatasetError::Schema {
            line,
            message: message.to_string(),
        };
        if self.sample_id.is_empty() {
            return Err(schema("sample_id is empty"));
        }
        if self.patient_id.is_empty() {
            return Err(schema("patient_id is empty"));
        }
        if self.phrase.trim().is_empty() {
            return Err(schema("phrase is empty"));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(schema("image dimensions must be positive"));
        }
        let b = &self.gt_box;
        if b.x_right > f64::from(self.image_width) || b.y_bottom > f64::from(self.image_height) {
            return Err(DatasetError::BoxOutOfBounds {
                line,
                sample_id: self.sample_id.clone(),
                bbox: b.to_array(),
                width: self.image_width,
                height: self.image_height,
            });
        }
        Ok(())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("sample serializes")
    }
}

/// Streams validated samples from a JSON-lines reader, rejecting duplicate ids.
///
/// Blank lines are skipped. Line numbers in errors are 1-based.
pub struct ManifestReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    path: String,
}

impl<R: BufRead> ManifestReader<R> {
    pub fn new(reader: R, path: impl Into<String>) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
            path: path.into(),
        }
    }
}

impl ManifestReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::new(BufReader::new(file), path.display().to_string()))
    }
}

impl<R: BufRead> Iterator for ManifestReader<R> {
    type Item = Result<GroundingSample, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(source) => {
                    return Some(Err(DatasetError::Io {
                        path: self.path.clone(),
                        source,
                    }))
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&line));
        }
    }
}

impl<R> ManifestReader<R> {
    fn parse_line(&mut self, line: &str) -> Result<GroundingSample, DatasetError> {
        let line_no = self.line_no;
        let sample: GroundingSample =
            serde_json::from_str(line).map_err(|e| DatasetError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
        sample.validate(line_no)?;
        if !self.seen.insert(sample.sample_id.clone()) {
            return Err(DatasetError::DuplicateId {
                line: line_no,
                sample_id: sample.sample_id,
            });
        }
        Ok(sample)
    }
}

/// Loads and validates a whole manifest, preserving file order.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<GroundingSample>, DatasetError> {
    ManifestReader::open(path)?.collect()
}

pub fn write_manifest<W: Write>(mut w: W, samples: &[GroundingSample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(w, "{}", s.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Per-sample split labels, in input order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignments: Vec<(String, Split)>,
    pub seed: u64,
    /// Distinct patients per split: (train, val, test).
    pub patient_counts: (usize, usize, usize),
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    sample_id: &'a str,
    split: Split,
}

impl SplitAssignment {
    pub fn get(&self, sample_id: &str) -> Option<Split> {
        self.assignments
            .iter()
            .find(|(id, _)| id == sample_id)
            .map(|(_, s)| *s)
    }

    /// JSON-lines with `sample_id` and `split`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (sample_id, split) in &self.assignments {
            let rec = SplitRecord {
                sample_id,
                split: *split,
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
        }
        Ok(())
    }
}

/// Patient counts for each split under floor-then-remainder allocation.
pub fn split_sizes(patients: usize, ratios: (u32, u32, u32)) -> (usize, usize, usize) {
    let total = (ratios.0 + ratios.1 + ratios.2) as usize;
    let train = patients * ratios.0 as usize / total;
    let val = patients * ratios.1 as usize / total;
    (train, val, patients - train - val)
}

/// Splits samples so that every patient's records land in a single split.
///
/// Distinct patient ids are sorted, shuffled with a generator keyed by
/// `seed`, then cut into `floor(r_train·P)`, `floor(r_val·P)` and the
/// remainder. Record order does not affect the patient-to-split mapping.
pub fn split_by_patient(
    samples: &[GroundingSample],
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    if ratios.0 == 0 || ratios.1 == 0 || ratios.2 == 0 {
        return Err(DatasetError::InvalidRatios(ratios));
    }
    let mut patients: Vec<&str> = samples
        .iter()
        .map(|s| s.patient_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if patients.len() < 3 {
        return Err(DatasetError::TooFewPatients(patients.len()));
    }
    patients.shuffle(&mut seed::rng(seed));

    let (n_train, n_val, n_test) = split_sizes(patients.len(), ratios);
    let mut by_patient = std::collections::HashMap::with_capacity(patients.len());
    for (i, p) in patients.iter().enumerate() {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        by_patient.insert(*p, split);
    }

    let mut warnings = Vec::new();
    for (name, n) in [("train", n_train), ("val", n_val), ("test", n_test)] {
        if n == 0 {
            warnings.push(format!("{name} split is empty ({} patients)", patients.len()));
        }
    }

    Ok(SplitAssignment {
        assignments: samples
            .iter()
            .map(|s| (s.sample_id.clone(), by_patient[s.patient_id.as_str()]))
            .collect(),
        seed,
        patient_counts: (n_train, n_val, n_test),
        warnings,
    })
}

/// Number of samples per category, in reporting order.
pub fn category_counts(samples: &[GroundingSample]) -> [(Category, usize); 8] {
    let mut counts = Category::ALL.map(|c| (c, 0usize));
    for s in samples {
        counts[s.category.index()].1 += 1;
    }
    counts
}

/// Options for [`synthesize_manifest`].
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub per_category: usize,
    pub patients: usize,
    pub image_width: u32,
    pub image_height: u32,
    /// Place every box corner on a multiple of `dim / 100`.
    pub grid_aligned: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_category: 8,
            patients: 32,
            image_width: 448,
            image_height: 448,
            grid_aligned: true,
            seed: 42,
        }
    }
}

const SYNTH_PHRASES: [&str; 8] = [
    "patchy opacity in the right lower lobe",
    "small right apical pneumothorax",
    "dense consolidation at the left base",
    "bibasilar atelectasis",
    "mild interstitial edema",
    "enlarged cardiac silhouette",
    "hazy opacity in the left mid zone",
    "small left pleural effusion",
];

/// Generates a schema-valid synthetic manifest with `per_category` samples per category.
pub fn synthesize_manifest(cfg: &SynthConfig) -> Vec<GroundingSample> {
    let mut rng = seed::rng(cfg.seed);
    let patients = cfg.patients.max(1);
    let (w, h) = (f64::from(cfg.image_width), f64::from(cfg.image_height));
    let mut out = Vec::with_capacity(cfg.per_category * 8);
    for (ci, category) in Category::ALL.into_iter().enumerate() {
        for k in 0..cfg.per_category {
            let idx = ci * cfg.per_category + k;
            let (x0, x1) = draw_span(&mut rng);
            let (y0, y1) = draw_span(&mut rng);
            let gt_box = if cfg.grid_aligned {
                let g = |q: u32, d: f64| f64::from(q) * d / 100.0;
                PixelBox::new(g(x0, w), g(y0, h), g(x1, w), g(y1, h))
            } else {
                // off-grid: nudge each corner by up to half a grid step, staying inside the image
                let mut nudge = |q: u32, d: f64| {
                    let r: f64 = rng.random_range(-0.5..0.5);
                    (f64::from(q) + r).clamp(0.0, 100.0) * d / 100.0
                };
                PixelBox::new(nudge(x0, w), nudge(y0, h), nudge(x1, w), nudge(y1, h))
            }
            .expect("generated box is valid");
            out.push(GroundingSample {
                sample_id: format!("s{idx:05}"),
                patient_id: format!("p{:04}", rng.random_range(0..patients)),
                image_ref: format!("images/s{idx:05}.png"),
                image_width: cfg.image_width,
                image_height: cfg.image_height,
                category,
                phrase: SYNTH_PHRASES[ci].to_string(),
                gt_box,
            });
        }
    }
    out
}

/// A grid span `lo < hi` of at least 10 units.
fn draw_span(rng: &mut seed::SeededRng) -> (u32, u32) {
    let lo = rng.random_range(0..=80);
    let hi = rng.random_range(lo + 10..=100);
    (lo, hi)
}
