//! Scoring of raw model output against ground truth, and aggregation into
//! per-category, macro and count-weighted metrics.
//!
//! Aggregation rules:
//!
//! * an output that does not parse scores IoU = Dice = 0 and stays in the
//!   denominator of its category mean;
//! * a category with no valid output at all has a null mean (shown as `-`);
//! * the macro mean averages the eight category means with null counted as 0;
//! * the weighted mean is `Σ n_c·mean_c / Σ n_c`, i.e. the plain mean over
//!   all samples.
//!
//! All sums go through [`ExactSum`], so every aggregate is independent of the
//! order in which samples are scored.

mod overlay;
pub mod published;
mod report;
mod sum;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{dequantize, parse, FailureKind};
use crate::dataset::{Category, GroundingSample};
use crate::geometry::{dice, iou, PixelBox};

pub use overlay::render_overlay;
pub use report::{emit_report, emit_tables, format_metric, round_half_up, ReportFormat, ReportRow};
pub use sum::ExactSum;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and samples do not align: {0}")]
    Alignment(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("predictions line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// Score of one model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub valid: bool,
    pub iou: f64,
    pub dice: f64,
    pub failure_kind: Option<FailureKind>,
}

impl SampleScore {
    pub fn invalid(sample_id: impl Into<String>, kind: FailureKind) -> Self {
        Self {
            sample_id: sample_id.into(),
            valid: false,
            iou: 0.0,
            dice: 0.0,
            failure_kind: Some(kind),
        }
    }
}

/// Parses `raw_output` and maps the box back to the sample's pixel space.
pub fn predicted_box(s: &GroundingSample, raw_output: &str) -> Result<PixelBox, FailureKind> {
    let nb = parse(raw_output).result?;
    Ok(dequantize(&nb, i64::from(s.image_width), i64::from(s.image_height))
        .expect("manifest samples have positive dimensions"))
}

pub fn score_sample(s: &GroundingSample, raw_output: &str) -> SampleScore {
    match predicted_box(s, raw_output) {
        Ok(pred) => SampleScore {
            sample_id: s.sample_id.clone(),
            valid: true,
            iou: iou(&pred, &s.gt_box),
            dice: dice(&pred, &s.gt_box),
            failure_kind: None,
        },
        Err(kind) => SampleScore::invalid(s.sample_id.clone(), kind),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub category: Category,
    pub n_samples: usize,
    pub n_valid: usize,
    pub mean_iou: Option<f64>,
    pub mean_dice: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_category: Vec<CategoryMetrics>,
    pub macro_iou: f64,
    pub macro_dice: f64,
    pub w_iou: f64,
    pub w_dice: f64,
    pub total_samples: usize,
}

impl EvalReport {
    pub fn category(&self, c: Category) -> &CategoryMetrics {
        &self.per_category[c.index()]
    }

    pub fn iou_row(&self) -> [Option<f64>; 8] {
        std::array::from_fn(|i| self.per_category[i].mean_iou)
    }

    pub fn dice_row(&self) -> [Option<f64>; 8] {
        std::array::from_fn(|i| self.per_category[i].mean_dice)
    }
}

/// Unweighted mean of eight category values, null counted as 0.
pub fn macro_mean(values: &[Option<f64>; 8]) -> f64 {
    let mut sum = ExactSum::new();
    for v in values {
        sum.add(v.unwrap_or(0.0));
    }
    sum.value() / values.len() as f64
}

#[derive(Debug, Clone, Default)]
struct CategoryAcc {
    n: usize,
    n_valid: usize,
    iou: ExactSum,
    dice: ExactSum,
}

/// Streaming fold of sample scores into an [`EvalReport`].
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    per_category: [CategoryAcc; 8],
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, category: Category, score: &SampleScore) {
        let acc = &mut self.per_category[category.index()];
        acc.n += 1;
        if score.valid {
            acc.n_valid += 1;
            acc.iou.add(score.iou);
            acc.dice.add(score.dice);
        }
    }

    pub fn finish(&self) -> EvalReport {
        let per_category: Vec<CategoryMetrics> = Category::ALL
            .iter()
            .zip(&self.per_category)
            .map(|(&category, acc)| {
                let mean = |s: &ExactSum| (acc.n_valid > 0).then(|| s.value() / acc.n as f64);
                CategoryMetrics {
                    category,
                    n_samples: acc.n,
                    n_valid: acc.n_valid,
                    mean_iou: mean(&acc.iou),
                    mean_dice: mean(&acc.dice),
                }
            })
            .collect();

        let total: usize = self.per_category.iter().map(|a| a.n).sum();
        let weighted = |pick: fn(&CategoryAcc) -> &ExactSum| {
            if total == 0 {
                return 0.0;
            }
            let mut all = ExactSum::new();
            for acc in &self.per_category {
                all.merge(pick(acc));
            }
            all.value() / total as f64
        };
        let iou_row = std::array::from_fn(|i| per_category[i].mean_iou);
        let dice_row = std::array::from_fn(|i| per_category[i].mean_dice);

        EvalReport {
            macro_iou: macro_mean(&iou_row),
            macro_dice: macro_mean(&dice_row),
            w_iou: weighted(|a| &a.iou),
            w_dice: weighted(|a| &a.dice),
            total_samples: total,
            per_category,
        }
    }
}

/// Aggregates scores that pair one-to-one (by `sample_id`) with `samples`.
pub fn aggregate(scores: &[SampleScore], samples: &[GroundingSample]) -> Result<EvalReport, EvalError> {
    if scores.len() != samples.len() {
        return Err(EvalError::Alignment(format!(
            "{} scores for {} samples",
            scores.len(),
            samples.len()
        )));
    }
    let categories: HashMap<&str, Category> = samples
        .iter()
        .map(|s| (s.sample_id.as_str(), s.category))
        .collect();
    if categories.len() != samples.len() {
        return Err(EvalError::Alignment("duplicate sample_id among samples".into()));
    }
    let mut used = HashSet::with_capacity(scores.len());
    let mut acc = Accumulator::new();
    for score in scores {
        let category = categories.get(score.sample_id.as_str()).ok_or_else(|| {
            EvalError::Alignment(format!("score for unknown sample {:?}", score.sample_id))
        })?;
        if !used.insert(score.sample_id.as_str()) {
            return Err(EvalError::Alignment(format!(
                "more than one score for sample {:?}",
                score.sample_id
            )));
        }
        acc.add(*category, score);
    }
    Ok(acc.finish())
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub raw_text: String,
}

impl Prediction {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("prediction serializes")
    }
}

pub fn write_predictions<W: Write>(mut w: W, preds: &[Prediction]) -> std::io::Result<()> {
    for p in preds {
        writeln!(w, "{}", p.to_json_line())?;
    }
    Ok(())
}

/// Reads a predictions JSON-lines file into a map keyed by `sample_id`.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<HashMap<String, String>, EvalError> {
    let path = path.as_ref();
    let io_err = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let pred: Prediction = serde_json::from_str(&line).map_err(|e| EvalError::Schema {
            line: i + 1,
            message: e.to_string(),
        })?;
        if out.contains_key(&pred.sample_id) {
            return Err(EvalError::Schema {
                line: i + 1,
                message: format!("duplicate prediction for {:?}", pred.sample_id),
            });
        }
        out.insert(pred.sample_id, pred.raw_text);
    }
    Ok(out)
}
