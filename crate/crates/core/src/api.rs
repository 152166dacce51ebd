//! Flat entry points over plain numbers, strings and tuples, for foreign
//! bindings (e.g. a Python extension) that should not see the Rust types.
//! Each function only converts arguments and delegates.

use std::path::Path;

use serde::Serialize;

use crate::codec::{self, NormBox};
use crate::dataset::{load_manifest, DatasetError, GroundingSample};
use crate::eval::{self, EvalError, EvalReport, SampleScore};
use crate::geometry::{self, PixelBox};

/// `(x_left, y_top, x_right, y_bottom)` on the 0..=100 grid.
pub type GridTuple = (u32, u32, u32, u32);
/// `(x_left, y_top, x_right, y_bottom)` in pixels.
pub type PixelTuple = (f64, f64, f64, f64);

fn pixel(b: PixelTuple) -> Result<PixelBox, String> {
    PixelBox::new(b.0, b.1, b.2, b.3).map_err(|e| e.to_string())
}

fn grid(b: GridTuple) -> Result<NormBox, String> {
    NormBox::new(b.0, b.1, b.2, b.3).map_err(|k| format!("invalid grid box: {k}"))
}

pub fn encode_box(b: GridTuple) -> Result<String, String> {
    Ok(codec::encode(&grid(b)?))
}

/// Structured parse result; failures are data, never errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParsedBox {
    pub valid: bool,
    pub bbox: Option<GridTuple>,
    pub failure: Option<String>,
    pub span: Option<(usize, usize)>,
}

pub fn parse_box(text: &str) -> ParsedBox {
    let out = codec::parse(text);
    ParsedBox {
        valid: out.is_valid(),
        bbox: out.norm_box().map(|n| {
            (
                u32::from(n.qx_left),
                u32::from(n.qy_top),
                u32::from(n.qx_right),
                u32::from(n.qy_bottom),
            )
        }),
        failure: out.failure_kind().map(|k| k.to_string()),
        span: out.matched_span,
    }
}

pub fn quantize_box(b: PixelTuple, width: i64, height: i64) -> Result<GridTuple, String> {
    let n = codec::quantize(&pixel(b)?, width, height).map_err(|e| e.to_string())?;
    Ok((
        u32::from(n.qx_left),
        u32::from(n.qy_top),
        u32::from(n.qx_right),
        u32::from(n.qy_bottom),
    ))
}

pub fn dequantize_box(b: GridTuple, width: i64, height: i64) -> Result<PixelTuple, String> {
    let p = codec::dequantize(&grid(b)?, width, height).map_err(|e| e.to_string())?;
    Ok((p.x_left, p.y_top, p.x_right, p.y_bottom))
}

pub fn iou(a: PixelTuple, b: PixelTuple) -> Result<f64, String> {
    Ok(geometry::iou(&pixel(a)?, &pixel(b)?))
}

pub fn dice(a: PixelTuple, b: PixelTuple) -> Result<f64, String> {
    Ok(geometry::dice(&pixel(a)?, &pixel(b)?))
}

/// Scores one response against a ground-truth box in a `width×height` image.
pub fn score_sample(gt: PixelTuple, width: u32, height: u32, raw_text: &str) -> Result<SampleScore, String> {
    let sample = GroundingSample {
        sample_id: "-".into(),
        patient_id: "-".into(),
        image_ref: "-".into(),
        image_width: width,
        image_height: height,
        category: crate::dataset::Category::Pneumonia,
        phrase: "-".into(),
        gt_box: pixel(gt)?,
    };
    sample.validate(0).map_err(|e| e.to_string())?;
    Ok(eval::score_sample(&sample, raw_text))
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Scores a predictions file against a manifest and aggregates.
///
/// Every manifest sample needs exactly one prediction and vice versa.
pub fn evaluate_run(
    manifest: impl AsRef<Path>,
    predictions: impl AsRef<Path>,
) -> Result<(Vec<SampleScore>, EvalReport), RunError> {
    let samples = load_manifest(manifest)?;
    let preds = eval::load_predictions(predictions)?;
    let mut scores = Vec::with_capacity(samples.len());
    for s in &samples {
        let raw = preds.get(&s.sample_id).ok_or_else(|| {
            EvalError::Alignment(format!("no prediction for sample {:?}", s.sample_id))
        })?;
        scores.push(eval::score_sample(s, raw));
    }
    if preds.len() != samples.len() {
        return Err(EvalError::Alignment(format!(
            "{} predictions for {} samples",
            preds.len(),
            samples.len()
        ))
        .into());
    }
    let report = eval::aggregate(&scores, &samples)?;
    Ok((scores, report))
}
