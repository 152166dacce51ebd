//! Published benchmark comparison rows, kept as constants for report comparison
//! and for checking the macro-mean arithmetic.
//!
//! Cell values are copied as printed (three decimals, trailing zeros dropped).

use super::macro_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Iou,
    Dice,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Iou => "IoU",
            Metric::Dice => "Dice",
        }
    }
}

/// Which published table a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowGroup {
    /// Comparison against prior grounding methods.
    Methods,
    /// Fine-tuning stage ablation.
    StageAblation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishedRow {
    pub group: RowGroup,
    pub metric: Metric,
    pub label: &'static str,
    pub values: [Option<f64>; 8],
    /// The printed "mean" column.
    pub mean: f64,
    /// The printed weighted column, if any.
    pub weighted: Option<f64>,
    /// False when the printed mean was not computed from the printed cells.
    pub mean_from_cells: bool,
}

impl PublishedRow {
    /// Macro mean of the printed cells (null counted as 0).
    pub fn recomputed_mean(&self) -> f64 {
        macro_mean(&self.values)
    }
}

const fn row(
    group: RowGroup,
    metric: Metric,
    label: &'static str,
    v: [f64; 8],
    mean: f64,
    weighted: f64,
) -> PublishedRow {
    PublishedRow {
        group,
        metric,
        label,
        values: [
            Some(v[0]),
            Some(v[1]),
            Some(v[2]),
            Some(v[3]),
            Some(v[4]),
            Some(v[5]),
            Some(v[6]),
            Some(v[7]),
        ],
        mean,
        weighted: Some(weighted),
        mean_from_cells: true,
    }
}

use Metric::{Dice, Iou};
use RowGroup::{Methods, StageAblation};

/// Label used for the two-stage fine-tuned model's published numbers.
pub const REFERENCE_LABEL: &str = "two-stage MLLM (published)";

pub const ROWS: &[PublishedRow] = &[
    row(Methods, Iou, "MSLL", [0.425, 0.106, 0.386, 0.388, 0.294, 0.33, 0.325, 0.368], 0.328, 0.308),
    row(Methods, Iou, "MedKLIP", [0.297, 0.091, 0.265, 0.323, 0.327, 0.395, 0.197, 0.216], 0.264, 0.267),
    row(Methods, Iou, "Biovil", [0.328, 0.137, 0.297, 0.275, 0.213, 0.406, 0.188, 0.224], 0.259, 0.281),
    row(Methods, Iou, "Gloria", [0.29, 0.116, 0.304, 0.303, 0.201, 0.408, 0.197, 0.33], 0.269, 0.282),
    PublishedRow {
        group: Methods,
        metric: Iou,
        label: "GPT-4v",
        values: [None; 8],
        mean: 0.0833,
        weighted: None,
        mean_from_cells: false,
    },
    row(Methods, Iou, REFERENCE_LABEL, [0.446, 0.303, 0.343, 0.395, 0.286, 0.592, 0.28, 0.374], 0.377, 0.407),
    row(Methods, Dice, "MSLL", [0.576, 0.163, 0.538, 0.538, 0.433, 0.485, 0.468, 0.525], 0.466, 0.44),
    row(Methods, Dice, "MedKLIP", [0.443, 0.151, 0.401, 0.476, 0.476, 0.559, 0.307, 0.344], 0.395, 0.396),
    row(Methods, Dice, "Biovil", [0.472, 0.217, 0.433, 0.405, 0.326, 0.56, 0.294, 0.352], 0.382, 0.408),
    row(Methods, Dice, "Gloria", [0.417, 0.181, 0.443, 0.442, 0.315, 0.567, 0.298, 0.476], 0.392, 0.407),
    row(Methods, Dice, REFERENCE_LABEL, [0.584, 0.43, 0.489, 0.543, 0.401, 0.736, 0.405, 0.519], 0.513, 0.544),
    row(StageAblation, Iou, "no fine-tuning", [0.118, 0.041, 0.104, 0.098, 0.108, 0.136, 0.137, 0.069], 0.101, 0.101),
    row(StageAblation, Iou, "stage 2 only", [0.418, 0.159, 0.345, 0.419, 0.409, 0.607, 0.24, 0.256], 0.357, 0.374),
    PublishedRow {
        group: StageAblation,
        metric: Iou,
        label: "stage 1 only",
        values: [Some(0.049), None, None, None, None, Some(0.0), None, Some(0.0)],
        mean: 0.006,
        weighted: Some(0.016),
        mean_from_cells: true,
    },
    row(StageAblation, Iou, "stage 1 + stage 2", [0.446, 0.303, 0.343, 0.395, 0.286, 0.592, 0.28, 0.374], 0.377, 0.407),
    row(StageAblation, Dice, "no fine-tuning", [0.184, 0.071, 0.167, 0.157, 0.181, 0.221, 0.212, 0.116], 0.164, 0.163),
    row(StageAblation, Dice, "stage 2 only", [0.55, 0.231, 0.464, 0.546, 0.524, 0.746, 0.336, 0.354], 0.469, 0.488),
    PublishedRow {
        group: StageAblation,
        metric: Dice,
        label: "stage 1 only",
        values: [Some(0.094), None, None, None, None, Some(0.0), None, Some(0.0)],
        mean: 0.012,
        weighted: Some(0.031),
        mean_from_cells: true,
    },
    row(StageAblation, Dice, "stage 1 + stage 2", [0.584, 0.43, 0.489, 0.543, 0.401, 0.736, 0.405, 0.519], 0.513, 0.544),
];

pub fn rows(group: RowGroup, metric: Metric) -> impl Iterator<Item = &'static PublishedRow> {
    ROWS.iter().filter(move |r| r.group == group && r.metric == metric)
}
