//! CSV and Markdown rendering of evaluation tables.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::published::{Metric, PublishedRow};
use super::EvalReport;
use crate::dataset::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other:?} (expected csv or md)")),
        }
    }
}

/// Rounds a non-negative value half-up to `decimals` places.
///
/// The value is first fixed at 12 decimals so that binary representation
/// error (0.2585 stored as 0.25849999…) does not flip a decimal tie.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    debug_assert!(decimals <= 12);
    if !x.is_finite() {
        return x;
    }
    let fixed: i128 = format!("{:.12}", x.abs())
        .replace('.', "")
        .parse()
        .expect("formatted float is numeric");
    let step = 10i128.pow(12 - decimals);
    let rounded = (fixed + step / 2) / step;
    x.signum() * rounded as f64 / 10f64.powi(decimals as i32)
}

/// Three-decimal, half-up rendering; `None` becomes `-`.
pub fn format_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.3}", round_half_up(x, 3)),
        None => "-".to_string(),
    }
}

/// One table row: eight category cells plus mean and weighted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub values: [Option<f64>; 8],
    pub mean: Option<f64>,
    pub weighted: Option<f64>,
}

impl ReportRow {
    pub fn from_report(label: &str, r: &EvalReport, metric: Metric) -> Self {
        let (values, mean, weighted) = match metric {
            Metric::Iou => (r.iou_row(), r.macro_iou, r.w_iou),
            Metric::Dice => (r.dice_row(), r.macro_dice, r.w_dice),
        };
        Self {
            method: label.to_string(),
            values,
            mean: Some(mean),
            weighted: Some(weighted),
        }
    }

    pub fn from_published(p: &PublishedRow) -> Self {
        Self {
            method: p.label.to_string(),
            values: p.values,
            mean: Some(p.mean),
            weighted: p.weighted,
        }
    }

    fn cells(&self) -> Vec<String> {
        self.values
            .iter()
            .chain([&self.mean, &self.weighted])
            .map(|v| format_metric(*v))
            .collect()
    }
}

fn weighted_header(metric: Metric) -> &'static str {
    match metric {
        Metric::Iou => "wIoU",
        Metric::Dice => "wDice",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_field(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Renders IoU and Dice tables. `counts` adds per-category sample counts.
pub fn emit_tables(
    format: ReportFormat,
    iou_rows: &[ReportRow],
    dice_rows: &[ReportRow],
    counts: Option<&EvalReport>,
) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            let header: Vec<&str> = Category::ALL.iter().map(|c| c.name()).collect();
            let _ = writeln!(out, "metric,method,{},mean,weighted", header.join(","));
            for (metric, rows) in [(Metric::Iou, iou_rows), (Metric::Dice, dice_rows)] {
                for row in rows {
                    let _ = writeln!(
                        out,
                        "{},{},{}",
                        metric.name(),
                        csv_field(&row.method),
                        row.cells().join(",")
                    );
                }
            }
            if let Some(r) = counts {
                let n: Vec<String> = r.per_category.iter().map(|c| c.n_samples.to_string()).collect();
                let v: Vec<String> = r.per_category.iter().map(|c| c.n_valid.to_string()).collect();
                let n_valid: usize = r.per_category.iter().map(|c| c.n_valid).sum();
                let _ = writeln!(out, "n_samples,,{},,{}", n.join(","), r.total_samples);
                let _ = writeln!(out, "n_valid,,{},,{}", v.join(","), n_valid);
            }
        }
        ReportFormat::Markdown => {
            for (metric, rows) in [(Metric::Iou, iou_rows), (Metric::Dice, dice_rows)] {
                let _ = writeln!(out, "### {}\n", metric.name());
                let _ = write!(out, "| Method |");
                for c in Category::ALL {
                    let _ = write!(out, " {} |", c.name());
                }
                let _ = writeln!(out, " mean | {} |", weighted_header(metric));
                let _ = writeln!(out, "|---|{}", "---:|".repeat(10));
                for row in rows {
                    let _ = writeln!(out, "| {} | {} |", md_field(&row.method), row.cells().join(" | "));
                }
                out.push('\n');
            }
            if let Some(r) = counts {
                let _ = writeln!(out, "### Samples (valid / total)\n");
                let _ = write!(out, "|");
                for c in Category::ALL {
                    let _ = write!(out, " {} |", c.name());
                }
                let _ = writeln!(out, " total |");
                let _ = writeln!(out, "|{}", "---:|".repeat(9));
                let _ = write!(out, "|");
                for c in &r.per_category {
                    let _ = write!(out, " {} / {} |", c.n_valid, c.n_samples);
                }
                let n_valid: usize = r.per_category.iter().map(|c| c.n_valid).sum();
                let _ = writeln!(out, " {} / {} |", n_valid, r.total_samples);
            }
        }
    }
    out
}

/// Renders a single evaluation run as IoU and Dice tables with sample counts.
pub fn emit_report(r: &EvalReport, format: ReportFormat) -> String {
    emit_tables(
        format,
        &[ReportRow::from_report("model", r, Metric::Iou)],
        &[ReportRow::from_report("model", r, Metric::Dice)],
        Some(r),
    )
}
