//! Conversion between pixel boxes and the quantized `{<x0><y0><x1><y1>}` text form.
//!
//! Quantized coordinates live on a 0..=100 grid relative to the image
//! dimensions. `quantize` rounds half-up and clamps, `dequantize` maps a grid
//! value back with `q * dim / 100`. The parser is strict: it never repairs
//! out-of-range values or swapped corners, so invalid model output stays
//! distinguishable from a poorly placed box.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PixelBox;

/// Upper bound of the quantized coordinate grid.
pub const GRID_MAX: u8 = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    Dimension { width: i64, height: i64 },
    #[error("box {bbox:?} exceeds image bounds {width}x{height}")]
    Bounds { bbox: [f64; 4], width: i64, height: i64 },
    #[error("invalid box: {0}")]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Why a piece of text did not yield a usable box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// No substring matched the box grammar.
    NoMatch,
    /// A coordinate was above 100.
    OutOfRange,
    /// `x_left > x_right` or `y_top > y_bottom`.
    CornerOrder,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::NoMatch => "no_match",
            FailureKind::OutOfRange => "out_of_range",
            FailureKind::CornerOrder => "corner_order",
        })
    }
}

/// A box on the 0..=100 grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormBox {
    pub qx_left: u8,
    pub qy_top: u8,
    pub qx_right: u8,
    pub qy_bottom: u8,
}

impl NormBox {
    pub fn new(qx_left: u32, qy_top: u32, qx_right: u32, qy_bottom: u32) -> Result<Self, FailureKind> {
        let max = u32::from(GRID_MAX);
        if [qx_left, qy_top, qx_right, qy_bottom].iter().any(|&q| q > max) {
            return Err(FailureKind::OutOfRange);
        }
        if qx_left > qx_right || qy_top > qy_bottom {
            return Err(FailureKind::CornerOrder);
        }
        Ok(Self {
            qx_left: qx_left as u8,
            qy_top: qy_top as u8,
            qx_right: qx_right as u8,
            qy_bottom: qy_bottom as u8,
        })
    }

    pub fn to_array(&self) -> [u8; 4] {
        [self.qx_left, self.qy_top, self.qx_right, self.qy_bottom]
    }
}

impl fmt::Display for NormBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{<{}><{}><{}><{}>}}",
            self.qx_left, self.qy_top, self.qx_right, self.qy_bottom
        )
    }
}

/// Result of scanning text for a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub result: Result<NormBox, FailureKind>,
    /// Byte range `start..end` of the first grammar match, braces included.
    pub matched_span: Option<(usize, usize)>,
}

impl ParseOutcome {
    pub fn is_valid(&self) -> bool {
        self.result.is_ok()
    }

    pub fn norm_box(&self) -> Option<NormBox> {
        self.result.ok()
    }

    pub fn failure_kind(&self) -> Option<FailureKind> {
        self.result.err()
    }
}

fn check_dims(width: i64, height: i64) -> Result<(), CodecError> {
    if width <= 0 || height <= 0 {
        return Err(CodecError::Dimension { width, height });
    }
    Ok(())
}

fn quantize_coord(coord: f64, dim: f64) -> u8 {
    let q = (coord * 100.0 / dim + 0.5).floor();
    q.clamp(0.0, f64::from(GRID_MAX)) as u8
}

#[inline]
fn dequantize_coord(q: u8, dim: f64) -> f64 {
    f64::from(q) * dim / 100.0
}

/// Maps a pixel box onto the 0..=100 grid with round-half-up.
pub fn quantize(b: &PixelBox, image_width: i64, image_height: i64) -> Result<NormBox, CodecError> {
    check_dims(image_width, image_height)?;
    b.validate()?;
    let (w, h) = (image_width as f64, image_height as f64);
    if b.x_right > w || b.y_bottom > h {
        return Err(CodecError::Bounds {
            bbox: b.to_array(),
            width: image_width,
            height: image_height,
        });
    }
    // Monotone rounding of ordered inputs keeps corner order.
    Ok(NormBox {
        qx_left: quantize_coord(b.x_left, w),
        qy_top: quantize_coord(b.y_top, h),
        qx_right: quantize_coord(b.x_right, w),
        qy_bottom: quantize_coord(b.y_bottom, h),
    })
}

/// Maps a grid box back to pixel coordinates of the original image.
pub fn dequantize(nb: &NormBox, image_width: i64, image_height: i64) -> Result<PixelBox, CodecError> {
    check_dims(image_width, image_height)?;
    let (w, h) = (image_width as f64, image_height as f64);
    Ok(PixelBox {
        x_left: dequantize_coord(nb.qx_left, w),
        y_top: dequantize_coord(nb.qy_top, h),
        x_right: dequantize_coord(nb.qx_right, w),
        y_bottom: dequantize_coord(nb.qy_bottom, h),
    })
}

/// Renders the canonical token string, e.g. `{<50><25><75><50>}`.
pub fn encode(nb: &NormBox) -> String {
    nb.to_string()
}

/// Scans `text` for the first `{<INT><INT><INT><INT>}` pattern.
pub fn parse(text: &str) -> ParseOutcome {
    parse_bytes(text.as_bytes())
}

/// Byte-level variant of [`parse`]; accepts arbitrary, possibly non-UTF-8 input.
pub fn parse_bytes(input: &[u8]) -> ParseOutcome {
    let mut start = 0;
    while let Some(off) = input[start..].iter().position(|&c| c == b'{') {
        let at = start + off;
        if let Some((values, end)) = match_box_at(input, at) {
            return ParseOutcome {
                result: NormBox::new(values[0], values[1], values[2], values[3]),
                matched_span: Some((at, end)),
            };
        }
        start = at + 1;
    }
    ParseOutcome {
        result: Err(FailureKind::NoMatch),
        matched_span: None,
    }
}

/// Tries to match the grammar starting at `input[at] == b'{'`.
/// Returns the four integers and the exclusive end offset.
fn match_box_at(input: &[u8], at: usize) -> Option<([u32; 4], usize)> {
    let mut pos = at + 1;
    let mut values = [0u32; 4];
    for slot in &mut values {
        if input.get(pos) != Some(&b'<') {
            return None;
        }
        pos += 1;
        let digits = input[pos..]
            .iter()
            .take(4)
            .take_while(|c| c.is_ascii_digit())
            .count();
        if digits == 0 || digits > 3 {
            return None;
        }
        *slot = input[pos..pos + digits]
            .iter()
            .fold(0u32, |acc, &d| acc * 10 + u32::from(d - b'0'));
        pos += digits;
        if input.get(pos) != Some(&b'>') {
            return None;
        }
        pos += 1;
    }
    if input.get(pos) != Some(&b'}') {
        return None;
    }
    Some((values, pos + 1))
}
