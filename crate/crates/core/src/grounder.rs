//! Deterministic stand-in for a grounding model.
//!
//! Given a sample and a profile, [`respond`] produces the text a model might
//! emit: an exact box, a jittered box wrapped in prose, or one of several
//! malformed answers. Output depends only on `(sample_id, gt_box, profile)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode, quantize, NormBox, GRID_MAX};
use crate::dataset::GroundingSample;
use crate::eval::Prediction;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("unknown profile {0:?} (expected perfect, jitter:N or malformed:MODE)")]
    Unknown(String),
    #[error("jitter offset must be in 0..=100, got {0}")]
    JitterRange(String),
    #[error("unknown malformed mode {0:?}")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MalformedMode {
    /// Prose without any box.
    NoBox,
    /// A coordinate above 100.
    OutOfRange,
    /// Right/bottom corner written first.
    SwappedCorners,
    /// Closing brace missing.
    TruncatedBraces,
    /// Correct box inside chatty prose; still parseable.
    ProseWrapped,
}

impl MalformedMode {
    pub const ALL: [MalformedMode; 5] = [
        MalformedMode::NoBox,
        MalformedMode::OutOfRange,
        MalformedMode::SwappedCorners,
        MalformedMode::TruncatedBraces,
        MalformedMode::ProseWrapped,
    ];

    fn name(self) -> &'static str {
        match self {
            MalformedMode::NoBox => "no-box",
            MalformedMode::OutOfRange => "out-of-range",
            MalformedMode::SwappedCorners => "swapped-corners",
            MalformedMode::TruncatedBraces => "truncated-braces",
            MalformedMode::ProseWrapped => "prose-wrapped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProfileKind {
    Perfect,
    Jitter { max_offset_units: u8 },
    Malformed(MalformedMode),
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileKind::Perfect => f.write_str("perfect"),
            ProfileKind::Jitter { max_offset_units } => write!(f, "jitter:{max_offset_units}"),
            ProfileKind::Malformed(m) => write!(f, "malformed:{}", m.name()),
        }
    }
}

impl FromStr for ProfileKind {
    type Err = ProfileError;

    /// Accepts `perfect`, `jitter:N` and `malformed:MODE` (e.g. `malformed:no-box`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s.as_str(), None),
        };
        match (head, arg) {
            ("perfect", None) => Ok(ProfileKind::Perfect),
            ("jitter", Some(n)) => {
                let v: u8 = n.parse().map_err(|_| ProfileError::JitterRange(n.to_string()))?;
                if v > GRID_MAX {
                    return Err(ProfileError::JitterRange(n.to_string()));
                }
                Ok(ProfileKind::Jitter { max_offset_units: v })
            }
            ("malformed", Some(m)) => {
                let norm = m.replace('_', "-");
                MalformedMode::ALL
                    .into_iter()
                    .find(|mode| mode.name() == norm)
                    .map(ProfileKind::Malformed)
                    .ok_or_else(|| ProfileError::UnknownMode(m.to_string()))
            }
            _ => Err(ProfileError::Unknown(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GrounderProfile {
    pub kind: ProfileKind,
    pub seed: u64,
}

impl GrounderProfile {
    pub fn new(kind: ProfileKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

fn ground_truth_grid(s: &GroundingSample) -> NormBox {
    quantize(&s.gt_box, i64::from(s.image_width), i64::from(s.image_height))
        .expect("manifest samples are in bounds")
}

fn jitter(nb: NormBox, max: u8, rng: &mut seed::SeededRng) -> NormBox {
    let max = i32::from(max);
    let mut shift = |q: u8| -> u32 {
        let d = rng.random_range(-max..=max);
        (i32::from(q) + d).clamp(0, i32::from(GRID_MAX)) as u32
    };
    let (x0, y0, x1, y1) = (
        shift(nb.qx_left),
        shift(nb.qy_top),
        shift(nb.qx_right),
        shift(nb.qy_bottom),
    );
    NormBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)).expect("repaired box is valid")
}

fn swapped(nb: NormBox) -> String {
    let [x0, y0, x1, y1] = nb.to_array();
    if x0 < x1 || y0 < y1 {
        return format!("{{<{x1}><{y1}><{x0}><{y0}>}}");
    }
    // a point box stays valid when swapped; force x_left > x_right
    let (hi, lo) = if x0 < GRID_MAX { (x0 + 1, x0) } else { (x0, x0 - 1) };
    format!("{{<{hi}><{y0}><{lo}><{y1}>}}")
}

const WRAPPERS: [(&str, &str); 3] = [
    ("The finding is located at ", "."),
    ("Sure! The region is ", " in this image."),
    ("Bounding box: ", ""),
];

/// Text the mock model emits for `s` under profile `p`.
pub fn respond(s: &GroundingSample, p: &GrounderProfile) -> String {
    let mut rng = seed::rng(seed::derive(p.seed, &s.sample_id));
    let gt = ground_truth_grid(s);
    let (pre, post) = WRAPPERS[rng.random_range(0..WRAPPERS.len())];
    match p.kind {
        ProfileKind::Perfect => encode(&gt),
        ProfileKind::Jitter { max_offset_units } => {
            format!("{pre}{}{post}", encode(&jitter(gt, max_offset_units, &mut rng)))
        }
        ProfileKind::Malformed(mode) => match mode {
            MalformedMode::NoBox => "I am unable to determine the location of this finding.".to_string(),
            MalformedMode::OutOfRange => {
                let bump = rng.random_range(101..=199u32);
                format!(
                    "{pre}{{<{}><{}><{}><{}>}}{post}",
                    gt.qx_left,
                    gt.qy_top,
                    u32::from(gt.qx_right) + bump,
                    gt.qy_bottom
                )
            }
            MalformedMode::SwappedCorners => format!("{pre}{}{post}", swapped(gt)),
            MalformedMode::TruncatedBraces => {
                let full = encode(&gt);
                format!("{pre}{} and beyond", &full[..full.len() - 1])
            }
            MalformedMode::ProseWrapped => format!(
                "Looking at the image, the {} appears at {} according to the visible anatomy.",
                s.phrase,
                encode(&gt)
            ),
        },
    }
}

pub fn predict(s: &GroundingSample, p: &GrounderProfile) -> Prediction {
    Prediction {
        sample_id: s.sample_id.clone(),
        raw_text: respond(s, p),
    }
}
