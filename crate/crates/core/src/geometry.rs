//! Axis-aligned box arithmetic in pixel space.
//!
//! Boxes use half-open continuous intervals: a box covers
//! `[x_left, x_right) × [y_top, y_bottom)` and its area is the plain product
//! of side lengths. Degenerate boxes have zero area.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box coordinate is not finite or is negative: {0:?}")]
    InvalidCoordinate([f64; 4]),
    #[error("box corners out of order: {0:?}")]
    CornerOrder([f64; 4]),
}

/// A box in original-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_left: f64,
    pub y_top: f64,
    pub x_right: f64,
    pub y_bottom: f64,
}

impl PixelBox {
    /// Builds a box, checking that coordinates are finite, non-negative and ordered.
    pub fn new(x_left: f64, y_top: f64, x_right: f64, y_bottom: f64) -> Result<Self, GeometryError> {
        let b = Self {
            x_left,
            y_top,
            x_right,
            y_bottom,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self, GeometryError> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let c = self.to_array();
        if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GeometryError::InvalidCoordinate(c));
        }
        if self.x_left > self.x_right || self.y_top > self.y_bottom {
            return Err(GeometryError::CornerOrder(c));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_left, self.y_top, self.x_right, self.y_bottom]
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x_right - self.x_left
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y_bottom - self.y_top
    }

    /// Returns the box shifted by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_left: self.x_left + dx,
            y_top: self.y_top + dy,
            x_right: self.x_right + dx,
            y_bottom: self.y_bottom + dy,
        }
    }
}

/// Area of a box. Degenerate boxes return 0.
#[inline]
pub fn area(b: &PixelBox) -> f64 {
    (b.width().max(0.0)) * (b.height().max(0.0))
}

/// Area of the overlap between two boxes.
pub fn intersection_area(a: &PixelBox, b: &PixelBox) -> f64 {
    let w = a.x_right.min(b.x_right) - a.x_left.max(b.x_left);
    let h = a.y_bottom.min(b.y_bottom) - a.y_top.max(b.y_top);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union. Returns 0 when the union is empty.
pub fn iou(a: &PixelBox, b: &PixelBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Dice coefficient `2|A∩B| / (|A|+|B|)`. Returns 0 when both boxes are empty.
pub fn dice(a: &PixelBox, b: &PixelBox) -> f64 {
    let total = area(a) + area(b);
    if total <= 0.0 {
        return 0.0;
    }
    (2.0 * intersection_area(a, b) / total).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pb(x0: f64, y0: f64, x1: f64, y1: f64) -> PixelBox {
        PixelBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&pb(0.0, 0.0, 10.0, 10.0)), 100.0);
        assert_eq!(area(&pb(5.0, 5.0, 5.0, 9.0)), 0.0);
        assert_eq!(area(&pb(2.5, 0.0, 7.5, 4.0)), 20.0);
    }

    #[test]
    fn iou_examples() {
        let a = pb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &pb(20.0, 20.0, 30.0, 30.0)), 0.0);
        let v = iou(&a, &pb(5.0, 5.0, 15.0, 15.0));
        assert!((v - 25.0 / 175.0).abs() < 1e-15);
    }

    #[test]
    fn dice_examples() {
        let a = pb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(dice(&a, &a), 1.0);
        assert_eq!(dice(&a, &pb(5.0, 5.0, 15.0, 15.0)), 0.25);
        assert_eq!(dice(&a, &pb(20.0, 20.0, 30.0, 30.0)), 0.0);
    }

    #[test]
    fn degenerate_pairs_score_zero() {
        let p = pb(3.0, 3.0, 3.0, 3.0);
        assert_eq!(iou(&p, &p), 0.0);
        assert_eq!(dice(&p, &p), 0.0);
        // touching edges share no area under half-open semantics
        assert_eq!(iou(&pb(0.0, 0.0, 5.0, 5.0), &pb(5.0, 0.0, 10.0, 5.0)), 0.0);
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(matches!(
            PixelBox::new(5.0, 0.0, 4.0, 1.0),
            Err(GeometryError::CornerOrder(_))
        ));
        assert!(matches!(
            PixelBox::new(-1.0, 0.0, 4.0, 1.0),
            Err(GeometryError::InvalidCoordinate(_))
        ));
        assert!(PixelBox::new(0.0, f64::NAN, 4.0, 1.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = PixelBox> {
        (0.0..500.0f64, 0.0..500.0f64, 1.0..300.0f64, 1.0..300.0f64)
            .prop_map(|(x, y, w, h)| pb(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
            prop_assert_eq!(dice(&a, &b), dice(&b, &a));
            prop_assert!((0.0..=1.0).contains(&iou(&a, &b)));
            prop_assert!((0.0..=1.0).contains(&dice(&a, &b)));
        }

        #[test]
        fn dice_iou_identity(a in arb_box(), b in arb_box()) {
            let union = area(&a) + area(&b) - intersection_area(&a, &b);
            prop_assume!(union > 0.0);
            let j = iou(&a, &b);
            prop_assert!((dice(&a, &b) - 2.0 * j / (1.0 + j)).abs() <= 1e-12);
        }

        #[test]
        fn translation_invariant(a in arb_box(), b in arb_box(), dx in 0.0..100.0f64, dy in 0.0..100.0f64) {
            let (ta, tb) = (a.translate(dx, dy), b.translate(dx, dy));
            prop_assert!((iou(&a, &b) - iou(&ta, &tb)).abs() <= 1e-12);
            prop_assert!((dice(&a, &b) - dice(&ta, &tb)).abs() <= 1e-12);
        }
    }
}
