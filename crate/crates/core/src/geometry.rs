//! Axis-aligned rectangle arithmetic in image pixel coordinates.
//!
//! The origin is the top-left corner, `x` grows right and `y` grows down.
//! Coordinates stay floating point throughout; nothing is snapped to pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    /// Builds a box, checking `x0 <= x1`, `y0 <= y1` and finite non-negative coordinates.
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let b = BBox { x0, y0, x1, y1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let c = [self.x0, self.y0, self.x1, self.y1];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::schema("bbox", "coordinates must be finite"));
        }
        if c.iter().any(|&v| v < 0.0) {
            return Err(Error::schema("bbox", "coordinates must be >= 0"));
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(Error::schema("bbox", "expected x0 <= x1 and y0 <= y1"));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center_y(&self) -> f64 {
        0.5 * (self.y0 + self.y1)
    }

    pub fn area(&self) -> f64 {
        area(self)
    }

    /// True when `other` lies inside `self` (boundaries included).
    pub fn contains(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Pixel dimensions of the frame a set of boxes was predicted in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageDims {
    pub width: f64,
    pub height: f64,
}

impl ImageDims {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        let d = ImageDims { width, height };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::schema("width", "must be a positive finite number"));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(Error::schema("height", "must be a positive finite number"));
        }
        Ok(())
    }
}

/// Overlap rectangle of `a` and `b`. `None` when the overlap has zero area,
/// so boxes that only share an edge do not intersect.
pub fn intersect(a: &BBox, b: &BBox) -> Option<BBox> {
    let x0 = a.x0.max(b.x0);
    let y0 = a.y0.max(b.y0);
    let x1 = a.x1.min(b.x1);
    let y1 = a.y1.min(b.y1);
    if x1 > x0 && y1 > y0 {
        Some(BBox { x0, y0, x1, y1 })
    } else {
        None
    }
}

pub fn area(a: &BBox) -> f64 {
    (a.x1 - a.x0) * (a.y1 - a.y0)
}

/// Fraction of `span_box` covered by `cell_box`. The denominator is always the
/// span's own area.
pub fn intersection_over_area(span_box: &BBox, cell_box: &BBox) -> Result<f64> {
    let denom = area(span_box);
    if denom <= 0.0 {
        return Err(Error::schema("span.bbox", "OCR span box has zero area"));
    }
    Ok(intersect(span_box, cell_box).map_or(0.0, |i| (area(&i) / denom).min(1.0)))
}

/// Rescales `a` from the `from` frame into the `to` frame.
pub fn scale_bbox(a: &BBox, from: ImageDims, to: ImageDims) -> BBox {
    let sx = to.width / from.width;
    let sy = to.height / from.height;
    BBox {
        x0: a.x0 * sx,
        y0: a.y0 * sy,
        x1: a.x1 * sx,
        y1: a.y1 * sy,
    }
}

/// Envelope of a nonempty set of boxes.
pub fn merge_bboxes(boxes: &[BBox]) -> Result<BBox> {
    let (first, rest) = boxes
        .split_first()
        .ok_or_else(|| Error::degenerate("cannot merge an empty list of boxes"))?;
    Ok(rest.iter().fold(*first, |acc, b| BBox {
        x0: acc.x0.min(b.x0),
        y0: acc.y0.min(b.y0),
        x1: acc.x1.max(b.x1),
        y1: acc.y1.max(b.y1),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn dims(w: f64, h: f64) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    #[test]
    fn intersect_examples() {
        assert_eq!(
            intersect(&bb(0., 0., 10., 10.), &bb(5., 5., 15., 15.)),
            Some(bb(5., 5., 10., 10.))
        );
        assert_eq!(intersect(&bb(0., 0., 10., 10.), &bb(10., 0., 20., 10.)), None);
        assert_eq!(
            intersect(&bb(0., 0., 4., 4.), &bb(1., 1., 3., 3.)),
            Some(bb(1., 1., 3., 3.))
        );
    }

    #[test]
    fn area_examples() {
        assert_eq!(area(&bb(0., 0., 10., 10.)), 100.0);
        assert_eq!(area(&bb(3., 3., 3., 9.)), 0.0);
    }

    #[test]
    fn area_converges_to_raster_count() {
        let b = bb(1.3, 2.7, 7.9, 5.15);
        let mut prev_err = f64::INFINITY;
        for res in [4usize, 16, 64, 256] {
            let step = 1.0 / res as f64;
            let mut count = 0usize;
            for i in 0..(10 * res) {
                for j in 0..(10 * res) {
                    let (cx, cy) = ((i as f64 + 0.5) * step, (j as f64 + 0.5) * step);
                    if cx >= b.x0 && cx < b.x1 && cy >= b.y0 && cy < b.y1 {
                        count += 1;
                    }
                }
            }
            let err = (count as f64 * step * step - area(&b)).abs();
            assert!(err <= prev_err + 1e-12);
            prev_err = err;
        }
        assert!(prev_err < 0.05);
    }

    #[test]
    fn ioa_examples() {
        let ioa = intersection_over_area(&bb(2., 2., 4., 4.), &bb(0., 0., 10., 10.)).unwrap();
        assert_eq!(ioa, 1.0);
        let ioa = intersection_over_area(&bb(0., 0., 10., 10.), &bb(5., 0., 15., 10.)).unwrap();
        assert_eq!(ioa, 0.5);
        let ioa = intersection_over_area(&bb(0., 0., 1., 1.), &bb(5., 5., 6., 6.)).unwrap();
        assert_eq!(ioa, 0.0);
    }

    #[test]
    fn ioa_rejects_degenerate_span() {
        let err = intersection_over_area(&bb(1., 1., 1., 5.), &bb(0., 0., 10., 10.)).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }

    #[test]
    fn scale_examples() {
        let b = bb(10., 10., 20., 20.);
        assert_eq!(scale_bbox(&b, dims(100., 100.), dims(100., 100.)), b);
        assert_eq!(
            scale_bbox(&b, dims(100., 100.), dims(200., 100.)),
            bb(20., 10., 40., 20.)
        );
    }

    #[test]
    fn merge_examples() {
        assert_eq!(merge_bboxes(&[bb(0., 0., 5., 5.)]).unwrap(), bb(0., 0., 5., 5.));
        assert_eq!(
            merge_bboxes(&[bb(0., 0., 5., 5.), bb(4., 1., 9., 6.)]).unwrap(),
            bb(0., 0., 9., 6.)
        );
        assert!(merge_bboxes(&[]).is_err());
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(BBox::new(5., 0., 1., 1.).is_err());
        assert!(BBox::new(-1., 0., 1., 1.).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 1.).is_err());
        assert!(serde_json::from_str::<BBox>("[3, 0, 1, 1]").is_err());
        assert!(ImageDims::new(0.0, 10.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.01..50.0f64, 0.01..50.0f64).prop_map(|(x, y, w, h)| BBox {
            x0: x,
            y0: y,
            x1: x + w,
            y1: y + h,
        })
    }

    fn arb_dims() -> impl Strategy<Value = ImageDims> {
        (1.0..4000.0f64, 1.0..4000.0f64).prop_map(|(w, h)| ImageDims { width: w, height: h })
    }

    proptest! {
        #[test]
        fn intersect_is_symmetric_and_contained(a in arb_box(), b in arb_box()) {
            let ab = intersect(&a, &b);
            prop_assert_eq!(ab, intersect(&b, &a));
            if let Some(i) = ab {
                prop_assert!(a.contains(&i) && b.contains(&i));
            }
        }

        #[test]
        fn ioa_in_unit_interval(a in arb_box(), b in arb_box()) {
            let v = intersection_over_area(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if b.contains(&a) {
                prop_assert!((v - 1.0).abs() < 1e-9);
            }
            if v > 1.0 - 1e-12 {
                let i = intersect(&a, &b).unwrap();
                prop_assert!((area(&i) - area(&a)).abs() <= 1e-9 * area(&a).max(1.0));
            }
        }

        #[test]
        fn merge_contains_inputs_and_is_order_free(mut boxes in prop::collection::vec(arb_box(), 1..8)) {
            let m = merge_bboxes(&boxes).unwrap();
            for b in &boxes {
                prop_assert!(m.contains(b));
            }
            boxes.reverse();
            prop_assert_eq!(merge_bboxes(&boxes).unwrap(), m);
            boxes.rotate_left(1);
            prop_assert_eq!(merge_bboxes(&boxes).unwrap(), m);
        }

        #[test]
        fn scaling_composes(b in arb_box(), d1 in arb_dims(), d2 in arb_dims(), d3 in arb_dims()) {
            let via = scale_bbox(&scale_bbox(&b, d1, d2), d2, d3);
            let direct = scale_bbox(&b, d1, d3);
            let tol = 1e-9 * (1.0 + direct.x1.abs().max(direct.y1.abs()));
            prop_assert!((via.x0 - direct.x0).abs() <= tol);
            prop_assert!((via.y0 - direct.y0).abs() <= tol);
            prop_assert!((via.x1 - direct.x1).abs() <= tol);
            prop_assert!((via.y1 - direct.y1).abs() <= tol);
        }

        #[test]
        fn scaling_preserves_ioa(a in arb_box(), b in arb_box(), d1 in arb_dims(), d2 in arb_dims()) {
            let before = intersection_over_area(&a, &b).unwrap();
            let after = intersection_over_area(&scale_bbox(&a, d1, d2), &scale_bbox(&b, d1, d2)).unwrap();
            prop_assert!((before - after).abs() < 1e-9);
            if b.contains(&a) {
                prop_assert!(scale_bbox(&b, d1, d2).contains(&scale_bbox(&a, d1, d2)));
            }
        }
    }
}
