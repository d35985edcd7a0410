use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_tl: f64,
    pub y_tl: f64,
    pub x_br: f64,
    pub y_br: f64,
}

impl BoundingBox {
    pub fn new(x_tl: f64, y_tl: f64, x_br: f64, y_br: f64) -> Result<Self> {
        let b = BoundingBox {
            x_tl,
            y_tl,
            x_br,
            y_br,
        };
        if ![x_tl, y_tl, x_br, y_br].iter().all(|v| v.is_finite()) || x_tl > x_br || y_tl > y_br {
            return Err(Error::Domain(format!("malformed box {b:?}")));
        }
        Ok(b)
    }

    /// From the `[x, y, w, h]` annotation convention.
    pub fn from_xywh(xywh: [f64; 4]) -> Result<Self> {
        let [x, y, w, h] = xywh;
        if w < 0.0 || h < 0.0 {
            return Err(Error::Domain(format!("negative box extent {xywh:?}")));
        }
        Self::new(x, y, x + w, y + h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_tl, self.y_tl, self.width(), self.height()]
    }

    pub fn width(&self) -> f64 {
        self.x_br - self.x_tl
    }

    pub fn height(&self) -> f64 {
        self.y_br - self.y_tl
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.x_tl + self.x_br),
            0.5 * (self.y_tl + self.y_br),
        )
    }

    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x_tl >= 0.0 && self.y_tl >= 0.0 && self.x_br <= width && self.y_br <= height
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x_br.min(other.x_br) - self.x_tl.max(other.x_tl);
        let h = self.y_br.min(other.y_br) - self.y_tl.max(other.y_tl);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox {
            x_tl: self.x_tl + dx,
            y_tl: self.y_tl + dy,
            x_br: self.x_br + dx,
            y_br: self.y_br + dy,
        }
    }

    pub fn scale(&self, s: f64) -> BoundingBox {
        BoundingBox {
            x_tl: self.x_tl * s,
            y_tl: self.y_tl * s,
            x_br: self.x_br * s,
            y_br: self.y_br * s,
        }
    }
}

/// Intersection over union; a zero-area union gives 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert!((iou(&a, &bb(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-12);
        let p = bb(1.0, 1.0, 1.0, 1.0);
        assert_eq!(iou(&p, &p), 0.0);
    }

    #[test]
    fn rejects_inverted_boxes() {
        assert!(BoundingBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::from_xywh([0.0, 0.0, -1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            x0 in 0.0f64..50.0, y0 in 0.0f64..50.0, w0 in 0.1f64..40.0, h0 in 0.1f64..40.0,
            x1 in 0.0f64..50.0, y1 in 0.0f64..50.0, w1 in 0.1f64..40.0, h1 in 0.1f64..40.0,
        ) {
            let a = BoundingBox::from_xywh([x0, y0, w0, h0]).unwrap();
            let b = BoundingBox::from_xywh([x1, y1, w1, h1]).unwrap();
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
