use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixels, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidBox(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "non-positive size {}x{}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// `(cx, cy, w / h, h)`
    pub fn to_xyah(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.w / self.h, self.h]
    }

    /// Inverse of [`BBox::to_xyah`]; `None` when the size is not positive.
    pub fn from_xyah(cx: f64, cy: f64, aspect: f64, h: f64) -> Option<Self> {
        let w = aspect * h;
        let b = Self {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        };
        b.validate().ok().map(|_| b)
    }
}

/// Intersection over union; zero for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
