//! Box regression targets relative to an anchor vertex.
//!
//! ```text
//! δx = (x − x_v)/l_m   δy = (y − y_v)/h_m   δz = (z − z_v)/w_m
//! δl = ln(l/l_m)       δh = ln(h/h_m)       δw = ln(w/w_m)
//! δθ = θ/θ_m
//! ```
//!
//! with `(l_m, h_m, w_m)` the per-class median dimensions.

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Box7};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxEncoding(pub [f64; 7]);

/// Per-class anchor dimensions and the yaw scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCoder {
    /// Median (l, h, w) per building type.
    pub medians: Vec<[f64; 3]>,
    pub yaw_scale: f64,
}

impl BoxCoder {
    pub fn new(medians: Vec<[f64; 3]>, yaw_scale: f64) -> Result<Self> {
        let coder = Self { medians, yaw_scale };
        coder.validate()?;
        Ok(coder)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.yaw_scale > 0.0) {
            return Err(Error::Config(format!("yaw scale must be > 0, got {}", self.yaw_scale)));
        }
        for (c, m) in self.medians.iter().enumerate() {
            if m.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("class {c}: median dimensions {m:?} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn median(&self, class_id: usize) -> Result<[f64; 3]> {
        let m = self
            .medians
            .get(class_id)
            .copied()
            .ok_or_else(|| Error::Config(format!("no median dimensions for class {class_id}")))?;
        if m.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config(format!("class {class_id}: median dimensions {m:?} must be > 0")));
        }
        Ok(m)
    }

    pub fn encode(&self, b: &Box7, anchor: [f64; 3], class_id: usize) -> Result<BoxEncoding> {
        let [lm, hm, wm] = self.median(class_id)?;
        Ok(BoxEncoding([
            (b.x - anchor[0]) / lm,
            (b.y - anchor[1]) / hm,
            (b.z - anchor[2]) / wm,
            (b.l / lm).ln(),
            (b.h / hm).ln(),
            (b.w / wm).ln(),
            b.theta / self.yaw_scale,
        ]))
    }

    pub fn decode(&self, enc: &BoxEncoding, anchor: [f64; 3], class_id: usize) -> Result<Box7> {
        let [lm, hm, wm] = self.median(class_id)?;
        let d = enc.0;
        Ok(Box7 {
            x: anchor[0] + d[0] * lm,
            y: anchor[1] + d[1] * hm,
            z: anchor[2] + d[2] * wm,
            l: lm * d[3].exp(),
            h: hm * d[4].exp(),
            w: wm * d[5].exp(),
            theta: normalize_angle(d[6] * self.yaw_scale),
        })
    }
}

/// Per-class medians of labelled box dimensions, ordered (l, h, w).
/// Classes without labels get `fallback`.
pub fn median_dimensions(
    labels: &[(usize, Box7)],
    classes: usize,
    fallback: [f64; 3],
) -> Vec<[f64; 3]> {
    (0..classes)
        .map(|c| {
            let mut out = fallback;
            for (k, slot) in out.iter_mut().enumerate() {
                let mut v: Vec<f64> = labels
                    .iter()
                    .filter(|(cls, _)| *cls == c)
                    .map(|(_, b)| [b.l, b.h, b.w][k])
                    .collect();
                if v.is_empty() {
                    continue;
                }
                v.sort_by(f64::total_cmp);
                let n = v.len();
                *slot = if n % 2 == 1 {
                    v[n / 2]
                } else {
                    0.5 * (v[n / 2 - 1] + v[n / 2])
                };
            }
            out
        })
        .collect()
}
