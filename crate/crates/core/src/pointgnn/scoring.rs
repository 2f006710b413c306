//! Occlusion-factor scoring and merging of overlapping predictions.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, normalize_angle, Box7};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box7,
    /// 0-based building type.
    pub class_id: usize,
    pub score: f64,
    pub occlusion: f64,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) || !(0.0..=1.0).contains(&self.occlusion) {
            return Err(Error::Parameter(format!(
                "score {} and occlusion {} must lie in [0, 1]",
                self.score, self.occlusion
            )));
        }
        Ok(())
    }
}

/// Fraction of the box volume spanned by `points` along the box's own
/// length, width and height axes.
pub fn occlusion_factor(b: &Box7, points: &[[f64; 3]]) -> Result<f64> {
    let dims = [b.l, b.w, b.h];
    if dims.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::Config(format!("degenerate box dimensions {dims:?}")));
    }
    if points.is_empty() {
        return Ok(0.0);
    }
    let mut product = 1.0;
    for (axis, dim) in b.axes().iter().zip(dims) {
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let t = axis[0] * p[0] + axis[1] * p[1] + axis[2] * p[2];
            (lo.min(t), hi.max(t))
        });
        product *= (hi - lo) / dim;
    }
    Ok(product.clamp(0.0, 1.0))
}

/// Lower weighted median: the smallest value whose cumulative weight
/// reaches half the total. Zero total weight falls back to equal weights.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    let total: f64 = weights.iter().sum();
    let uniform = !(total > 0.0);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total = if uniform { values.len() as f64 } else { total };
    let mut acc = 0.0;
    for &i in &order {
        acc += if uniform { 1.0 } else { weights[i] };
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    values[*order.last().expect("non-empty cluster")]
}

/// `theta` shifted by a multiple of π to lie within π/2 of `reference`.
fn align_yaw(theta: f64, reference: f64) -> f64 {
    let mut d = normalize_angle(theta - reference);
    if d > PI / 2.0 {
        d -= PI;
    } else if d <= -PI / 2.0 {
        d += PI;
    }
    reference + d
}

fn merge_cluster(members: &[&Detection]) -> Detection {
    let seed = members[0];
    let weights: Vec<f64> = members.iter().map(|d| d.score * d.occlusion).collect();
    let mut params = [0.0; 7];
    for (k, slot) in params.iter_mut().enumerate() {
        let values: Vec<f64> = members
            .iter()
            .map(|d| {
                let a = d.bbox.to_array();
                if k == 6 {
                    align_yaw(a[6], seed.bbox.theta)
                } else {
                    a[k]
                }
            })
            .collect();
        *slot = weighted_median(&values, &weights);
    }
    let [x, y, z, l, h, w, theta] = params;
    Detection {
        bbox: Box7::new(x, y, z, l, h, w, theta),
        class_id: seed.class_id,
        score: members.iter().map(|d| d.score).fold(0.0, f64::max),
        occlusion: members.iter().map(|d| d.occlusion).fold(0.0, f64::max),
    }
}

/// Greedy clustering by descending score (ties: lower input index first).
/// Every seed absorbs the remaining same-class boxes whose BEV IoU with it
/// reaches `iou_threshold`; each cluster becomes one box whose parameters are
/// score × occlusion weighted medians. Merged boxes that still overlap a
/// higher-scoring merged box at the threshold are dropped, so the output is
/// pairwise below the threshold within each class.
pub fn merge_boxes(detections: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Parameter(format!(
            "IoU threshold must lie in (0, 1], got {iou_threshold}"
        )));
    }
    for d in detections {
        d.validate()?;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .total_cmp(&detections[a].score)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; detections.len()];
    let mut merged = Vec::new();
    for (pos, &s) in order.iter().enumerate() {
        if taken[s] {
            continue;
        }
        taken[s] = true;
        let seed = &detections[s];
        let mut members = vec![seed];
        for &o in &order[pos + 1..] {
            let other = &detections[o];
            if !taken[o] && other.class_id == seed.class_id && bev_iou(&seed.bbox, &other.bbox) >= iou_threshold {
                taken[o] = true;
                members.push(other);
            }
        }
        merged.push(merge_cluster(&members));
    }
    let mut kept: Vec<Detection> = Vec::with_capacity(merged.len());
    for m in merged {
        if kept
            .iter()
            .all(|k| k.class_id != m.class_id || bev_iou(&k.bbox, &m.bbox) < iou_threshold)
        {
            kept.push(m);
        }
    }
    Ok(kept)
}
