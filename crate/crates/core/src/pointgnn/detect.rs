//! Inference: per-vertex boxes, scoring, merging, and evaluation against labels.

use std::path::Path;

use ndarray::Array2;

use super::encoding::BoxEncoding;
use super::model::{Detector, PreparedScene};
use super::scoring::{merge_boxes, occlusion_factor, Detection};
use crate::cloud::{GroundTruthBox, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{bev_iou, Box7};
use crate::nn::softmax;
use crate::prototypes::PROTOTYPES_PER_CLASS;

/// A per-vertex prediction before merging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub vertex: usize,
    pub detection: Detection,
}

impl Detector {
    pub fn prepare(&self, cloud: &PointCloud) -> Result<PreparedScene> {
        if cloud.feature_width() != self.config.point_features {
            return Err(Error::shape(
                format!("{} point features", self.config.point_features),
                cloud.feature_width(),
            ));
        }
        PreparedScene::new(cloud.clone(), self.config.voxel_size, self.config.radius)
    }

    /// Decoded boxes of every vertex whose best class is a building with
    /// probability at least the score threshold, scored by occlusion.
    pub fn candidates(&self, scene: &PreparedScene) -> Result<(Vec<Candidate>, Array2<f64>)> {
        let out = self.forward(scene)?;
        let raw: Vec<[f64; 3]> = scene.raw.positions().collect();
        let mut found = Vec::new();
        for v in 0..scene.vertex_count() {
            let probs = softmax(&out.logits.row(v).to_vec());
            let (best, &p) = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("at least two classes");
            if best == 0 || p < self.config.score_threshold {
                continue;
            }
            let class_id = best - 1;
            let mut enc = [0.0; 7];
            for (k, e) in enc.iter_mut().enumerate() {
                *e = out.encodings[[v, k]];
            }
            let bbox = self
                .coder
                .decode(&BoxEncoding(enc), scene.graph.positions()[v], class_id)?;
            if !bbox.to_array().iter().all(|x| x.is_finite()) {
                continue;
            }
            let inside: Vec<[f64; 3]> = raw.iter().copied().filter(|&q| bbox.contains(q, 0.0)).collect();
            found.push(Candidate {
                vertex: v,
                detection: Detection {
                    bbox,
                    class_id,
                    score: p.clamp(0.0, 1.0),
                    occlusion: occlusion_factor(&bbox, &inside)?,
                },
            });
        }
        Ok((found, out.states))
    }

    pub fn detect_prepared(&self, scene: &PreparedScene) -> Result<Vec<Detection>> {
        let (candidates, _) = self.candidates(scene)?;
        let dets: Vec<Detection> = candidates.iter().map(|c| c.detection).collect();
        merge_boxes(&dets, self.config.nms_iou)
    }

    pub fn detect(&self, cloud: &PointCloud) -> Result<Vec<Detection>> {
        if cloud.is_empty() {
            return Ok(Vec::new());
        }
        self.detect_prepared(&self.prepare(cloud)?)
    }

    /// Detections plus a 1-based prototype per detection from the prototype
    /// classifier. Its state input is the max-pooled final state of the
    /// candidate vertices of the same class inside the merged box (all
    /// vertices inside it when there are none).
    pub fn detect_with_prototypes(&self, cloud: &PointCloud) -> Result<Vec<(Detection, usize)>> {
        if cloud.is_empty() {
            return Ok(Vec::new());
        }
        let scene = self.prepare(cloud)?;
        let (candidates, states) = self.candidates(&scene)?;
        let dets: Vec<Detection> = candidates.iter().map(|c| c.detection).collect();
        let merged = merge_boxes(&dets, self.config.nms_iou)?;
        let positions = scene.graph.positions();
        let mut out = Vec::with_capacity(merged.len());
        for d in merged {
            let mut members: Vec<usize> = candidates
                .iter()
                .filter(|c| c.detection.class_id == d.class_id && d.bbox.contains(positions[c.vertex], 0.0))
                .map(|c| c.vertex)
                .collect();
            if members.is_empty() {
                members = (0..positions.len())
                    .filter(|&v| d.bbox.contains(positions[v], 0.0))
                    .collect();
            }
            let mut pooled = vec![0.0; states.ncols()];
            if !members.is_empty() {
                pooled.fill(f64::NEG_INFINITY);
                for &v in &members {
                    for (p, &s) in pooled.iter_mut().zip(states.row(v)) {
                        *p = p.max(s);
                    }
                }
            }
            let enc = self.coder.encode(&d.bbox, d.bbox.center(), d.class_id)?;
            let input = self.prototype_input(&enc.0, d.class_id, &pooled)?;
            let logits = self.proto_head.forward(&input)?.0;
            let best = logits
                .iter()
                .enumerate()
                .take(PROTOTYPES_PER_CLASS)
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map_or(0, |(i, _)| i);
            out.push((d, best + 1));
        }
        Ok(out)
    }
}

/// Detection quality against labels on one or more scenes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Evaluation {
    pub ground_truth: usize,
    pub matched: usize,
    pub false_positives: usize,
    pub scenes: usize,
}

impl Evaluation {
    pub fn recall(&self) -> f64 {
        if self.ground_truth == 0 {
            1.0
        } else {
            self.matched as f64 / self.ground_truth as f64
        }
    }

    pub fn false_positives_per_scene(&self) -> f64 {
        if self.scenes == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.scenes as f64
        }
    }

    pub fn add(&mut self, other: &Evaluation) {
        self.ground_truth += other.ground_truth;
        self.matched += other.matched;
        self.false_positives += other.false_positives;
        self.scenes += other.scenes;
    }
}

/// Greedy matching by descending score: each detection takes the unmatched
/// same-class label with the highest BEV IoU, if that IoU reaches `iou`.
pub fn evaluate_detections(detections: &[Detection], labels: &[GroundTruthBox], iou: f64) -> Evaluation {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let mut used = vec![false; labels.len()];
    let mut eval = Evaluation {
        ground_truth: labels.len(),
        scenes: 1,
        ..Evaluation::default()
    };
    for i in order {
        let d = &detections[i];
        let best = labels
            .iter()
            .enumerate()
            .filter(|(g, l)| !used[*g] && l.class_id == d.class_id)
            .map(|(g, l)| (g, bev_iou(&d.bbox, &l.bbox)))
            .filter(|&(_, v)| v >= iou)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((g, _)) => {
                used[g] = true;
                eval.matched += 1;
            }
            None => eval.false_positives += 1,
        }
    }
    eval
}

pub const DETECTIONS_HEADER: &str = "classId,score,occlusion,x,y,z,l,h,w,theta";

pub fn format_detections(detections: &[Detection]) -> String {
    let mut out = format!("{DETECTIONS_HEADER}\n");
    for d in detections {
        let b = d.bbox;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            d.class_id, d.score, d.occlusion, b.x, b.y, b.z, b.l, b.h, b.w, b.theta
        ));
    }
    out
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let row = i + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 10 {
            return Err(Error::Parse {
                line: row,
                message: format!("expected 10 columns, found {}", cells.len()),
            });
        }
        let class_id = cells[0].parse::<usize>().map_err(|_| Error::Parse {
            line: row,
            message: format!("bad class id `{}`", cells[0]),
        })?;
        let mut v = [0.0; 9];
        for (k, c) in cells[1..].iter().enumerate() {
            v[k] = c.parse().map_err(|_| Error::Parse {
                line: row,
                message: format!("non-numeric cell `{c}`"),
            })?;
        }
        if v[5] <= 0.0 || v[6] <= 0.0 || v[7] <= 0.0 {
            return Err(Error::Validation {
                row,
                message: "box dimensions must be > 0".into(),
            });
        }
        let d = Detection {
            bbox: Box7::new(v[2], v[3], v[4], v[5], v[6], v[7], v[8]),
            class_id,
            score: v[0],
            occlusion: v[1],
        };
        d.validate().map_err(|e| Error::Validation {
            row,
            message: e.to_string(),
        })?;
        out.push(d);
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(x: f64) -> GroundTruthBox {
        GroundTruthBox {
            class_id: 0,
            bbox: Box7::new(x, 0.0, 1.0, 4.0, 2.0, 2.0, 0.0),
        }
    }

    fn det(x: f64, score: f64) -> Detection {
        Detection {
            bbox: gt(x).bbox,
            class_id: 0,
            score,
            occlusion: 0.5,
        }
    }

    #[test]
    fn evaluation_counts_duplicates_as_false_positives() {
        let e = evaluate_detections(&[det(0.0, 0.9), det(0.0, 0.8), det(30.0, 0.7)], &[gt(0.0), gt(10.0)], 0.5);
        assert_eq!((e.matched, e.false_positives, e.ground_truth), (1, 2, 2));
        assert_eq!(e.recall(), 0.5);
    }

    #[test]
    fn detections_csv_round_trip() {
        let d = vec![det(1.25, 0.75), det(-3.0, 1.0)];
        let text = format_detections(&d);
        assert!(text.starts_with(DETECTIONS_HEADER));
        assert_eq!(parse_detections(&text).unwrap(), d);
        assert!(matches!(parse_detections("0,2,0,0,0,0,1,1,1,0"), Err(Error::Validation { row: 1, .. })));
        assert!(matches!(parse_detections("0,x,0,0,0,0,1,1,1,0"), Err(Error::Parse { line: 1, .. })));
    }
}
