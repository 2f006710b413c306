use crate::error::{Error, Result};
use crate::geometry::Box7;

/// Per-class dimension statistics. Arrays are ordered (l, h, w).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class_id: usize,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub sample_count: usize,
}

/// Population mean and standard deviation of box dimensions.
///
/// Sums run in input order so results are reproducible bit-for-bit.
pub fn compute_class_stats(class_id: usize, boxes: &[Box7]) -> Result<ClassStats> {
    if boxes.is_empty() {
        return Err(Error::Statistics(format!("class {class_id} has no boxes")));
    }
    let n = boxes.len() as f64;
    let dims = |b: &Box7| [b.l, b.h, b.w];
    let mut mean = [0.0; 3];
    for b in boxes {
        for (m, d) in mean.iter_mut().zip(dims(b)) {
            *m += d;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 3];
    for b in boxes {
        for k in 0..3 {
            let d = dims(b)[k] - mean[k];
            var[k] += d * d;
        }
    }
    Ok(ClassStats {
        class_id,
        mean,
        std: var.map(|v| (v / n).sqrt()),
        sample_count: boxes.len(),
    })
}

/// Groups labelled boxes by class and computes statistics for each class
/// present, in ascending class order.
pub fn stats_by_class(boxes: &[(usize, Box7)]) -> Result<Vec<ClassStats>> {
    let mut classes: Vec<usize> = boxes.iter().map(|(c, _)| *c).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| {
            let members: Vec<Box7> = boxes
                .iter()
                .filter(|(k, _)| *k == c)
                .map(|(_, b)| *b)
                .collect();
            compute_class_stats(c, &members)
        })
        .collect()
}
