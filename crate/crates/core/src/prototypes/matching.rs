//! Assigning boxes to prototypes and the two prototype losses.

use super::catalog::{ClassPrototypes, PrototypeSet};
use crate::error::{Error, Result};
use crate::geometry::Box7;
use crate::nn::softmax_cross_entropy;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Position of the matched box in the caller's list.
    pub detection: usize,
    pub class_id: usize,
    /// 1-based prototype index.
    pub prototype: usize,
    /// Standardized deviations of (l, h, w).
    pub z_scores: [f64; 3],
}

impl MatchResult {
    pub fn mean_z(&self) -> f64 {
        self.z_scores.iter().sum::<f64>() / 3.0
    }
}

/// Prototype index for a mean z-score; values beyond ±2.5 clamp to the
/// extreme prototypes.
pub fn prototype_for_z(z: f64) -> usize {
    if z < -1.5 {
        5
    } else if z < -0.5 {
        4
    } else if z < 0.5 {
        3
    } else if z < 1.5 {
        2
    } else {
        1
    }
}

pub fn z_scores(b: &Box7, class: &ClassPrototypes) -> [f64; 3] {
    let dims = [b.l, b.h, b.w];
    let mut z = [0.0; 3];
    for k in 0..3 {
        if class.std[k] > 0.0 {
            z[k] = (dims[k] - class.mean[k]) / class.std[k];
        }
    }
    z
}

/// Matches one box to the closest prototype of its class by binning the
/// mean z-score of its three dimensions.
pub fn match_prototype(
    detection: usize,
    class_id: usize,
    b: &Box7,
    set: &PrototypeSet,
) -> Result<MatchResult> {
    let class = set.class(class_id)?;
    let z = z_scores(b, class);
    let mean = z.iter().sum::<f64>() / 3.0;
    Ok(MatchResult {
        detection,
        class_id,
        prototype: prototype_for_z(mean),
        z_scores: z,
    })
}

pub fn match_all(boxes: &[(usize, Box7)], set: &PrototypeSet) -> Result<Vec<MatchResult>> {
    boxes
        .iter()
        .enumerate()
        .map(|(i, (c, b))| match_prototype(i, *c, b, set))
        .collect()
}

/// `Σ_j Σ_i φ_i |f_a − f_mp|` over examples `j` and features `i`.
pub fn matching_loss(actual: &[Vec<f64>], matched: &[Vec<f64>], phi: &[f64]) -> Result<f64> {
    if actual.len() != matched.len() {
        return Err(Error::shape(format!("{} examples", actual.len()), matched.len()));
    }
    if phi.iter().any(|&p| p < 0.0) {
        return Err(Error::Parameter("matching coefficients must be >= 0".into()));
    }
    let mut total = 0.0;
    for (a, m) in actual.iter().zip(matched) {
        if a.len() != phi.len() || m.len() != phi.len() {
            return Err(Error::shape(
                format!("{} features", phi.len()),
                format!("{} / {}", a.len(), m.len()),
            ));
        }
        for i in 0..phi.len() {
            total += phi[i] * (a[i] - m[i]).abs();
        }
    }
    Ok(total)
}

/// Matching loss of boxes against their matched prototypes' center dimensions.
pub fn matching_loss_for(
    boxes: &[(usize, Box7)],
    matches: &[MatchResult],
    set: &PrototypeSet,
) -> Result<f64> {
    let mut actual = Vec::with_capacity(matches.len());
    let mut matched = Vec::with_capacity(matches.len());
    for m in matches {
        let (_, b) = boxes
            .get(m.detection)
            .ok_or_else(|| Error::Lookup(format!("match refers to missing box {}", m.detection)))?;
        let proto = set
            .class(m.class_id)?
            .get(m.prototype)
            .ok_or_else(|| Error::Lookup(format!("no prototype {}", m.prototype)))?;
        actual.push(vec![b.l, b.h, b.w]);
        matched.push(proto.features());
    }
    matching_loss(&actual, &matched, &set.coefficients)
}

/// Mean softmax cross-entropy of prototype logits against target indices
/// (0-based over the `T` prototypes).
pub fn prototype_classifier_loss(logits: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::shape(format!("{} targets", logits.len()), targets.len()));
    }
    if logits.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (z, &t) in logits.iter().zip(targets) {
        total += softmax_cross_entropy(z, t)?.0;
    }
    Ok(total / logits.len() as f64)
}

/// Fits nonnegative coefficients `φ` so that `Σ_i φ_i d_ji ≈ y_j`, where
/// `d_ji` are per-feature absolute differences of annotated example `j`
/// and `y_j` its annotated mismatch cost (Lawson–Hanson active set).
pub fn fit_coefficients(differences: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    if differences.len() != targets.len() || differences.is_empty() {
        return Err(Error::shape(
            format!("{} targets (non-empty)", differences.len()),
            targets.len(),
        ));
    }
    let n = differences[0].len();
    if differences.iter().any(|r| r.len() != n) {
        return Err(Error::shape(format!("{n} features per row"), "ragged rows"));
    }
    nnls(differences, targets)
}

fn residual_gradient(a: &[Vec<f64>], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for (row, &bj) in a.iter().zip(b) {
        let r = bj - row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        for i in 0..n {
            w[i] += row[i] * r;
        }
    }
    w
}

/// Least squares restricted to the columns in `passive` via normal equations.
fn restricted_lstsq(a: &[Vec<f64>], b: &[f64], passive: &[usize]) -> Result<Vec<f64>> {
    let p = passive.len();
    let mut m = vec![vec![0.0; p + 1]; p];
    for (row, &bj) in a.iter().zip(b) {
        for (r, &i) in passive.iter().enumerate() {
            for (c, &k) in passive.iter().enumerate() {
                m[r][c] += row[i] * row[k];
            }
            m[r][p] += row[i] * bj;
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap_or(col);
        if m[pivot][col].abs() < 1e-14 {
            return Err(Error::Parameter("singular system while fitting coefficients".into()));
        }
        m.swap(col, pivot);
        for r in 0..p {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=p {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Ok((0..p).map(|r| m[r][p] / m[r][r]).collect())
}

fn nnls(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a[0].len();
    let tol = 1e-12;
    let mut x = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    for _ in 0..(3 * n + 3) {
        let w = residual_gradient(a, b, &x);
        let candidate = (0..n)
            .filter(|i| !passive.contains(i))
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate.filter(|&j| w[j] > tol) else {
            break;
        };
        passive.push(j);
        loop {
            let s_p = restricted_lstsq(a, b, &passive)?;
            if s_p.iter().all(|&v| v > tol) {
                for (k, &i) in passive.iter().enumerate() {
                    x[i] = s_p[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in passive.iter().enumerate() {
                if s_p[k] <= tol {
                    alpha = alpha.min(x[i] / (x[i] - s_p[k]));
                }
            }
            for (k, &i) in passive.iter().enumerate() {
                x[i] += alpha * (s_p[k] - x[i]);
            }
            passive.retain(|&i| x[i] > tol);
            for i in 0..n {
                if !passive.contains(&i) {
                    x[i] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    Ok(x)
}
