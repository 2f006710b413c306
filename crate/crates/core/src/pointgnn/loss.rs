//! Detector losses. Each returns the loss together with its gradient with
//! respect to the network output it consumes.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{huber, softmax_cross_entropy, Mlp};

/// Mean softmax cross-entropy over all vertices.
pub fn classification_loss(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::shape(format!("{} labels", logits.nrows()), labels.len()));
    }
    let n = labels.len();
    let mut grad = Array2::zeros(logits.raw_dim());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i).to_vec();
        let (l, g) = softmax_cross_entropy(&row, label)?;
        total += l;
        for (k, v) in g.into_iter().enumerate() {
            grad[[i, k]] = v / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

/// Huber loss summed over the seven encoding components of every vertex
/// with a target, averaged over all `N` vertices.
///
/// With `yaw_period`, the yaw residual is first wrapped into
/// `[−period/2, period/2]`, so targets one period apart cost the same.
pub fn localization_loss(
    encodings: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    active: &[bool],
    delta: f64,
    yaw_period: Option<f64>,
) -> Result<(f64, Array2<f64>)> {
    if encodings.dim() != targets.dim() || encodings.nrows() != active.len() {
        return Err(Error::shape(
            format!("{}x{} targets and {} flags", encodings.nrows(), encodings.ncols(), encodings.nrows()),
            format!("{}x{} and {}", targets.nrows(), targets.ncols(), active.len()),
        ));
    }
    let n = active.len();
    let mut grad = Array2::zeros(encodings.raw_dim());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut total = 0.0;
    for i in (0..n).filter(|&i| active[i]) {
        for k in 0..encodings.ncols() {
            let mut r = encodings[[i, k]] - targets[[i, k]];
            if let (6, Some(p)) = (k, yaw_period) {
                r -= p * (r / p).round();
            }
            let (l, g) = huber(r, delta)?;
            total += l;
            grad[[i, k]] = g / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

/// Mean absolute weight over all MLPs, biases excluded.
pub fn regularization_loss(mlps: &[&Mlp]) -> f64 {
    let (sum, count) = mlps.iter().fold((0.0, 0usize), |(s, c), m| {
        let (ms, mc) = m.weight_abs_sum();
        (s + ms, c + mc)
    });
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn regularization_weight_count(mlps: &[&Mlp]) -> usize {
    mlps.iter().map(|m| m.weight_abs_sum().1).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
}

/// `α l_cls + β l_loc + γ l_pro + κ l_reg`.
pub fn total_loss(cls: f64, loc: f64, pro: f64, reg: f64, w: LossWeights) -> Result<f64> {
    if [w.alpha, w.beta, w.gamma, w.kappa].iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Parameter(format!("loss weights must be >= 0: {w:?}")));
    }
    Ok(w.alpha * cls + w.beta * loc + w.gamma * pro + w.kappa * reg)
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub classification: f64,
    pub localization: f64,
    pub prototype: f64,
    pub regularization: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.classification,
            self.localization,
            self.prototype,
            self.regularization,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{array, Array1};

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let logits = array![[80.0, 0.0, 0.0], [0.0, 0.0, 80.0]];
        let (l, _) = classification_loss(logits.view(), &[0, 2]).unwrap();
        assert!(l < 1e-30);
    }

    #[test]
    fn uniform_predictions_four_classes() {
        let logits = Array2::zeros((5, 4));
        let (l, _) = classification_loss(logits.view(), &[0, 1, 2, 3, 0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!(classification_loss(logits.view(), &[0, 1, 2, 3, 4]).is_err());
    }

    #[test]
    fn localization_without_interior_vertices_is_zero() {
        let enc = array![[1.0; 7], [2.0; 7]];
        let t = Array2::zeros((2, 7));
        let (l, g) = localization_loss(enc.view(), t.view(), &[false, false], 1.0, None).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn localization_single_residual() {
        let mut enc = Array2::zeros((2, 7));
        enc[[0, 3]] = 0.5;
        let t = Array2::zeros((2, 7));
        let (l, _) = localization_loss(enc.view(), t.view(), &[true, false], 1.0, None).unwrap();
        assert!((l - 0.0625).abs() < 1e-15);
        let (l, _) = localization_loss(t.view(), t.view(), &[true, true], 1.0, None).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn periodic_yaw_residual_wraps() {
        let mut enc = Array2::zeros((1, 7));
        let mut t = Array2::zeros((1, 7));
        enc[[0, 6]] = 0.95;
        t[[0, 6]] = -0.95;
        let (plain, _) = localization_loss(enc.view(), t.view(), &[true], 1.0, None).unwrap();
        let (wrapped, g) = localization_loss(enc.view(), t.view(), &[true], 1.0, Some(2.0)).unwrap();
        assert!((plain - 1.4).abs() < 1e-12);
        assert!((wrapped - 0.005).abs() < 1e-12);
        assert!((g[[0, 6]] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn regularization_mean_absolute_weight() {
        let zero = Mlp::from_layers(vec![Dense {
            weight: Array2::zeros((2, 2)),
            bias: array![5.0, 5.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(regularization_loss(&[&zero]), 0.0);
        let pm = Mlp::from_layers(vec![Dense {
            weight: array![[1.0, -1.0]],
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap();
        assert_eq!(regularization_loss(&[&pm]), 1.0);
    }

    #[test]
    fn total_loss_arithmetic() {
        let w = |alpha, beta, gamma, kappa| LossWeights { alpha, beta, gamma, kappa };
        assert_eq!(total_loss(0.5, 0.25, 0.1, 0.2, w(0.0, 0.0, 0.0, 0.0)).unwrap(), 0.0);
        assert_eq!(total_loss(0.5, 0.25, 0.1, 0.2, w(1.0, 0.0, 0.0, 0.0)).unwrap(), 0.5);
        let t = total_loss(0.5, 0.25, 0.1, 0.2, w(2.0, 1.0, 1.0, 0.5)).unwrap();
        assert!((t - 1.45).abs() < 1e-15);
        assert!(total_loss(0.0, 0.0, 0.0, 0.0, w(-1.0, 0.0, 0.0, 0.0)).is_err());
    }
}
