//! Stochastic gradient descent with momentum on the total loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::LossBreakdown;
use super::model::{Detector, DetectorGradients, TrainingScene};
use crate::error::{Error, Result};

/// Losses of one epoch, averaged over its scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory(pub Vec<EpochLoss>);

impl LossHistory {
    pub fn totals(&self) -> Vec<f64> {
        self.0.iter().map(|e| e.loss.total).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,total,classification,localization,prototype,regularization\n");
        for e in &self.0 {
            let l = e.loss;
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, l.total, l.classification, l.localization, l.prototype, l.regularization
            ));
        }
        out
    }
}

fn accumulate(sum: &mut LossBreakdown, l: &LossBreakdown) {
    sum.classification += l.classification;
    sum.localization += l.localization;
    sum.prototype += l.prototype;
    sum.regularization += l.regularization;
    sum.total += l.total;
}

fn mean(sum: LossBreakdown, n: usize) -> LossBreakdown {
    let k = 1.0 / n as f64;
    LossBreakdown {
        classification: sum.classification * k,
        localization: sum.localization * k,
        prototype: sum.prototype * k,
        regularization: sum.regularization * k,
        total: sum.total * k,
    }
}

/// Trains in place for `config.epochs` epochs and returns the per-epoch mean
/// losses. Each epoch visits the scenes in a seeded shuffled order and takes
/// one step per `batch_size` scenes, with the batch gradient averaged. The
/// learning rate is multiplied by `lr_decay` after each epoch.
pub fn train(detector: &mut Detector, scenes: &[TrainingScene]) -> Result<LossHistory> {
    train_with(detector, scenes, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<F: FnMut(&EpochLoss)>(
    detector: &mut Detector,
    scenes: &[TrainingScene],
    mut on_epoch: F,
) -> Result<LossHistory> {
    if scenes.is_empty() {
        return Err(Error::Training("no training scenes".into()));
    }
    let cfg = detector.config.clone();
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut velocity = DetectorGradients::zeros_like(detector);
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut history = LossHistory::default();
    let mut lr = cfg.learning_rate;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = DetectorGradients::zeros_like(detector);
            for &s in batch {
                let (loss, g) = detector.loss_and_gradients(&scenes[s])?;
                if !loss.is_finite() || !g.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss in epoch {epoch} on scene {s}: {loss:?}"
                    )));
                }
                accumulate(&mut sum, &loss);
                grad.add_assign(&g);
            }
            grad.scale(1.0 / batch.len() as f64);
            if cfg.grad_clip > 0.0 {
                let norm = grad.norm();
                if norm > cfg.grad_clip {
                    grad.scale(cfg.grad_clip / norm);
                }
            }
            velocity.scale(cfg.momentum);
            velocity.add_assign(&grad);
            detector.apply_step(&velocity, lr);
        }
        let entry = EpochLoss {
            epoch,
            loss: mean(sum, scenes.len()),
        };
        lr *= cfg.lr_decay;
        on_epoch(&entry);
        history.0.push(entry);
    }
    Ok(history)
}
