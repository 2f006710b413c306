use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Architecture, loss weights, post-processing and optimizer settings.
///
/// Class index 0 of the classifier is background; building type `t`
/// (0-based) is classifier class `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Per-point feature channels (1 for reflectance).
    pub point_features: usize,
    pub num_layers: usize,
    pub state_width: usize,
    pub edge_width: usize,
    /// Hidden width of every two-layer MLP.
    pub hidden_width: usize,
    pub building_types: usize,
    pub voxel_size: f64,
    pub radius: f64,
    /// Median (l, h, w) per building type; filled from training labels when empty.
    pub medians: Vec<[f64; 3]>,
    pub yaw_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub huber_delta: f64,
    pub nms_iou: f64,
    pub score_threshold: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Learning-rate multiplier applied after every epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    /// Scenes per optimizer step.
    pub batch_size: usize,
    /// Global gradient-norm cap; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    /// Use `[x_j − x_i, s_i]` as edge input, leaving the offset MLP unused.
    pub literal_edges: bool,
    /// Compare yaw modulo π in the localization loss.
    pub periodic_yaw: bool,
    /// Tolerance when testing whether a vertex lies inside a labelled box.
    pub label_margin: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            point_features: 1,
            num_layers: 3,
            state_width: 64,
            edge_width: 64,
            hidden_width: 64,
            building_types: 3,
            voxel_size: 0.8,
            radius: 4.0,
            medians: Vec::new(),
            yaw_scale: FRAC_PI_2,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            kappa: 0.01,
            huber_delta: 1.0,
            nms_iou: 0.3,
            score_threshold: 0.5,
            learning_rate: 0.01,
            momentum: 0.9,
            lr_decay: 1.0,
            epochs: 50,
            batch_size: 1,
            grad_clip: 0.0,
            seed: 0,
            literal_edges: false,
            periodic_yaw: true,
            label_margin: 0.05,
        }
    }
}

impl DetectorConfig {
    /// Encoded yaw difference between a box and its copy rotated by π, when
    /// the yaw residual is taken modulo that period.
    pub fn yaw_period(&self) -> Option<f64> {
        self.periodic_yaw.then(|| std::f64::consts::PI / self.yaw_scale)
    }

    pub fn class_count(&self) -> usize {
        self.building_types + 1
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_layers < 1 {
            return fail("at least one graph layer is required".into());
        }
        if self.point_features == 0 {
            return fail("at least one point feature is required".into());
        }
        if self.state_width == 0 || self.edge_width == 0 || self.hidden_width == 0 {
            return fail("widths must be positive".into());
        }
        if self.building_types == 0 {
            return fail("at least one building type is required".into());
        }
        if !(self.voxel_size > 0.0) || !(self.radius > 0.0) {
            return fail("voxel size and radius must be positive".into());
        }
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
        ] {
            if !(w >= 0.0) {
                return fail(format!("loss weight {name} must be >= 0, got {w}"));
            }
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return fail(format!("NMS IoU threshold must lie in (0, 1), got {}", self.nms_iou));
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return fail(format!(
                "score threshold must lie in (0, 1), got {}",
                self.score_threshold
            ));
        }
        if !(self.huber_delta > 0.0) || !(self.yaw_scale > 0.0) {
            return fail("huber delta and yaw scale must be positive".into());
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return fail("learning rate must be >= 0 and momentum in [0, 1)".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return fail(format!("learning-rate decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if self.batch_size == 0 || self.grad_clip < 0.0 {
            return fail("batch size must be positive and gradient clip >= 0".into());
        }
        if !self.medians.is_empty() && self.medians.len() != self.building_types {
            return fail(format!(
                "{} median rows for {} building types",
                self.medians.len(),
                self.building_types
            ));
        }
        Ok(())
    }
}
