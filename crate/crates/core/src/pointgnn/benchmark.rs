//! Synthetic train/test benchmark: generate scenes, fit the detector, and
//! evaluate detections against the generated labels.

use std::collections::BTreeMap;
use std::time::Instant;

use super::config::DetectorConfig;
use super::detect::{evaluate_detections, Evaluation};
use super::encoding::median_dimensions;
use super::model::{Detector, PreparedScene, TrainingScene};
use super::train::{train_with, EpochLoss, LossHistory};
use crate::cloud::{GroundTruthBox, PointCloud};
use crate::error::{Error, Result};
use crate::prototypes::{stats_by_class, PrototypeSet, ReferenceTables};
use crate::scene::{generate_scene, SceneConfig};

pub type LabelledCloud = (PointCloud, Vec<GroundTruthBox>);

/// Scene `i` uses seed `base + i`.
pub fn generate_dataset(config: &SceneConfig, count: usize, base_seed: u64) -> Result<Vec<LabelledCloud>> {
    (0..count as u64)
        .map(|i| {
            let mut c = config.clone();
            c.seed = base_seed.wrapping_add(i);
            generate_scene(&c)
        })
        .collect()
}

/// Prototype energies per building type: the bundled reference columns,
/// reused cyclically when there are more types than columns.
pub fn reference_energies(types: usize) -> Result<BTreeMap<usize, Vec<f64>>> {
    let tables = ReferenceTables::bundled()?;
    let columns = tables.class_count();
    Ok((0..types).map(|t| (t, tables.energy_column(t % columns))).collect())
}

/// Prototypes from the label dimensions of a dataset.
pub fn prototypes_from_labels(data: &[LabelledCloud], energies: &BTreeMap<usize, Vec<f64>>) -> Result<PrototypeSet> {
    let boxes: Vec<_> = data
        .iter()
        .flat_map(|(_, l)| l.iter().map(|g| (g.class_id, g.bbox)))
        .collect();
    PrototypeSet::from_stats(&stats_by_class(&boxes)?, energies)
}

/// Fills in median dimensions from the labels when the config has none and
/// builds the per-vertex training targets.
pub fn prepare_training(
    config: &mut DetectorConfig,
    data: &[LabelledCloud],
    prototypes: Option<&PrototypeSet>,
) -> Result<Vec<TrainingScene>> {
    if config.medians.is_empty() {
        let boxes: Vec<_> = data
            .iter()
            .flat_map(|(_, l)| l.iter().map(|g| (g.class_id, g.bbox)))
            .collect();
        config.medians = median_dimensions(&boxes, config.building_types, [1.0; 3]);
    }
    let coder = super::encoding::BoxCoder::new(config.medians.clone(), config.yaw_scale)?;
    data.iter()
        .map(|(cloud, labels)| {
            let scene = PreparedScene::new(cloud.clone(), config.voxel_size, config.radius)?;
            TrainingScene::new(scene, labels.clone(), config, &coder, prototypes)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub scene: SceneConfig,
    pub detector: DetectorConfig,
    pub train_scenes: usize,
    pub test_scenes: usize,
    /// BEV IoU for a detection to count as a match.
    pub match_iou: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            detector: benchmark_detector_config(),
            train_scenes: 50,
            test_scenes: 20,
            match_iou: 0.5,
        }
    }
}

/// Detector settings sized for the synthetic benchmark on one CPU core.
pub fn benchmark_detector_config() -> DetectorConfig {
    DetectorConfig {
        num_layers: 2,
        voxel_size: 2.0,
        radius: 8.0,
        nms_iou: 0.05,
        score_threshold: 0.95,
        learning_rate: 0.01,
        momentum: 0.9,
        lr_decay: 0.97,
        epochs: 40,
        grad_clip: 5.0,
        ..DetectorConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub detector: Detector,
    pub history: LossHistory,
    pub evaluation: Evaluation,
    pub train_seconds: f64,
    pub total_seconds: f64,
}

pub fn run_benchmark<F: FnMut(&EpochLoss)>(config: &BenchmarkConfig, on_epoch: F) -> Result<BenchmarkReport> {
    let start = Instant::now();
    if config.train_scenes == 0 {
        return Err(Error::Config("the benchmark needs training scenes".into()));
    }
    let seed = config.scene.seed;
    let train_data = generate_dataset(&config.scene, config.train_scenes, seed)?;
    let test_data = generate_dataset(&config.scene, config.test_scenes, seed.wrapping_add(1_000_000))?;
    let mut detector_config = config.detector.clone();
    detector_config.building_types = config.scene.classes.len();
    let prototypes = prototypes_from_labels(&train_data, &reference_energies(detector_config.building_types)?)?;
    let scenes = prepare_training(&mut detector_config, &train_data, Some(&prototypes))?;
    let mut detector = Detector::new(detector_config)?;
    let train_start = Instant::now();
    let history = train_with(&mut detector, &scenes, on_epoch)?;
    let train_seconds = train_start.elapsed().as_secs_f64();
    let mut evaluation = Evaluation::default();
    for (cloud, labels) in &test_data {
        let dets = detector.detect(cloud)?;
        evaluation.add(&evaluate_detections(&dets, labels, config.match_iou));
    }
    Ok(BenchmarkReport {
        detector,
        history,
        evaluation,
        train_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}
