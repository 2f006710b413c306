//! Graph neural network detector for building boxes.

pub mod benchmark;
pub mod config;
pub mod detect;
pub mod encoding;
pub mod layer;
pub mod loss;
pub mod model;
pub mod scoring;
pub mod train;

pub use config::DetectorConfig;
pub use detect::{
    evaluate_detections, format_detections, load_detections, parse_detections, Candidate, Evaluation,
    DETECTIONS_HEADER,
};
pub use encoding::{median_dimensions, BoxCoder, BoxEncoding};
pub use layer::{GnnLayer, LayerGradients, LayerTape};
pub use loss::{
    classification_loss, localization_loss, regularization_loss, total_loss, LossBreakdown, LossWeights,
};
pub use model::{vertex_targets, Detector, DetectorGradients, NetworkOutput, PreparedScene, TrainingScene, VertexTargets};
pub use scoring::{merge_boxes, occlusion_factor, weighted_median, Detection};
pub use train::{train, train_with, EpochLoss, LossHistory};
pub use benchmark::{
    benchmark_detector_config, generate_dataset, prepare_training, prototypes_from_labels, reference_energies,
    run_benchmark, BenchmarkConfig, BenchmarkReport, LabelledCloud,
};
