//! Trains a small detector for a few epochs, saves it, reloads the checkpoint
//! and detects buildings in an unseen scene.

use ebim_gnn::checkpoint::{load_checkpoint, save_checkpoint};
use ebim_gnn::pointgnn::{
    benchmark_detector_config, evaluate_detections, format_detections, generate_dataset, prepare_training,
    train, Detector,
};
use ebim_gnn::scene::SceneConfig;

fn main() -> ebim_gnn::Result<()> {
    let scene = SceneConfig::default();
    let data = generate_dataset(&scene, 10, 0)?;
    let mut config = benchmark_detector_config();
    config.building_types = scene.classes.len();
    config.epochs = 5;
    let scenes = prepare_training(&mut config, &data, None)?;
    let mut detector = Detector::new(config)?;
    let history = train(&mut detector, &scenes)?;
    println!("loss {:.3} -> {:.3}", history.totals()[0], history.totals().last().unwrap());

    let path = std::env::temp_dir().join("ebimgnn_example.ckpt");
    save_checkpoint(&detector, &path)?;
    let detector = load_checkpoint(&path)?;

    let (cloud, labels) = generate_dataset(&scene, 1, 500)?.remove(0);
    let detections = detector.detect(&cloud)?;
    print!("{}", format_detections(&detections));
    let ev = evaluate_detections(&detections, &labels, 0.5);
    println!("{} of {} buildings found, {} false positives", ev.matched, ev.ground_truth, ev.false_positives);
    Ok(())
}
