#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use std::collections::BTreeMap;

use ebim_gnn::cloud::{GroundTruthBox, Point, PointCloud};
use ebim_gnn::geometry::Box7;
use ebim_gnn::pointgnn::{prepare_training, prototypes_from_labels, DetectorConfig, TrainingScene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small labelled cloud: points scattered through two boxes plus a sparse floor.
pub fn toy_cloud(seed: u64, per_box: usize) -> (PointCloud, Vec<GroundTruthBox>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = vec![
        GroundTruthBox {
            class_id: 0,
            bbox: Box7::new(0.0, 0.0, 1.0, 3.0, 2.0, 2.0, 0.4),
        },
        GroundTruthBox {
            class_id: 1,
            bbox: Box7::new(5.0, 1.0, 1.5, 4.0, 3.0, 2.5, -1.1),
        },
    ];
    let mut cloud = PointCloud::new(1);
    for (k, g) in labels.iter().enumerate() {
        let [al, aw, _] = g.bbox.axes();
        for _ in 0..per_box {
            let u = rng.gen_range(-0.5..0.5) * g.bbox.l;
            let v = rng.gen_range(-0.5..0.5) * g.bbox.w;
            let t = rng.gen_range(-0.5..0.5) * g.bbox.h;
            let p = [
                g.bbox.x + u * al[0] + v * aw[0],
                g.bbox.y + u * al[1] + v * aw[1],
                g.bbox.z + t,
            ];
            cloud.push(Point::new(p, vec![0.3 + 0.4 * k as f64 + rng.gen_range(0.0..0.05)])).unwrap();
        }
    }
    for _ in 0..per_box / 2 {
        let p = [rng.gen_range(-3.0..8.0), rng.gen_range(-3.0..4.0), 0.0];
        cloud.push(Point::new(p, vec![0.1])).unwrap();
    }
    (cloud, labels)
}

pub fn tiny_config() -> DetectorConfig {
    DetectorConfig {
        num_layers: 1,
        state_width: 5,
        edge_width: 4,
        hidden_width: 6,
        building_types: 2,
        voxel_size: 0.6,
        radius: 1.6,
        seed: 3,
        ..DetectorConfig::default()
    }
}

/// Training scenes for `config`, with medians and prototypes from the labels.
pub fn toy_training(config: &mut DetectorConfig, seeds: &[u64], per_box: usize) -> Vec<TrainingScene> {
    let data: Vec<_> = seeds.iter().map(|&s| toy_cloud(s, per_box)).collect();
    let energies: BTreeMap<usize, Vec<f64>> = (0..2).map(|c| (c, vec![5.0, 4.0, 3.0, 2.0, 1.0])).collect();
    let mut grown = data.clone();
    // a second, larger copy of each label so the class statistics have spread
    for (_, labels) in &mut grown {
        for g in labels.iter_mut() {
            g.bbox.l *= 1.2;
            g.bbox.w *= 0.9;
        }
    }
    grown.extend(data.iter().cloned());
    let protos = prototypes_from_labels(&grown, &energies).unwrap();
    prepare_training(config, &data, Some(&protos)).unwrap()
}
