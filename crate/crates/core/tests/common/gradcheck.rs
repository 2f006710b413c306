//! Central finite-difference checks of the detector's analytic gradients.

use ebim_gnn::pointgnn::{Detector, DetectorConfig, TrainingScene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Worst relative error over `probes` random parameters.
pub fn check(config: DetectorConfig, scene: &TrainingScene, probes: usize, seed: u64) -> f64 {
    let detector = Detector::new(config).unwrap();
    let (_, grads) = detector.loss_and_gradients(scene).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    let mlp_count = detector.mlps().len();
    for _ in 0..probes {
        let m = rng.gen_range(0..mlp_count);
        let mlp = detector.mlps()[m];
        let k = rng.gen_range(0..mlp.layers().len());
        let is_bias = rng.gen_bool(0.25);
        let (rows, cols) = mlp.layers()[k].weight.dim();
        let (r, c) = (rng.gen_range(0..rows), rng.gen_range(0..cols));
        let analytic = if is_bias {
            grads.0[m].biases[k][r]
        } else {
            grads.0[m].weights[k][[r, c]]
        };
        let eval = |delta: f64| {
            let mut d = detector.clone();
            let mut mlps = d.mlps_mut();
            let layer = &mut mlps[m].layers_mut()[k];
            if is_bias {
                layer.bias[r] += delta;
            } else {
                layer.weight[[r, c]] += delta;
            }
            drop(mlps);
            d.evaluate(scene).unwrap().total
        };
        let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
        worst = worst.max(relative_error(analytic, numeric));
        if analytic.abs() > 1e-8 {
            nonzero += 1;
        }
    }
    assert!(nonzero * 3 >= probes, "only {nonzero} of {probes} probes had a gradient");
    worst
}

pub fn weighted(alpha: f64, beta: f64, gamma: f64, kappa: f64) -> (DetectorConfig, TrainingScene) {
    let mut config = DetectorConfig {
        alpha,
        beta,
        gamma,
        kappa,
        ..super::tiny_config()
    };
    let scenes = super::toy_training(&mut config, &[11], 14);
    let scene = scenes.into_iter().next().unwrap();
    let t = &scene.targets;
    assert!(t.classes.contains(&1) && t.classes.contains(&2) && t.classes.contains(&0));
    assert!(t.prototypes.iter().any(Option::is_some));
    (config, scene)
}
