use ebim_gnn::graph::build_radius_graph;
use ebim_gnn::nn::Mlp;
use ebim_gnn::pointgnn::GnnLayer;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const D: usize = 6;

fn random_layer(seed: u64) -> GnnLayer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GnnLayer::new(D, 5, 8, &mut rng)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| [rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0), rng.gen_range(0.0..1.0)])
        .collect()
}

fn random_states(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, D), |_| rng.gen_range(-1.0..1.0))
}

fn run(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    mlp.forward(x).unwrap().0
}

/// Per-edge reference: `s' = g(max_j f([x_j − x_i + Δx_i, s_j]), s_i) + s_i`.
fn reference_layer(layer: &GnnLayer, points: &[[f64; 3]], neighbors: &[Vec<usize>], states: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(states.dim());
    for i in 0..points.len() {
        let si: Vec<f64> = states.row(i).to_vec();
        let dx = run(&layer.h, &si);
        let messages: Vec<Vec<f64>> = neighbors[i]
            .iter()
            .map(|&j| {
                let mut input: Vec<f64> = (0..3).map(|k| points[j][k] - points[i][k] + dx[k]).collect();
                input.extend(states.row(j).iter());
                run(&layer.f, &input)
            })
            .collect();
        let width = layer.f.output_width();
        let agg: Vec<f64> = if messages.is_empty() {
            vec![0.0; width]
        } else {
            (0..width)
                .map(|c| messages.iter().map(|m| m[c]).fold(f64::NEG_INFINITY, f64::max))
                .collect()
        };
        let mut input = agg;
        input.extend(&si);
        let update = run(&layer.g, &input);
        for c in 0..D {
            out[[i, c]] = update[c] + si[c];
        }
    }
    out
}

fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn zero_h(layer: &mut GnnLayer) {
    let last = layer.h.layers_mut().last_mut().unwrap();
    last.weight.fill(0.0);
    last.bias.fill(0.0);
}

#[test]
fn batched_layer_matches_per_edge_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layer = random_layer(2);
    let points = random_points(&mut rng, 40);
    let g = build_radius_graph(&points, 1.0).unwrap();
    let neighbors: Vec<Vec<usize>> = (0..points.len()).map(|i| g.neighbors(i).to_vec()).collect();
    let states = random_states(&mut rng, points.len());
    let got = layer.forward(&g, states.view(), false).unwrap();
    assert!(max_diff(&got, &reference_layer(&layer, &points, &neighbors, &states)) < 1e-12);
}

#[test]
fn zero_registration_matches_plain_relative_offsets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut layer = random_layer(4);
    zero_h(&mut layer);
    let points = random_points(&mut rng, 30);
    let g = build_radius_graph(&points, 1.2).unwrap();
    let states = random_states(&mut rng, points.len());
    let got = layer.forward(&g, states.view(), false).unwrap();
    let mut want = Array2::zeros(states.dim());
    for i in 0..points.len() {
        let width = layer.f.output_width();
        let mut agg = vec![0.0; width];
        let mut first = true;
        for &j in g.neighbors(i) {
            let mut input: Vec<f64> = (0..3).map(|k| points[j][k] - points[i][k]).collect();
            input.extend(states.row(j).iter());
            let m = run(&layer.f, &input);
            for c in 0..width {
                agg[c] = if first { m[c] } else { agg[c].max(m[c]) };
            }
            first = false;
        }
        agg.extend(states.row(i).iter());
        let u = run(&layer.g, &agg);
        for c in 0..D {
            want[[i, c]] = u[c] + states[[i, c]];
        }
    }
    assert!(max_diff(&got, &want) < 1e-12);
}

#[test]
fn isolated_vertex_sees_an_empty_aggregate() {
    let layer = random_layer(5);
    let points = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
    let g = build_radius_graph(&points, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let states = random_states(&mut rng, 2);
    let got = layer.forward(&g, states.view(), false).unwrap();
    for i in 0..2 {
        let mut input = vec![0.0; layer.f.output_width()];
        input.extend(states.row(i).iter());
        let u = run(&layer.g, &input);
        for c in 0..D {
            assert!((got[[i, c]] - (u[c] + states[[i, c]])).abs() < 1e-12);
        }
    }
}

#[test]
fn output_is_invariant_to_translating_the_cloud() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let layer = random_layer(8);
    let points = random_points(&mut rng, 35);
    // Dyadic shift keeps every relative offset bit-identical.
    let shifted: Vec<[f64; 3]> = points.iter().map(|p| [p[0] + 64.0, p[1] - 32.0, p[2] + 8.0]).collect();
    let states = random_states(&mut rng, points.len());
    let a = layer.forward(&build_radius_graph(&points, 1.0).unwrap(), states.view(), false).unwrap();
    let b = layer.forward(&build_radius_graph(&shifted, 1.0).unwrap(), states.view(), false).unwrap();
    assert!(max_diff(&a, &b) < 1e-9);
}

#[test]
fn output_is_equivariant_to_vertex_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let layer = random_layer(10);
    let points = random_points(&mut rng, 35);
    let g = build_radius_graph(&points, 1.0).unwrap();
    let states = random_states(&mut rng, points.len());
    let mut order: Vec<usize> = (0..points.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let permuted_states = Array2::from_shape_fn(states.dim(), |(k, c)| states[[order[k], c]]);
    let a = layer.forward(&g, states.view(), false).unwrap();
    let b = layer.forward(&g.permuted(&order), permuted_states.view(), false).unwrap();
    for (k, &o) in order.iter().enumerate() {
        for c in 0..D {
            assert!((b[[k, c]] - a[[o, c]]).abs() < 1e-12);
        }
    }
}

#[test]
fn literal_edges_use_the_receiving_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let layer = random_layer(12);
    let points = random_points(&mut rng, 20);
    let g = build_radius_graph(&points, 1.5).unwrap();
    let states = random_states(&mut rng, points.len());
    let got = layer.forward(&g, states.view(), true).unwrap();
    for i in 0..points.len() {
        let width = layer.f.output_width();
        let msgs: Vec<Vec<f64>> = g
            .neighbors(i)
            .iter()
            .map(|&j| {
                let mut input: Vec<f64> = (0..3).map(|k| points[j][k] - points[i][k]).collect();
                input.extend(states.row(i).iter());
                run(&layer.f, &input)
            })
            .collect();
        let mut agg: Vec<f64> = (0..width)
            .map(|c| if msgs.is_empty() { 0.0 } else { msgs.iter().map(|m| m[c]).fold(f64::NEG_INFINITY, f64::max) })
            .collect();
        agg.extend(states.row(i).iter());
        let u = run(&layer.g, &agg);
        for c in 0..D {
            assert!((got[[i, c]] - (u[c] + states[[i, c]])).abs() < 1e-12);
        }
    }
}
