//! Independent reference computations shared by the property tests and the
//! acceptance report.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use ebim_gnn::geometry::{bev_iou, normalize_angle, Box7};
use ebim_gnn::graph::build_radius_graph;
use ebim_gnn::pointgnn::{merge_boxes, occlusion_factor, BoxCoder, Detection};
use ebim_gnn::prototypes::{make_prototypes, match_prototype, PrototypeSet, ReferenceTables};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(points: &[[f64; 3]], r: f64) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d2: f64 = (0..3).map(|k| (points[i][k] - points[j][k]).powi(2)).sum();
            if d2.sqrt() <= r {
                edges.insert((i, j));
            }
        }
    }
    edges
}

/// Pairs at exactly distance `r`: axis-aligned offsets and 3-4-5 triangles
/// whose legs are exact binary fractions for the radii used.
fn boundary_pairs(rng: &mut ChaCha8Rng, r: f64, count: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for _ in 0..count {
        let base = [
            rng.gen_range(-20i32..20) as f64 * 0.25,
            rng.gen_range(-20i32..20) as f64 * 0.25,
            rng.gen_range(-20i32..20) as f64 * 0.25,
        ];
        let offset = match rng.gen_range(0..4) {
            0 => [r, 0.0, 0.0],
            1 => [0.0, -r, 0.0],
            2 => [0.0, 0.0, r],
            _ => [r * 3.0 / 5.0, r * 4.0 / 5.0, 0.0],
        };
        out.push(base);
        out.push([base[0] + offset[0], base[1] + offset[1], base[2] + offset[2]]);
    }
    out
}

pub fn graph_matches_brute_force(clouds: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let radii = [0.3125, 0.625, 1.25, 1.875, 2.5];
    let mut failures = 0;
    let mut boundary_edges = 0;
    for c in 0..clouds {
        let n = rng.gen_range(1..=1900);
        let r = radii[c % radii.len()];
        let extent = rng.gen_range(2.0..12.0);
        let mut points: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.gen_range(-extent..extent),
                    rng.gen_range(-extent..extent),
                    rng.gen_range(-extent / 4.0..extent / 4.0),
                ]
            })
            .collect();
        let start = points.len();
        points.extend(boundary_pairs(&mut rng, r, 50));
        let got: BTreeSet<_> = build_radius_graph(&points, r).unwrap().edges().iter().copied().collect();
        let want = brute_force(&points, r);
        boundary_edges += (start..points.len())
            .step_by(2)
            .filter(|&i| got.contains(&(i, i + 1)))
            .count();
        if got != want {
            failures += 1;
        }
    }
    (failures, boundary_edges)
}

fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> Box7 {
    Box7::new(
        rng.gen_range(-spread..spread),
        rng.gen_range(-spread..spread),
        rng.gen_range(0.0..10.0),
        rng.gen_range(1.0..30.0),
        rng.gen_range(1.0..20.0),
        rng.gen_range(1.0..30.0),
        rng.gen_range(-PI..PI),
    )
}

/// Largest parameter deviation over `count` encode→decode round trips.
pub fn encoding_round_trip_error(count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let coder = BoxCoder::new(vec![[12.0, 7.0, 9.0], [24.0, 14.0, 11.0], [16.0, 9.0, 14.0]], PI / 2.0).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let b = random_box(&mut rng, 100.0);
        let anchor = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), rng.gen_range(0.0..10.0)];
        let class = rng.gen_range(0..3);
        let back = coder.decode(&coder.encode(&b, anchor, class).unwrap(), anchor, class).unwrap();
        let a = b.to_array();
        let c = back.to_array();
        for k in 0..6 {
            worst = worst.max((a[k] - c[k]).abs());
        }
        worst = worst.max(normalize_angle(a[6] - c[6]).abs());
    }
    worst
}

fn crowded_scene(rng: &mut ChaCha8Rng) -> Vec<Detection> {
    let clusters = rng.gen_range(1..5);
    let mut out = Vec::new();
    for _ in 0..clusters {
        let base = random_box(rng, 15.0);
        for _ in 0..rng.gen_range(1..12) {
            let mut b = base;
            b.x += rng.gen_range(-2.0..2.0);
            b.y += rng.gen_range(-2.0..2.0);
            b.l *= rng.gen_range(0.8..1.2);
            b.w *= rng.gen_range(0.8..1.2);
            b.theta = normalize_angle(b.theta + rng.gen_range(-0.3..0.3));
            out.push(Detection {
                bbox: b,
                class_id: rng.gen_range(0..2),
                score: rng.gen_range(0.0..1.0),
                occlusion: rng.gen_range(0.0..1.0),
            });
        }
    }
    out
}

/// `(scenes with a same-class pair at or above the threshold, scenes where
/// exact duplicates did not collapse to one box)`.
pub fn merge_violations(scenes: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut overlap = 0;
    let mut duplicates = 0;
    for s in 0..scenes {
        let threshold = [0.1, 0.3, 0.5, 0.7][s % 4];
        let dets = crowded_scene(&mut rng);
        let merged = merge_boxes(&dets, threshold).unwrap();
        let bad = merged.iter().enumerate().any(|(i, a)| {
            merged[i + 1..]
                .iter()
                .any(|b| a.class_id == b.class_id && bev_iou(&a.bbox, &b.bbox) >= threshold)
        });
        overlap += bad as usize;
        let d = dets[0];
        let copies: Vec<Detection> = (0..rng.gen_range(2..8))
            .map(|_| Detection {
                score: rng.gen_range(0.0..1.0),
                ..d
            })
            .collect();
        let collapsed = merge_boxes(&copies, threshold).unwrap();
        if collapsed.len() != 1 || collapsed[0].bbox != d.bbox {
            duplicates += 1;
        }
    }
    (overlap, duplicates)
}

/// Random boxes with a random point set; adding one more point must not
/// lower the factor. Returns the number of violations.
pub fn occlusion_monotonicity_violations(cases: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut violations = 0;
    for _ in 0..cases {
        let b = random_box(&mut rng, 10.0);
        let sample = |rng: &mut ChaCha8Rng| {
            let [al, aw, ah] = b.axes();
            let u = rng.gen_range(-0.6..0.6) * b.l;
            let v = rng.gen_range(-0.6..0.6) * b.w;
            let t = rng.gen_range(-0.6..0.6) * b.h;
            [
                b.x + u * al[0] + v * aw[0] + t * ah[0],
                b.y + u * al[1] + v * aw[1] + t * ah[1],
                b.z + u * al[2] + v * aw[2] + t * ah[2],
            ]
        };
        let mut pts: Vec<[f64; 3]> = (0..rng.gen_range(0..20)).map(|_| sample(&mut rng)).collect();
        let mut previous = occlusion_factor(&b, &pts).unwrap();
        for _ in 0..5 {
            pts.push(sample(&mut rng));
            let next = occlusion_factor(&b, &pts).unwrap();
            if next < previous - 1e-12 {
                violations += 1;
            }
            previous = next;
        }
    }
    violations
}

pub fn reference_set() -> PrototypeSet {
    let tables = ReferenceTables::bundled().unwrap();
    PrototypeSet::new((0..tables.class_count()).map(|c| {
        make_prototypes(&tables.back_derived_stats(c).unwrap(), &tables.energy_column(c)).unwrap()
    }))
}

/// `(class, k)` pairs whose center-dimension box is matched elsewhere.
pub fn center_mismatches() -> Vec<(usize, usize)> {
    let set = reference_set();
    let mut bad = Vec::new();
    for (&c, class) in &set.classes {
        for p in &class.prototypes {
            let [l, h, w] = p.center;
            let b = Box7::new(0.0, 0.0, h / 2.0, l, h, w, 0.3);
            if match_prototype(0, c, &b, &set).unwrap().prototype != p.index {
                bad.push((c, p.index));
            }
        }
    }
    bad
}
