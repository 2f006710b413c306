mod common;

use common::oracles::{encoding_round_trip_error, merge_violations, occlusion_monotonicity_violations};
use ebim_gnn::geometry::Box7;
use ebim_gnn::pointgnn::{merge_boxes, occlusion_factor, Detection};

#[test]
fn encode_decode_round_trips() {
    assert!(encoding_round_trip_error(100_000) <= 1e-9);
}

#[test]
fn merged_boxes_are_separated_and_duplicates_collapse() {
    assert_eq!(merge_violations(1000), (0, 0));
}

#[test]
fn occlusion_never_drops_when_points_are_added() {
    assert_eq!(occlusion_monotonicity_violations(1000), 0);
}

#[test]
fn occlusion_reference_cases() {
    let b = Box7::new(2.0, 1.0, 3.0, 6.0, 4.0, 2.0, 0.9);
    assert!((occlusion_factor(&b, &b.corners()).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(occlusion_factor(&b, &[[2.0, 1.0, 3.0]]).unwrap(), 0.0);
    let axis_box = Box7::new(0.0, 0.0, 0.0, 6.0, 4.0, 2.0, 0.0);
    let half = [[-1.5, -0.5, -1.0], [1.5, 0.5, 1.0]];
    assert_eq!(occlusion_factor(&axis_box, &half).unwrap(), 0.125);
}

#[test]
fn merging_keeps_classes_apart() {
    let b = Box7::new(0.0, 0.0, 1.0, 4.0, 2.0, 2.0, 0.0);
    let dets = [
        Detection { bbox: b, class_id: 0, score: 0.9, occlusion: 0.5 },
        Detection { bbox: b, class_id: 1, score: 0.8, occlusion: 0.5 },
    ];
    assert_eq!(merge_boxes(&dets, 0.5).unwrap().len(), 2);
}
