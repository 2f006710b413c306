mod common;

use common::oracles::{center_mismatches, reference_set};
use ebim_gnn::prototypes::{
    make_prototypes, matching_loss, prototype_for_z, PROTOTYPES_PER_CLASS,
};
use proptest::prelude::*;

#[test]
fn every_bin_center_matches_its_own_prototype() {
    assert_eq!(reference_set().classes.len() * PROTOTYPES_PER_CLASS, 15);
    assert!(center_mismatches().is_empty());
}

#[test]
fn z_bins_have_unit_width_around_the_center() {
    assert_eq!(prototype_for_z(2.49), 1);
    assert_eq!(prototype_for_z(1.5), 1);
    assert_eq!(prototype_for_z(1.49), 2);
    assert_eq!(prototype_for_z(0.0), 3);
    assert_eq!(prototype_for_z(-0.51), 4);
    assert_eq!(prototype_for_z(-9.0), 5);
    assert_eq!(prototype_for_z(9.0), 1);
}

fn features() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(1.0..40.0f64, 3), 1..8)
}

proptest! {
    #[test]
    fn loss_is_zero_for_identical_features(a in features(), phi in prop::collection::vec(0.01..5.0f64, 3)) {
        prop_assert_eq!(matching_loss(&a, &a, &phi).unwrap(), 0.0);
    }

    #[test]
    fn loss_is_positive_when_any_feature_differs(
        a in features(),
        phi in prop::collection::vec(0.01..5.0f64, 3),
        pick in any::<prop::sample::Index>(),
        delta in prop_oneof![-3.0..-1e-6f64, 1e-6..3.0f64],
    ) {
        let mut m = a.clone();
        let flat = pick.index(m.len() * 3);
        m[flat / 3][flat % 3] += delta;
        prop_assert!(matching_loss(&a, &m, &phi).unwrap() > 0.0);
    }

    #[test]
    fn prototype_index_is_monotone_in_z(z1 in -5.0..5.0f64, z2 in -5.0..5.0f64) {
        let (lo, hi) = if z1 <= z2 { (z1, z2) } else { (z2, z1) };
        prop_assert!(prototype_for_z(lo) >= prototype_for_z(hi));
    }

    #[test]
    fn prototype_ranges_tile_without_gaps(
        mean in prop::collection::vec(5.0..30.0f64, 3),
        std in prop::collection::vec(0.1..5.0f64, 3),
    ) {
        let stats = ebim_gnn::prototypes::ClassStats {
            class_id: 0,
            mean: [mean[0], mean[1], mean[2]],
            std: [std[0], std[1], std[2]],
            sample_count: 10,
        };
        let c = make_prototypes(&stats, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        for pair in c.prototypes.windows(2) {
            for a in 0..3 {
                prop_assert!((pair[0].low[a] - pair[1].high[a]).abs() < 1e-9);
                prop_assert!(pair[0].center[a] > pair[1].center[a]);
            }
        }
    }
}
