//! Prototype buildings: statistics, dimension ranges, matching, the two
//! prototype losses and the energy report.

mod catalog;
mod energy;
mod matching;
mod stats;
pub mod tables;

pub use catalog::{center_offset, make_prototypes, ClassPrototypes, Prototype, PrototypeSet, PROTOTYPES_PER_CLASS};
pub use energy::{count_matches, efficiency_gain, energy_report, truncate_hundredths, EnergyReport, Usage};
pub use matching::{
    fit_coefficients, match_all, match_prototype, matching_loss, matching_loss_for, prototype_classifier_loss,
    prototype_for_z, z_scores, MatchResult,
};
pub use stats::{compute_class_stats, stats_by_class, ClassStats};
pub use tables::{reproduce, RangeRow, ReferenceTables, Reproduction, REFERENCE_TABLES};
