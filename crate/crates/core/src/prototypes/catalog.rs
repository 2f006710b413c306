//! Prototype ranges derived from class statistics, and the prototype file.
//!
//! Five prototypes per class tile `[μ − 2.5σ, μ + 2.5σ)` on every axis in
//! one-σ steps; prototype 1 is the largest, prototype 3 is centered on the
//! mean.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::stats::ClassStats;
use crate::error::{Error, Result};

pub const PROTOTYPES_PER_CLASS: usize = 5;

/// One prototype building. Arrays are ordered (l, h, w).
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub class_id: usize,
    /// 1-based, 1 = largest.
    pub index: usize,
    pub low: [f64; 3],
    pub high: [f64; 3],
    pub center: [f64; 3],
    pub energy: f64,
}

impl Prototype {
    /// Features compared by the matching loss: the center dimensions.
    pub fn features(&self) -> Vec<f64> {
        self.center.to_vec()
    }
}

/// Offset of prototype `index` from the mean, in standard deviations.
pub fn center_offset(index: usize) -> f64 {
    3.0 - index as f64
}

/// The five prototypes of one class together with the statistics they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    pub class_id: usize,
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub prototypes: Vec<Prototype>,
}

impl ClassPrototypes {
    pub fn get(&self, index: usize) -> Option<&Prototype> {
        self.prototypes.get(index.checked_sub(1)?)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.prototypes.iter().map(|p| p.energy).collect()
    }

    /// Recovers the class statistics from the central prototype's range:
    /// its midpoint is μ and its width is σ.
    pub fn from_ranges(class_id: usize, mut prototypes: Vec<Prototype>) -> Result<Self> {
        prototypes.sort_by_key(|p| p.index);
        let indices: Vec<usize> = prototypes.iter().map(|p| p.index).collect();
        if indices != (1..=PROTOTYPES_PER_CLASS).collect::<Vec<_>>() {
            return Err(Error::Parameter(format!(
                "class {class_id}: expected prototypes 1..=5, found {indices:?}"
            )));
        }
        let mid = &prototypes[2];
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for k in 0..3 {
            mean[k] = 0.5 * (mid.low[k] + mid.high[k]);
            std[k] = mid.high[k] - mid.low[k];
        }
        Ok(Self {
            class_id,
            mean,
            std,
            prototypes,
        })
    }
}

/// Builds prototypes 1..=5 for one class. `energies` is ordered prototype 1 → 5.
pub fn make_prototypes(stats: &ClassStats, energies: &[f64]) -> Result<ClassPrototypes> {
    if energies.len() != PROTOTYPES_PER_CLASS {
        return Err(Error::Parameter(format!(
            "expected {PROTOTYPES_PER_CLASS} prototype energies, got {}",
            energies.len()
        )));
    }
    let prototypes = (1..=PROTOTYPES_PER_CLASS)
        .map(|k| {
            let c = center_offset(k);
            let at = |off: f64| {
                let mut v = [0.0; 3];
                for a in 0..3 {
                    v[a] = stats.mean[a] + off * stats.std[a];
                }
                v
            };
            Prototype {
                class_id: stats.class_id,
                index: k,
                low: at(c - 0.5),
                high: at(c + 0.5),
                center: at(c),
                energy: energies[k - 1],
            }
        })
        .collect();
    Ok(ClassPrototypes {
        class_id: stats.class_id,
        mean: stats.mean,
        std: stats.std,
        prototypes,
    })
}

/// Prototypes for every class plus the per-feature matching coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub classes: BTreeMap<usize, ClassPrototypes>,
    /// φ for the (l, h, w) features.
    pub coefficients: Vec<f64>,
}

impl PrototypeSet {
    pub fn new(classes: impl IntoIterator<Item = ClassPrototypes>) -> Self {
        Self {
            classes: classes.into_iter().map(|c| (c.class_id, c)).collect(),
            coefficients: vec![1.0; 3],
        }
    }

    /// Derives prototypes from statistics; `energies[c]` lists the five
    /// energies of class `c`, missing classes get zeros.
    pub fn from_stats(stats: &[ClassStats], energies: &BTreeMap<usize, Vec<f64>>) -> Result<Self> {
        let classes = stats
            .iter()
            .map(|s| {
                let e = energies
                    .get(&s.class_id)
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; PROTOTYPES_PER_CLASS]);
                make_prototypes(s, &e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(classes))
    }

    pub fn class(&self, class_id: usize) -> Result<&ClassPrototypes> {
        self.classes
            .get(&class_id)
            .ok_or_else(|| Error::Lookup(format!("no prototypes for class {class_id}")))
    }

    /// CSV `classId,protoIndex,lowL,highL,lowW,highW,lowH,highH,energy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("classId,protoIndex,lowL,highL,lowW,highW,lowH,highH,energy\n");
        for cp in self.classes.values() {
            for p in &cp.prototypes {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    p.class_id, p.index, p.low[0], p.high[0], p.low[2], p.high[2], p.low[1], p.high[1], p.energy
                ));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut grouped: BTreeMap<usize, Vec<Prototype>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("classId") {
                continue;
            }
            let cells: Vec<f64> = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 1,
                        message: format!("non-numeric cell `{}`", c.trim()),
                    })
                })
                .collect::<Result<_>>()?;
            if cells.len() != 9 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 9 columns, found {}", cells.len()),
                });
            }
            let class_id = cells[0] as usize;
            let low = [cells[2], cells[6], cells[4]];
            let high = [cells[3], cells[7], cells[5]];
            let mut center = [0.0; 3];
            for k in 0..3 {
                center[k] = 0.5 * (low[k] + high[k]);
            }
            grouped.entry(class_id).or_default().push(Prototype {
                class_id,
                index: cells[1] as usize,
                low,
                high,
                center,
                energy: cells[8],
            });
        }
        let classes = grouped
            .into_iter()
            .map(|(c, protos)| ClassPrototypes::from_ranges(c, protos))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(classes))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: f64, std: f64) -> ClassStats {
        ClassStats {
            class_id: 0,
            mean: [mean; 3],
            std: [std; 3],
            sample_count: 10,
        }
    }

    #[test]
    fn height_range_of_largest_prototype() {
        let s = ClassStats {
            class_id: 0,
            mean: [4.0, 1.53075, 1.6],
            std: [0.3, 0.1109, 0.05],
            sample_count: 100,
        };
        let p = make_prototypes(&s, &[40.0, 38.0, 36.0, 34.0, 32.0]).unwrap();
        let top = p.get(1).unwrap();
        assert!((top.low[1] - 1.6971).abs() < 1e-3);
        assert!((top.high[1] - 1.8080).abs() < 1e-3);
        assert_eq!(top.energy, 40.0);
    }

    #[test]
    fn zero_spread_collapses_ranges() {
        let p = make_prototypes(&stats(2.0, 0.0), &[1.0; 5]).unwrap();
        for proto in &p.prototypes {
            assert_eq!(proto.low, [2.0; 3]);
            assert_eq!(proto.high, [2.0; 3]);
        }
    }

    #[test]
    fn ranges_tile_without_gaps() {
        let p = make_prototypes(&stats(10.0, 1.5), &[0.0; 5]).unwrap();
        assert!((p.get(5).unwrap().low[0] - (10.0 - 2.5 * 1.5)).abs() < 1e-12);
        assert!((p.get(1).unwrap().high[0] - (10.0 + 2.5 * 1.5)).abs() < 1e-12);
        for k in 1..5 {
            assert_eq!(p.get(k + 1).unwrap().high, p.get(k).unwrap().low);
        }
    }

    #[test]
    fn wrong_energy_count() {
        assert!(matches!(
            make_prototypes(&stats(1.0, 1.0), &[1.0; 4]),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn csv_round_trip_recovers_statistics() {
        let mut s = stats(10.0, 2.0);
        s.mean = [10.0, 5.0, 8.0];
        s.std = [2.0, 0.5, 1.0];
        let set = PrototypeSet::new([make_prototypes(&s, &[5.0, 4.0, 3.0, 2.0, 1.0]).unwrap()]);
        let back = PrototypeSet::from_csv(&set.to_csv()).unwrap();
        let c = back.class(0).unwrap();
        for k in 0..3 {
            assert!((c.mean[k] - s.mean[k]).abs() < 1e-12);
            assert!((c.std[k] - s.std[k]).abs() < 1e-12);
        }
        assert_eq!(c.energies(), vec![5.0, 4.0, 3.0, 2.0, 1.0]);
        assert!(back.class(1).is_err());
    }
}
