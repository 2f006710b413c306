//! Bundled reference tables and their reproduction.
//!
//! The tables ship in `data/reference_tables.txt`: prototype dimension
//! ranges (in h, w, l order), per-prototype energies, building counts per
//! prototype, per-building actual energies and the resulting usage figures.

use super::catalog::{make_prototypes, PROTOTYPES_PER_CLASS};
use super::energy::{energy_report, EnergyReport};
use super::stats::ClassStats;
use crate::error::{Error, Result};

pub const REFERENCE_TABLES: &str = include_str!("../../data/reference_tables.txt");

/// One published prototype range, converted to (l, h, w) order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeRow {
    /// 0-based building type.
    pub class_id: usize,
    pub prototype: usize,
    pub low: [f64; 3],
    pub high: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTables {
    pub ranges: Vec<RangeRow>,
    /// 5 × B, prototype-major.
    pub prototype_energy: Vec<Vec<f64>>,
    /// 5 × B, prototype-major.
    pub counts: Vec<Vec<u64>>,
    pub actual_per_building: Vec<f64>,
    /// Per type: (actual, prototype, reduction %).
    pub usage: Vec<(f64, f64, f64)>,
    pub total_reduction: f64,
}

fn numbers(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|c| {
            c.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric cell `{}`", c.trim()),
            })
        })
        .collect()
}

impl ReferenceTables {
    pub fn bundled() -> Result<Self> {
        Self::parse(REFERENCE_TABLES)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut t = ReferenceTables {
            ranges: Vec::new(),
            prototype_energy: Vec::new(),
            counts: Vec::new(),
            actual_per_building: Vec::new(),
            usage: Vec::new(),
            total_reduction: f64::NAN,
        };
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_string();
                continue;
            }
            let v = numbers(line, i + 1)?;
            let bad = |msg: &str| Error::Parse {
                line: i + 1,
                message: msg.to_string(),
            };
            match section.as_str() {
                "prototype_ranges" => {
                    if v.len() != 8 {
                        return Err(bad("range rows have 8 columns"));
                    }
                    // stored as (h, w, l)
                    t.ranges.push(RangeRow {
                        class_id: v[0] as usize - 1,
                        prototype: v[1] as usize,
                        low: [v[4], v[2], v[3]],
                        high: [v[7], v[5], v[6]],
                    });
                }
                "prototype_energy" => t.prototype_energy.push(v[1..].to_vec()),
                "counts" => t.counts.push(v[1..].iter().map(|&c| c as u64).collect()),
                "actual_per_building" => t.actual_per_building = v,
                "usage" => {
                    if v.len() != 4 {
                        return Err(bad("usage rows have 4 columns"));
                    }
                    t.usage.push((v[1], v[2], v[3]));
                }
                "total_reduction" => t.total_reduction = v[0],
                other => return Err(bad(&format!("unknown section `{other}`"))),
            }
        }
        Ok(t)
    }

    pub fn class_count(&self) -> usize {
        self.actual_per_building.len()
    }

    pub fn range(&self, class_id: usize, prototype: usize) -> Option<&RangeRow> {
        self.ranges
            .iter()
            .find(|r| r.class_id == class_id && r.prototype == prototype)
    }

    /// Statistics implied by the central prototype's range: μ is its
    /// midpoint, σ its width.
    pub fn back_derived_stats(&self, class_id: usize) -> Result<ClassStats> {
        let mid = self
            .range(class_id, 3)
            .ok_or_else(|| Error::Lookup(format!("no central range for type {class_id}")))?;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for k in 0..3 {
            mean[k] = 0.5 * (mid.low[k] + mid.high[k]);
            std[k] = mid.high[k] - mid.low[k];
        }
        Ok(ClassStats {
            class_id,
            mean,
            std,
            sample_count: self.counts.iter().map(|r| r[class_id] as usize).sum(),
        })
    }

    pub fn energy_column(&self, class_id: usize) -> Vec<f64> {
        self.prototype_energy.iter().map(|r| r[class_id]).collect()
    }

    pub fn report(&self) -> Result<EnergyReport> {
        energy_report(&self.counts, &self.actual_per_building, &self.prototype_energy)
    }
}

/// Outcome of regenerating the bundled tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Reproduction {
    /// Largest endpoint deviation over all regenerated ranges, meters.
    pub max_range_error: f64,
    pub range_endpoints: usize,
    pub report: EnergyReport,
    /// Largest absolute deviation of usages from the published values.
    pub max_usage_error: f64,
    /// Largest deviation of the printed per-type and total percentages,
    /// percentage points.
    pub max_percent_error: f64,
    /// Same, for the unrounded percentages.
    pub max_raw_percent_error: f64,
}

impl Reproduction {
    pub fn passes(&self, range_tol: f64, percent_tol: f64) -> bool {
        self.range_endpoints == 2 * 3 * PROTOTYPES_PER_CLASS * 3
            && self.max_range_error <= range_tol
            && self.max_usage_error == 0.0
            && self.max_percent_error <= percent_tol
    }
}

pub fn reproduce(tables: &ReferenceTables) -> Result<Reproduction> {
    let mut max_range_error: f64 = 0.0;
    let mut endpoints = 0;
    for class_id in 0..tables.class_count() {
        let stats = tables.back_derived_stats(class_id)?;
        let protos = make_prototypes(&stats, &tables.energy_column(class_id))?;
        for p in &protos.prototypes {
            let published = tables.range(class_id, p.index).ok_or_else(|| {
                Error::Lookup(format!("no range for type {class_id} prototype {}", p.index))
            })?;
            for k in 0..3 {
                max_range_error = max_range_error
                    .max((p.low[k] - published.low[k]).abs())
                    .max((p.high[k] - published.high[k]).abs());
                endpoints += 2;
            }
        }
    }
    let report = tables.report()?;
    let mut max_usage_error: f64 = 0.0;
    let mut max_percent_error: f64 = 0.0;
    let mut max_raw_percent_error: f64 = 0.0;
    let published = tables.usage.iter().map(|u| u.2).chain([tables.total_reduction]);
    for (u, &(a, p, _)) in report.classes.iter().zip(&tables.usage) {
        max_usage_error = max_usage_error
            .max((u.actual - a).abs())
            .max((u.prototype - p).abs());
    }
    for (u, r) in report.classes.iter().chain([&report.total]).zip(published) {
        max_percent_error = max_percent_error.max((u.displayed_percent() - r).abs());
        max_raw_percent_error = max_raw_percent_error.max((u.reduction_percent - r).abs());
    }
    Ok(Reproduction {
        max_range_error,
        range_endpoints: endpoints,
        report,
        max_usage_error,
        max_percent_error,
        max_raw_percent_error,
    })
}
