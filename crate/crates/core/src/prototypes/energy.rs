//! Energy usage before and after replacing buildings by their prototypes.

use super::catalog::PROTOTYPES_PER_CLASS;
use crate::error::{Error, Result};

/// Percentage reduction `(E_o − E_p) / E_o × 100`; zero when `E_o` is zero.
pub fn efficiency_gain(actual: f64, prototype: f64) -> Result<f64> {
    if actual < 0.0 || prototype < 0.0 {
        return Err(Error::Parameter(format!(
            "energies must be >= 0, got {actual} and {prototype}"
        )));
    }
    if actual == 0.0 {
        return Ok(0.0);
    }
    Ok((actual - prototype) / actual * 100.0)
}

/// A percentage cut to two decimals, the way published usage tables
/// print them (39.0571 reads as 39.05).
pub fn truncate_hundredths(percent: f64) -> f64 {
    let scaled = percent * 100.0;
    let cut = (scaled.abs() + 1e-9).floor().copysign(scaled);
    cut / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usage {
    pub actual: f64,
    pub prototype: f64,
    pub reduction_percent: f64,
}

impl Usage {
    fn new(actual: f64, prototype: f64) -> Result<Self> {
        Ok(Self {
            actual,
            prototype,
            reduction_percent: efficiency_gain(actual, prototype)?,
        })
    }

    /// Reduction as printed in reports.
    pub fn displayed_percent(&self) -> f64 {
        truncate_hundredths(self.reduction_percent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// One entry per building type, in column order.
    pub classes: Vec<Usage>,
    pub total: Usage,
    /// `counts[k][b]`: buildings of type `b` matched to prototype `k + 1`.
    pub counts: Vec<Vec<u64>>,
}

/// Builds the report from per-prototype counts.
///
/// `counts` and `prototype_energies` are 5 × B (prototype-major);
/// `actual_per_building` has one entry per building type.
pub fn energy_report(
    counts: &[Vec<u64>],
    actual_per_building: &[f64],
    prototype_energies: &[Vec<f64>],
) -> Result<EnergyReport> {
    let types = actual_per_building.len();
    if counts.len() != PROTOTYPES_PER_CLASS || prototype_energies.len() != PROTOTYPES_PER_CLASS {
        return Err(Error::Parameter(format!(
            "expected {PROTOTYPES_PER_CLASS} prototype rows, got {} counts and {} energies",
            counts.len(),
            prototype_energies.len()
        )));
    }
    if counts.iter().any(|r| r.len() != types) || prototype_energies.iter().any(|r| r.len() != types) {
        return Err(Error::Parameter(format!(
            "every row must have {types} building-type columns"
        )));
    }
    let mut classes = Vec::with_capacity(types);
    for b in 0..types {
        let buildings: u64 = counts.iter().map(|r| r[b]).sum();
        let actual = buildings as f64 * actual_per_building[b];
        let proto: f64 = (0..PROTOTYPES_PER_CLASS)
            .map(|k| counts[k][b] as f64 * prototype_energies[k][b])
            .sum();
        classes.push(Usage::new(actual, proto)?);
    }
    let total_actual = classes.iter().map(|u| u.actual).sum();
    let total_proto = classes.iter().map(|u| u.prototype).sum();
    Ok(EnergyReport {
        classes,
        total: Usage::new(total_actual, total_proto)?,
        counts: counts.to_vec(),
    })
}

/// Tallies 1-based prototype assignments into a 5 × `types` count matrix.
pub fn count_matches(assignments: &[(usize, usize)], types: usize) -> Result<Vec<Vec<u64>>> {
    let mut counts = vec![vec![0u64; types]; PROTOTYPES_PER_CLASS];
    for &(class, proto) in assignments {
        if class >= types || !(1..=PROTOTYPES_PER_CLASS).contains(&proto) {
            return Err(Error::Parameter(format!(
                "assignment (type {class}, prototype {proto}) out of range"
            )));
        }
        counts[proto - 1][class] += 1;
    }
    Ok(counts)
}

impl EnergyReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("buildingType,actualUsage,prototypeUsage,reductionPercent\n");
        for (b, u) in self.classes.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:.2}\n",
                b + 1,
                u.actual,
                u.prototype,
                u.displayed_percent()
            ));
        }
        out.push_str(&format!(
            "total,{},{},{:.2}\n",
            self.total.actual, self.total.prototype, self.total.displayed_percent()
        ));
        out
    }

    /// Aligned plain-text table with percentages cut to two decimals.
    pub fn to_table(&self) -> String {
        let header = ["Building type", "Actual usage", "Prototype usage", "Red. in usage (%)"];
        let mut rows: Vec<[String; 4]> = self
            .classes
            .iter()
            .enumerate()
            .map(|(b, u)| {
                [
                    format!("Building type {}", b + 1),
                    format!("{}", u.actual),
                    format!("{}", u.prototype),
                    format!("{:.2}", u.displayed_percent()),
                ]
            })
            .collect();
        rows.push([
            "Total".into(),
            format!("{}", self.total.actual),
            format!("{}", self.total.prototype),
            format!("{:.2}", self.total.displayed_percent()),
        ]);
        let mut widths = header.map(str::len);
        for r in &rows {
            for k in 0..4 {
                widths[k] = widths[k].max(r[k].len());
            }
        }
        let mut out = format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
            header[0],
            header[1],
            header[2],
            header[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        );
        for r in rows {
            out.push_str(&format!(
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
                r[0],
                r[1],
                r[2],
                r[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            ));
        }
        out
    }
}
