//! Point clouds, ground-truth labels and their on-disk formats.
//!
//! The binary format is the velodyne scan layout: little-endian `f32`
//! records of `[x, y, z, reflectance]`, 16 bytes per point, no header.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Box7};

const RECORD_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub position: [f64; 3],
    pub feature: Vec<f64>,
}

impl Point {
    pub fn new(position: [f64; 3], feature: Vec<f64>) -> Self {
        Self { position, feature }
    }
}

/// An ordered set of points sharing one feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    feature_width: usize,
}

impl PointCloud {
    pub fn new(feature_width: usize) -> Self {
        Self {
            points: Vec::new(),
            feature_width,
        }
    }

    pub fn from_points(points: Vec<Point>, feature_width: usize) -> Result<Self> {
        let mut cloud = Self::new(feature_width);
        for p in points {
            cloud.push(p)?;
        }
        Ok(cloud)
    }

    pub fn push(&mut self, point: Point) -> Result<()> {
        if point.feature.len() != self.feature_width {
            return Err(Error::shape(
                format!("feature width {}", self.feature_width),
                point.feature.len(),
            ));
        }
        if point.position.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite coordinate {:?}",
                point.position
            )));
        }
        self.points.push(point);
        Ok(())
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.points.iter().map(|p| p.position)
    }

    /// Returns a copy shifted by `offset`.
    pub fn translated(&self, offset: [f64; 3]) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| {
                Point::new(
                    [
                        p.position[0] + offset[0],
                        p.position[1] + offset[1],
                        p.position[2] + offset[2],
                    ],
                    p.feature.clone(),
                )
            })
            .collect();
        Self {
            points,
            feature_width: self.feature_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// Little-endian `f32` x, y, z, reflectance.
    BinaryXyzr,
    /// `x,y,z,f0,f1,...` text rows.
    Csv,
}

impl CloudFormat {
    /// Guesses the format from a file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CloudFormat::Csv,
            _ => CloudFormat::BinaryXyzr,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary-xyzr" | "bin" => Ok(CloudFormat::BinaryXyzr),
            "csv" => Ok(CloudFormat::Csv),
            other => Err(Error::Parameter(format!("unknown cloud format `{other}`"))),
        }
    }
}

pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::BinaryXyzr => decode_binary(&bytes),
        CloudFormat::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
            parse_cloud_csv(&text)
        }
    }
}

/// Writes `cloud` to `path`. The binary format stores `f32`, so only
/// single-precision-representable clouds survive a binary round trip exactly.
pub fn save_point_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::BinaryXyzr => encode_binary(cloud)?,
        CloudFormat::Csv => format_cloud_csv(cloud).into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn decode_binary(bytes: &[u8]) -> Result<PointCloud> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(Error::Format(format!(
            "binary cloud length {} is not a multiple of {RECORD_BYTES} bytes",
            bytes.len()
        )));
    }
    let mut cloud = PointCloud::new(1);
    cloud.points.reserve(bytes.len() / RECORD_BYTES);
    for record in bytes.chunks_exact(RECORD_BYTES) {
        let mut v = [0f64; 4];
        for (k, chunk) in record.chunks_exact(4).enumerate() {
            v[k] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64;
        }
        cloud.push(Point::new([v[0], v[1], v[2]], vec![v[3]]))?;
    }
    Ok(cloud)
}

pub fn encode_binary(cloud: &PointCloud) -> Result<Vec<u8>> {
    if cloud.feature_width != 1 {
        return Err(Error::shape("feature width 1 for binary-xyzr", cloud.feature_width));
    }
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in &cloud.points {
        for v in [p.position[0], p.position[1], p.position[2], p.feature[0]] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line))
        }
    })
}

fn parse_cells(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|cell| {
            let cell = cell.trim();
            cell.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric cell `{cell}`"),
            })
        })
        .collect()
}

pub fn parse_cloud_csv(text: &str) -> Result<PointCloud> {
    let mut cloud: Option<PointCloud> = None;
    for (line_no, line) in data_lines(text) {
        if cloud.is_none() && line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            // header row
            continue;
        }
        let cells = parse_cells(line, line_no)?;
        if cells.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 3 columns, found {}", cells.len()),
            });
        }
        let c = cloud.get_or_insert_with(|| PointCloud::new(cells.len() - 3));
        if cells.len() - 3 != c.feature_width {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} columns, found {}",
                    c.feature_width + 3,
                    cells.len()
                ),
            });
        }
        c.push(Point::new([cells[0], cells[1], cells[2]], cells[3..].to_vec()))
            .map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
    }
    Ok(cloud.unwrap_or_else(|| PointCloud::new(1)))
}

pub fn format_cloud_csv(cloud: &PointCloud) -> String {
    let mut out = String::from("x,y,z");
    for k in 0..cloud.feature_width {
        out.push_str(&format!(",f{k}"));
    }
    out.push('\n');
    for p in &cloud.points {
        let mut row: Vec<String> = p.position.iter().map(|v| v.to_string()).collect();
        row.extend(p.feature.iter().map(|v| v.to_string()));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// A labelled box. `class_id` counts building types from zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    pub class_id: usize,
    pub bbox: Box7,
}

pub fn load_labels(path: &Path) -> Result<Vec<GroundTruthBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<Vec<GroundTruthBox>> {
    let mut out = Vec::new();
    for (line_no, line) in data_lines(text) {
        if out.is_empty() && line.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let cells = parse_cells(line, line_no)?;
        if cells.len() != 8 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 8 columns, found {}", cells.len()),
            });
        }
        let class = cells[0];
        if class < 0.0 || class.fract() != 0.0 {
            return Err(Error::Validation {
                row: line_no,
                message: format!("class id {class} is not a non-negative integer"),
            });
        }
        for (name, v) in [("l", cells[4]), ("h", cells[5]), ("w", cells[6])] {
            if !(v > 0.0) {
                return Err(Error::Validation {
                    row: line_no,
                    message: format!("dimension {name} = {v} must be positive"),
                });
            }
        }
        if cells.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                row: line_no,
                message: "non-finite value".into(),
            });
        }
        out.push(GroundTruthBox {
            class_id: class as usize,
            bbox: Box7 {
                x: cells[1],
                y: cells[2],
                z: cells[3],
                l: cells[4],
                h: cells[5],
                w: cells[6],
                theta: normalize_angle(cells[7]),
            },
        });
    }
    Ok(out)
}

pub fn format_labels(labels: &[GroundTruthBox]) -> String {
    let mut out = String::from("classId,x,y,z,l,h,w,theta\n");
    for g in labels {
        let b = &g.bbox;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            g.class_id, b.x, b.y, b.z, b.l, b.h, b.w, b.theta
        ));
    }
    out
}

pub fn save_labels(labels: &[GroundTruthBox], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_labels(labels).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_record_decodes() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let cloud = decode_binary(&bytes).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points()[0].position, [1.0, 2.0, 3.0]);
        assert_eq!(cloud.points()[0].feature, vec![0.5]);
    }

    #[test]
    fn empty_file_is_empty_cloud() {
        let cloud = decode_binary(&[]).unwrap();
        assert!(cloud.is_empty());
        assert_eq!(cloud.feature_width(), 1);
    }

    #[test]
    fn truncated_binary_is_format_error() {
        assert!(matches!(decode_binary(&[0u8; 17]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_bad_cell_reports_line() {
        let err = parse_cloud_csv("x,y,z,f0\n1,2,3,4\n1,two,3,4\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn label_row_parses() {
        let labels = parse_labels("0,0,0,0,4,1.5,1.6,0").unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].class_id, 0);
        assert_eq!(labels[0].bbox, Box7::new(0.0, 0.0, 0.0, 4.0, 1.5, 1.6, 0.0));
    }

    #[test]
    fn negative_length_rejected_with_row() {
        let err = parse_labels("# c\n0,0,0,0,-1,1.5,1.6,0").unwrap_err();
        assert!(matches!(err, Error::Validation { row: 2, .. }), "{err}");
    }

    #[test]
    fn label_yaw_is_normalized() {
        let text = format!("classId,x,y,z,l,h,w,theta\n1,0,0,0,4,1.5,1.6,{}", 3.0 * PI / 2.0);
        let labels = parse_labels(&text).unwrap();
        assert!((labels[0].bbox.theta + PI / 2.0).abs() < 1e-12);
    }
}
