//! Plain-text model checkpoints.
//!
//! ```text
//! ebimgnn-model v1
//! config
//! num_layers = 3
//! ...
//! end
//! init.0.weight 64 4
//! <rows × cols values, row-major>
//! init.0.bias 64 1
//! ...
//! medians 3 3
//! ```
//!
//! Values are written in shortest round-trip form, so a reloaded model is
//! bit-identical. Hidden layers are ReLU and output layers linear.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::config::{config_lines, apply_detector_key};
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Mlp};
use crate::pointgnn::{BoxCoder, Detector, DetectorConfig, GnnLayer};

pub const MAGIC: &str = "ebimgnn-model v1";

fn mlp_blocks(out: &mut String, name: &str, mlp: &Mlp) {
    for (k, layer) in mlp.layers().iter().enumerate() {
        let (rows, cols) = layer.weight.dim();
        let _ = writeln!(out, "{name}.{k}.weight {rows} {cols}");
        for row in layer.weight.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        let _ = writeln!(out, "{name}.{k}.bias {} 1", layer.bias.len());
        for v in &layer.bias {
            let _ = writeln!(out, "{v}");
        }
    }
}

fn mlp_names(detector: &Detector) -> Vec<String> {
    let mut names = vec!["init".to_string()];
    for l in 0..detector.layers.len() {
        names.extend(["f", "g", "h"].map(|m| format!("layer{l}.{m}")));
    }
    names.extend(["cls_head", "loc_head", "proto_head"].map(String::from));
    names
}

pub fn format_checkpoint(detector: &Detector) -> String {
    let mut out = format!("{MAGIC}\nconfig\n");
    for line in config_lines(&detector.config) {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("end\n");
    for (name, mlp) in mlp_names(detector).iter().zip(detector.mlps()) {
        mlp_blocks(&mut out, name, mlp);
    }
    let medians = &detector.coder.medians;
    let _ = writeln!(out, "medians {} 3", medians.len());
    for m in medians {
        let _ = writeln!(out, "{} {} {}", m[0], m[1], m[2]);
    }
    out
}

struct Block {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Reader<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.lines.by_ref() {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn block(&mut self, expected: &str) -> Result<Block> {
        let (line, header) = self
            .next_line()
            .ok_or_else(|| Error::Format(format!("checkpoint ends before `{expected}`")))?;
        let bad = |message: String| Error::Parse { line, message };
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != expected {
            return Err(bad(format!("expected block `{expected}`, found `{header}`")));
        }
        let rows: usize = parts[1].parse().map_err(|_| bad(format!("bad row count `{}`", parts[1])))?;
        let cols: usize = parts[2].parse().map_err(|_| bad(format!("bad column count `{}`", parts[2])))?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (l, text) = self
                .next_line()
                .ok_or_else(|| Error::Format(format!("block `{expected}` is truncated")))?;
            let row: Vec<f64> = text
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        line: l,
                        message: format!("non-numeric value `{v}`"),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(Error::Parse {
                    line: l,
                    message: format!("expected {cols} values, found {}", row.len()),
                });
            }
            values.extend(row);
        }
        Ok(Block { rows, cols, values })
    }
}

fn read_mlp(reader: &mut Reader, name: &str, widths: &[usize]) -> Result<Mlp> {
    let n = widths.len() - 1;
    let mut layers = Vec::with_capacity(n);
    for k in 0..n {
        let w = reader.block(&format!("{name}.{k}.weight"))?;
        if (w.rows, w.cols) != (widths[k + 1], widths[k]) {
            return Err(Error::shape(
                format!("{name}.{k}.weight {}x{}", widths[k + 1], widths[k]),
                format!("{}x{}", w.rows, w.cols),
            ));
        }
        let b = reader.block(&format!("{name}.{k}.bias"))?;
        if (b.rows, b.cols) != (widths[k + 1], 1) {
            return Err(Error::shape(
                format!("{name}.{k}.bias {}x1", widths[k + 1]),
                format!("{}x{}", b.rows, b.cols),
            ));
        }
        layers.push(Dense {
            weight: Array2::from_shape_vec((w.rows, w.cols), w.values).map_err(|e| Error::Format(e.to_string()))?,
            bias: Array1::from(b.values),
            activation: if k + 1 == n { Activation::Identity } else { Activation::Relu },
        });
    }
    Mlp::from_layers(layers)
}

pub fn parse_checkpoint(text: &str) -> Result<Detector> {
    let mut reader = Reader {
        lines: text.lines().enumerate().peekable(),
    };
    match reader.next_line() {
        Some((_, MAGIC)) => {}
        Some((line, other)) => {
            return Err(Error::Parse {
                line,
                message: format!("expected `{MAGIC}`, found `{other}`"),
            })
        }
        None => return Err(Error::Format("empty checkpoint".into())),
    }
    match reader.next_line() {
        Some((_, "config")) => {}
        Some((line, other)) => {
            return Err(Error::Parse {
                line,
                message: format!("expected `config`, found `{other}`"),
            })
        }
        None => return Err(Error::Format("checkpoint has no config block".into())),
    }
    let mut config = DetectorConfig::default();
    loop {
        let (line, text) = reader
            .next_line()
            .ok_or_else(|| Error::Format("config block is not terminated by `end`".into()))?;
        if text == "end" {
            break;
        }
        let (key, value) = text.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, found `{text}`"),
        })?;
        if !apply_detector_key(&mut config, key.trim(), value.trim(), line)? {
            return Err(Error::Parse {
                line,
                message: format!("unknown detector key `{}`", key.trim()),
            });
        }
    }
    config.validate()?;
    let (d, e, hid) = (config.state_width, config.edge_width, config.hidden_width);
    let init = read_mlp(&mut reader, "init", &[3 + config.point_features, hid, d])?;
    let mut layers = Vec::with_capacity(config.num_layers);
    for l in 0..config.num_layers {
        let f = read_mlp(&mut reader, &format!("layer{l}.f"), &[3 + d, hid, e])?;
        let g = read_mlp(&mut reader, &format!("layer{l}.g"), &[e + d, hid, d])?;
        let h = read_mlp(&mut reader, &format!("layer{l}.h"), &[d, hid, 3])?;
        layers.push(GnnLayer::from_parts(f, g, h)?);
    }
    let cls_head = read_mlp(&mut reader, "cls_head", &[d, hid, config.class_count()])?;
    let loc_head = read_mlp(&mut reader, "loc_head", &[d, hid, 7])?;
    let proto_head = read_mlp(
        &mut reader,
        "proto_head",
        &[3 + config.building_types + d, hid, crate::prototypes::PROTOTYPES_PER_CLASS],
    )?;
    let m = reader.block("medians")?;
    if m.cols != 3 || m.rows != config.building_types {
        return Err(Error::shape(
            format!("medians {}x3", config.building_types),
            format!("{}x{}", m.rows, m.cols),
        ));
    }
    let medians: Vec<[f64; 3]> = m.values.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    config.medians = medians.clone();
    let coder = BoxCoder::new(medians, config.yaw_scale)?;
    if let Some((line, extra)) = reader.next_line() {
        return Err(Error::Parse {
            line,
            message: format!("unexpected trailing content `{extra}`"),
        });
    }
    Ok(Detector {
        config,
        coder,
        init,
        layers,
        cls_head,
        loc_head,
        proto_head,
    })
}

pub fn save_checkpoint(detector: &Detector, path: &Path) -> Result<()> {
    std::fs::write(path, format_checkpoint(detector)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Detector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}
