//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; unknown
//! keys and malformed values are errors carrying the line number. Lists are
//! comma separated. Per-class scene keys (`class.K.mean`, ...) refer to
//! classes that already exist, so set `scene_classes` first when adding
//! classes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::cloud::CloudFormat;
use crate::error::{Error, Result};
use crate::pointgnn::DetectorConfig;
use crate::scene::SceneConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub detector: DetectorConfig,
    pub scene: SceneConfig,
    /// Scenes written by `gen`.
    pub scenes: usize,
    pub cloud_format: CloudFormat,
    /// Five prototype energies per building type.
    pub prototype_energies: BTreeMap<usize, Vec<f64>>,
    /// Matching coefficients for (l, h, w).
    pub phi: Vec<f64>,
}

impl Default for Config {
    fn default() -> Self {
        let scene = SceneConfig::default();
        let prototype_energies = crate::pointgnn::reference_energies(scene.classes.len())
            .expect("bundled reference tables parse");
        Self {
            seed: 0,
            detector: DetectorConfig {
                building_types: scene.classes.len(),
                ..crate::pointgnn::benchmark_detector_config()
            },
            scene,
            scenes: 10,
            cloud_format: CloudFormat::BinaryXyzr,
            prototype_energies,
            phi: vec![1.0; 3],
        }
    }
}

fn parse_value<T: FromStr>(value: &str, line: usize, key: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("malformed value `{value}` for `{key}`"),
    })
}

fn parse_list(value: &str, line: usize, key: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let v = value
        .split(',')
        .map(|c| parse_value::<f64>(c.trim(), line, key))
        .collect::<Result<Vec<_>>>()?;
    if let Some(n) = len {
        if v.len() != n {
            return Err(Error::Parse {
                line,
                message: format!("`{key}` takes {n} values, found {}", v.len()),
            });
        }
    }
    Ok(v)
}

fn parse_bool(value: &str, line: usize, key: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse {
            line,
            message: format!("malformed boolean `{value}` for `{key}`"),
        }),
    }
}

fn list_text(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Sets one detector key. Returns `false` for keys the detector does not own.
pub fn apply_detector_key(c: &mut DetectorConfig, key: &str, value: &str, line: usize) -> Result<bool> {
    macro_rules! set {
        ($field:ident) => {
            c.$field = parse_value(value, line, key)?
        };
    }
    match key {
        "point_features" => set!(point_features),
        "num_layers" => set!(num_layers),
        "state_width" => set!(state_width),
        "edge_width" => set!(edge_width),
        "hidden_width" => set!(hidden_width),
        "building_types" => set!(building_types),
        "voxel_size" => set!(voxel_size),
        "radius" => set!(radius),
        "yaw_scale" => set!(yaw_scale),
        "alpha" => set!(alpha),
        "beta" => set!(beta),
        "gamma" => set!(gamma),
        "kappa" => set!(kappa),
        "huber_delta" => set!(huber_delta),
        "nms_iou" => set!(nms_iou),
        "score_threshold" => set!(score_threshold),
        "learning_rate" => set!(learning_rate),
        "momentum" => set!(momentum),
        "lr_decay" => set!(lr_decay),
        "epochs" => set!(epochs),
        "batch_size" => set!(batch_size),
        "grad_clip" => set!(grad_clip),
        "detector_seed" => set!(seed),
        "label_margin" => set!(label_margin),
        "literal_edges" => c.literal_edges = parse_bool(value, line, key)?,
        "periodic_yaw" => c.periodic_yaw = parse_bool(value, line, key)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Detector settings as `key = value` lines, medians excluded.
pub fn config_lines(c: &DetectorConfig) -> Vec<String> {
    let pairs: Vec<(&str, String)> = vec![
        ("point_features", c.point_features.to_string()),
        ("num_layers", c.num_layers.to_string()),
        ("state_width", c.state_width.to_string()),
        ("edge_width", c.edge_width.to_string()),
        ("hidden_width", c.hidden_width.to_string()),
        ("building_types", c.building_types.to_string()),
        ("voxel_size", c.voxel_size.to_string()),
        ("radius", c.radius.to_string()),
        ("yaw_scale", c.yaw_scale.to_string()),
        ("alpha", c.alpha.to_string()),
        ("beta", c.beta.to_string()),
        ("gamma", c.gamma.to_string()),
        ("kappa", c.kappa.to_string()),
        ("huber_delta", c.huber_delta.to_string()),
        ("nms_iou", c.nms_iou.to_string()),
        ("score_threshold", c.score_threshold.to_string()),
        ("learning_rate", c.learning_rate.to_string()),
        ("momentum", c.momentum.to_string()),
        ("lr_decay", c.lr_decay.to_string()),
        ("epochs", c.epochs.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("grad_clip", c.grad_clip.to_string()),
        ("detector_seed", c.seed.to_string()),
        ("label_margin", c.label_margin.to_string()),
        ("literal_edges", c.literal_edges.to_string()),
        ("periodic_yaw", c.periodic_yaw.to_string()),
    ];
    pairs.into_iter().map(|(k, v)| format!("{k} = {v}")).collect()
}

fn pair(k: impl Display, v: impl Display) -> String {
    format!("{k} = {v}")
}

impl Config {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        if apply_detector_key(&mut self.detector, key, value, line)? {
            return Ok(());
        }
        if key == "seed" {
            let seed = parse_value(value, line, key)?;
            *self = std::mem::take(self).with_seed(seed);
            return Ok(());
        }
        let s = &mut self.scene;
        match key {
            "scenes" => self.scenes = parse_value(value, line, key)?,
            "cloud_format" => {
                self.cloud_format = value.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("unknown cloud format `{value}`"),
                })?
            }
            "phi" => self.phi = parse_list(value, line, key, Some(3))?,
            "region_extent" => s.region_extent = parse_value(value, line, key)?,
            "surface_point_density" => s.surface_point_density = parse_value(value, line, key)?,
            "ground_point_density" => s.ground_point_density = parse_value(value, line, key)?,
            "clutter_fraction" => s.clutter_fraction = parse_value(value, line, key)?,
            "clutter_height" => s.clutter_height = parse_value(value, line, key)?,
            "placement_gap" => s.placement_gap = parse_value(value, line, key)?,
            "reflectance_noise" => s.reflectance_noise = parse_value(value, line, key)?,
            "scene_classes" => {
                let n: usize = parse_value(value, line, key)?;
                let defaults = SceneConfig::default().classes;
                while s.classes.len() < n {
                    let k = s.classes.len();
                    s.classes.push(defaults[k % defaults.len()].clone());
                }
                s.classes.truncate(n);
            }
            _ => return self.set_indexed(key, value, line),
        }
        Ok(())
    }

    fn set_indexed(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let unknown = || Error::Parse {
            line,
            message: format!("unknown key `{key}`"),
        };
        let parts: Vec<&str> = key.split('.').collect();
        let index = |p: &str| -> Result<usize> { p.parse().map_err(|_| unknown()) };
        match parts.as_slice() {
            ["prototype_energies", k] => {
                let k = index(k)?;
                self.prototype_energies.insert(k, parse_list(value, line, key, Some(5))?);
            }
            ["class", k, field] => {
                let k = index(k)?;
                let n = self.scene.classes.len();
                let spec = self.scene.classes.get_mut(k).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("class {k} does not exist ({n} scene classes); set `scene_classes` first"),
                })?;
                match *field {
                    "mean" => {
                        let v = parse_list(value, line, key, Some(3))?;
                        spec.mean_dims = [v[0], v[1], v[2]];
                    }
                    "std" => {
                        let v = parse_list(value, line, key, Some(3))?;
                        spec.std_dims = [v[0], v[1], v[2]];
                    }
                    "reflectance" => spec.reflectance = parse_value(value, line, key)?,
                    "energy" => spec.energy = parse_value(value, line, key)?,
                    "count" => {
                        let v = parse_list(value, line, key, Some(2))?;
                        if v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
                            return Err(Error::Parse {
                                line,
                                message: format!("`{key}` takes two non-negative integers"),
                            });
                        }
                        spec.count_range = (v[0] as usize, v[1] as usize);
                    }
                    _ => return Err(unknown()),
                }
            }
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Checks every section against its own preconditions.
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.scene.validate()?;
        if self.phi.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config("phi coefficients must be >= 0".into()));
        }
        for (k, e) in &self.prototype_energies {
            if e.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config(format!("prototype energies of type {k} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Canonical listing of every setting, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut lines = vec![pair("seed", self.seed), pair("scenes", self.scenes)];
        lines.push(pair(
            "cloud_format",
            match self.cloud_format {
                CloudFormat::BinaryXyzr => "binary-xyzr",
                CloudFormat::Csv => "csv",
            },
        ));
        lines.push(pair("phi", list_text(&self.phi)));
        lines.extend(config_lines(&self.detector));
        let s = &self.scene;
        lines.push(pair("region_extent", s.region_extent));
        lines.push(pair("surface_point_density", s.surface_point_density));
        lines.push(pair("ground_point_density", s.ground_point_density));
        lines.push(pair("clutter_fraction", s.clutter_fraction));
        lines.push(pair("clutter_height", s.clutter_height));
        lines.push(pair("placement_gap", s.placement_gap));
        lines.push(pair("reflectance_noise", s.reflectance_noise));
        lines.push(pair("scene_classes", s.classes.len()));
        for (k, c) in s.classes.iter().enumerate() {
            lines.push(pair(format!("class.{k}.mean"), list_text(&c.mean_dims)));
            lines.push(pair(format!("class.{k}.std"), list_text(&c.std_dims)));
            lines.push(pair(format!("class.{k}.reflectance"), c.reflectance));
            lines.push(pair(format!("class.{k}.count"), format!("{}, {}", c.count_range.0, c.count_range.1)));
            lines.push(pair(format!("class.{k}.energy"), c.energy));
        }
        for (k, e) in &self.prototype_energies {
            lines.push(pair(format!("prototype_energies.{k}"), list_text(e)));
        }
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }

    /// First 16 hex digits of the SHA-256 of [`Config::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Sets the run seed and copies it into the scene and detector settings.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.scene.seed = seed;
        self.detector.seed = seed;
        self
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut config = Config::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        config.set(key.trim(), value.trim(), i + 1)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
