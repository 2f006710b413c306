//! Deterministic synthetic building scenes.
//!
//! Each scene is a square region of ground with box-shaped buildings standing
//! on it. Walls and roofs are sampled uniformly at a fixed surface density,
//! the exposed ground at its own density, and a fraction of uniform clutter
//! is mixed in. Every coordinate is rounded to `f32` so a scene written in the
//! binary format reloads bit-for-bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{GroundTruthBox, Point, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::Box7;

const PLACEMENT_RETRIES: usize = 100;
const MIN_DIMENSION: f64 = 0.1;

/// Dimension distribution and appearance of one building type.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildingClassSpec {
    /// Mean (l, h, w) in meters.
    pub mean_dims: [f64; 3],
    /// Standard deviation of (l, h, w) in meters.
    pub std_dims: [f64; 3],
    /// Mean reflectance of the facade material.
    pub reflectance: f64,
    /// Inclusive range of buildings of this type per scene.
    pub count_range: (usize, usize),
    /// Energy usage per building; carried through for reporting.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub classes: Vec<BuildingClassSpec>,
    /// Side length of the square region, centered on the origin.
    pub region_extent: f64,
    /// Points per square meter on walls and roofs.
    pub surface_point_density: f64,
    /// Points per square meter on exposed ground.
    pub ground_point_density: f64,
    /// Fraction of all points that are uniform clutter.
    pub clutter_fraction: f64,
    /// Upper bound of clutter heights.
    pub clutter_height: f64,
    /// Minimum free distance between building footprints.
    pub placement_gap: f64,
    /// Standard deviation of reflectance around each material mean.
    pub reflectance_noise: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            classes: vec![
                BuildingClassSpec {
                    mean_dims: [12.0, 7.0, 9.0],
                    std_dims: [1.2, 0.7, 0.9],
                    reflectance: 0.35,
                    count_range: (1, 2),
                    energy: 40.0,
                },
                BuildingClassSpec {
                    mean_dims: [24.0, 14.0, 11.0],
                    std_dims: [2.0, 1.4, 1.0],
                    reflectance: 0.6,
                    count_range: (0, 1),
                    energy: 10.0,
                },
                BuildingClassSpec {
                    mean_dims: [16.0, 9.0, 14.0],
                    std_dims: [1.5, 0.8, 1.2],
                    reflectance: 0.85,
                    count_range: (0, 1),
                    energy: 20.0,
                },
            ],
            region_extent: 70.0,
            surface_point_density: 0.5,
            ground_point_density: 0.12,
            clutter_fraction: 0.03,
            clutter_height: 3.0,
            placement_gap: 3.0,
            reflectance_noise: 0.04,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("region extent", self.region_extent)?;
        positive("surface point density", self.surface_point_density)?;
        positive("ground point density", self.ground_point_density)?;
        positive("clutter height", self.clutter_height)?;
        if !(0.0..1.0).contains(&self.clutter_fraction) {
            return Err(Error::Config(format!(
                "clutter fraction must lie in [0, 1), got {}",
                self.clutter_fraction
            )));
        }
        if self.placement_gap < 0.0 || self.reflectance_noise < 0.0 {
            return Err(Error::Config("gap and reflectance noise must be >= 0".into()));
        }
        for (c, spec) in self.classes.iter().enumerate() {
            if spec.mean_dims.iter().any(|&d| !(d > 0.0)) {
                return Err(Error::Config(format!("class {c}: mean dimensions must be > 0")));
            }
            if spec.std_dims.iter().any(|&d| d < 0.0) {
                return Err(Error::Config(format!("class {c}: standard deviations must be >= 0")));
            }
            if spec.count_range.0 > spec.count_range.1 {
                return Err(Error::Config(format!("class {c}: empty count range")));
            }
        }
        Ok(())
    }
}

/// Where a generated point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    /// Wall or roof of the label with this index.
    Building(usize),
    Ground,
    Clutter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub cloud: PointCloud,
    pub labels: Vec<GroundTruthBox>,
    pub sources: Vec<PointSource>,
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

/// Rounds to `f32` while staying inside (−π, π].
fn f32_angle(theta: f64) -> f64 {
    let t = theta as f32;
    if t as f64 > PI {
        t.next_down() as f64
    } else if t as f64 <= -PI {
        t.next_up() as f64
    } else {
        t as f64
    }
}

fn stochastic_count(rng: &mut ChaCha8Rng, expected: f64) -> usize {
    let base = expected.floor();
    let extra = if rng.gen::<f64>() < expected - base { 1 } else { 0 };
    base as usize + extra
}

pub fn generate_scene(config: &SceneConfig) -> Result<(PointCloud, Vec<GroundTruthBox>)> {
    let scene = generate_scene_detailed(config)?;
    Ok((scene.cloud, scene.labels))
}

pub fn generate_scene_detailed(config: &SceneConfig) -> Result<Scene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = config.region_extent / 2.0;

    let mut labels: Vec<GroundTruthBox> = Vec::new();
    let mut footprints: Vec<[f64; 4]> = Vec::new();
    for (class_id, spec) in config.classes.iter().enumerate() {
        let count = rng.gen_range(spec.count_range.0..=spec.count_range.1);
        for _ in 0..count {
            let mut dims = [0.0; 3];
            for k in 0..3 {
                let v = if spec.std_dims[k] > 0.0 {
                    Normal::new(spec.mean_dims[k], spec.std_dims[k])
                        .map_err(|e| Error::Config(e.to_string()))?
                        .sample(&mut rng)
                } else {
                    spec.mean_dims[k]
                };
                dims[k] = f32_round(v.max(MIN_DIMENSION));
            }
            let [l, h, w] = dims;
            let mut placed = false;
            for _ in 0..PLACEMENT_RETRIES {
                let theta = f32_angle(PI - 2.0 * PI * rng.gen::<f64>());
                let x = f32_round(rng.gen_range(-half..half));
                let y = f32_round(rng.gen_range(-half..half));
                let bbox = Box7 {
                    x,
                    y,
                    z: f32_round(h / 2.0),
                    l,
                    h,
                    w,
                    theta,
                };
                let fp = bbox.footprint_bounds();
                let inside = fp[0] >= -half && fp[1] >= -half && fp[2] <= half && fp[3] <= half;
                let g = config.placement_gap;
                let clear = footprints.iter().all(|o| {
                    fp[0] > o[2] + g || o[0] > fp[2] + g || fp[1] > o[3] + g || o[1] > fp[3] + g
                });
                if inside && clear {
                    footprints.push(fp);
                    labels.push(GroundTruthBox { class_id, bbox });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Generation(format!(
                    "could not place a class {class_id} building after {PLACEMENT_RETRIES} attempts"
                )));
            }
        }
    }

    let mut points = Vec::new();
    let mut sources = Vec::new();
    let noise = |rng: &mut ChaCha8Rng, mean: f64| -> f64 {
        let n: f64 = rng.sample(rand_distr::StandardNormal);
        (mean + config.reflectance_noise * n).clamp(0.0, 1.0)
    };

    for (idx, gt) in labels.iter().enumerate() {
        let b = &gt.bbox;
        let refl = config.classes[gt.class_id].reflectance;
        let [al, aw, _] = b.axes();
        let at = |u: f64, v: f64, t: f64| {
            [
                b.x + u * al[0] + v * aw[0],
                b.y + u * al[1] + v * aw[1],
                b.z + t,
            ]
        };
        // Faces as (fixed axis, sign, extent of the two free axes).
        let faces: [(usize, f64, f64, f64); 5] = [
            (0, 1.0, b.w, b.h),
            (0, -1.0, b.w, b.h),
            (1, 1.0, b.l, b.h),
            (1, -1.0, b.l, b.h),
            (2, 1.0, b.l, b.w),
        ];
        for (axis, sign, ea, eb) in faces {
            let n = stochastic_count(&mut rng, ea * eb * config.surface_point_density);
            for _ in 0..n {
                let a = (rng.gen::<f64>() - 0.5) * ea;
                let c = (rng.gen::<f64>() - 0.5) * eb;
                let p = match axis {
                    0 => at(sign * b.l / 2.0, a, c),
                    1 => at(a, sign * b.w / 2.0, c),
                    _ => at(a, c, b.h / 2.0),
                };
                let r = noise(&mut rng, refl);
                points.push(Point::new(p.map(f32_round), vec![f32_round(r)]));
                sources.push(PointSource::Building(idx));
            }
        }
    }

    let area = config.region_extent * config.region_extent;
    let ground_candidates = stochastic_count(&mut rng, area * config.ground_point_density);
    for _ in 0..ground_candidates {
        let x = rng.gen_range(-half..half);
        let y = rng.gen_range(-half..half);
        let r = noise(&mut rng, 0.1);
        if labels.iter().any(|g| g.bbox.contains([x, y, g.bbox.z], 0.0)) {
            continue;
        }
        points.push(Point::new(
            [f32_round(x), f32_round(y), 0.0],
            vec![f32_round(r)],
        ));
        sources.push(PointSource::Ground);
    }

    let f = config.clutter_fraction;
    let clutter = ((f / (1.0 - f)) * points.len() as f64).round() as usize;
    for _ in 0..clutter {
        let p = [
            rng.gen_range(-half..half),
            rng.gen_range(-half..half),
            rng.gen_range(0.0..config.clutter_height),
        ];
        let r: f64 = rng.gen();
        points.push(Point::new(p.map(f32_round), vec![f32_round(r)]));
        sources.push(PointSource::Clutter);
    }

    Ok(Scene {
        cloud: PointCloud::from_points(points, 1)?,
        labels,
        sources,
    })
}
