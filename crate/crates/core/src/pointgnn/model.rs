//! The full detector: vertex embedding, stacked graph layers and the three
//! per-vertex heads (class logits, box encoding, prototype logits).

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::DetectorConfig;
use super::encoding::BoxCoder;
use super::layer::GnnLayer;
use super::loss::{
    classification_loss, localization_loss, regularization_loss, regularization_weight_count, total_loss,
    LossBreakdown, LossWeights,
};
use crate::cloud::{GroundTruthBox, PointCloud};
use crate::error::{Error, Result};
use crate::graph::{build_radius_graph, segment_max, vertex_init_inputs, voxel_downsample, RadiusGraph, Voxel};
use crate::nn::{softmax_cross_entropy, Gradients, Mlp};
use crate::prototypes::{match_prototype, PrototypeSet, PROTOTYPES_PER_CLASS};

/// A cloud reduced to the graph the detector runs on.
#[derive(Debug, Clone)]
pub struct PreparedScene {
    pub raw: PointCloud,
    pub voxels: Vec<Voxel>,
    pub graph: RadiusGraph,
    /// Rows `[x_q − x_i, feature_q]` for every raw point, grouped by voxel.
    pub init_inputs: Array2<f64>,
    pub segments: Vec<Range<usize>>,
}

impl PreparedScene {
    pub fn new(raw: PointCloud, voxel_size: f64, radius: f64) -> Result<Self> {
        let (down, voxels) = voxel_downsample(&raw, voxel_size)?;
        let positions: Vec<[f64; 3]> = down.positions().collect();
        let graph = build_radius_graph(&positions, radius)?;
        let (init_inputs, segments) = vertex_init_inputs(&positions, &voxels, &raw)?;
        Ok(Self {
            raw,
            voxels,
            graph,
            init_inputs,
            segments,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.graph.vertex_count()
    }
}

/// Per-vertex supervision derived from labelled boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTargets {
    /// Classifier class: 0 background, `t + 1` for building type `t`.
    pub classes: Vec<usize>,
    /// Index of the containing label.
    pub boxes: Vec<Option<usize>>,
    /// Encoding of the containing (yaw-canonical) box against the vertex.
    pub encodings: Array2<f64>,
    /// 0-based prototype of the containing box.
    pub prototypes: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct TrainingScene {
    pub scene: PreparedScene,
    pub labels: Vec<GroundTruthBox>,
    pub targets: VertexTargets,
}

impl TrainingScene {
    pub fn new(
        scene: PreparedScene,
        labels: Vec<GroundTruthBox>,
        config: &DetectorConfig,
        coder: &BoxCoder,
        prototypes: Option<&PrototypeSet>,
    ) -> Result<Self> {
        let targets = vertex_targets(&scene.graph, &labels, config, coder, prototypes)?;
        Ok(Self {
            scene,
            labels,
            targets,
        })
    }
}

pub fn vertex_targets(
    graph: &RadiusGraph,
    labels: &[GroundTruthBox],
    config: &DetectorConfig,
    coder: &BoxCoder,
    prototypes: Option<&PrototypeSet>,
) -> Result<VertexTargets> {
    let n = graph.vertex_count();
    let mut classes = vec![0; n];
    let mut boxes = vec![None; n];
    let mut encodings = Array2::zeros((n, 7));
    let mut protos = vec![None; n];
    let label_protos = labels
        .iter()
        .enumerate()
        .map(|(i, g)| match prototypes {
            Some(set) => match_prototype(i, g.class_id, &g.bbox, set).map(|m| Some(m.prototype - 1)),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>>>()?;
    for (v, &p) in graph.positions().iter().enumerate() {
        let Some(b) = labels
            .iter()
            .position(|g| g.bbox.contains(p, config.label_margin))
        else {
            continue;
        };
        let label = &labels[b];
        if label.class_id >= config.building_types {
            return Err(Error::Parameter(format!(
                "label class {} outside {} building types",
                label.class_id, config.building_types
            )));
        }
        classes[v] = label.class_id + 1;
        boxes[v] = Some(b);
        let enc = coder.encode(&label.bbox.canonical(), p, label.class_id)?;
        for k in 0..7 {
            encodings[[v, k]] = enc.0[k];
        }
        protos[v] = label_protos[b];
    }
    Ok(VertexTargets {
        classes,
        boxes,
        encodings,
        prototypes: protos,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub config: DetectorConfig,
    pub coder: BoxCoder,
    pub init: Mlp,
    pub layers: Vec<GnnLayer>,
    pub cls_head: Mlp,
    pub loc_head: Mlp,
    pub proto_head: Mlp,
}

/// Per-vertex network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub states: Array2<f64>,
    pub logits: Array2<f64>,
    pub encodings: Array2<f64>,
}

/// Gradients for every MLP, in [`Detector::mlps`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorGradients(pub Vec<Gradients>);

impl DetectorGradients {
    pub fn zeros_like(detector: &Detector) -> Self {
        Self(detector.mlps().into_iter().map(Gradients::zeros_like).collect())
    }

    pub fn add_assign(&mut self, other: &DetectorGradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| g.scale(factor));
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(Gradients::norm_squared).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Gradients::is_finite)
    }
}

impl Detector {
    /// Fresh, seeded parameters. `config.medians` must already be set.
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let coder = BoxCoder::new(config.medians.clone(), config.yaw_scale)?;
        if coder.medians.len() != config.building_types {
            return Err(Error::Config(format!(
                "need median dimensions for {} building types, have {}",
                config.building_types,
                coder.medians.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, hid) = (config.state_width, config.hidden_width);
        let init = Mlp::new(&[3 + config.point_features, hid, d], &mut rng);
        let layers = (0..config.num_layers)
            .map(|_| GnnLayer::new(d, config.edge_width, hid, &mut rng))
            .collect();
        let cls_head = Mlp::new(&[d, hid, config.class_count()], &mut rng);
        let loc_head = Mlp::new(&[d, hid, 7], &mut rng);
        let proto_head = Mlp::new(&[3 + config.building_types + d, hid, PROTOTYPES_PER_CLASS], &mut rng);
        Ok(Self {
            config,
            coder,
            init,
            layers,
            cls_head,
            loc_head,
            proto_head,
        })
    }

    pub fn mlps(&self) -> Vec<&Mlp> {
        let mut out = vec![&self.init];
        for l in &self.layers {
            out.extend([&l.f, &l.g, &l.h]);
        }
        out.extend([&self.cls_head, &self.loc_head, &self.proto_head]);
        out
    }

    pub fn mlps_mut(&mut self) -> Vec<&mut Mlp> {
        let mut out = vec![&mut self.init];
        for l in &mut self.layers {
            out.extend([&mut l.f, &mut l.g, &mut l.h]);
        }
        out.extend([&mut self.cls_head, &mut self.loc_head, &mut self.proto_head]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.mlps().iter().map(|m| m.parameter_count()).sum()
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.config.alpha,
            beta: self.config.beta,
            gamma: self.config.gamma,
            kappa: self.config.kappa,
        }
    }

    fn check_scene(&self, scene: &PreparedScene) -> Result<()> {
        if scene.init_inputs.ncols() != self.init.input_width() {
            return Err(Error::shape(
                format!("point inputs of width {}", self.init.input_width()),
                scene.init_inputs.ncols(),
            ));
        }
        Ok(())
    }

    /// Initial states, every graph layer and both detection heads.
    pub fn forward(&self, scene: &PreparedScene) -> Result<NetworkOutput> {
        self.check_scene(scene)?;
        let embedded = self.init.infer_batch(scene.init_inputs.view())?;
        let (mut states, _) = segment_max(&embedded.view(), &scene.segments);
        for layer in &self.layers {
            states = layer.forward(&scene.graph, states.view(), self.config.literal_edges)?;
        }
        let logits = self.cls_head.infer_batch(states.view())?;
        let encodings = self.loc_head.infer_batch(states.view())?;
        Ok(NetworkOutput {
            states,
            logits,
            encodings,
        })
    }

    /// Prototype-classifier input: decoded log-dimensions, class one-hot and
    /// a (pooled) vertex state.
    pub fn prototype_input(&self, encoding: &[f64], class_id: usize, state: &[f64]) -> Result<Vec<f64>> {
        let m = self.coder.median(class_id)?;
        let types = self.config.building_types;
        let mut input = Vec::with_capacity(3 + types + state.len());
        for k in 0..3 {
            input.push(encoding[3 + k] + m[k].ln());
        }
        input.extend((0..types).map(|t| if t == class_id { 1.0 } else { 0.0 }));
        input.extend_from_slice(state);
        Ok(input)
    }

    pub fn prototype_logits(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.proto_head.infer_batch(inputs)
    }

    fn prototype_rows(&self, targets: &VertexTargets) -> Vec<usize> {
        (0..targets.classes.len())
            .filter(|&i| targets.prototypes[i].is_some())
            .collect()
    }

    fn prototype_batch(
        &self,
        rows: &[usize],
        encodings: &Array2<f64>,
        states: &Array2<f64>,
        targets: &VertexTargets,
    ) -> Result<Array2<f64>> {
        let width = self.proto_head.input_width();
        let mut batch = Array2::zeros((rows.len(), width));
        for (r, &i) in rows.iter().enumerate() {
            let enc = encodings.row(i).to_vec();
            let st = states.row(i).to_vec();
            let input = self.prototype_input(&enc, targets.classes[i] - 1, &st)?;
            batch.row_mut(r).assign(&ndarray::ArrayView1::from(&input));
        }
        Ok(batch)
    }

    /// Loss components without gradients.
    pub fn evaluate(&self, sample: &TrainingScene) -> Result<LossBreakdown> {
        let out = self.forward(&sample.scene)?;
        let t = &sample.targets;
        let (cls, _) = classification_loss(out.logits.view(), &t.classes)?;
        let active: Vec<bool> = t.boxes.iter().map(Option::is_some).collect();
        let (loc, _) = localization_loss(
            out.encodings.view(),
            t.encodings.view(),
            &active,
            self.config.huber_delta,
            self.config.yaw_period(),
        )?;
        let rows = self.prototype_rows(t);
        let mut pro = 0.0;
        if !rows.is_empty() {
            let batch = self.prototype_batch(&rows, &out.encodings, &out.states, t)?;
            let logits = self.proto_head.infer_batch(batch.view())?;
            for (r, &i) in rows.iter().enumerate() {
                let target = t.prototypes[i].expect("row filtered on target");
                pro += softmax_cross_entropy(&logits.row(r).to_vec(), target)?.0;
            }
            pro /= rows.len() as f64;
        }
        let reg = regularization_loss(&self.mlps());
        let total = total_loss(cls, loc, pro, reg, self.weights())?;
        Ok(LossBreakdown {
            classification: cls,
            localization: loc,
            prototype: pro,
            regularization: reg,
            total,
        })
    }

    /// Loss components and exact gradients of the weighted total.
    pub fn loss_and_gradients(&self, sample: &TrainingScene) -> Result<(LossBreakdown, DetectorGradients)> {
        let scene = &sample.scene;
        self.check_scene(scene)?;
        let t = &sample.targets;
        let w = self.weights();
        let literal = self.config.literal_edges;

        let (embedded, init_tape) = self.init.forward_batch(scene.init_inputs.view())?;
        let (mut states, init_winners) = segment_max(&embedded.view(), &scene.segments);
        let mut layer_tapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, tape) = layer.forward_taped(&scene.graph, states.view(), literal)?;
            layer_tapes.push(tape);
            states = next;
        }
        let (logits, cls_tape) = self.cls_head.forward_batch(states.view())?;
        let (encodings, loc_tape) = self.loc_head.forward_batch(states.view())?;

        let (cls, mut d_logits) = classification_loss(logits.view(), &t.classes)?;
        let active: Vec<bool> = t.boxes.iter().map(Option::is_some).collect();
        let (loc, mut d_enc) =
            localization_loss(
            encodings.view(),
            t.encodings.view(),
            &active,
            self.config.huber_delta,
            self.config.yaw_period(),
        )?;
        d_logits *= w.alpha;
        d_enc *= w.beta;

        let mut d_states = Array2::zeros(states.raw_dim());
        let rows = self.prototype_rows(t);
        let mut pro = 0.0;
        let mut proto_grads = Gradients::zeros_like(&self.proto_head);
        if !rows.is_empty() {
            let batch = self.prototype_batch(&rows, &encodings, &states, t)?;
            let (p_logits, p_tape) = self.proto_head.forward_batch(batch.view())?;
            let mut d_p = Array2::zeros(p_logits.raw_dim());
            let scale = 1.0 / rows.len() as f64;
            for (r, &i) in rows.iter().enumerate() {
                let target = t.prototypes[i].expect("row filtered on target");
                let (l, g) = softmax_cross_entropy(&p_logits.row(r).to_vec(), target)?;
                pro += l * scale;
                for (k, v) in g.into_iter().enumerate() {
                    d_p[[r, k]] = w.gamma * v * scale;
                }
            }
            let (g, d_in) = self.proto_head.backward_batch(&p_tape, d_p.view())?;
            proto_grads = g;
            let offset = 3 + self.config.building_types;
            for (r, &i) in rows.iter().enumerate() {
                for k in 0..3 {
                    d_enc[[i, 3 + k]] += d_in[[r, k]];
                }
                let mut row = d_states.row_mut(i);
                row += &d_in.slice(s![r, offset..]);
            }
        }

        let (cls_grads, d_from_cls) = self.cls_head.backward_batch(&cls_tape, d_logits.view())?;
        let (loc_grads, d_from_loc) = self.loc_head.backward_batch(&loc_tape, d_enc.view())?;
        d_states += &d_from_cls;
        d_states += &d_from_loc;

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (layer, tape) in self.layers.iter().zip(&layer_tapes).rev() {
            let (g, d_prev) = layer.backward(&scene.graph, tape, d_states.view(), literal)?;
            layer_grads.push(g);
            d_states = d_prev;
        }
        layer_grads.reverse();

        let mut d_embedded = Array2::zeros(embedded.raw_dim());
        for (v, winners) in init_winners.iter().enumerate() {
            for (c, win) in winners.iter().enumerate() {
                if let Some(row) = *win {
                    d_embedded[[row, c]] += d_states[[v, c]];
                }
            }
        }
        let (init_grads, _) = self.init.backward_batch(&init_tape, d_embedded.view())?;

        let mut grads = vec![init_grads];
        for g in layer_grads {
            grads.extend([g.f, g.g, g.h]);
        }
        grads.extend([cls_grads, loc_grads, proto_grads]);

        let mlps = self.mlps();
        let reg = regularization_loss(&mlps);
        let count = regularization_weight_count(&mlps);
        if count > 0 && w.kappa > 0.0 {
            let scale = w.kappa / count as f64;
            for (g, m) in grads.iter_mut().zip(&mlps) {
                for (gw, layer) in g.weights.iter_mut().zip(m.layers()) {
                    gw.zip_mut_with(&layer.weight, |gv, &wv| *gv += scale * sign(wv));
                }
            }
        }
        let total = total_loss(cls, loc, pro, reg, w)?;
        Ok((
            LossBreakdown {
                classification: cls,
                localization: loc,
                prototype: pro,
                regularization: reg,
                total,
            },
            DetectorGradients(grads),
        ))
    }

    /// Applies `param -= rate * step` to every MLP.
    pub fn apply_step(&mut self, step: &DetectorGradients, rate: f64) {
        for (m, g) in self.mlps_mut().into_iter().zip(&step.0) {
            m.apply_step(g, rate);
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
