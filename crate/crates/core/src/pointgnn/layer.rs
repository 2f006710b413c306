//! One graph layer with auto-registration.
//!
//! For every vertex `i`:
//!
//! ```text
//! Δx_i   = h(s_i)
//! e_ij   = f([x_j − x_i + Δx_i, s_j])
//! s_i'   = g([max_j e_ij, s_i]) + s_i
//! ```
//!
//! The layer reads only the previous states, so vertex order never affects
//! the result. With `literal_edges` the edge input is `[x_j − x_i, s_i]`
//! instead and `h` is not used.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{segment_max, RadiusGraph};
use crate::nn::{Gradients, Mlp, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayer {
    /// Edge MLP, input `3 + state`, output `edge`.
    pub f: Mlp,
    /// Vertex update MLP, input `edge + state`, output `state`.
    pub g: Mlp,
    /// Offset MLP, input `state`, output 3.
    pub h: Mlp,
}

#[derive(Debug, Clone)]
pub struct LayerTape {
    f: Tape,
    g: Tape,
    h: Option<Tape>,
    winners: Vec<Vec<Option<usize>>>,
    /// Relative edge coordinates fed to `f`.
    rel: Array2<f64>,
    states: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub f: Gradients,
    pub g: Gradients,
    pub h: Gradients,
}

impl LayerGradients {
    pub fn zeros_like(layer: &GnnLayer) -> Self {
        Self {
            f: Gradients::zeros_like(&layer.f),
            g: Gradients::zeros_like(&layer.g),
            h: Gradients::zeros_like(&layer.h),
        }
    }
}

impl GnnLayer {
    pub fn new<R: Rng + ?Sized>(
        state_width: usize,
        edge_width: usize,
        hidden_width: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            f: Mlp::new(&[3 + state_width, hidden_width, edge_width], rng),
            g: Mlp::new(&[edge_width + state_width, hidden_width, state_width], rng),
            h: Mlp::new(&[state_width, hidden_width, 3], rng),
        }
    }

    pub fn from_parts(f: Mlp, g: Mlp, h: Mlp) -> Result<Self> {
        let layer = Self { f, g, h };
        layer.validate()?;
        Ok(layer)
    }

    pub fn state_width(&self) -> usize {
        self.h.input_width()
    }

    pub fn edge_width(&self) -> usize {
        self.f.output_width()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.state_width();
        if self.h.output_width() != 3 {
            return Err(Error::shape("offset MLP output width 3", self.h.output_width()));
        }
        if self.f.input_width() != 3 + d {
            return Err(Error::shape(format!("edge MLP input width {}", 3 + d), self.f.input_width()));
        }
        if self.g.input_width() != self.edge_width() + d {
            return Err(Error::shape(
                format!("update MLP input width {}", self.edge_width() + d),
                self.g.input_width(),
            ));
        }
        if self.g.output_width() != d {
            return Err(Error::shape(format!("update MLP output width {d}"), self.g.output_width()));
        }
        Ok(())
    }

    fn check_states(&self, graph: &RadiusGraph, states: &ArrayView2<f64>) -> Result<()> {
        if states.dim() != (graph.vertex_count(), self.state_width()) {
            return Err(Error::shape(
                format!("states {}x{}", graph.vertex_count(), self.state_width()),
                format!("{}x{}", states.nrows(), states.ncols()),
            ));
        }
        Ok(())
    }

    /// Source vertex of the state carried by edge slot `e` out of vertex `i`.
    fn source(graph: &RadiusGraph, i: usize, e: usize, literal: bool) -> usize {
        if literal {
            i
        } else {
            graph.neighbor_at(e)
        }
    }

    /// Relative coordinates `x_j − x_i (+ Δx_i)` per edge slot.
    fn relative_positions(graph: &RadiusGraph, offsets: Option<&Array2<f64>>) -> Array2<f64> {
        let pos = graph.positions();
        let mut rel = Array2::zeros((graph.directed_edge_count(), 3));
        for i in 0..graph.vertex_count() {
            for e in graph.edge_slots(i) {
                let j = graph.neighbor_at(e);
                for k in 0..3 {
                    let shift = offsets.map_or(0.0, |o| o[[i, k]]);
                    rel[[e, k]] = pos[j][k] - pos[i][k] + shift;
                }
            }
        }
        rel
    }

    /// First-layer pre-activation of `f` for every edge. The state part of
    /// the product is computed once per vertex and gathered.
    fn edge_preactivation(
        &self,
        graph: &RadiusGraph,
        states: &ArrayView2<f64>,
        rel: &Array2<f64>,
        literal: bool,
    ) -> Array2<f64> {
        let first = &self.f.layers()[0];
        let w = &first.weight;
        let per_vertex = states.dot(&w.slice(s![.., 3..]).t());
        let mut z = rel.dot(&w.slice(s![.., ..3]).t());
        for i in 0..graph.vertex_count() {
            for e in graph.edge_slots(i) {
                let src = Self::source(graph, i, e, literal);
                let mut row = z.row_mut(e);
                row += &per_vertex.row(src);
                row += &first.bias;
            }
        }
        z
    }

    fn segments(graph: &RadiusGraph) -> Vec<std::ops::Range<usize>> {
        (0..graph.vertex_count()).map(|i| graph.edge_slots(i)).collect()
    }

    fn update_inputs(aggregate: &Array2<f64>, states: &ArrayView2<f64>) -> Array2<f64> {
        let v = states.nrows();
        let de = aggregate.ncols();
        let mut input = Array2::zeros((v, de + states.ncols()));
        input.slice_mut(s![.., ..de]).assign(aggregate);
        input.slice_mut(s![.., de..]).assign(states);
        input
    }

    /// Next-layer states.
    pub fn forward(&self, graph: &RadiusGraph, states: ArrayView2<f64>, literal: bool) -> Result<Array2<f64>> {
        Ok(self.forward_taped(graph, states, literal)?.0)
    }

    /// Forward pass that keeps what [`GnnLayer::backward`] needs.
    pub fn forward_taped(
        &self,
        graph: &RadiusGraph,
        states: ArrayView2<f64>,
        literal: bool,
    ) -> Result<(Array2<f64>, LayerTape)> {
        self.check_states(graph, &states)?;
        let (offsets, h_tape) = if literal {
            (None, None)
        } else {
            let (o, t) = self.h.forward_batch(states)?;
            (Some(o), Some(t))
        };
        let rel = Self::relative_positions(graph, offsets.as_ref());
        let z = self.edge_preactivation(graph, &states, &rel, literal);
        let (messages, f_tape) = self.f.forward_from_preactivation(z)?;
        let (aggregate, winners) = segment_max(&messages.view(), &Self::segments(graph));
        let (update, g_tape) = self
            .g
            .forward_batch(Self::update_inputs(&aggregate, &states).view())?;
        Ok((
            update + states,
            LayerTape {
                f: f_tape,
                g: g_tape,
                h: h_tape,
                winners,
                rel,
                states: states.to_owned(),
            },
        ))
    }

    /// Gradients of `sum(out ⊙ upstream)` for the parameters and the input states.
    pub fn backward(
        &self,
        graph: &RadiusGraph,
        tape: &LayerTape,
        upstream: ArrayView2<f64>,
        literal: bool,
    ) -> Result<(LayerGradients, Array2<f64>)> {
        let de = self.edge_width();
        let mut d_states = upstream.to_owned();

        let (g_grads, d_update_in) = self.g.backward_batch(&tape.g, upstream)?;
        let d_aggregate = d_update_in.slice(s![.., ..de]);
        d_states += &d_update_in.slice(s![.., de..]);

        let mut d_messages = Array2::zeros((tape.rel.nrows(), de));
        for (i, winners) in tape.winners.iter().enumerate() {
            for (c, w) in winners.iter().enumerate() {
                if let Some(e) = *w {
                    d_messages[[e, c]] += d_aggregate[[i, c]];
                }
            }
        }
        let (mut f_grads, dz) = self.f.backward_to_preactivation(&tape.f, d_messages.view())?;

        let w = &self.f.layers()[0].weight;
        let hidden = w.nrows();
        let mut d_per_vertex = Array2::zeros((graph.vertex_count(), hidden));
        for i in 0..graph.vertex_count() {
            for e in graph.edge_slots(i) {
                let src = Self::source(graph, i, e, literal);
                let mut row = d_per_vertex.row_mut(src);
                row += &dz.row(e);
            }
        }
        f_grads.weights[0]
            .slice_mut(s![.., ..3])
            .assign(&dz.t().dot(&tape.rel));
        f_grads.weights[0]
            .slice_mut(s![.., 3..])
            .assign(&d_per_vertex.t().dot(&tape.states));
        d_states += &d_per_vertex.dot(&w.slice(s![.., 3..]));

        let h_grads = match &tape.h {
            Some(h_tape) => {
                let d_rel = dz.dot(&w.slice(s![.., ..3]));
                let mut d_offsets = Array2::zeros((graph.vertex_count(), 3));
                for i in 0..graph.vertex_count() {
                    for e in graph.edge_slots(i) {
                        let mut row = d_offsets.row_mut(i);
                        row += &d_rel.row(e);
                    }
                }
                let (g, d_in) = self.h.backward_batch(h_tape, d_offsets.view())?;
                d_states += &d_in;
                g
            }
            None => Gradients::zeros_like(&self.h),
        };
        Ok((
            LayerGradients {
                f: f_grads,
                g: g_grads,
                h: h_grads,
            },
            d_states,
        ))
    }
}

