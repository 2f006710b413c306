//! Voxel downsampling, radius-graph construction and initial vertex states.

use std::collections::HashMap;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Result};
use crate::nn::{max_rows, Mlp};

/// An occupied voxel of the downsampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    pub index: [i64; 3],
    pub centroid: [f64; 3],
    /// Indices into the raw cloud, in cloud order.
    pub members: Vec<usize>,
}

pub fn voxel_index(p: [f64; 3], voxel_size: f64) -> [i64; 3] {
    p.map(|c| (c / voxel_size).floor() as i64)
}

/// Replaces the points of each occupied voxel by their centroid and mean
/// feature. Voxels are emitted in order of first occupancy.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<(PointCloud, Vec<Voxel>)> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::Parameter(format!("voxel size must be > 0, got {voxel_size}")));
    }
    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut voxels: Vec<Voxel> = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = voxel_index(p.position, voxel_size);
        let slot = *slots.entry(key).or_insert_with(|| {
            voxels.push(Voxel {
                index: key,
                centroid: [0.0; 3],
                members: Vec::new(),
            });
            voxels.len() - 1
        });
        voxels[slot].members.push(i);
    }

    let width = cloud.feature_width();
    let mut out = PointCloud::new(width);
    for v in &mut voxels {
        let n = v.members.len() as f64;
        let mut sum = [0.0; 3];
        let mut feat = vec![0.0; width];
        for &m in &v.members {
            let p = &cloud.points()[m];
            for k in 0..3 {
                sum[k] += p.position[k];
            }
            for (f, &x) in feat.iter_mut().zip(&p.feature) {
                *f += x;
            }
        }
        v.centroid = sum.map(|s| s / n);
        feat.iter_mut().for_each(|f| *f /= n);
        out.push(Point::new(v.centroid, feat))?;
    }
    Ok((out, voxels))
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Undirected graph over vertex positions, one edge per pair within `radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusGraph {
    positions: Vec<[f64; 3]>,
    /// Unordered pairs stored as `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    radius: f64,
    offsets: Vec<usize>,
    adjacency: Vec<usize>,
}

impl RadiusGraph {
    fn from_edges(positions: Vec<[f64; 3]>, mut edges: Vec<(usize, usize)>, radius: f64) -> Self {
        edges.sort_unstable();
        let n = positions.len();
        let mut degree = vec![0usize; n];
        for &(i, j) in &edges {
            degree[i] += 1;
            degree[j] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + degree[i];
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![0usize; offsets[n]];
        for &(i, j) in &edges {
            adjacency[fill[i]] = j;
            fill[i] += 1;
            adjacency[fill[j]] = i;
            fill[j] += 1;
        }
        for i in 0..n {
            adjacency[offsets[i]..offsets[i + 1]].sort_unstable();
        }
        Self {
            positions,
            edges,
            radius,
            offsets,
            adjacency,
        }
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Directed edge count (each undirected edge in both directions).
    pub fn directed_edge_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Range of directed-edge slots owned by vertex `i`; slot `e` points at
    /// neighbor `self.neighbor_at(e)`.
    pub fn edge_slots(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbor_at(&self, slot: usize) -> usize {
        self.adjacency[slot]
    }

    /// Same topology with every vertex in a new order: new vertex `k` is old
    /// vertex `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut inverse = vec![0; order.len()];
        for (k, &o) in order.iter().enumerate() {
            inverse[o] = k;
        }
        let positions = order.iter().map(|&o| self.positions[o]).collect();
        let edges = self
            .edges
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (inverse[i], inverse[j]);
                (a.min(b), a.max(b))
            })
            .collect();
        Self::from_edges(positions, edges, self.radius)
    }

    /// Debug dump: `i,j,distance` per undirected edge.
    pub fn edges_csv(&self) -> String {
        let mut out = String::from("i,j,distance\n");
        for &(i, j) in &self.edges {
            out.push_str(&format!(
                "{i},{j},{}\n",
                distance(self.positions[i], self.positions[j])
            ));
        }
        out
    }
}

/// Connects every pair of vertices at distance ≤ `r`, using a uniform grid
/// of cell size `r` and a 27-cell neighborhood scan.
pub fn build_radius_graph(positions: &[[f64; 3]], r: f64) -> Result<RadiusGraph> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Parameter(format!("radius must be > 0, got {r}")));
    }
    // Slight inflation keeps pairs at exactly r in adjacent cells despite
    // rounding in the division.
    let cell = r * (1.0 + 1e-9);
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, &p) in positions.iter().enumerate() {
        grid.entry(voxel_index(p, cell)).or_default().push(i);
    }
    let mut edges = Vec::new();
    for (i, &p) in positions.iter().enumerate() {
        let c = voxel_index(p, cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &j in bucket {
                        if j > i && distance(p, positions[j]) <= r {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
    }
    Ok(RadiusGraph::from_edges(positions.to_vec(), edges, r))
}

pub fn build_radius_graph_for_cloud(cloud: &PointCloud, r: f64) -> Result<RadiusGraph> {
    let positions: Vec<[f64; 3]> = cloud.positions().collect();
    build_radius_graph(&positions, r)
}

/// Per-raw-point inputs `[x_q − x_i, feature_q]` grouped by voxel.
pub fn vertex_init_inputs(
    vertices: &[[f64; 3]],
    voxels: &[Voxel],
    raw: &PointCloud,
) -> Result<(Array2<f64>, Vec<Range<usize>>)> {
    if vertices.len() != voxels.len() {
        return Err(Error::shape(format!("{} voxels", vertices.len()), voxels.len()));
    }
    let width = 3 + raw.feature_width();
    let total: usize = voxels.iter().map(|v| v.members.len()).sum();
    let mut inputs = Array2::zeros((total, width));
    let mut segments = Vec::with_capacity(voxels.len());
    let mut row = 0;
    for (v, voxel) in voxels.iter().enumerate() {
        let start = row;
        for &m in &voxel.members {
            let p = raw.points().get(m).ok_or_else(|| {
                Error::Parameter(format!("voxel member {m} outside cloud of {}", raw.len()))
            })?;
            for k in 0..3 {
                inputs[[row, k]] = p.position[k] - vertices[v][k];
            }
            for (k, &f) in p.feature.iter().enumerate() {
                inputs[[row, 3 + k]] = f;
            }
            row += 1;
        }
        segments.push(start..row);
    }
    Ok((inputs, segments))
}

/// Row-wise maximum within each segment; also returns the winning row per
/// (segment, column).
pub fn segment_max(
    values: &ArrayView2<f64>,
    segments: &[Range<usize>],
) -> (Array2<f64>, Vec<Vec<Option<usize>>>) {
    let width = values.ncols();
    let mut out = Array2::zeros((segments.len(), width));
    let mut winners = Vec::with_capacity(segments.len());
    for (s, seg) in segments.iter().enumerate() {
        let rows: Vec<usize> = seg.clone().collect();
        let (best, arg) = max_rows(values, &rows);
        for c in 0..width {
            out[[s, c]] = best[c];
        }
        winners.push(arg);
    }
    (out, winners)
}

/// `s_i = max over raw points q in voxel i of mlp([x_q − x_i, feature_q])`.
pub fn init_vertex_states(
    vertices: &[[f64; 3]],
    voxels: &[Voxel],
    raw: &PointCloud,
    init_mlp: &Mlp,
) -> Result<Array2<f64>> {
    if init_mlp.input_width() != 3 + raw.feature_width() {
        return Err(Error::shape(
            format!("init MLP input width {}", 3 + raw.feature_width()),
            init_mlp.input_width(),
        ));
    }
    let (inputs, segments) = vertex_init_inputs(vertices, voxels, raw)?;
    let embedded = init_mlp.infer_batch(inputs.view())?;
    Ok(segment_max(&embedded.view(), &segments).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};
    use ndarray::{array, Array1};

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_points(points.iter().map(|&p| Point::new(p, vec![0.0])).collect(), 1)
            .unwrap()
    }

    #[test]
    fn downsampling_empty_cloud() {
        let (out, voxels) = voxel_downsample(&PointCloud::new(1), 1.0).unwrap();
        assert!(out.is_empty() && voxels.is_empty());
    }

    #[test]
    fn two_points_one_voxel() {
        let c = cloud(&[[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]]);
        let (out, voxels) = voxel_downsample(&c, 1.0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.points()[0].position, [0.1, 0.0, 0.0]);
        assert_eq!(voxels[0].members, vec![0, 1]);
    }

    #[test]
    fn negative_coordinates_floor() {
        let c = cloud(&[[-0.1, 0.0, 0.0], [0.1, 0.0, 0.0]]);
        let (out, voxels) = voxel_downsample(&c, 1.0).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(voxels[0].index, [-1, 0, 0]);
    }

    #[test]
    fn bad_parameters() {
        assert!(voxel_downsample(&PointCloud::new(1), 0.0).is_err());
        assert!(build_radius_graph(&[[0.0; 3]], -1.0).is_err());
    }

    #[test]
    fn boundary_distance_is_an_edge() {
        let g = build_radius_graph(&[[0.0, 0.0, 0.0], [0.0, 3.0, 4.0]], 5.0).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        let g = build_radius_graph(&[[0.0, 0.0, 0.0], [0.0, 3.0, 4.0 + 1e-9]], 5.0).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(g.neighbors(0), &[] as &[usize]);
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = build_radius_graph(&[[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 1.0).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.directed_edge_count(), 4);
        assert!(g.edges_csv().starts_with("i,j,distance\n0,1,1\n"));
    }

    fn linear_init(weight: Array2<f64>) -> Mlp {
        let out = weight.nrows();
        Mlp::from_layers(vec![Dense {
            weight,
            bias: Array1::zeros(out),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn single_member_state_is_mlp_of_zero() {
        let c = cloud(&[[1.0, 2.0, 3.0]]);
        let (down, voxels) = voxel_downsample(&c, 1.0).unwrap();
        let mlp = Mlp::from_layers(vec![Dense {
            weight: Array2::eye(4),
            bias: array![0.25, 0.0, -1.0, 2.0],
            activation: Activation::Identity,
        }])
        .unwrap();
        let verts: Vec<_> = down.positions().collect();
        let s = init_vertex_states(&verts, &voxels, &c, &mlp).unwrap();
        assert_eq!(s.row(0).to_vec(), vec![0.25, 0.0, -1.0, 2.0]);
    }

    #[test]
    fn three_point_voxel_hand_computed() {
        // centroid (0.3, 0.3, 0.3); offsets (-0.3,-0.3,-0.3), (0.6,-0.3,-0.3), (-0.3,0.6,0.6)
        let pts = [[0.0, 0.0, 0.0], [0.9, 0.0, 0.0], [0.0, 0.9, 0.9]];
        let feats = [0.5, 0.1, 0.2];
        let c = PointCloud::from_points(
            pts.iter().zip(feats).map(|(&p, f)| Point::new(p, vec![f])).collect(),
            1,
        )
        .unwrap();
        let (down, voxels) = voxel_downsample(&c, 1.0).unwrap();
        let w = array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0], [1.0, -1.0, 0.0, 2.0]];
        let verts: Vec<_> = down.positions().collect();
        let s = init_vertex_states(&verts, &voxels, &c, &linear_init(w)).unwrap();
        // rows: q0 -> (-0.3, -0.6, 1.0); q1 -> (0.6, -0.6, 1.1); q2 -> (-0.3, 1.2, -0.5)
        let expected = [0.6, 1.2, 1.1];
        for k in 0..3 {
            assert!((s[[0, k]] - expected[k]).abs() < 1e-12, "{k}: {}", s[[0, k]]);
        }
    }

    #[test]
    fn init_width_mismatch() {
        let c = cloud(&[[0.0; 3]]);
        let (down, voxels) = voxel_downsample(&c, 1.0).unwrap();
        let verts: Vec<_> = down.positions().collect();
        let mlp = linear_init(Array2::eye(3));
        assert!(matches!(
            init_vertex_states(&verts, &voxels, &c, &mlp),
            Err(Error::Shape { .. })
        ));
    }
}
