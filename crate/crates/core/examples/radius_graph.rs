//! Voxel-downsamples a scene and builds its radius graph.

use ebim_gnn::graph::{build_radius_graph_for_cloud, voxel_downsample};
use ebim_gnn::scene::{generate_scene, SceneConfig};

fn main() -> ebim_gnn::Result<()> {
    let (cloud, _) = generate_scene(&SceneConfig::default())?;
    for (voxel, radius) in [(1.0, 2.0), (1.5, 4.0), (2.0, 8.0)] {
        let (vertices, _) = voxel_downsample(&cloud, voxel)?;
        let graph = build_radius_graph_for_cloud(&vertices, radius)?;
        println!(
            "voxel {voxel:.1} m, r {radius:.1} m: {} points -> {} vertices, {} edges, mean degree {:.1}",
            cloud.len(),
            graph.vertex_count(),
            graph.edges().len(),
            graph.directed_edge_count() as f64 / graph.vertex_count().max(1) as f64
        );
    }
    Ok(())
}
