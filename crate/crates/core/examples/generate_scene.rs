//! Generates one synthetic scene and writes it as a binary cloud plus labels.

use ebim_gnn::cloud::{save_labels, save_point_cloud, CloudFormat};
use ebim_gnn::scene::{generate_scene, SceneConfig};

fn main() -> ebim_gnn::Result<()> {
    let seed = std::env::args().nth(1).map_or(7, |s| s.parse().expect("seed"));
    let config = SceneConfig { seed, ..SceneConfig::default() };
    let (cloud, labels) = generate_scene(&config)?;
    let dir = std::env::temp_dir();
    let cloud_path = dir.join(format!("scene_{seed}.bin"));
    save_point_cloud(&cloud, &cloud_path, CloudFormat::BinaryXyzr)?;
    save_labels(&labels, &dir.join(format!("scene_{seed}.labels.csv")))?;
    println!("{} points, {} buildings -> {}", cloud.len(), labels.len(), cloud_path.display());
    for g in &labels {
        let b = g.bbox;
        println!(
            "  type {}  center ({:.1}, {:.1})  l {:.1}  h {:.1}  w {:.1}  yaw {:.2}",
            g.class_id + 1,
            b.x,
            b.y,
            b.l,
            b.h,
            b.w,
            b.theta
        );
    }
    Ok(())
}
