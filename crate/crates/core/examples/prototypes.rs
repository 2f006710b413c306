//! Derives prototypes from labelled scenes and matches buildings to them.

use ebim_gnn::prototypes::{match_all, matching_loss_for, stats_by_class, PrototypeSet};
use ebim_gnn::pointgnn::{generate_dataset, reference_energies};
use ebim_gnn::scene::SceneConfig;

fn main() -> ebim_gnn::Result<()> {
    let data = generate_dataset(&SceneConfig::default(), 30, 0)?;
    let boxes: Vec<_> = data
        .iter()
        .flat_map(|(_, labels)| labels.iter().map(|g| (g.class_id, g.bbox)))
        .collect();
    let stats = stats_by_class(&boxes)?;
    let set = PrototypeSet::from_stats(&stats, &reference_energies(stats.len())?)?;
    print!("{}", set.to_csv());

    let matches = match_all(&boxes, &set)?;
    let mut histogram = vec![[0usize; 5]; stats.len()];
    for m in &matches {
        histogram[m.class_id][m.prototype - 1] += 1;
    }
    for (c, h) in histogram.iter().enumerate() {
        println!("type {}: buildings per prototype {:?}", c + 1, h);
    }
    println!("matching loss {:.2}", matching_loss_for(&boxes, &matches, &set)?);
    Ok(())
}
