//! Energy report for a handful of matched buildings.

use ebim_gnn::prototypes::{count_matches, energy_report};

fn main() -> ebim_gnn::Result<()> {
    // (building type, prototype) for each matched building
    let matches = [(0, 1), (0, 3), (0, 3), (0, 4), (1, 2), (1, 3), (2, 5)];
    let counts = count_matches(&matches, 3)?;
    let actual = [40.0, 10.0, 20.0];
    let energies = vec![
        vec![50.0, 14.0, 25.0],
        vec![45.0, 12.0, 22.0],
        vec![38.0, 9.0, 18.0],
        vec![33.0, 7.0, 15.0],
        vec![28.0, 5.0, 12.0],
    ];
    let report = energy_report(&counts, &actual, &energies)?;
    print!("{}", report.to_table());
    Ok(())
}
