//! Regenerates the bundled prototype ranges and energy table from their inputs.

use ebim_gnn::prototypes::{reproduce, ReferenceTables};

fn main() -> ebim_gnn::Result<()> {
    let r = reproduce(&ReferenceTables::bundled()?)?;
    print!("{}", r.report.to_table());
    println!(
        "{} range endpoints within {:.1e} m; percentages within {:.4} points",
        r.range_endpoints, r.max_range_error, r.max_percent_error
    );
    Ok(())
}
