// Trains one model per non-empty branch mask on the reference dataset and
// prints the open-world metrics of each.

use lpr::eval::run_path_ablation;
use lpr::runner::{load_dataset, TrainConfig};

pub fn run_example() -> lpr::Result<()> {
    let cfg = TrainConfig::default();
    let ds = load_dataset(&cfg)?;
    let table = run_path_ablation(&cfg, &ds, None, true)?;
    print!("{}", table.to_table());
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
