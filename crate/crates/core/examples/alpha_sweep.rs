// Trains the reference model once, then re-scores the test split for a
// grid of fusion weights without retraining.

use lpr::dataset::Regime;
use lpr::eval::{parse_alpha_grid, run_alpha_sweep, spearman};
use lpr::runner::{load_dataset, train, TrainConfig};

pub fn run_example() -> lpr::Result<()> {
    let cfg = TrainConfig::default();
    let ds = load_dataset(&cfg)?;
    let model = train(&cfg, &ds)?.model;
    let table = run_alpha_sweep(&model, &ds, &parse_alpha_grid("0.2:0.8:0.1")?, Regime::Open)?;
    print!("{}", table.to_table());
    let rho = |v: Vec<f64>| spearman(&table.alphas(), &v).map_or("undefined".to_string(), |r| format!("{r:.3}"));
    println!("spearman(alpha, S) = {}", rho(table.seen()));
    println!("spearman(alpha, U) = {}", rho(table.unseen()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
