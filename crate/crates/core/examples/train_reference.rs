// Trains the reference configuration on the synthetic dataset and evaluates
// it in both regimes.

use lpr::dataset::Regime;
use lpr::eval::evaluate_model;
use lpr::runner::{load_dataset, train, TrainConfig};

pub fn run_example() -> lpr::Result<()> {
    let cfg = TrainConfig::default();
    let ds = load_dataset(&cfg)?;
    let trained = train(&cfg, &ds)?;
    let m = &trained.manifest;
    println!("epochs run {}, best epoch {}, {:.1}s", m.trace.len(), m.best_epoch, m.wall_clock_secs);
    for e in &m.trace {
        println!("epoch {:>2}  train {:.4}  val {:.4}", e.epoch, e.train.total, e.val_loss.unwrap_or(f64::NAN));
    }
    for regime in [Regime::Closed, Regime::Open] {
        let r = evaluate_model(&trained.model, &ds, regime, cfg.fusion, cfg.seed)?;
        print!("{}", r.to_table());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
