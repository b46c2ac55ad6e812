// Checks analytic gradients of the full three-branch training loss against
// central finite differences, on a small synthetic batch for several seeds.
//
// Run with `cargo run --release --example gradient_check`.

use lpr::dataset::{generate_synthetic, Split, SyntheticConfig};
use lpr::model::{BranchMask, LprModel, ModelConfig};
use lpr::objective::{check_loss_gradients, LossWeights};

/// Worst relative error over every parameter tensor, for one seed.
pub fn worst_error(seed: u64) -> lpr::Result<(String, f64)> {
    let ds = generate_synthetic(&SyntheticConfig {
        num_states: 3,
        num_objects: 4,
        dim: 6,
        train_per_seen: 2,
        test_per_composition: 1,
        seed,
        ..SyntheticConfig::default()
    })?;
    let batch: Vec<usize> = ds.indices(Split::Train).into_iter().take(4).collect();
    let mut model = LprModel::new(ModelConfig::for_dim(ds.dim()), seed);
    let errors = check_loss_gradients(&mut model, &ds, &batch, BranchMask::FULL, LossWeights::default(), 1e-5)?;
    Ok(errors
        .into_iter()
        .fold((String::new(), 0.0), |best, (name, e)| if e > best.1 { (name, e) } else { best }))
}

pub fn run_example() -> lpr::Result<()> {
    for seed in 1..=5 {
        let (name, err) = worst_error(seed)?;
        println!("seed {seed}: max relative error {err:.2e} ({name})");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
