// Generates the reference synthetic dataset, checks that noiseless
// features sit closest to their own text prototypes, and round-trips the
// dataset through a feature file.

use lpr::dataset::{generate_synthetic, load_features, save_features, Split, SyntheticConfig};
use lpr::diffmath::{argmax, dot, Tensor};

fn nearest(rows: &Tensor, x: &[f64]) -> usize {
    let sims: Vec<f64> = rows.row_iter().map(|r| dot(r, x)).collect();
    argmax(&sims).expect("prototype rows are nonempty")
}

pub fn run_example() -> lpr::Result<()> {
    let cfg = SyntheticConfig::default();
    let ds = generate_synthetic(&cfg)?;
    let space = &ds.space;
    println!(
        "{} states, {} objects, dim {}: {} seen, {} unseen, {} open-world candidates",
        space.num_states(),
        space.num_objects(),
        ds.dim(),
        space.seen().len(),
        space.unseen().len(),
        space.open_world().len()
    );
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("{split:?}: {} records", ds.indices(split).len());
    }

    let clean = generate_synthetic(&SyntheticConfig { noise: 0.0, ..cfg })?;
    let (mut states, mut objects) = (0, 0);
    for r in &clean.records {
        states += (nearest(&clean.bank.states, &r.feature) == r.label.state) as usize;
        objects += (nearest(&clean.bank.objects, &r.feature) == r.label.object) as usize;
    }
    let n = clean.records.len();
    println!("noiseless nearest-prototype accuracy: states {states}/{n}, objects {objects}/{n}");

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("reference.lprf");
    save_features(&path, &ds)?;
    let back = load_features(&path)?;
    assert_eq!(back, ds);
    println!("round trip ok, sha256 {}", back.content_hash());
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
