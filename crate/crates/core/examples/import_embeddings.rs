// Builds a dataset from externally computed embeddings, writes it as a
// feature file, then trains and evaluates it through the command-line
// entry point.
//
// The vectors here are made up; with a real encoder, replace `embed` by the
// encoder's image and text outputs (any width, unit-normalized).

use lpr::dataset::{save_features, CompositionSpace, Dataset, FeatureRecord, Pair, Split, TextBank};
use lpr::diffmath::{l2_normalize, Tensor};
use lpr::runner::run_cli;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 12;

/// Stand-in encoder: a fixed pseudo-random direction per key.
fn embed(key: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    (0..DIM).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn unit(v: Vec<f64>) -> lpr::Result<Vec<f64>> {
    l2_normalize(&v)
}

fn mix(a: &[f64], b: &[f64], jitter: f64) -> Vec<f64> {
    a.iter().zip(b).enumerate().map(|(j, (x, y))| x + y + jitter * (j as f64).cos()).collect()
}

pub fn build_dataset() -> lpr::Result<Dataset> {
    let states: Vec<String> = ["wet", "dry", "old"].map(String::from).to_vec();
    let objects: Vec<String> = ["road", "towel", "car", "leaf"].map(String::from).to_vec();
    let all: Vec<Pair> = (0..3).flat_map(|s| (0..4).map(move |o| Pair::new(s, o))).collect();
    let unseen = vec![Pair::new(0, 2), Pair::new(1, 3), Pair::new(2, 1)];
    let seen: Vec<Pair> = all.iter().copied().filter(|p| !unseen.contains(p)).collect();
    let space = CompositionSpace::new(states, objects, seen.clone(), unseen.clone(), all.clone())?;

    let s_txt: Vec<Vec<f64>> = (0..3).map(|s| unit(embed(s))).collect::<lpr::Result<_>>()?;
    let o_txt: Vec<Vec<f64>> = (0..4).map(|o| unit(embed(10 + o))).collect::<lpr::Result<_>>()?;
    let c_txt: Vec<Vec<f64>> = all
        .iter()
        .map(|p| unit(mix(&s_txt[p.state], &o_txt[p.object], 0.0)))
        .collect::<lpr::Result<_>>()?;
    let bank = TextBank::new(&space, Tensor::from_rows(&s_txt)?, Tensor::from_rows(&o_txt)?, Tensor::from_rows(&c_txt)?)?;

    let mut records = Vec::new();
    let mut push = |p: Pair, split: Split, k: usize| -> lpr::Result<()> {
        let jitter = 0.05 * ((k + 1) as f64).sin();
        records.push(FeatureRecord {
            feature: unit(mix(&s_txt[p.state], &o_txt[p.object], jitter))?,
            label: p,
            split,
        });
        Ok(())
    };
    for &p in &seen {
        for k in 0..6 {
            push(p, if k < 5 { Split::Train } else { Split::Val }, k)?;
        }
    }
    for &p in seen.iter().chain(&unseen) {
        for k in 0..3 {
            push(p, Split::Test, 10 + k)?;
        }
    }
    Dataset::new(space, bank, records)
}

pub fn run_example() -> lpr::Result<()> {
    let dir = tempfile::tempdir()?;
    let data = dir.path().join("custom.lprf");
    let ckpt = dir.path().join("custom.ckpt");
    save_features(&data, &build_dataset()?)?;
    let (data, ckpt) = (data.to_str().unwrap(), ckpt.to_str().unwrap());

    print!("{}", run_cli(["lpr", "train", "--data", data, "--out", ckpt, "--epochs", "20", "--batch-size", "8"])?);
    print!("{}", run_cli(["lpr", "eval", "--ckpt", ckpt, "--data", data, "--regime", "closed"])?);
    print!("{}", run_cli(["lpr", "sweep-alpha", "--ckpt", ckpt, "--data", data, "--grid", "0.2,0.5,0.8"])?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> lpr::Result<()> {
    run_example()
}
