//! Seeded stand-in for encoder features.
//!
//! Every state and object gets a unit latent of width `k = d / 3`. Image
//! features map the state latent, the object latent and their elementwise
//! product (so state appearance depends on the object) through three
//! orthonormal blocks with mutually orthogonal ranges, then add Gaussian
//! noise. Text prototypes project the same latents through the primitive
//! blocks, which puts both modalities in one shared space. Without noise the
//! nearest state, object and composition prototype of every feature is its
//! own label.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bank::TextBank;
use super::space::{CompositionSpace, Pair};
use super::{Dataset, FeatureRecord, Split};
use crate::diffmath::{dot, l2_normalize, norm, Tensor};
use crate::error::{Error, Result};
use crate::seed;

const MAX_SPLIT_DRAWS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_states: usize,
    pub num_objects: usize,
    pub dim: usize,
    pub train_per_seen: usize,
    pub test_per_composition: usize,
    /// Fraction of the grid used as seen compositions.
    pub seen_fraction: f64,
    /// Fraction of the remaining pairs used as unseen test compositions;
    /// the rest only appear as open-world distractors.
    pub unseen_fraction: f64,
    /// Fraction of seen-composition samples held out for validation.
    pub val_fraction: f64,
    /// Per-coordinate standard deviation of the feature noise.
    pub noise: f64,
    /// Weight of the state⊙object interaction term.
    pub interaction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_states: 8,
            num_objects: 10,
            dim: 32,
            train_per_seen: 25,
            test_per_composition: 10,
            seen_fraction: 0.6,
            unseen_fraction: 0.5,
            val_fraction: 0.2,
            noise: 0.1,
            interaction: 1.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSynthetic(m.to_string()));
        if self.num_states == 0 || self.num_objects == 0 {
            return bad("state and object counts must be at least 1");
        }
        if self.dim < 3 {
            return bad("dimension must be at least 3");
        }
        if self.train_per_seen == 0 || self.test_per_composition == 0 {
            return bad("per-composition sample counts must be at least 1");
        }
        if self.num_states * self.num_objects < 4 {
            return bad("the composition grid needs at least 4 pairs");
        }
        if !(self.seen_fraction > 0.0 && self.seen_fraction < 1.0) {
            return bad("seen fraction must lie in (0, 1)");
        }
        if !(self.unseen_fraction > 0.0 && self.unseen_fraction <= 1.0) {
            return bad("unseen fraction must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) || !(self.interaction >= 0.0 && self.interaction.is_finite()) {
            return bad("noise and interaction scales must be finite and nonnegative");
        }
        let (seen, rest) = self.split_sizes();
        if seen == 0 || rest == 0 {
            return bad("seen fraction must leave at least one seen and one unseen composition");
        }
        Ok(())
    }

    /// Width of the per-primitive latents.
    pub fn latent_dim(&self) -> usize {
        self.dim / 3
    }

    fn split_sizes(&self) -> (usize, usize) {
        let total = self.num_states * self.num_objects;
        let seen = ((self.seen_fraction * total as f64).round() as usize).min(total);
        (seen, total - seen)
    }
}

/// `n` orthonormal vectors of width `d` (Gram-Schmidt on Gaussian draws).
fn orthonormal_columns(rng: &mut impl Rng, d: usize, n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let proj = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        // A draw inside the current span is vanishingly rare; redraw it.
        if let Ok(u) = l2_normalize(&v) {
            if norm(&v) > 1e-6 {
                basis.push(u);
            }
        }
    }
    basis
}

/// Row-major d×k matrix with the given columns.
fn block(columns: &[Vec<f64>], d: usize) -> Vec<f64> {
    (0..d).flat_map(|i| columns.iter().map(move |c| c[i])).collect()
}

fn unit_latents(rng: &mut impl Rng, n: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
            l2_normalize(&z)
        })
        .collect()
}

/// `m` is d×k row-major; returns `m · z`.
fn apply(m: &[f64], z: &[f64], d: usize) -> Vec<f64> {
    let k = z.len();
    (0..d)
        .map(|i| m[i * k..(i + 1) * k].iter().zip(z).map(|(a, b)| a * b).sum())
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn draw_split(cfg: &SyntheticConfig, rng: &mut impl Rng) -> Result<(Vec<Pair>, Vec<Pair>)> {
    let (n_seen, n_rest) = cfg.split_sizes();
    let n_unseen = ((cfg.unseen_fraction * n_rest as f64).round() as usize).clamp(1, n_rest);
    let mut pairs: Vec<Pair> = (0..cfg.num_states)
        .flat_map(|s| (0..cfg.num_objects).map(move |o| Pair::new(s, o)))
        .collect();
    for _ in 0..MAX_SPLIT_DRAWS {
        pairs.shuffle(rng);
        let seen = &pairs[..n_seen];
        let covers_states = (0..cfg.num_states).all(|s| seen.iter().any(|p| p.state == s));
        let covers_objects = (0..cfg.num_objects).all(|o| seen.iter().any(|p| p.object == o));
        if covers_states && covers_objects {
            let unseen = pairs[n_seen..n_seen + n_unseen].to_vec();
            return Ok((seen.to_vec(), unseen));
        }
    }
    Err(Error::SplitInfeasible(MAX_SPLIT_DRAWS))
}

/// Generates a deterministic synthetic dataset for `cfg`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let d = cfg.dim;
    let k = cfg.latent_dim();

    let mut latent_rng = seed::rng(cfg.seed, "latents", 0);
    let z_states = unit_latents(&mut latent_rng, cfg.num_states, k)?;
    let z_objects = unit_latents(&mut latent_rng, cfg.num_objects, k)?;

    // Image map A = [B_s | B_o | interaction * sqrt(k) * B_x]; text maps B_s, B_o, [B_s | B_o].
    let cols = orthonormal_columns(&mut seed::rng(cfg.seed, "maps", 0), d, 3 * k);
    let b_state = block(&cols[..k], d);
    let b_object = block(&cols[k..2 * k], d);
    let b_inter = block(&cols[2 * k..], d);

    let (seen, unseen) = draw_split(cfg, &mut seed::rng(cfg.seed, "split", 0))?;
    let mut closed: Vec<Pair> = seen.iter().chain(&unseen).copied().collect();
    closed.sort();

    let state_names = (0..cfg.num_states).map(|i| format!("state{i}")).collect();
    let object_names = (0..cfg.num_objects).map(|i| format!("object{i}")).collect();
    let space = CompositionSpace::new(state_names, object_names, seen, unseen, closed)?;

    let state_proj: Vec<Vec<f64>> = z_states.iter().map(|z| apply(&b_state, z, d)).collect();
    let object_proj: Vec<Vec<f64>> = z_objects.iter().map(|z| apply(&b_object, z, d)).collect();

    let to_rows = |rows: Vec<Vec<f64>>| -> Result<Tensor> {
        let rows = rows.iter().map(|r| l2_normalize(r)).collect::<Result<Vec<_>>>()?;
        Tensor::from_rows(&rows)
    };
    let t_states = to_rows(state_proj.clone())?;
    let t_objects = to_rows(object_proj.clone())?;
    let t_comp = to_rows(
        space
            .open_world()
            .iter()
            .map(|p| add(&state_proj[p.state], &object_proj[p.object]))
            .collect(),
    )?;
    let bank = TextBank::new(&space, t_states, t_objects, t_comp)?;

    let clean = |p: Pair| -> Vec<f64> {
        let scale = cfg.interaction * (k as f64).sqrt();
        let prod: Vec<f64> = z_states[p.state]
            .iter()
            .zip(&z_objects[p.object])
            .map(|(a, b)| scale * a * b)
            .collect();
        let inter = apply(&b_inter, &prod, d);
        add(&add(&state_proj[p.state], &object_proj[p.object]), &inter)
    };
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidSynthetic(e.to_string()))?;
    let mut sample_rng = seed::rng(cfg.seed, "samples", 0);
    let mut sample = |p: Pair| -> Result<Vec<f64>> {
        let mut x = clean(p);
        if cfg.noise > 0.0 {
            for v in x.iter_mut() {
                *v += noise.sample(&mut sample_rng);
            }
        }
        l2_normalize(&x)
    };

    let mut records = Vec::new();
    for &p in space.seen() {
        for _ in 0..cfg.train_per_seen {
            records.push(FeatureRecord {
                feature: sample(p)?,
                label: p,
                split: Split::Train,
            });
        }
    }
    let n_val = (cfg.val_fraction * records.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut seed::rng(cfg.seed, "val", 0));
    for &i in &order[..n_val] {
        records[i].split = Split::Val;
    }
    for &p in space.closed_world() {
        for _ in 0..cfg.test_per_composition {
            records.push(FeatureRecord {
                feature: sample(p)?,
                label: p,
                split: Split::Test,
            });
        }
    }
    Dataset::new(space, bank, records)
}
