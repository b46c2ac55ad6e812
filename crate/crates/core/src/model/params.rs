use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::seed;

/// Sizes and fixed scalars of the network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub adapter_hidden: usize,
    pub mlp_hidden: usize,
    /// Adapter residual ratio ρ.
    pub residual_ratio: f64,
    pub tau_init: f64,
}

impl ModelConfig {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            dim,
            adapter_hidden: (dim / 4).max(1),
            mlp_hidden: 4 * dim,
            residual_ratio: 0.2,
            tau_init: 0.01,
        }
    }
}

/// Which prediction branches a model trains and fuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BranchMask {
    pub com: bool,
    pub sor: bool,
    pub osr: bool,
}

impl BranchMask {
    pub const FULL: BranchMask = BranchMask {
        com: true,
        sor: true,
        osr: true,
    };
    pub const COM: BranchMask = BranchMask {
        com: true,
        sor: false,
        osr: false,
    };

    /// The seven non-empty masks in ablation-table order.
    pub fn ablation_order() -> [BranchMask; 7] {
        let m = |com, sor, osr| BranchMask { com, sor, osr };
        [
            m(true, false, false),
            m(false, true, false),
            m(false, false, true),
            m(true, true, false),
            m(true, false, true),
            m(false, true, true),
            m(true, true, true),
        ]
    }

    pub fn is_empty(self) -> bool {
        !(self.com || self.sor || self.osr)
    }

    /// True when every branch active in `other` is also active here.
    pub fn contains(self, other: BranchMask) -> bool {
        (self.com || !other.com) && (self.sor || !other.sor) && (self.osr || !other.osr)
    }

    pub fn bits(self) -> u8 {
        self.com as u8 | (self.sor as u8) << 1 | (self.osr as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        let m = BranchMask {
            com: bits & 1 != 0,
            sor: bits & 2 != 0,
            osr: bits & 4 != 0,
        };
        (bits < 8 && !m.is_empty()).then_some(m)
    }
}

impl fmt::Display for BranchMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.com, "com"), (self.sor, "sor"), (self.osr, "osr")]
            .into_iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| n)
            .collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for BranchMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = BranchMask {
            com: false,
            sor: false,
            osr: false,
        };
        for part in s.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "com" => m.com = true,
                "sor" => m.sor = true,
                "osr" => m.osr = true,
                other => {
                    return Err(Error::Config(format!(
                        "unknown branch {other:?} (expected com, sor, osr)"
                    )))
                }
            }
        }
        if m.is_empty() {
            return Err(Error::Config("branch mask must name at least one branch".into()));
        }
        Ok(m)
    }
}

/// Residual bottleneck adapter: `d -> h -> d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdapterParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub residual_ratio: f64,
}

/// Single-head cross-attention followed by an MLP, each with a residual and
/// layer norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionBlockParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_out: ParamId,
    pub mlp_w1: ParamId,
    pub mlp_b1: ParamId,
    pub mlp_w2: ParamId,
    pub mlp_b2: ParamId,
    pub norm1_gain: ParamId,
    pub norm1_bias: ParamId,
    pub norm2_gain: ParamId,
    pub norm2_bias: ParamId,
}

/// Handles to every trainable tensor of the network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LprParams {
    pub com_adapter: AdapterParams,
    pub sor_adapter: AdapterParams,
    pub osr_adapter: AdapterParams,
    pub sor_stage1: AttentionBlockParams,
    pub sor_stage2: AttentionBlockParams,
    pub osr_stage1: AttentionBlockParams,
    pub osr_stage2: AttentionBlockParams,
    pub log_tau: ParamId,
}

struct Init<'a, R> {
    store: &'a mut ParamStore,
    rng: R,
}

impl<R: Rng> Init<'_, R> {
    fn uniform(&mut self, name: String, rows: usize, cols: usize) -> ParamId {
        let bound = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        self.store
            .add(name, Tensor::matrix(rows, cols, data).unwrap(), true)
    }

    fn constant(&mut self, name: String, n: usize, v: f64) -> ParamId {
        self.store.add(name, Tensor::vector(vec![v; n]), true)
    }

    fn adapter(&mut self, prefix: &str, cfg: &ModelConfig) -> AdapterParams {
        let (d, h) = (cfg.dim, cfg.adapter_hidden);
        AdapterParams {
            w1: self.uniform(format!("{prefix}.W1"), d, h),
            b1: self.constant(format!("{prefix}.b1"), h, 0.0),
            w2: self.uniform(format!("{prefix}.W2"), h, d),
            b2: self.constant(format!("{prefix}.b2"), d, 0.0),
            residual_ratio: cfg.residual_ratio,
        }
    }

    fn block(&mut self, prefix: &str, cfg: &ModelConfig) -> AttentionBlockParams {
        let (d, m) = (cfg.dim, cfg.mlp_hidden);
        AttentionBlockParams {
            w_q: self.uniform(format!("{prefix}.W_q"), d, d),
            w_k: self.uniform(format!("{prefix}.W_k"), d, d),
            w_v: self.uniform(format!("{prefix}.W_v"), d, d),
            w_out: self.uniform(format!("{prefix}.W_out"), d, d),
            mlp_w1: self.uniform(format!("{prefix}.mlp.W1"), d, m),
            mlp_b1: self.constant(format!("{prefix}.mlp.b1"), m, 0.0),
            mlp_w2: self.uniform(format!("{prefix}.mlp.W2"), m, d),
            mlp_b2: self.constant(format!("{prefix}.mlp.b2"), d, 0.0),
            norm1_gain: self.constant(format!("{prefix}.norm1.gain"), d, 1.0),
            norm1_bias: self.constant(format!("{prefix}.norm1.bias"), d, 0.0),
            norm2_gain: self.constant(format!("{prefix}.norm2.gain"), d, 1.0),
            norm2_bias: self.constant(format!("{prefix}.norm2.bias"), d, 0.0),
        }
    }
}

impl LprParams {
    /// Registers freshly initialized parameters in `store`.
    ///
    /// Weights are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases
    /// start at zero and layer-norm gains at one.
    pub fn init(store: &mut ParamStore, cfg: &ModelConfig, root_seed: u64) -> Self {
        let mut init = Init {
            store,
            rng: seed::rng(root_seed, "init", 0),
        };
        let com_adapter = init.adapter("com.adapter", cfg);
        let sor_adapter = init.adapter("sor.adapter", cfg);
        let osr_adapter = init.adapter("osr.adapter", cfg);
        let sor_stage1 = init.block("sor.stage1", cfg);
        let sor_stage2 = init.block("sor.stage2", cfg);
        let osr_stage1 = init.block("osr.stage1", cfg);
        let osr_stage2 = init.block("osr.stage2", cfg);
        let log_tau = init
            .store
            .add("log_tau", Tensor::scalar(cfg.tau_init.ln()), true);
        Self {
            com_adapter,
            sor_adapter,
            osr_adapter,
            sor_stage1,
            sor_stage2,
            osr_stage1,
            osr_stage2,
            log_tau,
        }
    }

    /// Same handles with the two relation branches exchanged.
    pub fn mirrored(&self) -> Self {
        Self {
            sor_adapter: self.osr_adapter,
            osr_adapter: self.sor_adapter,
            sor_stage1: self.osr_stage1,
            sor_stage2: self.osr_stage2,
            osr_stage1: self.sor_stage1,
            osr_stage2: self.sor_stage2,
            ..*self
        }
    }
}

/// Parameters plus the store holding their values.
#[derive(Clone, Debug, PartialEq)]
pub struct LprModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub params: LprParams,
    /// Branches this model was trained with.
    pub mask: BranchMask,
}

impl LprModel {
    pub fn new(config: ModelConfig, root_seed: u64) -> Self {
        let mut store = ParamStore::new();
        let params = LprParams::init(&mut store, &config, root_seed);
        Self {
            config,
            store,
            params,
            mask: BranchMask::FULL,
        }
    }

    pub fn tau(&self) -> f64 {
        self.store.value(self.params.log_tau).data()[0].exp()
    }

    pub fn set_tau(&mut self, tau: f64) {
        assert!(tau > 0.0);
        self.store.get_mut(self.params.log_tau).value = Tensor::scalar(tau.ln());
    }

    /// Rejects evaluation through branches the model was not trained with.
    pub fn check_mask(&self, requested: BranchMask) -> Result<()> {
        if self.mask.contains(requested) {
            Ok(())
        } else {
            Err(Error::IncompatibleMask {
                requested: requested.to_string(),
                trained: self.mask.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trips() {
        for m in BranchMask::ablation_order() {
            assert_eq!(BranchMask::from_bits(m.bits()), Some(m));
            assert_eq!(m.to_string().parse::<BranchMask>().unwrap(), m);
        }
        assert_eq!(BranchMask::from_bits(0), None);
        assert!("".parse::<BranchMask>().is_err());
        assert!("com,xyz".parse::<BranchMask>().is_err());
        assert_eq!("com, sor".parse::<BranchMask>().unwrap().to_string(), "com+sor");
    }

    #[test]
    fn mask_containment() {
        assert!(BranchMask::FULL.contains(BranchMask::COM));
        assert!(!BranchMask::COM.contains(BranchMask::FULL));
    }

    #[test]
    fn init_is_seeded_and_named() {
        let cfg = ModelConfig::for_dim(8);
        let a = LprModel::new(cfg, 3);
        let b = LprModel::new(cfg, 3);
        let c = LprModel::new(cfg, 4);
        assert_eq!(a, b);
        assert_ne!(a.store, c.store);
        assert!(a.store.id("sor.stage2.W_q").is_some());
        assert!(a.store.id("com.adapter.W1").is_some());
        assert!((a.tau() - 0.01).abs() < 1e-15);
        assert_eq!(a.store.len(), 3 * 4 + 4 * 12 + 1);
    }
}
