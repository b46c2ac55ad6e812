//! Training losses, fused inference scores and prediction.

use serde::{Deserialize, Serialize};

use crate::dataset::{candidate_index, CompositionSpace, Dataset, Pair};
use crate::diffmath::{argmax, grad_check_all, softmax, Graph, Var};
use crate::error::{Error, Result};
use crate::model::{forward_branches, BranchLogits, BranchMask, BranchVars, LprModel, ProtoVars, RelationVars};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 1.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2].iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights must be finite and nonnegative, got {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self::from_alpha(0.4)
    }
}

impl FusionWeights {
    /// `β = 1 - α`.
    pub fn from_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            beta: 1.0 - alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.alpha, self.beta].iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.alpha + self.beta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidWeights(format!(
                "must be finite, nonnegative and not both zero, got {self:?}"
            )))
        }
    }

    /// Per-branch weights `(com, sor, osr)` under `mask`.
    ///
    /// The full mask gives `(α, β/2, β/2)`. Dropping branches rescales the
    /// remaining weights so they still add up to `α + β`; if every remaining
    /// weight is zero they share `α + β` equally.
    pub fn branch_weights(&self, mask: BranchMask) -> (f64, f64, f64) {
        let total = self.alpha + self.beta;
        let on = |b: bool, w: f64| if b { w } else { 0.0 };
        let (c, s, o) = (
            on(mask.com, self.alpha),
            on(mask.sor, self.beta / 2.0),
            on(mask.osr, self.beta / 2.0),
        );
        let active = c + s + o;
        if active > 0.0 {
            let k = total / active;
            (c * k, s * k, o * k)
        } else {
            let n = [mask.com, mask.sor, mask.osr].iter().filter(|b| **b).count() as f64;
            let w = total / n;
            (on(mask.com, w), on(mask.sor, w), on(mask.osr, w))
        }
    }
}

/// Composition, state and object targets of one training batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainTargets {
    pub composition: Vec<usize>,
    pub state: Vec<usize>,
    pub object: Vec<usize>,
}

impl TrainTargets {
    /// Maps labels onto the training candidate list. Only seen labels are allowed.
    pub fn from_labels(space: &CompositionSpace, candidates: &[Pair], labels: &[Pair]) -> Result<Self> {
        let mut composition = Vec::with_capacity(labels.len());
        for &p in labels {
            let c = candidate_index(candidates, p)
                .filter(|_| space.is_seen(p))
                .ok_or(Error::TrainUnseenLabel {
                    state: p.state,
                    object: p.object,
                })?;
            composition.push(c);
        }
        Ok(Self {
            composition,
            state: labels.iter().map(|p| p.state).collect(),
            object: labels.iter().map(|p| p.object).collect(),
        })
    }

    /// Checks that every composition target decomposes into its (state, object).
    pub fn from_parts(candidates: &[Pair], composition: Vec<usize>, state: Vec<usize>, object: Vec<usize>) -> Result<Self> {
        if composition.len() != state.len() || composition.len() != object.len() {
            return Err(Error::ShapeMismatch("target vectors differ in length".into()));
        }
        for ((&c, &s), &o) in composition.iter().zip(&state).zip(&object) {
            let expected = Pair::new(s, o);
            if candidates.get(c) != Some(&expected) {
                return Err(Error::InconsistentTarget {
                    candidate: c,
                    state: s,
                    object: o,
                });
            }
        }
        Ok(Self {
            composition,
            state,
            object,
        })
    }

    pub fn len(&self) -> usize {
        self.composition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.composition.is_empty()
    }
}

/// Composition, state and object logits of one relation branch.
#[derive(Clone, Copy, Debug)]
pub struct LogitTriple {
    pub composition: Var,
    pub state: Var,
    pub object: Var,
}

impl LogitTriple {
    pub fn sor(v: &RelationVars) -> Self {
        Self {
            composition: v.composition_logits,
            state: v.first_logits,
            object: v.second_logits,
        }
    }

    pub fn osr(v: &RelationVars) -> Self {
        Self {
            composition: v.composition_logits,
            state: v.second_logits,
            object: v.first_logits,
        }
    }
}

/// Loss node of one relation branch with its raw cross-entropy terms.
#[derive(Clone, Copy, Debug)]
pub struct RelationLoss {
    pub loss: Var,
    pub composition_ce: f64,
    pub state_ce: f64,
    pub object_ce: f64,
}

pub fn loss_com(g: &mut Graph, logits: Var, targets: &TrainTargets) -> Result<Var> {
    g.cross_entropy(logits, &targets.composition)
}

fn relation_loss(g: &mut Graph, logits: LogitTriple, targets: &TrainTargets, w: LossWeights) -> Result<RelationLoss> {
    let comp = g.cross_entropy(logits.composition, &targets.composition)?;
    let state = g.cross_entropy(logits.state, &targets.state)?;
    let object = g.cross_entropy(logits.object, &targets.object)?;
    let primitives = g.add(state, object);
    let a = g.scale(comp, w.lambda1);
    let b = g.scale(primitives, w.lambda2);
    Ok(RelationLoss {
        loss: g.add(a, b),
        composition_ce: g.scalar(comp),
        state_ce: g.scalar(state),
        object_ce: g.scalar(object),
    })
}

/// `λ1·CE(c | x̄_so) + λ2·(CE(s | x_s) + CE(o | x̄_s))`.
pub fn loss_sor(g: &mut Graph, logits: LogitTriple, targets: &TrainTargets, w: LossWeights) -> Result<RelationLoss> {
    relation_loss(g, logits, targets, w)
}

/// `λ1·CE(c | x̄_os) + λ2·(CE(o | x_o) + CE(s | x̄_o))`.
pub fn loss_osr(g: &mut Graph, logits: LogitTriple, targets: &TrainTargets, w: LossWeights) -> Result<RelationLoss> {
    relation_loss(g, logits, targets, w)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub com: f64,
    pub sor: f64,
    pub osr: f64,
    pub total: f64,
    pub sor_composition_ce: f64,
    pub sor_state_ce: f64,
    pub sor_object_ce: f64,
    pub osr_composition_ce: f64,
    pub osr_object_ce: f64,
    pub osr_state_ce: f64,
}

/// Sums the losses of the branches present in `vars`.
pub fn total_loss(g: &mut Graph, vars: &BranchVars, targets: &TrainTargets, w: LossWeights) -> Result<(Var, LossBreakdown)> {
    let mut br = LossBreakdown::default();
    let mut terms = Vec::new();
    if let Some(com) = &vars.com {
        let l = loss_com(g, com.logits, targets)?;
        br.com = g.scalar(l);
        terms.push(l);
    }
    if let Some(sor) = &vars.sor {
        let l = loss_sor(g, LogitTriple::sor(sor), targets, w)?;
        br.sor = g.scalar(l.loss);
        br.sor_composition_ce = l.composition_ce;
        br.sor_state_ce = l.state_ce;
        br.sor_object_ce = l.object_ce;
        terms.push(l.loss);
    }
    if let Some(osr) = &vars.osr {
        let l = loss_osr(g, LogitTriple::osr(osr), targets, w)?;
        br.osr = g.scalar(l.loss);
        br.osr_composition_ce = l.composition_ce;
        br.osr_object_ce = l.object_ce;
        br.osr_state_ce = l.state_ce;
        terms.push(l.loss);
    }
    let mut it = terms.into_iter();
    let first = it.next().ok_or_else(|| Error::Config("no active branch".into()))?;
    let total = it.fold(first, |acc, t| g.add(acc, t));
    br.total = g.scalar(total);
    Ok((total, br))
}

/// Largest relative gradient error of every trainable tensor for the total
/// loss of `indices` through `mask`, against central differences with step
/// `h`. The model is unchanged on return.
pub fn check_loss_gradients(
    model: &mut LprModel,
    ds: &Dataset,
    indices: &[usize],
    mask: BranchMask,
    w: LossWeights,
    h: f64,
) -> Result<Vec<(String, f64)>> {
    let seen = ds.space.seen();
    let protos = ds.bank.prototypes(&ds.space, seen);
    let targets = TrainTargets::from_labels(&ds.space, seen, &ds.labels(indices))?;
    let x = ds.features(indices);
    let shape = model.clone();
    grad_check_all(&mut model.store, h, |g, store| {
        let m = LprModel {
            store: store.clone(),
            ..shape.clone()
        };
        let xv = g.input(x.clone());
        let pv = ProtoVars::bind(g, &protos);
        let vars = forward_branches(g, &m, xv, &pv, mask)?;
        Ok(total_loss(g, &vars, &targets, w)?.0)
    })
}

/// The seven distributions of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchProbs {
    pub com: Vec<f64>,
    pub sor_composition: Vec<f64>,
    pub sor_state: Vec<f64>,
    pub sor_object: Vec<f64>,
    pub osr_composition: Vec<f64>,
    pub osr_state: Vec<f64>,
    pub osr_object: Vec<f64>,
}

impl BranchProbs {
    /// Softmax of row `i` of every logit matrix.
    pub fn from_logits(l: &BranchLogits, i: usize) -> Result<Self> {
        Ok(Self {
            com: softmax(l.com.row(i))?,
            sor_composition: softmax(l.sor_composition.row(i))?,
            sor_state: softmax(l.sor_state.row(i))?,
            sor_object: softmax(l.sor_object.row(i))?,
            osr_composition: softmax(l.osr_composition.row(i))?,
            osr_state: softmax(l.osr_state.row(i))?,
            osr_object: softmax(l.osr_object.row(i))?,
        })
    }

    fn check(&self, candidates: &[Pair]) -> Result<()> {
        let named: [(&'static str, &Vec<f64>); 7] = [
            ("p(c|x_c)", &self.com),
            ("p(c|xbar_so)", &self.sor_composition),
            ("p(s|x_s)", &self.sor_state),
            ("p(o|xbar_s)", &self.sor_object),
            ("p(c|xbar_os)", &self.osr_composition),
            ("p(s|xbar_o)", &self.osr_state),
            ("p(o|x_o)", &self.osr_object),
        ];
        for (name, p) in named {
            let sum: f64 = p.iter().sum();
            if !((sum - 1.0).abs() <= 1e-6) || p.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::NotNormalized { name, sum });
            }
        }
        for (name, p) in [("p(c|x_c)", &self.com), ("p(c|xbar_so)", &self.sor_composition), ("p(c|xbar_os)", &self.osr_composition)] {
            if p.len() != candidates.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{name} has {} entries for {} candidates",
                    p.len(),
                    candidates.len()
                )));
            }
        }
        let (ns, no) = (self.sor_state.len(), self.sor_object.len());
        if self.osr_state.len() != ns || self.osr_object.len() != no {
            return Err(Error::ShapeMismatch("state/object distributions differ between branches".into()));
        }
        if let Some(p) = candidates.iter().find(|p| p.state >= ns || p.object >= no) {
            return Err(Error::ShapeMismatch(format!("candidate {p} outside the primitive distributions")));
        }
        Ok(())
    }
}

/// Fused score of every candidate:
///
/// `α·p(c|x_c) + β/2·[p(c|x̄_so) + p(s|x_s)·p(o|x̄_s)] + β/2·[p(c|x̄_os) + p(s|x̄_o)·p(o|x_o)]`
pub fn fuse(p: &BranchProbs, fw: FusionWeights, candidates: &[Pair]) -> Result<Vec<f64>> {
    fuse_masked(p, fw, BranchMask::FULL, candidates)
}

/// [`fuse`] restricted to the branches in `mask`, with weights from
/// [`FusionWeights::branch_weights`].
pub fn fuse_masked(p: &BranchProbs, fw: FusionWeights, mask: BranchMask, candidates: &[Pair]) -> Result<Vec<f64>> {
    fw.validate()?;
    p.check(candidates)?;
    let (wc, ws, wo) = fw.branch_weights(mask);
    Ok(candidates
        .iter()
        .enumerate()
        .map(|(c, pair)| {
            let (s, o) = (pair.state, pair.object);
            let mut score = 0.0;
            if mask.com {
                score += wc * p.com[c];
            }
            if mask.sor {
                score += ws * (p.sor_composition[c] + p.sor_state[s] * p.sor_object[o]);
            }
            if mask.osr {
                score += wo * (p.osr_composition[c] + p.osr_state[s] * p.osr_object[o]);
            }
            score
        })
        .collect())
}

/// Highest-scoring candidate; ties go to the lowest index.
pub fn predict(scores: &[f64]) -> usize {
    argmax(scores).expect("predict needs at least one score")
}
