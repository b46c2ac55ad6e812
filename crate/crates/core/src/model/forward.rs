//! Branch forward passes.
//!
//! All functions operate on a batch: `x` holds one image feature per row.
//! The relation branches share one implementation, [`relation_branch`];
//! `sor` runs it with (states, objects), `osr` with (objects, states).

use super::layers::{adapter_forward, cross_attend};
use super::params::{AdapterParams, AttentionBlockParams, BranchMask, LprModel};
use crate::dataset::Prototypes;
use crate::diffmath::{Graph, Tensor, Var};
use crate::error::Result;

/// Prototype matrices bound into a graph as constants.
#[derive(Clone, Copy, Debug)]
pub struct ProtoVars {
    pub states: Var,
    pub objects: Var,
    pub compositions: Var,
}

impl ProtoVars {
    pub fn bind(g: &mut Graph, protos: &Prototypes) -> Self {
        Self {
            states: g.input(protos.states.clone()),
            objects: g.input(protos.objects.clone()),
            compositions: g.input(protos.compositions.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ComVars {
    pub feature: Var,
    pub logits: Var,
}

/// Nodes of one relation branch. "first" is the primitive attended first
/// (states for `sor`, objects for `osr`).
#[derive(Clone, Copy, Debug)]
pub struct RelationVars {
    pub entry: Var,
    pub informed: Var,
    pub conditioned: Var,
    pub first_attention: Var,
    pub second_attention: Var,
    pub first_logits: Var,
    pub second_logits: Var,
    pub composition_logits: Var,
}

/// Graph nodes of the active branches.
#[derive(Clone, Copy, Debug)]
pub struct BranchVars {
    pub com: Option<ComVars>,
    pub sor: Option<RelationVars>,
    pub osr: Option<RelationVars>,
}

/// `1/τ` as a graph node, from the stored `log τ`.
pub fn inverse_temperature(g: &mut Graph, model: &LprModel) -> Var {
    let log_tau = g.param(&model.store, model.params.log_tau);
    let neg = g.scale(log_tau, -1.0);
    g.exp(neg)
}

/// Cosine logits of unit-norm rows against unit-norm prototypes, over τ.
fn cosine_logits(g: &mut Graph, features: Var, prototypes: Var, inv_tau: Var) -> Var {
    let cos = g.matmul_t(features, prototypes);
    g.scale_by(cos, inv_tau)
}

pub fn forward_com(g: &mut Graph, model: &LprModel, x: Var, protos: &ProtoVars, inv_tau: Var) -> Result<ComVars> {
    let feature = adapter_forward(g, &model.store, x, &model.params.com_adapter)?;
    let logits = cosine_logits(g, feature, protos.compositions, inv_tau);
    Ok(ComVars { feature, logits })
}

#[allow(clippy::too_many_arguments)]
pub fn relation_branch(
    g: &mut Graph,
    model: &LprModel,
    x: Var,
    adapter: &AdapterParams,
    first: Var,
    first_block: &AttentionBlockParams,
    second: Var,
    second_block: &AttentionBlockParams,
    compositions: Var,
    inv_tau: Var,
) -> Result<RelationVars> {
    let store = &model.store;
    let entry = adapter_forward(g, store, x, adapter)?;
    let stage1 = cross_attend(g, store, entry, first, first_block)?;
    let stage2 = cross_attend(g, store, stage1.feature, second, second_block)?;
    Ok(RelationVars {
        entry,
        informed: stage1.feature,
        conditioned: stage2.feature,
        first_attention: stage1.weights,
        second_attention: stage2.weights,
        first_logits: cosine_logits(g, entry, first, inv_tau),
        second_logits: cosine_logits(g, stage1.feature, second, inv_tau),
        composition_logits: cosine_logits(g, stage2.feature, compositions, inv_tau),
    })
}

/// State → object branch: `first_logits` are state logits from `x_s`,
/// `second_logits` object logits from `x̄_s`.
pub fn forward_sor(g: &mut Graph, model: &LprModel, x: Var, protos: &ProtoVars, inv_tau: Var) -> Result<RelationVars> {
    let p = &model.params;
    relation_branch(
        g,
        model,
        x,
        &p.sor_adapter,
        protos.states,
        &p.sor_stage1,
        protos.objects,
        &p.sor_stage2,
        protos.compositions,
        inv_tau,
    )
}

/// Object → state branch: `first_logits` are object logits from `x_o`,
/// `second_logits` state logits from `x̄_o`.
pub fn forward_osr(g: &mut Graph, model: &LprModel, x: Var, protos: &ProtoVars, inv_tau: Var) -> Result<RelationVars> {
    let p = &model.params;
    relation_branch(
        g,
        model,
        x,
        &p.osr_adapter,
        protos.objects,
        &p.osr_stage1,
        protos.states,
        &p.osr_stage2,
        protos.compositions,
        inv_tau,
    )
}

/// Runs the branches enabled in `mask`.
pub fn forward_branches(
    g: &mut Graph,
    model: &LprModel,
    x: Var,
    protos: &ProtoVars,
    mask: BranchMask,
) -> Result<BranchVars> {
    let inv_tau = inverse_temperature(g, model);
    Ok(BranchVars {
        com: mask
            .com
            .then(|| forward_com(g, model, x, protos, inv_tau))
            .transpose()?,
        sor: mask
            .sor
            .then(|| forward_sor(g, model, x, protos, inv_tau))
            .transpose()?,
        osr: mask
            .osr
            .then(|| forward_osr(g, model, x, protos, inv_tau))
            .transpose()?,
    })
}

/// The seven logit matrices, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchLogits {
    /// c | x_c
    pub com: Tensor,
    /// c | x̄_so
    pub sor_composition: Tensor,
    /// s | x_s
    pub sor_state: Tensor,
    /// o | x̄_s
    pub sor_object: Tensor,
    /// c | x̄_os
    pub osr_composition: Tensor,
    /// s | x̄_o
    pub osr_state: Tensor,
    /// o | x_o
    pub osr_object: Tensor,
}

/// Every intermediate feature of one batch, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutputs {
    pub x_c: Tensor,
    pub x_s: Tensor,
    pub x_o: Tensor,
    pub xbar_s: Tensor,
    pub xbar_o: Tensor,
    pub xbar_so: Tensor,
    pub xbar_os: Tensor,
    /// Attention over states in the first `sor` stage.
    pub attn_state: Tensor,
    /// Attention over objects in the first `osr` stage.
    pub attn_object: Tensor,
    pub logits: BranchLogits,
}

/// Runs all three branches on a batch of features.
pub fn forward_all(model: &LprModel, features: &Tensor, protos: &Prototypes) -> Result<BranchOutputs> {
    let mut g = Graph::new();
    let x = g.input(features.clone());
    let pv = ProtoVars::bind(&mut g, protos);
    let vars = forward_branches(&mut g, model, x, &pv, BranchMask::FULL)?;
    let (com, sor, osr) = (vars.com.unwrap(), vars.sor.unwrap(), vars.osr.unwrap());
    let v = |var: Var| g.value(var).clone();
    Ok(BranchOutputs {
        x_c: v(com.feature),
        x_s: v(sor.entry),
        x_o: v(osr.entry),
        xbar_s: v(sor.informed),
        xbar_o: v(osr.informed),
        xbar_so: v(sor.conditioned),
        xbar_os: v(osr.conditioned),
        attn_state: v(sor.first_attention),
        attn_object: v(osr.first_attention),
        logits: BranchLogits {
            com: v(com.logits),
            sor_composition: v(sor.composition_logits),
            sor_state: v(sor.first_logits),
            sor_object: v(sor.second_logits),
            osr_composition: v(osr.composition_logits),
            osr_state: v(osr.second_logits),
            osr_object: v(osr.first_logits),
        },
    })
}
