use super::params::{AdapterParams, AttentionBlockParams};
use crate::diffmath::{Graph, ParamStore, Var};
use crate::error::Result;

/// `normalize(ρ·(relu(x·W1 + b1)·W2 + b2) + (1-ρ)·x)`, row-wise.
pub fn adapter_forward(g: &mut Graph, store: &ParamStore, x: Var, p: &AdapterParams) -> Result<Var> {
    let rho = p.residual_ratio;
    let w1 = g.param(store, p.w1);
    let b1 = g.param(store, p.b1);
    let w2 = g.param(store, p.w2);
    let b2 = g.param(store, p.b2);
    let h = g.matmul(x, w1);
    let h = g.add_row(h, b1);
    let h = g.relu(h);
    let y = g.matmul(h, w2);
    let y = g.add_row(y, b2);
    let y = g.scale(y, rho);
    let skip = g.scale(x, 1.0 - rho);
    let out = g.add(y, skip);
    g.normalize_rows(out)
}

/// Output of one cross-attention stage.
#[derive(Clone, Copy, Debug)]
pub struct Attended {
    /// Unit-norm primitive-informed features, one row per query.
    pub feature: Var,
    /// Attention weights over the prototype rows, one row per query.
    pub weights: Var,
}

/// Attends from each query row to the prototype rows.
///
/// `h = LN1(q̂ + softmax(q̂W_q (PW_k)ᵀ/√d) PW_v W_out)`, then
/// `LN2(h + MLP(h))`, unit-normalized. `q̂` is the unit-normalized query.
pub fn cross_attend(
    g: &mut Graph,
    store: &ParamStore,
    query: Var,
    prototypes: Var,
    block: &AttentionBlockParams,
) -> Result<Attended> {
    let d = g.value(query).cols();
    let query = g.normalize_rows(query)?;
    let w_q = g.param(store, block.w_q);
    let w_k = g.param(store, block.w_k);
    let w_v = g.param(store, block.w_v);
    let w_out = g.param(store, block.w_out);

    let q = g.matmul(query, w_q);
    let k = g.matmul(prototypes, w_k);
    let v = g.matmul(prototypes, w_v);
    let scores = g.matmul_t(q, k);
    let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
    let weights = g.softmax_rows(scores);
    let ctx = g.matmul(weights, v);
    let ctx = g.matmul(ctx, w_out);

    let gain1 = g.param(store, block.norm1_gain);
    let bias1 = g.param(store, block.norm1_bias);
    let h = g.add(query, ctx);
    let h = g.layer_norm(h, gain1, bias1);

    let m1 = g.param(store, block.mlp_w1);
    let mb1 = g.param(store, block.mlp_b1);
    let m2 = g.param(store, block.mlp_w2);
    let mb2 = g.param(store, block.mlp_b2);
    let m = g.matmul(h, m1);
    let m = g.add_row(m, mb1);
    let m = g.gelu(m);
    let m = g.matmul(m, m2);
    let m = g.add_row(m, mb2);

    let gain2 = g.param(store, block.norm2_gain);
    let bias2 = g.param(store, block.norm2_bias);
    let out = g.add(h, m);
    let out = g.layer_norm(out, gain2, bias2);
    let feature = g.normalize_rows(out)?;
    Ok(Attended { feature, weights })
}
