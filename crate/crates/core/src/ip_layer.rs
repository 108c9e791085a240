//! Importance propagation layer.
//!
//! One layer runs edge-aware attention over the gene graph, gates the
//! attention output against the (projected) input using the current node
//! importance, projects the gated features to a fresh importance score,
//! blends it with the previous importance and finally min-max normalises
//! and thresholds the result.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GeneGraph, EDGE_TYPE_COUNT};
use crate::nn::{ParamStore, Tape, Tensor, Var};

/// How the importance gate is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    #[default]
    Learned,
    /// Gate fixed at 1, so the layer output is the attention output and
    /// importance never reaches the features. Used for ablations.
    Bypass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IpLayerConfig {
    /// Weight of the previous importance in the decay blend.
    pub alpha: f64,
    /// Normalised importance below this is zeroed.
    pub theta: f64,
    pub heads: usize,
    pub d_out: usize,
    #[serde(default)]
    pub gate: GateMode,
}

impl Default for IpLayerConfig {
    fn default() -> Self {
        IpLayerConfig {
            alpha: 0.8,
            theta: 0.1,
            heads: 1,
            d_out: 64,
            gate: GateMode::Learned,
        }
    }
}

impl IpLayerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha = {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta = {} outside [0, 1]", self.theta)));
        }
        if self.heads == 0 || self.d_out == 0 || !self.d_out.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_out = {} must be a positive multiple of heads = {}",
                self.d_out, self.heads
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_out / self.heads
    }
}

/// Learnable tensors of one layer.
///
/// Head `k` of the attention uses columns `k·d_head .. (k+1)·d_head` of the
/// query, key, value and edge projections.
#[derive(Clone, Debug, PartialEq)]
pub struct IpLayerParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    /// `7 × d_out` projection of one-hot edge types.
    pub w_e: Tensor,
    /// `(d_out + 1) × d_out`; the last row multiplies the importance score.
    pub w_g: Tensor,
    pub b_g: Tensor,
    pub w_p: Tensor,
    pub b_p: Tensor,
    /// Residual width adapter `(weight, bias)`, present when `d_in != d_out`.
    pub input_proj: Option<(Tensor, Tensor)>,
}

const NAMES: [&str; 8] = ["w_q", "w_k", "w_v", "w_e", "w_g", "b_g", "w_p", "b_p"];

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

impl IpLayerParams {
    pub fn zeros(d_in: usize, cfg: &IpLayerConfig) -> Self {
        let d = cfg.d_out;
        IpLayerParams {
            w_q: Tensor::zeros(d_in, d),
            w_k: Tensor::zeros(d_in, d),
            w_v: Tensor::zeros(d_in, d),
            w_e: Tensor::zeros(EDGE_TYPE_COUNT, d),
            w_g: Tensor::zeros(d + 1, d),
            b_g: Tensor::zeros(1, d),
            w_p: Tensor::zeros(d, 1),
            b_p: Tensor::zeros(1, 1),
            input_proj: (d_in != d).then(|| (Tensor::zeros(d_in, d), Tensor::zeros(1, d))),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(d_in: usize, cfg: &IpLayerConfig, rng: &mut R) -> Self {
        let d = cfg.d_out;
        IpLayerParams {
            w_q: glorot(d_in, d, rng),
            w_k: glorot(d_in, d, rng),
            w_v: glorot(d_in, d, rng),
            w_e: glorot(EDGE_TYPE_COUNT, d, rng),
            w_g: glorot(d + 1, d, rng),
            b_g: Tensor::zeros(1, d),
            w_p: glorot(d, 1, rng),
            b_p: Tensor::zeros(1, 1),
            input_proj: (d_in != d).then(|| (glorot(d_in, d, rng), Tensor::zeros(1, d))),
        }
    }

    fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.w_q, &self.w_k, &self.w_v, &self.w_e, &self.w_g, &self.b_g, &self.w_p, &self.b_p,
        ]
    }

    /// Inserts every tensor as `{prefix}.{name}`.
    pub fn insert_into(&self, store: &mut ParamStore, prefix: &str) -> Result<()> {
        for (name, t) in NAMES.iter().zip(self.tensors()) {
            store.insert(format!("{prefix}.{name}"), t.clone())?;
        }
        if let Some((w, b)) = &self.input_proj {
            store.insert(format!("{prefix}.w_in"), w.clone())?;
            store.insert(format!("{prefix}.b_in"), b.clone())?;
        }
        Ok(())
    }

    /// Records the tensors as constants, for evaluating a layer outside a model.
    pub fn record(&self, tape: &mut Tape) -> LayerVars {
        let [w_q, w_k, w_v, w_e, w_g, b_g, w_p, b_p] = self.tensors().map(|t| tape.constant(t.clone()));
        LayerVars {
            w_q,
            w_k,
            w_v,
            w_e,
            w_g,
            b_g,
            w_p,
            b_p,
            input_proj: self
                .input_proj
                .as_ref()
                .map(|(w, b)| (tape.constant(w.clone()), tape.constant(b.clone()))),
        }
    }
}

/// A layer's parameters as values on a tape.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_e: Var,
    pub w_g: Var,
    pub b_g: Var,
    pub w_p: Var,
    pub b_p: Var,
    pub input_proj: Option<(Var, Var)>,
}

impl LayerVars {
    pub fn from_store(tape: &mut Tape, store: &ParamStore, prefix: &str) -> Result<Self> {
        let mut get = |n: &str| tape.param(store, &format!("{prefix}.{n}"));
        let vars = LayerVars {
            w_q: get("w_q")?,
            w_k: get("w_k")?,
            w_v: get("w_v")?,
            w_e: get("w_e")?,
            w_g: get("w_g")?,
            b_g: get("b_g")?,
            w_p: get("w_p")?,
            b_p: get("b_p")?,
            input_proj: None,
        };
        let input_proj = if store.get(&format!("{prefix}.w_in")).is_some() {
            Some((get("w_in")?, get("b_in")?))
        } else {
            None
        };
        Ok(LayerVars { input_proj, ..vars })
    }
}

/// Message-passing index arrays for a graph, with one self-loop per node.
///
/// Edge `e` carries a message from `src[e]` to `dst[e]`; self-loops have an
/// all-zero edge attribute.
#[derive(Clone, Debug)]
pub struct GraphLayout {
    pub nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub edge_attr: Tensor,
}

impl GraphLayout {
    pub fn new(g: &GeneGraph) -> Self {
        let n = g.node_count();
        let m = g.edge_count() + n;
        let mut src = Vec::with_capacity(m);
        let mut dst = Vec::with_capacity(m);
        let mut attr = Tensor::zeros(m, EDGE_TYPE_COUNT);
        for (e, edge) in g.edges().iter().enumerate() {
            src.push(edge.src);
            dst.push(edge.dst);
            attr.set(e, edge.kind.index(), 1.0);
        }
        for i in 0..n {
            src.push(i);
            dst.push(i);
        }
        GraphLayout {
            nodes: n,
            src: src.into(),
            dst: dst.into(),
            edge_attr: attr,
        }
    }

    pub fn messages(&self) -> usize {
        self.src.len()
    }
}

/// Multi-head attention with additive edge embeddings.
///
/// For node `i` and each head, `score(i←j) = q_i · (k_j + e_ij) / √d_head`
/// over in-neighbours and the self-loop; the output is the softmax-weighted
/// sum of `v_j + e_ij`, heads concatenated.
pub fn edge_attention_conv(
    tape: &mut Tape,
    x: Var,
    layout: &GraphLayout,
    vars: &LayerVars,
    heads: usize,
) -> Result<Var> {
    let xt = tape.value(x);
    if xt.rows() != layout.nodes {
        return Err(Error::dims("edge_attention_conv nodes", layout.nodes, xt.rows()));
    }
    let d_in = tape.value(vars.w_q).rows();
    if xt.cols() != d_in {
        return Err(Error::dims("edge_attention_conv d_in", d_in, xt.cols()));
    }
    let d_out = tape.value(vars.w_q).cols();
    if heads == 0 || !d_out.is_multiple_of(heads) {
        return Err(Error::dims("attention heads", format!("divisor of {d_out}"), heads));
    }
    let d_head = d_out / heads;

    let q = tape.matmul(x, vars.w_q)?;
    let k = tape.matmul(x, vars.w_k)?;
    let v = tape.matmul(x, vars.w_v)?;
    let attr = tape.constant(layout.edge_attr.clone());
    let e = tape.matmul(attr, vars.w_e)?;

    let q_dst = tape.gather_rows(q, Arc::clone(&layout.dst))?;
    let k_src = tape.gather_rows(k, Arc::clone(&layout.src))?;
    let v_src = tape.gather_rows(v, Arc::clone(&layout.src))?;
    let keys = tape.add(k_src, e)?;
    let values = tape.add(v_src, e)?;
    let inv_sqrt = 1.0 / (d_head as f64).sqrt();

    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q_dst, keys, values)
        } else {
            (
                tape.slice_cols(q_dst, h * d_head, d_head)?,
                tape.slice_cols(keys, h * d_head, d_head)?,
                tape.slice_cols(values, h * d_head, d_head)?,
            )
        };
        let raw = tape.row_dot(qh, kh)?;
        let scores = tape.scale(raw, inv_sqrt);
        let weights = tape.segment_softmax(scores, Arc::clone(&layout.dst), layout.nodes)?;
        let msgs = tape.mul_col(vh, weights)?;
        outs.push(tape.scatter_add_rows(msgs, Arc::clone(&layout.dst), layout.nodes)?);
    }
    if outs.len() == 1 {
        Ok(outs[0])
    } else {
        tape.concat(&outs)
    }
}

/// `x` itself when widths agree, else the learned input projection.
pub fn project_input(tape: &mut Tape, x: Var, vars: &LayerVars) -> Result<Var> {
    match vars.input_proj {
        Some((w, b)) => {
            let xw = tape.matmul(x, w)?;
            tape.add_row(xw, b)
        }
        None => {
            let want = tape.value(vars.w_q).cols();
            let got = tape.value(x).cols();
            if want != got {
                return Err(Error::dims("residual width", want, got));
            }
            Ok(x)
        }
    }
}

/// Returns `(gate, gated features)` where
/// `gate = σ([h ‖ I] W_g + b_g)` and `x̂ = gate ⊙ h + (1 − gate) ⊙ x_proj`.
pub fn importance_gate(
    tape: &mut Tape,
    h: Var,
    x_proj: Var,
    importance: Var,
    vars: &LayerVars,
    mode: GateMode,
) -> Result<(Var, Var)> {
    let [n, d] = tape.value(h).shape();
    if tape.value(x_proj).shape() != [n, d] {
        return Err(Error::dims(
            "importance_gate x_proj",
            format!("[{n}, {d}]"),
            format!("{:?}", tape.value(x_proj).shape()),
        ));
    }
    if tape.value(importance).shape() != [n, 1] {
        return Err(Error::dims(
            "importance_gate importance",
            format!("[{n}, 1]"),
            format!("{:?}", tape.value(importance).shape()),
        ));
    }
    match mode {
        GateMode::Bypass => {
            let gate = tape.constant(Tensor::filled(n, d, 1.0));
            Ok((gate, h))
        }
        GateMode::Learned => {
            let joined = tape.concat(&[h, importance])?;
            let pre = tape.matmul(joined, vars.w_g)?;
            let pre = tape.add_row(pre, vars.b_g)?;
            let gate = tape.sigmoid(pre);
            let delta = tape.sub(h, x_proj)?;
            let gated = tape.mul(gate, delta)?;
            let x_hat = tape.add(x_proj, gated)?;
            Ok((gate, x_hat))
        }
    }
}

/// `I'_i = W_p x̂_i + b_p`, an `n × 1` column.
pub fn propagate_importance(tape: &mut Tape, x_hat: Var, vars: &LayerVars) -> Result<Var> {
    let proj = tape.matmul(x_hat, vars.w_p)?;
    tape.add_scalar(proj, vars.b_p)
}

/// Relative spread below which a blended importance vector counts as constant.
pub const DEGENERATE_RANGE: f64 = 1e-12;

/// Blends `alpha · prev + (1 − alpha) · new`, min-max normalises and zeroes
/// entries below `theta`. A constant blend maps to all ones.
pub fn decay_normalize_threshold(tape: &mut Tape, prev: Var, new: Var, cfg: &IpLayerConfig) -> Result<Var> {
    let a = tape.scale(prev, cfg.alpha);
    let b = tape.scale(new, 1.0 - cfg.alpha);
    let blend = tape.add(a, b)?;
    let lo = tape.min_all(blend)?;
    let hi = tape.max_all(blend)?;
    let (lo_v, hi_v) = (tape.value(lo).item(), tape.value(hi).item());
    let [n, c] = tape.value(blend).shape();
    if hi_v - lo_v <= DEGENERATE_RANGE * hi_v.abs().max(lo_v.abs()).max(1.0) {
        return Ok(tape.constant(Tensor::filled(n, c, 1.0)));
    }
    let neg_lo = tape.scale(lo, -1.0);
    let shifted = tape.add_scalar(blend, neg_lo)?;
    let range = tape.sub(hi, lo)?;
    let norm = tape.div_scalar(shifted, range)?;
    let mask: Arc<[f64]> = tape
        .value(norm)
        .data()
        .iter()
        .map(|&v| if v >= cfg.theta { 1.0 } else { 0.0 })
        .collect();
    tape.mask_mul(norm, mask)
}

#[derive(Clone, Copy, Debug)]
pub struct IpLayerOutput {
    pub x_hat: Var,
    pub gate: Var,
    /// Propagated importance before blending.
    pub propagated: Var,
    pub importance: Var,
}

/// Attention, gating, importance projection, decay, normalisation and
/// threshold, in that order.
pub fn ip_layer_forward(
    tape: &mut Tape,
    x: Var,
    importance: Var,
    layout: &GraphLayout,
    vars: &LayerVars,
    cfg: &IpLayerConfig,
) -> Result<IpLayerOutput> {
    let h = edge_attention_conv(tape, x, layout, vars, cfg.heads)?;
    let x_proj = project_input(tape, x, vars)?;
    let (gate, x_hat) = importance_gate(tape, h, x_proj, importance, vars, cfg.gate)?;
    let propagated = propagate_importance(tape, x_hat, vars)?;
    let importance = decay_normalize_threshold(tape, importance, propagated, cfg)?;
    Ok(IpLayerOutput {
        x_hat,
        gate,
        propagated,
        importance,
    })
}
