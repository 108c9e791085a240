//! Stacked importance-propagation network with mean-pool readout.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataprep::{ImportanceVector, SampleTensor};
use crate::error::{Error, Result};
use crate::ip_layer::{ip_layer_forward, GateMode, GraphLayout, IpLayerConfig, IpLayerParams, LayerVars};
use crate::nn::{ParamStore, Tape, Tensor, Var};

/// Omics channels per gene: expression, methylation, mutation, copy number.
pub const FEATURE_DIM: usize = 4;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before taking logs.
pub const P_CLAMP: f64 = 1e-7;

/// Added to the per-channel variance in graph normalisation.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_out: usize,
    pub heads: usize,
    pub alpha: f64,
    pub theta: f64,
    pub dropout: f64,
    pub w_bce: f64,
    pub w_imp: f64,
    pub gate: GateMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let l = IpLayerConfig::default();
        ModelConfig {
            layers: 3,
            d_out: l.d_out,
            heads: l.heads,
            alpha: l.alpha,
            theta: l.theta,
            dropout: 0.2,
            w_bce: 1.0,
            w_imp: 0.01,
            gate: GateMode::Learned,
        }
    }
}

impl ModelConfig {
    pub fn layer_config(&self) -> IpLayerConfig {
        IpLayerConfig {
            alpha: self.alpha,
            theta: self.theta,
            heads: self.heads,
            d_out: self.d_out,
            gate: self.gate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout = {} outside [0, 1)", self.dropout)));
        }
        if !(self.w_bce >= 0.0 && self.w_imp >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        self.layer_config().validate()
    }
}

/// Forward-pass mode. Dropout masks in training mode are drawn from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub prob: f64,
    pub label: u8,
    pub final_importance: ImportanceVector,
}

impl Prediction {
    pub fn new(prob: f64, final_importance: ImportanceVector) -> Self {
        Prediction {
            prob,
            label: u8::from(prob >= 0.5),
            final_importance,
        }
    }
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub prob: Var,
    pub importance: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphPineModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn layer_prefix(l: usize) -> String {
    format!("layer{l}")
}

fn norm_name(l: usize, what: &str) -> String {
    format!("norm{l}.{what}")
}

impl GraphPineModel {
    /// Glorot-initialised weights from `seed`; norms start at γ = 1, β = 0, α_n = 1.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::build(config, |d_in, cfg| IpLayerParams::init(d_in, cfg, &mut rng))?;
        let a = (6.0 / (config.d_out + 1) as f64).sqrt();
        for v in m.params.get_mut("readout.w").expect("inserted").data_mut() {
            *v = rng.random_range(-a..a);
        }
        Ok(m)
    }

    /// Every parameter zero, including the norm scales.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut m = Self::build(config, IpLayerParams::zeros)?;
        for l in 0..config.layers {
            for what in ["gamma", "alpha"] {
                m.params
                    .get_mut(&norm_name(l, what))
                    .expect("inserted")
                    .scale_assign(0.0);
            }
        }
        Ok(m)
    }

    fn build(config: ModelConfig, mut layer: impl FnMut(usize, &IpLayerConfig) -> IpLayerParams) -> Result<Self> {
        config.validate()?;
        let lc = config.layer_config();
        let d = config.d_out;
        let mut params = ParamStore::new();
        for l in 0..config.layers {
            let d_in = if l == 0 { FEATURE_DIM } else { d };
            layer(d_in, &lc).insert_into(&mut params, &layer_prefix(l))?;
            params.insert(norm_name(l, "gamma"), Tensor::filled(1, d, 1.0))?;
            params.insert(norm_name(l, "beta"), Tensor::zeros(1, d))?;
            params.insert(norm_name(l, "alpha"), Tensor::filled(1, d, 1.0))?;
        }
        params.insert("readout.w", Tensor::zeros(d, 1))?;
        params.insert("readout.b", Tensor::zeros(1, 1))?;
        Ok(GraphPineModel { config, params })
    }

    /// Records a forward pass with parameters taken from `params`.
    pub fn forward_on(
        tape: &mut Tape,
        params: &ParamStore,
        config: &ModelConfig,
        sample: &SampleTensor,
        layout: &GraphLayout,
        mode: Mode,
    ) -> Result<ForwardVars> {
        let n = layout.nodes;
        if sample.features.shape() != [n, FEATURE_DIM] {
            return Err(Error::dims(
                "sample features",
                format!("[{n}, {FEATURE_DIM}]"),
                format!("{:?}", sample.features.shape()),
            ));
        }
        if sample.importance.len() != n {
            return Err(Error::dims("sample importance", n, sample.importance.len()));
        }
        let lc = config.layer_config();
        let mut rng = match mode {
            Mode::Train { seed } if config.dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        let mut x = tape.constant((*sample.features).clone());
        let mut imp = tape.constant(Tensor::column(sample.importance.to_vec()));
        for l in 0..config.layers {
            let vars = LayerVars::from_store(tape, params, &layer_prefix(l))?;
            let out = ip_layer_forward(tape, x, imp, layout, &vars, &lc)?;
            let gamma = tape.param(params, &norm_name(l, "gamma"))?;
            let beta = tape.param(params, &norm_name(l, "beta"))?;
            let alpha = tape.param(params, &norm_name(l, "alpha"))?;
            let mut h = graph_norm(tape, out.x_hat, gamma, beta, alpha)?;
            if let Some(rng) = rng.as_mut() {
                h = dropout(tape, h, config.dropout, rng)?;
            }
            x = tape.relu(h);
            imp = out.importance;
        }
        let pooled = tape.mean_rows(x)?;
        let w = tape.param(params, "readout.w")?;
        let b = tape.param(params, "readout.b")?;
        let z = tape.matmul(pooled, w)?;
        let z = tape.add(z, b)?;
        Ok(ForwardVars {
            prob: tape.sigmoid(z),
            importance: imp,
        })
    }

    pub fn forward(&self, sample: &SampleTensor, layout: &GraphLayout, mode: Mode) -> Result<Prediction> {
        let mut tape = Tape::new();
        let out = Self::forward_on(&mut tape, &self.params, &self.config, sample, layout, mode)?;
        Ok(Prediction::new(
            tape.value(out.prob).item(),
            ImportanceVector(tape.value(out.importance).data().to_vec()),
        ))
    }

    /// Inference-mode forward; label is 1 iff `prob ≥ 0.5`.
    pub fn predict(&self, sample: &SampleTensor, layout: &GraphLayout) -> Result<Prediction> {
        self.forward(sample, layout, Mode::Eval)
    }

    pub fn loss(&self, pred: &Prediction, y: u8) -> f64 {
        loss_value(
            pred.prob,
            y,
            &pred.final_importance,
            self.config.w_bce,
            self.config.w_imp,
        )
    }

    /// Loss and parameter gradients for one sample.
    pub fn sample_gradients(
        &self,
        sample: &SampleTensor,
        layout: &GraphLayout,
        mode: Mode,
    ) -> Result<(f64, crate::nn::Gradients)> {
        let mut tape = Tape::new();
        let loss = Self::loss_on(&mut tape, &self.params, &self.config, sample, layout, mode)?;
        let value = tape.value(loss).item();
        Ok((value, tape.gradients(loss, &self.params)?))
    }

    /// Records forward plus loss against `sample.label`.
    pub fn loss_on(
        tape: &mut Tape,
        params: &ParamStore,
        config: &ModelConfig,
        sample: &SampleTensor,
        layout: &GraphLayout,
        mode: Mode,
    ) -> Result<Var> {
        let out = Self::forward_on(tape, params, config, sample, layout, mode)?;
        loss_var(tape, out, sample.label, config.w_bce, config.w_imp)
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }
}

/// `w_bce · BCE(p, y) + w_imp · mean|I'|` on the tape.
pub fn loss_var(tape: &mut Tape, out: ForwardVars, y: u8, w_bce: f64, w_imp: f64) -> Result<Var> {
    let p = tape.clamp(out.prob, P_CLAMP, 1.0 - P_CLAMP);
    let q = if y == 1 {
        p
    } else {
        let neg = tape.scale(p, -1.0);
        tape.shift(neg, 1.0)
    };
    let ll = tape.ln(q);
    let bce = tape.scale(ll, -w_bce);
    let a = tape.abs(out.importance);
    let m = tape.mean(a)?;
    let reg = tape.scale(m, w_imp);
    tape.add(bce, reg)
}

/// Scalar form of [`loss_var`].
pub fn loss_value(prob: f64, y: u8, importance: &[f64], w_bce: f64, w_imp: f64) -> f64 {
    let p = prob.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let bce = if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
    let reg = if importance.is_empty() {
        0.0
    } else {
        importance.iter().map(|v| v.abs()).sum::<f64>() / importance.len() as f64
    };
    w_bce * bce + w_imp * reg
}

/// Per-channel normalisation over the nodes of one graph:
/// `γ ⊙ (x − α_n ⊙ μ) / √(mean((x − α_n ⊙ μ)²) + ε) + β`.
pub fn graph_norm(tape: &mut Tape, x: Var, gamma: Var, beta: Var, alpha: Var) -> Result<Var> {
    if tape.value(x).rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let mu = tape.mean_rows(x)?;
    let shift = tape.mul(mu, alpha)?;
    let neg = tape.scale(shift, -1.0);
    let centered = tape.add_row(x, neg)?;
    let sq = tape.mul(centered, centered)?;
    let var = tape.mean_rows(sq)?;
    let var = tape.shift(var, NORM_EPS);
    let inv_std = tape.powf(var, -0.5);
    let y = tape.mul_row(centered, inv_std)?;
    let y = tape.mul_row(y, gamma)?;
    tape.add_row(y, beta)
}

/// Inverted dropout: kept units are scaled by `1 / (1 − p)`.
pub fn dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
    let keep = 1.0 / (1.0 - p);
    let mask: Arc<[f64]> = (0..tape.value(x).len())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    tape.mask_mul(x, mask)
}
