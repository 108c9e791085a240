//! Shared fixtures and a loop-based reference implementation of the layer and model.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::sync::Arc;

use graphpine::dataprep::{ImportanceVector, SampleTensor};
use graphpine::ip_layer::{GateMode, GraphLayout, IpLayerConfig, IpLayerParams};
use graphpine::model::{ModelConfig, FEATURE_DIM};
use graphpine::nn::{ParamStore, Tensor};
use graphpine::{EdgeType, GeneGraph};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

/// Random typed graph on `n` nodes; edges are `(src, kind index, dst)`.
pub fn random_edges<R: RngCore>(n: usize, m: usize, rng: &mut R) -> Vec<(usize, usize, usize)> {
    let mut seen = BTreeSet::new();
    let cap = n * (n - 1) * EdgeType::ALL.len();
    let m = m.min(cap);
    while seen.len() < m {
        let s = rng.random_range(0..n);
        let d = rng.random_range(0..n);
        let k = rng.random_range(0..EdgeType::ALL.len());
        if s != d {
            seen.insert((s, k, d));
        }
    }
    seen.into_iter().collect()
}

/// Builds a graph whose node `i` is named `names[i]`.
pub fn build_graph(names: &[String], edges: &[(usize, usize, usize)]) -> GeneGraph {
    let typed: Vec<(String, String, String)> = edges
        .iter()
        .map(|&(s, k, d)| (names[s].clone(), EdgeType::ALL[k].name().to_string(), names[d].clone()))
        .collect();
    GeneGraph::build(names, &typed).unwrap()
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("g{i:02}")).collect()
}

pub fn random_matrix<R: RngCore>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn random_importance<R: RngCore>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(0.5..=1.0)
            }
        })
        .collect()
}

pub fn sample(features: Tensor, importance: Vec<f64>, label: u8) -> SampleTensor {
    SampleTensor {
        drug_id: "d".into(),
        cell_id: "c".into(),
        features: Arc::new(features),
        importance: Arc::new(ImportanceVector(importance)),
        label,
    }
}

/// Moves node `i` to position `perm[i]`.
pub fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(t.rows(), t.cols());
    for (i, &p) in perm.iter().enumerate() {
        for c in 0..t.cols() {
            out.set(p, c, t.get(i, c));
        }
    }
    out
}

pub fn permute_vec(v: &[f64], perm: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, &p) in perm.iter().enumerate() {
        out[p] = v[i];
    }
    out
}

pub fn permute_edges(edges: &[(usize, usize, usize)], perm: &[usize]) -> Vec<(usize, usize, usize)> {
    edges.iter().map(|&(s, k, d)| (perm[s], k, perm[d])).collect()
}

pub fn to_mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

fn mm(a: &Mat, w: &Tensor) -> Mat {
    a.iter()
        .map(|row| {
            (0..w.cols())
                .map(|c| row.iter().enumerate().map(|(r, x)| x * w.get(r, c)).sum())
                .collect()
        })
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub struct LayerOracle {
    pub h: Mat,
    pub gate: Mat,
    pub x_hat: Mat,
    pub importance: Vec<f64>,
}

/// Straight-loop evaluation of one layer.
pub fn oracle_layer(
    x: &Mat,
    imp: &[f64],
    edges: &[(usize, usize, usize)],
    p: &IpLayerParams,
    cfg: &IpLayerConfig,
) -> LayerOracle {
    let n = x.len();
    let d = cfg.d_out;
    let dh = d / cfg.heads;
    let (q, k, v) = (mm(x, &p.w_q), mm(x, &p.w_k), mm(x, &p.w_v));
    let mut h = vec![vec![0.0; d]; n];
    for i in 0..n {
        // incoming messages: (source, edge embedding)
        let mut msgs: Vec<(usize, Vec<f64>)> = edges
            .iter()
            .filter(|e| e.2 == i)
            .map(|&(s, kind, _)| (s, p.w_e.row_slice(kind).to_vec()))
            .collect();
        msgs.push((i, vec![0.0; d]));
        for head in 0..cfg.heads {
            let cols = head * dh..(head + 1) * dh;
            let scores: Vec<f64> = msgs
                .iter()
                .map(|(j, e)| cols.clone().map(|c| q[i][c] * (k[*j][c] + e[c])).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ex: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
            let z: f64 = ex.iter().sum();
            for ((j, e), w) in msgs.iter().zip(&ex) {
                for c in cols.clone() {
                    h[i][c] += w / z * (v[*j][c] + e[c]);
                }
            }
        }
    }
    let x_proj = match &p.input_proj {
        Some((w, b)) => mm(x, w)
            .into_iter()
            .map(|row| row.iter().enumerate().map(|(c, v)| v + b.get(0, c)).collect())
            .collect(),
        None => x.clone(),
    };
    let (gate, x_hat) = match cfg.gate {
        GateMode::Bypass => (vec![vec![1.0; d]; n], h.clone()),
        GateMode::Learned => {
            let mut g = vec![vec![0.0; d]; n];
            let mut xh = vec![vec![0.0; d]; n];
            for i in 0..n {
                for c in 0..d {
                    let mut pre = p.b_g.get(0, c) + imp[i] * p.w_g.get(d, c);
                    for r in 0..d {
                        pre += h[i][r] * p.w_g.get(r, c);
                    }
                    g[i][c] = sigmoid(pre);
                    xh[i][c] = x_proj[i][c] + g[i][c] * (h[i][c] - x_proj[i][c]);
                }
            }
            (g, xh)
        }
    };
    let new: Vec<f64> = x_hat
        .iter()
        .map(|row| row.iter().enumerate().map(|(c, v)| v * p.w_p.get(c, 0)).sum::<f64>() + p.b_p.item())
        .collect();
    LayerOracle {
        h,
        gate,
        x_hat,
        importance: oracle_decay(imp, &new, cfg.alpha, cfg.theta),
    }
}

pub fn oracle_decay(prev: &[f64], new: &[f64], alpha: f64, theta: f64) -> Vec<f64> {
    let blend: Vec<f64> = prev
        .iter()
        .zip(new)
        .map(|(p, n)| alpha * p + (1.0 - alpha) * n)
        .collect();
    let lo = blend.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = blend.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return vec![1.0; prev.len()];
    }
    blend
        .iter()
        .map(|b| {
            let v = (b - lo) / (hi - lo);
            if v >= theta {
                v
            } else {
                0.0
            }
        })
        .collect()
}

fn layer_params(store: &ParamStore, l: usize) -> IpLayerParams {
    let get = |n: &str| store.get(&format!("layer{l}.{n}")).unwrap().clone();
    IpLayerParams {
        w_q: get("w_q"),
        w_k: get("w_k"),
        w_v: get("w_v"),
        w_e: get("w_e"),
        w_g: get("w_g"),
        b_g: get("b_g"),
        w_p: get("w_p"),
        b_p: get("b_p"),
        input_proj: store.get(&format!("layer{l}.w_in")).map(|w| (w.clone(), get("b_in"))),
    }
}

/// Eval-mode model forward with plain loops: `(probability, final importance)`.
pub fn oracle_model(
    store: &ParamStore,
    cfg: &ModelConfig,
    features: &Tensor,
    imp: &[f64],
    edges: &[(usize, usize, usize)],
) -> (f64, Vec<f64>) {
    assert_eq!(features.cols(), FEATURE_DIM);
    let lc = cfg.layer_config();
    let mut x = to_mat(features);
    let mut imp = imp.to_vec();
    let n = x.len();
    for l in 0..cfg.layers {
        let out = oracle_layer(&x, &imp, edges, &layer_params(store, l), &lc);
        let gamma = store.get(&format!("norm{l}.gamma")).unwrap();
        let beta = store.get(&format!("norm{l}.beta")).unwrap();
        let a_n = store.get(&format!("norm{l}.alpha")).unwrap();
        let d = cfg.d_out;
        let mut next = vec![vec![0.0; d]; n];
        for c in 0..d {
            let mu = out.x_hat.iter().map(|r| r[c]).sum::<f64>() / n as f64;
            let centered: Vec<f64> = out.x_hat.iter().map(|r| r[c] - a_n.get(0, c) * mu).collect();
            let var = centered.iter().map(|v| v * v).sum::<f64>() / n as f64 + 1e-5;
            for i in 0..n {
                let y = gamma.get(0, c) * centered[i] / var.sqrt() + beta.get(0, c);
                next[i][c] = y.max(0.0);
            }
        }
        x = next;
        imp = out.importance;
    }
    let w = store.get("readout.w").unwrap();
    let b = store.get("readout.b").unwrap().item();
    let z: f64 = (0..cfg.d_out)
        .map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64 * w.get(c, 0))
        .sum::<f64>()
        + b;
    (sigmoid(z), imp)
}

pub fn max_diff(a: &Mat, b: &Tensor) -> f64 {
    let mut m: f64 = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m = m.max((v - b.get(r, c)).abs());
        }
    }
    m
}

/// Layer outputs evaluated through the library on one graph.
pub struct LayerRun {
    pub gate: Tensor,
    pub x_hat: Tensor,
    pub importance: Vec<f64>,
}

pub fn run_layer(g: &GeneGraph, x: &Tensor, imp: &[f64], p: &IpLayerParams, cfg: &IpLayerConfig) -> LayerRun {
    use graphpine::ip_layer::{ip_layer_forward, GraphLayout};
    use graphpine::nn::Tape;
    let layout = GraphLayout::new(g);
    let mut tape = Tape::new();
    let vars = p.record(&mut tape);
    let xv = tape.constant(x.clone());
    let iv = tape.constant(Tensor::column(imp.to_vec()));
    let out = ip_layer_forward(&mut tape, xv, iv, &layout, &vars, cfg).unwrap();
    LayerRun {
        gate: tape.value(out.gate).clone(),
        x_hat: tape.value(out.x_hat).clone(),
        importance: tape.value(out.importance).data().to_vec(),
    }
}

fn decay_through_tape(prev: &[f64], new: &[f64], cfg: &IpLayerConfig) -> Vec<f64> {
    use graphpine::ip_layer::decay_normalize_threshold;
    use graphpine::nn::Tape;
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::column(prev.to_vec()));
    let b = tape.constant(Tensor::column(new.to_vec()));
    let out = decay_normalize_threshold(&mut tape, a, b, cfg).unwrap();
    tape.value(out).data().to_vec()
}

/// One randomized layer case: gate range, importance range, loop oracle,
/// decay endpoint, degenerate range and node-permutation equivariance.
pub fn ip_layer_case(seed: u64) -> std::result::Result<(), String> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=10);
    let m = rng.random_range(0..=2 * n);
    let heads = rng.random_range(1..=2);
    let d_out = heads * rng.random_range(1..=3);
    let d_in = if rng.random_bool(0.3) {
        d_out
    } else {
        rng.random_range(1..=5)
    };
    let cfg = IpLayerConfig {
        alpha: rng.random_range(0.0..=1.0),
        theta: rng.random_range(0.0..=0.6),
        heads,
        d_out,
        gate: GateMode::Learned,
    };
    let mut p = IpLayerParams::init(d_in, &cfg, &mut rng);
    p.b_g = random_matrix(1, d_out, 0.5, &mut rng);
    p.b_p = random_matrix(1, 1, 0.5, &mut rng);
    let edges = random_edges(n, m, &mut rng);
    let ids = names(n);
    let g = build_graph(&ids, &edges);
    let x = random_matrix(n, d_in, 1.5, &mut rng);
    let imp = random_importance(n, &mut rng);

    let run = run_layer(&g, &x, &imp, &p, &cfg);
    if let Some(v) = run.gate.data().iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(format!("gate {v} outside (0, 1)"));
    }
    if let Some(v) = run
        .importance
        .iter()
        .find(|&&v| v != 0.0 && !(cfg.theta..=1.0).contains(&v))
    {
        return Err(format!("importance {v} outside {{0}} ∪ [{}, 1]", cfg.theta));
    }

    let oracle = oracle_layer(&to_mat(&x), &imp, &edges, &p, &cfg);
    let gate_err = max_diff(&oracle.gate, &run.gate);
    let xh_err = max_diff(&oracle.x_hat, &run.x_hat);
    let imp_err = oracle
        .importance
        .iter()
        .zip(&run.importance)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if gate_err.max(xh_err).max(imp_err) > 1e-10 {
        return Err(format!(
            "oracle mismatch: gate {gate_err:e}, x_hat {xh_err:e}, importance {imp_err:e}"
        ));
    }

    // α = 1, θ = 0: exactly the min-max normalisation of the previous importance
    let prev: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    let new: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let end_cfg = IpLayerConfig {
        alpha: 1.0,
        theta: 0.0,
        ..cfg
    };
    let lo = prev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = prev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let want: Vec<f64> = prev.iter().map(|v| (v - lo) / (hi - lo)).collect();
    if decay_through_tape(&prev, &new, &end_cfg) != want {
        return Err("α = 1, θ = 0 endpoint is not the exact min-max of the previous importance".into());
    }

    // constant blend (exactly or within relative 1e-14) maps to all ones
    let c = rng.random_range(-3.0..3.0);
    let flat_prev = vec![c; n];
    let mut near = vec![c; n];
    near[0] = c * (1.0 + 1e-14);
    for (pv, nv) in [(&flat_prev, &flat_prev), (&flat_prev, &near)] {
        if decay_through_tape(pv, nv, &cfg).iter().any(|&v| v != 1.0) {
            return Err("degenerate range did not yield all ones".into());
        }
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut pnames = vec![String::new(); n];
    for (i, &pi) in perm.iter().enumerate() {
        pnames[pi] = ids[i].clone();
    }
    let pg = build_graph(&pnames, &permute_edges(&edges, &perm));
    let prun = run_layer(&pg, &permute_rows(&x, &perm), &permute_vec(&imp, &perm), &p, &cfg);
    let e1 = permute_rows(&run.gate, &perm).max_abs_diff(&prun.gate);
    let e2 = permute_rows(&run.x_hat, &perm).max_abs_diff(&prun.x_hat);
    let e3 = permute_vec(&run.importance, &perm)
        .iter()
        .zip(&prun.importance)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if e1.max(e2).max(e3) > 1e-10 {
        return Err(format!(
            "permutation equivariance: gate {e1:e}, x_hat {e2:e}, importance {e3:e}"
        ));
    }
    Ok(())
}

/// Six-node typed graph with one random sample.
pub fn six_node(seed: u64, label: u8) -> (GraphLayout, SampleTensor) {
    let ids = ["a", "b", "c", "d", "e", "f"];
    let edges = [
        ("a", "interacts-with", "b"),
        ("b", "controls-expression-of", "c"),
        ("c", "in-complex-with", "a"),
        ("d", "controls-state-change-of", "a"),
        ("e", "interacts-with", "d"),
        ("b", "catalysis-precedes", "f"),
        ("f", "controls-transport-of", "e"),
    ];
    let g = GeneGraph::build(&ids, &edges).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feats = (0..6 * FEATURE_DIM).map(|_| rng.random_range(-1.5..1.5)).collect();
    let imp = (0..6)
        .map(|i| if i % 3 == 1 { 0.0 } else { rng.random_range(0.5..1.0) })
        .collect();
    let s = SampleTensor {
        drug_id: "drug".into(),
        cell_id: "cell".into(),
        features: Arc::new(Tensor::from_vec(6, FEATURE_DIM, feats).unwrap()),
        importance: Arc::new(ImportanceVector(imp)),
        label,
    };
    (GraphLayout::new(&g), s)
}

pub mod checkpoint;
pub mod oracles;
pub mod prep;
pub mod stopping;
