//! Independent brute-force oracles shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use iohunter::model::{Ablation, Architecture, GraphInputs, ModelConfig, Params};
use iohunter::simnet::{fuse, BipartiteGraph, FusedNetwork, SimilarityNetwork, TfidfVariant, TraceKind};
use iohunter::tensor::Tape;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random user × entity count table with `n ≤ max_users`, `≤ max_entities`.
pub fn random_bipartite(r: &mut ChaCha8Rng, max_users: usize, max_entities: usize) -> BipartiteGraph {
    let n = r.random_range(1..=max_users);
    let m = r.random_range(1..=max_entities);
    let density = r.random_range(0.05..0.6);
    let counts = (0..n)
        .map(|_| {
            (0..m as u32)
                .filter_map(|e| r.random_bool(density).then(|| (e, r.random_range(1..4))))
                .collect()
        })
        .collect();
    BipartiteGraph {
        kind: TraceKind::CoHashtag,
        user_count: n,
        entities: (0..m).map(|e| format!("e{e}")).collect(),
        counts,
    }
}

/// Dense TF-IDF matrix and all-pairs cosine, keeping pairs with weight > tau.
pub fn dense_projection(bg: &BipartiteGraph, variant: TfidfVariant, tau: f64) -> BTreeMap<(u32, u32), f64> {
    let n = bg.user_count;
    let m = bg.entities.len();
    let mut tf = Array2::<f64>::zeros((n, m));
    for (u, row) in bg.counts.iter().enumerate() {
        for &(e, c) in row {
            tf[[u, e as usize]] = c as f64;
        }
    }
    let mut x = Array2::<f64>::zeros((n, m));
    for e in 0..m {
        let df = (0..n).filter(|&u| tf[[u, e]] > 0.0).count();
        if df == 0 {
            continue;
        }
        let idf = (n as f64 / df as f64).ln();
        for u in 0..n {
            let c = tf[[u, e]];
            if c > 0.0 {
                let t = match variant {
                    TfidfVariant::Standard => c,
                    TfidfVariant::Sublinear => 1.0 + c.ln(),
                };
                x[[u, e]] = t * idf;
            }
        }
    }
    for mut row in x.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let sim = x.dot(&x.t());
    let mut out = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if sim[[i, j]] > tau {
                out.insert((i as u32, j as u32), sim[[i, j]]);
            }
        }
    }
    out
}

pub fn random_layer(r: &mut ChaCha8Rng, kind: TraceKind, n: usize, p: f64) -> SimilarityNetwork {
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in (i + 1)..n as u32 {
            if r.random_bool(p) {
                edges.push((i, j, r.random_range(0.01..1.0)));
            }
        }
    }
    SimilarityNetwork { kind, n, edges }
}

pub fn union_oracle(layers: &[SimilarityNetwork]) -> BTreeSet<(u32, u32)> {
    layers
        .iter()
        .flat_map(|l| l.edges.iter().map(|&(i, j, _)| (i, j)))
        .collect()
}

pub fn edge_set(net: &FusedNetwork) -> BTreeSet<(u32, u32)> {
    net.edges.iter().map(|e| (e.src, e.dst)).collect()
}

pub fn random_graph(r: &mut ChaCha8Rng, n: usize, p: f64) -> FusedNetwork {
    fuse(n, &[random_layer(r, TraceKind::CoRetweet, n, p)]).unwrap()
}

/// Macro-F1 from an explicit 2×2 confusion matrix.
pub fn confusion_macro_f1(pred: &[u8], truth: &[u8]) -> f64 {
    let mut cm = [[0usize; 2]; 2];
    for (&p, &t) in pred.iter().zip(truth) {
        cm[t as usize][p as usize] += 1;
    }
    let f1 = |k: usize| {
        let tp = cm[k][k] as f64;
        let fp = cm[1 - k][k] as f64;
        let fn_ = cm[k][1 - k] as f64;
        if tp + fp + fn_ == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    };
    (f1(0) + f1(1)) / 2.0
}

/// Dense power iteration on `A + I` to a tight tolerance.
pub fn dense_centrality(net: &FusedNetwork) -> Vec<f64> {
    let n = net.n;
    let mut a = Array2::<f64>::eye(n);
    for e in &net.edges {
        a[[e.src as usize, e.dst as usize]] = 1.0;
        a[[e.dst as usize, e.src as usize]] = 1.0;
    }
    let mut x = ndarray::Array1::<f64>::from_elem(n, 1.0 / (n as f64).sqrt());
    for _ in 0..200_000 {
        let mut y = a.dot(&x);
        let norm = y.dot(&y).sqrt();
        y /= norm;
        let delta = (&y - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        x = y;
        if delta < 1e-14 {
            break;
        }
    }
    x.to_vec()
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `relu(x · W + b)` for one row, by explicit loops.
fn dense_row(p: &Params<f64>, x: &[f64], w: &str, b: &str) -> Vec<f64> {
    let w = p.get(w).unwrap();
    let b = p.get(b).unwrap();
    (0..w.ncols())
        .map(|k| relu((0..x.len()).map(|j| x[j] * w[[j, k]]).sum::<f64>() + b[[0, k]]))
        .collect()
}

/// Fusion block for a single node, one scalar at a time.
pub fn scalar_fusion(p: &Params<f64>, ablation: Ablation, c: &[f64], g: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = match ablation {
        Ablation::Full => {
            let ct = dense_row(p, c, "fusion.w_c", "fusion.b_c");
            let gt = dense_row(p, g, "fusion.w_g", "fusion.b_g");
            let ac = dense_row(p, g, "fusion.wa_c", "fusion.ba_c");
            let ag = dense_row(p, c, "fusion.wa_g", "fusion.ba_g");
            let mut z: Vec<f64> = (0..ct.len()).map(|k| ac[k] * ct[k]).collect();
            z.extend((0..gt.len()).map(|k| ag[k] * gt[k]));
            z
        }
        Ablation::NoCrossattn => {
            let mut z = dense_row(p, c, "fusion.w_c", "fusion.b_c");
            z.extend(dense_row(p, g, "fusion.w_g", "fusion.b_g"));
            z
        }
        Ablation::NoGraph => dense_row(p, c, "fusion.w_c", "fusion.b_c"),
        Ablation::NoText => dense_row(p, g, "fusion.w_g", "fusion.b_g"),
    };
    let z1 = dense_row(p, &z, "fusion.w_z1", "fusion.b_z1");
    dense_row(p, &z1, "fusion.w_z2", "fusion.b_z2")
}

/// Random parameters: Glorot weights from `seed` plus non-zero biases.
pub fn random_params(arch: &Architecture, seed: u64) -> Params<f64> {
    let mut p: Params<f64> = arch.init(seed);
    let mut r = rng(seed ^ 0xb1a5);
    for (name, t) in p.names.iter().zip(p.tensors.iter_mut()) {
        if name.contains(".b") {
            t.mapv_inplace(|_| r.random_range(-0.5..0.5));
        }
    }
    p
}

pub fn random_features(r: &mut ChaCha8Rng, n: usize, d_c: usize, d_g: usize) -> (Array2<f32>, Array2<f32>) {
    let c = Array2::from_shape_simple_fn((n, d_c), || r.random_range(-1.0f32..1.0));
    let mut g = Array2::zeros((n, d_g));
    for i in 0..n {
        g[[i, r.random_range(0..d_g)]] = 1.0;
    }
    (c, g)
}

fn loss_and_grads(
    arch: &Architecture,
    p: &Params<f64>,
    inputs: &GraphInputs<f64>,
    rows: &[usize],
    targets: &[f64],
) -> (f64, Vec<Array2<f64>>) {
    let mut tape = Tape::new();
    let bound = p.bind(&mut tape);
    let mut r = rng(0);
    let s = arch.forward(&mut tape, &bound, inputs, false, &mut r);
    let loss = tape.bce_loss(s, rows, targets);
    let grads = tape.backward(loss).unwrap();
    let g = bound
        .vars
        .iter()
        .zip(&p.tensors)
        .map(|(&v, t)| grads.get_or_zeros(v, t.dim()))
        .collect();
    (tape.value(loss)[[0, 0]], g)
}

/// Largest relative error between reverse-mode gradients and central
/// differences with step `h`, over every parameter entry. Entries where both
/// magnitudes are below `floor` are compared against `floor` instead.
pub fn max_gradient_error(
    arch: &Architecture,
    p: &Params<f64>,
    inputs: &GraphInputs<f64>,
    rows: &[usize],
    targets: &[f64],
    h: f64,
    floor: f64,
) -> f64 {
    let mut p = p.clone();
    let (_, grads) = loss_and_grads(arch, &p, inputs, rows, targets);
    let mut worst = 0.0f64;
    for k in 0..p.tensors.len() {
        let cols = grads[k].ncols();
        for idx in 0..p.tensors[k].len() {
            let orig = p.tensors[k].as_slice().unwrap()[idx];
            p.tensors[k].as_slice_mut().unwrap()[idx] = orig + h;
            let (lp, _) = loss_and_grads(arch, &p, inputs, rows, targets);
            p.tensors[k].as_slice_mut().unwrap()[idx] = orig - h;
            let (lm, _) = loss_and_grads(arch, &p, inputs, rows, targets);
            p.tensors[k].as_slice_mut().unwrap()[idx] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grads[k][[idx / cols, idx % cols]];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(floor));
        }
    }
    worst
}

/// The gradient-fidelity configuration: d_c = 8, d_g = 4, d = 16 on a
/// 30-node random graph.
pub fn gradient_fixture(conv: iohunter::model::Conv) -> (Architecture, Params<f64>, GraphInputs<f64>, Vec<usize>, Vec<f64>) {
    let mut r = rng(30);
    let net = random_graph(&mut r, 30, 0.12);
    let adj = iohunter::model::NormalizedAdjacency::from_network(&net);
    let (c, g) = random_features(&mut r, 30, 8, 4);
    let inputs = GraphInputs::<f64>::new(&c, &g, &adj);
    let mut cfg = ModelConfig::new(8, 4);
    cfg.hidden = 16;
    cfg.conv = conv;
    let arch = Architecture::IoHunter(cfg);
    let p = random_params(&arch, 7);
    let rows: Vec<usize> = (0..30).step_by(2).collect();
    let targets: Vec<f64> = rows.iter().map(|&i| f64::from(u8::from(i % 6 == 0))).collect();
    (arch, p, inputs, rows, targets)
}
