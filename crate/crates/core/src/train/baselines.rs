use serde::{Deserialize, Serialize};

use super::macro_f1;
use crate::simnet::FusedNetwork;

pub const CENTRALITY_TOL: f64 = 1e-10;
pub const CENTRALITY_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centrality {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Eigenvector centrality of the unweighted fused network.
///
/// Power iteration on `A + I` from the uniform unit vector, L2-normalized each
/// step, until the max-abs change drops below [`CENTRALITY_TOL`]. The identity
/// shift leaves the eigenvectors unchanged and keeps bipartite graphs from
/// oscillating.
pub fn eigenvector_centrality(net: &FusedNetwork) -> Centrality {
    let n = net.n;
    if n == 0 {
        return Centrality {
            values: Vec::new(),
            iterations: 0,
            converged: true,
        };
    }
    let neighbors = net.neighbors();
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    for it in 1..=CENTRALITY_MAX_ITER {
        for (i, nb) in neighbors.iter().enumerate() {
            next[i] = x[i] + nb.iter().map(|&j| x[j as usize]).sum::<f64>();
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut delta = 0.0f64;
        for (xi, yi) in x.iter_mut().zip(&next) {
            let y = yi / norm;
            delta = delta.max((y - *xi).abs());
            *xi = y;
        }
        if delta < CENTRALITY_TOL {
            return Centrality {
                values: x,
                iterations: it,
                converged: true,
            };
        }
    }
    log::warn!("eigenvector centrality did not converge in {CENTRALITY_MAX_ITER} iterations");
    Centrality {
        values: x,
        iterations: CENTRALITY_MAX_ITER,
        converged: false,
    }
}

/// Threshold on `scores` (predict IO iff `score ≥ t`) that maximizes Macro-F1
/// on `rows`, scanning every distinct score in ascending order. Ties keep the
/// lowest threshold. Returns `(threshold, macro_f1)`.
pub fn select_threshold(scores: &[f64], labels: &[Option<u8>], rows: &[usize]) -> (f64, f64) {
    let mut candidates = scores.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let truth: Vec<u8> = rows.iter().map(|&i| labels[i].expect("masked node is labeled")).collect();
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for t in candidates {
        let pred: Vec<u8> = rows.iter().map(|&i| u8::from(scores[i] >= t)).collect();
        let f1 = macro_f1(&pred, &truth);
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    best
}

/// Result of the centrality-threshold baseline for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePruning {
    pub threshold: f64,
    pub val_f1: f64,
    pub test_f1: f64,
    pub converged: bool,
}

pub fn node_pruning(centrality: &Centrality, labels: &[Option<u8>], val: &[usize], test: &[usize]) -> NodePruning {
    let (threshold, val_f1) = select_threshold(&centrality.values, labels, val);
    let pred: Vec<u8> = test.iter().map(|&i| u8::from(centrality.values[i] >= threshold)).collect();
    let truth: Vec<u8> = test.iter().map(|&i| labels[i].expect("masked node is labeled")).collect();
    NodePruning {
        threshold,
        val_f1,
        test_f1: macro_f1(&pred, &truth),
        converged: centrality.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{fuse, SimilarityNetwork, TraceKind};

    fn graph(n: usize, edges: &[(u32, u32)]) -> FusedNetwork {
        let layer = SimilarityNetwork {
            kind: TraceKind::CoUrl,
            n,
            edges: edges.iter().map(|&(a, b)| (a.min(b), a.max(b), 1.0)).collect(),
        };
        fuse(n, &[layer]).unwrap()
    }

    #[test]
    fn star_center_is_strict_max() {
        let edges: Vec<(u32, u32)> = (1..8).map(|j| (0, j)).collect();
        let c = eigenvector_centrality(&graph(8, &edges));
        assert!(c.converged);
        for j in 1..8 {
            assert!(c.values[0] > c.values[j]);
        }
        // leaves are symmetric: v0 = sqrt(7)·v_leaf for the adjacency eigenvector
        assert!((c.values[0] / c.values[1] - 7f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn cycle_is_uniform() {
        let edges: Vec<(u32, u32)> = (0..9).map(|i| (i, (i + 1) % 9)).collect();
        let c = eigenvector_centrality(&graph(9, &edges));
        for v in &c.values {
            assert!((v - c.values[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn threshold_separates_perfectly_when_possible() {
        let scores = [0.1, 0.9, 0.2, 0.8, 0.3];
        let labels = [Some(0), Some(1), Some(0), Some(1), Some(0)];
        let (t, f1) = select_threshold(&scores, &labels, &[0, 1, 2, 3, 4]);
        assert_eq!(t, 0.8);
        assert_eq!(f1, 1.0);
    }
}
