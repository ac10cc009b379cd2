use crate::simnet::FusedNetwork;
use crate::tensor::{CsrMatrix, SparseOperator};

/// Message-passing operators over the unweighted fused network.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    /// `D̂^{-1/2} (A + I) D̂^{-1/2}`.
    pub gcn: SparseOperator<f64>,
    /// Row-normalized `A` (neighbor mean); empty rows for isolated nodes.
    pub sage_mean: SparseOperator<f64>,
}

impl NormalizedAdjacency {
    pub fn from_network(net: &FusedNetwork) -> Self {
        let n = net.n;
        let neighbors = net.neighbors();
        let deg_hat: Vec<f64> = neighbors.iter().map(|nb| nb.len() as f64 + 1.0).collect();
        let mut gcn = Vec::with_capacity(2 * net.edges.len() + n);
        let mut mean = Vec::with_capacity(2 * net.edges.len());
        for (i, nb) in neighbors.iter().enumerate() {
            gcn.push((i, i, 1.0 / deg_hat[i]));
            for &j in nb {
                let j = j as usize;
                gcn.push((i, j, 1.0 / (deg_hat[i] * deg_hat[j]).sqrt()));
                mean.push((i, j, 1.0 / nb.len() as f64));
            }
        }
        NormalizedAdjacency {
            gcn: SparseOperator::new(CsrMatrix::from_triplets(n, n, &gcn)),
            sage_mean: SparseOperator::new(CsrMatrix::from_triplets(n, n, &mean)),
        }
    }

    pub fn n(&self) -> usize {
        self.gcn.forward.nrows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{fuse, SimilarityNetwork, TraceKind};

    #[test]
    fn isolated_node_has_unit_self_loop() {
        let net = fuse(1, &[]).unwrap();
        let adj = NormalizedAdjacency::from_network(&net);
        assert_eq!(adj.gcn.forward.to_dense()[[0, 0]], 1.0);
        assert_eq!(adj.sage_mean.forward.nnz(), 0);
    }

    #[test]
    fn gcn_operator_is_symmetric_with_self_loops() {
        let layer = SimilarityNetwork {
            kind: TraceKind::CoUrl,
            n: 4,
            edges: vec![(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)],
        };
        let adj = NormalizedAdjacency::from_network(&fuse(4, &[layer]).unwrap());
        let d = adj.gcn.forward.to_dense();
        assert_eq!(d, d.t());
        for i in 0..4 {
            assert!(d[[i, i]] > 0.0);
        }
        let m = adj.sage_mean.forward.to_dense();
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
