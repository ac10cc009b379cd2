use ndarray::ArrayView2;
use rayon::prelude::*;

use super::{SimilarityNetwork, TraceKind};

/// Exact all-pairs cosine over content vectors; edge iff cosine `>= tau_text`.
///
/// Rows are normalized internally. Zero rows (users without content) never
/// get an edge.
pub fn text_similarity_network(embeddings: ArrayView2<'_, f32>, tau_text: f64) -> SimilarityNetwork {
    let n = embeddings.nrows();
    let unit: Vec<Option<Vec<f64>>> = embeddings
        .rows()
        .into_iter()
        .map(|row| {
            let norm = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            (norm > 0.0).then(|| row.iter().map(|&x| x as f64 / norm).collect())
        })
        .collect();
    let per_row: Vec<Vec<(u32, u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let Some(vi) = &unit[i] else {
                return Vec::new();
            };
            let mut out = Vec::new();
            for (j, vj) in unit.iter().enumerate().skip(i + 1) {
                if let Some(vj) = vj {
                    let w: f64 = vi.iter().zip(vj).map(|(a, b)| a * b).sum();
                    if w >= tau_text {
                        out.push((i as u32, j as u32, w));
                    }
                }
            }
            out
        })
        .collect();
    SimilarityNetwork {
        kind: TraceKind::TextSimilarity,
        n,
        edges: per_row.into_iter().flatten().collect(),
    }
}
