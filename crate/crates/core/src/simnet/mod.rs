//! Behavioral similarity networks.
//!
//! Each trace kind yields a user × entity bipartite graph. Share counts are
//! TF-IDF weighted, user vectors are L2-normalized, and users are linked by
//! cosine similarity through an inverted index over entities. The per-kind
//! layers (plus a text-similarity layer built from content embeddings) are
//! unioned into one [`FusedNetwork`].

mod fused;
mod projection;
mod text;

use serde::{Deserialize, Serialize};

pub use fused::{degrees, edge_homophily, fuse, FusedEdge, FusedNetwork, Homophily};
pub use projection::{
    build_bipartite, project_similarity, tfidf, BipartiteGraph, TfidfVariant, UserVectors,
};
pub use text::text_similarity_network;

use crate::trace::DatasetBundle;

/// Retweets slower than this many seconds are not fast retweets.
pub const FAST_RETWEET_MAX_LATENCY: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    CoUrl,
    CoHashtag,
    CoRetweet,
    FastRetweet,
    TextSimilarity,
}

impl TraceKind {
    /// The four kinds built from bipartite projection.
    pub const BIPARTITE: [TraceKind; 4] = [
        TraceKind::CoUrl,
        TraceKind::CoHashtag,
        TraceKind::CoRetweet,
        TraceKind::FastRetweet,
    ];

    pub const ALL: [TraceKind; 5] = [
        TraceKind::CoUrl,
        TraceKind::CoHashtag,
        TraceKind::CoRetweet,
        TraceKind::FastRetweet,
        TraceKind::TextSimilarity,
    ];

    /// Provenance bit of this layer in a fused edge mask.
    pub fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::CoUrl => "co_url",
            TraceKind::CoHashtag => "co_hashtag",
            TraceKind::CoRetweet => "co_retweet",
            TraceKind::FastRetweet => "fast_retweet",
            TraceKind::TextSimilarity => "text_similarity",
        }
    }
}

/// Undirected weighted user-user graph for one trace kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityNetwork {
    pub kind: TraceKind,
    pub n: usize,
    /// `(i, j, w)` with `i < j`, sorted by `(i, j)`.
    pub edges: Vec<(u32, u32, f64)>,
}

impl SimilarityNetwork {
    pub fn empty(kind: TraceKind, n: usize) -> Self {
        SimilarityNetwork {
            kind,
            n,
            edges: Vec::new(),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Weight of the undirected edge `{i, j}`, if present.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .ok()
            .map(|pos| self.edges[pos].2)
    }

    /// Keep only the heaviest `fraction` of edges (ties at the cut are kept).
    pub fn retain_top_fraction(&mut self, fraction: f64) {
        if self.edges.is_empty() || fraction >= 1.0 {
            return;
        }
        let mut weights: Vec<f64> = self.edges.iter().map(|e| e.2).collect();
        weights.sort_by(|a, b| b.total_cmp(a));
        let keep = ((fraction.max(0.0) * weights.len() as f64).ceil() as usize).max(1);
        let cut = weights[keep.min(weights.len()) - 1];
        self.edges.retain(|e| e.2 >= cut);
    }
}

/// Knobs for building the fused network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub kinds: Vec<TraceKind>,
    /// Cosine cut for bipartite projections; edges need `w > tau`.
    pub tau: f64,
    /// Cosine cut for the text layer; edges need `w >= tau_text`.
    pub tau_text: f64,
    pub tfidf: TfidfVariant,
    /// Optional per-layer pruning to the heaviest fraction of edges.
    pub top_fraction: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            kinds: TraceKind::ALL.to_vec(),
            tau: 0.0,
            tau_text: 0.7,
            tfidf: TfidfVariant::Standard,
            top_fraction: None,
        }
    }
}

/// Build every configured layer and their union. `content` holds one content
/// vector per node and is only needed for the text layer.
pub fn build_networks(
    bundle: &DatasetBundle,
    content: Option<ndarray::ArrayView2<'_, f32>>,
    config: &NetworkConfig,
) -> crate::Result<(Vec<SimilarityNetwork>, FusedNetwork)> {
    let n = bundle.num_users();
    let mut layers = Vec::new();
    for &kind in &config.kinds {
        let mut layer = match kind {
            TraceKind::TextSimilarity => match content {
                Some(c) => text_similarity_network(c, config.tau_text),
                None => {
                    log::warn!("text similarity layer requested without content embeddings");
                    SimilarityNetwork::empty(kind, n)
                }
            },
            _ => {
                let bg = build_bipartite(bundle, kind);
                project_similarity(&tfidf(&bg, config.tfidf), config.tau)
            }
        };
        if let Some(frac) = config.top_fraction {
            layer.retain_top_fraction(frac);
        }
        layers.push(layer);
    }
    let fused = fuse(n, &layers)?;
    Ok((layers, fused))
}
