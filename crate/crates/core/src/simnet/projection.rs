use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SimilarityNetwork, TraceKind, FAST_RETWEET_MAX_LATENCY};
use crate::trace::{DatasetBundle, TraceRecord};

/// Users × entities share counts for one trace kind.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub kind: TraceKind,
    pub user_count: usize,
    /// Sorted unique entity keys; position is the entity index.
    pub entities: Vec<String>,
    /// Per user, `(entity, count)` sorted by entity with `count > 0`.
    pub counts: Vec<Vec<(u32, u32)>>,
}

impl BipartiteGraph {
    /// Number of users with a non-zero count per entity.
    pub fn document_frequency(&self) -> Vec<u32> {
        let mut df = vec![0u32; self.entities.len()];
        for row in &self.counts {
            for &(e, _) in row {
                df[e as usize] += 1;
            }
        }
        df
    }
}

fn entities_of<'a>(record: &'a TraceRecord, kind: TraceKind) -> Vec<&'a str> {
    match kind {
        TraceKind::CoUrl => record.urls.iter().map(String::as_str).collect(),
        TraceKind::CoHashtag => record.hashtags.iter().map(String::as_str).collect(),
        TraceKind::CoRetweet => record.retweeted_post_id.as_deref().into_iter().collect(),
        TraceKind::FastRetweet => match (&record.retweeted_post_id, record.retweet_latency) {
            (Some(id), Some(lat)) if lat <= FAST_RETWEET_MAX_LATENCY => vec![id.as_str()],
            _ => Vec::new(),
        },
        TraceKind::TextSimilarity => Vec::new(),
    }
}

/// Count how often each user shared each entity of the given trace kind.
///
/// # Panics
/// For [`TraceKind::TextSimilarity`], which has no entity side.
pub fn build_bipartite(bundle: &DatasetBundle, kind: TraceKind) -> BipartiteGraph {
    assert!(
        kind != TraceKind::TextSimilarity,
        "text similarity is not a bipartite projection"
    );
    let mut pairs: BTreeMap<&str, BTreeMap<usize, u32>> = BTreeMap::new();
    for record in &bundle.records {
        let user = bundle
            .user_index(&record.user_id)
            .expect("record author is a bundle user");
        for entity in entities_of(record, kind) {
            *pairs.entry(entity).or_default().entry(user).or_insert(0) += 1;
        }
    }
    let mut counts = vec![Vec::new(); bundle.num_users()];
    let mut entities = Vec::with_capacity(pairs.len());
    for (e_idx, (entity, users)) in pairs.into_iter().enumerate() {
        entities.push(entity.to_owned());
        for (user, c) in users {
            counts[user].push((e_idx as u32, c));
        }
    }
    BipartiteGraph {
        kind,
        user_count: bundle.num_users(),
        entities,
        counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfidfVariant {
    /// `count * ln(n / df)`.
    #[default]
    Standard,
    /// `(1 + ln count) * ln(n / df)`.
    Sublinear,
}

/// Sparse L2-normalized TF-IDF rows, one per user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserVectors {
    pub kind: TraceKind,
    pub dim: usize,
    /// `(entity, weight)` sorted by entity, zero weights omitted.
    pub rows: Vec<Vec<(u32, f64)>>,
}

/// TF-IDF weight each share count and L2-normalize per user. Entities shared by
/// every user get idf 0 and drop out.
pub fn tfidf(bg: &BipartiteGraph, variant: TfidfVariant) -> UserVectors {
    let n = bg.user_count as f64;
    let idf: Vec<f64> = bg
        .document_frequency()
        .into_iter()
        .map(|df| if df == 0 { 0.0 } else { (n / df as f64).ln() })
        .collect();
    let rows = bg
        .counts
        .iter()
        .map(|row| {
            let mut v: Vec<(u32, f64)> = row
                .iter()
                .map(|&(e, c)| {
                    let tf = match variant {
                        TfidfVariant::Standard => c as f64,
                        TfidfVariant::Sublinear => 1.0 + (c as f64).ln(),
                    };
                    (e, tf * idf[e as usize])
                })
                .filter(|&(_, w)| w > 0.0)
                .collect();
            let norm = v.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, w) in &mut v {
                    *w /= norm;
                }
            }
            v
        })
        .collect();
    UserVectors {
        kind: bg.kind,
        dim: bg.entities.len(),
        rows,
    }
}

/// Cosine projection: edge `(i, j, w)` iff `w = <v_i, v_j> > tau`.
///
/// Only pairs co-occurring in some entity posting list are scored. Each
/// row's dot products accumulate in entity order, so results do not depend
/// on the thread count.
pub fn project_similarity(vectors: &UserVectors, tau: f64) -> SimilarityNetwork {
    let n = vectors.rows.len();
    let mut postings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); vectors.dim];
    for (u, row) in vectors.rows.iter().enumerate() {
        for &(e, w) in row {
            postings[e as usize].push((u as u32, w));
        }
    }
    let per_row: Vec<Vec<(u32, u32, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n], vec![false; n], Vec::<u32>::new()),
            |(acc, seen, touched), i| {
                for &(e, wi) in &vectors.rows[i] {
                    let list = &postings[e as usize];
                    // posting lists are sorted by user; skip to j > i
                    let start = list.partition_point(|&(u, _)| u as usize <= i);
                    for &(j, wj) in &list[start..] {
                        let j = j as usize;
                        if !seen[j] {
                            seen[j] = true;
                            touched.push(j as u32);
                        }
                        acc[j] += wi * wj;
                    }
                }
                touched.sort_unstable();
                let mut out = Vec::new();
                for &j in touched.iter() {
                    let w = acc[j as usize];
                    if w > tau {
                        out.push((i as u32, j, w));
                    }
                    acc[j as usize] = 0.0;
                    seen[j as usize] = false;
                }
                touched.clear();
                out
            },
        )
        .collect();
    SimilarityNetwork {
        kind: vectors.kind,
        n,
        edges: per_row.into_iter().flatten().collect(),
    }
}
