//! Bundle → fused network and feature matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::features::{degree_one_hot, hashed_fallback_embed, import_embeddings, Aggregation, ContentTable, FeatureConfig};
use crate::model::NormalizedAdjacency;
use crate::simnet::{build_networks, degrees, NetworkConfig, SimilarityNetwork};
use crate::train::Prepared;
use crate::trace::DatasetBundle;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub network: NetworkConfig,
    pub features: FeatureConfig,
}

/// Prepared graph plus the per-kind layers it was fused from.
#[derive(Debug, Clone)]
pub struct PreparedWithLayers {
    pub prepared: Prepared,
    pub layers: Vec<SimilarityNetwork>,
    pub missing_embeddings: usize,
}

/// Content embeddings: imported per-user vectors when `embeddings` is given,
/// otherwise the hashed fallback. Returns `(content, top5 content, missing)`.
pub fn content_tables(
    bundle: &DatasetBundle,
    features: &FeatureConfig,
    embeddings: Option<&Path>,
) -> Result<(ContentTable, ContentTable, usize)> {
    match embeddings {
        Some(path) => {
            let imported = import_embeddings(path, bundle)?;
            if imported.missing_users > 0 {
                log::warn!("{} users have no imported embedding", imported.missing_users);
            }
            Ok((imported.table.clone(), imported.table, imported.missing_users))
        }
        None => Ok((
            hashed_fallback_embed(bundle, features.d_c, features.aggregation)?,
            hashed_fallback_embed(bundle, features.d_c, Aggregation::TopKPopular(5))?,
            0,
        )),
    }
}

pub fn prepare(bundle: &DatasetBundle, cfg: &PipelineConfig, embeddings: Option<&Path>) -> Result<PreparedWithLayers> {
    let (content, top5, missing) = content_tables(bundle, &cfg.features, embeddings)?;
    let (layers, network) = build_networks(bundle, Some(content.vectors.view()), &cfg.network)?;
    let context = degree_one_hot(&degrees(&network), cfg.features.d_g, cfg.features.buckets)?;
    let adjacency = NormalizedAdjacency::from_network(&network);
    Ok(PreparedWithLayers {
        prepared: Prepared {
            name: bundle.name.clone(),
            labels: bundle.label_vec(),
            network,
            adjacency,
            content: content.vectors,
            context,
            content_top5: top5.vectors,
        },
        layers,
        missing_embeddings: missing,
    })
}
