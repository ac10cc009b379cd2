use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimilarityNetwork;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedEdge {
    pub src: u32,
    pub dst: u32,
    /// Maximum weight over contributing layers.
    pub weight: f64,
    /// One bit per contributing [`super::TraceKind`].
    pub provenance_mask: u8,
}

/// Union of similarity layers: the graph the classifier runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedNetwork {
    pub n: usize,
    /// Sorted by `(src, dst)`, `src < dst`.
    pub edges: Vec<FusedEdge>,
}

/// Union of layers: an edge exists if any layer has it.
pub fn fuse(n: usize, layers: &[SimilarityNetwork]) -> Result<FusedNetwork> {
    let mut merged: BTreeMap<(u32, u32), (f64, u8)> = BTreeMap::new();
    for layer in layers {
        if layer.n != n {
            return Err(Error::NodeCountMismatch {
                expected: n,
                found: layer.n,
            });
        }
        let bit = layer.kind.bit();
        for &(i, j, w) in &layer.edges {
            let entry = merged.entry((i, j)).or_insert((w, 0));
            entry.0 = entry.0.max(w);
            entry.1 |= bit;
        }
    }
    Ok(FusedNetwork {
        n,
        edges: merged
            .into_iter()
            .map(|((src, dst), (weight, provenance_mask))| FusedEdge {
                src,
                dst,
                weight,
                provenance_mask,
            })
            .collect(),
    })
}

impl FusedNetwork {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.src as usize].push(e.dst);
            adj[e.dst as usize].push(e.src);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<&FusedEdge> {
        let key = if i < j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        self.edges
            .binary_search_by(|e| (e.src, e.dst).cmp(&key))
            .ok()
            .map(|pos| &self.edges[pos])
    }

    /// Export as CSV `src,dst,weight,provenance_mask`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["src", "dst", "weight", "provenance_mask"])?;
        for e in &self.edges {
            w.write_record([
                e.src.to_string(),
                e.dst.to_string(),
                format!("{:?}", e.weight),
                e.provenance_mask.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Import an edge list in the export format. Edges are normalized to
    /// `src < dst`; duplicates merge as in [`fuse`].
    pub fn read_csv(path: &Path, n: usize) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let mut merged: BTreeMap<(u32, u32), (f64, u8)> = BTreeMap::new();
        for row in reader.deserialize::<(u32, u32, f64, u8)>() {
            let (a, b, w, mask) = row?;
            if a == b || a as usize >= n || b as usize >= n {
                return Err(Error::Format(format!(
                    "edge ({a}, {b}) invalid for {n} nodes"
                )));
            }
            if mask == 0 {
                return Err(Error::Format(format!("edge ({a}, {b}) has empty provenance")));
            }
            let key = (a.min(b), a.max(b));
            let entry = merged.entry(key).or_insert((w, 0));
            entry.0 = entry.0.max(w);
            entry.1 |= mask;
        }
        Ok(FusedNetwork {
            n,
            edges: merged
                .into_iter()
                .map(|((src, dst), (weight, provenance_mask))| FusedEdge {
                    src,
                    dst,
                    weight,
                    provenance_mask,
                })
                .collect(),
        })
    }
}

pub fn degrees(net: &FusedNetwork) -> Vec<usize> {
    let mut deg = vec![0usize; net.n];
    for e in &net.edges {
        deg[e.src as usize] += 1;
        deg[e.dst as usize] += 1;
    }
    deg
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homophily {
    /// Fraction of edges whose endpoints share a label.
    pub edge: f64,
    /// Class-insensitive variant: sum over classes of the excess of each
    /// class's same-class edge share over its node share, floored at 0,
    /// divided by `classes - 1`.
    pub class_insensitive: f64,
}

/// Edge homophily of a binary-labeled network.
pub fn edge_homophily(net: &FusedNetwork, labels: &[Option<u8>]) -> Result<Homophily> {
    let label = |i: u32| labels[i as usize].ok_or(Error::UnlabeledEndpoint(i as usize));
    let mut same = 0usize;
    // per class: endpoint count, same-class endpoint count
    let mut endpoints = [0usize; 2];
    let mut same_endpoints = [0usize; 2];
    for e in &net.edges {
        let (a, b) = (label(e.src)?, label(e.dst)?);
        endpoints[a as usize] += 1;
        endpoints[b as usize] += 1;
        if a == b {
            same += 1;
            same_endpoints[a as usize] += 2;
        }
    }
    let edge = if net.edges.is_empty() {
        0.0
    } else {
        same as f64 / net.edges.len() as f64
    };
    let labeled: Vec<u8> = labels.iter().flatten().copied().collect();
    let total = labeled.len() as f64;
    let mut class_insensitive = 0.0;
    for k in 0..2 {
        if endpoints[k] == 0 || total == 0.0 {
            continue;
        }
        let h_k = same_endpoints[k] as f64 / endpoints[k] as f64;
        let share = labeled.iter().filter(|&&l| l as usize == k).count() as f64 / total;
        class_insensitive += (h_k - share).max(0.0);
    }
    Ok(Homophily {
        edge,
        class_insensitive,
    })
}
