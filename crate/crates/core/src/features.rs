//! Per-user node features: content embeddings and degree one-hots.
//!
//! Content embeddings come either from an external encoder via the binary
//! interchange file, or from a deterministic hashed character-trigram
//! embedder that needs no model.
//!
//! Interchange layout (little-endian): magic `IOEM`, `u32` version (1),
//! `u32` d_c, `u64` record count, then per record a `u16` id length, the
//! UTF-8 id and `d_c` `f32` values. Records are sorted by id.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{DatasetBundle, TraceRecord};

pub const INTERCHANGE_MAGIC: &[u8; 4] = b"IOEM";
pub const INTERCHANGE_VERSION: u32 = 1;
/// Bumped whenever the hashed embedder's output changes.
pub const FALLBACK_VERSION: u32 = 1;
pub const MIN_FALLBACK_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Imported,
    HashedFallback,
}

/// Content embedding per node (`n × d_c`).
#[derive(Debug, Clone, PartialEq)]
pub struct ContentTable {
    pub source: EmbeddingSource,
    pub vectors: Array2<f32>,
}

impl ContentTable {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Which posts enter a user's mean content vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "k")]
pub enum Aggregation {
    All,
    TopKPopular(usize),
}

impl Default for Aggregation {
    fn default() -> Self {
        Aggregation::All
    }
}

/// A post vector together with the fields used to select and order it.
pub struct PostVector<'a> {
    pub post_id: &'a str,
    pub popularity: u64,
    pub vector: &'a [f32],
}

/// Mean over the selected posts; zero vector for a user without posts.
///
/// Posts are summed in `post_id` order so the result does not depend on the
/// order they are passed in. `TopKPopular` keeps the `k` most popular posts,
/// breaking ties by `post_id`.
pub fn aggregate_user_content(posts: &mut [PostVector<'_>], mode: Aggregation, dim: usize) -> Vec<f32> {
    let selected: &mut [PostVector<'_>] = match mode {
        Aggregation::All => {
            posts.sort_by(|a, b| a.post_id.cmp(b.post_id));
            posts
        }
        Aggregation::TopKPopular(k) => {
            posts.sort_by(|a, b| b.popularity.cmp(&a.popularity).then(a.post_id.cmp(b.post_id)));
            let k = k.min(posts.len());
            let top = &mut posts[..k];
            top.sort_by(|a, b| a.post_id.cmp(b.post_id));
            top
        }
    };
    let mut sum = vec![0.0f64; dim];
    for p in selected.iter() {
        for (s, &x) in sum.iter_mut().zip(p.vector) {
            *s += x as f64;
        }
    }
    if selected.is_empty() {
        return vec![0.0; dim];
    }
    let count = selected.len() as f64;
    sum.into_iter().map(|s| (s / count) as f32).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed character-trigram hashing into `dim` buckets, L2-normalized.
/// Text is lowercased and padded with one space on each side.
pub fn hash_text(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0.0f64; dim];
    if text.trim().is_empty() {
        return vec![0.0; dim];
    }
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut buf = [0u8; 12];
    for gram in padded.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let h = fnv1a(&buf[..len]);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; dim];
    }
    v.into_iter().map(|x| (x / norm) as f32).collect()
}

/// Deterministic model-free content embeddings: the per-user mean of hashed
/// post vectors (users without text stay zero).
pub fn hashed_fallback_embed(bundle: &DatasetBundle, dim: usize, mode: Aggregation) -> Result<ContentTable> {
    if dim < MIN_FALLBACK_DIM {
        return Err(Error::Config(format!(
            "fallback embedding dimension must be at least {MIN_FALLBACK_DIM}, got {dim}"
        )));
    }
    let post_vecs: Vec<Vec<f32>> = bundle.records.iter().map(|r| hash_text(&r.text, dim)).collect();
    let vectors = aggregate_records(bundle, &post_vecs, dim, mode);
    Ok(ContentTable {
        source: EmbeddingSource::HashedFallback,
        vectors,
    })
}

fn aggregate_records(bundle: &DatasetBundle, post_vecs: &[Vec<f32>], dim: usize, mode: Aggregation) -> Array2<f32> {
    let mut out = Array2::zeros((bundle.num_users(), dim));
    for (user, posts) in bundle.posts_by_user().into_iter().enumerate() {
        let mut items: Vec<PostVector<'_>> = posts
            .iter()
            .map(|&i| {
                let r: &TraceRecord = &bundle.records[i];
                PostVector {
                    post_id: &r.post_id,
                    popularity: r.popularity,
                    vector: &post_vecs[i],
                }
            })
            .collect();
        let mean = aggregate_user_content(&mut items, mode, dim);
        out.row_mut(user).assign(&ndarray::ArrayView1::from(&mean));
    }
    out
}

/// Serialize records in the interchange layout (sorted by id).
pub fn encode_interchange(dim: usize, records: &BTreeMap<String, Vec<f32>>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20 + records.len() * (dim * 4 + 16));
    out.extend_from_slice(INTERCHANGE_MAGIC);
    out.extend_from_slice(&INTERCHANGE_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for (id, v) in records {
        if v.len() != dim {
            return Err(Error::Format(format!(
                "vector for {id} has {} values, expected {dim}",
                v.len()
            )));
        }
        let id_len = u16::try_from(id.len())
            .map_err(|_| Error::Format(format!("id too long: {} bytes", id.len())))?;
        out.extend_from_slice(&id_len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse an interchange buffer into `(d_c, id → vector)`.
pub fn decode_interchange(bytes: &[u8]) -> Result<(usize, BTreeMap<String, Vec<f32>>)> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != INTERCHANGE_MAGIC {
        return Err(Error::Format("bad embedding magic".into()));
    }
    let version = c.u32()?;
    if version != INTERCHANGE_VERSION {
        return Err(Error::Format(format!("unsupported embedding version {version}")));
    }
    let dim = c.u32()? as usize;
    let count = c.u64()?;
    let mut records = BTreeMap::new();
    for _ in 0..count {
        let len = c.u16()? as usize;
        let id = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Format("user id is not UTF-8".into()))?
            .to_owned();
        let raw = c.take(dim * 4)?;
        let v: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite value for {id}")));
        }
        if records.insert(id.clone(), v).is_some() {
            return Err(Error::Format(format!("duplicate record {id}")));
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} records",
            bytes.len() - c.pos
        )));
    }
    Ok((dim, records))
}

pub fn write_interchange(path: &Path, dim: usize, records: &BTreeMap<String, Vec<f32>>) -> Result<()> {
    let bytes = encode_interchange(dim, records)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_interchange(path: &Path) -> Result<(usize, BTreeMap<String, Vec<f32>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_interchange(&bytes)
}

/// Export a table as a per-user interchange file.
pub fn write_user_embeddings(path: &Path, bundle: &DatasetBundle, table: &ContentTable) -> Result<()> {
    let records = bundle
        .users
        .iter()
        .zip(table.vectors.rows())
        .map(|(u, row)| (u.clone(), row.to_vec()))
        .collect();
    write_interchange(path, table.dim(), &records)
}

/// Imported per-user table plus how many bundle users had no vector.
#[derive(Debug, Clone)]
pub struct ImportedEmbeddings {
    pub table: ContentTable,
    pub missing_users: usize,
}

/// Load per-user vectors. Users absent from the file get zero vectors; ids
/// unknown to the bundle are an error. Vectors keep their stored norm.
pub fn import_embeddings(path: &Path, bundle: &DatasetBundle) -> Result<ImportedEmbeddings> {
    let (dim, records) = read_interchange(path)?;
    let mut vectors = Array2::zeros((bundle.num_users(), dim));
    let mut found = 0;
    for (id, v) in &records {
        let idx = bundle
            .user_index(id)
            .ok_or_else(|| Error::Format(format!("embedding for unknown user {id}")))?;
        vectors.row_mut(idx).assign(&ndarray::ArrayView1::from(v.as_slice()));
        found += 1;
    }
    let missing_users = bundle.num_users() - found;
    if missing_users > 0 {
        log::warn!("{missing_users} users have no imported embedding; using zero vectors");
    }
    Ok(ImportedEmbeddings {
        table: ContentTable {
            source: EmbeddingSource::Imported,
            vectors,
        },
        missing_users,
    })
}

/// Load per-post vectors (ids are post ids) and aggregate them per user.
pub fn import_post_embeddings(path: &Path, bundle: &DatasetBundle, mode: Aggregation) -> Result<ImportedEmbeddings> {
    let (dim, records) = read_interchange(path)?;
    let zero = vec![0.0f32; dim];
    let mut missing_posts = 0usize;
    let post_vecs: Vec<Vec<f32>> = bundle
        .records
        .iter()
        .map(|r| match records.get(&r.post_id) {
            Some(v) => v.clone(),
            None => {
                missing_posts += 1;
                zero.clone()
            }
        })
        .collect();
    if missing_posts > 0 {
        log::warn!("{missing_posts} posts have no imported embedding");
    }
    let posts = bundle.posts_by_user();
    let missing_users = posts.iter().filter(|p| p.is_empty()).count();
    Ok(ImportedEmbeddings {
        table: ContentTable {
            source: EmbeddingSource::Imported,
            vectors: aggregate_records(bundle, &post_vecs, dim, mode),
        },
        missing_users,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketScheme {
    /// `min(floor(log2(degree + 1)), d_g - 1)`.
    #[default]
    Log2,
    /// Rank-based buckets of roughly equal population; equal degrees share a bucket.
    EqualFrequency,
}

pub fn degree_bucket(degree: usize, d_g: usize) -> usize {
    debug_assert!(d_g >= 2);
    ((degree as u64 + 1).ilog2() as usize).min(d_g - 1)
}

/// Bucket index per node under the chosen scheme.
pub fn degree_buckets(degrees: &[usize], d_g: usize, scheme: BucketScheme) -> Vec<usize> {
    match scheme {
        BucketScheme::Log2 => degrees.iter().map(|&d| degree_bucket(d, d_g)).collect(),
        BucketScheme::EqualFrequency => {
            let n = degrees.len();
            let mut sorted = degrees.to_vec();
            sorted.sort_unstable();
            degrees
                .iter()
                .map(|&d| {
                    let below = sorted.partition_point(|&x| x < d);
                    (below * d_g / n.max(1)).min(d_g - 1)
                })
                .collect()
        }
    }
}

/// `n × d_g` one-hot matrix of degree buckets.
pub fn degree_one_hot(degrees: &[usize], d_g: usize, scheme: BucketScheme) -> Result<Array2<f32>> {
    if d_g < 2 {
        return Err(Error::Config(format!("d_g must be at least 2, got {d_g}")));
    }
    let mut out = Array2::zeros((degrees.len(), d_g));
    for (i, b) in degree_buckets(degrees, d_g, scheme).into_iter().enumerate() {
        out[[i, b]] = 1.0;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub d_c: usize,
    pub d_g: usize,
    pub buckets: BucketScheme,
    pub aggregation: Aggregation,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            d_c: 64,
            d_g: 32,
            buckets: BucketScheme::Log2,
            aggregation: Aggregation::All,
        }
    }
}
