//! Exact ranking of an image corpus against query embeddings.
//!
//! Similarities are accumulated in `f64`. Rankings sort by descending
//! similarity and break ties by ascending image index, so every ranking is a
//! tie-free permutation and identical inputs always give identical output,
//! whatever the number of workers.

use std::cmp::Ordering;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::EmbeddingBundle;

pub const RANKING_MAGIC: &[u8; 8] = b"PRSMRNK1";

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("dimension mismatch: query has {query}, images have {images}")]
    DimensionMismatch { query: usize, images: usize },
    #[error("NaN similarity for image {index}")]
    NanSimilarity { index: usize },
    #[error(
        "cosine similarity needs normalized {0} embeddings; normalize first or use dot similarity"
    )]
    NotNormalized(&'static str),
    #[error("query {query_id:?}: {source}")]
    Query {
        query_id: String,
        #[source]
        source: Box<RankingError>,
    },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("order of length {len} is not a permutation of 0..{len}")]
    NotAPermutation { len: usize },
    #[error("corpus of {0} images exceeds the u32 index range")]
    CorpusTooLarge(usize),
    #[error("ranking cache format error at byte {offset}: {message}")]
    CacheFormat { offset: u64, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    /// Dot product of unit-norm vectors. Both bundles must be flagged
    /// normalized.
    #[default]
    Cosine,
    /// Raw dot product.
    Dot,
}

/// Full ranking of the corpus for one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    query_id: String,
    order: Vec<u32>,
    rank_of: Vec<u32>,
}

impl Ranking {
    /// Builds a ranking from an order permutation; fails if `order` is not a
    /// permutation of `0..order.len()`.
    pub fn from_order(query_id: impl Into<String>, order: Vec<u32>) -> Result<Self, RankingError> {
        let n = order.len();
        if u32::try_from(n).is_err() {
            return Err(RankingError::CorpusTooLarge(n));
        }
        let mut rank_of = vec![u32::MAX; n];
        for (pos, &img) in order.iter().enumerate() {
            let slot = rank_of
                .get_mut(img as usize)
                .ok_or(RankingError::NotAPermutation { len: n })?;
            if *slot != u32::MAX {
                return Err(RankingError::NotAPermutation { len: n });
            }
            *slot = pos as u32;
        }
        Ok(Self {
            query_id: query_id.into(),
            order,
            rank_of,
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    /// Image indices, best first.
    pub fn order(&self) -> &[u32] {
        &self.order
    }

    /// `rank_of[image]` is the 0-based position of `image` in `order`.
    pub fn rank_of(&self) -> &[u32] {
        &self.rank_of
    }

    pub fn n_images(&self) -> usize {
        self.order.len()
    }

    pub fn top_k(&self, k: usize) -> Result<TopK, RankingError> {
        top_k(self, k)
    }
}

/// The first `min(k, n)` images of a ranking, kept sorted by image index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopK {
    pub query_id: String,
    pub k: usize,
    members: Vec<u32>,
}

impl TopK {
    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn contains(&self, image: u32) -> bool {
        self.members.binary_search(&image).is_ok()
    }

    /// Size of the intersection with `other`.
    pub fn shared(&self, other: &TopK) -> usize {
        let (mut a, mut b) = (
            self.members.iter().peekable(),
            other.members.iter().peekable(),
        );
        let mut count = 0;
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                Ordering::Less => {
                    a.next();
                }
                Ordering::Greater => {
                    b.next();
                }
                Ordering::Equal => {
                    count += 1;
                    a.next();
                    b.next();
                }
            }
        }
        count
    }
}

pub fn top_k(r: &Ranking, k: usize) -> Result<TopK, RankingError> {
    if k == 0 {
        return Err(RankingError::ZeroK);
    }
    let mut members = r.order[..k.min(r.order.len())].to_vec();
    members.sort_unstable();
    Ok(TopK {
        query_id: r.query_id.clone(),
        k,
        members,
    })
}

/// Dot product of `query` with every image row, accumulated in `f64`.
pub fn score_query(query: &[f32], images: &EmbeddingBundle) -> Result<Vec<f64>, RankingError> {
    if query.len() != images.dim() {
        return Err(RankingError::DimensionMismatch {
            query: query.len(),
            images: images.dim(),
        });
    }
    Ok(images.rows().map(|row| dot(query, row)).collect())
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Sorts image indices by descending similarity, ties by ascending index.
pub fn rank(query_id: impl Into<String>, similarities: &[f64]) -> Result<Ranking, RankingError> {
    if let Some(index) = similarities.iter().position(|s| s.is_nan()) {
        return Err(RankingError::NanSimilarity { index });
    }
    let n = similarities.len();
    if u32::try_from(n).is_err() {
        return Err(RankingError::CorpusTooLarge(n));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        similarities[b as usize]
            .partial_cmp(&similarities[a as usize])
            .expect("NaN excluded above")
            .then(a.cmp(&b))
    });
    let mut rank_of = vec![0u32; n];
    for (pos, &img) in order.iter().enumerate() {
        rank_of[img as usize] = pos as u32;
    }
    Ok(Ranking {
        query_id: query_id.into(),
        order,
        rank_of,
    })
}

/// Scores and ranks one query vector.
pub fn rank_query(
    query_id: &str,
    query: &[f32],
    images: &EmbeddingBundle,
) -> Result<Ranking, RankingError> {
    score_query(query, images)
        .and_then(|s| rank(query_id, &s))
        .map_err(|source| RankingError::Query {
            query_id: query_id.to_string(),
            source: Box::new(source),
        })
}

pub(crate) fn check_similarity(
    similarity: Similarity,
    queries: &EmbeddingBundle,
    images: &EmbeddingBundle,
) -> Result<(), RankingError> {
    if similarity == Similarity::Cosine {
        if !queries.is_normalized() {
            return Err(RankingError::NotNormalized("query"));
        }
        if !images.is_normalized() {
            return Err(RankingError::NotNormalized("image"));
        }
    }
    if queries.dim() != images.dim() {
        return Err(RankingError::DimensionMismatch {
            query: queries.dim(),
            images: images.dim(),
        });
    }
    Ok(())
}

/// Runs `f` on a dedicated pool of `workers` threads; `0` means one per core.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Ranks every query row against the corpus. Output order follows query
/// order.
pub fn rank_all(
    queries: &EmbeddingBundle,
    images: &EmbeddingBundle,
    similarity: Similarity,
    workers: usize,
) -> Result<Vec<Ranking>, RankingError> {
    check_similarity(similarity, queries, images)?;
    let results: Vec<Result<Ranking, RankingError>> = with_workers(workers, || {
        (0..queries.len())
            .into_par_iter()
            .map(|i| rank_query(&queries.ids()[i], queries.row(i), images))
            .collect()
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingCacheHeader {
    pub n_queries: usize,
    pub n_images: usize,
    pub query_ids: Vec<String>,
}

/// Encodes rankings as a `PRSMRNK1` cache: magic, `u64` header length, JSON
/// header, then each order permutation as `u32` little endian.
pub fn ranking_cache_bytes(rankings: &[Ranking], n_images: usize) -> Result<Vec<u8>, RankingError> {
    if let Some(r) = rankings.iter().find(|r| r.n_images() != n_images) {
        return Err(RankingError::NotAPermutation { len: r.n_images() });
    }
    let header = RankingCacheHeader {
        n_queries: rankings.len(),
        n_images,
        query_ids: rankings.iter().map(|r| r.query_id.clone()).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 4 * n_images * rankings.len());
    out.extend_from_slice(RANKING_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for r in rankings {
        for &img in &r.order {
            out.extend_from_slice(&img.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_ranking_cache_header(
    bytes: &[u8],
) -> Result<(RankingCacheHeader, usize), RankingError> {
    let fail = |offset: u64, message: String| RankingError::CacheFormat { offset, message };
    if bytes.len() < 16 {
        return Err(fail(
            bytes.len() as u64,
            "file shorter than magic and header length".into(),
        ));
    }
    if &bytes[..8] != RANKING_MAGIC {
        return Err(fail(0, "magic mismatch, expected \"PRSMRNK1\"".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if len > (bytes.len() - 16) as u64 {
        return Err(fail(8, format!("header length {len} exceeds file size")));
    }
    let end = 16 + len as usize;
    let header: RankingCacheHeader = serde_json::from_slice(&bytes[16..end])
        .map_err(|e| fail(16, format!("invalid JSON header: {e}")))?;
    if header.query_ids.len() != header.n_queries {
        return Err(fail(16, "query_ids length differs from n_queries".into()));
    }
    Ok((header, end))
}

pub fn parse_ranking_cache(bytes: &[u8]) -> Result<Vec<Ranking>, RankingError> {
    let (header, start) = parse_ranking_cache_header(bytes)?;
    let expected = 4 * header.n_queries as u64 * header.n_images as u64;
    let found = (bytes.len() - start) as u64;
    if found != expected {
        return Err(RankingError::CacheFormat {
            offset: start as u64,
            message: format!("payload holds {found} bytes, expected {expected}"),
        });
    }
    let payload = &bytes[start..];
    let width = 4 * header.n_images;
    header
        .query_ids
        .into_iter()
        .enumerate()
        .map(|(q, id)| {
            let order = payload[q * width..(q + 1) * width]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ranking::from_order(id, order)
        })
        .collect()
}

pub fn write_ranking_cache(
    rankings: &[Ranking],
    n_images: usize,
    path: impl AsRef<Path>,
) -> Result<(), RankingError> {
    let path = path.as_ref();
    let bytes = ranking_cache_bytes(rankings, n_images)?;
    fs::write(path, bytes).map_err(|source| RankingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_ranking_cache(path: impl AsRef<Path>) -> Result<Vec<Ranking>, RankingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| RankingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ranking_cache(&bytes)
}
