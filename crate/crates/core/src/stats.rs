//! Rank statistics behind the stability measure.
//!
//! For a group of `m` paraphrased queries with rankings `R(q_1) .. R(q_m)`:
//!
//! ```text
//! global   = 2 / (m (m - 1)) * sum_{i<j} rho(R(q_i), R(q_j))
//! local(k) = 2 / (m (m - 1)) * sum_{i<j} |R_k(q_i) ∩ R_k(q_j)| / k
//! ```
//!
//! where `rho` is Spearman's rank correlation and `R_k` the top-`k` set.
//! Pairs are enumerated lexicographically over `(i, j)`, `i < j`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::paraphrase::VariantLabel;
use crate::ranking::{Ranking, RankingError, TopK};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("rankings cover different corpora ({0} vs {1} images)")]
    LengthMismatch(usize, usize),
    #[error("Spearman correlation needs at least 2 images, got {0}")]
    TooFewImages(usize),
    #[error("a group needs at least 2 rankings, got {0}")]
    TooFewRankings(usize),
    #[error("top-k sets use different k ({0} vs {1})")]
    KMismatch(usize, usize),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("rank vector is constant; correlation undefined")]
    ConstantRanks,
}

fn top(r: &Ranking, k: usize) -> Result<TopK, StatsError> {
    r.top_k(k).map_err(|e| match e {
        RankingError::ZeroK => StatsError::ZeroK,
        other => unreachable!("top_k only fails on k = 0: {other}"),
    })
}

/// Spearman's rho as the Pearson correlation of the two rank vectors.
///
/// The sums are taken in exact integer arithmetic, so identical rankings give
/// exactly `1.0` and reversed rankings exactly `-1.0`.
pub fn spearman_rho(r1: &Ranking, r2: &Ranking) -> Result<f64, StatsError> {
    let (a, b) = (r1.rank_of(), r2.rank_of());
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    pearson_u32(a, b)
}

/// Pearson correlation of two integer rank vectors.
pub fn pearson_u32(a: &[u32], b: &[u32]) -> Result<f64, StatsError> {
    let n = a.len();
    if n != b.len() {
        return Err(StatsError::LengthMismatch(n, b.len()));
    }
    if n < 2 {
        return Err(StatsError::TooFewImages(n));
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0i128, 0i128, 0i128, 0i128, 0i128);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (i128::from(x), i128::from(y));
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    let n = n as i128;
    let exact = || -> Option<(i128, i128, i128)> {
        let num = n.checked_mul(sab)?.checked_sub(sa.checked_mul(sb)?)?;
        let da = n.checked_mul(saa)?.checked_sub(sa.checked_mul(sa)?)?;
        let db = n.checked_mul(sbb)?.checked_sub(sb.checked_mul(sb)?)?;
        Some((num, da, db))
    };
    let (num, da, db) = match exact() {
        Some((num, da, db)) => (num as f64, da as f64, db as f64),
        // Past ~2^32 images the exact route overflows; fall back to floats.
        None => {
            let nf = n as f64;
            let (sa, sb) = (sa as f64, sb as f64);
            (
                nf * sab as f64 - sa * sb,
                nf * saa as f64 - sa * sa,
                nf * sbb as f64 - sb * sb,
            )
        }
    };
    if da == 0.0 || db == 0.0 {
        return Err(StatsError::ConstantRanks);
    }
    Ok((num / (da * db).sqrt()).clamp(-1.0, 1.0))
}

/// `|t1 ∩ t2| / k`. The divisor stays `k` even when the corpus is smaller.
pub fn topk_overlap(t1: &TopK, t2: &TopK) -> Result<f64, StatsError> {
    if t1.k != t2.k {
        return Err(StatsError::KMismatch(t1.k, t2.k));
    }
    if t1.k == 0 {
        return Err(StatsError::ZeroK);
    }
    Ok(t1.shared(t2) as f64 / t1.k as f64)
}

/// Tree summation; the split points depend only on the length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        values.iter().sum()
    } else {
        let (l, r) = values.split_at(values.len() / 2);
        pairwise_sum(l) + pairwise_sum(r)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    pairwise_sum(values) / values.len() as f64
}

/// Index pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_indices(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (i + 1..m).map(move |j| (i, j)))
}

fn check_group(rankings: &[Ranking]) -> Result<(), StatsError> {
    if rankings.len() < 2 {
        return Err(StatsError::TooFewRankings(rankings.len()));
    }
    let n = rankings[0].n_images();
    if let Some(r) = rankings.iter().find(|r| r.n_images() != n) {
        return Err(StatsError::LengthMismatch(n, r.n_images()));
    }
    Ok(())
}

pub fn prsm_global(rankings: &[Ranking]) -> Result<f64, StatsError> {
    check_group(rankings)?;
    let rhos = pair_indices(rankings.len())
        .map(|(i, j)| spearman_rho(&rankings[i], &rankings[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let value = mean(&rhos);
    assert!(
        (-1.0..=1.0).contains(&value),
        "global stability {value} out of bounds"
    );
    Ok(value)
}

pub fn prsm_local(rankings: &[Ranking], k: usize) -> Result<f64, StatsError> {
    check_group(rankings)?;
    let tops = rankings
        .iter()
        .map(|r| top(r, k))
        .collect::<Result<Vec<_>, _>>()?;
    let overlaps = pair_indices(tops.len())
        .map(|(i, j)| topk_overlap(&tops[i], &tops[j]))
        .collect::<Result<Vec<_>, _>>()?;
    let value = mean(&overlaps);
    assert!(
        (0.0..=1.0).contains(&value),
        "local stability {value} out of bounds"
    );
    Ok(value)
}

/// Statistics for one pair of variants.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseStability {
    pub pair: (VariantLabel, VariantLabel),
    pub rho: f64,
    pub overlap: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStability {
    pub group_id: String,
    pub m: usize,
    pub pairs: Vec<PairwiseStability>,
    pub prsm_global: f64,
    pub prsm_local: BTreeMap<usize, f64>,
}

/// Computes every pairwise statistic of a group and both aggregates.
pub fn group_stability(
    group_id: &str,
    members: &[(VariantLabel, &Ranking)],
    k_values: &[usize],
) -> Result<GroupStability, StatsError> {
    if members.len() < 2 {
        return Err(StatsError::TooFewRankings(members.len()));
    }
    let n = members[0].1.n_images();
    if let Some((_, r)) = members.iter().find(|(_, r)| r.n_images() != n) {
        return Err(StatsError::LengthMismatch(n, r.n_images()));
    }
    let tops: Vec<Vec<TopK>> = members
        .iter()
        .map(|(_, r)| k_values.iter().map(|&k| top(r, k)).collect())
        .collect::<Result<_, _>>()?;

    let mut pairs = Vec::with_capacity(members.len() * (members.len() - 1) / 2);
    for (i, j) in pair_indices(members.len()) {
        let rho = spearman_rho(members[i].1, members[j].1)?;
        let mut overlap = BTreeMap::new();
        for (ti, tj) in tops[i].iter().zip(&tops[j]) {
            overlap.insert(ti.k, topk_overlap(ti, tj)?);
        }
        pairs.push(PairwiseStability {
            pair: (members[i].0, members[j].0),
            rho,
            overlap,
        });
    }

    let rhos: Vec<f64> = pairs.iter().map(|p| p.rho).collect();
    let prsm_global = mean(&rhos);
    let prsm_local: BTreeMap<usize, f64> = k_values
        .iter()
        .map(|&k| {
            let values: Vec<f64> = pairs.iter().map(|p| p.overlap[&k]).collect();
            (k, mean(&values))
        })
        .collect();
    assert!((-1.0..=1.0).contains(&prsm_global));
    assert!(prsm_local.values().all(|v| (0.0..=1.0).contains(v)));
    Ok(GroupStability {
        group_id: group_id.to_string(),
        m: members.len(),
        pairs,
        prsm_global,
        prsm_local,
    })
}
