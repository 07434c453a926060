//! Synthetic corpora and controlled query perturbations.
//!
//! Randomness comes from ChaCha8 seeded through `seed_from_u64`, one stream
//! per purpose. Gaussian-like noise is the Irwin-Hall sum of twelve uniforms
//! minus six, which needs no transcendental functions and so gives the same
//! bits on every platform.

use std::collections::{BTreeMap, HashSet};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::bundle::EmbeddingBundle;
use crate::paraphrase::{
    attribute_variants, parse_caption, prefix_variants, ParaphraseGroup, Strategy, SynonymLexicon,
    VariantLabel,
};
use crate::ranking::Ranking;

pub const GENERATOR_NAME: &str = "chacha8+irwin-hall-12";

const STREAM_IMAGES: u64 = 1;
const STREAM_QUERIES: u64 = 2;

/// Parameters of a synthetic run. `sigma` is the norm scale of the isotropic
/// noise added to each query before renormalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationModel {
    pub seed: u64,
    pub sigma: f64,
    pub n_images: usize,
    pub n_queries: usize,
    pub dim: usize,
}

impl PerturbationModel {
    pub fn provenance(&self) -> String {
        format!(
            "synthetic {GENERATOR_NAME} seed={} sigma={} dim={}",
            self.seed, self.sigma, self.dim
        )
    }
}

/// Seeded source of uniform and pseudo-Gaussian draws.
pub struct NoiseSource {
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Zero mean, unit variance, support `[-6, 6]`.
    pub fn gaussian(&mut self) -> f64 {
        (0..12).map(|_| self.uniform()).sum::<f64>() - 6.0
    }

    pub fn gaussian_vector(&mut self, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| self.gaussian()).collect()
    }

    /// A random direction on the unit sphere.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f32> {
        loop {
            let v = self.gaussian_vector(dim);
            if let Some(u) = normalize_f64(&v) {
                return u;
            }
        }
    }
}

/// SplitMix64 finalizer, used to derive per-item seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normalize_f64(v: &[f64]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|x| (x / norm) as f32).collect())
}

/// `n_images` random unit vectors. Equal models give bitwise-equal bundles.
pub fn generate_corpus(model: &PerturbationModel) -> EmbeddingBundle {
    let mut source = NoiseSource::new(model.seed, STREAM_IMAGES);
    let mut vectors = Vec::with_capacity(model.n_images * model.dim);
    for _ in 0..model.n_images {
        vectors.extend(source.unit_vector(model.dim));
    }
    let ids = (0..model.n_images).map(|i| format!("img{i:06}")).collect();
    EmbeddingBundle::new(ids, model.dim, vectors, true, model.provenance())
        .expect("generated corpus is valid")
}

/// `n_queries` random unit base queries.
pub fn generate_base_queries(model: &PerturbationModel) -> Vec<Vec<f32>> {
    let mut source = NoiseSource::new(model.seed, STREAM_QUERIES);
    (0..model.n_queries)
        .map(|_| source.unit_vector(model.dim))
        .collect()
}

/// Adds isotropic noise of expected norm `sigma` to a unit vector and
/// renormalizes. `sigma == 0` returns the input unchanged.
pub fn perturb_query(query: &[f32], sigma: f64, seed: u64) -> Vec<f32> {
    if sigma == 0.0 {
        return query.to_vec();
    }
    let mut source = NoiseSource::new(seed, 0);
    let scale = sigma / (query.len() as f64).sqrt();
    let noisy: Vec<f64> = query
        .iter()
        .map(|&x| f64::from(x) + scale * source.gaussian())
        .collect();
    normalize_f64(&noisy).unwrap_or_else(|| query.to_vec())
}

/// Seed of the noise applied to variant `label` of base query `base`.
pub fn variant_seed(seed: u64, base: usize, label: VariantLabel) -> u64 {
    let label_index = VariantLabel::ALL.iter().position(|&l| l == label).unwrap() as u64;
    mix_seed(mix_seed(seed, base as u64), label_index + 1)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("ranking {index} is not a tie-free permutation")]
    Ties { index: usize },
    #[error("rankings cover different corpora")]
    LengthMismatch,
    #[error("need at least 2 rankings and 2 images")]
    TooSmall,
}

/// Reference stability values computed directly from the order arrays with a
/// double loop over pairs and the `1 - 6 Σd² / (n (n² - 1))` form of rho.
pub fn oracle_prsm(
    rankings: &[Ranking],
    k_values: &[usize],
) -> Result<(f64, BTreeMap<usize, f64>), OracleError> {
    let m = rankings.len();
    if m < 2 {
        return Err(OracleError::TooSmall);
    }
    let n = rankings[0].order().len();
    if n < 2 {
        return Err(OracleError::TooSmall);
    }
    let mut positions = Vec::with_capacity(m);
    for (index, r) in rankings.iter().enumerate() {
        let order = r.order();
        if order.len() != n {
            return Err(OracleError::LengthMismatch);
        }
        let mut pos = vec![usize::MAX; n];
        for (p, &img) in order.iter().enumerate() {
            let img = img as usize;
            if img >= n || pos[img] != usize::MAX {
                return Err(OracleError::Ties { index });
            }
            pos[img] = p;
        }
        positions.push(pos);
    }

    let nf = n as f64;
    let pair_weight = 2.0 / (m as f64 * (m as f64 - 1.0));
    let mut rho_sum = 0.0;
    let mut overlap_sum: BTreeMap<usize, f64> = k_values.iter().map(|&k| (k, 0.0)).collect();
    for i in 0..m {
        for j in (i + 1)..m {
            let d2: u128 = (0..n)
                .map(|img| {
                    let d = positions[i][img].abs_diff(positions[j][img]) as u128;
                    d * d
                })
                .sum();
            rho_sum += 1.0 - 6.0 * d2 as f64 / (nf * (nf * nf - 1.0));
            for &k in k_values {
                let depth = k.min(n);
                let left: HashSet<u32> = rankings[i].order()[..depth].iter().copied().collect();
                let shared = rankings[j].order()[..depth]
                    .iter()
                    .filter(|img| left.contains(img))
                    .count();
                *overlap_sum.get_mut(&k).unwrap() += shared as f64 / k as f64;
            }
        }
    }
    let local = overlap_sum
        .into_iter()
        .map(|(k, s)| (k, s * pair_weight))
        .collect();
    Ok((rho_sum * pair_weight, local))
}

/// Noise scale used for the variants of each strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySigmas {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl StrategySigmas {
    pub fn uniform(sigma: f64) -> Self {
        Self {
            p1: sigma,
            p2: sigma,
            p3: sigma,
        }
    }

    pub fn get(&self, strategy: Strategy) -> f64 {
        match strategy {
            Strategy::P1 => self.p1,
            Strategy::P2 => self.p2,
            Strategy::P3 => self.p3,
        }
    }
}

/// Everything a synthetic run feeds into evaluation.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub images: EmbeddingBundle,
    pub queries: EmbeddingBundle,
    pub groups: Vec<ParaphraseGroup>,
    pub lexicon: SynonymLexicon,
}

const AGES: &[&str] = &["young", "elderly", "middle-aged", "teenage"];
const GENDERS: &[&str] = &["female", "male", "female", "male", "androgynous"];
const HEADS: &[&str] = &[
    "academic",
    "nurse",
    "chef",
    "pilot",
    "farmer",
    "engineer",
    "dancer",
    "judge",
    "construction worker",
    "librarian",
    "mechanic",
];
const PREFIXES: &[&str] = &["A photo of", "An image of", "A picture of", ""];

/// Lexicon covering every attribute the synthetic captions use.
pub fn synthetic_lexicon() -> SynonymLexicon {
    SynonymLexicon::new([
        ("young", "youthful"),
        ("elderly", "old"),
        ("middle-aged", "mature"),
        ("teenage", "adolescent"),
        ("female", "woman"),
        ("male", "man"),
        ("androgynous", "gender-neutral"),
    ])
    .expect("static lexicon is valid")
}

/// Caption for base query `i`.
pub fn synthetic_caption(i: usize) -> String {
    let age = AGES[i % AGES.len()];
    let gender = GENDERS[(i / AGES.len()) % GENDERS.len()];
    let head = HEADS[i % HEADS.len()];
    let prefix = PREFIXES[i % PREFIXES.len()];
    let article = crate::paraphrase::article_for(age);
    if prefix.is_empty() {
        format!("{article} {age} {gender} {head}")
    } else {
        format!("{prefix} {article} {age} {gender} {head}")
    }
}

/// Builds one group per strategy for every base query. Each variant's
/// embedding is its base query perturbed with the strategy's sigma and a seed
/// derived from `(seed, base, label)`.
pub fn synthesize(model: &PerturbationModel, sigmas: StrategySigmas) -> SyntheticData {
    let bases = generate_base_queries(model);
    let provenance = format!(
        "{} sigmas=({},{},{})",
        model.provenance(),
        sigmas.p1,
        sigmas.p2,
        sigmas.p3
    );
    let (groups, queries) =
        build_groups(bases.len(), model.dim, provenance, |i, strategy, label| {
            perturb_query(
                &bases[i],
                sigmas.get(strategy),
                variant_seed(model.seed, i, label),
            )
        });
    SyntheticData {
        images: generate_corpus(model),
        queries,
        groups,
        lexicon: synthetic_lexicon(),
    }
}

/// Groups for the first `n_bases` synthetic captions, plus the query bundle
/// holding `embed(base, strategy, label)` under each group's query keys.
fn build_groups(
    n_bases: usize,
    dim: usize,
    provenance: String,
    mut embed: impl FnMut(usize, Strategy, VariantLabel) -> Vec<f32>,
) -> (Vec<ParaphraseGroup>, EmbeddingBundle) {
    let lexicon = synthetic_lexicon();
    let mut groups = Vec::with_capacity(3 * n_bases);
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for i in 0..n_bases {
        let caption = parse_caption(&synthetic_caption(i)).expect("synthetic captions parse");
        let original = caption.render();
        let p1 = ParaphraseGroup::new(
            format!("p1-{i:05}"),
            Strategy::P1,
            vec![
                (VariantLabel::O, original.clone()),
                (VariantLabel::C1, format!("{original}, rephrased")),
                (VariantLabel::C2, format!("{original}, reworded")),
            ],
            caption.stratum(),
        )
        .expect("distinct synthetic rewrites");
        let p2 = prefix_variants(&caption, format!("p2-{i:05}"));
        let p3 = attribute_variants(&caption, &lexicon, format!("p3-{i:05}"))
            .expect("lexicon covers synthetic attributes");
        for group in [p1, p2, p3] {
            for (label, _) in group.members() {
                ids.push(group.query_key(*label));
                vectors.extend(embed(i, group.strategy(), *label));
            }
            groups.push(group);
        }
    }
    let queries = EmbeddingBundle::new(ids, dim, vectors, true, provenance)
        .expect("synthetic queries are valid");
    (groups, queries)
}

/// A corpus with topical structure: every base query owns a cluster of
/// images around its direction, and the rest of the corpus is unrelated.
///
/// Topics and clusters live in the first `semantic_dims` coordinates. Query
/// variants move their topic by `semantic_sigma` inside that subspace and add
/// nuisance noise of norm `nuisance` in the remaining coordinates. The noise
/// reshuffles the unrelated tail of a ranking without reordering a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicalCorpus {
    pub seed: u64,
    pub dim: usize,
    pub semantic_dims: usize,
    pub n_topics: usize,
    pub cluster_size: usize,
    pub cluster_spread: f64,
    pub n_tail: usize,
    pub nuisance: f64,
}

impl TopicalCorpus {
    fn embed(&self, semantic: &[f64], nuisance: &[f64]) -> Vec<f32> {
        let mut v = semantic.to_vec();
        v.extend_from_slice(nuisance);
        debug_assert_eq!(v.len(), self.dim);
        normalize_f64(&v).expect("non-zero")
    }

    /// Unit topic directions, zero outside the semantic subspace.
    pub fn topics(&self) -> Vec<Vec<f32>> {
        assert!(0 < self.semantic_dims && self.semantic_dims < self.dim);
        let mut source = NoiseSource::new(self.seed, STREAM_QUERIES);
        let zeros = vec![0.0; self.dim - self.semantic_dims];
        (0..self.n_topics)
            .map(|_| self.embed(&source.gaussian_vector(self.semantic_dims), &zeros))
            .collect()
    }

    pub fn images(&self) -> EmbeddingBundle {
        let mut source = NoiseSource::new(self.seed, STREAM_IMAGES);
        let mut vectors = Vec::new();
        let scale = self.cluster_spread / (self.semantic_dims as f64).sqrt();
        let zeros = vec![0.0; self.dim - self.semantic_dims];
        for topic in self.topics() {
            for _ in 0..self.cluster_size {
                let v: Vec<f64> = topic[..self.semantic_dims]
                    .iter()
                    .map(|&x| f64::from(x) + scale * source.gaussian())
                    .collect();
                vectors.extend(self.embed(&v, &zeros));
            }
        }
        for _ in 0..self.n_tail {
            vectors.extend(source.unit_vector(self.dim));
        }
        let n = vectors.len() / self.dim;
        EmbeddingBundle::new(
            (0..n).map(|i| format!("img{i:06}")).collect(),
            self.dim,
            vectors,
            true,
            format!("synthetic-topical {GENERATOR_NAME} seed={}", self.seed),
        )
        .expect("valid corpus")
    }

    /// Embedding of one query variant of `topic`.
    pub fn variant(&self, topic: &[f32], semantic_sigma: f64, seed: u64) -> Vec<f32> {
        let moved = perturb_query(
            &topic[..self.semantic_dims],
            semantic_sigma,
            mix_seed(seed, 1),
        );
        let semantic: Vec<f64> = moved.iter().map(|&x| f64::from(x)).collect();
        let mut source = NoiseSource::new(mix_seed(seed, 2), 0);
        let nuisance_dims = self.dim - self.semantic_dims;
        let scale = self.nuisance / (nuisance_dims as f64).sqrt();
        let nuisance: Vec<f64> = (0..nuisance_dims)
            .map(|_| scale * source.gaussian())
            .collect();
        self.embed(&semantic, &nuisance)
    }

    /// One group per strategy for every topic, with each strategy's variants
    /// moved by its semantic sigma.
    pub fn synthesize(&self, sigmas: StrategySigmas) -> SyntheticData {
        let topics = self.topics();
        let provenance = format!(
            "synthetic-topical {GENERATOR_NAME} seed={} nuisance={} sigmas=({},{},{})",
            self.seed, self.nuisance, sigmas.p1, sigmas.p2, sigmas.p3
        );
        let (groups, queries) =
            build_groups(topics.len(), self.dim, provenance, |i, strategy, label| {
                self.variant(
                    &topics[i],
                    sigmas.get(strategy),
                    variant_seed(self.seed, i, label),
                )
            });
        SyntheticData {
            images: self.images(),
            queries,
            groups,
            lexicon: synthetic_lexicon(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(seed: u64) -> PerturbationModel {
        PerturbationModel {
            seed,
            sigma: 0.1,
            n_images: 20,
            n_queries: 3,
            dim: 16,
        }
    }

    #[test]
    fn corpus_is_deterministic_and_unit_norm() {
        let a = generate_corpus(&model(7));
        assert_eq!(a.to_bytes(), generate_corpus(&model(7)).to_bytes());
        assert_ne!(a.vectors(), generate_corpus(&model(8)).vectors());
        for row in a.rows() {
            assert!((crate::bundle::l2_norm(row) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let q = generate_base_queries(&model(1)).remove(0);
        assert_eq!(perturb_query(&q, 0.0, 99), q);
    }

    #[test]
    fn perturbed_is_unit() {
        let q = generate_base_queries(&model(1)).remove(0);
        let p = perturb_query(&q, 0.5, 3);
        assert!((crate::bundle::l2_norm(&p) - 1.0).abs() < 1e-6);
        assert_ne!(p, q);
    }

    #[test]
    fn gaussian_moments() {
        let mut s = NoiseSource::new(5, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| s.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03);
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn oracle_refuses_non_permutations() {
        // Ranking::from_order cannot build a tie, so check the length guard.
        let a = Ranking::from_order("a", vec![0, 1, 2]).unwrap();
        let b = Ranking::from_order("b", vec![0, 1]).unwrap();
        assert_eq!(
            oracle_prsm(&[a.clone(), b], &[1]),
            Err(OracleError::LengthMismatch)
        );
        assert_eq!(oracle_prsm(&[a], &[1]), Err(OracleError::TooSmall));
    }

    #[test]
    fn oracle_identical_pair() {
        let a = Ranking::from_order("a", vec![2, 0, 1, 3]).unwrap();
        let (g, l) = oracle_prsm(&[a.clone(), a], &[1, 2, 4]).unwrap();
        assert_eq!(g, 1.0);
        assert!(l.values().all(|&v| v == 1.0));
    }

    #[test]
    fn oracle_hand_computed_three_permutations() {
        // d² = 2, 20, 18 against n(n²-1) = 60; top-2 overlaps 1, 0, 0.
        let a = Ranking::from_order("a", vec![0, 1, 2, 3]).unwrap();
        let b = Ranking::from_order("b", vec![1, 0, 2, 3]).unwrap();
        let c = Ranking::from_order("c", vec![3, 2, 1, 0]).unwrap();
        let (g, l) = oracle_prsm(&[a, b, c], &[2]).unwrap();
        assert!((g - (0.8 - 1.0 - 0.8) / 3.0).abs() < 1e-12);
        assert!((l[&2] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn large_sigma_decorrelates() {
        let dim = 64;
        let mut base = NoiseSource::new(11, 0);
        let mut total = 0.0;
        let samples = 10_000;
        for i in 0..samples {
            let q = base.unit_vector(dim);
            let p = perturb_query(&q, 1e6, mix_seed(11, i));
            total += q
                .iter()
                .zip(&p)
                .map(|(a, b)| f64::from(*a) * f64::from(*b))
                .sum::<f64>();
        }
        assert!((total / samples as f64).abs() < 0.05);
    }

    #[test]
    fn synthesize_builds_three_groups_per_query() {
        let data = synthesize(&model(3), StrategySigmas::uniform(0.2));
        assert_eq!(data.groups.len(), 9);
        assert_eq!(data.queries.len(), 3 * (3 + 4 + 4));
        let index = data.queries.index();
        for g in &data.groups {
            for (label, _) in g.members() {
                assert!(index.contains_key(g.query_key(*label).as_str()));
            }
        }
    }

    #[test]
    fn synthetic_captions_parse() {
        for i in 0..200 {
            let cs = parse_caption(&synthetic_caption(i)).unwrap();
            assert!(synthetic_lexicon().lookup(&cs.attribute1).is_some());
            assert!(synthetic_lexicon().lookup(&cs.attribute2).is_some());
        }
    }
}
