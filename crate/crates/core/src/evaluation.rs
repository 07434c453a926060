//! End-to-end evaluation: binds paraphrase groups to query embeddings, ranks
//! the corpus for every variant, and aggregates group stability per
//! comparison spec and per stratum.
//!
//! Query embeddings are looked up under `group_id/variant_label`. Groups that
//! cannot be evaluated for a spec (missing embeddings) are excluded from its
//! means and listed in the exclusion ledger.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bundle::{read_bundle, BundleError, EmbeddingBundle};
use crate::paraphrase::{
    load_manifest, ManifestError, ParaphraseGroup, Strategy, Stratum, VariantLabel,
};
use crate::ranking::{self, check_similarity, rank_query, Ranking, RankingError, Similarity};
use crate::stats::{group_stability, mean, GroupStability, StatsError};

pub const DEFAULT_K_VALUES: [usize; 2] = [100, 1000];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid comparison spec {name:?}: {message}")]
    InvalidSpec { name: String, message: String },
    #[error("comparison spec {0:?} is listed twice")]
    DuplicateSpec(String),
    #[error("k = {k} exceeds the corpus size of {n_images} images")]
    KExceedsCorpus { k: usize, n_images: usize },
    #[error("image corpus is empty")]
    EmptyCorpus,
    #[error("group_id {0:?} appears in more than one group")]
    DuplicateGroup(String),
    #[error("group {group_id:?} has strategy {group}, spec {spec:?} needs {expected}")]
    StrategyMismatch {
        group_id: String,
        group: Strategy,
        spec: String,
        expected: Strategy,
    },
    #[error("no query embedding for group {group_id:?} variant {label} (key {key:?})")]
    MissingEmbedding {
        group_id: String,
        label: VariantLabel,
        key: String,
    },
    #[error("group {group_id:?} has no variant {label}")]
    MissingVariant {
        group_id: String,
        label: VariantLabel,
    },
    #[error("spec {0:?} has no evaluable groups")]
    NoEvaluableGroups(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// A named selection of variant labels whose pairs enter the mean.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonSpec {
    pub name: String,
    pub strategy: Strategy,
    pub variant_labels: Vec<VariantLabel>,
    pub k_values: Vec<usize>,
}

impl ComparisonSpec {
    pub fn new(
        name: impl Into<String>,
        strategy: Strategy,
        variant_labels: Vec<VariantLabel>,
        k_values: Vec<usize>,
    ) -> Result<Self, EvalError> {
        let name = name.into();
        let invalid = |message: String| EvalError::InvalidSpec {
            name: name.clone(),
            message,
        };
        if variant_labels.len() < 2 {
            return Err(invalid("needs at least two variants".into()));
        }
        let mut seen = HashSet::new();
        for label in &variant_labels {
            if !strategy.labels().contains(label) {
                return Err(invalid(format!("{label} is not a {strategy} variant")));
            }
            if !seen.insert(*label) {
                return Err(invalid(format!("{label} listed twice")));
            }
        }
        validate_k_values(&k_values).map_err(invalid)?;
        Ok(Self {
            name,
            strategy,
            variant_labels,
            k_values,
        })
    }

    /// Parses a name such as `p1-p2-p3-np` into its labels and infers the
    /// strategy from them.
    pub fn from_name(name: &str, k_values: Vec<usize>) -> Result<Self, EvalError> {
        let invalid = |message: String| EvalError::InvalidSpec {
            name: name.to_string(),
            message,
        };
        let labels = name
            .split('-')
            .map(|s| s.parse::<VariantLabel>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(invalid)?;
        let strategy = Strategy::ALL
            .into_iter()
            .find(|s| labels.iter().all(|l| s.labels().contains(l)))
            .ok_or_else(|| invalid("labels do not belong to a single strategy".into()))?;
        if labels.iter().all(|&l| l == VariantLabel::O) {
            return Err(invalid("ambiguous strategy".into()));
        }
        Self::new(name, strategy, labels, k_values)
    }

    pub fn m(&self) -> usize {
        self.variant_labels.len()
    }

    pub fn max_k(&self) -> usize {
        *self.k_values.last().expect("k_values non-empty")
    }
}

fn validate_k_values(k_values: &[usize]) -> Result<(), String> {
    if k_values.is_empty() {
        return Err("k_values must not be empty".into());
    }
    if k_values[0] == 0 {
        return Err("k must be at least 1".into());
    }
    if k_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err("k_values must be strictly increasing".into());
    }
    Ok(())
}

/// Names of the ten built-in comparisons, in report order.
pub const BUILTIN_SPEC_NAMES: [&str; 10] = [
    "o-c1",
    "o-c2",
    "o-c1-c2",
    "p1-p2",
    "p1-np",
    "p1-p2-p3-np",
    "o-a1",
    "o-a2",
    "o-a12",
    "o-a1-a2-a12",
];

pub fn builtin_specs() -> Vec<ComparisonSpec> {
    builtin_specs_with_k(&DEFAULT_K_VALUES)
}

pub fn builtin_specs_with_k(k_values: &[usize]) -> Vec<ComparisonSpec> {
    BUILTIN_SPEC_NAMES
        .iter()
        .map(|name| ComparisonSpec::from_name(name, k_values.to_vec()).expect("builtin spec"))
        .collect()
}

/// Position of a spec name in the built-in order, if it is built in.
pub fn builtin_position(name: &str) -> Option<usize> {
    BUILTIN_SPEC_NAMES.iter().position(|n| *n == name)
}

/// Stratum of an aggregate: `Overall` pools every group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggregateStratum {
    Overall,
    Female,
    Male,
    Unspecified,
}

impl AggregateStratum {
    pub const ALL: [AggregateStratum; 4] = [
        AggregateStratum::Overall,
        AggregateStratum::Female,
        AggregateStratum::Male,
        AggregateStratum::Unspecified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregateStratum::Overall => "overall",
            AggregateStratum::Female => "female",
            AggregateStratum::Male => "male",
            AggregateStratum::Unspecified => "unspecified",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            AggregateStratum::Overall => "Overall",
            AggregateStratum::Female => "Female",
            AggregateStratum::Male => "Male",
            AggregateStratum::Unspecified => "Unspecified",
        }
    }

    pub fn matches(self, stratum: Stratum) -> bool {
        match self {
            AggregateStratum::Overall => true,
            AggregateStratum::Female => stratum == Stratum::Female,
            AggregateStratum::Male => stratum == Stratum::Male,
            AggregateStratum::Unspecified => stratum == Stratum::Unspecified,
        }
    }
}

impl fmt::Display for AggregateStratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AggregateStratum {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggregateStratum::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown stratum {s:?}"))
    }
}

impl Serialize for AggregateStratum {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AggregateStratum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumAggregate {
    pub stratum: AggregateStratum,
    pub n_groups: usize,
    pub mean_prsm_global: f64,
    pub mean_prsm_local: BTreeMap<usize, f64>,
}

/// A group removed from one spec's aggregates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub spec: String,
    pub group_id: String,
    pub stratum: Stratum,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRecord {
    pub group_id: String,
    pub stratum: Stratum,
    pub stability: GroupStability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecResult {
    pub spec: ComparisonSpec,
    /// Aggregates with at least one group, in `AggregateStratum::ALL` order.
    pub aggregates: Vec<StratumAggregate>,
    /// Per-group values in input order.
    pub groups: Vec<GroupRecord>,
}

impl SpecResult {
    pub fn aggregate(&self, stratum: AggregateStratum) -> Option<&StratumAggregate> {
        self.aggregates.iter().find(|a| a.stratum == stratum)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub specs: Vec<SpecResult>,
    pub exclusions: Vec<Exclusion>,
    pub n_images: usize,
}

impl RunResult {
    pub fn spec(&self, name: &str) -> Option<&SpecResult> {
        self.specs.iter().find(|s| s.spec.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub similarity: Similarity,
    /// Worker threads; `0` uses every core.
    pub workers: usize,
}

/// For cosine similarity, returns `bundle` L2-normalized unless it is
/// already flagged normalized.
pub fn prepare_bundle(
    bundle: &EmbeddingBundle,
    similarity: Similarity,
) -> Result<Cow<'_, EmbeddingBundle>, EvalError> {
    if similarity == Similarity::Cosine && !bundle.is_normalized() {
        Ok(Cow::Owned(bundle.l2_normalize()?))
    } else {
        Ok(Cow::Borrowed(bundle))
    }
}

/// Query and image bundles prepared for ranking, with the id index built once.
pub struct Evaluator<'a> {
    queries: Cow<'a, EmbeddingBundle>,
    images: Cow<'a, EmbeddingBundle>,
    index: HashMap<String, usize>,
}

impl<'a> Evaluator<'a> {
    /// For cosine similarity, bundles that are not flagged normalized are
    /// L2-normalized here.
    pub fn new(
        queries: &'a EmbeddingBundle,
        images: &'a EmbeddingBundle,
        similarity: Similarity,
    ) -> Result<Self, EvalError> {
        if images.is_empty() {
            return Err(EvalError::EmptyCorpus);
        }
        let queries = prepare_bundle(queries, similarity)?;
        let images = prepare_bundle(images, similarity)?;
        check_similarity(similarity, &queries, &images)?;
        let index = queries
            .ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            queries,
            images,
            index,
        })
    }

    pub fn n_images(&self) -> usize {
        self.images.len()
    }

    pub fn rank_variant(
        &self,
        group: &ParaphraseGroup,
        label: VariantLabel,
    ) -> Result<Ranking, EvalError> {
        let key = group.query_key(label);
        let row = *self
            .index
            .get(&key)
            .ok_or_else(|| EvalError::MissingEmbedding {
                group_id: group.group_id().to_string(),
                label,
                key: key.clone(),
            })?;
        Ok(rank_query(&key, self.queries.row(row), &self.images)?)
    }

    pub fn evaluate_group(
        &self,
        group: &ParaphraseGroup,
        spec: &ComparisonSpec,
    ) -> Result<GroupStability, EvalError> {
        check_spec_against_corpus(spec, self.n_images())?;
        let mut cache = HashMap::new();
        self.evaluate_with_cache(group, spec, &mut cache)
    }

    fn evaluate_with_cache(
        &self,
        group: &ParaphraseGroup,
        spec: &ComparisonSpec,
        cache: &mut HashMap<VariantLabel, Ranking>,
    ) -> Result<GroupStability, EvalError> {
        if group.strategy() != spec.strategy {
            return Err(EvalError::StrategyMismatch {
                group_id: group.group_id().to_string(),
                group: group.strategy(),
                spec: spec.name.clone(),
                expected: spec.strategy,
            });
        }
        for &label in &spec.variant_labels {
            if group.caption(label).is_none() {
                return Err(EvalError::MissingVariant {
                    group_id: group.group_id().to_string(),
                    label,
                });
            }
            if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(label) {
                slot.insert(self.rank_variant(group, label)?);
            }
        }
        let members: Vec<(VariantLabel, &Ranking)> = spec
            .variant_labels
            .iter()
            .map(|l| (*l, &cache[l]))
            .collect();
        Ok(group_stability(group.group_id(), &members, &spec.k_values)?)
    }
}

fn check_spec_against_corpus(spec: &ComparisonSpec, n_images: usize) -> Result<(), EvalError> {
    if n_images == 0 {
        return Err(EvalError::EmptyCorpus);
    }
    if spec.max_k() > n_images {
        return Err(EvalError::KExceedsCorpus {
            k: spec.max_k(),
            n_images,
        });
    }
    Ok(())
}

/// Evaluates one group under one spec.
pub fn evaluate_group(
    group: &ParaphraseGroup,
    spec: &ComparisonSpec,
    queries: &EmbeddingBundle,
    images: &EmbeddingBundle,
    similarity: Similarity,
) -> Result<GroupStability, EvalError> {
    Evaluator::new(queries, images, similarity)?.evaluate_group(group, spec)
}

/// Evaluates every group under every spec of matching strategy and
/// aggregates per stratum. Groups run in parallel; the reduction walks them
/// in input order.
pub fn evaluate_run(
    groups: &[ParaphraseGroup],
    specs: &[ComparisonSpec],
    queries: &EmbeddingBundle,
    images: &EmbeddingBundle,
    options: EvalOptions,
) -> Result<RunResult, EvalError> {
    let mut names = HashSet::new();
    for spec in specs {
        if !names.insert(spec.name.as_str()) {
            return Err(EvalError::DuplicateSpec(spec.name.clone()));
        }
        check_spec_against_corpus(spec, images.len())?;
    }
    let mut ids = HashSet::new();
    for g in groups {
        if !ids.insert(g.group_id()) {
            return Err(EvalError::DuplicateGroup(g.group_id().to_string()));
        }
    }
    let evaluator = Evaluator::new(queries, images, options.similarity)?;

    type Outcome = Vec<(usize, Result<GroupStability, String>)>;
    let per_group: Vec<Outcome> = ranking::with_workers(options.workers, || {
        groups
            .par_iter()
            .map(|group| {
                let mut cache = HashMap::new();
                specs
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.strategy == group.strategy())
                    .map(|(si, spec)| {
                        let result = evaluator
                            .evaluate_with_cache(group, spec, &mut cache)
                            .map_err(|e| e.to_string());
                        (si, result)
                    })
                    .collect()
            })
            .collect()
    });

    let mut records: Vec<Vec<GroupRecord>> = vec![Vec::new(); specs.len()];
    let mut exclusions = Vec::new();
    for (group, outcomes) in groups.iter().zip(per_group) {
        for (si, result) in outcomes {
            match result {
                Ok(stability) => records[si].push(GroupRecord {
                    group_id: group.group_id().to_string(),
                    stratum: group.stratum(),
                    stability,
                }),
                Err(reason) => exclusions.push(Exclusion {
                    spec: specs[si].name.clone(),
                    group_id: group.group_id().to_string(),
                    stratum: group.stratum(),
                    reason,
                }),
            }
        }
    }

    let mut results = Vec::with_capacity(specs.len());
    for (spec, groups) in specs.iter().zip(records) {
        if groups.is_empty() {
            return Err(EvalError::NoEvaluableGroups(spec.name.clone()));
        }
        results.push(SpecResult {
            aggregates: aggregate(spec, &groups),
            spec: spec.clone(),
            groups,
        });
    }
    Ok(RunResult {
        specs: results,
        exclusions,
        n_images: evaluator.n_images(),
    })
}

/// Unweighted means over groups, one aggregate per non-empty stratum.
pub fn aggregate(spec: &ComparisonSpec, records: &[GroupRecord]) -> Vec<StratumAggregate> {
    AggregateStratum::ALL
        .into_iter()
        .filter_map(|stratum| {
            let selected: Vec<&GroupRecord> = records
                .iter()
                .filter(|r| stratum.matches(r.stratum))
                .collect();
            if selected.is_empty() {
                return None;
            }
            let globals: Vec<f64> = selected.iter().map(|r| r.stability.prsm_global).collect();
            let locals = spec
                .k_values
                .iter()
                .map(|k| {
                    let values: Vec<f64> =
                        selected.iter().map(|r| r.stability.prsm_local[k]).collect();
                    (*k, mean(&values))
                })
                .collect();
            Some(StratumAggregate {
                stratum,
                n_groups: selected.len(),
                mean_prsm_global: mean(&globals),
                mean_prsm_local: locals,
            })
        })
        .collect()
}

/// `"builtin"` or an explicit list of spec names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecSelection {
    Builtin,
    Named(Vec<String>),
}

impl Serialize for SpecSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SpecSelection::Builtin => s.serialize_str("builtin"),
            SpecSelection::Named(names) => names.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for SpecSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<String>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "builtin" => Ok(SpecSelection::Builtin),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "specs must be \"builtin\" or a list of names, got {w:?}"
            ))),
            Raw::List(names) => Ok(SpecSelection::Named(names)),
        }
    }
}

/// Run configuration file. Relative paths resolve against the directory of
/// the configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub images: PathBuf,
    pub queries: PathBuf,
    pub groups: Vec<PathBuf>,
    pub specs: SpecSelection,
    pub k_values: Vec<usize>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub similarity: Similarity,
    /// Optional path of a ranking cache covering every query row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking_cache: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        validate_k_values(&config.k_values).map_err(EvalError::Config)?;
        if config.groups.is_empty() {
            return Err(EvalError::Config(
                "groups must list at least one manifest".into(),
            ));
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| EvalError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON encoding (sorted keys) of this
    /// configuration.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        hex::encode(digest)
    }

    pub fn resolve(&self, base: &Path, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            base.join(path)
        }
    }

    pub fn comparison_specs(&self) -> Result<Vec<ComparisonSpec>, EvalError> {
        match &self.specs {
            SpecSelection::Builtin => Ok(builtin_specs_with_k(&self.k_values)),
            SpecSelection::Named(names) => names
                .iter()
                .map(|n| ComparisonSpec::from_name(n, self.k_values.clone()))
                .collect(),
        }
    }
}

/// Inputs loaded for a configured run.
pub struct LoadedRun {
    pub images: EmbeddingBundle,
    pub queries: EmbeddingBundle,
    pub groups: Vec<ParaphraseGroup>,
    pub specs: Vec<ComparisonSpec>,
}

/// Reads bundles and manifests and checks the configuration against the
/// corpus before any ranking starts.
pub fn load_run(config: &RunConfig, base: &Path) -> Result<LoadedRun, EvalError> {
    let specs = config.comparison_specs()?;
    if specs.is_empty() {
        return Err(EvalError::Config("no comparison specs selected".into()));
    }
    let images = read_bundle(config.resolve(base, &config.images))?;
    let queries = read_bundle(config.resolve(base, &config.queries))?;
    for spec in &specs {
        check_spec_against_corpus(spec, images.len())?;
    }
    let mut groups = Vec::new();
    for manifest in &config.groups {
        groups.extend(load_manifest(config.resolve(base, manifest))?);
    }
    Ok(LoadedRun {
        images,
        queries,
        groups,
        specs,
    })
}
