//! Paraphrase ranking stability for embedding-based retrieval.
//!
//! Given a set of paraphrased queries, the toolkit ranks an image corpus for
//! each paraphrase and measures how much the rankings agree, globally
//! (Spearman's rho over the full ranking) and locally (overlap of the top-k
//! sets), averaged over all pairs of paraphrases in a group and then over
//! groups, per demographic stratum.
//!
//! Modules follow the pipeline:
//!
//! * [`bundle`]: the `PRSMEMB1` embedding bundle format.
//! * [`paraphrase`]: caption parsing, prefix and attribute paraphrases,
//!   manifests.
//! * [`ranking`]: exact, deterministic, parallel ranking.
//! * [`stats`]: Spearman's rho, top-k overlap and their group means.
//! * [`evaluation`]: comparison specs, per-group evaluation, stratified
//!   aggregation.
//! * [`report`]: JSON, CSV and Markdown reports.
//! * [`synthetic`]: seeded corpora, perturbations and reference oracles.
//! * [`cli`]: the `prsm` command line.

pub mod bundle;
pub mod cli;
pub mod evaluation;
pub mod paraphrase;
pub mod ranking;
pub mod report;
pub mod stats;
pub mod synthetic;

pub use bundle::{read_bundle, write_bundle, EmbeddingBundle};
pub use evaluation::{
    builtin_specs, evaluate_group, evaluate_run, ComparisonSpec, EvalOptions, RunConfig,
};
pub use paraphrase::{
    attribute_variants, load_p1_manifest, parse_caption, prefix_variants, ParaphraseGroup,
    Strategy, Stratum, SynonymLexicon, VariantLabel,
};
pub use ranking::{rank, rank_all, score_query, top_k, Ranking, Similarity, TopK};
pub use report::PrsmReport;
pub use stats::{prsm_global, prsm_local, spearman_rho, topk_overlap};
