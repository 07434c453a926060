//! Rendering of run results.
//!
//! `report.json` is the source of truth and keeps full `f64` precision with
//! sorted keys. CSV and Markdown are views rounded half-to-even to three
//! decimals.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evaluation::{builtin_position, AggregateStratum, Exclusion, RunResult};
use crate::paraphrase::Strategy;
use crate::ranking::Similarity;

/// How per-group values are pooled; recorded in every report.
pub const AGGREGATION_NOTE: &str =
    "per-group mean over all variant pairs, then unweighted mean over groups";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub images_provenance: String,
    pub queries_provenance: String,
    pub n_images: usize,
    pub n_queries: usize,
    pub n_groups_loaded: usize,
    pub similarity: Similarity,
    pub k_values: Vec<usize>,
    pub aggregation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKValue {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: Strategy,
    pub spec: String,
    pub m: usize,
    pub stratum: AggregateStratum,
    pub n_groups: usize,
    pub n_excluded: usize,
    pub spearman: f64,
    pub top_k: Vec<TopKValue>,
}

impl ReportRow {
    pub fn top(&self, k: usize) -> Option<f64> {
        self.top_k.iter().find(|t| t.k == k).map(|t| t.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrsmReport {
    pub metadata: RunMetadata,
    pub rows: Vec<ReportRow>,
    pub exclusions: Vec<Exclusion>,
}

impl PrsmReport {
    /// Flattens a run into rows ordered by strategy, then built-in spec
    /// order (other specs after, in run order), then stratum.
    pub fn from_run(run: &RunResult, metadata: RunMetadata) -> Self {
        let mut specs: Vec<(usize, &crate::evaluation::SpecResult)> =
            run.specs.iter().enumerate().collect();
        specs.sort_by_key(|(i, s)| {
            (
                s.spec.strategy,
                builtin_position(&s.spec.name).unwrap_or(usize::MAX),
                *i,
            )
        });
        let mut rows = Vec::new();
        for (_, result) in specs {
            for agg in &result.aggregates {
                let n_excluded = run
                    .exclusions
                    .iter()
                    .filter(|e| e.spec == result.spec.name && agg.stratum.matches(e.stratum))
                    .count();
                rows.push(ReportRow {
                    strategy: result.spec.strategy,
                    spec: result.spec.name.clone(),
                    m: result.spec.m(),
                    stratum: agg.stratum,
                    n_groups: agg.n_groups,
                    n_excluded,
                    spearman: agg.mean_prsm_global,
                    top_k: agg
                        .mean_prsm_local
                        .iter()
                        .map(|(&k, &value)| TopKValue { k, value })
                        .collect(),
                });
            }
        }
        for row in &rows {
            assert!((-1.0..=1.0).contains(&row.spearman));
            assert!(row.top_k.iter().all(|t| (0.0..=1.0).contains(&t.value)));
        }
        Self {
            metadata,
            rows,
            exclusions: run.exclusions.clone(),
        }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Canonical JSON: keys sorted, shortest round-trip float formatting,
    /// trailing newline.
    pub fn render_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
        out.push('\n');
        out
    }

    /// Distinct k values across all rows, ascending.
    fn k_columns(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self
            .rows
            .iter()
            .flat_map(|r| r.top_k.iter().map(|t| t.k))
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn render_csv(&self) -> String {
        let ks = self.k_columns();
        let mut out = String::from("strategy,spec,stratum,n_groups,n_excluded,spearman");
        for k in &ks {
            let _ = write!(out, ",top_{k}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                row.strategy,
                row.spec,
                row.stratum,
                row.n_groups,
                row.n_excluded,
                round3(row.spearman)
            );
            for &k in &ks {
                out.push(',');
                if let Some(v) = row.top(k) {
                    out.push_str(&round3(v));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn render_markdown(&self) -> String {
        let ks = self.k_columns();
        let strata: Vec<AggregateStratum> = AggregateStratum::ALL
            .into_iter()
            .filter(|s| self.rows.iter().any(|r| r.stratum == *s))
            .collect();
        let mut out = String::new();
        let md = &self.metadata;
        let _ = writeln!(out, "# Paraphrase ranking stability\n");
        let _ = writeln!(out, "- config hash: `{}`", md.config_hash);
        let _ = writeln!(out, "- images: {} ({})", md.n_images, md.images_provenance);
        let _ = writeln!(
            out,
            "- queries: {} ({})",
            md.n_queries, md.queries_provenance
        );
        let _ = writeln!(out, "- similarity: {}", similarity_name(md.similarity));
        let _ = writeln!(out, "- aggregation: {}\n", md.aggregation);

        let mut header = String::from("| Strategy | Comparison |");
        let mut rule = String::from("|---|---|");
        for s in &strata {
            let n = self.stratum_n(*s);
            let title = match n {
                Some(n) => format!("{} (n={n})", s.title()),
                None => format!("{} (n varies)", s.title()),
            };
            let _ = write!(header, " {title} Spearman |");
            rule.push_str("---:|");
            for k in &ks {
                let _ = write!(header, " {} Top {k} |", s.title());
                rule.push_str("---:|");
            }
        }
        let _ = writeln!(out, "{header}\n{rule}");

        let mut specs: Vec<(Strategy, &str)> = Vec::new();
        for row in &self.rows {
            if !specs.iter().any(|(_, n)| *n == row.spec) {
                specs.push((row.strategy, &row.spec));
            }
        }
        let mut last_strategy = None;
        for (strategy, name) in specs {
            let label = if last_strategy == Some(strategy) {
                ""
            } else {
                strategy.as_str()
            };
            last_strategy = Some(strategy);
            let mut line = format!("| {label} | {name} |");
            for s in &strata {
                let row = self.rows.iter().find(|r| r.spec == name && r.stratum == *s);
                match row {
                    Some(r) => {
                        let _ = write!(line, " {} |", round3(r.spearman));
                        for &k in &ks {
                            let cell = r.top(k).map(round3).unwrap_or_else(|| "-".into());
                            let _ = write!(line, " {cell} |");
                        }
                    }
                    None => {
                        for _ in 0..=ks.len() {
                            line.push_str(" - |");
                        }
                    }
                }
            }
            let _ = writeln!(out, "{line}");
        }

        let _ = writeln!(out, "\n## Exclusions\n");
        if self.exclusions.is_empty() {
            let _ = writeln!(out, "None.");
        } else {
            let _ = writeln!(
                out,
                "| Spec | Group | Stratum | Reason |\n|---|---|---|---|"
            );
            for e in &self.exclusions {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} |",
                    e.spec,
                    e.group_id,
                    e.stratum,
                    e.reason.replace('|', "\\|")
                );
            }
        }
        out
    }

    /// Group count of a stratum if it is the same for every spec.
    fn stratum_n(&self, stratum: AggregateStratum) -> Option<usize> {
        let mut counts = self
            .rows
            .iter()
            .filter(|r| r.stratum == stratum)
            .map(|r| r.n_groups);
        let first = counts.next()?;
        counts.all(|c| c == first).then_some(first)
    }

    /// Writes `report.json`, `report.csv` and `report.md` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.render_json())?;
        fs::write(dir.join("report.csv"), self.render_csv())?;
        fs::write(dir.join("report.md"), self.render_markdown())
    }
}

fn similarity_name(s: Similarity) -> &'static str {
    match s {
        Similarity::Cosine => "cosine",
        Similarity::Dot => "dot",
    }
}

/// Three decimals, ties to even on the exact binary value.
pub fn round3(value: f64) -> String {
    let s = format!("{value:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}
