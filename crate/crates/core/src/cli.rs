//! The `prsm` command line: `paraphrase`, `evaluate`, `synth` and `inspect`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 when a spec has
//! no evaluable groups.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bundle::{read_bundle, write_bundle, BUNDLE_MAGIC};
use crate::evaluation::{
    evaluate_run, load_run, prepare_bundle, EvalError, EvalOptions, RunConfig, SpecSelection,
    DEFAULT_K_VALUES,
};
use crate::paraphrase::{
    attribute_variants, load_manifest, load_p1_manifest, manifest_line, parse_caption,
    prefix_variants, write_manifest, ParaphraseGroup, Strategy, Stratum, SynonymLexicon,
};
use crate::ranking::{self, parse_ranking_cache_header, RANKING_MAGIC};
use crate::report::{PrsmReport, RunMetadata, AGGREGATION_NOTE};
use crate::synthetic::{synthesize, PerturbationModel, StrategySigmas};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "prsm", version, about = "Paraphrase ranking stability toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    P1,
    P2,
    P3,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::P1 => Strategy::P1,
            StrategyArg::P2 => Strategy::P2,
            StrategyArg::P3 => Strategy::P3,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build paraphrase group manifests from captions.
    Paraphrase {
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Captions (one per line, or JSON lines with "caption"); for p1 a
        /// manifest of LLM rewrites.
        #[arg(long)]
        captions: PathBuf,
        /// Synonym lexicon, required for p3.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank, compare and aggregate as described by a run configuration.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated spec names overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        specs: Option<Vec<String>>,
        /// Comma-separated k values overriding the configuration.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        /// Worker threads (default: all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Write a seeded synthetic corpus, query bundle, manifests and config.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        n_images: usize,
        #[arg(long)]
        n_queries: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a bundle, ranking cache, manifest, lexicon, config or report
    /// and print a summary.
    Inspect { path: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Eval(EvalError::NoEvaluableGroups(_)) => EXIT_EMPTY,
            _ => EXIT_USAGE,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Paraphrase {
            strategy,
            captions,
            lexicon,
            out,
        } => cmd_paraphrase(strategy.into(), &captions, lexicon.as_deref(), &out).map(|_| ()),
        Command::Evaluate {
            config,
            specs,
            k,
            jobs,
        } => cmd_evaluate(&config, specs, k, jobs).map(|_| ()),
        Command::Synth {
            seed,
            sigma,
            n_images,
            n_queries,
            dim,
            out,
        } => cmd_synth(
            &PerturbationModel {
                seed,
                sigma,
                n_images,
                n_queries,
                dim,
            },
            &out,
        ),
        Command::Inspect { path } => {
            let summary = inspect(&path)?;
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            Ok(())
        }
    }
}

/// A caption that could not be turned into a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub line: usize,
    pub caption: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseOutcome {
    pub groups: Vec<ParaphraseGroup>,
    pub ledger: Vec<LedgerEntry>,
    pub manifest_path: PathBuf,
    pub ledger_path: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionLine {
    caption: String,
    #[serde(default)]
    group_id: Option<String>,
    #[serde(default)]
    stratum: Option<Stratum>,
}

/// Builds groups for one strategy and writes `groups_<s>.jsonl` plus
/// `ledger_<s>.jsonl` into `out`. Individual captions that fail go to the
/// ledger; unreadable or malformed input files are errors.
pub fn cmd_paraphrase(
    strategy: Strategy,
    captions: &Path,
    lexicon: Option<&Path>,
    out: &Path,
) -> Result<ParaphraseOutcome, CliError> {
    if lexicon.is_some() && strategy != Strategy::P3 {
        return Err(CliError::Usage(
            "--lexicon is only valid with --strategy p3".into(),
        ));
    }
    let lex = match (strategy, lexicon) {
        (Strategy::P3, None) => {
            return Err(CliError::Usage("--strategy p3 requires --lexicon".into()))
        }
        (Strategy::P3, Some(path)) => {
            Some(SynonymLexicon::load(path).map_err(|e| CliError::Usage(e.to_string()))?)
        }
        _ => None,
    };

    let tag = strategy.as_str().to_lowercase();
    let mut groups = Vec::new();
    let mut ledger = Vec::new();
    if strategy == Strategy::P1 {
        groups = load_p1_manifest(captions).map_err(|e| CliError::Usage(e.to_string()))?;
    } else {
        let text = fs::read_to_string(captions).map_err(|e| io_err(captions, e))?;
        let mut seen = std::collections::HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fail = |caption: &str, reason: String| LedgerEntry {
                line: line_no,
                caption: caption.to_string(),
                reason,
            };
            let (caption, group_id, stratum) = if line.trim_start().starts_with('{') {
                match serde_json::from_str::<CaptionLine>(line) {
                    Ok(c) => (c.caption, c.group_id, c.stratum),
                    Err(e) => {
                        ledger.push(fail(line, format!("malformed JSON: {e}")));
                        continue;
                    }
                }
            } else {
                (line.to_string(), None, None)
            };
            let group_id = group_id.unwrap_or_else(|| format!("{tag}-{line_no:06}"));
            if !seen.insert(group_id.clone()) {
                ledger.push(fail(&caption, format!("duplicate group_id {group_id:?}")));
                continue;
            }
            let cs = match parse_caption(&caption) {
                Ok(cs) => cs,
                Err(e) => {
                    ledger.push(fail(&caption, e.to_string()));
                    continue;
                }
            };
            let built = match strategy {
                Strategy::P2 => Ok(prefix_variants(&cs, group_id)),
                Strategy::P3 => attribute_variants(&cs, lex.as_ref().unwrap(), group_id)
                    .map_err(|e| e.to_string()),
                Strategy::P1 => unreachable!(),
            };
            match built {
                Ok(group) => groups.push(match stratum {
                    Some(s) => ParaphraseGroup::new(
                        group.group_id(),
                        group.strategy(),
                        group.members().to_vec(),
                        s,
                    )
                    .expect("same members"),
                    None => group,
                }),
                Err(reason) => ledger.push(fail(&caption, reason)),
            }
        }
    }

    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let manifest_path = out.join(format!("groups_{tag}.jsonl"));
    let ledger_path = out.join(format!("ledger_{tag}.jsonl"));
    write_manifest(&groups, &manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let mut ledger_text = Vec::new();
    for entry in &ledger {
        let line = json!({"line": entry.line, "caption": entry.caption, "reason": entry.reason});
        writeln!(ledger_text, "{line}").unwrap();
    }
    fs::write(&ledger_path, ledger_text).map_err(|e| io_err(&ledger_path, e))?;

    if groups.is_empty() && ledger.is_empty() {
        eprintln!(
            "warning: {} holds no captions; wrote an empty manifest",
            captions.display()
        );
    }
    if !ledger.is_empty() {
        eprintln!(
            "warning: {} caption(s) skipped, see {}",
            ledger.len(),
            ledger_path.display()
        );
    }
    Ok(ParaphraseOutcome {
        groups,
        ledger,
        manifest_path,
        ledger_path,
    })
}

/// Loads the configuration, applies overrides, evaluates and builds the
/// report. Nothing is written.
pub fn build_report(
    config: &RunConfig,
    base: &Path,
    workers: usize,
) -> Result<(PrsmReport, crate::evaluation::RunResult), CliError> {
    let loaded = load_run(config, base)?;
    let options = EvalOptions {
        similarity: config.similarity,
        workers,
    };
    let run = evaluate_run(
        &loaded.groups,
        &loaded.specs,
        &loaded.queries,
        &loaded.images,
        options,
    )?;
    if let Some(cache) = &config.ranking_cache {
        let path = config.resolve(base, cache);
        let queries = prepare_bundle(&loaded.queries, config.similarity)?;
        let images = prepare_bundle(&loaded.images, config.similarity)?;
        let rankings = ranking::rank_all(&queries, &images, config.similarity, workers)
            .map_err(EvalError::from)?;
        ranking::write_ranking_cache(&rankings, loaded.images.len(), &path)
            .map_err(EvalError::from)?;
    }
    let metadata = RunMetadata {
        config_hash: config.hash(),
        images_provenance: loaded.images.provenance().to_string(),
        queries_provenance: loaded.queries.provenance().to_string(),
        n_images: loaded.images.len(),
        n_queries: loaded.queries.len(),
        n_groups_loaded: loaded.groups.len(),
        similarity: config.similarity,
        k_values: config.k_values.clone(),
        aggregation: AGGREGATION_NOTE.to_string(),
    };
    Ok((PrsmReport::from_run(&run, metadata), run))
}

/// Runs a configured evaluation and writes `report.{json,csv,md}` plus a
/// `run_info.json` with wall-clock timestamps to the output directory.
pub fn cmd_evaluate(
    config_path: &Path,
    specs: Option<Vec<String>>,
    k: Option<Vec<usize>>,
    jobs: usize,
) -> Result<PrsmReport, CliError> {
    let started = unix_seconds();
    let mut config = RunConfig::load(config_path)?;
    if let Some(specs) = specs {
        config.specs = SpecSelection::Named(specs);
    }
    if let Some(k) = k {
        config.k_values = k;
    }
    // Re-validate overrides through the same path as the file.
    let config = RunConfig::from_json(&serde_json::to_string(&config).unwrap())?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let (report, _) = build_report(&config, base, jobs)?;
    let out = config.resolve(base, &config.output_dir);
    report.write_all(&out).map_err(|e| io_err(&out, e))?;
    let info = json!({
        "started_at_unix": started,
        "finished_at_unix": unix_seconds(),
        "jobs": jobs,
        "config_hash": report.metadata.config_hash,
    });
    fs::write(out.join("run_info.json"), format!("{info:#}\n")).map_err(|e| io_err(&out, e))?;
    for e in &report.exclusions {
        eprintln!("excluded {} from {}: {}", e.group_id, e.spec, e.reason);
    }
    Ok(report)
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes `images.prsmemb`, `queries.prsmemb`, one manifest per strategy,
/// `lexicon.json` and a ready-to-run `config.json`.
pub fn cmd_synth(model: &PerturbationModel, out: &Path) -> Result<(), CliError> {
    if model.n_images < 2 {
        return Err(CliError::Usage("--n-images must be at least 2".into()));
    }
    if model.n_queries == 0 || model.dim == 0 {
        return Err(CliError::Usage(
            "--n-queries and --dim must be positive".into(),
        ));
    }
    if !(model.sigma >= 0.0 && model.sigma.is_finite()) {
        return Err(CliError::Usage(
            "--sigma must be a non-negative number".into(),
        ));
    }
    let data = synthesize(model, StrategySigmas::uniform(model.sigma));
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_bundle(&data.images, out.join("images.prsmemb")).map_err(EvalError::from)?;
    write_bundle(&data.queries, out.join("queries.prsmemb")).map_err(EvalError::from)?;
    let mut manifests = Vec::new();
    for strategy in Strategy::ALL {
        let name = format!("groups_{}.jsonl", strategy.as_str().to_lowercase());
        let groups: Vec<ParaphraseGroup> = data
            .groups
            .iter()
            .filter(|g| g.strategy() == strategy)
            .cloned()
            .collect();
        write_manifest(&groups, out.join(&name)).map_err(|e| io_err(out, e))?;
        manifests.push(PathBuf::from(name));
    }
    fs::write(out.join("lexicon.json"), data.lexicon.to_json() + "\n")
        .map_err(|e| io_err(out, e))?;
    let mut k_values: Vec<usize> = DEFAULT_K_VALUES
        .into_iter()
        .filter(|&k| k <= model.n_images)
        .collect();
    if k_values.is_empty() {
        k_values.push((model.n_images / 10).max(1));
    }
    let config = RunConfig {
        images: "images.prsmemb".into(),
        queries: "queries.prsmemb".into(),
        groups: manifests,
        specs: SpecSelection::Builtin,
        k_values,
        output_dir: "report".into(),
        similarity: Default::default(),
        ranking_cache: None,
    };
    let text = serde_json::to_string_pretty(&serde_json::to_value(&config).unwrap()).unwrap();
    fs::write(out.join("config.json"), text + "\n").map_err(|e| io_err(out, e))?;
    Ok(())
}

/// Validates a file and returns a JSON summary of it.
pub fn inspect(path: &Path) -> Result<Value, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let invalid = |e: &dyn std::fmt::Display| CliError::Usage(format!("{}: {e}", path.display()));
    if bytes.starts_with(BUNDLE_MAGIC) {
        let bundle = read_bundle(path).map_err(|e| invalid(&e))?;
        return Ok(json!({
            "kind": "embedding_bundle",
            "n": bundle.len(),
            "dim": bundle.dim(),
            "normalized": bundle.is_normalized(),
            "provenance": bundle.provenance(),
            "first_ids": bundle.ids().iter().take(5).collect::<Vec<_>>(),
        }));
    }
    if bytes.starts_with(RANKING_MAGIC) {
        let (header, _) = parse_ranking_cache_header(&bytes).map_err(|e| invalid(&e))?;
        ranking::parse_ranking_cache(&bytes).map_err(|e| invalid(&e))?;
        return Ok(json!({
            "kind": "ranking_cache",
            "n_queries": header.n_queries,
            "n_images": header.n_images,
        }));
    }
    let text = String::from_utf8(bytes).map_err(|e| invalid(&e))?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        let groups = load_manifest(path).map_err(|e| invalid(&e))?;
        let mut by_strategy = BTreeMap::new();
        let mut by_stratum = BTreeMap::new();
        for g in &groups {
            *by_strategy.entry(g.strategy().as_str()).or_insert(0usize) += 1;
            *by_stratum.entry(g.stratum().as_str()).or_insert(0usize) += 1;
        }
        return Ok(json!({
            "kind": "manifest",
            "groups": groups.len(),
            "by_strategy": by_strategy,
            "by_stratum": by_stratum,
            "first_line": groups.first().map(manifest_line),
        }));
    }
    let value: Value = serde_json::from_str(&text).map_err(|e| invalid(&e))?;
    if value.get("rows").is_some() && value.get("metadata").is_some() {
        let report = PrsmReport::from_json(&text).map_err(|e| invalid(&e))?;
        return Ok(json!({
            "kind": "report",
            "rows": report.rows.len(),
            "exclusions": report.exclusions.len(),
            "config_hash": report.metadata.config_hash,
        }));
    }
    if value.get("images").is_some() && value.get("queries").is_some() {
        let config = RunConfig::from_json(&text).map_err(|e| invalid(&e))?;
        return Ok(json!({
            "kind": "run_config",
            "groups": config.groups.len(),
            "k_values": config.k_values,
            "config_hash": config.hash(),
        }));
    }
    let lexicon = SynonymLexicon::from_json(&text).map_err(|e| invalid(&e))?;
    Ok(json!({"kind": "lexicon", "entries": lexicon.len()}))
}
