//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{d2_rho, reference_group, reference_order};
use prsm::bundle::{read_bundle, EmbeddingBundle};
use prsm::cli::build_report;
use prsm::evaluation::{
    builtin_specs_with_k, evaluate_run, AggregateStratum, ComparisonSpec, EvalOptions, RunConfig,
    RunResult,
};
use prsm::paraphrase::{
    attribute_variants, load_manifest, parse_caption, prefix_variants, SynonymLexicon, VariantLabel,
};
use prsm::ranking::{rank, rank_all, ranking_cache_bytes, Ranking, Similarity};
use prsm::report::{PrsmReport, RunMetadata, AGGREGATION_NOTE};
use prsm::stats::{prsm_global, prsm_local, spearman_rho, topk_overlap};
use prsm::synthetic::{
    oracle_prsm, synthesize, NoiseSource, PerturbationModel, StrategySigmas, TopicalCorpus,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn shuffled(n: usize, source: &mut NoiseSource) -> Vec<u32> {
    let mut v: Vec<u32> = (0..n as u32).collect();
    for i in (1..n).rev() {
        let j = ((source.uniform() * (i + 1) as f64) as usize).min(i);
        v.swap(i, j);
    }
    v
}

fn ranking(order: Vec<u32>) -> Ranking {
    Ranking::from_order("q", order).unwrap()
}

fn as_usize(order: &[u32]) -> Vec<usize> {
    order.iter().map(|&i| i as usize).collect()
}

/// Every group value and aggregate of a run lies inside its bounds.
fn bounded(run: &RunResult) -> bool {
    run.specs.iter().all(|s| {
        s.groups.iter().all(|g| {
            (-1.0..=1.0).contains(&g.stability.prsm_global)
                && g.stability
                    .prsm_local
                    .values()
                    .all(|v| (0.0..=1.0).contains(v))
        }) && s.aggregates.iter().all(|a| {
            (-1.0..=1.0).contains(&a.mean_prsm_global)
                && a.mean_prsm_local.values().all(|v| (0.0..=1.0).contains(v))
        })
    })
}

fn spearman_correctness() -> Outcome {
    let start = Instant::now();
    let mut source = NoiseSource::new(101, 0);
    let mut worst = 0.0f64;
    let mut exact = true;
    let mut pairs = 0;
    for n in [2, 3, 10, 100, 1000] {
        for _ in 0..1000 {
            let a = shuffled(n, &mut source);
            let b = shuffled(n, &mut source);
            let rho = spearman_rho(&ranking(a.clone()), &ranking(b.clone())).unwrap();
            worst = worst.max((rho - d2_rho(&as_usize(&a), &as_usize(&b))).abs());
            pairs += 1;
        }
        let a = shuffled(n, &mut source);
        let reversed: Vec<u32> = a.iter().rev().copied().collect();
        exact &= spearman_rho(&ranking(a.clone()), &ranking(a.clone())).unwrap() == 1.0;
        exact &= spearman_rho(&ranking(a), &ranking(reversed)).unwrap() == -1.0;
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && exact && elapsed < Duration::from_secs(10),
        format!(
            "{pairs} pairs, max |rho - d2 form| = {worst:.2e}, identical/reversed exact: {exact}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn aggregation_matches_oracle() -> Outcome {
    let mut source = NoiseSource::new(202, 0);
    let mut worst = 0.0f64;
    let mut pair_exact = true;
    for _ in 0..1000 {
        let m = 2 + (source.uniform() * 3.0) as usize;
        let n = 2 + (source.uniform() * 199.0) as usize;
        let k = 1 + (source.uniform() * n as f64) as usize;
        let rs: Vec<Ranking> = (0..m).map(|_| ranking(shuffled(n, &mut source))).collect();
        let global = prsm_global(&rs).unwrap();
        let local = prsm_local(&rs, k).unwrap();
        let (og, ol) = oracle_prsm(&rs, &[k]).unwrap();
        worst = worst.max((global - og).abs()).max((local - ol[&k]).abs());
        if m == 2 {
            let overlap = topk_overlap(&rs[0].top_k(k).unwrap(), &rs[1].top_k(k).unwrap()).unwrap();
            pair_exact &= global.to_bits() == spearman_rho(&rs[0], &rs[1]).unwrap().to_bits();
            pair_exact &= local.to_bits() == overlap.to_bits();
        }
    }
    outcome(
        worst <= 1e-9 && pair_exact,
        format!("1000 groups, max |delta| vs oracle = {worst:.2e}, m=2 bit-exact: {pair_exact}"),
    )
}

fn bounds_and_reflexivity(suite: &[&RunResult]) -> Outcome {
    let all_bounded = suite.iter().all(|r| bounded(r));

    let model = PerturbationModel {
        seed: 303,
        sigma: 0.0,
        n_images: 200,
        n_queries: 20,
        dim: 32,
    };
    let still = synthesize(&model, StrategySigmas::uniform(0.0));
    let specs = builtin_specs_with_k(&[1, 10, 100, 200]);
    let run = evaluate_run(
        &still.groups,
        &specs,
        &still.queries,
        &still.images,
        EvalOptions::default(),
    )
    .unwrap();
    let sigma_zero_ones = run.specs.iter().all(|s| {
        s.groups.iter().all(|g| {
            g.stability.prsm_global == 1.0 && g.stability.prsm_local.values().all(|&v| v == 1.0)
        })
    });

    let noisy = synthesize(&model, StrategySigmas::uniform(1.0));
    let specs = builtin_specs_with_k(&[200]);
    let run_full_k = evaluate_run(
        &noisy.groups,
        &specs,
        &noisy.queries,
        &noisy.images,
        EvalOptions::default(),
    )
    .unwrap();
    let full_k_ones = run_full_k
        .specs
        .iter()
        .all(|s| s.groups.iter().all(|g| g.stability.prsm_local[&200] == 1.0));
    let all_bounded = all_bounded && bounded(&run) && bounded(&run_full_k);
    outcome(
        all_bounded && sigma_zero_ones && full_k_ones,
        format!(
            "bounds hold across {} runs: {all_bounded}, sigma=0 all 1.0: {sigma_zero_ones}, k=n_images local 1.0: {full_k_ones}",
            suite.len() + 2
        ),
    )
}

fn monotone_degradation() -> (Outcome, Vec<RunResult>) {
    let start = Instant::now();
    let sigmas = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0];
    let spec = vec![ComparisonSpec::from_name("o-c1-c2", vec![100]).unwrap()];
    let mut globals = Vec::new();
    let mut locals = Vec::new();
    let mut runs = Vec::new();
    for sigma in sigmas {
        let model = PerturbationModel {
            seed: 404,
            sigma,
            n_images: 1000,
            n_queries: 500,
            dim: 64,
        };
        let data = synthesize(&model, StrategySigmas::uniform(sigma));
        let run = evaluate_run(
            &data.groups,
            &spec,
            &data.queries,
            &data.images,
            EvalOptions::default(),
        )
        .unwrap();
        let overall = run.specs[0].aggregate(AggregateStratum::Overall).unwrap();
        assert_eq!(overall.n_groups, 500);
        globals.push(overall.mean_prsm_global);
        locals.push(overall.mean_prsm_local[&100]);
        runs.push(run);
    }
    let ok = |series: &[f64]| {
        let rises: Vec<f64> = series
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .collect();
        rises.len() <= 1 && rises.iter().all(|d| *d <= 0.005)
    };
    let elapsed = start.elapsed();
    let fmt = |s: &[f64]| {
        s.iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    (
        outcome(
            ok(&globals) && ok(&locals) && elapsed < Duration::from_secs(120),
            format!(
                "global [{}], top-100 [{}], {:.1}s",
                fmt(&globals),
                fmt(&locals),
                elapsed.as_secs_f64()
            ),
        ),
        runs,
    )
}

fn ranking_determinism() -> Outcome {
    let dim = 16;
    let mut source = NoiseSource::new(505, 0);
    let mut bundle = |n: usize, tag: &str| {
        let vectors: Vec<f32> = (0..n).flat_map(|_| source.unit_vector(dim)).collect();
        let ids = (0..n).map(|i| format!("{tag}{i}")).collect();
        EmbeddingBundle::new(ids, dim, vectors, true, tag).unwrap()
    };
    let queries = bundle(500, "q");
    let images = bundle(2000, "i");
    let caches: Vec<Vec<u8>> = [1, 2, 8]
        .iter()
        .map(|&w| {
            let rs = rank_all(&queries, &images, Similarity::Cosine, w).unwrap();
            ranking_cache_bytes(&rs, images.len()).unwrap()
        })
        .collect();
    let identical = caches.windows(2).all(|w| w[0] == w[1]);
    let flat = rank("flat", &vec![0.5; 257]).unwrap();
    let ascending = flat
        .order()
        .iter()
        .enumerate()
        .all(|(i, &img)| img as usize == i);
    outcome(
        identical && ascending,
        format!(
            "caches for 1/2/8 workers identical: {identical} ({} bytes), all-equal order ascending: {ascending}",
            caches[0].len()
        ),
    )
}

fn qualitative_pattern() -> (Outcome, Vec<RunResult>) {
    let corpus = TopicalCorpus {
        seed: 2024,
        dim: 512,
        semantic_dims: 256,
        n_topics: 20,
        cluster_size: 150,
        cluster_spread: 0.5,
        n_tail: 20_000,
        nuisance: 5.0,
    };
    let (small, large) = (0.1, 0.55);
    let specs = builtin_specs_with_k(&[100]);
    let report_for = |sigmas: StrategySigmas| {
        let data = corpus.synthesize(sigmas);
        let run = evaluate_run(
            &data.groups,
            &specs,
            &data.queries,
            &data.images,
            EvalOptions::default(),
        )
        .unwrap();
        let metadata = RunMetadata {
            config_hash: String::new(),
            images_provenance: data.images.provenance().into(),
            queries_provenance: data.queries.provenance().into(),
            n_images: data.images.len(),
            n_queries: data.queries.len(),
            n_groups_loaded: data.groups.len(),
            similarity: Similarity::Cosine,
            k_values: vec![100],
            aggregation: AGGREGATION_NOTE.into(),
        };
        (PrsmReport::from_run(&run, metadata), run)
    };
    let (report, run) = report_for(StrategySigmas {
        p1: large,
        p2: small,
        p3: large,
    });
    let (baseline, baseline_run) = report_for(StrategySigmas::uniform(0.0));

    let overall = |r: &PrsmReport| -> BTreeMap<String, (f64, f64)> {
        r.rows
            .iter()
            .filter(|row| row.stratum == AggregateStratum::Overall)
            .map(|row| (row.spec.clone(), (row.spearman, row.top(100).unwrap())))
            .collect()
    };
    let (now, base) = (overall(&report), overall(&baseline));
    let is_p2 = |name: &str| ["p1-p2", "p1-np", "p1-p2-p3-np"].contains(&name);
    let min_p2 = now
        .iter()
        .filter(|(n, _)| is_p2(n))
        .map(|(_, v)| v.1)
        .fold(f64::MAX, f64::min);
    let max_other = now
        .iter()
        .filter(|(n, _)| !is_p2(n))
        .map(|(_, v)| v.1)
        .fold(f64::MIN, f64::max);
    let drift = now
        .iter()
        .map(|(n, v)| (v.0 - base[n].0).abs())
        .fold(0.0f64, f64::max);
    let band = 0.03;
    let top = |name: &str| now[name].1;
    (
        outcome(
            now.len() == 10 && min_p2 > max_other && drift <= band,
            format!(
                "top-100: P2 {:.3} vs P1 {:.3} / P3 {:.3} (min P2 {min_p2:.3} > max other {max_other:.3}); \
                 Spearman {:.3}..{:.3}, max drift from baseline {drift:.3} <= {band}",
                top("p1-p2-p3-np"),
                top("o-c1-c2"),
                top("o-a1-a2-a12"),
                now.values().map(|v| v.0).fold(f64::MAX, f64::min),
                now.values().map(|v| v.0).fold(f64::MIN, f64::max),
            ),
        ),
        vec![run, baseline_run],
    )
}

fn golden_run() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy");
    let config = RunConfig::load(dir.join("config.json")).unwrap();
    let (report, run) = build_report(&config, &dir, 0).unwrap();
    let golden = std::fs::read_to_string(dir.join("expected_report.json")).unwrap();
    let identical = report.render_json() == golden;

    // Cross-check every evaluated group against the reference pipeline.
    let queries = read_bundle(dir.join(&config.queries)).unwrap();
    let images = read_bundle(dir.join(&config.images)).unwrap();
    let index = queries.index();
    let mut groups = Vec::new();
    for manifest in &config.groups {
        groups.extend(load_manifest(dir.join(manifest)).unwrap());
    }
    let mut worst = 0.0f64;
    for spec in &run.specs {
        for record in &spec.groups {
            let group = groups
                .iter()
                .find(|g| g.group_id() == record.group_id)
                .unwrap();
            let orders: Vec<Vec<usize>> = spec
                .spec
                .variant_labels
                .iter()
                .map(|l| {
                    let row = queries.row(index[group.query_key(*l).as_str()]);
                    reference_order(row, images.vectors(), images.dim())
                })
                .collect();
            let (g, l) = reference_group(&orders, &spec.spec.k_values);
            worst = worst.max((record.stability.prsm_global - g).abs());
            for (k, v) in spec.spec.k_values.iter().zip(l) {
                worst = worst.max((record.stability.prsm_local[k] - v).abs());
            }
        }
    }
    let groups_total = groups.len();
    outcome(
        identical && worst <= 1e-12 && run.exclusions.len() == 2 && groups_total == 8,
        format!(
            "report.json byte-identical to golden: {identical}; {groups_total} groups, {} exclusions; \
             max |delta| vs reference pipeline {worst:.1e}",
            run.exclusions.len()
        ),
    )
}

fn paraphrase_generation() -> Outcome {
    let cs = parse_caption("A photo of a young female academic").unwrap();
    let p2 = prefix_variants(&cs, "g");
    let captions: Vec<&str> = p2.members().iter().map(|(_, c)| c.as_str()).collect();
    let prefixes_ok = captions
        == [
            "an image of a young female academic",
            "a picture of a young female academic",
            "a photo of a young female academic",
            "a young female academic",
        ];
    let lexicon = SynonymLexicon::new([("young", "youthful"), ("female", "woman")]).unwrap();
    let p3 = attribute_variants(&cs, &lexicon, "g").unwrap();
    let labels: Vec<VariantLabel> = p3.members().iter().map(|(l, _)| *l).collect();
    let tokens = |l: VariantLabel| -> Vec<&str> { p3.caption(l).unwrap().split(' ').collect() };
    let diff = |l: VariantLabel| {
        let (o, v) = (tokens(VariantLabel::O), tokens(l));
        o.len() == v.len() && o.iter().zip(&v).filter(|(a, b)| a != b).count() == 1
    };
    let attributes_ok = labels
        == [
            VariantLabel::O,
            VariantLabel::A1,
            VariantLabel::A2,
            VariantLabel::A12,
        ]
        && diff(VariantLabel::A1)
        && diff(VariantLabel::A2)
        && p3.caption(VariantLabel::A12) == Some("a photo of a youthful woman academic");
    outcome(
        prefixes_ok && attributes_ok,
        format!(
            "P2 variants {captions:?}; P3 a12 = {:?}, a1/a2 single-token diffs: {attributes_ok}",
            p3.caption(VariantLabel::A12).unwrap()
        ),
    )
}

fn main() {
    let total = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("spearman correctness", spearman_correctness()));
    results.push(("prsm aggregation vs oracle", aggregation_matches_oracle()));
    let (monotone, sweep_runs) = monotone_degradation();
    let (pattern, pattern_runs) = qualitative_pattern();
    let suite: Vec<&RunResult> = sweep_runs.iter().chain(&pattern_runs).collect();
    results.push(("bounds and reflexivity", bounds_and_reflexivity(&suite)));
    results.push(("monotone degradation", monotone));
    results.push(("ranking engine determinism", ranking_determinism()));
    results.push(("qualitative stability pattern", pattern));
    results.push(("end-to-end golden run", golden_run()));
    results.push(("paraphrase generation", paraphrase_generation()));

    let mut failed = 0;
    println!();
    for (i, (name, o)) in results.iter().enumerate() {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("{status} [{}] {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "\nacceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
