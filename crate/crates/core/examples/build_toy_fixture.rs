//! Regenerates the toy fixture behind the golden-report test.
//!
//! ```text
//! cargo run --example build_toy_fixture -- crates/core/tests/fixtures/toy
//! ```
//!
//! Writes 50 images, 8 paraphrase groups across all three strategies, their
//! query embeddings (one deliberately missing), a run config and
//! `expected_report.json`. Review the report before committing it.

use std::fs;
use std::path::{Path, PathBuf};

use prsm::bundle::{write_bundle, EmbeddingBundle};
use prsm::cli::build_report;
use prsm::evaluation::{RunConfig, SpecSelection};
use prsm::paraphrase::{
    attribute_variants, parse_caption, prefix_variants, write_manifest, ParaphraseGroup, Strategy,
    Stratum, SynonymLexicon, VariantLabel,
};
use prsm::ranking::Similarity;
use prsm::synthetic::{perturb_query, variant_seed, NoiseSource};

const SEED: u64 = 11;
const DIM: usize = 8;
const N_IMAGES: usize = 50;
const MISSING: &str = "p3-000002/a12";

const CAPTIONS: [&str; 3] = [
    "A photo of a young female academic",
    "An image of an elderly male nurse",
    "a tall androgynous chef",
];

fn p1_groups() -> Vec<ParaphraseGroup> {
    let rows = [
        (
            Stratum::Female,
            "a young woman who works in academia, photographed",
            "a photograph showing a youthful female scholar",
        ),
        (
            Stratum::Male,
            "a picture of an older man working as a nurse",
            "an elderly man who is a nurse, in an image",
        ),
        (
            Stratum::Unspecified,
            "a tall chef of indeterminate gender",
            "a picture of a tall cook with an androgynous look",
        ),
    ];
    rows.iter()
        .zip(CAPTIONS)
        .enumerate()
        .map(|(i, ((stratum, c1, c2), o))| {
            ParaphraseGroup::new(
                format!("p1-{:06}", i + 1),
                Strategy::P1,
                vec![
                    (VariantLabel::O, o.to_lowercase()),
                    (VariantLabel::C1, c1.to_string()),
                    (VariantLabel::C2, c2.to_string()),
                ],
                *stratum,
            )
            .expect("distinct rewrites")
        })
        .collect()
}

pub fn build(out: &Path) -> Result<PathBuf, Box<dyn std::error::Error>> {
    fs::create_dir_all(out)?;
    let lexicon = SynonymLexicon::new([
        ("young", "youthful"),
        ("female", "woman"),
        ("elderly", "older"),
        ("male", "man"),
    ])?;
    let p1 = p1_groups();
    let mut p2 = Vec::new();
    let mut p3 = Vec::new();
    for (i, caption) in CAPTIONS.iter().enumerate() {
        let cs = parse_caption(caption)?;
        p2.push(prefix_variants(&cs, format!("p2-{:06}", i + 1)));
        if i < 2 {
            p3.push(attribute_variants(
                &cs,
                &lexicon,
                format!("p3-{:06}", i + 1),
            )?);
        }
    }

    let mut source = NoiseSource::new(SEED, 1);
    let images: Vec<f32> = (0..N_IMAGES)
        .flat_map(|_| source.unit_vector(DIM))
        .collect();
    let image_ids = (0..N_IMAGES).map(|i| format!("img{i:03}")).collect();
    let images = EmbeddingBundle::new(image_ids, DIM, images, true, "toy fixture images")?;

    let bases: Vec<Vec<f32>> = CAPTIONS.iter().map(|_| source.unit_vector(DIM)).collect();
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for group in p1.iter().chain(&p2).chain(&p3) {
        let base: usize = group.group_id()[3..].parse::<usize>()? - 1;
        let sigma = match group.strategy() {
            Strategy::P2 => 0.15,
            _ => 0.5,
        };
        for (label, _) in group.members() {
            let key = group.query_key(*label);
            if key == MISSING {
                continue;
            }
            vectors.extend(perturb_query(
                &bases[base],
                sigma,
                variant_seed(SEED, base, *label),
            ));
            ids.push(key);
        }
    }
    let queries = EmbeddingBundle::new(ids, DIM, vectors, true, "toy fixture queries")?;

    write_bundle(&images, out.join("images.prsmemb"))?;
    write_bundle(&queries, out.join("queries.prsmemb"))?;
    write_manifest(&p1, out.join("groups_p1.jsonl"))?;
    write_manifest(&p2, out.join("groups_p2.jsonl"))?;
    write_manifest(&p3, out.join("groups_p3.jsonl"))?;
    fs::write(out.join("lexicon.json"), lexicon.to_json() + "\n")?;

    let config = RunConfig {
        images: "images.prsmemb".into(),
        queries: "queries.prsmemb".into(),
        groups: vec![
            "groups_p1.jsonl".into(),
            "groups_p2.jsonl".into(),
            "groups_p3.jsonl".into(),
        ],
        specs: SpecSelection::Builtin,
        k_values: vec![5, 10],
        output_dir: "out".into(),
        similarity: Similarity::Cosine,
        ranking_cache: None,
    };
    let config_text = serde_json::to_string_pretty(&config)? + "\n";
    fs::write(out.join("config.json"), &config_text)?;

    let config = RunConfig::from_json(&config_text)?;
    let (report, _) = build_report(&config, out, 1)?;
    let golden = out.join("expected_report.json");
    fs::write(&golden, report.render_json())?;
    Ok(golden)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("toy_fixture"));
    let golden = build(&out)?;
    println!("wrote {}", golden.display());
    Ok(())
}
