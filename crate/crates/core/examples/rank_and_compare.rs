//! Ranks a small corpus for two paraphrases of one query and compares the
//! rankings globally (Spearman) and locally (top-k overlap).
//!
//! ```text
//! cargo run --example rank_and_compare
//! ```

use prsm::bundle::EmbeddingBundle;
use prsm::paraphrase::VariantLabel;
use prsm::ranking::{rank_query, score_query};
use prsm::stats::{group_stability, spearman_rho, topk_overlap};
use prsm::synthetic::{perturb_query, NoiseSource};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (dim, n) = (16, 40);
    let mut source = NoiseSource::new(42, 0);
    let vectors: Vec<f32> = (0..n).flat_map(|_| source.unit_vector(dim)).collect();
    let ids = (0..n).map(|i| format!("img{i:02}")).collect();
    let images = EmbeddingBundle::new(ids, dim, vectors, true, "example")?;

    let original = source.unit_vector(dim);
    let paraphrase = perturb_query(&original, 0.4, 7);
    let r_o = rank_query("q/o", &original, &images)?;
    let r_c = rank_query("q/c1", &paraphrase, &images)?;

    let scores = score_query(&original, &images)?;
    println!("top 5 for o:");
    for &img in &r_o.order()[..5] {
        println!(
            "  {} {:.4}",
            images.ids()[img as usize],
            scores[img as usize]
        );
    }
    println!("spearman rho      {:.4}", spearman_rho(&r_o, &r_c)?);
    for k in [5, 10, 20] {
        println!(
            "top-{k:<2} overlap    {:.4}",
            topk_overlap(&r_o.top_k(k)?, &r_c.top_k(k)?)?
        );
    }

    let third = rank_query("q/c2", &perturb_query(&original, 0.4, 8), &images)?;
    let members = [
        (VariantLabel::O, &r_o),
        (VariantLabel::C1, &r_c),
        (VariantLabel::C2, &third),
    ];
    let group = group_stability("q", &members, &[5, 10])?;
    println!(
        "group of {}: global {:.4}, local {:?}",
        group.m, group.prsm_global, group.prsm_local
    );
    Ok(())
}
