//! Builds prefix (P2) and attribute (P3) paraphrase groups from a caption and
//! writes them as a JSONL manifest.
//!
//! ```text
//! cargo run --example paraphrase_groups -- "An image of an elderly male nurse"
//! ```

use prsm::paraphrase::{
    attribute_variants, manifest_line, parse_caption, prefix_variants, SynonymLexicon,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let caption = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "A photo of a young female academic".into());
    let cs = parse_caption(&caption)?;
    println!(
        "prefix {:?} | article {:?} | attributes {:?} {:?} | head {:?} | stratum {}",
        cs.prefix.as_str(),
        cs.article,
        cs.attribute1,
        cs.attribute2,
        cs.head,
        cs.stratum()
    );

    let p2 = prefix_variants(&cs, "example-p2");
    for (label, text) in p2.members() {
        println!("  {:>3}: {text}", label.as_str());
    }

    let lexicon = SynonymLexicon::new([
        ("young", "youthful"),
        ("elderly", "older"),
        ("female", "woman"),
        ("male", "man"),
    ])?;
    match attribute_variants(&cs, &lexicon, "example-p3") {
        Ok(p3) => {
            for (label, text) in p3.members() {
                println!("  {:>3}: {text}", label.as_str());
            }
            println!("{}", manifest_line(&p3));
        }
        Err(e) => println!("no attribute variants: {e}"),
    }
    println!("{}", manifest_line(&p2));
    Ok(())
}
