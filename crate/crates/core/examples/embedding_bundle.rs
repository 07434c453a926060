//! Writes, reads and normalizes a `PRSMEMB1` embedding bundle.
//!
//! ```text
//! cargo run --example embedding_bundle
//! ```

use prsm::bundle::{parse_header, read_bundle, write_bundle, EmbeddingBundle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("prsm-example-bundle");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("images.prsmemb");

    let raw = EmbeddingBundle::new(
        vec!["cat".into(), "dog".into(), "car".into()],
        2,
        vec![3.0, 4.0, 1.0, 1.0, -2.0, 0.5],
        false,
        "hand-written example",
    )?;
    let unit = raw.l2_normalize()?;
    write_bundle(&unit, &path)?;

    let bytes = std::fs::read(&path)?;
    let (header, payload_offset) = parse_header(&bytes)?;
    println!("{} bytes, payload at {payload_offset}", bytes.len());
    println!("header: {}", serde_json::to_string(&header)?);

    let back = read_bundle(&path)?;
    for (id, row) in back.ids().iter().zip(back.rows()) {
        println!("{id:>4}: {row:?}");
    }

    // Truncated files are rejected with the offset of the problem.
    std::fs::write(dir.join("broken.prsmemb"), &bytes[..bytes.len() - 4])?;
    if let Err(e) = read_bundle(dir.join("broken.prsmemb")) {
        println!("broken copy: {e}");
    }
    Ok(())
}
