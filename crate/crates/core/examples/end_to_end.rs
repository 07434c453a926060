//! The whole file-based pipeline through the library: synthesize inputs,
//! evaluate the written configuration and print the report.
//!
//! ```text
//! cargo run --example end_to_end [OUT_DIR]
//! ```
//!
//! Equivalent to `prsm synth ... --out DIR` followed by
//! `prsm evaluate --config DIR/config.json`.

use std::path::PathBuf;

use prsm::cli::{cmd_evaluate, cmd_synth};
use prsm::synthetic::PerturbationModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("prsm-example-run"));
    let model = PerturbationModel {
        seed: 7,
        sigma: 0.3,
        n_images: 500,
        n_queries: 24,
        dim: 32,
    };
    cmd_synth(&model, &out)?;
    let report = cmd_evaluate(&out.join("config.json"), None, Some(vec![10, 100]), 0)?;
    println!("{}", report.render_markdown());
    println!("files written to {}", out.join("report").display());
    Ok(())
}
