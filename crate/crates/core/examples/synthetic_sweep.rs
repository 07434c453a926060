//! Sweeps the perturbation scale on a seeded synthetic corpus and prints how
//! both stability components fall as the noise grows.
//!
//! ```text
//! cargo run --release --example synthetic_sweep
//! ```

use prsm::evaluation::{evaluate_run, AggregateStratum, ComparisonSpec, EvalOptions};
use prsm::synthetic::{synthesize, PerturbationModel, StrategySigmas};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let specs = vec![ComparisonSpec::from_name("o-c1-c2", vec![10, 100])?];
    println!(
        "{:>6}  {:>8}  {:>8}  {:>8}",
        "sigma", "global", "top-10", "top-100"
    );
    for sigma in [0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0] {
        let model = PerturbationModel {
            seed: 1,
            sigma,
            n_images: 1000,
            n_queries: 100,
            dim: 64,
        };
        let data = synthesize(&model, StrategySigmas::uniform(sigma));
        let run = evaluate_run(
            &data.groups,
            &specs,
            &data.queries,
            &data.images,
            EvalOptions::default(),
        )?;
        let overall = run.specs[0].aggregate(AggregateStratum::Overall).unwrap();
        println!(
            "{sigma:>6}  {:>8.4}  {:>8.4}  {:>8.4}",
            overall.mean_prsm_global, overall.mean_prsm_local[&10], overall.mean_prsm_local[&100]
        );
    }
    Ok(())
}
