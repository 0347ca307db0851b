// Feature table for a small three-timbre corpus, then a t-SNE grid search.

use std::error::Error;

use soundscape::audio;
use soundscape::embedding::{self, TsneParams};
use soundscape::features::{self, MfccConfig};
use soundscape::synth;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let sr = 8_000;
    let (pcm, _) = synth::timbre_corpus(2, 8, 0.5, sr)?;
    let set = audio::segment(&pcm, 0.5, "demo")?;
    let table = features::build_table(&set, &MfccConfig::for_sample_rate(sr))?;
    println!("table {} x {}", table.len(), table.width());

    let grid: Vec<TsneParams> = [3.0, 6.0]
        .iter()
        .map(|&perplexity| TsneParams {
            perplexity,
            n_iter: 400,
            seed: 7,
            ..TsneParams::default()
        })
        .collect();
    let search = embedding::grid_search(&table, &grid, 2)?;
    for run in &search.runs {
        println!(
            "  perplexity {:>4} seed {:>2}  KL {:.4}",
            run.perplexity, run.seed, run.final_kl
        );
    }
    println!(
        "best: cell {} run {} KL {:.4} ({:?})",
        search.best_cell, search.best_run, search.best.final_kl, search.best.converged_gate
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
