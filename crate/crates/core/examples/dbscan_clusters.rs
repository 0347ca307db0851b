// DBSCAN eps sweep on three 2-D blobs plus a stray point, then
// nearest-core reassignment of the noise.

use std::error::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use soundscape::clustering;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let jitter = Normal::new(0.0, 0.4)?;
    let mut coords = Vec::new();
    for centre in [[0.0, 0.0], [8.0, 1.0], [3.0, 9.0]] {
        for _ in 0..20 {
            coords.push([centre[0] + jitter.sample(&mut rng), centre[1] + jitter.sample(&mut rng)]);
        }
    }
    coords.push([4.0, 4.0]);

    let eps = clustering::default_eps_values(&coords, 20)?;
    let sweep = clustering::eps_sweep(&coords, &eps, clustering::DEFAULT_MIN_SAMPLES)?;
    println!(
        "chose eps {:.3}: {} clusters, {} noise",
        sweep.chosen.eps,
        sweep.chosen.n_clusters,
        sweep.chosen.noise_count()
    );
    let assignment = clustering::assign_noise(&sweep.chosen, &coords)?;
    println!("reassigned {:?}", assignment.reassigned);
    println!("stray point is now in cluster {}", assignment.labels[60]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
