//! Per-replication random streams give the same numbers on any thread count.
//!
//! ```text
//! cargo run --example reproducible_streams
//! ```

use credit_divergence::rng::substream;
use rand::Rng;
use rayon::prelude::*;

fn draws(threads: usize) -> Vec<f64> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        (0..8u64)
            .into_par_iter()
            .map(|rep| substream(2024, &[10, 0, rep]).random::<f64>())
            .collect()
    })
}

fn main() {
    let one = draws(1);
    let many = draws(4);
    println!("1 thread : {one:.6?}");
    println!("4 threads: {many:.6?}");
    assert_eq!(one, many);
}
