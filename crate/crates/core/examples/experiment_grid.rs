//! Run a small experiment grid and print the regime comparison.
//!
//! ```text
//! cargo run --release --example experiment_grid
//! ```

use credit_divergence::corrmat::Regime;
use credit_divergence::harness::{run_grid, write_table1, ExperimentConfig};

fn main() {
    let cfg = ExperimentConfig {
        market_sizes: vec![10, 50],
        leverages: vec![0.1, 1.0, 2.0],
        reps: 100,
        ..ExperimentConfig::desk()
    };
    let grid = run_grid(&cfg).expect("grid");
    for c in &grid.comparisons {
        let mean = |r| grid.cell(c.n, c.leverage, r).unwrap().summary.mean;
        println!(
            "N={:<3} leverage {:<4} high {:.4}  low {:.4}  Welch t {:.2}",
            c.n,
            c.leverage,
            mean(Regime::High),
            mean(Regime::Low),
            c.welch.t_stat
        );
    }
    println!("clamped masses: {}", grid.clamp_events());
    write_table1(&grid, std::io::stdout().lock()).expect("stdout");
}
