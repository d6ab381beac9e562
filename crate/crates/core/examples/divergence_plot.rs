//! Render divergence-versus-leverage curves to an SVG file.
//!
//! ```text
//! cargo run --release --example divergence_plot -- curves.svg
//! ```

use credit_divergence::cli::plot::{read_curves, render_svg};
use credit_divergence::harness::{run_grid, write_figure1, ExperimentConfig};

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| "curves.svg".into());
    let cfg = ExperimentConfig {
        reps: 50,
        ..ExperimentConfig::desk()
    };
    let grid = run_grid(&cfg).expect("grid");
    let mut csv = Vec::new();
    write_figure1(&grid, &mut csv).expect("csv");
    let curves = read_curves(csv.as_slice()).expect("curves");
    std::fs::write(&path, render_svg(&curves)).expect("write svg");
    println!("wrote {} curves to {path}", curves.len());
}
