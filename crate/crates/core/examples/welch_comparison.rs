//! Welch's unequal-variance t-test on two samples.
//!
//! ```text
//! cargo run --example welch_comparison
//! ```

use credit_divergence::stats::{summarize, welch_test};

fn main() {
    let low = [0.31, 0.29, 0.35, 0.33, 0.30, 0.28, 0.36];
    let high = [0.52, 0.61, 0.47, 0.58, 0.66, 0.49];
    for (name, s) in [("low", &low[..]), ("high", &high[..])] {
        let sum = summarize(s).unwrap();
        println!(
            "{name}: n {} mean {:.4} sd {:.4} se {:.4}",
            sum.n, sum.mean, sum.sd, sum.se
        );
    }
    let r = welch_test(&low, &high).unwrap();
    println!("t {:.4}, dof {:.2}, p {:.3e}", r.t_stat, r.dof, r.p_value_display());
}
