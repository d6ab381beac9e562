//! Single- versus multi-factor default probabilities for one market, checked
//! against a Monte Carlo default frequency.
//!
//! ```text
//! cargo run --release --example default_probabilities
//! ```

use std::sync::Arc;

use credit_divergence::corrmat::{generate, GeneratorSettings, Regime};
use credit_divergence::dynamics::{
    build_loadings, default_prob_pair, mc_default_probability, FirmParams, Leverage, LoadingMode,
};
use credit_divergence::rng::substream;

fn main() {
    let n = 5;
    let s = generate(
        n,
        &Regime::Low.default_band(),
        &GeneratorSettings::default(),
        &mut substream(3, &[]),
    )
    .expect("generation");
    let s = Arc::new(s);
    let firm = FirmParams::with_leverage(0.05, 0.25, 1.0, Leverage::new(0.1).unwrap()).unwrap();
    let firms = vec![firm; n];

    for mode in [LoadingMode::Direct, LoadingMode::Cholesky] {
        let loadings = build_loadings(Arc::clone(&s), firm.sigma_base, mode).expect("loadings");
        let mc = mc_default_probability(&firms, &loadings, &vec![firm.debt; n], 200_000, &mut substream(4, &[]))
            .expect("simulation");
        println!("{mode} loadings");
        for (i, est) in mc.iter().enumerate() {
            let pair = default_prob_pair(&firm, &loadings, i).unwrap();
            println!(
                "  firm {i}: single {:.5}  multi {:.5}  simulated {:.5} ± {:.5}",
                pair.p_single, pair.p_multi, est.estimate, est.std_error
            );
        }
    }
}
