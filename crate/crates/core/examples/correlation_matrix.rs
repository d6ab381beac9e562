//! Generate high- and low-regime correlation matrices and inspect them.
//!
//! ```text
//! cargo run --example correlation_matrix
//! ```

use credit_divergence::corrmat::{generate, GeneratorSettings, NoiseBand, Regime};
use credit_divergence::rng::substream;

fn main() {
    for regime in Regime::ALL {
        let band = regime.default_band();
        let mut rng = substream(7, &[regime.index()]);
        let m = generate(6, &band, &GeneratorSettings::default(), &mut rng).expect("generation");
        let (lo, hi) = m
            .off_diagonal()
            .map(f64::abs)
            .fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
        println!(
            "{regime}: band [{}, {}], |off-diagonal| in [{lo:.4}, {hi:.4}], min eigenvalue {:.4}",
            band.rho_min(),
            band.rho_max(),
            m.min_eigenvalue()
        );
        m.write_csv(std::io::stdout().lock()).expect("stdout");
    }

    // Same-sign matrices and a custom band.
    let band = NoiseBand::new(0.3, 0.35, Regime::Low).expect("band");
    let settings = GeneratorSettings {
        random_signs: false,
        ..Default::default()
    };
    let m = generate(4, &band, &settings, &mut substream(1, &[])).expect("generation");
    println!("custom band, all positive: {:?}", m.off_diagonal().collect::<Vec<_>>());
}
