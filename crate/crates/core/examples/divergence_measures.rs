//! Jeffreys divergence at the default-event and terminal-density levels,
//! closed form against quadrature.
//!
//! ```text
//! cargo run --example divergence_measures
//! ```

use credit_divergence::divergence::{
    jeffreys_bernoulli, jeffreys_lognormal, jeffreys_lognormal_quadrature, jeffreys_quadrature, LogNormal,
};

fn main() {
    for (p, q) in [(0.3, 0.3), (0.5, 0.25), (0.01, 0.2)] {
        let v = jeffreys_bernoulli(p, q).unwrap();
        println!(
            "Bernoulli({p}) vs Bernoulli({q}): J = {:.6} (KL {:.6} + {:.6})",
            v.j, v.kl_forward, v.kl_backward
        );
    }

    // Terminal values under the two models share the log-mean drift but not the variance.
    let a = LogNormal::new(-0.02, 0.04).unwrap();
    let b = LogNormal::new(-0.12, 0.24).unwrap();
    let closed = jeffreys_lognormal(&a, &b).unwrap().j;
    let quad = jeffreys_lognormal_quadrature(&a, &b).unwrap();
    println!("log-normal: closed form {closed:.10}, quadrature {quad:.10}");

    // Any pair of densities on (0, ∞) given by their logarithms.
    let exp1 = |x: f64| -x;
    let exp2 = |x: f64| 2f64.ln() - 2.0 * x;
    let j = jeffreys_quadrature(exp1, exp2, &[0.5, 1.0]).unwrap();
    println!("Exp(1) vs Exp(2): quadrature {j:.10}, exact {:.10}", 0.5);
}
