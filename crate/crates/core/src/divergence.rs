//! Kullback–Leibler and Jeffreys divergences between the default models.
//!
//! Two levels are covered: the two-point default/no-default distributions and
//! the log-normal terminal-value densities. The density level has a closed
//! form and an adaptive quadrature that serves as its independent check.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::quad::{integrate_panels, QuadError, QuadOptions};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-15;

/// Quadrature estimates above this are reported as divergent.
pub const OVERFLOW_GUARD: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("probabilities must lie in (0, 1) unless equal: p = {p}, q = {q}")]
    Boundary { p: f64, q: f64 },
    #[error("degenerate distribution: variances must be positive (got {var1}, {var2})")]
    DegenerateDistribution { var1: f64, var2: f64 },
    #[error("divergence integral did not converge: {0}")]
    NonConvergent(String),
}

impl From<QuadError> for DivergenceError {
    fn from(e: QuadError) -> Self {
        DivergenceError::NonConvergent(e.to_string())
    }
}

/// Symmetric divergence together with its two directed halves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceValue {
    pub j: f64,
    pub kl_forward: f64,
    pub kl_backward: f64,
}

impl DivergenceValue {
    fn from_halves(kl_forward: f64, kl_backward: f64) -> Self {
        Self {
            j: kl_forward + kl_backward,
            kl_forward,
            kl_backward,
        }
    }

    pub const ZERO: DivergenceValue = DivergenceValue {
        j: 0.0,
        kl_forward: 0.0,
        kl_backward: 0.0,
    };
}

/// Which pair of distributions the harness compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DivergenceLevel {
    /// Default / no-default events.
    Bernoulli,
    /// Log-normal terminal-value densities.
    Density,
}

impl DivergenceLevel {
    pub fn label(self) -> &'static str {
        match self {
            DivergenceLevel::Bernoulli => "bernoulli",
            DivergenceLevel::Density => "density",
        }
    }
}

impl fmt::Display for DivergenceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DivergenceLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(DivergenceLevel::Bernoulli),
            "density" => Ok(DivergenceLevel::Density),
            other => Err(format!(
                "unknown divergence level '{other}' (expected bernoulli or density)"
            )),
        }
    }
}

fn in_unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

// x ln(x / y) with 0 ln 0 = 0.
fn xlogratio(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// `p ln(p/q) + (1-p) ln((1-p)/(1-q))`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64, DivergenceError> {
    if !in_unit_interval(p) || !in_unit_interval(q) {
        return Err(DivergenceError::Boundary { p, q });
    }
    if p == q {
        return Ok(0.0);
    }
    if p == 0.0 || p == 1.0 || q == 0.0 || q == 1.0 {
        return Err(DivergenceError::Boundary { p, q });
    }
    Ok(xlogratio(p, q) + xlogratio(1.0 - p, 1.0 - q))
}

pub fn jeffreys_bernoulli(p: f64, q: f64) -> Result<DivergenceValue, DivergenceError> {
    Ok(DivergenceValue::from_halves(kl_bernoulli(p, q)?, kl_bernoulli(q, p)?))
}

/// A two-point distribution given by both masses, so that tiny survival
/// probabilities keep full relative precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPoint {
    pub p: f64,
    pub complement: f64,
}

impl TwoPoint {
    pub fn new(p: f64, complement: f64) -> Self {
        Self { p, complement }
    }

    pub fn from_p(p: f64) -> Self {
        Self { p, complement: 1.0 - p }
    }

    fn clamped(self, clamps: &mut u64) -> Self {
        let mut clamp = |x: f64| {
            let c = x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if c != x {
                *clamps += 1;
            }
            c
        };
        Self {
            p: clamp(self.p),
            complement: clamp(self.complement),
        }
    }
}

/// Jeffreys divergence between two two-point laws after clamping every mass
/// into `[PROB_FLOOR, 1 - PROB_FLOOR]`; `clamps` counts the masses moved.
pub fn jeffreys_two_point_clamped(a: TwoPoint, b: TwoPoint, clamps: &mut u64) -> DivergenceValue {
    if a == b {
        return DivergenceValue::ZERO;
    }
    let a = a.clamped(clamps);
    let b = b.clamped(clamps);
    let fwd = xlogratio(a.p, b.p) + xlogratio(a.complement, b.complement);
    let bwd = xlogratio(b.p, a.p) + xlogratio(b.complement, a.complement);
    DivergenceValue::from_halves(fwd, bwd)
}

fn check_variances(var1: f64, var2: f64) -> Result<(), DivergenceError> {
    if var1 > 0.0 && var2 > 0.0 && var1.is_finite() && var2.is_finite() {
        Ok(())
    } else {
        Err(DivergenceError::DegenerateDistribution { var1, var2 })
    }
}

/// Jeffreys divergence between `N(mu1, var1)` and `N(mu2, var2)`.
///
/// Divergences are invariant under the monotone map `x ↦ e^x`, so this is
/// also the divergence between the corresponding log-normal laws.
pub fn jeffreys_normal(mu1: f64, var1: f64, mu2: f64, var2: f64) -> Result<DivergenceValue, DivergenceError> {
    check_variances(var1, var2)?;
    let d2 = (mu1 - mu2) * (mu1 - mu2);
    let ln_ratio = (var2 / var1).ln();
    let fwd = 0.5 * (ln_ratio + (var1 + d2) / var2 - 1.0);
    let bwd = 0.5 * (-ln_ratio + (var2 + d2) / var1 - 1.0);
    Ok(DivergenceValue::from_halves(fwd, bwd))
}

/// Log-normal law of `X = e^Y`, `Y ~ N(mu, var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormal {
    pub mu: f64,
    pub var: f64,
}

impl LogNormal {
    pub fn new(mu: f64, var: f64) -> Result<Self, DivergenceError> {
        check_variances(var, var)?;
        if !mu.is_finite() {
            return Err(DivergenceError::DegenerateDistribution { var1: var, var2: var });
        }
        Ok(Self { mu, var })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        let y = x.ln();
        -y - 0.5 * (2.0 * std::f64::consts::PI * self.var).ln() - (y - self.mu) * (y - self.mu) / (2.0 * self.var)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Points `e^{mu + k sd}` around which the density varies fastest.
    pub fn landmarks(&self) -> Vec<f64> {
        let sd = self.var.sqrt();
        [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|k| (self.mu + k * sd).exp())
            .collect()
    }
}

/// Closed-form Jeffreys divergence between two log-normal laws.
pub fn jeffreys_lognormal(a: &LogNormal, b: &LogNormal) -> Result<DivergenceValue, DivergenceError> {
    jeffreys_normal(a.mu, a.var, b.mu, b.var)
}

// t ∈ (-1, 1) ↦ u = t / (1 - t²) ∈ ℝ and its inverse.
fn t_to_u(t: f64) -> f64 {
    t / (1.0 - t * t)
}

fn u_to_t(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        // Stable root of u t² + t - u = 0 in (-1, 1).
        2.0 * u / (1.0 + (1.0 + 4.0 * u * u).sqrt())
    }
}

const INITIAL_PANELS: usize = 64;

/// `∫_0^∞ (f1 - f2) ln(f1 / f2) dx` for densities given by their logarithms.
///
/// The integral is mapped to `(-1, 1)` through `x = e^u`, `u = t / (1 - t²)`
/// and evaluated by adaptive Gauss–Kronrod quadrature to absolute tolerance
/// 1e-8. `landmarks` are optional abscissae (in `x`) where panels should
/// break; supplying the modes of narrow densities lets the quadrature see them.
pub fn jeffreys_quadrature<F1, F2>(ln_f1: F1, ln_f2: F2, landmarks: &[f64]) -> Result<f64, DivergenceError>
where
    F1: Fn(f64) -> f64,
    F2: Fn(f64) -> f64,
{
    let mut breaks: Vec<f64> = (0..=INITIAL_PANELS)
        .map(|k| -1.0 + 2.0 * k as f64 / INITIAL_PANELS as f64)
        .collect();
    breaks.extend(
        landmarks
            .iter()
            .filter(|x| **x > 0.0 && x.is_finite())
            .map(|x| u_to_t(x.ln()))
            .filter(|t| t.abs() < 1.0),
    );
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let mut mismatch = None;
    let integrand = |t: f64| {
        let u = t_to_u(t);
        let x = u.exp();
        let (l1, l2) = (ln_f1(x), ln_f2(x));
        if l1 == f64::NEG_INFINITY && l2 == f64::NEG_INFINITY {
            return 0.0;
        }
        if !l1.is_finite() || !l2.is_finite() {
            if l1.is_nan() || l2.is_nan() || l1 == l2 {
                return f64::NAN;
            }
            // Only one density vanishes: the integrand is infinite here.
            mismatch.get_or_insert(x);
            return 0.0;
        }
        let jac = (1.0 + t * t) / ((1.0 - t * t) * (1.0 - t * t));
        ((l1 + u).exp() - (l2 + u).exp()) * (l1 - l2) * jac
    };
    let result = integrate_panels(integrand, &breaks, &QuadOptions::default());
    if let Some(x) = mismatch {
        return Err(DivergenceError::NonConvergent(format!(
            "one density vanishes at x = {x} while the other does not"
        )));
    }
    match result {
        Ok(r) if r.value > OVERFLOW_GUARD => Err(DivergenceError::NonConvergent(format!(
            "estimate {} exceeds the overflow guard {OVERFLOW_GUARD}",
            r.value
        ))),
        Ok(r) => Ok(r.value.max(0.0)),
        Err(QuadError::NotConverged { estimate, .. }) if estimate > OVERFLOW_GUARD => {
            Err(DivergenceError::NonConvergent(format!(
                "estimate {estimate} exceeds the overflow guard {OVERFLOW_GUARD}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

/// Quadrature divergence between two log-normal laws.
pub fn jeffreys_lognormal_quadrature(a: &LogNormal, b: &LogNormal) -> Result<f64, DivergenceError> {
    let mut marks = a.landmarks();
    marks.extend(b.landmarks());
    jeffreys_quadrature(|x| a.ln_pdf(x), |x| b.ln_pdf(x), &marks)
}
