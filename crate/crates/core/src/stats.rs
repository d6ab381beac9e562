//! Special functions and the small amount of inferential statistics the
//! experiment needs: normal and Student-t distribution functions, Welch's
//! unequal-variance t-test and sample summaries.
//!
//! `erf`, `erfc` and `ln_gamma` come from the pure-Rust `libm` port, which
//! gives the same bits on every platform.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use thiserror::Error;

/// Smallest p-value shown in human-readable reports. Stored values are exact.
pub const P_VALUE_DISPLAY_FLOOR: f64 = 2.2e-16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("both samples have zero variance but different means ({mean_a} vs {mean_b})")]
    DegenerateSample { mean_a: f64, mean_b: f64 },
}

/// The error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// The complementary error function, accurate in relative terms for large
/// positive arguments.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal cumulative distribution function Φ(x).
pub fn normal_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * erfc(x * FRAC_1_SQRT_2)
    }
}

/// Standard normal survival function 1 - Φ(x), without cancellation for
/// large `x`.
pub fn normal_sf(x: f64) -> f64 {
    normal_cdf(-x)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`normal_cdf`]. Acklam's rational approximation followed by
/// one Halley correction step.
pub fn normal_quantile(p: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(StatsError::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if p == 1.0 {
        return Ok(f64::INFINITY);
    }

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley step; the residual is taken on the smaller tail to keep precision.
    let e = if x < 0.0 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_sf(x)
    };
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

// ---------------------------------------------------------------------------
// Gamma / beta family
// ---------------------------------------------------------------------------

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..100_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64, StatsError> {
    if !(a > 0.0 && b > 0.0) {
        return Err(StatsError::InvalidArgument(format!(
            "incomplete beta shape parameters must be positive (a={a}, b={b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(StatsError::InvalidArgument(format!(
            "incomplete beta argument {x} outside [0, 1]"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_continued_fraction(a, b, x) / a)
    } else {
        Ok(1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b)
    }
}

/// Upper tail P(T > |t|) of Student's t with `dof` degrees of freedom.
fn student_t_upper_tail(t: f64, dof: f64) -> Result<f64, StatsError> {
    if t == 0.0 {
        return Ok(0.5);
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let x = dof / (dof + t * t);
    Ok(0.5 * regularized_incomplete_beta(x, 0.5 * dof, 0.5)?)
}

/// Cumulative distribution function of Student's t.
pub fn student_t_cdf(x: f64, dof: f64) -> Result<f64, StatsError> {
    if !(dof > 0.0) || dof.is_nan() {
        return Err(StatsError::InvalidArgument(format!(
            "degrees of freedom must be positive, got {dof}"
        )));
    }
    if x.is_nan() {
        return Err(StatsError::InvalidArgument("t statistic is NaN".into()));
    }
    let tail = student_t_upper_tail(x, dof)?;
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

// ---------------------------------------------------------------------------
// Sample statistics and tests
// ---------------------------------------------------------------------------

/// Mean, sample standard deviation (n - 1 denominator) and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

fn sample_variance(sample: &[f64], mean: f64) -> f64 {
    let ss: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum();
    ss / (sample.len() - 1) as f64
}

pub fn summarize(sample: &[f64]) -> Result<SampleSummary, StatsError> {
    if sample.len() < 2 {
        return Err(StatsError::InsufficientData {
            needed: 2,
            got: sample.len(),
        });
    }
    let n = sample.len();
    let m = mean(sample);
    let sd = sample_variance(sample, m).sqrt();
    Ok(SampleSummary {
        n,
        mean: m,
        sd,
        se: sd / (n as f64).sqrt(),
    })
}

/// Outcome of a two-sided Welch test of equal means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t_stat: f64,
    /// Welch–Satterthwaite degrees of freedom (not rounded).
    pub dof: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

impl WelchResult {
    /// The p-value as it should be shown to a reader.
    pub fn p_value_display(&self) -> f64 {
        self.p_value.max(P_VALUE_DISPLAY_FLOOR)
    }
}

/// Welch's unequal-variance t-test of H0: mean(a) = mean(b) against the
/// two-sided alternative.
///
/// When both samples have zero variance the test is degenerate: equal means
/// give `t = 0, p = 1` by convention, different means are an error.
pub fn welch_test(a: &[f64], b: &[f64]) -> Result<WelchResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::InsufficientData {
                needed: 2,
                got: s.len(),
            });
        }
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mean_a, mean_b) = (mean(a), mean(b));
    let wa = sample_variance(a, mean_a) / na;
    let wb = sample_variance(b, mean_b) / nb;
    let se2 = wa + wb;

    if se2 == 0.0 {
        if mean_a == mean_b {
            return Ok(WelchResult {
                t_stat: 0.0,
                dof: na + nb - 2.0,
                p_value: 1.0,
            });
        }
        return Err(StatsError::DegenerateSample { mean_a, mean_b });
    }

    let t_stat = (mean_a - mean_b) / se2.sqrt();
    let dof = se2 * se2 / (wa * wa / (na - 1.0) + wb * wb / (nb - 1.0));
    let p_value = (2.0 * student_t_upper_tail(t_stat, dof)?).min(1.0);
    Ok(WelchResult { t_stat, dof, p_value })
}
