//! Correlated geometric Brownian motion market and structural default
//! probabilities.
//!
//! Firm `i` follows `dV_i = μ_i V_i dt + V_i Σ_j σ_ij dW_j` with independent
//! Brownian motions `W_j`. The terminal value is log-normal:
//!
//! ```text
//! ln V_i(T) ~ N( ln v0 + (μ - r_i / 2) T,  r_i T ),   r_i = Σ_j σ_ij²
//! ```
//!
//! and default means `V_i(T) <= D_i`. The single-factor model replaces `r_i`
//! with the stand-alone variance `σ_base²`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::corrmat::{cholesky_factor, CorrMatError, CorrelationMatrix};
use crate::stats::normal_cdf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate distribution: variance rate {rate} must be positive")]
    DegenerateDistribution { rate: f64 },
    #[error("firm index {index} out of range for {len} firms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    CorrMat(#[from] CorrMatError),
}

/// Stand-alone description of one firm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirmParams {
    pub mu: f64,
    pub sigma_base: f64,
    pub v0: f64,
    pub debt: f64,
    pub horizon: f64,
}

impl FirmParams {
    pub fn new(mu: f64, sigma_base: f64, v0: f64, debt: f64, horizon: f64) -> Result<Self, DynamicsError> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(DynamicsError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {x}"
                )))
            }
        };
        if !mu.is_finite() {
            return Err(DynamicsError::InvalidParameter(format!("mu must be finite, got {mu}")));
        }
        positive("sigma_base", sigma_base)?;
        positive("v0", v0)?;
        positive("debt", debt)?;
        positive("horizon", horizon)?;
        Ok(Self {
            mu,
            sigma_base,
            v0,
            debt,
            horizon,
        })
    }

    /// Unit initial value and `debt = e^leverage`.
    pub fn with_leverage(mu: f64, sigma_base: f64, horizon: f64, leverage: Leverage) -> Result<Self, DynamicsError> {
        Self::new(mu, sigma_base, 1.0, leverage.log_leverage().exp(), horizon)
    }

    /// `ln(debt / v0)`; returned exactly when `v0 == 1`.
    pub fn log_leverage(&self) -> f64 {
        if self.v0 == 1.0 {
            self.debt.ln()
        } else {
            (self.debt / self.v0).ln()
        }
    }
}

/// Log debt-to-value ratio `ln(D / v0)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Leverage(f64);

impl Leverage {
    pub fn new(log_leverage: f64) -> Result<Self, DynamicsError> {
        if log_leverage.is_finite() {
            Ok(Self(log_leverage))
        } else {
            Err(DynamicsError::InvalidParameter(format!(
                "leverage must be finite, got {log_leverage}"
            )))
        }
    }

    pub fn log_leverage(self) -> f64 {
        self.0
    }

    /// 0.1, 0.2, ..., 2.0, each the nearest double to its decimal.
    pub fn default_grid() -> Vec<Leverage> {
        (1..=20).map(|k| Leverage(k as f64 / 10.0)).collect()
    }
}

/// How factor loadings are derived from a correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadingMode {
    /// `σ_ij = σ_base S_ij`.
    Direct,
    /// `σ = chol(σ_base² S)`; reproduces the stand-alone variance exactly.
    Cholesky,
}

impl LoadingMode {
    pub fn label(self) -> &'static str {
        match self {
            LoadingMode::Direct => "direct",
            LoadingMode::Cholesky => "cholesky",
        }
    }
}

impl fmt::Display for LoadingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LoadingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(LoadingMode::Direct),
            "cholesky" => Ok(LoadingMode::Cholesky),
            other => Err(format!("unknown loading mode '{other}' (expected direct or cholesky)")),
        }
    }
}

/// Firm-by-factor volatility loadings.
#[derive(Debug, Clone)]
pub struct LoadingMatrix {
    loadings: DMatrix<f64>,
    mode: LoadingMode,
    sigma_base: f64,
    source: Arc<CorrelationMatrix>,
    row_ss: Vec<f64>,
}

impl LoadingMatrix {
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn mode(&self) -> LoadingMode {
        self.mode
    }

    pub fn sigma_base(&self) -> f64 {
        self.sigma_base
    }

    pub fn source(&self) -> &CorrelationMatrix {
        &self.source
    }

    pub fn firms(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn factors(&self) -> usize {
        self.loadings.ncols()
    }

    /// `Σ_j σ_ij²`, accumulated in column order.
    pub fn row_sum_of_squares(&self, i: usize) -> f64 {
        self.row_ss[i]
    }
}

pub fn build_loadings(
    s: Arc<CorrelationMatrix>,
    sigma_base: f64,
    mode: LoadingMode,
) -> Result<LoadingMatrix, DynamicsError> {
    if !(sigma_base > 0.0 && sigma_base.is_finite()) {
        return Err(DynamicsError::InvalidParameter(format!(
            "sigma_base must be positive and finite, got {sigma_base}"
        )));
    }
    let loadings = match mode {
        LoadingMode::Direct => s.entries() * sigma_base,
        LoadingMode::Cholesky => {
            let scaled = s.entries() * (sigma_base * sigma_base);
            cholesky_factor(&scaled)?
        }
    };
    // Column-major storage: one contiguous pass instead of n strided rows.
    let mut row_ss = vec![0.0; loadings.nrows()];
    for col in loadings.column_iter() {
        for (acc, x) in row_ss.iter_mut().zip(col.iter()) {
            *acc += x * x;
        }
    }
    Ok(LoadingMatrix {
        loadings,
        mode,
        sigma_base,
        source: s,
        row_ss,
    })
}

/// Instantaneous log-variance rate `r_i = Σ_j σ_ij²` of firm `i`.
///
/// In Cholesky mode the factorization reproduces `σ_base² S_ii` by
/// construction, and that target is returned instead of the rounded row sum.
pub fn effective_variance(loadings: &LoadingMatrix, firm_index: usize) -> Result<f64, DynamicsError> {
    let n = loadings.firms();
    if firm_index >= n {
        return Err(DynamicsError::IndexOutOfRange {
            index: firm_index,
            len: n,
        });
    }
    Ok(match loadings.mode {
        LoadingMode::Direct => loadings.row_sum_of_squares(firm_index),
        LoadingMode::Cholesky => {
            loadings.sigma_base * loadings.sigma_base * loadings.source.get(firm_index, firm_index)
        }
    })
}

/// Mean and variance of `V_T` and of `ln V_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalMoments {
    pub mean: f64,
    pub variance: f64,
    pub log_mean: f64,
    pub log_variance: f64,
}

pub fn terminal_moments(firm: &FirmParams, log_variance_rate: f64) -> Result<TerminalMoments, DynamicsError> {
    if !(log_variance_rate >= 0.0 && log_variance_rate.is_finite()) {
        return Err(DynamicsError::InvalidParameter(format!(
            "log-variance rate must be finite and non-negative, got {log_variance_rate}"
        )));
    }
    let t = firm.horizon;
    let growth = (firm.mu * t).exp();
    let log_variance = log_variance_rate * t;
    Ok(TerminalMoments {
        mean: firm.v0 * growth,
        variance: firm.v0 * firm.v0 * growth * growth * log_variance.exp_m1(),
        log_mean: firm.v0.ln() + (firm.mu - 0.5 * log_variance_rate) * t,
        log_variance,
    })
}

/// Standardized default threshold `z` with `P(default) = Φ(z)`.
pub fn default_threshold(firm: &FirmParams, rate: f64) -> Result<f64, DynamicsError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(DynamicsError::DegenerateDistribution { rate });
    }
    let t = firm.horizon;
    Ok((firm.log_leverage() - (firm.mu - 0.5 * rate) * t) / (rate * t).sqrt())
}

/// `P(V_T <= D) = Φ((ln(D/v0) - (μ - rate/2) T) / √(rate T))`.
pub fn default_probability(firm: &FirmParams, rate: f64) -> Result<f64, DynamicsError> {
    Ok(normal_cdf(default_threshold(firm, rate)?))
}

/// Default and survival probabilities, each computed without cancellation.
pub fn default_and_survival(firm: &FirmParams, rate: f64) -> Result<(f64, f64), DynamicsError> {
    let z = default_threshold(firm, rate)?;
    Ok((normal_cdf(z), normal_cdf(-z)))
}

/// Single- and multi-factor default probabilities of one firm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultProbPair {
    pub p_single: f64,
    pub p_multi: f64,
    /// `1 - p_single`, evaluated directly.
    pub survival_single: f64,
    /// `1 - p_multi`, evaluated directly.
    pub survival_multi: f64,
}

pub fn default_prob_pair(
    firm: &FirmParams,
    loadings: &LoadingMatrix,
    firm_index: usize,
) -> Result<DefaultProbPair, DynamicsError> {
    let (p_single, survival_single) = default_and_survival(firm, firm.sigma_base * firm.sigma_base)?;
    let (p_multi, survival_multi) = default_and_survival(firm, effective_variance(loadings, firm_index)?)?;
    Ok(DefaultProbPair {
        p_single,
        p_multi,
        survival_single,
        survival_multi,
    })
}

/// Independent Brownian increments over a horizon: `√t Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianIncrements {
    increments: DVector<f64>,
}

impl BrownianIncrements {
    pub fn draw<R: Rng + ?Sized>(factors: usize, t: f64, rng: &mut R) -> Self {
        let scale = t.sqrt();
        Self {
            increments: DVector::from_fn(factors, |_, _| scale * rng.sample::<f64, _>(StandardNormal)),
        }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.increments
    }
}

fn check_market(firms: &[FirmParams], loadings: &LoadingMatrix) -> Result<(), DynamicsError> {
    if firms.len() != loadings.firms() {
        return Err(DynamicsError::InvalidArgument(format!(
            "{} firms but loadings have {} rows",
            firms.len(),
            loadings.firms()
        )));
    }
    Ok(())
}

/// Drives `visit(firm, V_T)` for every draw; factor shocks are shared across
/// firms within a draw.
fn for_each_draw<R, F>(
    firms: &[FirmParams],
    loadings: &LoadingMatrix,
    reps: usize,
    rng: &mut R,
    mut visit: F,
) -> Result<(), DynamicsError>
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize, f64),
{
    check_market(firms, loadings)?;
    let n = firms.len();
    let mut drift = Vec::with_capacity(n);
    let mut root_t = Vec::with_capacity(n);
    for (i, f) in firms.iter().enumerate() {
        let r = effective_variance(loadings, i)?;
        drift.push((f.mu - 0.5 * r) * f.horizon);
        root_t.push(f.horizon.sqrt());
    }
    let m = loadings.factors();
    let sigma = loadings.loadings();
    let mut z = DVector::zeros(m);
    let mut shock = DVector::zeros(n);
    for rep in 0..reps {
        // Unit-time increments; each firm rescales by its own √T.
        let w = BrownianIncrements::draw(m, 1.0, rng);
        z.copy_from(w.as_vector());
        shock.gemv(1.0, sigma, &z, 0.0);
        for (i, f) in firms.iter().enumerate() {
            visit(rep, i, f.v0 * (drift[i] + root_t[i] * shock[i]).exp());
        }
    }
    Ok(())
}

/// Exact one-shot draws of `V_T` for every firm, returned as `reps × N`.
pub fn simulate_terminal_values<R: Rng + ?Sized>(
    firms: &[FirmParams],
    loadings: &LoadingMatrix,
    reps: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, DynamicsError> {
    if reps == 0 {
        return Err(DynamicsError::InvalidArgument("reps must be positive".into()));
    }
    let mut out = DMatrix::zeros(reps, firms.len());
    for_each_draw(firms, loadings, reps, rng, |rep, i, v| out[(rep, i)] = v)?;
    Ok(out)
}

/// Monte Carlo default frequency and its binomial standard error per firm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

pub fn mc_default_probability<R: Rng + ?Sized>(
    firms: &[FirmParams],
    loadings: &LoadingMatrix,
    debts: &[f64],
    reps: usize,
    rng: &mut R,
) -> Result<Vec<McEstimate>, DynamicsError> {
    if reps < 100 {
        return Err(DynamicsError::InvalidArgument(format!(
            "need at least 100 replications, got {reps}"
        )));
    }
    if debts.len() != firms.len() {
        return Err(DynamicsError::InvalidArgument(format!(
            "{} debts for {} firms",
            debts.len(),
            firms.len()
        )));
    }
    let mut hits = vec![0u64; firms.len()];
    for_each_draw(firms, loadings, reps, rng, |_, i, v| {
        if v <= debts[i] {
            hits[i] += 1;
        }
    })?;
    Ok(hits
        .into_iter()
        .map(|h| {
            let p = h as f64 / reps as f64;
            McEstimate {
                estimate: p,
                std_error: (p * (1.0 - p) / reps as f64).sqrt(),
            }
        })
        .collect())
}
