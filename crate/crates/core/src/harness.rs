//! Monte Carlo experiment over market size, leverage and correlation regime.
//!
//! Each replication generates one random correlation matrix, derives factor
//! loadings, and measures how far the multi-factor default probabilities of
//! the market's firms sit from the single-factor one. Cells aggregate
//! replications; regimes are compared with Welch tests.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::corrmat::{generate, CorrMatError, CorrelationMatrix, GeneratorSettings, NoiseBand, Regime};
use crate::divergence::{jeffreys_normal, jeffreys_two_point_clamped, DivergenceError, DivergenceLevel, TwoPoint};
use crate::dynamics::{
    build_loadings, default_and_survival, effective_variance, terminal_moments, DynamicsError, FirmParams, Leverage,
    LoadingMode,
};
use crate::format::sig17;
use crate::rng::{substream, SimRng};
use crate::stats::{summarize, welch_test, SampleSummary, StatsError, WelchResult};

/// Matrix generation attempts per replication before giving up.
pub const MAX_GENERATION_ATTEMPTS: usize = 10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cell (n={n}, leverage={leverage}, regime={regime}) replication {rep}: {source}")]
    Replication {
        n: usize,
        leverage: f64,
        regime: Regime,
        rep: usize,
        source: Box<HarnessError>,
    },
    #[error("matrix generation failed after {attempts} attempts: {last}")]
    Generation { attempts: usize, last: CorrMatError },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error("statistics for n={n}, leverage={leverage}: {source}")]
    Stats {
        n: usize,
        leverage: f64,
        source: StatsError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HarnessError {
    /// Configuration problems as opposed to numerical failures.
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config(_))
    }
}

/// How per-firm divergences within one market are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirmAggregation {
    Mean,
    First,
}

impl FirmAggregation {
    pub fn label(self) -> &'static str {
        match self {
            FirmAggregation::Mean => "mean",
            FirmAggregation::First => "first",
        }
    }
}

impl fmt::Display for FirmAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FirmAggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(FirmAggregation::Mean),
            "first" => Ok(FirmAggregation::First),
            other => Err(format!("unknown firm aggregation '{other}' (expected mean or first)")),
        }
    }
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// reps = 200, N ∈ {10, 50, 100}; minutes on a laptop.
    Desk,
    /// reps = 2000, N ∈ {10, 50, 90, 100, 500, 1000}.
    Paper,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(format!("unknown profile '{other}' (expected desk or paper)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

/// Default drift per year.
pub const DEFAULT_MU: f64 = 0.05;
/// Default stand-alone volatility in the high-correlation regime.
pub const DEFAULT_SIGMA_HIGH: f64 = 0.54;
/// Default stand-alone volatility in the low-correlation regime.
pub const DEFAULT_SIGMA_LOW: f64 = 0.52;
/// Default horizon in years.
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub market_sizes: Vec<usize>,
    pub leverages: Vec<f64>,
    pub reps: usize,
    pub regimes: Vec<Regime>,
    pub loading_mode: LoadingMode,
    pub divergence_level: DivergenceLevel,
    pub mu: f64,
    pub sigma_base_high: f64,
    pub sigma_base_low: f64,
    pub horizon: f64,
    pub master_seed: u64,
    pub band_high: NoiseBand,
    pub band_low: NoiseBand,
    pub noise_fraction: f64,
    pub random_signs: bool,
    pub firm_aggregation: FirmAggregation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        Self {
            market_sizes: vec![10, 50, 100],
            leverages: Leverage::default_grid()
                .into_iter()
                .map(Leverage::log_leverage)
                .collect(),
            reps: 200,
            regimes: vec![Regime::High, Regime::Low],
            loading_mode: LoadingMode::Direct,
            divergence_level: DivergenceLevel::Bernoulli,
            mu: DEFAULT_MU,
            sigma_base_high: DEFAULT_SIGMA_HIGH,
            sigma_base_low: DEFAULT_SIGMA_LOW,
            horizon: DEFAULT_HORIZON,
            master_seed: 20_240_901,
            band_high: NoiseBand::high(),
            band_low: NoiseBand::low(),
            noise_fraction: GeneratorSettings::default().noise_fraction,
            random_signs: true,
            firm_aggregation: FirmAggregation::Mean,
        }
    }

    pub fn paper() -> Self {
        Self {
            market_sizes: vec![10, 50, 90, 100, 500, 1000],
            reps: 2000,
            ..Self::desk()
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.reps < 2 {
            return bad(format!("reps must be at least 2, got {}", self.reps));
        }
        if self.market_sizes.is_empty() || self.market_sizes.iter().any(|&n| n < 2) {
            return bad("market_sizes must be non-empty with every size at least 2".into());
        }
        if self.market_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return bad("market_sizes must be strictly increasing".into());
        }
        if self.leverages.is_empty() || self.leverages.iter().any(|x| !x.is_finite()) {
            return bad("leverages must be non-empty and finite".into());
        }
        if self.leverages.windows(2).any(|w| w[1] <= w[0]) {
            return bad("leverages must be strictly increasing".into());
        }
        if self.regimes.is_empty() {
            return bad("regimes must not be empty".into());
        }
        if self.regimes.len() == 2 && self.regimes[0] == self.regimes[1] || self.regimes.len() > 2 {
            return bad("regimes must not repeat".into());
        }
        if !self.mu.is_finite() {
            return bad(format!("mu must be finite, got {}", self.mu));
        }
        for (name, x) in [
            ("sigma_base_high", self.sigma_base_high),
            ("sigma_base_low", self.sigma_base_low),
            ("horizon", self.horizon),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {x}"));
            }
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return bad(format!(
                "noise_fraction must lie in [0, 1), got {}",
                self.noise_fraction
            ));
        }
        Ok(())
    }

    pub fn sigma_base(&self, regime: Regime) -> f64 {
        match regime {
            Regime::High => self.sigma_base_high,
            Regime::Low => self.sigma_base_low,
        }
    }

    pub fn band(&self, regime: Regime) -> NoiseBand {
        match regime {
            Regime::High => self.band_high,
            Regime::Low => self.band_low,
        }
    }

    pub fn generator_settings(&self) -> GeneratorSettings {
        GeneratorSettings {
            noise_fraction: self.noise_fraction,
            random_signs: self.random_signs,
        }
    }

    fn leverage_index(&self, leverage: f64) -> Result<usize, HarnessError> {
        self.leverages
            .iter()
            .position(|&x| x == leverage)
            .ok_or_else(|| HarnessError::Config(format!("leverage {leverage} is not on the configured grid")))
    }

    /// Total number of replications in the grid.
    pub fn total_replications(&self) -> usize {
        self.market_sizes.len() * self.leverages.len() * self.regimes.len() * self.reps
    }
}

/// Divergence of one simulated market plus the number of clamped masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketDivergence {
    pub j: f64,
    pub clamp_events: u64,
}

/// Divergence between the single- and multi-factor models in the market
/// described by `s`, with all firms sharing `regime`'s parameters.
pub fn market_divergence(
    s: Arc<CorrelationMatrix>,
    leverage: f64,
    regime: Regime,
    config: &ExperimentConfig,
) -> Result<MarketDivergence, HarnessError> {
    let sigma = config.sigma_base(regime);
    let firm = FirmParams::with_leverage(config.mu, sigma, config.horizon, Leverage::new(leverage)?)?;
    let loadings = build_loadings(s, sigma, config.loading_mode)?;
    let firms = match config.firm_aggregation {
        FirmAggregation::Mean => loadings.firms(),
        FirmAggregation::First => 1,
    };
    let single_rate = sigma * sigma;
    let mut clamp_events = 0;
    let mut total = 0.0;
    match config.divergence_level {
        DivergenceLevel::Bernoulli => {
            let (p, q) = default_and_survival(&firm, single_rate)?;
            let single = TwoPoint::new(p, q);
            for i in 0..firms {
                let (pm, qm) = default_and_survival(&firm, effective_variance(&loadings, i)?)?;
                total += jeffreys_two_point_clamped(single, TwoPoint::new(pm, qm), &mut clamp_events).j;
            }
        }
        DivergenceLevel::Density => {
            let single = terminal_moments(&firm, single_rate)?;
            for i in 0..firms {
                let multi = terminal_moments(&firm, effective_variance(&loadings, i)?)?;
                total += jeffreys_normal(single.log_mean, single.log_variance, multi.log_mean, multi.log_variance)?.j;
            }
        }
    }
    Ok(MarketDivergence {
        j: total / firms as f64,
        clamp_events,
    })
}

/// One market: generate a matrix from `rng`, then measure its divergence.
pub fn run_replication(
    n: usize,
    leverage: f64,
    regime: Regime,
    config: &ExperimentConfig,
    rng: &mut SimRng,
) -> Result<MarketDivergence, HarnessError> {
    let band = config.band(regime);
    let settings = config.generator_settings();
    let mut last = None;
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        match generate(n, &band, &settings, rng) {
            Ok(s) => return market_divergence(Arc::new(s), leverage, regime, config),
            Err(CorrMatError::InvalidDimension(d)) => {
                return Err(HarnessError::Config(format!("market size {d} is below 2")))
            }
            Err(e) => last = Some(e),
        }
    }
    Err(HarnessError::Generation {
        attempts: MAX_GENERATION_ATTEMPTS,
        last: last.expect("at least one attempt"),
    })
}

/// Aggregate of all replications in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceCell {
    pub n: usize,
    pub leverage: f64,
    pub regime: Regime,
    pub summary: SampleSummary,
    pub raw: Vec<f64>,
    pub clamp_events: u64,
}

/// Welch test of `low` against `high` for one (n, leverage).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeComparison {
    pub n: usize,
    pub leverage: f64,
    pub welch: WelchResult,
}

fn replication_stream(config: &ExperimentConfig, n: usize, lev_idx: usize, regime: Regime, rep: usize) -> SimRng {
    substream(
        config.master_seed,
        &[n as u64, lev_idx as u64, regime.index(), rep as u64],
    )
}

pub fn run_cell(
    n: usize,
    leverage: f64,
    regime: Regime,
    config: &ExperimentConfig,
) -> Result<DivergenceCell, HarnessError> {
    config.validate()?;
    let lev_idx = config.leverage_index(leverage)?;
    let outcomes = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_stream(config, n, lev_idx, regime, rep);
            run_replication(n, leverage, regime, config, &mut rng).map_err(|e| HarnessError::Replication {
                n,
                leverage,
                regime,
                rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let raw: Vec<f64> = outcomes.iter().map(|o| o.j).collect();
    let clamp_events = outcomes.iter().map(|o| o.clamp_events).sum();
    let summary = summarize(&raw).map_err(|source| HarnessError::Stats { n, leverage, source })?;
    Ok(DivergenceCell {
        n,
        leverage,
        regime,
        summary,
        raw,
        clamp_events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Ordered by n, then leverage, then regime as configured.
    pub cells: Vec<DivergenceCell>,
    /// Present only when both regimes ran; ordered by n, then leverage.
    pub comparisons: Vec<RegimeComparison>,
}

impl GridResult {
    pub fn cell(&self, n: usize, leverage: f64, regime: Regime) -> Option<&DivergenceCell> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.leverage == leverage && c.regime == regime)
    }

    pub fn comparison(&self, n: usize, leverage: f64) -> Option<&RegimeComparison> {
        self.comparisons.iter().find(|c| c.n == n && c.leverage == leverage)
    }

    pub fn clamp_events(&self) -> u64 {
        self.cells.iter().map(|c| c.clamp_events).sum()
    }
}

pub fn run_grid(config: &ExperimentConfig) -> Result<GridResult, HarnessError> {
    config.validate()?;
    let coords: Vec<(usize, f64, Regime)> = config
        .market_sizes
        .iter()
        .flat_map(|&n| {
            config
                .leverages
                .iter()
                .flat_map(move |&lev| config.regimes.iter().map(move |&r| (n, lev, r)))
        })
        .collect();
    let cells = coords
        .into_par_iter()
        .map(|(n, lev, r)| run_cell(n, lev, r, config))
        .collect::<Result<Vec<_>, _>>()?;
    let mut comparisons = Vec::new();
    if config.regimes.contains(&Regime::High) && config.regimes.contains(&Regime::Low) {
        for &n in &config.market_sizes {
            for &leverage in &config.leverages {
                let find = |r| {
                    cells
                        .iter()
                        .find(|c| c.n == n && c.leverage == leverage && c.regime == r)
                        .expect("cell present")
                };
                let welch = welch_test(&find(Regime::Low).raw, &find(Regime::High).raw)
                    .map_err(|source| HarnessError::Stats { n, leverage, source })?;
                comparisons.push(RegimeComparison { n, leverage, welch });
            }
        }
    }
    Ok(GridResult { cells, comparisons })
}

pub const TABLE1_HEADER: [&str; 6] = ["n", "leverage", "regime", "mean_J", "se_J", "reps"];
pub const TABLE2_HEADER: [&str; 5] = ["n", "leverage", "t", "dof", "p_value"];
pub const FIGURE1_HEADER: [&str; 5] = ["n", "regime", "leverage", "mean_J", "se_J"];

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// One row per cell in grid order.
pub fn write_table1<W: Write>(grid: &GridResult, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE1_HEADER).map_err(csv_error)?;
    for c in &grid.cells {
        w.write_record([
            c.n.to_string(),
            sig17(c.leverage),
            c.regime.label().to_string(),
            sig17(c.summary.mean),
            sig17(c.summary.se),
            c.summary.n.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
}

/// One row per (n, leverage) with the exact two-sided p-value.
pub fn write_table2<W: Write>(grid: &GridResult, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE2_HEADER).map_err(csv_error)?;
    for c in &grid.comparisons {
        w.write_record([
            c.n.to_string(),
            sig17(c.leverage),
            sig17(c.welch.t_stat),
            sig17(c.welch.dof),
            sig17(c.welch.p_value),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
}

/// Long format: one curve per (n, regime), points in leverage order.
pub fn write_figure1<W: Write>(grid: &GridResult, out: W) -> io::Result<()> {
    let mut cells: Vec<&DivergenceCell> = grid.cells.iter().collect();
    cells.sort_by(|a, b| {
        (a.n, a.regime)
            .cmp(&(b.n, b.regime))
            .then(a.leverage.total_cmp(&b.leverage))
    });
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIGURE1_HEADER).map_err(csv_error)?;
    for c in cells {
        w.write_record([
            c.n.to_string(),
            c.regime.label().to_string(),
            sig17(c.leverage),
            sig17(c.summary.mean),
            sig17(c.summary.se),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
}

/// Reference means and standard errors for the calibration report: (n, leverage, regime, mean, se).
pub const REFERENCE_TABLE: [(usize, f64, Regime, f64, f64); 40] = {
    use Regime::{High as H, Low as L};
    [
        (10, 0.1, L, 0.3400, 0.1268),
        (50, 0.1, L, 0.5834, 0.0813),
        (100, 0.1, L, 0.6683, 0.0658),
        (1000, 0.1, L, 0.7926, 0.0241),
        (10, 0.1, H, 0.5669, 0.1982),
        (50, 0.1, H, 0.7722, 0.1081),
        (100, 0.1, H, 0.7952, 0.0763),
        (1000, 0.1, H, 0.8201, 0.0248),
        (10, 0.5, L, 0.1504, 0.0567),
        (50, 0.5, L, 0.2636, 0.0382),
        (100, 0.5, L, 0.3046, 0.0308),
        (1000, 0.5, L, 0.3610, 0.0115),
        (10, 0.5, H, 0.2618, 0.0931),
        (50, 0.5, H, 0.3498, 0.0488),
        (100, 0.5, H, 0.3607, 0.0358),
        (1000, 0.5, H, 0.3751, 0.0118),
        (10, 1.0, L, 0.0980, 0.0364),
        (50, 1.0, L, 0.1684, 0.0246),
        (100, 1.0, L, 0.1954, 0.0201),
        (1000, 1.0, L, 0.2328, 0.0074),
        (10, 1.0, H, 0.1651, 0.0608),
        (50, 1.0, H, 0.2243, 0.0318),
        (100, 1.0, H, 0.2330, 0.0229),
        (1000, 1.0, H, 0.2425, 0.0073),
        (10, 1.5, L, 0.0710, 0.0275),
        (50, 1.5, L, 0.1266, 0.0186),
        (100, 1.5, L, 0.1475, 0.0140),
        (1000, 1.5, L, 0.1772, 0.0056),
        (10, 1.5, H, 0.1240, 0.0448),
        (50, 1.5, H, 0.1700, 0.0239),
        (100, 1.5, H, 0.1764, 0.0172),
        (1000, 1.5, H, 0.1833, 0.0056),
        (10, 2.0, L, 0.0575, 0.0215),
        (50, 2.0, L, 0.1018, 0.0147),
        (100, 2.0, L, 0.1185, 0.0119),
        (1000, 2.0, L, 0.1425, 0.0040),
        (10, 2.0, H, 0.0992, 0.0365),
        (50, 2.0, H, 0.1377, 0.0192),
        (100, 2.0, H, 0.1415, 0.0134),
        (1000, 2.0, H, 0.1547, 0.0052),
    ]
};

/// Achieved mean next to a reference mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationGap {
    pub n: usize,
    pub leverage: f64,
    pub regime: Regime,
    pub achieved: f64,
    pub reference: f64,
    /// `(achieved - reference) / reference`.
    pub relative_gap: f64,
}

/// Gaps for every grid cell that has a reference value.
pub fn calibration_gaps(grid: &GridResult) -> Vec<CalibrationGap> {
    REFERENCE_TABLE
        .iter()
        .filter_map(|&(n, lev, regime, reference, _)| {
            let cell = grid
                .cells
                .iter()
                .find(|c| c.n == n && c.regime == regime && (c.leverage - lev).abs() < 1e-12)?;
            Some(CalibrationGap {
                n,
                leverage: cell.leverage,
                regime,
                achieved: cell.summary.mean,
                reference,
                relative_gap: (cell.summary.mean - reference) / reference,
            })
        })
        .collect()
}
