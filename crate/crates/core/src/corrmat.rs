//! Random correlation matrices whose off-diagonal entries all lie in a
//! prescribed band of magnitudes.
//!
//! Generation runs in three steps:
//!
//! 1. [`generate_base_matrix`]: a one-factor Gram matrix `(1 - m) I + m 11ᵀ` with `m`
//!    the band midpoint. Its smallest eigenvalue is `1 - m`.
//! 2. [`apply_banded_noise`]: Hardin-style noise `δ_ij = ε ⟨q_i, q_j⟩` with
//!    `q_i` independent uniform unit vectors in R³. The noise matrix
//!    `ε (QQᵀ - I)` has eigenvalues `>= -ε`, so any `ε < λ_min(base)` keeps the
//!    result positive definite, and `|δ_ij| <= ε` keeps entries in band when
//!    `ε` does not exceed the distance to the band edges. In R³ the dot product
//!    of two uniform unit vectors is itself Uniform[-1, 1].
//! 3. [`apply_sign_pattern`]: conjugation `diag(s) S diag(s)` introduces
//!    negative correlations without touching the spectrum.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::format::sig17;

/// Matrices are accepted as positive definite only above this eigenvalue.
pub const PD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrMatError {
    #[error("invalid dimension {0}: need at least 2")]
    InvalidDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid band [{rho_min}, {rho_max}]: need 0 < rho_min <= rho_max <= 1 and midpoint < 1")]
    InvalidBand { rho_min: f64, rho_max: f64 },
    #[error("noise level {epsilon} cannot keep entry ({row}, {col}) = {value} inside band [{rho_min}, {rho_max}]")]
    BandInfeasible {
        row: usize,
        col: usize,
        value: f64,
        epsilon: f64,
        rho_min: f64,
        rho_max: f64,
    },
    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("noise level {epsilon} is not below the smallest eigenvalue of the base matrix")]
    NoiseTooLarge { epsilon: f64 },
    #[error("malformed matrix: {0}")]
    Malformed(String),
}

/// Correlation regime of a generated market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    High,
    Low,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::High, Regime::Low];

    pub fn label(self) -> &'static str {
        match self {
            Regime::High => "high",
            Regime::Low => "low",
        }
    }

    /// Default magnitude band: High = [0.8, 0.99], Low = [0.1, 0.4].
    pub fn default_band(self) -> NoiseBand {
        match self {
            Regime::High => NoiseBand::high(),
            Regime::Low => NoiseBand::low(),
        }
    }

    /// Small integer used when deriving random substreams.
    pub fn index(self) -> u64 {
        match self {
            Regime::High => 0,
            Regime::Low => 1,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" | "h" => Ok(Regime::High),
            "low" | "l" => Ok(Regime::Low),
            other => Err(format!("unknown regime '{other}' (expected high or low)")),
        }
    }
}

/// Allowed range of off-diagonal magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBand {
    rho_min: f64,
    rho_max: f64,
    regime: Regime,
}

impl NoiseBand {
    /// A collapsed band (`rho_min == rho_max`) is allowed and yields constant
    /// off-diagonal magnitudes.
    pub fn new(rho_min: f64, rho_max: f64, regime: Regime) -> Result<Self, CorrMatError> {
        let valid = rho_min > 0.0 && rho_min <= rho_max && rho_max <= 1.0 && 0.5 * (rho_min + rho_max) < 1.0;
        if !valid {
            return Err(CorrMatError::InvalidBand { rho_min, rho_max });
        }
        Ok(Self {
            rho_min,
            rho_max,
            regime,
        })
    }

    pub fn high() -> Self {
        Self {
            rho_min: 0.8,
            rho_max: 0.99,
            regime: Regime::High,
        }
    }

    pub fn low() -> Self {
        Self {
            rho_min: 0.1,
            rho_max: 0.4,
            regime: Regime::Low,
        }
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.rho_min + self.rho_max)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.rho_max - self.rho_min)
    }

    /// Inclusive magnitude test.
    pub fn contains_magnitude(&self, x: f64) -> bool {
        let a = x.abs();
        a >= self.rho_min && a <= self.rho_max
    }
}

/// Symmetric positive-definite matrix with exact unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    entries: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Validates the invariants: square, exact unit diagonal, exact symmetry,
    /// entries in [-1, 1] and positive definiteness.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, CorrMatError> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(CorrMatError::Malformed(format!(
                "expected a non-empty square matrix, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        for i in 0..n {
            if entries[(i, i)] != 1.0 {
                return Err(CorrMatError::Malformed(format!(
                    "diagonal entry {i} is {} (must be exactly 1)",
                    entries[(i, i)]
                )));
            }
            for j in 0..i {
                let x = entries[(i, j)];
                if x != entries[(j, i)] {
                    return Err(CorrMatError::Malformed(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
                if !(-1.0..=1.0).contains(&x) {
                    return Err(CorrMatError::Malformed(format!(
                        "entry ({i}, {j}) = {x} outside [-1, 1]"
                    )));
                }
            }
        }
        cholesky_factor(&entries)?;
        Ok(Self { entries })
    }

    /// Caller guarantees the invariants.
    fn from_trusted(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_trusted(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    /// Strict upper-triangle entries in row-major order.
    pub fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.dim();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| self.entries[(i, j)]))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.entries)
    }

    /// Row-major CSV, full matrix, 17 significant digits, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.dim();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| sig17(self.entries[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Inverse of [`CorrelationMatrix::write_csv`]; re-validates invariants.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, CorrMatError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| CorrMatError::Malformed(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CorrMatError::Malformed(format!("line {}: {e}", lineno + 1)))?;
            rows.push(row);
        }
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(CorrMatError::Malformed("matrix is not square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

/// Per-index signs used to conjugate a correlation matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignPattern {
    signs: Vec<i8>,
}

impl SignPattern {
    pub fn new(signs: Vec<i8>) -> Result<Self, CorrMatError> {
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(CorrMatError::InvalidArgument(format!(
                "sign pattern entries must be +1 or -1, found {bad}"
            )));
        }
        Ok(Self { signs })
    }

    pub fn all_positive(dim: usize) -> Self {
        Self { signs: vec![1; dim] }
    }

    /// Independent fair signs.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            signs: (0..dim).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
}

/// One-factor Gram matrix with every off-diagonal entry at the band midpoint.
pub fn generate_base_matrix(dim: usize, band: &NoiseBand) -> Result<CorrelationMatrix, CorrMatError> {
    if dim < 2 {
        return Err(CorrMatError::InvalidDimension(dim));
    }
    let m = band.midpoint();
    let entries = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { m });
    Ok(CorrelationMatrix::from_trusted(entries))
}

/// Smallest eigenvalue of [`generate_base_matrix`] for this band.
pub fn base_min_eigenvalue(band: &NoiseBand) -> f64 {
    1.0 - band.midpoint()
}

/// Largest noise level that is safe for the base matrix of `band`, scaled by
/// `fraction` in [0, 1).
pub fn safe_noise_level(band: &NoiseBand, fraction: f64) -> f64 {
    fraction * base_min_eigenvalue(band).min(band.half_width())
}

fn check_band_feasible(base: &CorrelationMatrix, band: &NoiseBand, epsilon: f64) -> Result<(), CorrMatError> {
    let n = base.dim();
    for i in 0..n {
        for j in (i + 1)..n {
            let x = base.get(i, j);
            let a = x.abs();
            if a - epsilon < band.rho_min || a + epsilon > band.rho_max {
                return Err(CorrMatError::BandInfeasible {
                    row: i,
                    col: j,
                    value: x,
                    epsilon,
                    rho_min: band.rho_min,
                    rho_max: band.rho_max,
                });
            }
        }
    }
    Ok(())
}

fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-12 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

fn noisy_entry(x: f64, qi: &[f64; 3], qj: &[f64; 3], epsilon: f64, band: &NoiseBand) -> f64 {
    let dot = (qi[0] * qj[0] + qi[1] * qj[1] + qi[2] * qj[2]).clamp(-1.0, 1.0);
    // Rounding can only push the magnitude out by an ulp.
    (x + epsilon * dot).abs().clamp(band.rho_min, band.rho_max).copysign(x)
}

/// Adds noise without re-checking feasibility or definiteness.
fn add_noise<R: Rng + ?Sized>(
    base: &CorrelationMatrix,
    band: &NoiseBand,
    epsilon: f64,
    rng: &mut R,
) -> CorrelationMatrix {
    let n = base.dim();
    let q: Vec<[f64; 3]> = (0..n).map(|_| random_unit_vector(rng)).collect();
    // δ_ij and δ_ji round identically, so the result is exactly symmetric.
    let out = DMatrix::from_fn(n, n, |i, j| {
        let x = base.get(i, j);
        if i == j {
            x
        } else {
            noisy_entry(x, &q[i], &q[j], epsilon, band)
        }
    });
    CorrelationMatrix::from_trusted(out)
}

/// Perturb every off-diagonal entry by `δ_ij = ε ⟨q_i, q_j⟩`.
///
/// Fails with [`CorrMatError::BandInfeasible`] if some entry could leave the
/// band and with [`CorrMatError::NoiseTooLarge`] unless `ε + PD_TOLERANCE < λ_min(base)`.
pub fn apply_banded_noise<R: Rng + ?Sized>(
    base: &CorrelationMatrix,
    band: &NoiseBand,
    epsilon: f64,
    rng: &mut R,
) -> Result<CorrelationMatrix, CorrMatError> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(CorrMatError::InvalidArgument(format!(
            "noise level must be finite and non-negative, got {epsilon}"
        )));
    }
    if epsilon == 0.0 {
        return Ok(base.clone());
    }
    check_band_feasible(base, band, epsilon)?;
    let n = base.dim();
    let shifted = DMatrix::from_fn(n, n, |i, j| {
        base.get(i, j) - if i == j { epsilon + PD_TOLERANCE } else { 0.0 }
    });
    if cholesky_factor(&shifted).is_err() {
        return Err(CorrMatError::NoiseTooLarge { epsilon });
    }
    Ok(add_noise(base, band, epsilon, rng))
}

/// `S_ij ↦ s_i s_j S_ij`.
pub fn apply_sign_pattern(s: &CorrelationMatrix, pattern: &SignPattern) -> Result<CorrelationMatrix, CorrMatError> {
    if pattern.len() != s.dim() {
        return Err(CorrMatError::InvalidArgument(format!(
            "sign pattern has length {} but matrix dimension is {}",
            pattern.len(),
            s.dim()
        )));
    }
    let signs = pattern.signs();
    let entries = DMatrix::from_fn(s.dim(), s.dim(), |i, j| {
        if signs[i] == signs[j] {
            s.get(i, j)
        } else {
            -s.get(i, j)
        }
    });
    Ok(CorrelationMatrix::from_trusted(entries))
}

/// Knobs for the full generation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSettings {
    /// Noise level as a fraction of the largest safe level; must be in [0, 1).
    pub noise_fraction: f64,
    /// Draw a random sign pattern (mixed-sign correlations).
    pub random_signs: bool,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            noise_fraction: 0.95,
            random_signs: true,
        }
    }
}

/// Base matrix, banded noise at the configured safe level, then an optional
/// random sign pattern.
pub fn generate<R: Rng + ?Sized>(
    dim: usize,
    band: &NoiseBand,
    settings: &GeneratorSettings,
    rng: &mut R,
) -> Result<CorrelationMatrix, CorrMatError> {
    if !(0.0..1.0).contains(&settings.noise_fraction) {
        return Err(CorrMatError::InvalidArgument(format!(
            "noise fraction must lie in [0, 1), got {}",
            settings.noise_fraction
        )));
    }
    if dim < 2 {
        return Err(CorrMatError::InvalidDimension(dim));
    }
    // Base, noise and signs in a single pass; this is the same arithmetic and
    // the same random draws as generate_base_matrix, apply_banded_noise and
    // apply_sign_pattern in sequence. ε is strictly inside both bounds, so the
    // feasibility and O(n³) definiteness checks would always pass.
    let m = band.midpoint();
    let epsilon = safe_noise_level(band, settings.noise_fraction);
    let q: Option<Vec<[f64; 3]>> = (epsilon > 0.0).then(|| (0..dim).map(|_| random_unit_vector(rng)).collect());
    let signs = settings.random_signs.then(|| SignPattern::random(dim, rng));
    let entries = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            return 1.0;
        }
        let x = match &q {
            Some(q) => noisy_entry(m, &q[i], &q[j], epsilon, band),
            None => m,
        };
        match &signs {
            Some(s) if s.signs[i] != s.signs[j] => -x,
            _ => x,
        }
    });
    Ok(CorrelationMatrix::from_trusted(entries))
}

/// Lower-triangular `L` with `L Lᵀ = C`, reading only the lower triangle of
/// `C`.
pub fn cholesky_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>, CorrMatError> {
    let n = c.nrows();
    if c.ncols() != n {
        return Err(CorrMatError::InvalidArgument(format!(
            "Cholesky needs a square matrix, got {}x{}",
            n,
            c.ncols()
        )));
    }
    // Row-major scratch so the inner products run over contiguous memory.
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let (row_j, _) = l.split_at(j * n + n);
        let row_j = &row_j[j * n..j * n + j];
        let d = c[(j, j)] - row_j.iter().map(|x| x * x).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return Err(CorrMatError::NotPositiveDefinite { pivot: j });
        }
        let diag = d.sqrt();
        l[j * n + j] = diag;
        for i in (j + 1)..n {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            l[i * n + j] = (c[(i, j)] - dot) / diag;
        }
    }
    Ok(DMatrix::from_row_slice(n, n, &l))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(c: &DMatrix<f64>) -> f64 {
    c.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
