//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand returned a non-finite value at {at}")]
    NonFinite { at: f64 },
    #[error("tolerance not reached after {subdivisions} subdivisions (estimate {estimate}, error {error})")]
    NotConverged {
        subdivisions: usize,
        estimate: f64,
        error: f64,
    },
    #[error("invalid interval or options: {0}")]
    InvalidArgument(String),
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (and the centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            max_subdivisions: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Panel, QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |f: &mut F, x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadError::NonFinite { at: x })
        }
    };
    let fc = eval(f, c)?;
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for (i, &x) in XGK[..7].iter().enumerate() {
        let pair = eval(f, c - h * x)? + eval(f, c + h * x)?;
        k += WGK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    Ok(Panel {
        a,
        b,
        value: k * h,
        error: ((k - g) * h).abs(),
    })
}

/// Integrate `f` over `[breaks[0], breaks[last]]`, starting from the panels
/// delimited by the (strictly increasing) break points.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(QuadError::InvalidArgument(
            "break points must be strictly increasing with at least two entries".into(),
        ));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breaks.windows(2) {
        heap.push(kronrod(&mut f, w[0], w[1])?);
        evaluations += 15;
    }
    let mut subdivisions = 0;
    loop {
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        if error <= opts.abs_tol {
            return Ok(QuadResult {
                value,
                error,
                evaluations,
            });
        }
        if subdivisions >= opts.max_subdivisions {
            return Err(QuadError::NotConverged {
                subdivisions,
                estimate: value,
                error,
            });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Panel cannot be split further in floating point.
            return Err(QuadError::NotConverged {
                subdivisions,
                estimate: value,
                error,
            });
        }
        heap.push(kronrod(&mut f, worst.a, mid)?);
        heap.push(kronrod(&mut f, mid, worst.b)?);
        evaluations += 30;
        subdivisions += 1;
    }
}

/// Integrate `f` over `[a, b]` split into `panels` equal pieces.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    opts: &QuadOptions,
) -> Result<QuadResult, QuadError> {
    if panels == 0 || !(b > a) {
        return Err(QuadError::InvalidArgument(format!(
            "need a < b and at least one panel, got [{a}, {b}] with {panels}"
        )));
    }
    let breaks: Vec<f64> = (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect();
    integrate_panels(f, &breaks, opts)
}
