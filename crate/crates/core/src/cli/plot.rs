//! Static SVG line chart of mean divergence against leverage.

use std::fmt::Write as _;
use std::io::Read;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("no data rows")]
    Empty,
    #[error("malformed input: {0}")]
    Malformed(String),
}

/// One line: a market size in one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub n: usize,
    pub regime: String,
    /// `(leverage, mean divergence)` sorted by leverage.
    pub points: Vec<(f64, f64)>,
}

/// Group a long-format curve CSV (`n, regime, leverage, mean_J, ...`) by
/// `(n, regime)` in order of first appearance.
pub fn read_curves<R: Read>(input: R) -> Result<Vec<Curve>, PlotError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| PlotError::Malformed(e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(PlotError::Empty);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| PlotError::Malformed(format!("missing column '{name}'")))
    };
    let (ci_n, ci_r, ci_l, ci_m) = (col("n")?, col("regime")?, col("leverage")?, col("mean_J")?);
    let mut curves: Vec<Curve> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| PlotError::Malformed(e.to_string()))?;
        let field = |i: usize| {
            rec.get(i)
                .map(str::trim)
                .ok_or_else(|| PlotError::Malformed(format!("row {}: too few fields", row + 2)))
        };
        let num = |i: usize| -> Result<f64, PlotError> {
            let v = field(i)?;
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| PlotError::Malformed(format!("row {}: bad number '{v}'", row + 2)))
        };
        let n: usize = field(ci_n)?
            .parse()
            .map_err(|_| PlotError::Malformed(format!("row {}: bad market size", row + 2)))?;
        let regime = field(ci_r)?.to_string();
        let point = (num(ci_l)?, num(ci_m)?);
        match curves.iter_mut().find(|c| c.n == n && c.regime == regime) {
            Some(c) => c.points.push(point),
            None => curves.push(Curve {
                n,
                regime,
                points: vec![point],
            }),
        }
    }
    if curves.is_empty() {
        return Err(PlotError::Empty);
    }
    for c in &mut curves {
        c.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(curves)
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 560.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// One `<polyline>` per curve; colour by market size, dashes for the low
/// regime.
pub fn render_svg(curves: &[Curve]) -> String {
    let all = curves.iter().flat_map(|c| c.points.iter());
    let (xmin, xmax) = all
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let ymax = all.fold(0.0f64, |m, p| m.max(p.1));
    let (xmin, xmax) = span(xmin, xmax);
    let (ymin, ymax) = span(0.0, ymax * 1.05);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| TOP + ph - (y - ymin) / (ymax - ymin) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">Mean divergence by market size</text>"#,
        LEFT + pw / 2.0
    );
    let (x0, y0) = (LEFT, TOP + ph);
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        LEFT + pw
    );
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{TOP}" stroke="black"/>"#);
    for k in 0..=5 {
        let fx = xmin + (xmax - xmin) * k as f64 / 5.0;
        let fy = ymin + (ymax - ymin) * k as f64 / 5.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{}" text-anchor="middle">{fx:.2}</text>"#,
            y0 + 20.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{fy:.3}</text>"#,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">leverage ln(D/V0)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 25.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(22 {}) rotate(-90)" text-anchor="middle">mean Jeffreys divergence</text>"#,
        TOP + ph / 2.0
    );

    let mut sizes: Vec<usize> = curves.iter().map(|c| c.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[sizes.iter().position(|&n| n == c.n).unwrap_or(0) % PALETTE.len()];
        let dash = if c.regime.eq_ignore_ascii_case("low") {
            r#" stroke-dasharray="6 4""#
        } else {
            ""
        };
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2"{dash} points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"{dash}/>"#,
            lx + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">N={} {}</text>"#,
            lx + 38.0,
            ly + 4.0,
            c.n,
            c.regime
        );
    }
    s.push_str("</svg>\n");
    s
}
