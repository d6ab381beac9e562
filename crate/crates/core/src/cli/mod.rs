//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O failure (unreadable input, unwritable output) |
//! | 2 | usage, configuration or domain error |
//! | 3 | numerical failure, or a digest mismatch under `--from-manifest` |
//!
//! Standard output carries `key=value` lines only; diagnostics go to
//! standard error.

pub mod config;
pub mod manifest;
pub mod plot;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::corrmat::{self, CorrMatError, GeneratorSettings, NoiseBand, Regime};
use crate::divergence::jeffreys_bernoulli;
use crate::harness::{self, ExperimentConfig, HarnessError};
use crate::rng::substream;
use config::{parse_config, ConfigError};
use manifest::{file_digest, parse_manifest, RunManifest, MANIFEST_FILE};
use plot::{read_curves, render_svg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Output files of `run`, in the order they are digested.
pub const OUTPUT_FILES: [&str; 3] = ["table1.csv", "table2.csv", "figure1.csv"];

#[derive(Debug, Parser)]
#[command(
    name = "credit-divergence",
    version,
    about = "Divergence between single-factor and multi-factor default models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Run the experiment grid and write table1.csv, table2.csv, figure1.csv and manifest.txt.
    Run(RunArgs),
    /// Generate one banded correlation matrix as CSV.
    GenMatrix(GenMatrixArgs),
    /// Jeffreys divergence and both KL directions between Bernoulli(p) and Bernoulli(q).
    #[command(allow_negative_numbers = true)]
    Divergence { p: f64, q: f64 },
    /// Render a figure1.csv as an SVG line chart.
    Plot { input: PathBuf, output: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reuse the configuration of an earlier run and check its digests.
    #[arg(long, conflicts_with_all = ["config", "profile"])]
    pub from_manifest: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// desk or paper.
    #[arg(long)]
    pub profile: Option<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

/// One flag per config key.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, alias = "master-seed", value_name = "U64")]
    pub seed: Option<String>,
    /// Comma-separated list.
    #[arg(long, value_name = "LIST")]
    pub market_sizes: Option<String>,
    /// Comma-separated list of ln(D/V0).
    #[arg(long, value_name = "LIST")]
    pub leverages: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    /// high, low or both.
    #[arg(long)]
    pub regimes: Option<String>,
    /// direct or cholesky.
    #[arg(long)]
    pub loading_mode: Option<String>,
    /// bernoulli or density.
    #[arg(long)]
    pub divergence_level: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<String>,
    #[arg(long)]
    pub sigma_base_high: Option<String>,
    #[arg(long)]
    pub sigma_base_low: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    #[arg(long)]
    pub high_rho_min: Option<String>,
    #[arg(long)]
    pub high_rho_max: Option<String>,
    #[arg(long)]
    pub low_rho_min: Option<String>,
    #[arg(long)]
    pub low_rho_max: Option<String>,
    #[arg(long)]
    pub noise_fraction: Option<String>,
    #[arg(long)]
    pub random_signs: Option<String>,
    /// mean or first.
    #[arg(long)]
    pub firm_aggregation: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(usize, &str, &str)> {
        [
            ("master_seed", &self.seed),
            ("market_sizes", &self.market_sizes),
            ("leverages", &self.leverages),
            ("reps", &self.reps),
            ("regimes", &self.regimes),
            ("loading_mode", &self.loading_mode),
            ("divergence_level", &self.divergence_level),
            ("mu", &self.mu),
            ("sigma_base_high", &self.sigma_base_high),
            ("sigma_base_low", &self.sigma_base_low),
            ("horizon", &self.horizon),
            ("high_rho_min", &self.high_rho_min),
            ("high_rho_max", &self.high_rho_max),
            ("low_rho_min", &self.low_rho_min),
            ("low_rho_max", &self.low_rho_max),
            ("noise_fraction", &self.noise_fraction),
            ("random_signs", &self.random_signs),
            ("firm_aggregation", &self.firm_aggregation),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (0, k, v)))
        .collect()
    }
}

#[derive(Debug, Args)]
pub struct GenMatrixArgs {
    #[arg(long)]
    pub dim: usize,
    /// high or low.
    #[arg(long, default_value = "high")]
    pub regime: Regime,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the lower edge of the regime's band.
    #[arg(long)]
    pub rho_min: Option<f64>,
    /// Override the upper edge of the regime's band.
    #[arg(long)]
    pub rho_max: Option<f64>,
    #[arg(long, default_value_t = GeneratorSettings::default().noise_fraction)]
    pub noise_fraction: f64,
    /// Keep every correlation positive.
    #[arg(long)]
    pub no_random_signs: bool,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_USAGE, format!("config: {e}"))
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match e {
            HarnessError::Config(_) => EXIT_USAGE,
            HarnessError::Io(_) => EXIT_IO,
            _ => EXIT_NUMERICAL,
        };
        Failure::new(code, e)
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

type CmdResult = Result<(), Failure>;

/// Parse `args` (including the program name) and run the chosen command.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{e}");
                EXIT_OK
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args, stdout, stderr),
        Command::GenMatrix(args) => cmd_gen_matrix(&args, stdout),
        Command::Divergence { p, q } => cmd_divergence(p, q, stdout),
        Command::Plot { input, output } => cmd_plot(&input, &output, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

/// Entry point for the binary.
pub fn main_with_env() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Build the run configuration: profile, then config file, then flags.
pub fn resolve_config(args: &RunArgs) -> Result<(ExperimentConfig, Option<manifest::ParsedManifest>), Failure> {
    let flags = args.overrides.pairs();
    if let Some(path) = &args.from_manifest {
        if !flags.is_empty() {
            return Err(Failure::new(
                EXIT_USAGE,
                "--from-manifest fixes the configuration; drop the override flags",
            ));
        }
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        let parsed = parse_manifest(&text)?;
        return Ok((parsed.config.clone(), Some(parsed)));
    }
    let mut cfg = ExperimentConfig::desk();
    if let Some(p) = &args.profile {
        config::apply_key(&mut cfg, "profile", p)?;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
        // An explicit --profile beats the file's own profile line.
        let text = if args.profile.is_some() {
            text.lines()
                .filter(|l| !matches!(config::split_line(l), Some(Ok(("profile", _)))))
                .collect::<Vec<_>>()
                .join("\n")
        } else {
            text
        };
        cfg = parse_config(&text, cfg)?;
    }
    config::apply_all(&mut cfg, &flags)?;
    Ok((cfg, None))
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_file(path: &Path, write: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>) -> CmdResult {
    let file = fs::File::create(path).map_err(|e| io_failure(path, e))?;
    let mut w = io::BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(|e| io_failure(path, e))
}

pub fn cmd_run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let (cfg, expected) = resolve_config(args)?;
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = args.workers {
        if k == 0 {
            return Err(Failure::new(EXIT_USAGE, "--workers must be at least 1"));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder
        .build()
        .map_err(|e| Failure::new(EXIT_IO, format!("thread pool: {e}")))?;
    let workers = pool.current_num_threads();

    let started_unix = unix_now();
    let clock = Instant::now();
    let _ = writeln!(
        stderr,
        "running {} replications on {workers} workers",
        cfg.total_replications()
    );
    let grid = pool.install(|| harness::run_grid(&cfg))?;
    let elapsed_seconds = clock.elapsed().as_secs_f64();

    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    write_file(&dir.join(OUTPUT_FILES[0]), |w| harness::write_table1(&grid, w))?;
    write_file(&dir.join(OUTPUT_FILES[1]), |w| harness::write_table2(&grid, w))?;
    write_file(&dir.join(OUTPUT_FILES[2]), |w| harness::write_figure1(&grid, w))?;
    let mut digests = Vec::new();
    for name in OUTPUT_FILES {
        let path = dir.join(name);
        digests.push((name.to_string(), file_digest(&path).map_err(|e| io_failure(&path, e))?));
    }

    let m = RunManifest {
        config: cfg,
        started_unix,
        finished_unix: unix_now(),
        elapsed_seconds,
        workers,
        components: manifest::components(),
        digests: digests.clone(),
        clamp_events: grid.clamp_events(),
        calibration: harness::calibration_gaps(&grid),
    };
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, m.render()).map_err(|e| io_failure(&manifest_path, e))?;

    let _ = writeln!(stdout, "out_dir={}", dir.display());
    for (name, hex) in &digests {
        let _ = writeln!(stdout, "digest.{name}={hex}");
    }
    let _ = writeln!(stdout, "clamp_events={}", m.clamp_events);
    let _ = writeln!(stdout, "elapsed_seconds={elapsed_seconds:.3}");

    if let Some(expected) = expected {
        let mut mismatches = Vec::new();
        for (name, hex) in &digests {
            match expected.digests.get(name) {
                Some(want) if want == hex => {}
                Some(want) => mismatches.push(format!("{name}: expected {want}, got {hex}")),
                None => mismatches.push(format!("{name}: not listed in the manifest")),
            }
        }
        let _ = writeln!(stdout, "digests_match={}", mismatches.is_empty());
        if !mismatches.is_empty() {
            return Err(Failure::new(
                EXIT_NUMERICAL,
                format!("digest mismatch: {}", mismatches.join("; ")),
            ));
        }
    }
    Ok(())
}

pub fn cmd_gen_matrix(args: &GenMatrixArgs, stdout: &mut dyn Write) -> CmdResult {
    let default = args.regime.default_band();
    let band = NoiseBand::new(
        args.rho_min.unwrap_or(default.rho_min()),
        args.rho_max.unwrap_or(default.rho_max()),
        args.regime,
    )
    .map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let settings = GeneratorSettings {
        noise_fraction: args.noise_fraction,
        random_signs: !args.no_random_signs,
    };
    let mut rng = substream(args.seed, &[args.dim as u64, args.regime.index()]);
    let m = corrmat::generate(args.dim, &band, &settings, &mut rng).map_err(|e| match e {
        CorrMatError::InvalidDimension(_) | CorrMatError::InvalidArgument(_) | CorrMatError::InvalidBand { .. } => {
            Failure::new(EXIT_USAGE, e)
        }
        _ => Failure::new(EXIT_NUMERICAL, format!("generation failed: {e}")),
    })?;
    write_file(&args.out, |w| m.write_csv(w))?;
    let _ = writeln!(stdout, "dim={}", m.dim());
    let _ = writeln!(stdout, "regime={}", args.regime);
    let _ = writeln!(stdout, "rho_min={}", band.rho_min());
    let _ = writeln!(stdout, "rho_max={}", band.rho_max());
    let _ = writeln!(stdout, "min_eigenvalue={}", m.min_eigenvalue());
    Ok(())
}

pub fn cmd_divergence(p: f64, q: f64, stdout: &mut dyn Write) -> CmdResult {
    let v = jeffreys_bernoulli(p, q).map_err(|e| Failure::new(EXIT_USAGE, e))?;
    let _ = writeln!(stdout, "J={}", v.j);
    let _ = writeln!(stdout, "kl_pq={}", v.kl_forward);
    let _ = writeln!(stdout, "kl_qp={}", v.kl_backward);
    Ok(())
}

pub fn cmd_plot(input: &Path, output: &Path, stdout: &mut dyn Write) -> CmdResult {
    let file = fs::File::open(input).map_err(|e| io_failure(input, e))?;
    let curves = read_curves(io::BufReader::new(file))
        .map_err(|e| Failure::new(EXIT_USAGE, format!("{}: {e}", input.display())))?;
    fs::write(output, render_svg(&curves)).map_err(|e| io_failure(output, e))?;
    let _ = writeln!(stdout, "curves={}", curves.len());
    let _ = writeln!(stdout, "svg={}", output.display());
    Ok(())
}
