use std::fs;
use std::path::Path;
use std::process::Command;

use credit_divergence::cli::{run_with, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
use credit_divergence::corrmat::CorrelationMatrix;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["credit-divergence"];
    argv.extend_from_slice(args);
    let code = run_with(argv, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn value<'a>(stdout: &'a str, key: &str) -> &'a str {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
}

fn small_run(dir: &Path, extra: &[&str]) -> Outcome {
    let d = dir.to_str().unwrap();
    let mut args = vec![
        "run",
        "--out-dir",
        d,
        "--reps",
        "20",
        "--market-sizes",
        "10,20",
        "--leverages",
        "0.1,1",
    ];
    args.extend_from_slice(extra);
    cli(&args)
}

#[test]
fn divergence_subcommand() {
    let o = cli(&["divergence", "0.3", "0.3"]);
    assert_eq!(o.code, EXIT_OK);
    assert_eq!(value(&o.stdout, "J"), "0");
    let o = cli(&["divergence", "0.5", "0.25"]);
    let j: f64 = value(&o.stdout, "J").parse().unwrap();
    assert!((j - 3f64.ln() / 4.0).abs() < 1e-15);
    let kl: f64 = value(&o.stdout, "kl_pq").parse().unwrap();
    let lk: f64 = value(&o.stdout, "kl_qp").parse().unwrap();
    assert!((kl + lk - j).abs() < 1e-15);
    let o = cli(&["divergence", "1.5", "0.2"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stdout.is_empty() && !o.stderr.is_empty());
    assert_eq!(cli(&["divergence", "-0.1", "0.2"]).code, EXIT_USAGE);
    assert_eq!(cli(&["divergence", "abc", "0.2"]).code, EXIT_USAGE);
}

#[test]
fn gen_matrix_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = cli(&[
        "gen-matrix",
        "--dim",
        "10",
        "--regime",
        "high",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 10);
    let m = CorrelationMatrix::read_csv(text.as_bytes()).unwrap();
    let printed: f64 = value(&o.stdout, "min_eigenvalue").parse().unwrap();
    assert!(printed > 0.0);
    assert!((printed - m.min_eigenvalue()).abs() < 1e-12);
    assert_eq!(value(&o.stdout, "rho_min"), "0.8");

    let o = cli(&["gen-matrix", "--dim", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("dimension"));

    let o = cli(&[
        "gen-matrix",
        "--dim",
        "2",
        "--rho-min",
        "0.9",
        "--rho-max",
        "0.9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_OK);
    let m = CorrelationMatrix::read_csv(fs::read_to_string(&out).unwrap().as_bytes()).unwrap();
    assert_eq!(m.get(0, 1).abs(), 0.9);

    let o = cli(&[
        "gen-matrix",
        "--dim",
        "4",
        "--rho-min",
        "0.7",
        "--rho-max",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_USAGE);
}

#[test]
fn plot_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let svg = dir.path().join("f.svg");
    fs::write(
        &csv,
        "n,regime,leverage,mean_J,se_J\n10,high,0.1,0.5,0.01\n10,low,0.1,0.3,0.01\n",
    )
    .unwrap();
    let o = cli(&["plot", csv.to_str().unwrap(), svg.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.starts_with("<svg") && text.trim_end().ends_with("</svg>"));

    fs::write(&csv, "").unwrap();
    assert_eq!(
        cli(&["plot", csv.to_str().unwrap(), svg.to_str().unwrap()]).code,
        EXIT_USAGE
    );
    fs::write(&csv, "n,regime,leverage,mean_J\n10,high,oops,1\n").unwrap();
    assert_eq!(
        cli(&["plot", csv.to_str().unwrap(), svg.to_str().unwrap()]).code,
        EXIT_USAGE
    );
}

#[test]
fn run_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &["--seed", "7"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    for f in ["table1.csv", "table2.csv", "figure1.csv", "manifest.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let t1 = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    assert_eq!(t1.lines().next().unwrap(), "n,leverage,regime,mean_J,se_J,reps");
    assert_eq!(t1.lines().count(), 1 + 2 * 2 * 2);
    let t2 = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert_eq!(t2.lines().count(), 1 + 2 * 2);
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.master_seed = 7"));
    assert!(manifest.contains(&format!(
        "digest.table1.csv = {}",
        value(&o.stdout, "digest.table1.csv")
    )));
    for line in o.stdout.lines() {
        assert!(line.contains('='), "non key=value stdout line: {line}");
    }
}

#[test]
fn identical_runs_have_identical_digests() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = cli(&[
        "run",
        "--profile",
        "desk",
        "--seed",
        "7",
        "--out-dir",
        a.path().to_str().unwrap(),
    ]);
    let ob = cli(&[
        "run",
        "--profile",
        "desk",
        "--seed",
        "7",
        "--out-dir",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(oa.code, EXIT_OK, "{}", oa.stderr);
    for f in ["table1.csv", "table2.csv", "figure1.csv"] {
        let key = format!("digest.{f}");
        assert_eq!(value(&oa.stdout, &key), value(&ob.stdout, &key));
    }
    let c = tempfile::tempdir().unwrap();
    let oc = small_run(c.path(), &["--seed", "8"]);
    let od = small_run(c.path(), &["--seed", "9"]);
    assert_ne!(
        value(&oc.stdout, "digest.table1.csv"),
        value(&od.stdout, "digest.table1.csv")
    );
}

#[test]
fn cholesky_mode_gives_zero_means() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_run(dir.path(), &["--loading-mode", "cholesky"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let mut rdr = csv::Reader::from_path(dir.path().join("table1.csv")).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[3].parse::<f64>().unwrap(), 0.0);
        rows += 1;
    }
    assert_eq!(rows, 8);
}

#[test]
fn manifest_reproduces_digests() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(
        small_run(a.path(), &["--seed", "11", "--regimes", "both"]).code,
        EXIT_OK
    );
    let manifest = a.path().join("manifest.txt");
    let o = cli(&[
        "run",
        "--from-manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(value(&o.stdout, "digests_match"), "true");
    for f in ["table1.csv", "table2.csv", "figure1.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }

    let tampered = fs::read_to_string(&manifest)
        .unwrap()
        .lines()
        .map(|l| {
            if l.starts_with("digest.table2.csv") {
                "digest.table2.csv = 00".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&manifest, tampered).unwrap();
    let o = cli(&[
        "run",
        "--from-manifest",
        manifest.to_str().unwrap(),
        "--out-dir",
        b.path().to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_NUMERICAL);
    assert!(o.stderr.contains("table2.csv"));
}

#[test]
fn config_files_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        "# small grid\nmarket_sizes = 10\nleverages = 0.5\nreps = 10\nregimes = high\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = cli(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let t1 = fs::read_to_string(out.join("table1.csv")).unwrap();
    assert_eq!(t1.lines().count(), 2);
    assert!(fs::read_to_string(out.join("table2.csv")).unwrap().lines().count() == 1);

    fs::write(&cfg, "reps = 10\nsigma_base_hgh = 0.3\n").unwrap();
    let o = cli(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("sigma_base_hgh"));

    let o = small_run(dir.path(), &["--reps", "zero"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert!(o.stderr.contains("reps"));
    assert_eq!(small_run(dir.path(), &["--reps", "1"]).code, EXIT_USAGE);
    assert_eq!(small_run(dir.path(), &["--market-sizes", "1"]).code, EXIT_USAGE);
    assert_eq!(small_run(dir.path(), &["--profile", "huge"]).code, EXIT_USAGE);
    assert_eq!(cli(&["run", "--bogus"]).code, EXIT_USAGE);
    assert_eq!(cli(&["--help"]).code, EXIT_OK);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_credit-divergence");
    let ok = Command::new(bin).args(["divergence", "0.2", "0.4"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("J="));
    let bad = Command::new(bin).args(["divergence", "1.5", "0.4"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(bad.stdout.is_empty());
}

#[test]
fn desk_curves_put_high_above_low() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(
        cli(&["run", "--profile", "desk", "--reps", "50", "--out-dir", d]).code,
        EXIT_OK
    );
    let fig = dir.path().join("figure1.csv");
    let svg = dir.path().join("figure1.svg");
    assert_eq!(
        cli(&["plot", fig.to_str().unwrap(), svg.to_str().unwrap()]).code,
        EXIT_OK
    );
    let curves = credit_divergence::cli::plot::read_curves(fs::File::open(&fig).unwrap()).unwrap();
    assert_eq!(
        fs::read_to_string(&svg).unwrap().matches("<polyline").count(),
        curves.len()
    );
    for high in curves.iter().filter(|c| c.regime == "high" && c.n <= 100) {
        let low = curves.iter().find(|c| c.regime == "low" && c.n == high.n).unwrap();
        for (h, l) in high.points.iter().zip(&low.points) {
            assert_eq!(h.0, l.0);
            assert!(h.1 > l.1, "N={} leverage {}", high.n, h.0);
        }
    }
}
