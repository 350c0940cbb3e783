//! The `hdts` command line.

mod io;
mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

pub use io::{format_matrix, parse_matrix, read_matrix};
pub use output::{experiment_csv, experiment_svg, verify_csv, Manifest, EXPERIMENT_HEADER, VERIFY_HEADER};

use crate::bandwidth::{predicted_mean_pairwise, BandwidthRule};
use crate::error::{Error, Result};
use crate::harness::{
    run_experiment, run_test, CalibrationKind, ExperimentConfig, Preset, StatisticKind, StatisticSpec, TraceSource,
};
use crate::models::{sample, CovarianceModel, DistributionConfig};
use crate::statistics::ComputeBudget;
use crate::theory;
use crate::verify::{run_suite, Suite};

/// Exit status: the test did not reject, or a command succeeded.
pub const EXIT_OK: i32 = 0;
/// Exit status: a verification check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit status: bad input, bad flags or an I/O failure.
pub const EXIT_INPUT_ERROR: i32 = 2;
/// Exit status: the test rejected the null.
pub const EXIT_REJECT: i32 = 3;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HDTS_OUT_DIR";

const AFTER_HELP: &str = "Exit status: 0 success (test: no rejection), 1 a verify check failed, \
2 input or usage error, 3 test rejected the null.";

#[derive(Debug, Parser)]
#[command(name = "hdts", version, about = "High-dimensional two-sample tests", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test whether two data files come from the same distribution.
    Test(TestArgs),
    /// Run a power experiment preset and write CSV, manifest and optional SVG.
    Experiment(ExperimentArgs),
    /// Evaluate a closed-form expression.
    Theory(TheoryArgs),
    /// Run numerical checks of the moment identities.
    Verify(VerifyArgs),
    /// Draw a data file from a TOML population description.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
struct TestArgs {
    /// First sample: one observation per line, comma or whitespace separated.
    x: PathBuf,
    /// Second sample, same format and shape.
    y: PathBuf,
    /// Statistic family: cq, mmd, ed or edg (shifted energy distance).
    #[arg(long, default_value = "mmd")]
    statistic: String,
    /// Bandwidth rule: median, mean, pow:<p>[:<c>] or fixed:<gamma>.
    /// Defaults to median for mmd and pow:0.75 for edg.
    #[arg(long)]
    bandwidth: Option<String>,
    /// quadratic, block:<B> or linear.
    #[arg(long, default_value = "quadratic")]
    budget: String,
    /// permutation[:K], gaussian_plugin or oracle_theory.
    #[arg(long, default_value = "permutation:199")]
    calibration: String,
    /// Coordinate variance s for the oracle covariance s·I.
    #[arg(long)]
    oracle_variance: Option<f64>,
    /// Tr(Σ) for edg; defaults to the pooled sample estimate.
    #[arg(long)]
    trace_sigma: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the CSV row and a manifest under this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// exp1_normal, exp1_laplace, exp1_beta, exp1_mixture, exp2, exp4, exp5_diag or exp5_nondiag.
    preset: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory; defaults to $HDTS_OUT_DIR, then ./hdts-out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG line chart.
    #[arg(long)]
    svg: bool,
    /// Comma-separated grid values (d, or n for exp5 presets).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    /// Comma-separated statistic labels, e.g. uCQ,ED,uMMD_median,bMMD_median_B8.
    #[arg(long, value_delimiter = ',')]
    statistics: Option<Vec<String>>,
    #[arg(long, default_value = "permutation:199")]
    calibration: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    /// power_general, power_spherical, power_block, power_linear, minimax,
    /// normal_means, chi2_approx, snr_regime or median_prediction.
    formula: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    rho_sq: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    noncentrality: f64,
    #[arg(long)]
    trace_sigma: Option<f64>,
    #[arg(long)]
    trace_sigma_sq: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta_sq: f64,
    #[arg(long)]
    delta_sigma_delta: Option<f64>,
    /// Coordinate variance s of Σ = s·I for median_prediction.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// pairwise_moments, quadratic_forms, h2_identity, taylor_link, variance_scaling or all.
    suite: String,
    #[arg(long, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the CSV and a manifest under this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// TOML population description.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parse arguments, run, and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT_ERROR } else { EXIT_OK };
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>().join(" ");
    let result = match cli.command {
        Command::Test(a) => cmd_test(a, &command_line),
        Command::Experiment(a) => cmd_experiment(a, &command_line),
        Command::Theory(a) => cmd_theory(a),
        Command::Verify(a) => cmd_verify(a, &command_line),
        Command::Sample(a) => cmd_sample(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hdts: {e}");
            EXIT_INPUT_ERROR
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display())))
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display())))
    })
}

fn base_manifest(command_line: &str, seed: u64) -> Manifest {
    let mut m = Manifest::new();
    m.set("tool", "hdts")
        .set("tool_version", env!("CARGO_PKG_VERSION"))
        .set("command_line", command_line)
        .set("master_seed", seed);
    m
}

fn test_spec(a: &TestArgs) -> Result<StatisticSpec> {
    let budget: ComputeBudget = a.budget.parse()?;
    let rule = |default: &str| a.bandwidth.as_deref().unwrap_or(default).parse::<BandwidthRule>();
    let kind = match a.statistic.as_str() {
        "cq" => StatisticKind::Cq,
        "ed" => StatisticKind::Energy,
        "mmd" => StatisticKind::GaussianMmd(rule("median")?),
        "edg" => StatisticKind::ShiftedEnergy {
            bandwidth: rule("pow:0.75")?,
            trace: a.trace_sigma.map_or(TraceSource::Pooled, TraceSource::Oracle),
        },
        other => return Err(Error::InvalidArgument(format!("unknown statistic `{other}`"))),
    };
    Ok(StatisticSpec::new(kind, budget))
}

const TEST_HEADER: &str = "statistic,bandwidth_rule,budget,calibration,alpha,n,d,value,variance,z,p_value,reject,seed";

fn cmd_test(a: TestArgs, command_line: &str) -> Result<i32> {
    let x = read_matrix(&a.x)?;
    let y = read_matrix(&a.y)?;
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch { expected: x.d(), got: y.d() });
    }
    if x.n() != y.n() {
        return Err(Error::SampleSizeMismatch { x: x.n(), y: y.n() });
    }
    let spec = test_spec(&a)?;
    let kind: CalibrationKind = a.calibration.parse()?;
    if let CalibrationKind::McNull(_) = kind {
        return Err(Error::Unsupported("mc_null needs a known null generator; use it from simulations".into()));
    }
    let cov = match a.oracle_variance {
        Some(s) => Some(Arc::new(CovarianceModel::scaled_identity(x.d(), s)?)),
        None => None,
    };
    let cal = kind.bind(cov)?;
    let r = run_test(&x, &y, &spec, &cal, a.alpha, a.seed)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |v| v.to_string());
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        spec,
        spec.bandwidth_label(),
        spec.budget,
        r.calibration,
        a.alpha,
        x.n(),
        x.d(),
        r.statistic_value,
        opt(r.variance_estimate),
        opt(r.z_score),
        r.p_value,
        r.reject,
        a.seed
    );
    eprintln!(
        "{spec}: statistic = {}, p-value = {}, reject = {}",
        r.statistic_value, r.p_value, r.reject
    );
    let csv = format!("{TEST_HEADER}\n{row}\n");
    print!("{csv}");
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join("test.csv");
        write_file(&path, &csv)?;
        let mut m = base_manifest(command_line, a.seed);
        m.set("x", a.x.display())
            .set("y", a.y.display())
            .set("statistic", spec)
            .set("calibration", r.calibration)
            .set("alpha", a.alpha)
            .set("artifacts", path.display());
        write_file(&dir.join("test.manifest"), &m.render())?;
    }
    Ok(if r.reject { EXIT_REJECT } else { EXIT_OK })
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("hdts-out"))
}

fn cmd_experiment(a: ExperimentArgs, command_line: &str) -> Result<i32> {
    let started = Instant::now();
    let preset: Preset = a.preset.parse()?;
    let mut cfg = ExperimentConfig::new(preset, a.seed);
    cfg.reps = a.reps;
    cfg.alpha = a.alpha;
    cfg.calibration = a.calibration.parse()?;
    if let Some(g) = a.grid {
        cfg.grid = g;
    }
    if let Some(list) = a.statistics {
        cfg.statistics = list.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    }
    let dir = out_dir(a.out);
    ensure_dir(&dir)?;
    let result = run_experiment(&cfg)?;
    let csv_path = dir.join(format!("{preset}.csv"));
    write_file(&csv_path, &experiment_csv(&result))?;
    let mut artifacts = vec![csv_path.display().to_string()];
    if a.svg {
        let svg_path = dir.join(format!("{preset}.svg"));
        write_file(&svg_path, &experiment_svg(&result))?;
        artifacts.push(svg_path.display().to_string());
    }
    let grid: Vec<String> = cfg.grid.iter().map(|g| g.to_string()).collect();
    let stats: Vec<String> = cfg.statistics.iter().map(|s| s.to_string()).collect();
    let mut m = base_manifest(command_line, cfg.master_seed);
    m.set("preset", preset)
        .set("axis", preset.axis().column())
        .set("grid", grid.join(","))
        .set("reps", cfg.reps)
        .set("alpha", cfg.alpha)
        .set("calibration", cfg.calibration)
        .set("statistics", stats.join(","))
        .set("artifacts", artifacts.join(","))
        .set("wall_time_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
    write_file(&dir.join(format!("{preset}.manifest")), &m.render())?;
    eprintln!("wrote {}", artifacts.join(", "));
    Ok(EXIT_OK)
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument(format!("missing --{name}")))
}

fn cmd_theory(a: TheoryArgs) -> Result<i32> {
    let n = || need(a.n, "n");
    let d = || need(a.d, "d");
    let psi = || need(a.psi, "psi");
    let (header, params, value): (&str, Vec<String>, String) = match a.formula.as_str() {
        "power_general" => {
            let p = theory::ProblemParams {
                n: n()?,
                d: d()?,
                trace_sigma: a.trace_sigma.unwrap_or(d()? as f64),
                trace_sigma_sq: need(a.trace_sigma_sq, "trace-sigma-sq")?,
                delta_sq: a.delta_sq,
                delta_sigma_delta: need(a.delta_sigma_delta, "delta-sigma-delta")?,
                alpha: a.alpha,
            };
            (
                "n,d,trace_sigma_sq,delta_sq,delta_sigma_delta,alpha",
                vec![p.n.to_string(), p.d.to_string(), p.trace_sigma_sq.to_string(), p.delta_sq.to_string(), p.delta_sigma_delta.to_string(), p.alpha.to_string()],
                theory::power_general(&p)?.to_string(),
            )
        }
        "power_spherical" => (
            "n,d,psi,alpha",
            vec![n()?.to_string(), d()?.to_string(), psi()?.to_string(), a.alpha.to_string()],
            theory::power_spherical(n()?, d()?, psi()?, a.alpha)?.to_string(),
        ),
        "power_block" => {
            let b = need(a.blocks, "blocks")?;
            (
                "n,d,blocks,psi,alpha",
                vec![n()?.to_string(), d()?.to_string(), b.to_string(), psi()?.to_string(), a.alpha.to_string()],
                theory::power_block_spherical(n()?, d()?, b, psi()?, a.alpha)?.to_string(),
            )
        }
        "power_linear" => (
            "n,d,psi,alpha",
            vec![n()?.to_string(), d()?.to_string(), psi()?.to_string(), a.alpha.to_string()],
            theory::power_linear(n()?, d()?, psi()?, a.alpha)?.to_string(),
        ),
        "minimax" => {
            let rho = need(a.rho, "rho")?;
            (
                "n,d,rho,sigma,alpha",
                vec![n()?.to_string(), d()?.to_string(), rho.to_string(), a.sigma.to_string(), a.alpha.to_string()],
                theory::minimax_power(n()?, d()?, rho, a.sigma, a.alpha)?.to_string(),
            )
        }
        "normal_means" => {
            let r = need(a.rho_sq, "rho-sq")?;
            (
                "d,rho_sq,alpha",
                vec![d()?.to_string(), r.to_string(), a.alpha.to_string()],
                theory::normal_means_power(d()?, r, a.alpha)?.to_string(),
            )
        }
        "chi2_approx" => {
            let x = need(a.x, "x")?;
            (
                "x,d,noncentrality",
                vec![x.to_string(), d()?.to_string(), a.noncentrality.to_string()],
                theory::chi2_gaussian_cdf_approx(x, d()?, a.noncentrality)?.to_string(),
            )
        }
        "snr_regime" => {
            let r = theory::snr_regime(n()?, d()?, psi()?)?;
            let (lo, hi) = theory::SNR_THRESHOLDS;
            (
                "n,d,psi,ratio,low_below,high_above",
                vec![n()?.to_string(), d()?.to_string(), r.psi.to_string(), r.ratio.to_string(), lo.to_string(), hi.to_string()],
                r.class.to_string(),
            )
        }
        "median_prediction" => {
            let cov = CovarianceModel::scaled_identity(d()?, a.sigma2)?;
            let n = a.n.unwrap_or(100);
            (
                "n,d,sigma2,delta_sq",
                vec![n.to_string(), d()?.to_string(), a.sigma2.to_string(), a.delta_sq.to_string()],
                predicted_mean_pairwise(&cov, a.delta_sq, n)?.to_string(),
            )
        }
        other => return Err(Error::InvalidArgument(format!("unknown formula `{other}`"))),
    };
    println!("formula,{header},value");
    println!("{},{},{value}", a.formula, params.join(","));
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs, command_line: &str) -> Result<i32> {
    let suites: Vec<Suite> = if a.suite == "all" { Suite::ALL.to_vec() } else { vec![a.suite.parse()?] };
    let mut rows = Vec::new();
    for s in &suites {
        rows.extend(run_suite(*s, a.draws, a.seed)?);
    }
    let csv = verify_csv(&rows);
    print!("{csv}");
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        let path = dir.join(format!("verify_{}.csv", a.suite));
        write_file(&path, &csv)?;
        let mut m = base_manifest(command_line, a.seed);
        m.set("suite", &a.suite).set("draws", a.draws).set("artifacts", path.display());
        write_file(&dir.join(format!("verify_{}.manifest", a.suite)), &m.render())?;
    }
    let failed = rows.iter().filter(|r| r.pass == Some(false)).count();
    if failed > 0 {
        eprintln!("{failed} check(s) failed");
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

fn cmd_sample(a: SampleArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.config)?;
    let spec = DistributionConfig::from_toml(&text)?.build()?;
    let text = format_matrix(&sample(&spec, a.n, a.seed)?);
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}
