//! Calibrated tests and seeded Monte-Carlo power estimation.
//!
//! Every repetition draws one data set and evaluates all requested
//! statistics on it, so statistics are compared on paired data. Seeds are
//! derived from `(master_seed, condition, repetition)` for the data and
//! additionally from a hash of the statistic label for calibration
//! resamples, so a statistic gets the same result whether it runs alone or
//! alongside others.

mod experiment;
mod spec;

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use experiment::{run_experiment, Axis, ExperimentConfig, ExperimentResult, Preset, DEFAULT_GRID};
pub use spec::{StatisticKind, StatisticSpec, TraceSource};

use crate::error::{Error, Result};
use crate::models::{sample, CovarianceModel, DistributionSpec, Sample};
use crate::rng::{derive_seed, label_hash, rng_from_seed};
use crate::statistics::{null_variance_estimate, oracle_null_variance, ComputeBudget, Kernel, PooledDistances, PooledGram};
use crate::theory::phi;

/// Smallest resample count accepted by permutation and Monte-Carlo null
/// calibration.
pub const MIN_RESAMPLES: usize = 100;

/// Calibration method without its data dependencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalibrationKind {
    Permutation(usize),
    GaussianPlugin,
    OracleTheory,
    McNull(usize),
}

impl CalibrationKind {
    /// Attach the population covariance needed by [`CalibrationKind::OracleTheory`].
    pub fn bind(self, cov: Option<Arc<CovarianceModel>>) -> Result<Calibration> {
        let cal = match self {
            CalibrationKind::Permutation(k) => Calibration::Permutation(k),
            CalibrationKind::GaussianPlugin => Calibration::GaussianPlugin,
            CalibrationKind::McNull(k) => Calibration::McNull(k),
            CalibrationKind::OracleTheory => Calibration::OracleTheory(cov.ok_or_else(|| {
                Error::InvalidArgument("oracle calibration needs the population covariance".into())
            })?),
        };
        cal.validate()?;
        Ok(cal)
    }
}

impl fmt::Display for CalibrationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalibrationKind::Permutation(k) => write!(f, "permutation:{k}"),
            CalibrationKind::GaussianPlugin => f.write_str("gaussian_plugin"),
            CalibrationKind::OracleTheory => f.write_str("oracle_theory"),
            CalibrationKind::McNull(k) => write!(f, "mc_null:{k}"),
        }
    }
}

impl FromStr for CalibrationKind {
    type Err = Error;

    /// `permutation[:K]`, `gaussian_plugin`, `oracle_theory` or `mc_null[:K]`;
    /// `K` defaults to 199.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown calibration `{s}`"));
        let (head, k) = match s.split_once(':') {
            Some((h, k)) => (h, Some(k.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        let kind = match (head, k) {
            ("permutation", k) => CalibrationKind::Permutation(k.unwrap_or(199)),
            ("mc_null", k) => CalibrationKind::McNull(k.unwrap_or(199)),
            ("gaussian_plugin", None) => CalibrationKind::GaussianPlugin,
            ("oracle_theory", None) => CalibrationKind::OracleTheory,
            _ => return Err(bad()),
        };
        if let CalibrationKind::Permutation(k) | CalibrationKind::McNull(k) = kind {
            check_resamples(k)?;
        }
        Ok(kind)
    }
}

fn check_resamples(k: usize) -> Result<()> {
    if k < MIN_RESAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_RESAMPLES} resamples, got {k}")));
    }
    Ok(())
}

/// How a test turns a statistic into a p-value.
#[derive(Debug, Clone)]
pub enum Calibration {
    /// `K` random relabellings of the pooled sample.
    Permutation(usize),
    /// One-sided z-test with the plug-in null variance.
    GaussianPlugin,
    /// One-sided z-test with the null variance implied by the covariance of
    /// the observations.
    OracleTheory(Arc<CovarianceModel>),
    /// `K` fresh null data sets from a known generator.
    McNull(usize),
}

impl Calibration {
    pub fn kind(&self) -> CalibrationKind {
        match self {
            Calibration::Permutation(k) => CalibrationKind::Permutation(*k),
            Calibration::GaussianPlugin => CalibrationKind::GaussianPlugin,
            Calibration::OracleTheory(_) => CalibrationKind::OracleTheory,
            Calibration::McNull(k) => CalibrationKind::McNull(*k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Calibration::Permutation(k) | Calibration::McNull(k) => check_resamples(*k),
            _ => Ok(()),
        }
    }
}

/// Outcome of one calibrated test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic_value: f64,
    pub kernel: Kernel,
    /// Null variance used by the z-test paths.
    pub variance_estimate: Option<f64>,
    /// `statistic_value / √variance_estimate` on the z-test paths.
    pub z_score: Option<f64>,
    pub p_value: f64,
    pub reject: bool,
    pub calibration: CalibrationKind,
    pub alpha: f64,
}

/// Draws one null data set `(X, Y)` from a seed.
pub type NullGenerator<'a> = &'a (dyn Fn(u64) -> Result<(Sample, Sample)> + Sync);

/// Pooled sample with lazily computed squared distances, shared by all
/// statistics evaluated on it.
struct Pooled<'a> {
    x: &'a Sample,
    y: &'a Sample,
    dist: OnceCell<PooledDistances>,
}

impl<'a> Pooled<'a> {
    fn new(x: &'a Sample, y: &'a Sample) -> Result<Self> {
        if x.n() != y.n() {
            return Err(Error::SampleSizeMismatch { x: x.n(), y: y.n() });
        }
        if x.d() != y.d() {
            return Err(Error::DimensionMismatch { expected: x.d(), got: y.d() });
        }
        Ok(Pooled { x, y, dist: OnceCell::new() })
    }

    fn distances(&self) -> Result<&PooledDistances> {
        if let Some(d) = self.dist.get() {
            return Ok(d);
        }
        let d = PooledDistances::new(self.x, self.y)?;
        Ok(self.dist.get_or_init(|| d))
    }

    fn kernel(&self, spec: &StatisticSpec) -> Result<Kernel> {
        let dist = if spec.needs_distances() { Some(self.distances()?) } else { None };
        spec.kernel(self.x.d(), dist)
    }

    fn gram(&self, kernel: &Kernel) -> Result<PooledGram> {
        match kernel {
            Kernel::Linear => PooledGram::new(self.x, self.y, kernel, None),
            _ => PooledGram::new(self.x, self.y, kernel, Some(self.distances()?)),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("α must lie in (0, 1), got {alpha}")))
    }
}

/// Test `P = Q` on one pair of samples.
pub fn run_test(
    x: &Sample,
    y: &Sample,
    spec: &StatisticSpec,
    cal: &Calibration,
    alpha: f64,
    seed: u64,
) -> Result<TestResult> {
    run_test_with_null(x, y, spec, cal, alpha, seed, None)
}

/// [`run_test`] with a null generator, required by [`Calibration::McNull`].
pub fn run_test_with_null(
    x: &Sample,
    y: &Sample,
    spec: &StatisticSpec,
    cal: &Calibration,
    alpha: f64,
    seed: u64,
    null: Option<NullGenerator>,
) -> Result<TestResult> {
    evaluate(&Pooled::new(x, y)?, spec, cal, alpha, seed, null)
}

fn z_test(value: f64, var: f64) -> (f64, f64) {
    let z = if var > 0.0 {
        value / var.sqrt()
    } else if value > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (z, phi(-z))
}

fn evaluate(
    pooled: &Pooled,
    spec: &StatisticSpec,
    cal: &Calibration,
    alpha: f64,
    seed: u64,
    null: Option<NullGenerator>,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    cal.validate()?;
    let n = pooled.x.n();
    let budget = spec.budget;
    budget.blocks(n)?;
    let kernel = pooled.kernel(spec)?;
    let gram = pooled.gram(&kernel)?;
    let mut labels = gram.identity_labels();
    let observed = gram.statistic(&labels, budget)?;
    let (variance, z, p_value) = match cal {
        Calibration::Permutation(k) => {
            let mut rng = rng_from_seed(seed);
            let mut exceed = 0usize;
            for _ in 0..*k {
                labels.shuffle(&mut rng);
                if gram.statistic(&labels, budget)? >= observed {
                    exceed += 1;
                }
            }
            (None, None, (1 + exceed) as f64 / (k + 1) as f64)
        }
        Calibration::GaussianPlugin => {
            let values = match budget {
                ComputeBudget::Quadratic => gram.pair_values(&labels)?,
                _ => gram.block_values(&labels, budget)?,
            };
            let var = null_variance_estimate(&values, n, budget)?;
            let (z, p) = z_test(observed, var);
            (Some(var), Some(z), p)
        }
        Calibration::OracleTheory(cov) => {
            if cov.dim() != pooled.x.d() {
                return Err(Error::DimensionMismatch { expected: pooled.x.d(), got: cov.dim() });
            }
            let var = oracle_null_variance(&kernel, cov, n, budget)?;
            let (z, p) = z_test(observed, var);
            (Some(var), Some(z), p)
        }
        Calibration::McNull(k) => {
            let generate = null.ok_or_else(|| {
                Error::InvalidArgument("Monte-Carlo null calibration needs a null generator".into())
            })?;
            let mut exceed = 0usize;
            for j in 0..*k {
                let (nx, ny) = generate(derive_seed(seed, &[j as u64]))?;
                let np = Pooled::new(&nx, &ny)?;
                let nk = np.kernel(spec)?;
                if np.gram(&nk)?.statistic(&labels, budget)? >= observed {
                    exceed += 1;
                }
            }
            (None, None, (1 + exceed) as f64 / (k + 1) as f64)
        }
    };
    Ok(TestResult {
        statistic_value: observed,
        kernel,
        variance_estimate: variance,
        z_score: z,
        p_value,
        reject: p_value <= alpha,
        calibration: cal.kind(),
        alpha,
    })
}

/// One point of a power curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub statistic: String,
    pub d: usize,
    pub n: usize,
    pub bandwidth_rule: String,
    pub budget: ComputeBudget,
    pub calibration: CalibrationKind,
    pub alpha: f64,
    pub reps: usize,
    pub rejections: usize,
    pub power: f64,
    /// `√(p̂(1 − p̂)/reps)`.
    pub stderr: f64,
    pub master_seed: u64,
}

/// Power of one statistic over a grid of conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCurve {
    pub statistic: String,
    pub display_name: String,
    pub rows: Vec<PowerRow>,
}

/// A simulated condition: populations, sample size and position in a grid.
#[derive(Debug, Clone)]
pub struct Condition {
    pub index: u64,
    pub p: DistributionSpec,
    pub q: DistributionSpec,
    pub n: usize,
}

impl Condition {
    fn data_seed(&self, master: u64, rep: usize, which: u64) -> u64 {
        derive_seed(master, &[self.index, rep as u64, which])
    }

    fn test_seed(&self, master: u64, rep: usize, spec: &StatisticSpec) -> u64 {
        derive_seed(master, &[self.index, rep as u64, 2, label_hash(&spec.to_string())])
    }
}

/// Run every statistic on `reps` paired data sets. Returns one vector of
/// results per repetition, in the order of `specs`.
pub fn simulate(
    cond: &Condition,
    specs: &[StatisticSpec],
    cal: &Calibration,
    alpha: f64,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<Vec<TestResult>>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one repetition".into()));
    }
    if cond.p.dim() != cond.q.dim() {
        return Err(Error::DimensionMismatch { expected: cond.p.dim(), got: cond.q.dim() });
    }
    check_alpha(alpha)?;
    let n = cond.n;
    let null_p = &cond.p;
    let generator = move |s: u64| -> Result<(Sample, Sample)> {
        Ok((sample(null_p, n, derive_seed(s, &[0]))?, sample(null_p, n, derive_seed(s, &[1]))?))
    };
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let x = sample(&cond.p, n, cond.data_seed(master_seed, r, 0))?;
            let y = sample(&cond.q, n, cond.data_seed(master_seed, r, 1))?;
            let pooled = Pooled::new(&x, &y)?;
            specs
                .iter()
                .map(|s| evaluate(&pooled, s, cal, alpha, cond.test_seed(master_seed, r, s), Some(&generator)))
                .collect()
        })
        .collect()
}

fn power_row(
    spec: &StatisticSpec,
    cond: &Condition,
    cal: &Calibration,
    alpha: f64,
    rejections: usize,
    reps: usize,
    master_seed: u64,
) -> PowerRow {
    let power = rejections as f64 / reps as f64;
    PowerRow {
        statistic: spec.to_string(),
        d: cond.p.dim(),
        n: cond.n,
        bandwidth_rule: spec.bandwidth_label(),
        budget: spec.budget,
        calibration: cal.kind(),
        alpha,
        reps,
        rejections,
        power,
        stderr: (power * (1.0 - power) / reps as f64).sqrt(),
        master_seed,
    }
}

/// Rejection rates of several statistics on paired data.
pub fn estimate_power_multi(
    cond: &Condition,
    specs: &[StatisticSpec],
    cal: &Calibration,
    alpha: f64,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<PowerRow>> {
    let results = simulate(cond, specs, cal, alpha, reps, master_seed)?;
    Ok(specs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let rejections = results.iter().filter(|rep| rep[k].reject).count();
            power_row(s, cond, cal, alpha, rejections, reps, master_seed)
        })
        .collect())
}

/// Rejection rate of one statistic over `reps` data sets of size `n` from
/// `p` and `q`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_power(
    p: &DistributionSpec,
    q: &DistributionSpec,
    n: usize,
    spec: &StatisticSpec,
    cal: &Calibration,
    alpha: f64,
    reps: usize,
    master_seed: u64,
) -> Result<PowerRow> {
    let cond = Condition { index: 0, p: p.clone(), q: q.clone(), n };
    Ok(estimate_power_multi(&cond, std::slice::from_ref(spec), cal, alpha, reps, master_seed)?.remove(0))
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `values` and the standard normal.
pub fn ks_distance_to_normal(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = phi(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
