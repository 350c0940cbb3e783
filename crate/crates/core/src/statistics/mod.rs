//! Quadratic, block and linear-time two-sample U-statistics.
//!
//! Every statistic averages a four-argument kernel over index pairs,
//!
//! ```text
//! h(x, x', y, y') = k(x, x') + k(y, y') − k(x, y') − k(x', y)
//! ```
//!
//! where `k` is a positive-definite kernel or the negative of a distance
//! (which turns `h_κ` into `h_ρ`). The linear kernel gives `U_CQ`.

mod gram;

use std::fmt;
use std::str::FromStr;

pub use gram::{PooledDistances, PooledGram};

use crate::error::{Error, Result};
use crate::models::{CovarianceModel, Sample};
use crate::numeric::{self, CompensatedSum};

/// Pairwise building block of a statistic: a kernel `k(a, b)` or a
/// distance `ρ(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(−‖a − b‖² / γ²)`.
    Gaussian { gamma: f64 },
    /// `‖a − b‖`.
    Euclidean,
    /// `√(γ² − 2 Tr(Σ) + ‖a − b‖²)`.
    ShiftedEuclidean { gamma_sq: f64, trace_sigma: f64 },
    /// `aᵀ b`.
    Linear,
}

impl Kernel {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        let k = Kernel::Gaussian { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn shifted_euclidean(gamma_sq: f64, trace_sigma: f64) -> Result<Self> {
        let k = Kernel::ShiftedEuclidean { gamma_sq, trace_sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Gaussian { gamma } if !(gamma.is_finite() && gamma > 0.0) => Err(
                Error::InvalidArgument(format!("Gaussian bandwidth must be positive, got {gamma}")),
            ),
            Kernel::ShiftedEuclidean { gamma_sq, trace_sigma } => {
                if !(gamma_sq.is_finite() && trace_sigma.is_finite() && trace_sigma >= 0.0) {
                    return Err(Error::InvalidArgument(
                        "shifted Euclidean needs finite γ² and Tr(Σ) ≥ 0".into(),
                    ));
                }
                if gamma_sq < 2.0 * trace_sigma {
                    return Err(Error::InvalidArgument(format!(
                        "shifted Euclidean needs γ² ≥ 2 Tr(Σ), got γ² = {gamma_sq}, Tr(Σ) = {trace_sigma}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether `k` is a distance (enters `h` with flipped sign).
    pub fn is_distance(&self) -> bool {
        matches!(self, Kernel::Euclidean | Kernel::ShiftedEuclidean { .. })
    }

    /// `k(a, b)` for kernels and `−ρ(a, b)` for distances.
    #[inline]
    pub fn similarity(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => numeric::dot(a, b),
            _ => self.similarity_from_sq_dist(numeric::sq_dist(a, b)),
        }
    }

    /// Same as [`similarity`](Self::similarity) from `‖a − b‖²`.
    ///
    /// # Panics
    /// For [`Kernel::Linear`], which is not a function of the distance.
    #[inline]
    pub fn similarity_from_sq_dist(&self, s: f64) -> f64 {
        match *self {
            Kernel::Gaussian { gamma } => (-s / (gamma * gamma)).exp(),
            Kernel::Euclidean => -s.sqrt(),
            // Rounding can push the argument slightly below zero.
            Kernel::ShiftedEuclidean { gamma_sq, trace_sigma } => {
                -(gamma_sq - 2.0 * trace_sigma + s).max(0.0).sqrt()
            }
            Kernel::Linear => panic!("linear kernel is not a function of the distance"),
        }
    }

    /// The four-argument kernel `h(x, x', y, y')`.
    #[inline]
    pub fn h(&self, x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> f64 {
        (self.similarity(x, xp) + self.similarity(y, yp))
            - (self.similarity(x, yp) + self.similarity(xp, y))
    }

    /// Leading Taylor coefficient `c` in `statistic ≈ c · U_CQ`, given the
    /// trace of the observation covariance.
    ///
    /// * Gaussian: `2 e^{−τ} / γ²` with `τ = 2 Tr(Σ)/γ²`.
    /// * Shifted Euclidean: `2 f'(τ') / √(γ² − 2Tr(Σ))` with
    ///   `f(a) = √(1 + a)` and `τ' = 2Tr(Σ)/(γ² − 2Tr(Σ))`, which is `1/γ`.
    /// * Euclidean: the `γ² = 2 Tr(Σ)` member of that family, `1/√(2 Tr(Σ))`.
    pub fn taylor_coefficient(&self, trace_sigma: f64) -> Result<f64> {
        self.validate()?;
        if !(trace_sigma.is_finite() && trace_sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Tr(Σ) must be positive, got {trace_sigma}"
            )));
        }
        Ok(match *self {
            Kernel::Linear => 1.0,
            Kernel::Gaussian { gamma } => {
                let g2 = gamma * gamma;
                2.0 * (-2.0 * trace_sigma / g2).exp() / g2
            }
            Kernel::Euclidean => 1.0 / (2.0 * trace_sigma).sqrt(),
            Kernel::ShiftedEuclidean { gamma_sq, .. } => {
                let offset = gamma_sq - 2.0 * trace_sigma;
                if offset <= 0.0 {
                    1.0 / gamma_sq.sqrt()
                } else {
                    let tau = 2.0 * trace_sigma / offset;
                    2.0 * (0.5 / (1.0 + tau).sqrt()) / offset.sqrt()
                }
            }
        })
    }

    pub fn label(&self) -> String {
        match *self {
            Kernel::Gaussian { gamma } => format!("gaussian({gamma})"),
            Kernel::Euclidean => "euclidean".into(),
            Kernel::ShiftedEuclidean { gamma_sq, trace_sigma } => {
                format!("shifted_euclidean({gamma_sq},{trace_sigma})")
            }
            Kernel::Linear => "linear".into(),
        }
    }
}

/// How much of the pair set a statistic averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComputeBudget {
    /// All `n(n−1)` ordered pairs.
    Quadratic,
    /// `B` contiguous blocks of `n/B` points each.
    Block(usize),
    /// Disjoint consecutive pairs, i.e. `n/2` blocks of two.
    Linear,
}

impl ComputeBudget {
    /// Number of blocks used on a sample of size `n`, validating divisibility.
    pub fn blocks(&self, n: usize) -> Result<usize> {
        match *self {
            ComputeBudget::Quadratic => {
                if n < 2 {
                    return Err(Error::InvalidArgument(format!("need n ≥ 2, got {n}")));
                }
                Ok(1)
            }
            ComputeBudget::Block(b) => {
                if b == 0 {
                    return Err(Error::InvalidArgument("block count must be ≥ 1".into()));
                }
                if !n.is_multiple_of(b) {
                    return Err(Error::InvalidArgument(format!(
                        "{b} blocks do not divide n = {n}; truncate the sample first"
                    )));
                }
                if n / b < 2 {
                    return Err(Error::InvalidArgument(format!(
                        "blocks of size {} are too small (need ≥ 2)",
                        n / b
                    )));
                }
                Ok(b)
            }
            ComputeBudget::Linear => {
                if !n.is_multiple_of(2) || n < 4 {
                    return Err(Error::InvalidArgument(format!(
                        "linear-time statistic needs even n ≥ 4, got {n}"
                    )));
                }
                Ok(n / 2)
            }
        }
    }
}

impl fmt::Display for ComputeBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComputeBudget::Quadratic => f.write_str("quadratic"),
            ComputeBudget::Block(b) => write!(f, "block:{b}"),
            ComputeBudget::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for ComputeBudget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ComputeBudget::Quadratic),
            "linear" => Ok(ComputeBudget::Linear),
            _ => s
                .strip_prefix("block:")
                .and_then(|b| b.parse().ok())
                .map(ComputeBudget::Block)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown budget `{s}`"))),
        }
    }
}

/// A computed statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticValue {
    pub value: f64,
    pub kernel: Kernel,
    pub budget: ComputeBudget,
    pub n: usize,
    /// Per-block values for block and linear budgets.
    pub per_block_values: Option<Vec<f64>>,
}

fn check_pair(x: &Sample, y: &Sample) -> Result<()> {
    if x.n() != y.n() {
        return Err(Error::SampleSizeMismatch { x: x.n(), y: y.n() });
    }
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch { expected: x.d(), got: y.d() });
    }
    Ok(())
}

/// `xᵀx' + yᵀy' − xᵀy' − x'ᵀy`.
pub fn h_cq(x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> Result<f64> {
    check_dims(&[x, xp, y, yp])?;
    Ok(Kernel::Linear.h(x, xp, y, yp))
}

/// `‖x−x'‖² + ‖y−y'‖² − ‖x−y'‖² − ‖x'−y‖²`, the first-order Taylor kernel.
pub fn h2(x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> Result<f64> {
    check_dims(&[x, xp, y, yp])?;
    Ok((numeric::sq_dist(x, xp) + numeric::sq_dist(y, yp))
        - (numeric::sq_dist(x, yp) + numeric::sq_dist(xp, y)))
}

/// Same as [`h2`] with squared distances squared: the second-order kernel.
pub fn h4(x: &[f64], xp: &[f64], y: &[f64], yp: &[f64]) -> Result<f64> {
    check_dims(&[x, xp, y, yp])?;
    let sq = |a: &[f64], b: &[f64]| numeric::sq_dist(a, b).powi(2);
    Ok((sq(x, xp) + sq(y, yp)) - (sq(x, yp) + sq(xp, y)))
}

fn check_dims(vs: &[&[f64]]) -> Result<()> {
    let d = vs[0].len();
    match vs.iter().find(|v| v.len() != d) {
        Some(v) => Err(Error::DimensionMismatch { expected: d, got: v.len() }),
        None => Ok(()),
    }
}

/// Sum of `h` over unordered pairs `i < j` of rows `start..end`, optionally
/// recording each term.
fn pair_sum(
    x: &Sample,
    y: &Sample,
    kernel: &Kernel,
    start: usize,
    end: usize,
    mut record: Option<&mut Vec<f64>>,
) -> f64 {
    let mut acc = CompensatedSum::new();
    for i in start..end {
        let (xi, yi) = (x.row(i), y.row(i));
        for j in i + 1..end {
            let h = kernel.h(xi, x.row(j), yi, y.row(j));
            acc.add(h);
            if let Some(r) = record.as_deref_mut() {
                r.push(h);
            }
        }
    }
    acc.value()
}

fn block_value(x: &Sample, y: &Sample, kernel: &Kernel, start: usize, end: usize) -> f64 {
    let m = (end - start) as f64;
    2.0 * pair_sum(x, y, kernel, start, end, None) / (m * (m - 1.0))
}

/// Quadratic-time statistic: the mean of `h(X_i, X_j, Y_i, Y_j)` over all
/// ordered pairs `i ≠ j`.
pub fn u_statistic(x: &Sample, y: &Sample, kernel: &Kernel) -> Result<StatisticValue> {
    check_pair(x, y)?;
    kernel.validate()?;
    let n = x.n();
    Ok(StatisticValue {
        value: block_value(x, y, kernel, 0, n),
        kernel: *kernel,
        budget: ComputeBudget::Quadratic,
        n,
        per_block_values: None,
    })
}

/// `h` over every unordered pair, in row-major `(i, j > i)` order.
pub fn pair_values(x: &Sample, y: &Sample, kernel: &Kernel) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    kernel.validate()?;
    let n = x.n();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    pair_sum(x, y, kernel, 0, n, Some(&mut out));
    Ok(out)
}

fn blocked(x: &Sample, y: &Sample, kernel: &Kernel, blocks: usize) -> Vec<f64> {
    let m = x.n() / blocks;
    (0..blocks)
        .map(|b| block_value(x, y, kernel, b * m, (b + 1) * m))
        .collect()
}

/// Mean of the quadratic statistic over `blocks` contiguous blocks.
pub fn block_statistic(
    x: &Sample,
    y: &Sample,
    kernel: &Kernel,
    blocks: usize,
) -> Result<StatisticValue> {
    check_pair(x, y)?;
    kernel.validate()?;
    let budget = ComputeBudget::Block(blocks);
    budget.blocks(x.n())?;
    let per_block = blocked(x, y, kernel, blocks);
    Ok(StatisticValue {
        value: numeric::mean(&per_block),
        kernel: *kernel,
        budget,
        n: x.n(),
        per_block_values: Some(per_block),
    })
}

/// Mean of `h` over the disjoint pairs `(2b, 2b+1)`.
pub fn linear_statistic(x: &Sample, y: &Sample, kernel: &Kernel) -> Result<StatisticValue> {
    check_pair(x, y)?;
    kernel.validate()?;
    let blocks = ComputeBudget::Linear.blocks(x.n())?;
    let per_block = blocked(x, y, kernel, blocks);
    Ok(StatisticValue {
        value: numeric::mean(&per_block),
        kernel: *kernel,
        budget: ComputeBudget::Linear,
        n: x.n(),
        per_block_values: Some(per_block),
    })
}

/// Dispatch on the budget.
pub fn statistic(
    x: &Sample,
    y: &Sample,
    kernel: &Kernel,
    budget: ComputeBudget,
) -> Result<StatisticValue> {
    match budget {
        ComputeBudget::Quadratic => u_statistic(x, y, kernel),
        ComputeBudget::Block(b) => block_statistic(x, y, kernel, b),
        ComputeBudget::Linear => linear_statistic(x, y, kernel),
    }
}

/// Plug-in null variance of a statistic.
///
/// For the quadratic budget `values` are the per-pair `h` values and the
/// estimate is `2/(n(n−1)) · mean(h²)`, the exact variance of a degenerate
/// U-statistic with the population second moment replaced by its average.
/// For block and linear budgets `values` are the per-block statistics and
/// the estimate is their sample variance over the block count. Approximate
/// either way; permutation calibration is the exact alternative.
pub fn null_variance_estimate(values: &[f64], n: usize, budget: ComputeBudget) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values to estimate a variance from".into()));
    }
    match budget {
        ComputeBudget::Quadratic => {
            if n < 2 {
                return Err(Error::InvalidArgument(format!("need n ≥ 2, got {n}")));
            }
            let sq: Vec<f64> = values.iter().map(|h| h * h).collect();
            let n = n as f64;
            Ok(2.0 / (n * (n - 1.0)) * numeric::mean(&sq))
        }
        ComputeBudget::Block(_) | ComputeBudget::Linear => {
            if values.len() < 2 {
                return Err(Error::InvalidArgument(
                    "need at least 2 blocks to estimate a variance".into(),
                ));
            }
            Ok(numeric::sample_variance(values) / values.len() as f64)
        }
    }
}

/// Null variance from the population covariance of the observations.
///
/// The quadratic budget uses `c² · 8 Tr(Σ²)/n²` with `c` the kernel's
/// [Taylor coefficient](Kernel::taylor_coefficient). Block budgets divide
/// the per-block variance `c² · 8 Tr(Σ²)/(m(m−1))` (block size `m`) by the
/// block count; for blocks of two the `m²` form would halve the variance.
pub fn oracle_null_variance(
    kernel: &Kernel,
    cov: &CovarianceModel,
    n: usize,
    budget: ComputeBudget,
) -> Result<f64> {
    let c = kernel.taylor_coefficient(cov.trace_sigma())?;
    let blocks = budget.blocks(n)?;
    let t2 = cov.trace_sigma_sq();
    let base = match budget {
        ComputeBudget::Quadratic => 8.0 * t2 / (n as f64 * n as f64),
        ComputeBudget::Block(_) | ComputeBudget::Linear => {
            let m = (n / blocks) as f64;
            8.0 * t2 / (m * (m - 1.0)) / blocks as f64
        }
    };
    Ok(c * c * base)
}
