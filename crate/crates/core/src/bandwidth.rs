//! Bandwidth rules for the Gaussian kernel and the shifted energy distance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CovarianceModel, Sample};
use crate::numeric;
use crate::statistics::PooledDistances;

/// How to pick the bandwidth `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `γ²` is the median pooled squared distance.
    Median,
    /// `γ²` is the mean pooled squared distance.
    Mean,
    /// `γ = c · d^p`.
    Power { p: f64, c: f64 },
    Fixed { gamma: f64 },
}

impl BandwidthRule {
    pub fn power(p: f64) -> Self {
        BandwidthRule::Power { p, c: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthRule::Power { p, c } if !(p.is_finite() && c.is_finite() && c > 0.0) => {
                Err(Error::InvalidArgument(format!("power rule needs finite p and c > 0, got p = {p}, c = {c}")))
            }
            BandwidthRule::Fixed { gamma } if !(gamma.is_finite() && gamma > 0.0) => {
                Err(Error::InvalidArgument(format!("fixed bandwidth must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the rule looks at the data (as opposed to only `d`).
    pub fn is_data_dependent(&self) -> bool {
        matches!(self, BandwidthRule::Median | BandwidthRule::Mean)
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BandwidthRule::Median => f.write_str("median"),
            BandwidthRule::Mean => f.write_str("mean"),
            BandwidthRule::Power { p, c } if c == 1.0 => write!(f, "pow:{p}"),
            BandwidthRule::Power { p, c } => write!(f, "pow:{p}:{c}"),
            BandwidthRule::Fixed { gamma } => write!(f, "fixed:{gamma}"),
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown bandwidth rule `{s}`"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        let rule = match s.trim() {
            "median" => BandwidthRule::Median,
            "mean" => BandwidthRule::Mean,
            t => {
                if let Some(rest) = t.strip_prefix("pow:") {
                    match rest.split_once(':') {
                        Some((p, c)) => BandwidthRule::Power { p: num(p)?, c: num(c)? },
                        None => BandwidthRule::power(num(rest)?),
                    }
                } else if let Some(g) = t.strip_prefix("fixed:") {
                    BandwidthRule::Fixed { gamma: num(g)? }
                } else {
                    return Err(bad());
                }
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// A data-driven squared bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredBandwidth {
    pub gamma_sq: f64,
    /// All pooled points coincide.
    pub degenerate: bool,
}

fn median_of(mut values: Vec<f64>) -> f64 {
    let len = values.len();
    let mid = len / 2;
    let (_, &mut hi, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if len % 2 == 1 {
        return hi;
    }
    let lo = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lo + hi)
}

/// Median of `‖S_i − S_j‖²` over unordered pairs of the pooled sample.
pub fn median_heuristic(x: &Sample, y: &Sample) -> Result<SquaredBandwidth> {
    Ok(median_from_distances(&PooledDistances::new(x, y)?))
}

/// [`median_heuristic`] on precomputed distances.
pub fn median_from_distances(d: &PooledDistances) -> SquaredBandwidth {
    let gamma_sq = median_of(d.upper_triangle());
    SquaredBandwidth { gamma_sq, degenerate: gamma_sq == 0.0 }
}

/// Mean of `‖S_i − S_j‖²` over unordered pairs of the pooled sample.
pub fn mean_heuristic(x: &Sample, y: &Sample) -> Result<SquaredBandwidth> {
    Ok(mean_from_distances(&PooledDistances::new(x, y)?))
}

pub fn mean_from_distances(d: &PooledDistances) -> SquaredBandwidth {
    let gamma_sq = numeric::mean(&d.upper_triangle());
    SquaredBandwidth { gamma_sq, degenerate: gamma_sq == 0.0 }
}

/// Population mean squared distance over pooled pairs for samples of size
/// `n` from `P` and `Q` with common covariance and `‖μ_P − μ_Q‖² = δ²`.
pub fn predicted_mean_pairwise(cov: &CovarianceModel, delta_sq: f64, n: usize) -> Result<f64> {
    if !(delta_sq.is_finite() && delta_sq >= 0.0) {
        return Err(Error::InvalidArgument(format!("δ² must be ≥ 0, got {delta_sq}")));
    }
    if n < 1 {
        return Err(Error::InvalidArgument("need n ≥ 1".into()));
    }
    let nf = n as f64;
    let pairs = nf * (2.0 * nf - 1.0);
    let within = nf * (nf - 1.0) / 2.0 / pairs;
    let across = nf * nf / pairs;
    let t = 2.0 * cov.trace_sigma();
    Ok(2.0 * within * t + across * (t + delta_sq))
}

/// Bandwidth `γ` for the given samples.
pub fn resolve(rule: &BandwidthRule, x: &Sample, y: &Sample) -> Result<f64> {
    rule.validate()?;
    if rule.is_data_dependent() {
        resolve_from_distances(rule, x.d(), &PooledDistances::new(x, y)?)
    } else {
        resolve_without_data(rule, x.d())
    }
}

/// [`resolve`] on precomputed distances; `d` is the dimension.
pub fn resolve_from_distances(rule: &BandwidthRule, d: usize, dist: &PooledDistances) -> Result<f64> {
    rule.validate()?;
    let b = match rule {
        BandwidthRule::Median => median_from_distances(dist),
        BandwidthRule::Mean => mean_from_distances(dist),
        _ => return resolve_without_data(rule, d),
    };
    if b.degenerate {
        Err(Error::DegenerateBandwidth)
    } else {
        Ok(b.gamma_sq.sqrt())
    }
}

/// `γ` for rules that depend only on the dimension.
pub fn resolve_without_data(rule: &BandwidthRule, d: usize) -> Result<f64> {
    match *rule {
        BandwidthRule::Power { p, c } => Ok(c * (d as f64).powf(p)),
        BandwidthRule::Fixed { gamma } => Ok(gamma),
        _ => Err(Error::InvalidArgument(format!("rule `{rule}` needs data"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample, DistributionSpec, NoiseFamily};
    use std::sync::Arc;

    fn s(rows: &[&[f64]]) -> Sample {
        Sample::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn median_hand_value() {
        // Pooled {0, 1, 2, 3}: squared distances {1, 4, 9, 1, 4, 1}.
        let x = s(&[&[0.0], &[1.0]]);
        let y = s(&[&[2.0], &[3.0]]);
        let m = median_heuristic(&x, &y).unwrap();
        assert_eq!(m.gamma_sq, 2.5);
        assert!(!m.degenerate);
        assert_eq!(median_of(vec![1.0, 4.0, 1.0]), 1.0);
        assert_eq!(mean_heuristic(&x, &y).unwrap().gamma_sq, 20.0 / 6.0);
    }

    #[test]
    fn degenerate_points() {
        let x = s(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let m = median_heuristic(&x, &x).unwrap();
        assert_eq!(m.gamma_sq, 0.0);
        assert!(m.degenerate);
        assert!(matches!(resolve(&BandwidthRule::Median, &x, &x), Err(Error::DegenerateBandwidth)));
    }

    #[test]
    fn rule_values() {
        let x = s(&[&[0.0; 100], &[1.0; 100]]);
        assert_eq!(resolve(&BandwidthRule::power(0.5), &x, &x).unwrap(), 10.0);
        let x = s(&[&[0.0; 16], &[1.0; 16]]);
        assert_eq!(resolve(&BandwidthRule::power(0.75), &x, &x).unwrap(), 8.0);
        assert_eq!(resolve(&BandwidthRule::Fixed { gamma: 3.2 }, &x, &x).unwrap(), 3.2);
    }

    #[test]
    fn rule_strings() {
        for r in ["median", "mean", "pow:0.5", "pow:0.75", "pow:0.5:2", "fixed:3.2"] {
            assert_eq!(r.parse::<BandwidthRule>().unwrap().to_string(), r);
        }
        for r in ["", "pow:", "pow:0.5:0", "fixed:-1", "medium"] {
            assert!(r.parse::<BandwidthRule>().is_err(), "{r}");
        }
    }

    #[test]
    fn predicted_mean_values() {
        let cov = CovarianceModel::identity(100).unwrap();
        assert_eq!(predicted_mean_pairwise(&cov, 0.0, 50).unwrap(), 200.0);
        let v = predicted_mean_pairwise(&cov, 1.0, 50).unwrap();
        assert!((v - (200.0 + 2500.0 / 4950.0)).abs() < 1e-12);
        assert!(predicted_mean_pairwise(&cov, -1.0, 50).is_err());
    }

    #[test]
    fn predicted_mean_matches_simulation() {
        let d = 200;
        let cov = Arc::new(CovarianceModel::identity(d).unwrap());
        let p = DistributionSpec::new(NoiseFamily::Gaussian, cov.clone(), vec![0.0; d]).unwrap();
        let q = DistributionSpec::new(NoiseFamily::Gaussian, cov.clone(), vec![0.5; d]).unwrap();
        // 224 pooled points give about 2.5·10⁴ pairs per draw; average four.
        let n = 112;
        let mut total = 0.0;
        for r in 0..4 {
            let x = sample(&p, n, 10 + r).unwrap();
            let y = sample(&q, n, 20 + r).unwrap();
            total += mean_heuristic(&x, &y).unwrap().gamma_sq;
        }
        let predicted = predicted_mean_pairwise(&cov, 50.0, n).unwrap();
        assert!((total / 4.0 / predicted - 1.0).abs() < 0.01);
    }
}
