//! Built-in experiment presets.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::{estimate_power_multi, CalibrationKind, Condition, PowerCurve, StatisticSpec};
use crate::error::{Error, Result};
use crate::models::{
    make_experiment1_pair, make_experiment2_pair, make_experiment4_pair, DistributionSpec, NoiseFamily,
};
use crate::rng::derive_seed;

/// Dimensions (or sample sizes for the fixed-dimension presets) swept by default.
pub const DEFAULT_GRID: [usize; 5] = [40, 80, 120, 160, 200];

/// Dimension held fixed by the `exp5` presets.
pub const FIXED_DIMENSION: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Exp1Normal,
    Exp1Laplace,
    Exp1Beta,
    Exp1Mixture,
    Exp2,
    Exp4,
    Exp5Diag,
    Exp5Nondiag,
}

/// What the grid varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// `d` varies and `n = d`.
    Dimension,
    /// `n` varies at fixed `d`.
    SampleSize,
}

impl Axis {
    pub fn column(self) -> &'static str {
        match self {
            Axis::Dimension => "d",
            Axis::SampleSize => "n",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::Dimension => "dimension",
            Axis::SampleSize => "sample size",
        }
    }
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Exp1Normal,
        Preset::Exp1Laplace,
        Preset::Exp1Beta,
        Preset::Exp1Mixture,
        Preset::Exp2,
        Preset::Exp4,
        Preset::Exp5Diag,
        Preset::Exp5Nondiag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Exp1Normal => "exp1_normal",
            Preset::Exp1Laplace => "exp1_laplace",
            Preset::Exp1Beta => "exp1_beta",
            Preset::Exp1Mixture => "exp1_mixture",
            Preset::Exp2 => "exp2",
            Preset::Exp4 => "exp4",
            Preset::Exp5Diag => "exp5_diag",
            Preset::Exp5Nondiag => "exp5_nondiag",
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Preset::Exp5Diag | Preset::Exp5Nondiag => Axis::SampleSize,
            _ => Axis::Dimension,
        }
    }

    /// Populations and sample size at grid value `value`.
    pub fn condition(self, value: usize, index: u64, master_seed: u64) -> Result<Condition> {
        let (d, n) = match self.axis() {
            Axis::Dimension => (value, value),
            Axis::SampleSize => (FIXED_DIMENSION, value),
        };
        // The random rotation depends on d and the master seed only.
        let cov_seed = derive_seed(master_seed, &[u64::MAX, d as u64]);
        let (p, q): (DistributionSpec, DistributionSpec) = match self {
            Preset::Exp1Normal | Preset::Exp5Diag => make_experiment1_pair(NoiseFamily::Gaussian, d)?,
            Preset::Exp1Laplace => make_experiment1_pair(NoiseFamily::LaplaceUnit, d)?,
            Preset::Exp1Beta => make_experiment1_pair(NoiseFamily::UniformBeta11, d)?,
            Preset::Exp1Mixture => make_experiment1_pair(NoiseFamily::GaussianScaleMixture, d)?,
            Preset::Exp2 | Preset::Exp5Nondiag => make_experiment2_pair(d, cov_seed)?,
            Preset::Exp4 => make_experiment4_pair(d, cov_seed)?,
        };
        Ok(Condition { index, p, q, n })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown preset `{s}`")))
    }
}

/// Settings of one preset run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub alpha: f64,
    pub calibration: CalibrationKind,
    pub statistics: Vec<StatisticSpec>,
}

impl ExperimentConfig {
    /// Default grid and legend, 100 repetitions, permutation(199), α = 0.05.
    pub fn new(preset: Preset, master_seed: u64) -> Self {
        ExperimentConfig {
            preset,
            grid: DEFAULT_GRID.to_vec(),
            reps: 100,
            master_seed,
            alpha: 0.05,
            calibration: CalibrationKind::Permutation(199),
            statistics: StatisticSpec::legend(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// One curve per statistic, in legend order.
    pub curves: Vec<PowerCurve>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if cfg.grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if cfg.statistics.is_empty() {
        return Err(Error::InvalidArgument("no statistics requested".into()));
    }
    let mut curves: Vec<PowerCurve> = cfg
        .statistics
        .iter()
        .map(|s| PowerCurve { statistic: s.to_string(), display_name: s.display_name(), rows: Vec::new() })
        .collect();
    for (i, &value) in cfg.grid.iter().enumerate() {
        let cond = cfg.preset.condition(value, i as u64, cfg.master_seed)?;
        let cov = Arc::new(cond.p.effective_covariance()?);
        let cal = cfg.calibration.bind(Some(cov))?;
        let rows = estimate_power_multi(&cond, &cfg.statistics, &cal, cfg.alpha, cfg.reps, cfg.master_seed)?;
        for (curve, row) in curves.iter_mut().zip(rows) {
            curve.rows.push(row);
        }
    }
    Ok(ExperimentResult { config: cfg.clone(), curves })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("exp3".parse::<Preset>().is_err());
    }

    #[test]
    fn exp5_holds_dimension() {
        let c = Preset::Exp5Nondiag.condition(120, 0, 1).unwrap();
        assert_eq!((c.p.dim(), c.n), (40, 120));
        let c = Preset::Exp2.condition(80, 0, 1).unwrap();
        assert_eq!((c.p.dim(), c.n), (80, 80));
    }

    #[test]
    fn small_run_shape() {
        let mut cfg = ExperimentConfig::new(Preset::Exp1Normal, 5);
        cfg.grid = vec![8, 12];
        cfg.reps = 4;
        cfg.calibration = CalibrationKind::Permutation(100);
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.curves.len(), 9);
        assert!(r.curves.iter().all(|c| c.rows.len() == 2));
        assert_eq!(r.curves[4].rows[1].d, 12);
        assert_eq!(r, run_experiment(&cfg).unwrap());
    }
}
