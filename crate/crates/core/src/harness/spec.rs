//! Named statistics: kernel family, bandwidth rule and compute budget.

use std::fmt;
use std::str::FromStr;

use crate::bandwidth::{mean_from_distances, resolve_from_distances, resolve_without_data, BandwidthRule};
use crate::error::{Error, Result};
use crate::statistics::{ComputeBudget, Kernel, PooledDistances};

/// Where the shifted energy distance gets `Tr(Σ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceSource {
    /// Half the mean pooled squared distance, i.e. the trace of the pooled
    /// sample covariance.
    Pooled,
    Oracle(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatisticKind {
    /// Linear kernel, `U_CQ`.
    Cq,
    GaussianMmd(BandwidthRule),
    /// Plain Euclidean energy distance.
    Energy,
    ShiftedEnergy { bandwidth: BandwidthRule, trace: TraceSource },
}

/// A statistic as it appears in experiment output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatisticSpec {
    pub kind: StatisticKind,
    pub budget: ComputeBudget,
}

impl StatisticSpec {
    pub fn new(kind: StatisticKind, budget: ComputeBudget) -> Self {
        StatisticSpec { kind, budget }
    }

    /// The nine statistics plotted by every experiment preset.
    pub fn legend() -> Vec<StatisticSpec> {
        use ComputeBudget::{Linear, Quadratic};
        use StatisticKind::*;
        let (p5, med, p75) = (BandwidthRule::power(0.5), BandwidthRule::Median, BandwidthRule::power(0.75));
        vec![
            StatisticSpec::new(GaussianMmd(p5), Quadratic),
            StatisticSpec::new(GaussianMmd(med), Quadratic),
            StatisticSpec::new(GaussianMmd(p75), Quadratic),
            StatisticSpec::new(Energy, Quadratic),
            StatisticSpec::new(Cq, Quadratic),
            StatisticSpec::new(GaussianMmd(p5), Linear),
            StatisticSpec::new(GaussianMmd(med), Linear),
            StatisticSpec::new(GaussianMmd(p75), Linear),
            StatisticSpec::new(Cq, Linear),
        ]
    }

    /// Rule used for the bandwidth, if any.
    pub fn bandwidth_rule(&self) -> Option<BandwidthRule> {
        match self.kind {
            StatisticKind::GaussianMmd(r) | StatisticKind::ShiftedEnergy { bandwidth: r, .. } => Some(r),
            _ => None,
        }
    }

    /// `bandwidth_rule` column value.
    pub fn bandwidth_label(&self) -> String {
        self.bandwidth_rule().map_or_else(|| "none".into(), |r| r.to_string())
    }

    /// Whether choosing the kernel looks at pooled squared distances.
    pub fn needs_distances(&self) -> bool {
        match self.kind {
            StatisticKind::Cq | StatisticKind::Energy => false,
            StatisticKind::GaussianMmd(r) => r.is_data_dependent(),
            StatisticKind::ShiftedEnergy { .. } => true,
        }
    }

    /// Kernel for the given pooled sample. `dist` must be supplied when
    /// [`needs_distances`](Self::needs_distances) says so.
    pub fn kernel(&self, d: usize, dist: Option<&PooledDistances>) -> Result<Kernel> {
        let need = || dist.ok_or_else(|| Error::InvalidArgument("pooled distances required".into()));
        match self.kind {
            StatisticKind::Cq => Ok(Kernel::Linear),
            StatisticKind::Energy => Ok(Kernel::Euclidean),
            StatisticKind::GaussianMmd(r) => {
                let gamma = if r.is_data_dependent() {
                    resolve_from_distances(&r, d, need()?)?
                } else {
                    resolve_without_data(&r, d)?
                };
                Kernel::gaussian(gamma)
            }
            StatisticKind::ShiftedEnergy { bandwidth, trace } => {
                let dist = need()?;
                let gamma = resolve_from_distances(&bandwidth, d, dist)?;
                let t = match trace {
                    TraceSource::Oracle(t) => t,
                    TraceSource::Pooled => 0.5 * mean_from_distances(dist).gamma_sq,
                };
                Kernel::shifted_euclidean(gamma * gamma, t)
            }
        }
    }

    fn kernel_code(&self) -> String {
        let rule = |r: &BandwidthRule| match *r {
            BandwidthRule::Median => "_median".to_string(),
            BandwidthRule::Mean => "_mean".to_string(),
            BandwidthRule::Power { p, c } if c == 1.0 => format!("{p}"),
            BandwidthRule::Power { p, c } => format!("{p}x{c}"),
            BandwidthRule::Fixed { gamma } => format!("_fixed{gamma}"),
        };
        match &self.kind {
            StatisticKind::Cq => "CQ".into(),
            StatisticKind::Energy => "ED".into(),
            StatisticKind::GaussianMmd(r) => format!("MMD{}", rule(r)),
            StatisticKind::ShiftedEnergy { bandwidth, trace } => {
                let t = match trace {
                    TraceSource::Pooled => String::new(),
                    TraceSource::Oracle(t) => format!("_tr{t}"),
                };
                format!("EDg{}{t}", rule(bandwidth))
            }
        }
    }

    /// Human-readable legend entry.
    pub fn display_name(&self) -> String {
        let rule = |r: &BandwidthRule| match *r {
            BandwidthRule::Median => " Median".to_string(),
            BandwidthRule::Mean => " Mean".to_string(),
            BandwidthRule::Power { p, c } if c == 1.0 => format!("{p}"),
            BandwidthRule::Power { p, c } => format!("{p}x{c}"),
            BandwidthRule::Fixed { gamma } => format!(" γ={gamma}"),
        };
        let base = match &self.kind {
            StatisticKind::Cq => "CQ".to_string(),
            StatisticKind::Energy => "ED".to_string(),
            StatisticKind::GaussianMmd(r) => format!("MMD{}", rule(r)),
            StatisticKind::ShiftedEnergy { bandwidth, .. } => format!("EDγ{}", rule(bandwidth)),
        };
        match self.budget {
            ComputeBudget::Quadratic if matches!(self.kind, StatisticKind::Energy) => base,
            ComputeBudget::Quadratic => format!("u{base}"),
            ComputeBudget::Linear => format!("l{base}"),
            ComputeBudget::Block(b) => format!("b{base} (B={b})"),
        }
    }
}

impl fmt::Display for StatisticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = self.kernel_code();
        match self.budget {
            ComputeBudget::Quadratic if matches!(self.kind, StatisticKind::Energy) => f.write_str(&code),
            ComputeBudget::Quadratic => write!(f, "u{code}"),
            ComputeBudget::Linear => write!(f, "l{code}"),
            ComputeBudget::Block(b) => write!(f, "b{code}_B{b}"),
        }
    }
}

impl FromStr for StatisticSpec {
    type Err = Error;

    /// Parses labels such as `uCQ`, `ED`, `uMMD0.5`, `lMMD_median`,
    /// `bMMD_median_B8`, `uEDg_mean` or `uMMD_fixed2.5`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown statistic `{s}`"));
        if s == "ED" {
            return Ok(StatisticSpec::new(StatisticKind::Energy, ComputeBudget::Quadratic));
        }
        let (budget_char, rest) = s.split_at(s.chars().next().map_or(0, char::len_utf8));
        let (body, budget) = match budget_char {
            "u" => (rest, ComputeBudget::Quadratic),
            "l" => (rest, ComputeBudget::Linear),
            "b" => {
                let (body, b) = rest.rsplit_once("_B").ok_or_else(bad)?;
                (body, ComputeBudget::Block(b.parse().map_err(|_| bad())?))
            }
            _ => return Err(bad()),
        };
        let rule = |t: &str| -> Result<BandwidthRule> {
            let r = match t {
                "_median" => BandwidthRule::Median,
                "_mean" => BandwidthRule::Mean,
                t if t.starts_with("_fixed") => BandwidthRule::Fixed { gamma: t[6..].parse().map_err(|_| bad())? },
                t => match t.split_once('x') {
                    Some((p, c)) => BandwidthRule::Power {
                        p: p.parse().map_err(|_| bad())?,
                        c: c.parse().map_err(|_| bad())?,
                    },
                    None => BandwidthRule::power(t.parse().map_err(|_| bad())?),
                },
            };
            r.validate()?;
            Ok(r)
        };
        let kind = if body == "CQ" {
            StatisticKind::Cq
        } else if body == "ED" {
            StatisticKind::Energy
        } else if let Some(r) = body.strip_prefix("MMD") {
            StatisticKind::GaussianMmd(rule(r)?)
        } else if let Some(r) = body.strip_prefix("EDg") {
            let (r, trace) = match r.split_once("_tr") {
                Some((r, t)) => (r, TraceSource::Oracle(t.parse().map_err(|_| bad())?)),
                None => (r, TraceSource::Pooled),
            };
            StatisticKind::ShiftedEnergy { bandwidth: rule(r)?, trace }
        } else {
            return Err(bad());
        };
        Ok(StatisticSpec::new(kind, budget))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legend_labels() {
        let labels: Vec<String> = StatisticSpec::legend().iter().map(|s| s.to_string()).collect();
        assert_eq!(
            labels,
            [
                "uMMD0.5", "uMMD_median", "uMMD0.75", "ED", "uCQ", "lMMD0.5", "lMMD_median", "lMMD0.75", "lCQ"
            ]
        );
        let names: Vec<String> = StatisticSpec::legend().iter().map(|s| s.display_name()).collect();
        assert_eq!(names[1], "uMMD Median");
        assert_eq!(names[3], "ED");
    }

    #[test]
    fn labels_round_trip() {
        let mut all = StatisticSpec::legend();
        for s in ["bMMD_median_B8", "bCQ_B4", "lED", "uMMD_mean", "uMMD_fixed2.5", "uEDg0.75", "uEDg_median_tr40", "uMMD0.5x2"] {
            all.push(s.parse().unwrap());
        }
        for s in all {
            assert_eq!(s.to_string().parse::<StatisticSpec>().unwrap(), s, "{s}");
        }
        for s in ["", "x", "uFOO", "bMMD_median", "uMMD", "uMMD_fixed-1"] {
            assert!(s.parse::<StatisticSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn kernels_from_rules() {
        let s: StatisticSpec = "uMMD0.5".parse().unwrap();
        assert!(!StatisticSpec::new(StatisticKind::Cq, ComputeBudget::Quadratic).needs_distances());
        assert_eq!(s.kernel(100, None).unwrap(), Kernel::Gaussian { gamma: 10.0 });
        let m: StatisticSpec = "uMMD_median".parse().unwrap();
        assert!(m.kernel(100, None).is_err());
    }
}
