//! Closed-form asymptotic power, SNR regimes and the chi-squared Gaussian
//! approximation.

use std::fmt;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use libm::erfc;

use crate::error::{Error, Result};
use crate::models::CovarianceModel;

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with Newton steps on [`phi`].
pub fn phi_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability must lie in (0, 1), got {p}")));
    }
    let mut x = Normal::standard().inverse_cdf(p);
    for _ in 0..3 {
        let f = density(x);
        if f < 1e-300 {
            break;
        }
        x -= (phi(x) - p) / f;
    }
    Ok(x)
}

/// `z_α = Φ⁻¹(1 − α)`.
pub fn z_alpha(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    phi_inv(1.0 - alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("α must lie in (0, 1), got {alpha}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite and ≥ 0, got {v}")))
    }
}

fn check_counts(n: usize, d: usize) -> Result<()> {
    if n < 2 || d < 1 {
        return Err(Error::InvalidArgument(format!("need n ≥ 2 and d ≥ 1, got n = {n}, d = {d}")));
    }
    Ok(())
}

/// Population quantities entering the power formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemParams {
    pub n: usize,
    pub d: usize,
    pub trace_sigma: f64,
    pub trace_sigma_sq: f64,
    /// `‖δ‖²`.
    pub delta_sq: f64,
    /// `δᵀΣδ`.
    pub delta_sigma_delta: f64,
    pub alpha: f64,
}

impl ProblemParams {
    /// `Σ = σ² I` and `‖δ‖ = Ψ σ`.
    pub fn spherical(n: usize, d: usize, psi: f64, sigma: f64, alpha: f64) -> Result<Self> {
        check_nonneg("Ψ", psi)?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("σ must be positive, got {sigma}")));
        }
        let s2 = sigma * sigma;
        let df = d as f64;
        let p = ProblemParams {
            n,
            d,
            trace_sigma: df * s2,
            trace_sigma_sq: df * s2 * s2,
            delta_sq: psi * psi * s2,
            delta_sigma_delta: s2 * s2 * psi * psi,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_model(n: usize, cov: &CovarianceModel, delta: &[f64], alpha: f64) -> Result<Self> {
        let delta_sq = crate::numeric::dot(delta, delta);
        let p = ProblemParams {
            n,
            d: cov.dim(),
            trace_sigma: cov.trace_sigma(),
            trace_sigma_sq: cov.trace_sigma_sq(),
            delta_sq,
            delta_sigma_delta: cov.quadratic_form(delta)?,
            alpha,
        };
        p.validate()?;
        if p.delta_sigma_delta > cov.lambda_max() * delta_sq * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::InvalidArgument("δᵀΣδ exceeds λ_max(Σ)‖δ‖²".into()));
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_counts(self.n, self.d)?;
        check_alpha(self.alpha)?;
        check_nonneg("Tr(Σ)", self.trace_sigma)?;
        check_nonneg("Tr(Σ²)", self.trace_sigma_sq)?;
        check_nonneg("‖δ‖²", self.delta_sq)?;
        check_nonneg("δᵀΣδ", self.delta_sigma_delta)?;
        if self.trace_sigma_sq == 0.0 {
            return Err(Error::InvalidArgument("Tr(Σ²) must be positive".into()));
        }
        Ok(())
    }
}

/// Asymptotic power of the quadratic-time test.
pub fn power_general(p: &ProblemParams) -> Result<f64> {
    p.validate()?;
    let n = p.n as f64;
    let t = p.trace_sigma_sq / (n * n);
    let s = p.delta_sigma_delta / n;
    let z = z_alpha(p.alpha)?;
    Ok(phi(-t.sqrt() / (t + s).sqrt() * z + p.delta_sq / (8.0 * t + 8.0 * s).sqrt()))
}

/// Power with `Σ = σ² I` and `Ψ = ‖δ‖/σ`.
pub fn power_spherical(n: usize, d: usize, psi: f64, alpha: f64) -> Result<f64> {
    check_counts(n, d)?;
    check_nonneg("Ψ", psi)?;
    let z = z_alpha(alpha)?;
    let (n, d, p2) = (n as f64, d as f64, psi * psi);
    Ok(phi(-d.sqrt() / (d + n * p2).sqrt() * z + p2 / (8.0 * d / (n * n) + 8.0 * p2 / n).sqrt()))
}

/// Power of the average of `blocks` block statistics.
pub fn power_block(p: &ProblemParams, blocks: usize) -> Result<f64> {
    p.validate()?;
    if blocks < 1 || blocks > p.n / 2 {
        return Err(Error::InvalidArgument(format!(
            "block count must lie in 1..={}, got {blocks}",
            p.n / 2
        )));
    }
    let n = p.n as f64;
    let b = blocks as f64;
    let var1 = 8.0 * b * b * p.trace_sigma_sq / (n * n);
    let var = var1 + 8.0 * b * p.delta_sigma_delta / n;
    let z = z_alpha(p.alpha)?;
    Ok(phi(b.sqrt() * p.delta_sq / var.sqrt() - z * (var1 / var).sqrt()))
}

/// [`power_block`] with `Σ = I`.
pub fn power_block_spherical(n: usize, d: usize, blocks: usize, psi: f64, alpha: f64) -> Result<f64> {
    power_block(&ProblemParams::spherical(n, d, psi, 1.0, alpha)?, blocks)
}

/// Power of the linear-time statistic with `Σ = σ² I`.
pub fn power_linear(n: usize, d: usize, psi: f64, alpha: f64) -> Result<f64> {
    check_counts(n, d)?;
    check_nonneg("Ψ", psi)?;
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("linear-time power needs even n, got {n}")));
    }
    let z = z_alpha(alpha)?;
    let (n, d, p2) = (n as f64, d as f64, psi * psi);
    Ok(phi(n.sqrt() * p2 / (8.0 * d + 8.0 * p2).sqrt() - z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrClass {
    Low,
    Medium,
    High,
}

impl fmt::Display for SnrClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SnrClass::Low => "low",
            SnrClass::Medium => "medium",
            SnrClass::High => "high",
        })
    }
}

/// Signal-to-noise regime of `Ψ` relative to `√(d/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrRegime {
    pub class: SnrClass,
    pub psi: f64,
    /// `Ψ / √(d/n)`.
    pub ratio: f64,
}

/// Cutoffs on `Ψ/√(d/n)` separating low from medium and medium from high.
pub const SNR_THRESHOLDS: (f64, f64) = (1.0 / 3.0, 3.0);

pub fn snr_regime(n: usize, d: usize, psi: f64) -> Result<SnrRegime> {
    check_counts(n, d)?;
    check_nonneg("Ψ", psi)?;
    let ratio = psi / (d as f64 / n as f64).sqrt();
    let class = if ratio < SNR_THRESHOLDS.0 {
        SnrClass::Low
    } else if ratio > SNR_THRESHOLDS.1 {
        SnrClass::High
    } else {
        SnrClass::Medium
    };
    Ok(SnrRegime { class, psi, ratio })
}

/// Gaussian approximation to the CDF of a noncentral chi-squared with `d`
/// degrees of freedom and noncentrality `r²`.
pub fn chi2_gaussian_cdf_approx(x: f64, d: usize, noncentrality: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::InvalidArgument("need d ≥ 1".into()));
    }
    check_nonneg("noncentrality", noncentrality)?;
    let d = d as f64;
    Ok(phi((x - d - noncentrality) / (2.0 * d + 4.0 * noncentrality).sqrt()))
}

/// Minimax power over mean shifts of size `ρ` with `Σ = σ² I`.
pub fn minimax_power(n: usize, d: usize, rho: f64, sigma: f64, alpha: f64) -> Result<f64> {
    check_counts(n, d)?;
    check_nonneg("ρ", rho)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("σ must be positive, got {sigma}")));
    }
    let t_alpha = z_alpha(alpha)?;
    let psi_sq = (rho / sigma).powi(2);
    let (n, d) = (n as f64, d as f64);
    let first = -(d.sqrt() / (d + n * psi_sq).sqrt()) * t_alpha;
    let second = psi_sq / (8.0 * d / (n * n) + 8.0 * psi_sq / n).sqrt();
    Ok(phi(first + second))
}

/// Minimax power for testing `θ = 0` against `‖θ‖² ≥ ρ²` from one
/// observation of `N(θ, I_d)`.
pub fn normal_means_power(d: usize, rho_sq: f64, alpha: f64) -> Result<f64> {
    if d < 1 {
        return Err(Error::InvalidArgument("need d ≥ 1".into()));
    }
    check_nonneg("ρ²", rho_sq)?;
    let z = z_alpha(alpha)?;
    let d = d as f64;
    let s = (2.0 * d + 4.0 * rho_sq).sqrt();
    Ok(phi(-(2.0 * d).sqrt() / s * z + rho_sq / s))
}
