//! Data model `X = Γ Z + μ` and the experiment distribution families.
//!
//! A [`DistributionSpec`] couples a latent noise family (independent
//! coordinates, or the scale mixture which shares one scale per draw) with a
//! [`CovarianceModel`] and a mean vector. [`sample`] is a pure function of
//! `(spec, n, seed)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;
use crate::rng::rng_from_seed;

/// An `n × d` sample stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Sample {
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "a sample needs at least 2 rows, got {n}"
            )));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if data.len() != n * d {
            return Err(Error::InvalidArgument(format!(
                "buffer of length {} cannot hold {n}x{d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Sample { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::InvalidArgument(format!(
                "row {i} has {} columns, expected {d}",
                r.len()
            )));
        }
        Sample::new(rows.concat(), rows.len(), d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Rows `start..end` as a new sample.
    pub fn slice(&self, start: usize, end: usize) -> Result<Sample> {
        Sample::new(self.data[start * self.d..end * self.d].to_vec(), end - start, self.d)
    }

    /// Reorder rows so that row `i` of the result is row `order[i]` here.
    pub fn permuted(&self, order: &[usize]) -> Result<Sample> {
        let mut data = Vec::with_capacity(order.len() * self.d);
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Sample::new(data, order.len(), self.d)
    }

    /// Apply `f` to every entry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Sample> {
        Sample::new(self.data.iter().map(|&v| f(v)).collect(), self.n, self.d)
    }

    /// Add `v` to every row.
    pub fn translated(&self, v: &[f64]) -> Result<Sample> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: v.len() });
        }
        let data = self
            .rows()
            .flat_map(|r| r.iter().zip(v).map(|(a, b)| a + b))
            .collect();
        Sample::new(data, self.n, self.d)
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.d)
            .map(|j| numeric::mean(&self.rows().map(|r| r[j]).collect::<Vec<_>>()))
            .collect()
    }

    /// Per-column unbiased variances.
    pub fn column_variances(&self) -> Vec<f64> {
        (0..self.d)
            .map(|j| numeric::sample_variance(&self.rows().map(|r| r[j]).collect::<Vec<_>>()))
            .collect()
    }

    /// Unbiased `d × d` sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mu = self.mean();
        let mut c = DMatrix::<f64>::zeros(self.d, self.d);
        for r in self.rows() {
            for a in 0..self.d {
                let da = r[a] - mu[a];
                for b in 0..=a {
                    c[(a, b)] += da * (r[b] - mu[b]);
                }
            }
        }
        for a in 0..self.d {
            for b in 0..a {
                c[(b, a)] = c[(a, b)];
            }
        }
        c / (self.n as f64 - 1.0)
    }
}

/// Trace of the pooled within-group covariance of two samples, a plug-in
/// for `Tr(Σ)` when the shift is unknown.
pub fn pooled_covariance_trace(x: &Sample, y: &Sample) -> Result<f64> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch { expected: x.d(), got: y.d() });
    }
    let tx: f64 = x.column_variances().iter().sum::<f64>() * (x.n() as f64 - 1.0);
    let ty: f64 = y.column_variances().iter().sum::<f64>() * (y.n() as f64 - 1.0);
    Ok((tx + ty) / ((x.n() + y.n()) as f64 - 2.0))
}

/// Latent noise family for `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    /// Standard normal coordinates.
    Gaussian,
    /// Laplace coordinates with scale `1/√2`, so unit variance.
    LaplaceUnit,
    /// Beta(1,1), i.e. Uniform(0,1), centred; variance 1/12.
    UniformBeta11,
    /// `N(0, s I)` with `s` drawn uniformly from {1, 2, 3} once per
    /// observation; coordinate variance 2.
    GaussianScaleMixture,
}

impl NoiseFamily {
    pub const ALL: [NoiseFamily; 4] = [
        NoiseFamily::Gaussian,
        NoiseFamily::LaplaceUnit,
        NoiseFamily::UniformBeta11,
        NoiseFamily::GaussianScaleMixture,
    ];

    /// Per-coordinate variance of one latent draw.
    pub fn coordinate_variance(self) -> f64 {
        match self {
            NoiseFamily::Gaussian | NoiseFamily::LaplaceUnit => 1.0,
            NoiseFamily::UniformBeta11 => 1.0 / 12.0,
            NoiseFamily::GaussianScaleMixture => 2.0,
        }
    }

    /// Shift magnitude per coordinate used by the first experiment: the
    /// squared shift norm equals the coordinate variance.
    pub fn experiment1_shift(self, d: usize) -> f64 {
        let d = d as f64;
        match self {
            NoiseFamily::Gaussian | NoiseFamily::LaplaceUnit => 1.0 / d.sqrt(),
            NoiseFamily::UniformBeta11 => 1.0 / (12.0 * d).sqrt(),
            NoiseFamily::GaussianScaleMixture => (2.0 / d).sqrt(),
        }
    }

    /// Fill `buf` with one latent vector.
    pub fn fill<R: Rng + ?Sized>(self, rng: &mut R, buf: &mut [f64]) {
        match self {
            NoiseFamily::Gaussian => {
                for v in buf.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
            }
            NoiseFamily::LaplaceUnit => {
                let b = std::f64::consts::FRAC_1_SQRT_2;
                for v in buf.iter_mut() {
                    let e1: f64 = Exp1.sample(rng);
                    let e2: f64 = Exp1.sample(rng);
                    *v = b * (e1 - e2);
                }
            }
            NoiseFamily::UniformBeta11 => {
                for v in buf.iter_mut() {
                    *v = rng.random::<f64>() - 0.5;
                }
            }
            NoiseFamily::GaussianScaleMixture => {
                let scale = (rng.random_range(1..=3u32) as f64).sqrt();
                for v in buf.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = scale * z;
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::LaplaceUnit => "laplace_unit",
            NoiseFamily::UniformBeta11 => "uniform_beta11",
            NoiseFamily::GaussianScaleMixture => "gaussian_scale_mixture",
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown noise family `{s}`")))
    }
}

/// Linear map `Γ` with the cached quantities the theory needs.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    gamma: DMatrix<f64>,
    sigma: DMatrix<f64>,
    trace_sigma: f64,
    trace_sigma_sq: f64,
    lambda_min: f64,
    lambda_max: f64,
    is_identity: bool,
}

impl CovarianceModel {
    pub fn identity(d: usize) -> Result<Self> {
        Self::scaled_identity(d, 1.0)
    }

    /// `Σ = s I`.
    pub fn scaled_identity(d: usize, s: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidSpec(format!("variance scale must be positive, got {s}")));
        }
        let mut m = Self::from_gamma(DMatrix::identity(d, d) * s.sqrt())?;
        m.is_identity = s == 1.0;
        Ok(m)
    }

    /// Build from a covariance via its lower Cholesky factor (`D = d`).
    pub fn from_sigma(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::InvalidSpec("covariance must be a non-empty square matrix".into()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("covariance has non-finite entries".into()));
        }
        let asym = (&sigma - sigma.transpose()).norm();
        if asym > 1e-10 * sigma.norm().max(1.0) {
            return Err(Error::InvalidSpec("covariance is not symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidSpec("covariance is not positive definite".into()))?;
        Self::from_gamma(chol.l())
    }

    /// Build from a `d × D` factor with `D ≥ d`.
    pub fn from_gamma(gamma: DMatrix<f64>) -> Result<Self> {
        let (d, big_d) = gamma.shape();
        if d == 0 || big_d < d {
            return Err(Error::InvalidSpec(format!(
                "Γ must be d×D with D ≥ d ≥ 1, got {d}×{big_d}"
            )));
        }
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("Γ has non-finite entries".into()));
        }
        let sigma = &gamma * gamma.transpose();
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sigma.clone());
        let lambda_min = eig.eigenvalues.min();
        let lambda_max = eig.eigenvalues.max();
        if lambda_min <= 0.0 {
            return Err(Error::InvalidSpec("Σ = ΓΓᵀ is not positive definite".into()));
        }
        let trace_sigma = numeric::sum(sigma.diagonal().as_slice());
        let trace_sigma_sq = numeric::sum(&sigma.iter().map(|v| v * v).collect::<Vec<_>>());
        Ok(CovarianceModel {
            gamma,
            sigma,
            trace_sigma,
            trace_sigma_sq,
            lambda_min,
            lambda_max,
            is_identity: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn trace_sigma(&self) -> f64 {
        self.trace_sigma
    }

    /// `Tr(Σ²) = ‖Σ‖_F²`.
    pub fn trace_sigma_sq(&self) -> f64 {
        self.trace_sigma_sq
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Same model with `Σ` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidSpec(format!("scale factor must be positive, got {factor}")));
        }
        let mut m = Self::from_gamma(&self.gamma * factor.sqrt())?;
        m.is_identity = self.is_identity && factor == 1.0;
        Ok(m)
    }

    /// `δᵀ Σ δ`.
    pub fn quadratic_form(&self, delta: &[f64]) -> Result<f64> {
        if delta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: delta.len() });
        }
        let v = DVector::from_column_slice(delta);
        Ok((v.transpose() * &self.sigma * &v)[(0, 0)])
    }

    /// `out = Γ z`.
    #[inline]
    fn apply(&self, z: &[f64], out: &mut [f64]) {
        if self.is_identity {
            out.copy_from_slice(z);
            return;
        }
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for (k, zk) in z.iter().enumerate() {
                acc += self.gamma[(i, k)] * zk;
            }
            *o = acc;
        }
    }
}

/// A population: latent family, covariance model, and mean.
#[derive(Debug, Clone)]
pub struct DistributionSpec {
    pub noise: NoiseFamily,
    pub cov: Arc<CovarianceModel>,
    pub mean: Vec<f64>,
}

impl DistributionSpec {
    pub fn new(noise: NoiseFamily, cov: Arc<CovarianceModel>, mean: Vec<f64>) -> Result<Self> {
        let spec = DistributionSpec { noise, cov, mean };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.cov.dim() {
            return Err(Error::InvalidSpec(format!(
                "mean has length {}, covariance is {}-dimensional",
                self.mean.len(),
                self.cov.dim()
            )));
        }
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("mean has non-finite entries".into()));
        }
        if self.cov.gamma().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("Γ has non-finite entries".into()));
        }
        Ok(())
    }

    /// Covariance of the observations themselves: `Var(z_k) · Σ`.
    pub fn effective_covariance(&self) -> Result<CovarianceModel> {
        self.cov.scaled(self.noise.coordinate_variance())
    }
}

/// Draw `n` i.i.d. rows `Γ z + μ`.
pub fn sample(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Sample> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need n ≥ 2, got {n}")));
    }
    let d = spec.dim();
    let big_d = spec.cov.latent_dim();
    let mut rng = rng_from_seed(seed);
    let mut z = vec![0.0; big_d];
    let mut data = vec![0.0; n * d];
    for row in data.chunks_exact_mut(d) {
        spec.noise.fill(&mut rng, &mut z);
        spec.cov.apply(&z, row);
        for (v, m) in row.iter_mut().zip(&spec.mean) {
            *v += m;
        }
    }
    Sample::new(data, n, d)
}

/// Location-shift pair of the first experiment: `P` centred, `Q` shifted
/// along `1` by the family's prescribed amount, identity `Γ`.
pub fn make_experiment1_pair(
    family: NoiseFamily,
    d: usize,
) -> Result<(DistributionSpec, DistributionSpec)> {
    if d == 0 {
        return Err(Error::InvalidSpec("dimension must be positive".into()));
    }
    let cov = Arc::new(CovarianceModel::identity(d)?);
    let shift = family.experiment1_shift(d);
    let p = DistributionSpec::new(family, cov.clone(), vec![0.0; d])?;
    let q = DistributionSpec::new(family, cov, vec![shift; d])?;
    Ok((p, q))
}

/// Eigenvalue profile `ℓ_i⁶` with `ℓ` equally spaced on `[0.01, 1]`.
pub fn power_six_spectrum(d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| {
            let l = if d == 1 { 1.0 } else { 0.01 + 0.99 * i as f64 / (d - 1) as f64 };
            l.powi(6)
        })
        .collect()
}

/// Orthonormal basis from the eigenvectors of `(G + Gᵀ)/2` for a seeded
/// standard Gaussian `G`. Columns are ordered by ascending eigenvalue and
/// each column's first non-negligible entry is made positive.
pub fn random_orthonormal(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let sym = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut u = DMatrix::<f64>::zeros(d, d);
    for (j, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        col /= col.norm();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                col = -col;
            }
        }
        u.set_column(j, &col);
    }
    u
}

fn rotate(u: &DMatrix<f64>, eigenvalues: &[f64]) -> DMatrix<f64> {
    let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
    let s = u * lambda * u.transpose();
    (&s + s.transpose()) * 0.5
}

/// `Σ' = U Λ' Uᵀ` with `Λ' = d Λ / Tr(Λ)`.
pub fn make_experiment2_covariance(d: usize, seed: u64) -> Result<CovarianceModel> {
    if d < 2 {
        return Err(Error::InvalidSpec(format!("need d ≥ 2, got {d}")));
    }
    let lambda = power_six_spectrum(d);
    let total: f64 = lambda.iter().sum();
    let normalized: Vec<f64> = lambda.iter().map(|l| d as f64 * l / total).collect();
    CovarianceModel::from_sigma(rotate(&random_orthonormal(d, seed), &normalized))
}

/// Mean-shift pair with the rotated power-six covariance.
pub fn make_experiment2_pair(d: usize, seed: u64) -> Result<(DistributionSpec, DistributionSpec)> {
    let cov = Arc::new(make_experiment2_covariance(d, seed)?);
    let shift = 1.0 / (d as f64).sqrt();
    let p = DistributionSpec::new(NoiseFamily::Gaussian, cov.clone(), vec![0.0; d])?;
    let q = DistributionSpec::new(NoiseFamily::Gaussian, cov, vec![shift; d])?;
    Ok((p, q))
}

/// Covariance-difference pair: `Σ₁ = 50 I/‖Σ‖_F`, `Σ₂ = 50 (Σ + I)/‖Σ‖_F`
/// with `Σ = U Λ Uᵀ` (unnormalized spectrum); both means zero.
pub fn make_experiment4_pair(d: usize, seed: u64) -> Result<(DistributionSpec, DistributionSpec)> {
    if d < 2 {
        return Err(Error::InvalidSpec(format!("need d ≥ 2, got {d}")));
    }
    let lambda = power_six_spectrum(d);
    let sigma = rotate(&random_orthonormal(d, seed), &lambda);
    let fro = sigma.norm();
    let s1 = DMatrix::<f64>::identity(d, d) * (50.0 / fro);
    let s2 = (sigma + DMatrix::<f64>::identity(d, d)) * (50.0 / fro);
    let p = DistributionSpec::new(
        NoiseFamily::Gaussian,
        Arc::new(CovarianceModel::from_sigma(s1)?),
        vec![0.0; d],
    )?;
    let q = DistributionSpec::new(
        NoiseFamily::Gaussian,
        Arc::new(CovarianceModel::from_sigma(s2)?),
        vec![0.0; d],
    )?;
    Ok((p, q))
}

/// Mean shift applied by a [`DistributionConfig`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftKind {
    #[default]
    None,
    /// The family's first-experiment shift along `1`.
    Experiment1,
}

/// Covariance construction named by a [`DistributionConfig`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Identity,
    Experiment2,
    Experiment4P,
    Experiment4Q,
}

/// Key-value description of a population.
///
/// ```toml
/// family = "gaussian"        # gaussian | laplace_unit | uniform_beta11 | gaussian_scale_mixture
/// d = 40
/// shift = "experiment1"      # none (default) | experiment1
/// covariance = "identity"    # identity (default) | experiment2 | experiment4_p | experiment4_q
/// seed = 1                   # seed of the random rotation, if any
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    pub family: NoiseFamily,
    pub d: usize,
    #[serde(default)]
    pub shift: ShiftKind,
    #[serde(default)]
    pub covariance: CovarianceKind,
    #[serde(default)]
    pub seed: u64,
}

impl DistributionConfig {
    pub fn build(&self) -> Result<DistributionSpec> {
        let d = self.d;
        if d == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        let cov = match self.covariance {
            CovarianceKind::Identity => CovarianceModel::identity(d)?,
            CovarianceKind::Experiment2 => make_experiment2_covariance(d, self.seed)?,
            CovarianceKind::Experiment4P => {
                make_experiment4_pair(d, self.seed)?.0.cov.as_ref().clone()
            }
            CovarianceKind::Experiment4Q => {
                make_experiment4_pair(d, self.seed)?.1.cov.as_ref().clone()
            }
        };
        let shift = match self.shift {
            ShiftKind::None => 0.0,
            ShiftKind::Experiment1 => self.family.experiment1_shift(d),
        };
        DistributionSpec::new(self.family, Arc::new(cov), vec![shift; d])
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))
    }
}
