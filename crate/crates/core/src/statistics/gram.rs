//! Pooled pairwise matrices for recomputing a statistic under relabelling.
//!
//! The pooled sample is `Z = (X_1..X_n, Y_1..Y_n)`. A labelling is a
//! permutation `π` of `0..2n`; the relabelled X sample is
//! `Z_{π(0)}..Z_{π(n−1)}` and the relabelled Y sample is the rest. Row `i`
//! of the relabelled X is paired with row `i` of the relabelled Y.

use super::{ComputeBudget, Kernel};
use crate::error::{Error, Result};
use crate::models::Sample;
use crate::numeric::{self, CompensatedSum};

/// Squared distances between all pooled points, stored densely.
#[derive(Debug, Clone)]
pub struct PooledDistances {
    size: usize,
    sq: Vec<f64>,
}

impl PooledDistances {
    pub fn new(x: &Sample, y: &Sample) -> Result<Self> {
        let pooled = pool(x, y)?;
        let size = pooled.len();
        let mut sq = vec![0.0; size * size];
        for u in 0..size {
            for v in u + 1..size {
                let s = numeric::sq_dist(pooled[u], pooled[v]);
                sq[u * size + v] = s;
                sq[v * size + u] = s;
            }
        }
        Ok(PooledDistances { size, sq })
    }

    /// Pooled sample size `2n`.
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.sq[u * self.size + v]
    }

    /// Squared distances over unordered pooled pairs.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size * (self.size - 1) / 2);
        for u in 0..self.size {
            out.extend_from_slice(&self.sq[u * self.size + u + 1..(u + 1) * self.size]);
        }
        out
    }
}

fn pool<'a>(x: &'a Sample, y: &'a Sample) -> Result<Vec<&'a [f64]>> {
    if x.n() != y.n() {
        return Err(Error::SampleSizeMismatch { x: x.n(), y: y.n() });
    }
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch { expected: x.d(), got: y.d() });
    }
    Ok(x.rows().chain(y.rows()).collect())
}

#[derive(Debug, Clone)]
enum Storage {
    /// Dense `2n × 2n` matrix of similarities.
    Dense(Vec<f64>),
    /// Pooled points, for the linear kernel.
    Features(Vec<f64>, usize),
}

/// Similarities `k(Z_u, Z_v)` (or `−ρ`) for every pooled pair.
#[derive(Debug, Clone)]
pub struct PooledGram {
    n: usize,
    kernel: Kernel,
    storage: Storage,
    trace: f64,
}

impl PooledGram {
    /// Build for any kernel, reusing precomputed distances when given.
    pub fn new(
        x: &Sample,
        y: &Sample,
        kernel: &Kernel,
        distances: Option<&PooledDistances>,
    ) -> Result<Self> {
        kernel.validate()?;
        let pooled = pool(x, y)?;
        let size = pooled.len();
        if let Kernel::Linear = kernel {
            let d = x.d();
            let mut feats = Vec::with_capacity(size * d);
            for r in &pooled {
                feats.extend_from_slice(r);
            }
            let trace = pooled.iter().map(|r| numeric::dot(r, r)).collect::<CompensatedSum>().value();
            return Ok(PooledGram { n: x.n(), kernel: *kernel, storage: Storage::Features(feats, d), trace });
        }
        let owned;
        let dist = match distances {
            Some(d) if d.size() == size => d,
            Some(d) => {
                return Err(Error::DimensionMismatch { expected: size, got: d.size() });
            }
            None => {
                owned = PooledDistances::new(x, y)?;
                &owned
            }
        };
        let mut g = vec![0.0; size * size];
        for u in 0..size {
            for v in 0..size {
                g[u * size + v] = kernel.similarity_from_sq_dist(dist.get(u, v));
            }
        }
        let trace = (0..size).map(|u| g[u * size + u]).collect::<CompensatedSum>().value();
        Ok(PooledGram { n: x.n(), kernel: *kernel, storage: Storage::Dense(g), trace })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    #[inline]
    fn entry(&self, u: usize, v: usize) -> f64 {
        match &self.storage {
            Storage::Dense(g) => g[u * 2 * self.n + v],
            Storage::Features(f, d) => numeric::dot(&f[u * d..(u + 1) * d], &f[v * d..(v + 1) * d]),
        }
    }

    #[inline]
    fn h(&self, a: usize, ap: usize, b: usize, bp: usize) -> f64 {
        (self.entry(a, ap) + self.entry(b, bp)) - (self.entry(a, bp) + self.entry(ap, b))
    }

    /// The identity labelling.
    pub fn identity_labels(&self) -> Vec<usize> {
        (0..2 * self.n).collect()
    }

    fn check_labels(&self, labels: &[usize]) -> Result<()> {
        if labels.len() != 2 * self.n {
            return Err(Error::DimensionMismatch { expected: 2 * self.n, got: labels.len() });
        }
        Ok(())
    }

    /// The statistic on the relabelled samples.
    pub fn statistic(&self, labels: &[usize], budget: ComputeBudget) -> Result<f64> {
        self.check_labels(labels)?;
        Ok(match budget {
            ComputeBudget::Quadratic => {
                budget.blocks(self.n)?;
                let nf = self.n as f64;
                self.quadratic_sum(labels) / (nf * (nf - 1.0))
            }
            ComputeBudget::Block(_) | ComputeBudget::Linear => {
                numeric::mean(&self.block_values(labels, budget)?)
            }
        })
    }

    /// Per-block statistics on the relabelled samples.
    pub fn block_values(&self, labels: &[usize], budget: ComputeBudget) -> Result<Vec<f64>> {
        self.check_labels(labels)?;
        let blocks = budget.blocks(self.n)?;
        let m = self.n / blocks;
        let (xs, ys) = labels.split_at(self.n);
        let mf = m as f64;
        Ok((0..blocks)
            .map(|b| {
                let mut acc = CompensatedSum::new();
                for i in b * m..(b + 1) * m {
                    for j in i + 1..(b + 1) * m {
                        acc.add(self.h(xs[i], xs[j], ys[i], ys[j]));
                    }
                }
                2.0 * acc.value() / (mf * (mf - 1.0))
            })
            .collect())
    }

    /// `h` over all unordered pairs of the relabelled samples.
    pub fn pair_values(&self, labels: &[usize]) -> Result<Vec<f64>> {
        self.check_labels(labels)?;
        let (xs, ys) = labels.split_at(self.n);
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.h(xs[i], xs[j], ys[i], ys[j]));
            }
        }
        Ok(out)
    }

    /// `Σ_{i≠j} h` through the ±1 sign vector `s`:
    /// `sᵀGs − tr(G) + 2 Σ_i G(a_i, b_i)`.
    fn quadratic_sum(&self, labels: &[usize]) -> f64 {
        let size = 2 * self.n;
        let mut sign = vec![-1.0; size];
        for &u in &labels[..self.n] {
            sign[u] = 1.0;
        }
        let mut paired = CompensatedSum::new();
        for i in 0..self.n {
            paired.add(self.entry(labels[i], labels[self.n + i]));
        }
        let quad = match &self.storage {
            Storage::Dense(g) => {
                let mut acc = CompensatedSum::new();
                for u in 0..size {
                    acc.add(sign[u] * numeric::dot(&g[u * size..(u + 1) * size], &sign));
                }
                acc.value()
            }
            Storage::Features(f, d) => {
                let mut w = vec![0.0; *d];
                for u in 0..size {
                    let s = sign[u];
                    for (wk, fk) in w.iter_mut().zip(&f[u * d..(u + 1) * d]) {
                        *wk += s * fk;
                    }
                }
                numeric::dot(&w, &w)
            }
        };
        quad - self.trace + 2.0 * paired.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_experiment1_pair, sample, NoiseFamily};
    use crate::statistics::statistic;
    use rand::seq::SliceRandom;

    fn data() -> (Sample, Sample) {
        let (p, q) = make_experiment1_pair(NoiseFamily::Gaussian, 6).unwrap();
        (sample(&p, 12, 5).unwrap(), sample(&q, 12, 6).unwrap())
    }

    fn relabel(x: &Sample, y: &Sample, labels: &[usize]) -> (Sample, Sample) {
        let pooled: Vec<Vec<f64>> = x.rows().chain(y.rows()).map(|r| r.to_vec()).collect();
        let pick = |ls: &[usize]| Sample::from_rows(&ls.iter().map(|&u| pooled[u].clone()).collect::<Vec<_>>()).unwrap();
        (pick(&labels[..x.n()]), pick(&labels[x.n()..]))
    }

    #[test]
    fn relabelled_statistic_matches_direct() {
        let (x, y) = data();
        let mut rng = crate::rng::rng_from_seed(9);
        let kernels = [
            Kernel::Linear,
            Kernel::Euclidean,
            Kernel::gaussian(2.5).unwrap(),
            Kernel::shifted_euclidean(40.0, 6.0).unwrap(),
        ];
        let dist = PooledDistances::new(&x, &y).unwrap();
        for k in kernels {
            let gram = PooledGram::new(&x, &y, &k, Some(&dist)).unwrap();
            let mut labels = gram.identity_labels();
            for trial in 0..4 {
                if trial > 0 {
                    labels.shuffle(&mut rng);
                }
                let (px, py) = relabel(&x, &y, &labels);
                for budget in [ComputeBudget::Quadratic, ComputeBudget::Block(3), ComputeBudget::Linear] {
                    let direct = statistic(&px, &py, &k, budget).unwrap().value;
                    let fast = gram.statistic(&labels, budget).unwrap();
                    let scale = direct.abs().max(1e-3);
                    assert!((direct - fast).abs() / scale < 1e-9, "{k:?} {budget} {direct} {fast}");
                }
            }
        }
    }

    #[test]
    fn pair_values_match_direct() {
        let (x, y) = data();
        let k = Kernel::gaussian(3.0).unwrap();
        let gram = PooledGram::new(&x, &y, &k, None).unwrap();
        let a = gram.pair_values(&gram.identity_labels()).unwrap();
        let b = crate::statistics::pair_values(&x, &y, &k).unwrap();
        assert_eq!(a.len(), b.len());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn distances_layout() {
        let (x, y) = data();
        let d = PooledDistances::new(&x, &y).unwrap();
        assert_eq!(d.size(), 24);
        assert_eq!(d.upper_triangle().len(), 24 * 23 / 2);
        assert_eq!(d.get(3, 17), numeric::sq_dist(x.row(3), y.row(5)));
        assert!(PooledGram::new(&x, &y, &Kernel::gaussian(1.0).unwrap(), Some(&d)).is_ok());
        assert!(PooledGram::new(&x, &y, &Kernel::Linear, None).unwrap().statistic(&[0; 3], ComputeBudget::Quadratic).is_err());
    }
}
