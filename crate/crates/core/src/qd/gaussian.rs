//! CMA-ES search distribution with full or diagonal covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this dimension the covariance is kept diagonal (separable CMA-ES).
pub const DEFAULT_FULL_COVARIANCE_MAX_DIM: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Covariance {
    Full {
        /// Row-major `n x n`.
        c: Vec<f64>,
        /// Eigenvectors as columns, row-major.
        b: Vec<f64>,
        /// Square roots of the eigenvalues.
        d: Vec<f64>,
        eigen_generation: u64,
    },
    Diagonal {
        c: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Params {
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Params {
    fn new(n: usize, lambda: usize, separable: bool) -> Self {
        let nf = n as f64;
        let mu = (lambda / 2).max(1);
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let mut c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let mut c_mu = 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff);
        if separable {
            let scale = (nf + 2.0) / 3.0;
            c_1 *= scale;
            c_mu *= scale;
        }
        c_1 = c_1.min(1.0);
        c_mu = c_mu.min(1.0 - c_1);
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Params {
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// Mean, step size, covariance and evolution paths of a CMA-ES search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSearchState {
    mean: Vec<f64>,
    sigma: f64,
    batch_size: usize,
    p_sigma: Vec<f64>,
    p_c: Vec<f64>,
    cov: Covariance,
    params: Params,
    generation: u64,
}

impl GaussianSearchState {
    /// Isotropic start `N(mean, sigma^2 I)`; full covariance when
    /// `mean.len() <= full_max_dim`, diagonal otherwise.
    pub fn new(mean: Vec<f64>, sigma: f64, batch_size: usize, full_max_dim: usize) -> Result<Self> {
        let n = mean.len();
        if n == 0 || batch_size < 2 {
            return Err(Error::Config("search needs dim >= 1 and batch >= 2".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numerical("initial mean / step size not finite".into()));
        }
        let separable = n > full_max_dim;
        let cov = if separable {
            Covariance::Diagonal { c: vec![1.0; n] }
        } else {
            let mut c = vec![0.0; n * n];
            for i in 0..n {
                c[i * n + i] = 1.0;
            }
            Covariance::Full {
                b: c.clone(),
                c,
                d: vec![1.0; n],
                eigen_generation: 0,
            }
        };
        Ok(GaussianSearchState {
            params: Params::new(n, batch_size, separable),
            p_sigma: vec![0.0; n],
            p_c: vec![0.0; n],
            mean,
            sigma,
            batch_size,
            cov,
            generation: 0,
        })
    }

    /// Full-covariance state with an explicit SPD covariance matrix.
    pub fn with_covariance(mean: Vec<f64>, sigma: f64, batch_size: usize, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} covariance for dimension {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let mut s = Self::new(mean, sigma, batch_size, usize::MAX)?;
        if let Covariance::Full { c, .. } = &mut s.cov {
            for i in 0..n {
                for j in 0..n {
                    c[i * n + j] = cov[(i, j)];
                }
            }
        }
        s.refresh_eigen()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.cov, Covariance::Diagonal { .. })
    }

    /// Dense covariance matrix `C` (without the `sigma^2` factor).
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        match &self.cov {
            Covariance::Full { c, .. } => DMatrix::from_row_slice(n, n, c),
            Covariance::Diagonal { c } => DMatrix::from_diagonal(&DVector::from_column_slice(c)),
        }
    }

    /// Draws `batch_size` samples `mean + sigma * C^{1/2} z`.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..self.batch_size)
            .map(|_| {
                let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let y = self.scale_by_sqrt_c(&z);
                self.mean
                    .iter()
                    .zip(&y)
                    .map(|(m, v)| m + self.sigma * v)
                    .collect()
            })
            .collect()
    }

    fn scale_by_sqrt_c(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        match &self.cov {
            Covariance::Full { b, d, .. } => {
                let dz: Vec<f64> = z.iter().zip(d).map(|(z, d)| z * d).collect();
                (0..n)
                    .map(|i| b[i * n..(i + 1) * n].iter().zip(&dz).map(|(b, v)| b * v).sum())
                    .collect()
            }
            Covariance::Diagonal { c } => z.iter().zip(c).map(|(z, c)| z * c.sqrt()).collect(),
        }
    }

    /// `C^{-1/2} y`.
    fn inv_sqrt_c(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        match &self.cov {
            Covariance::Full { b, d, .. } => {
                // B D^-1 B^T y
                let bty: Vec<f64> = (0..n)
                    .map(|j| (0..n).map(|i| b[i * n + j] * y[i]).sum::<f64>() / d[j])
                    .collect();
                (0..n)
                    .map(|i| b[i * n..(i + 1) * n].iter().zip(&bty).map(|(b, v)| b * v).sum())
                    .collect()
            }
            Covariance::Diagonal { c } => y.iter().zip(c).map(|(y, c)| y / c.sqrt()).collect(),
        }
    }

    /// Updates the distribution from `solutions` ordered best-first by
    /// `order` (a permutation of sample indices). Only the top half is used.
    pub fn tell(&mut self, solutions: &[Vec<f64>], order: &[usize]) -> Result<()> {
        let n = self.dim();
        if solutions.len() != self.batch_size || order.len() != solutions.len() {
            return Err(Error::LengthMismatch(format!(
                "{} solutions / {} ranks for batch {}",
                solutions.len(),
                order.len(),
                self.batch_size
            )));
        }
        if solutions.iter().any(|s| s.len() != n) {
            return Err(Error::LengthMismatch("solution dimension".into()));
        }
        if solutions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite solution".into()));
        }
        let p = self.params.clone();
        let ys: Vec<Vec<f64>> = order[..p.weights.len()]
            .iter()
            .map(|&i| {
                solutions[i]
                    .iter()
                    .zip(&self.mean)
                    .map(|(x, m)| (x - m) / self.sigma)
                    .collect()
            })
            .collect();
        let mut y_w = vec![0.0; n];
        for (w, y) in p.weights.iter().zip(&ys) {
            for (a, v) in y_w.iter_mut().zip(y) {
                *a += w * v;
            }
        }
        for (m, v) in self.mean.iter_mut().zip(&y_w) {
            *m += self.sigma * v;
        }

        let c_y = self.inv_sqrt_c(&y_w);
        let cs = (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();
        for (ps, v) in self.p_sigma.iter_mut().zip(&c_y) {
            *ps = (1.0 - p.c_sigma) * *ps + cs * v;
        }
        let ps_norm = self.p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.generation += 1;
        let denom = (1.0 - (1.0 - p.c_sigma).powf(2.0 * self.generation as f64)).sqrt();
        let h_sigma = ps_norm / denom < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
        let cc = (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt();
        for (pc, v) in self.p_c.iter_mut().zip(&y_w) {
            *pc = (1.0 - p.c_c) * *pc + if h_sigma { cc * v } else { 0.0 };
        }
        let decay = 1.0 - p.c_1 - p.c_mu
            + if h_sigma { 0.0 } else { p.c_1 * p.c_c * (2.0 - p.c_c) };

        match &mut self.cov {
            Covariance::Full { c, .. } => {
                for i in 0..n {
                    for j in 0..=i {
                        let mut rank_mu = 0.0;
                        for (w, y) in p.weights.iter().zip(&ys) {
                            rank_mu += w * y[i] * y[j];
                        }
                        let v = decay * c[i * n + j]
                            + p.c_1 * self.p_c[i] * self.p_c[j]
                            + p.c_mu * rank_mu;
                        c[i * n + j] = v;
                        c[j * n + i] = v;
                    }
                }
            }
            Covariance::Diagonal { c } => {
                for (i, ci) in c.iter_mut().enumerate() {
                    let rank_mu: f64 = p.weights.iter().zip(&ys).map(|(w, y)| w * y[i] * y[i]).sum();
                    *ci = decay * *ci + p.c_1 * self.p_c[i] * self.p_c[i] + p.c_mu * rank_mu;
                }
            }
        }
        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).min(1.0).exp();

        let lazy_gap = (self.batch_size as f64 / ((p.c_1 + p.c_mu) * n as f64 * 10.0)).max(1.0);
        if let Covariance::Full { eigen_generation, .. } = &self.cov {
            if (self.generation - *eigen_generation) as f64 >= lazy_gap {
                self.refresh_eigen()?;
            }
        }
        if !self.sigma.is_finite() || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numerical("search distribution diverged".into()));
        }
        Ok(())
    }

    fn refresh_eigen(&mut self) -> Result<()> {
        let n = self.dim();
        let generation = self.generation;
        if let Covariance::Full {
            c,
            b,
            d,
            eigen_generation,
        } = &mut self.cov
        {
            let m = DMatrix::from_row_slice(n, n, c);
            let eig = SymmetricEigen::new(m);
            if eig.eigenvalues.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::Numerical("covariance lost positive definiteness".into()));
            }
            for i in 0..n {
                d[i] = eig.eigenvalues[i].sqrt();
                for j in 0..n {
                    b[i * n + j] = eig.eigenvectors[(i, j)];
                }
            }
            *eigen_generation = generation;
        }
        Ok(())
    }

    /// True when the distribution has collapsed or become ill-conditioned.
    pub fn is_degenerate(&self) -> bool {
        if !(self.sigma > 1e-12 && self.sigma < 1e12) {
            return true;
        }
        let (lo, hi) = match &self.cov {
            Covariance::Full { d, .. } => d.iter().fold((f64::MAX, 0.0f64), |(lo, hi), v| {
                (lo.min(v * v), hi.max(v * v))
            }),
            Covariance::Diagonal { c } => c
                .iter()
                .fold((f64::MAX, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v))),
        };
        !(lo > 0.0) || hi / lo > 1e14
    }
}
