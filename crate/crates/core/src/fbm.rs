//! Exact fractional Brownian motion sampling on uniform grids.
//!
//! Both samplers draw the stationary increment sequence (fractional Gaussian
//! noise) and cumulative-sum it. The Cholesky route factorizes the increment
//! Toeplitz matrix directly; the circulant route embeds it into a circulant
//! matrix of size `2n` diagonalized by the FFT.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{HurstParam, MultiPath, RealPath, UniformGrid};
use crate::seed::SeedSpec;

/// Largest grid the dense Cholesky sampler accepts.
pub const CHOLESKY_MAX_N: usize = 4096;

/// Relative tolerance on negative circulant eigenvalues.
pub const EIGENVALUE_TOL: f64 = 1e-10;

/// `R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2`.
pub fn covariance(h: HurstParam, t: f64, s: f64) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(Error::Domain(format!(
            "covariance needs t, s >= 0, got ({t}, {s})"
        )));
    }
    if t == s {
        return Ok(pow_2h(t, h));
    }
    Ok(0.5 * (pow_2h(t, h) + pow_2h(s, h) - pow_2h((t - s).abs(), h)))
}

fn pow_2h(x: f64, h: HurstParam) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(2.0 * h.value())
    }
}

/// Autocovariance at lag `k` of increments over steps of length `dt`.
pub fn fgn_autocovariance(h: HurstParam, k: usize, dt: f64) -> f64 {
    let two_h = 2.0 * h.value();
    let k = k as f64;
    let unit = if k == 0.0 {
        1.0
    } else {
        0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).abs().powf(two_h) - 2.0 * k.powf(two_h))
    };
    unit * dt.powf(two_h)
}

fn path_from_increments(grid: UniformGrid, increments: impl Iterator<Item = f64>) -> RealPath {
    let mut values = Vec::with_capacity(grid.n() + 1);
    let mut acc = 0.0;
    values.push(acc);
    for x in increments {
        acc += x;
        values.push(acc);
    }
    RealPath::new(grid, values).expect("increment count matches grid")
}

/// Which exact sampler to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Cholesky,
    #[default]
    Circulant,
}

/// A reusable exact sampler for one `(H, grid)` pair.
#[derive(Clone)]
pub enum FbmSampler {
    Cholesky(CholeskySampler),
    Circulant(CirculantSampler),
}

impl FbmSampler {
    pub fn new(kind: SamplerKind, h: HurstParam, grid: UniformGrid) -> Result<Self> {
        Ok(match kind {
            SamplerKind::Cholesky => Self::Cholesky(CholeskySampler::new(h, grid)?),
            SamplerKind::Circulant => Self::Circulant(CirculantSampler::new(h, grid)?),
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        match self {
            Self::Cholesky(s) => &s.grid,
            Self::Circulant(s) => &s.grid,
        }
    }

    /// Sample using the stream `component` of `seed`.
    pub fn sample_component(&self, seed: SeedSpec, component: u64) -> RealPath {
        match self {
            Self::Cholesky(s) => s.sample_component(seed, component),
            Self::Circulant(s) => s.sample_component(seed, component),
        }
    }

    pub fn sample(&self, seed: SeedSpec) -> RealPath {
        self.sample_component(seed, 0)
    }

    /// `d` independent columns; column `j` uses stream `j`.
    pub fn sample_multi(&self, d: usize, seed: SeedSpec) -> Result<MultiPath> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let cols: Vec<RealPath> = (0..d as u64)
            .map(|j| self.sample_component(seed, j))
            .collect();
        MultiPath::from_columns(&cols)
    }
}

/// Dense Cholesky factor of the fGn covariance matrix.
#[derive(Clone)]
pub struct CholeskySampler {
    grid: UniformGrid,
    factor: Arc<DMatrix<f64>>,
}

impl CholeskySampler {
    pub fn new(h: HurstParam, grid: UniformGrid) -> Result<Self> {
        let n = grid.n();
        if n > CHOLESKY_MAX_N {
            return Err(Error::Domain(format!(
                "Cholesky sampler limited to n <= {CHOLESKY_MAX_N}, got {n}"
            )));
        }
        let gamma: Vec<f64> = (0..n)
            .map(|k| fgn_autocovariance(h, k, grid.step()))
            .collect();
        let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
        let factor = match cov.clone().cholesky() {
            Some(c) => c.l(),
            None => {
                let jitter = 1e-12 * cov.trace() / n as f64;
                warn!("Cholesky failed for n = {n}, retrying with diagonal jitter {jitter:e}");
                let mut cov = cov;
                for i in 0..n {
                    cov[(i, i)] += jitter;
                }
                cov.cholesky()
                    .ok_or(Error::NotPositiveDefinite { n, jitter })?
                    .l()
            }
        };
        Ok(Self {
            grid,
            factor: Arc::new(factor),
        })
    }

    pub fn sample_component(&self, seed: SeedSpec, component: u64) -> RealPath {
        let n = self.grid.n();
        let mut rng = seed.rng(component);
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let x = &*self.factor * z;
        path_from_increments(self.grid, x.iter().copied())
    }
}

/// Circulant embedding of the fGn covariance (Davies-Harte construction).
#[derive(Clone)]
pub struct CirculantSampler {
    grid: UniformGrid,
    /// `sqrt(λ_k / 2n)` for the `2n` circulant eigenvalues.
    scale: Arc<Vec<f64>>,
    fft: Arc<dyn Fft<f64>>,
}

impl CirculantSampler {
    pub fn new(h: HurstParam, grid: UniformGrid) -> Result<Self> {
        let eig = circulant_eigenvalues(h, grid)?;
        let m = eig.len();
        let max = eig.iter().copied().fold(0.0, f64::max);
        let tol = EIGENVALUE_TOL * max;
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::Embedding {
                min_eigenvalue: min,
                tolerance: tol,
            });
        }
        if min < 0.0 {
            warn!("clamping circulant eigenvalues down to {min:e} to zero");
        }
        let scale = eig
            .iter()
            .map(|&l| (l.max(0.0) / m as f64).sqrt())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        Ok(Self {
            grid,
            scale: Arc::new(scale),
            fft,
        })
    }

    pub fn sample_component(&self, seed: SeedSpec, component: u64) -> RealPath {
        let n = self.grid.n();
        let mut rng = seed.rng(component);
        let mut buf: Vec<Complex<f64>> = self
            .scale
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        path_from_increments(self.grid, buf[..n].iter().map(|c| c.re))
    }
}

/// Eigenvalues of the size-`2n` circulant embedding of the increment
/// covariance, i.e. the DFT of `(γ_0, …, γ_n, γ_{n-1}, …, γ_1)`.
pub fn circulant_eigenvalues(h: HurstParam, grid: UniformGrid) -> Result<Vec<f64>> {
    let n = grid.n();
    let m = 2 * n;
    let gamma: Vec<f64> = (0..=n)
        .map(|k| fgn_autocovariance(h, k, grid.step()))
        .collect();
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| Complex::new(gamma[if j <= n { j } else { m - j }], 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    Ok(row.into_iter().map(|c| c.re).collect())
}

pub fn sample_fbm_cholesky(h: HurstParam, grid: UniformGrid, seed: SeedSpec) -> Result<RealPath> {
    Ok(CholeskySampler::new(h, grid)?.sample_component(seed, 0))
}

pub fn sample_fbm_circulant(h: HurstParam, grid: UniformGrid, seed: SeedSpec) -> Result<RealPath> {
    Ok(CirculantSampler::new(h, grid)?.sample_component(seed, 0))
}

/// `d` independent fBm components sampled by circulant embedding.
pub fn sample_fbm_multi(
    h: HurstParam,
    d: usize,
    grid: UniformGrid,
    seed: SeedSpec,
) -> Result<MultiPath> {
    FbmSampler::new(SamplerKind::Circulant, h, grid)?.sample_multi(d, seed)
}
