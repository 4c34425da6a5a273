//! The `q`-variation statistic, the constant `e_H`, and the fBm
//! `1/H`-variation convergence experiment.

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, SamplerKind};
use crate::grid::{HurstParam, RealPath, UniformGrid};
use crate::report::{ConvergenceReport, ConvergenceRow};
use crate::runner::Runner;
use crate::seed::{derive_master, SeedSpec};
use crate::stats::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationResult {
    pub n: usize,
    pub q: f64,
    pub value: f64,
}

/// `Σ |X_{t_{i+1}} - X_{t_i}|^q` over the path's own grid, summed left to
/// right with compensation.
pub fn variation_vnq(path: &RealPath, q: f64) -> VariationResult {
    let value = path
        .increments()
        .map(|dx| dx.abs().powf(q))
        .collect::<CompensatedSum>()
        .value();
    VariationResult {
        n: path.grid().n(),
        q,
        value,
    }
}

/// `E|Z|^{1/H}` for a standard Gaussian `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EHConstant {
    pub h: HurstParam,
    pub value: f64,
}

pub fn e_h(h: HurstParam) -> EHConstant {
    let p = 1.0 / h.value();
    let value = 2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt();
    EHConstant { h, value }
}

/// Grid lattice and Monte Carlo budget shared by the convergence
/// experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub horizon: f64,
    /// Strictly increasing grid sizes.
    pub grids: Vec<usize>,
    /// Replications per grid size, at least 2.
    pub paths: usize,
    pub master_seed: u64,
    pub sampler: SamplerKind,
}

impl Lattice {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.grids.is_empty() || self.grids[0] == 0 {
            return Err(Error::Domain(
                "grid sizes must be non-empty and positive".into(),
            ));
        }
        if self.grids.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!(
                "grid sizes must be strictly increasing, got {:?}",
                self.grids
            )));
        }
        if self.paths < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 replications, got {}",
                self.paths
            )));
        }
        Ok(())
    }

    /// Seeds for grid size `n`: one derived master per grid, replications
    /// indexed `0..paths` under it.
    pub fn seed(&self, n: usize, replication: u64) -> SeedSpec {
        SeedSpec::new(derive_master(self.master_seed, n as u64), replication)
    }

    /// Run `per_path` for every replication on every grid and summarize.
    pub(crate) fn convergence<F>(
        &self,
        runner: &Runner,
        h: HurstParam,
        per_path: F,
    ) -> Result<ConvergenceReport>
    where
        F: Fn(&FbmSampler, SeedSpec) -> Result<PathOutcome> + Sync,
    {
        self.validate()?;
        let mut rows = Vec::with_capacity(self.grids.len());
        for &n in &self.grids {
            let grid = UniformGrid::new(self.horizon, n)?;
            let sampler = FbmSampler::new(self.sampler, h, grid)?;
            let outcomes = runner.replicate(self.paths, |r| per_path(&sampler, self.seed(n, r)))?;
            let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
            let targets: Vec<f64> = outcomes.iter().map(|o| o.target).collect();
            let xi: Option<Vec<f64>> = outcomes.iter().map(|o| o.xi_target).collect();
            let row = ConvergenceRow::from_samples(n, &values, &targets, xi.as_deref())?;
            log::info!(
                "n = {n}: estimate {:.6}, target {:.6}, rel_err {:.4}",
                row.estimate,
                row.target,
                row.rel_err
            );
            rows.push(row);
        }
        Ok(ConvergenceReport::new(rows))
    }
}

/// Per-replication output of a convergence experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PathOutcome {
    pub value: f64,
    pub target: f64,
    pub xi_target: Option<f64>,
}

/// `V_n^{1/H}(B)` against its limit `e_H T`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationExperiment {
    pub hurst: HurstParam,
    pub lattice: Lattice,
}

impl VariationExperiment {
    pub fn run(&self, runner: &Runner) -> Result<ConvergenceReport> {
        let q = 1.0 / self.hurst.value();
        let target = e_h(self.hurst).value * self.lattice.horizon;
        self.lattice
            .convergence(runner, self.hurst, |sampler, seed| {
                let path = sampler.sample(seed);
                Ok(PathOutcome {
                    value: variation_vnq(&path, q).value,
                    target,
                    xi_target: None,
                })
            })
    }
}
