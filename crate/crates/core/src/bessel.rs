//! The fractional Bessel process `R_t = ‖B_t‖`, its divergence part `Θ`,
//! and the experiments on `Θ` and on negative moments of `R`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, SamplerKind};
use crate::grid::{HurstParam, MultiPath, RealPath, UniformGrid};
use crate::ito::{power_weighted_cumulative, xi_target};
use crate::report::{ConvergenceReport, KsReport, KsRow, ScalingReport, ScalingRow};
use crate::runner::Runner;
use crate::seed::{derive_master, SeedSpec};
use crate::stats::{aggregate, ks_two_sample, linear_fit};
use crate::variation::{e_h, variation_vnq, Lattice, PathOutcome};

fn require_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Domain(format!(
            "the Bessel process needs d >= 2, got d = {d}"
        )));
    }
    Ok(())
}

/// Nodewise Euclidean norm of the rows.
pub fn bessel_from_multipath(path: &MultiPath) -> Result<RealPath> {
    require_dim(path.dim())?;
    let r = path
        .rows()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    RealPath::new(*path.grid(), r)
}

fn drift_and_radius(path: &MultiPath, h: HurstParam) -> Result<(RealPath, Vec<f64>)> {
    let r = bessel_from_multipath(path)?;
    let grid = *path.grid();
    let hv = h.value();
    let mut g = vec![0.0; grid.n() + 1];
    for (i, &ri) in r.values().iter().enumerate().skip(1) {
        if !(ri > 0.0) {
            return Err(Error::DegeneratePath { node: i });
        }
        g[i] = grid.node(i).powf(hv) / ri;
    }
    // s^{2H-1}/R_s = s^{H-1} (s^H/R_s): the first factor is integrated exactly
    // per cell, the second sampled at the right endpoint.
    let scale = hv * (path.dim() - 1) as f64;
    let drift = power_weighted_cumulative(&grid, &g, hv)
        .into_iter()
        .map(|v| scale * v)
        .collect();
    Ok((r, drift))
}

/// `Θ_t = R_t - H(d-1) ∫_0^t s^{2H-1}/R_s ds` at every node.
pub fn theta_path(path: &MultiPath, h: HurstParam) -> Result<RealPath> {
    let (r, drift) = drift_and_radius(path, h)?;
    let theta = r.values().iter().zip(&drift).map(|(a, b)| a - b).collect();
    RealPath::new(*path.grid(), theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BesselPaths {
    pub base: MultiPath,
    pub r: RealPath,
    pub theta: RealPath,
}

impl BesselPaths {
    pub fn new(base: MultiPath, h: HurstParam) -> Result<Self> {
        let (r, drift) = drift_and_radius(&base, h)?;
        let theta = r.values().iter().zip(&drift).map(|(a, b)| a - b).collect();
        let theta = RealPath::new(*base.grid(), theta)?;
        Ok(Self { base, r, theta })
    }

    /// `R_t - Θ_t`, the drift term.
    pub fn drift(&self) -> Vec<f64> {
        self.r
            .values()
            .iter()
            .zip(self.theta.values())
            .map(|(a, b)| a - b)
            .collect()
    }
}

/// `E‖Z‖^{-q}` for `Z ~ N(0, I_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KqConstant {
    pub d: usize,
    pub q: f64,
    pub value: f64,
}

impl KqConstant {
    pub fn new(d: usize, q: f64) -> Result<Self> {
        require_moment(d, q)?;
        let df = d as f64;
        let value = (-q / 2.0 * std::f64::consts::LN_2 + ln_gamma((df - q) / 2.0)
            - ln_gamma(df / 2.0))
        .exp();
        Ok(Self { d, q, value })
    }
}

fn require_moment(d: usize, q: f64) -> Result<()> {
    if !(q > 0.0 && q < d as f64) {
        return Err(Error::Gate(format!(
            "negative moment of order q requires 0 < q < d, got q = {q}, d = {d}"
        )));
    }
    Ok(())
}

/// The variation corollary for `Θ` needs `2 d H^2 > 1`.
pub fn theta_variation_gate(d: usize, h: HurstParam) -> Result<()> {
    require_dim(d)?;
    let v = 2.0 * d as f64 * h.value() * h.value();
    if !(v > 1.0) {
        return Err(Error::Gate(format!(
            "requires 2dH^2 > 1, got 2 * {d} * {}^2 = {v:.6}",
            h.value()
        )));
    }
    Ok(())
}

/// `V_n^{1/H}(Θ)` against `e_H T`. The target is also estimated by averaging
/// `|<B_s/R_s, ξ>|^{1/H}` over Gaussian `ξ`, and the two must agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVariationExperiment {
    pub dimension: usize,
    pub hurst: HurstParam,
    pub lattice: Lattice,
}

impl ThetaVariationExperiment {
    pub fn validate(&self) -> Result<()> {
        theta_variation_gate(self.dimension, self.hurst)?;
        self.lattice.validate()
    }

    pub fn run(&self, runner: &Runner) -> Result<ConvergenceReport> {
        self.validate()?;
        let (d, h) = (self.dimension, self.hurst);
        let p = 1.0 / h.value();
        let target = e_h(h).value * self.lattice.horizon;
        self.lattice.convergence(runner, h, |sampler, seed| {
            let b = sampler.sample_multi(d, seed)?;
            let theta = theta_path(&b, h)?;
            let mut unit = Vec::with_capacity((b.grid().n() + 1) * d);
            unit.extend(std::iter::repeat_n(0.0, d));
            for row in b.rows().skip(1) {
                let r = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                unit.extend(row.iter().map(|v| v / r));
            }
            let unit = MultiPath::new(*b.grid(), d, unit)?;
            Ok(PathOutcome {
                value: variation_vnq(&theta, p).value,
                target,
                xi_target: Some(xi_target(&unit, p, seed)),
            })
        })
    }
}

/// Smallest grid on `[0, max(times)]` with at most [`crate::fbm::CHOLESKY_MAX_N`]
/// cells having every requested time as a node.
fn grid_through(times: &[f64]) -> Result<UniformGrid> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    for n in 1..=crate::fbm::CHOLESKY_MAX_N {
        let grid = UniformGrid::new(horizon, n)?;
        if times.iter().all(|&t| grid.index_of(t).is_some()) {
            return Ok(grid);
        }
    }
    Err(Error::Domain(format!(
        "no uniform grid of moderate size passes through {times:?}"
    )))
}

/// Monte Carlo `E R_t^{-q}` at several times, with a log-log fit against
/// `log t`. The fitted slope targets `-Hq`, the intercept `log K_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeMomentExperiment {
    pub dimension: usize,
    pub q: f64,
    pub hurst: HurstParam,
    pub times: Vec<f64>,
    pub paths: usize,
    pub master_seed: u64,
}

impl NegativeMomentExperiment {
    pub fn validate(&self) -> Result<()> {
        require_dim(self.dimension)?;
        require_moment(self.dimension, self.q)?;
        if self.times.len() < 3 || self.times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::Domain(format!(
                "need at least 3 positive times, got {:?}",
                self.times
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

    pub fn run(&self, runner: &Runner) -> Result<ScalingReport> {
        self.validate()?;
        let (d, q, h) = (self.dimension, self.q, self.hurst);
        let mut times = self.times.clone();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let grid = grid_through(&times)?;
        let idx: Vec<usize> = times
            .iter()
            .map(|&t| grid.index_of(t).expect("on grid"))
            .collect();
        let sampler = FbmSampler::new(SamplerKind::Cholesky, h, grid)?;
        let master = derive_master(self.master_seed, grid.n() as u64);
        let samples = runner.replicate(self.paths, |r| {
            let b = sampler.sample_multi(d, SeedSpec::new(master, r))?;
            let rad = bessel_from_multipath(&b)?;
            idx.iter()
                .map(|&i| match rad.values()[i] {
                    v if v > 0.0 => Ok(v.powf(-q)),
                    _ => Err(Error::DegeneratePath { node: i }),
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        let kq = KqConstant::new(d, q)?.value;
        let mut rows = Vec::with_capacity(times.len());
        for (j, &t) in times.iter().enumerate() {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let agg = aggregate(&col)?;
            rows.push(ScalingRow {
                x: t,
                estimate: agg.mean,
                stderr: agg.stderr.expect("two or more"),
                reference: kq * t.powf(-h.value() * q),
            });
        }
        let lx: Vec<f64> = rows.iter().map(|r| r.x.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
        let fit = linear_fit(&lx, &ly)?;
        Ok(ScalingReport {
            x_label: "t".into(),
            rows,
            fit,
            target_slope: -h.value() * q,
            target_intercept: Some(kq.ln()),
        })
    }
}

/// Default significance level of the marginal KS comparisons, before
/// correction.
pub const SELFSIM_ALPHA: f64 = 0.01;

/// Marginal self-similarity of `Θ`: `a^{-H} Θ_{at}` against `Θ_t` from
/// independent samples, one KS test per scale `a`, plus a mis-scaled
/// `a^{-2H}` control that should be rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarityTest {
    pub dimension: usize,
    pub hurst: HurstParam,
    pub t: f64,
    pub scales: Vec<f64>,
    pub paths: usize,
    pub master_seed: u64,
    /// Cells of the common grid on `[0, max(1, max a) t]`.
    pub grid_n: usize,
    /// Family-wise level; each same-law comparison uses `alpha / scales.len()`.
    pub alpha: f64,
}

pub const SELFSIM_GRID: usize = 1024;

impl SelfSimilarityTest {
    fn grid(&self) -> Result<UniformGrid> {
        let top = self.scales.iter().copied().fold(1.0, f64::max);
        UniformGrid::new(top * self.t, self.grid_n)
    }

    pub fn validate(&self) -> Result<()> {
        require_dim(self.dimension)?;
        if self.scales.is_empty() || self.scales.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Domain(format!(
                "scales must be positive, got {:?}",
                self.scales
            )));
        }
        if !(self.t > 0.0) {
            return Err(Error::Domain(format!("t must be positive, got {}", self.t)));
        }
        if self.paths < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 replications, got {}",
                self.paths
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        let grid = self.grid()?;
        for &a in std::iter::once(&1.0).chain(&self.scales) {
            if grid.index_of(a * self.t).is_none() {
                return Err(Error::Domain(format!(
                    "time {} is not a node of the {}-cell grid on [0, {}]",
                    a * self.t,
                    grid.n(),
                    grid.horizon()
                )));
            }
        }
        Ok(())
    }

    /// `Θ` at node `node` for `paths` independent paths from seed label
    /// `arm`.
    fn arm(
        &self,
        runner: &Runner,
        sampler: &FbmSampler,
        arm: u64,
        node: usize,
    ) -> Result<Vec<f64>> {
        let master = derive_master(self.master_seed, arm);
        runner.replicate(self.paths, |r| {
            let b = sampler.sample_multi(self.dimension, SeedSpec::new(master, r))?;
            Ok(theta_path(&b, self.hurst)?.values()[node])
        })
    }

    pub fn run(&self, runner: &Runner) -> Result<KsReport> {
        self.validate()?;
        let grid = self.grid()?;
        let sampler = FbmSampler::new(SamplerKind::Circulant, self.hurst, grid)?;
        let hv = self.hurst.value();
        let base = self.arm(
            runner,
            &sampler,
            0,
            grid.index_of(self.t).expect("validated"),
        )?;
        let threshold = self.alpha / self.scales.len() as f64;
        let control_scale = if self.scales.contains(&4.0) {
            4.0
        } else {
            self.scales.iter().copied().fold(f64::MIN, f64::max)
        };
        let mut rows = Vec::new();
        for (j, &a) in self.scales.iter().enumerate() {
            let node = grid.index_of(a * self.t).expect("validated");
            let arm = self.arm(runner, &sampler, j as u64 + 1, node)?;
            let mut compare = |exponent: f64, control: bool, threshold: f64| -> Result<()> {
                let scaled: Vec<f64> = arm.iter().map(|v| v * a.powf(-exponent)).collect();
                let ks = ks_two_sample(&scaled, &base)?;
                rows.push(KsRow {
                    scale: a,
                    exponent,
                    control,
                    statistic: ks.statistic,
                    p_value: ks.p_value,
                    threshold,
                });
                Ok(())
            };
            compare(hv, false, threshold)?;
            if a == control_scale {
                compare(2.0 * hv, true, self.alpha)?;
            }
        }
        Ok(KsReport { t: self.t, rows })
    }
}

/// `Θ_t` at grid node `node` for `paths` replications (seed label `n`).
pub fn theta_samples(
    runner: &Runner,
    dimension: usize,
    hurst: HurstParam,
    grid: UniformGrid,
    node: usize,
    paths: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    let sampler = FbmSampler::new(SamplerKind::Circulant, hurst, grid)?;
    let master = derive_master(master_seed, grid.n() as u64);
    runner.replicate(paths, |r| {
        let b = sampler.sample_multi(dimension, SeedSpec::new(master, r))?;
        Ok(theta_path(&b, hurst)?.values()[node])
    })
}
