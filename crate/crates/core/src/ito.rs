//! Divergence integrals evaluated pathwise through Itô-type formulas, and the
//! `1/H`-variation experiments built on them.
//!
//! For `u = f'(B)` the divergence integral is
//! `X_t = f(B_t) - f(0) - H ∫_0^t f''(B_s) s^{2H-1} ds`, and the
//! multidimensional analogue replaces `f''` by the Laplacian. Nothing here
//! discretizes `δB` directly.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbm::SamplerKind;
use crate::grid::{HurstParam, MultiPath, RealPath, UniformGrid};
use crate::report::{ConvergenceReport, ScalingReport, ScalingRow};
use crate::runner::Runner;
use crate::seed::{derive_master, SeedSpec, AUX_STREAM};
use crate::stats::{aggregate, linear_fit, CompensatedSum};
use crate::variation::{e_h, variation_vnq, Lattice, PathOutcome};

/// Total standard-normal draws per path for the Gaussian-average target.
pub const XI_DRAWS: usize = 10_000;

const PROBES: [f64; 6] = [-1.7, -0.6, -0.15, 0.35, 0.8, 1.9];
const FD_TOL: f64 = 1e-4;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Labels accepted by [`SmoothIntegrandSpec::registered`] and
/// [`MultiIntegrandSpec::registered`].
pub const WHITELIST: [&str; 4] = ["identity", "half-square", "cubic", "constant"];

fn fd_agrees(fd: f64, exact: f64) -> bool {
    (fd - exact).abs() <= FD_TOL * exact.abs().max(1.0)
}

/// A potential `f` with its first and second derivatives.
#[derive(Clone)]
pub struct SmoothIntegrandSpec {
    label: String,
    f: ScalarFn,
    fp: ScalarFn,
    fpp: ScalarFn,
}

impl fmt::Debug for SmoothIntegrandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothIntegrandSpec")
            .field("label", &self.label)
            .finish()
    }
}

impl SmoothIntegrandSpec {
    /// Register a potential. The supplied derivatives are checked against
    /// central differences of `f` on a fixed probe set.
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fp: impl Fn(f64) -> f64 + Send + Sync + 'static,
        fpp: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let label = label.into();
        for &x in &PROBES {
            let e = 1e-3 * x.abs().max(1.0);
            let d1 = (f(x + e) - f(x - e)) / (2.0 * e);
            let d2 = (f(x + e) - 2.0 * f(x) + f(x - e)) / (e * e);
            if !fd_agrees(d1, fp(x)) || !fd_agrees(d2, fpp(x)) {
                return Err(Error::Domain(format!(
                    "integrand {label:?}: supplied derivatives disagree with finite differences at x = {x}"
                )));
            }
        }
        Ok(Self {
            label,
            f: Arc::new(f),
            fp: Arc::new(fp),
            fpp: Arc::new(fpp),
        })
    }

    pub fn registered(label: &str) -> Result<Self> {
        match label {
            "identity" => Self::new(label, |x| x, |_| 1.0, |_| 0.0),
            "half-square" => Self::new(label, |x| 0.5 * x * x, |x| x, |_| 1.0),
            "cubic" => Self::new(label, |x| x * x * x / 3.0, |x| x * x, |x| 2.0 * x),
            "constant" => Self::new(label, |_| 1.0, |_| 0.0, |_| 0.0),
            _ => Err(unknown_label(label)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// The integrand `u = f'`.
    pub fn fp(&self, x: f64) -> f64 {
        (self.fp)(x)
    }

    pub fn fpp(&self, x: f64) -> f64 {
        (self.fpp)(x)
    }

    /// Pointwise sum of two potentials.
    pub fn sum(&self, other: &Self) -> Self {
        let (a, b) = (self.clone(), other.clone());
        let (a1, b1) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        Self {
            label: format!("{}+{}", self.label, other.label),
            f: Arc::new(move |x| a.f(x) + b.f(x)),
            fp: Arc::new(move |x| a1.fp(x) + b1.fp(x)),
            fpp: Arc::new(move |x| a2.fpp(x) + b2.fpp(x)),
        }
    }
}

fn unknown_label(label: &str) -> Error {
    Error::Config(format!(
        "unknown integrand {label:?}; registered: {}",
        WHITELIST.join(", ")
    ))
}

/// A potential `F` on `R^d` with gradient and Laplacian.
#[derive(Clone)]
pub struct MultiIntegrandSpec {
    label: String,
    dim: usize,
    f: VectorFn,
    grad: GradFn,
    laplacian: VectorFn,
}

impl fmt::Debug for MultiIntegrandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiIntegrandSpec")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish()
    }
}

impl MultiIntegrandSpec {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        laplacian: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let label = label.into();
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let mut g = vec![0.0; dim];
        for k in 0..PROBES.len() {
            let x: Vec<f64> = (0..dim)
                .map(|i| PROBES[(k + i) % PROBES.len()] * (1.0 + 0.1 * i as f64))
                .collect();
            grad(&x, &mut g);
            let mut lap = 0.0;
            for i in 0..dim {
                let e = 1e-3 * x[i].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += e;
                xm[i] -= e;
                let d1 = (f(&xp) - f(&xm)) / (2.0 * e);
                if !fd_agrees(d1, g[i]) {
                    return Err(Error::Domain(format!(
                        "integrand {label:?}: gradient component {i} disagrees with finite differences"
                    )));
                }
                lap += (f(&xp) - 2.0 * f(&x) + f(&xm)) / (e * e);
            }
            if !fd_agrees(lap, laplacian(&x)) {
                return Err(Error::Domain(format!(
                    "integrand {label:?}: Laplacian disagrees with finite differences"
                )));
            }
        }
        Ok(Self {
            label,
            dim,
            f: Arc::new(f),
            grad: Arc::new(grad),
            laplacian: Arc::new(laplacian),
        })
    }

    /// Multidimensional forms of the registered potentials. `identity` is
    /// `<x, 1>/√d`, whose gradient has unit norm; the others act
    /// coordinatewise and summed.
    pub fn registered(label: &str, dim: usize) -> Result<Self> {
        let c = 1.0 / (dim as f64).sqrt();
        match label {
            "identity" => Self::new(
                label,
                dim,
                move |x| c * x.iter().sum::<f64>(),
                move |_, g| g.fill(c),
                |_| 0.0,
            ),
            "half-square" => Self::new(
                label,
                dim,
                |x| 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
                |x, g| g.copy_from_slice(x),
                move |_| dim as f64,
            ),
            "cubic" => Self::new(
                label,
                dim,
                |x| x.iter().map(|v| v * v * v / 3.0).sum::<f64>(),
                |x, g| g.iter_mut().zip(x).for_each(|(gi, v)| *gi = v * v),
                |x| 2.0 * x.iter().sum::<f64>(),
            ),
            "constant" => Self::new(label, dim, |_| 1.0, |_, g| g.fill(0.0), |_| 0.0),
            _ => Err(unknown_label(label)),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn f(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    /// The integrand `u = ∇F`.
    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        (self.laplacian)(x)
    }
}

/// How to read the Itô representation at a given `H`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItoReading {
    /// `H ∈ (1/4, 1)`: the right-hand side is the divergence integral.
    Plain,
    /// `H ≤ 1/4`: only the extended-domain reading applies.
    ExtendedDomain,
}

pub fn ito_reading(h: HurstParam) -> ItoReading {
    if h.value() > 0.25 {
        ItoReading::Plain
    } else {
        ItoReading::ExtendedDomain
    }
}

/// `Σ_{i < upto} g_{i+1} (t_{i+1}^α - t_i^α)/α`: the weight `s^{α-1}`
/// integrated exactly over each cell against the right-endpoint value of
/// `g`.
pub fn power_weighted_integral(grid: &UniformGrid, g: &[f64], alpha: f64, upto: usize) -> f64 {
    let mut acc = CompensatedSum::new();
    let mut prev = 0.0;
    for i in 0..upto {
        let next = grid.node(i + 1).powf(alpha);
        acc.add(g[i + 1] * (next - prev) / alpha);
        prev = next;
    }
    acc.value()
}

/// Running values of [`power_weighted_integral`] for `upto = 0..=n`.
pub fn power_weighted_cumulative(grid: &UniformGrid, g: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.n() + 1);
    let mut acc = CompensatedSum::new();
    let mut prev = 0.0;
    out.push(0.0);
    for i in 0..grid.n() {
        let next = grid.node(i + 1).powf(alpha);
        acc.add(g[i + 1] * (next - prev) / alpha);
        prev = next;
        out.push(acc.value());
    }
    out
}

/// `∫_0^{t_upto} g(s) s^{2H-1} ds` with `g` sampled at grid nodes.
/// `g[0]` is never read.
pub fn weighted_time_integral(grid: &UniformGrid, g: &[f64], h: HurstParam, upto: usize) -> f64 {
    power_weighted_integral(grid, g, 2.0 * h.value(), upto)
}

fn checked(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite {
            node,
            value: values[node],
        }),
        None => Ok(()),
    }
}

/// `X_t = f(B_t) - f(0) - H ∫_0^t f''(B_s) s^{2H-1} ds` at every node.
pub fn divergence_via_ito(
    spec: &SmoothIntegrandSpec,
    path: &RealPath,
    h: HurstParam,
) -> Result<RealPath> {
    let b = path.values();
    let f: Vec<f64> = b.iter().map(|&x| spec.f(x)).collect();
    let fpp: Vec<f64> = b.iter().map(|&x| spec.fpp(x)).collect();
    checked(&f)?;
    checked(&fpp)?;
    let f0 = spec.f(0.0);
    let drift = power_weighted_cumulative(path.grid(), &fpp, 2.0 * h.value());
    let x: Vec<f64> = f
        .iter()
        .zip(&drift)
        .map(|(fi, di)| fi - f0 - h.value() * di)
        .collect();
    checked(&x)?;
    RealPath::new(*path.grid(), x)
}

/// Multidimensional form: `F(B_t) - F(0) - H ∫_0^t ΔF(B_s) s^{2H-1} ds`.
pub fn divergence_via_ito_multi(
    spec: &MultiIntegrandSpec,
    path: &MultiPath,
    h: HurstParam,
) -> Result<RealPath> {
    if spec.dim() != path.dim() {
        return Err(Error::Domain(format!(
            "integrand has dimension {}, path has {}",
            spec.dim(),
            path.dim()
        )));
    }
    let f: Vec<f64> = path.rows().map(|r| spec.f(r)).collect();
    let lap: Vec<f64> = path.rows().map(|r| spec.laplacian(r)).collect();
    checked(&f)?;
    checked(&lap)?;
    let f0 = spec.f(&vec![0.0; spec.dim()]);
    let drift = power_weighted_cumulative(path.grid(), &lap, 2.0 * h.value());
    let x: Vec<f64> = f
        .iter()
        .zip(&drift)
        .map(|(fi, di)| fi - f0 - h.value() * di)
        .collect();
    checked(&x)?;
    RealPath::new(*path.grid(), x)
}

/// Right-endpoint Riemann sum `Σ |u_{t_{i+1}}|^p Δt`.
pub(crate) fn riemann_power(grid: &UniformGrid, u: impl Iterator<Item = f64>, p: f64) -> f64 {
    let sum: CompensatedSum = u.skip(1).map(|v| v.abs().powf(p)).collect();
    sum.value() * grid.step()
}

/// Gaussian-average form of the limit target:
/// `Σ_i Δt · mean_k |<u_{t_{i+1}}, ξ_k>|^p` with `ξ_k ~ N(0, I_d)` drawn
/// fresh at each node from the auxiliary stream of `seed`.
pub(crate) fn xi_target(u: &MultiPath, p: f64, seed: SeedSpec) -> f64 {
    let grid = u.grid();
    let per_node = (XI_DRAWS / grid.n()).max(1);
    let mut rng = seed.rng(AUX_STREAM);
    let mut xi = vec![0.0; u.dim()];
    let mut total = CompensatedSum::new();
    for row in u.rows().skip(1) {
        let mut node = CompensatedSum::new();
        for _ in 0..per_node {
            xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
            let dot: f64 = row.iter().zip(&xi).map(|(a, b)| a * b).sum();
            node.add(dot.abs().powf(p));
        }
        total.add(node.value() / per_node as f64);
    }
    total.value() * grid.step()
}

/// `V_n^{1/H}(X)` for `X = δ(u 1_{[0,T]})` against
/// `e_H ∫_0^T |u_s|^{1/H} ds` (one dimension) or the Gaussian-average target
/// with `u = ∇F(B)` (several dimensions). In several dimensions the target is
/// computed both in closed form and by averaging over `ξ`, and the two must
/// agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoVariationExperiment {
    pub label: String,
    pub hurst: HurstParam,
    pub dimension: usize,
    pub lattice: Lattice,
}

impl ItoVariationExperiment {
    pub fn run(&self, runner: &Runner) -> Result<ConvergenceReport> {
        let h = self.hurst;
        let p = 1.0 / h.value();
        let eh = e_h(h).value;
        if ito_reading(h) == ItoReading::ExtendedDomain {
            log::warn!(
                "H = {} <= 1/4: extended-domain reading of the divergence",
                h.value()
            );
        }
        match self.dimension {
            0 => Err(Error::Domain("dimension must be at least 1".into())),
            1 => {
                let spec = SmoothIntegrandSpec::registered(&self.label)?;
                self.lattice.convergence(runner, h, |sampler, seed| {
                    let b = sampler.sample(seed);
                    let x = divergence_via_ito(&spec, &b, h)?;
                    let u = b.values().iter().map(|&v| spec.fp(v));
                    Ok(PathOutcome {
                        value: variation_vnq(&x, p).value,
                        target: eh * riemann_power(b.grid(), u, p),
                        xi_target: None,
                    })
                })
            }
            d => {
                let spec = MultiIntegrandSpec::registered(&self.label, d)?;
                self.lattice.convergence(runner, h, |sampler, seed| {
                    let b = sampler.sample_multi(d, seed)?;
                    let x = divergence_via_ito_multi(&spec, &b, h)?;
                    let mut g = vec![0.0; d];
                    let mut u_vals = Vec::with_capacity((b.grid().n() + 1) * d);
                    for row in b.rows() {
                        spec.grad(row, &mut g);
                        u_vals.extend_from_slice(&g);
                    }
                    let u = MultiPath::new(*b.grid(), d, u_vals)?;
                    let norms = u
                        .rows()
                        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt());
                    Ok(PathOutcome {
                        value: variation_vnq(&x, p).value,
                        target: eh * riemann_power(b.grid(), norms, p),
                        xi_target: Some(xi_target(&u, p, seed)),
                    })
                })
            }
        }
    }
}

/// Exponent check for `E|X_b - X_a|^{1/H}` as a function of `b - a`, over
/// nested intervals `[T/4, T/4 + T 2^{-k}]`, `k = 2..=7`, on one grid of
/// 256 cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LpScalingExperiment {
    pub label: String,
    pub hurst: HurstParam,
    pub horizon: f64,
    pub paths: usize,
    pub master_seed: u64,
    pub sampler: SamplerKind,
}

pub const LP_GRID: usize = 256;
pub const LP_WIDTH_EXPONENTS: std::ops::RangeInclusive<i32> = 2..=7;

impl LpScalingExperiment {
    /// Grid indices `(a, b)` of the nested intervals, widest first.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let a = LP_GRID / 4;
        LP_WIDTH_EXPONENTS
            .map(|k| (a, a + (LP_GRID >> k)))
            .collect()
    }

    pub fn run(&self, runner: &Runner) -> Result<ScalingReport> {
        let h = self.hurst;
        let p = 1.0 / h.value();
        if self.paths < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 replications, got {}",
                self.paths
            )));
        }
        let spec = SmoothIntegrandSpec::registered(&self.label)?;
        let grid = UniformGrid::new(self.horizon, LP_GRID)?;
        let sampler = crate::fbm::FbmSampler::new(self.sampler, h, grid)?;
        let intervals = self.intervals();
        if intervals.len() < 3 {
            return Err(Error::Degenerate("fewer than 3 interval widths".into()));
        }
        let master = derive_master(self.master_seed, LP_GRID as u64);
        let samples = runner.replicate(self.paths, |r| {
            let b = sampler.sample(SeedSpec::new(master, r));
            let x = divergence_via_ito(&spec, &b, h)?;
            let xv = x.values();
            Ok(intervals
                .iter()
                .map(|&(a, b)| (xv[b] - xv[a]).abs().powf(p))
                .collect::<Vec<f64>>())
        })?;
        let mut rows = Vec::with_capacity(intervals.len());
        for (j, &(a, b)) in intervals.iter().enumerate() {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let agg = aggregate(&col)?;
            rows.push((
                grid.node(b) - grid.node(a),
                agg.mean,
                agg.stderr.expect("two or more"),
            ));
        }
        if rows.iter().any(|r| !(r.1 > 0.0)) {
            return Err(Error::Degenerate(format!(
                "integrand {:?} gives vanishing increment moments",
                self.label
            )));
        }
        let lx: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
        let fit = linear_fit(&lx, &ly)?;
        Ok(ScalingReport {
            x_label: "width".into(),
            rows: rows
                .iter()
                .map(|&(w, m, se)| ScalingRow {
                    x: w,
                    estimate: m,
                    stderr: se,
                    reference: (fit.intercept + fit.slope * w.ln()).exp(),
                })
                .collect(),
            fit,
            target_slope: 1.0,
            target_intercept: None,
        })
    }
}
