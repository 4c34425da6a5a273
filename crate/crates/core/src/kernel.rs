//! The square-root kernel `K_H` of the fBm covariance for `H < 1/2`, the
//! transfer operator `K_H^*` on step functions, and the inner products and
//! norms built on them.
//!
//! For `0 < s < t`,
//!
//! ```text
//! K_H(t,s) = c_H [ (t/s)^{H-1/2} (t-s)^{H-1/2}
//!                  - (H-1/2) s^{1/2-H} ∫_s^t u^{H-3/2} (u-s)^{H-1/2} du ]
//! ```
//!
//! with `c_H = (2H / ((1-2H) B(1-2H, H+1/2)))^{1/2}`, so that
//! `R_H(t,s) = ∫_0^{t∧s} K_H(t,u) K_H(s,u) du`.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fbm::covariance;
use crate::grid::{HurstParam, UniformGrid};
use crate::quad::{integrate_singular, QuadConfig};
use crate::stats::compensated_sum;

/// Default relative tolerance for every quadrature in this module.
pub const DEFAULT_TOL: f64 = 1e-9;

/// `B(x, y)` through log-Gamma.
pub fn beta_fn(x: f64, y: f64) -> f64 {
    (ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp()
}

/// Normalizing constant `c_H` of the kernel.
pub fn constant_c_h(h: HurstParam) -> Result<f64> {
    h.require_rough()?;
    let h = h.value();
    Ok((2.0 * h / ((1.0 - 2.0 * h) * beta_fn(1.0 - 2.0 * h, h + 0.5))).sqrt())
}

/// Piecewise-constant function on a grid: `a_j` on `[t_j, t_{j+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    grid: UniformGrid,
    coefficients: Vec<f64>,
}

impl StepFunction {
    pub fn new(grid: UniformGrid, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != grid.n() {
            return Err(Error::Domain(format!(
                "step function needs {} coefficients, got {}",
                grid.n(),
                coefficients.len()
            )));
        }
        Ok(Self { grid, coefficients })
    }

    /// `1_{[0, t_k]}`.
    pub fn indicator(grid: UniformGrid, k: usize) -> Result<Self> {
        if k > grid.n() {
            return Err(Error::Domain(format!(
                "node index {k} beyond grid size {}",
                grid.n()
            )));
        }
        let coefficients = (0..grid.n())
            .map(|j| if j < k { 1.0 } else { 0.0 })
            .collect();
        Ok(Self { grid, coefficients })
    }

    pub fn constant(grid: UniformGrid, value: f64) -> Self {
        Self {
            grid,
            coefficients: vec![value; grid.n()],
        }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s < 0.0 || s >= self.grid.horizon() {
            return 0.0;
        }
        let k = ((s / self.grid.step()) as usize).min(self.grid.n() - 1);
        self.coefficients[k]
    }

    /// Weights `b_j` such that `φ = Σ_{j=1}^{n} b_j 1_{[0, t_j]}`.
    pub fn indicator_weights(&self) -> Vec<f64> {
        let n = self.grid.n();
        (1..=n)
            .map(|j| self.coefficients[j - 1] - if j < n { self.coefficients[j] } else { 0.0 })
            .collect()
    }
}

/// `K_H` together with its constant and quadrature settings.
#[derive(Debug, Clone, Copy)]
pub struct VolterraKernel {
    h: f64,
    c_h: f64,
    cfg: QuadConfig,
}

impl VolterraKernel {
    pub fn new(h: HurstParam) -> Result<Self> {
        Self::with_tolerance(h, DEFAULT_TOL)
    }

    pub fn with_tolerance(h: HurstParam, tol_q: f64) -> Result<Self> {
        if !(tol_q > 0.0 && tol_q < 1.0) {
            return Err(Error::Domain(format!(
                "quadrature tolerance must be in (0, 1), got {tol_q}"
            )));
        }
        Ok(Self {
            h: h.value(),
            c_h: constant_c_h(h)?,
            cfg: QuadConfig::relative(tol_q),
        })
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    pub fn tolerance(&self) -> f64 {
        self.cfg.rel_tol
    }

    fn check_pair(t: f64, s: f64) -> Result<()> {
        if s > 0.0 && s < t && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "kernel needs 0 < s < t, got t = {t}, s = {s}"
            )))
        }
    }

    /// `∫_s^t u^{H-3/2} (u-s)^{H-1/2} du`, integrated in the offset
    /// `v = u - s` so that points near the singular end keep full relative
    /// precision.
    fn inner_integral(&self, t: f64, s: f64) -> Result<f64> {
        let h = self.h;
        let r = integrate_singular(
            |v| (s + v).powf(h - 1.5) * v.powf(h - 0.5),
            0.0,
            t - s,
            h - 0.5,
            0.0,
            self.cfg,
        )?;
        Ok(r.value)
    }

    /// `K_H(t, s)` for `0 < s < t`.
    pub fn k(&self, t: f64, s: f64) -> Result<f64> {
        Self::check_pair(t, s)?;
        self.k_unchecked(t, s)
    }

    fn k_unchecked(&self, t: f64, s: f64) -> Result<f64> {
        let h = self.h;
        let first = (t / s).powf(h - 0.5) * (t - s).powf(h - 0.5);
        let second = (0.5 - h) * s.powf(0.5 - h) * self.inner_integral(t, s)?;
        Ok(self.c_h * (first + second))
    }

    /// `∂K_H/∂t (t, s) = c_H (H-1/2) (t/s)^{H-1/2} (t-s)^{H-3/2}`.
    pub fn dk_dt(&self, t: f64, s: f64) -> Result<f64> {
        Self::check_pair(t, s)?;
        let h = self.h;
        Ok(self.c_h * (h - 0.5) * (t / s).powf(h - 0.5) * (t - s).powf(h - 1.5))
    }

    /// `K_H^*(1_{[0,t]})(s) = K_H(t,s) 1_{[0,t]}(s)`, for `s > 0`, `s != t`.
    pub fn kstar_indicator(&self, t: f64, s: f64) -> Result<f64> {
        if !(s > 0.0) || s == t {
            return Err(Error::Domain(format!(
                "K* of an indicator is evaluated at s > 0, s != t; got t = {t}, s = {s}"
            )));
        }
        if s > t {
            Ok(0.0)
        } else {
            self.k_unchecked(t, s)
        }
    }

    /// `(K_H^* φ)(s)` for a step function, by linearity over the indicator
    /// differences `1_{[0,t_{j+1}]} - 1_{[0,t_j]}`. `s` must lie strictly
    /// inside a cell.
    pub fn kstar_step(&self, phi: &StepFunction, s: f64) -> Result<f64> {
        let grid = phi.grid();
        if !(s > 0.0 && s < grid.horizon()) || grid.index_of(s).is_some() {
            return Err(Error::Domain(format!(
                "K* of a step function is evaluated off the grid nodes in (0, T), got s = {s}"
            )));
        }
        let k = ((s / grid.step()) as usize).min(grid.n() - 1);
        self.kstar_in_cell(phi, k, s)
    }

    /// `(K_H^* φ)(s)` for `t_k < s < t_{k+1}`.
    fn kstar_in_cell(&self, phi: &StepFunction, k: usize, s: f64) -> Result<f64> {
        let grid = phi.grid();
        let a = phi.coefficients();
        // For j > k both indicators cover s; for j = k only the right one.
        let mut prev = self.k_unchecked(grid.node(k + 1), s)?;
        let mut terms = Vec::with_capacity(grid.n() - k);
        terms.push(a[k] * prev);
        for (j, &aj) in a.iter().enumerate().skip(k + 1) {
            let next = self.k_unchecked(grid.node(j + 1), s)?;
            terms.push(aj * (next - prev));
            prev = next;
        }
        Ok(compensated_sum(terms))
    }

    /// Integrate `g(k, s)` cell by cell over `(0, T)`. Nodes are never
    /// sampled; `g` may be singular like `(t_{k+1} - s)^{2H-1}` at the right
    /// end of each cell and like `s^{2H-1}` at zero.
    fn integrate_cells<G>(&self, grid: &UniformGrid, g: G) -> Result<f64>
    where
        G: Fn(usize, f64) -> Result<f64>,
    {
        let exp = 2.0 * self.h - 1.0;
        let mut cells = Vec::with_capacity(grid.n());
        for k in 0..grid.n() {
            let (a, b) = (grid.node(k), grid.node(k + 1));
            let failure = std::cell::RefCell::new(None);
            let f = |s: f64| {
                if s <= a || s >= b {
                    return 0.0;
                }
                match g(k, s) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            };
            let left = if k == 0 { exp } else { 0.0 };
            let r = integrate_singular(f, a, b, left, exp, self.cfg);
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            cells.push(r?.value);
        }
        Ok(compensated_sum(cells))
    }

    /// `⟨φ, ψ⟩_𝔥 = ⟨K^* φ, K^* ψ⟩_{L²(0,T)}`.
    pub fn inner_product(&self, phi: &StepFunction, psi: &StepFunction) -> Result<f64> {
        if phi.grid() != psi.grid() {
            return Err(Error::Domain(
                "step functions live on different grids".into(),
            ));
        }
        if phi == psi {
            return self.integrate_cells(phi.grid(), |k, s| {
                let v = self.kstar_in_cell(phi, k, s)?;
                Ok(v * v)
            });
        }
        self.integrate_cells(phi.grid(), |k, s| {
            Ok(self.kstar_in_cell(phi, k, s)? * self.kstar_in_cell(psi, k, s)?)
        })
    }

    /// `∫_0^{t∧s} K_H(t,u) K_H(s,u) du`, which should reproduce `R_H(t,s)`.
    pub fn reproduction_integral(&self, t: f64, s: f64) -> Result<f64> {
        if !(t > 0.0 && s > 0.0) {
            return Err(Error::Domain(format!(
                "reproduction needs t, s > 0, got ({t}, {s})"
            )));
        }
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        let exp = 2.0 * self.h - 1.0;
        let right = if lo == hi { exp } else { self.h - 0.5 };
        let failure = std::cell::RefCell::new(None);
        let f = |u: f64| {
            if u <= 0.0 || u >= lo {
                return 0.0;
            }
            match (self.k_unchecked(hi, u), self.k_unchecked(lo, u)) {
                (Ok(a), Ok(b)) => a * b,
                (Err(e), _) | (_, Err(e)) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let r = integrate_singular(f, 0.0, lo, exp, right, self.cfg);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(r?.value)
    }

    /// The two terms of `‖φ‖_K²`: the boundary-weighted `L²` term and the
    /// double integral of `|φ(t) - φ(s)| (t-s)^{H-3/2}`.
    pub fn seminorm_terms(&self, phi: &StepFunction) -> Result<(f64, f64)> {
        let grid = phi.grid();
        let h = self.h;
        let two_h = 2.0 * h;
        let horizon = grid.horizon();
        let a = phi.coefficients();

        // ∫ [(T-s)^{2H-1} + s^{2H-1}] ds over cell k, exactly.
        let first = compensated_sum((0..grid.n()).map(|k| {
            let (l, r) = (grid.node(k), grid.node(k + 1));
            let w = ((horizon - l).powf(two_h) - (horizon - r).powf(two_h) + r.powf(two_h)
                - l.powf(two_h))
                / two_h;
            a[k] * a[k] * w
        }));

        // For s in cell k the inner t-integral is a sum of exact power
        // antiderivatives over the later cells.
        let second = self.integrate_cells(grid, |k, s| {
            let inner = compensated_sum((k + 1..grid.n()).map(|j| {
                let jump = (a[j] - a[k]).abs();
                if jump == 0.0 {
                    return 0.0;
                }
                let (l, r) = (grid.node(j), grid.node(j + 1));
                jump * ((l - s).powf(h - 0.5) - (r - s).powf(h - 0.5)) / (0.5 - h)
            }));
            Ok(inner * inner)
        })?;
        Ok((first, second))
    }

    /// `‖φ‖_K`.
    pub fn seminorm(&self, phi: &StepFunction) -> Result<f64> {
        let (a, b) = self.seminorm_terms(phi)?;
        Ok((a + b).sqrt())
    }

    /// `‖φ‖_𝔥² / ‖φ‖_K²`; bounded over 𝔥_K by the continuous embedding.
    pub fn embedding_ratio(&self, phi: &StepFunction) -> Result<f64> {
        let num = self.inner_product(phi, phi)?;
        let (a, b) = self.seminorm_terms(phi)?;
        if a + b == 0.0 {
            return Err(Error::Degenerate(
                "embedding ratio of the zero function".into(),
            ));
        }
        Ok(num / (a + b))
    }
}

/// `∂R_H/∂s (s, t) = H (s^{2H-1} + sign(t-s) |t-s|^{2H-1})`, obtained by
/// differentiating the covariance in its first argument.
pub fn dr_ds(h: HurstParam, s: f64, t: f64) -> f64 {
    let h = h.value();
    let d = t - s;
    let first = if s == 0.0 {
        f64::INFINITY
    } else {
        s.powf(2.0 * h - 1.0)
    };
    let second = if d == 0.0 {
        0.0
    } else {
        d.signum() * d.abs().powf(2.0 * h - 1.0)
    };
    h * (first + second)
}

/// Extended pairing `⟨φ, 1_{[0,t]}⟩ = ∫_0^T φ_s ∂R/∂s(s, t) ds` for
/// piecewise-constant `φ`, integrating the two power terms of `∂R/∂s`
/// exactly on every cell.
pub fn extended_inner(h: HurstParam, phi: &StepFunction, t: f64) -> Result<f64> {
    let grid = phi.grid();
    if !(t >= 0.0 && t <= grid.horizon()) {
        return Err(Error::Domain(format!(
            "t = {t} outside [0, {}]",
            grid.horizon()
        )));
    }
    let two_h = 2.0 * h.value();
    // Antiderivative in s of H s^{2H-1} is s^{2H}/2; of
    // H sign(t-s)|t-s|^{2H-1} it is -|t-s|^{2H}/2.
    let antiderivative = |s: f64| 0.5 * (s.powf(two_h) - (t - s).abs().powf(two_h));
    let mut prev = antiderivative(0.0);
    let terms = (0..grid.n()).map(|k| {
        let next = antiderivative(grid.node(k + 1));
        let v = phi.coefficients()[k] * (next - prev);
        prev = next;
        v
    });
    Ok(compensated_sum(terms.collect::<Vec<_>>()))
}

/// Extended pairing against a general step function, by linearity over its
/// indicator decomposition.
pub fn extended_inner_step(h: HurstParam, phi: &StepFunction, psi: &StepFunction) -> Result<f64> {
    if phi.grid() != psi.grid() {
        return Err(Error::Domain(
            "step functions live on different grids".into(),
        ));
    }
    let grid = psi.grid();
    let mut terms = Vec::with_capacity(grid.n());
    for (j, b) in psi.indicator_weights().into_iter().enumerate() {
        if b != 0.0 {
            terms.push(b * extended_inner(h, phi, grid.node(j + 1))?);
        }
    }
    Ok(compensated_sum(terms))
}

/// Smallest `D` with `K(t,s) <= D ((t-s)^{H-1/2} + s^{H-1/2})` over the
/// given `(t, s)` pairs.
pub fn fit_kernel_bound(kernel: &VolterraKernel, pairs: &[(f64, f64)]) -> Result<f64> {
    let h = kernel.hurst();
    let mut d: f64 = 0.0;
    for &(t, s) in pairs {
        let k = kernel.k(t, s)?;
        d = d.max(k.abs() / ((t - s).powf(h - 0.5) + s.powf(h - 0.5)));
    }
    Ok(d)
}

/// One row of the reproduction check.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ReproductionRow {
    pub t: f64,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

/// `∫ K(t,u) K(s,u) du` against `R_H(t,s)` on the lattice `times × times`.
pub fn reproduction_table(kernel: &VolterraKernel, times: &[f64]) -> Result<Vec<ReproductionRow>> {
    let h = HurstParam::new(kernel.hurst())?;
    let mut rows = Vec::with_capacity(times.len() * times.len());
    for &t in times {
        for &s in times {
            let lhs = kernel.reproduction_integral(t, s)?;
            let rhs = covariance(h, t, s)?;
            rows.push(ReproductionRow {
                t,
                s,
                lhs,
                rhs,
                rel_err: ((lhs - rhs) / rhs).abs(),
            });
        }
    }
    Ok(rows)
}
