//! Reductions and small statistical tools used by the experiments.

use serde::Serialize;

use crate::error::{Error, Result};

/// Neumaier compensated accumulator. Values are added strictly in call
/// order, so a fixed input order gives a fixed result.
/// Shortest decimal that parses back to `v` exactly; scientific notation
/// for very small or very large magnitudes.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Mean and jackknife standard error of replication values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// `None` when only one value was supplied.
    pub stderr: Option<f64>,
}

/// Reduce per-replication values in index order.
pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::Degenerate("cannot aggregate an empty sample".into()));
    }
    let m = values.len();
    let total = compensated_sum(values.iter().copied());
    let mean = total / m as f64;
    if m == 1 {
        return Ok(Aggregate { mean, stderr: None });
    }
    // Leave-one-out means; for the plain mean this reproduces s / sqrt(m),
    // but the same code path serves every statistic we jackknife.
    let loo = values.iter().map(|x| (total - x) / (m - 1) as f64);
    let loo_mean = compensated_sum(loo.clone()) / m as f64;
    let ss = compensated_sum(loo.map(|v| (v - loo_mean) * (v - loo_mean)));
    let stderr = ((m - 1) as f64 / m as f64 * ss).sqrt();
    Ok(Aggregate {
        mean,
        stderr: Some(stderr),
    })
}

/// Jackknife standard error of the ratio of means `mean(num) / mean(den)`.
pub fn jackknife_ratio(num: &[f64], den: &[f64]) -> Result<Aggregate> {
    if num.len() != den.len() || num.is_empty() {
        return Err(Error::Degenerate(
            "ratio needs two samples of equal nonzero length".into(),
        ));
    }
    let m = num.len();
    let sn = compensated_sum(num.iter().copied());
    let sd = compensated_sum(den.iter().copied());
    let ratio = sn / sd;
    if m == 1 {
        return Ok(Aggregate {
            mean: ratio,
            stderr: None,
        });
    }
    let loo: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(a, b)| (sn - a) / (sd - b))
        .collect();
    let loo_mean = compensated_sum(loo.iter().copied()) / m as f64;
    let ss = compensated_sum(loo.iter().map(|v| (v - loo_mean) * (v - loo_mean)));
    Ok(Aggregate {
        mean: ratio,
        stderr: Some(((m - 1) as f64 / m as f64 * ss).sqrt()),
    })
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Degenerate(
            "regression inputs differ in length".into(),
        ));
    }
    if x.len() < 3 {
        return Err(Error::Degenerate(format!(
            "regression needs at least 3 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = compensated_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx == 0.0 || !sxx.is_finite() || !syy.is_finite() {
        return Err(Error::Degenerate(
            "regression abscissae are constant or non-finite".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Two-sample Kolmogorov-Smirnov result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided two-sample KS test with the asymptotic Kolmogorov law and the
/// Stephens small-sample correction of the argument.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Degenerate(
            "KS test needs two nonempty samples".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::Degenerate("KS test sample contains NaN".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    })
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // The alternating series converges slowly here; use the dual
        // (Jacobi theta) form of the CDF.
        let x = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 0..20 {
            let m = (2 * k + 1) as f64;
            cdf += (x * m * m).exp();
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
