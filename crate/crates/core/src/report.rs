//! Experiment reports and their CSV form.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so parsing
//! an emitted CSV gives back the in-memory values bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ReproductionRow;
use crate::stats::{aggregate, compensated_sum, format_f64, LinearFit};

/// Number of standard errors allowed between two estimates of the same limit
/// target before an experiment is declared internally inconsistent.
pub const CROSS_CHECK_SIGMAS: f64 = 3.0;

/// Monte Carlo summary for one grid size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Mean of the statistic `V_n`.
    pub estimate: f64,
    /// Mean of the per-path limit target.
    pub target: f64,
    /// `L¹` error `E|V_n - target|`.
    pub abs_err: f64,
    /// `abs_err / target`.
    pub rel_err: f64,
    /// Jackknife standard error of `abs_err`.
    pub stderr: f64,
    /// Mean of the Gaussian-average (ν-integral) Monte Carlo target, when the
    /// experiment computes one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub xi_target: Option<f64>,
    /// Standard error of the paired difference between the two targets.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub xi_stderr: Option<f64>,
}

impl ConvergenceRow {
    /// Summarize per-replication statistics `values` against per-path
    /// targets. When `xi_targets` is given, the two target estimates must
    /// agree within [`CROSS_CHECK_SIGMAS`] standard errors of their paired
    /// difference.
    pub fn from_samples(
        n: usize,
        values: &[f64],
        targets: &[f64],
        xi_targets: Option<&[f64]>,
    ) -> Result<Self> {
        if values.len() < 2 || values.len() != targets.len() {
            return Err(Error::Degenerate(
                "a convergence row needs at least two replications with one target each".into(),
            ));
        }
        let estimate = aggregate(values)?.mean;
        let target = aggregate(targets)?.mean;
        if !(target > 0.0) {
            return Err(Error::Degenerate(format!(
                "limit target is {target}; relative errors are undefined"
            )));
        }
        let dev: Vec<f64> = values
            .iter()
            .zip(targets)
            .map(|(v, t)| (v - t).abs())
            .collect();
        let abs = aggregate(&dev)?;
        let stderr = abs.stderr.expect("two or more replications");
        let (xi_target, xi_stderr) = match xi_targets {
            None => (None, None),
            Some(xi) => {
                let diff: Vec<f64> = xi.iter().zip(targets).map(|(x, t)| x - t).collect();
                let d = aggregate(&diff)?;
                let se = d.stderr.expect("two or more replications");
                if d.mean.abs() > CROSS_CHECK_SIGMAS * se {
                    return Err(Error::Inconsistent(format!(
                        "n = {n}: closed-form target {target} and Gaussian-average target {} \
                         differ by {} (> {CROSS_CHECK_SIGMAS} x {se})",
                        target + d.mean,
                        d.mean
                    )));
                }
                (
                    Some(compensated_sum(xi.iter().copied()) / xi.len() as f64),
                    Some(se),
                )
            }
        };
        Ok(Self {
            n,
            estimate,
            target,
            abs_err: abs.mean,
            rel_err: abs.mean / target,
            stderr,
            xi_target,
            xi_stderr,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

const CONVERGENCE_COLUMNS: [&str; 6] = ["n", "estimate", "target", "abs_err", "rel_err", "stderr"];
const XI_COLUMNS: [&str; 2] = ["xi_target", "xi_stderr"];

impl ConvergenceReport {
    pub fn new(mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by_key(|r| r.n);
        Self { rows }
    }

    pub fn last(&self) -> Option<&ConvergenceRow> {
        self.rows.last()
    }

    /// `true` when the `L¹` error strictly decreases along the grid sizes.
    pub fn monotone_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].abs_err < w[0].abs_err)
    }

    fn has_xi(&self) -> bool {
        self.rows.iter().any(|r| r.xi_target.is_some())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let xi = self.has_xi();
        let mut header: Vec<&str> = CONVERGENCE_COLUMNS.to_vec();
        if xi {
            header.extend(XI_COLUMNS);
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.n.to_string(),
                format_f64(r.estimate),
                format_f64(r.target),
                format_f64(r.abs_err),
                format_f64(r.rel_err),
                format_f64(r.stderr),
            ];
            if xi {
                rec.push(r.xi_target.map(format_f64).unwrap_or_default());
                rec.push(r.xi_stderr.map(format_f64).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let xi = cols.len() == 8;
        if cols[..6] != CONVERGENCE_COLUMNS
            || (xi && cols[6..] != XI_COLUMNS)
            || !(cols.len() == 6 || xi)
        {
            return Err(Error::Config(format!(
                "unexpected convergence header {cols:?}"
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse(s).map(Some)
            }
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(ConvergenceRow {
                n: rec[0]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad grid size {:?}: {e}", &rec[0])))?,
                estimate: parse(&rec[1])?,
                target: parse(&rec[2])?,
                abs_err: parse(&rec[3])?,
                rel_err: parse(&rec[4])?,
                stderr: parse(&rec[5])?,
                xi_target: if xi { opt(&rec[6])? } else { None },
                xi_stderr: if xi { opt(&rec[7])? } else { None },
            });
        }
        Ok(Self { rows })
    }
}

/// One abscissa of a log-log scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub x: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// Theoretical or fitted curve at `x` (see the owning report).
    pub reference: f64,
}

/// Power-law fit of a Monte Carlo moment against a scale variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    /// Name of the abscissa column (`width`, `t`).
    pub x_label: String,
    pub rows: Vec<ScalingRow>,
    /// Fit of `log(estimate)` against `log(x)`.
    pub fit: LinearFit,
    pub target_slope: f64,
    pub target_intercept: Option<f64>,
}

impl ScalingReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([self.x_label.as_str(), "estimate", "stderr", "reference"])?;
        for r in &self.rows {
            w.write_record([
                format_f64(r.x),
                format_f64(r.estimate),
                format_f64(r.stderr),
                format_f64(r.reference),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One two-sample KS comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsRow {
    pub scale: f64,
    /// Exponent `e` in the rescaling `a^{-e} Θ_{at}`.
    pub exponent: f64,
    /// `true` for the deliberately mis-scaled power check.
    pub control: bool,
    pub statistic: f64,
    pub p_value: f64,
    /// Significance level after Bonferroni correction.
    pub threshold: f64,
}

impl KsRow {
    /// Same-law rows pass when not rejected; control rows pass when rejected.
    pub fn passed(&self) -> bool {
        if self.control {
            self.p_value < self.threshold
        } else {
            self.p_value > self.threshold
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsReport {
    pub t: f64,
    pub rows: Vec<KsRow>,
}

impl KsReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "a",
            "exponent",
            "role",
            "statistic",
            "p_value",
            "threshold",
            "passed",
        ])?;
        for r in &self.rows {
            w.write_record([
                format_f64(r.scale),
                format_f64(r.exponent),
                if r.control { "control" } else { "test" }.to_string(),
                format_f64(r.statistic),
                format_f64(r.p_value),
                format_f64(r.threshold),
                r.passed().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reproduction of the covariance by the kernel on a lattice of times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCheckReport {
    pub hurst: f64,
    pub tolerance: f64,
    pub rows: Vec<ReproductionRow>,
}

impl KernelCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.rows.iter().map(|r| r.rel_err).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "s", "lhs", "rhs", "rel_err"])?;
        for r in &self.rows {
            w.write_record([
                format_f64(r.t),
                format_f64(r.s),
                format_f64(r.lhs),
                format_f64(r.rhs),
                format_f64(r.rel_err),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
