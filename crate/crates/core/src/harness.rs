//! Experiment registry, configuration, and report emission.
//!
//! A run is a pure function of its [`ExperimentConfig`]: every random draw is
//! derived from `master_seed`, replications are reduced in index order, and
//! nothing time-dependent is written into reports.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bessel::{
    NegativeMomentExperiment, SelfSimilarityTest, ThetaVariationExperiment, SELFSIM_ALPHA,
    SELFSIM_GRID,
};
use crate::error::{Error, Result};
use crate::fbm::SamplerKind;
use crate::grid::HurstParam;
use crate::ito::{ItoVariationExperiment, LpScalingExperiment};
use crate::kernel::{reproduction_table, VolterraKernel, DEFAULT_TOL};
use crate::report::{ConvergenceReport, KernelCheckReport, KsReport, ScalingReport};
use crate::runner::Runner;
use crate::variation::{Lattice, VariationExperiment};

/// Identifier written into every report in place of a wall-clock stamp.
pub const BUILD_ID: &str = concat!("rvl-core ", env!("CARGO_PKG_VERSION"));

pub const DEFAULT_GRIDS: [usize; 4] = [64, 256, 1024, 4096];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    FbmVariation,
    ItoVariation,
    LpScaling,
    BesselVariation,
    BesselMoments,
    BesselSelfsim,
    KernelCheck,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        Self::FbmVariation,
        Self::ItoVariation,
        Self::LpScaling,
        Self::BesselVariation,
        Self::BesselMoments,
        Self::BesselSelfsim,
        Self::KernelCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::FbmVariation => "fbm-variation",
            Self::ItoVariation => "ito-variation",
            Self::LpScaling => "lp-scaling",
            Self::BesselVariation => "bessel-variation",
            Self::BesselMoments => "bessel-moments",
            Self::BesselSelfsim => "bessel-selfsim",
            Self::KernelCheck => "kernel-check",
        }
    }

    /// Tolerance names understood by this experiment and their defaults.
    pub fn default_tolerances(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::FbmVariation => &[("rel_err", 0.05), ("monotone", 1.0)],
            Self::ItoVariation | Self::BesselVariation => &[("rel_err", 0.10), ("monotone", 0.0)],
            Self::LpScaling => &[("slope", 0.15)],
            Self::BesselMoments => &[("slope", 0.02), ("intercept", 0.05)],
            Self::BesselSelfsim => &[("alpha", SELFSIM_ALPHA)],
            Self::KernelCheck => &[("rel_err", 1e-4)],
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|id| id.name()).collect();
                Error::Config(format!(
                    "unknown experiment {s:?}; known: {}",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// JSON for `*.json`, CSV otherwise.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

/// One experiment run, as read from a JSON document. Unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub hurst: f64,
    /// Defaults to 1, or 3 for the Bessel experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default = "unit")]
    pub horizon: f64,
    #[serde(default = "default_grids")]
    pub grid_sizes: Vec<usize>,
    /// Per-experiment default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    pub master_seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    /// Registered integrand label for the Itô experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    /// Order `q` of the negative moment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_order: Option<f64>,
    /// Observation times: the moment times, the kernel lattice, or the single
    /// base time of the self-similarity test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Scale factors `a` of the self-similarity test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

fn unit() -> f64 {
    1.0
}

fn default_grids() -> Vec<usize> {
    DEFAULT_GRIDS.to_vec()
}

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(experiment: ExperimentId, hurst: f64, master_seed: u64) -> Self {
        Self {
            experiment,
            hurst,
            dimension: None,
            horizon: 1.0,
            grid_sizes: default_grids(),
            replications: None,
            master_seed,
            tolerances: BTreeMap::new(),
            output_path: None,
            spec: None,
            moment_order: None,
            times: None,
            scales: None,
            sampler: None,
            quad_tol: None,
            format: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn dimension(&self) -> usize {
        self.dimension.unwrap_or(match self.experiment {
            ExperimentId::BesselVariation
            | ExperimentId::BesselMoments
            | ExperimentId::BesselSelfsim => 3,
            _ => 1,
        })
    }

    fn replications(&self) -> usize {
        self.replications.unwrap_or(match self.experiment {
            ExperimentId::LpScaling => 10_000,
            ExperimentId::BesselMoments => 100_000,
            ExperimentId::BesselSelfsim => 2000,
            _ => 200,
        })
    }

    /// Named thresholds with defaults filled in. Unknown names are errors.
    pub fn resolved_tolerances(&self) -> Result<BTreeMap<String, f64>> {
        let defaults = self.experiment.default_tolerances();
        let mut out: BTreeMap<String, f64> =
            defaults.iter().map(|&(k, v)| (k.to_string(), v)).collect();
        // Without an integrand (u = 1) the moment is exactly linear in the width.
        if self.experiment == ExperimentId::LpScaling && self.spec.as_deref() == Some("identity") {
            out.insert("slope".into(), 0.05);
        }
        for (k, &v) in &self.tolerances {
            if !defaults.iter().any(|&(name, _)| name == k) {
                let known: Vec<&str> = defaults.iter().map(|d| d.0).collect();
                return Err(Error::Config(format!(
                    "unknown tolerance {k:?} for {}; known: {}",
                    self.experiment,
                    known.join(", ")
                )));
            }
            out.insert(k.clone(), v);
        }
        Ok(out)
    }

    fn lattice(&self) -> Lattice {
        Lattice {
            horizon: self.horizon,
            grids: self.grid_sizes.clone(),
            paths: self.replications(),
            master_seed: self.master_seed,
            sampler: self.sampler.unwrap_or_default(),
        }
    }

    fn single_dimension(&self) -> Result<()> {
        match self.dimension() {
            1 => Ok(()),
            d => Err(Error::Config(format!(
                "{} is one-dimensional, got dimension {d}",
                self.experiment
            ))),
        }
    }

    /// Check ranges and gates and build the experiment. Nothing is sampled.
    pub fn plan(&self) -> Result<Plan> {
        let h = HurstParam::new(self.hurst)?;
        let tol = self.resolved_tolerances()?;
        let plan = match self.experiment {
            ExperimentId::FbmVariation => {
                self.single_dimension()?;
                let exp = VariationExperiment {
                    hurst: h,
                    lattice: self.lattice(),
                };
                exp.lattice.validate()?;
                Plan::FbmVariation(exp)
            }
            ExperimentId::ItoVariation => {
                let exp = ItoVariationExperiment {
                    label: self.spec.clone().unwrap_or_else(|| "half-square".into()),
                    hurst: h,
                    dimension: self.dimension(),
                    lattice: self.lattice(),
                };
                crate::ito::MultiIntegrandSpec::registered(&exp.label, exp.dimension.max(1))?;
                exp.lattice.validate()?;
                Plan::ItoVariation(exp)
            }
            ExperimentId::LpScaling => {
                self.single_dimension()?;
                let exp = LpScalingExperiment {
                    label: self.spec.clone().unwrap_or_else(|| "half-square".into()),
                    hurst: h,
                    horizon: self.horizon,
                    paths: self.replications(),
                    master_seed: self.master_seed,
                    sampler: self.sampler.unwrap_or_default(),
                };
                crate::ito::SmoothIntegrandSpec::registered(&exp.label)?;
                if !(self.horizon > 0.0) || exp.paths < 2 {
                    return Err(Error::Domain(
                        "lp-scaling needs a positive horizon and 2+ replications".into(),
                    ));
                }
                Plan::LpScaling(exp)
            }
            ExperimentId::BesselVariation => {
                let exp = ThetaVariationExperiment {
                    dimension: self.dimension(),
                    hurst: h,
                    lattice: self.lattice(),
                };
                exp.validate()?;
                Plan::BesselVariation(exp)
            }
            ExperimentId::BesselMoments => {
                let exp = NegativeMomentExperiment {
                    dimension: self.dimension(),
                    q: self.moment_order.unwrap_or(1.0),
                    hurst: h,
                    times: self
                        .times
                        .clone()
                        .unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0]),
                    paths: self.replications(),
                    master_seed: self.master_seed,
                };
                exp.validate()?;
                Plan::BesselMoments(exp)
            }
            ExperimentId::BesselSelfsim => {
                let t = match self.times.as_deref() {
                    None => 0.5,
                    Some([t]) => *t,
                    Some(other) => {
                        return Err(Error::Config(format!(
                            "bessel-selfsim takes one base time, got {other:?}"
                        )))
                    }
                };
                let exp = SelfSimilarityTest {
                    dimension: self.dimension(),
                    hurst: h,
                    t,
                    scales: self.scales.clone().unwrap_or_else(|| vec![2.0, 4.0]),
                    paths: self.replications(),
                    master_seed: self.master_seed,
                    grid_n: SELFSIM_GRID,
                    alpha: tol["alpha"],
                };
                exp.validate()?;
                Plan::BesselSelfsim(exp)
            }
            ExperimentId::KernelCheck => {
                h.require_rough()?;
                let kernel =
                    VolterraKernel::with_tolerance(h, self.quad_tol.unwrap_or(DEFAULT_TOL))?;
                let times = self
                    .times
                    .clone()
                    .unwrap_or_else(|| (1..=5).map(|k| 0.2 * k as f64 * self.horizon).collect());
                if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                    return Err(Error::Domain(format!(
                        "kernel times must be positive, got {times:?}"
                    )));
                }
                Plan::KernelCheck { kernel, times }
            }
        };
        Ok(plan)
    }
}

/// A validated experiment, ready to run.
#[derive(Debug, Clone)]
pub enum Plan {
    FbmVariation(VariationExperiment),
    ItoVariation(ItoVariationExperiment),
    LpScaling(LpScalingExperiment),
    BesselVariation(ThetaVariationExperiment),
    BesselMoments(NegativeMomentExperiment),
    BesselSelfsim(SelfSimilarityTest),
    KernelCheck {
        kernel: VolterraKernel,
        times: Vec<f64>,
    },
}

impl Plan {
    pub fn run(&self, runner: &Runner) -> Result<Report> {
        Ok(match self {
            Plan::FbmVariation(e) => Report::Convergence(e.run(runner)?),
            Plan::ItoVariation(e) => Report::Convergence(e.run(runner)?),
            Plan::BesselVariation(e) => Report::Convergence(e.run(runner)?),
            Plan::LpScaling(e) => Report::Scaling(e.run(runner)?),
            Plan::BesselMoments(e) => Report::Scaling(e.run(runner)?),
            Plan::BesselSelfsim(e) => Report::Ks(e.run(runner)?),
            Plan::KernelCheck { kernel, times } => Report::KernelCheck(KernelCheckReport {
                hurst: kernel.hurst(),
                tolerance: kernel.tolerance(),
                rows: reproduction_table(kernel, times)?,
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Report {
    Convergence(ConvergenceReport),
    Scaling(ScalingReport),
    Ks(KsReport),
    KernelCheck(KernelCheckReport),
}

impl Report {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        match self {
            Report::Convergence(r) => r.write_csv(out),
            Report::Scaling(r) => r.write_csv(out),
            Report::Ks(r) => r.write_csv(out),
            Report::KernelCheck(r) => r.write_csv(out),
        }
    }
}

/// A named acceptance threshold and whether the report meets it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub build: String,
    pub config: ExperimentConfig,
    pub report: Report,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write<W: Write>(&self, format: OutputFormat, mut out: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.report.write_csv(out),
            OutputFormat::Json => {
                serde_json::to_writer_pretty(&mut out, self)?;
                out.write_all(b"\n")?;
                Ok(())
            }
        }
    }

    pub fn to_bytes(&self, format: OutputFormat) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(format, &mut buf)?;
        Ok(buf)
    }
}

fn checks_for(
    report: &Report,
    tol: &BTreeMap<String, f64>,
    config: &ExperimentConfig,
) -> Vec<Check> {
    let mut checks = Vec::new();
    match report {
        Report::Convergence(r) => {
            if let Some(last) = r.last() {
                checks.push(Check::below("rel_err", last.rel_err, tol["rel_err"]));
            }
            if tol["monotone"] > 0.0 {
                let mono = r.monotone_decreasing();
                checks.push(Check {
                    name: "monotone".into(),
                    value: if mono { 1.0 } else { 0.0 },
                    threshold: 1.0,
                    passed: mono,
                });
            }
        }
        Report::Scaling(r) => {
            checks.push(Check::below(
                "slope",
                (r.fit.slope - r.target_slope).abs(),
                tol["slope"],
            ));
            if let Some(target) = r.target_intercept {
                checks.push(Check::below(
                    "intercept",
                    (r.fit.intercept - target).abs(),
                    tol["intercept"],
                ));
            }
        }
        Report::Ks(r) => {
            for row in &r.rows {
                let role = if row.control { "control" } else { "same-law" };
                checks.push(Check {
                    name: format!("ks {role} a={}", row.scale),
                    value: row.p_value,
                    threshold: row.threshold,
                    passed: row.passed(),
                });
            }
        }
        Report::KernelCheck(r) => {
            checks.push(Check::below("rel_err", r.max_rel_err(), tol["rel_err"]));
        }
    }
    log::debug!("{} checks for {}", checks.len(), config.experiment);
    checks
}

/// Validate, run, evaluate the tolerances, and write the report to
/// `output_path` when one is set.
pub fn run_experiment(config: &ExperimentConfig, runner: &Runner) -> Result<Outcome> {
    let plan = config.plan()?;
    let tol = config.resolved_tolerances()?;
    let started = Instant::now();
    let report = plan.run(runner)?;
    log::info!(
        "{} finished in {:.2?}",
        config.experiment,
        started.elapsed()
    );
    let checks = checks_for(&report, &tol, config);
    let outcome = Outcome {
        build: BUILD_ID.into(),
        config: config.clone(),
        report,
        checks,
    };
    if let Some(path) = &config.output_path {
        let format = config
            .format
            .unwrap_or_else(|| OutputFormat::for_path(path));
        let mut out = BufWriter::new(File::create(path)?);
        outcome.write(format, &mut out)?;
        out.flush()?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_and_ids_are_rejected() {
        let ok = r#"{"experiment": "fbm-variation", "hurst": 0.3, "master_seed": 1}"#;
        let cfg = ExperimentConfig::from_json(ok).unwrap();
        assert_eq!(cfg.grid_sizes, DEFAULT_GRIDS);
        let typo = r#"{"experiment": "fbm-variation", "hurst": 0.3, "master_sed": 1}"#;
        assert!(matches!(
            ExperimentConfig::from_json(typo),
            Err(Error::Config(_))
        ));
        let bad = r#"{"experiment": "fbm-varation", "hurst": 0.3, "master_seed": 1}"#;
        assert!(ExperimentConfig::from_json(bad).is_err());
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
    }

    #[test]
    fn gates_fire_before_sampling() {
        let cfg = ExperimentConfig::new(ExperimentId::KernelCheck, 0.5, 0);
        let err = cfg.plan().unwrap_err();
        assert!(err.to_string().contains("requires H < 1/2"), "{err}");
        let mut cfg = ExperimentConfig::new(ExperimentId::BesselVariation, 0.35, 0);
        cfg.dimension = Some(3);
        assert!(matches!(cfg.plan(), Err(Error::Gate(_))));
        let mut cfg = ExperimentConfig::new(ExperimentId::BesselMoments, 0.45, 0);
        cfg.moment_order = Some(3.0);
        assert!(matches!(cfg.plan(), Err(Error::Gate(_))));
        let mut cfg = ExperimentConfig::new(ExperimentId::FbmVariation, 0.3, 0);
        cfg.tolerances.insert("rel".into(), 0.1);
        assert!(matches!(cfg.plan(), Err(Error::Config(_))));
    }

    #[test]
    fn kernel_check_outcome() {
        let mut cfg = ExperimentConfig::new(ExperimentId::KernelCheck, 0.3, 0);
        cfg.times = Some(vec![0.5, 1.0]);
        let out = run_experiment(&cfg, &Runner::new(1).unwrap()).unwrap();
        assert!(out.passed());
        let csv = String::from_utf8(out.to_bytes(OutputFormat::Csv).unwrap()).unwrap();
        assert!(csv.starts_with("t,s,lhs,rhs,rel_err\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
