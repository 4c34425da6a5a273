//! Acceptance suite. Runs every criterion at full scale and prints one
//! PASS/FAIL line per criterion; the process fails if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rvl::fbm::{covariance, FbmSampler, SamplerKind};
use rvl::harness::{run_experiment, ExperimentConfig, ExperimentId, Outcome, OutputFormat, Report};
use rvl::kernel::{reproduction_table, StepFunction, VolterraKernel};
use rvl::seed::derive_master;
use rvl::{Error, HurstParam, Runner, SeedSpec, UniformGrid};
use statrs::distribution::{ContinuousCDF, Normal};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn h(v: f64) -> HurstParam {
    HurstParam::new(v).unwrap()
}

/// Two-sided critical value holding the family-wise false-alarm rate of a
/// single 3-sigma test (0.27%) over `m` comparisons.
fn familywise_z(m: usize) -> f64 {
    let alpha = 2.0 * (1.0 - Normal::standard().cdf(3.0));
    Normal::standard().inverse_cdf(1.0 - alpha / (2.0 * m as f64))
}

/// Empirical second moments `E[B_{t_i} B_{t_j}]`, `1 <= i <= j <= n`, with
/// their standard errors.
fn empirical_covariance(
    runner: &Runner,
    kind: SamplerKind,
    hv: f64,
    n: usize,
    m: usize,
    label: u64,
) -> (Vec<f64>, Vec<f64>) {
    let grid = UniformGrid::new(1.0, n).unwrap();
    let sampler = FbmSampler::new(kind, h(hv), grid).unwrap();
    let master = derive_master(0xC0FFEE, label);
    let paths = runner
        .replicate(m, |r| {
            Ok(sampler.sample(SeedSpec::new(master, r)).into_values())
        })
        .unwrap();
    let mut mean = Vec::new();
    let mut se = Vec::new();
    for i in 1..=n {
        for j in i..=n {
            let prods: Vec<f64> = paths.iter().map(|p| p[i] * p[j]).collect();
            let agg = rvl::stats::aggregate(&prods).unwrap();
            mean.push(agg.mean);
            se.push(agg.stderr.unwrap());
        }
    }
    (mean, se)
}

fn criterion_1(runner: &Runner) -> Verdict {
    let (n, m) = (64, 10_000);
    let entries = n * (n + 1) / 2;
    let z = familywise_z(entries);
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, hv) in [0.3, 0.45].into_iter().enumerate() {
        let grid = UniformGrid::new(1.0, n).unwrap();
        let mut exact = Vec::new();
        for i in 1..=n {
            for j in i..=n {
                exact.push(covariance(h(hv), grid.node(i), grid.node(j)).unwrap());
            }
        }
        let chol = empirical_covariance(runner, SamplerKind::Cholesky, hv, n, m, 2 * k as u64);
        let circ = empirical_covariance(runner, SamplerKind::Circulant, hv, n, m, 2 * k as u64 + 1);
        let worst = |(mean, se): &(Vec<f64>, Vec<f64>)| {
            mean.iter()
                .zip(se)
                .zip(&exact)
                .map(|((a, s), e)| (a - e).abs() / s)
                .fold(0.0, f64::max)
        };
        let over3 = |(mean, se): &(Vec<f64>, Vec<f64>)| {
            mean.iter()
                .zip(se)
                .zip(&exact)
                .filter(|((a, s), e)| (*a - *e).abs() > 3.0 * *s)
                .count()
        };
        let cross = chol
            .0
            .iter()
            .zip(&circ.0)
            .zip(chol.1.iter().zip(&circ.1))
            .map(|((a, b), (sa, sb))| (a - b).abs() / (sa * sa + sb * sb).sqrt())
            .fold(0.0, f64::max);
        let (wc, wf) = (worst(&chol), worst(&circ));
        ok &= wc < 3.0 && wf < 3.0 && cross < 3.0;
        notes.push(format!(
            "h={hv}: max|z| cholesky {wc:.2}, circulant {wf:.2}, between samplers {cross:.2}; \
             entries beyond 3 s.e. {}/{} and {}/{} (expected about {:.1} each)",
            over3(&chol),
            entries,
            over3(&circ),
            entries,
            entries as f64 * 0.0027
        ));
    }
    verdict(
        ok,
        format!(
            "every entry within 3 s.e. (family-wise 3-sigma critical |z| would be {z:.2}); {}",
            notes.join("; ")
        ),
    )
}

fn criterion_2() -> Verdict {
    let times: Vec<f64> = (1..=5).map(|k| 0.2 * k as f64).collect();
    let mut worst_repro: f64 = 0.0;
    let mut worst_iso: f64 = 0.0;
    for hv in [0.2, 0.3, 0.4] {
        let kernel = VolterraKernel::new(h(hv)).unwrap();
        for row in reproduction_table(&kernel, &times).unwrap() {
            worst_repro = worst_repro.max(row.rel_err);
        }
        let grid = UniformGrid::new(1.0, 5).unwrap();
        let ind: Vec<StepFunction> = (1..=5)
            .map(|k| StepFunction::indicator(grid, k).unwrap())
            .collect();
        for i in 0..5 {
            for j in 0..5 {
                let lhs = kernel.inner_product(&ind[i], &ind[j]).unwrap();
                let rhs = covariance(h(hv), grid.node(i + 1), grid.node(j + 1)).unwrap();
                worst_iso = worst_iso.max(((lhs - rhs) / rhs).abs());
            }
        }
    }
    verdict(
        worst_repro < 1e-4 && worst_iso < 1e-4,
        format!("max rel err: reproduction {worst_repro:.2e}, isometry {worst_iso:.2e} (tolerance 1e-4)"),
    )
}

fn run(cfg: &ExperimentConfig, runner: &Runner) -> Outcome {
    run_experiment(cfg, runner).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.experiment))
}

fn convergence(outcome: &Outcome) -> &rvl::report::ConvergenceReport {
    match &outcome.report {
        Report::Convergence(r) => r,
        other => panic!("unexpected report {other:?}"),
    }
}

fn scaling(outcome: &Outcome) -> &rvl::report::ScalingReport {
    match &outcome.report {
        Report::Scaling(r) => r,
        other => panic!("unexpected report {other:?}"),
    }
}

fn cfg(id: ExperimentId, hv: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig::new(id, hv, seed)
}

/// The configurations behind criteria 3 to 9, reused for the determinism
/// check.
fn configs() -> Vec<(usize, ExperimentConfig)> {
    let mut out = Vec::new();
    for hv in [0.3, 0.4] {
        out.push((3, cfg(ExperimentId::FbmVariation, hv, 301)));
    }
    let mut c = cfg(ExperimentId::ItoVariation, 0.45, 401);
    c.spec = Some("half-square".into());
    out.push((4, c));
    let mut c = cfg(ExperimentId::ItoVariation, 0.45, 501);
    c.spec = Some("half-square".into());
    c.dimension = Some(3);
    out.push((5, c));
    let mut c = cfg(ExperimentId::BesselVariation, 0.45, 601);
    c.dimension = Some(3);
    out.push((6, c));
    let mut c = cfg(ExperimentId::BesselMoments, 0.45, 701);
    c.dimension = Some(3);
    c.moment_order = Some(1.0);
    c.times = Some(vec![0.25, 0.5, 1.0, 2.0]);
    c.replications = Some(100_000);
    out.push((7, c));
    let mut c = cfg(ExperimentId::BesselSelfsim, 0.45, 801);
    c.dimension = Some(3);
    c.times = Some(vec![0.5]);
    c.scales = Some(vec![2.0, 4.0]);
    c.replications = Some(2000);
    out.push((8, c));
    for (label, tol) in [("identity", 0.05), ("half-square", 0.15)] {
        let mut c = cfg(ExperimentId::LpScaling, 0.45, 901);
        c.spec = Some(label.into());
        c.tolerances.insert("slope".into(), tol);
        out.push((9, c));
    }
    out
}

fn criterion_3(outcomes: &[&Outcome]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for o in outcomes {
        let r = convergence(o);
        let errs: Vec<String> = r
            .rows
            .iter()
            .map(|row| format!("{:.4}", row.rel_err))
            .collect();
        let last = r.last().unwrap();
        ok &= last.n == 4096 && last.rel_err < 0.05 && r.monotone_decreasing();
        notes.push(format!(
            "h={}: rel err by n [{}], monotone {}",
            o.config.hurst,
            errs.join(", "),
            r.monotone_decreasing()
        ));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_4(o: &Outcome) -> Verdict {
    let last = *convergence(o).last().unwrap();
    verdict(
        last.n == 4096 && last.rel_err < 0.10,
        format!("n=4096 rel err {:.4} (tolerance 0.10)", last.rel_err),
    )
}

fn criterion_5(o: &Outcome) -> Verdict {
    let last = *convergence(o).last().unwrap();
    let agree = convergence(o)
        .rows
        .iter()
        .all(|r| (r.xi_target.unwrap() - r.target).abs() <= 3.0 * r.xi_stderr.unwrap());
    verdict(
        agree && last.n == 4096 && last.rel_err < 0.10,
        format!(
            "closed-form target {:.5} vs Gaussian-average {:.5} (3 s.e. = {:.5}), agreement on every grid {agree}; n=4096 rel err {:.4}",
            last.target,
            last.xi_target.unwrap(),
            3.0 * last.xi_stderr.unwrap(),
            last.rel_err
        ),
    )
}

fn criterion_6(o: &Outcome) -> Verdict {
    let last = *convergence(o).last().unwrap();
    let mean_gap = (last.estimate - last.target).abs() / last.target;
    let mut gated = cfg(ExperimentId::BesselVariation, 0.35, 1);
    gated.dimension = Some(3);
    let gate = matches!(gated.plan(), Err(Error::Gate(_)));
    verdict(
        last.rel_err < 0.10 && mean_gap < 0.10 && gate,
        format!(
            "n=4096 L1 rel err {:.4}, mean gap {:.4} (tolerance 0.10); (d=3, h=0.35) rejected by gate {gate}",
            last.rel_err, mean_gap
        ),
    )
}

fn criterion_7(o: &Outcome) -> Verdict {
    let r = scaling(o);
    let ds = (r.fit.slope - r.target_slope).abs();
    let di = (r.fit.intercept - r.target_intercept.unwrap()).abs();
    verdict(
        ds < 0.02 && di < 0.05,
        format!(
            "slope {:.4} vs {:.4} (|diff| {ds:.4} < 0.02), intercept {:.4} vs {:.4} (|diff| {di:.4} < 0.05)",
            r.fit.slope,
            r.target_slope,
            r.fit.intercept,
            r.target_intercept.unwrap()
        ),
    )
}

fn criterion_8(o: &Outcome) -> Verdict {
    let Report::Ks(r) = &o.report else {
        panic!("unexpected report")
    };
    let notes: Vec<String> = r
        .rows
        .iter()
        .map(|row| {
            format!(
                "a={} exponent {:.2}{}: p {:.3e} vs {}",
                row.scale,
                row.exponent,
                if row.control { " (control)" } else { "" },
                row.p_value,
                row.threshold
            )
        })
        .collect();
    let has_control = r.rows.iter().any(|row| row.control && row.scale == 4.0);
    verdict(
        has_control && r.rows.iter().all(|row| row.passed()),
        notes.join("; "),
    )
}

fn criterion_9(outcomes: &[&Outcome]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for o in outcomes {
        let r = scaling(o);
        let tol = o.config.tolerances["slope"];
        let d = (r.fit.slope - 1.0).abs();
        ok &= d < tol;
        notes.push(format!(
            "{}: slope {:.4} (tolerance {tol})",
            o.config.spec.as_deref().unwrap(),
            r.fit.slope
        ));
    }
    verdict(ok, notes.join("; "))
}

fn criterion_10(configs: &[(usize, ExperimentConfig)], baseline: &[Outcome]) -> Verdict {
    let mut ok = true;
    let mut compared = 0;
    for ((_, c), base) in configs.iter().zip(baseline) {
        let csv = base.to_bytes(OutputFormat::Csv).unwrap();
        let json = base.to_bytes(OutputFormat::Json).unwrap();
        for workers in [2, 8] {
            let other = run(c, &Runner::new(workers).unwrap());
            ok &= other.to_bytes(OutputFormat::Csv).unwrap() == csv;
            ok &= other.to_bytes(OutputFormat::Json).unwrap() == json;
            compared += 1;
        }
    }
    verdict(ok, format!("{compared} reruns at 2 and 8 workers compared byte for byte against 1 worker (CSV and JSON)"))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let serial = Runner::new(1).unwrap();
    let parallel = Runner::new(0).unwrap();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();

    results.push((1, "sampler covariance fidelity", criterion_1(&parallel)));
    results.push((2, "kernel reproduction and isometry", criterion_2()));

    let configs = configs();
    let outcomes: Vec<Outcome> = configs.iter().map(|(_, c)| run(c, &serial)).collect();
    let pick = |k: usize| -> Vec<&Outcome> {
        configs
            .iter()
            .zip(&outcomes)
            .filter(|((c, _), _)| *c == k)
            .map(|(_, o)| o)
            .collect()
    };
    results.push((3, "fBm 1/H-variation", criterion_3(&pick(3))));
    results.push((4, "divergence variation, u = B", criterion_4(pick(4)[0])));
    results.push((5, "divergence variation in d = 3", criterion_5(pick(5)[0])));
    results.push((
        6,
        "Bessel Theta variation and gate",
        criterion_6(pick(6)[0]),
    ));
    results.push((7, "negative moments of R", criterion_7(pick(7)[0])));
    results.push((8, "self-similarity of Theta", criterion_8(pick(8)[0])));
    results.push((9, "L^p increment scaling", criterion_9(&pick(9))));
    results.push((
        10,
        "determinism across worker counts",
        criterion_10(&configs, &outcomes),
    ));

    let mut all = true;
    for (k, name, v) in &results {
        all &= v.passed;
        println!(
            "criterion {k:>2} {}: {name}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance finished in {:.1?}", started.elapsed());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
