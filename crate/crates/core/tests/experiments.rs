//! Moderate-size statistical checks on the experiment building blocks.

use rvl::bessel::{theta_samples, ThetaVariationExperiment};
use rvl::fbm::{FbmSampler, SamplerKind};
use rvl::ito::ItoVariationExperiment;
use rvl::stats::aggregate;
use rvl::variation::{e_h, variation_vnq, Lattice, VariationExperiment};
use rvl::{HurstParam, Runner, SeedSpec, UniformGrid};

fn h(v: f64) -> HurstParam {
    HurstParam::new(v).unwrap()
}

fn lattice(grids: Vec<usize>, paths: usize, seed: u64) -> Lattice {
    Lattice {
        horizon: 1.0,
        grids,
        paths,
        master_seed: seed,
        sampler: SamplerKind::Circulant,
    }
}

#[test]
fn theta_has_mean_zero() {
    let runner = Runner::new(0).unwrap();
    for (n, t_node) in [(1024, 1024), (1024, 512), (4096, 4096)] {
        let grid = UniformGrid::new(1.0, n).unwrap();
        let v = theta_samples(&runner, 3, h(0.45), grid, t_node, 10_000, 12).unwrap();
        let agg = aggregate(&v).unwrap();
        assert!(agg.mean.abs() < 3.0 * agg.stderr.unwrap(), "n={n}: {agg:?}");
    }
}

#[test]
fn theta_terminal_mean_stable_under_refinement() {
    let runner = Runner::new(0).unwrap();
    let coarse = theta_samples(
        &runner,
        3,
        h(0.45),
        UniformGrid::new(1.0, 1024).unwrap(),
        1024,
        4000,
        13,
    )
    .unwrap();
    let fine = theta_samples(
        &runner,
        3,
        h(0.45),
        UniformGrid::new(1.0, 4096).unwrap(),
        4096,
        4000,
        13,
    )
    .unwrap();
    let (a, b) = (aggregate(&coarse).unwrap(), aggregate(&fine).unwrap());
    let se = (a.stderr.unwrap().powi(2) + b.stderr.unwrap().powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se, "{a:?} {b:?}");
}

#[test]
fn variation_scales_with_horizon() {
    // V on [0, T] has the law of T times V on [0, 1] (increments scale by T^H).
    let (hv, n, m) = (0.35, 256, 2000);
    let q = 1.0 / hv;
    let sample = |horizon: f64, seed: u64| -> Vec<f64> {
        let grid = UniformGrid::new(horizon, n).unwrap();
        let s = FbmSampler::new(SamplerKind::Circulant, h(hv), grid).unwrap();
        (0..m)
            .map(|r| variation_vnq(&s.sample(SeedSpec::new(seed, r)), q).value)
            .collect()
    };
    let t = 3.0;
    let big = aggregate(&sample(t, 1)).unwrap();
    let unit: Vec<f64> = sample(1.0, 2).into_iter().map(|v| t * v).collect();
    let unit = aggregate(&unit).unwrap();
    let se = (big.stderr.unwrap().powi(2) + unit.stderr.unwrap().powi(2)).sqrt();
    assert!((big.mean - unit.mean).abs() < 3.0 * se, "{big:?} {unit:?}");
}

#[test]
fn identity_integrand_reduces_to_fbm_variation() {
    let runner = Runner::new(2).unwrap();
    let lat = lattice(vec![64, 256], 30, 3);
    let ito = ItoVariationExperiment {
        label: "identity".into(),
        hurst: h(0.3),
        dimension: 1,
        lattice: lat.clone(),
    }
    .run(&runner)
    .unwrap();
    let fbm = VariationExperiment {
        hurst: h(0.3),
        lattice: lat,
    }
    .run(&runner)
    .unwrap();
    for (a, b) in ito.rows.iter().zip(&fbm.rows) {
        assert_eq!(a.estimate, b.estimate);
        assert!((a.target - b.target).abs() < 1e-12 * b.target);
    }
    assert!((fbm.rows[0].target - e_h(h(0.3)).value).abs() < 1e-12);
}

#[test]
fn theta_variation_decreases() {
    let r = ThetaVariationExperiment {
        dimension: 3,
        hurst: h(0.45),
        lattice: lattice(vec![64, 1024], 100, 4),
    }
    .run(&Runner::new(0).unwrap())
    .unwrap();
    assert!(r.monotone_decreasing());
    assert!(r.rows.iter().all(|row| row.xi_target.is_some()));
}
