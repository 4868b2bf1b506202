//! Seeded statistical checks of the simulator against exact laws.

use chaoskit::gaussian_exact as gx;
use chaoskit::model::{validate_config, DriftSpec, ExperimentConfig, GaussianOUParams, InitCondition};
use chaoskit::simulate;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn cfg(n: usize, drift: DriftSpec, dt: f64, replicas: usize, seed: u64) -> ExperimentConfig {
    validate_config(ExperimentConfig { n, k: 1, d: 1, horizon: 1.0, dt, replicas, seed, drift, init: InitCondition::DiracZero })
        .unwrap()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn free_particles_are_brownian() {
    let c = cfg(1000, DriftSpec::zero(), 0.01, 1, 5);
    let e = simulate::simulate_particles(&c).unwrap();
    let (m, v) = mean_var(e.state(c.steps()));
    let n = 1000.0f64;
    assert!(m.abs() <= 5.0 * (1.0 / n).sqrt(), "mean {m}");
    assert!((v - 1.0).abs() <= 5.0 * (2.0 / (n - 1.0)).sqrt(), "variance {v}");
}

#[test]
fn first_particle_variance_in_chi_square_interval() {
    let p = GaussianOUParams::new(1.0, 1.0).unwrap();
    let c = cfg(256, DriftSpec::ou(p), 1e-3, 32, 11);
    let reps = simulate::simulate_replicas(&c).unwrap();
    let x1: Vec<f64> = reps.iter().map(|e| e.position(c.steps(), 0)[0]).collect();
    let (_, s2) = mean_var(&x1);
    let sigma2 = gx::ou_covariance_flow(p, 256, 1.0).unwrap().diagonal_entry();
    let chi = ChiSquared::new(31.0).unwrap();
    let stat = 31.0 * s2 / sigma2;
    let (lo, hi) = (chi.inverse_cdf(0.005), chi.inverse_cdf(0.995));
    assert!(lo <= stat && stat <= hi, "statistic {stat} outside [{lo}, {hi}]");
}

#[test]
fn euler_weak_error_halves_with_dt() {
    // exact law of the discretized chain, so the ratio carries no sampling noise
    let p = GaussianOUParams::new(1.0, 1.0).unwrap();
    let n = 256;
    let exact = gx::ou_covariance_flow(p, n, 1.0).unwrap().diagonal_entry();
    let err = |dt: f64| {
        let steps = (1.0 / dt).round() as usize;
        (gx::euler_ou_covariance(p, n, dt, steps).unwrap().diagonal_entry() - exact).abs()
    };
    for dt in [0.02, 0.01, 1e-3] {
        let ratio = err(dt) / err(dt / 2.0);
        assert!((ratio - 2.0).abs() <= 0.6, "dt={dt}: ratio {ratio}");
    }
}
