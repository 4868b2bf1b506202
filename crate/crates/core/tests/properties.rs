use chaoskit::gaussian_exact as gx;
use chaoskit::hierarchy_bounds::{self as hb, ABParams, BoundInputs};
use chaoskit::metrics::{self, DiscreteMeasure};
use chaoskit::model::{
    DriftSpec, ExperimentConfig, GaussianOUParams, InitCondition, InteractionSpec, KernelSpec, SeriesCoefficients,
};
use chaoskit::simulate;
use proptest::prelude::*;

fn points(m: usize, d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, m * d)
}

proptest! {
    #[test]
    fn a_nondecreasing_in_t(a in 0.1..5.0f64, b in 0.1..5.0f64, ell in 0usize..8, t in 0.01..3.0f64, dt in 0.0..1.0f64) {
        let p = ABParams::new(a, b).unwrap();
        let lo = hb::a_closed(p, ell, t).unwrap();
        let hi = hb::a_closed(p, ell, t + dt).unwrap();
        prop_assert!(hi >= lo - 1e-14, "A_{ell}({t}) = {lo} > A_{ell}({}) = {hi}", t + dt);
    }

    #[test]
    fn a_nonincreasing_in_ell(a in 0.1..5.0f64, b in 0.1..5.0f64, ell in 0usize..20, t in 0.01..3.0f64) {
        let p = ABParams::new(a, b).unwrap();
        let cur = hb::a_closed(p, ell, t).unwrap();
        let next = hb::a_closed(p, ell + 1, t).unwrap();
        prop_assert!(next <= cur + 1e-14);
        prop_assert!((0.0..=1.0).contains(&cur));
    }

    #[test]
    fn a_dominated_by_subgaussian(a in 0.1..5.0f64, b in 0.1..5.0f64, ell in 0usize..30, t in 0.01..3.0f64) {
        let p = ABParams::new(a, b).unwrap();
        prop_assert!(hb::a_closed(p, ell, t).unwrap() <= hb::a_subgaussian_bound(p, ell, t) * (1.0 + 1e-12));
    }

    #[test]
    fn bound_totals_are_term_sums(
        c0 in 0.0..5.0f64, gamma in 0.0..2.0f64, m in 0.0..5.0f64, horizon in 0.0..1.0f64,
        n in 20usize..100_000, k in 1usize..10, ell in 1usize..5, rho in 0.05..0.95f64,
    ) {
        let mut reports = vec![hb::bound_reversed(c0, gamma, horizon, n, k).unwrap()];
        if let Ok(r) = hb::bound_main(BoundInputs { c0, gamma, m, horizon, n, k }) {
            reports.push(r);
        }
        reports.push(hb::bound_infrange(c0, &SeriesCoefficients::geometric(rho), horizon, n, k, ell).unwrap());
        for r in reports {
            let sum: f64 = r.terms.iter().map(|t| t.1).sum();
            prop_assert!((r.total - sum).abs() <= 1e-15 * sum.abs());
            prop_assert!(r.terms.iter().all(|t| t.1 >= 0.0));
        }
    }

    #[test]
    fn w2_assignment_symmetric((d, a, b) in (1usize..24, 1usize..3).prop_flat_map(|(m, d)| (Just(d), points(m, d), points(m, d)))) {
        let ab = metrics::w2_assignment(&a, &b, d).unwrap();
        let ba = metrics::w2_assignment(&b, &a, d).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
    }

    #[test]
    fn w2_assignment_zero_on_permuted_copy(a in points(16, 2), shift in 0usize..16) {
        let mut b = a.clone();
        b.rotate_left(2 * shift);
        prop_assert!(metrics::w2_assignment(&a, &b, 2).unwrap().abs() <= 1e-12);
        let mut c = a.clone();
        c[0] += 0.5;
        prop_assert!(metrics::w2_assignment(&a, &c, 2).unwrap() > 0.0);
    }

    #[test]
    fn w2_triangle_inequality((x, y, z) in (1usize..64).prop_flat_map(|m| (points(m, 1), points(m, 1), points(m, 1)))) {
        let w = |p: &[f64], q: &[f64]| metrics::w2_assignment(p, q, 1).unwrap().sqrt();
        prop_assert!(w(&x, &z) <= w(&x, &y) + w(&y, &z) + 1e-9);
    }

    #[test]
    fn pinsker_slacks_nonnegative(
        w1 in prop::collection::vec(0.0..1.0f64, 2..12),
        w2 in prop::collection::vec(0.01..1.0f64, 2..12),
        scale in 0.01..4.0f64,
        q in 1usize..3,
    ) {
        let m = w1.len().min(w2.len());
        let norm = |w: &[f64]| { let s: f64 = w.iter().sum(); w.iter().map(|v| v / s).collect::<Vec<_>>() };
        let (mut a, b) = (norm(&w1[..m]), norm(&w2[..m]));
        if a.iter().all(|v| *v == 0.0) { a = b.clone(); }
        let pts: Vec<f64> = (0..m).map(|i| i as f64).collect();
        let nu = DiscreteMeasure::new(1, pts.clone(), a).unwrap();
        let nu_p = DiscreteMeasure::new(1, pts, b).unwrap();
        let f: Vec<f64> = (0..m * q).map(|i| scale * ((i as f64) * 0.7).sin()).collect();
        prop_assert!(metrics::pinsker_gap(&nu, &nu_p, &f).unwrap().slack >= -1e-12);
        prop_assert!(metrics::weighted_pinsker_gap(&nu, &nu_p, &f).unwrap().slack >= -1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ou_flow_positive_definite(a in 1e-3..10.0f64, b in 1e-3..10.0f64, n in 2usize..5000, t in 1e-3..100.0f64) {
        let cov = gx::ou_covariance_flow(GaussianOUParams::new(a, b).unwrap(), n, t).unwrap();
        prop_assert!(cov.is_positive_definite());
        let (bulk, top) = cov.eigenvalues();
        prop_assert!(bulk > 0.0 && top > 0.0);
    }
}

fn exchangeability_cfg(drift: DriftSpec) -> ExperimentConfig {
    ExperimentConfig {
        n: 8,
        k: 1,
        d: 1,
        horizon: 0.2,
        dt: 0.01,
        replicas: 1,
        seed: 31,
        drift,
        init: InitCondition::IidGaussian { mean: 0.0, var: 1.0 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuting_particles_permutes_trajectories(
        perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(),
        init in prop::collection::vec(-2.0..2.0f64, 8),
        kernel in prop::sample::select(vec!["ou", "bounded_tanh", "rank_indicator"]),
    ) {
        let drift = match kernel {
            "ou" => DriftSpec::ou(GaussianOUParams::new(1.0, 0.7).unwrap()),
            other => DriftSpec {
                confinement: KernelSpec::new("ou_linear").with("a", 0.5),
                interaction: InteractionSpec::Pairwise(KernelSpec::new(other)),
                regularity: None,
            },
        };
        let cfg = exchangeability_cfg(drift);
        let keys: Vec<u64> = (0..8).map(|i| 100 + i).collect();
        let base = simulate::simulate_with_keys(&cfg, 0, &keys, &init).unwrap();
        let pkeys: Vec<u64> = perm.iter().map(|&j| keys[j]).collect();
        let pinit: Vec<f64> = perm.iter().map(|&j| init[j]).collect();
        let permuted = simulate::simulate_with_keys(&cfg, 0, &pkeys, &pinit).unwrap();
        for step in [0, cfg.steps() / 2, cfg.steps()] {
            for (i, &j) in perm.iter().enumerate() {
                let (x, y) = (permuted.position(step, i)[0], base.position(step, j)[0]);
                prop_assert!((x - y).abs() <= 1e-12, "step {step}: particle {i} ≠ original {j}");
            }
        }
    }
}
