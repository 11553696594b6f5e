use std::sync::Arc;

use prem_core::grid::{mixture_density, ScaleGrid};
use prem_core::inference::wald_intervals;
use prem_core::model::{ordinary_least_squares, weighted_least_squares};
use prem_core::pr::{pr_averaged, pr_pass, pr_pass_observed, PrConfig};
use prem_core::simulation::{replicate, Design, ErrorDistribution, ScenarioSpec};
use prem_core::{DMatrix, DVector, Method, MixingDensity, RegressionData};
use proptest::prelude::*;

fn grid(lo: f64, hi: f64, m: usize) -> Arc<ScaleGrid> {
    Arc::new(ScaleGrid::uniform(lo, hi, m).unwrap())
}

fn design(n: usize, values: &[f64]) -> RegressionData {
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { values[i] });
    let y = DVector::from_fn(n, |i, _| values[(i + 1) % n] - 0.5 * values[i]);
    RegressionData::new(x, y, vec!["(Intercept)".into(), "x".into()], true).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pass_densities_stay_normalized(
        residuals in prop::collection::vec(-20.0f64..20.0, 1..40),
        m in 2usize..60,
        hi in 1.0f64..60.0,
        seed in any::<u64>(),
    ) {
        let cfg = PrConfig::new(grid(1e-5, hi, m), seed).with_permutations(3);
        let order: Vec<usize> = (0..residuals.len()).rev().collect();
        let mut worst: f64 = 0.0;
        let out = pr_pass_observed(&residuals, &cfg, &order, &mut |_, psi| {
            assert!(psi.values().iter().all(|v| *v >= 0.0));
            worst = worst.max((psi.integral() - 1.0).abs());
        }).unwrap();
        prop_assert!(worst <= 1e-10);
        prop_assert!(out.log_marginal.is_finite());
        prop_assert!(out.weights.iter().all(|w| w.is_finite() && *w > 0.0));
        let avg = pr_averaged(&residuals, &cfg).unwrap();
        prop_assert!((avg.psi_n.integral() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn pass_is_symmetric_in_residual_sign(
        residuals in prop::collection::vec(-10.0f64..10.0, 1..20),
        m in 2usize..40,
    ) {
        let cfg = PrConfig::new(grid(0.01, 15.0, m), 0);
        let order: Vec<usize> = (0..residuals.len()).collect();
        let flipped: Vec<f64> = residuals.iter().map(|r| -r).collect();
        let a = pr_pass(&residuals, &cfg, &order).unwrap();
        let b = pr_pass(&flipped, &cfg, &order).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mixture_density_is_even(r in -30.0f64..30.0, raw in prop::collection::vec(0.0f64..5.0, 3..30)) {
        prop_assume!(raw.iter().any(|v| *v > 0.0));
        let psi = MixingDensity::from_unnormalized(grid(0.05, 20.0, raw.len()), raw).unwrap();
        prop_assert_eq!(mixture_density(r, &psi).unwrap(), mixture_density(-r, &psi).unwrap());
    }

    #[test]
    fn wls_with_constant_weights_is_ols(values in prop::collection::vec(-10.0f64..10.0, 4..30), w in 0.01f64..100.0) {
        let data = design(values.len(), &values);
        prop_assume!(ordinary_least_squares(&data).is_ok());
        let a = ordinary_least_squares(&data).unwrap();
        let b = weighted_least_squares(&data, &vec![w; values.len()]).unwrap();
        prop_assert!((&a - &b).amax() <= 1e-8 * (1.0 + a.amax()));
    }

    #[test]
    fn ols_residuals_are_orthogonal(values in prop::collection::vec(-10.0f64..10.0, 4..30)) {
        let data = design(values.len(), &values);
        prop_assume!(ordinary_least_squares(&data).is_ok());
        let beta = ordinary_least_squares(&data).unwrap();
        let r = data.residuals(&beta).unwrap();
        let g = data.x().transpose() * &r;
        prop_assert!(g.amax() <= 1e-9 * (1.0 + data.x().norm() * data.y().norm()));
    }

    #[test]
    fn wald_width_scales_with_root_variance(var in 1e-6f64..1e3, level in 0.5f64..0.999) {
        let beta = DVector::from_vec(vec![0.3]);
        let names = vec!["b".to_string()];
        let one = wald_intervals(&beta, &DMatrix::from_element(1, 1, var), &names, level).unwrap();
        let two = wald_intervals(&beta, &DMatrix::from_element(1, 1, 2.0 * var), &names, level).unwrap();
        prop_assert!((two[0].width() / one[0].width() - 2f64.sqrt()).abs() < 1e-12);
        prop_assert!((one[0].lower + one[0].upper - 0.6).abs() < 1e-12);
    }

    #[test]
    fn replicates_are_seed_deterministic(seed in any::<u64>(), rep in 0usize..50) {
        let spec = ScenarioSpec {
            error: ErrorDistribution::T2,
            n: 20,
            p: 3,
            design: Design::Ar1(0.5),
            beta_true: vec![1.0; 3],
            replications: 50,
            seed,
            methods: vec![Method::Ls],
        };
        prop_assert_eq!(replicate(&spec, rep).unwrap(), replicate(&spec, rep).unwrap());
    }
}
