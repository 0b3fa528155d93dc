//! Property-based invariants of the geometry, quadrature and oracle layers,
//! plus a weak-order check of the time stepper against the exact one-step
//! law of the linear fixture.

use proptest::prelude::*;

use evodiff::coefficients::QuadratureSettings;
use evodiff::diffusion::{stream_endpoint, ExplosionGuard, TimeGrid};
use evodiff::geometry::{distance, rz_operator, FrameState};
use evodiff::oracle;
use evodiff::rng::{mean_stderr, NoiseStream};
use evodiff::testfn::TestFunction;
use evodiff::{Model, SpacePoint};

fn flat_point() -> impl Strategy<Value = SpacePoint> {
    proptest::collection::vec(-5.0f64..5.0, 2).prop_map(SpacePoint::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_distance_triangle_inequality(
        x in flat_point(),
        y in flat_point(),
        z in flat_point(),
        t in -1.0f64..1.0,
    ) {
        let model = Model::conformal_flat(
            2,
            evodiff::TimeFn::Exp { amp: 1.0, rate: -0.5 },
            evodiff::geometry::DriftSpec::Zero,
        );
        let dxy = distance(&model, t, &x, &y).unwrap();
        let dyz = distance(&model, t, &y, &z).unwrap();
        let dxz = distance(&model, t, &x, &z).unwrap();
        prop_assert!(dxz <= dxy + dyz + 1e-12);
        prop_assert!((distance(&model, t, &y, &x).unwrap() - dxy).abs() <= 1e-12);
    }

    #[test]
    fn sphere_distance_triangle_inequality_and_bound(
        t in -4.0f64..-0.5,
        vx in proptest::collection::vec(-1.0f64..1.0, 3),
        vy in proptest::collection::vec(-1.0f64..1.0, 3),
        vz in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let model = Model::shrinking_sphere(2, 0.0).unwrap();
        let r = model.radius(t);
        prop_assume!(vx.iter().map(|c| c * c).sum::<f64>() > 1e-4);
        prop_assume!(vy.iter().map(|c| c * c).sum::<f64>() > 1e-4);
        prop_assume!(vz.iter().map(|c| c * c).sum::<f64>() > 1e-4);
        let project = |v: &[f64]| {
            let n: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            SpacePoint::new(v.iter().map(|c| c * r / n).collect())
        };
        let (x, y, z) = (project(&vx), project(&vy), project(&vz));
        let dxy = distance(&model, t, &x, &y).unwrap();
        let dyz = distance(&model, t, &y, &z).unwrap();
        let dxz = distance(&model, t, &x, &z).unwrap();
        prop_assert!(dxz <= dxy + dyz + 1e-9);
        // geodesic distance on a sphere is at most pi r
        prop_assert!(dxy <= std::f64::consts::PI * r + 1e-9);
    }

    #[test]
    fn sphere_paths_stay_on_the_sphere(
        s in -4.0f64..-2.0,
        seed in 0u64..1_000,
    ) {
        let model = Model::shrinking_sphere(2, 0.0).unwrap();
        let t = s + 1.0;
        let grid = TimeGrid::new(s, t, 50).unwrap();
        let x0 = model.origin(s);
        let mut noise = NoiseStream::new(seed, 0);
        let (end, exit) = stream_endpoint(
            &model, &grid, &x0, &mut noise, &ExplosionGuard::default(),
        ).unwrap();
        prop_assert!(exit.is_none());
        prop_assert!((end.norm() - model.radius(t)).abs() <= 1e-9 * model.radius(t));
    }

    #[test]
    fn curvature_operator_dominates_the_scalar_bound(
        t in -4.0f64..-0.5,
    ) {
        let model = Model::shrinking_sphere(2, 0.0).unwrap();
        let x = model.origin(t);
        let frame = FrameState::canonical(&model, t, &x).unwrap();
        let rz = rz_operator(&model, t, &frame).unwrap();
        let k = evodiff::coefficients::k_bound(&model).value(t);
        for a in 0..model.dim {
            prop_assert!(rz[(a, a)] >= k - 1e-12);
        }
    }

    #[test]
    fn quadrature_is_additive_over_splits(
        a in -3.0f64..0.0,
        b in 0.5f64..3.0,
        split in 0.1f64..0.4,
    ) {
        let f = |x: f64| (x * x).sin() + 0.3 * x;
        let mid = a + split * (b - a);
        let whole = evodiff::quad::integrate(&f, a, b, 1e-12);
        let parts = evodiff::quad::integrate(&f, a, mid, 1e-12)
            + evodiff::quad::integrate(&f, mid, b, 1e-12);
        prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole.abs()));
    }

    #[test]
    fn oracle_satisfies_chapman_kolmogorov(
        s in -1.0f64..0.0,
        mid_frac in 0.2f64..0.8,
        t in 0.5f64..1.5,
    ) {
        let model = Model::ou(2);
        let q = QuadratureSettings::default();
        let m = s + mid_frac * (t - s);
        let p_st = oracle::mehler_params(&model, s, t, &q).unwrap();
        let p_sm = oracle::mehler_params(&model, s, m, &q).unwrap();
        let p_mt = oracle::mehler_params(&model, m, t, &q).unwrap();
        // contraction composes multiplicatively, variance affinely
        prop_assert!((p_st.m - p_sm.m * p_mt.m).abs() <= 1e-10);
        let sigma = p_mt.m * p_mt.m * p_sm.sigma2 + p_mt.sigma2;
        prop_assert!((p_st.sigma2 - sigma).abs() <= 1e-9);
    }
}

/// The Euler stepper is compared against the exact one-step transition of
/// the linear fixture under common random numbers; the weak endpoint error
/// must shrink roughly linearly in the step size.
#[test]
fn weak_order_against_exact_one_step_law() {
    let model = Model::ou(1);
    let f = TestFunction::Coordinate(0);
    let x0 = 1.0f64;
    let t = 1.0f64;
    let mut errors = Vec::new();
    let dts = [0.1f64, 0.01, 0.001];
    for (di, &dt) in dts.iter().enumerate() {
        let n_steps = (t / dt).round() as usize;
        let grid = TimeGrid::new(0.0, t, n_steps).unwrap();
        let n_paths = 20_000u64;
        let diffs: Vec<f64> = (0..n_paths)
            .map(|p| {
                // Euler endpoint
                let mut noise = NoiseStream::new(42 + di as u64, p);
                let (end, _) = stream_endpoint(
                    &model,
                    &grid,
                    &SpacePoint::new(vec![x0]),
                    &mut noise,
                    &ExplosionGuard::default(),
                )
                .unwrap();
                // exact endpoint, sharing the same increments
                let mut noise = NoiseStream::new(42 + di as u64, p);
                let mut x = x0;
                let decay = (-dt).exp();
                let sd = (1.0 - (-2.0 * dt).exp()).sqrt();
                for _ in 0..n_steps {
                    let db = noise.gaussian_increment(1, dt)[0];
                    x = decay * x + sd * (db / dt.sqrt());
                }
                f.value(&end.coords) - f.value(&[x])
            })
            .collect();
        let (mean, _) = mean_stderr(&diffs);
        errors.push(mean.abs().max(1e-12));
    }
    // log-log slope across the dt ladder
    let slope = (errors[0] / errors[2]).ln() / (dts[0] / dts[2]).ln();
    assert!(
        slope >= 0.8,
        "weak error did not shrink at first order: errors {errors:?}, slope {slope:.2}"
    );
    assert!(errors[2] < 1e-3, "absolute weak error too large: {errors:?}");
}
