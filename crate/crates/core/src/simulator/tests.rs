use super::*;
use approx::assert_relative_eq;
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(d: usize, t: usize, m1: usize, eta: f64, generations: usize, trials: usize) -> SimConfig {
    SimConfig {
        d,
        t,
        sigma2: 1.0,
        w_star_mode: WStarMode::UnitFirstAxis,
        m1_size: m1,
        eta,
        generations,
        trials,
        seed: 17,
    }
}

#[test]
fn design_rows_are_standard_normal() {
    let c = SimConfig {
        d: 5,
        t: 100_000,
        ..SimConfig::default()
    };
    let x = make_dataset(&c, &mut ChaCha8Rng::seed_from_u64(1)).x;
    for j in 0..5 {
        assert!(x.column(j).mean().abs() < 0.02);
    }
    let cov = x.transpose() * &x / c.t as f64;
    let diff = (&cov - DMatrix::<f64>::identity(5, 5)).norm();
    assert!(diff / 5f64.sqrt() < 0.05, "{diff}");
}

#[test]
fn w_star_has_unit_norm() {
    let mut c = cfg(7, 20, 0, 0.5, 1, 1);
    let a = make_dataset(&c, &mut ChaCha8Rng::seed_from_u64(1)).w_star;
    assert_eq!(a.norm(), 1.0);
    assert_eq!(a[0], 1.0);
    c.w_star_mode = WStarMode::RandomUnit;
    let b = make_dataset(&c, &mut ChaCha8Rng::seed_from_u64(1)).w_star;
    assert_relative_eq!(b.norm(), 1.0, epsilon = 1e-15);
}

#[test]
fn noiseless_fit_interpolates() {
    let c = cfg(6, 30, 0, 0.5, 1, 1);
    let data = make_dataset(&c, &mut ChaCha8Rng::seed_from_u64(2));
    let w = fit_ridgeless(&data.x, &(&data.x * &data.w_star)).unwrap();
    assert!((w - &data.w_star).amax() < 1e-10);
}

#[test]
fn identity_design_returns_targets() {
    let y = DVector::from_vec(vec![1.5, -2.0, 0.25]);
    let w = fit_ridgeless(&DMatrix::identity(3, 3), &y).unwrap();
    assert!((w - &y).amax() < 1e-15);
}

#[test]
fn fit_agrees_with_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = DMatrix::from_fn(40, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(40, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = fit_ridgeless(&x, &y).unwrap();
        let oracle = (x.transpose() * &x)
            .lu()
            .solve(&(x.transpose() * &y))
            .unwrap();
        assert!((&w - &oracle).amax() <= 1e-8 * oracle.amax());
    }
}

#[test]
fn rank_deficiency_is_detected() {
    let mut x = DMatrix::from_fn(10, 3, |i, j| (i * 3 + j) as f64 + 1.0);
    let c0 = x.column(0).clone_owned();
    x.set_column(2, &(c0 * 2.0));
    assert!(matches!(
        fit_ridgeless(&x, &DVector::zeros(10)),
        Err(Error::RankDeficient { rank: 2, cols: 3 })
    ));
}

#[test]
fn test_error_examples() {
    let w_star = DVector::from_vec(vec![0.5, 0.5]);
    assert_eq!(test_error(&w_star, &w_star, None), 0.0);
    let w = DVector::from_vec(vec![1.5, 0.5]);
    assert_eq!(test_error(&w, &w_star, None), 1.0);
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
    let w = DVector::from_vec(vec![1.5, 1.5]);
    assert_eq!(test_error(&w, &w_star, Some(&sigma)), 3.0);
}

#[test]
fn mask_size_examples() {
    assert_eq!(mask_sizes(8, 0.5, 4), [8, 4, 2, 1]);
    assert_eq!(mask_sizes(5, 0.0, 4), [5, 0, 0, 0]);
    let c = cfg(2, 20, 8, 0.5, 4, 1);
    let s = make_edit_masks(&c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(s.sizes(), [8, 4, 2, 1]);
    s.check_disjoint().unwrap();
}

#[test]
fn mask_capacity_is_enforced() {
    let c = cfg(2, 20, 15, 0.5, 3, 1);
    let err = make_edit_masks(&c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(
        err,
        Error::MaskCapacity {
            required: 27,
            available: 20
        }
    ));
}

#[test]
fn config_lists_every_violation() {
    let c = SimConfig {
        d: 10,
        t: 5,
        sigma2: -1.0,
        m1_size: 6,
        eta: 1.0,
        generations: 0,
        trials: 0,
        ..SimConfig::default()
    };
    assert_eq!(c.violations().len(), 6);
    assert!(SimConfig::default().validate().is_ok());
}

#[test]
fn collapse_slope_arithmetic() {
    let c = cfg(10, 100, 0, 0.5, 10, 1);
    assert_relative_eq!(c.unit_error(), 10.0 / 89.0, epsilon = 1e-15);
    assert!((c.unit_error() - 0.112360).abs() < 1e-6);
}

#[test]
fn collapse_generation_one_matches_expectation() {
    let c = cfg(10, 100, 0, 0.5, 2, 500);
    let traj = run_collapse_process(&c).unwrap();
    let gap = (traj.per_generation_test_error[0] - c.unit_error()).abs();
    assert!(gap <= 3.0 * traj.stderr[0], "{gap} vs {}", traj.stderr[0]);
}

#[test]
fn noiseless_processes_have_zero_error() {
    let mut c = cfg(4, 20, 4, 0.5, 5, 8);
    c.sigma2 = 0.0;
    for traj in [
        run_collapse_process(&c).unwrap(),
        run_editing_process(&c).unwrap(),
    ] {
        assert!(traj.per_generation_test_error.iter().all(|&e| e < 1e-24));
    }
}

#[test]
fn empty_masks_freeze_the_error() {
    let c = cfg(5, 30, 0, 0.5, 6, 1);
    let trial = run_editing_trial(&c, 0).unwrap();
    for w in &trial.estimates {
        assert_eq!(w, &trial.estimates[0]);
    }
}

#[test]
fn first_generation_agrees_between_processes() {
    let c = cfg(5, 30, 6, 0.5, 4, 1);
    for i in 0..10 {
        let edit = run_editing_trial(&c, i).unwrap();
        let collapse = run_collapse_trial(&c, i).unwrap();
        assert_eq!(
            test_error(&edit.estimates[0], &edit.w_star, None),
            collapse[0]
        );
    }
}

#[test]
fn closed_form_first_generation() {
    let c = cfg(4, 25, 5, 0.5, 3, 1);
    let trial = run_editing_trial(&c, 3).unwrap();
    let w1 = closed_form_estimator(&trial.x, &trial.noise[..1], &[], &trial.w_star).unwrap();
    assert!((&w1 - &trial.estimates[0]).amax() < 1e-10);
}

#[test]
fn closed_form_ignores_noise_outside_masks() {
    let c = cfg(3, 12, 0, 0.5, 3, 1);
    let trial = run_editing_trial(&c, 0).unwrap();
    let empty = vec![Vec::new(), Vec::new()];
    let a = closed_form_estimator(&trial.x, &trial.noise, &empty, &trial.w_star).unwrap();
    let mut shifted = trial.noise.clone();
    shifted[1] *= 7.0;
    shifted[2].fill(3.0);
    let b = closed_form_estimator(&trial.x, &shifted, &empty, &trial.w_star).unwrap();
    assert_eq!(a, b);
}

#[test]
fn closed_form_rejects_overlapping_masks() {
    let x = DMatrix::identity(3, 3);
    let noise = vec![DVector::zeros(3); 3];
    let masks = vec![vec![0, 1], vec![1]];
    assert!(matches!(
        closed_form_estimator(&x, &noise, &masks, &DVector::zeros(3)),
        Err(Error::OverlappingMasks {
            first: 0,
            second: 1
        })
    ));
}

/// Residual form of the editing recursion. With `r = Ỹ − Xw*` and the hat
/// matrix `P = X(XᵀX)⁻¹Xᵀ`:
/// `r_{n+1} = r_n + M_n((P − I) r_n + E_{n+1})`, `ŵ_n = w* + (XᵀX)⁻¹Xᵀ r_n`.
fn residual_oracle(
    x: &DMatrix<f64>,
    noise: &[DVector<f64>],
    masks: &[Vec<usize>],
    w_star: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let gram_inv = (x.transpose() * x).try_inverse().unwrap();
    let hat = x * &gram_inv * x.transpose();
    let mut r = noise[0].clone();
    let mut out = vec![w_star + &gram_inv * x.transpose() * &r];
    for (mask, e) in masks.iter().zip(&noise[1..]) {
        let step = (&hat * &r - &r) + e;
        for &row in mask {
            r[row] += step[row];
        }
        out.push(w_star + &gram_inv * x.transpose() * &r);
    }
    out
}

#[test]
fn iteration_matches_residual_oracle() {
    for (i, d) in [2usize, 5, 10].into_iter().enumerate() {
        let c = cfg(d, 100, 20, 0.5, 8, 1);
        for trial in 0..5 {
            let t = run_editing_trial(&c, trial + 10 * i).unwrap();
            let n = t.estimates.len();
            let oracle = residual_oracle(&t.x, &t.noise, &t.masks.masks[..n - 1], &t.w_star);
            for (w, o) in t.estimates.iter().zip(&oracle) {
                assert!((w - o).amax() < 1e-8);
            }
        }
    }
}

#[test]
fn closed_form_matches_oracle_for_square_designs() {
    // P = I when T = d, so the residual recursion reduces to the closed form.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 6;
    let x = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w_star = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise: Vec<_> = (0..4)
        .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let masks = vec![vec![0, 3], vec![1], vec![5]];
    let oracle = residual_oracle(&x, &noise, &masks, &w_star);
    for n in 0..=3 {
        let w = closed_form_estimator(&x, &noise[..=n], &masks[..n], &w_star).unwrap();
        assert!((&w - &oracle[n]).amax() < 1e-8);
    }
}

#[test]
fn closed_form_departs_from_iteration_when_rows_exceed_columns() {
    // For T > d the masked rows of (P − I)r_n do not vanish, so the
    // iteration and the closed form separate from the second estimate on.
    let c = cfg(5, 50, 10, 0.5, 2, 1);
    let t = run_editing_trial(&c, 0).unwrap();
    let w2 = closed_form_estimator(&t.x, &t.noise, &t.masks.masks[..1], &t.w_star).unwrap();
    assert!((&w2 - &t.estimates[1]).amax() > 1e-6);
}

#[test]
fn trace_moments_match_inverse_wishart_mean() {
    let (m1, m2) = estimate_trace_moments(5, 50, 2000, 1).unwrap();
    assert!((m1 / (5.0 / 44.0) - 1.0).abs() < 0.05, "{m1}");
    assert!(m2 > 0.0 && m2 >= m1 * m1 / 5.0);
    let (m1, _) = estimate_trace_moments(1, 10, 2000, 1).unwrap();
    assert!((m1 / 0.125 - 1.0).abs() < 0.05, "{m1}");
}

#[test]
fn trace_identity_against_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(20, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let (a, b) = inverse_gram_traces(&x);
    assert_relative_eq!(a, inv.trace(), max_relative = 1e-10);
    assert_relative_eq!(b, (&inv * &inv).trace(), max_relative = 1e-10);
}

#[test]
fn bound_arithmetic() {
    let c = cfg(10, 100, 20, 0.5, 10, 1);
    let b = theoretical_bounds(&c, 0.01);
    assert_relative_eq!(b.relaxed, 20.0 / 89.0, epsilon = 1e-15);
    assert_relative_eq!(b.collapse_line(3), 30.0 / 89.0, epsilon = 1e-15);
    assert_relative_eq!(
        b.geometric.unwrap(),
        10.0 / 89.0 + 0.1 * 20f64.sqrt() / 0.5,
        epsilon = 1e-15
    );
    let empty = theoretical_bounds(&cfg(10, 100, 0, 0.5, 10, 1), 0.01);
    assert_eq!(empty.geometric, Some(10.0 / 89.0));
    let mut over = c.clone();
    over.eta = 1.0;
    assert_eq!(theoretical_bounds(&over, 0.01).geometric, None);
}

#[test]
fn linear_fit_recovers_exact_line() {
    let xs = [1.0, 2.0, 3.0, 4.0];
    let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 1.0).collect();
    let f = linear_fit(&xs, &ys).unwrap();
    assert_relative_eq!(f.slope, 0.5, epsilon = 1e-12);
    assert_relative_eq!(f.intercept, -1.0, epsilon = 1e-12);
    assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
    assert!(linear_fit(&[1.0], &[1.0]).is_err());
}

#[test]
fn trajectories_do_not_depend_on_thread_count() {
    let c = cfg(4, 20, 4, 0.5, 5, 40);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let four = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = one.install(|| run_editing_process(&c).unwrap());
    let b = four.install(|| run_editing_process(&c).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.per_generation_test_error.len(), 5);
    assert_eq!(a.collapse_line.len(), 5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_are_disjoint_and_geometric(t in 2usize..200, m1 in 0usize..40, eta in 0.0f64..0.99,
                                            gens in 1usize..15, seed in any::<u64>()) {
        let c = SimConfig { d: 1, t: t.max(3), m1_size: m1.min(t), eta, generations: gens, ..SimConfig::default() };
        match make_edit_masks(&c, &mut ChaCha8Rng::seed_from_u64(seed)) {
            Ok(s) => {
                prop_assert_eq!(s.sizes(), mask_sizes(c.m1_size, eta, gens));
                prop_assert!(s.check_disjoint().is_ok());
                prop_assert!(s.masks.iter().flatten().all(|&r| r < c.t));
            }
            Err(Error::MaskCapacity { required, available }) => {
                prop_assert!(required > available);
                prop_assert_eq!(required, mask_sizes(c.m1_size, eta, gens).iter().sum::<usize>());
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
