use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradnet::{fd_check, Activation, NetParams};
use crate::ndcore::{factorizations, Matrix};
use crate::tasks::{BlobParams, EpisodeShape, Episode, TaskDistribution, TaskInfo, Targets};

fn sinusoid_episode(k_shot: usize, q_query: usize, seed: u64) -> Episode {
    let s = TaskDistribution::default().prepare().unwrap();
    s.sample_episode(EpisodeShape { n_way: 1, k_shot, q_query }, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn blob_episode(n_way: usize, k_shot: usize, q_query: usize, seed: u64) -> Episode {
    let s = TaskDistribution::GaussianBlobs(BlobParams { dim: 3, ..Default::default() }).prepare().unwrap();
    s.sample_episode(EpisodeShape { n_way, k_shot, q_query }, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn regression_episode(support: &[(f64, f64)], query: &[(f64, f64)]) -> Episode {
    let col = |pts: &[(f64, f64)]| Matrix::from_fn(pts.len(), 1, |i, _| pts[i].0);
    Episode {
        support_x: col(support),
        support_y: Targets::Real(support.iter().map(|p| p.1).collect()),
        query_x: col(query),
        query_y: Targets::Real(query.iter().map(|p| p.1).collect()),
        n_way: 1,
        k_shot: support.len(),
        q_query: query.len(),
        task_id: 0,
        classes: vec![0],
        info: TaskInfo::Sinusoid { amplitude: 1.0, phase: 0.0 },
    }
}

/// Functional gradient descent on `Σ (f(x_j) − y_j)² + λ‖f‖²` with
/// `f = Σ β_j k(x_j, ·)`. Runs until the coefficients stop moving or the step
/// budget is spent; shares nothing with the Cholesky path.
fn gd_oracle(xs: &[f64], ys: &[f64], sigma: f64, lambda: f64, queries: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let k = |a: f64, b: f64| (-(a - b) * (a - b) / (2.0 * sigma * sigma)).exp();
    let gram: Vec<Vec<f64>> = xs.iter().map(|&a| xs.iter().map(|&b| k(a, b)).collect()).collect();
    let mut beta = vec![0.0; n];
    let lr = 1e-3;
    for _ in 0..1_000_000 {
        let mut largest = 0.0f64;
        let step: Vec<f64> = (0..n)
            .map(|i| {
                let fi: f64 = (0..n).map(|j| gram[i][j] * beta[j]).sum();
                2.0 * lr * ((fi - ys[i]) + lambda * beta[i])
            })
            .collect();
        for (b, s) in beta.iter_mut().zip(&step) {
            *b -= s;
            largest = largest.max(s.abs());
        }
        if largest < 1e-16 {
            break;
        }
    }
    queries.iter().map(|&q| xs.iter().zip(&beta).map(|(&x, b)| b * k(x, q)).sum()).collect()
}

#[test]
fn rbf_examples() {
    assert_eq!(rbf_kernel(&[0.3, -1.0], &[0.3, -1.0], 0.7).unwrap(), 1.0);
    let sigma = 1.3;
    // ‖a − b‖² = 2σ²
    let v = rbf_kernel(&[0.0], &[sigma * 2f64.sqrt()], sigma).unwrap();
    assert!((v - (-1f64).exp()).abs() < 1e-15);
    assert!((v - 0.36788).abs() < 1e-5);
    let mut last = 1.0;
    for d in [0.5, 1.0, 2.0, 5.0, 50.0] {
        let k = rbf_kernel(&[0.0], &[d], 1.0).unwrap();
        assert!(k < last);
        last = k;
    }
    assert!(last < 1e-300);
    assert!(rbf_kernel(&[0.0], &[0.0, 1.0], 1.0).is_err());
    assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
}

#[test]
fn single_point_scalar_solve() {
    let ep = regression_episode(&[(0.5, 2.0)], &[(0.5, 2.0)]);
    let kp = KernelParams::new(1.0, 1.0, None).unwrap();
    let a = adapt(&ep, &kp).unwrap();
    assert_eq!(a.kernel().data(), &[1.0]);
    assert!((a.alpha[(0, 0)] - 1.0).abs() < 1e-15);
}

#[test]
fn separated_one_hot_classification_is_diagonal() {
    let mut ep = blob_episode(3, 1, 2, 1);
    ep.support_x = Matrix::from_fn(3, 3, |i, j| if i == j { 10.0 * (i + 1) as f64 } else { 0.0 });
    let kp = KernelParams::new(0.01, 0.1, None).unwrap();
    let a = adapt(&ep, &kp).unwrap();
    assert_eq!(a.kernel(), &Matrix::identity(3));
    let Targets::Labels(labels) = &ep.support_y else { panic!() };
    for (i, &l) in labels.iter().enumerate() {
        for c in 0..3 {
            let expected = if c == l { 1.0 / 1.1 } else { 0.0 };
            assert!((a.alpha[(i, c)] - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn closed_form_matches_gradient_descent_oracle() {
    let ep = sinusoid_episode(10, 25, 3);
    let kp = KernelParams::initial(None);
    let a = adapt(&ep, &kp).unwrap();
    let pred = a.predict(&ep.query_x).unwrap();
    let Targets::Real(ys) = &ep.support_y else { panic!() };
    let xs: Vec<f64> = ep.support_x.data().to_vec();
    let oracle = gd_oracle(&xs, ys, kp.sigma(), kp.lambda(), ep.query_x.data());
    for (p, o) in pred.data().iter().zip(&oracle) {
        assert!((p - o).abs() < 1e-5, "{p} vs {o}");
    }
}

#[test]
fn interpolates_support_with_vanishing_ridge() {
    let ep = sinusoid_episode(6, 3, 4);
    let kp = KernelParams::new(1.0, 1e-10, None).unwrap();
    let a = adapt(&ep, &kp).unwrap();
    let pred = a.predict(&ep.support_x).unwrap();
    let Targets::Real(ys) = &ep.support_y else { panic!() };
    for (p, y) in pred.data().iter().zip(ys) {
        assert!((p - y).abs() < 1e-6, "{p} vs {y}");
    }
}

#[test]
fn far_queries_predict_zero_and_expansion_matches() {
    let ep = regression_episode(&[(-2.0, 1.0), (-1.0, -0.5), (0.0, 2.0), (1.5, 0.3), (3.0, -1.2)], &[(0.0, 0.0)]);
    let kp = KernelParams::new(0.9, 0.2, None).unwrap();
    let a = adapt(&ep, &kp).unwrap();
    let far = a.predict(&Matrix::new(1, 1, vec![1e3]).unwrap()).unwrap();
    assert_eq!(far[(0, 0)], 0.0);

    let xq = [-1.7, 0.2, 2.4];
    let pred = a.predict(&Matrix::new(3, 1, xq.to_vec()).unwrap()).unwrap();
    for (i, &q) in xq.iter().enumerate() {
        let mut s = 0.0;
        for j in 0..5 {
            let d = ep.support_x[(j, 0)] - q;
            s += a.alpha[(j, 0)] * (-d * d / (2.0 * 0.9 * 0.9)).exp();
        }
        assert!((pred[(i, 0)] - s).abs() < 1e-14);
    }
    assert!(a.predict(&Matrix::zeros(1, 2)).is_err());
}

#[test]
fn duplicate_support_with_tiny_ridge_is_not_pd() {
    let ep = regression_episode(&[(1.0, 1.0), (1.0, 2.0)], &[(0.0, 0.0)]);
    let kp = KernelParams::new(1.0, 1e-20, None).unwrap();
    assert!(matches!(adapt(&ep, &kp), Err(crate::Error::NotPositiveDefinite { .. })));
}

#[test]
fn grad_norm_penalty_examples() {
    // Interpolation on the support itself: zero residual.
    let ep = sinusoid_episode(5, 5, 7);
    let mut on_support = ep.clone();
    on_support.query_x = ep.support_x.clone();
    on_support.query_y = ep.support_y.clone();
    let a = adapt(&on_support, &KernelParams::new(1.0, 1e-10, None).unwrap()).unwrap();
    assert!(grad_norm_penalty(&a, &on_support).unwrap() < 1e-10);

    // f(x) = 3 against y = 1 at a single point: (2·2)² = 16.
    let lambda = 0.5;
    let single = regression_episode(&[(0.0, 3.0 * (1.0 + lambda))], &[(0.0, 1.0)]);
    let a = adapt(&single, &KernelParams::new(1.0, lambda, None).unwrap()).unwrap();
    assert!((grad_norm_penalty(&a, &single).unwrap() - 16.0).abs() < 1e-12);

    // Residual oracle on a random episode.
    let a = adapt(&ep, &KernelParams::initial(None)).unwrap();
    let Targets::Real(yq) = &ep.query_y else { panic!() };
    let resid: f64 = (0..yq.len())
        .map(|i| {
            let fx = a.predict(&ep.query_x.slice_rows(i, i + 1)).unwrap()[(0, 0)];
            (fx - yq[i]).powi(2)
        })
        .sum();
    assert!((grad_norm_penalty(&a, &ep).unwrap() - 4.0 * resid).abs() < 1e-10);
}

#[test]
fn info_penalty_examples() {
    let mut ep = sinusoid_episode(4, 2, 8);
    ep.support_x = Matrix::new(4, 1, vec![0.0, 100.0, 200.0, 300.0]).unwrap();
    let kp = KernelParams::new(1.0, 1.0, None).unwrap();
    assert!((info_penalty(&kp, &ep).unwrap() - 2.0).abs() < 1e-15);
    let big = KernelParams::new(1.0, 1e12, None).unwrap();
    assert!(info_penalty(&big, &sinusoid_episode(6, 2, 9)).unwrap() < 1e-10);

    let ep = sinusoid_episode(12, 2, 10);
    let lambda = 0.5;
    let kp = KernelParams::new(1.0, lambda, None).unwrap();
    let k = kernel_matrix(&ep.support_x, &ep.support_x, 1.0).unwrap();
    let eig = nalgebra::DMatrix::from_row_slice(12, 12, k.data()).symmetric_eigen();
    let oracle: f64 = eig.eigenvalues.iter().map(|e| e / (e + lambda)).sum();
    assert!((info_penalty(&kp, &ep).unwrap() - oracle).abs() < 1e-10);

    let logdet_oracle: f64 = eig.eigenvalues.iter().map(|e| (1.0 + e / lambda).ln()).sum();
    assert!((info_penalty_with(&kp, &ep, InfoRegularizer::LogDet).unwrap() - logdet_oracle).abs() < 1e-9);
}

#[test]
fn info_penalty_decreases_with_ridge() {
    let ep = sinusoid_episode(10, 2, 11);
    let mut last = f64::INFINITY;
    for lambda in [1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0] {
        let v = info_penalty(&KernelParams::new(1.0, lambda, None).unwrap(), &ep).unwrap();
        assert!(v < last && (0.0..=10.0).contains(&v));
        last = v;
    }
}

#[test]
fn objective_terms_combine_linearly() {
    let ep = sinusoid_episode(5, 10, 12);
    let kp = KernelParams::initial(None);
    let off = RegWeights::default();
    let (v, _) = task_objective_with(&ep, &kp, &off, ObjectiveOptions::default()).unwrap();
    assert_eq!(v.total, v.query_loss);
    let a = adapt(&ep, &kp).unwrap();
    let Targets::Real(yq) = &ep.query_y else { panic!() };
    let (mse, _) = crate::gradnet::loss::mse(&a.predict(&ep.query_x).unwrap(), yq).unwrap();
    assert_eq!(v.query_loss, mse);

    let gamma = 0.3;
    let (one, _) = task_objective(&ep, &kp, &RegWeights { gamma, ..off }).unwrap();
    let (two, _) = task_objective(&ep, &kp, &RegWeights { gamma: 2.0 * gamma, ..off }).unwrap();
    let info = info_penalty(&kp, &ep).unwrap();
    assert!((two - one - gamma * info).abs() < 1e-12);

    let mu = 0.05;
    let (pen, _) = task_objective(&ep, &kp, &RegWeights { mu, ..off }).unwrap();
    let (lit, _) = task_objective(&ep, &kp, &RegWeights { mu, mu_sign: -1.0, ..off }).unwrap();
    let gnp = grad_norm_penalty(&a, &ep).unwrap();
    assert!((pen - v.query_loss - mu * gnp).abs() < 1e-12);
    assert!((lit - v.query_loss + mu * gnp).abs() < 1e-12);
}

#[test]
fn one_factorization_per_adaptation_and_objective() {
    let ep = blob_episode(5, 1, 15, 13);
    let kp = KernelParams::initial(None);
    let before = factorizations();
    adapt(&ep, &kp).unwrap();
    assert_eq!(factorizations() - before, 1);
    let rw = RegWeights { mu: 0.1, gamma: 0.1, mu_sign: 1.0 };
    let before = factorizations();
    task_objective(&ep, &kp, &rw).unwrap();
    assert_eq!(factorizations() - before, 1);
}

fn check_objective(ep: &Episode, kp: &KernelParams, rw: RegWeights, opts: ObjectiveOptions) -> crate::gradnet::CheckReport {
    fd_check(
        |flat| {
            let p = kp.unflatten(flat)?;
            let (v, g) = task_objective_with(ep, &p, &rw, opts)?;
            Ok((v.total, g.flatten()))
        },
        &kp.flatten(),
        1e-5,
        1e-4,
    )
    .unwrap()
}

#[test]
fn hyperparameter_gradients_match_fd() {
    let ep = sinusoid_episode(5, 10, 14);
    let kp = KernelParams::new(1.3, 0.2, None).unwrap();
    for rw in [
        RegWeights::default(),
        RegWeights { mu: 0.02, gamma: 0.1, mu_sign: 1.0 },
        RegWeights { mu: 0.02, gamma: 0.1, mu_sign: -1.0 },
    ] {
        for info in [InfoRegularizer::EffectiveDof, InfoRegularizer::LogDet] {
            let r = check_objective(&ep, &kp, rw, ObjectiveOptions { info, first_order: false });
            assert!(r.passed, "{rw:?} {info:?}: {r:?}");
        }
    }
}

#[test]
fn embedding_gradients_match_fd_for_classification() {
    let ep = blob_episode(3, 2, 4, 15);
    let embed = NetParams::init(&[3, 6, 4], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
    let kp = KernelParams::new(1.1, 0.3, Some(embed)).unwrap();
    let rw = RegWeights { mu: 0.05, gamma: 0.05, mu_sign: 1.0 };
    let r = check_objective(&ep, &kp, rw, ObjectiveOptions::default());
    assert!(r.passed, "{r:?}");
}

#[test]
fn first_order_drops_the_solve_path() {
    let ep = sinusoid_episode(5, 10, 17);
    let kp = KernelParams::initial(None);
    let rw = RegWeights::default();
    let opts = ObjectiveOptions { first_order: true, ..Default::default() };
    let (_, fo) = task_objective_with(&ep, &kp, &rw, opts).unwrap();
    let (_, full) = task_objective_with(&ep, &kp, &rw, ObjectiveOptions::default()).unwrap();
    // With α frozen the ridge weight only acts through the solve.
    assert_eq!(fo.log_lambda, 0.0);
    assert_ne!(full.log_lambda, 0.0);
    assert_ne!(fo.log_sigma, full.log_sigma);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_form_equals_gd_oracle(k_shot in 1usize..=20, seed in any::<u64>()) {
        let ep = sinusoid_episode(k_shot, 8, seed);
        let kp = KernelParams::initial(None);
        let a = adapt(&ep, &kp).unwrap();
        let pred = a.predict(&ep.query_x).unwrap();
        let Targets::Real(ys) = &ep.support_y else { unreachable!() };
        let oracle = gd_oracle(ep.support_x.data(), ys, kp.sigma(), kp.lambda(), ep.query_x.data());
        for (p, o) in pred.data().iter().zip(&oracle) {
            prop_assert!((p - o).abs() < 1e-5);
        }
    }

    #[test]
    fn coefficient_norm_shrinks_along_ridge_path(seed in any::<u64>(), k_shot in 2usize..=15) {
        let ep = sinusoid_episode(k_shot, 2, seed);
        let mut last = f64::INFINITY;
        for lambda in [1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0, 5.0] {
            let a = adapt(&ep, &KernelParams::new(1.0, lambda, None).unwrap()).unwrap();
            let norm = a.alpha.frobenius_norm();
            prop_assert!(norm <= last * (1.0 + 1e-12));
            last = norm;
        }
    }

    #[test]
    fn kernel_matrix_is_symmetric_psd(n in 1usize..=32, dim in 1usize..4, log_sigma in -2.0f64..2.0, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, dim, |_, _| rng.random_range(-3.0..3.0));
        let k = kernel_matrix(&x, &x, log_sigma.exp()).unwrap();
        prop_assert_eq!(k.relative_asymmetry(), 0.0);
        let eig = nalgebra::DMatrix::from_row_slice(n, n, k.data()).symmetric_eigen();
        prop_assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn meta_gradients_pass_fd_check(seed in any::<u64>(), log_sigma in -0.5f64..1.0, log_lambda in -3.0f64..0.0) {
        let ep = sinusoid_episode(5, 6, seed);
        let kp = KernelParams { log_sigma, log_lambda, embed: None };
        let rw = RegWeights { mu: 0.01, gamma: 0.1, mu_sign: 1.0 };
        let r = check_objective(&ep, &kp, rw, ObjectiveOptions::default());
        prop_assert!(r.passed, "{:?}", r);
    }
}
