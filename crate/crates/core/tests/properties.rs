use elastica_core::analysis::{
    build_admm_maps, build_easgd_maps, lemma1_variance, sync_stability, theorem2_bound, theorem2_fixed_point,
    theorem2_recursion, Horizon, Lemma1Params, Roots, Theorem2Params,
};
use elastica_core::distributed::{
    async_easgd_step, eamsgd_step, sync_easgd_round, sync_easgd_round_moving_average, sync_easgd_round_penalty,
    ElasticParams, MasterState, WorkerState,
};
use elastica_core::harness::{run_simulation, Method, Schedule, SimulationConfig};
use elastica_core::linalg::{mat_inverse, mat_mul, spectral_radius, Matrix};
use elastica_core::optim::{msgd_step, polyak_average, sgd_step, Averaging, SeqState};
use elastica_core::problems::{NoiseDist, NoiseStream, QuadraticProblem, StreamId};
use proptest::prelude::*;

/// Orthogonal matrix from Gram-Schmidt on a random square matrix.
fn orthonormalize(raw: &[Vec<f64>]) -> Option<Matrix> {
    let n = raw.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for v in raw {
        let mut u = v.clone();
        for b in &basis {
            let proj: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            return None;
        }
        u.iter_mut().for_each(|x| *x /= norm);
        basis.push(u);
    }
    Matrix::from_rows(&basis).ok()
}

fn square(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(lo..hi, n), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_radius_invariant_under_orthogonal_similarity(
        (eigs, raw) in (3usize..=9).prop_flat_map(|n| (prop::collection::vec(-2.0f64..2.0, n), square(n, -1.0, 1.0)))
    ) {
        let Some(q) = orthonormalize(&raw) else { return Ok(()) };
        let d = Matrix::diag(&eigs).unwrap();
        let m = mat_mul(&mat_mul(&q, &d).unwrap(), &q.transpose()).unwrap();
        let oracle = eigs.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let r = spectral_radius(&m, 1e-13).unwrap().value;
        prop_assert!((r - oracle).abs() <= 1e-6 * oracle.max(1e-3), "{r} vs {oracle}");
    }

    #[test]
    fn upper_triangular_radius_is_max_diagonal(
        raw in (2usize..=7).prop_flat_map(|n| square(n, -1.5, 1.5))
    ) {
        let n = raw.len();
        let mut m = Matrix::from_rows(&raw).unwrap();
        for i in 0..n {
            for j in 0..i {
                m[(i, j)] = 0.0;
            }
        }
        // distinct diagonal keeps the matrix diagonalisable
        for i in 0..n {
            m[(i, i)] = 0.2 + 0.15 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let oracle = (0..n).fold(0.0f64, |a, i| a.max(m[(i, i)].abs()));
        let r = spectral_radius(&m, 1e-13).unwrap().value;
        prop_assert!((r - oracle).abs() < 1e-6 * oracle);
    }

    #[test]
    fn inverse_is_two_sided(raw in (1usize..=8).prop_flat_map(|n| square(n, -1.0, 1.0))) {
        let n = raw.len();
        let mut m = Matrix::from_rows(&raw).unwrap();
        for i in 0..n {
            m[(i, i)] += 2.0 * n as f64;
        }
        let inv = mat_inverse(&m).unwrap();
        let id = Matrix::identity(n);
        prop_assert!(mat_mul(&inv, &m).unwrap().max_abs_diff(&id) < 1e-10);
        prop_assert!(mat_mul(&m, &inv).unwrap().max_abs_diff(&id) < 1e-10);
    }

    #[test]
    fn noiseless_gradient_is_exact(
        diag in prop::collection::vec(0.1f64..5.0, 1..5),
        seed in any::<u64>(),
        step in 0u64..1000,
    ) {
        let d = diag.len();
        let b: Vec<f64> = (0..d).map(|i| i as f64 - 1.0).collect();
        let q = QuadraticProblem::new(Matrix::diag(&diag).unwrap(), b.clone(), Matrix::zeros(d, d), NoiseDist::Gaussian).unwrap();
        let x: Vec<f64> = (0..d).map(|i| 0.5 * i as f64 + 0.25).collect();
        let noise = NoiseStream::new(seed);
        let g = q.noisy_gradient(&x, &noise, StreamId { replica: 0, worker: 0, step }).unwrap();
        let exact: Vec<f64> = (0..d).map(|i| diag[i] * x[i] - b[i]).collect();
        prop_assert_eq!(g, exact);
    }

    #[test]
    fn noise_draws_are_reproducible(seed in any::<u64>(), replica in 0u64..50, worker in 0u64..50, step in any::<u32>()) {
        let q = QuadraticProblem::scalar(1.0, 0.0, 4.0).unwrap();
        let id = StreamId { replica, worker, step: step as u64 };
        let a = q.noisy_gradient(&[0.3], &NoiseStream::new(seed), id).unwrap();
        let b = q.noisy_gradient(&[0.3], &NoiseStream::new(seed), id).unwrap();
        prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn momentum_free_msgd_is_sgd(x0 in -10.0f64..10.0, h in 0.1f64..3.0, eta in 0.01f64..0.5, steps in 1usize..200) {
        let grad = |x: &[f64]| vec![h * x[0] - 0.7];
        let mut a = SeqState::new(vec![x0]);
        let mut b = a.clone();
        for _ in 0..steps {
            a = msgd_step(a, grad, eta, 0.0).unwrap();
            let g = grad(&b.x);
            b = sgd_step(b, &g, eta).unwrap();
        }
        prop_assert_eq!(a.x[0].to_bits(), b.x[0].to_bits());
    }

    #[test]
    fn time_decay_average_is_arithmetic_mean(xs in prop::collection::vec(-100.0f64..100.0, 1..1000)) {
        let mut s = SeqState::new(vec![xs[0]]);
        for (t, &x) in xs.iter().enumerate() {
            s.x = vec![x];
            s.t = t as u64;
            s = polyak_average(s, Averaging::TimeDecay);
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((s.z[0] - mean).abs() < 1e-12 * mean.abs().max(1.0) * (xs.len() as f64).sqrt().max(1.0) * 10.0);
    }

    #[test]
    fn noiseless_sgd_error_never_increases(x0 in -50.0f64..50.0, h in 0.1f64..4.0, frac in 0.01f64..0.99, steps in 1usize..300) {
        let eta = 2.0 * frac / h;
        let x_star = 0.3 / h;
        let mut s = SeqState::new(vec![x0]);
        let mut prev = (x0 - x_star).abs();
        for _ in 0..steps {
            let g = vec![h * s.x[0] - 0.3];
            s = sgd_step(s, &g, eta).unwrap();
            let err = (s.x[0] - x_star).abs();
            prop_assert!(err <= prev * (1.0 + 1e-12) + 1e-14);
            prev = err;
        }
    }

    #[test]
    fn dyadic_exchange_conserves_sum_bitwise(
        xs in prop::collection::vec(-1024i32..1024, 1..6),
        c in -1024i32..1024,
        k in 1u32..6,
    ) {
        // multiples of 1/16 with alpha = 2^-k keep every operation exact
        let alpha = 0.5f64.powi(k as i32);
        let params = ElasticParams::from_alpha(0.5, alpha, 1, 1, 0.0).unwrap();
        let mut master = MasterState::new(vec![c as f64 / 16.0], Averaging::TimeDecay);
        for &x in &xs {
            let mut w = WorkerState::new(vec![x as f64 / 16.0]);
            let before = w.x[0] + master.x_center[0];
            async_easgd_step(&mut w, &mut master, &params, |_| vec![0.0]);
            prop_assert_eq!((w.x[0] + master.x_center[0]).to_bits(), before.to_bits());
        }
    }

    #[test]
    fn momentum_free_eamsgd_is_easgd(x0 in -5.0f64..5.0, c0 in -5.0f64..5.0, alpha in 0.0f64..0.9, tau in 1u64..5) {
        let params = ElasticParams::from_alpha(0.1, alpha, 1, tau, 0.0).unwrap();
        let grad = |x: &[f64]| vec![1.3 * x[0] + 0.2];
        let (mut wa, mut ma) = (WorkerState::new(vec![x0]), MasterState::new(vec![c0], Averaging::TimeDecay));
        let (mut wb, mut mb) = (wa.clone(), ma.clone());
        for _ in 0..60 {
            async_easgd_step(&mut wa, &mut ma, &params, grad);
            eamsgd_step(&mut wb, &mut mb, &params, grad);
        }
        prop_assert_eq!(wa.x[0].to_bits(), wb.x[0].to_bits());
        prop_assert_eq!(ma, mb);
    }

    #[test]
    fn synchronous_forms_agree(
        xs in prop::collection::vec(-3.0f64..3.0, 1..6),
        c in -3.0f64..3.0,
        beta in 0.0f64..0.99,
        eta in 0.01f64..0.5,
    ) {
        let p = xs.len();
        let params = ElasticParams::from_beta(eta, beta, p, 1, 0.0).unwrap();
        let grads: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.8 * x - 0.1]).collect();
        let fresh = || {
            (xs.iter().map(|x| WorkerState::new(vec![*x])).collect::<Vec<_>>(), MasterState::new(vec![c], Averaging::TimeDecay))
        };
        let (mut w1, mut m1) = fresh();
        let (mut w2, mut m2) = fresh();
        let (mut w3, mut m3) = fresh();
        sync_easgd_round(&mut w1, &mut m1, &params, &grads).unwrap();
        sync_easgd_round_penalty(&mut w2, &mut m2, &params, &grads).unwrap();
        sync_easgd_round_moving_average(&mut w3, &mut m3, &params, &grads).unwrap();
        for i in 0..p {
            prop_assert!((w1[i].x[0] - w2[i].x[0]).abs() <= 1e-14);
            prop_assert!((w1[i].x[0] - w3[i].x[0]).abs() <= 1e-14);
        }
        prop_assert!((m1.x_center[0] - m2.x_center[0]).abs() <= 1e-14 * p as f64);
        prop_assert!((m1.x_center[0] - m3.x_center[0]).abs() <= 1e-14 * p as f64);
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), p in 1usize..5, sched in 0usize..3) {
        let schedule = [Schedule::Sync, Schedule::AsyncInterleaved, Schedule::RoundRobin][sched];
        let problem = QuadraticProblem::scalar(1.0, 0.5, 1.0).unwrap();
        let mut cfg = SimulationConfig::new(Method::Easgd, problem.into(), 0.1);
        cfg.p = p;
        cfg.alpha = 0.9 / p as f64;
        cfg.schedule = schedule;
        cfg.steps = 40;
        cfg.seed = seed;
        cfg.x0 = vec![2.0];
        let a = run_simulation(&cfg).unwrap();
        let b = run_simulation(&cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lemma1_variance_accumulates(p in 1usize..50, eta in 0.01f64..1.9, beta in 0.01f64..1.9) {
        let params = Lemma1Params::uniform(1.0, 100.0, p, eta, beta, 1.0).unwrap();
        if !sync_stability(&params).stable {
            return Ok(());
        }
        let mut prev = 0.0;
        for t in 0..=1000u64 {
            let v = lemma1_variance(&params, Horizon::Step(t)).unwrap();
            prop_assert!(v >= prev * (1.0 - 1e-12) - 1e-15, "t={t}: {v} < {prev}");
            prev = v;
        }
    }

    #[test]
    fn lemma1_vieta(p in 1usize..1000, eta in 0.001f64..3.0, beta in 0.001f64..3.0) {
        let params = Lemma1Params::uniform(1.0, 1.0, p, eta, beta, 1.0).unwrap();
        if let Roots::Real { gamma, phi } = params.roots() {
            prop_assert!((gamma + phi - (2.0 - params.a())).abs() < 1e-12);
            prop_assert!((gamma * phi - (1.0 - params.a() + params.c2())).abs() < 1e-12);
        }
    }

    #[test]
    fn easgd_factors_are_symmetric(p in 1usize..10, eta in 0.0f64..2.5, alpha in 0.0f64..1.5) {
        let maps = build_easgd_maps(p, eta, alpha).unwrap();
        for f in &maps.per_worker {
            prop_assert_eq!(f, &f.transpose());
        }
    }

    #[test]
    fn admm_cycle_is_factor_product(p in 1usize..9, eta in 1e-4f64..0.05, rho in 0.1f64..10.0) {
        let maps = build_admm_maps(p, eta, rho).unwrap();
        let mut acc = Matrix::identity(2 * p + 1);
        for factors in &maps.factors {
            for f in factors {
                acc = mat_mul(f, &acc).unwrap();
            }
        }
        prop_assert!(maps.cycle.max_abs_diff(&acc) < 1e-12);
    }

    #[test]
    fn theorem2_reaches_fixed_point(
        mu in 0.2f64..2.0, ratio in 1.0f64..4.0, eta_frac in 0.05f64..1.0,
        alpha in 0.01f64..0.9, beta in 0.01f64..1.0, p in 1usize..20,
    ) {
        let ell = mu * ratio;
        let eta = eta_frac * 2.0 * (1.0 - alpha) / (mu + ell);
        let params = Theorem2Params { mu, ell, eta, alpha, beta, sigma2: 1.0, p };
        let (m, _) = theorem2_recursion(&params).unwrap();
        let r = spectral_radius(&m, 1e-12).unwrap().value;
        prop_assume!(r < 0.999);
        let fixed = theorem2_fixed_point(&params).unwrap();
        let steps = ((1e-8f64).ln() / r.ln() * 4.0).min(2e6) as u64 + 100;
        let far = theorem2_bound(&params, [1.0, 1.0, 1.0], steps).unwrap();
        for k in 0..3 {
            prop_assert!((far[k] - fixed[k]).abs() < 1e-8 * fixed[k].max(1.0), "{k}: {} vs {}", far[k], fixed[k]);
        }
    }
}

#[test]
fn noise_covariance_matches_sigma() {
    let sigma = Matrix::from_rows(&[vec![2.0, 0.6], vec![0.6, 1.0]]).unwrap();
    let n = 100_000u64;
    for dist in [NoiseDist::Gaussian, NoiseDist::Rademacher] {
        let q = QuadraticProblem::new(Matrix::identity(2), vec![0.0; 2], sigma.clone(), dist).unwrap();
        let noise = NoiseStream::new(11);
        let mut sum = [0.0; 2];
        let mut outer = [[0.0; 2]; 2];
        let mut fourth = [[0.0; 2]; 2];
        for step in 0..n {
            // exact gradient is zero at the origin, so g is pure noise
            let g = q.noisy_gradient(&[0.0, 0.0], &noise, StreamId { replica: 3, worker: 1, step }).unwrap();
            for i in 0..2 {
                sum[i] += g[i];
                for j in 0..2 {
                    outer[i][j] += g[i] * g[j];
                    fourth[i][j] += (g[i] * g[j]).powi(2);
                }
            }
        }
        let nf = n as f64;
        for i in 0..2 {
            let se = (sigma[(i, i)] / nf).sqrt();
            assert!((sum[i] / nf).abs() < 4.0 * se, "{dist:?} mean {i}");
            for j in 0..2 {
                let m = outer[i][j] / nf;
                let var = fourth[i][j] / nf - m * m;
                assert!((m - sigma[(i, j)]).abs() < 4.0 * (var.max(0.0) / nf).sqrt() + 1e-12, "{dist:?} cov {i}{j}: {m}");
            }
        }
    }
}
