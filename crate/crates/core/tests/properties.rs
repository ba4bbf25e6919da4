use landing_core::harness::{write_trace_csv, RunConfig, CSV_HEADER};
use landing_core::landing::{
    distance, field_norm_bounds, general_field, in_safe_region, landing_direction, mu_lower_bound, safeguard_eta,
    sample_safe_region, LandingParams, SmoothnessConstants,
};
use landing_core::matcore::{matmul, matmul_tn, skew_part, spd_inv_sqrt, sym_eig, sym_part, thin_qr, thin_svd};
use landing_core::optim::{
    run_landing_gd, run_landing_saga, run_landing_sgd, run_riemannian, Batch, Retraction, SagaOptions, SagaState,
    ScheduleKind,
};
use landing_core::problems::{
    amari_distance, gen_ica_data, gen_pca_data, penalty_root, random_stiefel, read_instance, write_instance,
    IcaObjective, Instance, PcaObjective,
};
use landing_core::{DenseMatrix, Objective, RunOptions, RunRecord, StepSchedule};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn rel_close(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.distance(b).unwrap() / b.frobenius_norm().max(1.0)
}

/// `(n, p)` with `p <= n`.
fn dims(max_n: usize) -> impl Strategy<Value = (usize, usize)> {
    (1..=max_n).prop_flat_map(|n| (Just(n), 1..=n))
}

fn skew(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    skew_part(&gaussian(n, n, rng)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn skew_plus_sym_reconstructs_to_rounding(n in 1usize..12, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(n, n, &mut rng);
        // one rounding in each of M ± Mᵀ; the halving is exact
        let back = skew_part(&m).unwrap().add(&sym_part(&m).unwrap()).unwrap();
        for i in 0..n {
            for j in 0..n {
                let tol = f64::EPSILON * (m.get(i, j).abs() + m.get(j, i).abs());
                prop_assert!((back.get(i, j) - m.get(i, j)).abs() <= tol);
            }
        }
    }

    #[test]
    fn skew_is_orthogonal_to_sym(n in 1usize..12, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k) = (gaussian(n, n, &mut rng), gaussian(n, n, &mut rng));
        let ip = skew_part(&m).unwrap().inner(&sym_part(&k).unwrap()).unwrap();
        prop_assert!(ip.abs() <= 1e-12 * m.frobenius_norm() * k.frobenius_norm());
    }

    #[test]
    fn matmul_matches_nalgebra_and_is_pure(n in 1usize..15, k in 1usize..15, m in 1usize..15, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (gaussian(n, k, &mut rng), gaussian(k, m, &mut rng));
        let c = matmul(&a, &b).unwrap();
        prop_assert_eq!(&c, &matmul(&a, &b).unwrap());
        let oracle = na(&a) * na(&b);
        let c_na = na(&c);
        prop_assert!((c_na - &oracle).norm() <= 1e-12 * oracle.norm().max(1.0));
        let tn = matmul_tn(&a.transpose(), &b).unwrap();
        prop_assert!(rel_close(&tn, &c) < 1e-14);
    }

    #[test]
    fn thin_qr_reconstructs_and_is_idempotent((n, p) in dims(12), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(n, p, &mut rng);
        let (q, r) = thin_qr(&m).unwrap();
        prop_assert!(rel_close(&matmul(&q, &r).unwrap(), &m) < 1e-12);
        prop_assert!(rel_close(&matmul_tn(&q, &q).unwrap(), &DenseMatrix::identity(p)) < 1e-12);
        for i in 0..p {
            prop_assert!(r.get(i, i) > 0.0);
            for j in 0..i {
                prop_assert_eq!(r.get(i, j), 0.0);
            }
        }
        let (q2, _) = thin_qr(&q).unwrap();
        prop_assert!(q2.distance(&q).unwrap() < 1e-12);
    }

    #[test]
    fn sym_eig_matches_nalgebra(n in 1usize..12, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sym_part(&gaussian(n, n, &mut rng)).unwrap();
        let eig = sym_eig(&s).unwrap();
        let mut oracle: Vec<f64> = na(&s).symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        let scale = s.frobenius_norm().max(1.0);
        for (a, b) in eig.values.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
        let v = &eig.vectors;
        let recon = matmul(&matmul(v, &DenseMatrix::from_diag(&eig.values)).unwrap(), &v.transpose()).unwrap();
        prop_assert!(rel_close(&recon, &s) < 1e-12);
    }

    #[test]
    fn thin_svd_matches_nalgebra((n, p) in dims(12), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = gaussian(n, p, &mut rng);
        let svd = thin_svd(&m).unwrap();
        let mut oracle: Vec<f64> = na(&m).singular_values().iter().copied().collect();
        oracle.sort_by(|a, b| b.total_cmp(a));
        // singular values come from the eigenvalues of MᵀM
        let tol = 1e-10 * oracle[0].max(1.0);
        for (a, b) in svd.sigma.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
        }
        let us = matmul(&svd.u, &DenseMatrix::from_diag(&svd.sigma)).unwrap();
        prop_assert!(rel_close(&matmul(&us, &svd.v.transpose()).unwrap(), &m) < 1e-10);
    }

    #[test]
    fn spd_inv_sqrt_whitens(n in 1usize..10, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian(n + 2, n, &mut rng);
        let s = matmul_tn(&g, &g).unwrap();
        let w = spd_inv_sqrt(&s).unwrap();
        let whitened = matmul(&matmul(&w, &s).unwrap(), &w).unwrap();
        prop_assert!(rel_close(&whitened, &DenseMatrix::identity(n)) < 1e-8);
    }

    #[test]
    fn safe_region_samples_hit_their_distance((n, p) in dims(10), d in 0.0f64..0.9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_safe_region(n, p, d, &mut rng).unwrap();
        let got = distance(&x);
        prop_assert!(got <= d);
        prop_assert!(got >= d - 1e-12);
    }

    #[test]
    fn field_decomposition_is_orthogonal_and_bracketed(
        (n, p) in dims(10),
        lambda in 0.01f64..100.0,
        eps in 0.01f64..0.74,
        frac in 0.0f64..=1.0,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_safe_region(n, p, frac * eps, &mut rng).unwrap();
        let a = skew(n, &mut rng);
        let fd = general_field(&a, &x, lambda).unwrap();
        prop_assert_eq!(&fd.total, &fd.tangent_part.add(&fd.normal_part).unwrap());
        let ip = fd.tangent_part.inner(&fd.normal_part).unwrap().abs();
        prop_assert!(ip <= 1e-10 * (fd.tangent_norm * fd.normal_norm).max(f64::MIN_POSITIVE));
        let f2 = fd.total.norm_sq();
        let (lo, hi) = field_norm_bounds(&fd, lambda, eps);
        prop_assert!(f2 >= lo * (1.0 - 1e-12) && f2 <= hi * (1.0 + 1e-12), "{lo} <= {f2} <= {hi}");
    }

    #[test]
    fn safeguard_step_stays_in_safe_region(
        (n, p) in dims(10),
        lambda in 0.01f64..100.0,
        eps in 0.01f64..0.74,
        frac in 0.0f64..=1.0,
        log_scale in -3.0f64..3.0,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_safe_region(n, p, frac * eps, &mut rng).unwrap();
        let a = skew(n, &mut rng).scaled(10f64.powf(log_scale));
        let fd = general_field(&a, &x, lambda).unwrap();
        let eta = safeguard_eta(fd.total.frobenius_norm(), fd.distance, lambda, eps).unwrap();
        prop_assert!(eta > 0.0 && eta <= 0.5 / lambda);
        let next = x.lin_comb(1.0, &fd.total, -eta).unwrap();
        prop_assert!(distance(&next) <= eps * (1.0 + 1e-12), "{} > {eps}", distance(&next));
    }

    #[test]
    fn landing_field_tangent_is_the_riemannian_gradient((n, p) in dims(8), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_safe_region(n, p, 0.3, &mut rng).unwrap();
        let g = gaussian(n, p, &mut rng);
        let dir = landing_direction(&g, &x, 1.0).unwrap();
        let psi = skew_part(&matmul(&g, &x.transpose()).unwrap()).unwrap();
        let fd = general_field(&psi, &x, 1.0).unwrap();
        prop_assert!(rel_close(&dir.field, &fd.total) < 1e-12);
    }

    #[test]
    fn landing_params_invariants(
        lambda in 0.01f64..100.0,
        eps in 0.01f64..0.74,
        l in 0.0f64..10.0,
        s in 0.0f64..10.0,
        lp in 0.01f64..10.0,
    ) {
        let c = SmoothnessConstants { l_smooth: l, s_bound: s, l_prime: lp };
        let params = LandingParams::new(lambda, eps, &c, None).unwrap();
        prop_assert_eq!(params.nu, lambda * params.mu);
        prop_assert_eq!(params.rho, 0.5f64.min(params.nu / (4.0 * lambda * lambda * (1.0 + eps))));
        prop_assert!(params.mu >= mu_lower_bound(l, s, params.l_hat, lambda, eps).unwrap());
        prop_assert!(LandingParams::new(lambda, 0.75 + eps, &c, None).is_err());
    }

    #[test]
    fn penalty_root_solves_the_cubic(c in 0.0f64..1e6) {
        let x = penalty_root(c);
        prop_assert!(x >= 1.0);
        prop_assert!((x * x * x - x - c).abs() <= 1e-12 * (3.0 * x * x * x).max(1.0));
    }

    #[test]
    fn amari_is_permutation_sign_and_scale_invariant(n in 2usize..8, c in 0.01f64..100.0, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = gaussian(n, n, &mut rng);
        let d0 = amari_distance(&base).unwrap();
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(rows.as_mut_slice(), &mut rng);
        rand::seq::SliceRandom::shuffle(cols.as_mut_slice(), &mut rng);
        let sign = |r: &mut ChaCha8Rng| if r.random::<bool>() { 1.0 } else { -1.0 };
        let rs: Vec<f64> = (0..n).map(|_| sign(&mut rng)).collect();
        let cs: Vec<f64> = (0..n).map(|_| sign(&mut rng)).collect();
        let moved = DenseMatrix::from_fn(n, n, |i, j| c * rs[i] * cs[j] * base.get(rows[i], cols[j]));
        let d1 = amari_distance(&moved).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-12 * d0.max(1.0));
        prop_assert!((0.0..=1.0).contains(&d0));
    }

    #[test]
    fn amari_vanishes_exactly_on_scaled_permutations(n in 2usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let scales: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..100.0)).collect();
        let p = DenseMatrix::from_fn(n, n, |i, j| if perm[i] == j { scales[i] } else { 0.0 });
        prop_assert_eq!(amari_distance(&p).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn full_gradient_is_mean_of_sample_gradients(n in 2usize..7, big_n in 1usize..30, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pca = PcaObjective::from_instance(&gen_pca_data(n, 1.max(n / 2), big_n, 0.1, seed).unwrap());
        let ica = IcaObjective::from_instance(&gen_ica_data(n, big_n, seed).unwrap());
        for obj in [&pca as &dyn Objective, &ica] {
            let (dn, dp) = obj.dims();
            let x = sample_safe_region(dn, dp, 0.3, &mut rng).unwrap();
            let mut mean = DenseMatrix::zeros(dn, dp);
            for i in 0..obj.sample_count() {
                mean.axpy(1.0 / obj.sample_count() as f64, &obj.grad_samples(&[i], &x).unwrap()).unwrap();
            }
            prop_assert!(rel_close(&mean, &obj.grad_full(&x).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn landing_iterates_never_leave_the_safe_region(
        eta0 in 0.01f64..100.0,
        eps in 0.05f64..0.74,
        batch in 1usize..5,
        seed: u64,
    ) {
        let inst = gen_pca_data(8, 3, 40, 0.1, seed).unwrap();
        let obj = PcaObjective::from_instance(&inst);
        let c = obj.known_constants(eps).unwrap();
        let params = LandingParams::new(1.0, eps, &c, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = sample_safe_region(8, 3, eps, &mut rng).unwrap();
        let sched = StepSchedule::constant(eta0);
        let opts = RunOptions::new(60).batch(Batch::Size(batch)).seed(seed).record_wall_time(false);
        let traces = [
            run_landing_gd(&obj, &x0, &params, &sched, &opts).unwrap(),
            run_landing_sgd(&obj, &x0, &params, &sched, &opts).unwrap(),
            run_landing_saga(&obj, &x0, &params, &sched, &opts, &SagaOptions::default()).unwrap(),
        ];
        for t in &traces {
            for r in &t.records {
                prop_assert!(r.distance <= eps * (1.0 + 1e-12), "iter {} at distance {}", r.iter, r.distance);
                prop_assert!((r.distance * r.distance - 4.0 * r.n_of_x).abs() <= 1e-10 * r.distance * r.distance);
            }
            prop_assert!(in_safe_region(&t.x_final, eps * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn saga_direction_is_unbiased(seed: u64, d in 0.0f64..0.5) {
        let obj = IcaObjective::from_instance(&gen_ica_data(3, 12, seed).unwrap());
        let (n, p) = obj.dims();
        let count = obj.sample_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sample_safe_region(n, p, d, &mut rng).unwrap();
        let mut state = SagaState::zeros(count, n, p);
        for i in 0..count {
            let y = sample_safe_region(n, p, 0.2, &mut rng).unwrap();
            state.replace(i, obj.grad_samples(&[i], &y).unwrap(), 0).unwrap();
        }
        let mut mean = DenseMatrix::zeros(n, p);
        for i in 0..count {
            let (g, _) = state.estimate(&obj, &[i], &x).unwrap();
            mean.axpy(1.0 / count as f64, &g).unwrap();
        }
        prop_assert!(rel_close(&mean, &obj.grad_full(&x).unwrap()) < 1e-12);
    }

    #[test]
    fn stochastic_epochs_are_exact(batch in 1usize..20, big_n in 1usize..50, iters in 1usize..40) {
        let obj = PcaObjective::from_instance(&gen_pca_data(5, 2, big_n, 0.1, 1).unwrap());
        let c = obj.known_constants(0.5).unwrap();
        let params = LandingParams::new(1.0, 0.5, &c, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = random_stiefel(5, 2, &mut rng).unwrap();
        let opts = RunOptions::new(iters).batch(Batch::Size(batch)).record_wall_time(false);
        let t = run_landing_sgd(&obj, &x0, &params, &StepSchedule::constant(0.01), &opts).unwrap();
        for r in &t.records {
            prop_assert_eq!(r.epoch, (r.iter * batch) as f64 / big_n as f64);
        }
    }

    #[test]
    fn trace_csv_round_trips_exactly(seed: u64, rows in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wide = |r: &mut ChaCha8Rng| {
            let m: f64 = r.sample(StandardNormal);
            m * 10f64.powi(r.random_range(-300..300))
        };
        let records: Vec<RunRecord> = (0..rows)
            .map(|k| RunRecord {
                iter: k,
                epoch: wide(&mut rng).abs(),
                wall_time_s: wide(&mut rng).abs(),
                f_value: wide(&mut rng),
                grad_norm_sq: wide(&mut rng).abs(),
                distance: wide(&mut rng).abs(),
                n_of_x: wide(&mut rng).abs(),
                merit: wide(&mut rng),
                step_used: wide(&mut rng).abs(),
                clamped: rng.random(),
            })
            .collect();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        prop_assert_eq!(lines.next(), Some(CSV_HEADER));
        for (line, r) in lines.zip(&records) {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| f[i].parse::<f64>().unwrap().to_bits();
            prop_assert_eq!(f[0].parse::<usize>().unwrap(), r.iter);
            prop_assert_eq!(num(1), r.epoch.to_bits());
            prop_assert_eq!(num(2), r.wall_time_s.to_bits());
            prop_assert_eq!(num(3), r.f_value.to_bits());
            prop_assert_eq!(num(4), r.grad_norm_sq.to_bits());
            prop_assert_eq!(num(5), r.distance.to_bits());
            prop_assert_eq!(num(6), r.n_of_x.to_bits());
            prop_assert_eq!(num(7), r.merit.to_bits());
            prop_assert_eq!(num(8), r.step_used.to_bits());
            prop_assert_eq!(f[9], if r.clamped { "1" } else { "0" });
        }
    }

    #[test]
    fn instances_round_trip_through_the_container(seed: u64, n in 2usize..6, big_n in 1usize..20) {
        for inst in [
            Instance::Pca(gen_pca_data(n, 1, big_n, 0.1, seed).unwrap()),
            Instance::Ica(gen_ica_data(n, big_n, seed).unwrap()),
        ] {
            let mut buf = Vec::new();
            write_instance(&mut buf, &inst).unwrap();
            prop_assert_eq!(read_instance(&mut buf.as_slice()).unwrap(), inst);
        }
    }

    #[test]
    fn identical_configs_give_identical_traces(seed in 0u64..1000, batch in 1usize..6) {
        let text = format!(
            "problem = \"pca\"\nalgorithm = \"landing_sgd\"\nmax_iter = 40\nbatch_size = {batch}\nseed = {seed}\n\
             init_distance = 0.2\n[schedule]\neta0 = 0.3\n[problem_params]\nn = 6\np = 2\nsamples = 30\n"
        );
        let cfg = RunConfig::from_toml(&text).unwrap();
        let run = || {
            let problem = landing_core::harness::build_problem(&cfg).unwrap();
            let resolved = landing_core::harness::resolve(&cfg, problem.objective.as_ref()).unwrap();
            landing_core::harness::execute(&cfg, &problem, &resolved).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.records, b.records);
        prop_assert_eq!(a.x_final, b.x_final);
    }
}

#[test]
fn schedules_follow_their_formulas() {
    let inv = StepSchedule::new(ScheduleKind::InvSqrt, 0.8).unwrap();
    assert_eq!(inv.eta(0, 0.0), 0.8);
    assert_eq!(inv.eta(3, 0.0), 0.4);
    let fixed = StepSchedule::new(ScheduleKind::HorizonScaled { horizon: 99 }, 1.0).unwrap();
    assert!((0..200).all(|k| fixed.eta(k, 0.0) == 0.1));
    let decay = StepSchedule::new(
        ScheduleKind::EpochDecay {
            decay_factor: 10.0,
            decay_every: 50.0,
        },
        1.0,
    )
    .unwrap();
    assert_eq!(decay.eta(0, 49.9), 1.0);
    assert_eq!(decay.eta(0, 50.0), 0.1);
    assert!((decay.eta(0, 120.0) - 0.01).abs() < 1e-18);
}

#[test]
fn riemannian_iterates_stay_orthonormal_over_long_runs() {
    let obj = PcaObjective::from_instance(&gen_pca_data(10, 3, 50, 0.1, 4).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x0 = random_stiefel(10, 3, &mut rng).unwrap();
    for retraction in [Retraction::Qr, Retraction::Projection] {
        let opts = RunOptions::new(100_000)
            .log_every(1)
            .batch(Batch::Size(1))
            .seed(4)
            .record_wall_time(false);
        let t = run_riemannian(&obj, &x0, retraction, &StepSchedule::constant(0.05), &opts, 1.0, 1.0).unwrap();
        let worst = t.records.iter().fold(0.0f64, |m, r| m.max(r.distance));
        assert!(worst < 1e-8, "{retraction:?}: drift {worst:e}");
    }
}
