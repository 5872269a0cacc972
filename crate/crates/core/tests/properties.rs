//! Property tests spanning modules: estimator identities, detector
//! invariances, metric oracles, and persistence round trips.

use hpm_core::detectors::{self, Variant};
use hpm_core::geometry::{self, CovKind, CovarianceEstimate};
use hpm_core::{
    auroc, class_covariance, class_means, energy, fit_metric, fpr_at_tpr, les, msp,
    pooled_covariance, project_sphere, projectors, ClassifierHead, FeatureBank,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

fn gaussian_matrix(rng: &mut ChaCha12Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

/// Random bank with every class populated at least `min_per_class` times.
fn random_bank(
    rng: &mut ChaCha12Rng,
    k: usize,
    d: usize,
    min_per_class: usize,
    extra: usize,
) -> FeatureBank {
    let counts: Vec<usize> = (0..k)
        .map(|_| min_per_class + rng.random_range(0..=extra))
        .collect();
    let n: usize = counts.iter().sum();
    let features = gaussian_matrix(rng, n, d);
    let mut labels = Vec::with_capacity(n);
    for (c, &count) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(c as u32, count));
    }
    FeatureBank::new(features, labels, k).unwrap()
}

// --- geometry properties --------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn project_is_idempotent_and_scale_free(
        raw in prop::collection::vec(-1e3_f64..1e3, 2..16),
        alpha in 1e-6_f64..1e6,
    ) {
        let h = Array1::from_vec(raw);
        let norm = h.dot(&h).sqrt();
        prop_assume!(norm > 1e-6);
        let z = project_sphere(h.view()).unwrap();
        let zn = z.dot(&z).sqrt();
        prop_assert!((zn - 1.0).abs() <= 1e-12);

        let z2 = project_sphere(z.view()).unwrap();
        for (a, b) in z.iter().zip(z2.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let zs = project_sphere(h.mapv(|x| x * alpha).view()).unwrap();
        for (a, b) in z.iter().zip(zs.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn ridge_then_factorize_always_succeeds(
        seed in 0u64..500,
        lambda_rel in 1e-8_f64..10.0,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let d = rng.random_range(2..12);
        let n = rng.random_range(2..20);
        let g = gaussian_matrix(&mut rng, n, d);
        let cov = CovarianceEstimate {
            matrix: {
                let mut m = g.t().dot(&g);
                m.mapv_inplace(|x| x / n as f64);
                m
            },
            kind: CovKind::Pooled,
            dof: n,
            ridge: 0.0,
        };
        let ridged = geometry::ridge(&cov, lambda_rel).unwrap();
        prop_assert!(geometry::factorize(&ridged).is_ok());
    }

    #[test]
    fn quadform_with_identity_is_squared_euclidean(
        x in prop::collection::vec(-100.0_f64..100.0, 2..10),
        shift in -5.0_f64..5.0,
    ) {
        let d = x.len();
        let x = Array1::from_vec(x);
        let mu = x.mapv(|v| v + shift);
        let p = geometry::factorize(&CovarianceEstimate {
            matrix: Array2::eye(d),
            kind: CovKind::Pooled,
            dof: 1,
            ridge: 1.0,
        })
        .unwrap();
        let q = geometry::quadform(x.view(), mu.view(), &p);
        let euclid = d as f64 * shift * shift;
        prop_assert!((q - euclid).abs() <= 1e-12 * euclid.max(1.0));
    }
}

#[test]
fn pooled_covariance_is_convex_combination_of_class_covariances() {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    for _ in 0..30 {
        let k = rng.random_range(2..5);
        let d = rng.random_range(2..8);
        let bank = random_bank(&mut rng, k, d, 2, 4);
        let stats = class_means(&bank, true).unwrap();
        let pooled = pooled_covariance(&bank, &stats).unwrap();
        let n = bank.n() as f64;
        let mut combo = Array2::<f64>::zeros((d, d));
        for c in 0..k {
            let cc = class_covariance(&bank, c, true).unwrap();
            let alpha = (stats.counts[c] - 1) as f64 / (n - k as f64);
            combo += &cc.matrix.mapv(|x| x * alpha);
        }
        let scale = pooled
            .matrix
            .iter()
            .map(|x| x.abs())
            .fold(1.0_f64, f64::max);
        for (a, b) in pooled.matrix.iter().zip(combo.iter()) {
            assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn class_covariance_rank_is_bounded_by_support() {
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    for _ in 0..30 {
        let d = rng.random_range(4..16);
        let n_c = rng.random_range(2..=4usize.min(d - 1));
        let features = gaussian_matrix(&mut rng, n_c + 2, d);
        let mut labels = vec![0u32; n_c];
        labels.extend([1, 1]);
        let bank = FeatureBank::new(features, labels, 2).unwrap();
        let cov = class_covariance(&bank, 0, false).unwrap();
        let eig = hpm_core::linalg::eigh(&cov.matrix.view());
        let max = eig.values[0].max(1e-300);
        let rank = eig.values.iter().filter(|&&v| v > 1e-10 * max).count();
        assert!(rank < n_c, "rank {rank} exceeds n_c-1 = {}", n_c - 1);
    }
}

#[test]
fn pooled_range_matches_stacked_residual_rank() {
    let mut rng = ChaCha12Rng::seed_from_u64(31);
    for trial in 0..60 {
        let k = rng.random_range(2..=5);
        let d = rng.random_range(2..=20);
        // duplicate rows on odd trials to drop the residual rank
        let duplicate = trial % 2 == 1;
        let counts: Vec<usize> = (0..k).map(|_| rng.random_range(2..=6)).collect();
        let n: usize = counts.iter().sum();
        let mut features = Array2::<f64>::zeros((n, d));
        let mut labels = Vec::with_capacity(n);
        let mut row = 0;
        for (c, &count) in counts.iter().enumerate() {
            let base = gaussian_matrix(&mut rng, count, d);
            for i in 0..count {
                let src = if duplicate && i > count / 2 { 0 } else { i };
                features.row_mut(row).assign(&base.row(src));
                labels.push(c as u32);
                row += 1;
            }
        }
        // normalize so the bank is in hyperspherical coordinates
        for mut r in features.rows_mut() {
            let norm = r.dot(&r).sqrt();
            r.mapv_inplace(|x| x / norm);
        }
        let bank = FeatureBank::new(features, labels, k).unwrap();
        let stats = class_means(&bank, true).unwrap();
        let pooled = pooled_covariance(&bank, &stats).unwrap();

        let eig = hpm_core::linalg::eigh(&pooled.matrix.view());
        let emax = eig.values[0].max(1e-300);
        let rank_pooled = eig.values.iter().filter(|&&v| v > 1e-8 * emax).count();

        // oracle: SVD of the stacked residual matrix
        let mut stacked = Array2::<f64>::zeros((bank.n(), d));
        for (i, &label) in bank.labels().iter().enumerate() {
            let z = project_sphere(bank.row(i)).unwrap();
            stacked
                .row_mut(i)
                .assign(&(&z - &stats.means.row(label as usize)));
        }
        let svd = hpm_core::linalg::svd(&stacked.view());
        let rank_oracle =
            hpm_core::linalg::rank_from_singular(&svd.s.view(), 1e-8);
        assert_eq!(
            rank_pooled, rank_oracle,
            "trial {trial}: k={k} d={d} counts={counts:?}"
        );
    }
}

// --- detector properties ---------------------------------------------------

#[test]
fn classifier_scores_blind_to_null_space_hpm_is_not() {
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    let d = 12;
    let k = 4;
    let bank = random_bank(&mut rng, k, d, 3, 5);
    let model = fit_metric(&bank, Variant::HPM, 1e-3).unwrap();
    let w = gaussian_matrix(&mut rng, k, d);
    let b = Array1::from_shape_fn(k, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let head = ClassifierHead::new(w.clone(), b.clone()).unwrap();
    let proj = projectors(&head);

    let mut witnessed = 0;
    for _ in 0..50 {
        let h = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let delta_raw = proj.null.dot(&v);
        let dn = delta_raw.dot(&delta_raw).sqrt();
        assert!(dn > 1e-9, "null space should be nontrivial");
        let hn = h.dot(&h).sqrt();
        let delta = delta_raw.mapv(|x| x * hn / dn);
        let moved = &h + &delta;

        let l0 = head.logits_one(h.view()).unwrap();
        let l1 = head.logits_one(moved.view()).unwrap();
        let e0 = energy(l0.view(), 1.0).unwrap();
        let e1 = energy(l1.view(), 1.0).unwrap();
        assert!((e0 - e1).abs() <= 1e-9, "energy moved by {}", (e0 - e1).abs());
        let m0 = msp(l0.view()).unwrap();
        let m1 = msp(l1.view()).unwrap();
        assert!((m0 - m1).abs() <= 1e-9, "msp moved by {}", (m0 - m1).abs());

        let s0 = detectors::score(&model, h.view()).unwrap();
        let s1 = detectors::score(&model, moved.view()).unwrap();
        if (s0 - s1).abs() > 0.1 {
            witnessed += 1;
        }
    }
    assert!(
        witnessed >= 45,
        "HPM should respond to most null-space moves, saw {witnessed}/50"
    );
}

#[test]
fn hyperspherical_scale_invariance_raw_witness_violates() {
    let mut rng = ChaCha12Rng::seed_from_u64(43);
    let bank = random_bank(&mut rng, 3, 8, 3, 4);
    let hpm = fit_metric(&bank, Variant::HPM, 1e-3).unwrap();
    let hc = fit_metric(&bank, Variant::HC_MD, 1e-3).unwrap();
    let md = fit_metric(&bank, Variant::MAHALANOBIS, 1e-3).unwrap();

    let mut raw_violations = 0;
    for _ in 0..100 {
        let h = Array1::from_shape_fn(8, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        for model in [&hpm, &hc] {
            let base = detectors::score(model, h.view()).unwrap();
            for alpha in [1e-3, 0.5, 2.0, 1e3] {
                let s = detectors::score(model, h.mapv(|x| x * alpha).view()).unwrap();
                assert!(
                    (s - base).abs() <= 1e-9,
                    "{}: moved by {}",
                    model.variant.name(),
                    (s - base).abs()
                );
            }
        }
        let s1 = detectors::score(&md, h.view()).unwrap();
        let s2 = detectors::score(&md, h.mapv(|x| 2.0 * x).view()).unwrap();
        if (s1 - s2).abs() > 1e-6 {
            raw_violations += 1;
        }
    }
    assert!(
        raw_violations >= 99,
        "raw Mahalanobis should be radius-sensitive, saw {raw_violations}/100"
    );
}

// --- eval properties --------------------------------------------------------

fn auroc_pairwise(id: &[f64], ood: &[f64]) -> f64 {
    let mut sum = 0.0;
    for &o in ood {
        for &i in id {
            if o > i {
                sum += 1.0;
            } else if o == i {
                sum += 0.5;
            }
        }
    }
    sum / (id.len() as f64 * ood.len() as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn auroc_equals_pairwise_oracle(
        id in prop::collection::vec(0u8..12, 1..60),
        ood in prop::collection::vec(0u8..12, 1..60),
    ) {
        // u8 grids make ties the common case
        let id: Vec<f64> = id.into_iter().map(|v| v as f64 / 3.0).collect();
        let ood: Vec<f64> = ood.into_iter().map(|v| v as f64 / 3.0).collect();
        let fast = auroc(&id, &ood).unwrap();
        let slow = auroc_pairwise(&id, &ood);
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn auroc_complement_under_swap(
        id in prop::collection::vec(-1e3_f64..1e3, 1..40),
        ood in prop::collection::vec(-1e3_f64..1e3, 1..40),
    ) {
        // continuous draws are tie-free with probability one
        let a = auroc(&id, &ood).unwrap();
        let b = auroc(&ood, &id).unwrap();
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn fpr_is_monotone_in_target(
        id in prop::collection::vec(-10.0_f64..10.0, 1..40),
        ood in prop::collection::vec(-10.0_f64..10.0, 1..40),
        t1 in 0.01_f64..1.0,
        t2 in 0.01_f64..1.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let f_lo = fpr_at_tpr(&id, &ood, lo).unwrap();
        let f_hi = fpr_at_tpr(&id, &ood, hi).unwrap();
        prop_assert!(f_lo <= f_hi);
    }

    #[test]
    fn les_decade_identity_within_one_ulp(
        a in 1.0_f64..100.0,
        c in prop::num::f64::NORMAL.prop_filter("positive", |x| *x > 1e-9 && *x < 1e9),
    ) {
        // exact on reference values (see eval tests); a few ulps of the
        // result magnitude in general, because les(a,c) and les(a,c)-1 can
        // fall in different binades
        let l1 = les(a, c).unwrap();
        let l2 = les(a, 10.0 * c).unwrap();
        let diff = l1 - l2;
        let tol = 8.0 * f64::EPSILON * l1.abs().max(l2.abs()).max(1.0);
        prop_assert!((diff - 1.0).abs() <= tol, "diff {diff} tol {tol}");
    }
}

// --- persistence ------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bank_round_trip_is_identity_at_f32(
        vals in prop::collection::vec(-1e30_f32..1e30, 4..40),
        k in 1usize..3,
    ) {
        let n = vals.len() / 2;
        prop_assume!(n >= k);
        let features = Array2::from_shape_fn((n, 2), |(i, j)| vals[2 * i + j] as f64);
        let labels: Vec<u32> = (0..n).map(|i| (i % k) as u32).collect();
        let bank = FeatureBank::new(features, labels, k).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bank.save(dir.path()).unwrap();
        let loaded = FeatureBank::load(dir.path()).unwrap();
        prop_assert_eq!(bank.labels(), loaded.labels());
        // storage is f32; the source values here are exactly representable
        prop_assert_eq!(bank.features(), loaded.features());
    }
}

#[test]
fn model_scores_survive_save_load_bitwise() {
    let mut rng = ChaCha12Rng::seed_from_u64(53);
    let bank = random_bank(&mut rng, 3, 6, 4, 3);
    let queries = gaussian_matrix(&mut rng, 20, 6);
    for variant in Variant::ALL {
        let model = fit_metric(&bank, variant, 1e-3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        detectors::save_model(&model, dir.path()).unwrap();
        let loaded = detectors::load_model(dir.path()).unwrap();
        let a = detectors::score_batch(&model, queries.view(), "q").unwrap();
        let b = detectors::score_batch(&loaded, queries.view(), "q").unwrap();
        assert_eq!(a.scores, b.scores, "{}", variant.name());
    }
}

// --- precision factor vs explicit inverse -----------------------------------

/// Gauss-Jordan inverse, used only as an oracle here.
fn invert_dense(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if m[(r, col)].abs() > m[(pivot, col)].abs() {
                pivot = r;
            }
        }
        if pivot != col {
            for j in 0..n {
                m.swap((col, j), (pivot, j));
                inv.swap((col, j), (pivot, j));
            }
        }
        let p = m[(col, col)];
        assert!(p.abs() > 0.0, "oracle inverse hit a zero pivot");
        for j in 0..n {
            m[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                m[(r, j)] -= f * m[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    inv
}

#[test]
fn quadform_matches_explicit_inverse_up_to_d50() {
    let mut rng = ChaCha12Rng::seed_from_u64(61);
    for trial in 0..40 {
        let d = rng.random_range(2..=50);
        let n = d + rng.random_range(1..10);
        let g = gaussian_matrix(&mut rng, n, d);
        let mut m = g.t().dot(&g);
        m.mapv_inplace(|x| x / n as f64);
        let cov = CovarianceEstimate {
            matrix: m.clone(),
            kind: CovKind::Pooled,
            dof: n,
            ridge: 0.0,
        };
        let ridged = geometry::ridge(&cov, 1e-3).unwrap();
        let factor = geometry::factorize(&ridged).unwrap();

        let inv = invert_dense(&ridged.matrix);
        let x = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let mu = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let via_factor = geometry::quadform(x.view(), mu.view(), &factor);
        let r = &x - &mu;
        let via_inverse = r.dot(&inv.dot(&r));
        assert!(
            (via_factor - via_inverse).abs() <= 1e-8 * via_inverse.abs().max(1.0),
            "trial {trial} d={d}: {via_factor} vs {via_inverse}"
        );
    }
}
