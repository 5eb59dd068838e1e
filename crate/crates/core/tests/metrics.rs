mod common;

use common::gaussian_matrix;
use interp_lab::datagen::{BilevelParams, GenerativeModel, GmmSpec, MlmSpec};
use interp_lab::linalg::Matrix;
use interp_lab::metrics::{
    bilevel_rate_exponents, gmm_pairwise_q_bound, mc_error, mc_sign_disagreement, mlm_excess_risk, q_function, su_cn,
};
use interp_lab::rng::Stream;
use interp_lab::solvers::{ClassifierKind, LinearClassifier};
use proptest::prelude::*;

/// Composite Simpson rule for the standard normal density over `[x, x + 40]`.
fn upper_tail_by_quadrature(x: f64) -> f64 {
    let steps = 40_000;
    let h = 40.0 / steps as f64;
    let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = phi(x) + phi(x + 40.0);
    for s in 1..steps {
        acc += phi(x + s as f64 * h) * if s % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn q_function_matches_quadrature() {
    for x in [-3.0, -1.2, 0.0, 0.4, 1.0, 2.5, 4.0, 6.0] {
        let want = upper_tail_by_quadrature(x);
        assert!((q_function(x) - want).abs() <= 1e-10 * want.max(1e-3), "x={x}");
    }
    assert!((q_function(1.3) + q_function(-1.3) - 1.0).abs() < 1e-15);
}

#[test]
fn arctan_law_against_independent_monte_carlo() {
    let mut s = Stream::from_seed(17);
    let spectrum: Vec<f64> = (0..6).map(|i| 0.5 + i as f64).collect();
    for _ in 0..5 {
        let mut d = vec![0.0; 6];
        let mut dh = vec![0.0; 6];
        s.fill_normal(&mut d);
        s.fill_normal(&mut dh);
        let law = su_cn(&dh, &d, &spectrum).unwrap().sign_disagreement();
        let (lib_mc, se) = mc_sign_disagreement(&dh, &d, &spectrum, 200_000, 5);
        // Own sampler, separate from the library's stream layout.
        let mut t = Stream::from_seed(99);
        let trials = 200_000;
        let mut hits = 0;
        for _ in 0..trials {
            let (mut u, mut v) = (0.0, 0.0);
            for j in 0..6 {
                let x = t.normal() * spectrum[j].sqrt();
                u += x * d[j];
                v += x * dh[j];
            }
            hits += usize::from(u * v < 0.0);
        }
        let own = hits as f64 / trials as f64;
        assert!((law - own).abs() < 0.005, "{law} vs {own}");
        assert!((law - lib_mc).abs() < 5.0 * se + 1e-3);
    }
}

#[test]
fn two_class_mixture_error_has_closed_form() {
    // With ŵ_c = μ_c and orthogonal means of norm a, the error is Q(a/√2).
    let a = 1.3;
    let spec = GmmSpec::orthogonal(2, 5, a).unwrap();
    let clf = LinearClassifier::new(spec.means().transpose(), ClassifierKind::Reference).unwrap();
    let want = q_function(a / 2f64.sqrt());
    let bound = gmm_pairwise_q_bound(&clf, &spec).unwrap();
    for b in &bound {
        assert!((b - want).abs() < 1e-14);
    }
    let est = mc_error(&clf, &GenerativeModel::Gmm(spec), 200_000, 3).unwrap();
    assert!((est.total - want).abs() < 4.0 * est.se_total, "{} vs {want}", est.total);
    assert_eq!(est.class_counts, vec![100_000, 100_000]);
}

#[test]
fn mc_error_independent_of_thread_count() {
    let spec = GmmSpec::orthogonal(3, 40, 3.0).unwrap();
    let mut s = Stream::from_seed(8);
    let w = gaussian_matrix(&mut s, 40, 3).transpose();
    let clf = LinearClassifier::new(w, ClassifierKind::Mni).unwrap();
    let model = GenerativeModel::Gmm(spec);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_error(&clf, &model, 5_000, 11).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.total, b.total);
    assert_eq!(a.per_class, b.per_class);
    assert!(mc_error(&clf, &model, 0, 1).is_err());
}

#[test]
fn bayes_classifier_has_zero_excess() {
    let spec = MlmSpec::isotropic(3, 30, 2.0).unwrap();
    let bayes = LinearClassifier::new(spec.means().transpose(), ClassifierKind::Reference).unwrap();
    let r = mlm_excess_risk(&bayes, &spec, 2_000, 4).unwrap();
    assert_eq!(r.excess, 0.0);
    assert!(r.pairwise_bound.abs() < 1e-7);
    let flipped = LinearClassifier::new(spec.means().transpose().scale(-1.0), ClassifierKind::Reference).unwrap();
    let r = mlm_excess_risk(&flipped, &spec, 2_000, 4).unwrap();
    assert!(r.excess > 0.0);
    assert!((r.pairwise_bound - 3.0).abs() < 1e-7);
}

#[test]
fn rate_exponents_by_hand() {
    // Below the transition (q ≤ 1 − r): survival is order one.
    let e = bilevel_rate_exponents(&BilevelParams::new(100, 1.5, 0.3, 0.5).unwrap()).unwrap();
    assert_eq!(e.su_exponent, 0.0);
    assert!((e.cn_exponent + 0.25).abs() < 1e-15);
    assert!(e.consistent);
    // Above it: survival decays like n^{1−r−q}.
    let e = bilevel_rate_exponents(&BilevelParams::new(100, 1.5, 0.6, 0.5).unwrap()).unwrap();
    assert!((e.su_exponent + 0.1).abs() < 1e-15);
    assert!((e.cn_exponent + 0.25).abs() < 1e-15);
    assert!((e.snr_exponent - 0.15).abs() < 1e-15);
    assert!(e.consistent);
    let e = bilevel_rate_exponents(&BilevelParams::new(100, 1.5, 0.9, 0.5).unwrap()).unwrap();
    assert!((e.snr_exponent + 0.15).abs() < 1e-15);
    assert!(!e.consistent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sign_disagreement_is_a_probability(seed in any::<u64>(), p in 2usize..10) {
        let mut s = Stream::from_seed(seed);
        let mut d = vec![0.0; p];
        let mut dh = vec![0.0; p];
        s.fill_normal(&mut d);
        s.fill_normal(&mut dh);
        let spectrum: Vec<f64> = (0..p).map(|_| 0.1 + s.uniform()).collect();
        let a = su_cn(&dh, &d, &spectrum).unwrap();
        let b = su_cn(&dh.iter().map(|v| -v).collect::<Vec<_>>(), &d, &spectrum).unwrap();
        prop_assert!((0.0..=1.0).contains(&a.sign_disagreement()));
        prop_assert!((a.sign_disagreement() + b.sign_disagreement() - 1.0).abs() < 1e-12);
        // Scale invariance in Δ̂.
        let c = su_cn(&dh.iter().map(|v| 3.0 * v).collect::<Vec<_>>(), &d, &spectrum).unwrap();
        prop_assert!((a.sign_disagreement() - c.sign_disagreement()).abs() < 1e-9);
    }

    #[test]
    fn q_function_monotone(x in -8.0f64..8.0, dx in 1e-3f64..1.0) {
        prop_assert!(q_function(x + dx) < q_function(x));
    }
}

#[test]
fn q_bound_rejects_wrong_shapes() {
    let spec = GmmSpec::orthogonal(3, 5, 1.0).unwrap();
    let clf = LinearClassifier::new(Matrix::zeros(2, 5), ClassifierKind::Mni).unwrap();
    assert!(gmm_pairwise_q_bound(&clf, &spec).is_err());
}
