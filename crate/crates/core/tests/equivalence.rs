mod common;

use interp_lab::datagen::{neural_collapse_features, sample_gmm, GenerativeModel, GmmSpec, Labels};
use interp_lab::equivalence::{
    certify_equivalence, check_det_condition, effective_dims, interpolation_fraction, sufficient_condition_gmm,
    sufficient_condition_mlm, TestStream,
};
use interp_lab::linalg::{gram, pinv_default};
use interp_lab::solvers::{fit_multiclass_svm, simplex_targets, SolverOptions};

#[test]
fn collapsed_features_are_exact_eigenvectors() {
    for k in 2..=8 {
        for m in [1, 2, 5, 20] {
            for alpha in [1.0, 0.5, 3.0] {
                let data = neural_collapse_features(k, m, k + 3, alpha).unwrap();
                let inv = pinv_default(&gram(&data.x)).unwrap();
                let z = simplex_targets(&data.labels);
                for c in 0..k {
                    let zc = z.row(c);
                    let got = inv.apply(&zc).unwrap();
                    for (g, v) in got.iter().zip(&zc) {
                        assert!((g - v / (alpha * alpha)).abs() <= 1e-10 * (1.0 + (v / (alpha * alpha)).abs()));
                    }
                }
                let det = check_det_condition(&data.x, &data.labels).unwrap();
                assert!(det.verdict, "k={k} m={m}");
                let fit = fit_multiclass_svm(&data.x, &data.labels, &SolverOptions::default()).unwrap();
                let r = interpolation_fraction(fit.classifier.weights(), &data.x, &data.labels, 1e-6).unwrap();
                assert_eq!(r.fraction, 1.0);
            }
        }
    }
}

#[test]
fn det_values_layout() {
    let spec = GmmSpec::orthogonal(3, 600, 0.2 * 600f64.sqrt()).unwrap();
    let data = sample_gmm(&spec, 6, 2).unwrap();
    let r = check_det_condition(&data.x, &data.labels).unwrap();
    assert_eq!((r.values.rows(), r.values.cols()), (3, 6));
    let entries: Vec<_> = r.entries().collect();
    assert_eq!(entries.len(), 18);
    assert_eq!((entries[0].0, entries[0].1), (0, 0));
    assert_eq!((entries[3].0, entries[3].1), (0, 1));
    let (c, i) = r.argmin;
    assert_eq!(r.values[(c, i)], r.min_value);
    assert_eq!(r.verdict, r.min_value > 0.0 && r.marginal == 0);
}

#[test]
fn certificate_agrees_on_held_out_points() {
    let spec = GmmSpec::orthogonal(3, 1000, 0.2 * 1000f64.sqrt()).unwrap();
    let model = GenerativeModel::Gmm(spec.clone());
    let mut checked = 0;
    for seed in 0..20 {
        let data = sample_gmm(&spec, 10, seed).unwrap();
        let test = TestStream { model: &model, n_test: 2000, seed: seed + 1000 };
        let r = certify_equivalence(&data.x, &data.labels, 1e-5, &SolverOptions::default(), Some(test)).unwrap();
        assert_eq!(r.n_compared, 2000);
        if r.det_con {
            assert!(r.svm_equals_mni && r.decision_agreement, "seed {seed}: gap {}", r.max_weight_gap);
            checked += 1;
        }
    }
    assert!(checked >= 10, "{checked}");
}

#[test]
fn sufficient_conditions_by_hand() {
    // n=10, k=3: C₁k³n·ln(kn) + n − 1 = 0.1·27·10·ln 30 + 9 ≈ 100.83.
    assert!(!sufficient_condition_gmm(10, 100, 3, 1.0, 0.1, 0.0));
    assert!(sufficient_condition_gmm(10, 101, 3, 1.0, 0.1, 0.0));
    // C₂k^{1.5}n^{1.5}‖μ‖ = 1·√27·√1000·2 ≈ 328.6.
    assert!(!sufficient_condition_gmm(10, 328, 3, 2.0, 0.0, 1.0));
    assert!(sufficient_condition_gmm(10, 329, 3, 2.0, 0.0, 1.0));

    let spectrum = [4.0, 1.0, 1.0, 1.0, 1.0];
    let (d2, dinf) = effective_dims(&spectrum);
    assert!((d2 - 64.0 / 20.0).abs() < 1e-12);
    assert!((dinf - 2.0).abs() < 1e-12);
    // k=2, n=1: C₁k²n·ln(kn) = 4 ln 2 ≈ 2.77 and C₂(ln 2 + 1) ≈ 1.69.
    assert!(!sufficient_condition_mlm(1, 2, &spectrum, 1.0, 1.0));
    assert!(sufficient_condition_mlm(1, 2, &spectrum, 0.7, 1.0));
    assert!(!sufficient_condition_mlm(1, 2, &spectrum, 0.7, 2.0));
}

#[test]
fn single_sample_per_class_always_interpolates() {
    // Orthonormal training points: A = I and q_{c,i} = z_{c,i}² > 0.
    let x = interp_lab::linalg::Matrix::identity(4);
    let labels = Labels::new(vec![0, 1, 2, 3], 4).unwrap();
    assert!(check_det_condition(&x, &labels).unwrap().verdict);
}
